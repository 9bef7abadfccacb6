use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const INTRO_TRAIN: &str = r#"
[problem]
kind = "intro_quadratic"
dim = 10

[train]
algorithm = { kind = "sgd", beta = 0.0 }
lr = 0.009
steps = 200
probe_steps = [0, 50]
shadows = [
  { label = "sgd", algorithm = { kind = "sgd" } },
  { label = "sgd_clip0.2", algorithm = { kind = "sgd" }, clip = { fraction = 0.2 } },
]
"#;

const MLP_PROBE: &str = r#"
seed = 3

[problem]
kind = "mlp"
input_dim = 3
hidden = 5
samples = 32

[train]
algorithm = { kind = "adam" }
lr = 0.01
steps = 20
shadows = [
  { label = "sgd", algorithm = { kind = "sgd" } },
  { label = "adam", algorithm = { kind = "adam" } },
  { label = "lion", algorithm = { kind = "lion" } },
]
"#;

const THEOREM: &str = r#"
[problem]
kind = "theorem"
dim = 100
eps = 0.02
l_bad = 200.0
ell_good = 2.0
"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn clipsharp(args: &[&str], config: &Path, out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_clipsharp"));
    cmd.args(args).arg("--config").arg(config).env_remove("CLIPSHARP_OUT");
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(rows: &[Vec<String>], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn train_writes_decreasing_loss_curve() {
    let sb = Sandbox::new();
    let cfg = sb.config("train.toml", INTRO_TRAIN);
    let out = sb.out("run");
    let o = clipsharp(&["train"], &cfg, Some(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let (header, rows) = read_csv(&out.join("loss.csv"));
    assert_eq!(header, ["step", "algorithm", "loss"]);
    assert_eq!(rows.len(), 201);
    let loss = column(&rows, 2);
    assert_eq!(loss[0], 109.0);
    assert!(loss.windows(2).all(|w| w[1] < w[0]));

    let (header, rows) = read_csv(&out.join("sharpness.csv"));
    assert_eq!(header, ["step", "algorithm", "sharpness", "robust_used", "ratio_to_sgd"]);
    assert_eq!(rows.len(), 4);
    let (_, land) = read_csv(&out.join("landscape.csv"));
    assert_eq!(land.len(), 2 * 2 * 60);
    assert!(!out.join(".clipsharp.lock").exists());
}

#[test]
fn same_config_and_seed_give_identical_bytes() {
    let sb = Sandbox::new();
    let cfg = sb.config("probe.toml", MLP_PROBE);
    let (a, b) = (sb.out("a"), sb.out("b"));
    assert_eq!(code(&clipsharp(&["probe"], &cfg, Some(&a))), 0);
    assert_eq!(code(&clipsharp(&["probe"], &cfg, Some(&b))), 0);
    for name in ["sharpness.csv", "landscape.csv", "histogram.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let sb = Sandbox::new();
    let cfg = sb.config("probe.toml", MLP_PROBE);
    let (a, b) = (sb.out("a"), sb.out("b"));
    assert_eq!(code(&clipsharp(&["probe"], &cfg, Some(&a))), 0);
    assert_eq!(code(&clipsharp(&["probe", "--seed", "4"], &cfg, Some(&b))), 0);
    assert_ne!(fs::read(a.join("sharpness.csv")).unwrap(), fs::read(b.join("sharpness.csv")).unwrap());
}

#[test]
fn probe_tables() {
    let sb = Sandbox::new();
    let cfg = sb.config("probe.toml", MLP_PROBE);
    let out = sb.out("probe");
    let o = clipsharp(&["probe"], &cfg, Some(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let (header, rows) = read_csv(&out.join("sharpness.csv"));
    assert_eq!(header, ["algorithm", "sharpness", "robust_used", "ratio_to_sgd"]);
    let sgd = rows.iter().find(|r| r[0] == "sgd").unwrap();
    assert_eq!(sgd[3].parse::<f64>().unwrap(), 1.0);

    let (header, rows) = read_csv(&out.join("landscape.csv"));
    assert_eq!(header, ["algorithm", "eta", "loss"]);
    assert_eq!(rows.len(), 60 * 3);

    let (header, rows) = read_csv(&out.join("histogram.csv"));
    assert_eq!(header, ["bin_lo", "bin_hi", "count"]);
    let total: usize = rows.iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    let mlp = clipsharp::problems::make_mlp(3, 5, 32, 3).unwrap();
    assert_eq!(total, mlp.param_count());
}

#[test]
fn lemma_default_instance_passes() {
    let sb = Sandbox::new();
    let cfg = sb.config("lemma.toml", THEOREM);
    let out = sb.out("lemma");
    let o = clipsharp(&["lemma"], &cfg, Some(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("lemma.csv"));
    assert_eq!(header, ["step", "lhs", "rhs_bound", "C1", "C2", "hypotheses_ok"]);
    assert_eq!(rows.len(), 100);
    for r in &rows {
        assert_eq!(r[5], "true");
        assert!(r[1].parse::<f64>().unwrap() <= r[2].parse::<f64>().unwrap());
    }
}

#[test]
fn lemma_precondition_violation_fails_without_outputs() {
    let sb = Sandbox::new();
    let cfg = sb.config("lemma.toml", &format!("{THEOREM}\n[lemma]\nclip_fraction = 0.01\n"));
    let out = sb.out("lemma");
    let o = clipsharp(&["lemma"], &cfg, Some(&out));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("clip"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn gauss_newton_ell_at_most_l() {
    let sb = Sandbox::new();
    let text = r#"
seed = 5
[problem]
kind = "mlp"
input_dim = 4
hidden = 6
samples = 40
[train]
algorithm = { kind = "adam" }
lr = 0.01
steps = 30
[gauss_newton]
multiplier = 2.0
checkpoints = [0, 10, 30]
"#;
    let cfg = sb.config("gn.toml", text);
    let out = sb.out("gn");
    let o = clipsharp(&["gauss-newton"], &cfg, Some(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("gauss_newton.csv"));
    assert_eq!(header, ["tag", "L", "ell", "ratio", "eps"]);
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["step0", "step10", "step30"]);
    for r in &rows {
        let (l, ell) = (r[1].parse::<f64>().unwrap(), r[2].parse::<f64>().unwrap());
        assert!(ell <= l, "{r:?}");
    }
}

#[test]
fn gauss_newton_rejects_quadratic() {
    let sb = Sandbox::new();
    let cfg = sb.config("gn.toml", THEOREM);
    let o = clipsharp(&["gauss-newton"], &cfg, Some(&sb.out("gn")));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("mlp"));
}

#[test]
fn compare_shows_clipped_speedup() {
    let sb = Sandbox::new();
    let text = r#"
[problem]
kind = "intro_quadratic"
dim = 10
[compare]
steps = 50
runs = [
  { label = "plain", algorithm = { kind = "sgd", beta = 0.0 }, lr = 0.009 },
  { label = "clipped", algorithm = { kind = "sgd", beta = 0.0 }, clip = { fraction = 0.2 }, lr = 0.5 },
]
"#;
    let cfg = sb.config("cmp.toml", text);
    let out = sb.out("cmp");
    assert_eq!(code(&clipsharp(&["compare"], &cfg, Some(&out))), 0);
    let (_, rows) = read_csv(&out.join("compare.csv"));
    assert_eq!(rows.len(), 2 * 51);
    let first_below = |label: &str| {
        rows.iter()
            .filter(|r| r[1] == label)
            .position(|r| r[2].parse::<f64>().unwrap() <= 1e-6 * 109.0)
    };
    assert!(first_below("clipped").unwrap() <= 50);
    assert_eq!(first_below("plain"), None);
}

#[test]
fn malformed_config_exits_one_without_outputs() {
    let sb = Sandbox::new();
    let out = sb.out("bad");
    let cfg = sb.config("bad.toml", "[problem\nkind = ");
    assert_eq!(code(&clipsharp(&["train"], &cfg, Some(&out))), 1);
    assert!(!out.exists());

    let cfg = sb.config("typo.toml", &INTRO_TRAIN.replace("steps = 200", "steps = 200\nsetps = 3"));
    let o = clipsharp(&["train"], &cfg, Some(&out));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("train"), "{}", stderr(&o));
    assert!(stderr(&o).contains("setps"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn divergence_exits_two_with_step() {
    let sb = Sandbox::new();
    let cfg = sb.config("div.toml", &INTRO_TRAIN.replace("lr = 0.009", "lr = 1.0").replace("steps = 200", "steps = 1000"));
    let out = sb.out("div");
    let o = clipsharp(&["train"], &cfg, Some(&out));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("diverged at step"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn usage_error_exits_one() {
    let o = Command::new(env!("CARGO_BIN_EXE_clipsharp")).arg("frobnicate").output().unwrap();
    assert_eq!(code(&o), 1);
    let o = Command::new(env!("CARGO_BIN_EXE_clipsharp")).arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn locked_output_directory_is_refused() {
    let sb = Sandbox::new();
    let cfg = sb.config("lemma.toml", THEOREM);
    let out = sb.out("locked");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".clipsharp.lock"), "").unwrap();
    let o = clipsharp(&["lemma"], &cfg, Some(&out));
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("locked"));
    assert!(!out.join("lemma.csv").exists());
}

#[test]
fn output_directory_precedence() {
    let sb = Sandbox::new();
    let from_config = sb.out("from_config");
    let from_env = sb.out("from_env");
    let from_flag = sb.out("from_flag");
    let text = format!("out = {:?}\n{THEOREM}", from_config.to_str().unwrap());
    let cfg = sb.config("lemma.toml", &text);

    assert_eq!(code(&clipsharp(&["lemma"], &cfg, None)), 0);
    assert!(from_config.join("lemma.csv").exists());

    let o = Command::new(env!("CARGO_BIN_EXE_clipsharp"))
        .args(["lemma", "--config"])
        .arg(&cfg)
        .env("CLIPSHARP_OUT", &from_env)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(from_env.join("lemma.csv").exists());

    let o = Command::new(env!("CARGO_BIN_EXE_clipsharp"))
        .args(["lemma", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&from_flag)
        .env("CLIPSHARP_OUT", sb.out("unused"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(from_flag.join("lemma.csv").exists());
    assert!(!sb.out("unused").exists());
}

#[test]
fn example_configs_parse_and_run() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let sb = Sandbox::new();
    for (cmd, name) in [
        ("train", "intro_train.toml"),
        ("probe", "mlp_probe.toml"),
        ("gauss-newton", "mlp_gauss_newton.toml"),
        ("lemma", "theorem_lemma.toml"),
        ("compare", "intro_compare.toml"),
    ] {
        let o = clipsharp(&[cmd], &root.join(name), Some(&sb.out(name)));
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
    }
}
