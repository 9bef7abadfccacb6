//! One function per subcommand. Each computes its tables in memory; nothing
//! is written until the computation has finished.

use std::collections::BTreeSet;

use clipsharp::diffcore::gradient;
use clipsharp::gauss_newton::{coordinate_removal, gn_columns};
use clipsharp::probe::{coordinate_histogram, decade_edges, verify_descent_lemma, ProbeReport};
use clipsharp::problems::ProblemKind;
use clipsharp::trajectory::{compare_convergence, run, Trainer};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{real, Table};

/// Tables to write, plus a failure to report after writing them.
#[derive(Debug)]
pub struct Report {
    pub tables: Vec<(&'static str, Table)>,
    pub failure: Option<CliError>,
}

impl Report {
    fn ok(tables: Vec<(&'static str, Table)>) -> Self {
        Self { tables, failure: None }
    }
}

fn sharpness_table(reports: &[(Option<usize>, &ProbeReport)]) -> Table {
    let with_step = reports.iter().any(|(s, _)| s.is_some());
    let mut header = vec!["algorithm", "sharpness", "robust_used", "ratio_to_sgd"];
    if with_step {
        header.insert(0, "step");
    }
    let mut t = Table::new(&header);
    for (step, report) in reports {
        for r in &report.records {
            let mut row = vec![
                r.label.clone(),
                real(r.sharpness),
                r.robust_used.to_string(),
                real(r.ratio_to_baseline),
            ];
            if let Some(s) = step {
                row.insert(0, s.to_string());
            }
            t.push(row);
        }
    }
    t
}

fn landscape_table(reports: &[(Option<usize>, &ProbeReport)]) -> Table {
    let with_step = reports.iter().any(|(s, _)| s.is_some());
    let mut header = vec!["algorithm", "eta", "loss"];
    if with_step {
        header.insert(0, "step");
    }
    let mut t = Table::new(&header);
    for (step, report) in reports {
        for r in &report.records {
            for p in &r.landscape.points {
                let mut row = vec![r.label.clone(), real(p.eta), real(p.loss)];
                if let Some(s) = step {
                    row.insert(0, s.to_string());
                }
                t.push(row);
            }
        }
    }
    t
}

pub fn train(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = cfg.training_run()?;
    let out = run(&spec)?;
    let label = spec.display_label();
    let mut loss = Table::new(&["step", "algorithm", "loss"]);
    for (t, f) in out.losses.iter().enumerate() {
        loss.push(vec![t.to_string(), label.clone(), real(*f)]);
    }
    let mut tables = vec![("loss.csv", loss)];
    if !out.probes.is_empty() {
        let reports: Vec<_> = out.probes.iter().map(|p| (Some(p.step), &p.report)).collect();
        tables.push(("sharpness.csv", sharpness_table(&reports)));
        tables.push(("landscape.csv", landscape_table(&reports)));
    }
    Ok(Report::ok(tables))
}

/// Trains for `train.steps` steps, then probes every shadow at the reached point.
pub fn probe(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let mut spec = cfg.training_run()?;
    if spec.shadows.is_empty() {
        return Err(CliError::Config("train.shadows: probing needs at least one shadow".into()));
    }
    let at = spec.steps;
    spec.steps = at + 1;
    spec.probe_steps = vec![at];
    spec.probe_epochs.clear();
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let edges = decade_edges(cfg.histogram.lo_exp, cfg.histogram.hi_exp)
        .map_err(|e| CliError::Config(format!("histogram: {e}")))?;

    let mut trainer = Trainer::new(&spec)?;
    let snapshot = loop {
        if let Some(s) = trainer.step()? {
            break s;
        }
    };
    let g = gradient(&*trainer.problem().objective, &snapshot.x)?;
    let mut histogram = Table::new(&["bin_lo", "bin_hi", "count"]);
    for b in coordinate_histogram(&g, &edges)? {
        histogram.push(vec![real(b.lo), real(b.hi), b.count.to_string()]);
    }
    let reports = [(None, &snapshot.report)];
    Ok(Report::ok(vec![
        ("sharpness.csv", sharpness_table(&reports)),
        ("landscape.csv", landscape_table(&reports)),
        ("histogram.csv", histogram),
    ]))
}

pub fn gauss_newton(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let problem = cfg.problem.build(cfg.seed)?;
    let ProblemKind::Mlp(mlp) = &problem.kind else {
        return Err(CliError::Config("problem: gauss-newton needs an `mlp` problem".into()));
    };
    let gn = &cfg.gauss_newton;
    let n = gn.batch_size.unwrap_or(mlp.samples());
    if n == 0 || n > mlp.samples() {
        return Err(CliError::Config(format!(
            "gauss_newton.batch_size: must be in 1..={}, got {n}",
            mlp.samples()
        )));
    }
    if !(gn.multiplier > 0.0 && gn.multiplier.is_finite()) {
        return Err(CliError::Config("gauss_newton.multiplier: must be positive".into()));
    }
    let checkpoints: BTreeSet<usize> = gn.checkpoints.iter().copied().collect();
    if checkpoints.is_empty() {
        return Err(CliError::Config("gauss_newton.checkpoints: must not be empty".into()));
    }
    let last = *checkpoints.iter().next_back().unwrap();

    let mut points = Vec::new();
    if last == 0 {
        points.push((0, problem.initial_point(&cfg.init)?));
    } else {
        let spec = cfg.training_run()?;
        if last > spec.steps {
            return Err(CliError::Config(format!(
                "gauss_newton.checkpoints: step {last} exceeds train.steps = {}",
                spec.steps
            )));
        }
        let mut trainer = Trainer::new(&spec)?;
        loop {
            let t = trainer.steps_taken();
            if checkpoints.contains(&t) {
                points.push((t, trainer.x().clone()));
            }
            if t == last {
                break;
            }
            trainer.step()?;
        }
    }

    let batch: Vec<usize> = (0..n).collect();
    let mut table = Table::new(&["tag", "L", "ell", "ratio", "eps"]);
    for (step, x) in points {
        let cols = gn_columns(mlp, &x, &batch)?;
        let r = coordinate_removal(&cols, gn.multiplier)?;
        table.push(vec![format!("step{step}"), real(r.l), real(r.ell), real(r.ratio()), real(r.eps)]);
    }
    Ok(Report::ok(vec![("gauss_newton.csv", table)]))
}

pub fn lemma(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let problem = cfg.problem.build(cfg.seed)?;
    let ProblemKind::Theorem(inst) = &problem.kind else {
        return Err(CliError::Config("problem: lemma needs a `theorem` problem".into()));
    };
    let x0 = problem.initial_point(&cfg.init)?;
    let report = verify_descent_lemma(inst, &x0, cfg.lemma.steps, cfg.lemma.clip_fraction)?;

    let mut lemma = Table::new(&["step", "lhs", "rhs_bound", "C1", "C2", "hypotheses_ok"]);
    for s in &report.steps {
        lemma.push(vec![
            s.step.to_string(),
            real(s.lhs),
            real(s.rhs_bound),
            real(s.c1),
            real(s.c2),
            s.hypotheses.all().to_string(),
        ]);
    }
    let mut gd = Table::new(&["step", "loss", "next_loss", "decrement", "bound"]);
    for s in &report.gd {
        gd.push(vec![s.step.to_string(), real(s.loss), real(s.next_loss), real(s.decrement), real(s.bound)]);
    }
    let violations = report.violations().count();
    Ok(Report {
        tables: vec![("lemma.csv", lemma), ("gd.csv", gd)],
        failure: (violations > 0).then_some(CliError::LemmaViolated(violations)),
    })
}

pub fn compare(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let runs = cfg.compare_runs()?;
    let rows = compare_convergence(&runs)?;
    let mut table = Table::new(&["step", "algorithm", "loss"]);
    for r in rows {
        table.push(vec![r.step.to_string(), r.label, real(r.loss)]);
    }
    Ok(Report::ok(vec![("compare.csv", table)]))
}
