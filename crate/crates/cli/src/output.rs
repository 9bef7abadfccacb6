//! Output directory handling and CSV writing.

use std::fs::{self, File, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use crate::error::CliError;

pub const LOCK_FILE: &str = ".clipsharp.lock";
pub const OUT_ENV: &str = "CLIPSHARP_OUT";
pub const DEFAULT_OUT: &str = "clipsharp-out";

/// `--out`, then `CLIPSHARP_OUT`, then the config's `out`, then the default.
pub fn resolve_out_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Exclusive hold on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    lock: PathBuf,
}

impl OutputDir {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let lock = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(Self { dir: dir.to_path_buf(), lock }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                Err(CliError::Locked { dir: dir.to_path_buf(), lock })
            }
            Err(e) => Err(CliError::io(&lock, e)),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_csv(&self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let to_io = |e: csv::Error| CliError::io(&path, e.into());
        w.write_record(&table.header).map_err(to_io)?;
        for row in &table.rows {
            w.write_record(row).map_err(to_io)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// 17 significant digits, round-trip exact for `f64`.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}
