use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::commands::ensure_dir;
use crate::error::CliError;

/// Writes `rows` with a header line and returns the path.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<PathBuf, CliError> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// A two-column gnuplot data file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    pub fn new(name: String, points: Vec<(f64, f64)>) -> Self {
        PlotSeries { name, points }
    }
}

/// Writes every series under `<out>/plot/`.
pub fn write_plot(out: &Path, series: &[PlotSeries]) -> Result<Vec<PathBuf>, CliError> {
    let dir = out.join("plot");
    ensure_dir(&dir)?;
    let mut files = Vec::new();
    for s in series {
        let path = dir.join(&s.name);
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for (x, y) in &s.points {
            writeln!(f, "{x:e} {y:e}")?;
        }
        f.flush()?;
        files.push(path);
    }
    Ok(files)
}
