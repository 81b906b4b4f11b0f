//! Delimited text output: one header line, comma separated, 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use memtrack::{ControlSignal, StateTrajectory, TimeGrid};

use crate::CliError;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[String]) -> Self {
        Self { text: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, values: impl IntoIterator<Item = f64>) {
        let cells: Vec<String> = values.into_iter().map(num).collect();
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    /// Row whose cells are already formatted.
    pub fn raw(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(name);
        fs::write(&path, &self.text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn labels(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

/// Entry labels `prefix_r_c` of a row-major `rows x cols` matrix.
pub fn matrix_labels(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (1..=rows).flat_map(|r| (1..=cols).map(move |c| format!("{prefix}_{r}_{c}"))).collect()
}

/// `t, w_1..w_d, u_1..u_m` on the window nodes of the control.
pub fn trajectory(grid: &TimeGrid, w: &StateTrajectory, u: &ControlSignal) -> Table {
    let d = w.at(0).len();
    let m = u.values()[0].len();
    let mut header = vec!["t".to_string()];
    header.extend(labels("w", d));
    header.extend(labels("u", m));
    let mut t = Table::new(&header);
    for i in u.start()..=grid.steps() {
        t.row(std::iter::once(grid.node(i)).chain(w.at(i).iter().copied()).chain(u.at(i).iter().copied()));
    }
    t
}

pub fn scalar(name: &str, value: f64) -> Table {
    let mut t = Table::new(&["quantity".into(), "value".into()]);
    t.raw(&[name.into(), num(value)]);
    t
}
