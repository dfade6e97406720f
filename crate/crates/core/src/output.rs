//! Trajectory CSV files, gnuplot scripts and flat key-value reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::simulator::Trajectory;

pub fn csv_header(n: usize, with_references: bool) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("V_{i}")));
    h.extend((1..=n).map(|i| format!("u_{i}")));
    if with_references {
        h.extend((1..=n).map(|i| format!("Vhat_{i}")));
    }
    h
}

/// 17 significant digits, enough to read every double back exactly.
fn full_precision(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Config {
            location: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

/// Writes `t,V_1..V_n,u_1..u_n[,Vhat_1..Vhat_n]`, one row per sample.
pub fn write_trajectory_csv(trajectory: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = trajectory.nodes();
    let refs = trajectory.v_hat.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(csv_header(n, refs.is_some()))
        .map_err(|e| csv_error(path, e))?;
    let mut row = Vec::with_capacity(1 + 3 * n);
    for k in 0..trajectory.len() {
        row.clear();
        row.push(full_precision(trajectory.times[k]));
        row.extend(trajectory.v[k].iter().map(|&x| full_precision(x)));
        row.extend(trajectory.u[k].iter().map(|&x| full_precision(x)));
        if let Some(vh) = refs {
            row.extend(vh[k].iter().map(|&x| full_precision(x)));
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file produced by [`write_trajectory_csv`]. The divergence flag is not stored and reads back `false`.
pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let bad = |line: u64, message: String| Error::Config {
        location: format!("{}, line {line}", path.display()),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = header.len();
    let (n, refs) = match cols.checked_sub(1) {
        Some(c) if c % 3 == 0 && c > 0 && header.get(1 + 2 * (c / 3)) == Some("Vhat_1") => {
            (c / 3, true)
        }
        Some(c) if c % 2 == 0 && c > 0 => (c / 2, false),
        _ => return Err(bad(1, format!("unexpected column count {cols}"))),
    };
    if header
        .iter()
        .ne(csv_header(n, refs).iter().map(String::as_str))
    {
        return Err(bad(1, "header does not match the trajectory layout".into()));
    }
    let mut traj = Trajectory::empty(n, refs);
    for (k, rec) in r.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(line, format!("'{s}' is not a number")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != cols {
            return Err(bad(line, format!("{} fields, expected {cols}", vals.len())));
        }
        traj.times.push(vals[0]);
        traj.v.push(DVector::from_column_slice(&vals[1..1 + n]));
        traj.u
            .push(DVector::from_column_slice(&vals[1 + n..1 + 2 * n]));
        if let Some(vh) = traj.v_hat.as_mut() {
            vh.push(DVector::from_column_slice(&vals[1 + 2 * n..1 + 3 * n]));
        }
    }
    Ok(traj)
}

/// One row of a plot: a CSV path relative to the script and its title.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub title: String,
    pub csv: PathBuf,
}

/// Writes a gnuplot script laying out one row per run with a `V_i - V_nom`
/// panel and a `u_i` panel. The CSV files must already exist next to the
/// script; paths in the script are relative so the directory can be moved.
pub fn emit_plot_script(
    rows: &[PlotRow],
    nodes: usize,
    nominal_voltage: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if rows.is_empty() {
        return Err(Error::validation(
            "no trajectories to plot; run `simulate` or `sweep-delay` with --out-dir first",
        ));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    for row in rows {
        if row.csv.is_absolute() {
            return Err(Error::validation(format!(
                "plot data {} must be given relative to the script",
                row.csv.display()
            )));
        }
        if !dir.join(&row.csv).is_file() {
            return Err(Error::validation(format!(
                "trajectory {} not found next to {}; write the CSV before the plot script",
                row.csv.display(),
                path.display()
            )));
        }
    }
    let image = path
        .file_stem()
        .map(|s| format!("{}.png", s.to_string_lossy()))
        .unwrap_or_else(|| "plot.png".into());

    let mut s = String::new();
    let _ = writeln!(
        s,
        "# Step response: voltage deviation and controlled current per run."
    );
    let _ = writeln!(
        s,
        "# Run from this directory: gnuplot {}",
        path.file_name()
            .map(|f| f.to_string_lossy())
            .unwrap_or_default()
    );
    let _ = writeln!(s, "set datafile separator \",\"");
    let _ = writeln!(s, "set terminal pngcairo size 1200,{}", 360 * rows.len());
    let _ = writeln!(s, "set output \"{image}\"");
    let _ = writeln!(s, "vnom = {nominal_voltage}");
    let _ = writeln!(s, "set grid");
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(s, "set xlabel \"t [s]\"");
    let _ = writeln!(s, "set multiplot layout {},2", rows.len());
    for row in rows {
        let file = row.csv.to_string_lossy().replace('\\', "/");
        let _ = writeln!(s, "set title \"{}: V_i - V_{{nom}}\"", row.title);
        let _ = writeln!(s, "set ylabel \"V - V_{{nom}} [V]\"");
        let curves: Vec<String> = (1..=nodes)
            .map(|i| {
                format!(
                    "\"{file}\" skip 1 using 1:(${} - vnom) with lines title \"V_{i}\"",
                    1 + i
                )
            })
            .collect();
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
        let _ = writeln!(s, "set title \"{}: u_i\"", row.title);
        let _ = writeln!(s, "set ylabel \"u [A]\"");
        let curves: Vec<String> = (1..=nodes)
            .map(|i| {
                format!(
                    "\"{file}\" skip 1 using 1:{} with lines title \"u_{i}\"",
                    1 + nodes + i
                )
            })
            .collect();
        let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    }
    let _ = writeln!(s, "unset multiplot");
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportValue {
    Number(f64),
    Count(usize),
    Flag(bool),
    Text(String),
    Missing,
}

impl From<f64> for ReportValue {
    fn from(x: f64) -> Self {
        ReportValue::Number(x)
    }
}

impl From<usize> for ReportValue {
    fn from(n: usize) -> Self {
        ReportValue::Count(n)
    }
}

impl From<bool> for ReportValue {
    fn from(b: bool) -> Self {
        ReportValue::Flag(b)
    }
}

impl From<Option<f64>> for ReportValue {
    fn from(x: Option<f64>) -> Self {
        x.map_or(ReportValue::Missing, ReportValue::Number)
    }
}

impl From<&str> for ReportValue {
    fn from(s: &str) -> Self {
        ReportValue::Text(s.to_string())
    }
}

impl From<String> for ReportValue {
    fn from(s: String) -> Self {
        ReportValue::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Item {
    Section(String),
    Entry {
        key: String,
        value: ReportValue,
        unit: &'static str,
    },
    Note(String),
}

/// Ordered analysis output. The same entries render either as an aligned
/// human summary or as flat `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    items: Vec<Item>,
}

/// Nine significant digits, fixed notation where it stays readable.
pub fn format_human(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.8e}")
    }
}

/// Shortest text that reads back to the same double.
pub fn format_machine(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !x.is_finite() || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn section(&mut self, title: impl Into<String>) -> &mut Self {
        self.items.push(Item::Section(title.into()));
        self
    }

    pub fn entry(
        &mut self,
        key: impl Into<String>,
        value: impl Into<ReportValue>,
        unit: &'static str,
    ) -> &mut Self {
        self.items.push(Item::Entry {
            key: key.into(),
            value: value.into(),
            unit,
        });
        self
    }

    pub fn vector(&mut self, key: &str, values: &DVector<f64>, unit: &'static str) -> &mut Self {
        for (i, &x) in values.iter().enumerate() {
            self.entry(format!("{key}_{}", i + 1), x, unit);
        }
        self
    }

    /// Free text shown only in the human rendering.
    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.items.push(Item::Note(text.into()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&ReportValue> {
        self.items.iter().find_map(|it| match it {
            Item::Entry { key: k, value, .. } if k == key => Some(value),
            _ => None,
        })
    }

    pub fn render_machine(&self) -> String {
        let mut s = String::new();
        for it in &self.items {
            if let Item::Entry { key, value, .. } = it {
                let v = match value {
                    ReportValue::Number(x) => format_machine(*x),
                    ReportValue::Count(n) => n.to_string(),
                    ReportValue::Flag(b) => format!("{b}"),
                    ReportValue::Text(t) => t.clone(),
                    ReportValue::Missing => "none".into(),
                };
                let _ = writeln!(s, "{key}={v}");
            }
        }
        s
    }

    pub fn render_human(&self) -> String {
        let width = self
            .items
            .iter()
            .filter_map(|it| match it {
                Item::Entry { key, .. } => Some(key.len()),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut s = String::new();
        for it in &self.items {
            match it {
                Item::Section(t) => {
                    if !s.is_empty() {
                        s.push('\n');
                    }
                    let _ = writeln!(s, "{t}");
                }
                Item::Entry { key, value, unit } => {
                    let v = match value {
                        ReportValue::Number(x) => format_human(*x),
                        ReportValue::Count(n) => n.to_string(),
                        ReportValue::Flag(b) => if *b { "yes" } else { "no" }.into(),
                        ReportValue::Text(t) => t.clone(),
                        ReportValue::Missing => "n/a".into(),
                    };
                    let unit = if unit.is_empty() || matches!(value, ReportValue::Missing) {
                        String::new()
                    } else {
                        format!(" {unit}")
                    };
                    let _ = writeln!(s, "  {key:<width$}  {v}{unit}");
                }
                Item::Note(t) => {
                    let _ = writeln!(s, "{t}");
                }
            }
        }
        s
    }

    pub fn render(&self, machine_readable: bool) -> String {
        if machine_readable {
            self.render_machine()
        } else {
            self.render_human()
        }
    }
}

/// Files and report produced by one command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultBundle {
    pub trajectories: Vec<PathBuf>,
    pub plot_script: Option<PathBuf>,
    pub report: Report,
}
