//! On-disk formats. CSV files have a mandatory header with `t` first and
//! write every number with 17 significant digits, which round-trips an
//! `f64` exactly. Summaries are `key = value` lines in a fixed order.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

/// Formats a float so that parsing it back gives the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, names: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(names)?;
    for row in rows {
        debug_assert_eq!(row.len(), names.len());
        w.write_record(row.iter().map(|&v| fmt_f64(v)))?;
    }
    w.flush()
}

/// A numeric CSV table read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv(path: &Path) -> io::Result<Table> {
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{f:?}: {e}"))))
            .collect::<io::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { names, rows })
}

/// Ordered `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(pub Vec<(String, String)>);

impl KeyValues {
    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.0.push((key.to_string(), value.into()));
    }

    pub fn float(&mut self, key: &str, v: f64) {
        self.push(key, fmt_f64(v));
    }

    pub fn opt_float(&mut self, key: &str, v: Option<f64>) {
        self.push(key, v.map_or_else(|| "none".to_string(), fmt_f64));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .filter_map(|l| l.split_once(" = "))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect(),
        )
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.render())
    }
}

/// Gnuplot script for the CSVs of one run. Written next to them and never
/// executed by the harness.
pub fn write_plot_script(path: &Path, traj_names: &[String], has_lyapunov: bool) -> io::Result<()> {
    let col = |name: &str| traj_names.iter().position(|n| n == name).map(|i| i + 1);
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "# Run from this directory: gnuplot plot.gp")?;
    writeln!(f, "set datafile separator ','")?;
    writeln!(f, "set key autotitle columnhead")?;
    writeln!(f, "set terminal pngcairo size 1000,700")?;
    writeln!(f, "set xlabel 't [s]'")?;
    if let Some(e) = col("e") {
        writeln!(f, "\nset output 'error.png'")?;
        writeln!(f, "set logscale y")?;
        writeln!(f, "plot 'trajectory.csv' using 1:(abs(${e})) with lines title '|e|'")?;
        writeln!(f, "unset logscale y")?;
    }
    let tt: Vec<usize> = (1..).map_while(|i| col(&format!("theta_tilde{i}"))).collect();
    if !tt.is_empty() {
        writeln!(f, "\nset output 'theta_tilde.png'")?;
        let parts: Vec<String> = tt.iter().map(|c| format!("'trajectory.csv' using 1:{c} with lines")).collect();
        writeln!(f, "plot {}", parts.join(", \\\n     "))?;
    }
    if let (Some(z1), Some(z2)) = (col("z1"), col("z2")) {
        writeln!(f, "\nset output 'plant.png'")?;
        writeln!(f, "plot 'trajectory.csv' using 1:{z1} with lines, 'trajectory.csv' using 1:{z2} with lines")?;
    }
    if has_lyapunov {
        writeln!(f, "\nset output 'lyapunov.png'")?;
        writeln!(f, "set logscale y")?;
        writeln!(f, "plot 'lyapunov.csv' using 1:2 with lines")?;
    }
    f.flush()
}
