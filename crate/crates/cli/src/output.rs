//! Tabular output (CSV with a metadata line, or JSON) and simple SVG plots.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::config::{Format, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(_) => Value::Null,
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub command: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `key=value` pairs for the metadata line.
    pub meta: Vec<(&'static str, String)>,
    /// Columns drawn against `plot_x` when a plot is requested.
    pub plot_columns: Vec<usize>,
    pub plot_x: usize,
    /// Restricts the plot to a block of rows.
    pub plot_rows: Option<std::ops::Range<usize>>,
}

impl Table {
    pub fn new(command: &'static str, columns: Vec<&'static str>) -> Self {
        Self { command, columns, rows: Vec::new(), meta: Vec::new(), plot_columns: vec![1], plot_x: 0, plot_rows: None }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta(&mut self, key: &'static str, value: impl ToString) {
        self.meta.push((key, value.to_string()));
    }

    fn header(&self, cfg: &RunConfig) -> String {
        let mut line = format!(
            "# tool=qcavity version={} command={} params={} seed={}",
            env!("CARGO_PKG_VERSION"),
            self.command,
            cfg.params_tag(),
            cfg.numerics.seed
        );
        for (k, v) in &self.meta {
            let _ = write!(line, " {k}={}", v.replace(' ', "_"));
        }
        line
    }

    pub fn to_csv(&self, cfg: &RunConfig) -> String {
        let mut out = self.header(cfg);
        out.push('\n');
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, cfg: &RunConfig) -> String {
        let mut meta = Map::new();
        meta.insert("tool".into(), json!("qcavity"));
        meta.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        meta.insert("command".into(), json!(self.command));
        meta.insert("params".into(), serde_json::to_value(&cfg.params).unwrap_or(Value::Null));
        meta.insert("seed".into(), json!(cfg.numerics.seed));
        for (k, v) in &self.meta {
            meta.insert((*k).into(), json!(v));
        }
        let rows: Vec<Value> = self.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
        let doc = json!({ "meta": meta, "columns": self.columns, "rows": rows });
        let mut s = serde_json::to_string_pretty(&doc).unwrap_or_default();
        s.push('\n');
        s
    }

    pub fn render(&self, cfg: &RunConfig) -> String {
        match cfg.output.format {
            Format::Csv => self.to_csv(cfg),
            Format::Json => self.to_json(cfg),
        }
    }

    /// Writes the table to `<dir>/<command>.<ext>` or standard output, and
    /// the plot when one is configured.
    pub fn emit(&self, cfg: &RunConfig) -> Result<(), CliError> {
        let text = self.render(cfg);
        match &cfg.output.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let ext = match cfg.output.format {
                    Format::Csv => "csv",
                    Format::Json => "json",
                };
                std::fs::write(dir.join(format!("{}.{ext}", self.command)), text)?;
            }
            None => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                match lock.write_all(text.as_bytes()).and_then(|_| lock.flush()) {
                    // a closed reader (e.g. `| head`) is not a failure
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                    other => other?,
                }
            }
        }
        if let Some(path) = &cfg.output.plot {
            write_svg(self, path)?;
        }
        Ok(())
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Polyline plot of the table's plot columns against its x column.
pub fn svg(table: &Table) -> String {
    let rows = match &table.plot_rows {
        Some(r) => &table.rows[r.start.min(table.rows.len())..r.end.min(table.rows.len())],
        None => &table.rows[..],
    };
    let xs: Vec<Option<f64>> = rows.iter().map(|r| r[table.plot_x].as_f64()).collect();
    let series: Vec<Vec<Option<f64>>> = table
        .plot_columns
        .iter()
        .map(|&c| rows.iter().map(|r| r[c].as_f64().filter(|v| v.is_finite())).collect())
        .collect();
    let finite = |v: &&Option<f64>| v.is_some_and(f64::is_finite);
    let bounds = |vals: Vec<f64>| {
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = bounds(xs.iter().filter(finite).map(|v| v.unwrap()).collect());
    let (y0, y1) = bounds(series.iter().flatten().filter(finite).map(|v| v.unwrap()).collect());
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" x2="{0}" y1="{1:.2}" y2="{1:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
            WIDTH - MARGIN,
            py(0.0)
        );
    }
    for (k, ys) in series.iter().enumerate() {
        // break the line at missing values
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (x, y) in xs.iter().zip(ys) {
            match (x, y) {
                (Some(x), Some(y)) => segments.last_mut().expect("nonempty").push((px(*x), py(*y))),
                _ => segments.push(Vec::new()),
            }
        }
        for seg in segments.iter().filter(|s| s.len() > 1) {
            let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                COLOURS[k % COLOURS.len()],
                pts.join(" ")
            );
        }
    }
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: &str| {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{text}</text>"#
        );
    };
    label(&mut s, MARGIN, HEIGHT - MARGIN + 16.0, "start", &format!("{x0:.4e}"));
    label(&mut s, WIDTH - MARGIN, HEIGHT - MARGIN + 16.0, "end", &format!("{x1:.4e}"));
    label(&mut s, WIDTH / 2.0, HEIGHT - 10.0, "middle", table.columns[table.plot_x]);
    label(&mut s, MARGIN - 4.0, HEIGHT - MARGIN, "end", &format!("{y0:.3e}"));
    label(&mut s, MARGIN - 4.0, MARGIN + 4.0, "end", &format!("{y1:.3e}"));
    let names: Vec<&str> = table.plot_columns.iter().map(|&c| table.columns[c]).collect();
    label(&mut s, WIDTH / 2.0, MARGIN - 16.0, "middle", &format!("{}: {}", table.command, names.join(", ")));
    s.push_str("</svg>\n");
    s
}

pub fn write_svg(table: &Table, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, svg(table))?;
    Ok(())
}
