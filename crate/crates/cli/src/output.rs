//! CSV and text outputs. Every float is written with 17 significant digits.

use crate::config::{format_f64, Settings};
use anyhow::{Context, Result};
use softboltz::experiments::Check;
use softboltz::oracles::OracleReport;
use softboltz::simulator::TimeSeries;
use std::fs;
use std::path::{Path, PathBuf};

/// CSV writer whose file opens with the effective configuration as
/// `# key = value` comment lines.
pub struct Table {
    writer: csv::Writer<fs::File>,
    path: PathBuf,
}

impl Table {
    pub fn create(path: &Path, settings: &Settings, header: &[String]) -> Result<Self> {
        let mut file = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        use std::io::Write;
        for (k, v) in settings.entries() {
            writeln!(file, "# {k} = {v}")?;
        }
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Table { writer, path: path.to_path_buf() })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        self.writer.write_record(cells).with_context(|| format!("cannot write {}", self.path.display()))
    }

    pub fn floats(&mut self, xs: &[f64]) -> Result<()> {
        let cells: Vec<String> = xs.iter().map(|x| format_f64(*x)).collect();
        self.row(&cells)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

fn label_number(x: f64) -> String {
    format!("{x}")
}

/// Column names of a run file; a function of the moment orders and radii.
pub fn run_header(s_list: &[f64], r_list: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["t", "step", "dt", "mass", "momentum_x", "momentum_y", "momentum_z", "energy", "mass_defect"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(["h", "h_rel", "dissipation"].iter().map(|s| s.to_string()));
    h.extend(s_list.iter().map(|s| format!("l1_s{}", label_number(*s))));
    h.extend(["d_l1", "d_l12"].iter().map(|s| s.to_string()));
    h.extend(r_list.iter().map(|r| format!("tail_r{}", label_number(*r))));
    h.extend(["t_star", "leakage", "mixed_zero_events", "max_loss", "clipped"].iter().map(|s| s.to_string()));
    h
}

/// `run_<label>.csv`, or `run_<label>_n<cap>.csv` for a truncation run.
pub fn run_file_name(label: &str, cap: Option<f64>) -> String {
    match cap {
        Some(n) => format!("run_{label}_n{}.csv", label_number(n)),
        None => format!("run_{label}.csv"),
    }
}

pub fn write_run(dir: &Path, settings: &Settings, series: &TimeSeries) -> Result<PathBuf> {
    let path = dir.join(run_file_name(&series.label, series.cap));
    let mut t = Table::create(&path, settings, &run_header(&series.s_list, &series.r_list))?;
    for r in &series.rows {
        let mut cells = vec![format_f64(r.t), r.step.to_string(), format_f64(r.dt), format_f64(r.mass)];
        cells.extend(r.momentum.iter().map(|x| format_f64(*x)));
        cells.extend([r.energy, r.mass_defect, r.h, r.h_rel, r.dissipation].iter().map(|x| format_f64(*x)));
        cells.extend(r.l1s.iter().map(|x| format_f64(*x)));
        cells.extend([r.d_l1, r.d_l12].iter().map(|x| format_f64(*x)));
        cells.extend(r.tails.iter().map(|x| format_f64(*x)));
        cells.extend([format_f64(r.t_star), format_f64(r.leakage), r.mixed_zero_events.to_string()]);
        cells.extend([format_f64(r.max_loss), r.clipped.to_string()]);
        t.row(&cells)?;
    }
    t.finish()
}

pub const ORACLE_HEADER: [&str; 9] =
    ["id", "samples", "skipped", "worst_margin", "violations", "seed", "pass", "inconclusive", "notes"];

pub fn write_oracles(path: &Path, settings: &Settings, reports: &[OracleReport]) -> Result<PathBuf> {
    let header: Vec<String> = ORACLE_HEADER.iter().map(|s| s.to_string()).collect();
    let mut t = Table::create(path, settings, &header)?;
    for r in reports {
        t.row(&[
            r.id.clone(),
            r.samples.to_string(),
            r.skipped.to_string(),
            format_f64(r.worst_margin),
            r.violations.to_string(),
            r.seed.to_string(),
            r.pass.to_string(),
            r.inconclusive.to_string(),
            r.notes.join("; "),
        ])?;
    }
    t.finish()
}

/// Two-column whitespace-separated file for gnuplot.
pub fn write_columns(path: &Path, rows: &[(f64, f64)]) -> Result<PathBuf> {
    let mut s = String::new();
    for (x, y) in rows {
        s.push_str(&format!("{} {}\n", format_f64(*x), format_f64(*y)));
    }
    fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path.to_path_buf())
}

pub fn check_lines(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .map(|c| format!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail))
        .collect()
}

pub fn oracle_line(r: &OracleReport) -> String {
    let status = if !r.pass {
        "FAIL"
    } else if r.inconclusive {
        "INCONCLUSIVE"
    } else {
        "PASS"
    };
    format!(
        "{status} {}: {} samples, {} skipped, {} violations, worst margin {:.6e}{}",
        r.id,
        r.samples,
        r.skipped,
        r.violations,
        r.worst_margin,
        if r.notes.is_empty() { String::new() } else { format!(" ({})", r.notes.join("; ")) }
    )
}

/// Summary lines of one run.
pub fn series_lines(series: &TimeSeries) -> Vec<String> {
    let mut v = vec![format!(
        "run {}{}: {} rows, {} steps, t = {:.6}",
        series.label,
        series.cap.map(|n| format!(" (B_n cap {n})")).unwrap_or_default(),
        series.rows.len(),
        series.steps.len(),
        series.t_final()
    )];
    v.push(format!(
        "  conservation: cumulative drift {:.3e}, worst step drift {:.3e}",
        series.cumulative_drift(),
        series.max_step_drift()
    ));
    v.push(format!("  entropy: largest relative increase over a step {:.3e}", series.max_entropy_increase()));
    if let Some(r) = series.rows.last() {
        v.push(format!("  final: H = {:.12e}, D = {:.3e}, d_L1 = {:.3e}, d_L12 = {:.3e}", r.h, r.dissipation, r.d_l1, r.d_l12));
    }
    if let Some(e) = &series.aborted {
        v.push(format!("  aborted: {e}"));
    }
    v
}

/// Prints `lines` and writes them to `dir/name`.
pub fn emit_summary(dir: &Path, name: &str, lines: &[String]) -> Result<PathBuf> {
    let text = lines.join("\n") + "\n";
    print!("{text}");
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Parsed CSV: header and float rows (non-numeric cells become NaN).
pub struct ReadTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ReadTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let header = r.headers()?.iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(|s| s.to_string()).collect());
        }
        Ok(ReadTable { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r.get(i).and_then(|x| x.parse().ok()).unwrap_or(f64::NAN)).collect())
    }
}
