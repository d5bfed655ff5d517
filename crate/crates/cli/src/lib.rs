//! Command-line driver for `softboltz`: configuration files, CSV output and
//! the exit-code policy (0 success, 1 failed check, 2 configuration error).

pub mod config;
pub mod output;
pub mod suites;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use config::{format_f64, ConfigError, Settings};
use output::{check_lines, emit_summary, oracle_line, series_lines, write_columns, write_oracles, write_run, Table};
use softboltz::experiments::{self, Check};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "softboltz", version, about = "Soft-potential Boltzmann solver, inequality oracles and experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one key, `key=value`; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Seed override.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads, 0 for all available.
    #[arg(long, global = true, value_name = "K")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulator and write one CSV per run.
    Simulate,
    /// Run oracle suites.
    Verify {
        /// Suite id or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Run a theorem experiment.
    Experiment {
        #[arg(value_enum)]
        which: Experiment,
    },
    /// Summarize existing CSV files (default: those in the output directory).
    Report { paths: Vec<PathBuf> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Theorem1,
    Theorem2,
    Theorem3,
    Theorem5,
}

/// Outcome classes of the exit-code policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Failed = 1,
    Config = 2,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Other(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

/// Core errors from input validation are configuration errors.
fn core_failure(e: softboltz::Error) -> Failure {
    match e {
        softboltz::Error::InvalidInput(m) => Failure::Config(m),
        e => Failure::Other(anyhow::Error::new(e)),
    }
}

/// Settings from the file, `--set` overrides and flags, in that order.
pub fn load_settings(cli: &Cli) -> Result<Settings, ConfigError> {
    let mut s = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    for kv in &cli.set {
        s.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(t) = cli.threads {
        s.threads = t;
    }
    s.sim()?;
    Ok(s)
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Status::Config as i32 } else { Status::Success as i32 };
        }
    };
    match dispatch(&cli) {
        Ok(s) => s as i32,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            eprintln!("usage: softboltz <simulate|verify|experiment|report> [--config PATH] [--set KEY=VALUE]... [--out DIR] [--seed U64] [--threads K]");
            Status::Config as i32
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            Status::Failed as i32
        }
    }
}

fn status(pass: bool) -> Status {
    if pass {
        Status::Success
    } else {
        Status::Failed
    }
}

fn dispatch(cli: &Cli) -> Result<Status, Failure> {
    if let Command::Report { paths } = &cli.command {
        return report(&cli.out, paths);
    }
    let settings = load_settings(cli)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    std::fs::write(cli.out.join("effective.conf"), settings.to_text()).context("cannot write effective.conf")?;
    match &cli.command {
        Command::Simulate => simulate(&cli.out, &settings),
        Command::Verify { suite } => verify(&cli.out, &settings, suite),
        Command::Experiment { which } => experiment(&cli.out, &settings, *which),
        Command::Report { .. } => unreachable!(),
    }
}

fn simulate(out: &Path, s: &Settings) -> Result<Status, Failure> {
    let config = s.sim()?;
    let start = Instant::now();
    let runs = softboltz::simulator::run(&config).map_err(core_failure)?;
    let mut lines = Vec::new();
    let mut pass = true;
    for series in &runs {
        let path = write_run(out, s, series)?;
        lines.extend(series_lines(series));
        lines.push(format!("  wrote {}", path.display()));
        pass &= series.aborted.is_none();
    }
    lines.push(format!("elapsed {:.3} s", start.elapsed().as_secs_f64()));
    emit_summary(out, &format!("summary_{}.txt", s.label), &lines)?;
    Ok(status(pass))
}

fn verify(out: &Path, s: &Settings, suite: &str) -> Result<Status, Failure> {
    let ids: Vec<&str> = if suite == "all" { suites::SUITES.to_vec() } else { vec![suite] };
    let mut reports = Vec::new();
    let mut lines = Vec::new();
    let total = Instant::now();
    for id in ids {
        let start = Instant::now();
        let r = suites::run_suite(id, s)?;
        lines.push(format!("{} [{:.3} s]", oracle_line(&r), start.elapsed().as_secs_f64()));
        reports.push(r);
    }
    lines.push(format!("elapsed {:.3} s", total.elapsed().as_secs_f64()));
    let name = if suite == "all" { "oracles.csv".to_string() } else { format!("oracle_{suite}.csv") };
    let path = write_oracles(&out.join(name), s, &reports)?;
    lines.push(format!("wrote {}", path.display()));
    emit_summary(out, &format!("summary_verify_{suite}.txt"), &lines)?;
    Ok(status(reports.iter().all(|r| r.pass)))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn finish_experiment(out: &Path, name: &str, mut lines: Vec<String>, checks: &[Check]) -> Result<Status, Failure> {
    lines.extend(check_lines(checks));
    let pass = checks.iter().all(|c| c.pass);
    lines.push(format!("{name}: {}", if pass { "all checks pass" } else { "some checks fail" }));
    emit_summary(out, &format!("summary_{name}.txt"), &lines)?;
    Ok(status(pass))
}

fn experiment(out: &Path, s: &Settings, which: Experiment) -> Result<Status, Failure> {
    let config = s.sim()?;
    match which {
        Experiment::Theorem1 => {
            let r = experiments::run_theorem1(&config, s.s).map_err(core_failure)?;
            write_run(out, s, &r.series)?;
            let mut t = Table::create(
                &out.join("theorem1.csv"),
                s,
                &header(&["t", "growth", "soft_average", "distance_average"]),
            )?;
            for i in 0..r.t.len() {
                t.floats(&[r.t[i], r.growth[i], r.soft_average[i], r.distance_average[i]])?;
            }
            t.finish()?;
            let mut lines = series_lines(&r.series);
            lines.push(format!("growth ratio {}, average drop {}", format_f64(r.growth_ratio), format_f64(r.average_drop)));
            finish_experiment(out, "theorem1", lines, &r.checks)
        }
        Experiment::Theorem2 => {
            let profile = s.tail_profile()?;
            let r = experiments::run_theorem2(&config, profile, s.s, s.k0).map_err(core_failure)?;
            write_run(out, s, &r.series)?;
            let mut t = Table::create(&out.join("theorem2.csv"), s, &header(&["t", "r", "lower_bound", "d_l12"]))?;
            for (a, b, c, d) in &r.bound_rows {
                t.floats(&[*a, *b, *c, *d])?;
            }
            t.finish()?;
            write_columns(&out.join("theorem2_envelope.dat"), &r.analytic)?;
            let mut lines = series_lines(&r.series);
            lines.push(format!("beta {}, K {}", format_f64(r.beta), format_f64(r.k)));
            lines.push(format!("energy tail outside the grid {}", format_f64(r.truncated_tail)));
            match r.horizon {
                Some(h) => lines.push(format!("R(t) leaves 0.8 L at t = {h:.6}; later rows are outside the window")),
                None => lines.push("R(t) stays inside 0.8 L over the run".into()),
            }
            if let Some(f) = r.fit {
                lines.push(format!(
                    "envelope slope {:.6} on [{}, {}], band [{:.6}, {:.6}], target {:.6}",
                    f.slope, f.t1, f.t2, f.lo, f.hi, f.target
                ));
            }
            for (a, b, e) in &r.window_slopes {
                lines.push(format!("envelope exponent on [{a}, {b}]: {e:.6}"));
            }
            finish_experiment(out, "theorem2", lines, &r.checks)
        }
        Experiment::Theorem3 => {
            let r = experiments::run_theorem3(&config, s.s, s.distance_fields).map_err(core_failure)?;
            write_run(out, s, &r.series)?;
            let names = [
                "t",
                "villani_lhs",
                "villani_rhs",
                "holder_lhs",
                "holder_rhs",
                "dk",
                "dk_bound",
                "assembled_lhs",
                "dissipation",
                "h_g",
                "gronwall_bound",
                "h_f",
                "relative_bound",
                "d_l12",
                "distance_bound",
                "rate_bound",
                "entropic",
                "entropic_bound",
            ];
            let mut t = Table::create(&out.join("theorem3.csv"), s, &header(&names))?;
            for c in &r.rows {
                t.floats(&[
                    c.t,
                    c.villani.0,
                    c.villani.1,
                    c.holder.0,
                    c.holder.1,
                    c.dk.0,
                    c.dk.1,
                    c.assembled.0,
                    c.assembled.1,
                    c.gronwall.0,
                    c.gronwall.1,
                    c.relative.0,
                    c.relative.1,
                    c.distance.0,
                    c.distance.1,
                    c.rate.1,
                    c.entropic.0,
                    c.entropic.1,
                ])?;
            }
            t.finish()?;
            let mut lines = series_lines(&r.series);
            lines.push(format!(
                "s {}, k {}, ε {:.6}, α {:.6}, λ {:.6}",
                r.s, r.k, r.epsilon, r.alpha, r.lambda
            ));
            lines.push(format!(
                "constants: C_H0 {:.6e}, C_k {:.6e}, c {:.6e}, C_D {:.6e}, C_G {:.6e}, C_N {:.6e}",
                r.c_h0, r.c_dk, r.c_chain, r.c_dissipation, r.c_gronwall, r.c_distance
            ));
            if let Some(f) = r.fit {
                lines.push(format!(
                    "fitted d_L12 exponent {:.6} on [{:.3}, {:.3}], band [{:.6}, {:.6}], theorem λ {:.6}; a slower fit would be inconclusive about the theorem",
                    f.slope, f.t1, f.t2, f.lo, f.hi, f.target
                ));
            }
            finish_experiment(out, "theorem3", lines, &r.checks)
        }
        Experiment::Theorem5 => {
            let profile = s.tail_profile()?;
            let r = experiments::run_theorem5(&config, profile).map_err(core_failure)?;
            write_run(out, s, &r.series)?;
            let mut t = Table::create(&out.join("theorem5.csv"), s, &header(&["t", "d_l12", "envelope"]))?;
            for (a, b, c) in &r.envelope {
                t.floats(&[*a, *b, *c])?;
            }
            t.finish()?;
            write_oracles(&out.join("theorem5_mild.csv"), s, std::slice::from_ref(&r.mild))?;
            let mut lines = series_lines(&r.series);
            lines.push(format!(
                "α {:.6}, β {:.6}, sup |v|^β L {:.6e}, C₁ {:.6e}, C₂ {:.6e}",
                r.alpha, r.beta, r.c, r.c1, r.c2
            ));
            lines.push(oracle_line(&r.mild));
            finish_experiment(out, "theorem5", lines, &r.checks)
        }
    }
}

fn report(out: &Path, paths: &[PathBuf]) -> Result<Status, Failure> {
    let files: Vec<PathBuf> = if paths.is_empty() {
        let dir = std::fs::read_dir(out).map_err(|e| Failure::Config(format!("cannot read {}: {e}", out.display())))?;
        let mut v: Vec<PathBuf> =
            dir.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "csv")).collect();
        v.sort();
        v
    } else {
        paths.to_vec()
    };
    if files.is_empty() {
        return Err(Failure::Config(format!("no CSV files in {}", out.display())));
    }
    let mut pass = true;
    for f in &files {
        let t = output::ReadTable::read(f).map_err(|e| Failure::Config(format!("{e:#}")))?;
        let name = f.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if t.header.first().map(String::as_str) == Some("id") {
            println!("{name}: {} suites", t.rows.len());
            for r in &t.rows {
                let ok = r.get(6).map(String::as_str) == Some("true");
                pass &= ok;
                println!(
                    "  {} {}: {} samples, {} violations, worst margin {}",
                    if ok { "PASS" } else { "FAIL" },
                    r[0],
                    r.get(1).cloned().unwrap_or_default(),
                    r.get(4).cloned().unwrap_or_default(),
                    r.get(3).cloned().unwrap_or_default()
                );
            }
        } else if let (Some(ts), Some(mass), Some(energy), Some(h)) =
            (t.column("t"), t.column("mass"), t.column("energy"), t.column("h"))
        {
            if ts.is_empty() {
                println!("{name}: no rows");
                continue;
            }
            let drift = |v: &[f64]| v.iter().map(|x| ((x - v[0]) / v[0]).abs()).fold(0.0, f64::max);
            let rise = h.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1e-300)).fold(f64::NEG_INFINITY, f64::max);
            println!("{name}: {} rows, t ∈ [{}, {}]", ts.len(), ts[0], ts[ts.len() - 1]);
            println!("  mass drift {:.3e}, energy drift {:.3e}, largest relative H increase {:.3e}", drift(&mass), drift(&energy), rise);
            for c in ["d_l1", "d_l12", "dissipation"] {
                if let Some(v) = t.column(c) {
                    println!("  {c}: first {:.6e}, last {:.6e}", v[0], v[v.len() - 1]);
                }
            }
        } else {
            println!("{name}: {} rows, columns {}", t.rows.len(), t.header.join(", "));
        }
    }
    Ok(status(pass))
}
