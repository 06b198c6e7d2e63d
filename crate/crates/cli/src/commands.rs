use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde_json::json;

use ksbm::bernstein::{log_space, scaling_exponents, ScalingLattice, ScalingTarget};
use ksbm::interval_solver::{
    bhp_sup_ratio, build_generator, exit_alive_prob, green_matrix, harnack_sup_ratio, Grid, ProcessKind,
};
use ksbm::montecarlo::{simulate_exit, ExitSide, PathConfig};
use ksbm::quadrature::{selftest, QuadSpec};
use ksbm::verify::{bhp_data, emit_report, render_text, run_verify, ReportFormat, RunConfig};
use ksbm::{Error, KernelSet, PhiSpec, Result};

use crate::output::{sci, sink, write_table};

pub fn error_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io(_) => 2,
        _ => 1,
    }
}

#[derive(Args, Debug, Clone)]
pub struct SpecArgs {
    /// JSON spec file, e.g. {"family":"stable","delta":0.75}
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_parser = ["stable", "mixture"])]
    family: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    /// Mixture terms as "w:d,w:d"
    #[arg(long)]
    terms: Option<String>,
}

impl SpecArgs {
    /// Falls back to the stable spec with delta 0.75.
    fn resolve(&self) -> Result<PhiSpec> {
        if let Some(p) = &self.spec {
            let s = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            return PhiSpec::from_json(&s);
        }
        match self.family.as_deref() {
            Some("mixture") => {
                let t = self.terms.as_deref().ok_or_else(|| Error::Config("mixture needs --terms".into()))?;
                PhiSpec::mixture(PhiSpec::parse_terms(t)?)
            }
            _ => PhiSpec::stable(self.delta.unwrap_or(0.75)),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number '{t}': {e}"))))
        .collect()
}

fn print_json(v: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    writeln!(w, "{}", serde_json::to_string_pretty(v)?)?;
    w.flush()?;
    Ok(())
}

#[derive(Subcommand, Debug)]
pub enum PhiCmd {
    /// phi(lambda), and nu(t) when --t is given
    Eval {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Fit the global scaling exponents on a log lattice
    Scaling {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, value_enum, default_value_t = Target::Phi)]
        target: Target,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Target {
    Phi,
    H,
}

pub fn phi(cmd: PhiCmd) -> Result<u8> {
    match cmd {
        PhiCmd::Eval { spec, lambda, t } => {
            let spec = spec.resolve()?;
            println!("phi({lambda}) = {}", sci(spec.phi(lambda)?));
            if let Some(t) = t {
                println!("nu({t}) = {}", sci(spec.nu(t)?));
            }
        }
        PhiCmd::Scaling { spec, target, out } => {
            let spec = spec.resolve()?;
            let lattice = ScalingLattice::default();
            let rep = match target {
                Target::Phi => scaling_exponents(&spec, &lattice, ScalingTarget::Phi, None)?,
                Target::H => {
                    // the h lattice is kept small: every point is a quadrature
                    let lattice = ScalingLattice { r_min: 1e-2, r_max: 1e2, n_r: 17, lambda_max: 1e2, n_lambda: 9 };
                    let ks = KernelSet::new(spec.clone())?;
                    scaling_exponents(&spec, &lattice, ScalingTarget::H, Some(&ks))?
                }
            };
            if rep.near_one_warning {
                eprintln!("warning: delta2_hat = {:.4} is above 0.95", rep.delta2_hat);
            }
            print_json(&serde_json::to_value(&rep)?, out.as_deref())?;
        }
    }
    Ok(0)
}

#[derive(Subcommand, Debug)]
pub enum QuadCmd {
    /// Reference integrals with pass/fail
    Selftest,
}

pub fn quad(cmd: QuadCmd) -> Result<u8> {
    match cmd {
        QuadCmd::Selftest => {
            let rows = selftest(&QuadSpec::default())?;
            println!("{:<16} {:>22} {:>22} {:>10}  result", "integral", "value", "expected", "abs_err");
            for r in &rows {
                let token = if r.pass { "PASS" } else { "FAIL" };
                println!("{:<16} {:>22} {:>22} {:>10.2e}  {token}", r.name, sci(r.value), sci(r.expected), (r.value - r.expected).abs());
            }
            Ok(if rows.iter().all(|r| r.pass) { 0 } else { 1 })
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum What {
    Psi,
    J,
    Uq,
    H,
    Gz,
    Gx0,
}

#[derive(Subcommand, Debug)]
pub enum KernelCmd {
    Table {
        #[arg(long, value_enum)]
        what: What,
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 0.01)]
        xmin: f64,
        #[arg(long, default_value_t = 10.0)]
        xmax: f64,
        #[arg(long, default_value_t = 41)]
        n: usize,
        /// Log-spaced abscissae
        #[arg(long)]
        log: bool,
        /// Resolvent parameter for uq
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        /// Second argument for gz and gx0
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn kernel(cmd: KernelCmd) -> Result<u8> {
    let KernelCmd::Table { what, spec, xmin, xmax, n, log, q, y, out } = cmd;
    if n == 0 || !(xmax >= xmin) || (log && !(xmin > 0.0)) {
        return Err(Error::Config("need n >= 1, xmin <= xmax, and xmin > 0 for --log".into()));
    }
    let ks = KernelSet::new(spec.resolve()?)?;
    let xs = if log {
        log_space(xmin, xmax, n)
    } else if n == 1 {
        vec![xmin]
    } else {
        (0..n).map(|i| xmin + (xmax - xmin) * i as f64 / (n - 1) as f64).collect()
    };
    let mut rows = Vec::with_capacity(xs.len());
    for &x in &xs {
        let v = match what {
            What::Psi => ks.psi(x),
            What::J => ks.levy_j(x)?,
            What::Uq => ks.uq(q, x)?,
            What::H => ks.h(x)?,
            What::Gz => ks.green_free_z(x, y)?,
            What::Gx0 => ks.green_free_x0(x, y)?,
        };
        rows.push(vec![x, v]);
    }
    let header: &[&str] = match what {
        What::Psi => &["xi", "psi"],
        What::J => &["x", "j"],
        What::Uq => &["x", "uq"],
        What::H => &["x", "h"],
        What::Gz => &["x", "gz"],
        What::Gx0 => &["x", "gx0"],
    };
    write_table(out.as_deref(), header, &rows)?;
    Ok(0)
}

#[derive(Subcommand, Debug)]
pub enum SolveCmd {
    /// Green matrix of X, Y or Z killed outside (a, b), as CSV
    Green {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 2.0)]
        b: f64,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value = "x")]
        process: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probability of leaving (0, R) alive, bracketed along a -> 0
    Exit {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long = "R", default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 0.5)]
        x: f64,
        #[arg(long, default_value = "0.04,0.02,0.01")]
        aseq: String,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical Harnack constant
    Harnack {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 0.5)]
        afrac: f64,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical boundary Harnack constant
    Bhp {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 0.25)]
        lambda1: f64,
        #[arg(long, default_value_t = 1e-4)]
        a: f64,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn rel_drift(fine: f64, coarse: f64) -> f64 {
    (fine - coarse).abs() / fine.abs()
}

pub fn solve(cmd: SolveCmd) -> Result<u8> {
    match cmd {
        SolveCmd::Green { spec, a, b, n, process, out } => {
            let ks = KernelSet::new(spec.resolve()?)?;
            let kind: ProcessKind = process.parse()?;
            let grid = Grid::new(a, b, n)?;
            let gen = build_generator(&ks, &grid, kind)?;
            let g = green_matrix(&ks, &gen)?;
            let mut w = sink(out.as_deref())?;
            for i in 0..g.dim() {
                let row: Vec<String> = (0..g.dim()).map(|j| sci(g.at(i, j))).collect();
                writeln!(w, "{}", row.join(","))?;
            }
            w.flush()?;
            if out.is_some() {
                let rec = json!({
                    "kind": format!("green-{}", process.to_ascii_lowercase()),
                    "grid": {"a": a, "b": b, "n": n},
                    "value": g.g.max(),
                    "bracket": null,
                    "refinement_drift": null,
                    "asymmetry": g.asymmetry,
                });
                print_json(&rec, None)?;
            }
        }
        SolveCmd::Exit { spec, r, x, aseq, n, out } => {
            let ks = KernelSet::new(spec.resolve()?)?;
            let a_seq = parse_list(&aseq)?;
            let fine = exit_alive_prob(&ks, r, &[x], &a_seq, n)?.remove(0);
            let coarse = exit_alive_prob(&ks, r, &[x], &a_seq, n / 2)?.remove(0);
            let rec = json!({
                "kind": "exit",
                "grid": {"a": 0.0, "b": r, "n": n},
                "x": x,
                "value": fine.value,
                "bracket": [fine.lower, fine.upper],
                "refinement_drift": rel_drift(fine.value, coarse.value),
                "shrinking": fine.shrinking,
                "steps": fine.steps,
            });
            print_json(&rec, out.as_deref())?;
        }
        SolveCmd::Harnack { spec, r, afrac, n, out } => {
            let ks = KernelSet::new(spec.resolve()?)?;
            let fine = harnack_sup_ratio(&ks, r, afrac, n)?;
            let coarse = harnack_sup_ratio(&ks, r, afrac, n / 2)?;
            let rec = json!({
                "kind": "harnack",
                "grid": {"a": fine.interval.0, "b": fine.interval.1, "n": n},
                "value": fine.c6,
                "bracket": null,
                "refinement_drift": rel_drift(fine.c6, coarse.c6),
            });
            print_json(&rec, out.as_deref())?;
        }
        SolveCmd::Bhp { spec, r, lambda1, a, n, out } => {
            let ks = KernelSet::new(spec.resolve()?)?;
            let data = bhp_data(r);
            let fine = bhp_sup_ratio(&ks, r, lambda1, &data, a, n)?;
            let coarse = bhp_sup_ratio(&ks, r, lambda1, &data, a, n / 2)?;
            let lo = fine.per_data.iter().copied().fold(f64::INFINITY, f64::min);
            let rec = json!({
                "kind": "bhp",
                "grid": {"a": a, "b": 2.0 * r, "n": n},
                "value": fine.c7,
                "bracket": [lo, fine.c7],
                "refinement_drift": rel_drift(fine.c7, coarse.c7),
                "per_data": fine.per_data,
            });
            print_json(&rec, out.as_deref())?;
        }
    }
    Ok(0)
}

#[derive(Subcommand, Debug)]
pub enum McCmd {
    /// Exit times and positions of skeleton paths, one CSV row per path
    Exit {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 2.0)]
        b: f64,
        #[arg(long, default_value_t = 1.5)]
        x0: f64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 100.0)]
        tmax: f64,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn mc(cmd: McCmd) -> Result<u8> {
    let McCmd::Exit { spec, a, b, x0, dt, tmax, paths, seed, out } = cmd;
    let spec = spec.resolve()?;
    let cfg = PathConfig { dt, t_max: tmax, x0, interval: (a, b), n_paths: paths, seed };
    let stats = simulate_exit(&cfg, &spec)?;
    let mut w = sink(out.as_deref())?;
    writeln!(w, "exit_time,exit_position,side,censored")?;
    for s in &stats.samples {
        let side = match s.side {
            ExitSide::Below => "below",
            ExitSide::Above => "above",
            ExitSide::Censored => "none",
        };
        let censored = u8::from(s.side == ExitSide::Censored);
        writeln!(w, "{},{},{side},{censored}", sci(s.time), sci(s.position))?;
    }
    w.flush()?;
    if stats.censored_count() > 0 {
        eprintln!("warning: {} paths reached t_max", stats.censored_count());
    }
    Ok(0)
}

#[derive(Subcommand, Debug)]
pub enum VerifyCmd {
    /// Every check on every spec of the config
    All {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// json, csv or text; inferred from the --out extension when omitted
        #[arg(long)]
        format: Option<String>,
    },
    /// A single named check
    One {
        #[arg(long)]
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_path(p),
        None => Ok(RunConfig::default()),
    }
}

fn report_format(format: Option<&str>, out: Option<&Path>) -> Result<ReportFormat> {
    if let Some(f) = format {
        return f.parse();
    }
    Ok(match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("csv") => ReportFormat::Csv,
        Some("txt") => ReportFormat::Text,
        _ => ReportFormat::Json,
    })
}

pub fn verify(cmd: VerifyCmd) -> Result<u8> {
    let (cfg, out, format) = match cmd {
        VerifyCmd::All { config, out, format } => (load_config(config.as_deref())?, out, format),
        VerifyCmd::One { name, config, out, format } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.only = Some(vec![name]);
            (cfg, out, format)
        }
    };
    let out = out.or_else(|| cfg.output.clone().map(PathBuf::from));
    cfg.validate()?;
    let format = report_format(format.as_deref(), out.as_deref())?;
    let report = run_verify(&cfg)?;
    print!("{}", render_text(&report));
    if let Some(p) = &out {
        emit_report(&report, p, format)?;
    }
    Ok(report.exit_code() as u8)
}
