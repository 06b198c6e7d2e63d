//! The check suite: every estimate of the theory mapped to a named numerical
//! check, run in a fixed order and collected into a report.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::gamma::gamma;

use crate::bernstein::{log_space, PhiSpec};
use crate::error::{Error, Result};
use crate::interval_solver::{
    bhp_sup_ratio, build_generator, exit_alive_prob, exit_time, gauge_ratios, green_matrix, gx_band,
    harnack_sup_ratio, nested_sup_change, small_interval_lower, solve_all, three_g_sup, BoundaryData,
    ExteriorData, GreenMatrix, Grid, ProcessKind, Tail, ZGridSpec,
};
use crate::kernels::KernelSet;
use crate::montecarlo::{self, ExitStats, PathConfig};
use crate::quadrature::{self, Hint, QuadSpec};

/// Check names in execution order.
pub const CHECKS: &[&str] = &[
    "h-closed-form",
    "h-homogeneity",
    "green-sandwich",
    "lemma1-band",
    "solver-self-convergence",
    "poisson-row-mass",
    "exit-prob-sandwich",
    "exit-time-bound",
    "green-comparability",
    "green-estimate-band",
    "harnack",
    "bhp",
    "three-g",
    "small-interval-lower",
    "mc-laplace",
    "mc-exit-law",
    "mc-creeping",
];

fn default_specs() -> Vec<PhiSpec> {
    vec![
        PhiSpec::Stable { delta: 0.75 },
        PhiSpec::Mixture { terms: vec![(1.0, 0.6), (1.0, 0.9)] },
    ]
}
fn default_n() -> usize {
    256
}
fn default_interval() -> (f64, f64) {
    (1.0, 2.0)
}
fn default_r_values() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_a_seq() -> Vec<f64> {
    vec![1e-4, 1e-6, 1e-8]
}
fn default_paths() -> usize {
    100_000
}
fn default_dts() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}
fn default_seed() -> u64 {
    42
}
fn default_lambda1() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_specs")]
    pub specs: Vec<PhiSpec>,
    /// Coarse cell count; refinement checks compare against `2 n`.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_interval")]
    pub interval: (f64, f64),
    #[serde(default = "default_r_values")]
    pub r_values: Vec<f64>,
    /// Decreasing gaps for the limits at the origin.
    #[serde(default = "default_a_seq")]
    pub a_seq: Vec<f64>,
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_paths")]
    pub mc_paths: usize,
    #[serde(default = "default_dts")]
    pub mc_dts: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    /// Restrict to these check names.
    #[serde(default)]
    pub only: Option<Vec<String>>,
    #[serde(default)]
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::Config("run config needs at least one spec".into()));
        }
        for s in &self.specs {
            s.validate()?;
        }
        if self.n < 16 {
            return Err(Error::Config("n must be at least 16".into()));
        }
        let (a, b) = self.interval;
        if !(a > 0.0 && b > a) {
            return Err(Error::Config("interval needs 0 < a < b".into()));
        }
        if self.a_seq.is_empty() || self.a_seq.windows(2).any(|w| w[1] >= w[0]) || self.a_seq[0] <= 0.0 {
            return Err(Error::Config("a_seq must be positive and decreasing".into()));
        }
        if self.r_values.is_empty() || self.r_values.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config("r_values must be positive".into()));
        }
        if self.mc_dts.is_empty() || self.mc_dts.iter().any(|d| !(*d > 0.0)) || self.mc_paths == 0 {
            return Err(Error::Config("Monte Carlo budget is empty".into()));
        }
        if !(self.lambda1 > 0.0 && self.lambda1 < 0.5) {
            return Err(Error::Config("lambda1 must lie in (0, 1/2)".into()));
        }
        if let Some(only) = &self.only {
            for name in only {
                if !CHECKS.contains(&name.as_str()) {
                    return Err(Error::Config(format!("unknown check '{name}'")));
                }
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let s = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub anchor: String,
    pub measured: BTreeMap<String, f64>,
    pub tol: f64,
    pub pass: bool,
    pub runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
    pub config_digest: String,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }

    pub fn get(&self, name: &str) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| c.name == name || c.name.starts_with(&format!("{name}["))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            _ => Err(Error::Config(format!("unknown report format '{s}'"))),
        }
    }
}

/// Intermediate record while a check runs.
struct Outcome {
    measured: BTreeMap<String, f64>,
    tol: f64,
    pass: bool,
}

impl Outcome {
    fn new(tol: f64) -> Self {
        Outcome { measured: BTreeMap::new(), tol, pass: true }
    }

    fn put(&mut self, key: impl Into<String>, v: f64) {
        // keep the report valid JSON
        let v = if v.is_finite() {
            v
        } else {
            self.pass = false;
            if v > 0.0 {
                f64::MAX
            } else {
                f64::MIN
            }
        };
        self.measured.insert(key.into(), v);
    }

    fn require(&mut self, ok: bool) {
        self.pass &= ok;
    }
}

/// Per-spec state shared by checks; only caches pure results.
struct Context {
    spec: PhiSpec,
    ks: KernelSet,
    cfg: RunConfig,
    mc: Mutex<HashMap<u64, Arc<ExitStats>>>,
}

impl Context {
    fn green(&self, kind: ProcessKind, grid: &Grid) -> Result<GreenMatrix> {
        let gen = build_generator(&self.ks, grid, kind)?;
        green_matrix(&self.ks, &gen)
    }

    fn grid(&self, n: usize) -> Result<Grid> {
        Grid::new(self.cfg.interval.0, self.cfg.interval.1, n)
    }

    fn x0(&self) -> f64 {
        0.5 * (self.cfg.interval.0 + self.cfg.interval.1)
    }

    fn exits(&self, dt: f64) -> Result<Arc<ExitStats>> {
        if let Some(s) = self.mc.lock().expect("mc cache").get(&dt.to_bits()) {
            return Ok(s.clone());
        }
        let cfg = PathConfig {
            dt,
            t_max: 100.0,
            x0: self.x0(),
            interval: self.cfg.interval,
            n_paths: self.cfg.mc_paths,
            seed: self.cfg.seed,
        };
        let s = Arc::new(montecarlo::simulate_exit(&cfg, &self.spec)?);
        self.mc.lock().expect("mc cache").insert(dt.to_bits(), s.clone());
        Ok(s)
    }
}

fn anchor(name: &str) -> &'static str {
    match name {
        "h-closed-form" => "h(x) = |x|^(2d-1) / (2 Gamma(2d) |cos(pi d)|) for phi(l) = l^d",
        "h-homogeneity" => "h(2x) / h(x) = 2^(2d-1) for phi(l) = l^d",
        "green-sandwich" => "h(x ^ y) <= G^Z(x, y) <= 4 h(x ^ y) for recurrent X",
        "lemma1-band" => "c^-1 <= h(x) x psi(1/x) <= c for all x > 0",
        "solver-self-convergence" => "lattice Green matrices of X, Y, Z on (a, b) converge under refinement",
        "poisson-row-mass" => "Z^(a,b) leaves (a, b) only by jumping, without dying",
        "exit-prob-sandwich" => "h(x) / (8 h(R)) <= P_x(tau_(0,R) < sigma_0) <= h(x) / h(R)",
        "exit-time-bound" => "E_x[tau_(0,R)] <= 4 R h(x)",
        "green-comparability" => "G^X, G^Y and G^Z on (a, b) are pairwise comparable; G^Y >= G^X",
        "green-estimate-band" => "G^X_(a,b) ~ A/Phi^-1(A) ^ A/|x-y|, A = (Phi(d(x)) Phi(d(y)))^(1/2)",
        "harnack" => "u(x) <= c6 u(y) on (a r, (3 - a) r) for u >= 0 harmonic on (0, 3r)",
        "bhp" => "u(x) / u(y) <= c7 h(x) / h(y) on (0, lambda1 r) for u vanishing at 0",
        "three-g" => "G(x,y) G(y,z) / G(x,z) <= C Phi(d(y)) / d(y)^2",
        "small-interval-lower" => "G^Z_(0,R)(x, y) >= lambda2 h(R) for x, y in (0, lambda1 R)",
        "mc-laplace" => "E exp(-l S_t) = exp(-t phi(l))",
        "mc-exit-law" => "skeleton exit positions follow the solver exit law",
        "mc-creeping" => "exits occur only by jumps; no mass on the endpoints",
        _ => "",
    }
}

fn stable_delta(spec: &PhiSpec) -> Option<f64> {
    match spec {
        PhiSpec::Stable { delta } => Some(*delta),
        _ => None,
    }
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi / lo - 1.0
}

fn drift(coarse: f64, fine: f64) -> f64 {
    (coarse / fine - 1.0).abs()
}

/// Exit mass within `eps` of the endpoints for `phi(l) = l^d` started at the
/// midpoint of an interval of half-width `rho`, from the closed-form exit law
/// `sin(pi d) / pi * (z^2 - 1)^(-d) / z` on `|z| > 1`.
pub fn stable_boundary_layer(delta: f64, eps: f64, rho: f64) -> Result<f64> {
    let c = (PI * delta).sin() / PI;
    // in terms of s = z - 1
    let f = |s: f64| c * (s * (s + 2.0)).powf(-delta) / (1.0 + s);
    let r = quadrature::integrate_hinted(&f, 0.0, eps / rho, Hint::power(-delta, 0.0), &QuadSpec::default())?;
    Ok(2.0 * r.strict()?)
}

/// Closed-form exit distribution function from the midpoint of `(a, b)`
/// for `phi(l) = l^d`.
pub fn stable_exit_cdf(delta: f64, a: f64, b: f64, z: f64) -> Result<f64> {
    let rho = 0.5 * (b - a);
    if z <= a {
        Ok(0.5 - 0.5 * stable_boundary_layer(delta, a - z, rho)?)
    } else if z >= b {
        Ok(0.5 + 0.5 * stable_boundary_layer(delta, z - b, rho)?)
    } else {
        Ok(0.5)
    }
}

fn run_one(name: &str, cx: &Context) -> Result<Option<Outcome>> {
    let ks = &cx.ks;
    let cfg = &cx.cfg;
    let n = cfg.n;
    match name {
        "h-closed-form" => {
            let Some(d) = stable_delta(&cx.spec) else { return Ok(None) };
            let al = 2.0 * d;
            let exact = 1.0 / (2.0 * gamma(al) * (PI * d).cos().abs());
            let h1 = ks.h(1.0)?;
            let mut o = Outcome::new(1e-6);
            o.put("h1", h1);
            o.put("closed_form", exact);
            o.put("abs_err", (h1 - exact).abs());
            o.require((h1 - exact).abs() <= 1e-6);
            Ok(Some(o))
        }
        "h-homogeneity" => {
            let Some(d) = stable_delta(&cx.spec) else { return Ok(None) };
            let want = 2f64.powf(2.0 * d - 1.0);
            let mut o = Outcome::new(1e-6);
            for x in [0.01, 0.1, 1.0, 10.0] {
                let r = ks.h(2.0 * x)? / ks.h(x)?;
                o.put(format!("ratio_{x}"), r);
                o.require((r - want).abs() <= 1e-6);
            }
            o.put("target", want);
            Ok(Some(o))
        }
        "green-sandwich" => {
            let mut o = Outcome::new(1e-9);
            let xs: Vec<f64> = (1..=100).map(|k| 0.1 * k as f64).collect();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut slack_lo, mut slack_hi) = (f64::INFINITY, f64::INFINITY);
            for &x in &xs {
                for &y in &xs {
                    let g = ks.green_free_z(x, y)?;
                    let h = ks.h(x.min(y))?;
                    lo = lo.min(g / h);
                    hi = hi.max(g / h);
                    slack_lo = slack_lo.min(g - h);
                    slack_hi = slack_hi.min(4.0 * h - g);
                }
            }
            o.put("min_g_over_h", lo);
            o.put("max_g_over_h", hi);
            o.put("lower_slack", slack_lo);
            o.put("upper_slack", slack_hi);
            o.require(slack_lo >= -1e-9 && slack_hi >= -1e-9);
            Ok(Some(o))
        }
        "lemma1-band" => {
            let mut o = Outcome::new(50.0);
            let (m, big) = ks.h_band(&log_space(1e-3, 1e3, 41))?;
            o.put("c1_band_min", m);
            o.put("c1_band_max", big);
            o.put("band_ratio", big / m);
            o.require(m > 0.0 && big / m < 50.0);
            Ok(Some(o))
        }
        "solver-self-convergence" => {
            let mut o = Outcome::new(0.05);
            let (gc, gf) = (cx.grid(n)?, cx.grid(2 * n)?);
            for kind in [ProcessKind::X, ProcessKind::Y, ProcessKind::Z] {
                let s = nested_sup_change(&cx.green(kind, &gc)?, &cx.green(kind, &gf)?)?;
                o.put(format!("sup_change_{kind:?}"), s);
                o.require(s < 0.05);
            }
            Ok(Some(o))
        }
        "poisson-row-mass" => {
            let mut o = Outcome::new(1e-2);
            let mut errs = Vec::new();
            for m in [n, 2 * n] {
                let (_, pt) = solve_all(ks, &cx.grid(m)?, ProcessKind::Z, &ZGridSpec::default())?;
                let e = pt.row_mass().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
                o.put(format!("mass_err_n{m}"), e);
                // before row normalization, reported only
                let raw = pt.raw_mass.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
                o.put(format!("raw_mass_err_n{m}"), raw);
                errs.push(e);
            }
            o.require(errs[1] < 1e-2 && errs[1] < errs[0]);
            Ok(Some(o))
        }
        "exit-prob-sandwich" => {
            let mut o = Outcome::new(0.02);
            let xs: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
            let h1 = ks.h(1.0)?;
            for b in exit_alive_prob(ks, 1.0, &xs, &cfg.a_seq, 2 * n)? {
                let hx = ks.h(b.x)?;
                o.put(format!("p_{:.1}", b.x), b.value);
                o.put(format!("width_{:.1}", b.x), b.width);
                o.require(b.value >= hx / (8.0 * h1) - 0.02 && b.value <= hx / h1 + 0.02 && b.width < 0.02);
            }
            Ok(Some(o))
        }
        "exit-time-bound" => {
            let mut o = Outcome::new(0.05);
            let a = *cfg.a_seq.last().expect("validated");
            let mut c3 = Vec::new();
            for m in [n, 2 * n] {
                let grid = Grid::new(a, 1.0, m)?;
                let et = exit_time(&cx.green(ProcessKind::Z, &grid)?);
                let mut worst = 0.0f64;
                let mut low = f64::INFINITY;
                for (i, e) in et.iter().enumerate() {
                    let x = grid.node(i);
                    let h = ks.h(x)?;
                    worst = worst.max(e / (4.0 * h));
                    if x < 0.1 {
                        low = low.min(e / h);
                    }
                }
                o.put(format!("max_ratio_to_4Rh_n{m}"), worst);
                o.put(format!("c3_n{m}"), low);
                o.require(worst <= 1.05);
                c3.push(low);
            }
            let d = drift(c3[0], c3[1]);
            o.put("c3_drift", d);
            o.require(c3[1] > 0.0 && d < 0.15);
            Ok(Some(o))
        }
        "green-comparability" => {
            let mut o = Outcome::new(0.1);
            let mut zx = Vec::new();
            for m in [n, 2 * n] {
                let g = cx.grid(m)?;
                let (gx, gy, gz) = (cx.green(ProcessKind::X, &g)?, cx.green(ProcessKind::Y, &g)?, cx.green(ProcessKind::Z, &g)?);
                let r = gauge_ratios(&gx, &gy, &gz)?;
                let gap = gy.g.iter().zip(gx.g.iter()).map(|(y, x)| y - x).fold(f64::INFINITY, f64::min);
                o.put(format!("zx_inf_n{m}"), r.zx.0);
                o.put(format!("zx_sup_n{m}"), r.zx.1);
                o.put(format!("zy_inf_n{m}"), r.zy.0);
                o.put(format!("zy_sup_n{m}"), r.zy.1);
                o.put(format!("yx_inf_n{m}"), r.yx.0);
                o.put(format!("min_gy_minus_gx_n{m}"), gap);
                o.require(gap >= -1e-8);
                zx.push(r.zx);
            }
            let (d_inf, d_sup) = (drift(zx[0].0, zx[1].0), drift(zx[0].1, zx[1].1));
            o.put("zx_inf_drift", d_inf);
            o.put("zx_sup_drift", d_sup);
            o.require(d_inf < 0.1 && d_sup < 0.1);
            Ok(Some(o))
        }
        "green-estimate-band" => {
            let mut o = Outcome::new(0.1);
            let mut w = Vec::new();
            for m in [n, 2 * n] {
                let (lo, hi) = gx_band(&cx.green(ProcessKind::X, &cx.grid(m)?)?, ks)?;
                o.put(format!("band_min_n{m}"), lo);
                o.put(format!("band_max_n{m}"), hi);
                w.push(hi / lo);
            }
            let d = drift(w[0], w[1]);
            o.put("c4_width", w[1]);
            o.put("width_drift", d);
            o.require(d < 0.1);
            Ok(Some(o))
        }
        "harnack" => {
            let mut o = Outcome::new(0.1);
            let mut vals = Vec::new();
            for &r in &cfg.r_values {
                let c = harnack_sup_ratio(ks, r, 0.5, 2 * n)?.c6;
                let cc = harnack_sup_ratio(ks, r, 0.5, n)?.c6;
                o.put(format!("c6_r{r}"), c);
                o.put(format!("c6_drift_r{r}"), drift(cc, c));
                o.require(drift(cc, c) < 0.1);
                vals.push(c);
            }
            let s = spread(&vals);
            o.put("c6_spread", s);
            if cx.spec.is_stable() {
                o.require(s < 0.1);
            }
            Ok(Some(o))
        }
        "bhp" => {
            let mut o = Outcome::new(0.15);
            let r = 1.0;
            let fset = bhp_data(r);
            let a0 = cfg.a_seq[0];
            let a1 = *cfg.a_seq.last().expect("validated");
            let fine = bhp_sup_ratio(ks, r, cfg.lambda1, &fset, a1, 2 * n)?;
            let coarse_n = bhp_sup_ratio(ks, r, cfg.lambda1, &fset, a1, n)?;
            let coarse_a = bhp_sup_ratio(ks, r, cfg.lambda1, &fset, a0, 2 * n)?;
            for (k, v) in fine.per_data.iter().enumerate() {
                o.put(format!("c7_data{k}"), *v);
                o.require(*v <= fine.c7);
            }
            o.put("c7", fine.c7);
            o.put("drift_n", drift(coarse_n.c7, fine.c7));
            o.put("drift_a", drift(coarse_a.c7, fine.c7));
            o.require(drift(coarse_n.c7, fine.c7) < 0.15 && drift(coarse_a.c7, fine.c7) < 0.15);
            Ok(Some(o))
        }
        "three-g" => {
            let mut o = Outcome::new(0.15);
            let half = n / 2;
            let c = three_g_sup(&cx.green(ProcessKind::X, &cx.grid(half)?)?, ks)?;
            let f = three_g_sup(&cx.green(ProcessKind::X, &cx.grid(n)?)?, ks)?;
            o.put(format!("sup_n{half}"), c);
            o.put(format!("sup_n{n}"), f);
            o.put("drift", drift(c, f));
            o.require(drift(c, f) < 0.15);
            Ok(Some(o))
        }
        "small-interval-lower" => {
            let mut o = Outcome::new(0.1);
            let mut vals = Vec::new();
            for &r in &cfg.r_values {
                let a = 1e-6 * r;
                let l = small_interval_lower(ks, r, cfg.lambda1, a, 2 * n)?;
                let lh = small_interval_lower(ks, r, cfg.lambda1, 0.5 * a, 2 * n)?;
                o.put(format!("lambda2_r{r}"), l.lambda2);
                o.put(format!("lambda2_local_r{r}"), l.lambda2_local);
                o.require(l.lambda2 > 0.0 && lh.lambda2 >= l.lambda2 * (1.0 - 1e-3));
                vals.push(l.lambda2);
            }
            let s = spread(&vals);
            o.put("lambda2_spread", s);
            if cx.spec.is_stable() {
                o.require(s < 0.1);
            }
            Ok(Some(o))
        }
        "mc-laplace" => {
            let mut o = Outcome::new(3.0);
            let draws: Vec<f64> = (0..cfg.mc_paths as u64)
                .into_par_iter()
                .map(|k| {
                    let mut rng = montecarlo::path_rng(cfg.seed ^ 0x5eed, k);
                    (-montecarlo::sample_subordinator(&cx.spec, 1.0, &mut rng)).exp()
                })
                .collect();
            let (m, se) = montecarlo::mean_stderr(&draws);
            let want = (-cx.spec.phi(1.0)?).exp();
            o.put("mean", m);
            o.put("stderr", se);
            o.put("target", want);
            o.put("z_score", (m - want).abs() / se);
            o.require((m - want).abs() < 3.0 * se);
            Ok(Some(o))
        }
        "mc-exit-law" => {
            let mut o = Outcome::new(0.02);
            let dt = cfg.mc_dts.iter().cloned().fold(f64::INFINITY, f64::min);
            let grid = cx.grid(2 * n)?;
            let (green, pt) = solve_all(ks, &grid, ProcessKind::X, &ZGridSpec::default())?;
            let i = nearest_node(&grid, cx.x0());
            let mut zs: Vec<f64> = pt.zgrid.iter().map(|z| z.z).collect();
            zs.sort_by(|a, b| a.total_cmp(b));
            let cdf_vals = pt.cdf(i, &zs);
            let cdf = |x: f64| {
                let k = zs.partition_point(|&z| z <= x);
                if k == 0 {
                    0.0
                } else {
                    cdf_vals[k - 1]
                }
            };
            let st = cx.exits(dt)?;
            let pos = st.sorted_positions();
            let d = montecarlo::kolmogorov_distance(&pos, cdf);
            let dkw = montecarlo::dkw_bound(pos.len(), 0.05);
            let (mt, se) = st.mean_exit_time();
            let below = st.side_count(montecarlo::ExitSide::Below) as f64 / st.samples.len() as f64;
            o.put("kolmogorov", d);
            o.put("dkw", dkw);
            o.put("mean_exit_time", mt);
            o.put("mean_exit_time_stderr", se);
            o.put("solver_exit_time", exit_time(&green)[i]);
            o.put("below_fraction", below);
            o.put("solver_below", pt.mass_where(|z| z < grid.a, (true, false))[i]);
            if let Some(delta) = stable_delta(&cx.spec) {
                // both sides of the comparison against the exact law
                let (a, b) = (grid.a, grid.b);
                let exact: Vec<f64> = zs.iter().map(|&z| stable_exit_cdf(delta, a, b, z)).collect::<Result<_>>()?;
                let sup = zs
                    .iter()
                    .zip(cdf_vals.iter().zip(&exact))
                    .filter(|(z, _)| **z > a - (b - a) && **z < b + (b - a))
                    .map(|(_, (f, e))| (f - e).abs())
                    .fold(0.0, f64::max);
                o.put("solver_vs_closed_form", sup);
                let exact_at = |x: f64| {
                    let k = zs.partition_point(|&z| z <= x);
                    if k == 0 || k == zs.len() {
                        return if k == 0 { 0.0 } else { 1.0 };
                    }
                    let t = (x - zs[k - 1]) / (zs[k] - zs[k - 1]);
                    exact[k - 1] + t * (exact[k] - exact[k - 1])
                };
                o.put("kolmogorov_vs_closed_form", montecarlo::kolmogorov_distance(&pos, exact_at));
            }
            o.require(d < 3.0 * dkw + 0.02);
            Ok(Some(o))
        }
        "mc-creeping" => {
            let eps = 1e-4;
            let mut o = Outcome::new(0.01);
            let mut dts = cfg.mc_dts.clone();
            dts.sort_by(|a, b| b.total_cmp(a));
            let mut fr = Vec::new();
            let mut times = Vec::new();
            for &dt in &dts {
                let st = cx.exits(dt)?;
                let f = st.creep_count(eps) as f64 / st.samples.len() as f64;
                o.put(format!("creep_dt{dt:e}"), f);
                o.put(format!("mean_exit_time_dt{dt:e}"), st.mean_exit_time().0);
                fr.push(f);
                times.push(st.mean_exit_time().0);
            }
            if let Some(d) = stable_delta(&cx.spec) {
                let rho = 0.5 * (cfg.interval.1 - cfg.interval.0);
                o.put("continuum_layer_mass", stable_boundary_layer(d, eps, rho)?);
            }
            let down = fr.windows(2).all(|w| w[1] <= w[0]);
            let up = fr.windows(2).all(|w| w[1] >= w[0]);
            o.put("monotone", if down || up { 1.0 } else { 0.0 });
            o.put("exit_time_bias_monotone", if times.windows(2).all(|w| w[1] <= w[0]) { 1.0 } else { 0.0 });
            o.require(*fr.last().expect("nonempty") < 0.01 && (down || up));
            Ok(Some(o))
        }
        _ => Err(Error::Config(format!("unknown check '{name}'"))),
    }
}

fn nearest_node(grid: &Grid, x: f64) -> usize {
    let t = ((x - grid.a) / grid.delta()).round() as usize;
    t.clamp(1, grid.len()) - 1
}

/// The five exterior data used by the boundary Harnack probe, all supported in `[3r, inf)`.
pub fn bhp_data(r: f64) -> Vec<ExteriorData> {
    let top = 3.0 * r;
    vec![
        ExteriorData::PointMass(4.0 * r),
        ExteriorData::Density(BoundaryData::new(move |z| if (top..=4.0 * r).contains(&z) { 1.0 } else { 0.0 }, Tail::Zero)),
        ExteriorData::Density(BoundaryData::indicator_above(top)),
        ExteriorData::Density(BoundaryData::new(
            move |z| if z >= top { (z / r).sqrt() } else { 0.0 },
            Tail::Power { coef: r.powf(-0.5), exponent: 0.5 },
        )),
        ExteriorData::Density(BoundaryData::new(
            move |z| if z >= top { (-((z - 5.0 * r) / r).powi(2)).exp() } else { 0.0 },
            Tail::Zero,
        )),
    ]
}

fn run_check(name: &str, cx: &Context) -> Option<CheckResult> {
    let t = Instant::now();
    let out = run_one(name, cx);
    let runtime = t.elapsed().as_secs_f64();
    let label = format!("{name}[{}]", cx.spec.label());
    let res = match out {
        Ok(None) => return None,
        Ok(Some(mut o)) => {
            let limit = match name {
                "h-closed-form" => Some(1.0),
                "green-sandwich" => Some(30.0),
                _ => None,
            };
            if let Some(l) = limit {
                o.require(runtime < l);
            }
            CheckResult { name: label, anchor: anchor(name).into(), measured: o.measured, tol: o.tol, pass: o.pass, runtime }
        }
        Err(e) => {
            log_line(&format!("{label}: {e}"));
            CheckResult { name: label, anchor: anchor(name).into(), measured: BTreeMap::new(), tol: 0.0, pass: false, runtime }
        }
    };
    Some(res)
}

fn log_line(s: &str) {
    let _ = writeln!(std::io::stderr(), "{s}");
}

/// Runs the selected checks for every spec, in the fixed order; failures are
/// recorded, never fatal.
pub fn run_verify(cfg: &RunConfig) -> Result<CheckReport> {
    cfg.validate()?;
    let names: Vec<&str> = CHECKS
        .iter()
        .copied()
        .filter(|c| cfg.only.as_ref().is_none_or(|o| o.iter().any(|s| s == c)))
        .collect();
    let mut checks = Vec::new();
    for spec in &cfg.specs {
        let cx = Context { spec: spec.clone(), ks: KernelSet::new(spec.clone())?, cfg: cfg.clone(), mc: Mutex::new(HashMap::new()) };
        let results: Vec<Option<CheckResult>> = if cfg.parallel {
            names.par_iter().map(|n| run_check(n, &cx)).collect()
        } else {
            names.iter().map(|n| run_check(n, &cx)).collect()
        };
        checks.extend(results.into_iter().flatten());
    }
    Ok(CheckReport { checks, config_digest: cfg.digest() })
}

pub fn emit_report(report: &CheckReport, path: &Path, format: ReportFormat) -> Result<()> {
    if report.checks.is_empty() {
        return Err(Error::Config("empty report".into()));
    }
    let mut out = std::fs::File::create(path)?;
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["check", "constant", "value", "tol", "pass", "runtime"])?;
            for c in &report.checks {
                for (k, v) in &c.measured {
                    w.write_record([
                        c.name.as_str(),
                        k.as_str(),
                        &format!("{v:.12e}"),
                        &format!("{:e}", c.tol),
                        if c.pass { "true" } else { "false" },
                        &format!("{:.3}", c.runtime),
                    ])?;
                }
            }
            w.flush()?;
        }
        ReportFormat::Text => out.write_all(render_text(report).as_bytes())?,
    }
    Ok(())
}

pub fn render_text(report: &CheckReport) -> String {
    let width = report.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for c in &report.checks {
        let token = if c.pass { "PASS" } else { "FAIL" };
        let summary: Vec<String> = c.measured.iter().take(4).map(|(k, v)| format!("{k}={v:.4e}")).collect();
        s.push_str(&format!("{token}  {:width$}  {:>8.2}s  {}\n", c.name, c.runtime, summary.join(" ")));
    }
    s.push_str(&format!("config {}\n", report.config_digest));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_errors() {
        let c = RunConfig::default();
        assert_eq!(c.specs.len(), 2);
        assert_eq!(c.n, 256);
        assert!(matches!(RunConfig::from_json(r#"{"specs": []}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json("not json"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"only": ["nope"]}"#), Err(Error::Config(_))));
        assert_eq!(c.digest(), RunConfig::default().digest());
    }

    #[test]
    fn boundary_layer_reference() {
        // full mass and the 1e-4 layer of the exit law from the centre of (1, 2)
        let all = stable_boundary_layer(0.75, 1e9, 0.5).unwrap();
        assert!((all - 1.0).abs() < 1e-3, "{all}");
        let layer = stable_boundary_layer(0.75, 1e-4, 0.5).unwrap();
        assert!((layer - 0.127317).abs() < 1e-5, "{layer}");
    }
}
