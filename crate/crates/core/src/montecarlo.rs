//! Skeleton simulation of `X_t = W(S_t)` for cross-checks against the solver.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::PhiSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub dt: f64,
    pub t_max: f64,
    pub x0: f64,
    pub interval: (f64, f64),
    pub n_paths: usize,
    pub seed: u64,
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.interval;
        if !(self.dt > 0.0 && self.t_max > 0.0) {
            return Err(Error::Config("dt and t_max must be positive".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("need at least one path".into()));
        }
        if !(a < self.x0 && self.x0 < b) {
            return Err(Error::Config(format!("x0 = {} outside ({a}, {b})", self.x0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitSide {
    Below,
    Above,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub time: f64,
    pub position: f64,
    pub side: ExitSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub interval: (f64, f64),
    pub samples: Vec<ExitSample>,
}

impl ExitStats {
    pub fn censored_count(&self) -> usize {
        self.samples.iter().filter(|s| s.side == ExitSide::Censored).count()
    }

    pub fn exited(&self) -> impl Iterator<Item = &ExitSample> {
        self.samples.iter().filter(|s| s.side != ExitSide::Censored)
    }

    /// Exits that landed within `eps` of an endpoint.
    pub fn creep_count(&self, eps: f64) -> usize {
        let (a, b) = self.interval;
        self.exited().filter(|s| (s.position - a).abs().min((s.position - b).abs()) < eps).count()
    }

    pub fn side_count(&self, side: ExitSide) -> usize {
        self.samples.iter().filter(|s| s.side == side).count()
    }

    /// Mean exit time of uncensored paths and its standard error.
    pub fn mean_exit_time(&self) -> (f64, f64) {
        let t: Vec<f64> = self.exited().map(|s| s.time).collect();
        mean_stderr(&t)
    }

    pub fn sorted_positions(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.exited().map(|s| s.position).collect();
        p.sort_by(|x, y| x.total_cmp(y));
        p
    }
}

pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// One variate of the `delta`-stable subordinator at time `t`,
/// `E exp(-l S_t) = exp(-t l^delta)`, by Kanter's representation.
pub fn sample_stable_subordinator<R: Rng + ?Sized>(delta: f64, t: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * rng.random::<f64>();
    let e: f64 = Exp1.sample(rng);
    let a = ((delta * u).sin().powf(delta) * ((1.0 - delta) * u).sin().powf(1.0 - delta) / u.sin())
        .powf(1.0 / (1.0 - delta));
    t.powf(1.0 / delta) * (a / e).powf((1.0 - delta) / delta)
}

/// Subordinator increment over `dt`; mixture terms are independent stable
/// pieces run at time scale `w dt`.
pub fn sample_subordinator<R: Rng + ?Sized>(spec: &PhiSpec, dt: f64, rng: &mut R) -> f64 {
    spec.terms().iter().map(|&(w, d)| sample_stable_subordinator(d, w * dt, rng)).sum()
}

/// Increment of `X = W(S)` over `dt`: Gaussian with variance `2 S`.
pub fn sample_increment<R: Rng + ?Sized>(spec: &PhiSpec, dt: f64, rng: &mut R) -> f64 {
    let s = sample_subordinator(spec, dt, rng);
    let g: f64 = StandardNormal.sample(rng);
    (2.0 * s).sqrt() * g
}

/// Generator for path `index` of a run seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn simulate_exit(cfg: &PathConfig, spec: &PhiSpec) -> Result<ExitStats> {
    cfg.validate()?;
    spec.validate()?;
    let (a, b) = cfg.interval;
    let max_steps = (cfg.t_max / cfg.dt).ceil() as u64;
    let samples: Vec<ExitSample> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(cfg.seed, k);
            let mut x = cfg.x0;
            for step in 1..=max_steps {
                x += sample_increment(spec, cfg.dt, &mut rng);
                if x <= a || x >= b {
                    let side = if x <= a { ExitSide::Below } else { ExitSide::Above };
                    return ExitSample { time: step as f64 * cfg.dt, position: x, side };
                }
            }
            ExitSample { time: max_steps as f64 * cfg.dt, position: x, side: ExitSide::Censored }
        })
        .collect();
    let stats = ExitStats { interval: cfg.interval, samples };
    if stats.censored_count() == cfg.n_paths {
        return Err(Error::Evaluation(format!("all {} paths hit t_max = {}", cfg.n_paths, cfg.t_max)));
    }
    Ok(stats)
}

/// Dvoretzky–Kiefer–Wolfowitz radius at confidence `1 - alpha`.
pub fn dkw_bound(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// `sup |F_n - F|` for sorted samples against a reference distribution function.
pub fn kolmogorov_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Two-sample Kolmogorov–Smirnov statistic for sorted samples.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_of_stable_variates() {
        let mut r1 = path_rng(7, 0);
        let mut r2 = path_rng(7, 0);
        let a = sample_stable_subordinator(0.75, 1.0, &mut r1);
        let b = sample_stable_subordinator(0.75, 2.0, &mut r2);
        assert!((b / a - 2f64.powf(4.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn substreams_are_distinct() {
        let x: f64 = path_rng(1, 0).random();
        let y: f64 = path_rng(1, 1).random();
        assert_ne!(x, y);
    }

    #[test]
    fn config_errors() {
        let cfg = PathConfig { dt: 1e-3, t_max: 1.0, x0: 3.0, interval: (1.0, 2.0), n_paths: 1, seed: 0 };
        assert!(cfg.validate().is_err());
        assert!(PathConfig { x0: 1.5, n_paths: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn ks_statistic() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((dkw_bound(100_000, 0.05) - 0.0042946).abs() < 1e-6);
    }
}
