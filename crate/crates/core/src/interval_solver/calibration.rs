//! Lattice constants of the discretized generator.
//!
//! The jump density of every admissible exponent is a positive combination of
//! power laws `c |x|^{-1-alpha}`.  Near the diagonal and near the edges of the
//! interval the lattice operator is corrected term by term, using constants
//! computed once per exponent `alpha` on the unit lattice and rescaled by
//! `Delta^{-alpha}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use statrs::function::gamma::gamma;

use crate::bernstein::{stable_jump_constant, PhiSpec};
use crate::error::Result;
use crate::kernels::KernelSet;
use crate::quadrature::{self, Hint, QuadSpec};

/// Number of nodes per edge that receive a boundary correction.
pub const NCAL: usize = 32;
/// Unit-lattice truncation for the residual sums.
const NLAT: usize = 20_000;

/// One power-law term of the jump density: `weight * c * |x|^{-1-alpha}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    pub coef: f64,
    pub alpha: f64,
}

pub fn power_terms(phi: &PhiSpec) -> Vec<PowerTerm> {
    phi.terms()
        .into_iter()
        .map(|(w, d)| PowerTerm { coef: w * stable_jump_constant(d), alpha: 2.0 * d })
        .collect()
}

/// Closed-form jump density `sum coef |x|^{-1-alpha}`.
pub fn power_density(terms: &[PowerTerm], x: f64) -> f64 {
    let x = x.abs();
    terms.iter().map(|t| t.coef * x.powf(-1.0 - t.alpha)).sum()
}

/// Closed-form tail mass `sum coef d^{-alpha} / alpha`.
pub fn power_tail(terms: &[PowerTerm], d: f64) -> f64 {
    terms.iter().map(|t| t.coef * d.powf(-t.alpha) / t.alpha).sum()
}

const BERNOULLI: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Riemann zeta for real `s != 1`.
pub fn zeta(s: f64) -> f64 {
    if s < 0.0 {
        let t = 1.0 - s;
        return 2f64.powf(s) * PI.powf(s - 1.0) * (PI * s / 2.0).sin() * gamma(t) * zeta(t);
    }
    // Euler–Maclaurin with N = 16
    let n = 16.0f64;
    let mut acc: f64 = (1..16).map(|k| (k as f64).powf(-s)).sum();
    acc += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    let mut rising = s;
    let mut fact = 2.0;
    let mut npow = n.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        acc += b / fact * rising * npow;
        let k = 2.0 * (j as f64 + 1.0);
        rising *= (s + k - 1.0) * (s + k);
        fact *= (k + 1.0) * (k + 2.0);
        npow /= n * n;
    }
    acc
}

/// Nearest-neighbour coefficient of the unit lattice for `|x|^{-1-alpha}`,
/// matching the truncated second moment:
/// `lim_K int_0^{K+1/2} s^{1-alpha} ds - sum_{k=2}^K k^{1-alpha} = 1 - zeta(alpha - 1)`.
pub fn near_coefficient(alpha: f64) -> f64 {
    1.0 - zeta(alpha - 1.0)
}

/// Unit-lattice coefficient for distance `k >= 1`.
fn unit_coef(alpha: f64, k: usize) -> f64 {
    if k == 1 {
        near_coefficient(alpha)
    } else {
        (k as f64).powf(-1.0 - alpha)
    }
}

/// `sum_{k>=1} k^{-1-alpha} (1 - cos k theta)` for `0 <= theta <= pi`.
pub fn clausen_sum(alpha: f64, theta: f64) -> f64 {
    if theta == 0.0 {
        return 0.0;
    }
    let mut s = -gamma(-alpha) * (PI * alpha / 2.0).cos() * theta.powf(alpha);
    let t2 = theta * theta;
    let mut pw = 1.0;
    let mut fact = 1.0;
    for m in 1..40 {
        pw *= t2;
        fact *= (2 * m - 1) as f64 * (2 * m) as f64;
        let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
        let term = -sign * zeta(1.0 + alpha - 2.0 * m as f64) * pw / fact;
        s += term;
        if term.abs() < 1e-17 * s.abs() {
            break;
        }
    }
    s
}

/// Symbol of the infinite lattice operator with spacing `delta` at frequency `xi`.
pub fn lattice_symbol(terms: &[PowerTerm], delta: f64, xi: f64) -> f64 {
    let theta = (delta * xi).abs();
    terms
        .iter()
        .map(|t| {
            let u = near_coefficient(t.alpha);
            2.0 * t.coef
                * delta.powf(-t.alpha)
                * (clausen_sum(t.alpha, theta) + (u - 1.0) * (1.0 - theta.cos()))
        })
        .sum()
}

/// Difference between the continuum and lattice resolvent densities at the
/// origin, `u^q(0) - g_Delta(0)`.  Added to the diagonal of the lattice Green
/// matrix it removes the leading `Delta^{alpha-1}` error of the diagonal.
pub fn self_energy(ks: &KernelSet, delta: f64, q: f64) -> Result<f64> {
    let terms = power_terms(&ks.phi);
    let spec = QuadSpec::with_tol(1e-13, 1e-10);
    let top = PI / delta;
    let inner = quadrature::integrate_adaptive(
        &|xi: f64| 1.0 / (q + ks.psi(xi)) - 1.0 / (q + lattice_symbol(&terms, delta, xi)),
        0.0,
        top,
        &spec,
    )?;
    let outer = quadrature::integrate_to_infinity_scaled(
        &|xi: f64| 1.0 / (q + ks.psi(xi)),
        top,
        top,
        2.0 * ks.phi.delta_min(),
        &spec,
    )?;
    Ok((inner.value + outer.value) / PI)
}

fn tail_integral(f: impl Fn(f64) -> f64, from: f64, decay: f64) -> f64 {
    let spec = QuadSpec::with_tol(1e-16, 1e-12);
    quadrature::integrate_to_infinity_scaled(&f, from, from, decay, &spec)
        .map(|r| r.value)
        .unwrap_or(0.0)
}

/// Killing correction per node (unit lattice, unit coefficient) at an edge
/// where the process is killed on leaving the interval.  Makes the lattice
/// operator annihilate the half-line harmonic function `x^{alpha/2}`.
fn regular_table(alpha: f64) -> Vec<f64> {
    let p = alpha / 2.0;
    let v: Vec<f64> = (0..=NLAT).map(|m| (m as f64).powf(p)).collect();
    let mut out = Vec::with_capacity(NCAL);
    for d in 1..=NCAL {
        let vd = v[d];
        let mut s = 0.0;
        for m in 1..=NLAT {
            if m != d {
                s += unit_coef(alpha, m.abs_diff(d)) * (v[m] - vd);
            }
        }
        let df = d as f64;
        s += tail_integral(|y| (y.powf(p) - vd) * (y - df).powf(-1.0 - alpha), NLAT as f64 + 0.5, 1.0 + alpha - p);
        s -= df.powf(-alpha) / alpha * vd;
        out.push(s / vd);
    }
    out
}

/// Killing correction per node near a point hole at the origin for the
/// reflected process.  Makes the lattice operator annihilate `x^{alpha-1}`.
fn hole_table(alpha: f64) -> Vec<f64> {
    let p = alpha - 1.0;
    let v: Vec<f64> = (0..=NLAT).map(|m| (m as f64).powf(p)).collect();
    let mut out = Vec::with_capacity(NCAL);
    for d in 1..=NCAL {
        let vd = v[d];
        let mut s = 0.0;
        for m in 1..=NLAT {
            let mirror = ((m + d) as f64).powf(-1.0 - alpha);
            let direct = if m != d { unit_coef(alpha, m.abs_diff(d)) } else { 0.0 };
            s += (direct + mirror) * (v[m] - vd);
        }
        let df = d as f64;
        s += tail_integral(
            |y| (y.powf(p) - vd) * ((y - df).powf(-1.0 - alpha) + (y + df).powf(-1.0 - alpha)),
            NLAT as f64 + 0.5,
            1.0 + alpha - p,
        );
        s -= unit_coef(alpha, d) * vd;
        out.push(s / vd);
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum TableKind {
    Regular,
    Hole,
}

type TableCache = Mutex<HashMap<(TableKind, u64), Vec<f64>>>;

fn cache() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn table(kind: TableKind, alpha: f64) -> Vec<f64> {
    let key = (kind, alpha.to_bits());
    if let Some(t) = cache().lock().expect("calibration cache").get(&key) {
        return t.clone();
    }
    let t = match kind {
        TableKind::Regular => regular_table(alpha),
        TableKind::Hole => hole_table(alpha),
    };
    cache().lock().expect("calibration cache").insert(key, t.clone());
    t
}

/// Killing correction at lattice distance `d >= 1` from a killing edge.
pub fn regular_correction(terms: &[PowerTerm], delta: f64, d: usize) -> f64 {
    if d == 0 || d > NCAL {
        return 0.0;
    }
    terms
        .iter()
        .map(|t| t.coef * delta.powf(-t.alpha) * table(TableKind::Regular, t.alpha)[d - 1])
        .sum()
}

/// Killing correction at lattice distance `d >= 1` from a point hole.
pub fn hole_correction(terms: &[PowerTerm], delta: f64, d: usize) -> f64 {
    if d == 0 || d > NCAL {
        return 0.0;
    }
    terms
        .iter()
        .map(|t| t.coef * delta.powf(-t.alpha) * table(TableKind::Hole, t.alpha)[d - 1])
        .sum()
}

/// Nearest-neighbour coefficient at spacing `delta`.
pub fn near_coupling(terms: &[PowerTerm], delta: f64) -> f64 {
    terms.iter().map(|t| t.coef * delta.powf(-t.alpha) * near_coefficient(t.alpha)).sum()
}

/// Endpoint hint helpers shared with the Poisson module.
pub fn jump_hint(phi: &PhiSpec) -> Hint {
    Hint::power(-1.0 - 2.0 * phi.delta_max(), 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(0.5) + 1.4603545088095868).abs() < 1e-13);
        assert!((zeta(-1.0) + 1.0 / 12.0).abs() < 1e-14);
        assert!((zeta(-2.0)).abs() < 1e-14);
        assert!((zeta(3.0) - 1.2020569031595942).abs() < 1e-14);
    }

    #[test]
    fn near_coefficient_matches_partial_sums() {
        // direct partial sums with two Euler–Maclaurin terms for the remainder
        for alpha in [1.2, 1.5, 1.8] {
            let k = 200_000usize;
            let s: f64 = (2..=k).map(|i| (i as f64).powf(1.0 - alpha)).sum();
            let l = k as f64 + 0.5;
            let direct = l.powf(2.0 - alpha) / (2.0 - alpha) - s;
            assert!((direct - near_coefficient(alpha)).abs() < 1e-6, "alpha {alpha}");
        }
    }

    #[test]
    fn clausen_matches_direct_sum() {
        for alpha in [1.2, 1.5, 1.8] {
            for theta in [0.01, 0.3, 1.0, 2.5, PI] {
                let k = 400_000usize;
                let mut s = 0.0;
                for i in 1..=k {
                    let kf = i as f64;
                    s += kf.powf(-1.0 - alpha) * (1.0 - (kf * theta).cos());
                }
                // remainder with cos averaged out
                s += (k as f64 + 0.5).powf(-alpha) / alpha;
                let c = clausen_sum(alpha, theta);
                assert!((s - c).abs() < 1e-7 * c.max(1e-3), "alpha {alpha} theta {theta}: {s} vs {c}");
            }
        }
    }

    #[test]
    fn regular_table_decays() {
        // prototype values carry the stable jump constant of delta = 0.75
        let c = stable_jump_constant(0.75);
        let t = table(TableKind::Regular, 1.5);
        assert!((t[0] * c - 0.54414).abs() < 2e-4, "{}", t[0] * c);
        assert!((t[9] * c - 4.68e-4).abs() < 2e-5, "{}", t[9] * c);
        assert!(t[NCAL - 1].abs() < t[9].abs() / 10.0);
        let h = table(TableKind::Hole, 1.5);
        assert!((h[0] * c + 0.25627).abs() < 2e-4, "{}", h[0] * c);
    }
}
