use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::build_generator;
use super::green::{green_matrix, GreenMatrix};
use super::poisson::{harmonic_extend, poisson_kernel, BoundaryData, PoissonTable, ZGridSpec};
use super::{Grid, ProcessKind};
use crate::error::{Error, Result};
use crate::kernels::KernelSet;

/// Builds generator, Green matrix and Poisson table for `kind` on `grid`.
pub fn solve_all(ks: &KernelSet, grid: &Grid, kind: ProcessKind, zspec: &ZGridSpec) -> Result<(GreenMatrix, PoissonTable)> {
    let gen = build_generator(ks, grid, kind)?;
    let green = green_matrix(ks, &gen)?;
    let pt = poisson_kernel(ks, &gen, &green, zspec)?;
    Ok((green, pt))
}

/// Sup of `|G_fine / G_coarse - 1|` over coarse node pairs, where coarse
/// node `i` coincides with fine node `2i + 1`.
pub fn nested_sup_change(coarse: &GreenMatrix, fine: &GreenMatrix) -> Result<f64> {
    if fine.grid != coarse.grid.refined() || fine.kind != coarse.kind {
        return Err(Error::Config("fine grid must be the refinement of the coarse grid".into()));
    }
    let n = coarse.dim();
    let mut sup = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            sup = sup.max((fine.g[(2 * i + 1, 2 * j + 1)] / coarse.g[(i, j)] - 1.0).abs());
        }
    }
    Ok(sup)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExitBracket {
    pub x: f64,
    pub r: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
    /// `(a, lower, upper)` per step of the sequence.
    pub steps: Vec<(f64, f64, f64)>,
    pub shrinking: bool,
}

/// Probability that the reflected process started at each `x` leaves `(0, R)`
/// by a jump beyond `R`, bracketed along a decreasing sequence of gaps `a`.
pub fn exit_alive_prob(ks: &KernelSet, r: f64, xs: &[f64], a_seq: &[f64], n: usize) -> Result<Vec<ExitBracket>> {
    if a_seq.is_empty() {
        return Err(Error::Config("empty a sequence".into()));
    }
    if a_seq.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("a sequence must be decreasing".into()));
    }
    for &x in xs {
        if !(x > a_seq[0] && x < r) {
            return Err(Error::Domain(format!("x = {x} must lie in (a, R)")));
        }
    }
    let hr = ks.h(r)?;
    let mut steps: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); xs.len()];
    for &a in a_seq {
        let grid = Grid::new(a, r, n)?;
        let (_, pt) = solve_all(ks, &grid, ProcessKind::Z, &ZGridSpec::default())?;
        let above = pt.mass_where(|z| z >= r, (false, true));
        let ratio = ks.h(a)? / hr;
        for (k, &x) in xs.iter().enumerate() {
            let p = grid.interpolate(&above, x, (0.0, 1.0))?.clamp(0.0, 1.0);
            steps[k].push((a, p, p + (1.0 - p) * ratio));
        }
    }
    Ok(xs
        .iter()
        .zip(steps)
        .map(|(&x, st)| {
            let &(_, lower, upper) = st.last().expect("nonempty");
            let widths: Vec<f64> = st.iter().map(|s| s.2 - s.1).collect();
            let shrinking = widths.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
            ExitBracket { x, r, value: 0.5 * (lower + upper), lower, upper, width: upper - lower, steps: st, shrinking }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaugeRatios {
    pub yx: (f64, f64),
    pub zy: (f64, f64),
    pub zx: (f64, f64),
}

fn ratio_range(num: &GreenMatrix, den: &GreenMatrix) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (p, q) in num.g.iter().zip(den.g.iter()) {
        let r = p / q;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

/// Entrywise `(inf, sup)` of the Green ratios.
pub fn gauge_ratios(gx: &GreenMatrix, gy: &GreenMatrix, gz: &GreenMatrix) -> Result<GaugeRatios> {
    if gx.grid != gy.grid || gy.grid != gz.grid {
        return Err(Error::Config("gauge ratios need a common grid".into()));
    }
    Ok(GaugeRatios { yx: ratio_range(gy, gx), zy: ratio_range(gz, gy), zx: ratio_range(gz, gx) })
}

/// `sup_{x,y,z} G(x,y) G(y,z) / G(x,z) * d(y)^2 / Phi(d(y))`.
pub fn three_g_sup(g: &GreenMatrix, ks: &KernelSet) -> Result<f64> {
    if g.kind != ProcessKind::X {
        return Err(Error::Config("3G sup is defined for kind X".into()));
    }
    let n = g.dim();
    let weight: Vec<f64> = (0..n)
        .map(|k| {
            let d = g.grid.dist(g.grid.node(k));
            ks.phi_cap(d).map(|p| d * d / p)
        })
        .collect::<Result<_>>()?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut sup = 0.0f64;
            for j in 0..n {
                let gij = g.g[(i, j)] * weight[j];
                for k in 0..n {
                    sup = sup.max(gij * g.g[(j, k)] / g.g[(i, k)]);
                }
            }
            sup
        })
        .reduce(|| 0.0, f64::max))
}

/// `(min, max)` of `G / gx_estimate` over node pairs.
pub fn gx_band(g: &GreenMatrix, ks: &KernelSet) -> Result<(f64, f64)> {
    let (a, b) = (g.grid.a, g.grid.b);
    let n = g.dim();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for j in 0..n {
                let r = g.g[(i, j)] / ks.gx_estimate(a, b, g.grid.node(i), g.grid.node(j))?;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            Ok((lo, hi))
        })
        .collect::<Result<_>>()?;
    Ok(rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, r| (acc.0.min(r.0), acc.1.max(r.1))))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarnackReport {
    pub r: f64,
    pub a_frac: f64,
    pub n: usize,
    pub interval: (f64, f64),
    pub c6: f64,
}

/// Sup over exterior nodes `z` and interior pairs of `K(x1, z) / K(x2, z)`.
pub fn harnack_sup_ratio(ks: &KernelSet, r: f64, a_frac: f64, n: usize) -> Result<HarnackReport> {
    if !(r > 0.0) || !(a_frac > 0.0 && a_frac < 1.0) {
        return Err(Error::Config(format!("harnack needs r > 0 and a_frac in (0, 1), got {r}, {a_frac}")));
    }
    let b1 = 0.5 * a_frac * r;
    let b4 = (3.0 - 0.5 * a_frac) * r;
    if b1 >= b4 {
        return Err(Error::Config("degenerate harnack geometry".into()));
    }
    let grid = Grid::new(b1, b4, n)?;
    let (_, pt) = solve_all(ks, &grid, ProcessKind::Z, &ZGridSpec::default())?;
    let (lo, hi) = (a_frac * r, (3.0 - a_frac) * r);
    let inner: Vec<usize> = (0..grid.len()).filter(|&i| grid.node(i) > lo && grid.node(i) < hi).collect();
    if inner.is_empty() {
        return Err(Error::Config("no interior nodes in the Harnack window".into()));
    }
    let mut c6 = 1.0f64;
    for m in 0..pt.zgrid.len() {
        let mut kmin = f64::INFINITY;
        let mut kmax = 0.0f64;
        for &i in &inner {
            kmin = kmin.min(pt.k[(i, m)]);
            kmax = kmax.max(pt.k[(i, m)]);
        }
        if kmin > 0.0 {
            c6 = c6.max(kmax / kmin);
        } else if kmax > 0.0 {
            return Err(Error::Solver("Poisson kernel vanishes inside the Harnack window".into()));
        }
    }
    Ok(HarnackReport { r, a_frac, n, interval: (b1, b4), c6 })
}

/// Exterior data for the boundary Harnack probe.
#[derive(Debug, Clone)]
pub enum ExteriorData {
    Density(BoundaryData),
    PointMass(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BhpReport {
    pub r: f64,
    pub lambda1: f64,
    pub a: f64,
    pub n: usize,
    pub per_data: Vec<f64>,
    pub c7: f64,
}

/// Sup over data and node pairs in `(0, lambda1 r)` of `u(x) h(y) / (u(y) h(x))`,
/// with `u` the harmonic extension on `(a, 3r)`.
pub fn bhp_sup_ratio(ks: &KernelSet, r: f64, lambda1: f64, fset: &[ExteriorData], a: f64, n: usize) -> Result<BhpReport> {
    if !(lambda1 > 0.0 && lambda1 < 0.5) {
        return Err(Error::Config(format!("lambda1 {lambda1} outside (0, 1/2)")));
    }
    if fset.is_empty() {
        return Err(Error::Config("empty data set".into()));
    }
    let top = 3.0 * r;
    let grid = Grid::new(a, top, n)?;
    let mut zspec = ZGridSpec::default();
    for f in fset {
        if let ExteriorData::PointMass(z) = f {
            if *z < top {
                return Err(Error::Domain(format!("point mass at {z} lies inside (0, 3r)")));
            }
            zspec.extra.push(*z);
        }
    }
    let (_, pt) = solve_all(ks, &grid, ProcessKind::Z, &zspec)?;
    let nodes: Vec<usize> = (0..grid.len()).filter(|&i| grid.node(i) < lambda1 * r).collect();
    if nodes.is_empty() {
        return Err(Error::Config("no nodes in (0, lambda1 r)".into()));
    }
    let hs: Vec<f64> = nodes.iter().map(|&i| ks.h(grid.node(i))).collect::<Result<_>>()?;
    let mut per_data = Vec::with_capacity(fset.len());
    for f in fset {
        let u = match f {
            ExteriorData::Density(d) => {
                if let Some(zn) = pt.zgrid.iter().find(|zn| zn.z < top && (d.f)(zn.z) != 0.0) {
                    return Err(Error::Domain(format!("boundary data is nonzero at {} inside (0, 3r)", zn.z)));
                }
                harmonic_extend(&pt, d)?
            }
            ExteriorData::PointMass(z) => {
                let m = pt.zgrid.iter().position(|zn| zn.w == 0.0 && zn.z == *z).expect("extra node");
                (0..grid.len()).map(|i| pt.k[(i, m)]).collect()
            }
        };
        let q: Vec<f64> = nodes.iter().zip(&hs).map(|(&i, h)| u[i] / h).collect();
        let lo = q.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = q.iter().cloned().fold(0.0, f64::max);
        if !(lo > 0.0) {
            return Err(Error::Solver("harmonic extension vanishes near the origin".into()));
        }
        per_data.push(hi / lo);
    }
    let c7 = per_data.iter().cloned().fold(1.0, f64::max);
    Ok(BhpReport { r, lambda1, a, n, per_data, c7 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerReport {
    pub r: f64,
    pub lambda1: f64,
    pub a: f64,
    pub n: usize,
    /// `min G(x, y) / h(R)` over node pairs in `(a, lambda1 R)`.
    pub lambda2: f64,
    /// `min G(x, y) / h(min(x, y))` over the same pairs.
    pub lambda2_local: f64,
}

pub fn small_interval_lower(ks: &KernelSet, r: f64, lambda1: f64, a: f64, n: usize) -> Result<LowerReport> {
    if !(lambda1 > 0.0 && lambda1 < 0.5) {
        return Err(Error::Config(format!("lambda1 {lambda1} outside (0, 1/2)")));
    }
    if !(a > 0.0 && a < 0.25 * lambda1 * r) {
        return Err(Error::Config(format!("a = {a} must lie in (0, lambda1 R / 4)")));
    }
    let grid = Grid::new(a, r, n)?;
    let gen = build_generator(ks, &grid, ProcessKind::Z)?;
    let g = green_matrix(ks, &gen)?;
    let nodes: Vec<usize> = (0..grid.len()).filter(|&i| grid.node(i) < lambda1 * r).collect();
    if nodes.is_empty() {
        return Err(Error::Config("no nodes in (a, lambda1 R)".into()));
    }
    let hr = ks.h(r)?;
    let mut lam = f64::INFINITY;
    let mut local = f64::INFINITY;
    for &i in &nodes {
        let hi = ks.h(grid.node(i))?;
        for &j in &nodes {
            let v = g.g[(i, j)];
            lam = lam.min(v / hr);
            if j >= i {
                local = local.min(v / hi);
            }
        }
    }
    Ok(LowerReport { r, lambda1, a, n, lambda2: lam, lambda2_local: local })
}
