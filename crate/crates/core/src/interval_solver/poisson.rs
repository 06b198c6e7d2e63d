use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::generator::{EdgeMode, GeneratorMatrix};
use super::green::GreenMatrix;
use super::{Grid, ProcessKind};
use crate::error::{Error, Result};
use crate::kernels::KernelSet;
use super::calibration::{power_density, power_tail, PowerTerm};
use crate::quadrature::{gauss_legendre, integrate_adaptive, integrate_hinted, Hint, QuadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Region {
    Left,
    Right,
    /// Mass point standing for the gap `(0, a)` in point-hole mode.
    Atom,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ZNode {
    pub z: f64,
    pub w: f64,
    pub region: Region,
    /// Cell `(edge, edge + w)` whose exit mass is computed exactly.
    pub layer: bool,
}

/// Exterior quadrature layout: geometric cells graded away from each edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ZGridSpec {
    /// Cell ratio `1 + c`. Defaults to `2 / sqrt(n)`.
    pub c: Option<f64>,
    /// Layer cell width in units of `b - a`; cells grow from there.
    pub layer: f64,
    /// Cutoff distance from the interval in units of `b - a`.
    pub reach: f64,
    pub points: usize,
    /// Extra evaluation points with zero weight.
    pub extra: Vec<f64>,
}

impl Default for ZGridSpec {
    fn default() -> Self {
        ZGridSpec { c: None, layer: 1e-10, reach: 50.0, points: 3, extra: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tail {
    Zero,
    Constant(f64),
    /// `coef |z|^exponent` beyond the cutoff.
    Power { coef: f64, exponent: f64 },
}

/// Nonnegative exterior data with its behaviour beyond the cutoff.
#[derive(Clone)]
pub struct BoundaryData {
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub tail: Tail,
}

impl std::fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundaryData").field("tail", &self.tail).finish()
    }
}

impl BoundaryData {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, tail: Tail) -> Self {
        BoundaryData { f: Arc::new(f), tail }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, Tail::Constant(c))
    }

    pub fn indicator_above(r: f64) -> Self {
        Self::new(move |z| if z >= r { 1.0 } else { 0.0 }, Tail::Constant(1.0))
    }
}

#[derive(Debug, Clone)]
pub struct PoissonTable {
    pub kind: ProcessKind,
    pub grid: Grid,
    pub zgrid: Vec<ZNode>,
    /// Exit density at `zgrid` nodes (exit mass for the atom).
    pub k: DMatrix<f64>,
    pub tail_left: Vec<f64>,
    pub tail_right: Vec<f64>,
    pub cutoffs: (f64, f64),
    /// Row masses before normalization.
    pub raw_mass: Vec<f64>,
    /// Width of the layer cell sitting on each edge.
    pub layer: f64,
    alpha_min: f64,
    alpha_max: f64,
    /// Occupation profile `dist^profile` used inside edge cells.
    profile: f64,
    occupation: DMatrix<f64>,
    gen: GeneratorMatrix,
}

/// Nodes this close to an edge (in lattice steps) get cell-averaged kernels.
const NEAR_STEPS: usize = 6;

fn geometric_nodes(edge: f64, dir: f64, reach: f64, start: f64, c: f64, gl: &(Vec<f64>, Vec<f64>), region: Region) -> Vec<ZNode> {
    let mut out = vec![ZNode { z: edge + dir * 0.5 * start, w: start, region, layer: true }];
    let mut lo = start;
    while lo < reach {
        let hi = (lo * (1.0 + c)).min(reach);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (t, wt) in gl.0.iter().zip(&gl.1) {
            out.push(ZNode { z: edge + dir * (mid + half * t), w: half * wt, region, layer: false });
        }
        lo = hi;
    }
    out
}

/// `T(d) - T(d + h)` for the closed-form tail without cancellation.
fn tail_diff(terms: &[PowerTerm], d: f64, h: f64) -> f64 {
    terms
        .iter()
        .map(|t| -t.coef * d.powf(-t.alpha) / t.alpha * (-t.alpha * (h / d).ln_1p()).exp_m1())
        .sum()
}

fn cell_span(steps: usize, delta: f64) -> (f64, f64) {
    let s = steps as f64;
    if steps == 1 {
        (0.0, 1.5 * delta)
    } else {
        ((s - 0.5) * delta, (s + 0.5) * delta)
    }
}

impl PoissonTable {
    /// Edge position, outward direction and lattice steps for nodes near the
    /// edge that feeds `region`.
    fn near_edge(&self, j: usize, region: Region) -> Option<(f64, f64, usize)> {
        let (dl, dr) = self.grid.edge_steps(j);
        match region {
            Region::Right if dr <= NEAR_STEPS => Some((self.grid.b, 1.0, dr)),
            Region::Left if dl <= NEAR_STEPS => Some((self.grid.a, -1.0, dl)),
            _ => None,
        }
    }

    /// Exit mass into `region` from the point at distance `t` inside its edge.
    fn exit_mass(&self, region: Region, t: f64) -> f64 {
        let pt = &self.gen.terms;
        let (a, b) = (self.grid.a, self.grid.b);
        match (region, self.kind) {
            (Region::Right, ProcessKind::Z) => power_tail(pt, t) + power_tail(pt, 2.0 * b - t),
            (Region::Right, _) => power_tail(pt, t),
            (_, ProcessKind::X) => power_tail(pt, t),
            (_, ProcessKind::Y) => power_tail(pt, t) - power_tail(pt, a + t),
            (_, ProcessKind::Z) => power_tail(pt, t) - power_tail(pt, 2.0 * a + t),
        }
    }

    /// Exit mass from distance `t` into the layer cell of `region`.
    fn layer_mass(&self, region: Region, t: f64) -> f64 {
        let pt = &self.gen.terms;
        let (a, b, h) = (self.grid.a, self.grid.b, self.layer);
        match (region, self.kind) {
            (Region::Right, ProcessKind::Z) => tail_diff(pt, t, h) + tail_diff(pt, 2.0 * b - t, h),
            (Region::Right, _) => tail_diff(pt, t, h),
            (_, ProcessKind::Z) => tail_diff(pt, t, h) + tail_diff(pt, 2.0 * a + t - h, h),
            _ => tail_diff(pt, t, h),
        }
    }

    /// Exterior density from distance `t` inside the edge to distance `s` outside.
    fn kernel_across(&self, region: Region, t: f64, s: f64) -> f64 {
        let pt = &self.gen.terms;
        let d = power_density(pt, s + t);
        if self.kind != ProcessKind::Z {
            return d;
        }
        let (a, b) = (self.grid.a, self.grid.b);
        d + match region {
            Region::Right => power_density(pt, 2.0 * b + s - t),
            _ => power_density(pt, 2.0 * a + t - s),
        }
    }

    /// Occupation of a node cell is `Delta G(x_j)`, spread as `(t / t_j)^profile`.
    fn cell_weight(&self, steps: usize) -> f64 {
        let d = self.grid.delta();
        d * (steps as f64 * d).powf(self.profile)
    }

    /// Profile-weighted integral of `f(t)` over a cell, `t` the distance to the edge;
    /// `f` may blow up like `t^{-alpha}` at `t = 0`.
    fn average_singular(&self, steps: usize, f: impl Fn(f64) -> f64) -> Result<f64> {
        let (lo, hi) = cell_span(steps, self.grid.delta());
        let p = self.profile;
        let g = |t: f64| if t > 0.0 { t.powf(p) * f(t) } else { 0.0 };
        let hint = if lo == 0.0 { Hint::power(p - self.alpha_max, 0.0) } else { Hint::none() };
        let r = integrate_hinted(&g, lo, hi, hint, &QuadSpec::with_tol(0.0, 1e-11))?;
        Ok(r.value / self.cell_weight(steps))
    }

    /// Same for a kernel peaked at `t = -s`, through `t = s (e^u - 1)`.
    fn average_peaked(&self, steps: usize, s: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
        let (lo, hi) = cell_span(steps, self.grid.delta());
        let p = self.profile;
        let g = |u: f64| {
            let t = s * u.exp_m1();
            t.powf(p) * f(t) * s * u.exp()
        };
        let r = integrate_adaptive(&g, (lo / s).ln_1p(), (hi / s).ln_1p(), &QuadSpec::with_tol(0.0, 1e-11))?;
        Ok(r.value / self.cell_weight(steps))
    }

    /// Exterior kernel column for one zgrid node, one entry per lattice cell.
    fn column(&self, zn: &ZNode) -> Result<DVector<f64>> {
        let gen = &self.gen;
        let mut out = DVector::zeros(gen.dim());
        for j in 0..gen.dim() {
            let x = gen.grid.node(j);
            if zn.region == Region::Atom {
                out[j] = gen.kill_left_disc[j];
                continue;
            }
            let value = match self.near_edge(j, zn.region) {
                Some((edge, dir, steps)) => {
                    if zn.layer {
                        self.average_singular(steps, |t| self.layer_mass(zn.region, t))? / zn.w
                    } else {
                        let s = dir * (zn.z - edge);
                        self.average_peaked(steps, s, |t| self.kernel_across(zn.region, t, s))?
                    }
                }
                None if zn.layer => {
                    let t = match zn.region {
                        Region::Right => self.grid.b - x,
                        _ => x - self.grid.a,
                    };
                    self.layer_mass(zn.region, t) / zn.w
                }
                None => gen.exterior_kernel(x, zn.z),
            };
            out[j] = value;
        }
        Ok(out)
    }

    fn region_of(&self, z: f64) -> Result<Region> {
        let g = &self.grid;
        if z > g.b {
            return Ok(Region::Right);
        }
        if z < g.a {
            return match (self.kind, self.gen.mode) {
                (ProcessKind::X, _) => Ok(Region::Left),
                (_, EdgeMode::PointHole) => Err(Error::Domain("no exit density inside the point hole".into())),
                _ if z > 0.0 => Ok(Region::Left),
                _ => Err(Error::Domain(format!("{z} is outside the state space"))),
            };
        }
        Err(Error::Config(format!("exterior point {z} overlaps [{}, {}]", g.a, g.b)))
    }

    /// Exit density at an arbitrary exterior point, one value per node.
    pub fn density_at(&self, z: f64) -> Result<Vec<f64>> {
        let region = self.region_of(z)?;
        let col = self.column(&ZNode { z, w: 0.0, region, layer: false })?;
        Ok((&self.occupation * col).iter().zip(&self.raw_mass).map(|(k, m)| k / m).collect())
    }

    /// Total exit mass per node, atom and tails included.
    pub fn row_mass(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| {
                let body: f64 = self.zgrid.iter().enumerate().map(|(m, zn)| self.k[(i, m)] * zn.w).sum();
                body + self.tail_left[i] + self.tail_right[i]
            })
            .collect()
    }

    /// Exit mass into a set, by quadrature over the zgrid and the tails.
    pub fn mass_where(&self, pred: impl Fn(f64) -> bool, tails: (bool, bool)) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| {
                let body: f64 = self
                    .zgrid
                    .iter()
                    .enumerate()
                    .filter(|(_, zn)| pred(zn.z))
                    .map(|(m, zn)| self.k[(i, m)] * zn.w)
                    .sum();
                body + if tails.0 { self.tail_left[i] } else { 0.0 } + if tails.1 { self.tail_right[i] } else { 0.0 }
            })
            .collect()
    }

    /// Exit-position distribution function from node `i` at the points `zs`.
    pub fn cdf(&self, i: usize, zs: &[f64]) -> Vec<f64> {
        zs.iter()
            .map(|&z| {
                let body: f64 = self
                    .zgrid
                    .iter()
                    .enumerate()
                    .filter(|(_, zn)| zn.z <= z)
                    .map(|(m, zn)| self.k[(i, m)] * zn.w)
                    .sum();
                let left = if z >= self.cutoffs.0 { self.tail_left[i] } else { 0.0 };
                let right = if z >= self.cutoffs.1 { self.tail_right[i] } else { 0.0 };
                body + left + right
            })
            .collect()
    }
}

/// Exit law `K = occ E` from the lattice occupation and the cell-integrated
/// jump kernel. Cells next to an edge carry the boundary profile
/// `dist^{alpha/2}`; each row is then normalized to unit mass, the raw mass
/// being kept in `raw_mass`.
pub fn poisson_kernel(ks: &KernelSet, gen: &GeneratorMatrix, green: &GreenMatrix, spec: &ZGridSpec) -> Result<PoissonTable> {
    if gen.kind != green.kind || gen.grid != green.grid {
        return Err(Error::Config("generator and Green matrix disagree".into()));
    }
    if !(spec.reach > 0.0) || spec.points == 0 || spec.points > 10 {
        return Err(Error::Config("zgrid spec needs reach > 0 and 1..=10 points".into()));
    }
    let grid = gen.grid;
    let n = grid.len();
    let (a, b) = (grid.a, grid.b);
    let delta = grid.delta();
    let c = spec.c.unwrap_or(2.0 / (grid.n as f64).sqrt());
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Config(format!("zgrid growth {c} outside (0, 1]")));
    }
    let gl = gauss_legendre(spec.points);
    let reach = spec.reach * (b - a);
    let s0 = spec.layer * (b - a);
    if !(s0 > 0.0 && s0 < 0.01 * delta) {
        return Err(Error::Config(format!("layer width {s0} must lie in (0, Delta / 100)")));
    }

    let mut zgrid = Vec::new();
    let zl = match (gen.kind, gen.mode) {
        (ProcessKind::X, _) => {
            zgrid.extend(geometric_nodes(a, -1.0, reach, s0, c, &gl, Region::Left));
            a - reach
        }
        (_, EdgeMode::PointHole) => {
            zgrid.push(ZNode { z: 0.5 * a, w: 1.0, region: Region::Atom, layer: false });
            0.0
        }
        _ => {
            zgrid.extend(geometric_nodes(a, -1.0, a, s0, c, &gl, Region::Left));
            0.0
        }
    };
    zgrid.extend(geometric_nodes(b, 1.0, reach, s0, c, &gl, Region::Right));
    let zr = b + reach;

    let mut table = PoissonTable {
        kind: gen.kind,
        grid,
        zgrid: Vec::new(),
        k: DMatrix::zeros(0, 0),
        tail_left: Vec::new(),
        tail_right: Vec::new(),
        cutoffs: (zl, zr),
        layer: s0,
        alpha_min: 2.0 * ks.phi.delta_min(),
        alpha_max: 2.0 * ks.phi.delta_max(),
        profile: ks.phi.delta_max(),
        raw_mass: Vec::new(),
        occupation: green.occupation.clone(),
        gen: gen.clone(),
    };
    // exit mass carried by each cell
    let mut cell_mass = DVector::zeros(n);
    for j in 0..n {
        let mut m = if gen.mode == EdgeMode::PointHole { gen.kill_left_disc[j] } else { gen.kill_left[j] };
        m += gen.kill_right[j];
        for region in [Region::Left, Region::Right] {
            if region == Region::Left && gen.mode == EdgeMode::PointHole {
                continue;
            }
            if let Some((_, _, steps)) = table.near_edge(j, region) {
                m += table.average_singular(steps, |t| table.exit_mass(region, t))?;
                m -= if region == Region::Left { gen.kill_left[j] } else { gen.kill_right[j] };
            }
        }
        cell_mass[j] = m;
    }
    for &z in &spec.extra {
        let region = table.region_of(z)?;
        zgrid.push(ZNode { z, w: 0.0, region, layer: false });
    }

    let cols = zgrid.par_iter().map(|zn| table.column(zn)).collect::<Result<Vec<_>>>()?;
    let e = DMatrix::from_columns(&cols);
    table.k = &table.occupation * e;

    let mut tl = DVector::zeros(n);
    let mut tr = DVector::zeros(n);
    for j in 0..n {
        let x = grid.node(j);
        if gen.kind == ProcessKind::X {
            tl[j] = ks.tail_mass(x - zl)?;
        }
        let mut r = ks.tail_mass(zr - x)?;
        if gen.kind == ProcessKind::Z {
            r += ks.tail_mass(zr + x)?;
        }
        tr[j] = r;
    }
    let raw = &table.occupation * cell_mass;
    if raw.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::Solver("nonpositive exit mass".into()));
    }
    for i in 0..n {
        table.k.row_mut(i).scale_mut(1.0 / raw[i]);
    }
    let tl = &table.occupation * tl;
    let tr = &table.occupation * tr;
    table.tail_left = (0..n).map(|i| tl[i] / raw[i]).collect();
    table.tail_right = (0..n).map(|i| tr[i] / raw[i]).collect();
    table.raw_mass = raw.iter().copied().collect();
    table.zgrid = zgrid;
    Ok(table)
}

/// `u(x_i) = sum_m K[i][m] f(z_m) w_m` plus the tail contribution.
pub fn harmonic_extend(pt: &PoissonTable, data: &BoundaryData) -> Result<Vec<f64>> {
    let vals: Vec<f64> = pt.zgrid.iter().map(|zn| (data.f)(zn.z)).collect();
    if let Some((m, v)) = vals.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("boundary data {v} at z = {} is not nonnegative", pt.zgrid[m].z)));
    }
    let tail_factor = |cut: f64| -> Result<f64> {
        match data.tail {
            Tail::Zero => Ok(0.0),
            Tail::Constant(c) if c >= 0.0 => Ok(c),
            Tail::Power { coef, exponent } if coef >= 0.0 => {
                if exponent >= pt.alpha_min {
                    return Err(Error::Domain(format!(
                        "tail exponent {exponent} is not integrable against the jump density"
                    )));
                }
                // z^p against the leading power law z^{-1-alpha}
                Ok(coef * cut.abs().powf(exponent) * pt.alpha_min / (pt.alpha_min - exponent))
            }
            _ => Err(Error::Domain("negative tail data".into())),
        }
    };
    let tr = tail_factor(pt.cutoffs.1)?;
    let tl = if pt.kind == ProcessKind::X { tail_factor(pt.cutoffs.0)? } else { 0.0 };
    Ok((0..pt.grid.len())
        .map(|i| {
            let body: f64 = pt.zgrid.iter().zip(&vals).enumerate().map(|(m, (zn, v))| pt.k[(i, m)] * zn.w * v).sum();
            body + tl * pt.tail_left[i] + tr * pt.tail_right[i]
        })
        .collect())
}
