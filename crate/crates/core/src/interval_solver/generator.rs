use nalgebra::DMatrix;
use rayon::prelude::*;

use super::calibration::{self, PowerTerm};
use super::{Grid, ProcessKind};
use crate::error::{Error, Result};
use crate::kernels::KernelSet;

/// Treatment of the left edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EdgeMode {
    /// Killing across the edge, calibrated against `x^{alpha/2}`.
    Regular,
    /// Reflected process with a gap `(-a, a)` narrower than a quarter cell,
    /// treated as a single absorbing lattice point, calibrated against `x^{alpha-1}`.
    PointHole,
}

#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub kind: ProcessKind,
    pub grid: Grid,
    pub mode: EdgeMode,
    pub a: DMatrix<f64>,
    /// Exact killing rate per node.
    pub kappa_vec: Vec<f64>,
    /// Exact killing split by edge.
    pub kill_left: Vec<f64>,
    pub kill_right: Vec<f64>,
    /// Killing carried by the lattice operator, split by edge.
    pub kill_left_disc: Vec<f64>,
    pub kill_right_disc: Vec<f64>,
    /// `kappa_3 - kappa_2` per node.
    pub q_vec: Vec<f64>,
    pub(crate) terms: Vec<PowerTerm>,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    /// Total killing rate of the lattice operator, `-sum_j A[i][j]`.
    pub fn kappa_disc(&self) -> Vec<f64> {
        self.kill_left_disc.iter().zip(&self.kill_right_disc).map(|(l, r)| l + r).collect()
    }

    /// `F(x, y) = j(x + y) / j(|x - y|)`.
    pub fn f_ratio(&self, ks: &KernelSet, x: f64, y: f64) -> Result<f64> {
        Ok(ks.levy_j(x + y)? / ks.levy_j(x - y)?)
    }

    /// Jump density to the exterior point `z` from node `x`, in the law of this kind.
    pub(crate) fn exterior_kernel(&self, x: f64, z: f64) -> f64 {
        let d = calibration::power_density(&self.terms, x - z);
        match self.kind {
            ProcessKind::Z => d + calibration::power_density(&self.terms, x + z),
            _ => d,
        }
    }
}

fn edge_mode(grid: &Grid, kind: ProcessKind) -> Result<EdgeMode> {
    let delta = grid.delta();
    match kind {
        ProcessKind::X => Ok(EdgeMode::Regular),
        ProcessKind::Y | ProcessKind::Z if grid.a <= 0.0 => Err(Error::Domain(format!(
            "kind {kind:?} needs a > 0, got a = {}",
            grid.a
        ))),
        ProcessKind::Y if grid.a < delta => Err(Error::Config(format!(
            "kind Y needs a >= one cell ({delta:.3e}), got a = {:.3e}",
            grid.a
        ))),
        ProcessKind::Y => Ok(EdgeMode::Regular),
        ProcessKind::Z if grid.a < 0.25 * delta => Ok(EdgeMode::PointHole),
        ProcessKind::Z if grid.a < delta => Err(Error::Config(format!(
            "kind Z: a = {:.3e} lies between a quarter cell and one cell ({delta:.3e}); refine or coarsen the grid",
            grid.a
        ))),
        ProcessKind::Z => Ok(EdgeMode::Regular),
    }
}

pub fn build_generator(ks: &KernelSet, grid: &Grid, kind: ProcessKind) -> Result<GeneratorMatrix> {
    let mode = edge_mode(grid, kind)?;
    let terms = calibration::power_terms(&ks.phi);
    let (a, b, n) = (grid.a, grid.b, grid.len());
    let delta = grid.delta();

    // Toeplitz part: j(k Delta) Delta, with the calibrated nearest neighbour
    let mut band = vec![0.0; n + 1];
    band[1] = calibration::near_coupling(&terms, delta);
    for (k, v) in band.iter_mut().enumerate().skip(2) {
        *v = calibration::power_density(&terms, k as f64 * delta) * delta;
    }
    // Hankel part for the reflected kind: j(x_i + x_m) Delta, indexed by i + m
    let mirror: Vec<f64> = if kind == ProcessKind::Z {
        (0..2 * n)
            .map(|s| calibration::power_density(&terms, 2.0 * a + (s + 2) as f64 * delta) * delta)
            .collect()
    } else {
        Vec::new()
    };

    let exact: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64)> {
            let x = grid.node(i);
            let jb = |d: f64| ks.tail_mass(d);
            let left = match kind {
                ProcessKind::X => jb(x - a)?,
                ProcessKind::Y => jb(x - a)? - jb(x)?,
                ProcessKind::Z => jb(x - a)? - jb(x + a)?,
            };
            let right = match kind {
                ProcessKind::Z => jb(b - x)? + jb(x + b)?,
                _ => jb(b - x)?,
            };
            let q = if a > 0.0 { jb(x)? - jb(x + a)? + jb(x + b)? } else { jb(x + b)? };
            Ok((left, right, q))
        })
        .collect::<Result<_>>()?;

    let kill_left: Vec<f64> = exact.iter().map(|e| e.0).collect();
    let kill_right: Vec<f64> = exact.iter().map(|e| e.1).collect();
    let q_vec: Vec<f64> = exact.iter().map(|e| e.2.max(0.0)).collect();

    let mut kill_left_disc = Vec::with_capacity(n);
    let mut kill_right_disc = Vec::with_capacity(n);
    for i in 0..n {
        let (dl, dr) = grid.edge_steps(i);
        let left = match mode {
            EdgeMode::Regular => kill_left[i] + calibration::regular_correction(&terms, delta, dl),
            EdgeMode::PointHole => band[dl] + calibration::hole_correction(&terms, delta, dl),
        };
        kill_left_disc.push(left);
        kill_right_disc.push(kill_right[i] + calibration::regular_correction(&terms, delta, dr));
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            let mut off = 0.0;
            for (m, v) in row.iter_mut().enumerate() {
                if m == i {
                    continue;
                }
                let mut c = band[i.abs_diff(m)];
                if !mirror.is_empty() {
                    c += mirror[i + m];
                }
                *v = c;
                off += c;
            }
            row[i] = -off - kill_left_disc[i] - kill_right_disc[i];
            row
        })
        .collect();
    let mat = DMatrix::from_fn(n, n, |i, m| rows[i][m]);

    let kappa_vec = kill_left.iter().zip(&kill_right).map(|(l, r)| l + r).collect();
    Ok(GeneratorMatrix {
        kind,
        grid: *grid,
        mode,
        a: mat,
        kappa_vec,
        kill_left,
        kill_right,
        kill_left_disc,
        kill_right_disc,
        q_vec,
        terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::PhiSpec;

    fn ks() -> KernelSet {
        KernelSet::new(PhiSpec::stable(0.75).unwrap()).unwrap()
    }

    #[test]
    fn z_minus_y_is_mirror_density() {
        let ks = ks();
        let g = Grid::new(1.0, 2.0, 16).unwrap();
        let y = build_generator(&ks, &g, ProcessKind::Y).unwrap();
        let z = build_generator(&ks, &g, ProcessKind::Z).unwrap();
        for i in 0..g.len() {
            for m in 0..g.len() {
                if i.abs_diff(m) >= 2 {
                    let want = ks.levy_j(g.node(i) + g.node(m)).unwrap() * g.delta();
                    let got = z.a[(i, m)] - y.a[(i, m)];
                    assert!((got - want).abs() < 1e-8 * want, "{got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn sign_structure() {
        let ks = ks();
        let g = Grid::new(1.0, 2.0, 16).unwrap();
        for kind in [ProcessKind::X, ProcessKind::Y, ProcessKind::Z] {
            let gen = build_generator(&ks, &g, kind).unwrap();
            for i in 0..g.len() {
                let off: f64 = (0..g.len()).filter(|&m| m != i).map(|m| gen.a[(i, m)]).sum();
                assert!(gen.a[(i, i)] < 0.0);
                assert!(-gen.a[(i, i)] > off);
                assert!(gen.q_vec[i] >= 0.0);
            }
        }
    }

    #[test]
    fn edge_errors() {
        let ks = ks();
        let g0 = Grid::new(0.0, 1.0, 16).unwrap();
        assert!(matches!(build_generator(&ks, &g0, ProcessKind::Z), Err(Error::Domain(_))));
        assert!(matches!(build_generator(&ks, &g0, ProcessKind::Y), Err(Error::Domain(_))));
        assert!(build_generator(&ks, &g0, ProcessKind::X).is_ok());
        let g = Grid::new(0.001, 1.0, 16).unwrap();
        assert_eq!(build_generator(&ks, &g, ProcessKind::Z).unwrap().mode, EdgeMode::PointHole);
        let g = Grid::new(0.03, 1.0, 16).unwrap();
        assert!(matches!(build_generator(&ks, &g, ProcessKind::Z), Err(Error::Config(_))));
        assert!(Grid::new(1.0, 2.0, 4).is_err());
    }
}
