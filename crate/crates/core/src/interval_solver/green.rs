use nalgebra::DMatrix;

use super::calibration;
use super::generator::GeneratorMatrix;
use super::{Grid, ProcessKind};
use crate::error::{Error, Result};
use crate::kernels::KernelSet;

#[derive(Debug, Clone)]
pub struct GreenMatrix {
    pub kind: ProcessKind,
    pub grid: Grid,
    /// Green density at node pairs, diagonal carrying the self-energy term.
    pub g: DMatrix<f64>,
    /// `(-A)^{-1}`, the occupation matrix of the lattice chain.
    pub occupation: DMatrix<f64>,
    pub asymmetry: f64,
    pub self_energy: f64,
}

impl GreenMatrix {
    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.g[(i, j)]
    }

    /// Bilinear interpolation at interior points; zero on the edges.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let (ix, fx) = self.cell(x)?;
        let (iy, fy) = self.cell(y)?;
        let n = self.grid.n;
        let at = |k: usize, l: usize| -> f64 {
            if k == 0 || l == 0 || k == n || l == n {
                0.0
            } else {
                self.g[(k - 1, l - 1)]
            }
        };
        Ok((1.0 - fx) * ((1.0 - fy) * at(ix, iy) + fy * at(ix, iy + 1))
            + fx * ((1.0 - fy) * at(ix + 1, iy) + fy * at(ix + 1, iy + 1)))
    }

    fn cell(&self, x: f64) -> Result<(usize, f64)> {
        let g = &self.grid;
        if !(x >= g.a && x <= g.b) {
            return Err(Error::Domain(format!("{x} outside [{}, {}]", g.a, g.b)));
        }
        let t = (x - g.a) / g.delta();
        let k = (t.floor() as usize).min(g.n - 1);
        Ok((k, t - k as f64))
    }
}

pub fn green_matrix(ks: &KernelSet, gen: &GeneratorMatrix) -> Result<GreenMatrix> {
    let n = gen.dim();
    let delta = gen.grid.delta();
    let neg = -gen.a.clone();
    let chol = neg
        .cholesky()
        .ok_or_else(|| Error::Solver("generator is not negative definite".into()))?;
    let mut occ = chol.inverse();
    let mut asym = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(occ[(i, j)].abs());
            asym = asym.max((occ[(i, j)] - occ[(j, i)]).abs());
        }
    }
    let asymmetry = if scale > 0.0 { asym / scale } else { 0.0 };
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (occ[(i, j)] + occ[(j, i)]);
            occ[(i, j)] = m;
            occ[(j, i)] = m;
        }
    }
    let q = ks.psi(std::f64::consts::PI / (gen.grid.b - gen.grid.a));
    let gamma0 = calibration::self_energy(ks, delta, q)?;
    let mut g = &occ / delta;
    for i in 0..n {
        g[(i, i)] += gamma0;
    }
    if g.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Solver("Green matrix has nonpositive entries".into()));
    }
    Ok(GreenMatrix { kind: gen.kind, grid: gen.grid, g, occupation: occ, asymmetry, self_energy: gamma0 })
}

/// Expected exit time from every node, `sum_j G[i][j] Delta`.
pub fn exit_time(green: &GreenMatrix) -> Vec<f64> {
    let delta = green.grid.delta();
    (0..green.dim())
        .map(|i| green.g.row(i).iter().sum::<f64>() * delta)
        .collect()
}
