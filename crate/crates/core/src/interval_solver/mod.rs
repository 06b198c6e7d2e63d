//! Lattice discretization of the killed generators on an interval and the
//! potential-theoretic quantities derived from their inverses.

pub mod calibration;
mod diagnostics;
mod generator;
mod green;
mod poisson;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diagnostics::{
    bhp_sup_ratio, exit_alive_prob, gauge_ratios, gx_band, harnack_sup_ratio, nested_sup_change,
    small_interval_lower, solve_all, three_g_sup, BhpReport, ExitBracket, ExteriorData, GaugeRatios,
    HarnackReport, LowerReport,
};
pub use generator::{build_generator, EdgeMode, GeneratorMatrix};
pub use green::{exit_time, green_matrix, GreenMatrix};
pub use poisson::{harmonic_extend, poisson_kernel, BoundaryData, PoissonTable, Region, Tail, ZGridSpec, ZNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProcessKind {
    X,
    Y,
    Z,
}

impl std::str::FromStr for ProcessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(ProcessKind::X),
            "y" => Ok(ProcessKind::Y),
            "z" => Ok(ProcessKind::Z),
            _ => Err(Error::Config(format!("unknown process kind '{s}'"))),
        }
    }
}

/// Uniform lattice on `[a, b]` with `n` cells; the unknowns sit at the
/// `n - 1` interior vertices `a + k Delta`, `k = 1..n-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a >= 0.0 && b > a && b.is_finite()) {
            return Err(Error::Config(format!("grid needs 0 <= a < b, got ({a}, {b})")));
        }
        if n < 8 {
            return Err(Error::Config(format!("grid needs n >= 8 cells, got {n}")));
        }
        Ok(Grid { a, b, n })
    }

    pub fn delta(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n - 1
    }

    pub fn is_empty(&self) -> bool {
        self.n <= 1
    }

    pub fn node(&self, i: usize) -> f64 {
        self.a + (i + 1) as f64 * self.delta()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Lattice distances to the left and right edges.
    pub fn edge_steps(&self, i: usize) -> (usize, usize) {
        (i + 1, self.n - 1 - i)
    }

    pub fn dist(&self, x: f64) -> f64 {
        (x - self.a).min(self.b - x)
    }

    /// The grid with twice as many cells; node `i` here is node `2i + 1` there.
    pub fn refined(&self) -> Grid {
        Grid { n: 2 * self.n, ..*self }
    }

    /// Linear interpolation of nodal values, with `edge` values at `a` and `b`.
    pub fn interpolate(&self, values: &[f64], x: f64, edge: (f64, f64)) -> Result<f64> {
        if !(x >= self.a && x <= self.b) {
            return Err(Error::Domain(format!("{x} outside [{}, {}]", self.a, self.b)));
        }
        let t = (x - self.a) / self.delta();
        let k = (t.floor() as usize).min(self.n - 1);
        let frac = t - k as f64;
        let at = |k: usize| -> f64 {
            if k == 0 {
                edge.0
            } else if k == self.n {
                edge.1
            } else {
                values[k - 1]
            }
        };
        Ok(at(k) * (1.0 - frac) + at(k + 1) * frac)
    }
}
