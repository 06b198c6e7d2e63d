//! Analytic kernels built on a Laplace exponent: characteristic exponent,
//! jump density, resolvent densities, the compensated kernel `h` and the free
//! Green functions derived from it.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use parking_lot::RwLock;
use statrs::function::erf::erfc;

use crate::bernstein::PhiSpec;
use crate::error::{Error, Result};
use crate::quadrature::{self, CosMode, Hint, OscShape, QuadSpec};

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Tag {
    J,
    Tail,
    H,
}

#[derive(Default)]
struct Memo {
    map: RwLock<HashMap<(Tag, u64), f64>>,
}

/// Round to 12 significant digits and use the bit pattern as key.
fn memo_key(x: f64) -> u64 {
    if x == 0.0 || !x.is_finite() {
        return x.to_bits();
    }
    let e = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(11 - e);
    ((x * scale).round() / scale).to_bits()
}

/// A Laplace exponent bound to quadrature settings.
#[derive(Clone)]
pub struct KernelSet {
    pub phi: PhiSpec,
    pub quad: QuadSpec,
    memo: Arc<Memo>,
}

impl std::fmt::Debug for KernelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelSet").field("phi", &self.phi).field("quad", &self.quad).finish()
    }
}

impl KernelSet {
    pub fn new(phi: PhiSpec) -> Result<Self> {
        Self::with_quad(phi, QuadSpec::default())
    }

    pub fn with_quad(phi: PhiSpec, quad: QuadSpec) -> Result<Self> {
        phi.validate()?;
        quad.validate()?;
        Ok(KernelSet { phi, quad, memo: Arc::new(Memo::default()) })
    }

    /// Recurrence constant; zero in the recurrent regime handled here.
    pub fn kappa_rec(&self) -> f64 {
        0.0
    }

    fn cached(&self, tag: Tag, x: f64, f: impl FnOnce() -> Result<f64>) -> Result<f64> {
        let k = (tag, memo_key(x));
        if let Some(v) = self.memo.map.read().get(&k) {
            return Ok(*v);
        }
        let v = f()?;
        self.memo.map.write().insert(k, v);
        Ok(v)
    }

    pub fn psi(&self, xi: f64) -> f64 {
        self.phi.phi_unchecked(xi * xi)
    }

    /// Jump density `j(x) = int_0^inf (4 pi s)^{-1/2} e^{-x^2/4s} nu(s) ds`.
    pub fn levy_j(&self, x: f64) -> Result<f64> {
        if x == 0.0 || !x.is_finite() {
            return Err(Error::Domain(format!("j is undefined at {x}")));
        }
        let x = x.abs();
        self.cached(Tag::J, x, || {
            // s = x^2 / (4t)
            let x2 = x * x;
            let f = |t: f64| {
                if t <= 0.0 {
                    return 0.0;
                }
                let s = x2 / (4.0 * t);
                t.sqrt() / (PI.sqrt() * x) * (-t).exp() * self.phi.nu_unchecked(s) * x2 / (4.0 * t * t)
            };
            let p = self.phi.delta_min() - 0.5;
            let lo = quadrature::integrate_hinted(&f, 0.0, 1.0, Hint::power(p.min(0.0), 0.0), &self.quad)?;
            let hi = quadrature::integrate_to_infinity(&f, 1.0, f64::INFINITY, &self.quad)?;
            lo.combine(hi).strict()
        })
    }

    /// Tail mass `int_d^inf j(u) du = int_0^inf nu(s) erfc(d / 2 sqrt s) / 2 ds`.
    pub fn tail_mass(&self, d: f64) -> Result<f64> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Domain(format!("tail mass needs d > 0, got {d}")));
        }
        self.cached(Tag::Tail, d, || {
            let d2 = d * d;
            let f = |t: f64| {
                if t <= 0.0 {
                    return 0.0;
                }
                let s = d2 / (4.0 * t);
                self.phi.nu_unchecked(s) * d2 / (4.0 * t * t) * 0.5 * erfc(t.sqrt())
            };
            let p = self.phi.delta_min() - 1.0;
            let lo = quadrature::integrate_hinted(&f, 0.0, 1.0, Hint::power(p, 0.0), &self.quad)?;
            let hi = quadrature::integrate_to_infinity(&f, 1.0, f64::INFINITY, &self.quad)?;
            lo.combine(hi).strict()
        })
    }

    /// `int_lo^hi j`, by tail differences.
    pub fn j_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Domain("j_mass needs 0 < lo <= hi".into()));
        }
        if hi.is_infinite() {
            return self.tail_mass(lo);
        }
        if hi == lo {
            return Ok(0.0);
        }
        if hi > 2.0 * lo {
            return Ok(self.tail_mass(lo)? - self.tail_mass(hi)?);
        }
        // short window: integrate directly to avoid cancellation
        let r = quadrature::integrate_adaptive(
            &|u: f64| self.levy_j(u).unwrap_or(f64::NAN),
            lo,
            hi,
            &self.quad,
        )?;
        r.strict()
    }

    /// Resolvent density `u^q(x) = (1/pi) int_0^inf cos(l x) / (q + phi(l^2)) dl`.
    pub fn uq(&self, q: f64, x: f64) -> Result<f64> {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("u^q needs q > 0, got {q}")));
        }
        let g = |l: f64| 1.0 / (q + self.psi(l));
        let shape = OscShape { origin: 0.0, tail: 2.0 * self.phi.delta_min() };
        let r = if x == 0.0 {
            let split = self.phi_cap_inv(1.0 / q).map(|v| 1.0 / v).unwrap_or(1.0);
            quadrature::integrate_positive_line(&g, split, shape, &self.quad)?
        } else {
            quadrature::integrate_oscillatory_cos(&g, x, CosMode::Cos, shape, &self.quad)?
        };
        Ok(r.strict()? / PI)
    }

    /// Compensated resolvent kernel `h(x) = (1/pi) int_0^inf (1 - cos l x) / phi(l^2) dl`.
    pub fn h(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain("h needs a finite argument".into()));
        }
        let x = x.abs();
        if x == 0.0 {
            return Ok(0.0);
        }
        self.cached(Tag::H, x, || {
            let g = |l: f64| 1.0 / self.psi(l);
            let shape = OscShape {
                origin: -2.0 * self.phi.delta_min(),
                tail: 2.0 * self.phi.delta_max(),
            };
            let r = quadrature::integrate_oscillatory_cos(&g, x, CosMode::OneMinusCos, shape, &self.quad)?;
            Ok(r.strict()? / PI)
        })
    }

    /// Free Green function of the process killed at the origin.
    pub fn green_free_x0(&self, x: f64, y: f64) -> Result<f64> {
        if x == 0.0 || y == 0.0 {
            return Err(Error::Domain("green_free_x0 needs x, y != 0".into()));
        }
        Ok(self.h(x)? + self.h(y)? - self.h(y - x)? - self.kappa_rec() * self.h(x)? * self.h(y)?)
    }

    /// Green function of the absolute value killed at the origin.
    pub fn green_free_z(&self, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::Domain("green_free_z needs x, y > 0".into()));
        }
        Ok(2.0 * self.h(x)? + 2.0 * self.h(y)? - self.h(y - x)? - self.h(y + x)?)
    }

    /// Jump density of the reflected process, `j(|x-y|) + j(x+y)`.
    pub fn jump_i(&self, x: f64, y: f64) -> Result<f64> {
        if x == y {
            return Err(Error::Domain("jump_i is singular on the diagonal".into()));
        }
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::Domain("jump_i needs x, y > 0".into()));
        }
        Ok(self.levy_j(x - y)? + self.levy_j(x + y)?)
    }

    /// `Phi(x) = 1 / phi(x^{-2})`.
    pub fn phi_cap(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("Phi needs x > 0, got {x}")));
        }
        Ok(1.0 / self.phi.phi_unchecked(1.0 / (x * x)))
    }

    pub fn phi_cap_inv(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::Domain(format!("Phi^-1 needs y > 0, got {y}")));
        }
        let phi_cap = |x: f64| 1.0 / self.phi.phi_unchecked(1.0 / (x * x));
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        let mut guard = 0;
        while phi_cap(lo) > y {
            lo *= 0.5;
            guard += 1;
            if guard > 4000 || lo == 0.0 {
                return Err(Error::Solver("Phi^-1 bracket failure".into()));
            }
        }
        while phi_cap(hi) < y {
            hi *= 2.0;
            guard += 1;
            if guard > 4000 || !hi.is_finite() {
                return Err(Error::Solver("Phi^-1 bracket failure".into()));
            }
        }
        for _ in 0..200 {
            if hi / lo - 1.0 < 1e-14 {
                break;
            }
            let mid = (lo * hi).sqrt();
            if phi_cap(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo * hi).sqrt())
    }

    /// Two-sided Green comparator on `(a, b)`:
    /// `A / Phi^{-1}(A)  min  A / |x - y|` with `A = sqrt(Phi(d(x)) Phi(d(y)))`.
    pub fn gx_estimate(&self, a: f64, b: f64, x: f64, y: f64) -> Result<f64> {
        if !(a < x && x < b && a < y && y < b) {
            return Err(Error::Domain("gx_estimate needs points inside (a, b)".into()));
        }
        let dx = (x - a).min(b - x);
        let dy = (y - a).min(b - y);
        let aa = (self.phi_cap(dx)? * self.phi_cap(dy)?).sqrt();
        let first = aa / self.phi_cap_inv(aa)?;
        if x == y {
            return Ok(first);
        }
        Ok(first.min(aa / (x - y).abs()))
    }

    /// Band `[min, max]` of `h(x) x psi(1/x)` over `xs`.
    pub fn h_band(&self, xs: &[f64]) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in xs {
            let v = self.h(x)? * x * self.psi(1.0 / x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    /// Band `[min, max]` of `j(x) x / phi(x^{-2})` over `xs`.
    pub fn j_band(&self, xs: &[f64]) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in xs {
            let v = self.levy_j(x)? * x / self.phi.phi_unchecked(1.0 / (x * x));
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable() -> KernelSet {
        KernelSet::new(PhiSpec::stable(0.75).unwrap()).unwrap()
    }

    fn mixture() -> KernelSet {
        KernelSet::new(PhiSpec::mixture(vec![(1.0, 0.6), (1.0, 0.9)]).unwrap()).unwrap()
    }

    #[test]
    fn psi_examples() {
        let ks = stable();
        assert!((ks.psi(2.0) - 2.828_427_124_746_19).abs() < 1e-12);
        assert_eq!(ks.psi(0.0), 0.0);
        assert_eq!(ks.psi(-3.0), ks.psi(3.0));
    }

    #[test]
    fn memo_key_rounds() {
        assert_eq!(memo_key(1.0), memo_key(1.0 + 1e-15));
        assert_ne!(memo_key(1.0), memo_key(1.0 + 1e-9));
    }

    #[test]
    fn h_origin_and_symmetry() {
        let ks = stable();
        assert_eq!(ks.h(0.0).unwrap(), 0.0);
        assert_eq!(ks.h(-0.7).unwrap(), ks.h(0.7).unwrap());
    }

    #[test]
    fn phi_cap_examples() {
        let ks = stable();
        assert!((ks.phi_cap(2.0).unwrap() - 2.828_427_124_746_19).abs() < 1e-12);
        assert!((ks.phi_cap_inv(8.0).unwrap() - 4.0).abs() < 1e-11);
        let m = mixture();
        for x in [0.1, 1.0, 10.0] {
            let r = m.phi_cap_inv(m.phi_cap(x).unwrap()).unwrap();
            assert!((r - x).abs() <= 1e-10 * x);
        }
    }

    #[test]
    fn gx_examples() {
        let ks = stable();
        assert!((ks.gx_estimate(0.0, 2.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let near = ks.gx_estimate(0.0, 2.0, 1e-8, 1e-8).unwrap();
        // comparator scales like d^{1/2} for the stable case
        assert!(near < 2e-4 && near < ks.gx_estimate(0.0, 2.0, 1e-6, 1e-6).unwrap());
        assert!(ks.gx_estimate(1.0, 2.0, 0.5, 1.5).is_err());
        let a = ks.gx_estimate(1.0, 2.0, 1.25, 1.75).unwrap();
        let b = ks.gx_estimate(1.0, 2.0, 1.75, 1.25).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn domain_errors() {
        let ks = stable();
        assert!(ks.levy_j(0.0).is_err());
        assert!(ks.uq(0.0, 1.0).is_err());
        assert!(ks.jump_i(1.0, 1.0).is_err());
        assert!(ks.green_free_z(0.0, 1.0).is_err());
        assert!(ks.green_free_x0(0.0, 1.0).is_err());
    }
}
