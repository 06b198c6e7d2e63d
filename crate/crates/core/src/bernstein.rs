//! Complete Bernstein functions with closed-form Lévy densities.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::kernels::KernelSet;
use crate::quadrature::{self, Hint, QuadSpec};

/// Laplace exponent of a driftless, killing-free subordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum PhiSpec {
    Stable { delta: f64 },
    Mixture { terms: Vec<(f64, f64)> },
}

impl PhiSpec {
    pub fn stable(delta: f64) -> Result<Self> {
        let s = PhiSpec::Stable { delta };
        s.validate()?;
        Ok(s)
    }

    pub fn mixture(terms: Vec<(f64, f64)>) -> Result<Self> {
        let s = PhiSpec::Mixture { terms };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok_delta = |d: f64| d.is_finite() && d > 0.0 && d < 1.0;
        match self {
            PhiSpec::Stable { delta } => {
                if !ok_delta(*delta) {
                    return Err(Error::Domain(format!("delta {delta} outside (0,1)")));
                }
            }
            PhiSpec::Mixture { terms } => {
                if terms.is_empty() {
                    return Err(Error::Domain("mixture needs at least one term".into()));
                }
                for &(w, d) in terms {
                    if !(w.is_finite() && w > 0.0) {
                        return Err(Error::Domain(format!("mixture weight {w} not positive")));
                    }
                    if !ok_delta(d) {
                        return Err(Error::Domain(format!("mixture delta {d} outside (0,1)")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Parse `"w:d,w:d"` as used on the command line.
    pub fn parse_terms(s: &str) -> Result<Vec<(f64, f64)>> {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| {
                let (w, d) = t
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("term '{t}' is not of the form w:d")))?;
                let w = w.trim().parse::<f64>().map_err(|e| Error::Config(e.to_string()))?;
                let d = d.trim().parse::<f64>().map_err(|e| Error::Config(e.to_string()))?;
                Ok((w, d))
            })
            .collect()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: PhiSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Power-law terms `(w, delta)` with `phi = sum w * lambda^delta`.
    pub fn terms(&self) -> Vec<(f64, f64)> {
        match self {
            PhiSpec::Stable { delta } => vec![(1.0, *delta)],
            PhiSpec::Mixture { terms } => terms.clone(),
        }
    }

    pub fn delta_min(&self) -> f64 {
        self.terms().iter().map(|t| t.1).fold(f64::INFINITY, f64::min)
    }

    pub fn delta_max(&self) -> f64 {
        self.terms().iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        matches!(self, PhiSpec::Stable { .. })
    }

    pub fn label(&self) -> String {
        match self {
            PhiSpec::Stable { delta } => format!("stable(delta={delta})"),
            PhiSpec::Mixture { terms } => {
                let t: Vec<String> = terms.iter().map(|(w, d)| format!("{w}:{d}")).collect();
                format!("mixture({})", t.join(","))
            }
        }
    }

    pub fn phi(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("phi needs lambda > 0, got {lambda}")));
        }
        Ok(self.phi_unchecked(lambda))
    }

    /// `phi` without the domain check; `phi(0) = 0`.
    #[inline]
    pub fn phi_unchecked(&self, lambda: f64) -> f64 {
        match self {
            PhiSpec::Stable { delta } => lambda.powf(*delta),
            PhiSpec::Mixture { terms } => terms.iter().map(|&(w, d)| w * lambda.powf(d)).sum(),
        }
    }

    pub fn nu(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("nu needs t > 0, got {t}")));
        }
        Ok(self.nu_unchecked(t))
    }

    #[inline]
    pub fn nu_unchecked(&self, t: f64) -> f64 {
        self.terms()
            .iter()
            .map(|&(w, d)| w * d / gamma(1.0 - d) * t.powf(-1.0 - d))
            .sum()
    }

    /// `int_0^inf (1 - e^{-lambda t}) nu(t) dt` by quadrature.
    pub fn bernstein_integral(&self, lambda: f64, spec: &QuadSpec) -> Result<f64> {
        let f = |t: f64| -(-lambda * t).exp_m1() * self.nu_unchecked(t);
        let scale = 1.0 / lambda;
        let lo = quadrature::integrate_hinted(
            &f,
            0.0,
            scale,
            Hint::power(-self.delta_max(), 0.0),
            spec,
        )?;
        let hi = quadrature::integrate_to_infinity(&f, scale, 1.0 + self.delta_min(), spec)?;
        Ok(lo.value + hi.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingTarget {
    Phi,
    H,
}

/// Log-spaced lattice of base points `r` and ratios `lambda >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingLattice {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub lambda_max: f64,
    pub n_lambda: usize,
}

impl Default for ScalingLattice {
    fn default() -> Self {
        ScalingLattice { r_min: 1e-4, r_max: 1e4, n_r: 81, lambda_max: 1e4, n_lambda: 41 }
    }
}

impl ScalingLattice {
    pub fn rs(&self) -> Vec<f64> {
        log_space(self.r_min, self.r_max, self.n_r)
    }

    /// Ratios strictly above one.
    pub fn lambdas(&self) -> Vec<f64> {
        log_space(1.0, self.lambda_max, self.n_lambda + 1).into_iter().skip(1).collect()
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub target: ScalingTarget,
    pub delta1_hat: f64,
    pub delta2_hat: f64,
    pub a1_hat: f64,
    pub a2_hat: f64,
    /// For the `h` target these carry the h-scaling constants.
    pub d1_hat: Option<f64>,
    pub d2_hat: Option<f64>,
    pub lattice: ScalingLattice,
    pub delta1_above_half: bool,
    pub near_one_warning: bool,
}

pub fn scaling_exponents(
    spec: &PhiSpec,
    lattice: &ScalingLattice,
    target: ScalingTarget,
    ks: Option<&KernelSet>,
) -> Result<ScalingReport> {
    if lattice.n_r < 1 || lattice.n_lambda < 1 || lattice.n_r * lattice.n_lambda < 2 {
        return Err(Error::Config("scaling lattice needs more than one point".into()));
    }
    if !(lattice.lambda_max > 1.0 && lattice.r_min > 0.0 && lattice.r_max >= lattice.r_min) {
        return Err(Error::Config("scaling lattice ranges are degenerate".into()));
    }
    let rs = lattice.rs();
    let ls = lattice.lambdas();
    let f: Box<dyn Fn(f64) -> Result<f64> + '_> = match target {
        ScalingTarget::Phi => Box::new(|x| spec.phi(x)),
        ScalingTarget::H => {
            let ks = ks.ok_or_else(|| Error::Config("h-target scaling needs a kernel set".into()))?;
            Box::new(move |x| ks.h(x))
        }
    };
    let mut fr = Vec::with_capacity(rs.len());
    for &r in &rs {
        fr.push(f(r)?);
    }
    let mut ratios = Vec::with_capacity(rs.len() * ls.len());
    for (i, &r) in rs.iter().enumerate() {
        for &l in &ls {
            ratios.push((l, f(l * r)? / fr[i]));
        }
    }
    let (mut d1, mut d2) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(l, q) in &ratios {
        let e = q.ln() / l.ln();
        d1 = d1.min(e);
        d2 = d2.max(e);
    }
    // lambda -> 1 forces a1 <= 1 <= a2
    let (mut a1, mut a2) = (1.0f64, 1.0f64);
    for &(l, q) in &ratios {
        a1 = a1.min(q / l.powf(d1));
        a2 = a2.max(q / l.powf(d2));
    }
    let (d1h, d2h) = match target {
        ScalingTarget::Phi => (None, None),
        ScalingTarget::H => (Some(a1), Some(a2)),
    };
    let half = match target {
        ScalingTarget::Phi => d1 > 0.5,
        ScalingTarget::H => d1 > 0.0,
    };
    Ok(ScalingReport {
        target,
        delta1_hat: d1,
        delta2_hat: d2,
        a1_hat: a1,
        a2_hat: a2,
        d1_hat: d1h,
        d2_hat: d2h,
        lattice: *lattice,
        delta1_above_half: half,
        near_one_warning: target == ScalingTarget::Phi && d2 > 0.95,
    })
}

pub fn check_bernstein_bound(spec: &PhiSpec, lambda: f64, r: f64) -> Result<bool> {
    if !(lambda > 0.0 && r > 0.0) {
        return Err(Error::Domain("bound check needs lambda, r > 0".into()));
    }
    let q = spec.phi(lambda * r)? / spec.phi(r)?;
    let slack = 1e-12;
    Ok(q >= lambda.min(1.0) * (1.0 - slack) && q <= lambda.max(1.0) * (1.0 + slack))
}

/// Truncated integrals `int_1^T dlambda / phi(lambda^2)` for growing `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityProbe {
    pub cutoffs: Vec<f64>,
    pub partial: Vec<f64>,
    pub increments_shrink: bool,
}

pub fn regularity_probe(spec: &PhiSpec) -> Result<RegularityProbe> {
    let qs = QuadSpec::default();
    let cutoffs: Vec<f64> = (1..=6).map(|k| 10f64.powi(k)).collect();
    let mut partial = Vec::new();
    let mut acc = 0.0;
    let mut lo = 1.0;
    for &t in &cutoffs {
        let r = quadrature::integrate_hinted(
            &|l: f64| 1.0 / spec.phi_unchecked(l * l),
            lo,
            t,
            Hint::none(),
            &qs,
        )?;
        acc += r.value;
        partial.push(acc);
        lo = t;
    }
    let inc: Vec<f64> = partial.windows(2).map(|w| w[1] - w[0]).collect();
    let increments_shrink = inc.windows(2).all(|w| w[1] < w[0]);
    Ok(RegularityProbe { cutoffs, partial, increments_shrink })
}

/// Exponent test `delta1_hat > 1/2`; the quadrature probe is advisory only.
pub fn check_regularity(spec: &PhiSpec) -> bool {
    match scaling_exponents(spec, &ScalingLattice::default(), ScalingTarget::Phi, None) {
        Ok(rep) => rep.delta1_hat > 0.5,
        Err(_) => false,
    }
}

/// Normalizing constant of the jump density of the stable term:
/// `j(x) = c |x|^{-1-2 delta}` when `phi(lambda) = lambda^delta`.
pub fn stable_jump_constant(delta: f64) -> f64 {
    delta * 4f64.powf(delta) * gamma(delta + 0.5) / (std::f64::consts::PI.sqrt() * gamma(1.0 - delta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_examples() {
        let s = PhiSpec::stable(0.75).unwrap();
        assert!((s.phi(4.0).unwrap() - 2.828_427_124_746_19).abs() < 1e-12);
        assert_eq!(s.phi(1.0).unwrap(), 1.0);
        let m = PhiSpec::mixture(vec![(1.0, 0.6), (1.0, 0.9)]).unwrap();
        assert_eq!(m.phi(1.0).unwrap(), 2.0);
        assert!(s.phi(0.0).is_err());
        assert!(s.phi(-1.0).is_err());
    }

    #[test]
    fn constructor_rejects() {
        assert!(PhiSpec::stable(1.0).is_err());
        assert!(PhiSpec::stable(0.0).is_err());
        assert!(PhiSpec::mixture(vec![]).is_err());
        assert!(PhiSpec::mixture(vec![(0.0, 0.5)]).is_err());
        assert!(PhiSpec::mixture(vec![(1.0, 1.2)]).is_err());
    }

    #[test]
    fn nu_examples() {
        let s = PhiSpec::stable(0.5).unwrap();
        assert!((s.nu(1.0).unwrap() - 0.28209479177387814).abs() < 1e-12);
        let s = PhiSpec::stable(0.75).unwrap();
        let q = s.nu(2.6).unwrap() / s.nu(1.3).unwrap();
        assert!((q - 2f64.powf(-1.75)).abs() < 1e-13);
        assert!(s.nu(0.0).is_err());
    }

    #[test]
    fn bernstein_representation() {
        let qs = QuadSpec::default();
        let s = PhiSpec::stable(0.75).unwrap();
        assert!((s.bernstein_integral(1.0, &qs).unwrap() - 1.0).abs() < 1e-8);
        let m = PhiSpec::mixture(vec![(1.0, 0.6), (1.0, 0.9)]).unwrap();
        for l in [0.1, 1.0, 10.0] {
            let v = m.bernstein_integral(l, &qs).unwrap();
            assert!((v - m.phi(l).unwrap()).abs() < 1e-6 * m.phi(l).unwrap());
        }
    }

    #[test]
    fn json_shapes() {
        let s = PhiSpec::from_json(r#"{"family":"stable","delta":0.75}"#).unwrap();
        assert_eq!(s, PhiSpec::Stable { delta: 0.75 });
        let m = PhiSpec::from_json(r#"{"family":"mixture","terms":[[1,0.6],[1,0.9]]}"#).unwrap();
        assert_eq!(m.terms(), vec![(1.0, 0.6), (1.0, 0.9)]);
        assert!(PhiSpec::from_json(r#"{"family":"stable","delta":1.5}"#).is_err());
        assert_eq!(PhiSpec::parse_terms("1:0.6, 1:0.9").unwrap(), vec![(1.0, 0.6), (1.0, 0.9)]);
    }

    #[test]
    fn scaling_stable_exact() {
        let s = PhiSpec::stable(0.75).unwrap();
        let small = ScalingLattice { r_min: 0.3, r_max: 30.0, n_r: 5, lambda_max: 7.0, n_lambda: 3 };
        for lat in [ScalingLattice::default(), small] {
            let rep = scaling_exponents(&s, &lat, ScalingTarget::Phi, None).unwrap();
            assert!((rep.delta1_hat - 0.75).abs() < 1e-9);
            assert!((rep.delta2_hat - 0.75).abs() < 1e-9);
            assert!((rep.a1_hat - 1.0).abs() < 1e-9 && (rep.a2_hat - 1.0).abs() < 1e-9);
            assert!(rep.delta1_above_half);
        }
    }

    #[test]
    fn scaling_degenerate_lattice() {
        let s = PhiSpec::stable(0.75).unwrap();
        let lat = ScalingLattice { r_min: 1.0, r_max: 1.0, n_r: 1, lambda_max: 2.0, n_lambda: 1 };
        assert!(matches!(
            scaling_exponents(&s, &lat, ScalingTarget::Phi, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scaling_mixture_matches_bruteforce() {
        // brute-force oracle: 200x200 lattice of log-ratios
        let m = PhiSpec::mixture(vec![(1.0, 0.6), (1.0, 0.9)]).unwrap();
        let lat = ScalingLattice { r_min: 1e-3, r_max: 1e3, n_r: 200, lambda_max: 1e3, n_lambda: 200 };
        let rep = scaling_exponents(&m, &lat, ScalingTarget::Phi, None).unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..200 {
            let r = 10f64.powf(-3.0 + 6.0 * i as f64 / 199.0);
            for k in 1..=200 {
                let l = 10f64.powf(3.0 * k as f64 / 200.0);
                let phi = |x: f64| x.powf(0.6) + x.powf(0.9);
                let e = (phi(l * r) / phi(r)).ln() / l.ln();
                lo = lo.min(e);
                hi = hi.max(e);
            }
        }
        assert!((rep.delta1_hat - lo).abs() < 1e-12 && (rep.delta2_hat - hi).abs() < 1e-12);
        assert!(0.6 <= rep.delta1_hat && rep.delta1_hat <= rep.delta2_hat && rep.delta2_hat <= 0.9);
        assert!(rep.a1_hat <= rep.a2_hat);
        assert!(!rep.near_one_warning);
    }

    #[test]
    fn bound_examples() {
        let s = PhiSpec::stable(0.75).unwrap();
        assert!(check_bernstein_bound(&s, 1.0, 3.7).unwrap());
        assert!(check_bernstein_bound(&s, 0.25, 1.0).unwrap());
        let m = PhiSpec::mixture(vec![(1.0, 0.6), (1.0, 0.9)]).unwrap();
        assert!(check_bernstein_bound(&m, 8.0, 0.2).unwrap());
    }

    #[test]
    fn regularity_examples() {
        assert!(check_regularity(&PhiSpec::stable(0.75).unwrap()));
        assert!(!check_regularity(&PhiSpec::stable(0.4).unwrap()));
        let m = PhiSpec::mixture(vec![(1.0, 0.6), (1.0, 0.9)]).unwrap();
        assert!(check_regularity(&m));
        let p = regularity_probe(&PhiSpec::stable(0.75).unwrap()).unwrap();
        // int_1^T l^{-1.5} = 2 (1 - T^{-1/2})
        for (t, v) in p.cutoffs.iter().zip(&p.partial) {
            assert!((v - 2.0 * (1.0 - t.powf(-0.5))).abs() < 1e-8);
        }
        assert!(p.increments_shrink);
    }

    #[test]
    fn mixture_probe_richardson() {
        // tail beyond T behaves like T^{-0.8}/0.8 for the dominant 0.9 term at large lambda;
        // extrapolate the last two partial sums with that rate
        let m = PhiSpec::mixture(vec![(1.0, 0.6), (1.0, 0.9)]).unwrap();
        let p = regularity_probe(&m).unwrap();
        let n = p.partial.len();
        let r = 10f64.powf(-0.8);
        let extrap = (p.partial[n - 1] - r * p.partial[n - 2]) / (1.0 - r);
        assert!(extrap.is_finite() && extrap > p.partial[n - 1]);
        assert!(extrap - p.partial[n - 1] < 0.05);
    }
}
