//! Adaptive Gauss–Kronrod integration with explicit endpoint power-law
//! substitutions, semi-infinite maps and accelerated oscillatory tails.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailStrategy {
    ExponentGuided,
    PeriodChunked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
    pub tail_strategy: TailStrategy,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_evals: 200_000,
            tail_strategy: TailStrategy::PeriodChunked,
        }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0) || (self.abs_tol == 0.0 && self.rel_tol == 0.0)
        {
            return Err(Error::Config("need abs_tol > 0 or rel_tol > 0".into()));
        }
        if self.max_evals < 100 {
            return Err(Error::Config("max_evals must be at least 100".into()));
        }
        Ok(())
    }

    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        QuadSpec { abs_tol, rel_tol, ..Default::default() }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }

    fn scaled(&self, f: f64) -> Self {
        QuadSpec { abs_tol: self.abs_tol * f, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub err_est: f64,
    pub evals: usize,
    pub converged: bool,
    /// Set when the oscillatory path fell back to plain adaptive summation.
    pub fallback: bool,
}

impl QuadResult {
    pub fn combine(self, o: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + o.value,
            err_est: self.err_est + o.err_est,
            evals: self.evals + o.evals,
            converged: self.converged && o.converged,
            fallback: self.fallback || o.fallback,
        }
    }

    fn scale(mut self, c: f64) -> QuadResult {
        self.value *= c;
        self.err_est *= c.abs();
        self
    }

    /// Result value, or a quadrature error if the rule did not converge.
    pub fn strict(self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::Quadrature { value: self.value, err_est: self.err_est })
        }
    }
}

/// Power-law behaviour `f ~ (x-a)^left` and `f ~ (b-x)^right` at the ends.
/// Exponents `>= 0` mean no substitution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hint {
    pub left: f64,
    pub right: f64,
}

impl Hint {
    pub fn none() -> Self {
        Hint { left: 0.0, right: 0.0 }
    }

    pub fn power(left: f64, right: f64) -> Self {
        Hint { left, right }
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.partial_cmp(&o.err).unwrap_or(Ordering::Equal)
    }
}

fn gk21<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[10];
    let mut resabs = resk.abs();
    let mut resg = 0.0;
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for i in 0..10 {
        let dx = h * XGK[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[i] = f1;
        fv2[i] = f2;
        resk += WGK[i] * (f1 + f2);
        resabs += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            resg += WG[i / 2] * (f1 + f2);
        }
    }
    if !resk.is_finite() {
        return Err(Error::Evaluation(format!("non-finite integrand on [{a}, {b}]")));
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for i in 0..10 {
        resasc += WGK[i] * ((fv1[i] - mean).abs() + (fv2[i] - mean).abs());
    }
    let resk_s = resk * h;
    let resabs = resabs * h.abs();
    let resasc = resasc * h.abs();
    let mut err = ((resk - resg) * h).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((resk_s, err))
}

/// Adaptive integration of `f` over the finite interval `[a, b]`.
pub fn integrate_adaptive<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    spec: &QuadSpec,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain("integrate_adaptive needs finite limits".into()));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, err_est: 0.0, evals: 0, converged: true, fallback: false });
    }
    if a > b {
        return integrate_adaptive(f, b, a, spec).map(|r| r.scale(-1.0));
    }
    let (v, e) = gk21(f, a, b)?;
    let mut evals = 21;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, err: e });
    let (mut total, mut err_total) = (v, e);
    while err_total > spec.target(total) && evals + 42 <= spec.max_evals {
        let s = heap.pop().expect("heap nonempty");
        let m = 0.5 * (s.a + s.b);
        if !(m > s.a && m < s.b) {
            heap.push(s);
            break;
        }
        let (v1, e1) = gk21(f, s.a, m)?;
        let (v2, e2) = gk21(f, m, s.b)?;
        evals += 42;
        total += v1 + v2 - s.value;
        err_total += e1 + e2 - s.err;
        heap.push(Segment { a: s.a, b: m, value: v1, err: e1 });
        heap.push(Segment { a: m, b: s.b, value: v2, err: e2 });
    }
    // re-sum to limit cancellation drift
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let err_est: f64 = heap.iter().map(|s| s.err).sum();
    Ok(QuadResult { value, err_est, evals, converged: err_est <= spec.target(value), fallback: false })
}

/// `int_0^L f(L u^m) L m u^{m-1} du` with `m` chosen to cancel an endpoint power.
fn substitute_left<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    len: f64,
    p: f64,
    spec: &QuadSpec,
) -> Result<QuadResult> {
    if p <= -1.0 {
        return Err(Error::Domain(format!("endpoint exponent {p} is not integrable")));
    }
    if p >= 0.0 {
        return integrate_adaptive(f, a, a + len, spec);
    }
    let m = 1.0 / (1.0 + p);
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let um1 = u.powf(m - 1.0);
        f(a + len * u * um1) * len * m * um1
    };
    integrate_adaptive(&g, 0.0, 1.0, spec)
}

/// Finite-interval integration with declared endpoint power laws.
pub fn integrate_hinted<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    hint: Hint,
    spec: &QuadSpec,
) -> Result<QuadResult> {
    if !(a < b) {
        if a == b {
            return integrate_adaptive(f, a, b, spec);
        }
        return Err(Error::Domain("integrate_hinted needs a < b".into()));
    }
    let sl = hint.left < 0.0;
    let sr = hint.right < 0.0;
    if !sl && !sr {
        return integrate_adaptive(f, a, b, spec);
    }
    let c = 0.5 * (a + b);
    let half = spec.scaled(0.5);
    let left = if sl {
        substitute_left(f, a, c - a, hint.left, &half)?
    } else {
        integrate_adaptive(f, a, c, &half)?
    };
    let right = if sr {
        let g = |t: f64| f(a + b - t);
        substitute_left(&g, a, c - a, hint.right, &half)?
    } else {
        integrate_adaptive(f, c, b, &half)?
    };
    Ok(left.combine(right))
}

/// `int_a^inf f` for `f ~ x^{-q}` at infinity (`q > 1`, possibly infinite),
/// through `x = a + s (1/t - 1)` with `s = max(|a|, 1)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    q: f64,
    spec: &QuadSpec,
) -> Result<QuadResult> {
    integrate_to_infinity_scaled(f, a, a.abs().max(1.0), q, spec)
}

pub fn integrate_to_infinity_scaled<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    s: f64,
    q: f64,
    spec: &QuadSpec,
) -> Result<QuadResult> {
    if !(q > 1.0) {
        return Err(Error::Domain(format!("tail exponent {q} does not give a finite integral")));
    }
    let g = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        f(a + s * (1.0 / t - 1.0)) * s / (t * t)
    };
    // near t = 0 the integrand behaves like t^{q-2}
    let p = if q.is_finite() { q - 2.0 } else { 0.0 };
    integrate_hinted(&g, 0.0, 1.0, Hint::power(p.min(0.0), 0.0), spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CosMode {
    /// `int_0^inf g(l) cos(l x) dl`
    Cos,
    /// `int_0^inf g(l) (1 - cos(l x)) dl`
    OneMinusCos,
}

/// Shape information for the oscillatory integrand `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscShape {
    /// `g ~ l^origin` as `l -> 0`.
    pub origin: f64,
    /// `g ~ l^{-tail}` as `l -> inf`.
    pub tail: f64,
}

/// Incremental Wynn epsilon extrapolation.
struct Wynn {
    e: Vec<f64>,
    est: Vec<f64>,
}

impl Wynn {
    fn new() -> Self {
        Wynn { e: Vec::new(), est: Vec::new() }
    }

    fn push(&mut self, s: f64) -> f64 {
        const TINY: f64 = 1e-60;
        const HUGE: f64 = 1e60;
        let n = self.e.len();
        self.e.push(s);
        let est = if n == 0 {
            s
        } else {
            let mut aux2 = 0.0;
            for j in (1..=n).rev() {
                let aux1 = aux2;
                aux2 = self.e[j - 1];
                let diff = self.e[j] - aux2;
                self.e[j - 1] = if diff.abs() < TINY { HUGE } else { aux1 + 1.0 / diff };
            }
            if n.is_multiple_of(2) {
                self.e[0]
            } else {
                self.e[1]
            }
        };
        let est = if est.is_finite() && est.abs() < 1e50 { est } else { s };
        self.est.push(est);
        est
    }

    fn err(&self) -> f64 {
        let k = self.est.len();
        if k < 3 {
            return f64::INFINITY;
        }
        (self.est[k - 1] - self.est[k - 2]).abs().max((self.est[k - 2] - self.est[k - 3]).abs())
    }
}

/// `int_0^inf g(l) w(l x) dl` with `w = cos` or `1 - cos`.
///
/// Integrates `[0, 2/x]` adaptively, then sums half-period chunks and
/// accelerates the partial sums with the epsilon algorithm.
pub fn integrate_oscillatory_cos<G: Fn(f64) -> f64 + ?Sized>(
    g: &G,
    x: f64,
    mode: CosMode,
    shape: OscShape,
    spec: &QuadSpec,
) -> Result<QuadResult> {
    let x = x.abs();
    if x == 0.0 {
        return match mode {
            CosMode::OneMinusCos => {
                Ok(QuadResult { value: 0.0, err_est: 0.0, evals: 0, converged: true, fallback: false })
            }
            CosMode::Cos => integrate_positive_line(g, 1.0, shape, spec),
        };
    }
    let l0 = 2.0 / x;
    let head_origin = match mode {
        CosMode::Cos => shape.origin,
        CosMode::OneMinusCos => shape.origin + 2.0,
    };
    let part = spec.scaled(0.25);
    let head = match mode {
        CosMode::Cos => integrate_hinted(
            &|l: f64| g(l) * (l * x).cos(),
            0.0,
            l0,
            Hint::power(head_origin.min(0.0), 0.0),
            &part,
        )?,
        CosMode::OneMinusCos => integrate_hinted(
            &|l: f64| {
                let s = (0.5 * l * x).sin();
                g(l) * 2.0 * s * s
            },
            0.0,
            l0,
            Hint::power(head_origin.min(0.0), 0.0),
            &part,
        )?,
    };
    let base = match mode {
        CosMode::Cos => None,
        CosMode::OneMinusCos => Some(integrate_to_infinity_scaled(g, l0, l0, shape.tail, &part)?),
    };
    let chunk = cos_chunks(g, x, l0, spec)?;
    let mut res = head;
    match mode {
        CosMode::Cos => res = res.combine(chunk),
        CosMode::OneMinusCos => {
            let b = base.expect("base integral present");
            res = res.combine(b).combine(chunk.scale(-1.0));
        }
    }
    res.converged = res.converged && res.err_est <= spec.target(res.value).max(1e-300) * 4.0;
    Ok(res)
}

/// `int_{l0}^inf g(l) cos(l x) dl` by half-period chunks.
fn cos_chunks<G: Fn(f64) -> f64 + ?Sized>(
    g: &G,
    x: f64,
    l0: f64,
    spec: &QuadSpec,
) -> Result<QuadResult> {
    const MAX_TERMS: usize = 400;
    const MIN_TERMS: usize = 8;
    let w = std::f64::consts::PI / x;
    let term_spec = QuadSpec { abs_tol: spec.abs_tol * 1e-3, rel_tol: spec.rel_tol * 1e-2, ..*spec };
    let f = |l: f64| g(l) * (l * x).cos();
    let mut wynn = Wynn::new();
    let mut partial = 0.0;
    let mut evals = 0;
    let mut int_err = 0.0;
    let mut prev: Option<f64> = None;
    let mut monotone = true;
    let mut last = 0.0;
    for k in 0..MAX_TERMS {
        let a = l0 + k as f64 * w;
        let r = integrate_adaptive(&f, a, a + w, &term_spec)?;
        evals += r.evals;
        int_err += r.err_est;
        partial += r.value;
        if let Some(p) = prev {
            if k > 2 && (r.value * p > 0.0 || r.value.abs() > p.abs() * (1.0 + 1e-9)) {
                monotone = false;
            }
        }
        prev = Some(r.value);
        last = wynn.push(partial);
        if !monotone {
            break;
        }
        if k >= MIN_TERMS {
            let e = wynn.err();
            if e + int_err <= spec.target(last) * 0.25 {
                return Ok(QuadResult {
                    value: last,
                    err_est: e + int_err,
                    evals,
                    converged: true,
                    fallback: false,
                });
            }
        }
        if evals > spec.max_evals {
            break;
        }
    }
    if monotone {
        let e = wynn.err();
        return Ok(QuadResult {
            value: last,
            err_est: e + int_err,
            evals,
            converged: e + int_err <= spec.target(last),
            fallback: false,
        });
    }
    // tail not alternating: plain adaptive integration over a long window
    let span = MAX_TERMS as f64 * w;
    let r = integrate_adaptive(&f, l0, l0 + span, spec)?;
    Ok(QuadResult { fallback: true, converged: false, ..r })
}

/// `int_0^inf g` for `g ~ l^origin` at zero and `l^{-tail}` at infinity.
pub fn integrate_positive_line<G: Fn(f64) -> f64 + ?Sized>(
    g: &G,
    split: f64,
    shape: OscShape,
    spec: &QuadSpec,
) -> Result<QuadResult> {
    let half = spec.scaled(0.5);
    let lo = integrate_hinted(g, 0.0, split, Hint::power(shape.origin.min(0.0), 0.0), &half)?;
    let hi = integrate_to_infinity_scaled(g, split, split, shape.tail, &half)?;
    Ok(lo.combine(hi))
}

/// Nodes and weights of Gauss–Legendre rules on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// One row of the quadrature self-test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestRow {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tol: f64,
    pub pass: bool,
}

/// The three reference integrals: `int_0^1 x`, `int_0^inf (1 - cos u) u^{-3/2}`
/// and `int_0^inf 1 / (1 + x^2)`.
pub fn selftest(spec: &QuadSpec) -> Result<Vec<SelftestRow>> {
    let row = |name: &str, value: f64, expected: f64, tol: f64| SelftestRow {
        name: name.into(),
        value,
        expected,
        tol,
        pass: (value - expected).abs() <= tol,
    };
    let lin = integrate_adaptive(&|x: f64| x, 0.0, 1.0, spec)?;
    let osc = integrate_oscillatory_cos(
        &|l: f64| l.powf(-1.5),
        1.0,
        CosMode::OneMinusCos,
        OscShape { origin: -1.5, tail: 1.5 },
        spec,
    )?;
    let atan = integrate_to_infinity(&|x: f64| 1.0 / (1.0 + x * x), 0.0, 2.0, spec)?;
    Ok(vec![
        row("linear", lin.value, 0.5, 1e-12),
        row("one_minus_cos", osc.value, (2.0 * std::f64::consts::PI).sqrt(), 1e-7),
        row("arctan", atan.value, std::f64::consts::FRAC_PI_2, 1e-10),
    ])
}
