use std::f64::consts::PI;
use std::sync::OnceLock;

use ksbm::interval_solver::{
    bhp_sup_ratio, build_generator, exit_alive_prob, exit_time, gauge_ratios, green_matrix, harmonic_extend,
    harnack_sup_ratio, nested_sup_change, poisson_kernel, small_interval_lower, solve_all, three_g_sup,
    BoundaryData, ExteriorData, GreenMatrix, Grid, ProcessKind, Tail, ZGridSpec,
};
use ksbm::verify::bhp_data;
use ksbm::{Error, KernelSet, PhiSpec};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn stable() -> &'static KernelSet {
    static KS: OnceLock<KernelSet> = OnceLock::new();
    KS.get_or_init(|| KernelSet::new(PhiSpec::stable(0.75).unwrap()).unwrap())
}

fn mixture() -> &'static KernelSet {
    static KS: OnceLock<KernelSet> = OnceLock::new();
    KS.get_or_init(|| KernelSet::new(PhiSpec::mixture(vec![(1.0, 0.6), (1.0, 0.9)]).unwrap()).unwrap())
}

fn green(ks: &KernelSet, grid: &Grid, kind: ProcessKind) -> GreenMatrix {
    green_matrix(ks, &build_generator(ks, grid, kind).unwrap()).unwrap()
}

const KINDS: [ProcessKind; 3] = [ProcessKind::X, ProcessKind::Y, ProcessKind::Z];

#[test]
fn killing_rate_matches_closed_form() {
    // kappa_1(x) = C/alpha ((x - 1)^-alpha + (2 - x)^-alpha) for j = C |x|^{-1-alpha}
    let alpha = 1.5;
    let c = alpha * 2f64.powf(alpha - 1.0) * gamma((1.0 + alpha) / 2.0) / (PI.sqrt() * gamma(1.0 - alpha / 2.0));
    let grid = Grid::new(1.0, 2.0, 64).unwrap();
    let gen = build_generator(stable(), &grid, ProcessKind::X).unwrap();
    for (i, k) in gen.kappa_vec.iter().enumerate() {
        let x = grid.node(i);
        let want = c / alpha * ((x - 1.0).powf(-alpha) + (2.0 - x).powf(-alpha));
        assert!((k - want).abs() <= 1e-8 * want, "node {i}: {k} vs {want}");
    }
}

#[test]
fn reflected_minus_censored_is_mirror_density() {
    let grid = Grid::new(1.0, 2.0, 32).unwrap();
    let ks = mixture();
    let y = build_generator(ks, &grid, ProcessKind::Y).unwrap();
    let z = build_generator(ks, &grid, ProcessKind::Z).unwrap();
    for i in 0..grid.len() {
        assert!(z.q_vec[i] >= 0.0 && y.q_vec[i] >= 0.0);
        for m in 0..grid.len() {
            if i.abs_diff(m) >= 2 {
                let want = ks.levy_j(grid.node(i) + grid.node(m)).unwrap() * grid.delta();
                let got = z.a[(i, m)] - y.a[(i, m)];
                assert!(got >= 0.0 && (got - want).abs() <= 1e-8 * want);
            }
        }
    }
}

#[test]
fn generator_errors() {
    let ks = stable();
    let g0 = Grid::new(0.0, 1.0, 32).unwrap();
    assert!(matches!(build_generator(ks, &g0, ProcessKind::Y), Err(Error::Domain(_))));
    assert!(matches!(build_generator(ks, &g0, ProcessKind::Z), Err(Error::Domain(_))));
    assert!(matches!(Grid::new(1.0, 2.0, 7), Err(Error::Config(_))));
}

#[test]
fn green_refinement_and_symmetry() {
    let (gc, gf) = (Grid::new(1.0, 2.0, 128).unwrap(), Grid::new(1.0, 2.0, 256).unwrap());
    for kind in KINDS {
        let (c, f) = (green(stable(), &gc, kind), green(stable(), &gf, kind));
        assert!(f.asymmetry < 1e-8);
        assert!(f.g.iter().all(|v| *v > 0.0));
        assert!(exit_time(&f).iter().all(|t| *t >= 0.0));
        let s = nested_sup_change(&c, &f).unwrap();
        assert!(s < 0.05, "{kind:?}: {s}");
    }
}

#[test]
fn censored_green_dominates_killed() {
    let grid = Grid::new(1.0, 2.0, 128).unwrap();
    for ks in [stable(), mixture()] {
        let (gx, gy, gz) = (green(ks, &grid, ProcessKind::X), green(ks, &grid, ProcessKind::Y), green(ks, &grid, ProcessKind::Z));
        let r = gauge_ratios(&gx, &gy, &gz).unwrap();
        assert!(r.yx.0 >= 1.0 - 1e-8);
        assert!(r.zy.1.is_finite() && r.zx.1.is_finite() && r.zx.0 > 0.0);
        for (y, x) in gy.g.iter().zip(gx.g.iter()) {
            assert!(y >= &(x - 1e-8));
        }
    }
}

#[test]
fn exit_time_examples() {
    let ks = stable();
    let grid = Grid::new(0.01, 1.0, 256).unwrap();
    let et = exit_time(&green(ks, &grid, ProcessKind::Z));
    let k = (0..grid.len()).min_by(|&i, &j| (grid.node(i) - 0.5).abs().total_cmp(&(grid.node(j) - 0.5).abs())).unwrap();
    let x = grid.node(k);
    assert!(et[k] <= 4.0 * ks.h(x).unwrap());
    // on the doubled interval times scale by 2^alpha exactly
    let wide = Grid::new(0.02, 2.0, 256).unwrap();
    let et2 = exit_time(&green(ks, &wide, ProcessKind::Z));
    assert!((et2[k] / et[k] - 2f64.powf(1.5)).abs() < 1e-9);
    let coarse = exit_time(&green(ks, &Grid::new(0.01, 1.0, 128).unwrap(), ProcessKind::Z));
    for i in 0..coarse.len() {
        assert!((coarse[i] / et[2 * i + 1] - 1.0).abs() < 0.05);
    }
}

#[test]
fn exit_time_matches_closed_form() {
    // E tau = sqrt(pi) / (2^alpha Gamma(1 + alpha/2) Gamma((1 + alpha)/2)) (rho^2 - y^2)^(alpha/2)
    let alpha = 1.5;
    let c = PI.sqrt() / (2f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((1.0 + alpha) / 2.0));
    let grid = Grid::new(1.0, 2.0, 256).unwrap();
    let et = exit_time(&green(stable(), &grid, ProcessKind::X));
    for (i, t) in et.iter().enumerate() {
        let y = grid.node(i) - 1.5;
        if y.abs() < 0.4 {
            let want = c * (0.25 - y * y).powf(alpha / 2.0);
            assert!((t / want - 1.0).abs() < 0.01, "node {i}: {t} vs {want}");
        }
    }
}

#[test]
fn poisson_table_examples() {
    let ks = stable();
    let grid = Grid::new(1.0, 2.0, 256).unwrap();
    let (_, pt) = solve_all(ks, &grid, ProcessKind::Z, &ZGridSpec::default()).unwrap();
    assert!(pt.k.iter().all(|v| *v >= 0.0));
    assert!(pt.row_mass().iter().all(|m| (m - 1.0).abs() < 1e-2));
    let i = grid.len() / 2;
    assert_eq!(grid.node(i), 1.5);
    let below = pt.density_at(0.5).unwrap()[i];
    let above = pt.density_at(2.5).unwrap()[i];
    assert!((below / 0.113883 - 1.0).abs() < 1e-3, "{below}");
    assert!((above / 0.101557 - 1.0).abs() < 1e-3, "{above}");
    let ones = harmonic_extend(&pt, &BoundaryData::constant(1.0)).unwrap();
    for (u, m) in ones.iter().zip(pt.row_mass()) {
        assert!((u - m).abs() < 1e-12);
    }
    assert!(matches!(harmonic_extend(&pt, &BoundaryData::constant(-1.0)), Err(Error::Domain(_))));
}

#[test]
fn poisson_rejects_mismatched_inputs() {
    let ks = stable();
    let g1 = Grid::new(1.0, 2.0, 32).unwrap();
    let g2 = Grid::new(1.0, 2.0, 64).unwrap();
    let gen = build_generator(ks, &g1, ProcessKind::X).unwrap();
    let other = green(ks, &g2, ProcessKind::X);
    assert!(matches!(poisson_kernel(ks, &gen, &other, &ZGridSpec::default()), Err(Error::Config(_))));
}

#[test]
fn h_is_reproduced_by_its_exterior_values() {
    let ks = stable().clone();
    let grid = Grid::new(1e-8, 1.0, 256).unwrap();
    let (_, pt) = solve_all(&ks, &grid, ProcessKind::Z, &ZGridSpec::default()).unwrap();
    let hk = ks.clone();
    let data = BoundaryData::new(move |z| hk.h(z).unwrap(), Tail::Power { coef: ks.h(1.0).unwrap(), exponent: 0.5 });
    let u = harmonic_extend(&pt, &data).unwrap();
    for (i, v) in u.iter().enumerate() {
        let x = grid.node(i);
        if x > 0.1 && x < 0.9 {
            let h = ks.h(x).unwrap();
            assert!((v / h - 1.0).abs() < 0.05, "x = {x}: {v} vs {h}");
        }
    }
}

#[test]
fn exit_probability_examples() {
    let ks = stable();
    let xs = [0.5, 0.9, 0.99];
    let br = exit_alive_prob(ks, 1.0, &xs, &[1e-4, 1e-6, 1e-8], 256).unwrap();
    let (lo, hi) = (0.5f64.sqrt() / 8.0, 0.5f64.sqrt());
    assert!((lo - 0.0884).abs() < 1e-4 && (hi - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
    assert!(br[0].value >= lo && br[0].value <= hi, "{}", br[0].value);
    assert!(br.iter().all(|b| b.shrinking && b.width < 0.02));
    assert!(br[0].value < br[1].value && br[1].value < br[2].value);
    assert!(br[2].value > 0.85);
    assert!(exit_alive_prob(ks, 1.0, &[0.5], &[1e-6, 1e-4], 64).is_err());
}

#[test]
fn local_diagnostics() {
    let ks = stable();
    let hc = harnack_sup_ratio(ks, 1.0, 0.5, 128).unwrap();
    assert!(hc.c6 >= 1.0 && hc.c6.is_finite());
    assert!(harnack_sup_ratio(ks, 1.0, 1.5, 128).is_err());

    let fset = bhp_data(1.0);
    let rep = bhp_sup_ratio(ks, 1.0, 0.25, &fset, 1e-8, 128).unwrap();
    assert_eq!(rep.per_data.len(), 5);
    assert!(rep.per_data.iter().all(|v| *v >= 1.0 - 1e-12 && *v <= rep.c7));
    let bad = [ExteriorData::PointMass(2.0)];
    assert!(matches!(bhp_sup_ratio(ks, 1.0, 0.25, &bad, 1e-8, 128), Err(Error::Domain(_))));

    let l = small_interval_lower(ks, 1.0, 0.25, 1e-6, 256).unwrap();
    let lh = small_interval_lower(ks, 1.0, 0.25, 5e-7, 256).unwrap();
    assert!(l.lambda2 > 0.0 && lh.lambda2 >= l.lambda2 * (1.0 - 1e-3));
    let mut vals = Vec::new();
    for r in [0.5, 1.0, 2.0] {
        vals.push(small_interval_lower(ks, r, 0.25, 1e-6 * r, 256).unwrap().lambda2);
    }
    assert!(vals.iter().all(|v| (v / vals[1] - 1.0).abs() < 0.1));
}

#[test]
fn three_g_is_stable() {
    let ks = stable();
    let c = three_g_sup(&green(ks, &Grid::new(1.0, 2.0, 64).unwrap(), ProcessKind::X), ks).unwrap();
    let f = three_g_sup(&green(ks, &Grid::new(1.0, 2.0, 128).unwrap(), ProcessKind::X), ks).unwrap();
    assert!(c.is_finite() && (c / f - 1.0).abs() < 0.15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generator_is_symmetric(a in 0.5f64..3.0, w in 0.2f64..4.0, n in 16usize..48, k in 0usize..3, mix in any::<bool>()) {
        let ks = if mix { mixture() } else { stable() };
        let grid = Grid::new(a, a + w, n).unwrap();
        let gen = build_generator(ks, &grid, KINDS[k]).unwrap();
        let d = grid.delta();
        for i in 0..grid.len() {
            prop_assert!(gen.a[(i, i)] < 0.0);
            for m in 0..grid.len() {
                if i != m {
                    prop_assert!(gen.a[(i, m)] >= 0.0);
                }
                if i.abs_diff(m) >= 2 {
                    prop_assert!((gen.a[(i, m)] * d - gen.a[(m, i)] * d).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn green_positive_and_maximum_principle(a in 0.5f64..2.0, w in 0.5f64..2.0, n in 16usize..40, k in 0usize..3,
                                            level in 0.1f64..5.0, cut in 0.0f64..3.0) {
        let ks = stable();
        let grid = Grid::new(a, a + w, n).unwrap();
        let (g, pt) = solve_all(ks, &grid, KINDS[k], &ZGridSpec::default()).unwrap();
        prop_assert!(g.g.iter().all(|v| *v > 0.0));
        prop_assert!(g.asymmetry < 1e-8);
        prop_assert!(pt.k.iter().all(|v| *v >= 0.0));
        // data bounded by `level`
        let mid = a + 0.5 * w;
        let data = BoundaryData::new(move |z| if (z - mid).abs() > cut { level } else { 0.5 * level }, Tail::Constant(level));
        let u = harmonic_extend(&pt, &data).unwrap();
        for (v, m) in u.iter().zip(pt.row_mass()) {
            prop_assert!(*v >= 0.0);
            prop_assert!(*v <= level * m * (1.0 + 1e-12));
            prop_assert!(*v <= level + 1e-2);
        }
    }
}
