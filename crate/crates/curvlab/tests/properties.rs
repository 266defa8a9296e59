use curvlab::calabi::{BaseModel, CalabiMetric};
use curvlab::comparison::solve_comparison;
use curvlab::dimcount::{lower_bound, upper_bound, DimensionTable, SectionTable};
use curvlab::exprdsl::{parse, Expr, Var};
use curvlab::genfun::{chi_to_q_u, GeneratingSpec, Grid, Kind, Params};
use curvlab::numerics::geometric_nodes;
use curvlab::planar::{axis_distance, gauss_curvature, path_length, ConformalMetric};
use curvlab::radial::zoo;
use curvlab::sampled::SampledFunction;
use proptest::prelude::*;

/// Smooth expressions in `x` built from every function node. Arguments of
/// `log` and `sqrt` are kept positive and divisors away from zero.
fn smooth_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(-2.0..2.0f64).prop_map(Expr::c), Just(Expr::var(Var::X))];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let one = || Expr::c(1.0);
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(move |(a, b)| a / (one() + b.powi(2))),
            (inner.clone(), 0..4i32).prop_map(|(a, n)| a.powi(n)),
            inner.clone().prop_map(|a| a.exp()),
            inner.clone().prop_map(move |a| (one() + a.powi(2)).log()),
            inner.clone().prop_map(move |a| (one() + a.powi(2)).sqrt()),
            inner.clone().prop_map(|a| a.sinh()),
            inner.clone().prop_map(|a| a.cosh()),
            inner.clone().prop_map(move |a| (one() + a.powi(2)).pow(Expr::c(-0.5))),
            inner.prop_map(|a| -a),
        ]
    })
}

/// Fourth-order central difference.
fn fd(e: &Expr, x: f64) -> Option<f64> {
    let h = 1e-3;
    let f = |d: f64| e.at(Var::X, x + d).ok();
    Some((f(-2.0 * h)? - 8.0 * f(-h)? + 8.0 * f(h)? - f(2.0 * h)?) / (12.0 * h))
}

/// User tables with `h⁰ = 1` at `k = 0` and rows up to `k = 31`.
fn section_table() -> impl Strategy<Value = SectionTable> {
    prop::collection::vec(0u64..50, 31).prop_map(|rest| SectionTable::user([vec![1], rest].concat()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn derivatives_match_finite_differences(e in smooth_expr(), x in -1.0..1.0f64) {
        let (Ok(v), Ok(d)) = (e.at(Var::X, x), e.diff(Var::X).at(Var::X, x)) else { return Ok(()) };
        prop_assume!(v.abs() < 1e6 && d.abs() < 1e6);
        let Some(num) = fd(&e, x) else { return Ok(()) };
        prop_assert!((d - num).abs() <= 1e-6 * d.abs().max(v.abs()).max(1.0), "{e}: {d} vs {num}");
    }

    #[test]
    fn printing_round_trips(e in smooth_expr(), x in -1.0..1.0f64) {
        let back = parse(&e.to_string()).unwrap();
        match (e.at(Var::X, x), back.at(Var::X, x)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{e}: {a} vs {b}"),
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn interpolation_reproduces_nodes(steps in prop::collection::vec(0.01..1.0f64, 2..40), seed in any::<u64>()) {
        let mut x = 0.0;
        let grid: Vec<f64> = steps.iter().map(|h| { x += h; x }).collect();
        let values: Vec<f64> = grid.iter().enumerate().map(|(i, g)| (g * (seed % 97) as f64).sin() + i as f64 * 0.1).collect();
        let f = SampledFunction::new(grid.clone(), values.clone()).unwrap();
        for (g, v) in grid.iter().zip(&values) {
            prop_assert_eq!(f.eval(*g).unwrap(), *v);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strict_chi_profiles(a in 0.1..3.0f64, b in 0.2..5.0f64) {
        let chi = parse(&format!("-{a:?}*t/({b:?}+t)")).unwrap();
        let nodes = geometric_nodes(1e-6, 1e4, 1024);
        let prof = chi_to_q_u(&chi, 1.0, &nodes).unwrap();
        let q = &prof.q.values;
        prop_assert!(prof.round_trip_error().unwrap() <= 1e-8);
        prop_assert!(q.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(q.iter().all(|&v| v >= prof.q0()));
        prop_assert!(prof.d2u.iter().all(|&v| v > 0.0));
        let tu2: Vec<f64> = nodes.iter().zip(&prof.d2u).map(|(t, d)| t * d).collect();
        prop_assert!(tu2.windows(2).all(|w| w[1] > w[0]));
        for arr in [&prof.u, &prof.du] {
            prop_assert!(arr.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn barrier_starts_at_minus_one(a in 0.1..3.0f64, b in 0.2..5.0f64, lambda in 0.2..3.0f64) {
        let expr: Expr = format!("-{a:?}*t/({b:?}+t)").parse().unwrap();
        let spec = GeneratingSpec::with_params(Kind::Chi, expr, Params { lambda, norm: 1.0, rank: 1 }).unwrap();
        let base = BaseModel::new(1, -1.0, 1.0).unwrap();
        let m = CalabiMetric::new(&spec, base, &Grid::new(1e-6, 1e3, 512).unwrap().nodes()).unwrap();
        let r = m.sign_check_line();
        prop_assert!((r.barrier_at_zero + 1.0).abs() <= 1e-10);
        prop_assert!(r.bi_negative, "{:?}", r.checks);
        prop_assert!(r.checks.iter().all(|c| c.pass), "{:?}", r.checks);
    }

    #[test]
    fn comparison_sandwich(a in 0.05..2.0f64, c in 0.2..2.0f64) {
        let k = parse(&format!("piecewise({c:?}; {a:?}; 0)")).unwrap();
        let sol = solve_comparison(&k, 20.0).unwrap();
        prop_assert!((sol.eta - (0.5 * a * c * c).exp()).abs() <= 1e-9 * sol.eta);
        prop_assert!(sol.du.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        for (du, m) in sol.du.iter().zip(&sol.moment_to) {
            prop_assert!(*du >= 1.0 - 1e-12 && *du <= sol.eta * (1.0 + 1e-9));
            prop_assert!(du.ln() <= m + 1e-9);
        }
        let (c1, c2) = sol.h_constants().unwrap();
        prop_assert!(c1.is_finite() && c2.is_finite());
        prop_assert!(sol.verified());
    }

    #[test]
    fn section_bounds_are_monotone(table in section_table(), k in 0u64..30, r in 1u64..5) {
        let low = |r, k| lower_bound(&table, r, k).unwrap();
        prop_assert!(low(r, k) <= low(r, k + 1));
        prop_assert!(low(r, k) <= low(r + 1, k));
        prop_assert_eq!(low(1, k), upper_bound(&table, k as f64, 1.0).unwrap().value);
    }

    #[test]
    fn lower_never_exceeds_upper(table in section_table(), eta in 1.0..3.0f64, d in 0.0..10.0f64) {
        prop_assert!(DimensionTable::new(&table, 1, eta, &[d]).unwrap().consistent());
    }

    #[test]
    fn planar_curvature_matches_stencil(x in -3.0..3.0f64, y in -3.0..3.0f64) {
        prop_assume!(x.abs() > 0.05);
        let c = gauss_curvature(&ConformalMetric::exponential_growth(), x, y).unwrap();
        prop_assert!((c.k - c.k_stencil).abs() <= 1e-6 * c.k.abs().max(1.0), "{c:?}");
    }

    #[test]
    fn no_path_is_shorter_than_the_axis(
        p in 0.2..3.0f64,
        mids in prop::collection::vec((-1.0..3.0f64, -3.0..3.0f64), 0..4),
        end_y in -3.0..3.0f64,
    ) {
        let m = ConformalMetric::exponential_growth();
        let d = axis_distance(&m, p).unwrap().distance;
        let mut pts = vec![(0.0, 0.0)];
        pts.extend(mids.iter().copied());
        pts.push((p, end_y));
        prop_assert!(path_length(&m, &pts).unwrap() >= d * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn volume_ratio_never_decreases(alpha in 0.2..5.0f64) {
        let m = zoo("p_rational", Some(alpha)).unwrap().build().unwrap();
        let vol = m.volume_report();
        prop_assert!(vol.checks.iter().all(|c| c.pass), "{:?}", vol.checks);
        prop_assert!(vol.ratio.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)));
        prop_assert!(vol.ratio.iter().all(|&r| r >= 1.0 - 1e-9));
    }
}
