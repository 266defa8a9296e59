use curvlab::comparison::*;
use curvlab::exprdsl::parse;
use curvlab::numerics::geometric_nodes;
use curvlab::radial::zoo;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `u = sinh t` on `[0, 1]`, then `sinh 1 + cosh 1 (t − 1)`.
fn indicator_u(t: f64) -> (f64, f64) {
    if t <= 1.0 {
        (t.sinh(), t.cosh())
    } else {
        (1f64.sinh() + 1f64.cosh() * (t - 1.0), 1f64.cosh())
    }
}

#[test]
fn indicator_kernel_matches_closed_form() {
    let sol = solve_comparison(&parse("piecewise(1; 1; 0)").unwrap(), 50.0).unwrap();
    assert!((sol.du_limit - 1.543_080_634_815_243_7).abs() < 1e-6);
    assert!((sol.eta - 0.5f64.exp()).abs() < 1e-9, "{}", sol.eta);
    for i in 0..sol.t.len() {
        let (u, du) = indicator_u(sol.t[i]);
        assert!((sol.u[i] - u).abs() < 1e-8 * u && (sol.du[i] - du).abs() < 1e-8);
    }
    assert!(sol.verified(), "{:?}", sol.checks);
    let (c1, c2) = sol.h_constants().unwrap();
    for (t, h) in sol.t.iter().zip(&sol.h).filter(|(t, _)| **t >= 1.0) {
        assert!(t.ln() / sol.eta + c1 <= *h && *h <= t.ln() + c2);
    }
}

#[test]
fn cubic_decay_kernel() {
    let horizon = 1e3;
    let sol = solve_comparison(&parse("1/(1+s)^3").unwrap(), horizon).unwrap();
    // ∫₀ᴴ s/(1+s)³ ds = 1/2 − 1/(1+H) + 1/(2(1+H)²)
    let want = 0.5 - 1.0 / (1.0 + horizon) + 0.5 / (1.0 + horizon).powi(2);
    assert!((sol.moment - want).abs() < 1e-10);
    assert!(sol.du_limit < 0.5f64.exp() && sol.strict && sol.verified());
}

#[test]
fn sturm_model_cases_are_equalities() {
    let nodes = geometric_nodes(1e-4, 5.0, 400);
    for (g, k) in [("s", 0.0), ("sinh(s)", 1.0)] {
        let surface = SurfaceModel::from_profile(g, &parse(g).unwrap(), &nodes).unwrap();
        let sol = solve_comparison_on(&|_| Ok(k), &[], &nodes, "k").unwrap();
        let rep = sturm_check(&surface, &sol).unwrap();
        assert!(rep.order.pass && rep.riccati.pass, "{g}: {rep:?}");
        assert!(rep.max_relative_gap < 1e-8, "{g}: {}", rep.max_relative_gap);
    }
    assert!(SurfaceModel::from_profile("bad", &parse("s - 1").unwrap(), &nodes).is_err());
}

fn seshadri_fiber() -> SurfaceModel {
    let m = zoo("seshadri", None).unwrap().build().unwrap().with_dim(1);
    SurfaceModel::from_radial("seshadri", &m).truncated(10.0)
}

fn psi_example_fiber() -> SurfaceModel {
    let m = zoo("psi_example", None).unwrap().build().unwrap().with_dim(1);
    SurfaceModel::from_radial("psi_example", &m).truncated(50.0)
}

fn p_rational_fiber() -> SurfaceModel {
    let m = zoo("p_rational", None).unwrap().build().unwrap().with_dim(1);
    SurfaceModel::from_radial("p_rational", &m)
}

#[test]
fn sturm_is_strict_on_seshadri_fiber() {
    let surface = seshadri_fiber();
    let sol = surface.constant_comparison().unwrap();
    let rep = sturm_check(&surface, &sol).unwrap();
    assert!(rep.riccati.pass && rep.order.pass, "{rep:?}");
    assert!(rep.strict_from.unwrap() < 0.1, "{rep:?}");
}

fn random_triple(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    let mut t: Vec<f64> = (0..3).map(|_| (lo.ln() + rng.gen::<f64>() * (hi / lo).ln()).exp()).collect();
    t.sort_by(f64::total_cmp);
    [t[0], t[1], t[2]]
}

#[test]
fn three_circle_flat_equality() {
    let nodes = geometric_nodes(1e-3, 100.0, 1000);
    let flat = SurfaceModel::from_profile("flat", &parse("s").unwrap(), &nodes).unwrap();
    let sol = flat.constant_comparison().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for m in 1..=3 {
        for _ in 0..50 {
            let c = three_circle_check(&flat, &sol, m, random_triple(&mut rng, 1e-2, 90.0)).unwrap();
            assert!(c.slack.abs() <= 1e-9, "{c:?}");
        }
    }
    assert!(three_circle_check(&flat, &sol, 1, [2.0, 1.0, 3.0]).is_err());
}

#[test]
fn three_circle_strict_on_negative_surfaces() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for surface in [seshadri_fiber(), psi_example_fiber()] {
        let sol = surface.constant_comparison().unwrap();
        let (lo, hi) = (surface.s[0] * 10.0, surface.s[surface.s.len() - 1] * 0.9);
        for _ in 0..100 {
            let c = three_circle_check(&surface, &sol, 1, random_triple(&mut rng, lo, hi)).unwrap();
            assert!(c.slack > 0.0, "{}: {c:?}", surface.name);
        }
    }
}

#[test]
fn li_tam_limit() {
    let nodes = geometric_nodes(1e-3, 1e4, 1000);
    let flat = litam_quantities(&SurfaceModel::from_profile("flat", &parse("s").unwrap(), &nodes).unwrap()).unwrap();
    assert_eq!(flat.total_curvature, 0.0);
    assert!((flat.ell.unwrap() - 1.0).abs() < 1e-9);
    let rep = litam_quantities(&p_rational_fiber()).unwrap();
    assert!((rep.ell.unwrap() - 2.0).abs() < 0.05 * 2.0, "{:?}", rep.ell);
    assert!(rep.limit_gap.unwrap() < 0.05, "{:?} vs {}", rep.ell, rep.predicted);
    assert!((rep.total_curvature - rep.total_curvature_boundary).abs() < 1e-4 * rep.total_curvature.abs());
    for c in [&rep.length_bounds, &rep.area_bounds, &rep.area_routes, &rep.growth_bound] {
        assert!(c.pass, "{c:?}");
    }
}
