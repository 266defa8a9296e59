use curvlab::calabi::{BaseModel, CalabiMetric};
use curvlab::genfun::{GeneratingSpec, Grid, Kind, Params};

fn build(kind: Kind, src: &str, lambda: f64, rank: usize, base_dim: usize, grid: Grid) -> CalabiMetric {
    let spec = GeneratingSpec::with_params(kind, src.parse().unwrap(), Params { lambda, norm: 1.0, rank }).unwrap();
    CalabiMetric::new(&spec, BaseModel::new(base_dim, -1.0, std::f64::consts::PI).unwrap(), &grid.nodes()).unwrap()
}

#[test]
fn line_components_match_stencils() {
    for src in ["-t/(1+t)", "-log(1+t)", "-t/(1+t)^2 - t/(2+t)"] {
        let m = build(Kind::Chi, src, 1.0, 1, 1, Grid::default());
        let w = m.line_stencil_check();
        assert!(w.iter().all(|&e| e < 1e-6), "{src}: {w:?}");
        assert!(m.barrier_derivative_check() < 1e-6, "{src}");
    }
}

#[test]
fn vector_components_match_stencils() {
    for src in ["-t/(1+t)", "-log(1+t)"] {
        let m = build(Kind::ChiTilde, src, 0.7, 2, 1, Grid::default());
        let w = m.vector_stencil_check();
        assert!(w.iter().all(|&e| e < 1e-6), "{src}: {w:?}");
        // −(u″ + tu‴) < 0 exactly when (tu″)′ > 0.
        assert!(m.vector_table().iter().all(|c| c.mu_rr < 0.0));
    }
}

#[test]
fn num_identity_in_derived_form() {
    let m = build(Kind::ChiTilde, "-t/(1+t)", 1.0, 2, 1, Grid::default());
    let r = m.num_identity_check();
    assert_eq!(r.num_at_zero, 0.0);
    assert!(r.derived_residual < 1e-6, "{r:?}");
    assert!(r.stated_residual > 0.1);
    assert!(r.num_positive);
}

#[test]
fn strict_chi_gives_negative_bisectional_curvature() {
    let m = build(Kind::Chi, "-t/(1+t)", 1.0, 1, 2, Grid::new(1e-6, 1e3, 1024).unwrap());
    let r = m.sign_check_line();
    assert!(r.bi_negative);
    let (worst, _, _) = m.bisectional_sweep(&[0.0, 0.5, 3.0, 100.0], 2500, 7).unwrap();
    assert!(worst < 0.0);
}

#[test]
fn tube_volume_laws() {
    // χ ≡ 0, λ = 1, n = 2: P = 1 + t, s̃ = √t, Vol/s̃⁴ → π·Vol(M)/2.
    let m = build(Kind::Chi, "0", 1.0, 1, 1, Grid::new(1e-6, 1e8, 4096).unwrap());
    let tube = m.tube();
    let last = tube.s.len() - 1;
    assert!((tube.s[last] - 1e4).abs() < 1e-6);
    assert!((tube.final_ratio / tube.derived_asymptote - 1.0).abs() < 1e-3);
    assert!(tube.derived_bound_margin >= -1e-12);
    assert!(tube.stated_bound_margin < 0.0);
    assert!(tube.lower_constant.unwrap() > 0.0);
    // χ → −1: ratio approaches πλ(1 − χ(∞))²/2·Vol(M).
    let m = build(Kind::Chi, "-1+1/(1+t)", 1.0, 1, 1, Grid::new(1e-6, 1e7, 4096).unwrap());
    let tube = m.tube();
    assert!((tube.final_ratio / tube.derived_asymptote - 1.0).abs() < 0.02, "{} vs {}", tube.final_ratio, tube.derived_asymptote);
    assert!(m.completeness().unwrap().verdict == curvlab::genfun::Completeness::Complete);
}

#[test]
fn direct_u_matches_chi_route() {
    // u = t + t²/4 has Q = 1 + t, the same metric as χ = −t/(1+t).
    let g = Grid::new(1e-4, 1e2, 512).unwrap();
    let a = build(Kind::DirectU, "t + t^2/4", 1.0, 1, 1, g);
    let b = build(Kind::Chi, "-t/(1+t)", 1.0, 1, 1, g);
    for (x, y) in a.line_table().iter().zip(b.line_table()) {
        assert!((x.ii - y.ii).abs() < 1e-10 && (x.i - y.i).abs() < 1e-10);
    }
}
