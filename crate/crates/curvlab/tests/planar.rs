use curvlab::planar::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn right_half_plane_has_curvature_minus_one() {
    let m = ConformalMetric::exponential_growth();
    for (x, y) in [(0.1, 0.0), (1.0, 3.0), (7.5, -2.0), (40.0, 0.5)] {
        let k = gauss_curvature(&m, x, y).unwrap();
        assert!((k.k + 1.0).abs() < 1e-8, "({x}, {y}): {}", k.k);
        assert!((k.k_stencil - k.k).abs() < 1e-6);
        assert!(!k.kink);
    }
    // Left of the seam the factor is log-convex as well.
    let xs: Vec<f64> = (0..40).map(|i| -4.0 + 0.1 * i as f64).collect();
    assert!(subharmonic_check(&m, &xs, &[0.0]).unwrap().pass);
}

#[test]
fn strip_curvature_above_the_strip() {
    let m = ConformalMetric::strip(None).unwrap();
    for (x, y) in [(0.5, 1.5), (2.0, 3.0), (10.0, 6.0)] {
        let k = gauss_curvature(&m, x, y).unwrap();
        let expected = -(1.0 - y).exp();
        assert!(rel(k.k, expected) < 1e-8, "({x}, {y})");
        assert!((k.k_stencil - k.k).abs() < 1e-6);
    }
}

#[test]
fn axis_distance_closed_forms() {
    let m = ConformalMetric::exponential_growth();
    let d = axis_distance(&m, std::f64::consts::E - 1.0).unwrap();
    assert!((d.distance - 1.0).abs() < 1e-12);
    assert!(d.minimal);
    for p in [0.3, 5.0, 1e3] {
        assert!(rel(axis_distance(&m, p).unwrap().distance, (1.0f64 + p).ln()) < 1e-11);
    }
    assert!((axis_distance(&ConformalMetric::flat(), 3.0).unwrap().distance - 3.0).abs() < 1e-14);
    assert!(axis_distance(&ConformalMetric::strip(None).unwrap(), 1.0).is_err());
}

#[test]
fn hadamard_axis_distance_is_loglog_plus_constant() {
    let m = ConformalMetric::hadamard();
    let c = axis_distance(&m, 5f64.exp()).unwrap().distance - 5f64.ln();
    for lx in [10.0, 20.0, 30.0] {
        let d = axis_distance(&m, f64::exp(lx)).unwrap().distance;
        assert!((d - lx.ln() - c).abs() < 1e-6, "ln x = {lx}");
    }
}

#[test]
fn no_competitor_path_beats_the_axis() {
    let m = ConformalMetric::exponential_growth();
    let p = 2.0;
    let d = axis_distance(&m, p).unwrap().distance;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n = rng.gen_range(1..5);
        let mut pts = vec![(0.0, 0.0)];
        for _ in 0..n {
            pts.push((rng.gen_range(-1.0..3.0), rng.gen_range(-3.0..3.0)));
        }
        pts.push((p, rng.gen_range(-3.0..3.0)));
        let len = path_length(&m, &pts).unwrap();
        assert!(len > d, "{pts:?}: {len} <= {d}");
    }
}

#[test]
fn volume_closed_forms() {
    let g = ConformalMetric::exponential_growth();
    let s = ConformalMetric::strip(None).unwrap();
    for r in [0.5f64, 1.0, 2.0, 3.0] {
        let a = r.exp() - 1.0;
        let tri = region_volume(&g, &Region::triangle(a)).unwrap();
        assert!(rel(tri, 2.0 * (r.exp() - 1.0) - 2.0 * r) < 1e-8, "triangle r = {r}: {tri}");
        let curved = region_volume(&s, &Region::under_level_curve(a)).unwrap();
        assert!(rel(curved, r.exp() - 2.0 + (-r).exp()) < 1e-8, "curve-bounded r = {r}: {curved}");
    }
    let tri = region_volume(&g, &Region::triangle(2f64.exp() - 1.0)).unwrap();
    assert!((tri - 8.778112).abs() < 1e-6);
    let curved = region_volume(&s, &Region::under_level_curve(2f64.exp() - 1.0)).unwrap();
    assert!((curved - 5.524391).abs() < 1e-6);
}

#[test]
fn total_curvature_grows_linearly_above_the_strip() {
    let m = ConformalMetric::strip(None).unwrap();
    let ys = [2.0, 4.0, 8.0, 16.0];
    let tc = total_curvature(&m, &ys, &|y| Region::rectangle(0.0, f64::INFINITY, 1.0, y)).unwrap();
    for &(y, v) in &tc.values {
        assert!(rel(v, y - 1.0) < 1e-8, "Y = {y}: {v}");
    }
    assert!(matches!(tc.verdict, TotalCurvatureVerdict::Divergent { rate } if (rate - 1.0).abs() < 1e-8));
}

#[test]
fn total_curvature_of_the_strip_band_converges_to_two() {
    let m = ConformalMetric::exponential_growth();
    let xs = [10.0, 100.0, 1e3, 1e4];
    let tc = total_curvature(&m, &xs, &|x| Region::rectangle(0.0, x, -1.0, 1.0)).unwrap();
    for &(x, v) in &tc.values {
        assert!(rel(v, 2.0 - 2.0 / (1.0 + x)) < 1e-9, "X = {x}: {v}");
    }
    assert!(matches!(tc.verdict, TotalCurvatureVerdict::Finite { .. }));
    let flat = total_curvature(&ConformalMetric::flat(), &xs, &|x| Region::rectangle(0.0, x, 0.0, 1.0)).unwrap();
    assert!(flat.values.iter().all(|v| v.1 == 0.0));
}

#[test]
fn growth_witnesses() {
    let m = ConformalMetric::exponential_growth();
    let w = growth_witness(&m, &[0.5, 1.0, 3.0, 10.0], 2.0, 5.0).unwrap();
    for row in &w.rows {
        assert!((row.witness - row.r).abs() < 1e-9 * row.r.max(1.0), "r = {}", row.r);
    }
    let flat = growth_witness(&ConformalMetric::flat(), &[2.0], 2.0, 5.0).unwrap();
    assert!((flat.rows[0].witness - 3f64.ln()).abs() < 1e-9);

    let h = growth_witness(&ConformalMetric::hadamard(), &[], 1.5, 30.0).unwrap();
    assert!(h.hadamard.monotone && h.hadamard.diverging);
    let at = h.hadamard.exceeds_ten_at.expect("slope passes 10");
    assert!(at <= 30f64.exp());
}
