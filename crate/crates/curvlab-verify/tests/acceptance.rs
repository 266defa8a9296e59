//! Acceptance suite. Prints one PASS/FAIL line per criterion with the
//! measured values, then exits nonzero if any criterion failed.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use curvlab::calabi::{BaseModel, CalabiMetric};
use curvlab::comparison::*;
use curvlab::dimcount::{lower_bound, poly_dim, upper_bound, SectionTable};
use curvlab::exprdsl::{parse, Expr, Var};
use curvlab::genfun::{chi_to_q_u, xi_to_h, Completeness, GeneratingSpec, Grid, Kind, Params};
use curvlab::numerics::geometric_nodes;
use curvlab::planar::*;
use curvlab::radial::{dn_value, perturb_unbounded, verify_perturbation, zoo, zoo_all, RadialMetric};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn calabi(kind: Kind, src: &str, lambda: f64, rank: usize, grid: Grid) -> CalabiMetric {
    let spec = GeneratingSpec::with_params(kind, src.parse().unwrap(), Params { lambda, norm: 1.0, rank }).unwrap();
    CalabiMetric::new(&spec, BaseModel::new(1, -1.0, PI).unwrap(), &grid.nodes()).unwrap()
}

fn seshadri_oracle() -> Outcome {
    let m = zoo("seshadri", None).unwrap().build().unwrap();
    let (mut worst, mut min_dn) = (0.0f64, f64::INFINITY);
    for r in [0.0, 0.5, 1.0, 2.0, 5.0] {
        let c = m.curvature_at(r).unwrap();
        let e = f64::exp(r);
        let want = [-1.0 / ((r + 1.0) * e) - 1.0 / ((r + 1.0).powi(3) * e), -1.0 / (e * (r + 1.0)), -2.0 / e];
        for (got, w) in [c.a, c.b, c.c].into_iter().zip(want) {
            worst = worst.max(rel(got, w));
        }
        for n in 2..=5 {
            min_dn = min_dn.min(dn_value(n, c.a, c.b, c.c));
        }
    }
    (worst <= 1e-6 && min_dn > 0.0, format!("max rel err A,B,C = {worst:.2e}, min D_n = {min_dn:.3e}"))
}

fn barrier_identity() -> Outcome {
    let mut specs: Vec<String> = (1..=10).map(|i| format!("-{:?}*t/(1+t)", 0.2 * i as f64)).collect();
    specs.extend((1..=10).map(|i| format!("-log(1+{:?}*t)", 0.5 * i as f64)));
    let (mut worst0, mut failures) = (0.0f64, Vec::new());
    for src in &specs {
        let m = calabi(Kind::Chi, src, 1.0, 1, Grid::default());
        let r = m.sign_check_line();
        worst0 = worst0.max((r.barrier_at_zero + 1.0).abs());
        if !(r.bi_negative && r.checks.iter().all(|c| c.pass)) {
            failures.push(src.clone());
        }
    }
    let pass = worst0 <= 1e-10 && failures.is_empty();
    (pass, format!("{} metrics, max |barrier(0)+1| = {worst0:.1e}, failing: {failures:?}", specs.len()))
}

fn num_identity() -> Outcome {
    let mut specs: Vec<String> = (1..=5).map(|i| format!("-{:?}*t/(1+t)", 0.2 * i as f64)).collect();
    specs.extend([0.5, 1.0, 2.0, 4.0, 8.0].iter().map(|b| format!("-log(1+{b:?}*t)")));
    let (mut stated, mut derived) = (0.0f64, 0.0f64);
    for src in &specs {
        let m = calabi(Kind::ChiTilde, src, 1.0, 2, Grid::default());
        let r = m.num_identity_check();
        stated = stated.max(r.stated_residual);
        derived = derived.max(r.derived_residual);
    }
    (
        stated <= 1e-6,
        format!(
            "{} specs on {} nodes: stated form residual {stated:.3e}; T[chi~^2 - t chi~'] residual {derived:.3e}",
            specs.len(),
            Grid::default().n
        ),
    )
}

fn comparison_ode() -> Outcome {
    let sol = solve_comparison(&parse("piecewise(1; 1; 0)").unwrap(), 50.0).unwrap();
    let du_err = (sol.du_limit - 1f64.cosh()).abs();
    let eta_err = (sol.eta - 0.5f64.exp()).abs();
    let sandwich = sol.du.iter().all(|&d| d >= 1.0 && d <= sol.eta);
    (
        du_err <= 1e-6 && eta_err <= 1e-9 && sandwich,
        format!("u'(inf) = {:.7} (err {du_err:.1e}), eta = {:.9} (err {eta_err:.1e}), sandwich {sandwich}", sol.du_limit, sol.eta),
    )
}

fn random_triple(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    let mut t: Vec<f64> = (0..3).map(|_| (lo.ln() + rng.gen::<f64>() * (hi / lo).ln()).exp()).collect();
    t.sort_by(f64::total_cmp);
    [t[0], t[1], t[2]]
}

fn fiber(name: &str, hi: f64) -> SurfaceModel {
    let m = zoo(name, None).unwrap().build().unwrap().with_dim(1);
    SurfaceModel::from_radial(name, &m).truncated(hi)
}

fn three_circle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let flat = SurfaceModel::from_profile("flat", &parse("s").unwrap(), &geometric_nodes(1e-3, 100.0, 1000)).unwrap();
    let sol = flat.constant_comparison().unwrap();
    let mut flat_worst = 0.0f64;
    for m in 1..=3 {
        for _ in 0..50 {
            flat_worst = flat_worst.max(three_circle_check(&flat, &sol, m, random_triple(&mut rng, 1e-2, 90.0)).unwrap().slack.abs());
        }
    }
    let mut min_slack = f64::INFINITY;
    for surface in [fiber("seshadri", 10.0), fiber("psi_example", 50.0)] {
        let sol = surface.constant_comparison().unwrap();
        let (lo, hi) = (surface.s[0] * 10.0, surface.s[surface.s.len() - 1] * 0.9);
        for _ in 0..100 {
            min_slack = min_slack.min(three_circle_check(&surface, &sol, 1, random_triple(&mut rng, lo, hi)).unwrap().slack);
        }
    }
    (
        flat_worst <= 1e-9 && min_slack > 0.0,
        format!("flat max |slack| = {flat_worst:.1e} over 150 triples; curved min slack = {min_slack:.3e} over 200 triples"),
    )
}

fn volume_laws() -> Outcome {
    let mut bad = Vec::new();
    for member in zoo_all().unwrap() {
        let vol = member.build().unwrap().volume_report();
        if !vol.checks.iter().all(|c| c.pass) {
            bad.push(member.name.clone());
        }
    }
    let base = zoo("p_rational", None).unwrap().build().unwrap();
    let mut ratio_err = 0.0f64;
    for n in [2, 3] {
        let (_, ratio) = base.with_dim(n).volume_at(1e3).unwrap();
        ratio_err = ratio_err.max(rel(ratio, 2f64.powi(n as i32)));
    }
    let (mut stated, mut derived) = (f64::INFINITY, f64::INFINITY);
    for src in ["0", "-t/(1+t)", "-1+1/(1+t)"] {
        let tube = calabi(Kind::Chi, src, 1.0, 1, Grid::new(1e-6, 1e8, 4096).unwrap()).tube();
        stated = stated.min(tube.stated_bound_margin);
        derived = derived.min(tube.derived_bound_margin);
    }
    (
        bad.is_empty() && ratio_err <= 0.02 && stated >= 0.0,
        format!(
            "v/s^2 checks failing: {bad:?}; 2^n ratio err {ratio_err:.2e}; min (P - 2 lambda s~^2)/P = {stated:.3e}; \
             min (P - 1 - lambda s~^2)/P = {derived:.3e}"
        ),
    )
}

fn decay_sandwich() -> Outcome {
    let mut lower_bad = Vec::new();
    let mut stated_bad = Vec::new();
    let mut corrected_bad = Vec::new();
    for member in zoo_all().unwrap() {
        let m = member.build().unwrap();
        for n in 2..=4 {
            let d = m.with_dim(n).avg_decay().unwrap();
            let tag = format!("{}:{n}", member.name);
            if !d.lower.pass {
                lower_bad.push(tag.clone());
            }
            if !d.stated_upper.pass {
                stated_bad.push(tag.clone());
            }
            if !d.corrected_upper.pass {
                corrected_bad.push(tag);
            }
        }
    }
    let base = zoo("p_rational", None).unwrap().build().unwrap();
    let mut limit_err = 0.0f64;
    for n in 2..=4 {
        let d = base.with_dim(n).avg_decay().unwrap();
        limit_err = limit_err.max(rel(d.s2_avg_last, (n * n) as f64 / 2.0));
    }
    (
        lower_bad.is_empty() && stated_bad.is_empty() && limit_err <= 0.05,
        format!(
            "lower failing {lower_bad:?}; stated upper failing {stated_bad:?}; n^2 C0 upper failing {corrected_bad:?}; \
             s^2 avg limit err {limit_err:.2e}"
        ),
    )
}

fn li_tam() -> Outcome {
    let m = zoo("p_rational", None).unwrap().build().unwrap().with_dim(1);
    let rep = litam_quantities(&SurfaceModel::from_radial("p_rational", &m)).unwrap();
    let ell = rep.ell.unwrap_or(f64::NAN);
    let gap = rep.limit_gap.unwrap_or(f64::NAN);
    (
        gap < 0.05 && rel(ell, 2.0) < 0.05 && rep.length_bounds.pass,
        format!("ell = {ell:.4}, 1 - T_c/2pi = {:.4}, gap {gap:.2e}, length bounds {}", rep.predicted, rep.length_bounds.pass),
    )
}

fn planar_closed_forms() -> Outcome {
    let g = ConformalMetric::exponential_growth();
    let s = ConformalMetric::strip(None).unwrap();
    let mut vol_err = 0.0f64;
    for r in [0.5f64, 1.0, 2.0, 3.0] {
        let a = r.exp() - 1.0;
        vol_err = vol_err.max(rel(region_volume(&g, &Region::triangle(a)).unwrap(), 2.0 * (r.exp() - 1.0) - 2.0 * r));
        vol_err = vol_err.max(rel(region_volume(&s, &Region::under_level_curve(a)).unwrap(), r.exp() - 2.0 + (-r).exp()));
    }
    let mut k_err = 0.0f64;
    for (x, y) in [(0.1, 0.0), (1.0, 3.0), (7.5, -2.0), (40.0, 0.5)] {
        k_err = k_err.max((gauss_curvature(&g, x, y).unwrap().k + 1.0).abs());
    }
    let ys = [2.0, 4.0, 8.0, 16.0];
    let tc = total_curvature(&s, &ys, &|y| Region::rectangle(0.0, f64::INFINITY, 1.0, y)).unwrap();
    let tc_err = tc.values.iter().map(|&(y, v)| rel(v, y - 1.0)).fold(0.0, f64::max);
    let axis_err = [0.3, 1.0, 5.0, 1e3].iter().map(|&p| rel(axis_distance(&g, p).unwrap().distance, f64::ln_1p(p))).fold(0.0, f64::max);
    let h = growth_witness(&ConformalMetric::hadamard(), &[], 1.5, 30.0).unwrap().hadamard;
    let had = h.monotone && h.diverging && h.exceeds_ten_at.is_some_and(|x| x <= 30f64.exp());
    (
        vol_err <= 1e-8 && k_err <= 1e-8 && tc_err <= 1e-8 && axis_err <= 1e-11 && had,
        format!(
            "volume err {vol_err:.1e}, |K+1| {k_err:.1e}, total curvature err {tc_err:.1e}, axis err {axis_err:.1e}, \
             Hadamard monotone {} diverging {} past 10 at x = {:.3e}",
            h.monotone,
            h.diverging,
            h.exceeds_ten_at.unwrap_or(f64::NAN)
        ),
    )
}

fn count_monomials(r: usize, p: usize) -> u64 {
    if r == 1 {
        return 1;
    }
    (0..=p).map(|e| count_monomials(r - 1, p - e)).sum()
}

fn dimension_tables() -> Outcome {
    let table = SectionTable::canonical(2, 3).unwrap();
    let lows: Vec<String> = (0..=3).map(|k| lower_bound(&table, 1, k).unwrap().to_string()).collect();
    let up = upper_bound(&table, 2.5, 1.0).unwrap().value;
    let mut brute = true;
    for r in 1..=4u64 {
        for p in 0..=6u64 {
            brute &= poly_dim(r, p).unwrap() == BigUint::from(count_monomials(r as usize, p as usize));
        }
    }
    (
        lows == ["1", "3", "6", "11"] && up == BigUint::from(6u32) && brute,
        format!("lower k=0..3 = {lows:?}, upper(d=2.5) = {up}, poly_dim vs enumeration {brute}"),
    )
}

/// Fourth-order central difference.
fn fd(e: &Expr, x: f64) -> f64 {
    let h = 1e-3;
    let f = |d: f64| e.at(Var::X, x + d).unwrap();
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

fn round_trips() -> Outcome {
    let nodes = Grid::default().nodes();
    let mut chi_err = 0.0f64;
    for src in ["-t/(1+t)", "-log(1+t)", "-1+1/(1+t)", "-t/(1+t)^2 - t/(2+t)"] {
        chi_err = chi_err.max(chi_to_q_u(&parse(src).unwrap(), 1.0, &nodes).unwrap().round_trip_error().unwrap());
    }
    let xi_nodes = Grid::new(1e-6, 60.0, 4096).unwrap().nodes();
    let mut xi_err = 0.0f64;
    for src in ["-r-1+1/(r+1)", "-r/(1+r)", "-log(1+r)"] {
        xi_err = xi_err.max(xi_to_h(&parse(src).unwrap(), 1.0, &xi_nodes).unwrap().round_trip_error().unwrap());
    }
    let mut dual = 0.0f64;
    for member in zoo_all().unwrap() {
        let m: RadialMetric = member.build().unwrap();
        dual = dual.max(m.curvature_table().unwrap().dual_worst);
    }
    let exprs: Vec<Expr> = [
        "exp(x)*sinh(x)/(1+x^2)",
        "log(1+x^2)*cosh(x)",
        "sqrt(1+x^4)^3 - x",
        "(2+x)^1.5/(3-x)",
        "abs(x)*x^2",
        "exp(-x^2)*log(2+x)",
    ]
    .iter()
    .map(|s| parse(s).unwrap())
    .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ad_err = 0.0f64;
    for i in 0..1000 {
        let e = &exprs[i % exprs.len()];
        let x: f64 = rng.gen_range(-1.5..1.5);
        if x.abs() < 0.01 {
            continue;
        }
        let d = e.diff(Var::X).at(Var::X, x).unwrap();
        ad_err = ad_err.max((d - fd(e, x)).abs() / d.abs().max(1.0));
    }
    (
        chi_err <= 1e-8 && xi_err <= 1e-8 && dual <= 1e-6 && ad_err <= 1e-6,
        format!("chi {chi_err:.1e}, xi {xi_err:.1e}, dual A,B,C {dual:.1e}, AST vs FD {ad_err:.1e} at 1000 points"),
    )
}

fn perturbation() -> Outcome {
    let base = zoo("psi_example", None).unwrap().build().unwrap();
    let anchors: Vec<f64> = (1..=10).map(|k| k as f64).collect();
    let pert = perturb_unbounded(&base.spec, &anchors, 0.2).unwrap();
    let rep = verify_perturbation(&base, &pert).unwrap();
    let worst = rep.anchors.iter().map(|a| a.minus_a - a.k as f64).fold(f64::INFINITY, f64::min);
    let complete = rep.complete && base.completeness.verdict == Completeness::Complete;
    (
        rep.anchors.iter().all(|a| a.pass) && complete && rep.guard,
        format!("min (-A(s_k) - k) = {worst:.3e}, complete {complete}, guard margin {:.3e}", rep.guard_margin),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("Seshadri oracle", seshadri_oracle),
        ("barrier identity", barrier_identity),
        ("Num' identity", num_identity),
        ("comparison ODE", comparison_ode),
        ("three-circle", three_circle),
        ("volume laws", volume_laws),
        ("average decay sandwich", decay_sandwich),
        ("Li-Tam limit", li_tam),
        ("planar closed forms", planar_closed_forms),
        ("dimension tables", dimension_tables),
        ("round trips and dual formulas", round_trips),
        ("perturbation generator", perturbation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            (false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !pass {
            failed += 1;
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {:>2} {name} ({:.1} s): {detail}", i + 1, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
