//! One function per subcommand. Each takes its merged arguments and the
//! global settings and returns a [`Report`].

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use curvlab::calabi::{BaseModel, CalabiMetric};
use curvlab::comparison::{
    litam_quantities, solve_comparison_tol, sturm_check, three_circle_check, SurfaceModel, ODE_RTOL,
};
use curvlab::dimcount::{lower_bound, DimensionTable, SectionTable, RIGIDITY_NOTE};
use curvlab::exprdsl::parse;
use curvlab::genfun::{validate, Check, Completeness, GeneratingSpec, Grid, Kind, Mode, Params};
use curvlab::numerics::geometric_nodes;
use curvlab::planar::{
    axis_distance, axis_point, gauss_curvature, growth_witness, path_length, region_volume_tol, subharmonic_check,
    total_curvature, ConformalMetric, Region, TotalCurvatureVerdict,
};
use curvlab::radial::{classify, zoo, RadialMetric, ZooMember, DUAL_TOL, ZOO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Globals;
use crate::output::{num, Report, Table};

fn pass(name: &str, ok: bool, margin: f64, at: f64) -> Check {
    Check::from_margin(name, ok, margin, at)
}

// ---------------------------------------------------------------------------
// generating-function specs

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
pub struct SpecArgs {
    /// chi, chi-tilde or u (fiber kinds); f, xi, p or psi (radial kinds)
    #[arg(long)]
    pub kind: Option<String>,
    /// Generating function, e.g. "-t/(1+t)"
    #[arg(long)]
    pub expr: Option<String>,
    /// Take the spec from a zoo member instead
    #[arg(long)]
    pub zoo: Option<String>,
    /// Zoo member parameter
    #[arg(long)]
    pub param: Option<f64>,
    /// Complex dimension of a radial metric
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub norm: Option<f64>,
    /// Rank of the bundle for fiber kinds
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub base_dim: Option<usize>,
    /// Holomorphic sectional curvature of the base
    #[arg(long, allow_hyphen_values = true)]
    pub hsc: Option<f64>,
    /// Volume of the base
    #[arg(long)]
    pub vol: Option<f64>,
    /// strict or weak
    #[arg(long)]
    pub mode: Option<String>,
    /// Extra evaluation points (curvature only)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub at: Option<Vec<f64>>,
}

enum Model {
    Radial { spec: GeneratingSpec, metric: Box<RadialMetric> },
    Fiber { spec: GeneratingSpec, metric: Box<CalabiMetric> },
}

fn parse_mode(m: Option<&str>) -> Result<Mode> {
    match m.unwrap_or("strict") {
        "strict" => Ok(Mode::Strict),
        "weak" => Ok(Mode::Weak),
        other => bail!("mode must be strict or weak, got `{other}`"),
    }
}

fn build_model(a: &SpecArgs, g: &Globals) -> Result<(Model, Grid)> {
    if let Some(name) = &a.zoo {
        let member = zoo(name, a.param)?;
        let grid = g.grid.unwrap_or(member.grid);
        let metric = RadialMetric::build(&member.spec, a.dim.unwrap_or(member.dim), &grid)?;
        return Ok((Model::Radial { spec: member.spec, metric: Box::new(metric) }, grid));
    }
    let kind: Kind = a.kind.as_deref().ok_or_else(|| anyhow!("missing `kind` (or `zoo`)"))?.parse()?;
    let src = a.expr.as_deref().ok_or_else(|| anyhow!("missing `expr`"))?;
    let expr = parse(src).with_context(|| format!("parsing `expr` = {src:?}"))?;
    let params = Params { lambda: a.lambda.unwrap_or(1.0), norm: a.norm.unwrap_or(1.0), rank: a.rank.unwrap_or(1) };
    let spec = GeneratingSpec::with_params(kind, expr, params)?;
    let grid = g.grid.unwrap_or_default();
    if kind.is_fiber() {
        let base = BaseModel::new(a.base_dim.unwrap_or(1), a.hsc.unwrap_or(-1.0), a.vol.unwrap_or(1.0))?;
        let metric = CalabiMetric::new(&spec, base, &grid.nodes())?;
        Ok((Model::Fiber { spec, metric: Box::new(metric) }, grid))
    } else {
        let metric = RadialMetric::build(&spec, a.dim.unwrap_or(2), &grid)?;
        Ok((Model::Radial { spec, metric: Box::new(metric) }, grid))
    }
}

fn fiber_checks(r: &mut Report, spec: &GeneratingSpec, m: &CalabiMetric, seed: u64) -> Result<()> {
    let comp = m.completeness()?;
    r.check(pass("complete", comp.verdict == Completeness::Complete, comp.tail_ratio.unwrap_or(f64::NAN), comp.horizon));
    r.result("completeness", comp);
    if m.rank == 1 {
        let sign = m.sign_check_line();
        for c in &sign.checks {
            r.check(c.clone());
        }
        let ts: Vec<f64> = geometric_nodes(m.nodes()[0], m.nodes()[m.nodes().len() - 1], 16);
        let (worst, at, _) = m.bisectional_sweep(&ts, 256, seed)?;
        if sign.bi_negative {
            r.check(pass("sampled bisectional curvature < 0", worst < 0.0, -worst, at));
        }
        r.result("bi_negative", sign.bi_negative);
        r.result("bi_nonpositive", sign.bi_nonpositive);
        r.result("barrier_at_zero", sign.barrier_at_zero);
        r.result("bisectional_sample_max", worst);
        r.counter("bisectional_samples", ts.len() * 256);
    } else {
        let table = m.vector_table();
        let (worst, at) = table.iter().map(|c| (-c.mu_rr, c.t)).fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a });
        r.check(pass("mu-mu fiber component < 0", worst > 0.0, worst, at));
    }
    if spec.kind == Kind::ChiTilde {
        let num = m.num_identity_check();
        r.check(pass("Num' = T[chi~^2 - t chi~']", num.derived_residual <= 1e-6, 1e-6 - num.derived_residual, num.location));
        r.result("num_identity", num);
    }
    Ok(())
}

fn inputs(args: &impl Serialize, g: &Globals) -> Value {
    json!({ "args": args, "grid": g.grid_str(), "seed": g.seed, "tol": g.tol })
}

pub fn metric(a: &SpecArgs, g: &Globals) -> Result<Report> {
    let mut r = Report::new("metric", inputs(a, g));
    let (model, grid) = build_model(a, g)?;
    let mode = parse_mode(a.mode.as_deref())?;
    r.counter("nodes", grid.n);
    match model {
        Model::Radial { spec, metric: m } => {
            let verdict = validate(&spec, mode, &grid)?;
            r.checks.extend(verdict.checks.iter().cloned());
            r.checks.extend(m.checks.iter().cloned());
            r.result("valid", verdict.valid);
            r.result("completeness", m.completeness);
            r.result("growth", m.growth_exponents());
            r.result("origin", m.origin()?);
            r.result("recovered_psi_error", m.recovered_psi_error());
            let s = &m.samples;
            r.table = Some(Table::from_columns(
                &["arg", "r", "s", "f", "h", "xi", "x", "p", "psi", "v"],
                &[&s.arg, &s.r, &s.s, &s.f, &s.h, &s.xi, &s.x, &s.p, &s.psi, &s.v],
            ));
            r.summary.push(format!("valid = {}, complete = {:?}", verdict.valid, m.completeness.verdict));
        }
        Model::Fiber { spec, metric: m } => {
            let verdict = validate(&spec, mode, &grid)?;
            r.checks.extend(verdict.checks.iter().cloned());
            r.result("valid", verdict.valid);
            fiber_checks(&mut r, &spec, &m, g.seed)?;
            let t = m.nodes();
            let line = m.line_table();
            let col = |f: fn(&curvlab::calabi::LineComponents) -> f64| line.iter().map(f).collect::<Vec<_>>();
            let (q, p, barrier) = (col(|c| c.q), col(|c| c.p), col(|c| c.barrier));
            r.table = Some(Table::from_columns(
                &["t", "chi", "q", "du", "p", "barrier"],
                &[t, m.fiber.chi(), &q, &m.fiber.du, &p, &barrier],
            ));
            r.summary.push(format!("valid = {}", verdict.valid));
        }
    }
    Ok(r)
}

pub fn curvature(a: &SpecArgs, g: &Globals) -> Result<Report> {
    let mut r = Report::new("curvature", inputs(a, g));
    let (model, grid) = build_model(a, g)?;
    r.counter("nodes", grid.n);
    match model {
        Model::Radial { metric: m, .. } => {
            let rep = m.curvature()?;
            let cls = classify(&rep);
            r.check(pass("A, B, C by two routes", rep.dual_worst <= DUAL_TOL, DUAL_TOL - rep.dual_worst, rep.dual_location));
            r.result("classification", &cls);
            if let Some(at) = &a.at {
                let pts = at.iter().map(|&x| m.curvature_at(x)).collect::<curvlab::error::Result<Vec<_>>>()?;
                r.result("points", pts);
            }
            let mut t = Table::new(&["arg", "r", "s", "a", "b", "c", "d", "dn", "dual_error"]);
            for c in &rep.samples {
                t.push_nums(&[c.arg, c.r, c.s, c.a, c.b, c.c, c.d.unwrap_or(f64::NAN), c.dn.unwrap_or(f64::NAN), c.dual_error]);
            }
            r.table = Some(t);
            r.summary.push(format!(
                "bisectional {:?}, sectional negative {}, operator negative {}",
                cls.bisectional, cls.sectional_negative, cls.operator_negative
            ));
        }
        Model::Fiber { metric: m, .. } => {
            if m.rank == 1 {
                let w = m.line_stencil_check();
                let worst = w.iter().copied().fold(0.0, f64::max);
                r.check(pass("components match stencils", worst <= 1e-6, 1e-6 - worst, f64::NAN));
                let sign = m.sign_check_line();
                r.checks.extend(sign.checks.iter().cloned());
                r.result("bi_negative", sign.bi_negative);
                if let Some(at) = &a.at {
                    let pts = at.iter().map(|&x| m.curvature_line(x)).collect::<curvlab::error::Result<Vec<_>>>()?;
                    r.result("points", pts);
                }
                let mut t = Table::new(&["t", "p", "q", "base", "mixed", "fiber", "i", "ii", "barrier"]);
                for c in m.line_table() {
                    t.push_nums(&[c.t, c.p, c.q, c.base, c.mixed, c.fiber, c.i, c.ii, c.barrier]);
                }
                r.table = Some(t);
                r.summary.push(format!("bisectional curvature negative: {}", sign.bi_negative));
            } else {
                let w = m.vector_stencil_check();
                let worst = w.iter().copied().fold(0.0, f64::max);
                r.check(pass("components match stencils", worst <= 1e-6, 1e-6 - worst, f64::NAN));
                if let Some(at) = &a.at {
                    let pts = at.iter().map(|&x| m.curvature_vector(x)).collect::<curvlab::error::Result<Vec<_>>>()?;
                    r.result("points", pts);
                }
                let mut t = Table::new(&["t", "p", "s", "tt", "base", "kj_rr", "rr_rr", "mu_rr", "mu_mu", "mu_alpha", "kj_mu"]);
                for c in m.vector_table() {
                    t.push_nums(&[c.t, c.p, c.s, c.tt, c.base, c.kj_rr, c.rr_rr, c.mu_rr, c.mu_mu, c.mu_alpha, c.kj_mu]);
                }
                r.table = Some(t);
                r.summary.push(format!("stencil agreement {worst:e}"));
            }
        }
    }
    Ok(r)
}

pub fn volume(a: &SpecArgs, g: &Globals) -> Result<Report> {
    let mut r = Report::new("volume", inputs(a, g));
    let (model, grid) = build_model(a, g)?;
    r.counter("nodes", grid.n);
    match model {
        Model::Radial { metric: m, .. } => {
            let vol = m.volume_report();
            r.checks.extend(vol.checks.iter().cloned());
            let decay = m.avg_decay()?;
            r.check(decay.lower.clone());
            r.check(decay.corrected_upper.clone());
            r.result("final_ratio", vol.final_ratio);
            r.result("tail_trend", vol.tail_trend);
            r.result("growth", m.growth_exponents());
            r.result(
                "average_decay",
                json!({
                    "stated_factor": decay.stated_factor,
                    "corrected_factor": decay.corrected_factor,
                    "stated_upper": decay.stated_upper,
                    "s2_avg_last": decay.s2_avg_last,
                    "s2_avg_over_log_last": decay.s2_avg_over_log_last,
                }),
            );
            r.table = Some(Table::from_columns(&["s", "volume", "ratio"], &[&vol.s, &vol.volume, &vol.ratio]));
            r.summary.push(format!("Vol/(c_n s^2n) at the horizon = {}", vol.final_ratio));
        }
        Model::Fiber { metric: m, .. } => {
            let tube = m.tube();
            r.check(pass(
                "P >= 1 + lambda s~^2",
                tube.derived_bound_margin >= -1e-12,
                tube.derived_bound_margin,
                tube.derived_bound_location,
            ));
            r.result(
                "tube",
                json!({
                    "stated_bound_margin": tube.stated_bound_margin,
                    "stated_bound_location": tube.stated_bound_location,
                    "lower_constant": tube.lower_constant,
                    "final_ratio": tube.final_ratio,
                    "chi_limit": tube.chi_limit,
                    "stated_asymptote": tube.stated_asymptote,
                    "derived_asymptote": tube.derived_asymptote,
                }),
            );
            r.table = Some(Table::from_columns(&["s", "p", "volume"], &[&tube.s, &tube.p, &tube.volume]));
            r.summary.push(format!("Vol T/s~^2n at the horizon = {}", tube.final_ratio));
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// comparison

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
pub struct CompareArgs {
    /// Curvature bound k >= 0 as an expression in one variable
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub horizon: Option<f64>,
}

pub fn compare(a: &CompareArgs, g: &Globals) -> Result<Report> {
    let mut r = Report::new("compare", inputs(a, g));
    let src = a.k.as_deref().ok_or_else(|| anyhow!("missing `k`"))?;
    let k = parse(src).with_context(|| format!("parsing `k` = {src:?}"))?;
    let sol = solve_comparison_tol(&k, a.horizon.unwrap_or(50.0), g.tol.unwrap_or(ODE_RTOL))?;
    r.checks.extend(sol.checks.iter().cloned());
    if !sol.k_vanishes {
        let gap = sol.eta - sol.du_limit;
        r.check(pass("u'(horizon) < eta", sol.strict, gap, sol.horizon));
    }
    r.result("eta", sol.eta);
    r.result("du_limit", sol.du_limit);
    r.result("moment", sol.moment);
    r.result("h_constants", sol.h_constants());
    r.result("k_vanishes", sol.k_vanishes);
    r.counter("ode_evaluations", sol.evaluations);
    r.counter("ode_steps", sol.steps);
    r.counter("nodes", sol.t.len());
    r.table = Some(Table::from_columns(&["t", "k", "u", "du", "h"], &[&sol.t, &sol.k, &sol.u, &sol.du, &sol.h]));
    r.summary.push(format!("eta = {:.5}, u'_limit = {:.5}", sol.eta, sol.du_limit));
    Ok(r)
}

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
pub struct ThreeCircleArgs {
    /// Zoo member whose n = 1 fiber is the surface
    #[arg(long)]
    pub surface: Option<String>,
    /// Polar profile G(s) instead of a zoo member, e.g. "s" or "sinh(s)"
    #[arg(long)]
    pub profile: Option<String>,
    /// Largest s used
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Exponent m of f = z^m
    #[arg(long)]
    pub m: Option<u32>,
    /// Number of random triples
    #[arg(long)]
    pub count: Option<usize>,
}

fn surface_model(name: Option<&str>, profile: Option<&str>, horizon: Option<f64>) -> Result<SurfaceModel> {
    match (name, profile) {
        (Some(n), None) => {
            let member = zoo(n, None)?;
            let m = RadialMetric::build(&member.spec, 1, &member.grid)?;
            Ok(SurfaceModel::from_radial(n, &m).truncated(horizon.unwrap_or(50.0)))
        }
        (None, Some(p)) => {
            let e = parse(p).with_context(|| format!("parsing `profile` = {p:?}"))?;
            let nodes = geometric_nodes(1e-3, horizon.unwrap_or(100.0), 1000);
            Ok(SurfaceModel::from_profile(p, &e, &nodes)?)
        }
        _ => bail!("give exactly one of `surface` and `profile`"),
    }
}

pub fn three_circle(a: &ThreeCircleArgs, g: &Globals) -> Result<Report> {
    let mut r = Report::new("three_circle", inputs(a, g));
    let surface = surface_model(a.surface.as_deref(), a.profile.as_deref(), a.horizon)?;
    let sol = surface.constant_comparison()?;
    let flat = sol.k_vanishes;
    let (lo, hi) = (surface.s[0] * 10.0, surface.s[surface.s.len() - 1] * 0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let m = a.m.unwrap_or(1);
    let mut t = Table::new(&["s1", "s2", "s3", "lhs", "rhs", "slack"]);
    let (mut worst, mut worst_at, mut largest) = (f64::INFINITY, f64::NAN, 0.0_f64);
    let count = a.count.unwrap_or(100);
    for _ in 0..count {
        let mut s: Vec<f64> = (0..3).map(|_| (lo.ln() + rng.gen::<f64>() * (hi / lo).ln()).exp()).collect();
        s.sort_by(f64::total_cmp);
        let c = three_circle_check(&surface, &sol, m, [s[0], s[1], s[2]])?;
        if c.slack < worst {
            worst = c.slack;
            worst_at = c.s[1];
        }
        largest = largest.max(c.slack.abs());
        t.push_nums(&[c.s[0], c.s[1], c.s[2], c.lhs, c.rhs, c.slack]);
    }
    if count > 0 {
        if flat {
            r.check(pass("equality on a flat surface", largest <= 1e-9, 1e-9 - largest, worst_at));
        } else {
            r.check(pass("three-circle slack > 0", worst > 0.0, worst, worst_at));
        }
    }
    let sturm = sturm_check(&surface, &sol)?;
    r.result("comparison_k", sol.k.first().copied().unwrap_or(0.0));
    r.result("eta", sol.eta);
    r.result("min_slack", (count > 0).then_some(worst));
    r.result("max_abs_slack", largest);
    r.result("sturm", sturm);
    r.counter("triples", count);
    r.counter("ode_evaluations", sol.evaluations);
    r.counter("nodes", surface.s.len());
    if let Ok(lt) = litam_quantities(&surface) {
        r.result(
            "li_tam",
            json!({
                "ell": lt.ell,
                "predicted": lt.predicted,
                "limit_gap": lt.limit_gap,
                "total_curvature": lt.total_curvature,
                "eta": lt.eta,
                "length_bounds": lt.length_bounds,
                "area_bounds": lt.area_bounds,
            }),
        );
    }
    r.table = Some(t);
    r.summary.push(format!("{count} triples, smallest slack {}", num(worst)));
    Ok(r)
}

// ---------------------------------------------------------------------------
// dimension counts

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
pub struct DimsArgs {
    #[arg(long)]
    pub genus: Option<u64>,
    /// canonical, degree or table
    #[arg(long)]
    pub mode: Option<String>,
    /// deg L^-1 (degree mode)
    #[arg(long)]
    pub e: Option<u64>,
    /// CSV file of k,h0 rows (table mode)
    #[arg(long)]
    pub table: Option<String>,
    /// Rank of the bundle
    #[arg(long)]
    pub r: Option<u64>,
    /// Degree cutoff of the lower bound
    #[arg(long)]
    pub k: Option<u64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Growth degrees for the table rows
    #[arg(long, value_delimiter = ',')]
    pub d: Option<Vec<f64>>,
}

pub fn dims(a: &DimsArgs, g: &Globals) -> Result<Report> {
    let mut r = Report::new("dims", inputs(a, g));
    let rank = a.r.unwrap_or(1);
    let eta = a.eta.unwrap_or(1.0);
    let degrees = a.d.clone().unwrap_or_default();
    let k = a.k.unwrap_or(0);
    let kmax = degrees.iter().map(|d| (eta * d).floor() as u64).max().unwrap_or(0).max(k);
    let table = match a.mode.as_deref().unwrap_or("canonical") {
        "canonical" => SectionTable::canonical(a.genus.ok_or_else(|| anyhow!("missing `genus`"))?, kmax)?,
        "degree" => SectionTable::degree(
            a.genus.ok_or_else(|| anyhow!("missing `genus`"))?,
            a.e.ok_or_else(|| anyhow!("missing `e`"))?,
            kmax,
        )?,
        "table" => {
            let path = a.table.as_deref().ok_or_else(|| anyhow!("missing `table`"))?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            SectionTable::from_csv(&text)?
        }
        other => bail!("mode must be canonical, degree or table, got `{other}`"),
    };
    let lower = lower_bound(&table, rank, k)?;
    let rows = DimensionTable::new(&table, rank, eta, &degrees)?;
    r.check(pass("lower <= upper", rows.consistent(), 0.0, f64::NAN));
    r.result("lower_bound", lower.to_string());
    r.result("sections", &table);
    r.result("rows", &rows);
    r.result("rigidity_note", RIGIDITY_NOTE);
    let mut t = Table::new(&["d", "lower", "cutoff", "upper"]);
    for row in &rows.rows {
        let (cutoff, upper) = row.upper.as_ref().map_or((String::new(), String::new()), |u| (u.cutoff.to_string(), u.value.to_string()));
        t.push(vec![num(row.d), row.lower.to_string(), cutoff, upper]);
    }
    r.table = Some(t);
    r.counter("table_entries", table.values.len());
    r.summary.push(format!("lower bound (r = {rank}, k = {k}) = {lower}"));
    Ok(r)
}

// ---------------------------------------------------------------------------
// planar metrics

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
pub struct PlanarArgs {
    /// flat, exponential_growth, strip or hadamard
    #[arg(long)]
    pub example: Option<String>,
    /// Conformal factor in x and y instead of an example
    #[arg(long)]
    pub lambda: Option<String>,
    /// Corner rounding of the strip example; sharp when absent
    #[arg(long)]
    pub eps: Option<f64>,
    /// Distances for the witness and volume rows
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Random competitor paths for the minimality certificate
    #[arg(long)]
    pub paths: Option<usize>,
    /// Window of ln x for the Hadamard estimate, as lo:hi
    #[arg(long)]
    pub window: Option<String>,
}

fn planar_metric(a: &PlanarArgs) -> Result<ConformalMetric> {
    match (&a.example, &a.lambda) {
        (_, Some(src)) => Ok(ConformalMetric::parse("custom", src).with_context(|| format!("parsing `lambda` = {src:?}"))?),
        (Some(e), None) => Ok(match e.as_str() {
            "flat" => ConformalMetric::flat(),
            "exponential_growth" => ConformalMetric::exponential_growth(),
            "strip" => ConformalMetric::strip(a.eps)?,
            "hadamard" => ConformalMetric::hadamard(),
            other => bail!("unknown planar example `{other}`; known: flat, exponential_growth, strip, hadamard"),
        }),
        (None, None) => bail!("give `example` or `lambda`"),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn planar(a: &PlanarArgs, g: &Globals) -> Result<Report> {
    let mut r = Report::new("planar", inputs(a, g));
    let m = planar_metric(a)?;
    let example = if a.lambda.is_some() { "custom" } else { a.example.as_deref().unwrap_or("custom") };
    let tol = g.tol.unwrap_or(1e-11);
    r.result("note", &m.note);

    // Curvature by AST and stencil on a sample grid.
    let pts: Vec<f64> = vec![-2.0, -0.7, 0.3, 1.5, 4.0];
    let (mut gap, mut gap_at, mut samples) = (0.0_f64, f64::NAN, Vec::new());
    for &x in &pts {
        for &y in &pts {
            let k = gauss_curvature(&m, x, y)?;
            let near_seam = |v: f64, var| m.lambda.breakpoints(var).iter().any(|b: &f64| (v - b).abs() < 0.05);
            if !k.kink && !near_seam(x, curvlab::exprdsl::Var::X) && !near_seam(y, curvlab::exprdsl::Var::Y) {
                let d = (k.k - k.k_stencil).abs() / k.k.abs().max(1.0);
                if d > gap {
                    gap = d;
                    gap_at = x;
                }
            }
            samples.push(k);
        }
    }
    r.check(pass("curvature matches stencil", gap <= 1e-6, 1e-6 - gap, gap_at));
    r.result("curvature_samples", samples);
    let grid: Vec<f64> = (0..=24).map(|i| -3.0 + 0.25 * i as f64).collect();
    r.check(subharmonic_check(&m, &grid, &grid)?);

    // The strip factor is 1 on |y| <= 1, so its axis quantities are those
    // of the x factor alone.
    let axis = if m.x_only() { Some(m.clone()) } else if example == "strip" { Some(ConformalMetric::exponential_growth()) } else { None };
    let radii = a.radii.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0, 3.0]);
    let mut t = Table::new(&["r", "x", "witness", "volume"]);
    if let Some(ax) = &axis {
        for &rad in &radii {
            let x = axis_point(ax, rad)?;
            let region = if example == "strip" { Region::under_level_curve(x) } else { Region::triangle(x) };
            let vol = if x > 0.0 { region_volume_tol(&m, &region, tol)? } else { 0.0 };
            let witness = x.ln_1p();
            match example {
                "exponential_growth" => {
                    let want = 2.0 * (rad.exp() - 1.0) - 2.0 * rad;
                    r.check(pass(&format!("triangle volume at r = {rad}"), rel(vol, want) <= 1e-8, 1e-8 - rel(vol, want), rad));
                    r.check(pass(&format!("witness at r = {rad}"), (witness - rad).abs() <= 1e-9, 1e-9 - (witness - rad).abs(), rad));
                }
                "strip" => {
                    let want = rad.exp() - 2.0 + (-rad).exp();
                    r.check(pass(&format!("curve-bounded volume at r = {rad}"), rel(vol, want) <= 1e-8, 1e-8 - rel(vol, want), rad));
                }
                _ => {}
            }
            t.push_nums(&[rad, x, witness, vol]);
        }
        // Minimality of the axis segment against random polygonal paths.
        let p = axis_point(ax, radii.iter().copied().fold(1.0, f64::max))?;
        let d = axis_distance(ax, p)?.distance;
        let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
        let count = a.paths.unwrap_or(200);
        let mut worst = f64::INFINITY;
        for _ in 0..count {
            let mut path = vec![(0.0, 0.0)];
            for _ in 0..rng.gen_range(1..5) {
                path.push((rng.gen_range(-1.0..p + 1.0), rng.gen_range(-3.0..3.0)));
            }
            path.push((p, rng.gen_range(-3.0..3.0)));
            worst = worst.min(path_length(ax, &path)? - d);
        }
        if count > 0 {
            r.check(pass("no competitor path beats the axis", worst > 0.0, worst, p));
        }
        r.counter("competitor_paths", count);
        r.result("axis_distance", json!({ "p": p, "distance": d }));
    }
    r.table = Some(t);

    if example == "hadamard" || (m.x_only() && a.window.is_some()) {
        let (lo, hi) = match a.window.as_deref() {
            Some(w) => {
                let (l, h) = w.split_once(':').ok_or_else(|| anyhow!("`window` must be lo:hi"))?;
                (l.trim().parse::<f64>()?, h.trim().parse::<f64>()?)
            }
            None => (1.5, 30.0),
        };
        let gw = growth_witness(&m, &[], lo, hi)?;
        let h = &gw.hadamard;
        if example == "hadamard" {
            let by = h.exceeds_ten_at.map_or(f64::NAN, |x| x.ln());
            r.check(pass("Hadamard estimate diverges", h.monotone && h.diverging, h.samples.last().map_or(f64::NAN, |s| s.2), hi));
            r.check(pass("Hadamard estimate passes 10", by <= hi, hi - by, by));
        }
        r.result("hadamard", h);
    }

    match example {
        "strip" => {
            let ys = [2.0, 4.0, 8.0, 16.0];
            let tc = total_curvature(&m, &ys, &|y| Region::rectangle(0.0, f64::INFINITY, 1.0, y))?;
            let worst = tc.values.iter().map(|(y, v)| rel(*v, y - 1.0)).fold(0.0, f64::max);
            r.check(pass("total curvature above the strip is Y - 1", worst <= 1e-8, 1e-8 - worst, f64::NAN));
            r.check(pass(
                "total curvature diverges",
                matches!(tc.verdict, TotalCurvatureVerdict::Divergent { .. }),
                0.0,
                f64::NAN,
            ));
            r.result("total_curvature", tc);
        }
        "exponential_growth" => {
            let xs = [10.0, 100.0, 1e3, 1e4];
            let tc = total_curvature(&m, &xs, &|x| Region::rectangle(0.0, x, -1.0, 1.0))?;
            r.check(pass("total curvature of the band is finite", matches!(tc.verdict, TotalCurvatureVerdict::Finite { .. }), 0.0, f64::NAN));
            r.result("total_curvature", tc);
        }
        _ => {}
    }
    r.summary.push(format!("{} rows, {} checks", r.table.as_ref().map_or(0, |t| t.rows.len()), r.checks.len()));
    Ok(r)
}

// ---------------------------------------------------------------------------
// zoo

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
pub struct ZooArgs {
    /// Member name, or "all"
    #[arg(long)]
    pub name: Option<String>,
    /// Member parameter
    #[arg(long)]
    pub param: Option<f64>,
}

struct MemberRun {
    checks: Vec<Check>,
    result: Value,
    nodes: usize,
}

fn run_member(member: &ZooMember, grid: Grid) -> Result<MemberRun> {
    let m = RadialMetric::build(&member.spec, member.dim, &grid)?;
    let verdict = validate(&member.spec, Mode::Weak, &grid)?;
    let curv = m.curvature()?;
    let cls = classify(&curv);
    let vol = m.volume_report();
    let decay = m.avg_decay()?;
    let mut checks: Vec<Check> = Vec::new();
    checks.extend(verdict.checks.iter().cloned());
    checks.extend(m.checks.iter().cloned());
    checks.push(pass("A, B, C by two routes", curv.dual_worst <= DUAL_TOL, DUAL_TOL - curv.dual_worst, curv.dual_location));
    checks.extend(vol.checks.iter().cloned());
    checks.push(decay.lower.clone());
    checks.push(decay.corrected_upper.clone());
    let growth = m.growth_exponents();
    let verdicts = json!({
        "complete": m.completeness.verdict == Completeness::Complete,
        "bisectional_nonpositive": cls.bisectional != curvlab::radial::Bisectional::Indefinite,
        "bisectional_negative": cls.bisectional == curvlab::radial::Bisectional::Negative,
        "sectional_negative": cls.sectional_negative,
        "operator_negative": cls.operator_negative,
        "volume_ratio_nondecreasing": vol.checks[0].pass,
        "volume_at_least_euclidean": vol.checks[1].pass,
        "average_decay_sandwich": decay.lower.pass && decay.corrected_upper.pass,
    });
    let result = json!({
        "note": member.note,
        "dim": member.dim,
        "verdicts": verdicts,
        "classification": cls,
        "growth": growth,
        "final_ratio": vol.final_ratio,
        "average_decay": {
            "stated_factor": decay.stated_factor,
            "corrected_factor": decay.corrected_factor,
            "stated_upper": decay.stated_upper,
            "s2_avg_last": decay.s2_avg_last,
        },
    });
    Ok(MemberRun { checks, result, nodes: grid.n })
}

pub fn zoo_cmd(a: &ZooArgs, g: &Globals) -> Result<Report> {
    let mut r = Report::new("zoo", inputs(a, g));
    let names: Vec<String> = match a.name.as_deref().unwrap_or("all") {
        "all" => ZOO.iter().map(|s| s.to_string()).collect(),
        one => vec![one.to_string()],
    };
    let members = names.iter().map(|n| zoo(n, a.param)).collect::<curvlab::error::Result<Vec<_>>>()?;
    let runs: Vec<Result<MemberRun>> = g.pool()?.install(|| {
        members.par_iter().map(|mb| run_member(mb, g.grid.unwrap_or(mb.grid)).with_context(|| format!("zoo member `{}`", mb.name))).collect()
    });
    let mut results = serde_json::Map::new();
    let mut nodes = 0;
    for (mb, run) in members.iter().zip(runs) {
        let run = run?;
        for c in run.checks {
            r.check(Check { name: format!("{}: {}", mb.name, c.name), ..c });
        }
        nodes += run.nodes;
        let all_true = run.result["verdicts"].as_object().map_or(0, |v| v.values().filter(|x| x == &&Value::Bool(true)).count());
        r.summary.push(format!("{}: {} verdicts true", mb.name, all_true));
        results.insert(mb.name.clone(), run.result);
    }
    r.result("members", results);
    r.counter("nodes", nodes);
    Ok(r)
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Args, Serialize, Deserialize, Default, Clone, Debug)]
pub struct SweepArgs {
    /// Generating-function kind
    #[arg(long)]
    pub kind: Option<String>,
    /// Expression with `{a}` standing for the swept value
    #[arg(long)]
    pub template: Option<String>,
    /// Swept quantity: a (substituted into the template) or lambda
    #[arg(long)]
    pub param: Option<String>,
    /// Explicit values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub stop: Option<f64>,
    /// Number of evenly spaced values from start to stop
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub base_dim: Option<usize>,
}

const SWEEP_HEADER: [&str; 6] = ["param", "value", "valid", "worst_check", "worst_margin", "barrier_at_zero"];

struct SweepRow {
    valid: bool,
    worst: Option<Check>,
    barrier: Option<f64>,
}

fn sweep_values(a: &SweepArgs) -> Result<Vec<f64>> {
    if let Some(v) = &a.values {
        return Ok(v.clone());
    }
    let count = a.count.unwrap_or(0);
    if count == 0 {
        return Ok(Vec::new());
    }
    let (lo, hi) = (a.start.ok_or_else(|| anyhow!("missing `start`"))?, a.stop.ok_or_else(|| anyhow!("missing `stop`"))?);
    if !(lo.is_finite() && hi.is_finite()) {
        bail!("sweep range must be finite");
    }
    Ok(if count == 1 { vec![lo] } else { (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect() })
}

fn sweep_one(a: &SweepArgs, kind: Kind, grid: Grid, value: f64) -> Result<SweepRow> {
    let template = a.template.as_deref().ok_or_else(|| anyhow!("missing `template`"))?;
    let (src, lambda) = match a.param.as_deref().unwrap_or("a") {
        "a" => (template.replace("{a}", &format!("({value:?})")), a.lambda.unwrap_or(1.0)),
        "lambda" => (template.to_string(), value),
        other => bail!("param must be a or lambda, got `{other}`"),
    };
    let expr = parse(&src).with_context(|| format!("parsing {src:?}"))?;
    let spec = GeneratingSpec::with_params(kind, expr, Params { lambda, norm: 1.0, rank: 1 })?;
    let worst_of = |cs: &[Check]| cs.iter().min_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin)).cloned();
    if kind.is_fiber() {
        let base = BaseModel::new(a.base_dim.unwrap_or(1), -1.0, 1.0)?;
        let m = CalabiMetric::new(&spec, base, &grid.nodes())?;
        let sign = m.sign_check_line();
        let valid = sign.bi_negative && sign.checks.iter().all(|c| c.pass);
        Ok(SweepRow { valid, worst: worst_of(&sign.checks), barrier: Some(sign.barrier_at_zero) })
    } else {
        let verdict = validate(&spec, Mode::Strict, &grid)?;
        let m = RadialMetric::build(&spec, a.dim.unwrap_or(2), &grid)?;
        let mut all = verdict.checks.clone();
        all.extend(m.checks.iter().cloned());
        Ok(SweepRow { valid: all.iter().all(|c| c.pass), worst: worst_of(&all), barrier: None })
    }
}

pub fn sweep(a: &SweepArgs, g: &Globals) -> Result<Report> {
    let mut r = Report::new("sweep", inputs(a, g));
    let kind: Kind = a.kind.as_deref().unwrap_or("chi").parse()?;
    let values = sweep_values(a)?;
    let grid = g.grid.unwrap_or(Grid::new(1e-6, 1e3, 1024)?);
    let rows: Vec<Result<SweepRow>> = g.pool()?.install(|| values.par_iter().map(|&v| sweep_one(a, kind, grid, v)).collect());
    let param = a.param.clone().unwrap_or_else(|| "a".into());
    let mut t = Table::new(&SWEEP_HEADER);
    let mut invalid = Vec::new();
    for (&v, row) in values.iter().zip(rows) {
        let row = row.with_context(|| format!("sweep value {v}"))?;
        if !row.valid {
            invalid.push(v);
        }
        let (name, margin) = row.worst.map_or((String::new(), f64::NAN), |c| (c.name, c.worst_margin));
        t.push(vec![param.clone(), num(v), row.valid.to_string(), name, num(margin), row.barrier.map_or(String::new(), num)]);
    }
    r.check(pass("every swept value valid", invalid.is_empty(), -(invalid.len() as f64), invalid.first().copied().unwrap_or(f64::NAN)));
    r.result("invalid_values", invalid);
    r.counter("rows", values.len());
    r.counter("nodes_per_row", grid.n);
    r.summary.push(format!("{} rows", values.len()));
    r.table = Some(t);
    Ok(r)
}
