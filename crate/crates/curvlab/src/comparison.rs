//! The comparison ODE `u″ = k u`, Sturm and three-circle checks on
//! rotationally symmetric surfaces, and the Li–Tam surface quantities.
//!
//! A surface is `ds² + G(s)² dθ²` with `G(0) = 0`, `G′(0) = 1`; its Gauss
//! curvature is `K = −G″/G`. The conformal coordinate satisfies
//! `d ln|z| / ds = 1/G`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exprdsl::{Expr, Var};
use crate::genfun::{classify_endpoint, Check};
use crate::numerics::{dopri5, geometric_nodes, hermite_panel, integrate_split};
use crate::radial::{top_decade_slope, RadialMetric};
use crate::sampled::{Endpoint, SampledFunction};

pub const ODE_RTOL: f64 = 1e-10;
pub const ODE_ATOL: f64 = 1e-13;
const ROUND_TOL: f64 = 1e-12;

/// Solution of `u″ = k u`, `u(0) = 0`, `u′(0) = 1` on the nodes `t`, with
/// `h′ = 1/u` normalized so that `h − ln t → 0` at the origin.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonSolution {
    pub k_source: String,
    pub horizon: f64,
    pub t: Vec<f64>,
    pub k: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub h: Vec<f64>,
    /// `∫₀ᵗ s k(s) ds` at each node.
    pub moment_to: Vec<f64>,
    /// `∫₀^horizon s k(s) ds`
    pub moment: f64,
    /// `exp(moment)`
    pub eta: f64,
    /// `u′` at the horizon.
    pub du_limit: f64,
    /// `k` vanishes on the whole range.
    pub k_vanishes: bool,
    /// `u′(horizon) < η`, required whenever `k` is not identically 0.
    pub strict: bool,
    pub checks: Vec<Check>,
    pub evaluations: usize,
    pub steps: usize,
}

impl ComparisonSolution {
    pub fn u_fn(&self) -> Result<SampledFunction> {
        SampledFunction::with_derivatives(self.t.clone(), self.u.clone(), self.du.clone())
    }

    pub fn du_fn(&self) -> Result<SampledFunction> {
        let d2u = self.k.iter().zip(&self.u).map(|(k, u)| k * u).collect();
        SampledFunction::with_derivatives(self.t.clone(), self.du.clone(), d2u)
    }

    pub fn h_fn(&self) -> Result<SampledFunction> {
        SampledFunction::with_derivatives(self.t.clone(), self.h.clone(), self.u.iter().map(|u| 1.0 / u).collect())
    }

    pub fn verified(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && (self.k_vanishes || self.strict)
    }

    /// Constants with `ln t / η + C₁ ≤ h ≤ ln t + C₂` on `[1, horizon]`.
    pub fn h_constants(&self) -> Option<(f64, f64)> {
        let idx: Vec<usize> = (0..self.t.len()).filter(|&i| self.t[i] >= 1.0).collect();
        if idx.is_empty() {
            return None;
        }
        let c1 = idx.iter().map(|&i| self.h[i] - self.t[i].ln() / self.eta).fold(f64::INFINITY, f64::min);
        let c2 = idx.iter().map(|&i| self.h[i] - self.t[i].ln()).fold(f64::NEG_INFINITY, f64::max);
        Some((c1, c2))
    }
}

fn min_margin(t: &[f64], margin: impl Fn(usize) -> f64) -> (f64, f64) {
    let (mut worst, mut at) = (f64::INFINITY, f64::NAN);
    for i in 0..t.len() {
        let m = margin(i);
        if m < worst || m.is_nan() {
            worst = m;
            at = t[i];
        }
    }
    (worst, at)
}

fn check(name: &str, t: &[f64], tol: f64, margin: impl Fn(usize) -> f64) -> Check {
    let (worst, at) = min_margin(t, margin);
    Check::from_margin(name, worst >= -tol, worst, at)
}

/// Default sample nodes on `(0, horizon]`.
pub fn comparison_nodes(horizon: f64) -> Vec<f64> {
    geometric_nodes(horizon * 1e-6, horizon, 2048)
}

/// Solve with `k` given as an expression in its single variable.
pub fn solve_comparison(k: &Expr, horizon: f64) -> Result<ComparisonSolution> {
    solve_comparison_tol(k, horizon, ODE_RTOL)
}

/// As [`solve_comparison`] with the integrator's relative tolerance.
pub fn solve_comparison_tol(k: &Expr, horizon: f64, rtol: f64) -> Result<ComparisonSolution> {
    if !(rtol > 0.0 && rtol < 1e-2) {
        return invalid("ODE tolerance must lie in (0, 1e-2)");
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return invalid("horizon must be positive and finite");
    }
    let var = k.sole_var(Var::S).ok_or_else(|| Error::Invalid("k must depend on a single variable".into()))?;
    let kf = |s: f64| Ok(k.at(var, s)?);
    solve_on(&kf, &k.breakpoints(var), &comparison_nodes(horizon), &k.to_string(), rtol)
}

/// Solve with an arbitrary `k` and report at the given positive nodes; the
/// horizon is the last node.
pub fn solve_comparison_on(
    k: &dyn Fn(f64) -> Result<f64>,
    breaks: &[f64],
    nodes: &[f64],
    label: &str,
) -> Result<ComparisonSolution> {
    solve_on(k, breaks, nodes, label, ODE_RTOL)
}

fn solve_on(
    k: &dyn Fn(f64) -> Result<f64>,
    breaks: &[f64],
    nodes: &[f64],
    label: &str,
    rtol: f64,
) -> Result<ComparisonSolution> {
    if nodes.len() < 2 || !(nodes[0] > 0.0) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("comparison nodes must be positive and increasing");
    }
    let horizon = nodes[nodes.len() - 1];
    let kv = |s: f64| -> Result<f64> {
        let v = k(s)?;
        if v < 0.0 {
            return invalid(format!("k is negative at {s}"));
        }
        if !v.is_finite() {
            return Err(Error::NonFinite("k"));
        }
        Ok(v)
    };
    let sol = dopri5(
        |s, y, dy| {
            dy[0] = y[1];
            dy[1] = kv(s)? * y[0];
            Ok(())
        },
        0.0,
        &[0.0, 1.0],
        horizon,
        breaks,
        rtol,
        ODE_ATOL,
    )?;
    let mut u = Vec::with_capacity(nodes.len());
    let mut du = Vec::with_capacity(nodes.len());
    let mut kk = Vec::with_capacity(nodes.len());
    for &t in nodes {
        let y = sol.eval(t)?;
        u.push(y[0]);
        du.push(y[1]);
        kk.push(kv(t)?);
    }
    if u.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Ode("u left the positive range".into()));
    }
    // Panels of the node grid, split at breakpoints.
    let panel = |f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64| integrate_split(|s| f(s), a, b, breaks, 1e-15, 1e-12);
    let sk = |s: f64| Ok(s * kv(s)?);
    let gap = |s: f64| Ok(1.0 / sol.eval(s)?[0] - 1.0 / s);
    let mut moment_to = Vec::with_capacity(nodes.len());
    let mut h = Vec::with_capacity(nodes.len());
    let (mut m_acc, mut g_acc) = (panel(&sk, 0.0, nodes[0])?, panel(&gap, 0.0, nodes[0])?);
    moment_to.push(m_acc);
    h.push(nodes[0].ln() + g_acc);
    for w in nodes.windows(2) {
        m_acc += panel(&sk, w[0], w[1])?;
        g_acc += panel(&gap, w[0], w[1])?;
        moment_to.push(m_acc);
        h.push(w[1].ln() + g_acc);
    }
    if !m_acc.is_finite() {
        return invalid("the moment integral diverges over the horizon");
    }
    let moment = m_acc;
    let eta = moment.exp();
    let last = nodes.len() - 1;
    let du_limit = du[last];
    let k_vanishes = moment == 0.0 && kk.iter().all(|&x| x == 0.0);
    let t = nodes;
    let checks = vec![
        check("1 <= u'", t, ROUND_TOL, |i| du[i] - 1.0),
        check("u' <= eta", t, ROUND_TOL * eta, |i| eta - du[i]),
        check("u' nondecreasing", t, ROUND_TOL * eta, |i| if i == 0 { 0.0 } else { du[i] - du[i - 1] }),
        check("log u' <= int_0^t s k", t, 1e-9, |i| moment_to[i] - du[i].ln()),
        check("h - log t nonincreasing", t, 1e-9, |i| {
            if i == 0 {
                0.0
            } else {
                (h[i - 1] - t[i - 1].ln()) - (h[i] - t[i].ln())
            }
        }),
        check("h - log t / eta nondecreasing", t, 1e-9, |i| {
            if i == 0 {
                0.0
            } else {
                (h[i] - t[i].ln() / eta) - (h[i - 1] - t[i - 1].ln() / eta)
            }
        }),
    ];
    Ok(ComparisonSolution {
        k_source: label.to_string(),
        horizon,
        t: t.to_vec(),
        k: kk,
        u,
        du,
        h,
        moment_to,
        moment,
        eta,
        du_limit,
        k_vanishes,
        strict: du_limit < eta,
        checks,
        evaluations: sol.evaluations,
        steps: sol.accepted(),
    })
}

// ---------------------------------------------------------------------------
// surfaces

/// A rotationally symmetric surface `ds² + G(s)² dθ²` sampled on `s`.
#[derive(Clone, Debug, Serialize)]
pub struct SurfaceModel {
    pub name: String,
    pub s: Vec<f64>,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    pub d2g: Vec<f64>,
    /// `ln|z|` of the conformal coordinate.
    pub log_z: Vec<f64>,
    /// Area of the geodesic disc of radius `s`.
    pub area: Vec<f64>,
}

impl SurfaceModel {
    /// From a polar profile `G(s)` given as an expression.
    pub fn from_profile(name: &str, g: &Expr, nodes: &[f64]) -> Result<Self> {
        let var = g.sole_var(Var::S).ok_or_else(|| Error::Invalid("profile must depend on a single variable".into()))?;
        let dg_e = g.diff(var);
        let d2g_e = dg_e.diff(var);
        let at = |e: &Expr| nodes.iter().map(|&s| Ok(e.at(var, s)?)).collect::<Result<Vec<f64>>>();
        let (gv, dg, d2g) = (at(g)?, at(&dg_e)?, at(&d2g_e)?);
        if let Some(i) = gv.iter().position(|&x| !(x > 0.0)) {
            return invalid(format!("profile is not positive at {}", nodes[i]));
        }
        // ln|z| = ln s + ∫₀ˢ (1/G − 1/σ) dσ, area = 2π∫₀ˢ G.
        let breaks = g.breakpoints(var);
        let gap = |s: f64| Ok(1.0 / g.at(var, s)? - 1.0 / s);
        let mut log_z = Vec::with_capacity(nodes.len());
        let mut area = Vec::with_capacity(nodes.len());
        let mut acc = integrate_split(gap, 0.0, nodes[0], &breaks, 1e-15, 1e-12)?;
        let mut a_acc = integrate_split(|s| Ok(g.at(var, s)?), 0.0, nodes[0], &breaks, 1e-300, 1e-13)?;
        log_z.push(nodes[0].ln() + acc);
        area.push(2.0 * PI * a_acc);
        for w in nodes.windows(2) {
            acc += integrate_split(gap, w[0], w[1], &breaks, 1e-15, 1e-12)?;
            a_acc += integrate_split(|s| Ok(g.at(var, s)?), w[0], w[1], &breaks, 1e-300, 1e-13)?;
            log_z.push(w[1].ln() + acc);
            area.push(2.0 * PI * a_acc);
        }
        Ok(Self { name: name.to_string(), s: nodes.to_vec(), g: gv, dg, d2g, log_z, area })
    }

    /// The fiber surface of a radial metric: `G = x`, `G′ = 1 + ψ`,
    /// `G″ = ψ′`, `|z|² = r`, area `π v`.
    pub fn from_radial(name: &str, m: &RadialMetric) -> Self {
        let sm = &m.samples;
        Self {
            name: name.to_string(),
            s: sm.s.clone(),
            g: sm.x.clone(),
            dg: sm.psi.iter().map(|p| 1.0 + p).collect(),
            d2g: sm.dpsi.clone(),
            log_z: sm.r.iter().map(|r| 0.5 * r.ln()).collect(),
            area: sm.v.iter().map(|v| PI * v).collect(),
        }
    }

    /// Restrict to `s ≤ hi`.
    pub fn truncated(&self, hi: f64) -> Self {
        let n = self.s.partition_point(|&s| s <= hi);
        let cut = |v: &Vec<f64>| v[..n].to_vec();
        Self {
            name: self.name.clone(),
            s: cut(&self.s),
            g: cut(&self.g),
            dg: cut(&self.dg),
            d2g: cut(&self.d2g),
            log_z: cut(&self.log_z),
            area: cut(&self.area),
        }
    }

    /// `−K = G″/G`
    pub fn minus_k(&self) -> Vec<f64> {
        self.d2g.iter().zip(&self.g).map(|(a, b)| a / b).collect()
    }

    pub fn log_z_fn(&self) -> Result<SampledFunction> {
        SampledFunction::with_derivatives(self.s.clone(), self.log_z.clone(), self.g.iter().map(|g| 1.0 / g).collect())
    }

    /// Comparison solution for the constant bound `k = max(−K)`, on the
    /// surface's own nodes.
    pub fn constant_comparison(&self) -> Result<ComparisonSolution> {
        let k = self.minus_k().into_iter().fold(0.0_f64, f64::max);
        solve_comparison_on(&|_| Ok(k), &[], &self.s, &format!("{k}"))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SturmReport {
    /// Hypothesis `G″/G ≤ k`, i.e. `f₁′ + f₁² ≤ f₂′ + f₂²` for
    /// `f₁ = G′/G`, `f₂ = u′/u`.
    pub riccati: Check,
    /// Conclusion `G′/G ≤ u′/u`.
    pub order: Check,
    /// Largest relative gap `(u′/u − G′/G)/(u′/u)`; 0 in the model case.
    pub max_relative_gap: f64,
    /// Smallest node beyond which `G′/G < u′/u` holds with a relative gap
    /// above the solver tolerance. Near the origin both sides agree to
    /// second order, so the gap drowns in rounding there.
    pub strict_from: Option<f64>,
}

/// Sturm comparison between a surface and the model `u″ = k u`; the
/// solution must be sampled on the surface nodes.
pub fn sturm_check(surface: &SurfaceModel, sol: &ComparisonSolution) -> Result<SturmReport> {
    if sol.t != surface.s {
        return invalid("the comparison solution must share the surface nodes");
    }
    if let Some(i) = surface.g.iter().position(|&x| !(x > 0.0)) {
        return invalid(format!("profile is not positive at {}", surface.s[i]));
    }
    let s = &surface.s;
    let f1: Vec<f64> = surface.dg.iter().zip(&surface.g).map(|(a, b)| a / b).collect();
    let f2: Vec<f64> = sol.du.iter().zip(&sol.u).map(|(a, b)| a / b).collect();
    let mk = surface.minus_k();
    let riccati = check("G''/G <= k", s, 1e-9, |i| (sol.k[i] - mk[i]) / (1.0 + sol.k[i].abs()));
    let order = check("G'/G <= u'/u", s, 1e-8, |i| (f2[i] - f1[i]) / f2[i].abs());
    let gaps: Vec<f64> = (0..s.len()).map(|i| (f2[i] - f1[i]) / f2[i].abs()).collect();
    let tail = gaps.iter().rposition(|&g| !(g > 1e-8)).map_or(Some(0), |i| (i + 1 < s.len()).then_some(i + 1));
    Ok(SturmReport {
        riccati,
        order,
        max_relative_gap: gaps.iter().copied().fold(0.0, f64::max),
        strict_from: tail.map(|i| s[i]),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ThreeCircle {
    pub m: u32,
    pub s: [f64; 3],
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// `log M_f(s₂) ≤ w log M_f(s₁) + (1 − w) log M_f(s₃)` for `f = z^m`, with
/// `w = (h(s₃) − h(s₂))/(h(s₃) − h(s₁))`.
pub fn three_circle_check(surface: &SurfaceModel, sol: &ComparisonSolution, m: u32, triple: [f64; 3]) -> Result<ThreeCircle> {
    let [s1, s2, s3] = triple;
    if !(s1 < s2 && s2 < s3) {
        return invalid("triple must satisfy s1 < s2 < s3");
    }
    let lz = surface.log_z_fn()?;
    let h = sol.h_fn()?;
    let mf = |s: f64| Ok::<f64, Error>(m as f64 * lz.eval(s)?);
    let (h1, h2, h3) = (h.eval(s1)?, h.eval(s2)?, h.eval(s3)?);
    let w = (h3 - h2) / (h3 - h1);
    let lhs = mf(s2)?;
    let rhs = w * mf(s1)? + (1.0 - w) * mf(s3)?;
    Ok(ThreeCircle { m, s: triple, lhs, rhs, slack: rhs - lhs })
}

#[derive(Clone, Debug, Serialize)]
pub struct LiTamReport {
    pub s: Vec<f64>,
    /// `L(t) = 2πG(t)`
    pub length: Vec<f64>,
    pub area: Vec<f64>,
    /// `∫ K dV` over the sampled disc, by quadrature.
    pub total_curvature: f64,
    /// `2π(1 − G′)` at the horizon, the Gauss–Bonnet value.
    pub total_curvature_boundary: f64,
    pub curvature_endpoint: Endpoint,
    /// Top-decade slope of `ln s` against `ln|z|`.
    pub ell: Option<f64>,
    /// `1 − T_c/2π`
    pub predicted: f64,
    /// `|ℓ − (1 − T_c/2π)|`, skipped when the total curvature diverges.
    pub limit_gap: Option<f64>,
    /// `exp(∫ s (−K) ds)`
    pub eta: f64,
    pub length_bounds: Check,
    pub area_bounds: Check,
    pub area_routes: Check,
    /// `log s(r) ≤ exp(√δ(r) / (2 √∫_r^R dt/L)) log i(R)` with `R` the
    /// horizon and `δ(r) = 2π/ln|z|(r)`.
    pub growth_bound: Check,
}

pub fn litam_quantities(surface: &SurfaceModel) -> Result<LiTamReport> {
    let s = &surface.s;
    let n = s.len();
    let mk = surface.minus_k();
    if mk.iter().any(|&k| k < -1e-12) {
        return invalid("the surface must have nonpositive curvature");
    }
    let length: Vec<f64> = surface.g.iter().map(|g| 2.0 * PI * g).collect();
    // ∫ K dV = −2π ∫ G″ ds and ∫ s(−K) ds, by trapezoid panels from 0.
    let mut tc = vec![-2.0 * PI * 0.5 * s[0] * surface.d2g[0]];
    let mut mom = 0.5 * s[0] * s[0] * mk[0];
    for i in 1..n {
        let h = s[i] - s[i - 1];
        tc.push(tc[i - 1] - 2.0 * PI * 0.5 * h * (surface.d2g[i - 1] + surface.d2g[i]));
        mom += 0.5 * h * (s[i - 1] * mk[i - 1] + s[i] * mk[i]);
    }
    let total_curvature = tc[n - 1];
    let total_curvature_boundary = 2.0 * PI * (1.0 - surface.dg[n - 1]);
    let curvature_endpoint = classify_endpoint(s, &tc);
    let z: Vec<f64> = surface.log_z.iter().map(|l| l.exp()).collect();
    let ln_s: Vec<f64> = s.iter().map(|x| x.ln()).collect();
    let ell = top_decade_slope(&z, &ln_s);
    let predicted = 1.0 - total_curvature / (2.0 * PI);
    let limit_gap = match (curvature_endpoint, ell) {
        (Endpoint::Divergent, _) | (_, None) => None,
        (_, Some(l)) => Some((l - predicted).abs()),
    };
    let eta = mom.exp();
    let length_bounds = check("2 pi t <= L <= 2 pi eta t", s, 1e-9, |i| {
        let q = length[i] / (2.0 * PI * s[i]);
        (q - 1.0).min(eta - q)
    });
    let area = surface.area.clone();
    let area_bounds = check("pi t^2 <= A <= eta pi t^2", s, 1e-9, |i| {
        let q = area[i] / (PI * s[i] * s[i]);
        (q - 1.0).min(eta - q)
    });
    // Area by Hermite quadrature of 2πG against the recorded area.
    let mut a_quad = vec![2.0 * PI * hermite_panel(s[0], 0.0, surface.g[0], 1.0, surface.dg[0])];
    for i in 1..n {
        let p = hermite_panel(s[i] - s[i - 1], surface.g[i - 1], surface.g[i], surface.dg[i - 1], surface.dg[i]);
        a_quad.push(a_quad[i - 1] + 2.0 * PI * p);
    }
    let area_routes = check("area = 2 pi int G", s, 1e-6, |i| -(a_quad[i] - area[i]).abs() / area[i]);
    // ∫_r^R dt/L = (ln|z|(R) − ln|z|(r))/2π since d ln|z|/ds = 1/G.
    let lz = &surface.log_z;
    let big = lz[n - 1];
    let growth_bound = check("log s(r) <= exp(sqrt(delta)/(2 sqrt(int dt/L))) log i(R)", s, 1e-12, |i| {
        if lz[i] <= 1.0 || i == n - 1 {
            return f64::INFINITY;
        }
        let delta = 2.0 * PI / lz[i];
        let inv_len = (big - lz[i]) / (2.0 * PI);
        (delta.sqrt() / (2.0 * inv_len.sqrt())).exp() * big - lz[i]
    });
    Ok(LiTamReport {
        s: s.clone(),
        length,
        area,
        total_curvature,
        total_curvature_boundary,
        curvature_endpoint,
        ell,
        predicted,
        limit_gap,
        eta,
        length_bounds,
        area_bounds,
        area_routes,
        growth_bound,
    })
}
