//! Generating functions (χ, χ̃, ξ, p, ψ, f, u), their validity conditions and
//! the conversions between the equivalent characterizations.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exprdsl::{parse, Expr, Var};
use crate::numerics::{geometric_nodes, hermite_panel, integrate_split, stencil_d1};
pub use crate::sampled::{Endpoint, SampledFunction};

const REL: f64 = 1e-13;
/// Absolute tolerance for exponents, which only enter through `exp`.
const EXP_ABS: f64 = 1e-14;
const ZERO_TOL: f64 = 1e-10;
const WEAK_TOL: f64 = 1e-12;
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Chi,
    ChiTilde,
    Xi,
    P,
    Psi,
    #[serde(rename = "f")]
    FProfile,
    #[serde(rename = "u")]
    DirectU,
}

impl Kind {
    /// The variable the generating function is written in.
    pub fn var(self) -> Var {
        match self {
            Kind::Chi | Kind::ChiTilde | Kind::DirectU => Var::T,
            Kind::Xi | Kind::FProfile => Var::R,
            Kind::P => Var::X,
            Kind::Psi => Var::S,
        }
    }

    pub fn is_fiber(self) -> bool {
        matches!(self, Kind::Chi | Kind::ChiTilde | Kind::DirectU)
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Chi => "chi",
            Kind::ChiTilde => "chi-tilde",
            Kind::Xi => "xi",
            Kind::P => "p",
            Kind::Psi => "psi",
            Kind::FProfile => "f",
            Kind::DirectU => "u",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "chi" => Kind::Chi,
            "chi-tilde" | "chi_tilde" => Kind::ChiTilde,
            "xi" => Kind::Xi,
            "p" => Kind::P,
            "psi" => Kind::Psi,
            "f" => Kind::FProfile,
            "u" => Kind::DirectU,
            other => return invalid(format!("unknown generating-function kind `{other}`")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Params {
    /// Bundle curvature constant λ.
    pub lambda: f64,
    /// Q(0), h(0) or T(0) depending on the kind.
    pub norm: f64,
    pub rank: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self { lambda: 1.0, norm: 1.0, rank: 1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratingSpec {
    pub kind: Kind,
    pub expr: Expr,
    pub params: Params,
}

impl GeneratingSpec {
    pub fn new(kind: Kind, expr: Expr) -> Result<Self> {
        Self::with_params(kind, expr, Params::default())
    }

    pub fn parse(kind: Kind, source: &str) -> Result<Self> {
        Self::new(kind, parse(source)?)
    }

    pub fn with_params(kind: Kind, expr: Expr, params: Params) -> Result<Self> {
        if let Some(v) = expr.free_vars().into_iter().find(|&v| v != kind.var()) {
            return invalid(format!("a {kind} generating function is written in `{}`, found `{v}`", kind.var()));
        }
        if !(params.lambda > 0.0 && params.norm > 0.0 && params.rank >= 1) {
            return invalid("lambda and the normalization must be positive, the rank at least 1");
        }
        Ok(Self { kind, expr, params })
    }

    pub fn var(&self) -> Var {
        self.kind.var()
    }

    pub fn eval(&self, arg: f64) -> Result<f64> {
        Ok(self.expr.at(self.kind.var(), arg)?)
    }
}

/// Geometric grid `lo..hi` with `n` nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { lo: 1e-6, hi: 1e4, n: 4096 }
    }
}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 5) {
            return invalid("grid needs 0 < lo < hi and at least 5 nodes");
        }
        Ok(Self { lo, hi, n })
    }

    pub fn nodes(&self) -> Vec<f64> {
        geometric_nodes(self.lo, self.hi, self.n)
    }
}

impl FromStr for Grid {
    type Err = Error;
    /// `lo:hi:n`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return invalid(format!("grid `{s}` is not of the form lo:hi:n"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad grid bound `{p}`")));
        let n = parts[2].trim().parse::<usize>().map_err(|_| Error::Invalid(format!("bad node count `{}`", parts[2])))?;
        Grid::new(num(parts[0])?, num(parts[1])?, n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    Weak,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rule {
    /// margin = tolerance − |value|
    Zero,
    /// must be positive in both modes
    Positive,
    /// positive when strict, nonnegative up to round-off when weak
    Sign,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub location: f64,
}

impl Check {
    fn new(name: &str, rule: Rule, mode: Mode, margin: f64, location: f64) -> Self {
        let pass = match (rule, mode) {
            (Rule::Zero, _) => margin >= 0.0,
            (Rule::Positive, _) | (Rule::Sign, Mode::Strict) => margin > 0.0,
            (Rule::Sign, Mode::Weak) => margin >= -WEAK_TOL,
        };
        Self { name: name.to_string(), pass, worst_margin: margin, location }
    }

    /// Pass/fail record for a derived quantity.
    pub fn from_margin(name: &str, pass: bool, worst_margin: f64, location: f64) -> Self {
        Self { name: name.to_string(), pass, worst_margin, location }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub valid: bool,
    pub mode: Mode,
    pub checks: Vec<Check>,
}

impl Verdict {
    fn from_checks(mode: Mode, checks: Vec<Check>) -> Self {
        Self { valid: checks.iter().all(|c| c.pass), mode, checks }
    }

    /// The check with the smallest margin.
    pub fn tightest(&self) -> Option<&Check> {
        self.checks.iter().min_by(|a, b| a.worst_margin.total_cmp(&b.worst_margin))
    }
}

/// Minimum of `g` over the points, with its location.
fn min_over<F: FnMut(f64) -> Result<f64>>(pts: &[f64], mut g: F) -> Result<(f64, f64)> {
    let mut best = (f64::INFINITY, f64::NAN);
    for &a in pts {
        let y = g(a)?;
        if y.is_nan() {
            return Err(Error::NonFinite("validation"));
        }
        if y < best.0 {
            best = (y, a);
        }
    }
    Ok(best)
}

/// Check every condition of the spec's kind at every grid node.
pub fn validate(spec: &GeneratingSpec, mode: Mode, grid: &Grid) -> Result<Verdict> {
    let v = spec.var();
    let e = &spec.expr;
    let d1 = e.diff(v);
    let nodes = grid.nodes();
    let mut with_origin = vec![0.0];
    with_origin.extend_from_slice(&nodes);
    let at = |ex: &Expr, a: f64| -> Result<f64> { Ok(ex.at(v, a)?) };
    let zero = |name: &str, ex: &Expr, target: f64| -> Result<Check> {
        let val = at(ex, 0.0)?;
        Ok(Check::new(name, Rule::Zero, mode, ZERO_TOL - (val - target).abs(), 0.0))
    };
    let sign = |name: &str, rule: Rule, pts: &[f64], g: &dyn Fn(f64) -> Result<f64>| -> Result<Check> {
        let (m, loc) = min_over(pts, g)?;
        Ok(Check::new(name, rule, mode, m, loc))
    };
    let divergence = |name: &str, report: CompletenessReport| {
        let margin = report.tail_ratio.map_or(report.partial_integral / DIVERGENCE_THRESHOLD - 1.0, |r| r - 0.25);
        let pass = report.verdict == Completeness::Complete;
        Check::from_margin(name, pass, if pass { margin.max(f64::MIN_POSITIVE) } else { margin.min(0.0) }, report.horizon)
    };
    let mut checks = Vec::new();
    match spec.kind {
        Kind::Chi | Kind::ChiTilde | Kind::Xi => {
            checks.push(zero("value at 0 is 0", e, 0.0)?);
            checks.push(sign("derivative negative", Rule::Sign, &with_origin, &|a| Ok(-at(&d1, a)?))?);
        }
        Kind::P => {
            let d2 = d1.diff(v);
            checks.push(zero("p(0) = 1", e, 1.0)?);
            checks.push(zero("p'(0) = 0", &d1, 0.0)?);
            checks.push(Check::new("p''(0) < 0", Rule::Positive, mode, -at(&d2, 0.0)?, 0.0));
            checks.push(sign("p positive", Rule::Positive, &with_origin, &|a| at(e, a))?);
            checks.push(sign("p decreasing", Rule::Sign, &nodes, &|a| Ok(-at(&d1, a)?))?);
            let tail: Vec<f64> = nodes.iter().copied().filter(|&a| a >= 1.0).collect();
            let report = if tail.len() < 2 {
                CompletenessReport::inconclusive(grid.hi)
            } else {
                let g = tail.iter().map(|&a| Ok(at(e, a)? / a)).collect::<Result<Vec<_>>>()?;
                divergence_check(&tail, &g, 0.0, DIVERGENCE_THRESHOLD)
            };
            checks.push(divergence("integral of p/x diverges", report));
        }
        Kind::Psi => {
            let d2 = d1.diff(v);
            checks.push(zero("psi(0) = 0", e, 0.0)?);
            checks.push(zero("psi'(0) = 0", &d1, 0.0)?);
            checks.push(Check::new("psi''(0) > 0", Rule::Positive, mode, at(&d2, 0.0)?, 0.0));
            checks.push(sign("psi increasing", Rule::Sign, &nodes, &|a| at(&d1, a))?);
            let phi = running_integral(|a| at(e, a), &nodes, &e.breakpoints(v), 0.0)?;
            let g: Vec<f64> = nodes.iter().zip(&phi).map(|(s, p)| 1.0 / (s + p)).collect();
            checks.push(divergence("integral of ds/(s + phi) diverges", divergence_check(&nodes, &g, 0.0, DIVERGENCE_THRESHOLD)));
        }
        Kind::FProfile => {
            let h = (Expr::var(v) * e.clone()).diff(v);
            checks.push(sign("f positive", Rule::Positive, &with_origin, &|a| at(e, a))?);
            checks.push(sign("h = (rf)' positive", Rule::Positive, &with_origin, &|a| at(&h, a))?);
            let hv = nodes.iter().map(|&a| at(&h, a)).collect::<Result<Vec<_>>>()?;
            let hs = SampledFunction::new(nodes.clone(), hv)?;
            checks.push(divergence("complete", completeness_check(&hs, Form::Radial)));
        }
        Kind::DirectU => {
            let t = Expr::var(v);
            let q = d1.clone() + t * d1.diff(v);
            checks.push(sign("u' positive", Rule::Positive, &with_origin, &|a| at(&d1, a))?);
            checks.push(sign("(tu')' positive", Rule::Positive, &with_origin, &|a| at(&q, a))?);
        }
    }
    Ok(Verdict::from_checks(mode, checks))
}

/// `∫₀^{node}` of `f` for every node, accumulated panel by panel.
pub(crate) fn running_integral<F: FnMut(f64) -> Result<f64>>(mut f: F, nodes: &[f64], breaks: &[f64], abs: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(nodes.len());
    let (mut acc, mut prev) = (0.0, 0.0);
    for &b in nodes {
        acc += integrate_split(&mut f, prev, b, breaks, abs, REL)?;
        out.push(acc);
        prev = b;
    }
    Ok(out)
}

fn check_nodes(nodes: &[f64]) -> Result<()> {
    if nodes.len() < 5 || !(nodes[0] > 0.0) || nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("nodes must be positive, strictly increasing and at least 5");
    }
    Ok(())
}

/// Spacing in `ln` of a geometric grid, or an error for other grids.
fn log_spacing(nodes: &[f64]) -> Result<f64> {
    let hw = (nodes[nodes.len() - 1] / nodes[0]).ln() / (nodes.len() - 1) as f64;
    let uniform = nodes.windows(2).all(|w| ((w[1] / w[0]).ln() - hw).abs() <= 1e-9 * hw.max(1e-300));
    if !uniform {
        return invalid("round-trip stencils need a geometric grid");
    }
    Ok(hw)
}

/// `F(a) = F0·exp(−∫₀ᵃ g(τ)/τ dτ)` for a generator `g` with `g(0) = 0`.
/// This is the shared shape of `χ → Q` and `ξ → h`.
#[derive(Clone, Debug)]
pub struct LogProfile {
    var: Var,
    generator: Expr,
    slope0: f64,
    breaks: Vec<f64>,
    pub norm: f64,
    pub nodes: Vec<f64>,
    /// `∫₀ᵃ g/τ`
    pub exponent: Vec<f64>,
    pub generator_values: Vec<f64>,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

impl LogProfile {
    pub fn new(generator: &Expr, var: Var, norm: f64, nodes: &[f64]) -> Result<Self> {
        check_nodes(nodes)?;
        if !(norm > 0.0) {
            return invalid("normalization must be positive");
        }
        let slope0 = generator.diff(var).at(var, 0.0)?;
        let breaks = generator.breakpoints(var);
        let exponent = running_integral(|a| Ok(generator.at(var, a)? / a), nodes, &breaks, EXP_ABS)?;
        let generator_values = nodes.iter().map(|&a| generator.at(var, a)).collect::<std::result::Result<Vec<_>, _>>()?;
        let values: Vec<f64> = exponent.iter().map(|e| norm * (-e).exp()).collect();
        let derivatives: Vec<f64> = (0..nodes.len()).map(|i| -generator_values[i] * values[i] / nodes[i]).collect();
        if values.iter().chain(&derivatives).any(|v| !v.is_finite()) || values.iter().any(|&v| v <= 0.0) {
            return Err(Error::NonFinite("exponential profile"));
        }
        Ok(Self {
            var,
            generator: generator.clone(),
            slope0,
            breaks,
            norm,
            nodes: nodes.to_vec(),
            exponent,
            generator_values,
            values,
            derivatives,
        })
    }

    pub fn sampled(&self) -> Result<SampledFunction> {
        let tag = classify_endpoint(&self.nodes, &self.values);
        Ok(SampledFunction::with_derivatives(self.nodes.clone(), self.values.clone(), self.derivatives.clone())?.tagged(tag))
    }

    /// Exponent, value and derivative at any `a ≥ 0` up to the last node.
    pub fn at(&self, a: f64) -> Result<(f64, f64, f64)> {
        if a == 0.0 {
            return Ok((0.0, self.norm, -self.slope0 * self.norm));
        }
        if !(a > 0.0 && a <= self.nodes[self.nodes.len() - 1]) {
            return Err(Error::OutsideGrid(a));
        }
        let i = self.nodes.partition_point(|&n| n <= a);
        let (a0, e0) = if i == 0 { (0.0, 0.0) } else { (self.nodes[i - 1], self.exponent[i - 1]) };
        let (g, var) = (&self.generator, self.var);
        let e = e0 + integrate_split(|x| Ok(g.at(var, x)? / x), a0, a, &self.breaks, EXP_ABS, REL)?;
        let val = self.norm * (-e).exp();
        Ok((e, val, -g.at(var, a)? * val / a))
    }

    /// Largest relative mismatch between the generator and `a·dE/da`
    /// recovered by a five-point stencil, interior nodes only.
    pub fn round_trip_error(&self) -> Result<f64> {
        let hw = log_spacing(&self.nodes)?;
        let rec = stencil_d1(&self.exponent, hw);
        let n = self.nodes.len();
        let mut worst: f64 = 0.0;
        for i in 2..n - 2 {
            let g = self.generator_values[i];
            let err = (rec[i] - g).abs();
            worst = worst.max(if g == 0.0 { err } else { err / g.abs() });
        }
        Ok(worst)
    }
}

/// `h(r) = h0·exp(−∫₀ʳ ξ/τ)`.
pub fn xi_to_h(xi: &Expr, h0: f64, nodes: &[f64]) -> Result<LogProfile> {
    LogProfile::new(xi, Var::R, h0, nodes)
}

/// Fiber data of the Calabi ansatz: `Q = tu″ + u′` from χ, then `u′` and `u`.
#[derive(Clone, Debug)]
pub struct FiberProfile {
    pub q: LogProfile,
    /// `∫₀ᵗ τQ′ dτ = −∫₀ᵗ χQ dτ`
    pub moment: Vec<f64>,
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
    pub u: Vec<f64>,
    pub chi_slopes: Vec<f64>,
    chi_slope: Expr,
}

/// Values at one argument, see [`FiberProfile::at`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiberPoint {
    pub t: f64,
    pub chi: f64,
    pub dchi: f64,
    pub exponent: f64,
    pub q: f64,
    pub dq: f64,
    pub moment: f64,
    pub du: f64,
    pub d2u: f64,
    pub u: f64,
}

/// `Q = Q0·exp(−∫χ/τ)`, `u′ = (1/t)∫₀ᵗQ`, `u = ∫₀ᵗu′`.
pub fn chi_to_q_u(chi: &Expr, q0: f64, nodes: &[f64]) -> Result<FiberProfile> {
    let q = LogProfile::new(chi, Var::T, q0, nodes)?;
    let chi_slope = chi.diff(Var::T);
    let chi_slopes = nodes.iter().map(|&t| chi_slope.at(Var::T, t)).collect::<std::result::Result<Vec<_>, _>>()?;
    let n = nodes.len();
    let dq0 = -q.slope0 * q0;
    // J = ∫₀ᵗ τQ′ = −∫₀ᵗ χQ gives u″ = J/t² and u′ = Q − J/t without cancellation.
    let g: Vec<f64> = (0..n).map(|i| -q.generator_values[i] * q.values[i]).collect();
    let dg: Vec<f64> = (0..n).map(|i| moment_slope(chi_slopes[i], q.generator_values[i], q.values[i], nodes[i])).collect();
    let moment = hermite_from_origin(nodes, &g, &dg, 0.0, -q.slope0 * q0);
    let du: Vec<f64> = (0..n).map(|i| q.values[i] - moment[i] / nodes[i]).collect();
    let d2u: Vec<f64> = (0..n).map(|i| moment[i] / (nodes[i] * nodes[i])).collect();
    let u = hermite_from_origin(nodes, &du, &d2u, q0, 0.5 * dq0);
    if u.iter().chain(&du).chain(&d2u).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fiber profile"));
    }
    Ok(FiberProfile { q, moment, du, d2u, u, chi_slopes, chi_slope })
}

/// `d/dt(−χQ) = −χ′Q + χ²Q/t`, with the limit `−χ′(0)Q(0)` at the origin.
fn moment_slope(dchi: f64, chi: f64, q: f64, t: f64) -> f64 {
    if t == 0.0 {
        -dchi * q
    } else {
        -dchi * q + chi * chi * q / t
    }
}

/// Fiber profile of any fiber-kind spec. A direct `u` is turned into
/// `χ = −tQ′/Q` with `Q = (tu′)′` and normalized by `Q(0)`.
pub fn fiber_profile(spec: &GeneratingSpec, nodes: &[f64]) -> Result<FiberProfile> {
    match spec.kind {
        Kind::Chi | Kind::ChiTilde => chi_to_q_u(&spec.expr, spec.params.norm, nodes),
        Kind::DirectU => {
            let t = Expr::var(Var::T);
            let du = spec.expr.diff(Var::T);
            let q = du.clone() + t.clone() * du.diff(Var::T);
            let chi = -(t * q.diff(Var::T)) / q.clone();
            chi_to_q_u(&chi, q.at(Var::T, 0.0)?, nodes)
        }
        other => invalid(format!("{other} is not a fiber generating function")),
    }
}

impl FiberProfile {
    pub fn nodes(&self) -> &[f64] {
        &self.q.nodes
    }

    pub fn chi(&self) -> &[f64] {
        &self.q.generator_values
    }

    pub fn q0(&self) -> f64 {
        self.q.norm
    }

    pub fn q_sampled(&self) -> Result<SampledFunction> {
        self.q.sampled()
    }

    pub fn du_sampled(&self) -> Result<SampledFunction> {
        let tag = classify_endpoint(self.nodes(), &self.du);
        Ok(SampledFunction::with_derivatives(self.nodes().to_vec(), self.du.clone(), self.d2u.clone())?.tagged(tag))
    }

    pub fn u_sampled(&self) -> Result<SampledFunction> {
        let tag = classify_endpoint(self.nodes(), &self.u);
        Ok(SampledFunction::with_derivatives(self.nodes().to_vec(), self.u.clone(), self.du.clone())?.tagged(tag))
    }

    pub fn point(&self, i: usize) -> FiberPoint {
        FiberPoint {
            t: self.q.nodes[i],
            chi: self.q.generator_values[i],
            dchi: self.chi_slopes[i],
            exponent: self.q.exponent[i],
            q: self.q.values[i],
            dq: self.q.derivatives[i],
            moment: self.moment[i],
            du: self.du[i],
            d2u: self.d2u[i],
            u: self.u[i],
        }
    }

    fn origin(&self) -> FiberPoint {
        let q0 = self.q.norm;
        let dq = -self.q.slope0 * q0;
        FiberPoint {
            t: 0.0,
            chi: 0.0,
            dchi: self.q.slope0,
            exponent: 0.0,
            q: q0,
            dq,
            moment: 0.0,
            du: q0,
            d2u: 0.5 * dq,
            u: 0.0,
        }
    }

    /// All fiber quantities at any `t` in `[0, last node]`; `t = 0` uses the limits.
    pub fn at(&self, t: f64) -> Result<FiberPoint> {
        if t == 0.0 {
            return Ok(self.origin());
        }
        let nodes = self.nodes();
        if let Ok(i) = nodes.binary_search_by(|n| n.total_cmp(&t)) {
            return Ok(self.point(i));
        }
        let (exponent, q, dq) = self.q.at(t)?;
        let i = nodes.partition_point(|&n| n <= t);
        let base = if i == 0 { self.origin() } else { self.point(i - 1) };
        let h = t - base.t;
        let chi = self.q.generator.at(Var::T, t)?;
        let dchi = self.chi_slope.at(Var::T, t)?;
        let g0 = -base.chi * base.q;
        let moment = base.moment + hermite_panel(h, g0, -chi * q, moment_slope(base.dchi, base.chi, base.q, base.t), moment_slope(dchi, chi, q, t));
        let du = q - moment / t;
        let d2u = moment / (t * t);
        let u = base.u + hermite_panel(h, base.du, du, base.d2u, d2u);
        Ok(FiberPoint {
            t,
            chi,
            dchi,
            exponent,
            q,
            dq,
            moment,
            du,
            d2u,
            u,
        })
    }

    /// `−tQ′/Q` recovered from `ln Q` against χ, relative, interior nodes.
    pub fn round_trip_error(&self) -> Result<f64> {
        self.q.round_trip_error()
    }
}

/// Tail behaviour from the increments over the last two decades: divergent
/// when they keep their sign without shrinking below half, a finite limit
/// when the last one is negligible and not growing.
pub fn classify_endpoint(args: &[f64], values: &[f64]) -> Endpoint {
    let hi = args[args.len() - 1];
    if hi < 100.0 * args[0] {
        return Endpoint::Unknown;
    }
    let sample = |a: f64| {
        let i = args.partition_point(|&x| x < a).min(args.len() - 1);
        values[i]
    };
    let (y0, y1, y2) = (sample(hi / 100.0), sample(hi / 10.0), values[values.len() - 1]);
    let (d1, d2) = (y1 - y0, y2 - y1);
    if d1 * d2 > 0.0 && d2.abs() >= 0.5 * d1.abs() {
        Endpoint::Divergent
    } else if d2.abs() <= 1e-3 * y2.abs().max(1.0) && d2.abs() <= d1.abs() {
        Endpoint::FiniteLimit
    } else {
        Endpoint::Unknown
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    /// `∫√(h/r) dr`
    Radial,
    /// `∫√(Q/t) dt`
    Fiber,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Completeness {
    Complete,
    Incomplete,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CompletenessReport {
    pub verdict: Completeness,
    pub partial_integral: f64,
    pub horizon: f64,
    /// Infimum of `arg·integrand` on the last dyadic window over the one
    /// in the middle of the tail.
    pub tail_ratio: Option<f64>,
    pub windows: usize,
}

impl CompletenessReport {
    fn inconclusive(horizon: f64) -> Self {
        Self { verdict: Completeness::Inconclusive, partial_integral: 0.0, horizon, tail_ratio: None, windows: 0 }
    }
}

/// Finite-horizon divergence test for `∫ integrand` over the sampled range.
///
/// Divergent when the partial integral (plus `head`, the piece below the
/// first node) reaches `threshold`, or when the infimum of `arg·integrand`
/// over dyadic windows stays within a factor 4 from the middle of the tail to
/// its end. It is declared convergent when that factor exceeds 16.
pub fn divergence_check(args: &[f64], integrand: &[f64], head: f64, threshold: f64) -> CompletenessReport {
    let horizon = args[args.len() - 1];
    let mut partial = head;
    for i in 1..args.len() {
        partial += 0.5 * (args[i] - args[i - 1]) * (integrand[i] + integrand[i - 1]);
    }
    let mut windows = Vec::new();
    let mut lo = 1.0_f64;
    while 2.0 * lo <= horizon {
        let inf = args
            .iter()
            .zip(integrand)
            .filter(|(a, _)| **a >= lo && **a <= 2.0 * lo)
            .map(|(a, g)| a * g)
            .fold(f64::INFINITY, f64::min);
        if inf.is_finite() {
            windows.push(inf);
        }
        lo *= 2.0;
    }
    let mut report = CompletenessReport { verdict: Completeness::Inconclusive, partial_integral: partial, horizon, tail_ratio: None, windows: windows.len() };
    if partial >= threshold {
        report.verdict = Completeness::Complete;
    }
    if windows.len() >= 6 {
        let mid = windows[windows.len() / 2];
        if mid > 0.0 {
            let ratio = windows[windows.len() - 1] / mid;
            report.tail_ratio = Some(ratio);
            if report.verdict != Completeness::Complete {
                report.verdict = if ratio >= 0.25 {
                    Completeness::Complete
                } else if ratio < 1.0 / 16.0 {
                    Completeness::Incomplete
                } else {
                    Completeness::Inconclusive
                };
            }
        }
    }
    report
}

/// Completeness of `dr²·h/(4r)`-type metrics: divergence of `∫√(f/a) da`.
/// The piece below the first node is `2√(a₀f(a₀))` after `a = τ²`.
pub fn completeness_check(f: &SampledFunction, _form: Form) -> CompletenessReport {
    let (args, vals) = (f.grid(), f.values());
    if vals.iter().any(|&v| !(v > 0.0)) || !(args[0] > 0.0) {
        return CompletenessReport::inconclusive(f.hi());
    }
    let g: Vec<f64> = args.iter().zip(vals).map(|(a, v)| (v / a).sqrt()).collect();
    divergence_check(args, &g, 2.0 * (args[0] * vals[0]).sqrt(), DIVERGENCE_THRESHOLD)
}

/// Every radial representation sampled at the same nodes.
///
/// `arg` holds the nodes in the spec's own variable. Derivative columns:
/// `df, dh, dxi` in `r`, `dp` in `x`, `dpsi` in `s`. `v_alt` is the volume
/// function by a second, independent quadrature route.
#[derive(Clone, Debug, Default)]
pub struct RadialSamples {
    pub arg: Vec<f64>,
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    pub h: Vec<f64>,
    pub dh: Vec<f64>,
    pub xi: Vec<f64>,
    pub dxi: Vec<f64>,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub dp: Vec<f64>,
    pub v: Vec<f64>,
    pub v_alt: Vec<f64>,
    pub s: Vec<f64>,
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub phi: Vec<f64>,
}

fn eval_all(e: &Expr, v: Var, nodes: &[f64]) -> Result<Vec<f64>> {
    nodes.iter().map(|&a| Ok(e.at(v, a)?)).collect()
}

/// Hermite-corrected running integral starting from a known panel `[0, a₀]`.
fn hermite_from_origin(args: &[f64], fs: &[f64], ds: &[f64], f0: f64, d0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(args.len());
    let mut acc = hermite_panel(args[0], f0, fs[0], d0, ds[0]);
    out.push(acc);
    for i in 1..args.len() {
        acc += hermite_panel(args[i] - args[i - 1], fs[i - 1], fs[i], ds[i - 1], ds[i]);
        out.push(acc);
    }
    out
}

/// Integral over one panel from values, slopes and second derivatives at
/// both ends; sixth order.
fn quintic_panel(h: f64, a: [f64; 3], b: [f64; 3]) -> f64 {
    0.5 * h * (a[0] + b[0]) + h * h * (a[1] - b[1]) / 10.0 + h * h * h * (a[2] + b[2]) / 120.0
}

/// Running integral from 0 by sixth-order panels, given value, slope and
/// second derivative at every node and at the origin.
fn sixth_order_from_origin(args: &[f64], cols: [&[f64]; 3], origin: [f64; 3]) -> Vec<f64> {
    let at = |i: usize| [cols[0][i], cols[1][i], cols[2][i]];
    let mut acc = quintic_panel(args[0], origin, at(0));
    let mut out = vec![acc];
    for i in 1..args.len() {
        acc += quintic_panel(args[i] - args[i - 1], at(i - 1), at(i));
        out.push(acc);
    }
    out
}

/// `∫φ ds` over the `s`-samples (φ′ = ψ, φ″ = ψ′, φ and ψ vanish at 0).
fn phi_integral(s: &[f64], phi: &[f64], psi: &[f64], dpsi: &[f64], dpsi0: f64) -> Vec<f64> {
    sixth_order_from_origin(s, [phi, psi, dpsi], [0.0, 0.0, dpsi0])
}

/// Populate every representation of a radial spec (kinds ξ, p, ψ, f) at the
/// given positive nodes of the spec's own variable.
pub fn conversions(spec: &GeneratingSpec, nodes: &[f64]) -> Result<RadialSamples> {
    check_nodes(nodes)?;
    let var = spec.var();
    let e = &spec.expr;
    let breaks = e.breakpoints(var);
    let n = nodes.len();
    let mut m = RadialSamples { arg: nodes.to_vec(), ..Default::default() };
    match spec.kind {
        Kind::FProfile => {
            let r = Expr::var(Var::R);
            let df_e = e.diff(Var::R);
            let d2f_e = df_e.diff(Var::R);
            let d3f_e = d2f_e.diff(Var::R);
            let f = eval_all(e, var, nodes)?;
            let df = eval_all(&df_e, var, nodes)?;
            let d2f = eval_all(&d2f_e, var, nodes)?;
            let d3f = eval_all(&d3f_e, var, nodes)?;
            m.r = nodes.to_vec();
            for i in 0..n {
                let ri = nodes[i];
                let h = f[i] + ri * df[i];
                let dh = 2.0 * df[i] + ri * d2f[i];
                let d2h = 3.0 * d2f[i] + ri * d3f[i];
                m.h.push(h);
                m.dh.push(dh);
                m.xi.push(-ri * dh / h);
                m.dxi.push(-((dh + ri * d2h) / h - ri * dh * dh / (h * h)));
                m.x.push((ri * h).sqrt());
                m.p.push(h / (h + ri * dh));
                m.v.push(ri * f[i]);
            }
            m.f = f;
            m.df = df;
            // Independent route for the p-form: symbolic p and x in r.
            let h_e = (r.clone() * e.clone()).diff(Var::R);
            let xi_e = -(r.clone() * h_e.diff(Var::R)) / h_e.clone();
            let p_e = Expr::c(1.0) / (Expr::c(1.0) - xi_e);
            let x_e = (r * h_e.clone()).sqrt();
            let dp_dr = eval_all(&p_e.diff(Var::R), var, nodes)?;
            let dx_dr = eval_all(&x_e.diff(Var::R), var, nodes)?;
            m.dp = dp_dr.iter().zip(&dx_dr).map(|(a, b)| a / b).collect();
            m.v_alt = running_integral(|a| Ok(h_e.at(Var::R, a)?), nodes, &breaks, 0.0)?;
            let roots: Vec<f64> = nodes.iter().map(|a| a.sqrt()).collect();
            let root_breaks: Vec<f64> = breaks.iter().filter(|&&c| c > 0.0).map(|c| c.sqrt()).collect();
            m.s = running_integral(|q| Ok(h_e.at(Var::R, q * q)?.sqrt()), &roots, &root_breaks, 0.0)?;
        }
        Kind::Xi => {
            let prof = xi_to_h(e, spec.params.norm, nodes)?;
            let dxi_e = e.diff(Var::R);
            let h0 = spec.params.norm;
            m.r = nodes.to_vec();
            m.xi = prof.generator_values.clone();
            m.dxi = eval_all(&dxi_e, var, nodes)?;
            m.h = prof.values.clone();
            m.dh = prof.derivatives.clone();
            m.v = hermite_from_origin(nodes, &m.h, &m.dh, h0, -prof.slope0 * h0);
            m.f = (0..n).map(|i| m.v[i] / nodes[i]).collect();
            m.df = (0..n).map(|i| (m.h[i] - m.f[i]) / nodes[i]).collect();
            m.x = (0..n).map(|i| (nodes[i] * m.h[i]).sqrt()).collect();
            m.p = m.xi.iter().map(|xi| 1.0 / (1.0 - xi)).collect();
            m.dp = (0..n).map(|i| 2.0 * m.x[i] * m.p[i].powi(3) * m.dxi[i] / m.h[i]).collect();
            let g: Vec<f64> = (0..n).map(|i| 0.5 * (m.h[i] / nodes[i]).sqrt()).collect();
            let dg: Vec<f64> = (0..n).map(|i| 0.5 * g[i] * (m.dh[i] / m.h[i] - 1.0 / nodes[i])).collect();
            let head = nodes[0].sqrt() * 0.5 * (h0.sqrt() + m.h[0].sqrt());
            let mut s = vec![head];
            for i in 1..n {
                s.push(s[i - 1] + hermite_panel(nodes[i] - nodes[i - 1], g[i - 1], g[i], dg[i - 1], dg[i]));
            }
            m.s = s;
        }
        Kind::P => {
            let dp_e = e.diff(Var::X);
            let p = eval_all(e, var, nodes)?;
            m.dp = eval_all(&dp_e, var, nodes)?;
            let log_r = running_integral(|a| Ok(2.0 * (e.at(Var::X, a)? - 1.0) / a), nodes, &breaks, EXP_ABS)?;
            m.r = (0..n).map(|i| nodes[i] * nodes[i] * log_r[i].exp()).collect();
            m.v = running_integral(|a| Ok(2.0 * a * e.at(Var::X, a)?), nodes, &breaks, 0.0)?;
            m.s = running_integral(|a| Ok(e.at(Var::X, a)?), nodes, &breaks, 0.0)?;
            m.x = nodes.to_vec();
            m.h = (0..n).map(|i| nodes[i] * nodes[i] / m.r[i]).collect();
            m.f = (0..n).map(|i| m.v[i] / m.r[i]).collect();
            m.xi = p.iter().map(|p| 1.0 - 1.0 / p).collect();
            m.dh = (0..n).map(|i| -m.xi[i] * m.h[i] / m.r[i]).collect();
            m.df = (0..n).map(|i| (m.h[i] - m.f[i]) / m.r[i]).collect();
            m.dxi = (0..n).map(|i| m.dp[i] / (p[i] * p[i]) * m.h[i] / (2.0 * nodes[i] * p[i])).collect();
            m.p = p;
        }
        Kind::Psi => {
            let dpsi_e = e.diff(Var::S);
            let d2psi0 = dpsi_e.diff(Var::S).at(Var::S, 0.0)?;
            let psi = eval_all(e, var, nodes)?;
            let dpsi = eval_all(&dpsi_e, var, nodes)?;
            let phi = running_integral(|a| Ok(e.at(Var::S, a)?), nodes, &breaks, 0.0)?;
            let big_phi = phi_integral(nodes, &phi, &psi, &dpsi, dpsi_e.at(Var::S, 0.0)?);
            // ln r = 2 ln s − ∫₀ˢ 2φ/(τ(τ+φ)) dτ
            let g: Vec<f64> = (0..n).map(|i| 2.0 * phi[i] / (nodes[i] * (nodes[i] + phi[i]))).collect();
            let dg: Vec<f64> = (0..n)
                .map(|i| {
                    let (t, ph) = (nodes[i], phi[i]);
                    let d = t * (t + ph);
                    2.0 * (psi[i] * d - ph * (2.0 * t + ph + t * psi[i])) / (d * d)
                })
                .collect();
            // g″ = 2[(ψ′D − φD″)D − 2D′(ψD − φD′)]/D³ with D = τ(τ+φ).
            let d2g: Vec<f64> = (0..n)
                .map(|i| {
                    let (t, ph, ps) = (nodes[i], phi[i], psi[i]);
                    let d = t * (t + ph);
                    let d1 = 2.0 * t + ph + t * ps;
                    let d2 = 2.0 + 2.0 * ps + t * dpsi[i];
                    2.0 * ((dpsi[i] * d - ph * d2) * d - 2.0 * d1 * (ps * d - ph * d1)) / (d * d * d)
                })
                .collect();
            let big_i = sixth_order_from_origin(nodes, [&g, &dg, &d2g], [0.0, d2psi0 / 3.0, 0.0]);
            m.r = (0..n).map(|i| nodes[i] * nodes[i] * (-big_i[i]).exp()).collect();
            m.s = nodes.to_vec();
            m.x = (0..n).map(|i| nodes[i] + phi[i]).collect();
            m.v = (0..n).map(|i| nodes[i] * nodes[i] + 2.0 * big_phi[i]).collect();
            m.h = (0..n).map(|i| m.x[i] * m.x[i] / m.r[i]).collect();
            m.f = (0..n).map(|i| m.v[i] / m.r[i]).collect();
            m.xi = psi.iter().map(|p| -p).collect();
            m.dh = (0..n).map(|i| psi[i] * m.h[i] / m.r[i]).collect();
            m.df = (0..n).map(|i| (m.h[i] - m.f[i]) / m.r[i]).collect();
            m.p = psi.iter().map(|p| 1.0 / (1.0 + p)).collect();
            m.dp = (0..n).map(|i| -dpsi[i] * m.p[i].powi(3)).collect();
            m.dxi = (0..n).map(|i| -dpsi[i] * m.x[i] / (2.0 * m.r[i])).collect();
            // v = ∫h dr by sixth-order panels: h″ = ψ′x h/(2r²) + ψ(ψ − 1)h/r².
            let d2h: Vec<f64> = (0..n)
                .map(|i| {
                    let (r, h) = (m.r[i], m.h[i]);
                    (dpsi[i] * m.x[i] / 2.0 + psi[i] * (psi[i] - 1.0)) * h / (r * r)
                })
                .collect();
            m.v_alt = sixth_order_from_origin(&m.r, [&m.h, &m.dh, &d2h], [1.0, d2psi0 / 2.0, 0.0]);
            m.psi = psi;
            m.dpsi = dpsi;
            m.phi = phi;
        }
        other => return invalid(format!("{other} is not a radial generating function")),
    }
    if m.psi.is_empty() {
        m.psi = m.xi.iter().map(|x| -x).collect();
        m.dpsi = (0..n).map(|i| -m.dxi[i] * 2.0 * m.r[i] / m.x[i]).collect();
        m.phi = (0..n).map(|i| m.x[i] - m.s[i]).collect();
    }
    if m.v_alt.is_empty() {
        let big_phi = phi_integral(&m.s, &m.phi, &m.psi, &m.dpsi, 0.0);
        m.v_alt = (0..n).map(|i| m.s[i] * m.s[i] + 2.0 * big_phi[i]).collect();
    }
    for (name, col) in [("r", &m.r), ("h", &m.h), ("x", &m.x), ("s", &m.s), ("v", &m.v)] {
        if col.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("radial conversion"));
        }
        if col.windows(2).any(|w| !(w[1] > w[0])) && name != "h" {
            return invalid(format!("conversion produced a non-increasing {name}; the spec is invalid or the grid too coarse"));
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: Kind, src: &str) -> GeneratingSpec {
        GeneratingSpec::parse(kind, src).unwrap()
    }

    #[test]
    fn validate_chi_modes() {
        let g = Grid::default();
        let strict = validate(&spec(Kind::Chi, "-t/(1+t)"), Mode::Strict, &g).unwrap();
        assert!(strict.valid);
        let zero = spec(Kind::Chi, "0");
        assert!(validate(&zero, Mode::Weak, &g).unwrap().valid);
        assert!(!validate(&zero, Mode::Strict, &g).unwrap().valid);
        let bad = validate(&spec(Kind::Chi, "t"), Mode::Weak, &g).unwrap();
        assert!(!bad.valid);
        assert_eq!(bad.tightest().unwrap().name, "derivative negative");
    }

    #[test]
    fn flat_fiber() {
        let nodes = Grid::new(1e-3, 1e2, 200).unwrap().nodes();
        let prof = chi_to_q_u(&Expr::c(0.0), 1.0, &nodes).unwrap();
        for i in 0..nodes.len() {
            assert_eq!(prof.q.values[i], 1.0);
            assert!((prof.du[i] - 1.0).abs() < 1e-14);
            assert!((prof.u[i] - nodes[i]).abs() < 1e-12 * nodes[i].max(1.0));
        }
        assert_eq!(prof.q_sampled().unwrap().endpoint, Endpoint::FiniteLimit);
    }

    #[test]
    fn fiber_point_matches_nodes_and_limits() {
        let nodes = Grid::new(1e-4, 1e2, 400).unwrap().nodes();
        let prof = chi_to_q_u(&parse("-t/(1+t)").unwrap(), 1.0, &nodes).unwrap();
        let o = prof.at(0.0).unwrap();
        assert_eq!((o.q, o.du, o.dq), (1.0, 1.0, 1.0));
        // Q = (1+t) e^{?}: −tQ′/Q = −t/(1+t) integrates to Q = 1 + t.
        let p = prof.at(3.3).unwrap();
        assert!((p.q - 4.3).abs() < 1e-12);
        assert!((p.du - (1.0 + 3.3 / 2.0)).abs() < 1e-9);
        assert!((p.u - (3.3 + 3.3 * 3.3 / 4.0)).abs() < 1e-8);
    }

    #[test]
    fn grid_parsing() {
        assert_eq!("1e-3:10:50".parse::<Grid>().unwrap(), Grid { lo: 1e-3, hi: 10.0, n: 50 });
        assert!("0:1:10".parse::<Grid>().is_err());
        assert!("1:2".parse::<Grid>().is_err());
    }

    #[test]
    fn kind_rejects_foreign_variable() {
        assert!(GeneratingSpec::parse(Kind::Chi, "-r").is_err());
    }

    #[test]
    fn divergence_rules() {
        let nodes = Grid::new(1e-6, 1e6, 2000).unwrap().nodes();
        let flat = SampledFunction::new(nodes.clone(), vec![1.0; nodes.len()]).unwrap();
        assert_eq!(completeness_check(&flat, Form::Radial).verdict, Completeness::Complete);
        let decaying = SampledFunction::new(nodes.clone(), nodes.iter().map(|r| (1.0 + r).powi(-3)).collect()).unwrap();
        assert_eq!(completeness_check(&decaying, Form::Radial).verdict, Completeness::Incomplete);
    }
}
