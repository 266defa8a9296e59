//! U(n)-invariant Kähler metrics on ℂⁿ: curvature components, volume growth,
//! average curvature decay, unbounded-curvature perturbations and a registry
//! of named examples.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exprdsl::{Expr, Var};
use crate::genfun::{
    classify_endpoint, completeness_check, conversions, divergence_check, running_integral, Check, Completeness,
    CompletenessReport, Form, GeneratingSpec, Grid, Kind, RadialSamples, DIVERGENCE_THRESHOLD,
};
use crate::numerics::{blend, cap_at_origin, geometric_nodes, hermite_panel, stencil_d1};
use crate::sampled::{Endpoint, SampledFunction};

/// Relative agreement required between the two curvature routes.
pub const DUAL_TOL: f64 = 1e-6;
/// Relative agreement required between the sampled representations.
pub const CONSISTENCY_TOL: f64 = 1e-6;
/// Below this fraction of the natural scale `1/v` a curvature value counts as
/// zero.
const ZERO_TOL: f64 = 1e-9;
/// Slope of `ln p` against `ln x` below which `p` is taken to decay to 0.
const P_DECAY_SLOPE: f64 = -0.02;

/// Volume of the unit ball in ℝ²ⁿ, `πⁿ/n!`.
pub fn unit_ball_volume(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * PI / k as f64)
}

pub fn d_value(a: f64, b: f64, c: f64) -> f64 {
    a * c - b * b
}

pub fn dn_value(n: usize, a: f64, b: f64, c: f64) -> f64 {
    n as f64 / (2.0 * (n as f64 - 1.0)) * a * c - b * b
}

/// A radial metric with every representation sampled on one grid.
#[derive(Clone, Debug)]
pub struct RadialMetric {
    pub n: usize,
    pub spec: GeneratingSpec,
    pub grid: Grid,
    pub samples: RadialSamples,
    pub completeness: CompletenessReport,
    pub checks: Vec<Check>,
}

fn radial_completeness(spec: &GeneratingSpec, m: &RadialSamples) -> Result<CompletenessReport> {
    Ok(match spec.kind {
        Kind::P => {
            let g: Vec<f64> = m.x.iter().zip(&m.p).map(|(x, p)| p / x).collect();
            divergence_check(&m.x, &g, 0.0, DIVERGENCE_THRESHOLD)
        }
        Kind::Psi => {
            let g: Vec<f64> = m.s.iter().zip(&m.phi).map(|(s, ph)| 1.0 / (s + ph)).collect();
            divergence_check(&m.s, &g, 0.0, DIVERGENCE_THRESHOLD)
        }
        _ => completeness_check(&SampledFunction::new(m.r.clone(), m.h.clone())?, Form::Radial),
    })
}

/// Worst relative mismatch between the increments of `ys` and the Hermite
/// integral of `g` (with slope `dg`) over each panel of `xs`. Panels whose
/// native range contains a breakpoint are skipped.
fn panel_check(name: &str, args: &[f64], breaks: &[f64], xs: &[f64], ys: &[f64], g: &[f64], dg: &[f64]) -> Check {
    let (mut worst, mut loc) = (0.0_f64, f64::NAN);
    for i in 1..xs.len() {
        if breaks.iter().any(|&b| b >= args[i - 1] && b <= args[i]) {
            continue;
        }
        let dy = ys[i] - ys[i - 1];
        let quad = hermite_panel(xs[i] - xs[i - 1], g[i - 1], g[i], dg[i - 1], dg[i]);
        let err = (dy - quad).abs() / dy.abs().max(f64::MIN_POSITIVE);
        if err > worst || err.is_nan() {
            worst = err;
            loc = args[i];
        }
    }
    Check::from_margin(name, worst <= CONSISTENCY_TOL, CONSISTENCY_TOL - worst, loc)
}

impl RadialMetric {
    /// Build from a radial generating spec (kinds f, ξ, p, ψ), failing when
    /// the sampled representations disagree.
    pub fn build(spec: &GeneratingSpec, n: usize, grid: &Grid) -> Result<Self> {
        let m = Self::build_unchecked(spec, n, grid)?;
        if let Some(bad) = m.checks[1..4].iter().find(|c| !c.pass) {
            return Err(Error::Invalid(format!(
                "inconsistent conversions: `{}` off by {:e} near {}",
                bad.name,
                CONSISTENCY_TOL - bad.worst_margin,
                bad.location
            )));
        }
        Ok(m)
    }

    /// As [`RadialMetric::build`], with the consistency checks recorded but
    /// not enforced. Used for specs with features narrower than the grid.
    pub fn build_unchecked(spec: &GeneratingSpec, n: usize, grid: &Grid) -> Result<Self> {
        if n == 0 {
            return invalid("the complex dimension must be at least 1");
        }
        let samples = conversions(spec, &grid.nodes())?;
        let m = &samples;
        if m.f.iter().chain(&m.h).any(|&v| !(v > 0.0)) {
            return invalid("f and h must be positive on the grid");
        }
        let completeness = radial_completeness(spec, m)?;
        let breaks = spec.expr.breakpoints(spec.var());
        let len = m.arg.len();
        let two_x: Vec<f64> = m.x.iter().map(|x| 2.0 * x).collect();
        let v_ss: Vec<f64> = m.psi.iter().map(|p| 2.0 + 2.0 * p).collect();
        let one_psi: Vec<f64> = m.psi.iter().map(|p| 1.0 + p).collect();
        let mut checks = vec![
            Check::from_margin(
                "f > 0 and h > 0",
                true,
                m.f.iter().chain(&m.h).fold(f64::INFINITY, |a, &b| a.min(b)),
                f64::NAN,
            ),
            panel_check("h = (rf)'", &m.arg, &breaks, &m.r, &m.v, &m.h, &m.dh),
            panel_check("v'(s) = 2x", &m.arg, &breaks, &m.s, &m.v, &two_x, &v_ss),
            panel_check("v''(s) = 2 + 2 psi", &m.arg, &breaks, &m.s, &m.x, &one_psi, &m.dpsi),
        ];
        debug_assert_eq!(len, m.v.len());
        checks.push(Check::from_margin(
            "complete",
            completeness.verdict == Completeness::Complete,
            completeness.tail_ratio.unwrap_or(completeness.partial_integral / DIVERGENCE_THRESHOLD),
            completeness.horizon,
        ));
        Ok(Self { n, spec: spec.clone(), grid: *grid, samples, completeness, checks })
    }

    /// The same metric in another complex dimension.
    pub fn with_dim(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.samples.arg
    }

    pub fn f_of_r(&self) -> Result<SampledFunction> {
        SampledFunction::with_derivatives(self.samples.r.clone(), self.samples.f.clone(), self.samples.df.clone())
    }

    pub fn h_of_r(&self) -> Result<SampledFunction> {
        SampledFunction::with_derivatives(self.samples.r.clone(), self.samples.h.clone(), self.samples.dh.clone())
    }

    pub fn p_of_x(&self) -> Result<SampledFunction> {
        SampledFunction::with_derivatives(self.samples.x.clone(), self.samples.p.clone(), self.samples.dp.clone())
    }

    /// `v(s)`, with the exact slope `2x`.
    pub fn v_of_s(&self) -> Result<SampledFunction> {
        let m = &self.samples;
        SampledFunction::with_derivatives(m.s.clone(), m.v.clone(), m.x.iter().map(|x| 2.0 * x).collect())
    }

    pub fn psi_of_s(&self) -> Result<SampledFunction> {
        let m = &self.samples;
        let tag = classify_endpoint(&m.s, &m.psi);
        Ok(SampledFunction::with_derivatives(m.s.clone(), m.psi.clone(), m.dpsi.clone())?.tagged(tag))
    }

    /// For ψ-built metrics: `ψ` recovered as `(v″ − 2)/2` by a double
    /// five-point stencil in `ln s`, compared with the input relative to
    /// `1 + ψ`. Interior nodes away from breakpoints only.
    pub fn recovered_psi_error(&self) -> Option<f64> {
        if self.spec.kind != Kind::Psi {
            return None;
        }
        let m = &self.samples;
        let n = m.s.len();
        let hw = (m.s[n - 1] / m.s[0]).ln() / (n - 1) as f64;
        // v″ = s⁻²(d²v/dℓ² − dv/dℓ) with ℓ = ln s.
        let d1 = stencil_d1(&m.v, hw);
        let d2 = stencil_d1(&d1, hw);
        let breaks = self.spec.expr.breakpoints(Var::S);
        let mut worst: f64 = 0.0;
        for i in 4..n - 4 {
            if breaks.iter().any(|&b| b >= m.s[i - 4] && b <= m.s[i + 4]) {
                continue;
            }
            let s2 = m.s[i] * m.s[i];
            let psi = ((d2[i] - d1[i]) / s2 - 2.0) / 2.0;
            worst = worst.max((psi - m.psi[i]).abs() / (1.0 + m.psi[i]));
        }
        Some(worst)
    }
}

// ---------------------------------------------------------------------------
// curvature

/// `A, B, C` at one point by the f,h-form and by the p-form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureSample {
    /// Node in the spec's own variable (0 for the origin).
    pub arg: f64,
    pub r: f64,
    pub s: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: Option<f64>,
    pub dn: Option<f64>,
    pub a_alt: f64,
    pub b_alt: f64,
    pub c_alt: f64,
    /// Worst relative disagreement of the two routes.
    pub dual_error: f64,
    /// Natural curvature scale `1/v` (1 at the origin).
    pub scale: f64,
}

fn dual_rel(x: f64, y: f64, floor: f64) -> f64 {
    (x - y).abs() / x.abs().max(y.abs()).max(floor)
}

impl CurvatureSample {
    #[allow(clippy::too_many_arguments)]
    fn new(n: usize, arg: f64, r: f64, s: f64, scale: f64, h: [f64; 3], p: [f64; 3]) -> Self {
        let [a, b, c] = h;
        let [a_alt, b_alt, c_alt] = p;
        let floor = 1e-6 * scale;
        let dual_error = dual_rel(a, a_alt, floor).max(dual_rel(b, b_alt, floor)).max(dual_rel(c, c_alt, floor));
        let (d, dn) = if n >= 2 { (Some(d_value(a, b, c)), Some(dn_value(n, a, b, c))) } else { (None, None) };
        Self { arg, r, s, a, b, c, d, dn, a_alt, b_alt, c_alt, dual_error, scale }
    }

    /// `−R = −A − 2(n−1)B − n(n−1)C/2`.
    pub fn minus_scalar(&self, n: usize) -> f64 {
        let nf = n as f64;
        -self.a - 2.0 * (nf - 1.0) * self.b - 0.5 * nf * (nf - 1.0) * self.c
    }
}

fn sample_at(n: usize, m: &RadialSamples, i: usize) -> CurvatureSample {
    let (f, df, h, dh, dxi) = (m.f[i], m.df[i], m.h[i], m.dh[i], m.dxi[i]);
    let hform = [dxi / h, df / (f * f) - dh / (h * f), -2.0 * df / (f * f)];
    let (x, p, dp, v) = (m.x[i], m.p[i], m.dp[i], m.v_alt[i]);
    let pform = [dp / (2.0 * x * p.powi(3)), x * x / (v * v) - 1.0 / (v * p), 2.0 / v - 2.0 * x * x / (v * v)];
    CurvatureSample::new(n, m.arg[i], m.r[i], m.s[i], 1.0 / m.v[i], hform, pform)
}

/// Curvature over the grid, origin first.
#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub n: usize,
    pub samples: Vec<CurvatureSample>,
    pub dual_worst: f64,
    pub dual_location: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bisectional {
    Negative,
    NonPositive,
    Indefinite,
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub bisectional: Bisectional,
    pub sectional_negative: bool,
    pub operator_negative: bool,
    /// Scale-free margins: `−A·v`, `−B·v`, `−C·v`, `D·v²`, `Dₙ·v²`.
    pub checks: Vec<Check>,
    /// Range of `s` where `D ≤ 0`, if any.
    pub d_nonpositive_span: Option<(f64, f64)>,
}

impl RadialMetric {
    /// `h''`-free origin limits. With `p(x) = 1 + κx²/2 + …` the p-form gives
    /// `(A, B, C)(0) = (κ/2, κ/4, κ/2)`; the f,h-form uses `ξ′(0)` and `h(0)`.
    pub fn origin(&self) -> Result<CurvatureSample> {
        let e = &self.spec.expr;
        let v = self.spec.var();
        let d1 = e.diff(v);
        let (h0, xi1, kappa) = match self.spec.kind {
            Kind::FProfile => {
                let (f0, f1) = (e.at(v, 0.0)?, d1.at(v, 0.0)?);
                (f0, -2.0 * f1 / f0, -4.0 * f1 / (f0 * f0))
            }
            Kind::Xi => {
                let (h0, xi1) = (self.spec.params.norm, d1.at(v, 0.0)?);
                (h0, xi1, 2.0 * xi1 / h0)
            }
            Kind::P => {
                let kappa = d1.diff(v).at(v, 0.0)?;
                (1.0, kappa / 2.0, kappa)
            }
            Kind::Psi => {
                let kappa = -d1.diff(v).at(v, 0.0)?;
                (1.0, kappa / 2.0, kappa)
            }
            other => return invalid(format!("{other} is not a radial generating function")),
        };
        let (f0, f1, h1) = (h0, -xi1 * h0 / 2.0, -xi1 * h0);
        let hform = [xi1 / h0, f1 / (f0 * f0) - h1 / (h0 * f0), -2.0 * f1 / (f0 * f0)];
        let pform = [kappa / 2.0, kappa / 4.0, kappa / 2.0];
        Ok(CurvatureSample::new(self.n, 0.0, 0.0, 0.0, 1.0, hform, pform))
    }

    /// Curvature at a single point of the spec's own variable, recomputed on
    /// a dedicated grid ending there.
    pub fn curvature_at(&self, arg: f64) -> Result<CurvatureSample> {
        if arg == 0.0 {
            return self.origin();
        }
        if !(arg > 0.0 && arg.is_finite()) {
            return Err(Error::OutsideGrid(arg));
        }
        let lo = self.grid.lo.min(arg / 2.0);
        let m = conversions(&self.spec, &geometric_nodes(lo, arg, 401))?;
        Ok(sample_at(self.n, &m, m.arg.len() - 1))
    }

    pub fn curvature_table(&self) -> Result<CurvatureReport> {
        let mut samples = vec![self.origin()?];
        samples.extend((0..self.samples.arg.len()).map(|i| sample_at(self.n, &self.samples, i)));
        let (mut dual_worst, mut dual_location) = (0.0_f64, f64::NAN);
        for c in &samples {
            if c.dual_error > dual_worst || c.dual_error.is_nan() {
                dual_worst = c.dual_error;
                dual_location = c.arg;
            }
        }
        Ok(CurvatureReport { n: self.n, samples, dual_worst, dual_location })
    }

    /// The curvature table, failing when the two routes disagree.
    pub fn curvature(&self) -> Result<CurvatureReport> {
        let rep = self.curvature_table()?;
        if !(rep.dual_worst <= DUAL_TOL) {
            return Err(Error::Invalid(format!(
                "curvature cross-check failed: relative gap {:e} at {}",
                rep.dual_worst, rep.dual_location
            )));
        }
        Ok(rep)
    }
}

/// Sign verdicts over a curvature table. For `n = 1` only `A` is meaningful
/// and all three verdicts reduce to its sign.
pub fn classify(rep: &CurvatureReport) -> Classification {
    let scaled = |c: &CurvatureSample, x: f64, k: i32| -x / c.scale.powi(k);
    let worst = |name: &str, g: &dyn Fn(&CurvatureSample) -> Option<f64>| {
        let mut best = (f64::INFINITY, f64::NAN);
        for c in &rep.samples {
            if let Some(m) = g(c) {
                if m < best.0 || m.is_nan() {
                    best = (m, c.arg);
                }
            }
        }
        Check::from_margin(name, best.0 > 0.0, best.0, best.1)
    };
    let mut checks = vec![worst("A < 0", &|c| Some(scaled(c, c.a, 1)))];
    if rep.n >= 2 {
        checks.push(worst("B < 0", &|c| Some(scaled(c, c.b, 1))));
        checks.push(worst("C < 0", &|c| Some(scaled(c, c.c, 1))));
        checks.push(worst("D > 0", &|c| c.d.map(|d| -scaled(c, d, 2))));
        checks.push(worst("Dn > 0", &|c| c.dn.map(|d| -scaled(c, d, 2))));
    }
    let bi = &checks[..checks.len().min(3)];
    let bisectional = if bi.iter().all(|c| c.worst_margin > 0.0) {
        Bisectional::Negative
    } else if bi.iter().all(|c| c.worst_margin >= -ZERO_TOL) {
        Bisectional::NonPositive
    } else {
        Bisectional::Indefinite
    };
    let negative = bisectional == Bisectional::Negative;
    let (sectional_negative, operator_negative) =
        if rep.n >= 2 { (negative && checks[3].pass, negative && checks[4].pass) } else { (negative, negative) };
    let bad: Vec<f64> = rep.samples.iter().filter(|c| c.d.is_some_and(|d| d <= 0.0)).map(|c| c.s).collect();
    let d_nonpositive_span = if bad.is_empty() { None } else { Some((bad[0], bad[bad.len() - 1])) };
    Classification { bisectional, sectional_negative, operator_negative, checks, d_nonpositive_span }
}

// ---------------------------------------------------------------------------
// volume and growth

#[derive(Clone, Debug, Serialize)]
pub struct VolumeReport {
    pub n: usize,
    pub unit_ball: f64,
    pub s: Vec<f64>,
    pub volume: Vec<f64>,
    /// `Vol B(s) / (c_n s²ⁿ) = (v/s²)ⁿ`
    pub ratio: Vec<f64>,
    pub checks: Vec<Check>,
    pub final_ratio: f64,
    /// Slope of `ln ratio` against `ln s` over the top decade.
    pub tail_trend: Option<f64>,
}

/// Least-squares slope of `ys` against `ln xs` over `xs ≥ max/10`.
pub fn top_decade_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let top = xs[xs.len() - 1];
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, _)| **x >= top / 10.0).map(|(x, y)| (x.ln(), *y)).collect();
    if pts.len() < 3 || top < 10.0 * xs[0] {
        return None;
    }
    let k = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / k, b + y / k));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Some(sxy / sxx)
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    /// `lim log|z| / log s`
    pub z_exponent: Option<f64>,
    /// `lim log √det g / log s`
    pub det_exponent: Option<f64>,
    /// Slope of `ln p` against `ln x` over the top decade.
    pub p_tail_slope: Option<f64>,
    pub p_limit_positive: Option<bool>,
    pub xi_bounded: Option<bool>,
    pub psi_bounded: Option<bool>,
    /// Euclidean volume growth, when the three criteria agree.
    pub euclidean: Option<bool>,
    pub criteria_agree: bool,
}

fn endpoint_bounded(e: Endpoint) -> Option<bool> {
    match e {
        Endpoint::FiniteLimit => Some(true),
        Endpoint::Divergent => Some(false),
        Endpoint::Unknown => None,
    }
}

impl RadialMetric {
    pub fn volume_report(&self) -> VolumeReport {
        let m = &self.samples;
        let cn = unit_ball_volume(self.n);
        let q: Vec<f64> = m.v.iter().zip(&m.s).map(|(v, s)| v / (s * s)).collect();
        let ratio: Vec<f64> = q.iter().map(|q| q.powi(self.n as i32)).collect();
        let volume: Vec<f64> = m.v.iter().map(|v| cn * v.powi(self.n as i32)).collect();
        let (mut mono, mut mono_at) = (f64::INFINITY, f64::NAN);
        for i in 1..q.len() {
            let d = (q[i] - q[i - 1]) / q[i];
            if d < mono {
                mono = d;
                mono_at = m.s[i];
            }
        }
        let (mut lower, mut lower_at) = (f64::INFINITY, f64::NAN);
        for i in 0..q.len() {
            if q[i] - 1.0 < lower {
                lower = q[i] - 1.0;
                lower_at = m.s[i];
            }
        }
        let checks = vec![
            Check::from_margin("v/s^2 nondecreasing", mono >= -1e-12, mono, mono_at),
            Check::from_margin("v >= s^2", lower >= -1e-12, lower, lower_at),
        ];
        let logs: Vec<f64> = ratio.iter().map(|r| r.ln()).collect();
        VolumeReport {
            n: self.n,
            unit_ball: cn,
            final_ratio: ratio[ratio.len() - 1],
            tail_trend: top_decade_slope(&m.s, &logs),
            s: m.s.clone(),
            volume,
            ratio,
            checks,
        }
    }

    /// Volume of the geodesic ball of radius `s` and its Euclidean ratio.
    pub fn volume_at(&self, s: f64) -> Result<(f64, f64)> {
        let v = self.v_of_s()?.eval(s)?;
        let n = self.n as i32;
        Ok((unit_ball_volume(self.n) * v.powi(n), (v / (s * s)).powi(n)))
    }

    pub fn growth_exponents(&self) -> GrowthReport {
        let m = &self.samples;
        let n = self.n as f64;
        let log_z: Vec<f64> = m.r.iter().map(|r| 0.5 * r.ln()).collect();
        let log_det: Vec<f64> = (0..m.r.len()).map(|i| 0.5 * ((n - 1.0) * m.f[i].ln() + m.h[i].ln())).collect();
        let log_p: Vec<f64> = m.p.iter().map(|p| p.ln()).collect();
        let p_tail_slope = top_decade_slope(&m.x, &log_p);
        let minus_xi: Vec<f64> = m.xi.iter().map(|x| -x).collect();
        let p_limit_positive = p_tail_slope.map(|k| k > P_DECAY_SLOPE);
        let xi_bounded = endpoint_bounded(classify_endpoint(&m.r, &minus_xi));
        let psi_bounded = endpoint_bounded(classify_endpoint(&m.s, &m.psi));
        let all = [p_limit_positive, xi_bounded, psi_bounded];
        let criteria_agree = all.iter().all(|c| *c == all[0]);
        GrowthReport {
            z_exponent: top_decade_slope(&m.s, &log_z),
            det_exponent: top_decade_slope(&m.s, &log_det),
            p_tail_slope,
            p_limit_positive,
            xi_bounded,
            psi_bounded,
            euclidean: if criteria_agree { all[0] } else { None },
            criteria_agree,
        }
    }
}

// ---------------------------------------------------------------------------
// average curvature decay

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub n: usize,
    pub s: Vec<f64>,
    /// `C₀ = ψ/v`
    pub c0: Vec<f64>,
    /// `−A = ψ′/v′`
    pub minus_a: Vec<f64>,
    pub minus_r: Vec<f64>,
    /// `(1/vⁿ)∫₀ˢ (−R) d(vⁿ)`
    pub avg_minus_r: Vec<f64>,
    pub stated_factor: f64,
    pub corrected_factor: f64,
    pub lower: Check,
    pub stated_upper: Check,
    pub corrected_upper: Check,
    pub s2_avg_last: f64,
    pub s2_avg_over_log_last: f64,
}

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// `ds/d ln a` for the native variable `a` of `kind`.
fn ds_dlog(kind: Kind, m: &RadialSamples, i: usize) -> f64 {
    match kind {
        Kind::P => m.x[i] * m.p[i],
        Kind::Psi => m.s[i],
        _ => m.x[i] / 2.0,
    }
}

/// Integrand of `∫(−R) d(vⁿ)` in `ℓ = ln a`: `(−R)·n vⁿ⁻¹ · 2x · ds/dℓ`.
fn decay_integrand(n: usize, kind: Kind, m: &RadialSamples, i: usize) -> f64 {
    let minus_r = sample_at(n, m, i).minus_scalar(n);
    minus_r * n as f64 * m.v[i].powi(n as i32 - 1) * 2.0 * m.x[i] * ds_dlog(kind, m, i)
}

/// `min (big − small)·v`, the gap in units of the natural scale `1/v`.
fn sandwich_check(name: &str, s: &[f64], v: &[f64], big: &[f64], small: &[f64]) -> Check {
    let (mut worst, mut at) = (f64::INFINITY, f64::NAN);
    for i in 0..s.len() {
        let m = (big[i] - small[i]) * v[i];
        if m < worst {
            worst = m;
            at = s[i];
        }
    }
    Check::from_margin(name, worst >= -ZERO_TOL, worst, at)
}

impl RadialMetric {
    pub fn avg_decay(&self) -> Result<DecayReport> {
        let n = self.n;
        if n < 2 {
            return invalid("the average-decay sandwich needs n >= 2");
        }
        let m = &self.samples;
        let len = m.arg.len();
        let nf = n as f64;
        let minus_r: Vec<f64> = (0..len).map(|i| sample_at(n, m, i).minus_scalar(n)).collect();
        let c0: Vec<f64> = (0..len).map(|i| m.psi[i] / m.v[i]).collect();
        let minus_a: Vec<f64> = (0..len).map(|i| m.dpsi[i] / (2.0 * m.x[i])).collect();
        let kind = self.spec.kind;
        let g: Vec<f64> = (0..len).map(|i| decay_integrand(n, kind, m, i)).collect();
        let ell: Vec<f64> = m.arg.iter().map(|a| a.ln()).collect();
        let hw = (ell[len - 1] - ell[0]) / (len - 1) as f64;
        let dg = stencil_d1(&g, hw);
        // Stencils reaching across a breakpoint are unreliable, so panels
        // near one are resampled at Gauss points, split at the breakpoint.
        let breaks = self.spec.expr.breakpoints(self.spec.var());
        let near_break = |i: usize| {
            let (lo, hi) = (m.arg[i.saturating_sub(3)], m.arg[(i + 3).min(len - 1)]);
            breaks.iter().any(|&b| b >= lo && b <= hi)
        };
        let mut panel: Vec<f64> = (1..len).map(|i| hermite_panel(ell[i] - ell[i - 1], g[i - 1], g[i], dg[i - 1], dg[i])).collect();
        let mut i = 1;
        while i < len {
            if !(near_break(i - 1) || near_break(i)) {
                i += 1;
                continue;
            }
            let first = i;
            while i < len && (near_break(i - 1) || near_break(i)) {
                i += 1;
            }
            self.resample_panels(first, i, &breaks, &mut panel)?;
        }
        let mut integral = Vec::with_capacity(len);
        let mut acc = minus_r[0] * m.v[0].powi(n as i32);
        integral.push(acc);
        for p in &panel {
            acc += p;
            integral.push(acc);
        }
        let avg: Vec<f64> = (0..len).map(|i| integral[i] / m.v[i].powi(n as i32)).collect();
        let stated_factor = nf * (1.0 + nf * nf * (nf - 2.0) / ((nf - 1.0) * (nf - 1.0)));
        let corrected_factor = nf * nf;
        let n_c0: Vec<f64> = c0.iter().map(|c| nf * c).collect();
        let stated: Vec<f64> = c0.iter().map(|c| stated_factor * c).collect();
        let corrected: Vec<f64> = c0.iter().map(|c| corrected_factor * c).collect();
        let last = len - 1;
        let s_last = m.s[last];
        Ok(DecayReport {
            n,
            lower: sandwich_check("n C0 <= avg(-R)", &m.s, &m.v, &avg, &n_c0),
            stated_upper: sandwich_check("avg(-R) <= stated factor * C0", &m.s, &m.v, &stated, &avg),
            corrected_upper: sandwich_check("avg(-R) <= n^2 C0", &m.s, &m.v, &corrected, &avg),
            s2_avg_last: s_last * s_last * avg[last],
            s2_avg_over_log_last: s_last * s_last * avg[last] / s_last.ln(),
            s: m.s.clone(),
            c0,
            minus_a,
            minus_r,
            avg_minus_r: avg,
            stated_factor,
            corrected_factor,
        })
    }

    /// Gauss-Legendre integrals of the decay integrand over panels
    /// `first..end` (panel `i` spans nodes `i − 1` and `i`), split at
    /// breakpoints and sampled by a fresh conversion run.
    fn resample_panels(&self, first: usize, end: usize, breaks: &[f64], panel: &mut [f64]) -> Result<()> {
        let args = &self.samples.arg;
        let a0 = args[first - 1];
        let mut nodes = geometric_nodes(self.grid.lo.min(a0) / 2.0, a0, 401);
        let mut pieces = Vec::new();
        for i in first..end {
            let mut cuts = vec![args[i - 1].ln()];
            cuts.extend(breaks.iter().filter(|&&b| b > args[i - 1] && b < args[i]).map(|b| b.ln()));
            cuts.push(args[i].ln());
            for w in cuts.windows(2) {
                let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                let start = nodes.len();
                nodes.extend(GAUSS5.iter().map(|(z, _)| (mid + half * z).exp()));
                nodes.push(w[1].exp());
                pieces.push((i, start, half));
            }
        }
        let m = conversions(&self.spec, &nodes)?;
        for i in first..end {
            panel[i - 1] = 0.0;
        }
        for (i, start, half) in pieces {
            panel[i - 1] += half
                * GAUSS5.iter().enumerate().map(|(k, (_, w))| w * decay_integrand(self.n, self.spec.kind, &m, start + k)).sum::<f64>();
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// perturbations with unbounded radial curvature

/// `ψ₁ = ψ + ∫q` with a smooth bump `q` of height at least `8k(s_k + φ(s_k))`
/// at each anchor.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub spec: GeneratingSpec,
    pub anchors: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub peaks: Vec<f64>,
    pub masses: Vec<f64>,
}

/// `∫_{-1}^{z} (1 − ζ²)³ dζ` normalized to rise from 0 to 1.
fn bump_integral(z: Expr) -> Expr {
    let z2 = z.clone() * z.clone();
    let inner = Expr::c(-1.0) + z2.clone() * (Expr::c(0.6) - z2.clone() * Expr::c(1.0 / 7.0));
    let odd = z * (Expr::c(1.0) + z2 * inner);
    Expr::c(0.5) + Expr::c(35.0 / 32.0) * odd
}

pub fn perturb_unbounded(base: &GeneratingSpec, anchors: &[f64], max_half_width: f64) -> Result<Perturbation> {
    if base.kind != Kind::Psi {
        return invalid("perturbations are built on a psi generating function");
    }
    if anchors.is_empty() || !(anchors[0] > 0.0) || anchors.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("anchors must be positive and increasing");
    }
    if !(max_half_width > 0.0) {
        return invalid("bump width must be positive");
    }
    let e = &base.expr;
    let budget = e.at(Var::S, (anchors[0] - max_half_width).max(0.0))?;
    if !(budget > 0.0) {
        return invalid("psi vanishes before the first anchor; the guard psi_q <= psi cannot hold");
    }
    let phi = running_integral(|s| Ok(e.at(Var::S, s)?), anchors, &e.breakpoints(Var::S), 0.0)?;
    let s = Expr::var(Var::S);
    let mut psi_q = Expr::c(0.0);
    let (mut half_widths, mut peaks, mut masses) = (Vec::new(), Vec::new(), Vec::new());
    for (k, (&sk, &ph)) in anchors.iter().zip(&phi).enumerate() {
        let kk = (k + 1) as f64;
        let mass = budget * 0.5_f64.powi(k as i32 + 1);
        let target = 8.0 * kk * (sk + ph);
        let w = max_half_width.min(mass * 35.0 / (32.0 * target));
        let z = (s.clone() - Expr::c(sk)) * Expr::c(1.0 / w);
        let rise = Expr::step(s.clone(), Expr::c(sk + w), bump_integral(z), Expr::c(1.0));
        psi_q = psi_q + Expr::c(mass) * Expr::step(s.clone(), Expr::c(sk - w), Expr::c(0.0), rise);
        half_widths.push(w);
        peaks.push(mass * 35.0 / (32.0 * w));
        masses.push(mass);
    }
    if anchors[0] - half_widths[0] <= 0.0
        || (1..anchors.len()).any(|k| anchors[k - 1] + half_widths[k - 1] >= anchors[k] - half_widths[k])
    {
        return invalid("bump windows overlap; space the anchors further apart or narrow the bumps");
    }
    let spec = GeneratingSpec::with_params(Kind::Psi, e.clone() + psi_q, base.params)?;
    Ok(Perturbation { spec, anchors: anchors.to_vec(), half_widths, peaks, masses })
}

#[derive(Clone, Debug, Serialize)]
pub struct AnchorCheck {
    pub k: usize,
    pub s: f64,
    pub minus_a: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationReport {
    pub anchors: Vec<AnchorCheck>,
    pub complete: bool,
    /// `min (2φ − φ₁)/φ` over the grid (0 where `φ = 0`).
    pub guard_margin: f64,
    pub guard: bool,
    /// Relative change of `v/s²` at the last node.
    pub ratio_change: f64,
}

/// Build the perturbed metric on the base grid and check every claim. The
/// bumps are far narrower than the grid, so the panel consistency checks are
/// not enforced; the curvature at each anchor is computed on its own grid.
pub fn verify_perturbation(base: &RadialMetric, pert: &Perturbation) -> Result<PerturbationReport> {
    let m1 = RadialMetric::build_unchecked(&pert.spec, base.n, &base.grid)?;
    let mut anchors = Vec::new();
    for (k, &s) in pert.anchors.iter().enumerate() {
        let minus_a = -m1.curvature_at(s)?.a;
        anchors.push(AnchorCheck { k: k + 1, s, minus_a, pass: minus_a > (k + 1) as f64 });
    }
    let (a, b) = (&base.samples, &m1.samples);
    let mut guard_margin = f64::INFINITY;
    let last = a.s.len() - 1;
    let ratio_change = (b.v[last] / a.v[last] - 1.0).abs();
    for i in 0..a.s.len() {
        if a.phi[i] > 0.0 {
            guard_margin = guard_margin.min((2.0 * a.phi[i] - b.phi[i]) / a.phi[i]);
        } else {
            guard_margin = guard_margin.min(-b.phi[i].abs());
        }
    }
    Ok(PerturbationReport {
        anchors,
        complete: m1.completeness.verdict == Completeness::Complete,
        guard: guard_margin >= 0.0,
        guard_margin,
        ratio_change,
    })
}

// ---------------------------------------------------------------------------
// examples

pub const ZOO: [&str; 6] = ["euclidean", "seshadri", "milnor", "p_rational", "p_logpow", "psi_example"];

/// Width of the smoothing window at the origin for capped `p`.
pub const CAP_WIDTH: f64 = 0.05;
/// Half-width of the blend joining Milnor's flat cap to its tail.
pub const MILNOR_BLEND: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct ZooMember {
    pub name: String,
    pub spec: GeneratingSpec,
    pub grid: Grid,
    pub dim: usize,
    pub note: &'static str,
}

impl ZooMember {
    pub fn build(&self) -> Result<RadialMetric> {
        RadialMetric::build(&self.spec, self.dim, &self.grid)
    }
}

/// `p = (1 + αx)/(1 + 2αx)` with `p(∞) = 1/2`, capped near 0 so that
/// `p′(0) = 0`.
pub fn p_rational(alpha: f64) -> Result<GeneratingSpec> {
    if !(alpha > 0.0) {
        return invalid("p_rational needs alpha > 0");
    }
    let raw: Expr = format!("(1 + {alpha:?}*x)/(1 + 2*{alpha:?}*x)").parse()?;
    let slope = raw.diff(Var::X).at(Var::X, CAP_WIDTH)?;
    GeneratingSpec::new(Kind::P, cap_at_origin(&raw, Var::X, CAP_WIDTH, 2.0 * slope / CAP_WIDTH)?)
}

/// `p = (1 + log(1 + x²))^(−α)`, with `p(∞) = 0`.
pub fn p_logpow(alpha: f64) -> Result<GeneratingSpec> {
    if !(alpha > 0.0) {
        return invalid("p_logpow needs alpha > 0");
    }
    GeneratingSpec::parse(Kind::P, &format!("(1 + log(1 + x^2))^(-{alpha:?})"))
}

/// Milnor's surface profile `G(s) = s log s` beyond `s = 2`, as
/// `ψ = G′ − 1` with `G = s` on the cap.
pub fn milnor_psi() -> Result<GeneratingSpec> {
    let tail: Expr = format!("(log(s) + 1)/{LN_2:?} - 1").parse()?;
    GeneratingSpec::new(Kind::Psi, blend(&Expr::c(0.0), &tail, Var::S, 2.0, MILNOR_BLEND)?)
}

pub fn zoo(name: &str, param: Option<f64>) -> Result<ZooMember> {
    let alpha = param.unwrap_or(1.0);
    let default = Grid::default();
    let (spec, grid, dim, note) = match name {
        "euclidean" => (GeneratingSpec::parse(Kind::FProfile, "1")?, default, 2, "flat metric, f = 1"),
        "seshadri" => (
            GeneratingSpec::parse(Kind::FProfile, "exp(r)")?,
            Grid::new(1e-6, 50.0, 8192)?,
            2,
            "f = e^r; negative complex curvature operator",
        ),
        "milnor" => (
            milnor_psi()?,
            Grid::new(1e-3, 1e4, 8192)?,
            1,
            "G = s log s / log 2 beyond s = 2, flat cap, C2 quintic join on [1.9, 2.1]",
        ),
        "p_rational" => (p_rational(alpha)?, default, 2, "p = (1 + a x)/(1 + 2 a x), p(inf) = 1/2, capped on [0, 0.05]"),
        "p_logpow" => (p_logpow(alpha)?, default, 2, "p = (1 + log(1 + x^2))^(-a), p(inf) = 0"),
        "psi_example" => (GeneratingSpec::parse(Kind::Psi, "s^2/(1+s^2)")?, default, 2, "psi = s^2/(1 + s^2), psi -> 1"),
        other => return invalid(format!("unknown zoo member `{other}`; known: {}", ZOO.join(", "))),
    };
    Ok(ZooMember { name: name.to_string(), spec, grid, dim, note })
}

/// Every member with its default parameter.
pub fn zoo_all() -> Result<Vec<ZooMember>> {
    ZOO.iter().map(|n| zoo(n, None)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_volumes() {
        assert!((unit_ball_volume(1) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(2) - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn euclidean_is_flat() {
        let m = zoo("euclidean", None).unwrap().build().unwrap();
        let rep = m.curvature().unwrap();
        assert!(rep.samples.iter().all(|c| (c.a * c.r.max(1.0)).abs() < 1e-9 && c.c.abs() * c.r.max(1e-300) < 1e-9));
        assert_eq!(classify(&rep).bisectional, Bisectional::NonPositive);
        let vol = m.volume_report();
        assert!(vol.ratio.iter().all(|r| (r - 1.0).abs() < 1e-9));
    }

    #[test]
    fn bump_integral_endpoints() {
        let b = bump_integral(Expr::var(Var::S));
        assert!(b.at(Var::S, -1.0).unwrap().abs() < 1e-15);
        assert!((b.at(Var::S, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((b.diff(Var::S).at(Var::S, 0.0).unwrap() - 35.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn slope_regression() {
        let xs = geometric_nodes(1.0, 1e3, 50);
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x.ln() + 3.0).collect();
        assert!((top_decade_slope(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
    }
}
