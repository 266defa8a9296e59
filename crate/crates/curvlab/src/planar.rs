//! Conformal metrics `λ(x, y)(dx² + dy²)` on the plane: Gauss curvature,
//! axis distances, region volumes, total curvature and growth witnesses.

use std::f64::consts::E;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exprdsl::{parse, Bindings, Expr, Var};
use crate::genfun::Check;
use crate::numerics::{geometric_nodes, integrate_split, integrate_to_infinity};

const QUAD_REL: f64 = 1e-12;
const QUAD_ABS: f64 = 1e-14;
const OUTER_REL: f64 = 1e-11;

#[derive(Clone, Debug)]
pub struct ConformalMetric {
    pub name: String,
    pub lambda: Expr,
    log_lambda: Expr,
    lap: Expr,
    pub note: String,
}

fn at2(e: &Expr, x: f64, y: f64) -> Result<f64> {
    Ok(e.eval(&Bindings::new().with(Var::X, x).with(Var::Y, y))?)
}

/// `log μ` with the corners of `max(0, |y| − 1)` rounded over
/// `[±1 − eps, ±1 + eps]`: the slope follows the quintic smoothstep, so the
/// blend is convex and meets `|y| − 1` exactly.
fn rounded_strip_log(eps: f64) -> String {
    let w = 2.0 * eps;
    let corner = |arg: &str| {
        let s = format!("((({arg}) - {})/{w})", 1.0 - eps);
        format!("{w}*({s}^6 - 3*{s}^5 + 2.5*{s}^4)")
    };
    format!(
        "piecewise(y >= {hi}; piecewise(y >= {lo}; piecewise(y >= {nlo}; piecewise(y >= {nhi}; -y - 1; {down}); 0); {up}); y - 1)",
        hi = 1.0 + eps,
        lo = 1.0 - eps,
        nlo = -1.0 + eps,
        nhi = -1.0 - eps,
        up = corner("y"),
        down = corner("-y"),
    )
}

impl ConformalMetric {
    pub fn new(name: &str, lambda: Expr, note: &str) -> Result<Self> {
        if lambda.free_vars().iter().any(|v| !matches!(v, Var::X | Var::Y)) {
            return invalid("a conformal factor depends on x and y only");
        }
        let log_lambda = lambda.clone().log();
        let lap = log_lambda.diff(Var::X).diff(Var::X) + log_lambda.diff(Var::Y).diff(Var::Y);
        Ok(Self { name: name.to_string(), lambda, log_lambda, lap, note: note.to_string() })
    }

    pub fn parse(name: &str, source: &str) -> Result<Self> {
        Self::new(name, parse(source)?, "")
    }

    pub fn flat() -> Self {
        Self::new("flat", Expr::c(1.0), "").expect("constant factor")
    }

    /// `1/(1+x)²` for `x ≥ 0`, `e^{x²−2x}` below; C² and log-convex.
    pub fn exponential_growth() -> Self {
        let src = "piecewise(x >= 0; exp(x^2 - 2*x); 1/(1+x)^2)";
        Self::new("exponential_growth", parse(src).expect("fixed source"), "C2 at x = 0").expect("x-only factor")
    }

    /// `λ(x) μ(y)` with `μ = e^{|y|−1}` off the strip `|y| < 1`. With
    /// `eps = None` the corners of `log μ` are left sharp; otherwise they
    /// are rounded convexly over windows of half-width `eps`.
    pub fn strip(eps: Option<f64>) -> Result<Self> {
        let (log_mu, note) = match eps {
            None => ("piecewise(y >= 1; piecewise(y >= -1; -y - 1; 0); y - 1)".to_string(), "sharp corners at |y| = 1".to_string()),
            Some(e) if e > 0.0 && e < 0.5 => (rounded_strip_log(e), format!("corners rounded over width {e}")),
            Some(_) => return invalid("rounding window must lie in (0, 0.5)"),
        };
        let lambda = Self::exponential_growth().lambda * parse(&log_mu)?.exp();
        Self::new("strip", lambda, &note)
    }

    /// `1/(x² log² x)` for `x ≥ e`, continued below by the quadratic
    /// Taylor polynomial of `log u` at `e`.
    pub fn hadamard() -> Self {
        let src = format!(
            "piecewise(x >= {E}; exp(-2 - (4/{E})*(x - {E}) + (3/{E}^2)*(x - {E})^2); 1/(x^2*log(x)^2))"
        );
        Self::new("hadamard", parse(&src).expect("fixed source"), "C2 at x = e").expect("x-only factor")
    }

    pub fn lambda_at(&self, x: f64, y: f64) -> Result<f64> {
        at2(&self.lambda, x, y)
    }

    pub fn x_only(&self) -> bool {
        !self.lambda.free_vars().contains(&Var::Y)
    }

    fn kinks(&self, v: Var) -> Vec<f64> {
        self.lambda.breakpoints(v)
    }

    /// `Δ log λ` at a point.
    pub fn laplacian_log(&self, x: f64, y: f64) -> Result<f64> {
        at2(&self.lap, x, y)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvaturePoint {
    pub x: f64,
    pub y: f64,
    /// `−Δ log λ / (2λ)` from the differentiated expression.
    pub k: f64,
    /// Same from a fourth-order five-point stencil per axis.
    pub k_stencil: f64,
    /// The point sits on a piecewise seam; `k` is the value from the side
    /// at and above the threshold.
    pub kink: bool,
}

pub fn gauss_curvature(m: &ConformalMetric, x: f64, y: f64) -> Result<CurvaturePoint> {
    let lam = m.lambda_at(x, y)?;
    if !(lam > 0.0) {
        return invalid(format!("conformal factor is not positive at ({x}, {y})"));
    }
    let k = -m.laplacian_log(x, y)? / (2.0 * lam);
    let near = |v: f64, bs: &[f64]| bs.iter().any(|b| (v - b).abs() <= 1e-9 * (1.0 + b.abs()));
    let kink = near(x, &m.kinks(Var::X)) || near(y, &m.kinks(Var::Y));
    let h = 1e-3 * (1.0 + x.abs().max(y.abs())).min(10.0);
    let l = |dx: f64, dy: f64| at2(&m.log_lambda, x + dx, y + dy);
    let c = l(0.0, 0.0)?;
    let second = |a: f64, b: f64, c2: f64, d: f64| (-a + 16.0 * b - 30.0 * c + 16.0 * c2 - d) / (12.0 * h * h);
    let lxx = second(l(2.0 * h, 0.0)?, l(h, 0.0)?, l(-h, 0.0)?, l(-2.0 * h, 0.0)?);
    let lyy = second(l(0.0, 2.0 * h)?, l(0.0, h)?, l(0.0, -h)?, l(0.0, -2.0 * h)?);
    Ok(CurvaturePoint { x, y, k, k_stencil: -(lxx + lyy) / (2.0 * lam), kink })
}

/// `Δ log λ ≥ 0` on a sample grid, margins scaled by `λ`.
pub fn subharmonic_check(m: &ConformalMetric, xs: &[f64], ys: &[f64]) -> Result<Check> {
    let (mut worst, mut at) = (f64::INFINITY, f64::NAN);
    for &x in xs {
        for &y in ys {
            let v = m.laplacian_log(x, y)? / m.lambda_at(x, y)?;
            if v < worst {
                worst = v;
                at = x;
            }
        }
    }
    Ok(Check::from_margin("laplacian of log lambda >= 0", worst >= -1e-12, worst, at))
}

#[derive(Clone, Debug, Serialize)]
pub struct AxisDistance {
    pub p: f64,
    pub distance: f64,
    /// `λ` does not depend on `y`, so every path from the origin to the
    /// line `x = p` is at least as long as the segment.
    pub minimal: bool,
}

/// `∫₀ᵖ √λ(t, 0) dt`, the distance from the origin to the line `x = p`.
pub fn axis_distance(m: &ConformalMetric, p: f64) -> Result<AxisDistance> {
    if !m.x_only() {
        return invalid("axis distances need a conformal factor in x only");
    }
    let (a, b) = if p >= 0.0 { (0.0, p) } else { (p, 0.0) };
    let d = integrate_split(|t| Ok(m.lambda_at(t, 0.0)?.sqrt()), a, b, &m.kinks(Var::X), QUAD_ABS, QUAD_REL)?;
    Ok(AxisDistance { p, distance: d, minimal: true })
}

/// Length of the polygonal path through `points`.
pub fn path_length(m: &ConformalMetric, points: &[(f64, f64)]) -> Result<f64> {
    let mut total = 0.0;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let len = (x1 - x0).hypot(y1 - y0);
        if len == 0.0 {
            continue;
        }
        total += len
            * integrate_split(|t| Ok(m.lambda_at(x0 + t * (x1 - x0), y0 + t * (y1 - y0))?.sqrt()), 0.0, 1.0, &[], QUAD_ABS, 1e-10)?;
    }
    Ok(total)
}

/// `{x₀ ≤ x ≤ x₁, lower(x) ≤ y ≤ upper(x)}`; `x₁` may be infinite.
#[derive(Clone, Debug)]
pub struct Region {
    pub x0: f64,
    pub x1: f64,
    pub lower: Expr,
    pub upper: Expr,
}

impl Region {
    /// `{0 ≤ x ≤ a, |y| ≤ a − x}`
    pub fn triangle(a: f64) -> Self {
        let x = Expr::var(Var::X);
        Self { x0: 0.0, x1: a, lower: x.clone() - Expr::c(a), upper: Expr::c(a) - x }
    }

    /// `{0 ≤ x ≤ a, 1 ≤ y ≤ 1 + 2 log(1 + x)}`, where `λμ ≤ 1` on the strip
    /// example.
    pub fn under_level_curve(a: f64) -> Self {
        let x = Expr::var(Var::X);
        Self { x0: 0.0, x1: a, lower: Expr::c(1.0), upper: Expr::c(1.0) + Expr::c(2.0) * (Expr::c(1.0) + x).log() }
    }

    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, lower: Expr::c(y0), upper: Expr::c(y1) }
    }

    fn y_bounds(&self, x: f64) -> Result<(f64, f64)> {
        Ok((self.lower.at(Var::X, x)?, self.upper.at(Var::X, x)?))
    }
}

fn region_integral(m: &ConformalMetric, region: &Region, rel: f64, f: &dyn Fn(f64, f64) -> Result<f64>) -> Result<f64> {
    if !(rel > 0.0 && rel < 1e-2) {
        return invalid("quadrature tolerance must lie in (0, 1e-2)");
    }
    if !(region.x1 > region.x0) {
        return invalid("region needs x0 < x1");
    }
    let (xb, yb) = (m.kinks(Var::X), m.kinks(Var::Y));
    let inner = |x: f64| -> Result<f64> {
        let (lo, hi) = region.y_bounds(x)?;
        if hi <= lo {
            return Ok(0.0);
        }
        integrate_split(|y| f(x, y), lo, hi, &yb, QUAD_ABS, QUAD_REL)
    };
    if region.x1.is_infinite() {
        let mut total = 0.0;
        let mut a = region.x0;
        for &b in xb.iter().filter(|&&b| b > region.x0) {
            total += integrate_split(inner, a, b, &[], QUAD_ABS, rel)?;
            a = b;
        }
        return Ok(total + integrate_to_infinity(inner, a, QUAD_ABS, rel)?);
    }
    integrate_split(inner, region.x0, region.x1, &xb, QUAD_ABS, rel)
}

/// `∫∫ λ dx dy` over the region.
pub fn region_volume(m: &ConformalMetric, region: &Region) -> Result<f64> {
    region_volume_tol(m, region, OUTER_REL)
}

/// As [`region_volume`] with the relative tolerance of the outer integral.
pub fn region_volume_tol(m: &ConformalMetric, region: &Region, rel: f64) -> Result<f64> {
    region_integral(m, region, rel, &|x, y| m.lambda_at(x, y))
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum TotalCurvatureVerdict {
    Finite { last: f64 },
    /// Linear growth witness: the last increment rate.
    Divergent { rate: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct TotalCurvature {
    /// `(parameter, ∫∫ (−K) dV)` along the exhaustion.
    pub values: Vec<(f64, f64)>,
    pub verdict: TotalCurvatureVerdict,
}

/// `∫∫ (−K) dV = ½ ∫∫ Δ log λ dx dy` over one region.
pub fn total_curvature_over(m: &ConformalMetric, region: &Region) -> Result<f64> {
    region_integral(m, region, OUTER_REL, &|x, y| Ok(0.5 * m.laplacian_log(x, y)?))
}

/// Total curvature along an exhausting family `param ↦ region`. Growth is
/// called divergent when the last increment rate is at least half the
/// average rate over the family.
pub fn total_curvature(m: &ConformalMetric, params: &[f64], family: &dyn Fn(f64) -> Region) -> Result<TotalCurvature> {
    if params.len() < 3 || params.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("an exhaustion needs at least three increasing parameters");
    }
    let values: Vec<(f64, f64)> =
        params.iter().map(|&p| Ok((p, total_curvature_over(m, &family(p))?))).collect::<Result<_>>()?;
    let n = values.len();
    let rate = (values[n - 1].1 - values[n - 2].1) / (values[n - 1].0 - values[n - 2].0);
    let avg = (values[n - 1].1 - values[0].1) / (values[n - 1].0 - values[0].0);
    let verdict = if avg.abs() > 0.0 && rate / avg >= 0.5 {
        TotalCurvatureVerdict::Divergent { rate }
    } else {
        TotalCurvatureVerdict::Finite { last: values[n - 1].1 }
    };
    Ok(TotalCurvature { values, verdict })
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessRow {
    pub r: f64,
    /// Axis point at distance `r`.
    pub x: f64,
    /// `log(1 + x)`, a lower bound for `sup_{B(O,r)} log(1 + |z|)`.
    pub witness: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HadamardEstimate {
    /// `(x, d(x), local slope of log log x against log d)`
    pub samples: Vec<(f64, f64, f64)>,
    pub monotone: bool,
    /// First sampled `x` with slope above 10.
    pub exceeds_ten_at: Option<f64>,
    /// Monotone, and the slope keeps growing at least half as fast in
    /// `log log x` over the second half of the window as over the first.
    pub diverging: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthWitness {
    pub rows: Vec<WitnessRow>,
    pub hadamard: HadamardEstimate,
}

/// `x ≥ 0` with `axis_distance(x) = r`, by bracketing and bisection.
pub fn axis_point(m: &ConformalMetric, r: f64) -> Result<f64> {
    let dist = |x: f64| Ok::<f64, Error>(axis_distance(m, x)?.distance);
    let mut hi = 1.0;
    while dist(hi)? < r {
        hi *= 2.0;
        if hi > 1e300 {
            return invalid("axis distance stays below the requested radius");
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist(mid)? < r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Witness rows at the radii, and the Hadamard order estimate of `z` along
/// the axis for `ln x` in `[ln_x_lo, ln_x_hi]`.
pub fn growth_witness(m: &ConformalMetric, radii: &[f64], ln_x_lo: f64, ln_x_hi: f64) -> Result<GrowthWitness> {
    let rows = radii
        .iter()
        .map(|&r| {
            let x = axis_point(m, r)?;
            Ok(WitnessRow { r, x, witness: x.ln_1p() })
        })
        .collect::<Result<Vec<_>>>()?;
    if !(ln_x_lo > 1.0 && ln_x_hi > ln_x_lo) {
        return invalid("the Hadamard window needs 1 < ln x_lo < ln x_hi");
    }
    let xs: Vec<f64> = geometric_nodes(ln_x_lo, ln_x_hi, 64).into_iter().map(f64::exp).collect();
    // Accumulate d along the axis panel by panel.
    let mut d = axis_distance(m, xs[0])?.distance;
    let mut ds = vec![d];
    for w in xs.windows(2) {
        d += integrate_split(|t| Ok(m.lambda_at(t, 0.0)?.sqrt()), w[0], w[1], &m.kinks(Var::X), QUAD_ABS, QUAD_REL)?;
        ds.push(d);
    }
    let mut samples = Vec::new();
    for i in 1..xs.len() {
        let slope = (xs[i].ln().ln() - xs[i - 1].ln().ln()) / (ds[i].ln() - ds[i - 1].ln());
        let xm = (xs[i] * xs[i - 1]).sqrt();
        samples.push((xm, 0.5 * (ds[i] + ds[i - 1]), slope));
    }
    let monotone = samples.windows(2).all(|w| w[1].2 > w[0].2);
    let exceeds_ten_at = samples.iter().find(|s| s.2 > 10.0).map(|s| s.0);
    // Rate of the slope against log log x over each half of the window;
    // a saturating estimate has the second rate fall well below the first.
    let rate = |i: usize, j: usize| (samples[j].2 - samples[i].2) / (samples[j].0.ln().ln() - samples[i].0.ln().ln());
    let (mid, last) = (samples.len() / 2, samples.len() - 1);
    let diverging = monotone && rate(mid, last) >= 0.5 * rate(0, mid);
    Ok(GrowthWitness { rows, hadamard: HadamardEstimate { samples, monotone, exceeds_ten_at, diverging } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_metric_basics() {
        let m = ConformalMetric::flat();
        let k = gauss_curvature(&m, 0.3, -1.2).unwrap();
        assert_eq!(k.k, 0.0);
        assert!((axis_distance(&m, 3.0).unwrap().distance - 3.0).abs() < 1e-14);
        let v = region_volume(&m, &Region::rectangle(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rounded_strip_is_convex_and_exact_outside() {
        let m = ConformalMetric::strip(Some(0.05)).unwrap();
        let sharp = ConformalMetric::strip(None).unwrap();
        for y in [-3.0, -1.06, 0.0, 0.5, 1.06, 2.0] {
            let (a, b) = (m.lambda_at(0.7, y).unwrap(), sharp.lambda_at(0.7, y).unwrap());
            assert!((a - b).abs() < 1e-13 * b, "y = {y}");
        }
        let ys: Vec<f64> = (0..400).map(|i| -2.0 + i as f64 * 0.01).collect();
        assert!(subharmonic_check(&m, &[0.5, 2.0], &ys).unwrap().pass);
    }

    #[test]
    fn kinks_are_flagged() {
        let m = ConformalMetric::strip(None).unwrap();
        assert!(gauss_curvature(&m, 1.0, 1.0).unwrap().kink);
        assert!(!gauss_curvature(&m, 1.0, 2.0).unwrap().kink);
    }
}
