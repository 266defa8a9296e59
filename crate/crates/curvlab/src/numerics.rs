//! Quadrature, ODE integration, stencils and blends shared by the modules.

use crate::error::{Error, Result};
use crate::exprdsl::{Expr, Var};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Geometrically spaced nodes, `n >= 2`, both ends included.
pub fn geometric_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|i| lo * (ratio * i as f64).exp()).collect();
    out[n - 1] = hi;
    out
}

fn gk15<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx)? + f(c + dx)?;
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Ok((k * h, ((k - g) * h).abs()))
}

struct Panel {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err.total_cmp(&o.err).is_eq()
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

const MAX_PANELS: usize = 4000;

/// Global adaptive bisection: always split the panel with the largest error.
fn adapt<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64, tol: f64, rel: f64) -> Result<f64> {
    let (val, err) = gk15(f, a, b)?;
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Panel { a, b, val, err });
    let (mut total, mut total_err) = (val, err);
    loop {
        if !total.is_finite() {
            return Err(Error::NonFinite("quadrature"));
        }
        if total_err <= tol.max(rel * total.abs()) {
            return Ok(total);
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let m = 0.5 * (worst.a + worst.b);
        if heap.len() >= MAX_PANELS || m <= worst.a || m >= worst.b {
            return Err(Error::Quadrature { a, b });
        }
        let (v1, e1) = gk15(f, worst.a, m)?;
        let (v2, e2) = gk15(f, m, worst.b)?;
        total += v1 + v2 - worst.val;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { a: worst.a, b: m, val: v1, err: e1 });
        heap.push(Panel { a: m, b: worst.b, val: v2, err: e2 });
        if heap.len() % 64 == 0 {
            // Refresh the running sums to keep cancellation error out.
            total = heap.iter().map(|p| p.val).sum();
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
}

/// Adaptive Gauss–Kronrod (7/15) integral of `f` over `[a, b]`.
/// The integrand is never evaluated at the endpoints, so integrable
/// endpoint singularities and removable `0/0` forms are harmless.
pub fn integrate<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return Ok(-integrate(f, b, a, abs_tol, rel_tol)?);
    }
    adapt(&mut f, a, b, abs_tol, rel_tol)
}

/// [`integrate`], split at every breakpoint inside `(a, b)`.
pub fn integrate_split<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut knots = vec![a];
    knots.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
    knots.push(b);
    let mut total = 0.0;
    for w in knots.windows(2) {
        total += adapt(&mut f, w[0], w[1], abs_tol, rel_tol)?;
    }
    Ok(total)
}

/// Integral over `[a, ∞)` through `x = a + u/(1-u)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    integrate(
        |u| {
            let w = 1.0 - u;
            f(a + u / w).map(|v| v / (w * w))
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Trapezoid with the Euler–Maclaurin end correction. Fourth order when the
/// derivative samples are exact.
pub fn hermite_panel(h: f64, fa: f64, fb: f64, da: f64, db: f64) -> f64 {
    0.5 * h * (fa + fb) + h * h * (da - db) / 12.0
}

/// Cumulative integral over sorted nodes from values and derivatives.
pub fn cumulative_hermite(xs: &[f64], fs: &[f64], ds: &[f64], start: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = start;
    out.push(acc);
    for i in 1..xs.len() {
        acc += hermite_panel(xs[i] - xs[i - 1], fs[i - 1], fs[i], ds[i - 1], ds[i]);
        out.push(acc);
    }
    out
}

/// First derivative in `w` of samples on a uniform `w`-grid with spacing
/// `hw`: five-point central differences, five-point one-sided near the ends.
pub fn stencil_d1(ys: &[f64], hw: f64) -> Vec<f64> {
    let n = ys.len();
    assert!(n >= 5, "five-point stencil needs five samples");
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = if i >= 2 && i + 2 < n {
            (-ys[i + 2] + 8.0 * ys[i + 1] - 8.0 * ys[i - 1] + ys[i - 2]) / (12.0 * hw)
        } else if i == 0 {
            (-25.0 * ys[0] + 48.0 * ys[1] - 36.0 * ys[2] + 16.0 * ys[3] - 3.0 * ys[4]) / (12.0 * hw)
        } else if i == 1 {
            (-3.0 * ys[0] - 10.0 * ys[1] + 18.0 * ys[2] - 6.0 * ys[3] + ys[4]) / (12.0 * hw)
        } else if i == n - 2 {
            (3.0 * ys[n - 1] + 10.0 * ys[n - 2] - 18.0 * ys[n - 3] + 6.0 * ys[n - 4] - ys[n - 5]) / (12.0 * hw)
        } else {
            (25.0 * ys[n - 1] - 48.0 * ys[n - 2] + 36.0 * ys[n - 3] - 16.0 * ys[n - 4] + 3.0 * ys[n - 5]) / (12.0 * hw)
        };
    }
    out
}

/// `d/dt` of samples on a geometric grid, via the uniform grid in `ln t`.
pub fn log_grid_derivative(ts: &[f64], ys: &[f64]) -> Vec<f64> {
    let hw = (ts[ts.len() - 1] / ts[0]).ln() / (ts.len() - 1) as f64;
    stencil_d1(ys, hw).into_iter().zip(ts).map(|(d, t)| d / t).collect()
}

/// Richardson-extrapolated central difference, step relative to `|x|`.
pub fn central_difference<F: FnMut(f64) -> Result<f64>>(mut f: F, x: f64, scale: f64) -> Result<f64> {
    let h = 1e-3 * scale.max(x.abs() * 1e-2).max(1e-6);
    let d1 = (f(x + h)? - f(x - h)?) / (2.0 * h);
    let d2 = (f(x + 0.5 * h)? - f(x - 0.5 * h)?) / h;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Coefficients `c0..c5` in powers of `(x - a)` of the quintic matching value,
/// slope and curvature at both ends of `[a, b]`.
pub fn quintic_hermite(a: f64, b: f64, left: [f64; 3], right: [f64; 3]) -> [f64; 6] {
    let h = b - a;
    let (c0, c1, c2) = (left[0], left[1], 0.5 * left[2]);
    // Remaining cubic part solves a 3x3 system in (c3, c4, c5).
    let r0 = right[0] - (c0 + c1 * h + c2 * h * h);
    let r1 = right[1] - (c1 + 2.0 * c2 * h);
    let r2 = right[2] - 2.0 * c2;
    let h2 = h * h;
    let h3 = h2 * h;
    let c3 = (20.0 * r0 - 8.0 * r1 * h + r2 * h2) / (2.0 * h3);
    let c4 = (-30.0 * r0 + 14.0 * r1 * h - 2.0 * r2 * h2) / (2.0 * h3 * h);
    let c5 = (12.0 * r0 - 6.0 * r1 * h + r2 * h2) / (2.0 * h3 * h2);
    [c0, c1, c2, c3, c4, c5]
}

/// The quintic as an expression in `v`, Horner form.
pub fn quintic_expr(coeffs: [f64; 6], a: f64, v: Var) -> Expr {
    let z = Expr::var(v) - Expr::c(a);
    let mut e = Expr::c(coeffs[5]);
    for &c in coeffs[..5].iter().rev() {
        e = e * z.clone() + Expr::c(c);
    }
    e
}

/// Replace `e` on `[0, eps)` by a quintic with value 1, slope 0 and curvature
/// `kappa` at the origin, glued C² at `eps`.
pub fn cap_at_origin(e: &Expr, v: Var, eps: f64, kappa: f64) -> Result<Expr> {
    let d1 = e.diff(v);
    let d2 = d1.diff(v);
    let right = [e.at(v, eps)?, d1.at(v, eps)?, d2.at(v, eps)?];
    let coeffs = quintic_hermite(0.0, eps, [1.0, 0.0, kappa], right);
    Ok(Expr::step(Expr::var(v), Expr::c(eps), quintic_expr(coeffs, 0.0, v), e.clone()))
}

/// C² blend of `left` into `right` over `[c - eps, c + eps]`.
pub fn blend(left: &Expr, right: &Expr, v: Var, c: f64, eps: f64) -> Result<Expr> {
    let (a, b) = (c - eps, c + eps);
    let jet = |e: &Expr, x: f64| -> Result<[f64; 3]> {
        let d1 = e.diff(v);
        Ok([e.at(v, x)?, d1.at(v, x)?, d1.diff(v).at(v, x)?])
    };
    let coeffs = quintic_hermite(a, b, jet(left, a)?, jet(right, b)?);
    let mid = Expr::step(Expr::var(v), Expr::c(b), quintic_expr(coeffs, a, v), right.clone());
    Ok(Expr::step(Expr::var(v), Expr::c(a), left.clone(), mid))
}

// ---------------------------------------------------------------------------
// Dormand–Prince 5(4)

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Clone, Debug)]
struct DenseStep {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

/// Accepted steps with the fourth-order continuous extension.
#[derive(Clone, Debug)]
pub struct OdeSolution {
    steps: Vec<DenseStep>,
    pub t_start: f64,
    pub t_end: f64,
    pub y_end: Vec<f64>,
    pub evaluations: usize,
    pub rejected: usize,
}

impl OdeSolution {
    pub fn accepted(&self) -> usize {
        self.steps.len()
    }

    /// Dense output at `t` inside the integration range.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if t < self.t_start || t > self.t_end {
            return Err(Error::OutsideGrid(t));
        }
        let i = self.steps.partition_point(|s| s.t0 + s.h < t).min(self.steps.len() - 1);
        let s = &self.steps[i];
        let th = (t - s.t0) / s.h;
        let th1 = 1.0 - th;
        Ok((0..s.r[0].len())
            .map(|k| s.r[0][k] + th * (s.r[1][k] + th1 * (s.r[2][k] + th * (s.r[3][k] + th1 * s.r[4][k]))))
            .collect())
    }

    /// Start times of the accepted steps, useful for step-aligned quadrature.
    pub fn step_starts(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.t0).collect()
    }
}

/// Integrate `y' = f(t, y)` from `t0` to `t1` with the Dormand–Prince pair,
/// restarting at each breakpoint so that jumps in `f` are stepped over
/// exactly.
pub fn dopri5<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, breaks: &[f64], rtol: f64, atol: f64) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut knots = vec![t0];
    knots.extend(breaks.iter().copied().filter(|&b| b > t0 && b < t1));
    knots.push(t1);
    let mut steps = Vec::new();
    let mut y = y0.to_vec();
    let mut evaluations = 0;
    let mut rejected = 0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    for seg in knots.windows(2) {
        let (mut t, end) = (seg[0], seg[1]);
        f(t, &y, &mut k[0])?;
        evaluations += 1;
        let mut h = ((end - t) * 1e-3).max(1e-12);
        while t < end {
            if t + h > end || end - (t + h) < 1e-12 * (end - t0).abs() {
                h = end - t;
            }
            for s in 1..7 {
                for j in 0..n {
                    let mut acc = y[j];
                    for (m, km) in k.iter().enumerate().take(s) {
                        acc += h * A[s][m] * km[j];
                    }
                    tmp[j] = acc;
                }
                f(t + C[s] * h, &tmp, &mut k[s])?;
                evaluations += 1;
            }
            // k[6] was evaluated at the fifth-order solution, stored in tmp.
            let mut err = 0.0;
            for j in 0..n {
                let mut e = 0.0;
                for (s, ks) in k.iter().enumerate() {
                    e += E[s] * ks[j];
                }
                let sc = atol + rtol * y[j].abs().max(tmp[j].abs());
                err += (h * e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Ode(format!("non-finite error estimate at t = {t}")));
            }
            if err <= 1.0 {
                let y1 = tmp.clone();
                let mut r: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
                for j in 0..n {
                    let ydiff = y1[j] - y[j];
                    let bspl = h * k[0][j] - ydiff;
                    r[0][j] = y[j];
                    r[1][j] = ydiff;
                    r[2][j] = bspl;
                    r[3][j] = ydiff - h * k[6][j] - bspl;
                    r[4][j] = h * (0..7).map(|s| D[s] * k[s][j]).sum::<f64>();
                }
                steps.push(DenseStep { t0: t, h, r });
                t = if t + h >= end { end } else { t + h };
                y = y1;
                k[0] = k[6].clone();
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h *= fac;
            } else {
                rejected += 1;
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Ode(format!("step size underflow at t = {t}")));
                }
            }
        }
    }
    Ok(OdeSolution { steps, t_start: t0, t_end: t1, y_end: y, evaluations, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_kronrod_polynomials_and_singular_endpoint() {
        let v = integrate(|x| Ok(x.powi(5) - 2.0 * x), 0.0, 2.0, 1e-14, 1e-14).unwrap();
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
        let v = integrate(|x| Ok(1.0 / x.sqrt()), 0.0, 1.0, 1e-10, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-8);
        let v = integrate_to_infinity(|x| Ok(1.0 / (1.0 + x).powi(2)), 0.0, 1e-13, 1e-13).unwrap();
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn split_quadrature_handles_jumps() {
        let v = integrate_split(|x| Ok(if x < 1.0 { x } else { 0.0 }), 0.0, 3.0, &[1.0], 1e-14, 1e-14).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hermite_panels_are_fourth_order() {
        let xs = geometric_nodes(1e-3, 10.0, 4000);
        let fs: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let ds: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
        let c = cumulative_hermite(&xs, &fs, &ds, 0.0);
        let exact = (1e-3f64).cos() - 10f64.cos();
        assert!((c[3999] - exact).abs() < 1e-9, "{}", c[3999] - exact);
    }

    #[test]
    fn log_stencil_is_accurate() {
        let ts = geometric_nodes(1e-3, 1e3, 2000);
        let ys: Vec<f64> = ts.iter().map(|t| t.ln() * t).collect();
        let d = log_grid_derivative(&ts, &ys);
        for (t, dv) in ts.iter().zip(&d) {
            assert!((dv - (t.ln() + 1.0)).abs() < 1e-7 * (1.0 + t.ln().abs()));
        }
    }

    #[test]
    fn quintic_matches_both_jets() {
        let c = quintic_hermite(1.0, 2.0, [1.0, -2.0, 3.0], [0.5, 4.0, -1.0]);
        let p = |x: f64| (0..6).map(|i| c[i] * (x - 1.0).powi(i as i32)).sum::<f64>();
        let dp = |x: f64| (1..6).map(|i| i as f64 * c[i] * (x - 1.0).powi(i as i32 - 1)).sum::<f64>();
        let ddp = |x: f64| (2..6).map(|i| (i * (i - 1)) as f64 * c[i] * (x - 1.0).powi(i as i32 - 2)).sum::<f64>();
        assert!((p(2.0) - 0.5).abs() < 1e-12);
        assert!((dp(2.0) - 4.0).abs() < 1e-12);
        assert!((ddp(2.0) + 1.0).abs() < 1e-11);
        assert!((ddp(1.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dopri_exponential_with_dense_output() {
        let sol = dopri5(
            |_, y, dy| {
                dy[0] = y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            3.0,
            &[],
            1e-11,
            1e-13,
        )
        .unwrap();
        assert!((sol.y_end[0] - 3f64.exp()).abs() < 1e-9);
        for t in [0.1, 0.77, 1.5, 2.9] {
            assert!((sol.eval(t).unwrap()[0] - t.exp()).abs() < 1e-8 * t.exp());
        }
    }
}
