//! Functions sampled on a strictly increasing grid.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Endpoint {
    FiniteLimit,
    Divergent,
    Unknown,
}

/// Values and slopes on a grid, interpolated by cubic Hermite pieces.
///
/// When exact derivatives are not supplied the slopes are the monotone
/// (Fritsch–Butland) choice, so monotone data stay monotone.
#[derive(Clone, Debug)]
pub struct SampledFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    exact_slopes: bool,
    pub endpoint: Endpoint,
}

fn check_grid(grid: &[f64], values: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid.len() != values.len() {
        return invalid("a sampled function needs at least two nodes and one value per node");
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("grid must be strictly increasing");
    }
    if grid.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sampled function"));
    }
    Ok(())
}

fn monotone_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![d[0]; 2];
    }
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] > 0.0 {
            let (w1, w2) = (2.0 * h[i] + h[i - 1], h[i] + 2.0 * h[i - 1]);
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}

impl SampledFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid, &values)?;
        let slopes = monotone_slopes(&grid, &values);
        Ok(Self { grid, values, slopes, exact_slopes: false, endpoint: Endpoint::Unknown })
    }

    pub fn with_derivatives(grid: Vec<f64>, values: Vec<f64>, derivatives: Vec<f64>) -> Result<Self> {
        check_grid(&grid, &values)?;
        if derivatives.len() != grid.len() || derivatives.iter().any(|d| !d.is_finite()) {
            return invalid("derivative samples must be finite and match the grid");
        }
        Ok(Self { grid, values, slopes: derivatives, exact_slopes: true, endpoint: Endpoint::Unknown })
    }

    pub fn tagged(mut self, endpoint: Endpoint) -> Self {
        self.endpoint = endpoint;
        self
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Slopes used by the interpolant (exact when supplied).
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn has_exact_derivatives(&self) -> bool {
        self.exact_slopes
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.grid[0]
    }

    pub fn hi(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    fn locate(&self, x: f64) -> Result<(usize, f64, f64)> {
        let (lo, hi) = (self.lo(), self.hi());
        let slack = 1e-12 * (hi - lo).abs().max(hi.abs());
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(Error::OutsideGrid(x));
        }
        let x = x.clamp(lo, hi);
        let i = self.grid.partition_point(|&g| g <= x).clamp(1, self.grid.len() - 1) - 1;
        let h = self.grid[i + 1] - self.grid[i];
        Ok((i, h, (x - self.grid[i]) / h))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (i, h, t) = self.locate(x)?;
        if t == 0.0 {
            return Ok(self.values[i]);
        }
        if t == 1.0 {
            return Ok(self.values[i + 1]);
        }
        let (t2, t3) = (t * t, t * t * t);
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * self.values[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.values[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1])
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        let (i, h, t) = self.locate(x)?;
        let t2 = t * t;
        Ok((6.0 * t2 - 6.0 * t) * self.values[i] / h
            + (3.0 * t2 - 4.0 * t + 1.0) * self.slopes[i]
            + (-6.0 * t2 + 6.0 * t) * self.values[i + 1] / h
            + (3.0 * t2 - 2.0 * t) * self.slopes[i + 1])
    }

    fn partial(&self, i: usize, theta: f64) -> f64 {
        let h = self.grid[i + 1] - self.grid[i];
        let (t2, t3, t4) = (theta * theta, theta.powi(3), theta.powi(4));
        h * (self.values[i] * (theta - t3 + 0.5 * t4)
            + h * self.slopes[i] * (0.5 * t2 - 2.0 * t3 / 3.0 + 0.25 * t4)
            + self.values[i + 1] * (t3 - 0.5 * t4)
            + h * self.slopes[i + 1] * (-t3 / 3.0 + 0.25 * t4))
    }

    /// Exact integral of the interpolant over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if b < a {
            return Ok(-self.integral(b, a)?);
        }
        let (ia, _, ta) = self.locate(a)?;
        let (ib, _, tb) = self.locate(b)?;
        if ia == ib {
            return Ok(self.partial(ia, tb) - self.partial(ia, ta));
        }
        let mut total = self.partial(ib, tb) + (self.partial(ia, 1.0) - self.partial(ia, ta));
        for i in ia + 1..ib {
            total += self.partial(i, 1.0);
        }
        Ok(total)
    }

    /// Running integral from the first node, one entry per node.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = 0.0;
        out.push(0.0);
        for i in 0..self.grid.len() - 1 {
            acc += self.partial(i, 1.0);
            out.push(acc);
        }
        out
    }

    /// RFC 4180 CSV with columns `arg,value,derivative`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("arg,value,derivative\r\n");
        for i in 0..self.grid.len() {
            s.push_str(&format!("{:?},{:?},{:?}\r\n", self.grid[i], self.values[i], self.slopes[i]));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_nodes() {
        let g = vec![0.0, 0.5, 2.0, 3.0];
        let v = vec![1.0, -1.0, 4.0, 4.5];
        let f = SampledFunction::new(g.clone(), v.clone()).unwrap();
        for (x, y) in g.iter().zip(&v) {
            assert_eq!(f.eval(*x).unwrap(), *y);
        }
    }

    #[test]
    fn monotone_data_stay_monotone() {
        let g: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let v: Vec<f64> = g.iter().map(|x| if *x < 10.0 { 0.0 } else { 1.0 + x * 1e-3 }).collect();
        let f = SampledFunction::new(g, v).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=1900 {
            let y = f.eval(k as f64 * 0.01).unwrap();
            assert!(y >= prev - 1e-15);
            prev = y;
        }
    }

    #[test]
    fn exact_cubic_with_exact_slopes() {
        let g: Vec<f64> = vec![0.0, 0.3, 1.0, 1.7];
        let f = |x: f64| x.powi(3) - x;
        let df = |x: f64| 3.0 * x * x - 1.0;
        let s = SampledFunction::with_derivatives(g.clone(), g.iter().map(|&x| f(x)).collect(), g.iter().map(|&x| df(x)).collect())
            .unwrap();
        for x in [0.1, 0.65, 1.234] {
            assert!((s.eval(x).unwrap() - f(x)).abs() < 1e-14);
            assert!((s.derivative(x).unwrap() - df(x)).abs() < 1e-13);
        }
        let exact = |a: f64, b: f64| (b.powi(4) - a.powi(4)) / 4.0 - (b * b - a * a) / 2.0;
        assert!((s.integral(0.1, 1.5).unwrap() - exact(0.1, 1.5)).abs() < 1e-14);
        assert!((s.cumulative()[3] - exact(0.0, 1.7)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SampledFunction::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(SampledFunction::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let f = SampledFunction::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(f.eval(2.0), Err(Error::OutsideGrid(2.0)));
    }

    #[test]
    fn csv_layout() {
        let f = SampledFunction::new(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(f.to_csv(), "arg,value,derivative\r\n0.0,1.0,2.0\r\n1.0,3.0,2.0\r\n");
    }
}
