//! Calabi-ansatz metrics on `L` and `L^{⊕r}` over a base of constant
//! negative holomorphic sectional curvature.
//!
//! All components are coefficients at a point where `g` is the identity,
//! `h = 1` and `dh = 0`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::genfun::{
    completeness_check, fiber_profile, Check, CompletenessReport, FiberPoint, FiberProfile, Form, GeneratingSpec,
};
use crate::numerics::{hermite_panel, log_grid_derivative};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BaseModel {
    /// Complex dimension of the base.
    pub dim: usize,
    /// Holomorphic sectional curvature `−2c`.
    pub hsc: f64,
    pub vol: f64,
}

impl BaseModel {
    pub fn new(dim: usize, hsc: f64, vol: f64) -> Result<Self> {
        if dim == 0 || !(vol > 0.0) || !hsc.is_finite() {
            return invalid("base needs dim >= 1, finite curvature and positive volume");
        }
        Ok(Self { dim, hsc, vol })
    }

    pub fn c(&self) -> f64 {
        -0.5 * self.hsc
    }

    /// `R^M(U, Ū, W, W̄) = −c(|U|²|W|² + |⟨U, W⟩|²)`.
    pub fn curvature(&self, u: &[Complex64], w: &[Complex64]) -> f64 {
        let (nu, nw) = (norm_sqr(u), norm_sqr(w));
        -self.c() * (nu * nw + inner(u, w).norm_sqr())
    }
}

fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

#[derive(Clone, Debug)]
pub struct CalabiMetric {
    pub lambda: f64,
    pub rank: usize,
    pub base: BaseModel,
    pub fiber: FiberProfile,
    /// `P = 1 + λtu′` at the nodes.
    pub p: Vec<f64>,
}

/// Coefficients of the nonzero line-bundle components at one `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineComponents {
    pub t: f64,
    pub p: f64,
    pub q: f64,
    /// `R_{ij̄kl̄} = base·(g_{ij̄}g_{kl̄} + g_{il̄}g_{kj̄})`, i.e. `−(Pc + tQλ²)`.
    pub base: f64,
    /// `tQλ²`
    pub base_cross: f64,
    /// `R_{vv̄ij̄} = mixed·g_{ij̄}`, equal to `II·Q`.
    pub mixed: f64,
    /// `R_{vv̄vv̄}`, equal to `I·Q²`.
    pub fiber: f64,
    pub i: f64,
    pub ii: f64,
    pub barrier: f64,
}

/// Coefficients of the vector-bundle components at one `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VectorComponents {
    pub t: f64,
    pub p: f64,
    pub s: f64,
    pub tt: f64,
    pub base: f64,
    pub kj_rr: f64,
    pub rr_rr: f64,
    pub mu_rr: f64,
    pub mu_mu: f64,
    pub mu_alpha: f64,
    pub kj_mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LineSignReport {
    pub bi_negative: bool,
    pub bi_nonpositive: bool,
    pub barrier_at_zero: f64,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NumIdentityReport {
    pub num_at_zero: f64,
    /// Max relative residual of `Num′ = T[χ̃² − tχ̃′]`.
    pub derived_residual: f64,
    /// Max relative residual of `Num′ = T[(χ̃+1)² + t(−χ̃)′ + 3/4]`.
    pub stated_residual: f64,
    pub num_positive: bool,
    pub location: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TubeReport {
    pub n: usize,
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub volume: Vec<f64>,
    /// Worst `(P − 2λs̃²)/max(P, 1)` over the grid.
    pub stated_bound_margin: f64,
    pub stated_bound_location: f64,
    /// Worst `(P − (1 + λs̃²))/max(P, 1)` over the grid.
    pub derived_bound_margin: f64,
    pub derived_bound_location: f64,
    /// `min Vol/s̃^{2n}` over `s̃ ∈ [10, 10³]` when that range is sampled.
    pub lower_constant: Option<f64>,
    /// `Vol/s̃^{2n}` at the last node.
    pub final_ratio: f64,
    pub chi_limit: f64,
    /// `[2(1 − χ(∞))]ⁿ/n · Vol(M)`
    pub stated_asymptote: f64,
    /// `πλ^{n−1}(1 − χ(∞))ⁿ/n · Vol(M)`
    pub derived_asymptote: f64,
}

/// Relative size of `a − b` against the natural scale of the terms.
fn rel(a: f64, b: f64, scale: f64) -> f64 {
    let s = scale.abs().max(a.abs()).max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

impl CalabiMetric {
    /// Build from a fiber-kind spec (χ, χ̃ or u); λ and the rank come from
    /// the spec's parameters.
    pub fn new(spec: &GeneratingSpec, base: BaseModel, nodes: &[f64]) -> Result<Self> {
        let fiber = fiber_profile(spec, nodes)?;
        let lambda = spec.params.lambda;
        let p = (0..nodes.len()).map(|i| 1.0 + lambda * nodes[i] * fiber.du[i]).collect();
        Ok(Self { lambda, rank: spec.params.rank, base, fiber, p })
    }

    /// Complex dimension of the total space.
    pub fn n(&self) -> usize {
        self.base.dim + self.rank
    }

    pub fn nodes(&self) -> &[f64] {
        self.fiber.nodes()
    }

    fn p_at(&self, pt: &FiberPoint) -> f64 {
        1.0 + self.lambda * pt.t * pt.du
    }

    fn line_from(&self, pt: &FiberPoint) -> LineComponents {
        let (t, q, chi, lam) = (pt.t, pt.q, pt.chi, self.lambda);
        let p = self.p_at(pt);
        let barrier = lam * t * q / (1.0 - chi) - p;
        let ii = lam * (1.0 - chi) / p * barrier;
        let i = pt.dchi / q;
        let base_cross = t * q * lam * lam;
        LineComponents {
            t,
            p,
            q,
            base: -(p * self.base.c() + base_cross),
            base_cross,
            mixed: ii * q,
            fiber: q * pt.dchi,
            i,
            ii,
            barrier,
        }
    }

    pub fn curvature_line(&self, t: f64) -> Result<LineComponents> {
        Ok(self.line_from(&self.fiber.at(t)?))
    }

    pub fn line_table(&self) -> Vec<LineComponents> {
        (0..self.nodes().len()).map(|i| self.line_from(&self.fiber.point(i))).collect()
    }

    /// Recompute the line components from the raw derivative formulas with
    /// five-point log-grid stencils on `P` and `Q`; largest relative
    /// deviation per component `(base_cross, mixed, fiber)`, interior nodes.
    pub fn line_stencil_check(&self) -> [f64; 3] {
        let ts = self.nodes();
        let q = &self.fiber.q.values;
        // Differentiate P − 1 and Q − Q(0) so that small-t samples carry no
        // rounding from the constant part.
        let p1: Vec<f64> = (0..ts.len()).map(|i| self.lambda * ts[i] * self.fiber.du[i]).collect();
        let q1: Vec<f64> = self.fiber.q.exponent.iter().map(|e| self.fiber.q0() * (-e).exp_m1()).collect();
        let pt = log_grid_derivative(ts, &p1);
        let ptt = log_grid_derivative(ts, &pt);
        let qt = log_grid_derivative(ts, &q1);
        let qtt = log_grid_derivative(ts, &qt);
        let table = self.line_table();
        let mut worst = [0.0_f64; 3];
        for i in 4..ts.len() - 4 {
            let (t, p) = (ts[i], self.p[i]);
            let c = &table[i];
            let cross = t * pt[i] * self.lambda;
            worst[0] = worst[0].max(rel(cross, c.base_cross, 0.0));
            let terms = [-t * ptt[i], -pt[i], pt[i] * pt[i] * t / p];
            worst[1] = worst[1].max(rel(terms.iter().sum(), c.mixed, terms.iter().map(|x| x.abs()).sum()));
            let terms = [-t * qtt[i], qt[i] * qt[i] * t / q[i], -qt[i]];
            worst[2] = worst[2].max(rel(terms.iter().sum(), c.fiber, terms.iter().map(|x| x.abs()).sum()));
        }
        worst
    }

    /// `I`, `II` and the barrier `λtQ/(1−χ) − P` over the grid.
    pub fn sign_check_line(&self) -> LineSignReport {
        let table = self.line_table();
        let origin = self.line_from(&self.fiber.at(0.0).expect("origin is always available"));
        let mut all = vec![origin];
        all.extend(table);
        let worst = |f: &dyn Fn(&LineComponents) -> f64| {
            all.iter().map(|c| (f(c), c.t)).fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a })
        };
        let (mi, li) = worst(&|c| -c.i);
        let (mii, lii) = worst(&|c| -c.ii);
        let mut rise = (f64::INFINITY, f64::NAN);
        for w in all.windows(2) {
            let tol = 1e-12 * (1.0 + w[0].p + self.lambda * w[0].t * w[0].q);
            let m = w[0].barrier - w[1].barrier + tol;
            if m < rise.0 {
                rise = (m, w[1].t);
            }
        }
        let b0 = origin.barrier;
        let checks = vec![
            Check::from_margin("I < 0", mi > 0.0, mi, li),
            Check::from_margin("II < 0", mii > 0.0, mii, lii),
            Check::from_margin("barrier(0) = -1", (b0 + 1.0).abs() <= 1e-10, 1e-10 - (b0 + 1.0).abs(), 0.0),
            Check::from_margin("barrier nonincreasing", rise.0 >= 0.0, rise.0, rise.1),
        ];
        LineSignReport { bi_negative: mi > 0.0 && mii > 0.0, bi_nonpositive: mi >= 0.0 && mii >= 0.0, barrier_at_zero: b0, checks }
    }

    /// Largest relative deviation between the stencil derivative of the
    /// barrier and `λtQχ′/(1−χ)²`, interior nodes.
    pub fn barrier_derivative_check(&self) -> f64 {
        let ts = self.nodes();
        let table = self.line_table();
        let b: Vec<f64> = table.iter().map(|c| c.barrier).collect();
        let db = log_grid_derivative(ts, &b);
        let chi = self.fiber.chi();
        (2..ts.len() - 2)
            .map(|i| {
                let exact = self.lambda * ts[i] * table[i].q * self.fiber.chi_slopes[i] / (1.0 - chi[i]).powi(2);
                let scale = self.lambda * (table[i].q + ts[i] * self.fiber.q.derivatives[i].abs()) + self.fiber.d2u[i] * ts[i];
                rel(db[i], exact, scale)
            })
            .fold(0.0, f64::max)
    }

    /// Bisectional curvature form of `Ũ = (U, ε)`, `W̃ = (W, μ)`.
    pub fn bisectional_form(&self, t: f64, u_tilde: &[Complex64], w_tilde: &[Complex64]) -> Result<f64> {
        if self.rank != 1 {
            return invalid("the bisectional form is implemented for line bundles");
        }
        let d = self.base.dim;
        if u_tilde.len() != d + 1 || w_tilde.len() != d + 1 {
            return invalid(format!("tangent vectors need {} coefficients", d + 1));
        }
        let c = self.curvature_line(t)?;
        let (u, eps) = (&u_tilde[..d], u_tilde[d]);
        let (w, mu) = (&w_tilde[..d], w_tilde[d]);
        let gg = norm_sqr(u) * norm_sqr(w) + inner(u, w).norm_sqr();
        let mixed: Vec<Complex64> = (0..d).map(|i| mu * u[i] + eps * w[i]).collect();
        Ok(c.p * self.base.curvature(u, w) - c.base_cross * gg + c.mixed * norm_sqr(&mixed) + eps.norm_sqr() * mu.norm_sqr() * c.i * c.q * c.q)
    }

    /// Largest bisectional value over `count` random unit pairs at each of
    /// the given `t`. Returns `(max, t, pair index)`.
    pub fn bisectional_sweep(&self, ts: &[f64], count: usize, seed: u64) -> Result<(f64, f64, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.base.dim + 1;
        let unit = |rng: &mut ChaCha8Rng| {
            let v: Vec<Complex64> = (0..d).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let n = norm_sqr(&v).sqrt();
            v.into_iter().map(|z| z / n).collect::<Vec<_>>()
        };
        let mut best = (f64::NEG_INFINITY, f64::NAN, 0);
        for &t in ts {
            for k in 0..count {
                let (a, b) = (unit(&mut rng), unit(&mut rng));
                let val = self.bisectional_form(t, &a, &b)?;
                if val > best.0 {
                    best = (val, t, k);
                }
            }
        }
        Ok(best)
    }

    fn vector_from(&self, pt: &FiberPoint) -> VectorComponents {
        let (t, lam) = (pt.t, self.lambda);
        let (s, tt, chi) = (pt.du, pt.q, pt.chi);
        let p = self.p_at(pt);
        // (tu″)′ = (S − T(1 + χ̃))/t, with the limit u″(0) at the origin.
        let tu2_prime = if t == 0.0 { pt.d2u } else { (s - tt * (1.0 + chi)) / t };
        VectorComponents {
            t,
            p,
            s,
            tt,
            base: -(p * self.base.c() + t * tt * lam * lam),
            kj_rr: lam * tt * (chi - 1.0 + lam * t * tt / p),
            rr_rr: tt * pt.dchi,
            mu_rr: -tu2_prime,
            mu_mu: -2.0 * pt.d2u,
            mu_alpha: -pt.d2u,
            kj_mu: -tt * lam,
        }
    }

    pub fn curvature_vector(&self, t: f64) -> Result<VectorComponents> {
        if self.rank < 2 {
            return invalid("vector-bundle components need rank >= 2");
        }
        Ok(self.vector_from(&self.fiber.at(t)?))
    }

    pub fn vector_table(&self) -> Vec<VectorComponents> {
        (0..self.nodes().len()).map(|i| self.vector_from(&self.fiber.point(i))).collect()
    }

    /// Raw formulas with `u‴`, `u⁗`, `T′` from repeated five-point stencils
    /// against the closed forms; largest relative deviation of
    /// `(kj_rr, rr_rr, mu_rr)`, interior nodes.
    pub fn vector_stencil_check(&self) -> [f64; 3] {
        let ts = self.nodes();
        let tt = &self.fiber.q.values;
        let d2u = &self.fiber.d2u;
        let d3u = log_grid_derivative(ts, d2u);
        let d4u = log_grid_derivative(ts, &d3u);
        let dt = log_grid_derivative(ts, tt);
        let table = self.vector_table();
        let mut worst = [0.0_f64; 3];
        for i in 4..ts.len() - 4 {
            let (t, c, lam) = (ts[i], &table[i], self.lambda);
            let terms = [-t * dt[i], -tt[i], lam * t * tt[i] * tt[i] / c.p];
            worst[0] = worst[0].max(rel(lam * terms.iter().sum::<f64>(), c.kj_rr, lam * terms.iter().map(|x| x.abs()).sum::<f64>()));
            let terms = [2.0 * d2u[i], 4.0 * t * d3u[i], t * t * d4u[i], -dt[i] * dt[i] * t / tt[i]];
            worst[1] = worst[1].max(rel(-terms.iter().sum::<f64>(), c.rr_rr, terms.iter().map(|x| x.abs()).sum()));
            let terms = [d2u[i], t * d3u[i]];
            worst[2] = worst[2].max(rel(-terms.iter().sum::<f64>(), c.mu_rr, terms.iter().map(|x| x.abs()).sum()));
        }
        worst
    }

    /// `Num(t) = t²T′ − tT + ∫₀ᵗT`, evaluated as `∫₀ᵗ χ̃T − tTχ̃`, with its
    /// stencil derivative compared against both closed forms.
    pub fn num_identity_check(&self) -> NumIdentityReport {
        let ts = self.nodes();
        let n = ts.len();
        let (tt, chi, dchi) = (&self.fiber.q.values, self.fiber.chi(), &self.fiber.chi_slopes);
        let num: Vec<f64> = (0..n).map(|i| -self.fiber.moment[i] - ts[i] * tt[i] * chi[i]).collect();
        let dnum = log_grid_derivative(ts, &num);
        let (mut derived, mut stated) = (0.0_f64, 0.0_f64);
        let mut positive = true;
        let mut location = f64::NAN;
        for i in 2..n - 2 {
            let t = ts[i];
            let exact = tt[i] * (chi[i] * chi[i] - t * dchi[i]);
            let claim = tt[i] * ((chi[i] + 1.0).powi(2) - t * dchi[i] + 0.75);
            let d = rel(dnum[i], exact, tt[i] * (chi[i] * chi[i] + (t * dchi[i]).abs()));
            if d > derived {
                derived = d;
                location = t;
            }
            stated = stated.max(rel(dnum[i], claim, 0.0));
            positive &= num[i] > 0.0 && exact > 0.0;
        }
        NumIdentityReport { num_at_zero: 0.0, derived_residual: derived, stated_residual: stated, num_positive: positive, location }
    }

    pub fn completeness(&self) -> Result<CompletenessReport> {
        Ok(completeness_check(&self.fiber.q_sampled()?, Form::Fiber))
    }

    /// Fiber distance `s̃ = ∫₀ᵗ √Q/(2√τ)`, tube volume
    /// `π(Pⁿ − 1)/(nλ)·Vol(M)` and the lower bounds on `P`.
    pub fn tube(&self) -> TubeReport {
        let ts = self.nodes();
        let len = ts.len();
        let (q, dq) = (&self.fiber.q.values, &self.fiber.q.derivatives);
        let g: Vec<f64> = (0..len).map(|i| 0.5 * (q[i] / ts[i]).sqrt()).collect();
        let dg: Vec<f64> = (0..len).map(|i| 0.5 * g[i] * (dq[i] / q[i] - 1.0 / ts[i])).collect();
        let mut s = vec![ts[0].sqrt() * 0.5 * (self.fiber.q0().sqrt() + q[0].sqrt())];
        for i in 1..len {
            s.push(s[i - 1] + hermite_panel(ts[i] - ts[i - 1], g[i - 1], g[i], dg[i - 1], dg[i]));
        }
        let n = self.n();
        let nf = n as f64;
        let lam = self.lambda;
        let volume: Vec<f64> = self
            .p
            .iter()
            .map(|p| std::f64::consts::PI * (p.powi(n as i32) - 1.0) / (nf * lam) * self.base.vol)
            .collect();
        let mut stated = (f64::INFINITY, f64::NAN);
        let mut derived = (f64::INFINITY, f64::NAN);
        for i in 0..len {
            let scale = self.p[i].max(1.0);
            let a = (self.p[i] - 2.0 * lam * s[i] * s[i]) / scale;
            let b = (self.p[i] - (1.0 + lam * s[i] * s[i])) / scale;
            if a < stated.0 {
                stated = (a, ts[i]);
            }
            if b < derived.0 {
                derived = (b, ts[i]);
            }
        }
        let ratio = |i: usize| volume[i] / s[i].powi(2 * n as i32);
        let window: Vec<f64> = (0..len).filter(|&i| s[i] >= 10.0 && s[i] <= 1e3).map(ratio).collect();
        let lower_constant = if window.is_empty() { None } else { Some(window.iter().copied().fold(f64::INFINITY, f64::min)) };
        let chi_limit = self.fiber.chi()[len - 1];
        let k = 1.0 - chi_limit;
        TubeReport {
            n,
            final_ratio: ratio(len - 1),
            s,
            p: self.p.clone(),
            volume,
            stated_bound_margin: stated.0,
            stated_bound_location: stated.1,
            derived_bound_margin: derived.0,
            derived_bound_location: derived.1,
            lower_constant,
            chi_limit,
            stated_asymptote: (2.0 * k).powi(n as i32) / nf * self.base.vol,
            derived_asymptote: std::f64::consts::PI * lam.powi(n as i32 - 1) * k.powi(n as i32) / nf * self.base.vol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::{Grid, Kind, Params};

    fn metric(src: &str, lambda: f64, rank: usize) -> CalabiMetric {
        let spec = GeneratingSpec::with_params(Kind::Chi, src.parse().unwrap(), Params { lambda, norm: 1.0, rank }).unwrap();
        CalabiMetric::new(&spec, BaseModel::new(1, -1.0, 1.0).unwrap(), &Grid::new(1e-6, 1e3, 2048).unwrap().nodes()).unwrap()
    }

    #[test]
    fn flat_fiber_has_no_fiber_curvature() {
        let m = metric("0", 1.0, 1);
        for c in m.line_table() {
            assert_eq!(c.fiber, 0.0);
            assert!(c.ii < 0.0);
            assert!((c.ii + 1.0 / c.p).abs() < 1e-12);
        }
        let r = m.sign_check_line();
        assert!(!r.bi_negative && r.bi_nonpositive);
    }

    #[test]
    fn rational_chi_closed_forms() {
        // χ = −t/(1+t): Q = 1+t, u′ = 1 + t/2, I = χ′/Q = −1/(1+t)³.
        let m = metric("-t/(1+t)", 1.0, 1);
        let c = m.curvature_line(1.0).unwrap();
        assert!((c.q - 2.0).abs() < 1e-12);
        assert!((c.p - 2.5).abs() < 1e-10);
        assert!((c.i + 0.125).abs() < 1e-12);
        assert!((c.fiber - c.i * c.q * c.q).abs() < 1e-14);
        let r = m.sign_check_line();
        assert!(r.bi_negative, "{:?}", r.checks);
        assert_eq!(r.barrier_at_zero, -1.0);
    }

    #[test]
    fn positive_chi_is_rejected() {
        assert!(!metric("t/(1+t)", 1.0, 1).sign_check_line().bi_negative);
    }

    #[test]
    fn vector_symmetry_and_linear_u() {
        let m = metric("0", 1.0, 2);
        let c = m.curvature_vector(2.0).unwrap();
        assert_eq!((c.mu_mu, c.rr_rr), (0.0, 0.0));
        let m = metric("-t/(1+t)", 1.0, 3);
        for c in m.vector_table() {
            assert_eq!(c.mu_mu, 2.0 * c.mu_alpha);
        }
    }

    #[test]
    fn base_only_bisectional_value() {
        let m = metric("0", 1.0, 1);
        let z = |re: f64| Complex64::new(re, 0.0);
        let t = 2.0;
        let val = m.bisectional_form(t, &[z(1.0), z(0.0)], &[z(1.0), z(0.0)]).unwrap();
        let c = m.curvature_line(t).unwrap();
        // P·R^M(U,U,U,U) − tQλ²·2 plus the mixed term with μ = ε = 0.
        assert!((val - (c.p * -2.0 * m.base.c() - 2.0 * c.base_cross)).abs() < 1e-12);
        let fiber = m.bisectional_form(t, &[z(0.0), z(1.0)], &[z(0.0), z(1.0)]).unwrap();
        assert_eq!(fiber, 0.0);
    }
}
