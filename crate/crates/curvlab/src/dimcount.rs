//! Dimension bounds for holomorphic functions of polynomial growth on the
//! total space of `L^{⊕r}`, from tables of `h⁰(M, L^{−k})`.
//!
//! All counts are exact integers.

use num_bigint::BigUint;
use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};

/// `C(r + p − 1, r − 1)`, the number of monomials of degree `p` in `r`
/// variables.
pub fn poly_dim(r: u64, p: u64) -> Result<BigUint> {
    if r == 0 {
        return invalid("rank must be at least 1");
    }
    let (n, k) = (r + p - 1, (r - 1).min(p));
    let mut acc = BigUint::from(1u32);
    for i in 1..=k {
        acc = acc * BigUint::from(n - k + i) / BigUint::from(i);
    }
    Ok(acc)
}

/// Riemann–Roch value of `h⁰(L^{−k})` on a genus-`g` curve.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RrValue {
    Exact(u64),
    /// `0 < ke ≤ 2g − 2`: not determined by the degree alone.
    NeedsUserData,
}

/// `h⁰` of a line bundle of degree `ke` on a genus-`g` curve, where `e` is
/// the degree of `L^{−1}`.
pub fn rr_sections(g: u64, e: u64, k: u64) -> RrValue {
    let deg = k * e;
    if deg == 0 {
        RrValue::Exact(1)
    } else if deg + 2 > 2 * g {
        RrValue::Exact(deg + 1 - g)
    } else {
        RrValue::NeedsUserData
    }
}

/// `h⁰(K^k)` on a curve of genus `g ≥ 2`.
pub fn canonical_sections(g: u64, k: u64) -> Result<u64> {
    if g < 2 {
        return invalid("canonical mode needs genus at least 2");
    }
    Ok(match k {
        0 => 1,
        1 => g,
        _ => (2 * k - 1) * (g - 1),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SectionSource {
    /// `L^{−1} = K` on a genus-`g` curve.
    Canonical { genus: u64 },
    /// `deg L^{−1} = e` on a genus-`g` curve.
    Degree { genus: u64, e: u64 },
    User,
}

/// `h⁰(M, L^{−k})` for `k = 0..len`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SectionTable {
    pub source: SectionSource,
    pub values: Vec<u64>,
}

impl SectionTable {
    pub fn canonical(genus: u64, kmax: u64) -> Result<Self> {
        let values = (0..=kmax).map(|k| canonical_sections(genus, k)).collect::<Result<_>>()?;
        Ok(Self { source: SectionSource::Canonical { genus }, values })
    }

    pub fn degree(genus: u64, e: u64, kmax: u64) -> Result<Self> {
        if e == 0 {
            return invalid("deg L^-1 must be at least 1");
        }
        let mut values = Vec::new();
        for k in 0..=kmax {
            match rr_sections(genus, e, k) {
                RrValue::Exact(v) => values.push(v),
                RrValue::NeedsUserData => {
                    return invalid(format!("h0(L^-{k}) needs user data: degree {} <= 2g - 2", k * e))
                }
            }
        }
        Ok(Self { source: SectionSource::Degree { genus, e }, values })
    }

    pub fn user(values: Vec<u64>) -> Result<Self> {
        if values.first() != Some(&1) {
            return invalid("a section table must start with h0(L^0) = 1");
        }
        Ok(Self { source: SectionSource::User, values })
    }

    /// Rows `k,h0` with an optional header; `k` must run `0, 1, 2, …`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (line_no == 0 && line.starts_with(|c: char| c.is_ascii_alphabetic())) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match cols.as_slice() {
                [k, h] => k.parse::<usize>().ok().zip(h.parse::<u64>().ok()),
                _ => None,
            };
            match parsed {
                Some((k, h)) if k == values.len() => values.push(h),
                _ => return invalid(format!("section table line {}: expected `{},h0`", line_no + 1, values.len())),
            }
        }
        Self::user(values)
    }

    fn get(&self, k: usize) -> Result<u64> {
        match self.values.get(k) {
            Some(&v) => Ok(v),
            None => invalid(format!("section table stops at k = {}, needs {k}", self.values.len() as i64 - 1)),
        }
    }
}

/// `Σ_{p=0}^{k} h⁰(L^{−p})·C(r+p−1, r−1)`
pub fn lower_bound(table: &SectionTable, r: u64, k: u64) -> Result<BigUint> {
    let mut acc = BigUint::default();
    for p in 0..=k {
        acc += BigUint::from(table.get(p as usize)?) * poly_dim(r, p)?;
    }
    Ok(acc)
}

/// `⌊η d⌋`. A relative guard of 1e−12 absorbs binary rounding of decimal
/// inputs such as `1.2 · 2.5`.
pub fn growth_cutoff(d: f64, eta: f64) -> Result<u64> {
    if !(d >= 0.0 && d.is_finite()) {
        return invalid("degree must be a nonnegative real");
    }
    if !(eta >= 1.0 && eta.is_finite()) {
        return invalid("eta must be at least 1");
    }
    let x = eta * d;
    Ok((x + 1e-12 * x.max(1.0)).floor() as u64)
}

/// Exact integers go to JSON as decimal strings.
fn decimal<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UpperBound {
    pub cutoff: u64,
    #[serde(serialize_with = "decimal")]
    pub value: BigUint,
}

/// `Σ_{k=0}^{⌊ηd⌋} h⁰(L^{−k})`
pub fn upper_bound(table: &SectionTable, d: f64, eta: f64) -> Result<UpperBound> {
    let cutoff = growth_cutoff(d, eta)?;
    let value = lower_bound(table, 1, cutoff)?;
    Ok(UpperBound { cutoff, value })
}

/// Shown when a bound is attained along a sequence of degrees tending to
/// infinity.
pub const RIGIDITY_NOTE: &str = "equality along a diverging sequence forces k = 0, i.e. u is linear";

#[derive(Clone, Debug, Serialize)]
pub struct DimensionRow {
    pub d: f64,
    #[serde(serialize_with = "decimal")]
    pub lower: BigUint,
    /// Only for `r = 1`; the upper bound concerns line bundles.
    pub upper: Option<UpperBound>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DimensionTable {
    pub rank: u64,
    pub eta: f64,
    pub rows: Vec<DimensionRow>,
}

impl DimensionTable {
    /// Rows at the given degrees; the lower bound uses `⌊d⌋`.
    pub fn new(table: &SectionTable, rank: u64, eta: f64, degrees: &[f64]) -> Result<Self> {
        let mut rows = Vec::new();
        for &d in degrees {
            let lower = lower_bound(table, rank, growth_cutoff(d, 1.0)?)?;
            let upper = if rank == 1 { Some(upper_bound(table, d, eta)?) } else { None };
            rows.push(DimensionRow { d, lower, upper });
        }
        Ok(Self { rank, eta, rows })
    }

    /// `lower ≤ upper` on every row that has both.
    pub fn consistent(&self) -> bool {
        self.rows.iter().all(|r| r.upper.as_ref().map_or(true, |u| r.lower <= u.value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_binomials() {
        assert_eq!(poly_dim(1, 9).unwrap(), BigUint::from(1u32));
        assert_eq!(poly_dim(3, 2).unwrap(), BigUint::from(6u32));
        assert_eq!(poly_dim(2, 3).unwrap(), BigUint::from(4u32));
        assert!(poly_dim(0, 1).is_err());
    }

    #[test]
    fn riemann_roch_provider() {
        for k in 0..6 {
            assert_eq!(rr_sections(0, 1, k), RrValue::Exact(k + 1));
        }
        assert_eq!(canonical_sections(2, 2).unwrap(), 3);
        assert_eq!(rr_sections(3, 1, 1), RrValue::NeedsUserData);
        assert!(SectionTable::degree(3, 1, 2).is_err());
    }

    #[test]
    fn csv_tables() {
        let t = SectionTable::from_csv("k,h0\n0,1\n1,2\n2,3\n").unwrap();
        assert_eq!(t.values, vec![1, 2, 3]);
        assert!(SectionTable::from_csv("0,1\n2,3\n").is_err());
        assert!(SectionTable::from_csv("0,2\n").is_err());
    }
}
