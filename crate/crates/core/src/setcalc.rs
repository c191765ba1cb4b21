//! Finite sets: sumsets, product sets, additive energy and the classical
//! cardinality inequalities as oracles.

use std::fmt;

use crate::conv::{combine_independent, combine_into, AtomSink};
use crate::dist::{parse_header, FiniteDist};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::value::{parse_value, BinOp, GroupValue};

/// Largest operand accepted by set operations.
pub const SET_SIZE_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteSet {
    elements: Vec<GroupValue>,
}

impl FiniteSet {
    pub fn new(values: Vec<GroupValue>) -> Result<Self> {
        let mut elements = values;
        elements.sort();
        elements.dedup();
        if elements.is_empty() {
            return Err(Error::InvalidArgument("set is empty".into()));
        }
        if elements.len() > SET_SIZE_CAP {
            return Err(Error::SupportTooLarge { size: elements.len(), cap: SET_SIZE_CAP });
        }
        let fam = elements[0].family();
        if let Some(v) = elements.iter().find(|v| v.family() != fam) {
            return Err(Error::MixedGroup(elements[0].to_string(), v.to_string()));
        }
        Ok(FiniteSet { elements })
    }

    pub fn from_ints(values: impl IntoIterator<Item = i64>) -> Self {
        Self::new(values.into_iter().map(GroupValue::int).collect()).expect("nonempty integer set")
    }

    pub fn elements(&self) -> &[GroupValue] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, v: &GroupValue) -> bool {
        self.elements.binary_search(v).is_ok()
    }

    /// Uniform distribution on the set.
    pub fn uniform(&self) -> FiniteDist {
        FiniteDist::uniform(self.elements.clone()).expect("valid set")
    }

    pub fn neg(&self) -> FiniteSet {
        FiniteSet::new(self.elements.iter().map(GroupValue::neg).collect()).expect("valid set")
    }

    /// Parse one value per line; `#` comments and an optional `@group` header.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut family = None;
        let mut values = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('@') {
                family = Some(parse_header(h).map_err(|m| Error::Format { line: i + 1, message: m })?);
                continue;
            }
            values.push(parse_value(line, family).map_err(|e| Error::Format { line: i + 1, message: e.to_string() })?);
        }
        Self::new(values)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.elements[0].family() {
            crate::value::Family::Rational => {}
            f => out.push_str(&format!("@group {f}\n")),
        }
        for v in &self.elements {
            out.push_str(&format!("{v}\n"));
        }
        out
    }
}

impl fmt::Display for FiniteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.elements.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

/// `{a op b : a ∈ A, b ∈ B}`.
pub fn set_combine(a: &FiniteSet, b: &FiniteSet, op: BinOp) -> Result<FiniteSet> {
    let d = combine_independent(&a.uniform(), &b.uniform(), op)?;
    Ok(FiniteSet { elements: d.support().cloned().collect() })
}

struct Count {
    size: u64,
    squares: u128,
}

impl AtomSink for Count {
    fn push(&mut self, _value: GroupValue, weight: u128) -> Result<()> {
        self.push_small(0, weight)
    }

    fn push_small(&mut self, _value: i64, weight: u128) -> Result<()> {
        self.size += 1;
        self.squares += weight * weight;
        Ok(())
    }
}

fn count(a: &FiniteSet, b: &FiniteSet, op: BinOp) -> Result<Count> {
    let mut c = Count { size: 0, squares: 0 };
    combine_into(&a.uniform(), &b.uniform(), op, &mut c)?;
    Ok(c)
}

/// `|A op B|` without materializing the result.
pub fn combined_size(a: &FiniteSet, b: &FiniteSet, op: BinOp) -> Result<u64> {
    Ok(count(a, b, op)?.size)
}

/// Number of ordered quadruples with `a1 + b1 = a2 + b2`, i.e. `Σ_s r(s)²`
/// where `r(s)` counts ordered pairs `(a, b)` with `a + b = s`.
pub fn set_energy(a: &FiniteSet, b: &FiniteSet) -> Result<u128> {
    Ok(count(a, b, BinOp::Add)?.squares)
}

/// Slacks (in nats, as logarithms of cardinality ratios) of the classical
/// set inequalities on `A` and `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct SetReport {
    pub sum_size: u64,
    pub diff_size: u64,
    pub energy: u128,
    /// `|A+B| >= max(|A|, |B|)`.
    pub trivial_bound: f64,
    /// `E(A,B) >= |A|²|B|² / |A+B|`.
    pub energy_bound: f64,
    /// `|A-C| <= |A-B||B-C| / |B|` with `C = A`.
    pub triangle_aba: f64,
    /// `|B-C| <= |B-A||A-C| / |A|` with `C = B`.
    pub triangle_bab: f64,
    /// `|A+B| <= |A-B|³ / (|A||B|)`.
    pub sum_difference: f64,
    /// `d(A,-A) >= d(A,A)/2`.
    pub doubling_lower: f64,
    /// `d(A,-A) <= 2 d(A,A)`.
    pub doubling_upper: f64,
}

impl SetReport {
    pub fn slacks(&self) -> [(&'static str, f64); 7] {
        [
            ("trivial_bound", self.trivial_bound),
            ("energy_bound", self.energy_bound),
            ("triangle_aba", self.triangle_aba),
            ("triangle_bab", self.triangle_bab),
            ("sum_difference", self.sum_difference),
            ("doubling_lower", self.doubling_lower),
            ("doubling_upper", self.doubling_upper),
        ]
    }

    pub fn min_slack(&self) -> f64 {
        self.slacks().iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min)
    }
}

fn ln(x: impl Into<f64>) -> f64 {
    x.into().ln()
}

fn lnu(x: u64) -> f64 {
    (x as f64).ln()
}

/// `log |A-C| <= log |A-B| + log |B-C| - log |B|` as a slack.
pub fn ruzsa_triangle_slack(a: &FiniteSet, b: &FiniteSet, c: &FiniteSet) -> Result<f64> {
    let ac = combined_size(a, c, BinOp::Sub)?;
    let ab = combined_size(a, b, BinOp::Sub)?;
    let bc = combined_size(b, c, BinOp::Sub)?;
    Ok(lnu(ab) + lnu(bc) - lnu(b.len() as u64) - lnu(ac))
}

pub fn set_checks(a: &FiniteSet, b: &FiniteSet) -> Result<SetReport> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sums = count(a, b, BinOp::Add)?;
    let diff = combined_size(a, b, BinOp::Sub)?;
    let aa_diff = combined_size(a, a, BinOp::Sub)?;
    let aa_sum = combined_size(a, a, BinOp::Add)?;
    let bb_diff = combined_size(b, b, BinOp::Sub)?;
    let ba_diff = combined_size(b, a, BinOp::Sub)?;

    // d(A,A) and d(A,-A) as logarithmic cardinality ratios
    let d_aa = lnu(aa_diff) - ln(na);
    let d_a_nega = lnu(aa_sum) - ln(na);
    let energy_bound: CompensatedSum = [ln(sums.squares as f64), lnu(sums.size), -2.0 * ln(na), -2.0 * ln(nb)].into_iter().collect();
    Ok(SetReport {
        sum_size: sums.size,
        diff_size: diff,
        energy: sums.squares,
        trivial_bound: lnu(sums.size) - ln(na.max(nb)),
        energy_bound: energy_bound.value(),
        triangle_aba: lnu(diff) + lnu(ba_diff) - ln(nb) - lnu(aa_diff),
        triangle_bab: lnu(ba_diff) + lnu(diff) - ln(na) - lnu(bb_diff),
        sum_difference: 3.0 * lnu(diff) - ln(na) - ln(nb) - lnu(sums.size),
        doubling_lower: d_a_nega - 0.5 * d_aa,
        doubling_upper: 2.0 * d_aa - d_a_nega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sumsets() {
        let a = FiniteSet::from_ints(0..3);
        assert_eq!(set_combine(&a, &a, BinOp::Add).unwrap(), FiniteSet::from_ints(0..5));
        assert_eq!(set_combine(&a, &FiniteSet::from_ints([0]), BinOp::Add).unwrap(), a);
        let p = FiniteSet::from_ints([1, 2, 4, 8]);
        let prod = set_combine(&p, &p, BinOp::Mul).unwrap();
        assert_eq!(prod, FiniteSet::from_ints([1, 2, 4, 8, 16, 32, 64]));
        assert_eq!(combined_size(&p, &p, BinOp::Mul).unwrap(), 7);
    }

    #[test]
    fn energies() {
        assert_eq!(set_energy(&FiniteSet::from_ints([0, 1]), &FiniteSet::from_ints([0, 1])).unwrap(), 6);
        let s = FiniteSet::from_ints([1, 2, 4, 8]);
        assert_eq!(set_energy(&s, &s).unwrap(), 28);
        let t = FiniteSet::from_ints(0..3);
        assert_eq!(set_energy(&t, &t).unwrap(), 19);
    }

    #[test]
    fn checks_on_small_sets() {
        let a = FiniteSet::from_ints([0, 1]);
        let r = set_checks(&a, &a).unwrap();
        assert_eq!(r.energy, 6);
        assert!(r.energy_bound > 0.0 && (r.energy_bound - (6.0f64 * 3.0 / 16.0).ln()).abs() < 1e-12);
        let one = FiniteSet::from_ints([5]);
        let r = set_checks(&one, &one).unwrap();
        assert!(r.slacks().iter().all(|(_, s)| s.abs() < 1e-12));
    }

    #[test]
    fn text_round_trip() {
        let s = FiniteSet::parse_text("# a set\n3\n-1\n3\n").unwrap();
        assert_eq!(s, FiniteSet::from_ints([-1, 3]));
        assert_eq!(FiniteSet::parse_text(&s.to_text()).unwrap(), s);
        let m = FiniteSet::parse_text("@group zmod 5\n7\n1\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(FiniteSet::parse_text(&m.to_text()).unwrap(), m);
    }
}
