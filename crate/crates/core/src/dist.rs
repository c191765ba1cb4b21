//! Exact finitely supported distributions.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::numeric::{gcd_u128, EntropyAccumulator};
use crate::value::{parse_value, Family, GroupValue};

/// Default cap on the number of atoms any construction may produce.
pub const DEFAULT_SUPPORT_CAP: usize = 50_000_000;

/// An exact probability in `(0, 1]`, stored reduced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Prob {
    num: u128,
    den: u128,
}

impl Prob {
    pub fn new(num: u128, den: u128) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::InvalidArgument(format!("{num}/{den} is not a probability in (0,1]")));
        }
        let g = gcd_u128(num, den);
        Ok(Prob { num: num / g, den: den / g })
    }

    pub fn one() -> Self {
        Prob { num: 1, den: 1 }
    }

    pub fn num(&self) -> u128 {
        self.num
    }

    pub fn den(&self) -> u128 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(self.den))
    }
}

impl PartialOrd for Prob {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Prob {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        match (self.num.checked_mul(o.den), o.num.checked_mul(self.den)) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => self.to_rational().cmp(&o.to_rational()),
        }
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// A probability distribution with finite support and exact rational masses.
///
/// Atoms are kept sorted by value with positive integer weights over a
/// common denominator; the weights sum to the denominator and share no
/// common factor with it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteDist {
    atoms: Vec<(GroupValue, u128)>,
    denom: u128,
}

impl FiniteDist {
    /// Build from unnormalized integer weights; duplicates merge and zeros drop.
    pub fn from_weights(items: Vec<(GroupValue, u128)>) -> Result<Self> {
        let mut items: Vec<_> = items.into_iter().filter(|(_, w)| *w > 0).collect();
        if items.is_empty() {
            return Err(Error::InvalidArgument("distribution has empty support".into()));
        }
        let fam = items[0].0.family();
        if let Some((v, _)) = items.iter().find(|(v, _)| v.family() != fam) {
            return Err(Error::MixedGroup(items[0].0.to_string(), v.to_string()));
        }
        items.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(GroupValue, u128)> = Vec::with_capacity(items.len());
        for (v, w) in items {
            match merged.last_mut() {
                Some((lv, lw)) if *lv == v => *lw = lw.checked_add(w).ok_or(Error::PrecisionOverflow)?,
                _ => merged.push((v, w)),
            }
        }
        Self::from_sorted_weights(merged)
    }

    /// Build from atoms already sorted, distinct and positive.
    pub(crate) fn from_sorted_weights(mut atoms: Vec<(GroupValue, u128)>) -> Result<Self> {
        let mut denom: u128 = 0;
        let mut g: u128 = 0;
        for (_, w) in &atoms {
            denom = denom.checked_add(*w).ok_or(Error::PrecisionOverflow)?;
            if g != 1 {
                g = gcd_u128(g, *w);
            }
        }
        if g > 1 {
            for (_, w) in atoms.iter_mut() {
                *w /= g;
            }
            denom /= g;
        }
        Ok(FiniteDist { atoms, denom })
    }

    /// Build from exact probabilities that must sum to exactly one.
    pub fn from_probs(items: Vec<(GroupValue, Prob)>) -> Result<Self> {
        let mut total = BigRational::zero();
        let mut lcm = BigInt::from(1u8);
        for (_, p) in &items {
            total += p.to_rational();
            lcm = num_integer::lcm(lcm, BigInt::from(p.den()));
        }
        let one = BigRational::from_integer(BigInt::from(1u8));
        if total != one {
            return Err(Error::NotNormalized { residual: (total - one).to_string() });
        }
        let l = lcm.to_u128().ok_or(Error::PrecisionOverflow)?;
        let weights = items.into_iter().map(|(v, p)| (v, p.num() * (l / p.den()))).collect();
        Self::from_weights(weights)
    }

    pub fn point(v: GroupValue) -> Self {
        FiniteDist { atoms: vec![(v, 1)], denom: 1 }
    }

    pub fn uniform(values: Vec<GroupValue>) -> Result<Self> {
        Self::from_weights(values.into_iter().map(|v| (v, 1)).collect())
    }

    pub fn uniform_ints(values: impl IntoIterator<Item = i64>) -> Self {
        Self::uniform(values.into_iter().map(GroupValue::int).collect()).expect("nonempty integer support")
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn denom(&self) -> u128 {
        self.denom
    }

    pub fn weighted_atoms(&self) -> &[(GroupValue, u128)] {
        &self.atoms
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&GroupValue, Prob)> + '_ {
        self.atoms.iter().map(move |(v, w)| (v, Prob::new(*w, self.denom).expect("valid atom")))
    }

    pub fn support(&self) -> impl Iterator<Item = &GroupValue> + '_ {
        self.atoms.iter().map(|(v, _)| v)
    }

    pub fn family(&self) -> Family {
        self.atoms[0].0.family()
    }

    pub fn prob(&self, v: &GroupValue) -> Option<Prob> {
        self.atoms
            .binary_search_by(|(a, _)| a.cmp(v))
            .ok()
            .map(|i| Prob::new(self.atoms[i].1, self.denom).expect("valid atom"))
    }

    /// Weight of `v` over `denom()`, zero when outside the support.
    pub fn weight(&self, v: &GroupValue) -> u128 {
        self.atoms.binary_search_by(|(a, _)| a.cmp(v)).map(|i| self.atoms[i].1).unwrap_or(0)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        let mut acc = EntropyAccumulator::new(self.denom);
        for (_, w) in &self.atoms {
            acc.push(*w);
        }
        acc.entropy()
    }

    /// Pushforward under a value map.
    pub fn map(&self, f: impl Fn(&GroupValue) -> Result<GroupValue>) -> Result<Self> {
        let items = self.atoms.iter().map(|(v, w)| Ok((f(v)?, *w))).collect::<Result<Vec<_>>>()?;
        Self::from_weights(items)
    }

    pub fn neg(&self) -> Self {
        self.map(|v| Ok(v.neg())).expect("negation is total")
    }

    /// `Σ P(a)²` as a float.
    pub fn collision(&self) -> f64 {
        let d = self.denom as f64;
        self.atoms.iter().map(|(_, w)| (*w as f64 / d).powi(2)).sum()
    }

    /// Exact `Σ P(a)²`.
    pub fn collision_exact(&self) -> BigRational {
        let num: BigInt = self.atoms.iter().map(|(_, w)| BigInt::from(*w) * BigInt::from(*w)).sum();
        BigRational::new(num, BigInt::from(self.denom) * BigInt::from(self.denom))
    }

    pub fn max_prob(&self) -> Prob {
        let w = self.atoms.iter().map(|(_, w)| *w).max().expect("nonempty");
        Prob::new(w, self.denom).expect("valid atom")
    }

    pub fn min_prob(&self) -> Prob {
        let w = self.atoms.iter().map(|(_, w)| *w).min().expect("nonempty");
        Prob::new(w, self.denom).expect("valid atom")
    }

    /// `E log|X|` for real-valued distributions; `None` if zero is an atom.
    pub fn e_log_abs(&self) -> Option<f64> {
        let d = self.denom as f64;
        let mut s = crate::numeric::CompensatedSum::new();
        for (v, w) in &self.atoms {
            s.add(*w as f64 / d * v.ln_abs()?);
        }
        Some(s.value())
    }

    /// Parse the distribution text format.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut family = None;
        let mut items = Vec::new();
        let mut total = BigRational::zero();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('@') {
                if !items.is_empty() || family.is_some() {
                    return Err(Error::Format { line: line_no, message: "header must come first".into() });
                }
                family = Some(parse_header(h).map_err(|m| Error::Format { line: line_no, message: m })?);
                continue;
            }
            let split = line.rfind(char::is_whitespace).ok_or_else(|| Error::Format {
                line: line_no,
                message: "expected `<value> <num>/<den>`".into(),
            })?;
            let (vtxt, ptxt) = (&line[..split], line[split..].trim());
            let v = parse_value(vtxt, family).map_err(|e| Error::Format { line: line_no, message: e.to_string() })?;
            let p = parse_prob(ptxt).map_err(|m| Error::Format { line: line_no, message: m })?;
            total += p.to_rational();
            items.push((v, p));
        }
        if items.is_empty() {
            return Err(Error::Format { line: 0, message: "no atoms".into() });
        }
        let one = BigRational::from_integer(BigInt::from(1u8));
        if total != one {
            return Err(Error::NotNormalized { residual: (total - one).to_string() });
        }
        Self::from_probs(items)
    }

    /// Render in the distribution text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.family() {
            Family::Rational => {}
            f => out.push_str(&format!("@group {f}\n")),
        }
        for (v, p) in self.atoms() {
            out.push_str(&format!("{v} {p}\n"));
        }
        out
    }
}

pub(crate) fn parse_header(h: &str) -> std::result::Result<Family, String> {
    let parts: Vec<&str> = h.split_whitespace().collect();
    match parts.as_slice() {
        ["group", "int"] => Ok(Family::Rational),
        ["group", "intvec", d] => d.parse().map(Family::Vector).map_err(|_| format!("bad dimension `{d}`")),
        ["group", "zmod", m] => match m.parse::<u64>() {
            Ok(m) if m >= 2 => Ok(Family::Modular(m)),
            _ => Err(format!("bad modulus `{m}`")),
        },
        _ => Err(format!("unknown header `@{h}`")),
    }
}

fn parse_prob(t: &str) -> std::result::Result<Prob, String> {
    let (n, d) = t.split_once('/').unwrap_or((t, "1"));
    let n: u128 = n.trim().parse().map_err(|_| format!("bad probability `{t}`"))?;
    let d: u128 = d.trim().parse().map_err(|_| format!("bad probability `{t}`"))?;
    Prob::new(n, d).map_err(|e| e.to_string())
}

/// Group atoms by a key, summing weights; used by marginals and pushforwards.
pub(crate) fn accumulate<K: std::hash::Hash + Eq>(
    items: impl Iterator<Item = (K, u128)>,
) -> Result<FxHashMap<K, u128>> {
    let mut map: FxHashMap<K, u128> = FxHashMap::default();
    for (k, w) in items {
        let e = map.entry(k).or_insert(0);
        *e = e.checked_add(w).ok_or(Error::PrecisionOverflow)?;
    }
    Ok(map)
}
