//! Group and ring values: integers, rationals, integer vectors and residues.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer as _;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};

use crate::error::{Error, Result};

/// Arbitrary-precision integer kept inline while it fits in an `i64`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Integer {
    Small(i64),
    Big(Box<BigInt>),
}

impl Integer {
    pub fn from_big(b: BigInt) -> Self {
        match b.to_i64() {
            Some(v) => Integer::Small(v),
            None => Integer::Big(Box::new(b)),
        }
    }

    pub fn to_big(&self) -> BigInt {
        match self {
            Integer::Small(v) => BigInt::from(*v),
            Integer::Big(b) => (**b).clone(),
        }
    }

    pub fn as_small(&self) -> Option<i64> {
        match self {
            Integer::Small(v) => Some(*v),
            Integer::Big(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Integer::Small(0))
    }

    pub fn signum(&self) -> i32 {
        match self {
            Integer::Small(v) => v.signum() as i32,
            Integer::Big(b) => {
                if b.is_negative() {
                    -1
                } else {
                    1
                }
            }
        }
    }

    pub fn add(&self, o: &Integer) -> Integer {
        if let (Integer::Small(a), Integer::Small(b)) = (self, o) {
            if let Some(s) = a.checked_add(*b) {
                return Integer::Small(s);
            }
        }
        Integer::from_big(self.to_big() + o.to_big())
    }

    pub fn sub(&self, o: &Integer) -> Integer {
        if let (Integer::Small(a), Integer::Small(b)) = (self, o) {
            if let Some(s) = a.checked_sub(*b) {
                return Integer::Small(s);
            }
        }
        Integer::from_big(self.to_big() - o.to_big())
    }

    pub fn mul(&self, o: &Integer) -> Integer {
        if let (Integer::Small(a), Integer::Small(b)) = (self, o) {
            if let Some(s) = a.checked_mul(*b) {
                return Integer::Small(s);
            }
        }
        Integer::from_big(self.to_big() * o.to_big())
    }

    pub fn neg(&self) -> Integer {
        if let Integer::Small(a) = self {
            if let Some(s) = a.checked_neg() {
                return Integer::Small(s);
            }
        }
        Integer::from_big(-self.to_big())
    }

    /// Natural log of the absolute value; `None` at zero.
    pub fn ln_abs(&self) -> Option<f64> {
        match self {
            Integer::Small(0) => None,
            Integer::Small(v) => Some((v.unsigned_abs() as f64).ln()),
            Integer::Big(b) => Some(big_ln_abs(b)),
        }
    }

    /// Residue in `[0, m)`.
    pub fn rem_euclid_u64(&self, m: u64) -> u64 {
        match self {
            Integer::Small(v) => (*v as i128).rem_euclid(m as i128) as u64,
            Integer::Big(b) => b.mod_floor(&BigInt::from(m)).to_u64().unwrap_or(0),
        }
    }
}

fn big_ln_abs(b: &BigInt) -> f64 {
    let mag = b.magnitude();
    let bits = mag.bits();
    if bits <= 960 {
        return mag.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    let top = (mag >> shift).to_f64().unwrap_or(1.0);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

impl Ord for Integer {
    fn cmp(&self, o: &Self) -> Ordering {
        match (self, o) {
            (Integer::Small(a), Integer::Small(b)) => a.cmp(b),
            (Integer::Small(_), Integer::Big(b)) => {
                if b.is_negative() {
                    Ordering::Greater
                } else {
                    Ordering::Less
                }
            }
            (Integer::Big(a), Integer::Small(_)) => {
                if a.is_negative() {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
            (Integer::Big(a), Integer::Big(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for Integer {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for Integer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Integer::Small(v) => write!(f, "{v}"),
            Integer::Big(b) => write!(f, "{b}"),
        }
    }
}

impl From<i64> for Integer {
    fn from(v: i64) -> Self {
        Integer::Small(v)
    }
}

impl std::str::FromStr for Integer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(v) = t.parse::<i64>() {
            return Ok(Integer::Small(v));
        }
        t.parse::<BigInt>()
            .map(Integer::from_big)
            .map_err(|_| Error::InvalidArgument(format!("not an integer: `{t}`")))
    }
}

/// Binary operations available in random-variable expressions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }
}

/// Which group a value lives in; values of different families never mix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// ℤ embedded in ℚ (quotients of integers leave ℤ).
    Rational,
    Vector(usize),
    Modular(u64),
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Rational => write!(f, "int"),
            Family::Vector(d) => write!(f, "intvec {d}"),
            Family::Modular(m) => write!(f, "zmod {m}"),
        }
    }
}

/// A value in ℤ (or ℚ), ℤᵈ, or ℤ_m, in canonical form.
///
/// `Rat` only ever holds non-integral rationals, so equality and hashing are structural.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GroupValue {
    Int(Integer),
    Rat(Box<BigRational>),
    IntVec(Box<[Integer]>),
    IntMod { res: u64, m: u64 },
}

impl GroupValue {
    pub fn int(v: i64) -> Self {
        GroupValue::Int(Integer::Small(v))
    }

    pub fn big(b: BigInt) -> Self {
        GroupValue::Int(Integer::from_big(b))
    }

    pub fn modular(v: i64, m: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("modulus {m} must be at least 2")));
        }
        Ok(GroupValue::IntMod { res: (v as i128).rem_euclid(m as i128) as u64, m })
    }

    pub fn vector(items: Vec<i64>) -> Self {
        GroupValue::IntVec(items.into_iter().map(Integer::Small).collect())
    }

    pub fn from_rational(q: BigRational) -> Self {
        if q.denom().is_one() {
            GroupValue::Int(Integer::from_big(q.numer().clone()))
        } else {
            GroupValue::Rat(Box::new(q))
        }
    }

    pub fn family(&self) -> Family {
        match self {
            GroupValue::Int(_) | GroupValue::Rat(_) => Family::Rational,
            GroupValue::IntVec(v) => Family::Vector(v.len()),
            GroupValue::IntMod { m, .. } => Family::Modular(*m),
        }
    }

    pub fn as_small_int(&self) -> Option<i64> {
        match self {
            GroupValue::Int(Integer::Small(v)) => Some(*v),
            _ => None,
        }
    }

    fn to_rational(&self) -> Option<BigRational> {
        match self {
            GroupValue::Int(i) => Some(BigRational::from_integer(i.to_big())),
            GroupValue::Rat(q) => Some((**q).clone()),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            GroupValue::Int(i) => i.is_zero(),
            GroupValue::Rat(_) => false,
            GroupValue::IntVec(v) => v.iter().all(Integer::is_zero),
            GroupValue::IntMod { res, .. } => *res == 0,
        }
    }

    /// Whether the value has a multiplicative inverse (ℚ^× for the rational family).
    pub fn is_unit(&self) -> bool {
        match self {
            GroupValue::Int(i) => !i.is_zero(),
            GroupValue::Rat(_) => true,
            GroupValue::IntVec(_) => false,
            GroupValue::IntMod { res, m } => gcd_u64(*res, *m) == 1,
        }
    }

    /// `ln |x|` for real values; `None` at zero or for non-real families.
    pub fn ln_abs(&self) -> Option<f64> {
        match self {
            GroupValue::Int(i) => i.ln_abs(),
            GroupValue::Rat(q) => {
                let n = Integer::from_big(q.numer().clone()).ln_abs()?;
                let d = Integer::from_big(q.denom().clone()).ln_abs()?;
                Some(n - d)
            }
            _ => None,
        }
    }

    fn mixed(&self, o: &GroupValue) -> Error {
        Error::MixedGroup(format!("{} ({})", self, self.family()), format!("{} ({})", o, o.family()))
    }

    pub fn neg(&self) -> GroupValue {
        match self {
            GroupValue::Int(i) => GroupValue::Int(i.neg()),
            GroupValue::Rat(q) => GroupValue::Rat(Box::new(-(**q).clone())),
            GroupValue::IntVec(v) => GroupValue::IntVec(v.iter().map(Integer::neg).collect()),
            GroupValue::IntMod { res, m } => GroupValue::IntMod { res: (m - res) % m, m: *m },
        }
    }

    pub fn apply(&self, op: BinOp, o: &GroupValue) -> Result<GroupValue> {
        match op {
            BinOp::Add => self.add(o),
            BinOp::Sub => self.sub(o),
            BinOp::Mul => self.mul(o),
            BinOp::Div => self.div(o),
        }
    }

    pub fn add(&self, o: &GroupValue) -> Result<GroupValue> {
        match (self, o) {
            (GroupValue::Int(a), GroupValue::Int(b)) => Ok(GroupValue::Int(a.add(b))),
            (GroupValue::IntMod { res: a, m }, GroupValue::IntMod { res: b, m: m2 }) if m == m2 => {
                Ok(GroupValue::IntMod { res: ((*a as u128 + *b as u128) % *m as u128) as u64, m: *m })
            }
            (GroupValue::IntVec(a), GroupValue::IntVec(b)) if a.len() == b.len() => {
                Ok(GroupValue::IntVec(a.iter().zip(b.iter()).map(|(x, y)| x.add(y)).collect()))
            }
            _ => self.rational_op(o, |x, y| x + y),
        }
    }

    pub fn sub(&self, o: &GroupValue) -> Result<GroupValue> {
        match (self, o) {
            (GroupValue::Int(a), GroupValue::Int(b)) => Ok(GroupValue::Int(a.sub(b))),
            (GroupValue::IntMod { res: a, m }, GroupValue::IntMod { res: b, m: m2 }) if m == m2 => {
                Ok(GroupValue::IntMod { res: ((*a as u128 + (*m - *b) as u128) % *m as u128) as u64, m: *m })
            }
            (GroupValue::IntVec(a), GroupValue::IntVec(b)) if a.len() == b.len() => {
                Ok(GroupValue::IntVec(a.iter().zip(b.iter()).map(|(x, y)| x.sub(y)).collect()))
            }
            _ => self.rational_op(o, |x, y| x - y),
        }
    }

    pub fn mul(&self, o: &GroupValue) -> Result<GroupValue> {
        match (self, o) {
            (GroupValue::Int(a), GroupValue::Int(b)) => Ok(GroupValue::Int(a.mul(b))),
            (GroupValue::IntMod { res: a, m }, GroupValue::IntMod { res: b, m: m2 }) if m == m2 => {
                Ok(GroupValue::IntMod { res: ((*a as u128 * *b as u128) % *m as u128) as u64, m: *m })
            }
            (GroupValue::IntVec(_), GroupValue::IntVec(_)) if self.family() == o.family() => {
                Err(Error::UnsupportedOperation { op: "mul", family: "intvec" })
            }
            _ => self.rational_op(o, |x, y| x * y),
        }
    }

    pub fn div(&self, o: &GroupValue) -> Result<GroupValue> {
        if self.family() != o.family() {
            return Err(self.mixed(o));
        }
        match (self, o) {
            (GroupValue::IntMod { res: a, m }, GroupValue::IntMod { res: b, .. }) => {
                let inv = mod_inverse(*b, *m).ok_or_else(|| Error::NonInvertibleDivisor(o.to_string()))?;
                Ok(GroupValue::IntMod { res: ((*a as u128 * inv as u128) % *m as u128) as u64, m: *m })
            }
            (GroupValue::IntVec(_), _) => Err(Error::UnsupportedOperation { op: "div", family: "intvec" }),
            _ => {
                if o.is_zero() {
                    return Err(Error::NonInvertibleDivisor(o.to_string()));
                }
                if let (GroupValue::Int(Integer::Small(a)), GroupValue::Int(Integer::Small(b))) = (self, o) {
                    if a % b == 0 {
                        if let Some(q) = a.checked_div(*b) {
                            return Ok(GroupValue::int(q));
                        }
                    }
                }
                self.rational_op(o, |x, y| x / y)
            }
        }
    }

    fn rational_op(&self, o: &GroupValue, f: impl Fn(BigRational, BigRational) -> BigRational) -> Result<GroupValue> {
        match (self.to_rational(), o.to_rational()) {
            (Some(a), Some(b)) => Ok(GroupValue::from_rational(f(a, b))),
            _ => Err(self.mixed(o)),
        }
    }

    /// An integer literal read in the group of `like`.
    pub fn coerce_literal(lit: &Integer, like: &GroupValue) -> Result<GroupValue> {
        match like {
            GroupValue::Int(_) | GroupValue::Rat(_) => Ok(GroupValue::Int(lit.clone())),
            GroupValue::IntMod { m, .. } => Ok(GroupValue::IntMod { res: lit.rem_euclid_u64(*m), m: *m }),
            GroupValue::IntVec(_) => Err(Error::MixedGroup(lit.to_string(), like.to_string())),
        }
    }

    /// `lit op self`, with scalar multiplication allowed on vectors.
    pub fn apply_literal_left(lit: &Integer, op: BinOp, v: &GroupValue) -> Result<GroupValue> {
        if let (BinOp::Mul, GroupValue::IntVec(items)) = (op, v) {
            return Ok(GroupValue::IntVec(items.iter().map(|x| lit.mul(x)).collect()));
        }
        GroupValue::coerce_literal(lit, v)?.apply(op, v)
    }

    /// `self op lit`, with scalar multiplication allowed on vectors.
    pub fn apply_literal_right(&self, op: BinOp, lit: &Integer) -> Result<GroupValue> {
        if let (BinOp::Mul, GroupValue::IntVec(items)) = (op, self) {
            return Ok(GroupValue::IntVec(items.iter().map(|x| x.mul(lit)).collect()));
        }
        self.apply(op, &GroupValue::coerce_literal(lit, self)?)
    }

    fn family_rank(&self) -> u8 {
        match self {
            GroupValue::Int(_) | GroupValue::Rat(_) => 0,
            GroupValue::IntVec(_) => 1,
            GroupValue::IntMod { .. } => 2,
        }
    }
}

impl Ord for GroupValue {
    fn cmp(&self, o: &Self) -> Ordering {
        match (self, o) {
            (GroupValue::Int(a), GroupValue::Int(b)) => a.cmp(b),
            (GroupValue::Int(_) | GroupValue::Rat(_), GroupValue::Int(_) | GroupValue::Rat(_)) => {
                self.to_rational().cmp(&o.to_rational())
            }
            (GroupValue::IntVec(a), GroupValue::IntVec(b)) => a.len().cmp(&b.len()).then_with(|| a.cmp(b)),
            (GroupValue::IntMod { res: a, m }, GroupValue::IntMod { res: b, m: m2 }) => m.cmp(m2).then(a.cmp(b)),
            _ => self.family_rank().cmp(&o.family_rank()),
        }
    }
}

impl PartialOrd for GroupValue {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for GroupValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupValue::Int(i) => write!(f, "{i}"),
            GroupValue::Rat(q) => write!(f, "{}/{}", q.numer(), q.denom()),
            GroupValue::IntVec(v) => {
                write!(f, "(")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
            GroupValue::IntMod { res, .. } => write!(f, "{res}"),
        }
    }
}

pub(crate) fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// Inverse of `a` modulo `m` by the extended Euclidean algorithm.
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    let (mut r0, mut r1) = (a as i128 % m as i128, m as i128);
    let (mut s0, mut s1) = (1i128, 0i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    if r0 != 1 {
        return None;
    }
    Some(s0.rem_euclid(m as i128) as u64)
}

/// Parse one value in the distribution text syntax: `12`, `-3`, `7/2`, `(1,-2)`.
pub fn parse_value(text: &str, family: Option<Family>) -> Result<GroupValue> {
    let t = text.trim();
    if let Some(inner) = t.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        let items = inner
            .split(',')
            .map(|p| p.parse::<Integer>())
            .collect::<Result<Vec<_>>>()?;
        if let Some(Family::Vector(d)) = family {
            if d != items.len() {
                return Err(Error::InvalidArgument(format!("expected {d} coordinates in `{t}`")));
            }
        }
        return Ok(GroupValue::IntVec(items.into_boxed_slice()));
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: Integer = n.parse()?;
        let d: Integer = d.parse()?;
        if d.is_zero() {
            return Err(Error::InvalidArgument(format!("zero denominator in `{t}`")));
        }
        return Ok(GroupValue::from_rational(BigRational::new(n.to_big(), d.to_big())));
    }
    let i: Integer = t.parse()?;
    match family {
        Some(Family::Modular(m)) => Ok(GroupValue::IntMod { res: i.rem_euclid_u64(m), m }),
        Some(Family::Vector(_)) => Err(Error::InvalidArgument(format!("expected a tuple, got `{t}`"))),
        _ => Ok(GroupValue::Int(i)),
    }
}

pub fn pow_big(base: u64, exp: u32) -> BigInt {
    num_traits::pow(BigInt::from(base), exp as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_overflow_promotes() {
        let a = Integer::Small(i64::MAX);
        let s = a.add(&Integer::Small(1));
        assert!(matches!(s, Integer::Big(_)));
        assert_eq!(s.sub(&Integer::Small(1)), a);
    }

    #[test]
    fn integer_quotient_canonical() {
        let q = GroupValue::int(6).div(&GroupValue::int(3)).unwrap();
        assert_eq!(q, GroupValue::int(2));
        let h = GroupValue::int(1).div(&GroupValue::int(2)).unwrap();
        assert!(matches!(h, GroupValue::Rat(_)));
        assert_eq!(h.mul(&GroupValue::int(2)).unwrap(), GroupValue::int(1));
    }

    #[test]
    fn modular_inverse() {
        assert_eq!(mod_inverse(3, 7), Some(5));
        assert_eq!(mod_inverse(4, 12), None);
        let v = GroupValue::modular(3, 7).unwrap();
        assert_eq!(GroupValue::modular(1, 7).unwrap().div(&v).unwrap(), GroupValue::modular(5, 7).unwrap());
        assert!(matches!(
            GroupValue::modular(1, 12).unwrap().div(&GroupValue::modular(4, 12).unwrap()),
            Err(Error::NonInvertibleDivisor(_))
        ));
    }

    #[test]
    fn mixing_is_rejected() {
        let a = GroupValue::int(1);
        let b = GroupValue::modular(1, 5).unwrap();
        assert!(matches!(a.add(&b), Err(Error::MixedGroup(..))));
        assert!(matches!(
            GroupValue::modular(1, 5).unwrap().add(&GroupValue::modular(1, 7).unwrap()),
            Err(Error::MixedGroup(..))
        ));
    }

    #[test]
    fn ordering_mixes_int_and_rat() {
        let h = GroupValue::int(1).div(&GroupValue::int(2)).unwrap();
        assert!(GroupValue::int(0) < h && h < GroupValue::int(1));
    }

    #[test]
    fn big_log() {
        let v = Integer::from_big(pow_big(4, 600));
        let expect = 1200.0 * std::f64::consts::LN_2;
        assert!((v.ln_abs().unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_value("(1,-2)", None).unwrap(), GroupValue::vector(vec![1, -2]));
        assert_eq!(parse_value("9", Some(Family::Modular(7))).unwrap(), GroupValue::modular(2, 7).unwrap());
        assert_eq!(parse_value("4/2", None).unwrap(), GroupValue::int(2));
    }
}
