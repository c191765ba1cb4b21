//! Exact builders for the extremal example distributions.

use num_bigint::BigInt;
use rustc_hash::FxHashSet;
use serde::Serialize;

use crate::conv::entropy_of_combination;
use crate::dist::{FiniteDist, Prob};
use crate::error::{Error, Result};
use crate::functionals::{max_sidon_subset_prob, sidon_violations};
use crate::numeric::CompensatedSum;
use crate::setcalc::FiniteSet;
use crate::value::{pow_big, BinOp, GroupValue};

/// `0` with probability `1/3`, otherwise uniform on `{1..n}`.
pub fn build_zero_inflated(n: u64) -> Result<FiniteDist> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("zero-inflated uniform needs n >= 2, got {n}")));
    }
    let n128 = n as u128;
    let mut items = vec![(GroupValue::int(0), n128)];
    items.extend((1..=n).map(|i| (GroupValue::int(i as i64), 2)));
    FiniteDist::from_weights(items)
}

/// Entropies of a law and of its self-sum and self-product.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SumProductRow {
    pub n: u64,
    pub h: f64,
    pub h_sum: f64,
    pub h_product: f64,
    /// `max(h_sum, h_product) / h`.
    pub ratio: f64,
}

pub fn sum_product_row(n: u64, d: &FiniteDist) -> Result<SumProductRow> {
    let h = d.entropy();
    let (h_sum, _) = entropy_of_combination(d, d, BinOp::Add)?;
    let (h_product, _) = entropy_of_combination(d, d, BinOp::Mul)?;
    Ok(SumProductRow { n, h, h_sum, h_product, ratio: h_sum.max(h_product) / h })
}

/// `{1..n}` together with a set `B` in general position, and the uniform law on the union.
#[derive(Clone, Debug)]
pub struct GenericAugmented {
    pub n: u64,
    pub eps: f64,
    /// The added elements `2n·4^i`.
    pub extra: Vec<BigInt>,
    pub set: FiniteSet,
    pub dist: FiniteDist,
    /// Exact `|A+A|`.
    pub sumset_size: u64,
}

/// Builds `A = {1..n} ∪ B` with `|B| = ⌈n^(1-eps/2)⌉` and checks general position exactly:
/// every pairwise sum that involves `B` occurs for a single unordered pair of `A`.
pub fn build_generic_augmented(n: u64, eps: f64) -> Result<GenericAugmented> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!("generic augmentation needs n >= 16, got {n}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
    }
    let k = (n as f64).powf(1.0 - eps / 2.0).ceil() as u32;
    let base = BigInt::from(2 * n);
    let extra: Vec<BigInt> = (0..k).map(|i| &base * pow_big(4, i)).collect();
    let small_max = BigInt::from(2 * n);
    let mut sums: FxHashSet<BigInt> = FxHashSet::default();
    let mut pairs = 0u64;
    for (i, b) in extra.iter().enumerate() {
        let candidates = (1..=n).map(BigInt::from).chain(extra[..=i].iter().cloned());
        for a in candidates {
            let s = b + a;
            pairs += 1;
            if s <= small_max {
                return Err(Error::GenericityCheckFailed(format!("{s} is also a sum of two elements of 1..{n}")));
            }
            if !sums.insert(s.clone()) {
                return Err(Error::GenericityCheckFailed(format!("sum {s} has two representations")));
            }
        }
    }
    let sumset_size = 2 * n - 1 + pairs;
    let values: Vec<GroupValue> =
        (1..=n as i64).map(GroupValue::int).chain(extra.iter().cloned().map(GroupValue::big)).collect();
    let set = FiniteSet::new(values.clone())?;
    if set.len() as u64 != n + k as u64 {
        return Err(Error::GenericityCheckFailed("added elements overlap 1..n".into()));
    }
    let dist = FiniteDist::uniform(values)?;
    Ok(GenericAugmented { n, eps, extra, set, dist, sumset_size })
}

impl GenericAugmented {
    /// Exact `H(U+U')`, using the verified sum multiplicities: sums inside `{1..n}`
    /// follow the triangular count, every other sum has one unordered representation.
    pub fn sum_entropy(&self) -> f64 {
        let total = (self.set.len() as f64).powi(2);
        let term = |c: f64| {
            let p = c / total;
            -p * p.ln()
        };
        let mut h = CompensatedSum::new();
        let n = self.n;
        for s in 2..=2 * n {
            h.add(term(s.min(2 * n + 2 - s) as f64 - 1.0));
        }
        let k = self.extra.len() as u64;
        let distinct_pairs = k * n + k * (k - 1) / 2;
        h.add(distinct_pairs as f64 * term(2.0));
        h.add(k as f64 * term(1.0));
        h.value()
    }
}

/// Uniform law on a Sidon-type example set.
///
/// Variant 1: `N` elements with exactly one nontrivial relation `a+b = c+d`, all four distinct
/// (powers of four plus `19 = 4 + 16 - 1`, needs `N >= 4`).
/// Variant 2: `{10^k, 2·10^k, 4·10^k, 5·10^k : k < N}`.
pub fn build_sidon_example(n: u32, variant: u8) -> Result<FiniteDist> {
    let fail = |m: String| Error::ConstructionCheckFailed(m);
    let values: Vec<GroupValue> = match variant {
        1 => {
            if n < 4 {
                return Err(fail(format!("a single violation with four distinct elements needs N >= 4, got {n}")));
            }
            let mut v: Vec<GroupValue> = (0..n - 1).map(|i| GroupValue::big(pow_big(4, i))).collect();
            v.push(GroupValue::int(19));
            v
        }
        2 => {
            if n == 0 {
                return Err(fail("N must be positive".into()));
            }
            (0..n)
                .flat_map(|k| {
                    let p = pow_big(10, k);
                    [1, 2, 4, 5].map(|c| GroupValue::big(&p * c))
                })
                .collect()
        }
        _ => return Err(Error::InvalidArgument(format!("unknown Sidon example variant {variant}"))),
    };
    let d = FiniteDist::uniform(values.clone())?;
    if d.len() != values.len() {
        return Err(fail("example elements are not distinct".into()));
    }
    let violations = sidon_violations(&values)?;
    let expected = if variant == 1 { 1 } else { n as usize };
    if violations.len() != expected {
        return Err(fail(format!("expected {expected} violations, found {}", violations.len())));
    }
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SidonExampleReport {
    pub n: u32,
    pub variant: u8,
    pub h: f64,
    /// `H(X+X') - H(X)`.
    pub doubling: f64,
    pub collision: f64,
    /// `H(X) - log 2 · (1 - Σ P(a)²) - C` with the example's constant `C`.
    pub lower_bound: f64,
    pub bound_holds: bool,
    pub violations: usize,
    pub max_sidon_prob: String,
    pub max_sidon_prob_f64: f64,
    /// `(N-1)/N` for variant 1, `3/4` for variant 2.
    pub expected_max_sidon_prob: String,
}

pub fn sidon_example_report(n: u32, variant: u8) -> Result<SidonExampleReport> {
    let d = build_sidon_example(n, variant)?;
    let h = d.entropy();
    let (h_sum, _) = entropy_of_combination(&d, &d, BinOp::Add)?;
    let values: Vec<GroupValue> = d.support().cloned().collect();
    let violations = sidon_violations(&values)?.len();
    let ln2 = std::f64::consts::LN_2;
    let c = if variant == 1 { 4.0 * ln2 / (n as f64).powi(2) } else { ln2 / (4.0 * n as f64) };
    let collision = d.collision();
    let lower_bound = h - ln2 * (1.0 - collision) - c;
    let doubling = h_sum - h;
    let (p, _) = max_sidon_subset_prob(&d)?;
    let expected = if variant == 1 { Prob::new((n - 1) as u128, n as u128)? } else { Prob::new(3, 4)? };
    Ok(SidonExampleReport {
        n,
        variant,
        h,
        doubling,
        collision,
        lower_bound,
        bound_holds: doubling >= lower_bound - 1e-9,
        violations,
        max_sidon_prob: p.to_string(),
        max_sidon_prob_f64: p.to_f64(),
        expected_max_sidon_prob: expected.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setcalc::combined_size;

    #[test]
    fn zero_inflated_small() {
        let d = build_zero_inflated(3).unwrap();
        assert_eq!(d.to_text(), FiniteDist::parse_text("0 1/3\n1 2/9\n2 2/9\n3 2/9\n").unwrap().to_text());
        for n in [2u64, 5, 17, 100] {
            let d = build_zero_inflated(n).unwrap();
            let closed = (3f64).ln() / 3.0 + 2.0 / 3.0 * (1.5 * n as f64).ln();
            assert!((d.entropy() - closed).abs() < 1e-12);
        }
        assert!(build_zero_inflated(1).is_err());
    }

    #[test]
    fn generic_augmented_small_agrees_with_convolution() {
        let g = build_generic_augmented(16, 1.0).unwrap();
        assert_eq!(g.extra, (0..4).map(|i| BigInt::from(32) * pow_big(4, i)).collect::<Vec<_>>());
        assert_eq!(g.set.len(), 20);
        for (n, eps) in [(16u64, 0.5), (40, 0.6), (64, 0.3)] {
            let g = build_generic_augmented(n, eps).unwrap();
            assert_eq!(g.sumset_size, combined_size(&g.set, &g.set, BinOp::Add).unwrap());
            let (h, _) = entropy_of_combination(&g.dist, &g.dist, BinOp::Add).unwrap();
            assert!((h - g.sum_entropy()).abs() < 1e-12);
            assert!(g.sumset_size >= n * g.extra.len() as u64);
        }
    }

    #[test]
    fn sidon_variants() {
        assert_eq!(build_sidon_example(1, 2).unwrap(), FiniteDist::uniform_ints([1, 2, 4, 5]));
        for n in 4..10 {
            let r = sidon_example_report(n, 1).unwrap();
            assert_eq!(r.violations, 1);
            assert!(r.bound_holds);
            assert_eq!(r.max_sidon_prob, r.expected_max_sidon_prob);
        }
        for n in 1..=4 {
            let r = sidon_example_report(n, 2).unwrap();
            assert!(r.bound_holds, "{r:?}");
            assert_eq!(r.max_sidon_prob, "3/4");
        }
        assert!(matches!(build_sidon_example(3, 1), Err(Error::ConstructionCheckFailed(_))));
    }
}
