//! Named entropic functionals of discrete distributions: additive energy,
//! Ruzsa distances, doubling constants and the Sidon audit.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use num_bigint::BigInt;
use num_rational::BigRational;
use rustc_hash::FxHashMap;

use crate::conv::{combine_independent, entropy_of_combination};
use crate::dist::{FiniteDist, Prob};
use crate::error::{Error, Result};
use crate::expr::RvExpr;
use crate::joint::JointDist;
use crate::value::{BinOp, Family, GroupValue};

/// Agreement required between the two additive-energy routes.
pub const CROSS_CHECK_TOL: f64 = 1e-9;

/// Largest connected block of Sidon violations searched exhaustively.
pub const SIDON_SEARCH_CAP: usize = 24;

fn require_additive(d: &FiniteDist) -> Result<()> {
    match d.family() {
        Family::Rational | Family::Modular(_) => Ok(()),
        Family::Vector(_) => Err(Error::NonAdditiveVariant),
    }
}

/// Entropic additive energy `A(X,Y)` of a two-coordinate joint, computed from the
/// conditional coupling and from `2H(X,Y) - H(X+Y)`; the routes must agree.
pub fn additive_energy(j: &JointDist) -> Result<f64> {
    if j.coords().len() != 2 {
        return Err(Error::NonAdditiveVariant);
    }
    let coupled = j.cond_indep_copies_given_sum()?.entropy();
    let sum = RvExpr::bin(BinOp::Add, RvExpr::var(&j.coords()[0]), RvExpr::var(&j.coords()[1]));
    let direct = 2.0 * j.entropy() - j.pushforward_dist(&sum).map_err(|_| Error::NonAdditiveVariant)?.entropy();
    if (coupled - direct).abs() > CROSS_CHECK_TOL {
        return Err(Error::CrossCheckMismatch { first: coupled, second: direct });
    }
    Ok(coupled)
}

/// `H(X'-Y') - H(X)/2 - H(Y)/2` over independent copies.
pub fn ruzsa_distance(dx: &FiniteDist, dy: &FiniteDist) -> Result<f64> {
    let (h, _) = entropy_of_combination(dx, dy, BinOp::Sub)?;
    Ok(h - 0.5 * dx.entropy() - 0.5 * dy.entropy())
}

/// `H(X'/Y') - H(X)/2 - H(Y)/2` over independent copies.
pub fn mult_ruzsa_distance(dx: &FiniteDist, dy: &FiniteDist) -> Result<f64> {
    let (h, _) = entropy_of_combination(dx, dy, BinOp::Div)?;
    Ok(h - 0.5 * dx.entropy() - 0.5 * dy.entropy())
}

/// Entropy increments of a distribution under the four self-combinations.
#[derive(Clone, Debug, PartialEq)]
pub struct DoublingSuite {
    pub sigma: f64,
    pub delta: f64,
    /// `None` when the values carry no multiplication.
    pub sigma_tilde: Option<f64>,
    /// `None` unless every atom is a unit.
    pub delta_tilde: Option<f64>,
}

pub fn doubling_suite(d: &FiniteDist) -> Result<DoublingSuite> {
    let h = d.entropy();
    let inc = |op| entropy_of_combination(d, d, op).map(|(x, _)| x - h);
    let sigma = inc(BinOp::Add)?;
    let delta = inc(BinOp::Sub)?;
    let sigma_tilde = match inc(BinOp::Mul) {
        Ok(v) => Some(v),
        Err(Error::UnsupportedOperation { .. }) => None,
        Err(e) => return Err(e),
    };
    let delta_tilde = match inc(BinOp::Div) {
        Ok(v) => Some(v),
        Err(Error::NonInvertibleDivisor(_) | Error::UnsupportedOperation { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(DoublingSuite { sigma, delta, sigma_tilde, delta_tilde })
}

/// Two distinct unordered pairs with the same sum.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SidonViolation {
    pub first: (GroupValue, GroupValue),
    pub second: (GroupValue, GroupValue),
}

/// All coincidences `a+b = c+d` between distinct unordered pairs of `values`
/// (pairs may repeat an element).
pub fn sidon_violations(values: &[GroupValue]) -> Result<Vec<SidonViolation>> {
    let mut vals = values.to_vec();
    vals.sort();
    vals.dedup();
    let mut by_sum: FxHashMap<GroupValue, Vec<(usize, usize)>> = FxHashMap::default();
    for i in 0..vals.len() {
        for k in i..vals.len() {
            by_sum.entry(vals[i].add(&vals[k])?).or_default().push((i, k));
        }
    }
    let mut out = Vec::new();
    for pairs in by_sum.values() {
        for (x, &(a, b)) in pairs.iter().enumerate() {
            for &(c, e) in &pairs[x + 1..] {
                out.push(SidonViolation {
                    first: (vals[a].clone(), vals[b].clone()),
                    second: (vals[c].clone(), vals[e].clone()),
                });
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn is_sidon(values: &[GroupValue]) -> Result<bool> {
    Ok(sidon_violations(values)?.is_empty())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SidonAudit {
    pub is_support_sidon: bool,
    /// `H(X) - s(X) - log 2 · (1 - Σ P(a)²)`.
    pub sidon_gap: f64,
    /// `R(a,b)` keyed by `(a, b)` with `a <= b`.
    pub r_table: BTreeMap<(GroupValue, GroupValue), f64>,
    pub p_star: Prob,
    pub p_floor: Prob,
}

impl SidonAudit {
    /// `E R(X,X')` for independent copies, weighting each unordered pair by its ordered mass.
    pub fn expected_r(&self, d: &FiniteDist) -> f64 {
        let mut s = crate::numeric::CompensatedSum::new();
        for ((a, b), r) in &self.r_table {
            let pa = d.prob(a).map_or(0.0, |p| p.to_f64());
            let pb = d.prob(b).map_or(0.0, |p| p.to_f64());
            let mult = if a == b { 1.0 } else { 2.0 };
            s.add(mult * pa * pb * r);
        }
        s.value()
    }
}

fn ln_prob(p: &Prob) -> f64 {
    (p.num() as f64).ln() - (p.den() as f64).ln()
}

pub fn sidon_audit(d: &FiniteDist) -> Result<SidonAudit> {
    require_additive(d)?;
    let sums = combine_independent(d, d, BinOp::Add)?;
    let support: Vec<GroupValue> = d.support().cloned().collect();
    let h = d.entropy();
    let s = sums.entropy() - h;
    let sidon_gap = h - s - LN_2 * (1.0 - d.collision());
    let mut r_table = BTreeMap::new();
    for (i, a) in support.iter().enumerate() {
        let pa = d.prob(a).expect("support atom");
        for b in &support[i..] {
            let pb = d.prob(b).expect("support atom");
            let q = sums.prob(&a.add(b)?).expect("sum of support atoms");
            let mut r = ln_prob(&q) - ln_prob(&pa) - ln_prob(&pb);
            if a != b {
                r -= LN_2;
            }
            r_table.insert((a.clone(), b.clone()), r);
        }
    }
    Ok(SidonAudit {
        is_support_sidon: is_sidon(&support)?,
        sidon_gap,
        r_table,
        p_star: d.max_prob(),
        p_floor: d.min_prob(),
    })
}

/// Outcome of the pruning construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SidonPrune {
    /// Sidon subset of the support, sorted.
    pub kept: Vec<GroupValue>,
    /// `P(X ∈ kept)`; zero only if every element was removed.
    pub retained: BigRational,
    /// Lower bound `1 - E R / (p_floor · log 2)` guaranteed for `retained`.
    pub guaranteed: f64,
}

/// Remove from the support one element of every pair whose sum is
/// at least twice as likely as an independent pair would make it.
pub fn sidon_prune(d: &FiniteDist) -> Result<SidonPrune> {
    require_additive(d)?;
    let sums = combine_independent(d, d, BinOp::Add)?;
    let support: Vec<GroupValue> = d.support().cloned().collect();
    let mut dropped = vec![false; support.len()];
    let two = BigRational::from_integer(BigInt::from(2));
    let four = BigRational::from_integer(BigInt::from(4));
    for i in 0..support.len() {
        let pa = d.prob(&support[i]).expect("support atom");
        for k in i..support.len() {
            let pb = d.prob(&support[k]).expect("support atom");
            let q = sums.prob(&support[i].add(&support[k])?).expect("sum of support atoms").to_rational();
            let base = pa.to_rational() * pb.to_rational();
            let heavy = if i == k { q >= &two * base } else { q >= &four * base };
            if heavy {
                // support is sorted, so on equal mass the smaller value is `i`
                let lighter = if pb < pa { k } else { i };
                dropped[lighter] = true;
            }
        }
    }
    let kept: Vec<GroupValue> = support.iter().zip(&dropped).filter(|(_, x)| !**x).map(|(v, _)| v.clone()).collect();
    if !is_sidon(&kept)? {
        return Err(Error::ConstructionCheckFailed("pruned set is not Sidon".into()));
    }
    let w: u128 = kept.iter().map(|v| d.weight(v)).sum();
    let audit = sidon_audit(d)?;
    let c = audit.expected_r(d);
    Ok(SidonPrune {
        kept,
        retained: BigRational::new(BigInt::from(w), BigInt::from(d.denom())),
        guaranteed: 1.0 - c / (audit.p_floor.to_f64() * LN_2),
    })
}

/// Exact largest `P(X ∈ B)` over Sidon subsets `B` of the support, with a witness.
///
/// Elements outside every violation are always kept; each connected block of
/// violations is solved by branch and bound and must have at most
/// [`SIDON_SEARCH_CAP`] elements.
pub fn max_sidon_subset_prob(d: &FiniteDist) -> Result<(Prob, Vec<GroupValue>)> {
    require_additive(d)?;
    let support: Vec<GroupValue> = d.support().cloned().collect();
    let index: FxHashMap<&GroupValue, usize> = support.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let violations = sidon_violations(&support)?;
    let edges: Vec<Vec<usize>> = violations
        .iter()
        .map(|v| {
            let mut e = vec![index[&v.first.0], index[&v.first.1], index[&v.second.0], index[&v.second.1]];
            e.sort_unstable();
            e.dedup();
            e
        })
        .collect();

    let mut parent: Vec<usize> = (0..support.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let n = p[y];
            p[y] = r;
            y = n;
        }
        r
    }
    let mut touched = vec![false; support.len()];
    for e in &edges {
        for &x in e {
            touched[x] = true;
            let (a, b) = (find(&mut parent, e[0]), find(&mut parent, x));
            parent[b] = a;
        }
    }

    let mut chosen: Vec<usize> = (0..support.len()).filter(|&i| !touched[i]).collect();
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in (0..support.len()).filter(|&i| touched[i]) {
        let r = find(&mut parent, i);
        components.entry(r).or_default().push(i);
    }
    for members in components.values() {
        if members.len() > SIDON_SEARCH_CAP {
            return Err(Error::SupportTooLarge { size: members.len(), cap: SIDON_SEARCH_CAP });
        }
        let mut order = members.clone();
        order.sort_by(|&a, &b| d.weighted_atoms()[b].1.cmp(&d.weighted_atoms()[a].1).then(a.cmp(&b)));
        let local: FxHashMap<usize, usize> = order.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let masks: Vec<u32> = edges
            .iter()
            .filter(|e| local.contains_key(&e[0]))
            .map(|e| e.iter().fold(0u32, |m, x| m | 1 << local[x]))
            .collect();
        let weights: Vec<u128> = order.iter().map(|&i| d.weighted_atoms()[i].1).collect();
        let best = branch_and_bound(&weights, &masks);
        chosen.extend((0..order.len()).filter(|k| best >> k & 1 == 1).map(|k| order[k]));
    }
    chosen.sort_unstable();
    let w: u128 = chosen.iter().map(|&i| d.weighted_atoms()[i].1).sum();
    Ok((Prob::new(w, d.denom())?, chosen.into_iter().map(|i| support[i].clone()).collect()))
}

/// Heaviest subset (bitmask) containing no edge mask entirely; items are
/// pre-sorted by decreasing weight and the first optimum found wins.
fn branch_and_bound(weights: &[u128], edges: &[u32]) -> u32 {
    struct State<'a> {
        weights: &'a [u128],
        edges_of: Vec<Vec<u32>>,
        suffix: Vec<u128>,
        best: u128,
        best_mask: u32,
        found: bool,
    }
    fn go(st: &mut State, k: usize, mask: u32, w: u128) {
        if st.found && w + st.suffix[k] <= st.best {
            return;
        }
        if k == st.weights.len() {
            st.best = w;
            st.best_mask = mask;
            st.found = true;
            return;
        }
        let with = mask | 1 << k;
        if st.edges_of[k].iter().all(|e| e & !with != 0) {
            go(st, k + 1, with, w + st.weights[k]);
        }
        go(st, k + 1, mask, w);
    }
    let n = weights.len();
    let mut suffix = vec![0u128; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1] + weights[k];
    }
    let edges_of = (0..n).map(|k| edges.iter().copied().filter(|e| e >> k & 1 == 1).collect()).collect();
    let mut st = State { weights, edges_of, suffix, best: 0, best_mask: 0, found: false };
    go(&mut st, 0, 0, 0);
    st.best_mask
}
