//! Exact pushforward of a product measure under a binary operation.
//!
//! Three routes produce the same atoms: a windowed dense accumulator for
//! machine-size integers, a k-way merge of monotone rows for ordered values
//! of any size, and a hash accumulator for everything else. Results are
//! handed to a sink so entropies can be taken without materializing.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap;

use crate::dist::{FiniteDist, DEFAULT_SUPPORT_CAP};
use crate::error::{Error, Result};
use crate::numeric::EntropyAccumulator;
use crate::value::{BinOp, Family, GroupValue};

const WINDOW: u128 = 1 << 22;
const SORT_PAIRS: u128 = 1 << 26;

/// Receives the atoms of a combination, each value exactly once.
pub trait AtomSink {
    fn push(&mut self, value: GroupValue, weight: u128) -> Result<()>;

    fn push_small(&mut self, value: i64, weight: u128) -> Result<()> {
        self.push(GroupValue::int(value), weight)
    }
}

struct Collect {
    atoms: Vec<(GroupValue, u128)>,
    cap: usize,
}

impl AtomSink for Collect {
    fn push(&mut self, value: GroupValue, weight: u128) -> Result<()> {
        if self.atoms.len() >= self.cap {
            return Err(Error::SupportOverflow { atoms: self.atoms.len() as u128 + 1, cap: self.cap });
        }
        self.atoms.push((value, weight));
        Ok(())
    }
}

struct EntropySink(EntropyAccumulator);

impl AtomSink for EntropySink {
    fn push(&mut self, _value: GroupValue, weight: u128) -> Result<()> {
        self.0.push(weight);
        Ok(())
    }

    fn push_small(&mut self, _value: i64, weight: u128) -> Result<()> {
        self.0.push(weight);
        Ok(())
    }
}

/// Distribution of `X op Y` for independent `X ~ d1`, `Y ~ d2`.
pub fn combine_independent(d1: &FiniteDist, d2: &FiniteDist, op: BinOp) -> Result<FiniteDist> {
    combine_independent_capped(d1, d2, op, DEFAULT_SUPPORT_CAP)
}

pub fn combine_independent_capped(d1: &FiniteDist, d2: &FiniteDist, op: BinOp, cap: usize) -> Result<FiniteDist> {
    let mut sink = Collect { atoms: Vec::new(), cap };
    combine_into(d1, d2, op, &mut sink)?;
    let mut atoms = sink.atoms;
    atoms.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    FiniteDist::from_sorted_weights(atoms)
}

/// Entropy and support size of `X op Y` without building the distribution.
pub fn entropy_of_combination(d1: &FiniteDist, d2: &FiniteDist, op: BinOp) -> Result<(f64, u64)> {
    let denom = d1.denom().checked_mul(d2.denom()).ok_or(Error::PrecisionOverflow)?;
    let mut sink = EntropySink(EntropyAccumulator::new(denom));
    combine_into(d1, d2, op, &mut sink)?;
    Ok((sink.0.entropy(), sink.0.atoms()))
}

/// Stream the atoms of `X op Y` (weights over `d1.denom() * d2.denom()`) into `sink`.
pub fn combine_into(d1: &FiniteDist, d2: &FiniteDist, op: BinOp, sink: &mut dyn AtomSink) -> Result<()> {
    if d1.family() != d2.family() {
        let a = d1.weighted_atoms()[0].0.to_string();
        let b = d2.weighted_atoms()[0].0.to_string();
        return Err(Error::MixedGroup(format!("{a} ({})", d1.family()), format!("{b} ({})", d2.family())));
    }
    d1.denom().checked_mul(d2.denom()).ok_or(Error::PrecisionOverflow)?;
    if op == BinOp::Div {
        if let Some((v, _)) = d2.weighted_atoms().iter().find(|(v, _)| !v.is_unit()) {
            return Err(Error::NonInvertibleDivisor(v.to_string()));
        }
    }
    match (d1.family(), op) {
        (Family::Rational, BinOp::Add | BinOp::Mul) => ordered_combine(d1.weighted_atoms(), d2.weighted_atoms(), op, sink),
        (Family::Rational, BinOp::Sub) => {
            let neg = d2.neg();
            ordered_combine(d1.weighted_atoms(), neg.weighted_atoms(), BinOp::Add, sink)
        }
        _ => hash_combine(d1.weighted_atoms(), d2.weighted_atoms(), op, sink),
    }
}

fn hash_combine(a: &[(GroupValue, u128)], b: &[(GroupValue, u128)], op: BinOp, sink: &mut dyn AtomSink) -> Result<()> {
    let mut map: FxHashMap<GroupValue, u128> = FxHashMap::default();
    for (x, wx) in a {
        for (y, wy) in b {
            *map.entry(x.apply(op, y)?).or_insert(0) += wx * wy;
        }
    }
    let mut out: Vec<_> = map.into_iter().collect();
    out.sort_unstable_by(|p, q| p.0.cmp(&q.0));
    for (v, w) in out {
        sink.push(v, w)?;
    }
    Ok(())
}

/// Small-integer results produced off the dense route, merged in when the dense route emits.
struct SideMerge<'a> {
    inner: &'a mut dyn AtomSink,
    side: FxHashMap<i64, u128>,
}

impl AtomSink for SideMerge<'_> {
    fn push(&mut self, value: GroupValue, weight: u128) -> Result<()> {
        match value.as_small_int() {
            Some(v) => self.push_small(v, weight),
            None => self.inner.push(value, weight),
        }
    }

    fn push_small(&mut self, value: i64, weight: u128) -> Result<()> {
        let extra = self.side.remove(&value).unwrap_or(0);
        self.inner.push_small(value, weight + extra)
    }
}

struct SideCollect<'a> {
    inner: &'a mut dyn AtomSink,
    side: FxHashMap<i64, u128>,
}

impl AtomSink for SideCollect<'_> {
    fn push(&mut self, value: GroupValue, weight: u128) -> Result<()> {
        match value.as_small_int() {
            Some(v) => {
                *self.side.entry(v).or_insert(0) += weight;
                Ok(())
            }
            None => self.inner.push(value, weight),
        }
    }
}

type SplitAtoms = (Vec<(i64, u128)>, Vec<(GroupValue, u128)>);

fn ordered_combine(a: &[(GroupValue, u128)], b: &[(GroupValue, u128)], op: BinOp, sink: &mut dyn AtomSink) -> Result<()> {
    let split = |xs: &[(GroupValue, u128)]| -> SplitAtoms {
        let mut small = Vec::new();
        let mut rest = Vec::new();
        for (v, w) in xs {
            match v.as_small_int() {
                Some(s) => small.push((s, *w)),
                None => rest.push((v.clone(), *w)),
            }
        }
        (small, rest)
    };
    let (sa, ra) = split(a);
    let (sb, rb) = split(b);

    let plan = if sa.is_empty() || sb.is_empty() { None } else { small_plan(&sa, &sb, op) };
    let Some(plan) = plan else {
        return merge_rows(&rows_all(a, b), op, sink);
    };
    let mut rows: Vec<Row> = Vec::new();
    for (x, wx) in &ra {
        rows.push(Row { lead: x.clone(), weight: *wx, others: b });
    }
    for (x, wx) in &sa {
        if !rb.is_empty() {
            rows.push(Row { lead: GroupValue::int(*x), weight: *wx, others: &rb });
        }
    }
    if rows.is_empty() {
        return small_combine(&sa, &sb, op, plan, sink);
    }
    let mut collect = SideCollect { inner: sink, side: FxHashMap::default() };
    merge_rows(&rows, op, &mut collect)?;
    let side = collect.side;
    let mut merge = SideMerge { inner: sink, side };
    small_combine(&sa, &sb, op, plan, &mut merge)?;
    let mut rest: Vec<_> = merge.side.into_iter().collect();
    rest.sort_unstable();
    for (v, w) in rest {
        sink.push_small(v, w)?;
    }
    Ok(())
}

fn rows_all<'a>(a: &'a [(GroupValue, u128)], b: &'a [(GroupValue, u128)]) -> Vec<Row<'a>> {
    a.iter().map(|(x, w)| Row { lead: x.clone(), weight: *w, others: b }).collect()
}

#[derive(Clone, Copy)]
enum SmallPlan {
    Dense { lo: i64, hi: i64 },
    Sort,
}

fn small_plan(a: &[(i64, u128)], b: &[(i64, u128)], op: BinOp) -> Option<SmallPlan> {
    let (amin, amax) = (a.first()?.0 as i128, a.last()?.0 as i128);
    let (bmin, bmax) = (b.first()?.0 as i128, b.last()?.0 as i128);
    let (lo, hi) = match op {
        BinOp::Add => (amin + bmin, amax + bmax),
        BinOp::Mul => {
            let c = [amin * bmin, amin * bmax, amax * bmin, amax * bmax];
            (*c.iter().min().unwrap(), *c.iter().max().unwrap())
        }
        _ => return None,
    };
    if lo < i64::MIN as i128 || hi > i64::MAX as i128 {
        return None;
    }
    let range = (hi - lo + 1) as u128;
    let pairs = a.len() as u128 * b.len() as u128;
    if range <= WINDOW.max(16 * pairs) {
        Some(SmallPlan::Dense { lo: lo as i64, hi: hi as i64 })
    } else if pairs <= SORT_PAIRS {
        Some(SmallPlan::Sort)
    } else {
        None
    }
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

fn small_combine(a: &[(i64, u128)], b: &[(i64, u128)], op: BinOp, plan: SmallPlan, sink: &mut dyn AtomSink) -> Result<()> {
    match plan {
        SmallPlan::Sort => {
            let mut pairs: Vec<(i64, u128)> = Vec::with_capacity(a.len() * b.len());
            for (x, wx) in a {
                for (y, wy) in b {
                    let v = if op == BinOp::Add { x + y } else { x * y };
                    pairs.push((v, wx * wy));
                }
            }
            pairs.sort_unstable_by_key(|p| p.0);
            let mut i = 0;
            while i < pairs.len() {
                let v = pairs[i].0;
                let mut w = 0u128;
                while i < pairs.len() && pairs[i].0 == v {
                    w += pairs[i].1;
                    i += 1;
                }
                sink.push_small(v, w)?;
            }
            Ok(())
        }
        SmallPlan::Dense { lo, hi } => {
            let bvals: Vec<i64> = b.iter().map(|p| p.0).collect();
            let btotal: u128 = b.iter().map(|p| p.1).sum();
            let width = ((hi as i128 - lo as i128 + 1) as u128).min(WINDOW) as usize;
            let mut buf = vec![0u128; width];
            let mut wlo = lo as i128;
            while wlo <= hi as i128 {
                let whi = (wlo + width as i128 - 1).min(hi as i128);
                for (x, wx) in a {
                    let x = *x as i128;
                    let (blo, bhi) = match op {
                        BinOp::Add => (wlo - x, whi - x),
                        _ if x > 0 => (div_ceil(wlo, x), div_floor(whi, x)),
                        _ if x < 0 => (div_ceil(whi, x), div_floor(wlo, x)),
                        _ => {
                            if wlo <= 0 && 0 <= whi {
                                buf[(0 - wlo) as usize] += wx * btotal;
                            }
                            continue;
                        }
                    };
                    if blo > bhi {
                        continue;
                    }
                    let start = bvals.partition_point(|&y| (y as i128) < blo);
                    let end = bvals.partition_point(|&y| (y as i128) <= bhi);
                    for (y, wy) in &b[start..end] {
                        let v = if op == BinOp::Add { x + *y as i128 } else { x * *y as i128 };
                        buf[(v - wlo) as usize] += wx * wy;
                    }
                }
                let used = (whi - wlo + 1) as usize;
                for (i, slot) in buf[..used].iter_mut().enumerate() {
                    if *slot != 0 {
                        sink.push_small((wlo + i as i128) as i64, *slot)?;
                        *slot = 0;
                    }
                }
                wlo = whi + 1;
            }
            Ok(())
        }
    }
}

/// One lead value against a sorted list; `lead op y` is monotone in `y`.
struct Row<'a> {
    lead: GroupValue,
    weight: u128,
    others: &'a [(GroupValue, u128)],
}

struct Cursor {
    value: GroupValue,
    row: usize,
    pos: usize,
}

impl PartialEq for Cursor {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Cursor {}
impl PartialOrd for Cursor {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cursor {
    fn cmp(&self, o: &Self) -> Ordering {
        self.value.cmp(&o.value).then(self.row.cmp(&o.row))
    }
}

fn merge_rows(rows: &[Row<'_>], op: BinOp, sink: &mut dyn AtomSink) -> Result<()> {
    let descending: Vec<bool> = rows
        .iter()
        .map(|r| op == BinOp::Mul && r.lead < GroupValue::int(0))
        .collect();
    let at = |r: usize, pos: usize| -> (&GroupValue, u128) {
        let row = &rows[r];
        let idx = if descending[r] { row.others.len() - 1 - pos } else { pos };
        let (y, w) = &row.others[idx];
        (y, *w)
    };
    let mut heap = BinaryHeap::new();
    let mut zero_weight = 0u128;
    for (r, row) in rows.iter().enumerate() {
        if row.others.is_empty() {
            continue;
        }
        if op == BinOp::Mul && row.lead.is_zero() {
            zero_weight += row.weight * row.others.iter().map(|p| p.1).sum::<u128>();
            continue;
        }
        let (y, _) = at(r, 0);
        heap.push(Reverse(Cursor { value: row.lead.apply(op, y)?, row: r, pos: 0 }));
    }
    let zero = GroupValue::int(0);
    let mut zero_pending = zero_weight > 0;
    let mut current: Option<(GroupValue, u128)> = None;
    while let Some(Reverse(c)) = heap.pop() {
        if zero_pending && c.value >= zero {
            emit_merge(&mut current, zero.clone(), zero_weight, sink)?;
            zero_pending = false;
        }
        let (_, wy) = at(c.row, c.pos);
        let w = rows[c.row].weight * wy;
        let next = c.pos + 1;
        if next < rows[c.row].others.len() {
            let (y, _) = at(c.row, next);
            heap.push(Reverse(Cursor { value: rows[c.row].lead.apply(op, y)?, row: c.row, pos: next }));
        }
        emit_merge(&mut current, c.value, w, sink)?;
    }
    if zero_pending {
        emit_merge(&mut current, zero, zero_weight, sink)?;
    }
    if let Some((v, w)) = current {
        sink.push(v, w)?;
    }
    Ok(())
}

fn emit_merge(current: &mut Option<(GroupValue, u128)>, v: GroupValue, w: u128, sink: &mut dyn AtomSink) -> Result<()> {
    match current {
        Some((cv, cw)) if *cv == v => {
            *cw += w;
            Ok(())
        }
        _ => {
            if let Some((pv, pw)) = current.replace((v, w)) {
                sink.push(pv, pw)?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Prob;

    fn brute(d1: &FiniteDist, d2: &FiniteDist, op: BinOp) -> FiniteDist {
        let mut items = Vec::new();
        for (x, wx) in d1.weighted_atoms() {
            for (y, wy) in d2.weighted_atoms() {
                items.push((x.apply(op, y).unwrap(), wx * wy));
            }
        }
        FiniteDist::from_weights(items).unwrap()
    }

    #[test]
    fn coin_sum() {
        let u = FiniteDist::uniform_ints([0, 1]);
        let s = combine_independent(&u, &u, BinOp::Add).unwrap();
        assert_eq!(s.prob(&GroupValue::int(0)), Some(Prob::new(1, 4).unwrap()));
        assert_eq!(s.prob(&GroupValue::int(1)), Some(Prob::new(1, 2).unwrap()));
        assert_eq!(s.prob(&GroupValue::int(2)), Some(Prob::new(1, 4).unwrap()));
    }

    #[test]
    fn coin_product() {
        let u = FiniteDist::uniform_ints([1, 2]);
        let s = combine_independent(&u, &u, BinOp::Mul).unwrap();
        let expect = FiniteDist::from_weights(vec![
            (GroupValue::int(1), 1),
            (GroupValue::int(2), 2),
            (GroupValue::int(4), 1),
        ])
        .unwrap();
        assert_eq!(s, expect);
    }

    #[test]
    fn routes_agree_with_brute_force() {
        let big = GroupValue::big(crate::value::pow_big(4, 40));
        let mixed = FiniteDist::from_weights(vec![
            (GroupValue::int(-3), 2),
            (GroupValue::int(0), 1),
            (GroupValue::int(5), 3),
            (big.clone(), 1),
            (big.neg(), 2),
        ])
        .unwrap();
        let sparse = FiniteDist::from_weights(vec![
            (GroupValue::int(-1_000_000_007), 1),
            (GroupValue::int(2), 5),
            (GroupValue::int(1_000_000_007), 1),
        ])
        .unwrap();
        let q = GroupValue::int(1).div(&GroupValue::int(3)).unwrap();
        let rat = FiniteDist::from_weights(vec![(q, 1), (GroupValue::int(2), 1)]).unwrap();
        for d1 in [&mixed, &sparse, &rat] {
            for d2 in [&mixed, &sparse, &rat] {
                for op in [BinOp::Add, BinOp::Sub, BinOp::Mul] {
                    let fast = combine_independent(d1, d2, op).unwrap();
                    assert_eq!(fast, brute(d1, d2, op), "{op:?}");
                    let (h, n) = entropy_of_combination(d1, d2, op).unwrap();
                    assert!((h - fast.entropy()).abs() < 1e-12);
                    assert_eq!(n as usize, fast.len());
                }
            }
        }
    }

    #[test]
    fn dense_windows_cover_wide_ranges() {
        let a = FiniteDist::uniform_ints((1..=1500).map(|i| i * 3 - 2000));
        let b = FiniteDist::uniform_ints(-1200..1300);
        let small = |d: &FiniteDist| d.weighted_atoms().iter().map(|(v, w)| (v.as_small_int().unwrap(), *w)).collect::<Vec<_>>();
        match small_plan(&small(&a), &small(&b), BinOp::Mul) {
            Some(SmallPlan::Dense { lo, hi }) => assert!((hi - lo) as u128 > WINDOW),
            _ => panic!("expected the windowed dense route"),
        }
        for op in [BinOp::Add, BinOp::Mul] {
            assert_eq!(combine_independent(&a, &b, op).unwrap(), brute(&a, &b, op));
        }
    }

    #[test]
    fn modular_and_vector_routes() {
        let z = FiniteDist::uniform(vec![GroupValue::modular(1, 7).unwrap(), GroupValue::modular(3, 7).unwrap()]).unwrap();
        let q = combine_independent(&z, &z, BinOp::Div).unwrap();
        assert_eq!(q, brute(&z, &z, BinOp::Div));
        let v = FiniteDist::uniform(vec![GroupValue::vector(vec![0, 1]), GroupValue::vector(vec![1, 0])]).unwrap();
        assert_eq!(combine_independent(&v, &v, BinOp::Add).unwrap().len(), 3);
        assert!(matches!(combine_independent(&v, &v, BinOp::Mul), Err(Error::UnsupportedOperation { .. })));
    }

    #[test]
    fn division_needs_units() {
        let a = FiniteDist::uniform_ints([0, 1]);
        assert!(matches!(combine_independent(&a, &a, BinOp::Div), Err(Error::NonInvertibleDivisor(_))));
    }

    #[test]
    fn mixing_groups_fails() {
        let a = FiniteDist::uniform_ints([0, 1]);
        let z = FiniteDist::point(GroupValue::modular(1, 5).unwrap());
        assert!(matches!(combine_independent(&a, &z, BinOp::Add), Err(Error::MixedGroup(..))));
    }

    #[test]
    fn support_cap_applies() {
        let a = FiniteDist::uniform_ints(0..100);
        let b = FiniteDist::uniform_ints((0..100).map(|i| i * 1000));
        assert!(matches!(
            combine_independent_capped(&a, &b, BinOp::Add, 500),
            Err(Error::SupportOverflow { .. })
        ));
    }
}
