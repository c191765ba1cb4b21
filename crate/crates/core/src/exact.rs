//! Exact evaluation of quantities over bound discrete variables.
//!
//! Variables live in blocks: a block is a joint distribution, and distinct
//! blocks are independent. A plain binding is a one-coordinate block.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rustc_hash::FxHashMap;

use crate::conv::{combine_independent_capped, entropy_of_combination};
use crate::dist::{FiniteDist, DEFAULT_SUPPORT_CAP};
use crate::error::{Error, Result};
use crate::expr::{apply_vals, RvExpr, Val};
use crate::functionals::sidon_prune;
use crate::joint::JointDist;
use crate::quantity::{rational_to_f64, Atom, AtomEval, Estimate, Quantity};

/// Discrete variables, grouped into mutually independent blocks.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    blocks: Vec<JointDist>,
    vars: BTreeMap<String, usize>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    fn claim(&mut self, names: &[String]) -> Result<usize> {
        for n in names {
            if self.vars.contains_key(n) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        let id = self.blocks.len();
        for n in names {
            self.vars.insert(n.clone(), id);
        }
        Ok(id)
    }

    pub fn bind(&mut self, name: &str, d: &FiniteDist) -> Result<()> {
        self.claim(&[name.to_string()])?;
        self.blocks.push(JointDist::from_dist(name, d));
        Ok(())
    }

    /// Independent copies of `d` under each name.
    pub fn bind_iid(&mut self, names: &[&str], d: &FiniteDist) -> Result<()> {
        for n in names {
            self.bind(n, d)?;
        }
        Ok(())
    }

    /// A dependent block; every coordinate becomes a variable.
    pub fn bind_joint(&mut self, j: JointDist) -> Result<()> {
        self.claim(j.coords())?;
        self.blocks.push(j);
        Ok(())
    }

    /// Two copies of the pair law `j`, conditionally independent given their common sum.
    pub fn bind_coupled(&mut self, j: &JointDist, names: [&str; 5]) -> Result<()> {
        self.bind_joint(j.cond_indep_copies_given_sum_named(names)?)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    fn block_of(&self, name: &str) -> Result<usize> {
        self.vars.get(name).copied().ok_or_else(|| Error::UnboundVariable(name.to_string()))
    }

    pub fn marginal(&self, name: &str) -> Result<FiniteDist> {
        self.blocks[self.block_of(name)?].marginal_dist(name)
    }

    /// One line per block, distributions in the text format joined by `;`.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                out.push_str(" | ");
            }
            let _ = write!(out, "{}:", b.coords().join(","));
            let d = b.denom();
            for (k, (t, w)) in b.weighted_atoms().iter().enumerate() {
                let g = crate::numeric::gcd_u128(*w, d);
                let sep = if k == 0 { " " } else { "; " };
                if t.len() == 1 {
                    let _ = write!(out, "{sep}{} {}/{}", t[0], w / g, d / g);
                } else {
                    let vals: Vec<String> = t.iter().map(|v| v.to_string()).collect();
                    let _ = write!(out, "{sep}({}) {}/{}", vals.join(","), w / g, d / g);
                }
            }
        }
        out
    }
}

/// Evaluator with per-binding caches of pushforwards and entropies.
pub struct ExactEvaluator<'a> {
    bindings: &'a Bindings,
    cap: usize,
    dists: FxHashMap<RvExpr, FiniteDist>,
    entropies: FxHashMap<Vec<RvExpr>, f64>,
    joints: FxHashMap<Vec<usize>, JointDist>,
}

impl<'a> ExactEvaluator<'a> {
    pub fn new(bindings: &'a Bindings) -> Self {
        Self::with_cap(bindings, DEFAULT_SUPPORT_CAP)
    }

    pub fn with_cap(bindings: &'a Bindings, cap: usize) -> Self {
        ExactEvaluator {
            bindings,
            cap,
            dists: FxHashMap::default(),
            entropies: FxHashMap::default(),
            joints: FxHashMap::default(),
        }
    }

    fn blocks(&self, e: &RvExpr) -> Result<BTreeSet<usize>> {
        e.vars().into_iter().map(|v| self.bindings.block_of(v)).collect()
    }

    fn constant(e: &RvExpr) -> Result<Val> {
        e.eval(&|_| None)
    }

    fn joint(&mut self, blocks: &BTreeSet<usize>) -> Result<JointDist> {
        let key: Vec<usize> = blocks.iter().copied().collect();
        if let Some(j) = self.joints.get(&key) {
            return Ok(j.clone());
        }
        let mut iter = key.iter();
        let first = iter.next().ok_or_else(|| Error::InvalidArgument("expression has no variables".into()))?;
        let mut j = self.bindings.blocks[*first].clone();
        for b in iter {
            j = j.product_capped(&self.bindings.blocks[*b], self.cap)?;
        }
        self.joints.insert(key, j.clone());
        Ok(j)
    }

    /// Exact law of an expression.
    pub fn dist(&mut self, e: &RvExpr) -> Result<FiniteDist> {
        if let Some(d) = self.dists.get(e) {
            return Ok(d.clone());
        }
        let d = self.compute_dist(e)?;
        self.dists.insert(e.clone(), d.clone());
        Ok(d)
    }

    fn compute_dist(&mut self, e: &RvExpr) -> Result<FiniteDist> {
        if e.vars().is_empty() {
            return Ok(FiniteDist::point(Self::constant(e)?.into_group()));
        }
        match e {
            RvExpr::Var(v) => self.bindings.marginal(v),
            RvExpr::Lit(_) => unreachable!("literals have no variables"),
            RvExpr::Neg(inner) => Ok(self.dist(inner)?.neg()),
            RvExpr::Bin(op, a, b) => {
                if a.vars().is_empty() {
                    let c = Self::constant(a)?;
                    return self.dist(b)?.map(|v| apply_vals(*op, c.clone(), Val::Group(v.clone())).map(Val::into_group));
                }
                if b.vars().is_empty() {
                    let c = Self::constant(b)?;
                    return self.dist(a)?.map(|v| apply_vals(*op, Val::Group(v.clone()), c.clone()).map(Val::into_group));
                }
                if self.blocks(a)?.is_disjoint(&self.blocks(b)?) {
                    let (da, db) = (self.dist(a)?, self.dist(b)?);
                    combine_independent_capped(&da, &db, *op, self.cap)
                } else {
                    let blocks = self.blocks(e)?;
                    self.joint(&blocks)?.pushforward_dist(e)
                }
            }
        }
    }

    fn single_entropy(&mut self, e: &RvExpr) -> Result<f64> {
        if let Some(h) = self.dists.get(e).map(|d| d.entropy()) {
            return Ok(h);
        }
        if let RvExpr::Bin(op, a, b) = e {
            let independent = !a.vars().is_empty() && !b.vars().is_empty() && self.blocks(a)?.is_disjoint(&self.blocks(b)?);
            if independent {
                let (da, db) = (self.dist(a)?, self.dist(b)?);
                return Ok(entropy_of_combination(&da, &db, *op)?.0);
            }
        }
        Ok(self.dist(e)?.entropy())
    }

    /// Joint entropy of a list of expressions.
    pub fn entropy(&mut self, exprs: &[RvExpr]) -> Result<f64> {
        let mut list: Vec<RvExpr> = Vec::new();
        for e in exprs {
            if !e.vars().is_empty() && !list.contains(e) {
                list.push(e.clone());
            }
        }
        if list.is_empty() {
            return Ok(0.0);
        }
        if let Some(h) = self.entropies.get(&list) {
            return Ok(*h);
        }
        let block_sets: Vec<BTreeSet<usize>> = list.iter().map(|e| self.blocks(e)).collect::<Result<_>>()?;
        // connected components of expressions sharing a block
        let mut comp: Vec<usize> = (0..list.len()).collect();
        for i in 0..list.len() {
            for k in 0..i {
                if !block_sets[i].is_disjoint(&block_sets[k]) {
                    let (ci, ck) = (comp[i], comp[k]);
                    for c in comp.iter_mut() {
                        if *c == ci {
                            *c = ck;
                        }
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, c) in comp.iter().enumerate() {
            groups.entry(*c).or_default().push(i);
        }
        let mut total = 0.0;
        for members in groups.values() {
            total += if members.len() == 1 {
                self.single_entropy(&list[members[0]])?
            } else {
                let blocks: BTreeSet<usize> = members.iter().flat_map(|&i| block_sets[i].iter().copied()).collect();
                let named: Vec<(String, RvExpr)> = members.iter().map(|&i| (format!("_{i}"), list[i].clone())).collect();
                self.joint(&blocks)?.pushforward(&named)?.entropy()
            };
        }
        self.entropies.insert(list, total);
        Ok(total)
    }

    fn entropy_of_union(&mut self, parts: &[&[RvExpr]]) -> Result<f64> {
        let all: Vec<RvExpr> = parts.iter().flat_map(|p| p.iter().cloned()).collect();
        self.entropy(&all)
    }

    pub fn eval(&mut self, q: &Quantity) -> Result<f64> {
        Ok(q.evaluate(self)?.value)
    }
}

impl AtomEval for ExactEvaluator<'_> {
    fn atom(&mut self, atom: &Atom) -> Result<Estimate> {
        let v = match atom {
            // multiplicative entropy of a discrete variable is its Shannon entropy
            Atom::Entropy { args, given, .. } => {
                if given.is_empty() {
                    self.entropy(args)?
                } else {
                    self.entropy_of_union(&[args, given])? - self.entropy(given)?
                }
            }
            Atom::Mutual { a, b, given } => {
                self.entropy_of_union(&[a, given])? + self.entropy_of_union(&[b, given])?
                    - self.entropy_of_union(&[a, b, given])?
                    - self.entropy(given)?
            }
            Atom::ElogAbs(e) => self
                .dist(e)?
                .e_log_abs()
                .ok_or_else(|| Error::DomainMismatch(format!("E log|{e}| needs a real law without an atom at zero")))?,
            Atom::Coll(e) => self.dist(e)?.collision(),
            Atom::Pmax(e) => self.dist(e)?.max_prob().to_f64(),
            Atom::Pmin(e) => self.dist(e)?.min_prob().to_f64(),
            Atom::SidonKept(e) => rational_to_f64(&sidon_prune(&self.dist(e)?)?.retained),
            Atom::SidonBound(e) => sidon_prune(&self.dist(e)?)?.guaranteed,
            Atom::Let(n) => return Err(Error::UnknownLet(n.clone())),
        };
        Ok(Estimate::exact(v))
    }
}

/// Exact value of a let-free quantity.
pub fn evaluate_quantity_exact(q: &Quantity, bindings: &Bindings) -> Result<f64> {
    ExactEvaluator::new(bindings).eval(q)
}

/// Bind each name to its own independent distribution.
pub fn independent(bindings: &[(&str, &FiniteDist)]) -> Result<Bindings> {
    let mut b = Bindings::new();
    for (n, d) in bindings {
        b.bind(n, d)?;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::additive_energy;
    use crate::value::GroupValue;

    fn ev(text: &str, b: &Bindings) -> f64 {
        evaluate_quantity_exact(&Quantity::parse(text).unwrap(), b).unwrap()
    }

    fn coin() -> FiniteDist {
        FiniteDist::uniform_ints([0, 1])
    }

    #[test]
    fn independent_examples() {
        let c = coin();
        let b = independent(&[("X", &c), ("Y", &c), ("Z", &c)]).unwrap();
        assert!((ev("H[X+Y]", &b) - 1.5 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(ev("I[X;Y]", &b).abs() < 1e-11);
        assert!((ev("H[X+Y|X]", &b) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((ev("H[X,X+Y,Z]", &b) - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        // Ruzsa triangle instance
        let lhs = ev("H[X-Z] - 1/2*H[X] - 1/2*H[Z]", &b);
        let rhs = ev("H[X-Y] - 1/2*H[X] - 1/2*H[Y] + H[Y-Z] - 1/2*H[Y] - 1/2*H[Z]", &b);
        assert!((lhs - 0.34657359027997264).abs() < 1e-12);
        assert!((rhs - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(
            evaluate_quantity_exact(&Quantity::parse("H[Q]").unwrap(), &b),
            Err(Error::UnboundVariable(_))
        ));
    }

    #[test]
    fn dependent_expressions() {
        let d = FiniteDist::uniform_ints([1, 2]);
        let b = independent(&[("X", &d), ("Y", &d)]).unwrap();
        // X*Y*Y given Y carries the same information as X
        assert!((ev("H[X*Y*Y|Y] - H[X|Y]", &b)).abs() < 1e-12);
        assert!((ev("H[X-X]", &b)).abs() < 1e-12);
        assert!((ev("H[2*X+1] - H[X]", &b)).abs() < 1e-12);
        assert!((ev("Ht[1/X] - H[X]", &b)).abs() < 1e-12);
    }

    #[test]
    fn energy_routes_agree() {
        let j = JointDist::from_weights(
            vec!["X".into(), "Y".into()],
            vec![
                (vec![GroupValue::int(0), GroupValue::int(1)].into(), 3),
                (vec![GroupValue::int(1), GroupValue::int(0)].into(), 1),
                (vec![GroupValue::int(1), GroupValue::int(2)].into(), 2),
                (vec![GroupValue::int(2), GroupValue::int(1)].into(), 5),
            ],
        )
        .unwrap();
        let mut b = Bindings::new();
        b.bind_joint(j.clone()).unwrap();
        let dsl = ev("2*H[X,Y] - H[X+Y]", &b);
        assert!((dsl - additive_energy(&j).unwrap()).abs() < 1e-9);
        let mut c = Bindings::new();
        c.bind_coupled(&j, ["X1", "Y1", "X2", "Y2", "S"]).unwrap();
        assert!((ev("H[X1,Y1,X2,Y2,S]", &c) - dsl).abs() < 1e-9);
        assert!(ev("I[X1;Y2|S]", &c).abs() < 1e-9);
    }

    #[test]
    fn coupled_worked_instance() {
        let c = coin();
        let j = JointDist::join_independent(&[("X", &c), ("Y", &c)]).unwrap();
        let mut b = Bindings::new();
        b.bind_coupled(&j, ["X1", "Y1", "X2", "Y2", "S"]).unwrap();
        assert!((ev("H[X1+Y2|S]", &b) - 0.519860385419959).abs() < 1e-9);
        assert!((ev("1/2*H[X1] + 1/2*H[Y1] + 3/2*H[X1] + 3/2*H[Y1] - H[X1,Y1,X2,Y2,S]", &b) - 1.0397207708399179).abs() < 1e-9);
    }

    #[test]
    fn overflow_guard() {
        let d = FiniteDist::uniform_ints(0..100);
        let b = independent(&[("X", &d), ("Y", &d)]).unwrap();
        let mut e = ExactEvaluator::with_cap(&b, 1000);
        assert!(matches!(e.eval(&Quantity::parse("Coll[X*Y]").unwrap()), Err(Error::SupportOverflow { .. })));
        assert!(matches!(e.eval(&Quantity::parse("H[X,X*Y]").unwrap()), Err(Error::SupportOverflow { .. })));
        // streamed entropies never materialize the product support
        assert!(e.eval(&Quantity::parse("H[X*Y]").unwrap()).is_ok());
    }
}
