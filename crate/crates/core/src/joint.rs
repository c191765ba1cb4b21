//! Named-coordinate joint distributions with exact masses.

use crate::dist::{accumulate, FiniteDist, DEFAULT_SUPPORT_CAP};
use crate::error::{Error, Result};
use crate::expr::RvExpr;
use crate::numeric::{gcd_u128, lcm_u128, EntropyAccumulator};
use crate::value::GroupValue;

pub type Tuple = Box<[GroupValue]>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointDist {
    coords: Vec<String>,
    atoms: Vec<(Tuple, u128)>,
    denom: u128,
}

impl JointDist {
    /// Build from unnormalized weights; duplicate tuples merge and zero weights drop.
    pub fn from_weights(coords: Vec<String>, items: Vec<(Tuple, u128)>) -> Result<Self> {
        for (i, c) in coords.iter().enumerate() {
            if coords[..i].contains(c) {
                return Err(Error::DuplicateName(c.clone()));
            }
        }
        if let Some((t, _)) = items.iter().find(|(t, _)| t.len() != coords.len()) {
            return Err(Error::InvalidArgument(format!("tuple of arity {} for {} coordinates", t.len(), coords.len())));
        }
        let mut items: Vec<_> = items.into_iter().filter(|(_, w)| *w > 0).collect();
        if items.is_empty() {
            return Err(Error::InvalidArgument("joint distribution has empty support".into()));
        }
        items.sort_by(|a, b| a.0.cmp(&b.0));
        let mut atoms: Vec<(Tuple, u128)> = Vec::with_capacity(items.len());
        for (t, w) in items {
            match atoms.last_mut() {
                Some((lt, lw)) if *lt == t => *lw = lw.checked_add(w).ok_or(Error::PrecisionOverflow)?,
                _ => atoms.push((t, w)),
            }
        }
        let mut denom = 0u128;
        let mut g = 0u128;
        for (_, w) in &atoms {
            denom = denom.checked_add(*w).ok_or(Error::PrecisionOverflow)?;
            g = gcd_u128(g, *w);
        }
        if g > 1 {
            for (_, w) in atoms.iter_mut() {
                *w /= g;
            }
            denom /= g;
        }
        Ok(JointDist { coords, atoms, denom })
    }

    pub fn from_dist(name: &str, d: &FiniteDist) -> Self {
        JointDist {
            coords: vec![name.to_string()],
            atoms: d.weighted_atoms().iter().map(|(v, w)| (vec![v.clone()].into_boxed_slice(), *w)).collect(),
            denom: d.denom(),
        }
    }

    /// Product measure of independent named factors.
    pub fn join_independent(bindings: &[(&str, &FiniteDist)]) -> Result<Self> {
        let mut iter = bindings.iter();
        let Some((n0, d0)) = iter.next() else {
            return Err(Error::InvalidArgument("no bindings".into()));
        };
        let mut j = JointDist::from_dist(n0, d0);
        for (n, d) in iter {
            j = j.product(&JointDist::from_dist(n, d))?;
        }
        Ok(j)
    }

    /// Independent product with another joint over disjoint coordinates.
    pub fn product(&self, other: &JointDist) -> Result<Self> {
        self.product_capped(other, DEFAULT_SUPPORT_CAP)
    }

    pub fn product_capped(&self, other: &JointDist, cap: usize) -> Result<Self> {
        for c in &other.coords {
            if self.coords.contains(c) {
                return Err(Error::DuplicateName(c.clone()));
            }
        }
        let size = self.atoms.len() as u128 * other.atoms.len() as u128;
        if size > cap as u128 {
            return Err(Error::SupportOverflow { atoms: size, cap });
        }
        let denom = self.denom.checked_mul(other.denom).ok_or(Error::PrecisionOverflow)?;
        let mut atoms = Vec::with_capacity(size as usize);
        for (t1, w1) in &self.atoms {
            for (t2, w2) in &other.atoms {
                let t: Vec<GroupValue> = t1.iter().chain(t2.iter()).cloned().collect();
                atoms.push((t.into_boxed_slice(), w1 * w2));
            }
        }
        let mut coords = self.coords.clone();
        coords.extend(other.coords.iter().cloned());
        Ok(JointDist { coords, atoms, denom })
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
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

    pub fn weighted_atoms(&self) -> &[(Tuple, u128)] {
        &self.atoms
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.coords.iter().position(|c| c == name).ok_or_else(|| Error::UnknownCoordinate(name.to_string()))
    }

    fn indices(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n)).collect()
    }

    /// Exact marginal on the named coordinates, in the given order.
    pub fn marginal(&self, names: &[&str]) -> Result<JointDist> {
        let idx = self.indices(names)?;
        let map = accumulate(self.atoms.iter().map(|(t, w)| {
            let key: Tuple = idx.iter().map(|&i| t[i].clone()).collect();
            (key, *w)
        }))?;
        JointDist::from_weights(names.iter().map(|s| s.to_string()).collect(), map.into_iter().collect())
    }

    pub fn marginal_dist(&self, name: &str) -> Result<FiniteDist> {
        let i = self.index_of(name)?;
        let map = accumulate(self.atoms.iter().map(|(t, w)| (t[i].clone(), *w)))?;
        FiniteDist::from_weights(map.into_iter().collect())
    }

    /// Image measure under named expressions of the coordinates.
    pub fn pushforward(&self, exprs: &[(String, RvExpr)]) -> Result<JointDist> {
        for (_, e) in exprs {
            for v in e.vars() {
                self.index_of(v)?;
            }
        }
        let mut items = Vec::with_capacity(self.atoms.len());
        for (t, w) in &self.atoms {
            let lookup = |name: &str| self.coords.iter().position(|c| c == name).map(|i| t[i].clone());
            let key = exprs
                .iter()
                .map(|(_, e)| e.eval(&lookup).map(|v| v.into_group()))
                .collect::<Result<Vec<_>>>()?;
            items.push((key.into_boxed_slice(), *w));
        }
        let map = accumulate(items.into_iter())?;
        JointDist::from_weights(exprs.iter().map(|(n, _)| n.clone()).collect(), map.into_iter().collect())
    }

    /// Pushforward of a single expression to a distribution.
    pub fn pushforward_dist(&self, expr: &RvExpr) -> Result<FiniteDist> {
        let j = self.pushforward(&[("_".to_string(), expr.clone())])?;
        FiniteDist::from_weights(j.atoms.into_iter().map(|(t, w)| (t[0].clone(), w)).collect())
    }

    pub fn entropy(&self) -> f64 {
        let mut acc = EntropyAccumulator::new(self.denom);
        for (_, w) in &self.atoms {
            acc.push(*w);
        }
        acc.entropy()
    }

    pub fn joint_entropy(&self, names: &[&str]) -> Result<f64> {
        if names.is_empty() {
            return Ok(0.0);
        }
        Ok(self.marginal(names)?.entropy())
    }

    fn check_disjoint(a: &[&str], b: &[&str]) -> Result<()> {
        if let Some(x) = a.iter().find(|x| b.contains(x)) {
            return Err(Error::OverlappingCoordinateSets(x.to_string()));
        }
        Ok(())
    }

    /// `H(A | B) = H(A,B) − H(B)`.
    pub fn conditional_entropy(&self, a: &[&str], b: &[&str]) -> Result<f64> {
        Self::check_disjoint(a, b)?;
        let ab: Vec<&str> = a.iter().chain(b.iter()).copied().collect();
        Ok(self.joint_entropy(&ab)? - self.joint_entropy(b)?)
    }

    /// `I(A; B) = H(A) + H(B) − H(A,B)`.
    pub fn mutual_information(&self, a: &[&str], b: &[&str]) -> Result<f64> {
        Self::check_disjoint(a, b)?;
        let ab: Vec<&str> = a.iter().chain(b.iter()).copied().collect();
        Ok(self.joint_entropy(a)? + self.joint_entropy(b)? - self.joint_entropy(&ab)?)
    }

    /// `I(A; B | C)`.
    pub fn conditional_mutual_information(&self, a: &[&str], b: &[&str], c: &[&str]) -> Result<f64> {
        Self::check_disjoint(a, b)?;
        Self::check_disjoint(a, c)?;
        Self::check_disjoint(b, c)?;
        Ok(self.joint_entropy(&cat(&[a, c]))? + self.joint_entropy(&cat(&[b, c]))?
            - self.joint_entropy(&cat(&[a, b, c]))?
            - self.joint_entropy(c)?)
    }

    /// Two copies of `(X, Y)` that are conditionally independent given `S = X + Y`,
    /// with coordinates `X1, Y1, X2, Y2, S`.
    pub fn cond_indep_copies_given_sum(&self) -> Result<JointDist> {
        self.cond_indep_copies_given_sum_named(["X1", "Y1", "X2", "Y2", "S"])
    }

    pub fn cond_indep_copies_given_sum_named(&self, names: [&str; 5]) -> Result<JointDist> {
        if self.coords.len() != 2 {
            return Err(Error::NonAdditiveVariant);
        }
        let mut sums = Vec::with_capacity(self.atoms.len());
        for (t, w) in &self.atoms {
            let s = t[0].add(&t[1]).map_err(|_| Error::NonAdditiveVariant)?;
            sums.push((s, *w));
        }
        let class = accumulate(sums.iter().map(|(s, w)| (s.clone(), *w)))?;
        let mut l = 1u128;
        for ws in class.values() {
            l = lcm_u128(l, *ws).ok_or(Error::PrecisionOverflow)?;
        }
        self.denom.checked_mul(l).ok_or(Error::PrecisionOverflow)?;
        let mut by_class: Vec<(GroupValue, Vec<usize>)> = Vec::new();
        {
            let mut order: Vec<usize> = (0..sums.len()).collect();
            order.sort_by(|&i, &j| sums[i].0.cmp(&sums[j].0));
            for i in order {
                match by_class.last_mut() {
                    Some((s, members)) if *s == sums[i].0 => members.push(i),
                    _ => by_class.push((sums[i].0.clone(), vec![i])),
                }
            }
        }
        let mut items = Vec::new();
        for (s, members) in &by_class {
            let scale = l / class[s];
            for &i in members {
                for &k in members {
                    let (t1, w1) = &self.atoms[i];
                    let (t2, w2) = &self.atoms[k];
                    let w = w1.checked_mul(*w2).and_then(|x| x.checked_mul(scale)).ok_or(Error::PrecisionOverflow)?;
                    let t: Tuple = vec![t1[0].clone(), t1[1].clone(), t2[0].clone(), t2[1].clone(), s.clone()].into();
                    items.push((t, w));
                }
            }
        }
        JointDist::from_weights(names.iter().map(|s| s.to_string()).collect(), items)
    }
}

fn cat<'a>(xs: &[&[&'a str]]) -> Vec<&'a str> {
    xs.iter().flat_map(|x| x.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> FiniteDist {
        FiniteDist::uniform_ints([0, 1])
    }

    #[test]
    fn product_of_coins() {
        let j = JointDist::join_independent(&[("X", &coin()), ("Y", &coin())]).unwrap();
        assert_eq!(j.len(), 4);
        assert!(j.weighted_atoms().iter().all(|(_, w)| *w == 1) && j.denom() == 4);
        assert_eq!(j.marginal_dist("X").unwrap(), coin());
        assert!(j.mutual_information(&["X"], &["Y"]).unwrap().abs() < 1e-11);
    }

    #[test]
    fn sum_pushforward() {
        let j = JointDist::join_independent(&[("X", &coin()), ("Y", &coin())]).unwrap();
        let s = j.pushforward_dist(&RvExpr::parse("X+Y").unwrap()).unwrap();
        assert_eq!(s, FiniteDist::from_weights(vec![(GroupValue::int(0), 1), (GroupValue::int(1), 2), (GroupValue::int(2), 1)]).unwrap());
        let id = j.pushforward(&[("X".into(), RvExpr::var("X")), ("Y".into(), RvExpr::var("Y"))]).unwrap();
        assert_eq!(id, j);
    }

    #[test]
    fn conditional_of_sum() {
        let j = JointDist::join_independent(&[("X", &coin()), ("Y", &coin())]).unwrap();
        let k = j
            .pushforward(&[("X".into(), RvExpr::var("X")), ("S".into(), RvExpr::parse("X+Y").unwrap())])
            .unwrap();
        let h = k.conditional_entropy(&["S"], &["X"]).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-12);
        assert!(matches!(k.mutual_information(&["S"], &["S"]), Err(Error::OverlappingCoordinateSets(_))));
    }

    #[test]
    fn coupling_of_coins() {
        let j = JointDist::join_independent(&[("X", &coin()), ("Y", &coin())]).unwrap();
        let c = j.cond_indep_copies_given_sum().unwrap();
        assert!((c.entropy() - 2.5 * 2f64.ln()).abs() < 1e-12);
        let i = c.conditional_mutual_information(&["X1"], &["Y2"], &["S"]).unwrap();
        assert!(i.abs() < 1e-12);
        let m = c.marginal(&["X1", "Y1"]).unwrap();
        assert_eq!(m.weighted_atoms(), j.weighted_atoms());
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(matches!(
            JointDist::join_independent(&[("X", &coin()), ("X", &coin())]),
            Err(Error::DuplicateName(_))
        ));
    }
}
