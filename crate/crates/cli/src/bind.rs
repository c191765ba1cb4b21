//! `--bind` specifications: `X=Y=<file|model>` binds independent copies,
//! `X,Y=<file>` binds the coordinates of a vector-valued law jointly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use entropic_core::catalog::{InequalityRecord, RecordBindings, VarGroup};
use entropic_core::continuous::{ContinuousBindings, ContinuousModel};
use entropic_core::exact::Bindings;
use entropic_core::joint::Tuple;
use entropic_core::{Error, FiniteDist, GroupValue, JointDist, Result};

#[derive(Clone, Debug)]
pub enum Source {
    Dist(FiniteDist),
    Joint(JointDist),
    Model(ContinuousModel),
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub names: Vec<String>,
    pub source: Source,
}

#[derive(Clone, Debug, Default)]
pub struct UserBindings {
    pub entries: Vec<Entry>,
    /// Files read while binding, in order.
    pub files: Vec<PathBuf>,
}

fn bad(m: String) -> Error {
    Error::InvalidArgument(m)
}

fn joint_from_vectors(names: &[String], d: &FiniteDist) -> Result<JointDist> {
    let mut items = Vec::with_capacity(d.len());
    for (v, w) in d.weighted_atoms() {
        let GroupValue::IntVec(xs) = v else {
            return Err(bad(format!("joint binding of {} needs an `@group intvec {}` file", names.join(","), names.len())));
        };
        if xs.len() != names.len() {
            return Err(bad(format!("tuple {v} has {} coordinates, expected {}", xs.len(), names.len())));
        }
        let t: Tuple = xs.iter().cloned().map(GroupValue::Int).collect();
        items.push((t, *w));
    }
    JointDist::from_weights(names.to_vec(), items)
}

impl UserBindings {
    pub fn parse(specs: &[String]) -> Result<Self> {
        let mut out = UserBindings::default();
        for spec in specs {
            out.add(spec)?;
        }
        Ok(out)
    }

    fn add(&mut self, spec: &str) -> Result<()> {
        let parts: Vec<&str> = spec.split('=').collect();
        if parts.len() < 2 {
            return Err(bad(format!("binding `{spec}` must look like NAME=... or A,B=...")));
        }
        let rhs = parts[parts.len() - 1].trim();
        let lhs = &parts[..parts.len() - 1];
        let joint = lhs.len() == 1 && lhs[0].contains(',');
        let names: Vec<String> = if joint {
            lhs[0].split(',').map(|s| s.trim().to_string()).collect()
        } else {
            lhs.iter().map(|s| s.trim().to_string()).collect()
        };
        for n in &names {
            if n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'') {
                return Err(bad(format!("invalid variable name `{n}` in `{spec}`")));
            }
            if self.entries.iter().any(|e| e.names.contains(n)) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        let path = Path::new(rhs);
        let source = if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {rhs}: {e}")))?;
            self.files.push(path.to_path_buf());
            let d = FiniteDist::parse_text(&text).map_err(|e| bad(format!("{rhs}: {e}")))?;
            if joint {
                Source::Joint(joint_from_vectors(&names, &d)?)
            } else {
                Source::Dist(d)
            }
        } else if rhs.contains('(') {
            if joint {
                return Err(bad("model literals bind independent copies only".into()));
            }
            Source::Model(ContinuousModel::parse(rhs)?)
        } else {
            return Err(bad(format!("`{rhs}` is neither a readable file nor a model literal")));
        };
        self.entries.push(Entry { names, source });
        Ok(())
    }

    pub fn is_continuous(&self) -> Result<bool> {
        let models = self.entries.iter().filter(|e| matches!(e.source, Source::Model(_))).count();
        if models > 0 && models < self.entries.len() {
            return Err(bad("cannot mix model literals with discrete distributions".into()));
        }
        Ok(models > 0)
    }

    fn continuous(&self) -> ContinuousBindings {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            if let Source::Model(m) = &e.source {
                for n in &e.names {
                    out.insert(n.clone(), m.clone());
                }
            }
        }
        out
    }

    fn bind_entry(b: &mut Bindings, e: &Entry) -> Result<()> {
        match &e.source {
            Source::Dist(d) => {
                let names: Vec<&str> = e.names.iter().map(|s| s.as_str()).collect();
                b.bind_iid(&names, d)
            }
            Source::Joint(j) => b.bind_joint(j.clone()),
            Source::Model(_) => Err(bad("model literal in a discrete binding".into())),
        }
    }

    /// Bindings for free-standing quantities.
    pub fn for_eval(&self) -> Result<RecordBindings> {
        if self.is_continuous()? {
            return Ok(RecordBindings::Continuous(self.continuous()));
        }
        let mut b = Bindings::new();
        for e in &self.entries {
            Self::bind_entry(&mut b, e)?;
        }
        Ok(RecordBindings::Discrete(b))
    }

    fn entry_of(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.names.iter().any(|n| n == name))
    }

    /// Bindings shaped by the record's variable groups. Coupled groups take the
    /// pair law from a joint binding of the pair, or from two plain bindings.
    pub fn for_record(&self, r: &InequalityRecord) -> Result<RecordBindings> {
        if self.is_continuous()? {
            return Ok(RecordBindings::Continuous(self.continuous()));
        }
        let mut b = Bindings::new();
        let mut used: Vec<usize> = Vec::new();
        let take = |e: &Entry, used: &mut Vec<usize>, b: &mut Bindings| -> Result<()> {
            let idx = self.entries.iter().position(|x| std::ptr::eq(x, e)).expect("entry");
            if !used.contains(&idx) {
                used.push(idx);
                Self::bind_entry(b, e)?;
            }
            Ok(())
        };
        for g in &r.vars {
            match g {
                VarGroup::Coupled { pair, independent, names } => {
                    let j = match (self.entry_of(&pair[0]), self.entry_of(&pair[1])) {
                        (Some(a), Some(c)) if std::ptr::eq(a, c) => match &a.source {
                            Source::Joint(j) if !independent => j.marginal(&[&pair[0], &pair[1]])?,
                            Source::Dist(d) => JointDist::join_independent(&[(&pair[0], d), (&pair[1], d)])?,
                            _ => return Err(bad(format!("{} needs a pair law for {},{}", r.name, pair[0], pair[1]))),
                        },
                        (Some(a), Some(c)) => match (&a.source, &c.source) {
                            (Source::Dist(x), Source::Dist(y)) => JointDist::join_independent(&[(&pair[0], x), (&pair[1], y)])?,
                            _ => return Err(bad(format!("{} needs a pair law for {},{}", r.name, pair[0], pair[1]))),
                        },
                        _ => return Err(Error::UnboundVariable(format!("{},{}", pair[0], pair[1]))),
                    };
                    let ns: [&str; 5] = std::array::from_fn(|i| names[i].as_str());
                    b.bind_coupled(&j, ns)?;
                }
                VarGroup::Iid(ns) => {
                    let first = self.entry_of(&ns[0]).ok_or_else(|| Error::UnboundVariable(ns[0].clone()))?;
                    let law = match &first.source {
                        Source::Dist(d) => d.clone(),
                        _ => return Err(bad(format!("{} must be bound to a distribution file", ns[0]))),
                    };
                    for n in ns {
                        let e = self.entry_of(n).ok_or_else(|| Error::UnboundVariable(n.clone()))?;
                        match &e.source {
                            Source::Dist(d) if *d == law => take(e, &mut used, &mut b)?,
                            _ => return Err(bad(format!("{} requires {} to be independent copies of one law", r.name, ns.join(",")))),
                        }
                    }
                }
                VarGroup::Single(n) => {
                    let e = self.entry_of(n).ok_or_else(|| Error::UnboundVariable(n.clone()))?;
                    take(e, &mut used, &mut b)?;
                }
                VarGroup::Joint(ns) => {
                    for n in ns {
                        let e = self.entry_of(n).ok_or_else(|| Error::UnboundVariable(n.clone()))?;
                        take(e, &mut used, &mut b)?;
                    }
                }
            }
        }
        Ok(RecordBindings::Discrete(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_shapes() {
        let u = UserBindings::parse(&["X=Y=gaussian(0,1)".into()]).unwrap();
        assert!(u.is_continuous().unwrap());
        assert_eq!(u.entries[0].names, vec!["X", "Y"]);
        assert!(UserBindings::parse(&["X=missing-file".into()]).is_err());
        assert!(UserBindings::parse(&["X=gaussian(0,1)".into(), "X=gaussian(0,2)".into()]).is_err());
    }
}
