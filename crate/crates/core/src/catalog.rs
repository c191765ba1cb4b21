//! Registry of entropic inequalities with exact and Monte Carlo checks.
//!
//! A record declares its variables, optional named sub-quantities (`let`), and
//! one or more displayed relations (`show`). The text form is
//!
//! ```text
//! record <name>
//! ref "<description>"
//! domain discrete|continuous|both
//! vars X; iid(Y,Y'); joint(A,B); coupled(X,Y => X1,Y1,X2,Y2,S)
//! support additive|integer|units|domain|positive
//! suite <model literal>
//! let <name> := <quantity>
//! show [label] <objective> <=|>=|= <objective>
//! end
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::continuous::{derive_seed, ContinuousBindings, ContinuousModel, McConfig, McEvaluator};
use crate::dist::{FiniteDist, DEFAULT_SUPPORT_CAP};
use crate::error::{Error, Result};
use crate::exact::{Bindings, ExactEvaluator};
use crate::joint::{JointDist, Tuple};
use crate::quantity::{AtomEval, Estimate, Objective, Quantity};
use crate::value::GroupValue;

pub const DISCRETE_TOL: f64 = 1e-9;
/// Continuous verdicts allow this many standard errors of negative slack.
pub const CI_MULTIPLIER: f64 = 3.0;

const REGISTRY_TEXT: &str = include_str!("registry.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Discrete,
    Continuous,
    Both,
}

impl Domain {
    pub fn discrete(self) -> bool {
        self != Domain::Continuous
    }

    pub fn continuous(self) -> bool {
        self != Domain::Discrete
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

/// Kind of support drawn by the random sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupportKind {
    /// Integers or any residue ring.
    Additive,
    /// Integers only.
    Integer,
    /// Nonzero integers or units of a residue ring.
    Units,
    /// Nonzero integers or nonzero residues modulo a prime.
    Domain,
    /// Positive integers.
    Positive,
}

impl SupportKind {
    fn name(self) -> &'static str {
        match self {
            SupportKind::Additive => "additive",
            SupportKind::Integer => "integer",
            SupportKind::Units => "units",
            SupportKind::Domain => "domain",
            SupportKind::Positive => "positive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VarGroup {
    Single(String),
    /// Independent copies of one law.
    Iid(Vec<String>),
    /// One dependent block.
    Joint(Vec<String>),
    /// Two copies of a pair law, conditionally independent given the common sum.
    /// With `independent` the pair law is a product of two marginals.
    Coupled { pair: [String; 2], independent: bool, names: [String; 5] },
}

impl VarGroup {
    pub fn names(&self) -> Vec<&str> {
        match self {
            VarGroup::Single(n) => vec![n],
            VarGroup::Iid(ns) | VarGroup::Joint(ns) => ns.iter().map(|s| s.as_str()).collect(),
            VarGroup::Coupled { names, .. } => names.iter().map(|s| s.as_str()).collect(),
        }
    }

    fn is_dependent(&self) -> bool {
        matches!(self, VarGroup::Joint(_) | VarGroup::Coupled { .. })
    }
}

impl fmt::Display for VarGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarGroup::Single(n) => write!(f, "{n}"),
            VarGroup::Iid(ns) => write!(f, "iid({})", ns.join(",")),
            VarGroup::Joint(ns) => write!(f, "joint({})", ns.join(",")),
            VarGroup::Coupled { pair, independent, names } => {
                let sep = if *independent { ";" } else { "," };
                write!(f, "coupled({}{sep}{} => {})", pair[0], pair[1], names.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Show {
    pub label: Option<String>,
    pub lhs: Objective,
    pub relation: Relation,
    pub rhs: Objective,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Let(String, Quantity),
    Show(Show),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityRecord {
    pub name: String,
    pub reference: String,
    pub domain: Domain,
    pub vars: Vec<VarGroup>,
    pub support: SupportKind,
    pub suites: Vec<ContinuousModel>,
    pub items: Vec<Item>,
}

impl InequalityRecord {
    pub fn declared_vars(&self) -> Vec<String> {
        self.vars.iter().flat_map(|g| g.names()).map(str::to_string).collect()
    }

    pub fn shows(&self) -> impl Iterator<Item = &Show> {
        self.items.iter().filter_map(|i| match i {
            Item::Show(s) => Some(s),
            Item::Let(..) => None,
        })
    }

    /// Shows with every let substituted, labelled by name or position.
    pub fn expanded_shows(&self) -> Result<Vec<(String, Show)>> {
        let mut lets: Vec<(String, Quantity)> = Vec::new();
        let mut out = Vec::new();
        for item in &self.items {
            match item {
                Item::Let(n, q) => {
                    let q = q.expand(&lets)?;
                    lets.push((n.clone(), q));
                }
                Item::Show(s) => {
                    let mut sub = |q: &Quantity| q.expand(&lets);
                    let show = Show {
                        label: s.label.clone(),
                        lhs: s.lhs.map_quantities(&mut sub)?,
                        relation: s.relation,
                        rhs: s.rhs.map_quantities(&mut sub)?,
                    };
                    let label = s.label.clone().unwrap_or_else(|| (out.len() + 1).to_string());
                    out.push((label, show));
                }
            }
        }
        Ok(out)
    }

    /// Checks names, references and domain consistency.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::InvalidArgument(format!("record {}: {m}", self.name));
        let mut declared = BTreeSet::new();
        for v in self.declared_vars() {
            if !declared.insert(v.clone()) {
                return Err(Error::DuplicateName(v));
            }
        }
        if self.domain.continuous() {
            if self.vars.iter().any(VarGroup::is_dependent) {
                return Err(bad("dependent variable groups are discrete only".into()));
            }
            if self.suites.is_empty() {
                return Err(bad("continuous records need at least one suite".into()));
            }
        }
        let mut lets: BTreeSet<&str> = BTreeSet::new();
        let check = |q: &Quantity, lets: &BTreeSet<&str>| -> Result<()> {
            for v in q.vars() {
                if !declared.contains(&v) {
                    return Err(bad(format!("undeclared variable `{v}`")));
                }
            }
            for r in q.let_refs() {
                if !lets.contains(r) {
                    return Err(Error::UnknownLet(r.to_string()));
                }
            }
            Ok(())
        };
        let mut shows = 0;
        for item in &self.items {
            match item {
                Item::Let(n, q) => {
                    check(q, &lets)?;
                    if declared.contains(n) || !lets.insert(n) {
                        return Err(Error::DuplicateName(n.clone()));
                    }
                }
                Item::Show(s) => {
                    shows += 1;
                    for q in s.lhs.quantities().into_iter().chain(s.rhs.quantities()) {
                        check(q, &lets)?;
                    }
                }
            }
        }
        if shows == 0 {
            return Err(bad("no show line".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for InequalityRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "record {}", self.name)?;
        writeln!(f, "ref \"{}\"", self.reference)?;
        let domain = match self.domain {
            Domain::Discrete => "discrete",
            Domain::Continuous => "continuous",
            Domain::Both => "both",
        };
        writeln!(f, "domain {domain}")?;
        let vars: Vec<String> = self.vars.iter().map(|g| g.to_string()).collect();
        writeln!(f, "vars {}", vars.join("; "))?;
        writeln!(f, "support {}", self.support.name())?;
        for s in &self.suites {
            writeln!(f, "suite {s}")?;
        }
        for item in &self.items {
            match item {
                Item::Let(n, q) => writeln!(f, "let {n} := {q}")?,
                Item::Show(s) => {
                    write!(f, "show ")?;
                    if let Some(l) = &s.label {
                        write!(f, "[{l}] ")?;
                    }
                    writeln!(f, "{} {} {}", s.lhs, s.relation.symbol(), s.rhs)?;
                }
            }
        }
        writeln!(f, "end")
    }
}

fn split_top(text: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            c if c == sep && depth == 0 => {
                out.push(&text[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out
}

fn name_list(text: &str) -> Vec<String> {
    text.split(',').map(|s| s.trim().to_string()).collect()
}

fn valid_ident(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

fn parse_group(text: &str) -> std::result::Result<VarGroup, String> {
    let t = text.trim();
    let inner = |prefix: &str| t.strip_prefix(prefix).and_then(|r| r.strip_suffix(')'));
    let group = if let Some(body) = inner("iid(") {
        VarGroup::Iid(name_list(body))
    } else if let Some(body) = inner("joint(") {
        VarGroup::Joint(name_list(body))
    } else if let Some(body) = inner("coupled(") {
        let (pair, names) = body.split_once("=>").ok_or("coupled group needs `=>`")?;
        let independent = pair.contains(';');
        let pair: Vec<String> = pair.split([',', ';']).map(|s| s.trim().to_string()).collect();
        let names = name_list(names);
        let pair: [String; 2] = pair.try_into().map_err(|_| "coupled group needs two source names")?;
        let names: [String; 5] = names.try_into().map_err(|_| "coupled group needs five names")?;
        VarGroup::Coupled { pair, independent, names }
    } else {
        VarGroup::Single(t.to_string())
    };
    for n in group.names() {
        if !valid_ident(n) {
            return Err(format!("invalid variable name `{n}`"));
        }
    }
    if let VarGroup::Coupled { pair, .. } = &group {
        if pair.iter().any(|n| !valid_ident(n)) {
            return Err("invalid coupled source name".into());
        }
    }
    Ok(group)
}

fn parse_show(text: &str) -> std::result::Result<Show, String> {
    let mut t = text.trim();
    let mut label = None;
    if let Some(rest) = t.strip_prefix('[') {
        let (l, rest) = rest.split_once(']').ok_or("unterminated label")?;
        label = Some(l.trim().to_string());
        t = rest.trim_start();
    }
    let mut depth = 0i32;
    let bytes = t.as_bytes();
    let mut found = None;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' | b'[' => depth += 1,
            b')' | b']' => depth -= 1,
            b'<' | b'>' if depth == 0 => {
                if bytes.get(i + 1) != Some(&b'=') {
                    return Err("strict relations are not supported".into());
                }
                found = Some((i, 2, if b == b'<' { Relation::Le } else { Relation::Ge }));
                break;
            }
            b'=' if depth == 0 => {
                found = Some((i, 1, Relation::Eq));
                break;
            }
            _ => {}
        }
    }
    let (at, width, relation) = found.ok_or("missing relation")?;
    let lhs = Objective::parse(&t[..at]).map_err(|e| format!("left side: {e}"))?;
    let rhs = Objective::parse(&t[at + width..]).map_err(|e| format!("right side: {e}"))?;
    Ok(Show { label, lhs, relation, rhs })
}

/// Parses a sequence of records.
pub fn parse_records(text: &str) -> Result<Vec<InequalityRecord>> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, InequalityRecord)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |m: String| Error::Format { line: line_no, message: m };
        let line = match raw.find('#') {
            Some(p) if !raw[..p].contains('"') => &raw[..p],
            _ => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        if key == "record" {
            if cur.is_some() {
                return Err(err("missing `end` before new record".into()));
            }
            if !rest.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') || rest.is_empty() {
                return Err(err(format!("invalid record name `{rest}`")));
            }
            let r = InequalityRecord {
                name: rest.to_string(),
                reference: String::new(),
                domain: Domain::Discrete,
                vars: Vec::new(),
                support: SupportKind::Additive,
                suites: Vec::new(),
                items: Vec::new(),
            };
            cur = Some((line_no, r));
            continue;
        }
        let Some((start, r)) = cur.as_mut() else {
            return Err(err(format!("`{key}` outside a record")));
        };
        match key {
            "ref" => {
                let s = rest.strip_prefix('"').and_then(|s| s.strip_suffix('"')).ok_or_else(|| err("ref must be quoted".into()))?;
                r.reference = s.to_string();
            }
            "domain" => {
                r.domain = match rest {
                    "discrete" => Domain::Discrete,
                    "continuous" => Domain::Continuous,
                    "both" => Domain::Both,
                    _ => return Err(err(format!("unknown domain `{rest}`"))),
                }
            }
            "vars" => {
                for g in split_top(rest, ';') {
                    r.vars.push(parse_group(g).map_err(err)?);
                }
            }
            "support" => {
                r.support = match rest {
                    "additive" => SupportKind::Additive,
                    "integer" => SupportKind::Integer,
                    "units" => SupportKind::Units,
                    "domain" => SupportKind::Domain,
                    "positive" => SupportKind::Positive,
                    _ => return Err(err(format!("unknown support kind `{rest}`"))),
                }
            }
            "suite" => r.suites.push(ContinuousModel::parse(rest).map_err(|e| err(e.to_string()))?),
            "let" => {
                let (n, q) = rest.split_once(":=").ok_or_else(|| err("let needs `:=`".into()))?;
                let n = n.trim();
                if !valid_ident(n) {
                    return Err(err(format!("invalid let name `{n}`")));
                }
                let q = Quantity::parse(q).map_err(|e| err(e.to_string()))?;
                r.items.push(Item::Let(n.to_string(), q));
            }
            "show" => r.items.push(Item::Show(parse_show(rest).map_err(err)?)),
            "end" => {
                let start = *start;
                let (_, r) = cur.take().expect("open record");
                r.validate().map_err(|e| Error::Format { line: start, message: e.to_string() })?;
                out.push(r);
            }
            _ => return Err(err(format!("unknown directive `{key}`"))),
        }
    }
    if let Some((start, _)) = cur {
        return Err(Error::Format { line: start, message: "record is missing `end`".into() });
    }
    Ok(out)
}

fn join_terms(terms: impl IntoIterator<Item = String>) -> String {
    terms.into_iter().collect::<Vec<_>>().join(" + ")
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn product(vars: &[String]) -> String {
    vars.join("*")
}

/// Parametric families, rendered in the record text format.
fn generated_text() -> String {
    let mut t = String::new();
    for n in [2usize, 3] {
        let ys = names("Y", n);
        let lets: String = ys.iter().enumerate().map(|(i, y)| format!("let logK{} := H[X+{y}] - H[X]\n", i + 1)).collect();
        let ks = join_terms((1..=n).map(|i| format!("logK{i}")));
        t += &format!(
            "record pr-additive-{n}\nref \"sum with several summands, each adding a bounded entropy increment\"\ndomain both\nvars X; {}\nsupport additive\nsuite gaussian(0,1)\nsuite uniform(0,1)\n{lets}show H[X+{}] <= H[X] + {ks}\nend\n\n",
            ys.join("; "),
            ys.join("+"),
        );
        let lets: String = ys.iter().enumerate().map(|(i, y)| format!("let logK{} := H[X*{y}] - H[X]\n", i + 1)).collect();
        t += &format!(
            "record mult-pr-{n}\nref \"product with several factors, each adding a bounded entropy increment\"\ndomain both\nvars X; {}\nsupport units\nsuite lognormal(0,0.5)\nsuite lognormal(0,1)\n{lets}show H[X*{}] <= H[X] + {ks}\nend\n\n",
            ys.join("; "),
            ys.join("*"),
        );
    }
    for (n, m) in [(1usize, 1usize), (2, 1), (1, 2), (2, 2), (3, 1)] {
        let xs = names("X", n);
        let ys = names("Y", m);
        let lhs = format!("{}-{}", xs.join("+"), ys.join("-"));
        t += &format!(
            "record pr-iterated-{n}-{m}\nref \"iterated sums and differences of independent copies with an explicit linear factor\"\ndomain both\nvars iid({},{})\nsupport additive\nsuite gaussian(0,1)\nlet logK := H[X1+Y1] - H[X1]\nshow H[{lhs}] <= H[X1] + {}*logK\nend\n\n",
            xs.join(","),
            ys.join(","),
            n + 2 * m,
        );
    }
    for n in [2usize, 3] {
        let xs = names("X", n);
        let ys = names("Y", n);
        let pn = product(&xs);
        let qn = product(&ys);
        let mids = join_terms((2..=n).map(|k| format!("2*Ht[{}]", product(&xs[..k]))));
        t += &format!(
            "record ring-pr-iterated-{n}\nref \"sum of two products of independent copies, iterated form\"\ndomain both\nvars iid({},{})\nsupport domain\nsuite lognormal(0,0.5)\nshow H[{pn}+{qn}] <= 3*Ht[{pn}] + {mids} + {}*H[X1-Y1] + H[X1+Y1] - {}*Ht[X1]\nend\n\n",
            xs.join(","),
            ys.join(","),
            n - 1,
            3 * n,
        );
        t += &format!(
            "record ring-pr-condensed-{n}\nref \"sum of two products of independent copies, condensed form\"\ndomain both\nvars iid({},{})\nsupport domain\nsuite lognormal(0,0.5)\nlet st := Ht[X1*Y1] - Ht[X1]\nlet s := H[X1+Y1] - H[X1]\nlet d := H[X1-Y1] - H[X1]\nshow H[{pn}+{qn}] <= H[{pn}] + {}*st + {}*d + s\nend\n\n",
            xs.join(","),
            ys.join(","),
            (n + 2) * (n - 1),
            n - 1,
        );
    }
    for (m, n) in [(2usize, 2usize), (2, 3), (3, 2), (3, 3)] {
        let grid: Vec<Vec<String>> = (1..=m).map(|i| (1..=n).map(|j| format!("X{i}{j}")).collect()).collect();
        let all: Vec<String> = grid.iter().flatten().cloned().collect();
        let sum = grid.iter().map(|row| product(row)).collect::<Vec<_>>().join("+");
        let first = product(&grid[0]);
        let head = format!(
            "vars iid({})\nsupport domain\nlet st := Ht[X11*X12] - Ht[X11]\nlet s := H[X11+X12] - H[X11]\nlet d := H[X11-X12] - H[X11]\n",
            all.join(",")
        );
        let d1 = format!(
            "show [from-row] H[{sum}] <= H[{first}] + {}*st + {}*d + {}*s\n",
            (m - 1) * (n + 2) * (n - 1),
            (m - 1) * (n - 1),
            m - 1
        );
        let st2 = ((m - 1) * (n + 2) + 1) * (n - 1);
        let (d2, s2) = ((m - 1) * (n - 1), m - 1);
        t += &format!(
            "record general-ring-pr-{m}x{n}\nref \"sum of several products of independent copies in an integral domain\"\ndomain discrete\n{head}{d1}show [from-single] H[{sum}] <= H[X11] + {st2}*st + {d2}*d + {s2}*s\nend\n\n"
        );
        t += &format!(
            "record general-ring-pr-continuous-{m}x{n}\nref \"sum of several products of independent real copies\"\ndomain continuous\n{}suite lognormal(0,0.5)\n{}{d1}show [from-single] H[{sum}] <= H[X11] + {st2}*st + {d2}*d + {s2}*s + {}*ElogAbs[X11]\nend\n\n",
            head.lines().take(2).map(|l| format!("{l}\n")).collect::<String>(),
            head.lines().skip(2).map(|l| format!("{l}\n")).collect::<String>(),
            n - 1
        );
    }
    t
}

/// Every built-in record: the embedded registry followed by the generated families.
pub fn registry() -> &'static [InequalityRecord] {
    static REGISTRY: OnceLock<Vec<InequalityRecord>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut v = parse_records(REGISTRY_TEXT).expect("embedded registry parses");
        v.extend(parse_records(&generated_text()).expect("generated registry parses"));
        v
    })
}

/// The whole registry in text form.
pub fn registry_text() -> String {
    registry().iter().map(|r| r.to_text()).collect::<Vec<_>>().join("\n")
}

pub fn find_record(name: &str) -> Result<&'static InequalityRecord> {
    registry().iter().find(|r| r.name == name).ok_or_else(|| Error::UnknownRecord(name.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    EstimatedHolds,
    EstimatedInconclusive,
    Violated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::EstimatedHolds => "estimated-holds",
            Verdict::EstimatedInconclusive => "estimated-inconclusive",
            Verdict::Violated => "violated",
        }
    }

    pub fn passes(self) -> bool {
        matches!(self, Verdict::Holds | Verdict::EstimatedHolds)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlackReport {
    pub record: String,
    pub show: String,
    pub bindings: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs` for `<=`, `lhs - rhs` for `>=`, `-|lhs - rhs|` for `=`.
    pub slack: f64,
    pub verdict: Verdict,
    /// Standard error of the slack (continuous only).
    pub ci: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckConfig {
    pub tol: f64,
    pub cap: usize,
    pub mc: McConfig,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { tol: DISCRETE_TOL, cap: DEFAULT_SUPPORT_CAP, mc: McConfig::default() }
    }
}

pub enum RecordBindings {
    Discrete(Bindings),
    Continuous(ContinuousBindings),
}

/// Evaluates `lhs`, `rhs` and the signed difference `rhs - lhs`; linear sides
/// are differenced symbolically so shared atoms cancel exactly.
fn evaluate_show(show: &Show, ev: &mut dyn AtomEval) -> Result<(Estimate, Estimate, Estimate)> {
    let lhs = show.lhs.evaluate(ev)?;
    let rhs = show.rhs.evaluate(ev)?;
    let diff = match (show.lhs.as_quantity(), show.rhs.as_quantity()) {
        (Some(l), Some(r)) => r.minus(l).collect().evaluate(ev)?,
        _ => Estimate { value: rhs.value - lhs.value, std_error: lhs.std_error.hypot(rhs.std_error) },
    };
    Ok((lhs, rhs, diff))
}

fn signed(rel: Relation, diff: f64) -> f64 {
    match rel {
        Relation::Le => diff,
        Relation::Ge => -diff,
        Relation::Eq => -diff.abs(),
    }
}

pub fn check_discrete(r: &InequalityRecord, b: &Bindings, cfg: &CheckConfig) -> Result<Vec<SlackReport>> {
    if !r.domain.discrete() {
        return Err(Error::DomainMismatch(format!("record {} is continuous only", r.name)));
    }
    let mut ev = ExactEvaluator::with_cap(b, cfg.cap);
    let summary = b.describe();
    let mut out = Vec::new();
    for (label, show) in r.expanded_shows()? {
        let (lhs, rhs, diff) = evaluate_show(&show, &mut ev)?;
        let slack = signed(show.relation, diff.value);
        let verdict = if slack >= -cfg.tol { Verdict::Holds } else { Verdict::Violated };
        out.push(SlackReport {
            record: r.name.clone(),
            show: label,
            bindings: summary.clone(),
            lhs: lhs.value,
            rhs: rhs.value,
            slack,
            verdict,
            ci: None,
            seed: None,
        });
    }
    Ok(out)
}

fn describe_continuous(b: &ContinuousBindings) -> String {
    b.iter().map(|(k, m)| format!("{k}={m}")).collect::<Vec<_>>().join(" ")
}

pub fn check_continuous(r: &InequalityRecord, b: &ContinuousBindings, cfg: &CheckConfig) -> Result<Vec<SlackReport>> {
    if !r.domain.continuous() {
        return Err(Error::DomainMismatch(format!("record {} is discrete only", r.name)));
    }
    for v in r.declared_vars() {
        if !b.contains_key(&v) {
            return Err(Error::UnboundVariable(v));
        }
    }
    let mut ev = McEvaluator::new(b, cfg.mc.clone());
    let summary = describe_continuous(b);
    let mut out = Vec::new();
    for (label, show) in r.expanded_shows()? {
        let (lhs, rhs, diff) = evaluate_show(&show, &mut ev)?;
        let slack = signed(show.relation, diff.value);
        let se = diff.std_error;
        let verdict = if !slack.is_finite() || (se > 0.0 && ev.tail_warning) {
            Verdict::EstimatedInconclusive
        } else if se == 0.0 {
            if slack >= -cfg.tol {
                Verdict::Holds
            } else {
                Verdict::Violated
            }
        } else if slack >= -CI_MULTIPLIER * se - cfg.tol {
            Verdict::EstimatedHolds
        } else {
            Verdict::Violated
        };
        out.push(SlackReport {
            record: r.name.clone(),
            show: label,
            bindings: summary.clone(),
            lhs: lhs.value,
            rhs: rhs.value,
            slack,
            verdict,
            ci: Some(se),
            seed: Some(cfg.mc.seed),
        });
    }
    Ok(out)
}

pub fn check_inequality(r: &InequalityRecord, b: &RecordBindings, cfg: &CheckConfig) -> Result<Vec<SlackReport>> {
    match b {
        RecordBindings::Discrete(b) => check_discrete(r, b, cfg),
        RecordBindings::Continuous(b) => check_continuous(r, b, cfg),
    }
}

/// Binds every declared variable of `r` to independent copies of `model`.
pub fn suite_bindings(r: &InequalityRecord, model: &ContinuousModel) -> ContinuousBindings {
    r.declared_vars().into_iter().map(|v| (v, model.clone())).collect()
}

/// Runs every suite model of `r` under each seed.
pub fn suite_check(r: &InequalityRecord, seeds: &[u64], cfg: &CheckConfig) -> Result<Vec<SlackReport>> {
    let mut out = Vec::new();
    for model in &r.suites {
        let b = suite_bindings(r, model);
        for &seed in seeds {
            let mut c = cfg.clone();
            c.mc.seed = seed;
            out.extend(check_continuous(r, &b, &c)?);
        }
    }
    Ok(out)
}

/// Random support sampler settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub max_support: usize,
    /// Inclusive integer range.
    pub range: (i64, i64),
    pub moduli: Vec<u64>,
    /// Largest number of atoms of a random joint law.
    pub max_joint: usize,
    /// Probabilities are compositions of this integer.
    pub total_weight: u32,
    /// Seeds per suite model in continuous sweeps.
    pub mc_seeds: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { max_support: 6, range: (-20, 20), moduli: vec![5, 7, 12], max_joint: 12, total_weight: 64, mc_seeds: 1 }
    }
}

fn is_prime(m: u64) -> bool {
    m >= 2 && (2..).take_while(|d| d * d <= m).all(|d| !m.is_multiple_of(d))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// One value pool per trial, so every variable lives in the same group.
fn value_pool(kind: SupportKind, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Vec<GroupValue> {
    let (lo, hi) = cfg.range;
    let ints = |keep: &dyn Fn(i64) -> bool| -> Vec<GroupValue> { (lo..=hi).filter(|v| keep(*v)).map(GroupValue::int).collect() };
    let moduli: Vec<u64> = match kind {
        SupportKind::Integer | SupportKind::Positive => Vec::new(),
        SupportKind::Domain => cfg.moduli.iter().copied().filter(|m| is_prime(*m)).collect(),
        _ => cfg.moduli.clone(),
    };
    if !moduli.is_empty() && rng.random_bool(0.5) {
        let m = moduli[rng.random_range(0..moduli.len())];
        let keep = |r: u64| match kind {
            SupportKind::Additive => true,
            SupportKind::Units => gcd(r, m) == 1,
            _ => r != 0,
        };
        return (0..m).filter(|r| keep(*r)).map(|r| GroupValue::IntMod { res: r, m }).collect();
    }
    match kind {
        SupportKind::Additive | SupportKind::Integer => ints(&|_| true),
        SupportKind::Units | SupportKind::Domain => ints(&|v| v != 0),
        SupportKind::Positive => ints(&|v| v > 0),
    }
}

/// Random composition of `total` into `parts` positive integers.
fn composition(total: u32, parts: usize, rng: &mut ChaCha8Rng) -> Vec<u128> {
    let mut cuts: Vec<u32> = index::sample(rng, total as usize - 1, parts - 1).into_iter().map(|i| i as u32 + 1).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        out.push((c - prev) as u128);
        prev = c;
    }
    out
}

fn random_dist(pool: &[GroupValue], cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Result<FiniteDist> {
    let s = rng.random_range(1..=cfg.max_support.min(pool.len()).max(1));
    let picks = index::sample(rng, pool.len(), s).into_vec();
    let weights = composition(cfg.total_weight, s, rng);
    FiniteDist::from_weights(picks.into_iter().map(|i| pool[i].clone()).zip(weights).collect())
}

fn random_joint(coords: &[String], pool: &[GroupValue], cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Result<JointDist> {
    let k = coords.len() as u32;
    let space = (pool.len() as u64).saturating_pow(k).min(usize::MAX as u64) as usize;
    let s = rng.random_range(1..=cfg.max_joint.min(space).max(1));
    let picks = index::sample(rng, space, s).into_vec();
    let weights = composition(cfg.total_weight, s, rng);
    let items = picks
        .into_iter()
        .zip(weights)
        .map(|(mut code, w)| {
            let mut t = Vec::with_capacity(coords.len());
            for _ in 0..k {
                t.push(pool[code % pool.len()].clone());
                code /= pool.len();
            }
            (Tuple::from(t), w)
        })
        .collect();
    JointDist::from_weights(coords.to_vec(), items)
}

/// Draws random discrete bindings for every variable group of `r`.
pub fn sample_bindings(r: &InequalityRecord, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Result<Bindings> {
    let pool = value_pool(r.support, cfg, rng);
    let mut b = Bindings::new();
    for g in &r.vars {
        match g {
            VarGroup::Single(n) => b.bind(n, &random_dist(&pool, cfg, rng)?)?,
            VarGroup::Iid(ns) => {
                let names: Vec<&str> = ns.iter().map(|s| s.as_str()).collect();
                b.bind_iid(&names, &random_dist(&pool, cfg, rng)?)?;
            }
            VarGroup::Joint(ns) => b.bind_joint(random_joint(ns, &pool, cfg, rng)?)?,
            VarGroup::Coupled { pair, independent, names } => {
                let j = if *independent {
                    let dx = random_dist(&pool, cfg, rng)?;
                    let dy = random_dist(&pool, cfg, rng)?;
                    JointDist::join_independent(&[(&pair[0], &dx), (&pair[1], &dy)])?
                } else {
                    random_joint(pair, &pool, cfg, rng)?
                };
                let ns: [&str; 5] = std::array::from_fn(|i| names[i].as_str());
                b.bind_coupled(&j, ns)?;
            }
        }
    }
    Ok(b)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of one sweep trial; depends only on the master seed, record name and trial index.
pub fn trial_seed(seed: u64, record: &str, trial: u64) -> u64 {
    derive_seed(seed, fnv1a(record), trial)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Discrete,
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub record: String,
    pub mode: SweepMode,
    pub trials: usize,
    pub seed: u64,
    pub min_slack: f64,
    pub worst_show: String,
    pub worst_trial: usize,
    pub worst_bindings: String,
    pub violations: usize,
    pub verdict: Verdict,
}

/// Discrete random sweep over `n_trials` sampled bindings, parallel over trials.
pub fn random_sweep(
    r: &InequalityRecord,
    sampler: &SamplerConfig,
    n_trials: usize,
    seed: u64,
    cfg: &CheckConfig,
) -> Result<SweepResult> {
    if !r.domain.discrete() {
        return Err(Error::DomainMismatch(format!("record {} is continuous only", r.name)));
    }
    if n_trials == 0 {
        return Err(Error::InvalidArgument("a sweep needs at least one trial".into()));
    }
    let run = |trial: usize| -> Result<(f64, String, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, &r.name, trial as u64));
        let b = sample_bindings(r, sampler, &mut rng)?;
        let reports = check_discrete(r, &b, cfg)?;
        let bad = reports.iter().filter(|x| x.verdict == Verdict::Violated).count();
        let worst = reports.iter().fold(None::<&SlackReport>, |acc, x| match acc {
            Some(a) if a.slack <= x.slack => Some(a),
            _ => Some(x),
        });
        let w = worst.expect("record has shows");
        Ok((w.slack, w.show.clone(), bad))
    };
    let results: Vec<Result<(f64, String, usize)>> = (0..n_trials).into_par_iter().map(run).collect();
    let mut best: Option<(f64, String, usize)> = None;
    let mut violations = 0;
    for (trial, res) in results.into_iter().enumerate() {
        let (slack, show, bad) = res?;
        violations += bad;
        if best.as_ref().is_none_or(|(s, _, _)| slack < *s) {
            best = Some((slack, show, trial));
        }
    }
    let (min_slack, worst_show, worst_trial) = best.expect("at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, &r.name, worst_trial as u64));
    let worst_bindings = sample_bindings(r, sampler, &mut rng)?.describe();
    Ok(SweepResult {
        record: r.name.clone(),
        mode: SweepMode::Discrete,
        trials: n_trials,
        seed,
        min_slack,
        worst_show,
        worst_trial,
        worst_bindings,
        violations,
        verdict: if violations == 0 { Verdict::Holds } else { Verdict::Violated },
    })
}

/// Monte Carlo sweep over the record's suites, `sampler.mc_seeds` seeds per model.
pub fn continuous_sweep(r: &InequalityRecord, sampler: &SamplerConfig, seed: u64, cfg: &CheckConfig) -> Result<SweepResult> {
    if !r.domain.continuous() {
        return Err(Error::DomainMismatch(format!("record {} is discrete only", r.name)));
    }
    let seeds: Vec<u64> = (0..sampler.mc_seeds.max(1) as u64).map(|t| trial_seed(seed, &r.name, t)).collect();
    let reports = suite_check(r, &seeds, cfg)?;
    let mut worst = 0;
    for (i, x) in reports.iter().enumerate() {
        if x.slack < reports[worst].slack {
            worst = i;
        }
    }
    let verdict = reports.iter().map(|x| x.verdict).max().expect("suite reports");
    let w = &reports[worst];
    Ok(SweepResult {
        record: r.name.clone(),
        mode: SweepMode::Continuous,
        trials: reports.len() / r.shows().count(),
        seed,
        min_slack: w.slack,
        worst_show: w.show.clone(),
        worst_trial: worst / r.shows().count(),
        worst_bindings: w.bindings.clone(),
        violations: reports.iter().filter(|x| x.verdict == Verdict::Violated).count(),
        verdict,
    })
}
