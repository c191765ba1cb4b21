//! Linear combinations of entropy functionals over random-variable expressions.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! quantity  := ['+'|'-'] qterm (('+'|'-') qterm)*
//! qterm     := factor ('*' factor)*
//! factor    := rational | 'log(' integer ')' | functional | let-name
//! functional:= H[list ['|' list]] | Ht[...] | I[list ';' list ['|' list]]
//!            | ElogAbs[rv] | Coll[rv] | Pmax[rv] | Pmin[rv] | SidonKept[rv] | SidonBound[rv]
//! objective := quantity | ratio(objective, objective)
//!            | max(objective, ...) | min(objective, ...)
//! ```
//!
//! `h` and `ht` are accepted as spellings of `H` and `Ht`.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::expr::{is_ident_char, RvExpr, RvParser};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Atom {
    /// `H[args | given]`; `mult` selects the multiplicative entropy `Ht`.
    Entropy { mult: bool, args: Vec<RvExpr>, given: Vec<RvExpr> },
    Mutual { a: Vec<RvExpr>, b: Vec<RvExpr>, given: Vec<RvExpr> },
    ElogAbs(RvExpr),
    /// `Σ P(a)²`.
    Coll(RvExpr),
    Pmax(RvExpr),
    Pmin(RvExpr),
    /// Probability kept by the Sidon pruning construction.
    SidonKept(RvExpr),
    /// Guaranteed lower bound on that probability.
    SidonBound(RvExpr),
    Let(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub coef: BigRational,
    /// Extra factor `log(n)`.
    pub log: Option<u64>,
    pub atom: Option<Atom>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Quantity {
    pub terms: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Objective {
    Quantity(Quantity),
    Ratio(Box<Objective>, Box<Objective>),
    Max(Vec<Objective>),
    Min(Vec<Objective>),
}

pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

impl Atom {
    pub fn entropy(args: Vec<RvExpr>) -> Atom {
        Atom::Entropy { mult: false, args, given: vec![] }
    }

    /// Every expression the atom mentions.
    pub fn exprs(&self) -> Vec<&RvExpr> {
        match self {
            Atom::Entropy { args, given, .. } => args.iter().chain(given).collect(),
            Atom::Mutual { a, b, given } => a.iter().chain(b).chain(given).collect(),
            Atom::ElogAbs(e) | Atom::Coll(e) | Atom::Pmax(e) | Atom::Pmin(e) | Atom::SidonKept(e) | Atom::SidonBound(e) => {
                vec![e]
            }
            Atom::Let(_) => vec![],
        }
    }
}

impl Term {
    pub fn atom(coef: BigRational, atom: Atom) -> Term {
        Term { coef, log: None, atom: Some(atom) }
    }

    /// Numeric factor `coef · log(n)`.
    pub fn scale(&self) -> f64 {
        rational_to_f64(&self.coef) * self.log.map_or(1.0, |n| (n as f64).ln())
    }
}

impl Quantity {
    pub fn parse(text: &str) -> Result<Quantity> {
        let mut p = QParser { rv: RvParser::new(text, 0) };
        let q = p.quantity()?;
        p.finish()?;
        Ok(q)
    }

    pub fn constant(coef: BigRational, log: Option<u64>) -> Quantity {
        Quantity { terms: vec![Term { coef, log, atom: None }] }
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.terms.iter().filter_map(|t| t.atom.as_ref())
    }

    /// Variable names in order of first appearance.
    pub fn vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for a in self.atoms() {
            for e in a.exprs() {
                for v in e.vars() {
                    if !out.iter().any(|o| o == v) {
                        out.push(v.to_string());
                    }
                }
            }
        }
        out
    }

    pub fn let_refs(&self) -> Vec<&str> {
        self.atoms()
            .filter_map(|a| match a {
                Atom::Let(n) => Some(n.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn scaled(&self, k: &BigRational) -> Quantity {
        Quantity { terms: self.terms.iter().map(|t| Term { coef: &t.coef * k, ..t.clone() }).collect() }
    }

    /// `self - other`, term lists concatenated.
    pub fn minus(&self, other: &Quantity) -> Quantity {
        let mut terms = self.terms.clone();
        terms.extend(other.scaled(&-BigRational::one()).terms);
        Quantity { terms }
    }

    /// Replace let references by their definitions, recursively.
    pub fn expand(&self, lets: &[(String, Quantity)]) -> Result<Quantity> {
        let mut terms = Vec::new();
        for t in &self.terms {
            match &t.atom {
                Some(Atom::Let(name)) => {
                    let def = lets
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, q)| q)
                        .ok_or_else(|| Error::UnknownLet(name.clone()))?;
                    let inner = def.expand(lets)?;
                    for it in inner.terms {
                        let log = match (t.log, it.log) {
                            (None, l) | (l, None) => l,
                            (Some(_), Some(_)) => {
                                return Err(Error::InvalidArgument(format!("let `{name}` would multiply two logarithms")))
                            }
                        };
                        terms.push(Term { coef: &t.coef * &it.coef, log, atom: it.atom });
                    }
                }
                _ => terms.push(t.clone()),
            }
        }
        Ok(Quantity { terms })
    }

    /// Merge terms with identical atom and log factor; drops zero terms.
    pub fn collect(&self) -> Quantity {
        let mut out: Vec<Term> = Vec::new();
        for t in &self.terms {
            match out.iter_mut().find(|o| o.atom == t.atom && o.log == t.log) {
                Some(o) => o.coef += &t.coef,
                None => out.push(t.clone()),
            }
        }
        out.retain(|t| !t.coef.is_zero());
        Quantity { terms: out }
    }
}

fn fmt_list(f: &mut fmt::Formatter<'_>, xs: &[RvExpr]) -> fmt::Result {
    for (i, e) in xs.iter().enumerate() {
        if i > 0 {
            write!(f, ",")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Entropy { mult, args, given } => {
                write!(f, "{}[", if *mult { "Ht" } else { "H" })?;
                fmt_list(f, args)?;
                if !given.is_empty() {
                    write!(f, "|")?;
                    fmt_list(f, given)?;
                }
                write!(f, "]")
            }
            Atom::Mutual { a, b, given } => {
                write!(f, "I[")?;
                fmt_list(f, a)?;
                write!(f, ";")?;
                fmt_list(f, b)?;
                if !given.is_empty() {
                    write!(f, "|")?;
                    fmt_list(f, given)?;
                }
                write!(f, "]")
            }
            Atom::ElogAbs(e) => write!(f, "ElogAbs[{e}]"),
            Atom::Coll(e) => write!(f, "Coll[{e}]"),
            Atom::Pmax(e) => write!(f, "Pmax[{e}]"),
            Atom::Pmin(e) => write!(f, "Pmin[{e}]"),
            Atom::SidonKept(e) => write!(f, "SidonKept[{e}]"),
            Atom::SidonBound(e) => write!(f, "SidonBound[{e}]"),
            Atom::Let(n) => write!(f, "{n}"),
        }
    }
}

fn fmt_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            let neg = t.coef.is_negative();
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let mag = t.coef.abs();
            let mut parts = Vec::new();
            if !mag.is_one() || (t.log.is_none() && t.atom.is_none()) {
                parts.push(fmt_rational(&mag));
            }
            if let Some(n) = t.log {
                parts.push(format!("log({n})"));
            }
            if let Some(a) = &t.atom {
                parts.push(a.to_string());
            }
            write!(f, "{}", parts.join("*"))?;
        }
        Ok(())
    }
}

impl Objective {
    pub fn parse(text: &str) -> Result<Objective> {
        let mut p = QParser { rv: RvParser::new(text, 0) };
        let o = p.objective()?;
        p.finish()?;
        Ok(o)
    }

    pub fn quantities(&self) -> Vec<&Quantity> {
        match self {
            Objective::Quantity(q) => vec![q],
            Objective::Ratio(a, b) => a.quantities().into_iter().chain(b.quantities()).collect(),
            Objective::Max(xs) | Objective::Min(xs) => xs.iter().flat_map(|x| x.quantities()).collect(),
        }
    }

    pub fn map_quantities(&self, f: &mut dyn FnMut(&Quantity) -> Result<Quantity>) -> Result<Objective> {
        Ok(match self {
            Objective::Quantity(q) => Objective::Quantity(f(q)?),
            Objective::Ratio(a, b) => Objective::Ratio(Box::new(a.map_quantities(f)?), Box::new(b.map_quantities(f)?)),
            Objective::Max(xs) => Objective::Max(xs.iter().map(|x| x.map_quantities(f)).collect::<Result<_>>()?),
            Objective::Min(xs) => Objective::Min(xs.iter().map(|x| x.map_quantities(f)).collect::<Result<_>>()?),
        })
    }

    pub fn as_quantity(&self) -> Option<&Quantity> {
        match self {
            Objective::Quantity(q) => Some(q),
            _ => None,
        }
    }

    pub fn vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for q in self.quantities() {
            for v in q.vars() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, xs: &[&Objective]| -> fmt::Result {
            write!(f, "{name}(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, ")")
        };
        match self {
            Objective::Quantity(q) => write!(f, "{q}"),
            Objective::Ratio(a, b) => list(f, "ratio", &[a, b]),
            Objective::Max(xs) => list(f, "max", &xs.iter().collect::<Vec<_>>()),
            Objective::Min(xs) => list(f, "min", &xs.iter().collect::<Vec<_>>()),
        }
    }
}

/// A value with a standard error; exact evaluations carry zero error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Estimate {
        Estimate { value, std_error: 0.0 }
    }
}

/// Evaluates single atoms; quantities and objectives are assembled on top.
pub trait AtomEval {
    fn atom(&mut self, atom: &Atom) -> Result<Estimate>;
}

impl Quantity {
    /// Linear combination of atom values; errors add in quadrature.
    pub fn evaluate(&self, ev: &mut dyn AtomEval) -> Result<Estimate> {
        let mut value = crate::numeric::CompensatedSum::new();
        let mut var = 0.0;
        for t in &self.terms {
            let k = t.scale();
            match &t.atom {
                None => value.add(k),
                Some(a) => {
                    let e = ev.atom(a)?;
                    value.add(k * e.value);
                    var += (k * e.std_error).powi(2);
                }
            }
        }
        Ok(Estimate { value: value.value(), std_error: var.sqrt() })
    }
}

impl Objective {
    pub fn evaluate(&self, ev: &mut dyn AtomEval) -> Result<Estimate> {
        match self {
            Objective::Quantity(q) => q.evaluate(ev),
            Objective::Ratio(a, b) => {
                let (a, b) = (a.evaluate(ev)?, b.evaluate(ev)?);
                let r = a.value / b.value;
                let rel = (a.std_error / a.value).powi(2) + (b.std_error / b.value).powi(2);
                let se = if a.std_error == 0.0 && b.std_error == 0.0 { 0.0 } else { r.abs() * rel.sqrt() };
                Ok(Estimate { value: r, std_error: se })
            }
            Objective::Max(xs) | Objective::Min(xs) => {
                let want_max = matches!(self, Objective::Max(_));
                let mut best: Option<Estimate> = None;
                for x in xs {
                    let e = x.evaluate(ev)?;
                    let better = match best {
                        None => true,
                        Some(b) => (want_max && e.value > b.value) || (!want_max && e.value < b.value),
                    };
                    if better {
                        best = Some(e);
                    }
                }
                best.ok_or_else(|| Error::InvalidArgument(format!("empty {}", if want_max { "max" } else { "min" })))
            }
        }
    }
}

const FUNCTIONALS: &[&str] = &["H", "h", "Ht", "ht", "I", "ElogAbs", "Coll", "Pmax", "Pmin", "SidonKept", "SidonBound"];

struct QParser<'a> {
    rv: RvParser<'a>,
}

enum Factor {
    Rational(BigRational),
    Log(u64),
    Atom(Atom),
}

impl<'a> QParser<'a> {
    fn finish(&mut self) -> Result<()> {
        self.rv.skip_ws();
        if self.rv.pos < self.rv.src.len() {
            return Err(self.rv.error("unexpected trailing input"));
        }
        Ok(())
    }

    fn rest(&self) -> &'a str {
        &self.rv.src[self.rv.pos..]
    }

    /// Identifier immediately followed by `(`, without consuming anything.
    fn peek_call(&mut self) -> Option<&'a str> {
        self.rv.skip_ws();
        let rest = self.rest();
        let len = rest.chars().take_while(|&c| is_ident_char(c)).count();
        if len > 0 && rest[len..].trim_start().starts_with('(') {
            Some(&rest[..len])
        } else {
            None
        }
    }

    fn objective(&mut self) -> Result<Objective> {
        let name = self.peek_call();
        match name {
            Some(n @ ("ratio" | "max" | "min")) => {
                self.rv.pos += self.rest().find('(').expect("peeked") + 1;
                let mut args = vec![self.objective()?];
                while self.rv.eat(',') {
                    args.push(self.objective()?);
                }
                if !self.rv.eat(')') {
                    return Err(self.rv.error("expected `)`"));
                }
                match n {
                    "ratio" => {
                        if args.len() != 2 {
                            return Err(self.rv.error("ratio takes two arguments"));
                        }
                        let b = args.pop().expect("two");
                        let a = args.pop().expect("two");
                        Ok(Objective::Ratio(Box::new(a), Box::new(b)))
                    }
                    "max" => Ok(Objective::Max(args)),
                    _ => Ok(Objective::Min(args)),
                }
            }
            _ => Ok(Objective::Quantity(self.quantity()?)),
        }
    }

    fn quantity(&mut self) -> Result<Quantity> {
        let mut terms = Vec::new();
        let mut sign = if self.rv.eat('-') {
            -1
        } else {
            self.rv.eat('+');
            1
        };
        loop {
            let mut t = self.term()?;
            if sign < 0 {
                t.coef = -t.coef;
            }
            terms.push(t);
            self.rv.skip_ws();
            sign = match self.rv.peek() {
                Some('+') => 1,
                Some('-') => -1,
                _ => break,
            };
            self.rv.pos += 1;
        }
        Ok(Quantity { terms })
    }

    fn term(&mut self) -> Result<Term> {
        let mut term = Term { coef: BigRational::one(), log: None, atom: None };
        loop {
            let start = self.rv.pos;
            match self.factor()? {
                Factor::Rational(q) => term.coef *= q,
                Factor::Log(n) => {
                    if term.log.replace(n).is_some() {
                        self.rv.pos = start;
                        return Err(self.rv.error("at most one log(...) factor per term"));
                    }
                }
                Factor::Atom(a) => {
                    if term.atom.replace(a).is_some() {
                        self.rv.pos = start;
                        return Err(self.rv.error("a term may contain only one functional"));
                    }
                }
            }
            if !self.rv.eat('*') {
                return Ok(term);
            }
        }
    }

    fn number(&mut self) -> Result<Option<BigRational>> {
        self.rv.skip_ws();
        let Some(int) = self.rv.digits() else { return Ok(None) };
        let mut value = BigRational::from_integer(int.parse::<BigInt>().expect("digits"));
        if self.rest().starts_with('.') {
            self.rv.pos += 1;
            let start = self.rv.pos;
            let frac_len = self.rest().chars().take_while(|c| c.is_ascii_digit()).count();
            if frac_len == 0 {
                return Err(self.rv.error("expected digits after `.`"));
            }
            self.rv.pos += frac_len;
            let frac: BigInt = self.rv.src[start..start + frac_len].parse().expect("digits");
            value += BigRational::new(frac, num_traits::pow(BigInt::from(10u8), frac_len));
        }
        let save = self.rv.pos;
        if self.rv.eat('/') {
            match self.rv.digits() {
                Some(d) => {
                    let d: BigInt = d.parse().expect("digits");
                    if d.is_zero() {
                        return Err(self.rv.error("zero denominator"));
                    }
                    value /= BigRational::from_integer(d);
                }
                None => {
                    self.rv.pos = save;
                    return Err(self.rv.error("expected a denominator"));
                }
            }
        }
        Ok(Some(value))
    }

    fn factor(&mut self) -> Result<Factor> {
        if let Some(q) = self.number()? {
            return Ok(Factor::Rational(q));
        }
        self.rv.skip_ws();
        let start = self.rv.pos;
        let Some(name) = self.rv.ident() else {
            return Err(self.rv.error("expected a coefficient, functional or let name"));
        };
        self.rv.skip_ws();
        if name == "log" && self.rv.peek() == Some('(') {
            self.rv.pos += 1;
            let Some(d) = self.rv.digits() else { return Err(self.rv.error("expected a positive integer")) };
            let n: u64 = d.parse().map_err(|_| self.rv.error("integer too large"))?;
            if n == 0 {
                return Err(self.rv.error("log argument must be positive"));
            }
            if !self.rv.eat(')') {
                return Err(self.rv.error("expected `)`"));
            }
            return Ok(Factor::Log(n));
        }
        if self.rv.peek() != Some('[') {
            return Ok(Factor::Atom(Atom::Let(name)));
        }
        if !FUNCTIONALS.contains(&name.as_str()) {
            return Err(Error::UnknownFunctional { name, offset: start });
        }
        self.rv.pos += 1;
        let atom = match name.as_str() {
            "H" | "h" | "Ht" | "ht" => {
                let args = self.list()?;
                let given = if self.rv.eat('|') { self.list()? } else { vec![] };
                Atom::Entropy { mult: name.len() == 2, args, given }
            }
            "I" => {
                let a = self.list()?;
                if !self.rv.eat(';') {
                    return Err(self.rv.error("expected `;`"));
                }
                let b = self.list()?;
                let given = if self.rv.eat('|') { self.list()? } else { vec![] };
                Atom::Mutual { a, b, given }
            }
            other => {
                let e = self.rv.expr()?;
                match other {
                    "ElogAbs" => Atom::ElogAbs(e),
                    "Coll" => Atom::Coll(e),
                    "Pmax" => Atom::Pmax(e),
                    "Pmin" => Atom::Pmin(e),
                    "SidonKept" => Atom::SidonKept(e),
                    _ => Atom::SidonBound(e),
                }
            }
        };
        if !self.rv.eat(']') {
            return Err(self.rv.error("expected `]`"));
        }
        Ok(Factor::Atom(atom))
    }

    fn list(&mut self) -> Result<Vec<RvExpr>> {
        let mut out = vec![self.rv.expr()?];
        while self.rv.eat(',') {
            out.push(self.rv.expr()?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(s: &str) -> String {
        Quantity::parse(s).unwrap().to_string()
    }

    #[test]
    fn parse_and_print() {
        let q = Quantity::parse("H[X+Y] - 0.5*H[X] - 0.5*H[Y]").unwrap();
        assert_eq!(q.terms.len(), 3);
        assert_eq!(q.to_string(), "H[X+Y] - 1/2*H[X] - 1/2*H[Y]");
        assert_eq!(rt("2*H[X,Y] - H[X+Y]"), "2*H[X,Y] - H[X+Y]");
        assert_eq!(rt("-log(2) + log(2)*Coll[X]"), "-log(2) + log(2)*Coll[X]");
        assert_eq!(rt("h[X | Y]+I[X;Y|Z] - 3/6*logK"), "H[X|Y] + I[X;Y|Z] - 1/2*logK");
        assert_eq!(rt("ht[(X+Y)/(Z+W)]"), "Ht[(X+Y)/(Z+W)]");
        assert_eq!(rt("3"), "3");
        for s in ["H[X*Y-Z*W] - 5*Ht[X*Y]", "1/2*log(3)*ElogAbs[X]", "-2*I[X1;Y2|S]", "0*H[X]"] {
            let once = rt(s);
            assert_eq!(rt(&once), once);
        }
    }

    #[test]
    fn errors_carry_offsets() {
        match Quantity::parse("H[X") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("{other:?}"),
        }
        match Quantity::parse("H[X] + Foo[Y]") {
            Err(Error::UnknownFunctional { name, offset }) => {
                assert_eq!(name, "Foo");
                assert_eq!(offset, 7);
            }
            other => panic!("{other:?}"),
        }
        assert!(Quantity::parse("H[X]*H[Y]").is_err());
        assert!(Quantity::parse("H[X] H[Y]").is_err());
    }

    #[test]
    fn objectives() {
        let o = Objective::parse("ratio(max(H[X+X'],H[X*X']),H[X])").unwrap();
        assert_eq!(o.to_string(), "ratio(max(H[X+X'], H[X*X']), H[X])");
        assert_eq!(Objective::parse(&o.to_string()).unwrap(), o);
        assert_eq!(o.vars(), vec!["X".to_string(), "X'".to_string()]);
        assert!(matches!(Objective::parse("log(2)*H[X]").unwrap(), Objective::Quantity(_)));
    }

    #[test]
    fn let_expansion() {
        let lets = vec![("logK".to_string(), Quantity::parse("H[X+Y] - H[X]").unwrap())];
        let q = Quantity::parse("H[X] + 3*logK").unwrap().expand(&lets).unwrap();
        assert_eq!(q.to_string(), "H[X] + 3*H[X+Y] - 3*H[X]");
        assert_eq!(q.collect().to_string(), "-2*H[X] + 3*H[X+Y]");
        assert!(matches!(Quantity::parse("C").unwrap().expand(&lets), Err(Error::UnknownLet(_))));
    }
}
