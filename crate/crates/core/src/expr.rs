//! Arithmetic expressions over named random variables.

use std::fmt;

use crate::error::{Error, Result};
use crate::value::{BinOp, GroupValue, Integer};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RvExpr {
    Var(String),
    Lit(Integer),
    Neg(Box<RvExpr>),
    Bin(BinOp, Box<RvExpr>, Box<RvExpr>),
}

/// Result of evaluating a subexpression: literals stay untyped until they meet a value.
#[derive(Clone, Debug, PartialEq)]
pub enum Val {
    Lit(Integer),
    Group(GroupValue),
}

impl Val {
    pub fn into_group(self) -> GroupValue {
        match self {
            Val::Lit(i) => GroupValue::Int(i),
            Val::Group(g) => g,
        }
    }
}

pub fn apply_vals(op: BinOp, a: Val, b: Val) -> Result<Val> {
    match (a, b) {
        (Val::Group(x), Val::Group(y)) => x.apply(op, &y).map(Val::Group),
        (Val::Lit(x), Val::Group(y)) => GroupValue::apply_literal_left(&x, op, &y).map(Val::Group),
        (Val::Group(x), Val::Lit(y)) => x.apply_literal_right(op, &y).map(Val::Group),
        (Val::Lit(x), Val::Lit(y)) => match op {
            BinOp::Add => Ok(Val::Lit(x.add(&y))),
            BinOp::Sub => Ok(Val::Lit(x.sub(&y))),
            BinOp::Mul => Ok(Val::Lit(x.mul(&y))),
            BinOp::Div => match GroupValue::Int(x).div(&GroupValue::Int(y))? {
                GroupValue::Int(i) => Ok(Val::Lit(i)),
                other => Ok(Val::Group(other)),
            },
        },
    }
}

pub fn neg_val(v: Val) -> Val {
    match v {
        Val::Lit(i) => Val::Lit(i.neg()),
        Val::Group(g) => Val::Group(g.neg()),
    }
}

impl RvExpr {
    pub fn var(name: &str) -> Self {
        RvExpr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, a: RvExpr, b: RvExpr) -> Self {
        RvExpr::Bin(op, Box::new(a), Box::new(b))
    }

    /// Variable names in order of first appearance.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            RvExpr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            RvExpr::Lit(_) => {}
            RvExpr::Neg(e) => e.collect_vars(out),
            RvExpr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<GroupValue>) -> Result<Val> {
        match self {
            RvExpr::Var(v) => lookup(v).map(Val::Group).ok_or_else(|| Error::UnknownCoordinate(v.clone())),
            RvExpr::Lit(i) => Ok(Val::Lit(i.clone())),
            RvExpr::Neg(e) => Ok(neg_val(e.eval(lookup)?)),
            RvExpr::Bin(op, a, b) => apply_vals(*op, a.eval(lookup)?, b.eval(lookup)?),
        }
    }

    /// Parse a complete expression.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = RvParser::new(text, 0);
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < text.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    fn prec(&self) -> u8 {
        match self {
            RvExpr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            RvExpr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            RvExpr::Neg(_) => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for RvExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RvExpr::Var(v) => write!(f, "{v}"),
            RvExpr::Lit(i) => write!(f, "{i}"),
            RvExpr::Neg(e) => {
                if matches!(**e, RvExpr::Bin(..)) {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            RvExpr::Bin(op, a, b) => {
                let p = self.prec();
                if a.prec() < p {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, "{}", op.symbol())?;
                if b.prec() <= p {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}

/// Recursive-descent parser for random-variable expressions; reports byte offsets.
pub(crate) struct RvParser<'a> {
    pub(crate) src: &'a str,
    pub(crate) pos: usize,
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl<'a> RvParser<'a> {
    pub(crate) fn new(src: &'a str, pos: usize) -> Self {
        RvParser { src, pos }
    }

    pub(crate) fn error(&self, msg: &str) -> Error {
        Error::Syntax { offset: self.pos, message: msg.to_string() }
    }

    pub(crate) fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    pub(crate) fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    pub(crate) fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    pub(crate) fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        let mut chars = self.src[start..].char_indices();
        match chars.next() {
            Some((_, c)) if is_ident_start(c) => {}
            _ => return None,
        }
        let mut end = self.src.len();
        for (i, c) in chars {
            if !is_ident_char(c) {
                end = start + i;
                break;
            }
        }
        while self.src[end..].starts_with('\'') {
            end += 1;
        }
        self.pos = end;
        Some(self.src[start..end].to_string())
    }

    pub(crate) fn digits(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let start = self.pos;
        let len = self.src[start..].chars().take_while(|c| c.is_ascii_digit()).count();
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some(&self.src[start..start + len])
    }

    pub(crate) fn expr(&mut self) -> Result<RvExpr> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = RvExpr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<RvExpr> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('*') => BinOp::Mul,
                Some('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = RvExpr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<RvExpr> {
        if self.eat('-') {
            return Ok(RvExpr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<RvExpr> {
        self.skip_ws();
        if self.eat('(') {
            let e = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(e);
        }
        if let Some(d) = self.digits() {
            return Ok(RvExpr::Lit(d.parse()?));
        }
        if let Some(id) = self.ident() {
            return Ok(RvExpr::Var(id));
        }
        Err(self.error("expected a variable, integer or `(`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(s: &str) -> String {
        RvExpr::parse(s).unwrap().to_string()
    }

    #[test]
    fn printing_is_minimal_and_stable() {
        assert_eq!(rt("X + Y"), "X+Y");
        assert_eq!(rt("(X+Y)*Z"), "(X+Y)*Z");
        assert_eq!(rt("X-(Y-Z)"), "X-(Y-Z)");
        assert_eq!(rt("(X-Y)-Z"), "X-Y-Z");
        assert_eq!(rt("X/(Y*Z)"), "X/(Y*Z)");
        assert_eq!(rt("-(X+Y)"), "-(X+Y)");
        assert_eq!(rt("X*-Y"), "X*-Y");
        assert_eq!(rt("X1'*X2''"), "X1'*X2''");
        for s in ["X+Y", "(X+Y)/(Z+W)", "X-(Y-Z)", "-X*Y", "2*X-3", "X*(Y+Z)"] {
            let once = rt(s);
            assert_eq!(rt(&once), once);
        }
    }

    #[test]
    fn literal_coercion() {
        let e = RvExpr::parse("2*X+1").unwrap();
        let z = GroupValue::modular(3, 5).unwrap();
        let v = e.eval(&|_| Some(z.clone())).unwrap().into_group();
        assert_eq!(v, GroupValue::modular(2, 5).unwrap());
        let w = GroupValue::vector(vec![1, 2]);
        let scaled = RvExpr::parse("3*X").unwrap().eval(&|_| Some(w.clone())).unwrap().into_group();
        assert_eq!(scaled, GroupValue::vector(vec![3, 6]));
        assert!(RvExpr::parse("X+1").unwrap().eval(&|_| Some(w.clone())).is_err());
    }

    #[test]
    fn syntax_offsets() {
        match RvExpr::parse("X+") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
    }
}
