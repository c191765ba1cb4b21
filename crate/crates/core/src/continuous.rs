//! Continuous laws: closed-form differential entropies, k-NN Monte Carlo
//! estimates, and evaluation of quantities over independent continuous variables.

use std::collections::BTreeMap;
use std::f64::consts::{E, LN_2, PI};
use std::fmt;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::expr::RvExpr;
use crate::numeric::CompensatedSum;
use crate::quantity::{Atom, AtomEval, Estimate, Quantity};
use crate::value::BinOp;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const CHUNK: usize = 4096;
const FOLDS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum ContinuousModel {
    Gaussian { mu: f64, sigma: f64 },
    Uniform { a: f64, b: f64 },
    Exponential { lambda: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// Components `(weight, mu, sigma)`.
    GaussianMixture(Vec<(f64, f64, f64)>),
}

impl ContinuousModel {
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        finite("mu", mu)?;
        Ok(ContinuousModel::Gaussian { mu, sigma })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        finite("a", a)?;
        finite("b", b)?;
        if b <= a {
            return Err(Error::InvalidArgument(format!("uniform needs a < b, got ({a}, {b})")));
        }
        Ok(ContinuousModel::Uniform { a, b })
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        positive("lambda", lambda)?;
        Ok(ContinuousModel::Exponential { lambda })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        finite("mu", mu)?;
        Ok(ContinuousModel::LogNormal { mu, sigma })
    }

    pub fn mixture(components: Vec<(f64, f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let mut total = 0.0;
        for &(w, mu, sigma) in &components {
            positive("weight", w)?;
            finite("mu", mu)?;
            positive("sigma", sigma)?;
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        Ok(ContinuousModel::GaussianMixture(components))
    }

    /// Parse a model literal such as `lognormal(0,0.5)` or `gmix((0.5,-1,1);(0.5,1,1))`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = LitParser { src: text, pos: 0 };
        let m = p.model()?;
        p.ws();
        if p.pos < text.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(m)
    }

    pub fn has_closed_entropy(&self) -> bool {
        !matches!(self, ContinuousModel::GaussianMixture(_))
    }

    pub fn has_closed_log_abs_moment(&self) -> bool {
        closed_e_log_abs(self).is_some()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ContinuousModel::Gaussian { mu, sigma } => Normal::new(mu, sigma).expect("validated").sample(rng),
            ContinuousModel::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            ContinuousModel::Exponential { lambda } => Exp::new(lambda).expect("validated").sample(rng),
            ContinuousModel::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").sample(rng),
            ContinuousModel::GaussianMixture(ref cs) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = cs.len() - 1;
                for (i, c) in cs.iter().enumerate() {
                    acc += c.0;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                let (_, mu, sigma) = cs[pick];
                Normal::new(mu, sigma).expect("validated").sample(rng)
            }
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {x}")))
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite")))
    }
}

impl fmt::Display for ContinuousModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContinuousModel::Gaussian { mu, sigma } => write!(f, "gaussian({mu},{sigma})"),
            ContinuousModel::Uniform { a, b } => write!(f, "uniform({a},{b})"),
            ContinuousModel::Exponential { lambda } => write!(f, "exponential({lambda})"),
            ContinuousModel::LogNormal { mu, sigma } => write!(f, "lognormal({mu},{sigma})"),
            ContinuousModel::GaussianMixture(cs) => {
                write!(f, "gmix(")?;
                for (i, (w, mu, s)) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "({w},{mu},{s})")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct LitParser<'a> {
    src: &'a str,
    pos: usize,
}

impl LitParser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Syntax { offset: self.pos, message: msg.to_string() }
    }

    fn ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> Result<()> {
        self.ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected `{c}`")))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.ws();
        let start = self.pos;
        let len = self.src[start..]
            .char_indices()
            .take_while(|&(i, c)| {
                c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || ((c == '-' || c == '+') && (i == 0 || matches!(self.src.as_bytes()[start + i - 1], b'e' | b'E')))
            })
            .count();
        self.pos += len;
        self.src[start..self.pos]
            .parse::<f64>()
            .map_err(|_| Error::Syntax { offset: start, message: "expected a number".into() })
    }

    fn numbers(&mut self, count: usize) -> Result<Vec<f64>> {
        self.eat('(')?;
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            if i > 0 {
                self.eat(',')?;
            }
            out.push(self.number()?);
        }
        self.eat(')')?;
        Ok(out)
    }

    fn model(&mut self) -> Result<ContinuousModel> {
        self.ws();
        let start = self.pos;
        let len = self.src[start..].chars().take_while(|c| c.is_ascii_alphabetic()).count();
        self.pos += len;
        let name = &self.src[start..self.pos];
        let wrap = |r: Result<ContinuousModel>| r.map_err(|e| if let Error::InvalidArgument(m) = e { Error::Syntax { offset: start, message: m } } else { e });
        match name {
            "gaussian" | "normal" => {
                let v = self.numbers(2)?;
                wrap(ContinuousModel::gaussian(v[0], v[1]))
            }
            "uniform" => {
                let v = self.numbers(2)?;
                wrap(ContinuousModel::uniform(v[0], v[1]))
            }
            "exponential" => {
                let v = self.numbers(1)?;
                wrap(ContinuousModel::exponential(v[0]))
            }
            "lognormal" => {
                let v = self.numbers(2)?;
                wrap(ContinuousModel::lognormal(v[0], v[1]))
            }
            "gmix" => {
                self.eat('(')?;
                let mut cs = Vec::new();
                loop {
                    let v = self.numbers(3)?;
                    cs.push((v[0], v[1], v[2]));
                    self.ws();
                    if self.src[self.pos..].starts_with(';') {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                self.eat(')')?;
                wrap(ContinuousModel::mixture(cs))
            }
            _ => {
                self.pos = start;
                Err(self.err("expected gaussian, uniform, exponential, lognormal or gmix"))
            }
        }
    }
}

/// Differential entropy in nats.
pub fn closed_form_entropy(m: &ContinuousModel) -> Result<f64> {
    match *m {
        ContinuousModel::Gaussian { sigma, .. } => Ok(gaussian_entropy(sigma * sigma)),
        ContinuousModel::Uniform { a, b } => Ok((b - a).ln()),
        ContinuousModel::Exponential { lambda } => Ok(1.0 - lambda.ln()),
        ContinuousModel::LogNormal { mu, sigma } => Ok(mu + gaussian_entropy(sigma * sigma)),
        ContinuousModel::GaussianMixture(_) => Err(Error::NoClosedForm(m.to_string())),
    }
}

fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (2.0 * PI * E * var).ln()
}

/// `E log|X|` of a centred Gaussian with variance `var`.
fn centred_gaussian_log_abs(var: f64) -> f64 {
    0.5 * var.ln() - (EULER_GAMMA + LN_2) / 2.0
}

/// `E log|X|` where a closed form is known.
pub fn closed_e_log_abs(m: &ContinuousModel) -> Option<f64> {
    match *m {
        ContinuousModel::Gaussian { mu: 0.0, sigma } => Some(centred_gaussian_log_abs(sigma * sigma)),
        ContinuousModel::Uniform { a, b } => {
            let f = |x: f64| if x == 0.0 { 0.0 } else { x * x.abs().ln() - x };
            Some((f(b) - f(a)) / (b - a))
        }
        ContinuousModel::Exponential { lambda } => Some(-EULER_GAMMA - lambda.ln()),
        ContinuousModel::LogNormal { mu, .. } => Some(mu),
        _ => None,
    }
}

/// Monte Carlo settings.
#[derive(Clone, Debug, PartialEq)]
pub struct McConfig {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// Divisor samples closer than this to zero count as hazardous.
    pub eps: f64,
    /// Largest tolerated fraction of hazardous divisor samples.
    pub hazard_threshold: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n: 1 << 16, k: 4, seed: 0, eps: 1e-9, hazard_threshold: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateWithCI {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub k: usize,
    pub seed: u64,
    /// Coincident samples forced a deterministic jitter.
    pub jittered: bool,
    /// Every ingredient came from a closed form.
    pub closed_form: bool,
    /// A divisor had heavy logarithmic tails.
    pub tail_warning: bool,
}

/// `E log|X|`, closed form when known, otherwise a sample mean.
pub fn e_log_abs(m: &ContinuousModel, cfg: &McConfig) -> Result<EstimateWithCI> {
    if let Some(v) = closed_e_log_abs(m) {
        return Ok(EstimateWithCI { value: v, std_error: 0.0, n_samples: 0, k: cfg.k, seed: cfg.seed, jittered: false, closed_form: true, tail_warning: false });
    }
    let xs = sample_model(m, cfg.seed, 0, cfg.n);
    let (v, se) = mean_log_abs(&xs)?;
    Ok(EstimateWithCI { value: v, std_error: se, n_samples: cfg.n, k: cfg.k, seed: cfg.seed, jittered: false, closed_form: false, tail_warning: false })
}

fn mean_log_abs(xs: &[f64]) -> Result<(f64, f64)> {
    let logs: Vec<f64> = xs.iter().map(|x| x.abs().ln()).collect();
    if logs.iter().any(|l| !l.is_finite()) {
        return Err(Error::DomainMismatch("E log|V| with samples at zero".into()));
    }
    let n = logs.len() as f64;
    let mean: f64 = logs.iter().copied().collect::<CompensatedSum>().value() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of an independent stream labelled by `(seed, a, b)`.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix(seed ^ splitmix(a.wrapping_add(splitmix(b))))
}

/// `n` samples of `m` from stream `stream`; chunked so the result is independent of thread count.
pub fn sample_model(m: &ContinuousModel, seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, c as u64));
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| m.sample(&mut rng)).collect()
        })
        .collect();
    parts.concat()
}

/// Digamma function for positive arguments.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln() - 0.5 * inv - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Kozachenko–Leonenko estimate on sorted data; `None` if some neighbour distance is zero.
fn kl_sorted(sorted: &[f64], k: usize) -> Option<f64> {
    let n = sorted.len();
    let mut sum = CompensatedSum::new();
    for i in 0..n {
        let (mut lo, mut hi) = (i, i);
        let mut r = 0.0;
        for _ in 0..k {
            let dl = if lo > 0 { sorted[i] - sorted[lo - 1] } else { f64::INFINITY };
            let dr = if hi + 1 < n { sorted[hi + 1] - sorted[i] } else { f64::INFINITY };
            if dl <= dr {
                lo -= 1;
                r = dl;
            } else {
                hi += 1;
                r = dr;
            }
        }
        if r <= 0.0 {
            return None;
        }
        sum.add(r.ln());
    }
    Some(digamma(n as f64) - digamma(k as f64) + LN_2 + sum.value() / n as f64)
}

fn kl_estimate(xs: &[f64], k: usize) -> Option<f64> {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    kl_sorted(&s, k)
}

/// k-nearest-neighbour differential entropy of one-dimensional samples,
/// with a 16-fold subsample standard error.
pub fn mc_entropy_knn(samples: &[f64], k: usize) -> Result<EstimateWithCI> {
    mc_entropy_knn_seeded(samples, k, 0)
}

fn mc_entropy_knn_seeded(samples: &[f64], k: usize, seed: u64) -> Result<EstimateWithCI> {
    let n = samples.len();
    if k == 0 || n < 100 || n / FOLDS <= k {
        return Err(Error::InvalidArgument(format!("k-NN estimate needs k >= 1 and at least 100 samples (got n={n}, k={k})")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::DomainMismatch("non-finite sample".into()));
    }
    let (min, max) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if max == min {
        return Err(Error::DegenerateSample);
    }
    let mut data = samples.to_vec();
    let mut jittered = false;
    let value = match kl_estimate(&data, k) {
        Some(v) => v,
        None => {
            jittered = true;
            let scale = 1e-12 * (max - min).max(max.abs().max(min.abs()) * 1e-4);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, n as u64));
            for x in data.iter_mut() {
                *x += scale * (rng.random::<f64>() - 0.5);
            }
            kl_estimate(&data, k).ok_or(Error::DegenerateSample)?
        }
    };
    let fold_len = n / FOLDS;
    let folds: Vec<f64> = (0..FOLDS)
        .into_par_iter()
        .map(|f| kl_estimate(&data[f * fold_len..(f + 1) * fold_len], k).unwrap_or(f64::NAN))
        .collect();
    let mean = folds.iter().sum::<f64>() / FOLDS as f64;
    let var = folds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (FOLDS as f64 - 1.0);
    if !var.is_finite() {
        return Err(Error::DegenerateSample);
    }
    Ok(EstimateWithCI {
        value,
        std_error: var.sqrt() / (FOLDS as f64).sqrt(),
        n_samples: n,
        k,
        seed,
        jittered,
        closed_form: false,
        tail_warning: false,
    })
}

/// Variables bound to independent continuous laws.
pub type ContinuousBindings = BTreeMap<String, ContinuousModel>;

/// Closed-form recognition: linear combinations and monomials.
enum Shape {
    Linear { coeffs: BTreeMap<String, f64>, constant: f64 },
    Monomial { coef: f64, exps: BTreeMap<String, i64> },
}

fn linear_shape(e: &RvExpr) -> Option<(BTreeMap<String, f64>, f64)> {
    match e {
        RvExpr::Var(v) => Some((BTreeMap::from([(v.clone(), 1.0)]), 0.0)),
        RvExpr::Lit(i) => Some((BTreeMap::new(), i.as_small()? as f64)),
        RvExpr::Neg(a) => {
            let (c, k) = linear_shape(a)?;
            Some((c.into_iter().map(|(v, x)| (v, -x)).collect(), -k))
        }
        RvExpr::Bin(op, a, b) => {
            let (ca, ka) = linear_shape(a)?;
            let (cb, kb) = linear_shape(b)?;
            match op {
                BinOp::Add | BinOp::Sub => {
                    let s = if *op == BinOp::Add { 1.0 } else { -1.0 };
                    let mut c = ca;
                    for (v, x) in cb {
                        *c.entry(v).or_insert(0.0) += s * x;
                    }
                    Some((c, ka + s * kb))
                }
                BinOp::Mul if ca.is_empty() => Some((cb.into_iter().map(|(v, x)| (v, x * ka)).collect(), kb * ka)),
                BinOp::Mul if cb.is_empty() => Some((ca.into_iter().map(|(v, x)| (v, x * kb)).collect(), ka * kb)),
                BinOp::Div if cb.is_empty() && kb != 0.0 => Some((ca.into_iter().map(|(v, x)| (v, x / kb)).collect(), ka / kb)),
                _ => None,
            }
        }
    }
}

fn monomial_shape(e: &RvExpr) -> Option<(f64, BTreeMap<String, i64>)> {
    match e {
        RvExpr::Var(v) => Some((1.0, BTreeMap::from([(v.clone(), 1)]))),
        RvExpr::Lit(i) => Some((i.as_small()? as f64, BTreeMap::new())),
        RvExpr::Neg(a) => monomial_shape(a).map(|(c, m)| (-c, m)),
        RvExpr::Bin(op @ (BinOp::Mul | BinOp::Div), a, b) => {
            let (ca, ma) = monomial_shape(a)?;
            let (cb, mb) = monomial_shape(b)?;
            let s = if *op == BinOp::Mul { 1 } else { -1 };
            let mut m = ma;
            for (v, x) in mb {
                *m.entry(v).or_insert(0) += s * x;
            }
            let c = if s == 1 { ca * cb } else { ca / cb };
            Some((c, m))
        }
        _ => None,
    }
}

fn shape(e: &RvExpr) -> Option<Shape> {
    if let Some((coef, mut exps)) = monomial_shape(e) {
        exps.retain(|_, x| *x != 0);
        if coef != 0.0 && coef.is_finite() {
            return Some(Shape::Monomial { coef, exps });
        }
    }
    linear_shape(e).map(|(mut coeffs, constant)| {
        coeffs.retain(|_, x| *x != 0.0);
        Shape::Linear { coeffs, constant }
    })
}

/// Closed-form `h(V)` and, when known, `E log|V|`.
fn closed_form(e: &RvExpr, bindings: &ContinuousBindings) -> Result<Option<(f64, Option<f64>)>> {
    let model = |v: &str| bindings.get(v).ok_or_else(|| Error::UnboundVariable(v.to_string()));
    match shape(e) {
        Some(Shape::Monomial { coef, exps }) if !exps.is_empty() => {
            let mut lognormal = true;
            let (mut m, mut s2) = (coef.abs().ln(), 0.0);
            for (v, x) in &exps {
                match model(v)? {
                    ContinuousModel::LogNormal { mu, sigma } => {
                        m += *x as f64 * mu;
                        s2 += (*x as f64 * sigma).powi(2);
                    }
                    _ => lognormal = false,
                }
            }
            if lognormal {
                return Ok(Some((gaussian_entropy(s2) + m, Some(m))));
            }
            if exps.len() == 1 && *exps.values().next().expect("one") == 1 {
                let mdl = model(exps.keys().next().expect("one"))?;
                if mdl.has_closed_entropy() {
                    let shift = coef.abs().ln();
                    return Ok(Some((closed_form_entropy(mdl)? + shift, closed_e_log_abs(mdl).map(|x| x + shift))));
                }
            }
            Ok(None)
        }
        Some(Shape::Linear { coeffs, constant }) if !coeffs.is_empty() => {
            let mut gaussian = true;
            let (mut mean, mut var) = (constant, 0.0);
            for (v, c) in &coeffs {
                match model(v)? {
                    ContinuousModel::Gaussian { mu, sigma } => {
                        mean += c * mu;
                        var += (c * sigma).powi(2);
                    }
                    _ => gaussian = false,
                }
            }
            if gaussian {
                let elog = if mean == 0.0 { Some(centred_gaussian_log_abs(var)) } else { None };
                return Ok(Some((gaussian_entropy(var), elog)));
            }
            if coeffs.len() == 1 {
                let (v, c) = coeffs.iter().next().expect("one");
                let mdl = model(v)?;
                if mdl.has_closed_entropy() {
                    let shift = c.abs().ln();
                    let elog = if constant == 0.0 { closed_e_log_abs(mdl).map(|x| x + shift) } else { None };
                    return Ok(Some((closed_form_entropy(mdl)? + shift, elog)));
                }
            }
            Ok(None)
        }
        _ => Ok(None),
    }
}

/// Monte Carlo evaluator over one shared set of samples per variable.
pub struct McEvaluator<'a> {
    bindings: &'a ContinuousBindings,
    cfg: McConfig,
    samples: FxHashMap<RvExpr, Rc<Vec<f64>>>,
    atoms: FxHashMap<Atom, Estimate>,
    pub jittered: bool,
    pub closed_form: bool,
    pub tail_warning: bool,
}

impl<'a> McEvaluator<'a> {
    pub fn new(bindings: &'a ContinuousBindings, cfg: McConfig) -> Self {
        McEvaluator {
            bindings,
            cfg,
            samples: FxHashMap::default(),
            atoms: FxHashMap::default(),
            jittered: false,
            closed_form: true,
            tail_warning: false,
        }
    }

    fn values(&mut self, e: &RvExpr) -> Result<Rc<Vec<f64>>> {
        if let Some(v) = self.samples.get(e) {
            return Ok(v.clone());
        }
        let n = self.cfg.n;
        let out: Vec<f64> = match e {
            RvExpr::Var(name) => {
                let stream = self
                    .bindings
                    .keys()
                    .position(|k| k == name)
                    .ok_or_else(|| Error::UnboundVariable(name.clone()))?;
                sample_model(&self.bindings[name], self.cfg.seed, stream as u64, n)
            }
            RvExpr::Lit(i) => vec![i.as_small().ok_or_else(|| Error::InvalidArgument(format!("literal {i} too large")))? as f64; n],
            RvExpr::Neg(a) => self.values(a)?.iter().map(|x| -x).collect(),
            RvExpr::Bin(op, a, b) => {
                let (va, vb) = (self.values(a)?, self.values(b)?);
                if *op == BinOp::Div {
                    self.check_divisor(&vb)?;
                }
                va.iter()
                    .zip(vb.iter())
                    .map(|(x, y)| match op {
                        BinOp::Add => x + y,
                        BinOp::Sub => x - y,
                        BinOp::Mul => x * y,
                        BinOp::Div => x / y,
                    })
                    .collect()
            }
        };
        let rc = Rc::new(out);
        self.samples.insert(e.clone(), rc.clone());
        Ok(rc)
    }

    fn check_divisor(&mut self, den: &[f64]) -> Result<()> {
        let near = den.iter().filter(|d| d.abs() < self.cfg.eps).count();
        let fraction = near as f64 / den.len() as f64;
        if fraction > self.cfg.hazard_threshold || den.contains(&0.0) {
            return Err(Error::DivisionHazard { fraction });
        }
        let tail = den.iter().map(|d| d.abs().ln().abs()).sum::<f64>() / den.len() as f64;
        if tail > 50.0 {
            self.tail_warning = true;
        }
        Ok(())
    }

    fn knn(&mut self, xs: &[f64]) -> Result<Estimate> {
        let est = mc_entropy_knn_seeded(xs, self.cfg.k, self.cfg.seed)?;
        self.jittered |= est.jittered;
        self.closed_form = false;
        Ok(Estimate { value: est.value, std_error: est.std_error })
    }

    /// `h(V)` or, with `mult`, `h(V) - E log|V|`.
    fn scalar_entropy(&mut self, e: &RvExpr, mult: bool) -> Result<Estimate> {
        for v in e.vars() {
            if !self.bindings.contains_key(v) {
                return Err(Error::UnboundVariable(v.to_string()));
            }
        }
        if e.vars().is_empty() {
            return Err(Error::DomainMismatch(format!("differential entropy of the constant {e}")));
        }
        if let Some((h, elog)) = closed_form(e, self.bindings)? {
            if !mult {
                return Ok(Estimate::exact(h));
            }
            if let Some(l) = elog {
                return Ok(Estimate::exact(h - l));
            }
        }
        let vals = self.values(e)?;
        if !mult {
            return self.knn(&vals);
        }
        // split by sign: ht(V) = H(sign V) + Σ_s P(s) h(log|V| | s)
        let mut groups: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for &x in vals.iter() {
            if x == 0.0 {
                return Err(Error::DomainMismatch(format!("{e} takes the value zero")));
            }
            groups[(x < 0.0) as usize].push(x.abs().ln());
        }
        let n = vals.len() as f64;
        let pooled: Vec<f64> = vals.iter().map(|x| x.abs().ln()).collect();
        let (mut value, mut var) = (0.0, 0.0);
        for g in &groups {
            if g.is_empty() {
                continue;
            }
            let p = g.len() as f64 / n;
            let est = if g.len() >= 100 { self.knn(g)? } else { self.knn(&pooled)? };
            value += p * est.value - p * p.ln();
            var += (p * est.std_error).powi(2);
        }
        Ok(Estimate { value, std_error: var.sqrt() })
    }

    /// Joint entropy of independent scalar components.
    fn list_entropy(&mut self, exprs: &[RvExpr], mult: bool) -> Result<Estimate> {
        let mut list: Vec<&RvExpr> = Vec::new();
        for e in exprs {
            if !list.contains(&e) {
                list.push(e);
            }
        }
        for (i, a) in list.iter().enumerate() {
            for b in &list[..i] {
                if a.vars().iter().any(|v| b.vars().contains(v)) {
                    let shown: Vec<String> = list.iter().map(|e| e.to_string()).collect();
                    return Err(Error::UnsupportedJoint(shown.join(",")));
                }
            }
        }
        let mut value = 0.0;
        let mut var = 0.0;
        for e in list {
            let est = self.scalar_entropy(e, mult)?;
            value += est.value;
            var += est.std_error.powi(2);
        }
        Ok(Estimate { value, std_error: var.sqrt() })
    }

    fn joined(parts: &[&[RvExpr]]) -> Vec<RvExpr> {
        parts.iter().flat_map(|p| p.iter().cloned()).collect()
    }

    fn compute(&mut self, atom: &Atom) -> Result<Estimate> {
        match atom {
            Atom::Entropy { mult, args, given } => {
                if given.is_empty() {
                    return self.list_entropy(args, *mult);
                }
                let all = self.list_entropy(&Self::joined(&[args, given]), *mult)?;
                let g = self.list_entropy(given, *mult)?;
                Ok(Estimate { value: all.value - g.value, std_error: all.std_error.hypot(g.std_error) })
            }
            Atom::Mutual { a, b, given } => {
                let parts = [
                    (1.0, self.list_entropy(&Self::joined(&[a, given]), false)?),
                    (1.0, self.list_entropy(&Self::joined(&[b, given]), false)?),
                    (-1.0, self.list_entropy(&Self::joined(&[a, b, given]), false)?),
                    (-1.0, if given.is_empty() { Estimate::exact(0.0) } else { self.list_entropy(given, false)? }),
                ];
                let value = parts.iter().map(|(s, e)| s * e.value).sum();
                let var: f64 = parts.iter().map(|(_, e)| e.std_error.powi(2)).sum();
                Ok(Estimate { value, std_error: var.sqrt() })
            }
            Atom::ElogAbs(e) => {
                if let Some((_, Some(l))) = closed_form(e, self.bindings)? {
                    return Ok(Estimate::exact(l));
                }
                let vals = self.values(e)?;
                self.closed_form = false;
                let (m, se) = mean_log_abs(&vals)?;
                Ok(Estimate { value: m, std_error: se })
            }
            Atom::Let(n) => Err(Error::UnknownLet(n.clone())),
            other => Err(Error::DomainMismatch(format!("{other} is defined for discrete laws only"))),
        }
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }
}

impl AtomEval for McEvaluator<'_> {
    fn atom(&mut self, atom: &Atom) -> Result<Estimate> {
        if let Some(e) = self.atoms.get(atom) {
            return Ok(*e);
        }
        let e = self.compute(atom)?;
        self.atoms.insert(atom.clone(), e);
        Ok(e)
    }
}

/// Estimate a let-free quantity over independent continuous variables.
pub fn estimate_quantity(q: &Quantity, bindings: &ContinuousBindings, cfg: &McConfig) -> Result<EstimateWithCI> {
    for v in q.vars() {
        if !bindings.contains_key(&v) {
            return Err(Error::UnboundVariable(v));
        }
    }
    let mut ev = McEvaluator::new(bindings, cfg.clone());
    let est = q.collect().evaluate(&mut ev)?;
    Ok(EstimateWithCI {
        value: est.value,
        std_error: est.std_error,
        n_samples: cfg.n,
        k: cfg.k,
        seed: cfg.seed,
        jittered: ev.jittered,
        closed_form: ev.closed_form,
        tail_warning: ev.tail_warning,
    })
}
