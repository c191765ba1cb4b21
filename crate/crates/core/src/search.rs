//! Local search over probability vectors on a fixed support.
//!
//! Each restart runs an annealing phase (random logit kicks, Metropolis
//! acceptance at a geometrically cooling temperature) and then a descent phase
//! (exponentiated-gradient steps from central finite differences, accepted only
//! on improvement). Iterates are rationalized before every exact evaluation.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::continuous::derive_seed;
use crate::dist::FiniteDist;
use crate::error::{Error, Result};
use crate::exact::{Bindings, ExactEvaluator};
use crate::quantity::Objective;
use crate::value::GroupValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

/// An objective over independent copies of one law on `support`; every
/// variable of the objective is bound to that law.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchObjective {
    pub objective: Objective,
    pub direction: Direction,
    pub support: Vec<GroupValue>,
}

impl SearchObjective {
    fn better(&self, a: f64, b: f64) -> bool {
        match self.direction {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }

    /// Positive when `a` improves on `b`.
    fn gain(&self, a: f64, b: f64) -> f64 {
        match self.direction {
            Direction::Maximize => a - b,
            Direction::Minimize => b - a,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchConfig {
    pub seed: u64,
    pub restarts: usize,
    /// Annealing epochs per restart.
    pub epochs: usize,
    /// Descent steps per restart.
    pub steps: usize,
    pub t0: f64,
    pub cooling: f64,
    pub learning_rate: f64,
    pub fd_step: f64,
    /// Probabilities are rounded to this common denominator.
    pub denominator: u64,
    /// Iterates with `H(X)` below this are rejected; `None` disables the guard.
    pub h_floor: Option<f64>,
    /// Largest support searched.
    pub support_cap: usize,
    /// Coordinates differenced per descent step on large supports.
    pub gradient_block: usize,
    /// Starting law of the first restart; uniform when absent.
    #[serde(skip)]
    pub init: Option<FiniteDist>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            seed: 0,
            restarts: 20,
            epochs: 20,
            steps: 25,
            t0: 1.0,
            cooling: 0.95,
            learning_rate: 0.5,
            fd_step: 1e-5,
            denominator: 1_000_000_000,
            h_floor: None,
            support_cap: 2048,
            gradient_block: 32,
            init: None,
        }
    }
}

impl SearchConfig {
    /// The default guard: ratio objectives reject laws with `H(X) < 0.1`.
    pub fn default_floor(objective: &Objective) -> Option<f64> {
        matches!(objective, Objective::Ratio(..)).then_some(0.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Start,
    Anneal,
    Descent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub phase: Phase,
    pub value: f64,
}

fn dist_text<S: Serializer>(d: &FiniteDist, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&d.to_text())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchResult {
    #[serde(serialize_with = "dist_text")]
    pub best: FiniteDist,
    /// Exact re-evaluation of `best`.
    pub value: f64,
    /// Value of the first restart's starting point.
    pub initial_value: f64,
    pub restart: usize,
    pub restart_seed: u64,
    /// Accepted iterates of the winning restart.
    pub trace: Vec<TracePoint>,
    pub floor_triggers: usize,
    pub evaluations: usize,
    pub config: SearchConfig,
}

struct Engine<'a> {
    obj: &'a SearchObjective,
    cfg: &'a SearchConfig,
    vars: Vec<String>,
    evaluations: usize,
    floor_triggers: usize,
}

enum Eval {
    Value(f64),
    /// Rejected by the entropy floor.
    Floored,
}

impl Engine<'_> {
    /// Largest-remainder rounding to the configured denominator, every atom kept positive.
    fn rationalize(&self, p: &[f64]) -> Result<FiniteDist> {
        let n = p.len() as u64;
        let free = self.cfg.denominator.saturating_sub(n).max(1);
        let mut w: Vec<u64> = Vec::with_capacity(p.len());
        let mut rem: Vec<(f64, usize)> = Vec::with_capacity(p.len());
        for (i, &x) in p.iter().enumerate() {
            let t = x.max(0.0) * free as f64;
            let f = t.floor();
            w.push(f as u64 + 1);
            rem.push((t - f, i));
        }
        let assigned: u64 = w.iter().sum();
        let target = free + n;
        if assigned < target {
            rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (_, i) in rem.iter().take((target - assigned) as usize) {
                w[*i] += 1;
            }
        }
        FiniteDist::from_weights(self.obj.support.iter().cloned().zip(w.into_iter().map(u128::from)).collect())
    }

    fn eval_dist(&mut self, d: &FiniteDist) -> Result<Eval> {
        self.evaluations += 1;
        if let Some(floor) = self.cfg.h_floor {
            if d.entropy() < floor {
                self.floor_triggers += 1;
                return Ok(Eval::Floored);
            }
        }
        let mut b = Bindings::new();
        let names: Vec<&str> = self.vars.iter().map(|s| s.as_str()).collect();
        b.bind_iid(&names, d)?;
        let mut ev = ExactEvaluator::new(&b);
        let v = self.obj.objective.evaluate(&mut ev)?.value;
        Ok(if v.is_finite() { Eval::Value(v) } else { Eval::Floored })
    }

    fn eval(&mut self, p: &[f64]) -> Result<(Eval, FiniteDist)> {
        let d = self.rationalize(p)?;
        Ok((self.eval_dist(&d)?, d))
    }

    /// Central differences along `(e_i - p)`, which keep the simplex.
    fn gradient(&mut self, p: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let n = p.len();
        let coords: Vec<usize> = if n <= self.cfg.gradient_block {
            (0..n).collect()
        } else {
            let mut c = index::sample(rng, n, self.cfg.gradient_block).into_vec();
            c.sort_unstable();
            c
        };
        let h = self.cfg.fd_step;
        let mut g = vec![0.0; n];
        for i in coords {
            let shift = |s: f64| -> Vec<f64> {
                let mut q: Vec<f64> = p.iter().map(|x| x * (1.0 - s)).collect();
                q[i] += s;
                q
            };
            let (plus, _) = self.eval(&shift(h))?;
            let down = h.min(p[i] / (1.0 - p[i]).max(h) * 0.5);
            let (minus, _) = self.eval(&shift(-down))?;
            if let (Eval::Value(a), Eval::Value(b)) = (plus, minus) {
                g[i] = (a - b) / (h + down);
            }
        }
        Ok(g)
    }
}

fn softmax(theta: &[f64]) -> Vec<f64> {
    let m = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = theta.iter().map(|t| (t - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

fn to_probs(d: &FiniteDist) -> Vec<f64> {
    let den = d.denom() as f64;
    d.weighted_atoms().iter().map(|(_, w)| *w as f64 / den).collect()
}

struct RestartOutcome {
    value: f64,
    best: FiniteDist,
    trace: Vec<TracePoint>,
    seed: u64,
    floor_triggers: usize,
    evaluations: usize,
    start_value: Option<f64>,
}

fn run_restart(obj: &SearchObjective, cfg: &SearchConfig, vars: &[String], start: &[f64], r: usize) -> Result<RestartOutcome> {
    let seed = derive_seed(cfg.seed, 0x005e_a2c4, r as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eng = Engine { obj, cfg, vars: vars.to_vec(), evaluations: 0, floor_triggers: 0 };
    let mut theta: Vec<f64> = start.iter().map(|p| p.max(1e-300).ln()).collect();
    if r > 0 {
        for t in theta.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *t += cfg.t0 * z;
        }
    }
    let (first, first_dist) = eng.eval(&softmax(&theta))?;
    let start_value = match first {
        Eval::Value(v) => Some(v),
        Eval::Floored => None,
    };
    let mut trace = Vec::new();
    let mut current = start_value;
    let mut best: Option<(f64, FiniteDist)> = start_value.map(|v| (v, first_dist));
    if let Some(v) = current {
        trace.push(TracePoint { iteration: 0, phase: Phase::Start, value: v });
    }
    let mut temp = cfg.t0;
    for epoch in 1..=cfg.epochs {
        let proposal: Vec<f64> = theta
            .iter()
            .map(|t| {
                let z: f64 = rng.sample(StandardNormal);
                t + temp * z
            })
            .collect();
        let (e, d) = eng.eval(&softmax(&proposal))?;
        if let Eval::Value(v) = e {
            let accept = match current {
                None => true,
                Some(c) => {
                    let gain = obj.gain(v, c);
                    let u: f64 = rng.random();
                    gain >= 0.0 || u < (gain / temp.max(1e-12)).exp()
                }
            };
            if accept {
                theta = proposal;
                current = Some(v);
                trace.push(TracePoint { iteration: epoch, phase: Phase::Anneal, value: v });
            }
            if best.as_ref().is_none_or(|(b, _)| obj.better(v, *b)) {
                best = Some((v, d));
            }
        }
        temp *= cfg.cooling;
    }
    let Some((mut value, mut best_dist)) = best else {
        return Ok(RestartOutcome {
            value: f64::NAN,
            best: eng.rationalize(&softmax(&theta))?,
            trace,
            seed,
            floor_triggers: eng.floor_triggers,
            evaluations: eng.evaluations,
            start_value,
        });
    };
    let mut p = to_probs(&best_dist);
    let mut eta = cfg.learning_rate;
    let sign = match obj.direction {
        Direction::Maximize => 1.0,
        Direction::Minimize => -1.0,
    };
    let offset = cfg.epochs;
    for step in 1..=cfg.steps {
        let g = eng.gradient(&p, &mut rng)?;
        if g.iter().all(|x| *x == 0.0) {
            break;
        }
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        loop {
            let logits: Vec<f64> = p.iter().zip(&g).map(|(pi, gi)| pi.max(1e-300).ln() + sign * eta * gi / scale).collect();
            let (e, d) = eng.eval(&softmax(&logits))?;
            if let Eval::Value(v) = e {
                if obj.better(v, value) {
                    value = v;
                    best_dist = d;
                    p = to_probs(&best_dist);
                    trace.push(TracePoint { iteration: offset + step, phase: Phase::Descent, value: v });
                    eta = (eta * 2.0).min(16.0 * cfg.learning_rate);
                    break;
                }
            }
            eta *= 0.5;
            if eta < 1e-6 {
                break;
            }
        }
        if eta < 1e-6 {
            break;
        }
    }
    Ok(RestartOutcome {
        value,
        best: best_dist,
        trace,
        seed,
        floor_triggers: eng.floor_triggers,
        evaluations: eng.evaluations,
        start_value,
    })
}

/// Multi-restart search; restarts run in parallel and the winner is chosen by
/// `(value, restart seed)`, so the result does not depend on the worker count.
pub fn optimize_over_simplex(obj: &SearchObjective, cfg: &SearchConfig) -> Result<SearchResult> {
    let sorted = SearchObjective {
        support: FiniteDist::uniform(obj.support.clone())?.support().cloned().collect(),
        ..obj.clone()
    };
    let obj = &sorted;
    let n = obj.support.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty support".into()));
    }
    if n > cfg.support_cap {
        return Err(Error::SupportTooLarge { size: n, cap: cfg.support_cap });
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("at least one restart is required".into()));
    }
    let mut vars: Vec<String> = obj.objective.vars();
    vars.sort();
    vars.dedup();
    if vars.is_empty() {
        return Err(Error::InvalidArgument("objective references no variable".into()));
    }
    let start: Vec<f64> = match &cfg.init {
        None => vec![1.0 / n as f64; n],
        Some(d) => {
            let den = d.denom() as f64;
            obj.support.iter().map(|v| d.weight(v) as f64 / den).collect()
        }
    };
    if let Some(d) = &cfg.init {
        if d.support().any(|v| !obj.support.contains(v)) {
            return Err(Error::InvalidArgument("initial law has atoms outside the support".into()));
        }
    }
    let outcomes: Vec<Result<RestartOutcome>> =
        (0..cfg.restarts).into_par_iter().map(|r| run_restart(obj, cfg, &vars, &start, r)).collect();
    let outcomes: Vec<RestartOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let initial_value = outcomes[0]
        .start_value
        .ok_or_else(|| Error::EvaluationFailure("objective is not admissible at the initial point".into()))?;
    let mut win = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.value.is_nan() {
            continue;
        }
        let w = &outcomes[win];
        if w.value.is_nan() || obj.better(o.value, w.value) || (o.value == w.value && o.seed < w.seed) {
            win = i;
        }
    }
    let floor_triggers = outcomes.iter().map(|o| o.floor_triggers).sum();
    let evaluations = outcomes.iter().map(|o| o.evaluations).sum();
    let o = &outcomes[win];
    let mut eng = Engine { obj, cfg, vars, evaluations: 0, floor_triggers: 0 };
    let value = match eng.eval_dist(&o.best)? {
        Eval::Value(v) => v,
        Eval::Floored => return Err(Error::EvaluationFailure("best law fails the entropy floor on re-check".into())),
    };
    Ok(SearchResult {
        best: o.best.clone(),
        value,
        initial_value,
        restart: win,
        restart_seed: o.seed,
        trace: o.trace.clone(),
        floor_triggers,
        evaluations,
        config: cfg.clone(),
    })
}
