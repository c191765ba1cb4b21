//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{E, LN_2, PI};
use std::time::{Duration, Instant};

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use entropic_core::catalog::{
    check_discrete, find_record, parse_records, random_sweep, registry, registry_text, suite_check, CheckConfig,
    SamplerConfig, Verdict,
};
use entropic_core::constructions::{build_generic_augmented, build_zero_inflated, sidon_example_report, sum_product_row};
use entropic_core::continuous::{
    closed_form_entropy, mc_entropy_knn, sample_model, ContinuousBindings, ContinuousModel, McConfig, McEvaluator,
};
use entropic_core::exact::{independent, Bindings, ExactEvaluator};
use entropic_core::functionals::{additive_energy, doubling_suite, ruzsa_distance, sidon_audit, sidon_prune};
use entropic_core::quantity::Objective;
use entropic_core::{FiniteDist, GroupValue, JointDist};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---- hand-written oracles -------------------------------------------------

fn shannon(ps: impl IntoIterator<Item = f64>) -> f64 {
    ps.into_iter().filter(|p| *p > 0.0).map(|p| -p * p.ln()).sum()
}

fn law_entropy<K: std::hash::Hash + Eq>(atoms: impl IntoIterator<Item = (K, f64)>) -> f64 {
    let mut m: HashMap<K, f64> = HashMap::new();
    for (k, p) in atoms {
        *m.entry(k).or_default() += p;
    }
    shannon(m.into_values())
}

/// Pair law with integer coordinates, probabilities as floats.
#[derive(Clone, Debug)]
struct Pair {
    atoms: Vec<((i64, i64), f64)>,
    weights: BTreeMap<(i64, i64), u128>,
}

impl Pair {
    fn random(rng: &mut ChaCha8Rng, max_atoms: usize) -> Pair {
        let n = rng.random_range(1..=max_atoms);
        let mut weights = BTreeMap::new();
        for _ in 0..n {
            let key = (rng.random_range(-4..=4), rng.random_range(-4..=4));
            *weights.entry(key).or_insert(0u128) += rng.random_range(1..=9u128);
        }
        let total: u128 = weights.values().sum();
        let atoms = weights.iter().map(|(k, w)| (*k, *w as f64 / total as f64)).collect();
        Pair { atoms, weights }
    }

    fn joint(&self) -> JointDist {
        let items = self
            .weights
            .iter()
            .map(|((x, y), w)| (vec![GroupValue::int(*x), GroupValue::int(*y)].into_boxed_slice(), *w))
            .collect();
        JointDist::from_weights(vec!["X".into(), "Y".into()], items).expect("valid joint")
    }

    fn h(&self, f: impl Fn(i64, i64) -> i64) -> f64 {
        law_entropy(self.atoms.iter().map(|((x, y), p)| (f(*x, *y), *p)))
    }

    fn h_xy(&self) -> f64 {
        shannon(self.atoms.iter().map(|a| a.1))
    }

    /// Two copies conditionally independent given `X+Y`, as `(x1, y1, x2, y2)` atoms.
    fn coupling(&self) -> Vec<([i64; 4], f64)> {
        let mut by_sum: HashMap<i64, Vec<((i64, i64), f64)>> = HashMap::new();
        for a in &self.atoms {
            by_sum.entry(a.0 .0 + a.0 .1).or_default().push(*a);
        }
        let mut out = Vec::new();
        for group in by_sum.values() {
            let q: f64 = group.iter().map(|a| a.1).sum();
            for ((x1, y1), p1) in group {
                for ((x2, y2), p2) in group {
                    out.push(([*x1, *y1, *x2, *y2], p1 * p2 / q));
                }
            }
        }
        out
    }
}

fn coupling_h(c: &[([i64; 4], f64)], f: impl Fn(&[i64; 4]) -> Vec<i64>) -> f64 {
    law_entropy(c.iter().map(|(t, p)| (f(t), *p)))
}

fn sum_law(d: &[(i64, f64)], mul: bool) -> HashMap<i64, f64> {
    let mut m = HashMap::with_capacity(d.len() * d.len());
    for (a, p) in d {
        for (b, q) in d {
            *m.entry(if mul { a * b } else { a + b }).or_default() += p * q;
        }
    }
    m
}

fn is_sidon_oracle(xs: &[i64]) -> bool {
    let mut seen = std::collections::HashSet::new();
    for i in 0..xs.len() {
        for j in i..xs.len() {
            if !seen.insert(xs[i] + xs[j]) {
                return false;
            }
        }
    }
    true
}

fn weighted_ints(xs: &[i64], ws: &[u128]) -> FiniteDist {
    FiniteDist::from_weights(xs.iter().zip(ws).map(|(x, w)| (GroupValue::int(*x), *w)).collect()).expect("valid law")
}

fn as_pairs(d: &FiniteDist) -> Vec<(i64, f64)> {
    d.atoms().map(|(v, p)| (v.as_small_int().expect("small integer"), p.to_f64())).collect()
}

fn exact(q: &str, b: &Bindings) -> Result<f64, String> {
    let obj = ok(Objective::parse(q))?;
    Ok(ok(obj.evaluate(&mut ExactEvaluator::new(b)))?.value)
}

// ---- criteria --------------------------------------------------------------

fn identity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1de7);
    let record = ok(find_record("energy-identity"))?;
    let cfg = CheckConfig::default();
    let mut worst = 0f64;
    for trial in 0..1000 {
        let pair = Pair::random(&mut rng, 12);
        let j = pair.joint();
        let c = pair.coupling();
        let a_oracle = coupling_h(&c, |t| t.to_vec());
        let h_sum = pair.h(|x, y| x + y);
        let h_xy = pair.h_xy();
        let (hx, hy) = (pair.h(|x, _| x), pair.h(|_, y| y));
        let a_fn = ok(additive_energy(&j))?;
        let mut b = Bindings::new();
        ok(b.bind_joint(j.clone()))?;
        let a_dsl = exact("2*H[X,Y]-H[X+Y]", &b)?;
        let mi = exact("I[X;Y]", &b)?;
        let errs = [
            a_fn - a_oracle,
            a_dsl - a_oracle,
            (h_sum + a_oracle) - 2.0 * h_xy,
            (2.0 * hx + 2.0 * hy - 2.0 * h_xy) - 2.0 * mi,
        ];
        let e = errs.iter().fold(0f64, |m, x| m.max(x.abs()));
        ensure!(e <= 1e-9, "trial {trial}: identity residual {e:e} on {:?}", pair.atoms);
        ensure!(mi >= -1e-9, "trial {trial}: negative mutual information {mi}");
        worst = worst.max(e);
        let mut cb = Bindings::new();
        ok(cb.bind_coupled(&j, ["X1", "Y1", "X2", "Y2", "S"]))?;
        for rep in ok(check_discrete(record, &cb, &cfg))? {
            ensure!(rep.verdict == Verdict::Holds, "trial {trial}: {} show {} slack {}", rep.record, rep.show, rep.slack);
            if rep.show != "upper" {
                worst = worst.max(rep.slack.abs());
                ensure!(rep.slack.abs() <= 1e-9, "trial {trial}: equality show {} slack {}", rep.show, rep.slack);
            }
        }
    }
    Ok(format!("1000 joints, max residual {worst:.1e}"))
}

fn discrete_sweep() -> Outcome {
    let records: Vec<_> = registry().iter().filter(|r| r.domain.discrete()).collect();
    ensure!(records.len() >= 25, "only {} discrete records", records.len());
    let cfg = CheckConfig::default();
    let sampler = SamplerConfig::default();
    let mut min = f64::INFINITY;
    for r in &records {
        let res = ok(random_sweep(r, &sampler, 1000, 7, &cfg))?;
        ensure!(res.min_slack >= -1e-9 && res.verdict.passes(), "{} min slack {} ({})", r.name, res.min_slack, res.worst_bindings);
        min = min.min(res.min_slack);
    }
    let base = ok(find_record("sidon-bound"))?;
    let text = base.to_text();
    let mutated_text = text.replace("- log(2) + log(2)*Coll[X]", "- 2*log(2) + 2*log(2)*Coll[X]");
    ensure!(mutated_text != text, "mutation did not apply to {text}");
    let mut mutated = ok(parse_records(&mutated_text))?.remove(0);
    mutated.name = "sidon-bound-mutated".into();
    let res = ok(random_sweep(&mutated, &sampler, 1000, 7, &cfg))?;
    ensure!(res.verdict == Verdict::Violated, "mutated record not detected: {:?}", res.verdict);
    Ok(format!("{} records x 1000 trials, min slack {min:.1e}; mutant violated {} times", records.len(), res.violations))
}

fn bsg_verification() -> Outcome {
    let record = ok(find_record("bsg-theorem"))?;
    let cfg = CheckConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xb5a);
    for trial in 0..200 {
        let pair = Pair::random(&mut rng, 12);
        let c = pair.coupling();
        let h = |f: &dyn Fn(&[i64; 4]) -> Vec<i64>| coupling_h(&c, f);
        let s = |t: &[i64; 4]| t[0] + t[1];
        let hs = h(&|t| vec![s(t)]);
        let (hx, hy) = (pair.h(|x, _| x), pair.h(|_, y| y));
        let a = h(&|t| t.to_vec());
        let log_c = 1.5 * hx + 1.5 * hy - a;
        let h_x1_s = h(&|t| vec![t[0], s(t)]) - hs;
        let h_y2_s = h(&|t| vec![t[3], s(t)]) - hs;
        let mi = h_x1_s + h_y2_s - (h(&|t| vec![t[0], t[3], s(t)]) - hs);
        let small = h(&|t| vec![t[0] + t[3], s(t)]) - hs;
        ensure!(h_x1_s >= hx - 2.0 * log_c - 1e-9, "trial {trial}: first piece fails by oracle");
        ensure!(h_y2_s >= hy - 2.0 * log_c - 1e-9, "trial {trial}: second piece fails by oracle");
        ensure!(mi.abs() <= 1e-9, "trial {trial}: conditional information {mi}");
        ensure!(small <= 0.5 * hx + 0.5 * hy + log_c + 1e-9, "trial {trial}: small sum fails by oracle");
        let mut b = Bindings::new();
        ok(b.bind_coupled(&pair.joint(), ["X1", "Y1", "X2", "Y2", "S"]))?;
        for rep in ok(check_discrete(record, &b, &cfg))? {
            ensure!(rep.verdict == Verdict::Holds, "trial {trial}: show {} slack {}", rep.show, rep.slack);
            let oracle = match rep.show.as_str() {
                "first-piece" => Some(h_x1_s),
                "second-piece" => Some(h_y2_s),
                "small-sum" => Some(small),
                _ => None,
            };
            if let Some(v) = oracle {
                ensure!((rep.lhs - v).abs() <= 1e-9, "trial {trial}: {} lhs {} vs oracle {v}", rep.show, rep.lhs);
            }
        }
    }
    let coin = FiniteDist::uniform_ints([0, 1]);
    let mut b = Bindings::new();
    ok(b.bind_coupled(&ok(JointDist::join_independent(&[("X", &coin), ("Y", &coin)]))?, ["X1", "Y1", "X2", "Y2", "S"]))?;
    let reps = ok(check_discrete(record, &b, &cfg))?;
    let small = reps.iter().find(|r| r.show == "small-sum").ok_or("no small-sum show")?;
    ensure!((small.lhs - 0.75 * LN_2).abs() <= 1e-9 && (small.rhs - 1.5 * LN_2).abs() <= 1e-9, "worked instance {} <= {}", small.lhs, small.rhs);
    ensure!(format!("{:.6} <= {:.6}", small.lhs, small.rhs) == "0.519860 <= 1.039721", "worked instance digits");
    Ok(format!("200 joints; coins: {:.6} <= {:.6}", small.lhs, small.rhs))
}

fn sidon_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x51d0);
    let (mut sidon, mut other) = (0, 0);
    let mut max_sidon_gap = 0f64;
    let mut min_other_gap = f64::INFINITY;
    while sidon < 200 || other < 200 {
        let k = rng.random_range(2..=7);
        let mut xs: Vec<i64> = (0..k).map(|_| rng.random_range(0..40)).collect();
        xs.sort();
        xs.dedup();
        let ws: Vec<u128> = xs.iter().map(|_| rng.random_range(1..=12)).collect();
        let is_sidon = is_sidon_oracle(&xs);
        if (is_sidon && sidon >= 200) || (!is_sidon && other >= 200) {
            continue;
        }
        let d = weighted_ints(&xs, &ws);
        let pairs = as_pairs(&d);
        let h = shannon(pairs.iter().map(|p| p.1));
        let s = shannon(sum_law(&pairs, false).into_values()) - h;
        let coll: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
        let gap_oracle = h - s - LN_2 * (1.0 - coll);
        let audit = ok(sidon_audit(&d))?;
        ensure!((audit.sidon_gap - gap_oracle).abs() <= 1e-9, "{xs:?}: gap {} vs oracle {gap_oracle}", audit.sidon_gap);
        ensure!(audit.sidon_gap >= -1e-9, "{xs:?}: negative gap {}", audit.sidon_gap);
        ensure!(audit.is_support_sidon == is_sidon, "{xs:?}: Sidon flag disagrees");
        if is_sidon {
            ensure!(audit.sidon_gap <= 1e-9, "{xs:?}: Sidon support with gap {}", audit.sidon_gap);
            max_sidon_gap = max_sidon_gap.max(audit.sidon_gap.abs());
            sidon += 1;
        } else {
            ensure!(audit.sidon_gap > 1e-9, "{xs:?}: non-Sidon support with gap {}", audit.sidon_gap);
            min_other_gap = min_other_gap.min(audit.sidon_gap);
            other += 1;
        }
        let pr = ok(sidon_prune(&d))?;
        let kept: Vec<i64> = pr.kept.iter().map(|v| v.as_small_int().expect("int")).collect();
        ensure!(is_sidon_oracle(&kept), "{xs:?}: pruned set {kept:?} not Sidon");
        let retained = pr.retained.to_f64().ok_or("retained probability")?;
        let kept_mass: f64 = pairs.iter().filter(|p| kept.contains(&p.0)).map(|p| p.1).sum();
        ensure!((retained - kept_mass).abs() <= 1e-12, "{xs:?}: retained {retained} vs {kept_mass}");
        let p_floor = pairs.iter().map(|p| p.1).fold(1.0, f64::min);
        let bound = 1.0 - gap_oracle.max(0.0) / (p_floor * LN_2);
        ensure!(retained >= bound - 1e-9, "{xs:?}: retained {retained} below bound {bound}");
        // if the largest atom is below 1 - eps/log 2, then s(X) < H(X) - eps
        let p_max = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        let eps = 0.999 * (1.0 - p_max) * LN_2;
        ensure!(p_max == 1.0 || s < h - eps, "{xs:?}: heavy-atom bound fails, s {s} vs H - eps {}", h - eps);
    }
    for n in 1..=8 {
        let r = ok(sidon_example_report(n, 2))?;
        let h = (4.0 * n as f64).ln();
        let expect_bound = h - LN_2 * (1.0 - 1.0 / (4.0 * n as f64)) - LN_2 / (4.0 * n as f64);
        ensure!((r.lower_bound - expect_bound).abs() <= 1e-12, "N={n}: bound {} vs {expect_bound}", r.lower_bound);
        ensure!(r.doubling >= r.lower_bound - 1e-9, "N={n}: s(X) {} below bound {}", r.doubling, r.lower_bound);
        ensure!(r.max_sidon_prob == "3/4", "N={n}: max Sidon probability {}", r.max_sidon_prob);
    }
    Ok(format!("200 Sidon (max |gap| {max_sidon_gap:.1e}) and 200 non-Sidon (min gap {min_other_gap:.2e}); example N=1..8 exact"))
}

fn sum_product_ex1() -> Outcome {
    let start = Instant::now();
    let mut ratios = Vec::new();
    for n in [100u64, 1000, 10000] {
        let d = ok(build_zero_inflated(n))?;
        let row = ok(sum_product_row(n, &d))?;
        if n <= 1000 {
            let pairs = as_pairs(&d);
            let hs = shannon(sum_law(&pairs, false).into_values());
            let hp = shannon(sum_law(&pairs, true).into_values());
            ensure!((hs - row.h_sum).abs() <= 1e-9 && (hp - row.h_product).abs() <= 1e-9, "n={n}: oracle mismatch");
        }
        let closed = 3f64.ln() / 3.0 + 2.0 / 3.0 * (1.5 * n as f64).ln();
        ensure!((row.h - closed).abs() <= 1e-9, "n={n}: H(X) {} vs {closed}", row.h);
        ratios.push(row.ratio);
    }
    ensure!(ratios.windows(2).all(|w| w[1] > w[0]), "ratios not increasing: {ratios:?}");
    let last = ratios[2];
    ensure!((1.25..=1.40).contains(&last), "final ratio {last} outside [1.25, 1.40]");
    ensure!((last - 1.325161527004406).abs() <= 1e-9, "final ratio drifted: {last}");
    ensure!(start.elapsed() < Duration::from_secs(300), "took {:?}", start.elapsed());
    Ok(format!("ratios {:.6} < {:.6} < {:.6}", ratios[0], ratios[1], ratios[2]))
}

fn sum_product_ex2() -> Outcome {
    let (n, eps) = (10_000u64, 0.6);
    let g = ok(build_generic_augmented(n, eps))?;
    let k = g.extra.len() as u64;
    ensure!(k == (n as f64).powf(1.0 - eps / 2.0).ceil() as u64, "|B| = {k}");
    let size = g.set.len() as u64;
    ensure!(size == n + k, "|A| = {size}");
    let sumset_oracle = (2 * n - 1) + k * n + k * (k + 1) / 2;
    ensure!(g.sumset_size == sumset_oracle, "|A+A| {} vs {sumset_oracle}", g.sumset_size);
    let pow = (size as f64).powf(1.4);
    ensure!(g.sumset_size as f64 >= pow, "|A+A| {} < |A|^1.4 = {pow}", g.sumset_size);
    let h = g.dist.entropy();
    ensure!((h - (size as f64).ln()).abs() <= 1e-12, "H(U) {h}");
    let ratio = g.sum_entropy() / h;
    ensure!(ratio <= 1.2, "entropy ratio {ratio}");
    Ok(format!("|A| = {size}, |A+A| = {} >= {pow:.0}, ratio {ratio:.6}", g.sumset_size))
}

fn closed_value(q: &str, b: &ContinuousBindings) -> Result<(f64, f64), String> {
    let obj = ok(Objective::parse(q))?;
    let mut ev = McEvaluator::new(b, McConfig::default());
    let e = ok(obj.evaluate(&mut ev))?;
    Ok((e.value, e.std_error))
}

fn continuous_closed_forms() -> Outcome {
    let half_log2 = 0.5 * LN_2;
    let mut worst = 0f64;
    for (mu, sigma) in [(0.0, 1.0), (1.5, 0.3), (-2.0, 4.0)] {
        let g = ok(ContinuousModel::gaussian(mu, sigma))?;
        let b: ContinuousBindings = [("X".to_string(), g.clone()), ("Y".to_string(), g)].into_iter().collect();
        for q in ["h[X+Y]-h[X]", "h[X-Y]-h[X]"] {
            let (v, se) = closed_value(q, &b)?;
            ensure!(se == 0.0, "{q} on gaussian({mu},{sigma}) was not closed form");
            ensure!((v - half_log2).abs() <= 1e-12, "{q} = {v}");
            worst = worst.max((v - half_log2).abs());
        }
    }
    for (mu, sigma) in [(0.0, 0.5), (0.3, 0.7), (-1.0, 2.0)] {
        let m = ok(ContinuousModel::lognormal(mu, sigma))?;
        let b: ContinuousBindings = [("X".to_string(), m.clone()), ("Y".to_string(), m)].into_iter().collect();
        let (v, se) = closed_value("ht[X*Y]-ht[X]", &b)?;
        ensure!(se == 0.0 && (v - half_log2).abs() <= 1e-12, "lognormal({mu},{sigma}) multiplicative doubling {v}");
        worst = worst.max((v - half_log2).abs());
        let h = mu + 0.5 * (2.0 * PI * E * sigma * sigma).ln();
        let h_inv = -mu + 0.5 * (2.0 * PI * E * sigma * sigma).ln();
        let (hx, _) = closed_value("h[X]", &b)?;
        let (hi, _) = closed_value("h[1/X]", &b)?;
        let (el, _) = closed_value("ElogAbs[X]", &b)?;
        ensure!((hx - h).abs() <= 1e-12 && (hi - h_inv).abs() <= 1e-12 && (el - mu).abs() <= 1e-12, "lognormal({mu},{sigma}) ingredients");
        let (v, se) = closed_value("h[1/X]-h[X]+2*ElogAbs[X]", &b)?;
        ensure!(se == 0.0 && v.abs() <= 1e-12, "inverse identity residual {v}");
        worst = worst.max(v.abs());
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn mc_calibration() -> Outcome {
    let start = Instant::now();
    let cases = [
        ("gaussian(0,1)", ok(ContinuousModel::gaussian(0.0, 1.0))?, 0.5 * (2.0 * PI * E).ln()),
        ("uniform(0,1)", ok(ContinuousModel::uniform(0.0, 1.0))?, 0.0),
    ];
    let mut summary = Vec::new();
    for (name, m, truth) in &cases {
        ensure!((ok(closed_form_entropy(m))? - truth).abs() <= 1e-12, "{name} closed form");
        let mut within = 0;
        for seed in 1..=20u64 {
            let xs = sample_model(m, seed, 0, 1 << 16);
            let e = ok(mc_entropy_knn(&xs, 4))?;
            if (e.value - truth).abs() <= 0.02 {
                within += 1;
            }
        }
        ensure!(within >= 19, "{name}: only {within}/20 runs within 0.02 nats");
        summary.push(format!("{name} {within}/20"));
    }
    let seeds: Vec<u64> = (1..=10).collect();
    let cfg = CheckConfig::default();
    let mut n_records = 0;
    for r in registry().iter().filter(|r| r.domain.continuous()) {
        for rep in ok(suite_check(r, &seeds, &cfg))? {
            ensure!(
                matches!(rep.verdict, Verdict::Holds | Verdict::EstimatedHolds),
                "{} show {} on {}: {} (slack {}, ci {:?})",
                rep.record,
                rep.show,
                rep.bindings,
                rep.verdict.as_str(),
                rep.slack,
                rep.ci
            );
        }
        n_records += 1;
    }
    ensure!(start.elapsed() < Duration::from_secs(600), "took {:?}", start.elapsed());
    Ok(format!("{}; {n_records} continuous records x 10 seeds hold", summary.join(", ")))
}

fn dsl_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xd51);
    let mut worst = 0f64;
    let random_law = |rng: &mut ChaCha8Rng| {
        let k = rng.random_range(1..=8);
        let mut xs: Vec<i64> = (0..k).map(|_| rng.random_range(-6..=6)).collect();
        xs.sort();
        xs.dedup();
        let ws: Vec<u128> = xs.iter().map(|_| rng.random_range(1..=7)).collect();
        weighted_ints(&xs, &ws)
    };
    for trial in 0..200 {
        let (dx, dy) = (random_law(&mut rng), random_law(&mut rng));
        let b = ok(independent(&[("X", &dx), ("Y", &dy)]))?;
        let mut iid = Bindings::new();
        ok(iid.bind_iid(&["X", "X'"], &dx))?;
        let pair = Pair::random(&mut rng, 10);
        let mut jb = Bindings::new();
        ok(jb.bind_joint(pair.joint()))?;
        let px = as_pairs(&dx);
        let hx = shannon(px.iter().map(|p| p.1));
        let suite = ok(doubling_suite(&dx))?;
        let checks = [
            (exact("H[X-Y] - 1/2*H[X] - 1/2*H[Y]", &b)?, ok(ruzsa_distance(&dx, &dy))?),
            (exact("H[X+X'] - H[X]", &iid)?, suite.sigma),
            (exact("H[X-X'] - H[X]", &iid)?, suite.delta),
            (exact("H[X+X'] - H[X]", &iid)?, shannon(sum_law(&px, false).into_values()) - hx),
            (exact("2*H[X,Y] - H[X+Y]", &jb)?, ok(additive_energy(&pair.joint()))?),
            (exact("2*H[X] - H[X+X'] - log(2) + log(2)*Coll[X]", &iid)?, ok(sidon_audit(&dx))?.sidon_gap),
            (exact("I[X;Y]", &jb)?, pair.h(|x, _| x) + pair.h(|_, y| y) - pair.h_xy()),
        ];
        for (i, (dsl, oracle)) in checks.iter().enumerate() {
            let e = (dsl - oracle).abs();
            ensure!(e <= 1e-9, "trial {trial}, check {i}: {dsl} vs {oracle}");
            worst = worst.max(e);
        }
    }
    let text = registry_text();
    let again = ok(parse_records(&text))?;
    ensure!(again.as_slice() == registry(), "registry does not round-trip structurally");
    let printed = again.iter().map(|r| r.to_text()).collect::<Vec<_>>().join("\n");
    ensure!(printed == text, "registry text does not round-trip exactly");
    let mut shows = 0;
    for r in registry() {
        for s in r.shows() {
            for q in [&s.lhs, &s.rhs] {
                let round = ok(Objective::parse(&q.to_string()))?;
                ensure!(&round == q, "{}: `{q}` reparses differently", r.name);
                shows += 1;
            }
        }
    }
    Ok(format!("200 bindings x 7 functionals, max error {worst:.1e}; {} records, {shows} sides round-trip", registry().len()))
}

fn determinism() -> Outcome {
    let dir = ok(tempfile::tempdir())?;
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let path = dir.path().join(format!("sweep-{threads}.csv"));
        let out = ok(std::process::Command::new(env!("CARGO_BIN_EXE_entropic"))
            .args(["--threads", threads, "check", "--all", "--sweep", "100", "--seed", "7", "--csv"])
            .arg(&path)
            .output())?;
        ensure!(out.status.code() == Some(0), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
        let bytes = ok(std::fs::read(&path))?;
        ensure!(bytes == out.stdout, "CSV file differs from stdout");
        let mut manifest = path.into_os_string();
        manifest.push(".manifest.json");
        ensure!(std::path::Path::new(&manifest).is_file(), "missing manifest");
        outputs.push(bytes);
    }
    ensure!(outputs[0] == outputs[1], "CSV differs between --threads 1 and --threads 3");
    let rows = outputs[0].iter().filter(|b| **b == b'\n').count() - 1;
    Ok(format!("{rows} rows, {} bytes, identical", outputs[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("identity-suite", identity_suite),
        ("discrete-sweep", discrete_sweep),
        ("bsg-exact", bsg_verification),
        ("sidon-suite", sidon_suite),
        ("sum-product-example-1", sum_product_ex1),
        ("sum-product-example-2", sum_product_ex2),
        ("continuous-closed-forms", continuous_closed_forms),
        ("mc-calibration", mc_calibration),
        ("dsl-oracle-equivalence", dsl_oracle_equivalence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
