use std::f64::consts::LN_2;

use proptest::prelude::*;

use entropic_core::catalog::{check_discrete, find_record, CheckConfig, Verdict};
use entropic_core::continuous::{mc_entropy_knn, sample_model, ContinuousBindings, ContinuousModel, McConfig, McEvaluator};
use entropic_core::exact::Bindings;
use entropic_core::functionals::{
    additive_energy, doubling_suite, is_sidon, ruzsa_distance, sidon_audit, sidon_prune,
};
use entropic_core::quantity::Objective;
use entropic_core::search::{optimize_over_simplex, Direction, SearchConfig, SearchObjective};
use entropic_core::setcalc::{combined_size, set_energy, FiniteSet};
use entropic_core::{combine_independent, entropy_of_combination, BinOp, FiniteDist, GroupValue, JointDist};

fn law(atoms: Vec<(i64, u128)>) -> FiniteDist {
    FiniteDist::from_weights(atoms.into_iter().map(|(v, w)| (GroupValue::int(v), w)).collect()).unwrap()
}

fn arb_law(lo: i64, hi: i64, max_atoms: usize) -> impl Strategy<Value = FiniteDist> {
    prop::collection::vec((lo..=hi, 1u128..=9), 1..=max_atoms).prop_map(law)
}

fn arb_unit_law() -> impl Strategy<Value = FiniteDist> {
    prop::collection::vec((prop_oneof![-6i64..=-1, 1i64..=6], 1u128..=9), 1..=5).prop_map(law)
}

fn arb_joint() -> impl Strategy<Value = JointDist> {
    prop::collection::vec(((-4i64..=4, -4i64..=4), 1u128..=9), 1..=12).prop_map(|atoms| {
        let items = atoms
            .into_iter()
            .map(|((x, y), w)| (vec![GroupValue::int(x), GroupValue::int(y)].into_boxed_slice(), w))
            .collect();
        JointDist::from_weights(vec!["X".into(), "Y".into()], items).unwrap()
    })
}

fn arb_set(lo: i64, hi: i64, max: usize) -> impl Strategy<Value = FiniteSet> {
    prop::collection::btree_set(lo..=hi, 1..=max).prop_map(FiniteSet::from_ints)
}

fn h_sum(a: &FiniteDist, b: &FiniteDist, op: BinOp) -> f64 {
    entropy_of_combination(a, b, op).unwrap().0
}

const TOL: f64 = 1e-9;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn entropy_is_nonnegative_and_vanishes_only_on_points(d in arb_law(-20, 20, 8)) {
        let h = d.entropy();
        prop_assert!(h >= 0.0);
        prop_assert_eq!(h == 0.0, d.len() == 1);
    }

    #[test]
    fn independent_sum_dominates_summands(x in arb_law(-10, 10, 6), y in arb_law(-10, 10, 6)) {
        let h = h_sum(&x, &y, BinOp::Add);
        prop_assert!(h >= x.entropy().max(y.entropy()) - TOL);
    }

    #[test]
    fn translation_leaves_entropy_unchanged(d in arb_law(-50, 50, 10), c in -1000i64..1000) {
        let shifted = combine_independent(&d, &FiniteDist::point(GroupValue::int(c)), BinOp::Add).unwrap();
        prop_assert!((shifted.entropy() - d.entropy()).abs() <= 1e-11);
    }

    #[test]
    fn text_and_marginals_round_trip_exactly(x in arb_law(-9, 9, 6), y in arb_law(-9, 9, 6)) {
        prop_assert_eq!(&FiniteDist::parse_text(&x.to_text()).unwrap(), &x);
        let j = JointDist::join_independent(&[("X", &x), ("Y", &y)]).unwrap();
        prop_assert_eq!(&j.marginal_dist("X").unwrap(), &x);
        prop_assert_eq!(&j.marginal_dist("Y").unwrap(), &y);
    }

    #[test]
    fn energy_identity_and_upper_bound(j in arb_joint()) {
        let a = additive_energy(&j).unwrap();
        let hxy = j.entropy();
        let hx = j.marginal_dist("X").unwrap().entropy();
        let hy = j.marginal_dist("Y").unwrap().entropy();
        let sum = j.pushforward_dist(&entropic_core::RvExpr::bin(BinOp::Add, entropic_core::RvExpr::var("X"), entropic_core::RvExpr::var("Y"))).unwrap();
        prop_assert!((a - (2.0 * hxy - sum.entropy())).abs() <= TOL);
        prop_assert!(a <= hxy + hx.min(hy) + TOL);
    }

    #[test]
    fn ruzsa_distance_inequalities(x in arb_law(-8, 8, 5), y in arb_law(-8, 8, 5), z in arb_law(-8, 8, 5)) {
        let d = |a: &FiniteDist, b: &FiniteDist| ruzsa_distance(a, b).unwrap();
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + TOL);
        prop_assert!(d(&x, &y.neg()) <= 3.0 * d(&x, &y) + TOL);
    }

    #[test]
    fn doubling_and_difference_are_comparable(x in arb_law(-12, 12, 7)) {
        let s = doubling_suite(&x).unwrap();
        prop_assert!(s.sigma >= 0.5 * s.delta - TOL && s.sigma <= 2.0 * s.delta + TOL);
    }

    #[test]
    fn product_and_quotient_are_comparable(x in arb_unit_law()) {
        let s = doubling_suite(&x).unwrap();
        let (st, dt) = (s.sigma_tilde.unwrap(), s.delta_tilde.unwrap());
        prop_assert!(st >= 0.5 * dt - TOL && st <= 2.0 * dt + TOL);
    }

    #[test]
    fn sidon_gap_vanishes_exactly_on_sidon_supports(x in arb_law(0, 40, 7)) {
        let values: Vec<GroupValue> = x.support().cloned().collect();
        let audit = sidon_audit(&x).unwrap();
        prop_assert!(audit.sidon_gap >= -TOL);
        prop_assert_eq!(audit.sidon_gap <= TOL, is_sidon(&values).unwrap());
    }

    #[test]
    fn pruning_keeps_a_heavy_sidon_subset(x in arb_law(0, 30, 8)) {
        use num_traits::ToPrimitive;
        let pr = sidon_prune(&x).unwrap();
        prop_assert!(is_sidon(&pr.kept).unwrap());
        let audit = sidon_audit(&x).unwrap();
        let bound = 1.0 - audit.sidon_gap.max(0.0) / (audit.p_floor.to_f64() * LN_2);
        prop_assert!(pr.retained.to_f64().unwrap() >= bound - TOL);
        prop_assert!((pr.guaranteed - bound).abs() <= 1e-9 || audit.sidon_gap < 0.0);
    }

    #[test]
    fn small_doubling_forces_a_heavy_atom(x in arb_law(-10, 10, 6)) {
        let s = h_sum(&x, &x, BinOp::Add) - x.entropy();
        let eps = x.entropy() - s;
        if eps > 0.0 {
            prop_assert!(x.max_prob().to_f64() >= 1.0 - eps / LN_2 - TOL);
        }
    }

    #[test]
    fn sumsets_and_energy(a in arb_set(-15, 15, 8), b in arb_set(-15, 15, 8)) {
        let sz = combined_size(&a, &b, BinOp::Add).unwrap();
        prop_assert!(sz >= a.len().max(b.len()) as u64);
        let e = set_energy(&a, &b).unwrap();
        prop_assert_eq!(e, set_energy(&b, &a).unwrap());
        let (na, nb) = (a.len() as u128, b.len() as u128);
        prop_assert!(e <= na * na * nb && e <= na * nb * nb);
    }

    #[test]
    fn sidon_sets_have_minimal_energy(a in arb_set(0, 40, 7)) {
        let n = a.len() as u128;
        let minimal = set_energy(&a, &a).unwrap() == 2 * n * n - n;
        prop_assert_eq!(minimal, is_sidon(a.elements()).unwrap());
        prop_assert_eq!(minimal, sidon_audit(&a.uniform()).unwrap().is_support_sidon);
    }

    #[test]
    fn sidon_bound_is_tight_on_sidon_supports(a in arb_set(0, 40, 6).prop_filter("Sidon", |a| is_sidon(a.elements()).unwrap())) {
        let mut bb = Bindings::new();
        bb.bind_iid(&["X", "X'"], &a.uniform()).unwrap();
        let rep = &check_discrete(find_record("sidon-bound").unwrap(), &bb, &CheckConfig::default()).unwrap()[0];
        prop_assert_eq!(rep.verdict, Verdict::Holds);
        prop_assert!(rep.slack.abs() <= TOL);
    }
}

fn closed(q: &str, b: &ContinuousBindings) -> (f64, f64) {
    let e = Objective::parse(q).unwrap().evaluate(&mut McEvaluator::new(b, McConfig::default())).unwrap();
    (e.value, e.std_error)
}

fn pair(x: ContinuousModel, y: ContinuousModel) -> ContinuousBindings {
    [("X".to_string(), x), ("Y".to_string(), y)].into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_doubling_is_half_log_two(mu in -5.0f64..5.0, sigma in 0.1f64..10.0) {
        let g = ContinuousModel::gaussian(mu, sigma).unwrap();
        let b = pair(g.clone(), g);
        for q in ["h[X+Y]-h[X]", "h[X-Y]-h[X]"] {
            let (v, se) = closed(q, &b);
            prop_assert_eq!(se, 0.0);
            prop_assert!((v - 0.5 * LN_2).abs() <= 1e-12);
        }
    }

    #[test]
    fn lognormal_product_and_quotient_doubling(mu in -3.0f64..3.0, sigma in 0.1f64..3.0) {
        let m = ContinuousModel::lognormal(mu, sigma).unwrap();
        let b = pair(m.clone(), m);
        let (st, _) = closed("ht[X*Y]-ht[X]", &b);
        let (dt, _) = closed("ht[X/Y]-ht[X]", &b);
        prop_assert!((st - 0.5 * LN_2).abs() <= 1e-12);
        prop_assert!((st / dt - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn multiplicative_distance_is_scale_invariant(
        m1 in -2.0f64..2.0, s1 in 0.2f64..2.0, m2 in -2.0f64..2.0, s2 in 0.2f64..2.0, c1 in 0.1f64..10.0, c2 in 0.1f64..10.0,
    ) {
        let q = "ht[X/Y] - 1/2*ht[X] - 1/2*ht[Y]";
        let base = pair(ContinuousModel::lognormal(m1, s1).unwrap(), ContinuousModel::lognormal(m2, s2).unwrap());
        let scaled = pair(ContinuousModel::lognormal(m1 + c1.ln(), s1).unwrap(), ContinuousModel::lognormal(m2 + c2.ln(), s2).unwrap());
        let (a, se_a) = closed(q, &base);
        let (b, se_b) = closed(q, &scaled);
        prop_assert!(se_a == 0.0 && se_b == 0.0);
        prop_assert!((a - b).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn search_iterates_stay_on_the_simplex(seed in any::<u64>(), hi in 3i64..9, maximize in any::<bool>()) {
        let obj = SearchObjective {
            objective: Objective::parse("H[X+X'] - H[X]").unwrap(),
            direction: if maximize { Direction::Maximize } else { Direction::Minimize },
            support: (0..=hi).map(GroupValue::int).collect(),
        };
        let cfg = SearchConfig { seed, restarts: 3, epochs: 3, steps: 4, h_floor: None, ..SearchConfig::default() };
        let r = optimize_over_simplex(&obj, &cfg).unwrap();
        prop_assert!(r.best.support().all(|v| obj.support.contains(v)));
        prop_assert!(r.best.denom() > 0);
        let mut b = Bindings::new();
        b.bind_iid(&["X", "X'"], &r.best).unwrap();
        let again = obj.objective.evaluate(&mut entropic_core::exact::ExactEvaluator::new(&b)).unwrap().value;
        prop_assert_eq!(again, r.value);
        for p in &r.trace {
            prop_assert!(p.value.is_finite());
        }
        let better = if maximize { r.value >= r.initial_value - TOL } else { r.value <= r.initial_value + TOL };
        prop_assert!(better);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let other = pool.install(|| optimize_over_simplex(&obj, &cfg).unwrap());
        prop_assert_eq!(other, r);
    }

    #[test]
    fn knn_estimates_ignore_worker_count(seed in any::<u64>()) {
        let m = ContinuousModel::gaussian(0.0, 1.0).unwrap();
        let a = mc_entropy_knn(&sample_model(&m, seed, 0, 4096), 4).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| mc_entropy_knn(&sample_model(&m, seed, 0, 4096), 4).unwrap());
        prop_assert_eq!(a, b);
    }
}
