use bmdlimits::space::{
    estimate, l1_distance, Marginal, Preset, Selector, Transaction, TransactionDistribution, TransactionSpace,
    ValueSet,
};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn all_points(space: &TransactionSpace) -> Vec<Transaction> {
    let dims: Vec<u64> = space.attributes().iter().map(|a| a.cardinality).collect();
    let mut out = vec![vec![]];
    for &d in &dims {
        out = out
            .into_iter()
            .flat_map(|p: Vec<u64>| {
                (0..d).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(Transaction).collect()
}

fn dense_l1(p: &TransactionDistribution, q: &TransactionDistribution) -> f64 {
    all_points(p.space()).iter().map(|x| (p.pmf(x) - q.pmf(x)).abs()).sum()
}

#[test]
fn preset_cardinalities() {
    assert_eq!(TransactionSpace::preset(Preset::Optimistic).cardinality(), BigUint::from(6_144_000u64));
    let realistic = TransactionSpace::preset(Preset::Realistic).cardinality();
    assert_eq!(realistic.to_string(), "122781528554610775556096000000000000000000000000");
    let f: f64 = realistic.to_string().parse().unwrap();
    assert!((f / 1.2e47 - 1.0).abs() < 0.05);
}

#[test]
fn chi_square_goodness_of_fit() {
    let space = TransactionSpace::from_cardinalities(&[3, 4, 2]).unwrap();
    let factored = TransactionDistribution::factored(
        &space,
        vec![
            Marginal::Weights(vec![0.5, 0.3, 0.2]),
            Marginal::Uniform,
            Marginal::Weights(vec![0.9, 0.1]),
        ],
    )
    .unwrap();
    let pts = vec![Transaction(vec![0, 0, 0]), Transaction(vec![2, 3, 1]), Transaction(vec![1, 1, 0])];
    let sparse = TransactionDistribution::sparse(&space, pts, vec![0.6, 0.3, 0.1]).unwrap();
    for (d, df) in [(&factored, 23.0), (&sparse, 2.0)] {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let mut counts: HashMap<Transaction, u64> = HashMap::new();
        for _ in 0..n {
            *counts.entry(d.sample(&mut rng)).or_default() += 1;
        }
        let mut chi2 = 0.0;
        for x in all_points(&space) {
            let e = d.pmf(&x) * n as f64;
            let o = *counts.get(&x).unwrap_or(&0) as f64;
            if e == 0.0 {
                assert_eq!(o, 0.0, "sampled a zero-probability point {x}");
            } else {
                chi2 += (o - e) * (o - e) / e;
            }
        }
        // far beyond the 0.999 quantile
        let limit: f64 = df + 6.0 * (2.0 * df as f64).sqrt();
        assert!(chi2 < limit, "chi2 {chi2} over {limit}");
    }
}

#[test]
fn selector_mass_matches_enumeration() {
    let space = TransactionSpace::from_cardinalities(&[4, 5, 3]).unwrap();
    let d = TransactionDistribution::factored(
        &space,
        vec![
            Marginal::Weights(vec![0.1, 0.2, 0.3, 0.4]),
            Marginal::Uniform,
            Marginal::Weights(vec![0.2, 0.0, 0.8]),
        ],
    )
    .unwrap();
    let sel = Selector::everything(&space)
        .restrict(0, ValueSet::Range { start: 1, end: 3 })
        .restrict(2, ValueSet::Values([0, 1].into()));
    let brute: f64 = all_points(&space).iter().filter(|x| sel.matches(&x.0)).map(|x| d.pmf(x)).sum();
    assert!((d.mass(&sel) - brute).abs() < 1e-14);
    assert!((d.mass(&Selector::everything(&space)) - 1.0).abs() < 1e-14);
}

#[test]
fn estimate_is_empirical_frequency() {
    let space = TransactionSpace::from_cardinalities(&[3, 3]).unwrap();
    let t = |a, b| Transaction(vec![a, b]);
    let training = vec![t(2, 0), t(0, 1), t(2, 0), t(1, 1)];
    let est = estimate(&space, &training).unwrap();
    let (pts, ws) = est.support().unwrap();
    assert_eq!(pts, &[t(0, 1), t(1, 1), t(2, 0)]);
    assert_eq!(ws, &[0.25, 0.25, 0.5]);
    assert!(estimate(&space, &[]).is_err());
    assert!(estimate(&space, &[t(3, 0)]).is_err());
}

#[test]
fn l1_forms_agree_with_dense_sum() {
    let space = TransactionSpace::from_cardinalities(&[3, 4]).unwrap();
    let u = TransactionDistribution::uniform(&space);
    let f = TransactionDistribution::factored(&space, vec![Marginal::Weights(vec![0.1, 0.2, 0.7]), Marginal::Uniform])
        .unwrap();
    let s = TransactionDistribution::sparse(
        &space,
        vec![Transaction(vec![0, 0]), Transaction(vec![2, 3])],
        vec![0.25, 0.75],
    )
    .unwrap();
    let p = TransactionDistribution::point_mass(&space, Transaction(vec![2, 3])).unwrap();
    let all = [&u, &f, &s, &p];
    for a in all {
        for b in all {
            let got = l1_distance(a, b).unwrap();
            assert!((got - dense_l1(a, b)).abs() < 1e-12);
        }
    }
    let other = TransactionSpace::from_cardinalities(&[3, 5]).unwrap();
    assert!(l1_distance(&u, &TransactionDistribution::uniform(&other)).is_err());
}

fn normalized(w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn arb_dist(space: TransactionSpace) -> impl Strategy<Value = TransactionDistribution> {
    let n = space.cardinality_u64().unwrap() as usize;
    let dims: Vec<u64> = space.attributes().iter().map(|a| a.cardinality).collect();
    let sparse_space = space.clone();
    prop_oneof![
        prop::collection::vec(0.0f64..1.0, n).prop_filter("some mass", |w| w.iter().sum::<f64>() > 0.01).prop_map(
            move |w| {
                let pts = all_points(&sparse_space);
                let (pts, w): (Vec<_>, Vec<_>) = pts.into_iter().zip(w).filter(|(_, w)| *w > 0.0).unzip();
                TransactionDistribution::sparse(&sparse_space, pts, normalized(w)).unwrap()
            }
        ),
        dims.iter()
            .map(|&d| prop::collection::vec(0.01f64..1.0, d as usize))
            .collect::<Vec<_>>()
            .prop_map(move |ws| {
                TransactionDistribution::factored(&space, ws.into_iter().map(|w| Marginal::Weights(normalized(w))).collect()).unwrap()
            }),
    ]
}

fn small_space() -> TransactionSpace {
    TransactionSpace::from_cardinalities(&[2, 3, 2]).unwrap()
}

proptest! {
    #[test]
    fn l1_is_a_metric(p in arb_dist(small_space()), q in arb_dist(small_space()), r in arb_dist(small_space())) {
        let pq = l1_distance(&p, &q).unwrap();
        prop_assert!((0.0..=2.0).contains(&pq));
        prop_assert!((pq - l1_distance(&q, &p).unwrap()).abs() < 1e-12);
        prop_assert!(l1_distance(&p, &p).unwrap() < 1e-12);
        prop_assert!(pq <= l1_distance(&p, &r).unwrap() + l1_distance(&r, &q).unwrap() + 1e-12);
        prop_assert!((pq - dense_l1(&p, &q)).abs() < 1e-12);
    }

    #[test]
    fn estimate_sums_to_one_on_observed_points(p in arb_dist(small_space()), seed in any::<u64>(), n in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let training: Vec<Transaction> = (0..n).map(|_| p.sample(&mut rng)).collect();
        let est = estimate(p.space(), &training).unwrap();
        let (pts, ws) = est.support().unwrap();
        prop_assert!((ws.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pts.iter().all(|x| training.contains(x)));
    }

    #[test]
    fn pmf_sums_to_one(p in arb_dist(small_space())) {
        let total: f64 = all_points(p.space()).iter().map(|x| p.pmf(x)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn samples_stay_in_support(p in arb_dist(small_space()), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let x = p.sample(&mut rng);
            prop_assert!(p.space().contains(&x));
            prop_assert!(p.pmf(&x) > 0.0);
        }
    }

    #[test]
    fn selector_intersection_is_conjunction(
        a in prop::collection::btree_set(0u64..3, 0..3),
        lo in 0u64..3,
        width in 0u64..3,
        x in prop::collection::vec(0u64..3, 3),
    ) {
        let space = TransactionSpace::from_cardinalities(&[3, 3, 3]).unwrap();
        let s1 = Selector::everything(&space).restrict(0, ValueSet::Values(a));
        let s2 = Selector::everything(&space).restrict(0, ValueSet::Range { start: lo, end: lo + width });
        let both = s1.intersect(&s2);
        prop_assert_eq!(both.matches(&x), s1.matches(&x) && s2.matches(&x));
    }
}
