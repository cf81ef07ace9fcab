mod common;

use bmdlimits::minimax::hjw_lower_bound;
use bmdlimits::stats::{
    binomial_sf, ln_no_replacement_miss_prob, no_replacement_miss_prob, poisson_cdf, poisson_sf,
    poisson_upper_quantile, PoissonModel,
};
use common::rel_err;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pois(mu: f64) -> PoissonModel {
    PoissonModel::new(mu).unwrap()
}

#[test]
fn frozen_tail_values() {
    // P{X >= 10}, X ~ Poisson(5), to 40 digits: 0.03182805730620481173718657...
    assert!(rel_err(common::poisson_sf(5.0, 10), 0.031828057306204811737) < 1e-15);
    assert!(rel_err(poisson_sf(pois(5.0), 10), 0.031828057306204811737) < 1e-13);
    // the neighbouring tail, P{X >= 11}
    assert!((poisson_sf(pois(5.0), 11) - 0.013695268598405).abs() < 1e-12);

    let b = binomial_sf(20, 0.3, 10).unwrap();
    assert!(rel_err(b, 0.04796189733134347578) < 1e-13);
    let exact = common::binomial_sf(20, 0.3, 10).to_f64().unwrap();
    assert!(rel_err(exact, 0.04796189733134347578) < 1e-15);
}

#[test]
fn poisson_against_oracle_over_wide_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..150 {
        let mu = 10f64.powf(rng.random_range(-1.0..3.6));
        let sd = mu.sqrt();
        let k = (mu + rng.random_range(-4.0..8.0) * sd).max(0.0).round() as u64;
        let want = common::poisson_sf(mu, k);
        let got = poisson_sf(pois(mu), k);
        assert!(rel_err(got, want) < 1e-11, "sf mu={mu} k={k}: {got} vs {want}");
        let want = common::poisson_cdf(mu, k);
        let got = poisson_cdf(pois(mu), k);
        assert!(rel_err(got, want) < 1e-11, "cdf mu={mu} k={k}: {got} vs {want}");
    }
}

#[test]
fn far_tails_stay_relative() {
    for (mu, k) in [(250.0, 420), (2257.0, 2700), (0.5, 30), (1000.0, 700)] {
        let want = common::poisson_sf(mu, k);
        assert!(rel_err(poisson_sf(pois(mu), k), want) < 1e-10, "mu={mu} k={k}");
    }
    for (mu, k) in [(1000.0, 800), (250.0, 150)] {
        let want = common::poisson_cdf(mu, k);
        assert!(rel_err(poisson_cdf(pois(mu), k), want) < 1e-10, "mu={mu} k={k}");
    }
}

#[test]
fn binomial_against_exact_rationals() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..60 {
        let n = rng.random_range(1..300u64);
        let p = rng.random_range(0.001..0.999);
        let k = rng.random_range(0..=n);
        let want = common::binomial_sf(n, p, k).to_f64().unwrap();
        let got = binomial_sf(n, p, k).unwrap();
        assert!(rel_err(got, want) < 1e-10 || (got - want).abs() < 1e-300, "n={n} p={p} k={k}");
    }
}

#[test]
fn no_replacement_against_exact_product() {
    for (v, f, n) in [(2980, 15, 539), (2980, 15, 540), (6580, 36, 524), (100, 3, 50), (10, 10, 1), (50, 0, 50)] {
        let want = common::miss_prob(v, f, n).to_f64().unwrap();
        let got = no_replacement_miss_prob(v, f, n).unwrap();
        assert!(rel_err(got, want) < 1e-12, "({v},{f},{n})");
    }
    assert_eq!(no_replacement_miss_prob(10, 3, 8).unwrap(), 0.0);
}

#[test]
fn miss_prob_is_a_ratio_of_binomial_coefficients() {
    use common::binomial_coefficient as c;
    use num_rational::BigRational;
    for v in 1..=30u64 {
        for f in 0..=v {
            for n in 0..=v {
                let want = if n > v - f {
                    0.0
                } else {
                    BigRational::new(c(v - f, n), c(v, n)).to_f64().unwrap()
                };
                let got = no_replacement_miss_prob(v, f, n).unwrap();
                assert!((got - want).abs() <= 1e-14 * want.max(1e-300) || rel_err(got, want) < 1e-13, "({v},{f},{n})");
            }
        }
    }
}

#[test]
fn quantile_is_first_tail_under_alpha() {
    for (mu, alpha) in [(250.0, 0.05), (2257.055, 0.01), (0.2, 0.3), (40.0, 0.5)] {
        let k = poisson_upper_quantile(pois(mu), alpha).unwrap();
        assert!(common::poisson_sf(mu, k) <= alpha);
        if k > 0 {
            assert!(common::poisson_sf(mu, k - 1) > alpha);
        }
    }
}

#[test]
fn hjw_matches_extended_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0f64;
    for _ in 0..1000 {
        let s = 10f64.powf(rng.random_range(2.0..8.0)) as u64;
        let n = (s as f64 * 10f64.powf(rng.random_range(-3.0..1.5))).max(1.0) as u64;
        let zeta = rng.random_range(0.01..1.0);
        let want = common::hjw(n, s, zeta);
        let got = hjw_lower_bound(n, s, zeta).unwrap();
        worst = worst.max((got - want).abs());
    }
    assert!(worst <= 1e-12, "worst abs error {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sf_and_cdf_partition(mu in 0.01f64..3000.0, frac in 0.0f64..2.0) {
        let k = (mu * frac).round() as u64 + 1;
        let m = pois(mu);
        prop_assert!((m.sf(k) + m.cdf(k - 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sf_monotone(mu in 0.01f64..3000.0, k in 0u64..5000) {
        let m = pois(mu);
        prop_assert!(m.sf(k + 1) <= m.sf(k));
        prop_assert!((0.0..=1.0).contains(&m.sf(k)));
        prop_assert!(m.ln_sf(k).ln() <= 0.0);
    }

    #[test]
    fn sf_monotone_in_mean(mu in 0.01f64..3000.0, k in 0u64..5000) {
        prop_assert!(pois(mu).sf(k) <= pois(mu * 1.01).sf(k) + 1e-15);
    }

    #[test]
    fn quantile_round_trip(mu in 0.01f64..5000.0, alpha in 0.001f64..0.999) {
        let m = pois(mu);
        let k = poisson_upper_quantile(m, alpha).unwrap();
        prop_assert!(m.sf(k) <= alpha);
        prop_assert!(k == 0 || m.sf(k - 1) > alpha);
    }

    #[test]
    fn miss_prob_monotone(v in 2u64..4000, f_frac in 0.0f64..0.9, n_frac in 0.0f64..1.0) {
        let f = (v as f64 * f_frac) as u64;
        let n = (v as f64 * n_frac) as u64;
        let p = no_replacement_miss_prob(v, f, n).unwrap();
        prop_assert!(no_replacement_miss_prob(v, f + 1, n).unwrap() <= p + 1e-15);
        prop_assert!(no_replacement_miss_prob(v + 1, f, n).unwrap() >= p - 1e-15);
    }

    #[test]
    fn miss_prob_log_and_linear_agree(v in 1u64..5000, f_frac in 0.0f64..1.0, n_frac in 0.0f64..1.0) {
        let f = (v as f64 * f_frac) as u64;
        let n = (v as f64 * n_frac) as u64;
        let lin = no_replacement_miss_prob(v, f, n).unwrap();
        let ln = ln_no_replacement_miss_prob(v, f, n).unwrap();
        prop_assert!((ln.prob() - lin).abs() < 1e-12);
        if n > 0 {
            prop_assert!(lin <= no_replacement_miss_prob(v, f, n - 1).unwrap());
        }
    }
}
