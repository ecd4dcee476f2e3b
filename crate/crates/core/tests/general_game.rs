mod common;

use proptest::prelude::*;
use robust_beliefs::binary_finite_game::{dm_best_response, exante_regret, oracle_posterior_binary, BeliefVector, BinaryGame, NatureMixtureFinite};
use robust_beliefs::general_game::*;
use robust_beliefs::numeric::log_add_exp;
use robust_beliefs::BregmanGenerator;

use common::{close, config};

const NS: [usize; 4] = [25, 50, 100, 200];

fn counts(k: usize, n: usize) -> CountVector {
    CountVector::new(vec![k, n - k])
}

fn regrets(signals: usize, alpha: f64, gen: &BregmanGenerator) -> Vec<f64> {
    let (base, dir) = match signals {
        2 => (vec![0.5, 0.5], vec![1.0, -1.0]),
        _ => (vec![1.0 / 3.0; 3], vec![1.0, 0.0, -1.0]),
    };
    rate_experiment(&base, &dir, 1.0, alpha, &NS, gen, 0.5, RegretMode::Exact)
        .unwrap()
        .iter()
        .map(|p| p.regret)
        .collect()
}

/// Experiments whose relabeling `s ↔ |S|−1−s` swaps the states.
fn mirrored(pi1: Vec<f64>) -> MultinomialExperiment {
    let pi0 = pi1.iter().rev().copied().collect();
    MultinomialExperiment::new(pi1, pi0).unwrap()
}

fn normalized(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    let mut v: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let tail: f64 = v[..v.len() - 1].iter().sum();
    *v.last_mut().unwrap() = 1.0 - tail;
    v
}

#[test]
fn oracle_examples() {
    let flat = MultinomialExperiment::uninformative(vec![0.25, 0.75]).unwrap();
    for k in 0..=7 {
        assert_eq!(oracle_posterior_general(&counts(k, 7), &flat, 0.37).unwrap(), 0.37);
    }
    let e = MultinomialExperiment::new(vec![0.3, 0.3, 0.4], vec![0.5, 0.5, 0.0]).unwrap();
    assert_eq!(oracle_posterior_general(&CountVector::new(vec![0, 0, 5]), &e, 0.5).unwrap(), 1.0);
}

#[test]
fn binary_oracle_equivalence() {
    for &pi in &[0.5, 0.55, 0.7, 0.9, 0.999, 1.0] {
        let e = MultinomialExperiment::binary(pi).unwrap();
        for &n in &[1usize, 5, 40, 150] {
            let g = BinaryGame::new(n).unwrap();
            for k in 0..=n {
                let c = counts(k, n);
                let b = oracle_posterior_binary(n, pi, k).unwrap();
                if pi == 1.0 && k > 0 && k < n {
                    // impossible under both states: an error here, ½ by convention there
                    assert!(matches!(oracle_posterior_general(&c, &e, 0.5), Err(GeneralError::ImpossibleEvent(_))));
                    assert_eq!(b, 0.5);
                    continue;
                }
                let a = oracle_posterior_general(&c, &e, 0.5).unwrap();
                assert!(close(a, b, 1e-12), "pi {pi} n {n} k {k}: {a} vs {b}");
                let l1 = log_multinomial_likelihood(&e.pi1, &c);
                let l0 = log_multinomial_likelihood(&e.pi0, &c);
                let lm = c.ln_multinomial_coefficient() + log_add_exp(0.5f64.ln() + l1, 0.5f64.ln() + l0);
                let lb = g.ln_marginal(pi, k);
                assert!(lm == lb || close(lm, lb, 1e-12 * lb.abs().max(1.0)), "pi {pi} n {n} k {k}: {lm} vs {lb}");
            }
        }
    }
}

#[test]
fn single_experiment_rule_is_its_oracle() {
    let e = MultinomialExperiment::new(vec![0.2, 0.5, 0.3], vec![0.4, 0.4, 0.2]).unwrap();
    let mix = GeneralMixture::single(e.clone(), 0.3).unwrap();
    let rule = dm_rule_general(&mix, 9);
    for k in CountVector::enumerate(9, 3) {
        assert!(close(rule.belief(&k).unwrap(), oracle_posterior_general(&k, &e, 0.3).unwrap(), 1e-15));
    }
    for gen in [BregmanGenerator::mse(), BregmanGenerator::log()] {
        let r = general_regret(&mix, &rule, 9, &gen, RegretMode::Exact).unwrap();
        assert!(r.value.abs() < 1e-15, "{r:?}");
    }
}

#[test]
fn binary_mixture_rule_and_regret_equivalence() {
    let gen = BregmanGenerator::mse();
    for &(pi, w) in &[(0.7, 0.4), (0.9, 0.5), (1.0, 0.3), (0.6, 0.9)] {
        for &n in &[1usize, 6, 30, 120] {
            let b = dm_best_response(&NatureMixtureFinite::two_point(pi, w).unwrap(), n, &gen).unwrap();
            let mix = GeneralMixture::new(
                vec![MultinomialExperiment::binary(0.5).unwrap(), MultinomialExperiment::binary(pi).unwrap()],
                vec![1.0 - w, w],
                0.5,
            )
            .unwrap();
            let rule = dm_rule_general(&mix, n);
            for k in 0..=n {
                let a = rule.belief(&counts(k, n)).unwrap();
                assert!(close(a, b.a[k], 1e-12), "pi {pi} w {w} n {n} k {k}");
            }
            // regret at each support point against the binary module
            let beliefs = b.clone();
            let lookup = move |c: &CountVector| beliefs.a[c.counts[0]];
            for &p in &[0.5, pi] {
                let single = GeneralMixture::single(MultinomialExperiment::binary(p).unwrap(), 0.5).unwrap();
                let g = general_regret(&single, &lookup, n, &gen, RegretMode::Exact).unwrap().value;
                let e = exante_regret(&b, p, &gen).unwrap();
                assert!(close(g, e, 1e-12), "pi {p} n {n}: {g} vs {e}");
            }
        }
    }
}

#[test]
fn arbitrary_binary_rule_regret_equivalence() {
    let gen = BregmanGenerator::mse();
    let a = BeliefVector::new((0..=10).map(|k| ((k as f64) * 0.37).sin().abs()).collect()).unwrap();
    let lookup = |c: &CountVector| a.a[c.counts[0]];
    for &pi in &[0.5, 0.62, 0.8, 1.0] {
        let mix = GeneralMixture::single(MultinomialExperiment::binary(pi).unwrap(), 0.5).unwrap();
        let g = general_regret(&mix, &lookup, 10, &gen, RegretMode::Exact).unwrap().value;
        assert!(close(g, exante_regret(&a, pi, &gen).unwrap(), 1e-12));
    }
}

#[test]
fn relabeling_symmetry_at_n6() {
    let mix = GeneralMixture::new(
        vec![
            MultinomialExperiment::uninformative(vec![0.3, 0.4, 0.3]).unwrap(),
            mirrored(vec![0.5, 0.3, 0.2]),
            mirrored(vec![0.1, 0.1, 0.8]),
        ],
        vec![0.2, 0.5, 0.3],
        0.5,
    )
    .unwrap();
    let rule = dm_rule_general(&mix, 6);
    for k in CountVector::enumerate(6, 3) {
        let swapped = CountVector::new(k.counts.iter().rev().copied().collect());
        let s = rule.belief(&k).unwrap() + rule.belief(&swapped).unwrap();
        assert!(close(s, 1.0, 1e-14), "{k:?}: {s}");
    }
}

#[test]
fn zero_mass_count_is_reported() {
    let mix = GeneralMixture::single(MultinomialExperiment::new(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]).unwrap(), 0.5).unwrap();
    let rule = dm_rule_general(&mix, 2);
    assert!(matches!(rule.belief(&CountVector::new(vec![0, 0, 2])), Err(GeneralError::ZeroMassCount(_))));
    assert_eq!(rule.belief(&CountVector::new(vec![2, 0, 0])).unwrap(), 1.0);
}

#[test]
fn monte_carlo_matches_exact_on_three_signals() {
    let mix = GeneralMixture::new(
        vec![
            MultinomialExperiment::uninformative(vec![1.0 / 3.0; 3]).unwrap(),
            MultinomialExperiment::new(vec![0.45, 1.0 / 3.0, 1.0 - 0.45 - 1.0 / 3.0], vec![1.0 - 0.45 - 1.0 / 3.0, 1.0 / 3.0, 0.45]).unwrap(),
        ],
        vec![0.5, 0.5],
        0.5,
    )
    .unwrap();
    let rule = dm_rule_general(&mix, 50);
    for gen in [BregmanGenerator::mse(), BregmanGenerator::log()] {
        let exact = general_regret(&mix, &rule, 50, &gen, RegretMode::Exact).unwrap();
        let mc = general_regret(&mix, &rule, 50, &gen, RegretMode::MonteCarlo { draws: 200_000, seed: 0x5eed }).unwrap();
        assert!(exact.exact && !mc.exact);
        assert!(mc.stderr > 0.0);
        assert!((mc.value - exact.value).abs() <= 3.0 * mc.stderr, "{exact:?} vs {mc:?}");
        let again = general_regret(&mix, &rule, 50, &gen, RegretMode::MonteCarlo { draws: 200_000, seed: 0x5eed }).unwrap();
        assert_eq!(mc, again);
    }
}

#[test]
fn rate_trichotomy_examples() {
    let gen = BregmanGenerator::mse();
    let r = regrets(2, 1.0, &gen);
    assert!(r[3] / r[0] < 0.5, "{r:?}");
    let r = regrets(2, 0.5, &gen);
    assert!((r[3] - r[2]).abs() / r[2] < 0.15, "{r:?}");
    assert!(r[3] > 0.3 * r[0], "{r:?}");
    let r = regrets(2, 0.25, &gen);
    assert!(r[3] < r[0], "{r:?}");
}

#[test]
fn rate_trichotomy_on_two_and_three_signals() {
    for gen in [BregmanGenerator::mse(), BregmanGenerator::log()] {
        for s in [2, 3] {
            for alpha in [0.25, 1.0] {
                let r = regrets(s, alpha, &gen);
                assert!(r[3] / r[0] < 0.5, "|S| {s} alpha {alpha}: {r:?}");
                assert!(r.windows(2).all(|w| w[1] < w[0]));
            }
            let r = regrets(s, 0.5, &gen);
            assert!(r[3] >= 0.3 * r[0] && (r[3] - r[2]).abs() / r[2] <= 0.15, "|S| {s}: {r:?}");
        }
    }
}

#[test]
fn rate_support_gap_shrinks_at_the_chosen_rate() {
    let pts = rate_experiment(&[0.5, 0.5], &[1.0, -1.0], 1.0, 0.5, &NS, &BregmanGenerator::mse(), 0.5, RegretMode::Exact).unwrap();
    for p in &pts {
        assert!(close(p.l1_gap * (p.n as f64).sqrt(), 2.0, 1e-12));
    }
}

#[test]
fn rate_experiment_errors() {
    let gen = BregmanGenerator::mse();
    let r = rate_experiment(&[0.5, 0.5], &[1.0, -1.0], 3.0, 0.25, &[1, 4], &gen, 0.5, RegretMode::Exact);
    assert!(matches!(r, Err(GeneralError::SimplexViolation { n: 1, .. })));
    assert!(rate_experiment(&[0.5, 0.5], &[1.0, 1.0], 1.0, 0.5, &[4], &gen, 0.5, RegretMode::Exact).is_err());
    let c = clip_c(3.0, &[0.5, 0.5], &[1.0, -1.0], 0.25, 1);
    assert!(c < 1.0);
    assert!(rate_experiment(&[0.5, 0.5], &[1.0, -1.0], c, 0.25, &[1, 4], &gen, 0.5, RegretMode::Exact).is_ok());
}

#[test]
fn identification_validator() {
    let flat = MultinomialExperiment::uninformative(vec![0.5, 0.5]).unwrap();
    let good = vec![flat.clone(), MultinomialExperiment::binary(0.7).unwrap(), MultinomialExperiment::binary(0.9).unwrap()];
    assert!(validate_identification(&good).is_ok());
    assert!(validate_identification(&good[1..]).is_err());
    let two_flat = vec![flat.clone(), MultinomialExperiment::uninformative(vec![0.3, 0.7]).unwrap()];
    assert!(validate_identification(&two_flat).is_err());
    // the flipped experiment labels the states the wrong way round
    let flipped = vec![flat, MultinomialExperiment::binary(0.7).unwrap(), MultinomialExperiment::new(vec![0.3, 0.7], vec![0.7, 0.3]).unwrap()];
    assert!(matches!(validate_identification(&flipped), Err(GeneralError::Identification(_))));
}

#[test]
fn lemma_examples() {
    let flat = MultinomialExperiment::uninformative(vec![0.4, 0.6]).unwrap();
    let r = lemma_checks(&flat, &[0.6, 0.4], 100, 10_000, 1).unwrap();
    assert_eq!(r.llr_mean, 0.0);
    assert_eq!(r.kl_difference, 0.0);
    assert!(r.llr_within_3se);

    let e = MultinomialExperiment::new(vec![0.6, 0.4], vec![0.4, 0.6]).unwrap();
    let r = lemma_checks(&e, &[0.6, 0.4], 5000, 20_000, 0xC0FFEE).unwrap();
    assert!(close(r.kl_difference, kl_divergence(&[0.6, 0.4], &[0.4, 0.6]), 1e-15));
    assert!(r.llr_within_3se, "{r:?}");
    let ratios: Vec<f64> = r.quadratic_remainder.iter().map(|p| p.1).collect();
    assert!(ratios.windows(2).all(|w| w[1] <= w[0] * 1.05), "{ratios:?}");

    let t = [1.0 / 3.0; 3];
    let eps = [0.02, 0.01, 0.005];
    let rem = kl_quadratic_remainder(&t, &[1.0, -0.5, -0.5], &eps);
    let by_eps: Vec<f64> = rem.iter().map(|(_, r)| r * 8.0).collect();
    assert!(by_eps.windows(2).all(|w| w[1] <= w[0] * 1.05), "{by_eps:?}");
    assert!(by_eps.iter().all(|v| *v < 10.0));

    assert!(lemma_checks(&e, &[0.6, 0.4], 50, 100, 1).is_err());
    assert!(lemma_checks(&e, &[1.0, 0.0], 50, 10_000, 1).is_err());
}

proptest! {
    #![proptest_config(config(128, 0x66_0001))]

    #[test]
    fn rule_is_loss_independent(
        raw in prop::collection::vec(prop::collection::vec(0.05f64..1.0, 6), 1..4),
        wraw in prop::collection::vec(0.05f64..1.0, 3),
        mu in 0.1f64..0.9,
        n in 1usize..12,
        s in 2usize..=3,
    ) {
        let support: Vec<MultinomialExperiment> = raw.iter()
            .map(|v| MultinomialExperiment::new(normalized(&v[..s]), normalized(&v[3..3 + s])).unwrap())
            .collect();
        let w = normalized(&wraw[..support.len()]);
        let mix = GeneralMixture::new(support, w, mu).unwrap();
        let rule = dm_rule_general(&mix, n);
        for k in CountVector::enumerate(n, s) {
            let a = rule.belief(&k).unwrap();
            for gen in [BregmanGenerator::mse(), BregmanGenerator::log()] {
                let b = dm_rule_general_under(&mix, &k, &gen).unwrap();
                prop_assert!((a - b).abs() < 1e-10, "{:?}: {} vs {}", k, a, b);
            }
        }
    }

    #[test]
    fn binary_specialization(pi in 0.5f64..=1.0, w in 0.0f64..=1.0, n in 1usize..80) {
        let gen = BregmanGenerator::mse();
        let b = dm_best_response(&NatureMixtureFinite::two_point(pi, w).unwrap(), n, &gen).unwrap();
        let mix = GeneralMixture::new(
            vec![MultinomialExperiment::binary(0.5).unwrap(), MultinomialExperiment::binary(pi).unwrap()],
            vec![1.0 - w, w],
            0.5,
        ).unwrap();
        let rule = dm_rule_general(&mix, n);
        for k in 0..=n {
            prop_assert!((rule.belief(&counts(k, n)).unwrap() - b.a[k]).abs() < 1e-12);
            let q = oracle_posterior_general(&counts(k, n), &mix.support[1], 0.5).unwrap();
            prop_assert!((q - oracle_posterior_binary(n, pi, k).unwrap()).abs() < 1e-12);
        }
        let lookup = |c: &CountVector| b.a[c.counts[0]];
        let single = GeneralMixture::single(MultinomialExperiment::binary(pi).unwrap(), 0.5).unwrap();
        let g = general_regret(&single, &lookup, n, &gen, RegretMode::Exact).unwrap().value;
        prop_assert!((g - exante_regret(&b, pi, &gen).unwrap()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(config(100, 0x66_0002))]

    #[test]
    fn exact_and_monte_carlo_agree(
        p1 in prop::collection::vec(0.05f64..1.0, 3),
        p0 in prop::collection::vec(0.05f64..1.0, 3),
        w in 0.05f64..0.95,
        n in 1usize..25,
        s in 2usize..=3,
    ) {
        let mix = GeneralMixture::new(
            vec![
                MultinomialExperiment::uninformative(vec![1.0 / s as f64; s]).unwrap(),
                MultinomialExperiment::new(normalized(&p1[..s]), normalized(&p0[..s])).unwrap(),
            ],
            vec![1.0 - w, w],
            0.5,
        ).unwrap();
        let rule = dm_rule_general(&mix, n);
        let gen = BregmanGenerator::mse();
        let exact = general_regret(&mix, &rule, n, &gen, RegretMode::Exact).unwrap();
        let mc = general_regret(&mix, &rule, n, &gen, RegretMode::MonteCarlo { draws: 20_000, seed: 0x3c_0001 }).unwrap();
        prop_assert!((mc.value - exact.value).abs() <= 3.0 * mc.stderr, "{:?} vs {:?}", exact, mc);
    }
}
