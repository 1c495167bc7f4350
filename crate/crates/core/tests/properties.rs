//! Invariants that must hold for every input.

use gmm_landscape::cli::ExperimentConfig;
use gmm_landscape::constructions::{pruned_tree, urns_at_level, TreeConstructionSpec};
use gmm_landscape::em::{em_step_population, em_step_sample, first_order_em_step};
use gmm_landscape::experiments::{classify_init, wilson_interval};
use gmm_landscape::gmm::{log_mixture_density, responsibilities, sample, sample_log_likelihood};
use gmm_landscape::population::{
    evaluate, population_hessian, population_log_likelihood, q_matrix, symmetric_eigenvalues,
};
use gmm_landscape::rng::seeded;
use gmm_landscape::{MixtureModel, QuadratureSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

fn centers(max: usize, span: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-span..span, 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn responsibilities_form_a_distribution(
        x in prop::collection::vec(-50.0..50.0f64, 2),
        mu in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 2), 1..6),
    ) {
        let w = responsibilities(&x, &mu).unwrap().weights;
        prop_assert!(w.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_ignores_center_order(mu in centers(5, 30.0), x in -40.0..40.0f64, shift in 0usize..5) {
        let mut rotated = mu.clone();
        rotated.rotate_left(shift % mu.len());
        let a = log_mixture_density(&[x], &MixtureModel::from_1d(&mu).unwrap()).unwrap();
        let b = log_mixture_density(&[x], &MixtureModel::from_1d(&rotated).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn likelihood_ignores_candidate_order(truth in centers(4, 20.0), mu in centers(4, 20.0), shift in 0usize..4) {
        let model = MixtureModel::from_1d(&truth).unwrap();
        let mut rotated = mu.clone();
        rotated.rotate_left(shift % mu.len());
        let a = evaluate(&mu, &model, &q()).unwrap();
        let b = evaluate(&rotated, &model, &q()).unwrap();
        prop_assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-11);
        let mut ga = a.gradient.clone();
        ga.rotate_left(shift % mu.len());
        for (x, y) in ga.iter().zip(&b.gradient) {
            prop_assert!((x - y).abs() < 1e-11);
        }
    }

    #[test]
    fn truth_maximizes_likelihood(truth in centers(4, 20.0), mu in centers(5, 25.0)) {
        let model = MixtureModel::from_1d(&truth).unwrap();
        let l = population_log_likelihood(&mu, &model, &q()).unwrap();
        let l_star = population_log_likelihood(&truth, &model, &q()).unwrap();
        prop_assert!(l <= l_star + 1e-10, "{l} > {l_star}");
    }

    #[test]
    fn em_never_decreases_likelihood(truth in centers(4, 20.0), mu in centers(4, 25.0)) {
        let model = MixtureModel::from_1d(&truth).unwrap();
        let next = em_step_population(&mu, &model, &q()).unwrap();
        let before = population_log_likelihood(&mu, &model, &q()).unwrap();
        let after = population_log_likelihood(&next, &model, &q()).unwrap();
        prop_assert!(after >= before - 1e-10 * before.abs().max(1.0), "{before} -> {after}");
    }

    #[test]
    fn first_order_step_gains_half_the_squared_gradient(
        truth in centers(4, 20.0),
        mu in centers(4, 25.0),
        s in 0.01..1.0f64,
    ) {
        let model = MixtureModel::from_1d(&truth).unwrap();
        let e = evaluate(&mu, &model, &q()).unwrap();
        let next = first_order_em_step(&mu, &model, s, &q()).unwrap();
        let after = population_log_likelihood(&next, &model, &q()).unwrap();
        let g2: f64 = e.gradient.iter().map(|g| g * g).sum();
        prop_assert!(after - e.log_likelihood >= 0.5 * s * g2 - 1e-10 * e.log_likelihood.abs().max(1.0));
    }

    #[test]
    fn first_order_step_interpolates_toward_em(
        truth in centers(4, 20.0),
        mu in centers(4, 20.0),
        s in 0.01..1.0f64,
    ) {
        let model = MixtureModel::from_1d(&truth).unwrap();
        let e = evaluate(&mu, &model, &q()).unwrap();
        let em = em_step_population(&mu, &model, &q()).unwrap();
        let next = first_order_em_step(&mu, &model, s, &q()).unwrap();
        for i in 0..mu.len() {
            let theta = 1.0 - s * e.ew[i];
            prop_assert!((0.0..=1.0).contains(&theta));
            let mixed = theta * mu[i] + (1.0 - theta) * em[i];
            prop_assert!((mixed - next[i]).abs() < 1e-9 * (1.0 + mu[i].abs()));
        }
    }

    #[test]
    fn q_matrix_is_positive_semidefinite(truth in centers(4, 15.0), mu in centers(4, 15.0)) {
        let model = MixtureModel::from_1d(&truth).unwrap();
        let qm = q_matrix(&mu, &model, &q()).unwrap();
        prop_assert!((&qm - qm.transpose()).amax() < 1e-14);
        prop_assert!(symmetric_eigenvalues(&qm)[0] >= -1e-10);
    }

    #[test]
    fn first_order_jacobian_is_positive_definite(
        truth in centers(4, 15.0),
        mu in centers(4, 15.0),
        s in 0.01..1.0f64,
    ) {
        let model = MixtureModel::from_1d(&truth).unwrap();
        let h = population_hessian(&mu, &model, &q()).unwrap();
        let k = mu.len();
        let j = DMatrix::<f64>::identity(k, k) + h * s;
        prop_assert!(symmetric_eigenvalues(&j)[0] > 0.0);
    }

    #[test]
    fn sample_em_never_decreases_sample_likelihood(seed in any::<u64>(), mu in prop::collection::vec(-8.0..8.0f64, 1..4)) {
        let truth = MixtureModel::from_1d(&[-4.0, 0.0, 5.0]).unwrap();
        let data: Vec<Vec<f64>> = sample(&truth, 60, &mut seeded(seed)).into_iter().map(|s| s.point).collect();
        let mu: Vec<Vec<f64>> = mu.into_iter().map(|m| vec![m]).collect();
        let next = em_step_sample(&data, &mu).unwrap();
        let before = sample_log_likelihood(&data, &mu).unwrap();
        let after = sample_log_likelihood(&data, &next).unwrap();
        prop_assert!(after >= before - 1e-9);
    }
}

proptest! {
    #[test]
    fn pruned_tree_is_balanced(count in 2usize..=32) {
        let levels = (count as f64).log2().ceil() as usize;
        let spec = TreeConstructionSpec::relaxed(levels, 1.0, 0.01, count).unwrap();
        prop_assert_eq!(pruned_tree(&spec).unwrap().count(), count);
        for level in 1..=levels {
            for urn in urns_at_level(&spec, level).unwrap() {
                prop_assert!(urn.left_count >= urn.right_count);
                prop_assert!(urn.left_count - urn.right_count <= 1);
            }
        }
    }

    #[test]
    fn urns_at_a_level_are_disjoint(levels in 1usize..=4, ratio in 0.001..0.33f64, scale in 1.0..1e6f64) {
        let spec = TreeConstructionSpec::relaxed(levels, scale, ratio, 1 << levels).unwrap();
        for level in 1..=levels {
            let urns: Vec<_> = urns_at_level(&spec, level)
                .unwrap()
                .into_iter()
                .flat_map(|p| [p.left, p.right])
                .collect();
            for a in 0..urns.len() {
                for b in a + 1..urns.len() {
                    prop_assert!(!urns[a].overlaps(&urns[b]));
                }
            }
        }
    }

    #[test]
    fn one_point_per_center_is_a_good_start(levels in 1usize..=4, jitter in prop::collection::vec(-1.0..1.0f64, 16)) {
        let count = 1 << levels;
        let spec = TreeConstructionSpec::relaxed(levels, 1e4, 0.01, count).unwrap();
        let truth = pruned_tree(&spec).unwrap().centers_1d().unwrap();
        let reach = 0.9 * spec.urn_halfwidth(levels);
        let points: Vec<f64> = truth.iter().zip(&jitter).map(|(c, j)| c + reach * j).collect();
        prop_assert!(classify_init(&points, &spec).unwrap().good);
        let mut reversed = points.clone();
        reversed.reverse();
        prop_assert!(classify_init(&reversed, &spec).unwrap().good);
    }

    #[test]
    fn classification_ignores_point_order(codes in prop::collection::vec(0usize..8, 8), shift in 0usize..8) {
        let spec = TreeConstructionSpec::relaxed(3, 1e4, 0.01, 8).unwrap();
        let truth = pruned_tree(&spec).unwrap().centers_1d().unwrap();
        let points: Vec<f64> = codes.iter().map(|&c| truth[c]).collect();
        let mut rotated = points.clone();
        rotated.rotate_left(shift);
        prop_assert_eq!(
            classify_init(&points, &spec).unwrap().good,
            classify_init(&rotated, &spec).unwrap().good
        );
    }

    #[test]
    fn wilson_interval_brackets_the_rate(n in 1usize..5000, frac in 0.0..=1.0f64) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn config_survives_a_json_round_trip(seed in any::<u64>(), trials in 1usize..10_000, order in 16usize..400, threads in prop::option::of(1usize..64)) {
        let mut cfg = ExperimentConfig { master_seed: seed, threads, ..ExperimentConfig::default() };
        cfg.quad.order = order;
        cfg.mc_failure.trials = trials;
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
