//! Quantities checked against independent computations written here.

use gmm_landscape::constructions::{
    boundary_values, diffuse_regions, make_diffuse, pruned_tree, three_component,
    tree_construction, urns_at_level, BoundarySearch, DiffuseSpec, ThreeComponentSpec,
    TreeConstructionSpec,
};
use gmm_landscape::em::{em_step_population, em_step_sample};
use gmm_landscape::experiments::{
    classify_init, event_e_holds, exact_good_init_probability, mc_failure_rate, random_init,
    McConfig,
};
use gmm_landscape::gmm::{sample, HALF_LN_2PI};
use gmm_landscape::population::{evaluate, population_gradient, population_log_likelihood};
use gmm_landscape::quadrature::expect_under_mixture;
use gmm_landscape::rng::{seeded, trial_rng};
use gmm_landscape::{MixtureModel, QuadratureSpec};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

fn q() -> QuadratureSpec {
    QuadratureSpec::default()
}

/// Composite Simpson over `[lo, hi]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + h * k as f64);
    }
    s * h / 3.0
}

/// `E f(X)` under the mixture by Simpson's rule on each component window.
fn simpson_expect(f: impl Fn(f64) -> f64, truth: &[f64]) -> f64 {
    truth
        .iter()
        .map(|&c| {
            simpson(
                |x| f(x) * (-0.5 * (x - c) * (x - c)).exp() / (2.0 * std::f64::consts::PI).sqrt(),
                c - 14.0,
                c + 14.0,
                20_000,
            )
        })
        .sum::<f64>()
        / truth.len() as f64
}

/// Log mixture density computed without any shared helper.
fn naive_log_mix(x: f64, mu: &[f64]) -> f64 {
    let terms: Vec<f64> = mu.iter().map(|m| -0.5 * (x - m) * (x - m)).collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
        - (mu.len() as f64).ln()
        - HALF_LN_2PI
}

fn naive_weight(x: f64, mu: &[f64], i: usize) -> f64 {
    let top = mu
        .iter()
        .map(|m| -0.5 * (x - m) * (x - m))
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = mu
        .iter()
        .map(|m| (-0.5 * (x - m) * (x - m) - top).exp())
        .collect();
    e[i] / e.iter().sum::<f64>()
}

#[test]
fn likelihood_matches_simpson() {
    let mut rng = seeded(101);
    for _ in 0..20 {
        let truth: Vec<f64> = (0..rng.random_range(1..=4))
            .map(|_| rng.random_range(-15.0..15.0))
            .collect();
        let mu: Vec<f64> = (0..rng.random_range(1..=4))
            .map(|_| rng.random_range(-15.0..15.0))
            .collect();
        let model = MixtureModel::from_1d(&truth).unwrap();
        let got = population_log_likelihood(&mu, &model, &q()).unwrap();
        let want = simpson_expect(|x| naive_log_mix(x, &mu), &truth);
        assert!(
            (got - want).abs() <= 1e-10 * want.abs().max(1.0),
            "{got} vs {want}"
        );
        let g = population_gradient(&mu, &model, &q()).unwrap();
        for i in 0..mu.len() {
            let want = simpson_expect(|x| naive_weight(x, &mu, i) * (x - mu[i]), &truth);
            assert!(
                (g[i] - want).abs() <= 1e-10,
                "gradient {i}: {} vs {want}",
                g[i]
            );
        }
    }
}

#[test]
fn single_gaussian_closed_form() {
    for (c, m) in [(0.0, 0.0), (3.0, -1.0), (-7.0, 5.5)] {
        let model = MixtureModel::from_1d(&[c]).unwrap();
        let got = population_log_likelihood(&[m], &model, &q()).unwrap();
        let want = -0.5 - HALF_LN_2PI - 0.5 * (m - c) * (m - c);
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn hermite_agrees_with_trapezoid_validation() {
    let mut rng = seeded(102);
    let v = QuadratureSpec::validation();
    for _ in 0..20 {
        let truth: Vec<f64> = (0..3).map(|_| rng.random_range(-30.0..30.0)).collect();
        let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-30.0..30.0)).collect();
        let model = MixtureModel::from_1d(&truth).unwrap();
        let a = evaluate(&mu, &model, &q()).unwrap();
        let b = evaluate(&mu, &model, &v).unwrap();
        let scale = a.log_likelihood.abs().max(1.0);
        assert!(
            (a.log_likelihood - b.log_likelihood).abs() < 1e-10 * scale,
            "{} vs {}",
            a.log_likelihood,
            b.log_likelihood
        );
        for (x, y) in a.gradient.iter().zip(&b.gradient) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }
}

#[test]
fn population_em_step_matches_ratio_of_expectations() {
    let model = MixtureModel::from_1d(&[-3.0, 1.0, 6.0]).unwrap();
    let mu = [-2.0, 0.5, 4.0];
    let next = em_step_population(&mu, &model, &q()).unwrap();
    for (i, got) in next.iter().enumerate() {
        let num = simpson_expect(|x| naive_weight(x, &mu, i) * x, &[-3.0, 1.0, 6.0]);
        let den = simpson_expect(|x| naive_weight(x, &mu, i), &[-3.0, 1.0, 6.0]);
        assert!((got - num / den).abs() < 1e-9);
    }
}

#[test]
fn sample_em_step_matches_direct_formula() {
    let truth = MixtureModel::new(2, vec![vec![-3.0, 0.0], vec![3.0, 1.0]]).unwrap();
    let data: Vec<Vec<f64>> = sample(&truth, 200, &mut seeded(3))
        .into_iter()
        .map(|s| s.point)
        .collect();
    let mu = vec![vec![-1.0, 0.5], vec![2.0, -0.5]];
    let next = em_step_sample(&data, &mu).unwrap();
    for (i, center) in next.iter().enumerate() {
        let (mut num, mut den) = ([0.0; 2], 0.0);
        for x in &data {
            let e: Vec<f64> = mu
                .iter()
                .map(|m| (-0.5 * ((x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2))).exp())
                .collect();
            let w = e[i] / e.iter().sum::<f64>();
            den += w;
            num[0] += w * x[0];
            num[1] += w * x[1];
        }
        assert!((center[0] - num[0] / den).abs() < 1e-12);
        assert!((center[1] - num[1] / den).abs() < 1e-12);
    }
}

/// Leaf indices chosen by splitting `k` as `⌈k/2⌉` left, `⌊k/2⌋` right.
fn pruned_leaves(levels: usize, k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    if levels == 0 {
        return vec![0];
    }
    let left = k.div_ceil(2);
    let mut out = pruned_leaves(levels - 1, left);
    out.extend(
        pruned_leaves(levels - 1, k - left)
            .into_iter()
            .map(|l| l + (1 << (levels - 1))),
    );
    out
}

fn leaf_position(levels: usize, leaf: usize, r: f64, ratio: f64) -> f64 {
    (0..levels)
        .map(|i| {
            let bit = (leaf >> (levels - 1 - i)) & 1;
            (if bit == 1 { 1.0 } else { -1.0 }) * ratio.powi(i as i32) * r
        })
        .sum()
}

#[test]
fn pruned_tree_matches_recursive_oracle() {
    for count in 2..=16usize {
        let levels = (count as f64).log2().ceil() as usize;
        let spec = TreeConstructionSpec::relaxed(levels, 1.0, 0.01, count).unwrap();
        let got = pruned_tree(&spec).unwrap().centers_1d().unwrap();
        let want: Vec<f64> = pruned_leaves(levels, count)
            .into_iter()
            .map(|l| leaf_position(levels, l, 1.0, 0.01))
            .collect();
        assert_eq!(got.len(), count);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15, "M = {count}");
        }
    }
}

#[test]
fn every_center_sits_in_exactly_one_urn_per_level() {
    for levels in 1..=4 {
        let count = 1 << levels;
        let spec = TreeConstructionSpec::relaxed(levels, 1.0, 0.01, count).unwrap();
        let centers = tree_construction(&spec).unwrap().centers_1d().unwrap();
        for level in 1..=levels {
            let urns: Vec<_> = urns_at_level(&spec, level)
                .unwrap()
                .into_iter()
                .flat_map(|p| [(p.left, p.left_count), (p.right, p.right_count)])
                .collect();
            assert_eq!(urns.len(), 1 << level);
            for (urn, n) in &urns {
                let inside = centers.iter().filter(|&&c| urn.contains(c)).count();
                assert_eq!(inside, count >> level);
                assert_eq!(*n, inside);
            }
            for c in &centers {
                assert_eq!(urns.iter().filter(|(u, _)| u.contains(*c)).count(), 1);
            }
        }
    }
}

#[test]
fn classifier_agrees_with_exhaustive_leaf_enumeration() {
    for m in [2usize, 4] {
        let levels = m.trailing_zeros() as usize;
        let spec = TreeConstructionSpec::relaxed(levels, 1.0, 0.01, m).unwrap();
        let leaves: Vec<f64> = (0..m)
            .map(|l| leaf_position(levels, l, 1.0, 0.01))
            .collect();
        let total = m.pow(m as u32);
        let mut good = 0;
        for code in 0..total {
            let mut x = code;
            let points: Vec<f64> = (0..m)
                .map(|_| {
                    let l = x % m;
                    x /= m;
                    leaves[l]
                })
                .collect();
            if classify_init(&points, &spec).unwrap().good {
                good += 1;
            }
        }
        assert_eq!(
            exact_good_init_probability(m).unwrap(),
            BigRational::new(BigInt::from(good), BigInt::from(total))
        );
    }
}

#[test]
fn trapping_step_inequalities_hold_by_quadrature() {
    let c = 25.0;
    let delta = 3f64.ln() + 4.0;
    let cd = c * delta;
    let truth = make_diffuse(&DiffuseSpec {
        c,
        delta,
        inner_left: vec![-cd + 0.3],
        inner_right: vec![cd - 0.5, cd + 0.7],
        outer: vec![],
    })
    .unwrap();
    let right = diffuse_regions(c, delta).right;
    let mut rng = seeded(104);
    for _ in 0..50 {
        let mu = [
            -cd + rng.random_range(-2.0 * delta..2.0 * delta),
            cd + rng.random_range(-2.0 * delta..2.0 * delta),
            cd + rng.random_range(-2.0 * delta..2.0 * delta),
        ];
        for i in 1..3 {
            assert!(right.contains(mu[i]));
            let lower = expect_under_mixture(
                |x| naive_weight(x, &mu, i) * (x - (c - 2.0) * delta),
                &truth,
                &q(),
            )
            .unwrap();
            let upper = expect_under_mixture(
                |x| naive_weight(x, &mu, i) * (x - (c + 2.0) * delta),
                &truth,
                &q(),
            )
            .unwrap();
            assert!(lower >= 0.0 && upper <= 0.0, "{mu:?}: {lower} {upper}");
        }
    }
}

#[test]
fn boundary_margin_does_not_shrink_with_gamma() {
    let margins: Vec<f64> = [10.0, 20.0, 40.0]
        .iter()
        .map(|&g| {
            let spec = ThreeComponentSpec::new(5.0, g).unwrap();
            boundary_values(&spec, &q(), &BoundarySearch::default())
                .unwrap()
                .margin()
        })
        .collect();
    assert!(margins[0] > 0.0, "{margins:?}");
    assert!(
        margins.windows(2).all(|w| w[1] >= w[0] - 1e-9),
        "{margins:?}"
    );
}

#[test]
fn boundary_values_approach_limits() {
    let r = 5.0;
    let spec = ThreeComponentSpec::new(r, 40.0).unwrap();
    let bv = boundary_values(&spec, &q(), &BoundarySearch::default()).unwrap();
    let base = 3f64.ln() + HALF_LN_2PI;
    let v2_limit = -(2.0 * r * r + 3.0) / 6.0 - base;
    assert!((bv.v2 - v2_limit).abs() < 1e-2 && (bv.v3 - v2_limit).abs() < 1e-2);
    assert!(bv.argmaxes[1][0].abs() < 0.5 && (bv.argmaxes[1][2] - 200.0).abs() < 0.5);
    let truth = three_component(&spec).unwrap();
    let l_star = population_log_likelihood(&truth.centers_1d().unwrap(), &truth, &q()).unwrap();
    assert!(l_star > bv.v0);
    let stay = em_step_population(&truth.centers_1d().unwrap(), &truth, &q()).unwrap();
    assert!(stay
        .iter()
        .zip([-5.0, 5.0, 200.0])
        .all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn random_init_statistics() {
    let single = MixtureModel::from_1d(&[3.0]).unwrap();
    let mean = (0..10_000u64)
        .map(|k| random_init(&single, &mut trial_rng(1, k))[0].point[0])
        .sum::<f64>()
        / 10_000.0;
    assert!((mean - 3.0).abs() < 0.05);

    let four = MixtureModel::from_1d(&[-30.0, -10.0, 10.0, 30.0]).unwrap();
    let mut freq = [0usize; 4];
    let mut rng = seeded(2);
    for _ in 0..2_500 {
        for s in random_init(&four, &mut rng) {
            freq[s.component] += 1;
        }
    }
    assert!(
        freq.iter()
            .all(|&f| (0.225..=0.275).contains(&(f as f64 / 10_000.0))),
        "{freq:?}"
    );

    let spec = TreeConstructionSpec::faithful(8).unwrap();
    let tree = tree_construction(&spec).unwrap();
    assert!((0..10_000u64).all(|k| event_e_holds(&random_init(&tree, &mut trial_rng(3, k)), &tree)));
}

#[test]
fn gradient_is_positive_but_shrinking_along_the_escape_ray() {
    let truth = MixtureModel::from_1d(&[-4.0, 4.0]).unwrap();
    let norms: Vec<f64> = [6.0, 8.0, 10.0]
        .iter()
        .map(|&r| evaluate(&[0.0, r], &truth, &q()).unwrap().grad_norm())
        .collect();
    assert!(norms.iter().all(|&n| n > 0.0));
    assert!(norms.windows(2).all(|w| w[0] > w[1]), "{norms:?}");
}

#[test]
fn failure_gap_grows_with_scale() {
    let base = TreeConstructionSpec::faithful(4).unwrap();
    let gaps: Vec<f64> = [base.scale, 10.0 * base.scale]
        .iter()
        .map(|&r| {
            let spec = base.with_scale(r).unwrap();
            let truth = tree_construction(&spec).unwrap();
            let cfg = McConfig {
                trials: 40,
                master_seed: 5,
                ..McConfig::default()
            };
            mc_failure_rate(&truth, Some(&spec), &cfg)
                .unwrap()
                .summary
                .c_gap
                .unwrap()
        })
        .collect();
    assert!(gaps[1] > gaps[0] && gaps[0] >= 1.0, "{gaps:?}");
}

#[test]
fn schemes_agree_over_the_surface_grid() {
    let truth = MixtureModel::from_1d(&[-4.0, 4.0]).unwrap();
    let v = QuadratureSpec::validation();
    for i in 0..=40 {
        for j in 0..=40 {
            let mu = [-10.0 + 0.5 * i as f64, -10.0 + 0.5 * j as f64];
            let a = population_log_likelihood(&mu, &truth, &q()).unwrap();
            let b = population_log_likelihood(&mu, &truth, &v).unwrap();
            assert!((a - b).abs() < 1e-8, "{mu:?}: {a} vs {b}");
        }
    }
}

#[test]
fn schemes_agree_at_large_magnitudes() {
    let spec = TreeConstructionSpec::faithful(4).unwrap();
    let truth = tree_construction(&spec).unwrap();
    let centers = truth.centers_1d().unwrap();
    let mut rng = seeded(106);
    for _ in 0..20 {
        let mu: Vec<f64> = centers
            .iter()
            .map(|c| c + rng.random_range(-4.0..4.0))
            .collect();
        let a = population_log_likelihood(&mu, &truth, &q()).unwrap();
        let b = population_log_likelihood(&mu, &truth, &QuadratureSpec::validation()).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}
