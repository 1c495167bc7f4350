use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constructions::{urns_at_level, TreeConstructionSpec};
use crate::error::{Error, Result};
use crate::gmm::{sample, LabeledSample, MixtureModel};

/// `M` i.i.d. draws from the truth, one per candidate, with latent labels.
pub fn random_init<R: Rng + ?Sized>(truth: &MixtureModel, rng: &mut R) -> Vec<LabeledSample> {
    sample(truth, truth.count(), rng)
}

/// Whether every draw lies within distance `M` of the center that produced it.
pub fn event_e_holds(init: &[LabeledSample], truth: &MixtureModel) -> bool {
    let radius = truth.count() as f64;
    init.iter().all(|s| match truth.centers().get(s.component) {
        Some(c) => {
            let d2: f64 = s.point.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() <= radius
        }
        None => false,
    })
}

/// First coordinates of a labeled initialization.
pub fn init_points(init: &[LabeledSample]) -> Vec<f64> {
    init.iter().map(|s| s.point[0]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitRule {
    Singleton,
    AllOneSide,
    BalancedRecurse,
    BadSplit,
}

/// Initial counts in the two child urns of one tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub level: usize,
    /// Index of the parent node among the `2^(level-1)` nodes at its depth.
    pub node: usize,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitClassification {
    pub good: bool,
    /// Splits examined, in depth-first order.
    pub levels: Vec<SplitCounts>,
    /// The rule that settled the outcome: the failing rule when bad,
    /// otherwise the rule applied at the root.
    pub reason: InitRule,
    /// Some point missed both child urns of a node it was tested against.
    pub outside_urns: bool,
}

struct Classifier<'a> {
    spec: &'a TreeConstructionSpec,
    urns: Vec<Vec<crate::constructions::UrnPartition>>,
    levels: Vec<SplitCounts>,
    outside: bool,
}

impl Classifier<'_> {
    fn node(
        &mut self,
        points: &[f64],
        depth: usize,
        node: usize,
    ) -> std::result::Result<InitRule, InitRule> {
        if points.len() <= 1 {
            return Ok(InitRule::Singleton);
        }
        if depth == self.spec.levels {
            return Err(InitRule::BadSplit);
        }
        let urn = self.urns[depth][node];
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for &p in points {
            if urn.left.contains(p) {
                left.push(p);
            } else if urn.right.contains(p) {
                right.push(p);
            } else {
                self.outside = true;
            }
        }
        self.levels.push(SplitCounts {
            level: depth + 1,
            node,
            left: left.len(),
            right: right.len(),
        });
        if self.outside {
            return Err(InitRule::BadSplit);
        }
        if left.is_empty() || right.is_empty() {
            return Ok(InitRule::AllOneSide);
        }
        if (left.len(), right.len()) != (urn.left_count, urn.right_count) {
            return Err(InitRule::BadSplit);
        }
        self.node(&left, depth + 1, node << 1)?;
        self.node(&right, depth + 1, (node << 1) | 1)?;
        Ok(InitRule::BalancedRecurse)
    }
}

/// Recursive good-initialization test against the tree's urns. A node with
/// one point is good; a node whose points all fall in one child urn is good;
/// a node whose child-urn counts equal the true counts is good when both
/// children are; anything else, including a point outside both child urns,
/// is bad.
pub fn classify_init(points: &[f64], spec: &TreeConstructionSpec) -> Result<InitClassification> {
    spec.validate()?;
    if points.is_empty() {
        return Err(Error::Empty("initialization has no points"));
    }
    let urns = (1..=spec.levels)
        .map(|l| urns_at_level(spec, l))
        .collect::<Result<Vec<_>>>()?;
    let mut c = Classifier {
        spec,
        urns,
        levels: Vec::new(),
        outside: false,
    };
    let outcome = c.node(points, 0, 0);
    Ok(InitClassification {
        good: outcome.is_ok(),
        reason: match outcome {
            Ok(r) | Err(r) => r,
        },
        levels: c.levels,
        outside_urns: c.outside,
    })
}

fn pow2(m: usize) -> BigInt {
    BigInt::one() << m
}

fn binomial(n: usize, k: usize) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, j| {
        acc * BigInt::from(n - j) / BigInt::from(j + 1)
    })
}

/// Exact probability that `M` uniform i.i.d. leaf assignments form a good
/// initialization: `P(1) = 1`, `P(M) = 2/2^M + C(M, M/2)/2^M · P(M/2)²`.
pub fn exact_good_init_probability(count: usize) -> Result<BigRational> {
    if count == 0 || !count.is_power_of_two() {
        return Err(Error::invalid(
            "count",
            format!("{count} is not a power of two"),
        ));
    }
    if count == 1 {
        return Ok(BigRational::one());
    }
    let half = exact_good_init_probability(count / 2)?;
    let denom = pow2(count);
    let ends = BigRational::new(BigInt::from(2), denom.clone());
    let balanced = BigRational::new(binomial(count, count / 2), denom);
    Ok(ends + balanced * &half * &half)
}

/// Right-hand side of the recursive bound `1/2^(M-1) + P(M/2)²/2`, evaluated
/// at the exact `P(M/2)`.
pub fn good_init_recursion_bound(count: usize) -> Result<BigRational> {
    if count < 2 || !count.is_power_of_two() {
        return Err(Error::invalid(
            "count",
            format!("{count} is not a power of two ≥ 2"),
        ));
    }
    let half = exact_good_init_probability(count / 2)?;
    let two = BigRational::from_integer(BigInt::from(2));
    Ok(BigRational::new(BigInt::one(), pow2(count - 1)) + &half * &half / two)
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let (n, d) = (r.numer().to_string(), r.denom().to_string());
    n.parse::<f64>().unwrap_or(f64::NAN) / d.parse::<f64>().unwrap_or(f64::NAN)
}
