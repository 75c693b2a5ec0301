//! Simulated users: hidden weights, Plackett-Luce responses and the
//! reasonableness and expected-gain checks.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::benchmarks::sample_context;
use crate::domain::{utility, Context, DomainSpec, WeightVector};
use crate::error::{DomainError, SimError};
use crate::math;
use crate::perceptron::{ChannelError, UserChannel};
use crate::query::QuerySet;

/// Tolerance of the reasonableness biconditional.
pub const REASONABLE_TOL: f64 = 1e-12;

const STREAM_WEIGHTS: u64 = 0;
const STREAM_RESPONSES: u64 = 1;
const STREAM_CONTEXTS: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightDistribution {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl WeightDistribution {
    pub fn validate(&self) -> Result<(), SimError> {
        match *self {
            WeightDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(SimError::InvalidDistribution(format!("uniform({lo}, {hi})")));
                }
            }
            WeightDistribution::Normal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                    return Err(SimError::InvalidDistribution(format!("normal({mean}, {sd})")));
                }
            }
        }
        Ok(())
    }

    fn sample_vec<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            WeightDistribution::Uniform { lo, hi } => {
                let u = Uniform::new_inclusive(lo, hi).expect("validated bounds");
                (0..d).map(|_| u.sample(rng)).collect()
            }
            WeightDistribution::Normal { mean, sd } => {
                let n = Normal::new(mean, sd).expect("validated parameters");
                (0..d).map(|_| n.sample(rng)).collect()
            }
        }
    }
}

fn one() -> f64 {
    1.0
}

/// Everything needed to regenerate a population bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub distribution: WeightDistribution,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub lambda: f64,
    /// Users always pick the first best item instead of sampling.
    #[serde(default)]
    pub noiseless: bool,
}

impl PopulationSpec {
    pub fn new(distribution: WeightDistribution, n: usize, seed: u64) -> Self {
        PopulationSpec {
            distribution,
            n,
            seed,
            lambda: 1.0,
            noiseless: false,
        }
    }
}

fn user_rng(seed: u64, user: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64 * 4 + stream);
    rng
}

#[derive(Clone, Debug)]
pub struct SimulatedUser {
    pub id: usize,
    w_star: WeightVector,
    pub lambda: f64,
    pub noiseless: bool,
    responses: ChaCha8Rng,
    contexts: ChaCha8Rng,
}

impl SimulatedUser {
    pub fn new(id: usize, w_star: WeightVector, lambda: f64, seed: u64) -> Result<Self, SimError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(SimError::InvalidLambda(lambda));
        }
        Ok(SimulatedUser {
            id,
            w_star,
            lambda,
            noiseless: false,
            responses: user_rng(seed, id, STREAM_RESPONSES),
            contexts: user_rng(seed, id, STREAM_CONTEXTS),
        })
    }

    pub fn noiseless(mut self) -> Self {
        self.noiseless = true;
        self
    }

    pub fn true_weights(&self) -> &WeightVector {
        &self.w_star
    }

    pub fn true_utilities(&self, q: &QuerySet) -> Result<Vec<f64>, DomainError> {
        q.utilities(&self.w_star)
    }

    /// Choice probabilities over the items of `q`.
    pub fn choice_distribution(&self, q: &QuerySet) -> Result<Vec<f64>, DomainError> {
        let u = self.true_utilities(q)?;
        Ok(if self.noiseless {
            argmax_distribution(&u)
        } else {
            choice_distribution(&u, self.lambda)
        })
    }

    /// Zero-based index of the chosen item.
    pub fn respond(&mut self, q: &QuerySet) -> Result<usize, DomainError> {
        let p = self.choice_distribution(q)?;
        Ok(sample_index(&p, &mut self.responses))
    }

    pub fn check_reasonable(&self, q: &QuerySet) -> Result<bool, DomainError> {
        let u = self.true_utilities(q)?;
        let scores: Vec<f64> = if self.noiseless {
            argmax_distribution(&u)
        } else {
            // Log-probabilities up to a shared constant; immune to underflow.
            u.iter().map(|x| self.lambda * x).collect()
        };
        Ok(is_reasonable(&scores, &u))
    }

    /// Exact expected `<w*, Delta>` over the user's choice distribution.
    pub fn expected_utility_gain(&self, q: &QuerySet) -> Result<f64, DomainError> {
        let u = self.true_utilities(q)?;
        Ok(expected_gain(&self.choice_distribution(q)?, &u))
    }

    pub fn sample_context(&mut self, spec: &DomainSpec) -> Context {
        sample_context(spec, &mut self.contexts)
    }
}

/// A simulated user answering queries on a domain, drawing a fresh context
/// from the domain's pool each round.
pub struct SimulatedChannel<'a> {
    pub user: &'a mut SimulatedUser,
    pub spec: &'a DomainSpec,
}

impl UserChannel for SimulatedChannel<'_> {
    fn context(&mut self, _t: usize) -> Result<Context, ChannelError> {
        Ok(self.user.sample_context(self.spec))
    }

    fn choose(&mut self, q: &QuerySet) -> Result<usize, ChannelError> {
        self.user
            .respond(q)
            .map_err(|e| ChannelError::Closed(format!("{e}")))
    }

    fn true_weights(&self) -> Option<&WeightVector> {
        Some(&self.user.w_star)
    }

    fn choice_probabilities(&self, q: &QuerySet) -> Option<Vec<f64>> {
        self.user.choice_distribution(q).ok()
    }
}

#[derive(Clone, Debug)]
pub struct UserPopulation {
    pub spec: PopulationSpec,
    pub dim: usize,
    pub users: Vec<SimulatedUser>,
}

impl UserPopulation {
    pub fn generate(spec: &PopulationSpec, d: usize) -> Result<Self, SimError> {
        spec.distribution.validate()?;
        if spec.n == 0 {
            return Err(SimError::EmptyPopulation);
        }
        let users = (0..spec.n)
            .map(|id| {
                let mut rng = user_rng(spec.seed, id, STREAM_WEIGHTS);
                let w = WeightVector(spec.distribution.sample_vec(d, &mut rng));
                let u = SimulatedUser::new(id, w, spec.lambda, spec.seed)?;
                Ok(if spec.noiseless { u.noiseless() } else { u })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        Ok(UserPopulation {
            spec: spec.clone(),
            dim: d,
            users,
        })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// `n` users with i.i.d. weight coordinates, Plackett-Luce with `lambda = 1`.
pub fn sample_users(
    distribution: WeightDistribution,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<UserPopulation, SimError> {
    UserPopulation::generate(&PopulationSpec::new(distribution, n, seed), d)
}

/// Plackett-Luce probabilities `softmax(lambda * u)` with max subtraction.
pub fn choice_distribution(utilities: &[f64], lambda: f64) -> Vec<f64> {
    let m = utilities
        .iter()
        .map(|u| lambda * u)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = utilities.iter().map(|u| math::exp(lambda * u - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Point mass on the first maximizer.
pub fn argmax_distribution(utilities: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, &u) in utilities.iter().enumerate() {
        if u > utilities[best] {
            best = i;
        }
    }
    let mut p = alloc::vec![0.0; utilities.len()];
    p[best] = 1.0;
    p
}

/// Inverse-CDF sampling of an index.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// `scores[i] >= scores[j]` iff `u[i] >= u[j]` for every ordered pair, where
/// `scores` is any order-preserving image of the choice probabilities.
pub fn is_reasonable(scores: &[f64], utilities: &[f64]) -> bool {
    let n = scores.len().min(utilities.len());
    for i in 0..n {
        for j in 0..n {
            let p = scores[i] >= scores[j] - REASONABLE_TOL;
            let u = utilities[i] >= utilities[j] - REASONABLE_TOL;
            if p != u {
                return false;
            }
        }
    }
    true
}

/// `sum_i P(i) (u_i - mean_{j != i} u_j)`.
pub fn expected_gain(probs: &[f64], utilities: &[f64]) -> f64 {
    let k = utilities.len();
    if k < 2 || utilities.iter().all(|&u| u == utilities[0]) {
        return 0.0;
    }
    let mut g = 0.0;
    for i in 0..k {
        let others: f64 = (0..k).filter(|&j| j != i).map(|j| utilities[j]).sum();
        g += probs[i] * (utilities[i] - others / (k - 1) as f64);
    }
    g
}

/// True utility of every feature vector under `w`.
pub fn utilities_of(w: &WeightVector, features: &[Vec<f64>]) -> Result<Vec<f64>, DomainError> {
    features.iter().map(|phi| utility(w, phi)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn softmax_values() {
        let p = choice_distribution(&[1.0, 0.0], 1.0);
        assert!((p[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((p[1] - 0.2689414213699951).abs() < 1e-12);
        assert_eq!(choice_distribution(&[3.0, 3.0, 3.0, 3.0], 1.0), vec![0.25; 4]);
        let sharp = choice_distribution(&[1.0, 0.5], 1e6);
        assert!(sharp[0] > 1.0 - 1e-12);
        let big = choice_distribution(&[1e308, 1e308 / 2.0], 1.0);
        assert!(big.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn gain_formula() {
        let p = choice_distribution(&[1.0, 0.0], 1.0);
        let g = expected_gain(&p, &[1.0, 0.0]);
        assert!((g - 0.46211715726000974).abs() < 1e-12);
        assert_eq!(expected_gain(&[0.2, 0.3, 0.5], &[0.1, 0.1, 0.1]), 0.0);
    }

    #[test]
    fn reasonableness() {
        assert!(is_reasonable(&[2.0, 1.0, 0.0], &[5.0, 3.0, 1.0]));
        assert!(!is_reasonable(&[1.0, 2.0, 0.0], &[5.0, 3.0, 1.0]));
        // A uniform chooser over distinct utilities fails the literal test.
        assert!(!is_reasonable(&[0.0, 0.0], &[1.0, 0.0]));
        assert!(is_reasonable(&[0.0, 0.0], &[1.0, 1.0]));
    }

    #[test]
    fn population_is_reproducible() {
        let d = WeightDistribution::Uniform { lo: 1.0, hi: 100.0 };
        let a = sample_users(d, 5, 16, 42).unwrap();
        let b = sample_users(d, 5, 16, 42).unwrap();
        for (x, y) in a.users.iter().zip(&b.users) {
            assert_eq!(x.true_weights(), y.true_weights());
            assert!(x.true_weights().0.iter().all(|&w| (1.0..=100.0).contains(&w)));
        }
        assert_ne!(a.users[0].true_weights(), a.users[1].true_weights());
        assert!(sample_users(WeightDistribution::Normal { mean: 0.0, sd: 0.0 }, 1, 2, 0).is_err());
        assert!(sample_users(WeightDistribution::Uniform { lo: 2.0, hi: 1.0 }, 1, 2, 0).is_err());
        assert_eq!(sample_users(d, 0, 2, 0).unwrap_err(), SimError::EmptyPopulation);
    }

    #[test]
    fn sampling_respects_point_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_index(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }
}
