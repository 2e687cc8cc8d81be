//! Stochastic multi-armed bandit policies.
//!
//! [`BetaState`] is the Beta-Bernoulli Thompson sampler shared by the
//! independent-arm SelfSparring policy. [`Ucb1State`] and [`Exp3State`] are the
//! textbook UCB1 and EXP3 policies used as sparring slots.

use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution};

use crate::env::ArmIndex;
use crate::select::argmax_uniform;

/// Default EXP3 exploration rate.
pub const DEFAULT_EXP3_GAMMA: f64 = 0.1;

/// A single-slot bandit policy with rewards in `[0, 1]`.
pub trait BanditPolicy {
    fn num_arms(&self) -> usize;
    fn select(&mut self, rng: &mut dyn RngCore) -> ArmIndex;
    fn update(&mut self, arm: ArmIndex, reward: f64);
}

/// Per-arm success and failure mass of a Beta-Bernoulli posterior.
///
/// Arm `i` has posterior `Beta(S_i + 1, F_i + 1)`. The masses are real-valued
/// because updates are scaled by a learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaState {
    successes: Vec<f64>,
    failures: Vec<f64>,
}

impl BetaState {
    pub fn new(arms: usize) -> Self {
        assert!(arms > 0, "a bandit needs at least one arm");
        BetaState {
            successes: vec![0.0; arms],
            failures: vec![0.0; arms],
        }
    }

    /// Starts from explicit `(S_i, F_i)` masses.
    pub fn from_counts(successes: Vec<f64>, failures: Vec<f64>) -> Self {
        assert_eq!(successes.len(), failures.len());
        assert!(!successes.is_empty());
        assert!(successes.iter().chain(&failures).all(|&x| x >= 0.0));
        BetaState {
            successes,
            failures,
        }
    }

    pub fn num_arms(&self) -> usize {
        self.successes.len()
    }

    pub fn successes(&self) -> &[f64] {
        &self.successes
    }

    pub fn failures(&self) -> &[f64] {
        &self.failures
    }

    pub fn posterior_mean(&self, arm: ArmIndex) -> f64 {
        let (s, f) = (self.successes[arm.0], self.failures[arm.0]);
        (s + 1.0) / (s + f + 2.0)
    }

    /// One draw `θ_i ~ Beta(S_i + 1, F_i + 1)` per arm.
    pub fn sample_thetas<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.successes.iter().zip(&self.failures).map(|(&s, &f)| {
            Beta::new(s + 1.0, f + 1.0)
                .expect("Beta parameters are at least 1")
                .sample(rng)
        }));
    }

    /// Thompson draw: the arm with the largest sampled `θ`, ties uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ArmIndex {
        let mut thetas = Vec::with_capacity(self.num_arms());
        self.sample_with(rng, &mut thetas)
    }

    /// [`sample`](Self::sample) reusing a caller-owned scratch buffer.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, thetas: &mut Vec<f64>) -> ArmIndex {
        self.sample_thetas(rng, thetas);
        ArmIndex(argmax_uniform(thetas, rng))
    }

    /// `S ← S + η·r`, `F ← F + η·(1 − r)`.
    pub fn update(&mut self, arm: ArmIndex, reward: f64, eta: f64) {
        debug_assert!(
            (0.0..=1.0).contains(&reward),
            "reward {reward} outside [0, 1]"
        );
        debug_assert!(eta > 0.0);
        self.successes[arm.0] += eta * reward;
        self.failures[arm.0] += eta * (1.0 - reward);
    }

    /// Monte-Carlo estimate of `P(i = argmax_b θ_b)` for every arm.
    pub fn argmax_distribution<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Vec<f64> {
        assert!(samples > 0);
        let mut counts = vec![0u64; self.num_arms()];
        let mut thetas = Vec::with_capacity(self.num_arms());
        for _ in 0..samples {
            counts[self.sample_with(rng, &mut thetas).0] += 1;
        }
        counts.iter().map(|&c| c as f64 / samples as f64).collect()
    }
}

/// A Thompson sampler used as a bandit policy with a fixed learning rate.
#[derive(Debug, Clone)]
pub struct ThompsonPolicy {
    pub state: BetaState,
    pub eta: f64,
}

impl ThompsonPolicy {
    pub fn new(arms: usize, eta: f64) -> Self {
        ThompsonPolicy {
            state: BetaState::new(arms),
            eta,
        }
    }
}

impl BanditPolicy for ThompsonPolicy {
    fn num_arms(&self) -> usize {
        self.state.num_arms()
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> ArmIndex {
        self.state.sample(rng)
    }

    fn update(&mut self, arm: ArmIndex, reward: f64) {
        self.state.update(arm, reward, self.eta);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ucb1State {
    counts: Vec<u64>,
    means: Vec<f64>,
    total: u64,
}

impl Ucb1State {
    pub fn new(arms: usize) -> Self {
        assert!(arms > 0, "a bandit needs at least one arm");
        Ucb1State {
            counts: vec![0; arms],
            means: vec![0.0; arms],
            total: 0,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `μ̂_i + sqrt(2 ln t / n_i)`; infinite for unpulled arms.
    pub fn index(&self, arm: ArmIndex) -> f64 {
        let n = self.counts[arm.0];
        if n == 0 {
            return f64::INFINITY;
        }
        self.means[arm.0] + (2.0 * (self.total as f64).ln() / n as f64).sqrt()
    }

    /// Lowest-index unpulled arm first, then the largest index (ties uniform).
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> ArmIndex {
        if let Some(i) = self.counts.iter().position(|&n| n == 0) {
            return ArmIndex(i);
        }
        let indices: Vec<f64> = (0..self.counts.len())
            .map(|i| self.index(ArmIndex(i)))
            .collect();
        ArmIndex(argmax_uniform(&indices, rng))
    }

    pub fn update(&mut self, arm: ArmIndex, reward: f64) {
        let i = arm.0;
        self.counts[i] += 1;
        self.total += 1;
        self.means[i] += (reward - self.means[i]) / self.counts[i] as f64;
    }
}

impl BanditPolicy for Ucb1State {
    fn num_arms(&self) -> usize {
        self.counts.len()
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> ArmIndex {
        Ucb1State::select(self, rng)
    }

    fn update(&mut self, arm: ArmIndex, reward: f64) {
        Ucb1State::update(self, arm, reward)
    }
}

/// EXP3 with exploration rate `γ`.
///
/// Weights are kept in log space; only ratios matter and the raw weights
/// would overflow over long horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3State {
    log_weights: Vec<f64>,
    gamma: f64,
}

impl Exp3State {
    pub fn new(arms: usize, gamma: f64) -> Self {
        assert!(arms > 0, "a bandit needs at least one arm");
        assert!(gamma > 0.0 && gamma <= 1.0, "EXP3 gamma must lie in (0, 1]");
        Exp3State {
            log_weights: vec![0.0; arms],
            gamma,
        }
    }

    pub fn with_weights(weights: &[f64], gamma: f64) -> Self {
        assert!(weights.iter().all(|&w| w > 0.0));
        let mut state = Self::new(weights.len(), gamma);
        state.log_weights = weights.iter().map(|w| w.ln()).collect();
        state
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Weights normalised so the largest is 1.
    pub fn weights(&self) -> Vec<f64> {
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        self.log_weights.iter().map(|lw| (lw - max).exp()).collect()
    }

    /// `p_i = (1 − γ)·w_i/Σw + γ/K`.
    pub fn probabilities(&self) -> Vec<f64> {
        let k = self.log_weights.len() as f64;
        let weights = self.weights();
        let total: f64 = weights.iter().sum();
        weights
            .iter()
            .map(|w| (1.0 - self.gamma) * w / total + self.gamma / k)
            .collect()
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> ArmIndex {
        let probs = self.probabilities();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return ArmIndex(i);
            }
        }
        ArmIndex(probs.len() - 1)
    }

    /// `w_arm ← w_arm · exp(γ · (reward / p_arm) / K)`.
    pub fn update(&mut self, arm: ArmIndex, reward: f64) {
        let k = self.log_weights.len() as f64;
        let p = self.probabilities()[arm.0];
        self.log_weights[arm.0] += self.gamma * (reward / p) / k;
    }
}

impl BanditPolicy for Exp3State {
    fn num_arms(&self) -> usize {
        self.log_weights.len()
    }

    fn select(&mut self, rng: &mut dyn RngCore) -> ArmIndex {
        Exp3State::select(self, rng)
    }

    fn update(&mut self, arm: ArmIndex, reward: f64) {
        Exp3State::update(self, arm, reward)
    }
}
