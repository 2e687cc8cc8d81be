//! Multi-dueling policies.
//!
//! Every policy picks a multiset of `m` arms per round and learns from the
//! observed entries of the round's [`FeedbackMatrix`]. All `m` slots are drawn
//! before any update is applied.
//!
//! * [`IndSelfSparring`]: one shared Beta-Bernoulli posterior, sampled `m`
//!   times per round and updated from every observed duel.
//! * [`KernelSelfSparring`]: the same with a Gaussian-process posterior over
//!   a grid of arms.
//! * [`Sparring`]: `m` independent bandit policies, one per slot (`m = 2` is
//!   classic Sparring, larger `m` is MultiSparring).
//! * [`GpSparring`]: `m` independent GP-UCB slots.

use rand::{Rng, RngCore};

use crate::env::{ArmIndex, FeedbackMatrix, FeedbackMechanism, PreferenceEnvironment};
use crate::error::{Error, Result};
use crate::gp::{GpPosterior, GpSnapshot};
use crate::mab::{BanditPolicy, BetaState};
use crate::select::argmax_uniform;

pub trait DuelingPolicy {
    /// Number of arms `m` played per round.
    fn arms_per_round(&self) -> usize;

    fn select_set(&mut self, rng: &mut dyn RngCore) -> Result<Vec<ArmIndex>>;

    /// Consumes every observed entry of `feedback` in row-major order.
    fn update(&mut self, chosen: &[ArmIndex], feedback: &FeedbackMatrix) -> Result<()>;

    /// Posterior summary for kernelized policies.
    fn gp_snapshot(
        &self,
        _iteration: usize,
        _true_preference: Option<Vec<f64>>,
    ) -> Option<Result<GpSnapshot>> {
        None
    }
}

impl<P: DuelingPolicy + ?Sized> DuelingPolicy for Box<P> {
    fn arms_per_round(&self) -> usize {
        (**self).arms_per_round()
    }

    fn select_set(&mut self, rng: &mut dyn RngCore) -> Result<Vec<ArmIndex>> {
        (**self).select_set(rng)
    }

    fn update(&mut self, chosen: &[ArmIndex], feedback: &FeedbackMatrix) -> Result<()> {
        (**self).update(chosen, feedback)
    }

    fn gp_snapshot(
        &self,
        iteration: usize,
        true_preference: Option<Vec<f64>>,
    ) -> Option<Result<GpSnapshot>> {
        (**self).gp_snapshot(iteration, true_preference)
    }
}

/// One played round.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    /// 1-based.
    pub iteration: usize,
    pub chosen: Vec<ArmIndex>,
    pub feedback: FeedbackMatrix,
    pub regret: f64,
}

/// Select, duel, record regret, update.
///
/// The policy and the environment draw from separate random streams so the
/// duel outcomes of a round do not depend on how many draws the policy made.
pub fn play_round<P: DuelingPolicy + ?Sized>(
    policy: &mut P,
    env: &PreferenceEnvironment,
    mechanism: FeedbackMechanism,
    iteration: usize,
    policy_rng: &mut dyn RngCore,
    env_rng: &mut dyn RngCore,
) -> Result<RoundRecord> {
    let chosen = policy.select_set(policy_rng)?;
    debug_assert_eq!(chosen.len(), policy.arms_per_round());
    let feedback = env.sample_feedback(&chosen, mechanism, env_rng)?;
    let regret = env.instantaneous_regret(&chosen)?;
    policy.update(&chosen, &feedback)?;
    Ok(RoundRecord {
        iteration,
        chosen,
        feedback,
        regret,
    })
}

fn check_feedback(chosen: &[ArmIndex], feedback: &FeedbackMatrix) -> Result<()> {
    if feedback.size() == chosen.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: chosen.len(),
            actual: feedback.size(),
        })
    }
}

fn reward(won: bool) -> f64 {
    if won {
        1.0
    } else {
        0.0
    }
}

/// SelfSparring with independent Beta-Bernoulli arms.
#[derive(Debug, Clone)]
pub struct IndSelfSparring {
    state: BetaState,
    m: usize,
    eta: f64,
    thetas: Vec<f64>,
}

impl IndSelfSparring {
    pub fn new(arms: usize, m: usize, eta: f64) -> Self {
        assert!(m >= 1, "at least one arm per round");
        assert!(eta > 0.0, "learning rate must be positive");
        IndSelfSparring {
            state: BetaState::new(arms),
            m,
            eta,
            thetas: Vec::with_capacity(arms),
        }
    }

    pub fn with_state(state: BetaState, m: usize, eta: f64) -> Self {
        let mut policy = Self::new(state.num_arms(), m, eta);
        policy.state = state;
        policy
    }

    pub fn state(&self) -> &BetaState {
        &self.state
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// `m` independent Thompson draws from one shared posterior, each with a fresh
/// `θ` vector.
pub fn ind_selfsparring_select<R: Rng + ?Sized>(
    state: &BetaState,
    m: usize,
    rng: &mut R,
) -> Vec<ArmIndex> {
    let mut thetas = Vec::with_capacity(state.num_arms());
    (0..m)
        .map(|_| state.sample_with(rng, &mut thetas))
        .collect()
}

/// Credits every observed `r_jk` to the arm in slot `j` with rate `eta`.
pub fn ind_selfsparring_update(
    state: &mut BetaState,
    chosen: &[ArmIndex],
    feedback: &FeedbackMatrix,
    eta: f64,
) -> Result<()> {
    check_feedback(chosen, feedback)?;
    for (j, _, won) in feedback.observed() {
        state.update(chosen[j], reward(won), eta);
    }
    Ok(())
}

impl DuelingPolicy for IndSelfSparring {
    fn arms_per_round(&self) -> usize {
        self.m
    }

    fn select_set(&mut self, rng: &mut dyn RngCore) -> Result<Vec<ArmIndex>> {
        let thetas = &mut self.thetas;
        Ok((0..self.m)
            .map(|_| self.state.sample_with(rng, thetas))
            .collect())
    }

    fn update(&mut self, chosen: &[ArmIndex], feedback: &FeedbackMatrix) -> Result<()> {
        ind_selfsparring_update(&mut self.state, chosen, feedback, self.eta)
    }
}

/// SelfSparring with a Gaussian-process posterior over the arm grid.
#[derive(Debug, Clone)]
pub struct KernelSelfSparring {
    gp: GpPosterior,
    m: usize,
}

impl KernelSelfSparring {
    pub fn new(gp: GpPosterior, m: usize) -> Self {
        assert!(m >= 1, "at least one arm per round");
        assert!(!gp.grid().is_empty(), "kernelized policies need a grid");
        KernelSelfSparring { gp, m }
    }

    pub fn posterior(&self) -> &GpPosterior {
        &self.gp
    }
}

impl DuelingPolicy for KernelSelfSparring {
    fn arms_per_round(&self) -> usize {
        self.m
    }

    /// Each slot takes the argmax of its own joint posterior draw.
    fn select_set(&mut self, rng: &mut dyn RngCore) -> Result<Vec<ArmIndex>> {
        let sampler = self.gp.grid_sampler()?;
        Ok((0..self.m)
            .map(|_| {
                let f = sampler.draw(rng);
                ArmIndex(argmax_uniform(&f, rng))
            })
            .collect())
    }

    fn update(&mut self, chosen: &[ArmIndex], feedback: &FeedbackMatrix) -> Result<()> {
        check_feedback(chosen, feedback)?;
        for (j, _, won) in feedback.observed() {
            self.gp.observe_arm(chosen[j], reward(won))?;
        }
        Ok(())
    }

    fn gp_snapshot(
        &self,
        iteration: usize,
        true_preference: Option<Vec<f64>>,
    ) -> Option<Result<GpSnapshot>> {
        Some(self.gp.snapshot(iteration, true_preference))
    }
}

/// One bandit policy per slot; slot `j` is rewarded with each observed
/// outcome in row `j`.
#[derive(Debug, Clone)]
pub struct Sparring<P> {
    slots: Vec<P>,
}

impl<P: BanditPolicy> Sparring<P> {
    pub fn new(slots: Vec<P>) -> Self {
        assert!(!slots.is_empty(), "at least one slot");
        Sparring { slots }
    }

    pub fn slots(&self) -> &[P] {
        &self.slots
    }
}

impl<P: BanditPolicy> DuelingPolicy for Sparring<P> {
    fn arms_per_round(&self) -> usize {
        self.slots.len()
    }

    fn select_set(&mut self, rng: &mut dyn RngCore) -> Result<Vec<ArmIndex>> {
        Ok(self.slots.iter_mut().map(|s| s.select(rng)).collect())
    }

    fn update(&mut self, chosen: &[ArmIndex], feedback: &FeedbackMatrix) -> Result<()> {
        check_feedback(chosen, feedback)?;
        for (j, _, won) in feedback.observed() {
            self.slots[j].update(chosen[j], reward(won));
        }
        Ok(())
    }
}

/// `m` independent GP-UCB learners, each seeing only its own duels.
#[derive(Debug, Clone)]
pub struct GpSparring {
    slots: Vec<GpPosterior>,
    beta_scale: f64,
    round: usize,
}

impl GpSparring {
    pub fn new(prior: GpPosterior, m: usize, beta_scale: f64) -> Self {
        assert!(m >= 1, "at least one slot");
        assert!(beta_scale >= 0.0);
        GpSparring {
            slots: vec![prior; m],
            beta_scale,
            round: 0,
        }
    }

    pub fn slots(&self) -> &[GpPosterior] {
        &self.slots
    }
}

impl DuelingPolicy for GpSparring {
    fn arms_per_round(&self) -> usize {
        self.slots.len()
    }

    fn select_set(&mut self, rng: &mut dyn RngCore) -> Result<Vec<ArmIndex>> {
        self.round += 1;
        let t = self.round;
        self.slots
            .iter()
            .map(|gp| {
                let scores = gp.ucb_scores(t, self.beta_scale)?;
                Ok(ArmIndex(argmax_uniform(&scores, rng)))
            })
            .collect()
    }

    fn update(&mut self, chosen: &[ArmIndex], feedback: &FeedbackMatrix) -> Result<()> {
        check_feedback(chosen, feedback)?;
        for (j, _, won) in feedback.observed() {
            self.slots[j].observe_arm(chosen[j], reward(won))?;
        }
        Ok(())
    }

    /// Snapshot of the first slot's posterior.
    fn gp_snapshot(
        &self,
        iteration: usize,
        true_preference: Option<Vec<f64>>,
    ) -> Option<Result<GpSnapshot>> {
        Some(self.slots[0].snapshot(iteration, true_preference))
    }
}
