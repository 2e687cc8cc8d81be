//! Preference environments.
//!
//! An environment answers the stochastic preference `φ(i, j) = P(i ≻ j) − 1/2`
//! for any pair of arms and samples duel outcomes from it. Environments are
//! immutable once built; every sampling call takes the random source
//! explicitly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::select::argmax_uniform;

/// Tolerance for the range and antisymmetry checks on preference matrices.
pub const MATRIX_TOLERANCE: f64 = 1e-9;

/// Names accepted by [`PreferenceEnvironment::synthetic`].
pub const SYNTHETIC_NAMES: [&str; 5] = ["1good", "2good", "6good", "arith", "geom"];

/// Names accepted by [`PreferenceEnvironment::continuous`].
pub const CONTINUOUS_NAMES: [&str; 2] = ["forrester", "sixhump"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ArmIndex(pub usize);

impl ArmIndex {
    #[inline]
    pub fn get(self) -> usize {
        self.0
    }
}

impl From<usize> for ArmIndex {
    fn from(i: usize) -> Self {
        ArmIndex(i)
    }
}

impl fmt::Display for ArmIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Map from a pair of utilities to the probability that the first wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkFunction {
    /// `P(x ≻ y) = (1 + x − y) / 2`
    Linear,
    /// `P(x ≻ y) = 1 / (1 + exp(y − x))`
    Logit,
}

impl LinkFunction {
    /// `P(x ≻ y) − 1/2`, computed as an odd function of `x − y` so that
    /// swapping the arguments flips the sign exactly.
    pub fn preference(self, x: f64, y: f64) -> f64 {
        let d = x - y;
        match self {
            LinkFunction::Linear => d / 2.0,
            // 1/(1 + e^{−d}) − 1/2 = tanh(d/2)/2
            LinkFunction::Logit => (d / 2.0).tanh() / 2.0,
        }
    }

    pub fn win_probability(self, x: f64, y: f64) -> f64 {
        0.5 + self.preference(x, y)
    }
}

impl FromStr for LinkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LinkFunction::Linear),
            "logit" => Ok(LinkFunction::Logit),
            other => Err(Error::config(format!("unknown link function '{other}'"))),
        }
    }
}

/// Which entries of the outcome matrix a round reveals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMechanism {
    /// Every unordered pair of slots is dueled once.
    AllPairs,
    /// Only the comparisons of the round's winner against every other slot.
    WinnerOnly,
    /// Only slots 0 and 1.
    SinglePair,
}

/// The `m × m` outcome matrix of one round.
///
/// Entry `(j, k)` is `Some(true)` when slot `j` beat slot `k`, `Some(false)`
/// when it lost, and `None` when the pair was not observed. The diagonal is
/// always unobserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackMatrix {
    size: usize,
    entries: Vec<Option<bool>>,
}

impl FeedbackMatrix {
    pub fn new(size: usize) -> Self {
        FeedbackMatrix {
            size,
            entries: vec![None; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, j: usize, k: usize) -> Option<bool> {
        self.entries[j * self.size + k]
    }

    /// Records that slot `j` won (`true`) or lost against slot `k`, filling
    /// the mirrored entry with the complementary outcome.
    pub fn record(&mut self, j: usize, k: usize, j_wins: bool) {
        assert!(j != k, "self-comparisons carry no feedback");
        self.entries[j * self.size + k] = Some(j_wins);
        self.entries[k * self.size + j] = Some(!j_wins);
    }

    /// Observed entries in row-major order as `(row, column, row_won)`.
    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(move |(idx, e)| e.map(|won| (idx / self.size, idx % self.size, won)))
    }

    pub fn observed_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

/// A finite set of arms together with their pairwise win probabilities.
#[derive(Debug, Clone)]
pub struct PreferenceEnvironment {
    arms: usize,
    /// Row-major `φ(i, j)`, exactly antisymmetric.
    phi: Vec<f64>,
    best: ArmIndex,
    utilities: Option<Vec<f64>>,
    link: Option<LinkFunction>,
    grid: Option<Vec<Vec<f64>>>,
}

impl PreferenceEnvironment {
    /// Builds a utility-based environment. The Condorcet winner is the
    /// highest-utility arm (lowest index on ties).
    pub fn from_utilities(utilities: Vec<f64>, link: LinkFunction) -> Result<Self> {
        if utilities.is_empty() {
            return Err(Error::config("environment needs at least one arm"));
        }
        if let Some(u) = utilities.iter().find(|u| !(0.0..=1.0).contains(*u)) {
            return Err(Error::config(format!("utility {u} outside [0, 1]")));
        }
        let arms = utilities.len();
        let mut phi = vec![0.0; arms * arms];
        for i in 0..arms {
            for j in 0..arms {
                phi[i * arms + j] = link.preference(utilities[i], utilities[j]);
            }
        }
        let mut best = 0;
        for (i, &u) in utilities.iter().enumerate() {
            if u > utilities[best] {
                best = i;
            }
        }
        Ok(PreferenceEnvironment {
            arms,
            phi,
            best: ArmIndex(best),
            utilities: Some(utilities),
            link: Some(link),
            grid: None,
        })
    }

    /// Builds a matrix environment, validating antisymmetry, range and the
    /// existence of a Condorcet winner.
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let arms = rows.len();
        if arms == 0 {
            return Err("matrix is empty".into());
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != arms {
                return Err(format!(
                    "matrix is not square: row {i} has {} columns, expected {arms}",
                    row.len()
                ));
            }
        }
        for i in 0..arms {
            for j in 0..arms {
                let p = rows[i][j];
                if !(-MATRIX_TOLERANCE..=1.0 + MATRIX_TOLERANCE).contains(&p) {
                    return Err(format!("entry ({i}, {j}) = {p} outside [0, 1]"));
                }
                let sum = p + rows[j][i];
                if (sum - 1.0).abs() > MATRIX_TOLERANCE {
                    return Err(format!(
                        "inconsistent pair: P[{i}][{j}] + P[{j}][{i}] = {sum}, expected 1"
                    ));
                }
            }
        }
        let best = (0..arms)
            .find(|&i| rows[i].iter().all(|&p| p >= 0.5 - MATRIX_TOLERANCE))
            .ok_or_else(|| "no Condorcet winner: every arm loses to some other arm".to_string())?;
        // Averaging the two halves of each pair keeps φ exactly antisymmetric.
        let mut phi = vec![0.0; arms * arms];
        for i in 0..arms {
            for j in 0..arms {
                phi[i * arms + j] = ((rows[i][j] - rows[j][i]) / 2.0).clamp(-0.5, 0.5);
            }
        }
        Ok(PreferenceEnvironment {
            arms,
            phi,
            best: ArmIndex(best),
            utilities: None,
            link: None,
            grid: None,
        })
    }

    /// Reads a comma-separated `K × K` preference matrix (row = winner).
    pub fn load_matrix(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let load_err = |reason: String| Error::Load {
            path: path.to_path_buf(),
            reason,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| load_err(e.to_string()))?;
        let mut rows = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|e| load_err(e.to_string()))?;
            let row = record
                .iter()
                .enumerate()
                .map(|(c, field)| {
                    field.parse::<f64>().map_err(|_| {
                        load_err(format!("row {r} column {c}: '{field}' is not a number"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_matrix(rows).map_err(load_err)
    }

    /// One of the 16-arm synthetic utility profiles; arm 0 is the best arm.
    pub fn synthetic(name: &str, link: LinkFunction) -> Result<Self> {
        let mut utilities = vec![0.8];
        match name {
            "1good" => utilities.extend([0.2; 15]),
            "2good" => {
                utilities.push(0.7);
                utilities.extend([0.2; 14]);
            }
            "6good" => {
                utilities.extend([0.7; 5]);
                utilities.extend([0.2; 10]);
            }
            "arith" => {
                let step = (0.2 - 0.7) / 14.0;
                utilities.extend((0..15).map(|k| 0.7 + step * k as f64));
            }
            "geom" => {
                let ratio = (0.2f64 / 0.7).powf(1.0 / 14.0);
                utilities.extend((0..15).map(|k| 0.7 * ratio.powi(k)));
            }
            other => {
                return Err(Error::config(format!(
                    "unknown synthetic environment '{other}' (expected one of {SYNTHETIC_NAMES:?})"
                )))
            }
        }
        Self::from_utilities(utilities, link)
    }

    /// A discretised continuous benchmark with logit preferences.
    ///
    /// Utilities are the negated benchmark values min-max normalised to
    /// `[0, 1]`, so the benchmark minimiser is the best arm. `sixhump` needs a
    /// square point count and lays the points out on a row-major grid over
    /// `[0, 1]²`.
    pub fn continuous(name: &str, grid_points: usize) -> Result<Self> {
        if grid_points < 2 {
            return Err(Error::config(
                "continuous environments need at least 2 grid points",
            ));
        }
        let grid: Vec<Vec<f64>> = match name {
            "forrester" => (0..grid_points)
                .map(|i| vec![i as f64 / (grid_points - 1) as f64])
                .collect(),
            "sixhump" => {
                let side = (grid_points as f64).sqrt().round() as usize;
                if side * side != grid_points || side < 2 {
                    return Err(Error::config(format!(
                        "sixhump needs a square number of grid points, got {grid_points}"
                    )));
                }
                let coord = |i: usize| i as f64 / (side - 1) as f64;
                (0..side)
                    .flat_map(|i| (0..side).map(move |j| vec![coord(i), coord(j)]))
                    .collect()
            }
            other => {
                return Err(Error::config(format!(
                "unknown continuous environment '{other}' (expected one of {CONTINUOUS_NAMES:?})"
            )))
            }
        };
        let values: Vec<f64> = grid
            .iter()
            .map(|p| match name {
                "forrester" => forrester(p[0]),
                _ => six_hump_camel(-3.0 + 6.0 * p[0], -2.0 + 4.0 * p[1]),
            })
            .collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let utilities = values.iter().map(|v| (hi - v) / (hi - lo)).collect();
        let mut env = Self::from_utilities(utilities, LinkFunction::Logit)?;
        env.grid = Some(grid);
        Ok(env)
    }

    pub fn num_arms(&self) -> usize {
        self.arms
    }

    pub fn best_arm(&self) -> ArmIndex {
        self.best
    }

    pub fn utilities(&self) -> Option<&[f64]> {
        self.utilities.as_deref()
    }

    pub fn link(&self) -> Option<LinkFunction> {
        self.link
    }

    /// Coordinates of each arm in `[0, 1]^d`, for grid-bearing environments.
    pub fn grid(&self) -> Option<&[Vec<f64>]> {
        self.grid.as_deref()
    }

    fn check(&self, arm: ArmIndex) -> Result<usize> {
        if arm.0 < self.arms {
            Ok(arm.0)
        } else {
            Err(Error::Index {
                index: arm.0,
                arms: self.arms,
            })
        }
    }

    /// `P(i ≻ j)`.
    pub fn win_probability(&self, i: ArmIndex, j: ArmIndex) -> Result<f64> {
        Ok(0.5 + self.preference(i, j)?)
    }

    /// `φ(i, j) = P(i ≻ j) − 1/2`, in `[−1/2, 1/2]`.
    pub fn preference(&self, i: ArmIndex, j: ArmIndex) -> Result<f64> {
        let (i, j) = (self.check(i)?, self.check(j)?);
        Ok(self.phi[i * self.arms + j])
    }

    /// Samples one duel; `true` means `i` won.
    pub fn sample_duel<R: Rng + ?Sized>(
        &self,
        i: ArmIndex,
        j: ArmIndex,
        rng: &mut R,
    ) -> Result<bool> {
        let p = self.win_probability(i, j)?;
        Ok(rng.random::<f64>() < p)
    }

    /// Duels the selected slots and reveals the entries allowed by `mechanism`.
    pub fn sample_feedback<R: Rng + ?Sized>(
        &self,
        chosen: &[ArmIndex],
        mechanism: FeedbackMechanism,
        rng: &mut R,
    ) -> Result<FeedbackMatrix> {
        let m = chosen.len();
        if m == 0 {
            return Err(Error::EmptySelection);
        }
        for &arm in chosen {
            self.check(arm)?;
        }
        let mut feedback = FeedbackMatrix::new(m);
        match mechanism {
            FeedbackMechanism::AllPairs => {
                for j in 0..m {
                    for k in j + 1..m {
                        let won = self.sample_duel(chosen[j], chosen[k], rng)?;
                        feedback.record(j, k, won);
                    }
                }
            }
            FeedbackMechanism::WinnerOnly => {
                let mut wins = vec![0.0; m];
                for j in 0..m {
                    for k in j + 1..m {
                        if self.sample_duel(chosen[j], chosen[k], rng)? {
                            wins[j] += 1.0;
                        } else {
                            wins[k] += 1.0;
                        }
                    }
                }
                let winner = argmax_uniform(&wins, rng);
                for k in (0..m).filter(|&k| k != winner) {
                    feedback.record(winner, k, true);
                }
            }
            FeedbackMechanism::SinglePair => {
                if m >= 2 {
                    let won = self.sample_duel(chosen[0], chosen[1], rng)?;
                    feedback.record(0, 1, won);
                }
            }
        }
        Ok(feedback)
    }

    /// `Σ_{b ∈ chosen} φ(best, b)`.
    pub fn instantaneous_regret(&self, chosen: &[ArmIndex]) -> Result<f64> {
        chosen.iter().map(|&b| self.preference(self.best, b)).sum()
    }

    /// `P(b ≻ best)` for every arm: the preference curve a kernelized learner
    /// tracks.
    pub fn preference_against_best(&self) -> Vec<f64> {
        (0..self.arms)
            .map(|b| 0.5 + self.phi[b * self.arms + self.best.0])
            .collect()
    }

    /// Largest `γ` with `φ(i, k) − φ(j, k) ≥ γ · φ(i, j)` over all triples of
    /// distinct arms with `i ≻ j` strictly and `j ⪰ k`.
    ///
    /// Returns `+∞` when no such triple exists (in particular for `K < 3`).
    pub fn gamma_lower_bound(&self) -> f64 {
        let k_arms = self.arms;
        let phi = |i: usize, j: usize| self.phi[i * k_arms + j];
        let mut gamma = f64::INFINITY;
        for i in 0..k_arms {
            for j in 0..k_arms {
                let phi_ij = phi(i, j);
                if i == j || phi_ij <= 0.0 {
                    continue;
                }
                for k in 0..k_arms {
                    if k == i || k == j || phi(j, k) < 0.0 {
                        continue;
                    }
                    gamma = gamma.min((phi(i, k) - phi(j, k)) / phi_ij);
                }
            }
        }
        gamma
    }
}

fn forrester(x: f64) -> f64 {
    (6.0 * x - 2.0).powi(2) * (12.0 * x - 4.0).sin()
}

fn six_hump_camel(x1: f64, x2: f64) -> f64 {
    (4.0 - 2.1 * x1 * x1 + x1.powi(4) / 3.0) * x1 * x1 + x1 * x2 + (-4.0 + 4.0 * x2 * x2) * x2 * x2
}
