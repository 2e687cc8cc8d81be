//! Exact Gaussian-process regression over a finite grid of arms.
//!
//! With zero prior mean, observations `y` at points `A_T` and noise variance
//! `σ²`, the posterior at `b` is
//!
//! ```text
//! μ_T(b)     = k_T(b)ᵀ (K_T + σ²I)⁻¹ y_T
//! k_T(b, b') = k(b, b') − k_T(b)ᵀ (K_T + σ²I)⁻¹ k_T(b')
//! σ_T²(b)    = k_T(b, b)
//! ```
//!
//! Both `K_T + σ²I` and the grid covariance are factorised with Cholesky. The
//! factorisation of `K_T + σ²I` is recomputed lazily after each batch of
//! observations.

use std::cell::OnceCell;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::ArmIndex;
use crate::error::{Error, Result};

/// First jitter tried when a covariance is not numerically positive definite.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter before giving up with [`Error::SingularKernel`].
pub const JITTER_MAX: f64 = 1e-4;

pub const DEFAULT_LENGTHSCALE: f64 = 0.2;
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.025;
pub const DEFAULT_BETA_SCALE: f64 = 0.2;

/// Squared-exponential kernel `exp(−‖x − x'‖² / 2ℓ²)` on `d`-dimensional points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    lengthscale: f64,
    dim: usize,
}

impl Kernel {
    pub fn squared_exponential(lengthscale: f64, dim: usize) -> Self {
        assert!(lengthscale > 0.0, "lengthscale must be positive");
        Kernel { lengthscale, dim }
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            })
        }
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

/// Posterior mean and variance at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone)]
struct Fit {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// A GP over a fixed grid of candidate points, conditioned on the
/// observations appended so far.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: Kernel,
    noise_variance: f64,
    grid: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    fit: OnceCell<Fit>,
}

impl GpPosterior {
    pub fn new(kernel: Kernel, noise_variance: f64, grid: Vec<Vec<f64>>) -> Result<Self> {
        if !(noise_variance > 0.0) {
            return Err(Error::config("noise variance must be positive"));
        }
        for p in &grid {
            kernel.check(p)?;
        }
        Ok(GpPosterior {
            kernel,
            noise_variance,
            grid,
            points: Vec::new(),
            values: Vec::new(),
            fit: OnceCell::new(),
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    pub fn num_observations(&self) -> usize {
        self.points.len()
    }

    pub fn observations(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .iter()
            .map(Vec::as_slice)
            .zip(self.values.iter().copied())
    }

    /// Appends the observation `(x, y)`.
    pub fn observe(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.kernel.check(x)?;
        self.points.push(x.to_vec());
        self.values.push(y);
        self.fit = OnceCell::new();
        Ok(())
    }

    /// Appends an observation at a grid point.
    pub fn observe_arm(&mut self, arm: ArmIndex, y: f64) -> Result<()> {
        let x = self
            .grid
            .get(arm.0)
            .ok_or(Error::Index {
                index: arm.0,
                arms: self.grid.len(),
            })?
            .clone();
        self.observe(&x, y)
    }

    fn fit(&self) -> Result<Option<&Fit>> {
        if self.points.is_empty() {
            return Ok(None);
        }
        if self.fit.get().is_none() {
            let t = self.points.len();
            let mut gram = DMatrix::from_fn(t, t, |i, j| {
                self.kernel.eval_unchecked(&self.points[i], &self.points[j])
            });
            for i in 0..t {
                gram[(i, i)] += self.noise_variance;
            }
            let chol = factorize(gram, 0.0)?;
            let alpha = chol.solve(&DVector::from_column_slice(&self.values));
            let _ = self.fit.set(Fit { chol, alpha });
        }
        Ok(self.fit.get())
    }

    fn cross_kernel(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| self.kernel.eval_unchecked(p, x)),
        )
    }

    /// `(μ_T(b), σ_T²(b))`.
    pub fn posterior_at(&self, b: &[f64]) -> Result<Posterior> {
        self.kernel.check(b)?;
        let prior = self.kernel.eval_unchecked(b, b);
        let Some(fit) = self.fit()? else {
            return Ok(Posterior {
                mean: 0.0,
                variance: prior,
            });
        };
        let k = self.cross_kernel(b);
        let mean = k.dot(&fit.alpha);
        let v = fit
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a nonzero diagonal");
        let variance = (prior - v.norm_squared()).clamp(0.0, prior);
        Ok(Posterior { mean, variance })
    }

    /// Marginal posterior at every grid point.
    pub fn posterior_on_grid(&self) -> Result<Vec<Posterior>> {
        let Some(fit) = self.fit()? else {
            return Ok(self
                .grid
                .iter()
                .map(|g| Posterior {
                    mean: 0.0,
                    variance: self.kernel.eval_unchecked(g, g),
                })
                .collect());
        };
        let cross = self.grid_cross_kernel();
        let means = cross.tr_mul(&fit.alpha);
        let v = self.whiten(fit, cross);
        Ok(self
            .grid
            .iter()
            .enumerate()
            .map(|(g, x)| {
                let prior = self.kernel.eval_unchecked(x, x);
                let variance = (prior - v.column(g).norm_squared()).clamp(0.0, prior);
                Posterior {
                    mean: means[g],
                    variance,
                }
            })
            .collect())
    }

    fn grid_cross_kernel(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.points.len(), self.grid.len(), |i, g| {
            self.kernel.eval_unchecked(&self.points[i], &self.grid[g])
        })
    }

    /// `L⁻¹ K(A_T, grid)`
    fn whiten(&self, fit: &Fit, cross: DMatrix<f64>) -> DMatrix<f64> {
        fit.chol
            .l_dirty()
            .solve_lower_triangular(&cross)
            .expect("Cholesky factor has a nonzero diagonal")
    }

    /// Joint posterior mean vector and covariance matrix over the grid.
    ///
    /// The covariance is exactly symmetric: the upper triangle is computed
    /// and mirrored.
    pub fn posterior_grid(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.grid.len();
        let mut cov = DMatrix::from_fn(n, n, |i, j| {
            if i <= j {
                self.kernel.eval_unchecked(&self.grid[i], &self.grid[j])
            } else {
                0.0
            }
        });
        let mean = match self.fit()? {
            None => DVector::zeros(n),
            Some(fit) => {
                let cross = self.grid_cross_kernel();
                let mean = cross.tr_mul(&fit.alpha);
                let v = self.whiten(fit, cross);
                for j in 0..n {
                    for i in 0..=j {
                        cov[(i, j)] -= v.column(i).dot(&v.column(j));
                    }
                }
                mean
            }
        };
        for j in 0..n {
            for i in 0..j {
                cov[(j, i)] = cov[(i, j)];
            }
        }
        Ok((mean, cov))
    }

    /// Factorises the grid posterior once so several joint draws can share it.
    pub fn grid_sampler(&self) -> Result<GridSampler> {
        let (mean, cov) = self.posterior_grid()?;
        let chol = factorize(cov, JITTER_START)?;
        Ok(GridSampler {
            mean,
            factor: chol.unpack(),
        })
    }

    /// One joint draw of the latent function over the grid.
    pub fn sample_function<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.grid_sampler()?.draw(rng))
    }

    /// Exploration weight `β_t = scale · 2 ln(|grid| · t² · π² / 6)`.
    pub fn beta(&self, t: usize, beta_scale: f64) -> f64 {
        let t = t.max(1) as f64;
        beta_scale * 2.0 * (self.grid.len() as f64 * t * t * PI * PI / 6.0).ln()
    }

    /// GP-UCB score `μ_T(b) + sqrt(β_t) σ_T(b)`.
    pub fn ucb_score(&self, b: &[f64], t: usize, beta_scale: f64) -> Result<f64> {
        let post = self.posterior_at(b)?;
        Ok(post.mean + self.beta(t, beta_scale).sqrt() * post.variance.sqrt())
    }

    /// GP-UCB scores at every grid point.
    pub fn ucb_scores(&self, t: usize, beta_scale: f64) -> Result<Vec<f64>> {
        let width = self.beta(t, beta_scale).sqrt();
        Ok(self
            .posterior_on_grid()?
            .into_iter()
            .map(|p| p.mean + width * p.variance.sqrt())
            .collect())
    }

    pub fn snapshot(
        &self,
        iteration: usize,
        true_preference: Option<Vec<f64>>,
    ) -> Result<GpSnapshot> {
        let post = self.posterior_on_grid()?;
        Ok(GpSnapshot {
            iteration,
            grid: self.grid.clone(),
            mean: post.iter().map(|p| p.mean).collect(),
            std: post.iter().map(|p| p.variance.sqrt()).collect(),
            true_preference,
        })
    }
}

/// Mean and Cholesky factor of a grid posterior, ready for repeated draws.
#[derive(Debug, Clone)]
pub struct GridSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GridSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::<f64>::from_fn(self.mean.len(), |_, _| rng.sample(StandardNormal));
        let f = &self.mean + &self.factor * z;
        f.iter().copied().collect()
    }
}

/// Posterior summary over a grid, written for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub iteration: usize,
    pub grid: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_preference: Option<Vec<f64>>,
}

/// Cholesky with escalating diagonal jitter.
///
/// Tries `first_jitter` (which may be zero) and then `1e-10, 1e-9, …, 1e-4`.
fn factorize(matrix: DMatrix<f64>, first_jitter: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut jitter = first_jitter;
    loop {
        let mut m = matrix.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol);
        }
        let next = if jitter == 0.0 {
            JITTER_START
        } else {
            jitter * 10.0
        };
        if next > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::SingularKernel { jitter });
        }
        jitter = next;
    }
}
