//! Martingale diffusion market model `dS = diag[S] sigma(t, S) dW`, path
//! simulation in log space, and lognormal closed forms used as oracles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("model dimensions inconsistent: d = df + dc = {expected}, got {got}")]
    BadDimensions { expected: usize, got: usize },
    #[error("initial price s0[{idx}] = {value} must be strictly positive")]
    NonpositiveSpot { idx: usize, value: f64 },
    #[error("volatility matrix is singular or too ill-conditioned (cond = {cond:.3e}, bound = {bound:.3e})")]
    IllConditionedVol { cond: f64, bound: f64 },
    #[error("model lacks the block certificate (Hsigma) required when df >= 1")]
    MissingBlockCertificate,
    #[error("n_paths and n_steps must be >= 1")]
    EmptyBatch,
    #[error("state-dependent volatility requires the log-Euler scheme")]
    SchemeMismatch,
}

/// Volatility coefficient. The state-dependent variant keeps the free block
/// and the costly block as separate closures so the free rows structurally
/// cannot read costly-asset state (this is what the block certificate
/// (Hsigma) asserts).
#[derive(Clone)]
pub enum Vol {
    /// Constant d x d matrix.
    Constant(Vec<Vec<f64>>),
    /// Free rows depend on (t, s^f) only; costly rows may read all of s.
    StateDependent {
        free_rows: std::sync::Arc<dyn Fn(f64, &[f64]) -> Vec<Vec<f64>> + Send + Sync>,
        costly_rows: std::sync::Arc<dyn Fn(f64, &[f64]) -> Vec<Vec<f64>> + Send + Sync>,
    },
}

impl std::fmt::Debug for Vol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Vol::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            Vol::StateDependent { .. } => f.write_str("StateDependent(..)"),
        }
    }
}

/// Driftless diffusion model for the d = df + dc risky assets.
#[derive(Debug, Clone)]
pub struct MarketModel {
    pub df: usize,
    pub dc: usize,
    /// Horizon in years.
    pub horizon: f64,
    /// Initial prices, currency units.
    pub s0: Vec<f64>,
    pub vol: Vol,
    /// Asserts (Hsigma): free rows of sigma depend only on s^f.
    pub block_certificate: bool,
}

/// Condition-number bound applied when validating the volatility matrix.
pub const VOL_COND_BOUND: f64 = 1e8;

impl MarketModel {
    pub fn d(&self) -> usize {
        self.df + self.dc
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let d = self.d();
        if self.s0.len() != d || d == 0 {
            return Err(MarketError::BadDimensions {
                expected: d,
                got: self.s0.len(),
            });
        }
        for (idx, &v) in self.s0.iter().enumerate() {
            if !(v > 0.0) {
                return Err(MarketError::NonpositiveSpot { idx, value: v });
            }
        }
        if self.df >= 1 && !self.block_certificate {
            return Err(MarketError::MissingBlockCertificate);
        }
        // Invertibility with bounded condition number at sampled states.
        for frac in [0.0, 0.5, 1.0] {
            let t = frac * self.horizon;
            let sig = self.sigma(t, &self.s0);
            let cond = linalg::cond_1(&sig).unwrap_or(f64::INFINITY);
            if !(cond < VOL_COND_BOUND) {
                return Err(MarketError::IllConditionedVol {
                    cond,
                    bound: VOL_COND_BOUND,
                });
            }
        }
        Ok(())
    }

    /// Full sigma(t, s) as a d x d matrix.
    pub fn sigma(&self, t: f64, s: &[f64]) -> Vec<Vec<f64>> {
        match &self.vol {
            Vol::Constant(m) => m.clone(),
            Vol::StateDependent {
                free_rows,
                costly_rows,
            } => {
                let mut rows = free_rows(t, &s[..self.df]);
                rows.extend(costly_rows(t, s));
                rows
            }
        }
    }

    /// Row norms |sigma_i| (per-asset lognormal vol) at (0, s0); used for
    /// grid sizing.
    pub fn vol_row_norms(&self) -> Vec<f64> {
        self.sigma(0.0, &self.s0)
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ExactLognormal,
    LogEuler,
}

/// A batch of simulated paths, path-major storage; reproducible bit-exactly
/// from (seed, scheme, n_paths, n_steps, model).
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub n_paths: usize,
    pub n_steps: usize,
    pub d: usize,
    pub df: usize,
    /// Step times, length n_steps + 1 (t_0 = 0, t_last = T).
    pub times: Vec<f64>,
    /// Shape (n_paths, n_steps + 1, d), row-major.
    states: Vec<f64>,
    pub seed: u64,
    pub scheme: Scheme,
}

impl PathBatch {
    #[inline]
    pub fn state(&self, path: usize, step: usize, asset: usize) -> f64 {
        self.states[(path * (self.n_steps + 1) + step) * self.d + asset]
    }

    pub fn state_slice(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * (self.n_steps + 1) + step) * self.d;
        &self.states[base..base + self.d]
    }

    /// Terminal free-asset prices of one path.
    pub fn terminal_sf(&self, path: usize) -> &[f64] {
        &self.state_slice(path, self.n_steps)[..self.df]
    }

    pub fn terminal_sc(&self, path: usize) -> &[f64] {
        &self.state_slice(path, self.n_steps)[self.df..]
    }

    /// Half-resolution view of the same paths: every other step, same
    /// terminal states. Used to calibrate discretization tolerances by a
    /// refinement pair that shares the underlying randomness, so worst-path
    /// statistics transfer between the two resolutions.
    pub fn coarsen(&self) -> Option<PathBatch> {
        if self.n_steps < 2 || self.n_steps % 2 != 0 {
            return None;
        }
        let half = self.n_steps / 2;
        let times: Vec<f64> = self.times.iter().copied().step_by(2).collect();
        let mut states = Vec::with_capacity(self.n_paths * (half + 1) * self.d);
        for p in 0..self.n_paths {
            for k in (0..=self.n_steps).step_by(2) {
                states.extend_from_slice(self.state_slice(p, k));
            }
        }
        Some(PathBatch {
            n_paths: self.n_paths,
            n_steps: half,
            d: self.d,
            df: self.df,
            times,
            states,
            seed: self.seed,
            scheme: self.scheme,
        })
    }
}

/// Simulates `n_paths` paths on `n_steps` uniform steps. Constant vol with
/// the exact-lognormal scheme steps with exactly Gaussian log increments;
/// state-dependent vol uses Euler-Maruyama in log space. Antithetic pairing
/// is applied when `n_paths` is even. Paths are seeded per antithetic pair
/// (ChaCha stream = pair index), so the result is independent of worker
/// count and `--threads`.
pub fn simulate(
    model: &MarketModel,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<PathBatch, MarketError> {
    model.validate()?;
    if n_paths == 0 || n_steps == 0 {
        return Err(MarketError::EmptyBatch);
    }
    if matches!(scheme, Scheme::ExactLognormal) && !matches!(model.vol, Vol::Constant(_)) {
        return Err(MarketError::SchemeMismatch);
    }
    let d = model.d();
    let dt = model.horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
    let log_s0: Vec<f64> = model.s0.iter().map(|v| v.ln()).collect();

    // For constant vol, precompute sigma and the Ito drift correction.
    let const_sigma = match &model.vol {
        Vol::Constant(m) => Some(m.clone()),
        _ => None,
    };

    let antithetic = n_paths % 2 == 0;
    let stride = (n_steps + 1) * d;

    let mut states = vec![0.0; n_paths * stride];
    let chunks: Vec<(usize, &mut [f64])> = if antithetic {
        states.chunks_mut(2 * stride).enumerate().collect()
    } else {
        states.chunks_mut(stride).enumerate().collect()
    };

    chunks.into_par_iter().for_each(|(pair, chunk)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(pair as u64 + 1);
        let mut z = vec![0.0; d];
        let mut log_s = log_s0.clone();
        let mut log_s_anti = log_s0.clone();
        let mut s = model.s0.clone();
        let mut s_anti = model.s0.clone();
        let off1 = stride; // offset of the antithetic partner inside the chunk
        chunk[0..d].copy_from_slice(&s);
        if antithetic {
            chunk[off1..off1 + d].copy_from_slice(&s_anti);
        }
        for k in 0..n_steps {
            for zk in z.iter_mut() {
                *zk = StandardNormal.sample(&mut rng);
            }
            let t = times[k];
            step_log(
                model,
                const_sigma.as_deref(),
                t,
                dt,
                sqrt_dt,
                &z,
                &mut log_s,
                &mut s,
                1.0,
            );
            let base = (k + 1) * d;
            chunk[base..base + d].copy_from_slice(&s);
            if antithetic {
                step_log(
                    model,
                    const_sigma.as_deref(),
                    t,
                    dt,
                    sqrt_dt,
                    &z,
                    &mut log_s_anti,
                    &mut s_anti,
                    -1.0,
                );
                chunk[off1 + base..off1 + base + d].copy_from_slice(&s_anti);
            }
        }
    });

    Ok(PathBatch {
        n_paths,
        n_steps,
        d,
        df: model.df,
        times,
        states,
        seed,
        scheme,
    })
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn step_log(
    model: &MarketModel,
    const_sigma: Option<&[Vec<f64>]>,
    t: f64,
    dt: f64,
    sqrt_dt: f64,
    z: &[f64],
    log_s: &mut [f64],
    s: &mut [f64],
    z_sign: f64,
) {
    let owned;
    let sigma: &[Vec<f64>] = match const_sigma {
        Some(m) => m,
        None => {
            owned = model.sigma(t, s);
            &owned
        }
    };
    for i in 0..log_s.len() {
        let row = &sigma[i];
        let mut diff = 0.0;
        let mut var = 0.0;
        for (j, &zj) in z.iter().enumerate() {
            diff += row[j] * zj;
            var += row[j] * row[j];
        }
        log_s[i] += z_sign * diff * sqrt_dt - 0.5 * var * dt;
        s[i] = log_s[i].exp();
    }
}

/// Black-Scholes price of a call on a driftless lognormal underlying
/// (zero rate): `E[(S(T) - k)^+]`.
pub fn lognormal_call(s0: f64, k: f64, sig: f64, t: f64) -> f64 {
    assert!(s0 > 0.0 && sig > 0.0 && t > 0.0 && k >= 0.0);
    if k == 0.0 {
        return s0;
    }
    let sd = sig * t.sqrt();
    let d1 = ((s0 / k).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    let n = Normal::new(0.0, 1.0).unwrap();
    s0 * n.cdf(d1) - k * n.cdf(d2)
}

/// Digital `P[S(T) >= k]` for the same driftless lognormal model.
pub fn lognormal_digital(s0: f64, k: f64, sig: f64, t: f64) -> f64 {
    assert!(s0 > 0.0 && sig > 0.0 && t > 0.0 && k >= 0.0);
    if k == 0.0 {
        return 1.0;
    }
    let sd = sig * t.sqrt();
    let d2 = ((s0 / k).ln() - 0.5 * sd * sd) / sd;
    Normal::new(0.0, 1.0).unwrap().cdf(d2)
}

/// Delta `Phi(d1)` of the lognormal call.
pub fn lognormal_call_delta(s0: f64, k: f64, sig: f64, t: f64) -> f64 {
    if k == 0.0 {
        return 1.0;
    }
    let sd = sig * t.sqrt();
    let d1 = ((s0 / k).ln() + 0.5 * sd * sd) / sd;
    Normal::new(0.0, 1.0).unwrap().cdf(d1)
}

/// Inverse standard normal CDF; exposed for the worked-example oracles.
pub fn normal_inverse_cdf(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}
