//! Bounded-control lower-bound oracle: v_kappa(t,z) = sup over controls
//! mu with |mu| <= kappa of E[Ghat(Z(T))], where Z keeps the free-asset
//! diffusion and lets the control replace the costly-asset volatility row.
//! Solved with an explicit monotone-in-spirit finite-difference scheme in
//! log coordinates on a 2-d lattice (one free, one costly asset).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::dot;
use crate::linalg::kahan_sum;
use crate::market::MarketModel;
use crate::payoff::{fiber_weights, TransformGrid};

#[derive(Debug, Error)]
pub enum HjbError {
    #[error("the lattice solver supports exactly one free and one costly asset")]
    UnsupportedDimensions,
    #[error("policy magnitude {found} exceeds the control bound {bound}")]
    PolicyOutOfBounds { found: f64, bound: f64 },
    #[error("control set must contain the zero matrix")]
    MissingZeroControl,
}

/// One bounded-control problem instance. The control is the 1 x 2
/// volatility row of the costly coordinate; the free row is never
/// controlled.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub kappa: f64,
    /// Finite discretization of the control ball; always contains 0.
    pub mu_set: Vec<[f64; 2]>,
    /// Nodes per dimension (free, costly).
    pub n_nodes: (usize, usize),
    /// Lattice half-width in log space for the free coordinate, in
    /// terminal standard deviations.
    pub span_sigmas: f64,
    /// Lattice half-width in log space for the costly coordinate.
    pub zc_log_span: f64,
}

/// Builds the nested magnitude ladder for a family of control bounds:
/// the union of {k/2, k} over all ladder values <= kappa. Using one
/// cumulative ladder for the whole family makes the control sets nested,
/// so the solved values are monotone in kappa by construction.
pub fn magnitude_ladder(ladder: &[f64], kappa: f64) -> Vec<f64> {
    let mut mags = vec![0.0];
    for &k in ladder {
        if k > 0.0 && k <= kappa + 1e-12 {
            mags.push(0.5 * k);
            mags.push(k);
        }
    }
    mags.sort_by(f64::total_cmp);
    mags.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    mags
}

const N_DIRECTIONS: usize = 8;

/// Control problem for one kappa within a family given by `ladder`:
/// directions at multiples of pi/4 times the cumulative magnitude ladder.
pub fn make_problem(
    kappa: f64,
    ladder: &[f64],
    n_nodes: (usize, usize),
    span_sigmas: f64,
    zc_log_span: f64,
) -> ControlProblem {
    let mut mu_set = vec![[0.0, 0.0]];
    for &m in magnitude_ladder(ladder, kappa).iter().filter(|&&m| m > 0.0) {
        for k in 0..N_DIRECTIONS {
            let th = 2.0 * std::f64::consts::PI * k as f64 / N_DIRECTIONS as f64;
            mu_set.push([m * th.cos(), m * th.sin()]);
        }
    }
    ControlProblem {
        kappa,
        mu_set,
        n_nodes,
        span_sigmas,
        zc_log_span,
    }
}

/// Scheme diagnostics attached to a solved grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeDiagnostics {
    pub dt: f64,
    pub n_t: usize,
    /// Explicit-scheme stability ratio actually used (< 1).
    pub cfl_ratio: f64,
    /// Fraction of (node, control) stencils with a negative off-center
    /// coefficient; the scheme is monotone where this is zero.
    pub nonmonotone_fraction: f64,
}

/// Solved value surface: the t = 0 slice plus the terminal condition and
/// a piecewise-constant-in-time argmax policy for Monte Carlo replay.
#[derive(Debug, Clone)]
pub struct ValueGrid {
    pub kappa: f64,
    /// Price-space nodes (free, costly).
    pub zf_nodes: Vec<f64>,
    pub zc_nodes: Vec<f64>,
    /// Value at t = 0, row-major (free index major).
    pub v0: Vec<f64>,
    /// Terminal condition Ghat on the lattice.
    pub terminal: Vec<f64>,
    pub diagnostics: SchemeDiagnostics,
    /// Macro-slice times for the stored policy.
    pub policy_times: Vec<f64>,
    /// Argmax control index per (macro slice, node).
    pub policy: Vec<Vec<u16>>,
    pub mu_set: Vec<[f64; 2]>,
}

impl ValueGrid {
    pub fn value_at(&self, zf: f64, zc: f64) -> f64 {
        bilinear(&self.zf_nodes, &self.zc_nodes, &self.v0, zf, zc)
    }

    /// CSV of the t = 0 slice: zf,zc,value.
    pub fn v0_csv(&self) -> String {
        let mut out = String::from("zf,zc,value\n");
        for (i, &zf) in self.zf_nodes.iter().enumerate() {
            for (j, &zc) in self.zc_nodes.iter().enumerate() {
                out.push_str(&format!(
                    "{zf},{zc},{}\n",
                    self.v0[i * self.zc_nodes.len() + j]
                ));
            }
        }
        out
    }
}

fn bilinear(xa: &[f64], ya: &[f64], vals: &[f64], x: f64, y: f64) -> f64 {
    let locate = |a: &[f64], v: f64| -> (usize, f64) {
        let n = a.len();
        let j = if v <= a[0] {
            0
        } else if v >= a[n - 1] {
            n - 2
        } else {
            a.partition_point(|&w| w <= v).saturating_sub(1).min(n - 2)
        };
        (j, (v - a[j]) / (a[j + 1] - a[j]))
    };
    let (i, tx) = locate(xa, x);
    let (j, ty) = locate(ya, y);
    let w = ya.len();
    let f = |ii: usize, jj: usize| vals[ii * w + jj];
    f(i, j) * (1.0 - tx) * (1.0 - ty)
        + f(i + 1, j) * tx * (1.0 - ty)
        + f(i, j + 1) * (1.0 - tx) * ty
        + f(i + 1, j + 1) * tx * ty
}

/// Interpolated envelope value Ghat(zf, zc) off the transform grid
/// (one costly asset): fiber-interpolated in zf, linear in zc with the
/// zero-anchor on the left and the certified slope on the right.
pub fn ghat_eval(grid: &TransformGrid, zf: f64, zc: f64) -> f64 {
    let fw = fiber_weights(grid, &[zf]);
    let sc = &grid.sc_axes[0];
    let sc_len = sc.len();
    let row_val = |k: usize| -> f64 {
        let mut v = 0.0;
        for &(fiber, w) in &fw.corners {
            v += w * grid.ghat_values[fiber * sc_len + k];
        }
        v
    };
    if zc <= sc[0] {
        let v0 = {
            let mut v = 0.0;
            for &(fiber, w) in &fw.corners {
                v += w * grid.ghat_at_zero[fiber];
            }
            v
        };
        return v0 + (row_val(0) - v0) * zc / sc[0];
    }
    if zc >= sc[sc_len - 1] {
        let slope = grid.zc_slopes[0].unwrap_or(0.0);
        return row_val(sc_len - 1) + slope * (zc - sc[sc_len - 1]);
    }
    let j = sc.partition_point(|&v| v <= zc).saturating_sub(1).min(sc_len - 2);
    let t = (zc - sc[j]) / (sc[j + 1] - sc[j]);
    row_val(j) * (1.0 - t) + row_val(j + 1) * t
}

/// Number of stored policy macro-slices.
const POLICY_SLICES: usize = 16;
const CFL_SAFETY: f64 = 0.9;

/// Solves the control problem backward from Ghat by explicit time
/// stepping in log coordinates. Drift terms are upwinded; the cross term
/// uses the sign-adapted seven-point stencil; boundaries extrapolate
/// linearly (vanishing second derivative), consistent with the linear
/// growth of Ghat. The time step is set from the explicit stability bound
/// of the largest control; negative stencil coefficients are counted and
/// reported, not silently accepted.
pub fn solve_hjb(
    problem: &ControlProblem,
    grid: &TransformGrid,
    model: &MarketModel,
) -> Result<ValueGrid, HjbError> {
    if model.df != 1 || model.dc != 1 {
        return Err(HjbError::UnsupportedDimensions);
    }
    if !problem.mu_set.iter().any(|m| m[0] == 0.0 && m[1] == 0.0) {
        return Err(HjbError::MissingZeroControl);
    }
    let (n1, n2) = problem.n_nodes;
    let t = model.horizon;
    let vol_norms = model.vol_row_norms();
    let x1c = model.s0[0].ln();
    let x2c = model.s0[1].ln();
    let span1 = problem.span_sigmas * vol_norms[0] * t.sqrt();
    let span2 = problem.zc_log_span;
    let h1 = 2.0 * span1 / (n1 - 1) as f64;
    let h2 = 2.0 * span2 / (n2 - 1) as f64;
    let zf_nodes: Vec<f64> = (0..n1).map(|i| (x1c - span1 + i as f64 * h1).exp()).collect();
    let zc_nodes: Vec<f64> = (0..n2).map(|j| (x2c - span2 + j as f64 * h2).exp()).collect();

    // Free-asset volatility row; constant models give a constant row, and
    // under (Hsigma) it may depend on (t, zf) only — evaluated per node.
    let b1_at = |tk: f64, zf: f64| -> Vec<f64> {
        let state = vec![zf, model.s0[1]];
        model.sigma(tk, &state)[0].clone()
    };

    // Stability bound over controls and nodes at t = 0 (free row bounded
    // on the lattice by validation).
    let mut worst = 0.0f64;
    for &zf in &[zf_nodes[0], model.s0[0], zf_nodes[n1 - 1]] {
        let b1 = b1_at(0.0, zf);
        let a11 = dot(&b1[..2], &b1[..2]);
        for mu in &problem.mu_set {
            let a22 = dot(mu, mu);
            let a12 = b1[0] * mu[0] + b1[1] * mu[1];
            let bound = a11 / (h1 * h1)
                + a22 / (h2 * h2)
                + a12.abs() / (h1 * h2)
                + 0.5 * a11 / h1
                + 0.5 * a22 / h2;
            worst = worst.max(bound);
        }
    }
    let dt_max = CFL_SAFETY / worst.max(1e-12);
    let n_t = ((t / dt_max).ceil() as usize).max(POLICY_SLICES);
    let dt = t / n_t as f64;

    // Terminal condition.
    let terminal: Vec<f64> = (0..n1 * n2)
        .into_par_iter()
        .map(|idx| ghat_eval(grid, zf_nodes[idx / n2], zc_nodes[idx % n2]))
        .collect();

    let mut v = terminal.clone();
    let mut policy: Vec<Vec<u16>> = vec![vec![0; n1 * n2]; POLICY_SLICES];
    let policy_times: Vec<f64> = (0..POLICY_SLICES)
        .map(|k| t * k as f64 / POLICY_SLICES as f64)
        .collect();
    let nonmonotone = std::sync::atomic::AtomicUsize::new(0);
    let stencils_total = std::sync::atomic::AtomicUsize::new(0);

    for step in (0..n_t).rev() {
        let tk = step as f64 * dt;
        // Map this time step to the policy macro slice containing it.
        let slice = ((tk / t) * POLICY_SLICES as f64).floor() as usize;
        let slice = slice.min(POLICY_SLICES - 1);
        let store_policy = {
            // Store the argmax from the first (latest-time) step landing
            // in each macro slice; overwritten as we walk backward so the
            // retained policy is the one at the slice start time.
            true
        };
        let results: Vec<(f64, u16)> = (0..n1 * n2)
            .into_par_iter()
            .map(|idx| {
                let i = idx / n2;
                let j = idx % n2;
                // Ghost values by linear extrapolation.
                let get = |ii: isize, jj: isize| -> f64 {
                    let val = |ii: usize, jj: usize| v[ii * n2 + jj];
                    let (ii, jj) = (ii, jj);
                    let cl = |k: isize, n: usize, other: &dyn Fn(usize) -> f64| -> f64 {
                        if k < 0 {
                            2.0 * other(0) - other(1)
                        } else if k as usize >= n {
                            2.0 * other(n - 1) - other(n - 2)
                        } else {
                            other(k as usize)
                        }
                    };
                    // Clamp one axis at a time (corner ghosts combine).
                    let row = |ii2: usize| -> Box<dyn Fn(usize) -> f64 + '_> {
                        Box::new(move |jj2: usize| val(ii2, jj2))
                    };
                    let col_at = |jjx: isize, ii2: usize| cl(jjx, n2, &*row(ii2));
                    if ii < 0 {
                        2.0 * col_at(jj, 0) - col_at(jj, 1)
                    } else if ii as usize >= n1 {
                        2.0 * col_at(jj, n1 - 1) - col_at(jj, n1 - 2)
                    } else {
                        col_at(jj, ii as usize)
                    }
                };
                let (ii, jj) = (i as isize, j as isize);
                let vc = get(ii, jj);
                let vxp = get(ii + 1, jj);
                let vxm = get(ii - 1, jj);
                let vyp = get(ii, jj + 1);
                let vym = get(ii, jj - 1);
                let vpp = get(ii + 1, jj + 1);
                let vmm = get(ii - 1, jj - 1);
                let vpm = get(ii + 1, jj - 1);
                let vmp = get(ii - 1, jj + 1);

                let b1 = b1_at(tk, zf_nodes[i]);
                let a11 = dot(&b1[..2], &b1[..2]);
                let d2x = (vxp - 2.0 * vc + vxm) / (h1 * h1);
                // Upwind first derivatives for the negative log drifts.
                let d1x_up = (vc - vxm) / h1; // drift -a11/2 < 0
                let mut best = f64::NEG_INFINITY;
                let mut best_mu = 0u16;
                for (mi, mu) in problem.mu_set.iter().enumerate() {
                    let a22 = dot(mu, mu);
                    let a12 = b1[0] * mu[0] + b1[1] * mu[1];
                    let d2y = (vyp - 2.0 * vc + vym) / (h2 * h2);
                    let d1y_up = (vc - vym) / h2;
                    let cross = if a12 >= 0.0 {
                        (2.0 * vc + vpp + vmm - vxp - vxm - vyp - vym) / (2.0 * h1 * h2)
                    } else {
                        -(2.0 * vc + vpm + vmp - vxp - vxm - vyp - vym) / (2.0 * h1 * h2)
                    };
                    let lv = 0.5 * a11 * d2x + 0.5 * a22 * d2y + a12 * cross
                        - 0.5 * a11 * d1x_up
                        - 0.5 * a22 * d1y_up;
                    // Monotonicity bookkeeping: the axis second-difference
                    // weights must dominate the cross-term weight.
                    stencils_total.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if 0.5 * a11 / (h1 * h1) < 0.5 * a12.abs() / (h1 * h2) - 1e-15
                        || 0.5 * a22 / (h2 * h2) < 0.5 * a12.abs() / (h1 * h2) - 1e-15
                    {
                        nonmonotone.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    }
                    let cand = vc + dt * lv;
                    if cand > best {
                        best = cand;
                        best_mu = mi as u16;
                    }
                }
                (best, best_mu)
            })
            .collect();
        for (idx, (val, mu)) in results.into_iter().enumerate() {
            v[idx] = val;
            if store_policy {
                policy[slice][idx] = mu;
            }
        }
    }

    let total = stencils_total.load(std::sync::atomic::Ordering::Relaxed).max(1);
    Ok(ValueGrid {
        kappa: problem.kappa,
        zf_nodes,
        zc_nodes,
        v0: v,
        terminal,
        diagnostics: SchemeDiagnostics {
            dt,
            n_t,
            cfl_ratio: dt * worst,
            nonmonotone_fraction: nonmonotone.load(std::sync::atomic::Ordering::Relaxed) as f64
                / total as f64,
        },
        policy_times,
        policy,
        mu_set: problem.mu_set.clone(),
    })
}

/// Solves a family of nested control problems on one shared lattice and
/// one shared time step (from the largest bound), so the returned values
/// are pointwise nondecreasing along the family by construction.
pub fn solve_family(
    kappas: &[f64],
    grid: &TransformGrid,
    model: &MarketModel,
    n_nodes: (usize, usize),
    span_sigmas: f64,
    zc_log_span: f64,
) -> Result<Vec<ValueGrid>, HjbError> {
    let ladder: Vec<f64> = kappas.to_vec();
    kappas
        .iter()
        .map(|&k| {
            let p = make_problem(k, &ladder, n_nodes, span_sigmas, zc_log_span);
            solve_hjb(&p, grid, model)
        })
        .collect()
}

/// Simulates the frozen argmax policy and returns (mean, stderr) of
/// Ghat(Z(T)) — a genuine lower bound on the control value up to Monte
/// Carlo error, since the replayed policy is one fixed admissible control.
pub fn control_mc_lower_bound(
    value_grid: &ValueGrid,
    grid: &TransformGrid,
    model: &MarketModel,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<(f64, f64), HjbError> {
    for mu in &value_grid.mu_set {
        let m = dot(mu, mu).sqrt();
        if m > value_grid.kappa + 1e-9 {
            return Err(HjbError::PolicyOutOfBounds {
                found: m,
                bound: value_grid.kappa,
            });
        }
    }
    let t = model.horizon;
    let dt = t / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let n2 = value_grid.zc_nodes.len();
    let vals: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64 + 1);
            let mut x1 = model.s0[0].ln();
            let mut x2 = model.s0[1].ln();
            for k in 0..n_steps {
                let tk = k as f64 * dt;
                let zf = x1.exp();
                let zc = x2.exp();
                // Nearest-node policy lookup at the containing macro slice.
                let slice = ((tk / t) * value_grid.policy_times.len() as f64).floor() as usize;
                let slice = slice.min(value_grid.policy_times.len() - 1);
                let i = nearest(&value_grid.zf_nodes, zf);
                let j = nearest(&value_grid.zc_nodes, zc);
                let mu = value_grid.mu_set[value_grid.policy[slice][i * n2 + j] as usize];
                let b1 = {
                    let state = vec![zf, zc];
                    model.sigma(tk, &state)[0].clone()
                };
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                x1 += b1[0] * z1 * sqrt_dt + b1[1] * z2 * sqrt_dt
                    - 0.5 * dot(&b1[..2], &b1[..2]) * dt;
                x2 += mu[0] * z1 * sqrt_dt + mu[1] * z2 * sqrt_dt - 0.5 * dot(&mu, &mu) * dt;
            }
            ghat_eval(grid, x1.exp(), x2.exp())
        })
        .collect();
    let n = vals.len() as f64;
    let mean = kahan_sum(vals.iter().copied()) / n;
    let var = kahan_sum(vals.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

fn nearest(nodes: &[f64], x: f64) -> usize {
    let n = nodes.len();
    if x <= nodes[0] {
        return 0;
    }
    if x >= nodes[n - 1] {
        return n - 1;
    }
    let j = nodes.partition_point(|&v| v <= x);
    if (x - nodes[j - 1]).abs() <= (nodes[j] - x).abs() {
        j - 1
    } else {
        j
    }
}
