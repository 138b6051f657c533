//! Claim representation and the three payoff transforms: the worst-case
//! deflated value G over the polar section, its partial concave envelope
//! Ghat in the costly-price coordinates, and the conjugate C in the costly
//! holding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{dot, CostMatrix, PolarSection};

#[derive(Debug, Error)]
pub enum PayoffError {
    #[error("payoff is superlinear in costly asset {idx}: concave envelope is infinite")]
    EnvelopeInfinite { idx: usize },
    #[error("grid axis {axis} must be strictly increasing and positive")]
    BadAxis { axis: String },
    #[error("G values not filled before envelope computation")]
    MissingG,
    #[error("point must be strictly positive componentwise")]
    NonPositivePoint,
    #[error("admissibility bound (TA) fails at s = {s:?}")]
    TaViolated { s: Vec<f64> },
    #[error("dimension mismatch: {what}")]
    Dimension { what: String },
}

/// Extended real carrying +infinity as a legal value (the conjugate takes
/// it on infeasible slope directions). Negative infinity never occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::PosInf)
    }
}

/// Admissibility certificate: g(s) dominates -(c + delta_f . s^f, delta s^c)
/// in the cone order for all s.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaCertificate {
    pub c: f64,
    pub delta_f: Vec<f64>,
    pub delta: f64,
}

/// Asymptotic behaviour of Ghat in one costly-price coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZcGrowth {
    /// Ghat bounded in this coordinate (asymptotic slope 0).
    Bounded,
    /// Ghat grows at most linearly with the given asymptotic slope.
    Linear { slope: f64 },
    /// Superlinear growth: the envelope is +infinity everywhere.
    Superlinear,
}

impl ZcGrowth {
    /// Asymptotic slope; `None` means superlinear.
    pub fn slope(self) -> Option<f64> {
        match self {
            ZcGrowth::Bounded => Some(0.0),
            ZcGrowth::Linear { slope } => Some(slope),
            ZcGrowth::Superlinear => None,
        }
    }
}

/// Initial-wealth offset of the variant problem: replaces g by
/// `g(s) - (x[0], diag[sc0]^-1 diag[s^c] x_tail)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WealthOffset {
    /// (1+dc)-vector of endowed holdings.
    pub x: Vec<f64>,
    /// Initial costly prices S^c(0) used in the rescaling.
    pub sc0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PayoffKind {
    /// g = 0.
    Zero,
    /// Cash-settled digital-barrier call:
    /// g(s) = ([s^f_1 - strike]^+ 1{s^c_1 > barrier}, 0, ..., 0).
    DigitalBarrierCall { strike_f: f64, barrier_c: f64 },
    /// Plain call on the first free asset, no costly dependence:
    /// g(s) = ([s^f_1 - strike]^+, 0, ..., 0).
    CallOnFree { strike_f: f64 },
    /// Componentwise tables on a rectangular grid with multilinear
    /// interpolation; values are extended flat beyond the box (the growth
    /// certificates govern the transform tails).
    Tabulated {
        sf_axes: Vec<Vec<f64>>,
        sc_axes: Vec<Vec<f64>>,
        /// One table per wealth component, each of length
        /// prod(sf_axes lens) * prod(sc_axes lens), sf-major.
        values: Vec<Vec<f64>>,
    },
}

/// A contingent claim: payoff map plus the certificates the transforms need.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PayoffSpec {
    pub df: usize,
    pub dc: usize,
    pub kind: PayoffKind,
    pub growth: TaCertificate,
    /// Per-costly-asset growth of Ghat in s^c.
    pub zc_growth: Vec<ZcGrowth>,
    /// Optional Remark-1 style offset.
    pub offset: Option<WealthOffset>,
}

impl PayoffSpec {
    /// Evaluates g(s) as the (1+dc)-vector of target positions.
    pub fn eval(&self, sf: &[f64], sc: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 1 + self.dc];
        match &self.kind {
            PayoffKind::Zero => {}
            PayoffKind::DigitalBarrierCall {
                strike_f,
                barrier_c,
            } => {
                if sc[0] > *barrier_c {
                    out[0] = (sf[0] - strike_f).max(0.0);
                }
            }
            PayoffKind::CallOnFree { strike_f } => {
                out[0] = (sf[0] - strike_f).max(0.0);
            }
            PayoffKind::Tabulated {
                sf_axes,
                sc_axes,
                values,
            } => {
                for (comp, table) in values.iter().enumerate() {
                    out[comp] = multilinear(sf_axes, sc_axes, table, sf, sc);
                }
            }
        }
        if let Some(off) = &self.offset {
            out[0] -= off.x[0];
            for i in 0..self.dc {
                out[1 + i] -= off.x[1 + i] * sc[i] / off.sc0[i];
            }
        }
        out
    }

    /// Effective asymptotic slope of Ghat in costly coordinate `i`,
    /// accounting for the offset's linear term; `None` = superlinear.
    pub fn effective_zc_slope(&self, i: usize) -> Option<f64> {
        let base = self.zc_growth[i].slope()?;
        let shift = self
            .offset
            .as_ref()
            .map(|off| off.x[1 + i] / off.sc0[i])
            .unwrap_or(0.0);
        Some(base - shift)
    }

    /// Effective TA certificate including the offset shift.
    pub fn effective_growth(&self) -> TaCertificate {
        let mut g = self.growth.clone();
        if let Some(off) = &self.offset {
            g.c += off.x[0].abs();
            for i in 0..self.dc {
                g.delta += (off.x[1 + i] / off.sc0[i]).abs();
            }
        }
        g
    }

    /// Checks the admissibility bound (TA) on a sampled price grid:
    /// `g(s) >= -(c + delta_f . s^f, delta s^c)` in the cone order.
    pub fn check_ta(
        &self,
        section: &PolarSection,
        sf_samples: &[Vec<f64>],
        sc_samples: &[Vec<f64>],
    ) -> Result<(), PayoffError> {
        let growth = self.effective_growth();
        for sf in sf_samples {
            for sc in sc_samples {
                let g = self.eval(sf, sc);
                let mut bound = vec![0.0; 1 + self.dc];
                bound[0] = -(growth.c + dot(&growth.delta_f, sf));
                for i in 0..self.dc {
                    bound[1 + i] = -growth.delta * sc[i];
                }
                let ok = section
                    .cone_geq(&g, &bound, 1e-9)
                    .map_err(|_| PayoffError::Dimension {
                        what: "payoff vs section".into(),
                    })?;
                if !ok {
                    let mut s = sf.clone();
                    s.extend(sc.iter());
                    return Err(PayoffError::TaViolated { s });
                }
            }
        }
        Ok(())
    }
}

fn multilinear(
    sf_axes: &[Vec<f64>],
    sc_axes: &[Vec<f64>],
    table: &[f64],
    sf: &[f64],
    sc: &[f64],
) -> f64 {
    // Gather (axis, coord) pairs in sf-major order.
    let mut corners: Vec<(usize, usize, f64)> = Vec::new(); // (lo_idx, axis_len, weight_hi)
    let push = |axis: &Vec<f64>, x: f64, corners: &mut Vec<(usize, usize, f64)>| {
        let n = axis.len();
        if n == 1 {
            corners.push((0, 1, 0.0));
            return;
        }
        // Clamp (flat extension beyond the box).
        let x = x.clamp(axis[0], axis[n - 1]);
        let j = match axis.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(j) => j.min(n - 2),
            Err(j) => j.saturating_sub(1).min(n - 2),
        };
        let w = (x - axis[j]) / (axis[j + 1] - axis[j]);
        corners.push((j, n, w));
    };
    for (a, &x) in sf_axes.iter().zip(sf) {
        push(a, x, &mut corners);
    }
    for (a, &x) in sc_axes.iter().zip(sc) {
        push(a, x, &mut corners);
    }
    let dims = corners.len();
    let mut acc = 0.0;
    for mask in 0..(1usize << dims) {
        let mut w = 1.0;
        let mut idx = 0usize;
        for (k, &(lo, len, wh)) in corners.iter().enumerate() {
            let hi = mask & (1 << k) != 0;
            let j = if hi { (lo + 1).min(len - 1) } else { lo };
            w *= if hi { wh } else { 1.0 - wh };
            idx = idx * len + j;
        }
        if w != 0.0 {
            acc += w * table[idx];
        }
    }
    acc
}

/// Refinement control for the Lambda-sup in `transform_g`. Point sets are
/// nested across levels, so the computed sup is nondecreasing in `level`.
#[derive(Debug, Clone, Copy)]
pub struct GSupRefinement {
    pub level: u32,
    /// One coordinate-ascent pass after the grid sweep.
    pub ascent: bool,
}

impl Default for GSupRefinement {
    fn default() -> Self {
        Self {
            level: 0,
            ascent: true,
        }
    }
}

const TENSOR_CAP: usize = 100_000;

/// G(z) = sup over xi in Lambda of `xi . g(z^f, diag[xi_tail]^-1 z^c)`.
///
/// The sup is approximated at all vertices plus a stick-breaking tensor
/// grid over vertex convex combinations (xi enters g's argument
/// nonlinearly, so the sup need not sit at a vertex), then one local
/// coordinate-ascent pass. When the tensor would exceed a size cap the
/// sweep falls back to per-coordinate sections through the incumbent.
pub fn transform_g(
    payoff: &PayoffSpec,
    section: &PolarSection,
    z: &[f64],
    refine: GSupRefinement,
) -> f64 {
    debug_assert_eq!(z.len(), payoff.df + payoff.dc);
    let (zf, zc) = z.split_at(payoff.df);
    let verts = section.vertices();
    let eval_xi = |xi: &[f64]| -> f64 {
        let sc_arg: Vec<f64> = zc.iter().zip(&xi[1..]).map(|(&v, &x)| v / x).collect();
        let g = payoff.eval(zf, &sc_arg);
        dot(xi, &g)
    };
    let mut best = f64::NEG_INFINITY;
    for v in verts {
        best = best.max(eval_xi(v));
    }
    let free = verts.len().saturating_sub(1);
    if free == 0 {
        return best;
    }
    let n = 32usize * (1 << refine.level) + 1;
    let combo = |u: &[f64]| -> Vec<f64> {
        // Stick-breaking map from the unit cube to simplex weights.
        let k = verts.len();
        let mut xi = vec![0.0; verts[0].len()];
        let mut remaining = 1.0;
        for (i, vert) in verts.iter().enumerate() {
            let w = if i + 1 == k { remaining } else { remaining * u[i] };
            if i + 1 < k {
                remaining -= w;
            }
            for (x, &vv) in xi.iter_mut().zip(vert) {
                *x += w * vv;
            }
        }
        xi
    };
    let eval_u = |u: &[f64]| eval_xi(&combo(u));

    let mut best_u = vec![0.0; free];
    let tensor_size = (n as f64).powi(free as i32);
    if tensor_size <= TENSOR_CAP as f64 {
        let mut u = vec![0.0; free];
        let mut counter = vec![0usize; free];
        loop {
            for (ui, &ci) in u.iter_mut().zip(&counter) {
                *ui = ci as f64 / (n - 1) as f64;
            }
            let v = eval_u(&u);
            if v > best {
                best = v;
                best_u.copy_from_slice(&u);
            }
            // Odometer increment.
            let mut d = 0;
            loop {
                counter[d] += 1;
                if counter[d] < n {
                    break;
                }
                counter[d] = 0;
                d += 1;
                if d == free {
                    break;
                }
            }
            if d == free {
                break;
            }
        }
    } else {
        // Per-coordinate sections through the incumbent point.
        for dim in 0..free {
            let mut u = best_u.clone();
            for step in 0..n {
                u[dim] = step as f64 / (n - 1) as f64;
                let v = eval_u(&u);
                if v > best {
                    best = v;
                    best_u.copy_from_slice(&u);
                }
            }
        }
    }
    if refine.ascent {
        // One golden-section pass per coordinate; only improvements kept.
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for dim in 0..free {
            let mut u = best_u.clone();
            let (mut a, mut b) = (0.0f64, 1.0f64);
            for _ in 0..40 {
                let x1 = b - phi * (b - a);
                let x2 = a + phi * (b - a);
                u[dim] = x1;
                let f1 = eval_u(&u);
                u[dim] = x2;
                let f2 = eval_u(&u);
                if f1 >= f2 {
                    b = x2;
                } else {
                    a = x1;
                }
            }
            u[dim] = 0.5 * (a + b);
            let v = eval_u(&u);
            if v > best {
                best = v;
                best_u = u;
            }
        }
    }
    best
}

/// Grid axes for the transform tables. All axes strictly increasing and
/// positive; sc axes are log-spaced around a reference level with special
/// nodes (barriers, strikes) inserted exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub sf_axes: Vec<Vec<f64>>,
    pub sc_axes: Vec<Vec<f64>>,
}

/// Log-spaced axis over [lo, hi] with `n` nodes and `extra` nodes inserted
/// exactly (when they fall inside the range).
pub fn log_axis(lo: f64, hi: f64, n: usize, extra: &[f64]) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut nodes: Vec<f64> = (0..n)
        .map(|k| (llo + (lhi - llo) * k as f64 / (n - 1) as f64).exp())
        .collect();
    for &x in extra {
        if x > lo && x < hi {
            nodes.push(x);
        }
    }
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * b.abs().max(1.0));
    nodes
}

/// Truncation span of the costly-price axes around the reference level:
/// [q / SC_SPAN, q * SC_SPAN].
pub const SC_SPAN: f64 = 50.0;

/// Default grid for a payoff: free axes sized from the model vols, costly
/// axes around the per-asset reference levels, with catalog-specific nodes
/// (strike, deflated barrier) inserted exactly.
pub fn default_grid_spec(
    payoff: &PayoffSpec,
    costs: &CostMatrix,
    s0: &[f64],
    vol_norms: &[f64],
    horizon: f64,
    sf_nodes: usize,
    sc_nodes: usize,
    sc_ref: &[f64],
) -> GridSpec {
    let mut sf_extra: Vec<f64> = Vec::new();
    let mut sc_extra: Vec<f64> = Vec::new();
    match &payoff.kind {
        PayoffKind::DigitalBarrierCall {
            strike_f,
            barrier_c,
        } => {
            sf_extra.push(*strike_f);
            // Deflated barrier K2 / (1 + lambda[costly -> cash]); a node
            // just above resolves the strict-inequality step exactly.
            let deflated = barrier_c / (1.0 + costs.rate(1, 0));
            sc_extra.push(deflated);
            sc_extra.push(deflated * (1.0 + 1e-9));
            sc_extra.push(*barrier_c);
            sc_extra.push(barrier_c * (1.0 + 1e-9));
        }
        PayoffKind::CallOnFree { strike_f } => sf_extra.push(*strike_f),
        _ => {}
    }
    let sf_axes = (0..payoff.df)
        .map(|i| {
            let span = (6.0 * vol_norms[i] * horizon.sqrt()).max(0.5);
            log_axis(
                s0[i] * (-span).exp(),
                s0[i] * span.exp(),
                sf_nodes,
                &sf_extra,
            )
        })
        .collect();
    let sc_axes = (0..payoff.dc)
        .map(|i| log_axis(sc_ref[i] / SC_SPAN, sc_ref[i] * SC_SPAN, sc_nodes, &sc_extra))
        .collect();
    GridSpec { sf_axes, sc_axes }
}

/// Tables of G and Ghat on the product grid, sf-fiber major.
#[derive(Debug, Clone)]
pub struct TransformGrid {
    pub sf_axes: Vec<Vec<f64>>,
    pub sc_axes: Vec<Vec<f64>>,
    pub df: usize,
    pub dc: usize,
    /// G values, `fiber * sc_len + sc_index`.
    pub g_values: Vec<f64>,
    /// Envelope values, same layout; empty until `concave_envelope` runs.
    pub ghat_values: Vec<f64>,
    /// For dc = 1: envelope value extended to s^c -> 0+ per fiber
    /// (right-limit convention along the grid).
    pub ghat_at_zero: Vec<f64>,
    /// Effective asymptotic slopes of Ghat per costly coordinate
    /// (None = superlinear).
    pub zc_slopes: Vec<Option<f64>>,
}

impl TransformGrid {
    pub fn n_fibers(&self) -> usize {
        self.sf_axes.iter().map(|a| a.len()).product()
    }

    pub fn sc_len(&self) -> usize {
        self.sc_axes.iter().map(|a| a.len()).product()
    }

    /// The sf point of a fiber index (sf-major odometer order).
    pub fn fiber_point(&self, fiber: usize) -> Vec<f64> {
        let mut idx = fiber;
        let mut rev = Vec::with_capacity(self.df);
        for a in self.sf_axes.iter().rev() {
            rev.push(a[idx % a.len()]);
            idx /= a.len();
        }
        rev.reverse();
        rev
    }

    /// The sc point of an in-fiber index.
    pub fn sc_point(&self, k: usize) -> Vec<f64> {
        let mut idx = k;
        let mut rev = Vec::with_capacity(self.dc);
        for a in self.sc_axes.iter().rev() {
            rev.push(a[idx % a.len()]);
            idx /= a.len();
        }
        rev.reverse();
        rev
    }

    pub fn g_fiber(&self, fiber: usize) -> &[f64] {
        let w = self.sc_len();
        &self.g_values[fiber * w..(fiber + 1) * w]
    }

    pub fn ghat_fiber(&self, fiber: usize) -> &[f64] {
        let w = self.sc_len();
        &self.ghat_values[fiber * w..(fiber + 1) * w]
    }
}

/// Fills the G table over the product grid (parallel over sf fibers).
pub fn compute_g_values(
    payoff: &PayoffSpec,
    section: &PolarSection,
    spec: &GridSpec,
    refine: GSupRefinement,
) -> Result<TransformGrid, PayoffError> {
    for (i, a) in spec.sf_axes.iter().chain(spec.sc_axes.iter()).enumerate() {
        if a.is_empty() || a[0] <= 0.0 || a.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PayoffError::BadAxis {
                axis: format!("{i}"),
            });
        }
    }
    let mut grid = TransformGrid {
        sf_axes: spec.sf_axes.clone(),
        sc_axes: spec.sc_axes.clone(),
        df: payoff.df,
        dc: payoff.dc,
        g_values: Vec::new(),
        ghat_values: Vec::new(),
        ghat_at_zero: Vec::new(),
        zc_slopes: (0..payoff.dc).map(|i| payoff.effective_zc_slope(i)).collect(),
    };
    let n_fibers = grid.n_fibers();
    let sc_len = grid.sc_len();
    let grid_ref = &grid;
    let values: Vec<f64> = (0..n_fibers)
        .into_par_iter()
        .flat_map_iter(|fiber| {
            let sf = grid_ref.fiber_point(fiber);
            (0..sc_len).map(move |k| {
                let sc = grid_ref.sc_point(k);
                let mut z = sf.clone();
                z.extend(sc);
                transform_g(payoff, section, &z, refine)
            })
        })
        .collect();
    grid.g_values = values;
    Ok(grid)
}

/// Computes Ghat from G. dc = 1 uses the exact upper-hull monotone chain
/// per fiber, anchored at s^c -> 0 (right-limit convention) and extended
/// past the truncation bound by the certified asymptotic slope. dc >= 2
/// uses the discrete biconjugate over the sc nodes: two successive
/// discrete conjugations, which yield the smallest concave grid-majorant
/// representable with the sampled slopes.
pub fn concave_envelope(grid: &mut TransformGrid) -> Result<(), PayoffError> {
    if grid.g_values.is_empty() {
        return Err(PayoffError::MissingG);
    }
    for (idx, s) in grid.zc_slopes.iter().enumerate() {
        if s.is_none() {
            return Err(PayoffError::EnvelopeInfinite { idx });
        }
    }
    let n_fibers = grid.n_fibers();
    let sc_len = grid.sc_len();
    let mut ghat = vec![0.0; n_fibers * sc_len];
    let mut ghat0 = vec![0.0; n_fibers];
    if grid.dc == 1 {
        let xs = &grid.sc_axes[0];
        let tail_slope = grid.zc_slopes[0].unwrap();
        let results: Vec<(Vec<f64>, f64)> = (0..n_fibers)
            .into_par_iter()
            .map(|fiber| upper_hull_fiber(xs, grid.g_fiber(fiber), tail_slope))
            .collect();
        for (fiber, (vals, v0)) in results.into_iter().enumerate() {
            ghat[fiber * sc_len..(fiber + 1) * sc_len].copy_from_slice(&vals);
            ghat0[fiber] = v0;
        }
    } else {
        let points: Vec<Vec<f64>> = (0..sc_len).map(|k| grid.sc_point(k)).collect();
        let slopes = slope_sets(grid, &points);
        let results: Vec<Vec<f64>> = (0..n_fibers)
            .into_par_iter()
            .map(|fiber| discrete_biconjugate(&points, grid.g_fiber(fiber), &slopes))
            .collect();
        for (fiber, vals) in results.into_iter().enumerate() {
            ghat[fiber * sc_len..(fiber + 1) * sc_len].copy_from_slice(&vals);
        }
    }
    grid.ghat_values = ghat;
    grid.ghat_at_zero = ghat0;
    Ok(())
}

/// Upper concave hull of {(0, g[0])} ∪ {(x_k, g_k)} ∪ tail point, evaluated
/// back at the nodes. Returns (hull values at nodes, hull value at 0).
fn upper_hull_fiber(xs: &[f64], g: &[f64], tail_slope: f64) -> (Vec<f64>, f64) {
    let n = xs.len();
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n + 2);
    // Left anchor at s^c = 0: linear continuation of the first segment.
    // This leaves concave data untouched (the first quotient is the
    // largest, so interior hull values are unaffected) while giving the
    // correct chord-from-zero behaviour for barrier-type steps.
    let anchor = if n >= 2 {
        g[0] - (g[1] - g[0]) / (xs[1] - xs[0]) * xs[0]
    } else {
        g[0]
    };
    pts.push((0.0, anchor));
    for (x, v) in xs.iter().zip(g) {
        pts.push((*x, *v));
    }
    let last = xs[n - 1];
    let far = last * 1e6;
    pts.push((far, g[n - 1] + tail_slope * (far - last)));
    // Monotone chain, upper hull (left to right, right turns removed).
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let eval = |x: f64| -> f64 {
        let mut j = hull.partition_point(|p| p.0 <= x);
        if j == 0 {
            j = 1;
        }
        if j >= hull.len() {
            j = hull.len() - 1;
        }
        let (x0, y0) = hull[j - 1];
        let (x1, y1) = hull[j];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    };
    (xs.iter().map(|&x| eval(x)).collect(), eval(0.0))
}

/// Candidate slope grids per sc dimension for the discrete biconjugate:
/// all consecutive difference quotients observed in the data, thinned.
fn slope_sets(grid: &TransformGrid, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dc = grid.dc;
    let sc_len = grid.sc_len();
    let n_fibers = grid.n_fibers();
    let mut sets: Vec<Vec<f64>> = vec![Vec::new(); dc];
    // Strides of each sc dimension in the in-fiber index.
    let mut strides = vec![1usize; dc];
    for d in (0..dc.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * grid.sc_axes[d + 1].len();
    }
    for fiber in 0..n_fibers {
        let gv = grid.g_fiber(fiber);
        for d in 0..dc {
            let len = grid.sc_axes[d].len();
            for k in 0..sc_len {
                let pos = (k / strides[d]) % len;
                if pos + 1 < len {
                    let k2 = k + strides[d];
                    let dx = points[k2][d] - points[k][d];
                    sets[d].push((gv[k2] - gv[k]) / dx);
                }
            }
        }
    }
    for s in sets.iter_mut() {
        s.sort_by(f64::total_cmp);
        s.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * (b.abs().max(1.0)));
        // Thin to a manageable set while keeping extremes.
        const CAP: usize = 64;
        if s.len() > CAP {
            let step = s.len() as f64 / CAP as f64;
            let mut thin: Vec<f64> = (0..CAP).map(|i| s[(i as f64 * step) as usize]).collect();
            thin.push(*s.last().unwrap());
            *s = thin;
        }
    }
    sets
}

fn discrete_biconjugate(points: &[Vec<f64>], g: &[f64], slopes: &[Vec<f64>]) -> Vec<f64> {
    // Enumerate the slope tensor.
    let dims: Vec<usize> = slopes.iter().map(|s| s.len()).collect();
    let total: usize = dims.iter().product();
    let mut conj = Vec::with_capacity(total);
    let mut ys: Vec<Vec<f64>> = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut y = vec![0.0; dims.len()];
        for d in (0..dims.len()).rev() {
            y[d] = slopes[d][idx % dims[d]];
            idx /= dims[d];
        }
        // Concave conjugate: the infimum makes x.y - conj(y) an affine
        // majorant of g for every slope y.
        let c = points
            .iter()
            .zip(g)
            .map(|(x, &v)| dot(x, &y) - v)
            .fold(f64::INFINITY, f64::min);
        conj.push(c);
        ys.push(y);
    }
    points
        .iter()
        .map(|x| {
            ys.iter()
                .zip(&conj)
                .map(|(y, &c)| dot(x, y) - c)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Precomputed multilinear interpolation weights of an sf point across
/// fibers (log-sf interpolation inside the grid, linear extrapolation in
/// sf beyond it via the two edge fibers).
#[derive(Debug, Clone)]
pub struct FiberWeights {
    /// (fiber index, weight) pairs; weights may fall outside [0,1] when
    /// extrapolating.
    pub corners: Vec<(usize, f64)>,
}

pub fn fiber_weights(grid: &TransformGrid, sf: &[f64]) -> FiberWeights {
    // Per-dim (lo index, hi weight), allowing extrapolation weights.
    let mut per_dim: Vec<(usize, f64)> = Vec::with_capacity(grid.df);
    for (a, &x) in grid.sf_axes.iter().zip(sf) {
        let n = a.len();
        if n == 1 {
            per_dim.push((0, 0.0));
            continue;
        }
        if x <= a[0] {
            // Linear in sf off the left edge.
            per_dim.push((0, (x - a[0]) / (a[1] - a[0])));
        } else if x >= a[n - 1] {
            per_dim.push((n - 2, (x - a[n - 2]) / (a[n - 1] - a[n - 2])));
        } else {
            let lx = x.ln();
            let j = a.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
            let w = (lx - a[j].ln()) / (a[j + 1].ln() - a[j].ln());
            per_dim.push((j, w));
        }
    }
    let mut corners = vec![(0usize, 1.0f64)];
    for (d, &(lo, w)) in per_dim.iter().enumerate() {
        let len = grid.sf_axes[d].len();
        let mut next = Vec::with_capacity(corners.len() * 2);
        for &(idx, cw) in &corners {
            if len == 1 {
                next.push((idx * len, cw));
                continue;
            }
            if cw * (1.0 - w) != 0.0 || w == 0.0 {
                next.push((idx * len + lo, cw * (1.0 - w)));
            }
            if cw * w != 0.0 {
                next.push((idx * len + lo + 1, cw * w));
            }
        }
        corners = next;
    }
    FiberWeights { corners }
}

/// C(sf; Delta) = sup over s^c of Ghat(sf, s^c) - Delta . s^c, computed over
/// the sc grid (plus the zero-limit anchor when dc = 1) with the certified
/// tail rule: any coordinate whose asymptotic slope exceeds Delta_i makes
/// the conjugate +infinity.
pub fn conjugate_c(grid: &TransformGrid, sf: &[f64], delta: &[f64]) -> ExtReal {
    conjugate_with_weights(grid, &fiber_weights(grid, sf), delta)
}

pub fn conjugate_with_weights(
    grid: &TransformGrid,
    fw: &FiberWeights,
    delta: &[f64],
) -> ExtReal {
    if !conjugate_domain_ok(grid, delta) {
        return ExtReal::PosInf;
    }
    let sc_len = grid.sc_len();
    let mut best = f64::NEG_INFINITY;
    for k in 0..sc_len {
        let sc = grid.sc_point(k);
        let mut v = 0.0;
        for &(fiber, w) in &fw.corners {
            if w != 0.0 {
                v += w * grid.ghat_values[fiber * sc_len + k];
            }
        }
        best = best.max(v - dot(&sc, delta));
    }
    if !grid.ghat_at_zero.is_empty() {
        let mut v0 = 0.0;
        for &(fiber, w) in &fw.corners {
            if w != 0.0 {
                v0 += w * grid.ghat_at_zero[fiber];
            }
        }
        best = best.max(v0);
    }
    ExtReal::Finite(best)
}

/// True iff the conjugate is finite at this slope per the growth
/// certificates.
pub fn conjugate_domain_ok(grid: &TransformGrid, delta: &[f64]) -> bool {
    grid.zc_slopes.iter().zip(delta).all(|(s, &d)| match s {
        Some(slope) => *slope <= d + 1e-12,
        None => false,
    })
}

/// Fast conjugate for dc = 1 with a precomputed interpolated fiber.
/// `ghat_row` must contain the interpolated Ghat values over the sc nodes
/// and `ghat0` the zero-limit value.
pub fn conjugate_row_1d(sc_nodes: &[f64], ghat_row: &[f64], ghat0: f64, delta: f64) -> f64 {
    let mut best = ghat0;
    for (x, v) in sc_nodes.iter().zip(ghat_row) {
        best = best.max(v - delta * x);
    }
    best
}
