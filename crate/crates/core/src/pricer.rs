//! The outer convex minimization over the constant costly holding: the
//! super-replication price is `min over Delta` of the expected residual
//! conjugate claim plus the worst-vertex acquisition cost of Delta.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{dot, CostMatrix, PolarSection};
use crate::linalg::kahan_sum;
use crate::market::{lognormal_digital, simulate, MarketError, MarketModel, PathBatch, Scheme};
use crate::payoff::{
    compute_g_values, concave_envelope, conjugate_domain_ok, default_grid_spec, fiber_weights,
    ExtReal, FiberWeights, GSupRefinement, PayoffError, PayoffSpec, TransformGrid, WealthOffset,
};

#[derive(Debug, Error)]
pub enum PriceError {
    #[error("cone construction failed: {0}")]
    Cone(#[from] crate::cone::ConeError),
    #[error("transform failed: {0}")]
    Payoff(#[from] PayoffError),
    #[error("simulation failed: {0}")]
    Market(#[from] MarketError),
    #[error("objective unbounded below: growth certificates inconsistent with payoff")]
    UnboundedBelow,
    #[error("no finite direction: the conjugate is +infinity for every holding")]
    NoFiniteDomain,
}

/// Optimizer regime diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Minimizer strictly inside the finite domain.
    Interior,
    /// Minimizer at Delta = 0 (the intrinsic buy-and-hold boundary case).
    BoundaryZero,
    /// Minimizer pinned to the finite-domain boundary by +infinity walls.
    InfeasibleDirection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceReport {
    /// Super-replication price, currency.
    pub price: f64,
    /// Optimal constant holding of each costly asset, units.
    pub delta_hat: Vec<f64>,
    /// Vertex attaining the acquisition-cost supremum at `delta_hat`.
    pub xi_hat: Vec<f64>,
    /// Sampled (Delta, objective) pairs around the optimum.
    pub objective_curve: Vec<(Vec<f64>, f64)>,
    /// Standard error of the Monte Carlo expectation term at the optimum.
    pub mc_stderr: f64,
    pub regime: Regime,
    /// True when the objective varies by < 1e-10 along a sampled segment
    /// through the reported minimizer (the argmin is a face, not a point).
    pub flat_minimizer: bool,
    /// Initial-wealth offset of the variant problem, if any.
    pub offset_x: Option<Vec<f64>>,
    /// Expectation term and cost term at the optimum (price = sum).
    pub expectation_term: f64,
    pub cost_term: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Worst-vertex acquisition cost `sup over xi in Lambda` of
/// `xi_tail . diag[Delta] sc0`, with the attaining vertex (lexicographically
/// smallest on ties; vertices are stored lex-sorted).
pub fn initial_cost(delta: &[f64], section: &PolarSection, sc0: &[f64]) -> (f64, Vec<f64>) {
    let mut best = f64::NEG_INFINITY;
    let mut best_v = 0usize;
    for (k, v) in section.vertices().iter().enumerate() {
        let val: f64 = delta
            .iter()
            .zip(sc0)
            .zip(&v[1..])
            .map(|((&d, &s), &x)| d * s * x)
            .sum();
        if k == 0 || val > best + 1e-15 * (1.0 + best.abs()) {
            best = val;
            best_v = k;
        }
    }
    (best, section.vertices()[best_v].clone())
}

/// Precomputed state for repeated objective evaluations against one shared
/// path batch (common random numbers): the per-sample sf interpolation
/// weights never change across Delta.
pub struct ObjectiveEngine<'a> {
    pub grid: &'a TransformGrid,
    pub section: &'a PolarSection,
    pub sc0: &'a [f64],
    weights: Vec<FiberWeights>,
    sc_points: Vec<Vec<f64>>,
}

impl<'a> ObjectiveEngine<'a> {
    pub fn new(
        grid: &'a TransformGrid,
        batch: &PathBatch,
        section: &'a PolarSection,
        sc0: &'a [f64],
    ) -> Self {
        let weights: Vec<FiberWeights> = (0..batch.n_paths)
            .into_par_iter()
            .map(|p| fiber_weights(grid, batch.terminal_sf(p)))
            .collect();
        let sc_points = (0..grid.sc_len()).map(|k| grid.sc_point(k)).collect();
        Self {
            grid,
            section,
            sc0,
            weights,
            sc_points,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.weights.len()
    }

    /// Per-sample conjugate values at `delta` (finite domain assumed).
    fn sample_values(&self, delta: &[f64]) -> Vec<f64> {
        let sc_len = self.grid.sc_len();
        self.weights
            .par_iter()
            .map(|fw| {
                let mut best = f64::NEG_INFINITY;
                for k in 0..sc_len {
                    let mut v = 0.0;
                    for &(fiber, w) in &fw.corners {
                        v += w * self.grid.ghat_values[fiber * sc_len + k];
                    }
                    best = best.max(v - dot(&self.sc_points[k], delta));
                }
                if !self.grid.ghat_at_zero.is_empty() {
                    let mut v0 = 0.0;
                    for &(fiber, w) in &fw.corners {
                        v0 += w * self.grid.ghat_at_zero[fiber];
                    }
                    best = best.max(v0);
                }
                best
            })
            .collect()
    }

    /// Monte Carlo objective: mean conjugate value plus acquisition cost.
    pub fn objective(&self, delta: &[f64]) -> ExtReal {
        if !conjugate_domain_ok(self.grid, delta) {
            return ExtReal::PosInf;
        }
        let vals = self.sample_values(delta);
        let mean = kahan_sum(vals.iter().copied()) / vals.len() as f64;
        ExtReal::Finite(mean + initial_cost(delta, self.section, self.sc0).0)
    }

    /// Expectation term, its standard error, and the cost term separately.
    pub fn objective_parts(&self, delta: &[f64]) -> Option<(f64, f64, f64)> {
        if !conjugate_domain_ok(self.grid, delta) {
            return None;
        }
        let vals = self.sample_values(delta);
        let n = vals.len() as f64;
        let mean = kahan_sum(vals.iter().copied()) / n;
        let var = kahan_sum(vals.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
        Some((mean, (var / n).sqrt(), initial_cost(delta, self.section, self.sc0).0))
    }

    /// Subgradient of the objective via the envelope theorem: minus the
    /// per-sample conjugate argmax sc (smallest node on ties), plus the
    /// cost-term vertex gradient.
    pub fn subgradient(&self, delta: &[f64]) -> Vec<f64> {
        let sc_len = self.grid.sc_len();
        let dc = self.grid.dc;
        let partials: Vec<Vec<f64>> = self
            .weights
            .par_iter()
            .map(|fw| {
                let mut best = f64::NEG_INFINITY;
                let mut best_k = usize::MAX; // MAX = the zero-limit anchor
                for k in 0..sc_len {
                    let mut v = 0.0;
                    for &(fiber, w) in &fw.corners {
                        v += w * self.grid.ghat_values[fiber * sc_len + k];
                    }
                    let val = v - dot(&self.sc_points[k], delta);
                    if val > best {
                        best = val;
                        best_k = k;
                    }
                }
                if !self.grid.ghat_at_zero.is_empty() {
                    let mut v0 = 0.0;
                    for &(fiber, w) in &fw.corners {
                        v0 += w * self.grid.ghat_at_zero[fiber];
                    }
                    if v0 > best {
                        best_k = usize::MAX;
                    }
                }
                if best_k == usize::MAX {
                    vec![0.0; dc]
                } else {
                    self.sc_points[best_k].iter().map(|x| -x).collect()
                }
            })
            .collect();
        let n = partials.len() as f64;
        let mut grad = vec![0.0; dc];
        for (i, g) in grad.iter_mut().enumerate() {
            *g = kahan_sum(partials.iter().map(|p| p[i])) / n;
        }
        let (_, vert) = initial_cost(delta, self.section, self.sc0);
        for i in 0..dc {
            grad[i] += vert[1 + i] * self.sc0[i];
        }
        grad
    }
}

#[derive(Debug, Clone)]
pub struct PriceOptions {
    pub n_paths: usize,
    /// Steps for the pricing batch; the objective only reads terminal
    /// states, so 1 exact-lognormal step suffices for constant vol.
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub sf_nodes: usize,
    pub sc_nodes: usize,
    pub refine: GSupRefinement,
}

impl Default for PriceOptions {
    fn default() -> Self {
        Self {
            n_paths: 200_000,
            n_steps: 1,
            seed: 42,
            scheme: Scheme::ExactLognormal,
            sf_nodes: 257,
            sc_nodes: 129,
            refine: GSupRefinement::default(),
        }
    }
}

/// Everything `price` builds along the way, for reuse by the hedger and
/// the control lower bound.
pub struct PricingContext {
    pub section: PolarSection,
    pub grid: TransformGrid,
    pub batch: PathBatch,
    pub report: PriceReport,
}

const DELTA_HARD_CAP: f64 = 1e8;

/// Prices the claim: builds the polar section, the transform tables, a
/// common-random-numbers terminal batch, and minimizes the convex
/// objective over the finite domain of the conjugate.
pub fn price(
    payoff: &PayoffSpec,
    model: &MarketModel,
    costs: &CostMatrix,
    options: &PriceOptions,
) -> Result<PricingContext, PriceError> {
    let section = PolarSection::build(costs)?;
    let sc0 = model.s0[model.df..].to_vec();
    let spec = default_grid_spec(
        payoff,
        costs,
        &model.s0,
        &model.vol_row_norms(),
        model.horizon,
        options.sf_nodes,
        options.sc_nodes,
        &sc0,
    );
    let mut grid = compute_g_values(payoff, &section, &spec, options.refine)?;
    concave_envelope(&mut grid)?;
    let batch = simulate(model, options.n_paths, options.n_steps, options.seed, options.scheme)?;
    let engine = ObjectiveEngine::new(&grid, &batch, &section, &sc0);

    // Finite domain: per-coordinate half-lines from the growth slopes.
    let lower: Vec<f64> = grid
        .zc_slopes
        .iter()
        .map(|s| s.ok_or(PriceError::NoFiniteDomain))
        .collect::<Result<_, _>>()?;

    let dc = payoff.dc;
    let (delta_hat, flat) = if dc == 1 {
        minimize_1d(&engine, lower[0])?
    } else {
        minimize_subgradient(&engine, &lower)?
    };

    // Snap to exactly zero when the boundary case is active.
    let delta_hat = snap_zero(&engine, delta_hat, &lower);
    let (expectation_term, mc_stderr, cost_term) = engine
        .objective_parts(&delta_hat)
        .ok_or(PriceError::NoFiniteDomain)?;
    let price_val = expectation_term + cost_term;
    let (_, xi_hat) = initial_cost(&delta_hat, &section, &sc0);

    let regime = if delta_hat.iter().all(|&d| d == 0.0) {
        Regime::BoundaryZero
    } else if delta_hat
        .iter()
        .zip(&lower)
        .any(|(&d, &l)| (d - l).abs() <= 1e-9 * (1.0 + l.abs()) && l.abs() > 0.0)
    {
        Regime::InfeasibleDirection
    } else {
        Regime::Interior
    };

    let objective_curve = sample_curve(&engine, &delta_hat, &lower);

    let report = PriceReport {
        price: price_val,
        delta_hat,
        xi_hat,
        objective_curve,
        mc_stderr,
        regime,
        flat_minimizer: flat,
        offset_x: payoff.offset.as_ref().map(|o| o.x.clone()),
        expectation_term,
        cost_term,
        n_paths: options.n_paths,
        seed: options.seed,
    };
    Ok(PricingContext {
        section,
        grid,
        batch,
        report,
    })
}

/// Reprices with the wealth-offset payoff `g(s) - (x[0], diag[sc0]^-1
/// diag[s^c] x_tail)`; with x = 0 this equals `price` bit for bit.
pub fn price_with_offset(
    payoff: &PayoffSpec,
    model: &MarketModel,
    costs: &CostMatrix,
    x: &[f64],
    options: &PriceOptions,
) -> Result<PricingContext, PriceError> {
    let mut shifted = payoff.clone();
    if x.iter().any(|&v| v != 0.0) {
        shifted.offset = Some(WealthOffset {
            x: x.to_vec(),
            sc0: model.s0[model.df..].to_vec(),
        });
    }
    price(&shifted, model, costs, options)
}

fn finite(v: ExtReal) -> f64 {
    v.finite().unwrap_or(f64::INFINITY)
}

/// Golden-section minimization over [lower, inf) with geometric bracket
/// growth; valid because the objective is convex with +infinity walls.
fn minimize_1d(engine: &ObjectiveEngine, lower: f64) -> Result<(Vec<f64>, bool), PriceError> {
    let a0 = lower;
    let f_a0 = finite(engine.objective(&[a0]));
    if !f_a0.is_finite() {
        return Err(PriceError::NoFiniteDomain);
    }
    // Expand right until the objective has increased twice consecutively.
    let mut xs = vec![a0];
    let mut fs = vec![f_a0];
    let mut step = 1.0f64;
    let mut rises = 0;
    while rises < 2 {
        let x = xs.last().unwrap() + step;
        if x > DELTA_HARD_CAP {
            return Err(PriceError::UnboundedBelow);
        }
        let f = finite(engine.objective(&[x]));
        if f > *fs.last().unwrap() {
            rises += 1;
        } else {
            rises = 0;
        }
        xs.push(x);
        fs.push(f);
        step *= 2.0;
    }
    // Bracket around the best sample.
    let best = fs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    let (mut a, mut b) = (
        if best == 0 { xs[0] } else { xs[best - 1] },
        xs[(best + 1).min(xs.len() - 1)],
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-8 * (1.0 + a.abs()) {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if finite(engine.objective(&[x1])) <= finite(engine.objective(&[x2])) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let xm = 0.5 * (a + b);
    let fm = finite(engine.objective(&[xm]));
    // Flatness probe along a short segment through the minimizer.
    let h = 1e-3 * (1.0 + xm.abs());
    let probe = [xm - h, xm + h]
        .iter()
        .map(|&x| finite(engine.objective(&[x.max(lower)])))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((vec![xm], (probe - fm).abs() < 1e-10))
}

/// Projected subgradient descent with diminishing steps for dc >= 2,
/// warm-started at the projection of 0.
fn minimize_subgradient(
    engine: &ObjectiveEngine,
    lower: &[f64],
) -> Result<(Vec<f64>, bool), PriceError> {
    let project = |d: &mut Vec<f64>| {
        for (v, &l) in d.iter_mut().zip(lower) {
            *v = v.max(l);
        }
    };
    let mut delta: Vec<f64> = vec![0.0; lower.len()];
    project(&mut delta);
    let mut f = finite(engine.objective(&delta));
    if !f.is_finite() {
        return Err(PriceError::NoFiniteDomain);
    }
    let g0 = engine.subgradient(&delta);
    let gnorm = dot(&g0, &g0).sqrt().max(1e-12);
    let s0 = 1.0 / gnorm;
    let mut best = delta.clone();
    let mut best_f = f;
    for k in 0..500usize {
        let g = engine.subgradient(&delta);
        let step = s0 / ((k + 1) as f64).sqrt();
        let mut next: Vec<f64> = delta.iter().zip(&g).map(|(d, gi)| d - step * gi).collect();
        project(&mut next);
        if next.iter().any(|v| v.abs() > DELTA_HARD_CAP) {
            return Err(PriceError::UnboundedBelow);
        }
        let fnext = finite(engine.objective(&next));
        let moved: f64 = next
            .iter()
            .zip(&delta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if fnext < best_f {
            best_f = fnext;
            best = next.clone();
        }
        let rel_change = (fnext - f).abs() / (1.0 + f.abs());
        delta = next;
        f = fnext;
        if moved < 1e-6 && rel_change < 1e-8 {
            break;
        }
    }
    // Flatness probe along a random-ish fixed segment through the best.
    let h = 1e-3;
    let mut probe = best.clone();
    for v in probe.iter_mut() {
        *v += h;
    }
    let fp = finite(engine.objective(&probe));
    Ok((best, (fp - best_f).abs() < 1e-10))
}

/// Snaps near-zero minimizers to exactly zero when zero is feasible and
/// no worse than the found point (within the optimizer's own resolution).
fn snap_zero(engine: &ObjectiveEngine, delta: Vec<f64>, lower: &[f64]) -> Vec<f64> {
    if lower.iter().any(|&l| l > 0.0) {
        return delta;
    }
    let near = delta.iter().all(|&d| d.abs() < 1e-4);
    if !near {
        return delta;
    }
    let zero = vec![0.0; delta.len()];
    let f0 = finite(engine.objective(&zero));
    let fd = finite(engine.objective(&delta));
    if f0 <= fd + 1e-9 * (1.0 + fd.abs()) {
        zero
    } else {
        delta
    }
}

fn sample_curve(
    engine: &ObjectiveEngine,
    delta_hat: &[f64],
    lower: &[f64],
) -> Vec<(Vec<f64>, f64)> {
    // 1-D sweep per coordinate through the optimum.
    let mut curve = Vec::new();
    for i in 0..delta_hat.len() {
        let span = 1.0 + delta_hat[i].abs();
        for k in 0..17 {
            let t = k as f64 / 16.0;
            let x = (delta_hat[i] - span + 2.0 * span * t).max(lower[i]);
            let mut d = delta_hat.to_vec();
            d[i] = x;
            if let ExtReal::Finite(f) = engine.objective(&d) {
                curve.push((d, f));
            }
        }
    }
    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    curve.dedup_by(|a, b| a.0 == b.0);
    curve
}

/// Closed-form and Monte Carlo first-order-condition residual for the
/// one-costly-asset barrier-call family:
/// `-K2t * P[S^f(T) - K1 >= Delta K2t] + (1 + lambda12) sc0`.
pub fn first_order_residual(
    delta: f64,
    s0f: f64,
    sc0: f64,
    sigma_f: f64,
    horizon: f64,
    strike_f: f64,
    k2_tilde: f64,
    lambda12: f64,
    batch: Option<&PathBatch>,
) -> (f64, Option<f64>) {
    let k = strike_f + delta * k2_tilde;
    let closed = -k2_tilde * lognormal_digital(s0f, k, sigma_f, horizon) + (1.0 + lambda12) * sc0;
    let mc = batch.map(|b| {
        let hits = (0..b.n_paths)
            .filter(|&p| b.terminal_sf(p)[0] - strike_f >= delta * k2_tilde)
            .count();
        -k2_tilde * hits as f64 / b.n_paths as f64 + (1.0 + lambda12) * sc0
    });
    (closed, mc)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::market::Vol;
    use crate::payoff::{PayoffKind, TaCertificate, ZcGrowth};

    fn section_1d(l01: f64, l10: f64) -> (CostMatrix, PolarSection) {
        let rows = vec![vec![0.0, l01], vec![l10, 0.0]];
        let c = CostMatrix::new(1, &rows).unwrap();
        let s = PolarSection::build(&c).unwrap();
        (c, s)
    }

    pub fn e1_model(sc0: f64) -> MarketModel {
        MarketModel {
            df: 1,
            dc: 1,
            horizon: 1.0,
            s0: vec![100.0, sc0],
            vol: Vol::Constant(vec![vec![0.2, 0.0], vec![0.0, 0.3]]),
            block_certificate: true,
        }
    }

    pub fn e1_payoff() -> PayoffSpec {
        PayoffSpec {
            df: 1,
            dc: 1,
            kind: PayoffKind::DigitalBarrierCall {
                strike_f: 100.0,
                barrier_c: 100.0,
            },
            growth: TaCertificate {
                c: 0.0,
                delta_f: vec![0.0],
                delta: 0.0,
            },
            zc_growth: vec![ZcGrowth::Bounded],
            offset: None,
        }
    }

    fn e1_costs() -> CostMatrix {
        CostMatrix::new(1, &[vec![0.0, 0.1], vec![0.0, 0.0]]).unwrap()
    }

    #[test]
    fn initial_cost_examples() {
        let (_, s) = section_1d(0.1, 0.05);
        let (v, xi) = initial_cost(&[0.0], &s, &[10.0]);
        assert_eq!(v, 0.0);
        assert_eq!(xi, s.vertices()[0]);
        let (v, xi) = initial_cost(&[2.0], &s, &[10.0]);
        assert!((v - 22.0).abs() < 1e-12);
        assert!((xi[1] - 1.1).abs() < 1e-12);
        let (v, xi) = initial_cost(&[-1.0], &s, &[10.0]);
        assert!((v + 10.0 / 1.05).abs() < 1e-12);
        assert!((xi[1] - 1.0 / 1.05).abs() < 1e-12);
    }

    #[test]
    fn zero_payoff_prices_to_zero() {
        let model = e1_model(100.0);
        let costs = e1_costs();
        let mut payoff = e1_payoff();
        payoff.kind = PayoffKind::Zero;
        let opts = PriceOptions {
            n_paths: 2000,
            ..Default::default()
        };
        let ctx = price(&payoff, &model, &costs, &opts).unwrap();
        assert!(ctx.report.price.abs() < 1e-12);
        assert_eq!(ctx.report.delta_hat, vec![0.0]);
        assert_eq!(ctx.report.regime, Regime::BoundaryZero);
    }

    #[test]
    fn boundary_case_matches_plain_call() {
        // High initial costly price: holding the costly asset is never
        // worth it, so the price is the plain call on the free asset.
        let model = e1_model(100.0);
        let costs = e1_costs();
        let payoff = e1_payoff();
        let opts = PriceOptions {
            n_paths: 100_000,
            ..Default::default()
        };
        let ctx = price(&payoff, &model, &costs, &opts).unwrap();
        let oracle = crate::market::lognormal_call(100.0, 100.0, 0.2, 1.0);
        assert_eq!(ctx.report.delta_hat, vec![0.0]);
        assert_eq!(ctx.report.regime, Regime::BoundaryZero);
        let tol = (3.0 * ctx.report.mc_stderr).max(0.005 * oracle) + 0.01;
        assert!(
            (ctx.report.price - oracle).abs() < tol,
            "price {} vs oracle {oracle}",
            ctx.report.price
        );
    }

    #[test]
    fn objective_at_zero_is_call_and_negative_delta_is_infinite() {
        let model = e1_model(100.0);
        let costs = e1_costs();
        let payoff = e1_payoff();
        let opts = PriceOptions {
            n_paths: 100_000,
            ..Default::default()
        };
        let ctx = price(&payoff, &model, &costs, &opts).unwrap();
        let sc0 = vec![100.0];
        let engine = ObjectiveEngine::new(&ctx.grid, &ctx.batch, &ctx.section, &sc0);
        let f0 = engine.objective(&[0.0]).finite().unwrap();
        let oracle = crate::market::lognormal_call(100.0, 100.0, 0.2, 1.0);
        assert!((f0 - oracle).abs() < 0.1, "objective(0) = {f0}");
        assert!(engine.objective(&[-0.3]).is_infinite());
    }

    #[test]
    fn interior_case_matches_first_order_condition() {
        // Low initial costly price makes holding it worthwhile.
        let model = e1_model(10.0);
        let costs = e1_costs();
        let payoff = e1_payoff();
        let opts = PriceOptions {
            n_paths: 100_000,
            ..Default::default()
        };
        let ctx = price(&payoff, &model, &costs, &opts).unwrap();
        // Oracle: solve Phi(d2(K1 + Delta K2t)) = (1+l12) sc0 / K2t by
        // bisection on the closed-form digital.
        let digital = |d: f64| lognormal_digital(100.0, 100.0 + d * 100.0, 0.2, 1.0);
        let target = 1.1 * 10.0 / 100.0;
        let (mut a, mut b) = (0.0f64, 5.0f64);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if digital(m) > target {
                a = m;
            } else {
                b = m;
            }
        }
        let delta_oracle = 0.5 * (a + b);
        assert_eq!(ctx.report.regime, Regime::Interior);
        let dh = ctx.report.delta_hat[0];
        assert!(
            (dh - delta_oracle).abs() < 1e-2 * delta_oracle.max(1.0),
            "delta {dh} vs oracle {delta_oracle}"
        );
        // Price oracle: E[(S - K1 - Delta K2t)^+] + (1+l12) Delta sc0.
        let p_oracle = crate::market::lognormal_call(100.0, 100.0 + delta_oracle * 100.0, 0.2, 1.0)
            + 1.1 * delta_oracle * 10.0;
        assert!(
            (ctx.report.price - p_oracle).abs() < (3.0 * ctx.report.mc_stderr).max(0.02),
            "price {} vs oracle {p_oracle}",
            ctx.report.price
        );
        // Closed-form first-order residual vanishes at the oracle root.
        let (r, _) = first_order_residual(delta_oracle, 100.0, 10.0, 0.2, 1.0, 100.0, 100.0, 0.1, None);
        assert!(r.abs() < 1e-6);
        // MC residual at the reported optimum within 3 MC stderr of 0.
        let (_, mc) = first_order_residual(
            dh, 100.0, 10.0, 0.2, 1.0, 100.0, 100.0, 0.1,
            Some(&ctx.batch),
        );
        let se = 100.0 * (target * (1.0 - target) / opts.n_paths as f64).sqrt();
        assert!(mc.unwrap().abs() < 3.0 * se, "mc residual {:?}", mc);
    }

    #[test]
    fn first_order_residual_limits() {
        // Delta -> infinity: indicator probability -> 0.
        let (r, _) = first_order_residual(1e6, 100.0, 10.0, 0.2, 1.0, 100.0, 100.0, 0.1, None);
        assert!((r - 11.0).abs() < 1e-9);
        // E1 at Delta = 0: residual >= 0 confirms the boundary regime.
        let (r, _) = first_order_residual(0.0, 100.0, 100.0, 0.2, 1.0, 100.0, 100.0 / 1.0, 0.1, None);
        assert!(r >= 0.0);
    }

    #[test]
    fn offset_zero_is_identity_and_cash_offset_shifts_price() {
        let model = e1_model(100.0);
        let costs = e1_costs();
        let payoff = e1_payoff();
        let opts = PriceOptions {
            n_paths: 50_000,
            ..Default::default()
        };
        let base = price(&payoff, &model, &costs, &opts).unwrap();
        let same = price_with_offset(&payoff, &model, &costs, &[0.0, 0.0], &opts).unwrap();
        assert_eq!(base.report.price, same.report.price);
        assert_eq!(base.report.delta_hat, same.report.delta_hat);
        // Cash offset by the price: new price 0 within MC tolerance.
        let p = base.report.price;
        let shifted = price_with_offset(&payoff, &model, &costs, &[p, 0.0], &opts).unwrap();
        assert!(
            shifted.report.price.abs() < (3.0 * base.report.mc_stderr).max(1e-6) + 1e-9,
            "offset price {}",
            shifted.report.price
        );
    }

    #[test]
    fn objective_midpoint_convexity_under_crn() {
        let model = e1_model(10.0);
        let costs = e1_costs();
        let payoff = e1_payoff();
        let opts = PriceOptions {
            n_paths: 20_000,
            ..Default::default()
        };
        let ctx = price(&payoff, &model, &costs, &opts).unwrap();
        let sc0 = vec![10.0];
        let engine = ObjectiveEngine::new(&ctx.grid, &ctx.batch, &ctx.section, &sc0);
        let mut rng = crate::testutil::rng(17);
        for _ in 0..50 {
            let a = crate::testutil::uniform(&mut rng) * 3.0;
            let b = crate::testutil::uniform(&mut rng) * 3.0;
            let fa = engine.objective(&[a]).finite().unwrap();
            let fb = engine.objective(&[b]).finite().unwrap();
            let fm = engine.objective(&[0.5 * (a + b)]).finite().unwrap();
            let slack = 0.5 * (fa + fb) - fm;
            assert!(slack >= -1e-12, "convexity slack {slack}");
        }
    }

    #[test]
    fn sampled_sweep_never_beats_reported_price() {
        let model = e1_model(10.0);
        let costs = e1_costs();
        let payoff = e1_payoff();
        let opts = PriceOptions {
            n_paths: 20_000,
            ..Default::default()
        };
        let ctx = price(&payoff, &model, &costs, &opts).unwrap();
        for (_, f) in &ctx.report.objective_curve {
            assert!(*f >= ctx.report.price - 1e-9);
        }
    }

    #[test]
    fn monotone_in_payoff() {
        // A higher barrier payoff is dominated by the barrier-free call.
        let model = e1_model(10.0);
        let costs = e1_costs();
        let payoff = e1_payoff();
        let mut bigger = payoff.clone();
        bigger.kind = PayoffKind::CallOnFree { strike_f: 100.0 };
        bigger.growth.delta_f = vec![1.0];
        let opts = PriceOptions {
            n_paths: 20_000,
            ..Default::default()
        };
        let p1 = price(&payoff, &model, &costs, &opts).unwrap().report.price;
        let p2 = price(&bigger, &model, &costs, &opts).unwrap().report.price;
        assert!(p2 >= p1 - 1e-9, "p1 {p1} p2 {p2}");
    }

    #[test]
    fn report_recomposes_exactly() {
        let model = e1_model(10.0);
        let costs = e1_costs();
        let payoff = e1_payoff();
        let opts = PriceOptions {
            n_paths: 10_000,
            ..Default::default()
        };
        let r = price(&payoff, &model, &costs, &opts).unwrap().report;
        assert_eq!(r.price, r.expectation_term + r.cost_term);
        assert!(r.mc_stderr > 0.0);
    }
}
