//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (visible with `--nocapture`; cargo shows the output of
//! failing tests automatically).

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use superhedge::cone::{dot, CostMatrix, PolarSection};
use superhedge::hedger::{
    build_schedule, calibrated_tolerance, path_margins, verify_dominance, LatticeOptions,
};
use superhedge::hjb::solve_family;
use superhedge::market::{
    lognormal_call, lognormal_digital, simulate, MarketModel, Scheme, Vol,
};
use superhedge::payoff::{
    compute_g_values, concave_envelope, conjugate_c, default_grid_spec, GSupRefinement,
    PayoffKind, PayoffSpec, TaCertificate, ZcGrowth,
};
use superhedge::pricer::{
    first_order_residual, price, price_with_offset, ObjectiveEngine, PriceOptions, PricingContext,
    Regime,
};

/// Criteria 1 and 3 carry wall-clock budgets, so the suite runs one
/// criterion at a time regardless of the harness thread count.
static GATE: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn catalog_payoff() -> PayoffSpec {
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

fn model(sc0: f64) -> MarketModel {
    MarketModel {
        df: 1,
        dc: 1,
        horizon: 1.0,
        s0: vec![100.0, sc0],
        vol: Vol::Constant(vec![vec![0.2, 0.0], vec![0.0, 0.3]]),
        block_certificate: true,
    }
}

fn costs() -> CostMatrix {
    CostMatrix::new(1, &[vec![0.0, 0.1], vec![0.0, 0.0]]).unwrap()
}

fn opts() -> PriceOptions {
    PriceOptions {
        n_paths: 200_000,
        seed: 42,
        ..Default::default()
    }
}

/// E1 priced on a single worker thread, with the wall time.
fn e1() -> &'static (PricingContext, Duration) {
    static CTX: OnceLock<(PricingContext, Duration)> = OnceLock::new();
    CTX.get_or_init(|| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let start = Instant::now();
        let ctx = pool
            .install(|| price(&catalog_payoff(), &model(100.0), &costs(), &opts()))
            .unwrap();
        (ctx, start.elapsed())
    })
}

fn e2() -> &'static PricingContext {
    static CTX: OnceLock<PricingContext> = OnceLock::new();
    CTX.get_or_init(|| price(&catalog_payoff(), &model(10.0), &costs(), &opts()).unwrap())
}

/// Closed-form oracle for the E2 holding: root of
/// Phi(d2(K1 + Delta K2t)) = (1 + lambda12) sc0 / K2t.
fn e2_delta_oracle() -> f64 {
    let target = 1.1 * 10.0 / 100.0;
    let (mut a, mut b) = (0.0f64, 5.0f64);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if lognormal_digital(100.0, 100.0 + m * 100.0, 0.2, 1.0) > target {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn criterion_1_boundary_regime_worked_example() {
    let _gate = serial();
    let (ctx, elapsed) = e1();
    let r = &ctx.report;
    let oracle = lognormal_call(100.0, 100.0, 0.2, 1.0);
    let tol = (3.0 * r.mc_stderr).max(0.005 * oracle);
    let ok = r.delta_hat == vec![0.0]
        && r.regime == Regime::BoundaryZero
        && (r.price - oracle).abs() <= tol
        && *elapsed < Duration::from_secs(30);
    println!(
        "CRITERION 1: {} — E1 price {:.4} vs {:.4} (tol {:.4}), delta_hat {:?}, regime {:?}, {:.1}s single-threaded",
        if ok { "PASS" } else { "FAIL" },
        r.price,
        oracle,
        tol,
        r.delta_hat,
        r.regime,
        elapsed.as_secs_f64()
    );
    assert!(ok);
}

#[test]
fn criterion_2_interior_regime_first_order_condition() {
    let _gate = serial();
    let ctx = e2();
    let r = &ctx.report;
    let d_oracle = e2_delta_oracle();
    let p_oracle = lognormal_call(100.0, 100.0 + d_oracle * 100.0, 0.2, 1.0)
        + 1.1 * d_oracle * 10.0;
    let d_ok = (r.delta_hat[0] - d_oracle).abs() <= 1e-2 * d_oracle;
    let p_tol = (3.0 * r.mc_stderr).max(0.005 * p_oracle);
    let p_ok = (r.price - p_oracle).abs() <= p_tol;
    let (_, mc_res) = first_order_residual(
        r.delta_hat[0],
        100.0,
        10.0,
        0.2,
        1.0,
        100.0,
        100.0,
        0.1,
        Some(&ctx.batch),
    );
    // Standard error of the indicator-based residual estimate.
    let q = 0.11f64;
    let res_se = 100.0 * (q * (1.0 - q) / r.n_paths as f64).sqrt();
    let res_ok = mc_res.unwrap().abs() <= 3.0 * res_se;
    let ok = d_ok && p_ok && res_ok;
    println!(
        "CRITERION 2: {} — E2 delta {:.4} vs {:.4}, price {:.4} vs {:.4}, FOC residual {:.4} (3se {:.4})",
        if ok { "PASS" } else { "FAIL" },
        r.delta_hat[0],
        d_oracle,
        r.price,
        p_oracle,
        mc_res.unwrap(),
        3.0 * res_se
    );
    assert!(ok);
}

#[test]
fn criterion_3_hedging_dominance_and_tightness() {
    let _gate = serial();
    let ctx = e2();
    let payoff = catalog_payoff();
    let model = model(10.0);
    let p = ctx.report.price;
    let start = Instant::now();
    let n_steps = 256;
    let sched =
        build_schedule(&ctx.report, &ctx.grid, &model, n_steps, LatticeOptions::default())
            .unwrap();
    let batch = simulate(&model, 10_000, n_steps, 42, Scheme::ExactLognormal).unwrap();
    let half = n_steps / 2;
    let sched_h =
        build_schedule(&ctx.report, &ctx.grid, &model, half, LatticeOptions::default()).unwrap();
    let batch_h = batch.coarsen().unwrap();
    let margins_h = path_margins(&sched_h, &batch_h, &payoff, &ctx.section, p);
    let tol = calibrated_tolerance(&margins_h, half, n_steps);
    let rep = verify_dominance(&sched, &batch, &payoff, &ctx.section, p, tol, 0.01).unwrap();
    let elapsed = start.elapsed();
    let base = rep.violation_fraction;
    let probe = rep.tightness_probe.violation_fraction;
    let ok = base <= 0.001 && probe >= 10.0 * base && elapsed < Duration::from_secs(120);
    println!(
        "CRITERION 3: {} — violations {:.5} (tol {:.2e}), probe at 0.99p {:.5}, worst margin {:.4}, {:.1}s",
        if ok { "PASS" } else { "FAIL" },
        base,
        tol,
        probe,
        rep.worst_margin,
        elapsed.as_secs_f64()
    );
    assert!(ok);
}

#[test]
fn criterion_4_lower_bound_chain() {
    let _gate = serial();
    let kappas = [0.0, 1.0, 2.0, 5.0];
    let mut all_ok = true;
    let mut gap_e2 = 0.0;
    let mut p_e2 = 0.0;
    for (name, ctx, m) in [("E1", &e1().0, model(100.0)), ("E2", e2(), model(10.0))] {
        let p = ctx.report.price;
        let family = solve_family(&kappas, &ctx.grid, &m, (61, 61), 7.0, 8.0).unwrap();
        // Scheme tolerance from one grid refinement at the largest bound.
        let fine = solve_family(&[5.0], &ctx.grid, &m, (91, 91), 7.0, 8.0).unwrap();
        let v5 = family[3].value_at(m.s0[0], m.s0[1]);
        let v5_fine = fine[0].value_at(m.s0[0], m.s0[1]);
        let scheme_tol = 2.0 * (v5 - v5_fine).abs() + 1e-3;
        let combined = scheme_tol + 3.0 * ctx.report.mc_stderr;
        let mut prev = f64::NEG_INFINITY;
        for vg in &family {
            let v = vg.value_at(m.s0[0], m.s0[1]);
            if v < prev - 1e-9 {
                all_ok = false;
                println!("  {name}: v_kappa not monotone at kappa {}", vg.kappa);
            }
            if v > p + combined {
                all_ok = false;
                println!(
                    "  {name}: v_{} = {v:.4} exceeds p {p:.4} + tol {combined:.4}",
                    vg.kappa
                );
            }
            prev = v;
        }
        if name == "E2" {
            gap_e2 = p - v5;
            p_e2 = p;
        }
        println!(
            "  {name}: p {:.4}, v_kappa {:?}, scheme tol {:.4}",
            p,
            family
                .iter()
                .map(|vg| vg.value_at(m.s0[0], m.s0[1]))
                .collect::<Vec<_>>(),
            scheme_tol
        );
    }
    let gap_ok = gap_e2 <= 0.15 * p_e2;
    if !gap_ok {
        // Flagged, not failed: attach a refined-grid rerun.
        let ctx = e2();
        let m = model(10.0);
        let refined = solve_family(&[5.0], &ctx.grid, &m, (121, 121), 7.0, 8.0).unwrap();
        let v5r = refined[0].value_at(100.0, 10.0);
        println!(
            "  FLAG: E2 gap {:.4} exceeds 15% of p {:.4}; refined-grid v_5 = {:.4} (gap {:.4})",
            gap_e2,
            p_e2,
            v5r,
            p_e2 - v5r
        );
    }
    println!(
        "CRITERION 4: {} — monotone chain below price on E1/E2; E2 gap p - v_5 = {:.4} ({:.1}% of p{})",
        if all_ok { "PASS" } else { "FAIL" },
        gap_e2,
        100.0 * gap_e2 / p_e2,
        if gap_ok { "" } else { ", flagged" }
    );
    assert!(all_ok);
}

/// Brute-force minimal concave majorant over the extended point set
/// (zero-anchor, grid points, certified tail), evaluated at the nodes:
/// the maximum over all straddling chords.
fn brute_force_hull(xs: &[f64], g: &[f64], tail_slope: f64) -> Vec<f64> {
    let n = xs.len();
    let anchor = g[0] - (g[1] - g[0]) / (xs[1] - xs[0]) * xs[0];
    let far = xs[n - 1] * 1e6;
    let mut pts: Vec<(f64, f64)> = vec![(0.0, anchor)];
    pts.extend(xs.iter().zip(g).map(|(&x, &v)| (x, v)));
    pts.push((far, g[n - 1] + tail_slope * (far - xs[n - 1])));
    xs.iter()
        .map(|&x| {
            let mut best = f64::NEG_INFINITY;
            for (i, &(xa, ya)) in pts.iter().enumerate() {
                if xa > x {
                    continue;
                }
                for &(xb, yb) in &pts[i..] {
                    if xb < x || xb == xa {
                        continue;
                    }
                    best = best.max(ya + (yb - ya) * (x - xa) / (xb - xa));
                }
            }
            best
        })
        .collect()
}

struct Lcg(u64);
impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[test]
fn criterion_5_transform_suite() {
    let _gate = serial();
    let mut rng = Lcg(2024);
    let mut ok = true;
    for case in 0..50 {
        let strike = 50.0 + 100.0 * rng.next();
        let barrier = 20.0 + 180.0 * rng.next();
        let l12 = 0.01 + 0.4 * rng.next();
        let l21 = 0.4 * rng.next();
        let sc_ref = 5.0 + 145.0 * rng.next();
        let payoff = PayoffSpec {
            df: 1,
            dc: 1,
            kind: PayoffKind::DigitalBarrierCall {
                strike_f: strike,
                barrier_c: barrier,
            },
            growth: TaCertificate {
                c: 0.0,
                delta_f: vec![0.0],
                delta: 0.0,
            },
            zc_growth: vec![ZcGrowth::Bounded],
            offset: None,
        };
        let cm = CostMatrix::new(1, &[vec![0.0, l12], vec![l21, 0.0]]).unwrap();
        let section = PolarSection::build(&cm).unwrap();
        let spec = default_grid_spec(
            &payoff,
            &cm,
            &[100.0, sc_ref],
            &[0.2, 0.3],
            1.0,
            33,
            65,
            &[sc_ref],
        );
        let mut grid =
            compute_g_values(&payoff, &section, &spec, GSupRefinement::default()).unwrap();
        concave_envelope(&mut grid).unwrap();
        let xs = grid.sc_axes[0].clone();
        for fiber in 0..grid.n_fibers() {
            let g = grid.g_fiber(fiber);
            let h = grid.ghat_fiber(fiber);
            // Majorization.
            if g.iter().zip(h).any(|(gv, hv)| *hv < gv - 1e-10) {
                ok = false;
                println!("  case {case}: envelope fails to majorize G");
            }
            // Concavity per fiber.
            for k in 1..xs.len() - 1 {
                let t = (xs[k] - xs[k - 1]) / (xs[k + 1] - xs[k - 1]);
                if h[k] < h[k - 1] * (1.0 - t) + h[k + 1] * t - 1e-9 {
                    ok = false;
                    println!("  case {case}: envelope not concave at fiber {fiber} node {k}");
                }
            }
            // Brute-force hull oracle.
            let oracle = brute_force_hull(&xs, g, 0.0);
            for (k, (hv, ov)) in h.iter().zip(&oracle).enumerate() {
                if (hv - ov).abs() > 1e-9 * (1.0 + ov.abs()) {
                    ok = false;
                    println!("  case {case}: hull {hv} vs oracle {ov} at fiber {fiber} node {k}");
                }
            }
        }
        // Fenchel inequality on all nodes for 20 random slopes.
        for _ in 0..20 {
            let delta = 2.0 * rng.next();
            for fiber in (0..grid.n_fibers()).step_by(5) {
                let sf = grid.fiber_point(fiber);
                let c = conjugate_c(&grid, &sf, &[delta]).finite().unwrap();
                let h = grid.ghat_fiber(fiber);
                for (k, &x) in xs.iter().enumerate() {
                    if h[k] > c + delta * x + 1e-9 {
                        ok = false;
                        println!("  case {case}: Fenchel violated at fiber {fiber} node {k}");
                    }
                }
            }
        }
    }
    println!(
        "CRITERION 5: {} — 50 randomized payoffs: majorization, concavity, Fenchel, hull oracle",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

#[test]
fn criterion_6_cone_suite() {
    let _gate = serial();
    let mut rng = Lcg(77);
    let mut ok = true;
    for case in 0..200 {
        let dc = 1 + (rng.next() * 3.0) as usize;
        let dc = dc.min(3);
        let n = 1 + dc;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rows[i][j] = 0.01 + 0.49 * rng.next();
                }
            }
        }
        let cm = CostMatrix::new(dc, &rows).unwrap().normalize().unwrap().0;
        let section = PolarSection::build(&cm).unwrap();
        // Vertex/H cross-validation: every vertex satisfies H.
        for v in section.vertices() {
            if !section.satisfies_h(v, 1e-9) {
                ok = false;
                println!("  case {case}: vertex outside H-representation");
            }
        }
        // H-feasible samples lie in the vertex hull: support-function test.
        let lo: Vec<f64> = (0..n)
            .map(|k| {
                section
                    .vertices()
                    .iter()
                    .map(|v| v[k])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let hi: Vec<f64> = (0..n)
            .map(|k| {
                section
                    .vertices()
                    .iter()
                    .map(|v| v[k])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut tested = 0;
        let mut tries = 0;
        while tested < 10 && tries < 400 {
            tries += 1;
            let mut xi = vec![1.0];
            for k in 1..n {
                xi.push(lo[k] + (hi[k] - lo[k]) * rng.next());
            }
            if !section.satisfies_h(&xi, 1e-12) {
                continue;
            }
            tested += 1;
            for _ in 0..10 {
                let w: Vec<f64> = (0..n).map(|_| rng.next() - 0.5).collect();
                let support = section
                    .vertices()
                    .iter()
                    .map(|v| dot(&w, v))
                    .fold(f64::NEG_INFINITY, f64::max);
                if dot(&w, &xi) > support + 1e-7 {
                    ok = false;
                    println!("  case {case}: H-feasible point escapes the vertex hull");
                }
            }
        }
        // cone_geq iff liquidation value nonnegative.
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| 4.0 * rng.next() - 2.0).collect();
            let y: Vec<f64> = (0..n).map(|_| 4.0 * rng.next() - 2.0).collect();
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let geq = section.cone_geq(&x, &y, 0.0).unwrap();
            let liq = section.liquidation_value(&diff).unwrap();
            if geq != (liq >= 0.0) {
                ok = false;
                println!("  case {case}: cone_geq and liquidation value disagree");
            }
        }
        if dc == 1 {
            let l12 = cm.rate(0, 1);
            let l21 = cm.rate(1, 0);
            let mut ends: Vec<f64> = section.vertices().iter().map(|v| v[1]).collect();
            ends.sort_by(f64::total_cmp);
            if (ends[0] - 1.0 / (1.0 + l21)).abs() > 1e-12
                || (ends[1] - (1.0 + l12)).abs() > 1e-12
            {
                ok = false;
                println!("  case {case}: interval endpoints wrong: {ends:?}");
            }
        }
    }
    println!(
        "CRITERION 6: {} — 200 random cost matrices: vertex/H cross-check, order/liquidation equivalence, interval endpoints",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

#[test]
fn criterion_7_objective_convexity_under_crn() {
    let _gate = serial();
    let ctx = e2();
    let sc0 = vec![10.0];
    let engine = ObjectiveEngine::new(&ctx.grid, &ctx.batch, &ctx.section, &sc0);
    let mut rng = Lcg(5150);
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for _ in 0..100 {
        let a = 3.0 * rng.next();
        let b = 3.0 * rng.next();
        let fa = engine.objective(&[a]).finite().unwrap();
        let fb = engine.objective(&[b]).finite().unwrap();
        let fm = engine.objective(&[0.5 * (a + b)]).finite().unwrap();
        let slack = 0.5 * (fa + fb) - fm;
        worst = worst.min(slack);
        if slack < -1e-12 {
            ok = false;
        }
    }
    println!(
        "CRITERION 7: {} — 100 midpoint tests, worst slack {:.2e} (floor -1e-12)",
        if ok { "PASS" } else { "FAIL" },
        worst
    );
    assert!(ok);
}

#[test]
fn criterion_8_offset_identity() {
    let _gate = serial();
    let mut ok = true;
    let mut details = Vec::new();
    for (name, m) in [("E1", model(100.0)), ("E2", model(10.0))] {
        let base = if name == "E1" { &e1().0 } else { e2() };
        let p = base.report.price;
        let shifted =
            price_with_offset(&catalog_payoff(), &m, &costs(), &[p, 0.0], &opts()).unwrap();
        let tol = 3.0 * base.report.mc_stderr.max(shifted.report.mc_stderr);
        if shifted.report.price.abs() > tol {
            ok = false;
        }
        details.push(format!(
            "{name}: offset price {:.2e} (3se {:.2e})",
            shifted.report.price, tol
        ));
    }
    println!(
        "CRITERION 8: {} — {}",
        if ok { "PASS" } else { "FAIL" },
        details.join("; ")
    );
    assert!(ok);
}
