//! Command-line front end: reads a JSON instance, runs the requested
//! pipeline stage, and writes JSON reports plus CSV curves stamped with
//! the instance hash and seed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use superhedge::hedger::{
    build_schedule, calibrated_tolerance, path_margins, verify_dominance, LatticeOptions,
};
use superhedge::hjb::{control_mc_lower_bound, solve_family};
use superhedge::instance::InstanceFile;
use superhedge::market::{simulate, Scheme};
use superhedge::pricer::{price, PriceError, PricingContext};

#[derive(Parser)]
#[command(
    name = "superhedge",
    about = "Super-replication pricing and hedging under proportional transaction costs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Instance file (JSON).
    instance: PathBuf,
    /// Overrides the instance seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to $SUPERHEDGE_OUT_DIR or ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the calibrated dominance tolerance.
    #[arg(long)]
    tol_override: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Price the claim and emit the report plus the objective curve.
    Price(RunArgs),
    /// Build the hedge and verify pathwise dominance.
    Hedge(RunArgs),
    /// Export the transform tables (G and its envelope).
    Envelope(RunArgs),
    /// Solve the bounded-control lower bounds and emit the gap table.
    Hjb(RunArgs),
    /// Full pipeline with one shared seed.
    All(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Price(a)
            | Command::Hedge(a)
            | Command::Envelope(a)
            | Command::Hjb(a)
            | Command::All(a) => a,
        }
    }
}

/// Exit code 2: the instance violates a validation invariant.
/// Exit code 3: the computation failed numerically.
enum Failure {
    Validation(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> ExitCode {
        match self {
            Failure::Validation(_) => ExitCode::from(2),
            Failure::Numeric(_) => ExitCode::from(3),
        }
    }
    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numeric(m) => m,
        }
    }
}

fn price_failure(e: PriceError) -> Failure {
    match e {
        PriceError::UnboundedBelow | PriceError::NoFiniteDomain => {
            Failure::Numeric(e.to_string())
        }
        other => Failure::Validation(other.to_string()),
    }
}

#[derive(Serialize)]
struct Stamped<T: Serialize> {
    instance_sha256: String,
    seed: u64,
    report: T,
}

fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    hash: &str,
    seed: u64,
    report: T,
) -> Result<(), Failure> {
    let payload = Stamped {
        instance_sha256: hash.to_string(),
        seed,
        report,
    };
    let text = serde_json::to_string_pretty(&payload)
        .map_err(|e| Failure::Numeric(format!("serialization failed: {e}")))?;
    std::fs::write(dir.join(name), text)
        .map_err(|e| Failure::Numeric(format!("cannot write {name}: {e}")))
}

fn write_csv(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    std::fs::write(dir.join(name), text)
        .map_err(|e| Failure::Numeric(format!("cannot write {name}: {e}")))
}

fn run() -> Result<(), Failure> {
    let cli = Cli::parse();
    let args = cli.command.args();
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Validation(format!("thread pool: {e}")))?;
    }
    let bytes = std::fs::read(&args.instance)
        .map_err(|e| Failure::Validation(format!("cannot read instance: {e}")))?;
    let hash = hex(&Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|_| Failure::Validation("instance is not valid UTF-8".into()))?;
    let mut inst =
        InstanceFile::from_json(&text).map_err(|e| Failure::Validation(e.to_string()))?;
    if let Some(seed) = args.seed {
        inst.numerics.seed = seed;
    }
    let seed = inst.numerics.seed;
    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os("SUPERHEDGE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)
        .map_err(|e| Failure::Validation(format!("cannot create output dir: {e}")))?;

    let model = inst.to_model().map_err(|e| Failure::Validation(e.to_string()))?;
    let costs = inst.to_costs().map_err(|e| Failure::Validation(e.to_string()))?;
    let payoff = inst.to_payoff().map_err(|e| Failure::Validation(e.to_string()))?;
    let opts = inst.price_options();

    let run_price = || -> Result<PricingContext, Failure> {
        price(&payoff, &model, &costs, &opts).map_err(price_failure)
    };

    match cli.command {
        Command::Price(_) => {
            let ctx = run_price()?;
            emit_price(&out, &hash, seed, &ctx)?;
        }
        Command::Envelope(_) => {
            let ctx = run_price()?;
            emit_envelope(&out, &hash, seed, &ctx)?;
        }
        Command::Hedge(_) => {
            let ctx = run_price()?;
            emit_hedge(&out, &hash, seed, &inst, &model, &payoff, &ctx, args.tol_override)?;
        }
        Command::Hjb(_) => {
            let ctx = run_price()?;
            emit_hjb(&out, &hash, seed, &inst, &model, &ctx)?;
        }
        Command::All(_) => {
            let ctx = run_price()?;
            emit_price(&out, &hash, seed, &ctx)?;
            emit_envelope(&out, &hash, seed, &ctx)?;
            emit_hedge(&out, &hash, seed, &inst, &model, &payoff, &ctx, args.tol_override)?;
            emit_hjb(&out, &hash, seed, &inst, &model, &ctx)?;
        }
    }
    Ok(())
}

fn emit_price(out: &Path, hash: &str, seed: u64, ctx: &PricingContext) -> Result<(), Failure> {
    write_json(out, "price_report.json", hash, seed, &ctx.report)?;
    let mut csv = String::from("delta,objective\n");
    for (d, f) in &ctx.report.objective_curve {
        let cols: Vec<String> = d.iter().map(|v| v.to_string()).collect();
        csv.push_str(&format!("{},{f}\n", cols.join(";")));
    }
    write_csv(out, "objective_curve.csv", &csv)
}

fn emit_envelope(out: &Path, hash: &str, seed: u64, ctx: &PricingContext) -> Result<(), Failure> {
    #[derive(Serialize)]
    struct EnvelopeMeta<'a> {
        sf_axes: &'a [Vec<f64>],
        sc_axes: &'a [Vec<f64>],
        zc_slopes: &'a [Option<f64>],
    }
    write_json(
        out,
        "envelope_meta.json",
        hash,
        seed,
        EnvelopeMeta {
            sf_axes: &ctx.grid.sf_axes,
            sc_axes: &ctx.grid.sc_axes,
            zc_slopes: &ctx.grid.zc_slopes,
        },
    )?;
    let grid = &ctx.grid;
    let mut csv = String::from("fiber,sc_index,g,ghat\n");
    let sc_len = grid.sc_len();
    for fiber in 0..grid.n_fibers() {
        for k in 0..sc_len {
            csv.push_str(&format!(
                "{fiber},{k},{},{}\n",
                grid.g_values[fiber * sc_len + k],
                grid.ghat_values[fiber * sc_len + k]
            ));
        }
    }
    write_csv(out, "envelope.csv", &csv)
}

#[allow(clippy::too_many_arguments)]
fn emit_hedge(
    out: &Path,
    hash: &str,
    seed: u64,
    inst: &InstanceFile,
    model: &superhedge::market::MarketModel,
    payoff: &superhedge::payoff::PayoffSpec,
    ctx: &PricingContext,
    tol_override: Option<f64>,
) -> Result<(), Failure> {
    let n_steps = inst.numerics.n_steps;
    // Dominance batches are full paths; cap the count to keep memory flat.
    let n_paths = inst.numerics.n_paths.min(10_000);
    let sched = build_schedule(&ctx.report, &ctx.grid, model, n_steps, LatticeOptions::default())
        .map_err(|e| Failure::Numeric(e.to_string()))?;
    let batch = simulate(model, n_paths, n_steps, seed, Scheme::ExactLognormal)
        .map_err(|e| Failure::Numeric(e.to_string()))?;
    let tol = match tol_override {
        Some(t) => t,
        None => {
            let half = n_steps / 2;
            let sched_h =
                build_schedule(&ctx.report, &ctx.grid, model, half, LatticeOptions::default())
                    .map_err(|e| Failure::Numeric(e.to_string()))?;
            let batch_h = batch.coarsen().ok_or_else(|| {
                Failure::Validation("n_steps must be even to calibrate the tolerance".into())
            })?;
            let margins_h = path_margins(&sched_h, &batch_h, payoff, &ctx.section, ctx.report.price);
            calibrated_tolerance(&margins_h, half, n_steps)
        }
    };
    let report = verify_dominance(
        &sched,
        &batch,
        payoff,
        &ctx.section,
        ctx.report.price,
        tol,
        inst.numerics.probe_epsilon,
    )
    .map_err(|e| Failure::Numeric(e.to_string()))?;
    write_json(out, "dominance_report.json", hash, seed, &report)?;
    let margins = path_margins(&sched, &batch, payoff, &ctx.section, ctx.report.price);
    let mut csv = String::from("path,margin\n");
    for (p, m) in margins.iter().enumerate() {
        csv.push_str(&format!("{p},{m}\n"));
    }
    write_csv(out, "margins.csv", &csv)
}

fn emit_hjb(
    out: &Path,
    hash: &str,
    seed: u64,
    inst: &InstanceFile,
    model: &superhedge::market::MarketModel,
    ctx: &PricingContext,
) -> Result<(), Failure> {
    let kappas = &inst.numerics.control_bounds_kappa;
    let family = solve_family(kappas, &ctx.grid, model, (61, 61), 7.0, 8.0)
        .map_err(|e| Failure::Numeric(e.to_string()))?;
    #[derive(Serialize)]
    struct GapRow {
        kappa: f64,
        value_at_s0: f64,
        price: f64,
        gap: f64,
        mc_lower_bound: f64,
        mc_stderr: f64,
        dt: f64,
        n_t: usize,
        nonmonotone_fraction: f64,
    }
    let mut rows = Vec::new();
    for vg in &family {
        let v0 = vg.value_at(model.s0[0], model.s0[1]);
        let (mc, se) = control_mc_lower_bound(vg, &ctx.grid, model, 20_000, 64, seed)
            .map_err(|e| Failure::Numeric(e.to_string()))?;
        write_csv(
            out,
            &format!("hjb_value_kappa_{}.csv", vg.kappa),
            &vg.v0_csv(),
        )?;
        rows.push(GapRow {
            kappa: vg.kappa,
            value_at_s0: v0,
            price: ctx.report.price,
            gap: ctx.report.price - v0,
            mc_lower_bound: mc,
            mc_stderr: se,
            dt: vg.diagnostics.dt,
            n_t: vg.diagnostics.n_t,
            nonmonotone_fraction: vg.diagnostics.nonmonotone_fraction,
        });
    }
    write_json(out, "hjb_gap.json", hash, seed, rows)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}
