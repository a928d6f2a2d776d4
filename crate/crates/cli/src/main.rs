//! `roughsim`: run rough-recursion experiments, inspect increment streams,
//! and estimate area corrections from the command line.
//!
//! Exit codes: 0 success, 2 an acceptance check failed, 1 error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roughsim_core::harness::{self, ExperimentConfig};
use roughsim_core::lift::lift;
use roughsim_core::rough_step::{read_stream_csv, RoughStepFunction, SumConvention};
use roughsim_core::tensor::chen_mul;
use roughsim_core::Error;

#[derive(Parser)]
#[command(name = "roughsim", version, about = "Rough path recursion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
    },
    /// List scenario presets with their last recorded status.
    Scenarios {
        /// Directory holding previously written scenario reports.
        #[arg(long)]
        reports_dir: Option<PathBuf>,
    },
    /// Validate that a CSV increment stream lifts cleanly: mesh agreement,
    /// cross-interval consistency, Hölder-norm comparison.
    LiftCheck(LiftCheckArgs),
    /// Discrete γ-Hölder norm of a CSV increment stream.
    Holder {
        stream: PathBuf,
        #[arg(long)]
        gamma: f64,
        /// Subsample mesh indices by this stride (reported as a lower
        /// bound); without it the exact O(N²) scan runs regardless of N.
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, default_value = "earlier_later")]
        convention: String,
    },
    /// Monte Carlo area-correction estimate for the noise in a config.
    EstimateNu {
        config: PathBuf,
    },
}

#[derive(Args)]
struct LiftCheckArgs {
    stream: PathBuf,
    #[arg(long, default_value_t = 0.45)]
    gamma: f64,
    /// Randomized cross-interval consistency triples.
    #[arg(long, default_value_t = 1000)]
    triples: usize,
    #[arg(long, default_value = "earlier_later")]
    convention: String,
    /// Optionally export the level-1 realization for plotting.
    #[arg(long)]
    polyline_csv: Option<PathBuf>,
    /// Samples per cell for the polyline export.
    #[arg(long, default_value_t = 8)]
    resolution: usize,
}

fn main() -> ExitCode {
    harness::init_threads_from_env();
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> Result<ExitCode, Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let text = fs::read_to_string(&config)?;
            let config = ExperimentConfig::from_json(&text)?;
            let report = harness::run_scenario(&config)?;
            print_report(&report);
            Ok(exit_for(report.pass))
        }
        Command::Scenarios { reports_dir } => {
            let rows = harness::list_scenarios(reports_dir.as_deref());
            let key_w = rows.iter().map(|r| r.key.len()).max().unwrap_or(8);
            println!("{:key_w$}  {:6}  description", "scenario", "status");
            for row in rows {
                println!("{:key_w$}  {:6}  {}", row.key, row.status, row.description);
                println!("{:key_w$}  {:6}    target: {}", "", "", row.target);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::LiftCheck(args) => lift_check(args),
        Command::Holder {
            stream,
            gamma,
            stride,
            convention,
        } => {
            let rsf = load_stream(&stream, &convention)?;
            let n = rsf.partition().num_cells();
            let value = match stride {
                Some(s) => {
                    let v = rsf.discrete_holder_norm_subsampled(gamma, s)?;
                    println!("discrete holder norm (gamma = {gamma}, stride = {s}, lower bound): {v}");
                    v
                }
                None => {
                    if n > 4096 {
                        eprintln!(
                            "note: N = {n} > 4096; the exact O(N²) scan may take a while \
                             (pass --stride for a fast lower bound)"
                        );
                    }
                    let v = rsf.discrete_holder_norm(gamma)?;
                    println!("discrete holder norm (gamma = {gamma}, exact): {v}");
                    v
                }
            };
            Ok(if value.is_finite() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::EstimateNu { config } => {
            let text = fs::read_to_string(&config)?;
            let config = ExperimentConfig::from_json(&text)?;
            let report = harness::estimate_nu(&config)?;
            print_report(&report);
            Ok(exit_for(report.pass))
        }
    }
}

fn exit_for(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn print_report(report: &harness::ScenarioReport) {
    println!(
        "scenario {} (seed {}, {} paths, abort fraction {:.2e})",
        report.scenario, report.master_seed, report.paths, report.abort_fraction
    );
    for c in &report.checks {
        println!("  [{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "  measurements: {}",
        serde_json::to_string(&report.measurements).unwrap_or_default()
    );
    println!("  overall: {}", if report.pass { "PASS" } else { "FAIL" });
}

fn parse_convention(c: &str) -> Result<SumConvention, Error> {
    match c {
        "earlier_later" => Ok(SumConvention::EarlierLater),
        "later_earlier" => Ok(SumConvention::LaterEarlier),
        other => Err(Error::InvalidArgument(format!(
            "unknown convention `{other}`"
        ))),
    }
}

fn load_stream(path: &PathBuf, convention: &str) -> Result<RoughStepFunction, Error> {
    let convention = parse_convention(convention)?;
    let file = fs::File::open(path)?;
    let (partition, stream) = read_stream_csv(file)?;
    RoughStepFunction::build(std::sync::Arc::new(partition), stream, convention)
}

fn lift_check(args: LiftCheckArgs) -> Result<ExitCode, Error> {
    let rsf = load_stream(&args.stream, &args.convention)?;
    let partition = rsf.partition().clone();
    let n = partition.num_cells();
    let t_end = partition.t_end();
    let lrp = lift(&rsf);

    // Mesh agreement: the lift must reproduce the prefix sums.
    let mut mesh_err: f64 = 0.0;
    for j in 0..=n {
        let got = lrp.eval(0.0, partition.tau(j))?;
        let want = rsf.increment_mesh(0, j);
        mesh_err = mesh_err.max(got.max_abs_diff(&want));
    }
    let mesh_ok = mesh_err <= 1e-12;
    println!(
        "[{}] mesh agreement: max |X̃(τ_j) − X^n(τ_j)| = {mesh_err:.3e} (≤ 1e-12)",
        if mesh_ok { "PASS" } else { "FAIL" }
    );

    // Cross-interval consistency on pinned random triples.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut chen_err: f64 = 0.0;
    for _ in 0..args.triples {
        let mut ts = [
            rng.random_range(0.0..=t_end),
            rng.random_range(0.0..=t_end),
            rng.random_range(0.0..=t_end),
        ];
        ts.sort_by(f64::total_cmp);
        let whole = lrp.eval(ts[0], ts[2])?;
        let glued = chen_mul(&lrp.eval(ts[0], ts[1])?, &lrp.eval(ts[1], ts[2])?)?;
        chen_err = chen_err.max(whole.max_abs_diff(&glued));
    }
    let chen_ok = chen_err <= 1e-10;
    println!(
        "[{}] interval consistency: max violation over {} triples = {chen_err:.3e} (≤ 1e-10)",
        if chen_ok { "PASS" } else { "FAIL" },
        args.triples
    );

    let discrete = rsf.discrete_holder_norm(args.gamma)?;
    let estimate = lrp.holder_norm_estimate(args.gamma, 4)?;
    let ratio = if discrete > 0.0 { estimate / discrete } else { 1.0 };
    println!(
        "holder norms at gamma = {}: discrete {discrete:.6}, lift estimate {estimate:.6}, ratio {ratio:.4}",
        args.gamma
    );

    if let Some(path) = &args.polyline_csv {
        let mut file = fs::File::create(path)?;
        lrp.export_polyline_csv(&mut file, args.resolution.max(1))?;
        println!("polyline written to {}", path.display());
    }

    Ok(exit_for(mesh_ok && chen_ok))
}
