//! Scenario presets: each runs a pinned Monte Carlo experiment against its
//! closed-form or frozen-calibration targets and emits a JSON report.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diagnostics::{
    self, kolmogorov_exponent, ks_distance, ks_threshold_99,
};
use crate::error::{Error, Result};
use crate::fields::{ScalarLinear, VectorFieldBundle};
use crate::linalg::{mean_and_se, Mat};
use crate::noise::{
    analytic_limit, empirical_nu_from_terminals, generate, NoiseKind, NoiseSpec, Xi2Rule,
};
use crate::recursion::{run_terminal, theta_step_function};
use crate::rough_step::{Partition, RoughStepFunction, SumConvention};
use crate::seeds::SeedLineage;
use crate::tensor::TensorPair;

use super::config::{param_f64, param_str, param_usize, ExperimentConfig, OutputsConfig};
use super::runner::run_paths;
use rand_distr::Distribution;

// ---------------------------------------------------------------------------
// Frozen acceptance fixtures
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
pub struct RateFixture {
    pub gamma: f64,
    pub odesteps: usize,
    pub seeds: usize,
    pub n_grid: Vec<usize>,
    /// Calibrated hidden constant: sup_error ≤ c_cal·K·Δ^{3γ−1}.
    pub c_cal: f64,
    pub min_median_slope: f64,
    pub min_pass_fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CrossSolverFixture {
    pub n: usize,
    pub seed: u64,
    pub substeps: usize,
    pub odesteps: usize,
    /// Frozen consistency band between the substepped solve and the
    /// modified equation on the pinned fixture.
    pub band: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TightnessFixture {
    pub paths: usize,
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<f64>,
    /// Frozen exceedance envelope for the bounded (subcritical) case.
    pub envelope: Vec<f64>,
    pub negative_gamma: f64,
    pub negative_m_star: f64,
    pub negative_min_growth: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RemainderFixture {
    pub gamma: f64,
    /// Frozen bound on sup|Y_with_r − Y| / Δ^{3γ−1}.
    pub c_sup: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct HolderRatioFixture {
    pub gamma: f64,
    pub levels: u32,
    /// Frozen cap on ⦀X̃⦀_γ-estimate / ⦀X⦀_{γ,n}.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AcceptanceFixtures {
    pub modified_equation_rate: RateFixture,
    pub cross_solver: CrossSolverFixture,
    pub tightness: TightnessFixture,
    pub remainder_robustness: RemainderFixture,
    pub holder_ratio: HolderRatioFixture,
}

/// Frozen thresholds, versioned with the repo.
pub fn fixtures() -> &'static AcceptanceFixtures {
    static FIX: OnceLock<AcceptanceFixtures> = OnceLock::new();
    FIX.get_or_init(|| {
        serde_json::from_str(include_str!("../../fixtures/acceptance.json"))
            .expect("fixtures/acceptance.json is well-formed")
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub master_seed: u64,
    pub paths: usize,
    pub abort_fraction: f64,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
    pub measurements: serde_json::Value,
}

impl ScenarioReport {
    fn finish(mut self) -> Self {
        self.pass = self.checks.iter().all(|c| c.pass);
        self
    }
}

fn check(name: &str, pass: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        pass,
        detail,
    }
}

fn mat_json(m: &Mat) -> serde_json::Value {
    let rows: Vec<Vec<f64>> = (0..m.rows)
        .map(|i| (0..m.cols).map(|j| m.get(i, j)).collect())
        .collect();
    json!(rows)
}

/// |value − target| ≤ 3·se + abs_tol, reported with its z-score.
fn band_check(name: &str, value: f64, target: f64, se: f64, abs_tol: f64) -> CheckResult {
    let dev = (value - target).abs();
    let bound = 3.0 * se + abs_tol;
    check(
        name,
        dev <= bound,
        format!("value {value:.6}, target {target:.6}, |dev| {dev:.3e} vs 3·SE+tol {bound:.3e}"),
    )
}

fn abort_check(fraction: f64) -> CheckResult {
    check(
        "abort_fraction",
        fraction < 1e-3,
        format!("{fraction:.6} (must stay below 0.1%)"),
    )
}

// ---------------------------------------------------------------------------
// Output writers
// ---------------------------------------------------------------------------

fn write_report(outputs: &OutputsConfig, report: &ScenarioReport) -> Result<()> {
    if let Some(path) = &outputs.report_json {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut file = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, report)
            .map_err(|e| Error::Parse(format!("report serialization: {e}")))?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

fn write_ensemble_csv(
    outputs: &OutputsConfig,
    lineage: &SeedLineage,
    stream_id: u64,
    values: &[Option<f64>],
) -> Result<()> {
    if let Some(path) = &outputs.ensemble_csv {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut file = fs::File::create(path)?;
        writeln!(file, "path_id,seed,y_1")?;
        for (p, v) in values.iter().enumerate() {
            if let Some(y) = v {
                writeln!(file, "{},{},{}", p, lineage.seed(stream_id, p as u64), y)?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// Key, one-line description, and the limit each scenario measures against.
pub struct ScenarioInfo {
    pub key: &'static str,
    pub description: &'static str,
    pub target: &'static str,
}

/// Alphabetical scenario registry.
pub const SCENARIOS: &[ScenarioInfo] = &[
    ScenarioInfo {
        key: "fastslow_levy_area",
        description: "3-state rotating chain, planar observable: antisymmetric area correction",
        target: "antisym(ν̂) matches the summed-autocovariance oracle within 5%",
    },
    ScenarioInfo {
        key: "fastslow_markov",
        description: "two-state chain driving a linear recursion: Green-Kubo variance and drift",
        target: "D̂, ν̂ vs summed autocovariances; terminal mean exp(D/2 + ν)",
    },
    ScenarioInfo {
        key: "kolmogorov_scaling",
        description: "moment-scaling exponents of increment ensembles at both levels",
        target: "fitted γ̂ inside the declared band (½ Brownian, H fractional)",
    },
    ScenarioInfo {
        key: "lemma31_random_walk",
        description: "i.i.d. random-walk recursion, linear field: geometric Brownian limit",
        target: "mean 1, second moment e, area correction −D/2",
    },
    ScenarioInfo {
        key: "modified_equation_rate",
        description: "pathwise distance between the recursion and its modified equation",
        target: "sup-error slope ≥ 0.25 in Δ; ≤ c_cal·(1∧C⁴)·Δ^{3γ−1}",
    },
    ScenarioInfo {
        key: "subdiffusion_fbm",
        description: "fractional increments with midpoint level-2 data (exploratory)",
        target: "area-correction analogue reported without an asserted limit",
    },
    ScenarioInfo {
        key: "theta_scheme_gbm",
        description: "θ-scheme on Brownian noise, linear field",
        target: "terminal mean e^{1−θ}; distribution matches exp(W + ½ − θ)",
    },
    ScenarioInfo {
        key: "tightness_probe",
        description: "exceedance curves of the discrete Hölder norm across mesh sizes",
        target: "bounded envelope below the critical exponent; growth above it",
    },
];

/// Runs the scenario named in the config and writes its declared outputs.
pub fn run_scenario(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let report = match config.scenario.as_str() {
        "fastslow_levy_area" => fastslow_levy_area(config)?,
        "fastslow_markov" => fastslow_markov(config)?,
        "kolmogorov_scaling" => kolmogorov_scaling(config)?,
        "lemma31_random_walk" => lemma31_random_walk(config)?,
        "modified_equation_rate" => modified_equation_rate(config)?,
        "subdiffusion_fbm" => subdiffusion_fbm(config)?,
        "theta_scheme_gbm" => theta_scheme_gbm(config)?,
        "tightness_probe" => tightness_probe_scenario(config)?,
        other => {
            return Err(Error::config(
                "scenario",
                format!(
                    "unknown scenario `{other}`; known: {:?}",
                    SCENARIOS.iter().map(|s| s.key).collect::<Vec<_>>()
                ),
            ))
        }
    };
    write_report(&config.outputs(), &report)?;
    Ok(report)
}

fn linear_bundle() -> VectorFieldBundle {
    VectorFieldBundle::new(Arc::new(ScalarLinear { sigma: 1.0 }))
}

fn unit_partition(config: &ExperimentConfig, default_n: usize) -> Result<Arc<Partition>> {
    let t = config.t_end_or(1.0);
    if t != 1.0 {
        return Err(Error::config(
            "partition.t_end",
            "this scenario's closed-form targets are calibrated to T = 1",
        ));
    }
    Ok(Arc::new(Partition::uniform(config.n_or(default_n), 1.0)?))
}

struct PathStats {
    terminal_y: f64,
    signature: TensorPair,
}

/// Shared driver: run the linear recursion over generated noise, return
/// per-path terminal values and signatures.
fn linear_recursion_ensemble(
    spec: &NoiseSpec,
    partition: &Arc<Partition>,
    paths: usize,
    lineage: &SeedLineage,
    stream_id: u64,
    convention: SumConvention,
) -> super::runner::EnsembleOutcome<PathStats> {
    let bundle = linear_bundle();
    run_paths(paths, |p| {
        let stream = generate(spec, partition, lineage.seed(stream_id, p as u64), convention)?;
        let rsf = RoughStepFunction::build(partition.clone(), stream, convention)?;
        let y = run_terminal(&bundle, &rsf, &[1.0], None)?;
        Ok(PathStats {
            terminal_y: y[0],
            signature: rsf.terminal(),
        })
    })
}

fn lemma31_random_walk(config: &ExperimentConfig) -> Result<ScenarioReport> {
    config.scenario_params(&[])?;
    if config.field.is_some() {
        return Err(Error::config(
            "field",
            "lemma31_random_walk pins the linear field; the GBM moments depend on it",
        ));
    }
    let partition = unit_partition(config, 4096)?;
    let paths = config.paths_or(200_000);
    let lineage = SeedLineage::new(config.master_seed_or(0));
    let convention = config.convention();
    let spec = match config.noise_spec()? {
        Some(s) => s,
        None => NoiseSpec::new(
            NoiseKind::IidWalk {
                dim: 1,
                dist: crate::noise::WalkDistribution::Rademacher,
            },
            Xi2Rule::Zero,
        )?,
    };
    if spec.dim() != 1 {
        return Err(Error::config("noise", "scenario is one-dimensional"));
    }
    let limit = analytic_limit(&spec)?;
    let outcome = linear_recursion_ensemble(&spec, &partition, paths, &lineage, 0, convention);
    let ys: Vec<f64> = outcome.survivors().map(|s| s.terminal_y).collect();
    let y2s: Vec<f64> = ys.iter().map(|y| y * y).collect();
    let terminals: Vec<TensorPair> = outcome.survivors().map(|s| s.signature.clone()).collect();
    let (mean_y, se_y) = mean_and_se(&ys);
    let (mean_y2, se_y2) = mean_and_se(&y2s);
    let nu = empirical_nu_from_terminals(&terminals, 1.0, None)?;
    let e = std::f64::consts::E;

    let checks = vec![
        check(
            "terminal_mean",
            (mean_y - 1.0).abs() <= 0.02,
            format!("mean Y(1) = {mean_y:.6} (target 1 ± 0.02, SE {se_y:.2e})"),
        ),
        check(
            "terminal_second_moment",
            (mean_y2 - e).abs() <= 0.05 * e,
            format!("mean Y(1)² = {mean_y2:.6} (target e ± 5%, SE {se_y2:.2e})"),
        ),
        band_check(
            "nu_hat",
            nu.nu_hat.get(0, 0),
            limit.nu.get(0, 0),
            nu.nu_se.get(0, 0),
            1e-12,
        ),
        abort_check(outcome.abort_fraction()),
    ];
    let values: Vec<Option<f64>> = outcome
        .per_path
        .iter()
        .map(|o| o.as_ref().map(|s| s.terminal_y))
        .collect();
    write_ensemble_csv(&config.outputs(), &lineage, 0, &values)?;
    Ok(ScenarioReport {
        scenario: "lemma31_random_walk".into(),
        master_seed: lineage.master(),
        paths,
        abort_fraction: outcome.abort_fraction(),
        pass: false,
        checks,
        measurements: json!({
            "n": partition.num_cells(),
            "mean_y": mean_y,
            "se_y": se_y,
            "mean_y2": mean_y2,
            "se_y2": se_y2,
            "nu_hat": nu.nu_hat.get(0, 0),
            "nu_se": nu.nu_se.get(0, 0),
            "d_hat": nu.d_hat.get(0, 0),
            "d_se": nu.d_se.get(0, 0),
            "analytic_nu": limit.nu.get(0, 0),
            "analytic_d": limit.d_matrix.get(0, 0),
        }),
    }
    .finish())
}

fn theta_scheme_gbm(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let params = config.scenario_params(&["theta"])?;
    let theta = param_f64(params, "theta")?.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::config("params.theta", "must lie in [0, 1]"));
    }
    if config.noise.is_some() || config.field.is_some() {
        return Err(Error::config(
            "noise",
            "theta_scheme_gbm pins Brownian noise and the linear field",
        ));
    }
    let partition = unit_partition(config, 4096)?;
    let n = partition.num_cells();
    let paths = config.paths_or(100_000);
    let lineage = SeedLineage::new(config.master_seed_or(0));
    let bundle = linear_bundle();

    let outcome = run_paths(paths, |p| {
        let mut rng = lineage.rng(0, p as u64);
        let mut xis = vec![0.0; n];
        for (j, slot) in xis.iter_mut().enumerate() {
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            *slot = partition.spacing(j).sqrt() * z;
        }
        let rsf = theta_step_function(1, partition.clone(), &xis, theta)?;
        let y = run_terminal(&bundle, &rsf, &[1.0], None)?;
        Ok(y[0])
    });
    let ys: Vec<f64> = outcome.survivors().copied().collect();
    let (mean_y, se_y) = mean_and_se(&ys);
    let target_mean = (1.0 - theta).exp();

    // Exact-in-law oracle for the limit: exp(W(1) + ½ − θ).
    let oracle: Vec<f64> = (0..paths)
        .map(|p| {
            let mut rng = lineage.rng(1, p as u64);
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            (z + 0.5 - theta).exp()
        })
        .collect();
    let ks = ks_distance(&ys, &oracle)?;
    let ks_bound = ks_threshold_99(ys.len(), oracle.len());

    let checks = vec![
        band_check("terminal_mean", mean_y, target_mean, se_y, 0.0),
        check(
            "ks_vs_exact_limit",
            ks <= ks_bound,
            format!("KS = {ks:.5} vs 99% threshold {ks_bound:.5}"),
        ),
        abort_check(outcome.abort_fraction()),
    ];
    let values: Vec<Option<f64>> = outcome.per_path.clone();
    write_ensemble_csv(&config.outputs(), &lineage, 0, &values)?;
    Ok(ScenarioReport {
        scenario: "theta_scheme_gbm".into(),
        master_seed: lineage.master(),
        paths,
        abort_fraction: outcome.abort_fraction(),
        pass: false,
        checks,
        measurements: json!({
            "n": n,
            "theta": theta,
            "mean_y": mean_y,
            "se_y": se_y,
            "target_mean": target_mean,
            "ks": ks,
            "ks_threshold_99": ks_bound,
        }),
    }
    .finish())
}

fn fastslow_markov(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let params = config.scenario_params(&["stay_prob"])?;
    let stay_prob = param_f64(params, "stay_prob")?.unwrap_or(0.75);
    if config.field.is_some() {
        return Err(Error::config(
            "field",
            "fastslow_markov pins the linear field",
        ));
    }
    let partition = unit_partition(config, 8192)?;
    let paths = config.paths_or(100_000);
    let lineage = SeedLineage::new(config.master_seed_or(0));
    let convention = config.convention();
    let spec = match config.noise_spec()? {
        Some(s) => s,
        None => NoiseSpec::new(
            NoiseKind::MarkovChain(crate::noise::MarkovChainSpec::two_state(stay_prob)?),
            Xi2Rule::Zero,
        )?,
    };
    if spec.dim() != 1 {
        return Err(Error::config("noise", "scenario is one-dimensional"));
    }
    let limit = analytic_limit(&spec)?;
    let outcome = linear_recursion_ensemble(&spec, &partition, paths, &lineage, 0, convention);
    let ys: Vec<f64> = outcome.survivors().map(|s| s.terminal_y).collect();
    let terminals: Vec<TensorPair> = outcome.survivors().map(|s| s.signature.clone()).collect();
    let (mean_y, se_y) = mean_and_se(&ys);
    let nu = empirical_nu_from_terminals(&terminals, 1.0, None)?;
    let d_target = limit.d_matrix.get(0, 0);
    let nu_target = limit.nu.get(0, 0);
    let mean_target = (0.5 * d_target + nu_target).exp();

    let checks = vec![
        band_check("d_hat", nu.d_hat.get(0, 0), d_target, nu.d_se.get(0, 0), 1e-12),
        band_check("nu_hat", nu.nu_hat.get(0, 0), nu_target, nu.nu_se.get(0, 0), 1e-12),
        band_check("terminal_mean", mean_y, mean_target, se_y, 0.0),
        abort_check(outcome.abort_fraction()),
    ];
    let values: Vec<Option<f64>> = outcome
        .per_path
        .iter()
        .map(|o| o.as_ref().map(|s| s.terminal_y))
        .collect();
    write_ensemble_csv(&config.outputs(), &lineage, 0, &values)?;
    Ok(ScenarioReport {
        scenario: "fastslow_markov".into(),
        master_seed: lineage.master(),
        paths,
        abort_fraction: outcome.abort_fraction(),
        pass: false,
        checks,
        measurements: json!({
            "n": partition.num_cells(),
            "stay_prob": stay_prob,
            "d_hat": nu.d_hat.get(0, 0),
            "d_se": nu.d_se.get(0, 0),
            "nu_hat": nu.nu_hat.get(0, 0),
            "nu_se": nu.nu_se.get(0, 0),
            "mean_y": mean_y,
            "se_y": se_y,
            "analytic_d": d_target,
            "analytic_nu": nu_target,
            "target_mean": mean_target,
            "derivation": limit.derivation,
        }),
    }
    .finish())
}

fn fastslow_levy_area(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let params = config.scenario_params(&["lambda"])?;
    let lambda = param_f64(params, "lambda")?.unwrap_or(0.5);
    let partition = unit_partition(config, 8192)?;
    let paths = config.paths_or(100_000);
    let lineage = SeedLineage::new(config.master_seed_or(0));
    let convention = config.convention();
    let spec = match config.noise_spec()? {
        Some(s) => s,
        None => NoiseSpec::new(
            NoiseKind::MarkovChain(crate::noise::MarkovChainSpec::lazy_cycle_three(lambda)?),
            Xi2Rule::Zero,
        )?,
    };
    let d = spec.dim();
    if d < 2 {
        return Err(Error::config(
            "noise",
            "the area-correction witness needs d ≥ 2",
        ));
    }
    let limit = analytic_limit(&spec)?;
    let outcome = run_paths(paths, |p| {
        let stream = generate(&spec, &partition, lineage.seed(0, p as u64), convention)?;
        let rsf = RoughStepFunction::build(partition.clone(), stream, convention)?;
        Ok(rsf.terminal())
    });
    let terminals: Vec<TensorPair> = outcome.survivors().cloned().collect();
    let nu = empirical_nu_from_terminals(&terminals, 1.0, None)?;
    // Per-path antisymmetric statistic in the (0, 1) plane for an exact SE.
    let anti_samples: Vec<f64> = terminals
        .iter()
        .map(|t| {
            let z01 = t.m.get(0, 1) - 0.5 * t.a[0] * t.a[1];
            let z10 = t.m.get(1, 0) - 0.5 * t.a[1] * t.a[0];
            0.5 * (z01 - z10)
        })
        .collect();
    let (anti_hat, anti_se) = mean_and_se(&anti_samples);
    let anti_target = limit.nu.antisym_part().get(0, 1);

    let rel_err = (anti_hat - anti_target).abs() / anti_target.abs().max(1e-300);
    let checks = vec![
        check(
            "antisym_nonzero",
            anti_hat.abs() > 3.0 * anti_se,
            format!("antisym(ν̂)₀₁ = {anti_hat:.6}, 3·SE = {:.2e}", 3.0 * anti_se),
        ),
        check(
            "antisym_matches_series",
            rel_err <= 0.05,
            format!("relative error {rel_err:.4} vs series value {anti_target:.6} (≤ 5%)"),
        ),
        abort_check(outcome.abort_fraction()),
    ];
    Ok(ScenarioReport {
        scenario: "fastslow_levy_area".into(),
        master_seed: lineage.master(),
        paths,
        abort_fraction: outcome.abort_fraction(),
        pass: false,
        checks,
        measurements: json!({
            "n": partition.num_cells(),
            "lambda": lambda,
            "nu_hat": mat_json(&nu.nu_hat),
            "nu_se": mat_json(&nu.nu_se),
            "d_hat": mat_json(&nu.d_hat),
            "antisym_hat": anti_hat,
            "antisym_se": anti_se,
            "analytic_nu": mat_json(&limit.nu),
            "analytic_d": mat_json(&limit.d_matrix),
            "antisym_target": anti_target,
            "derivation": limit.derivation,
        }),
    }
    .finish())
}

fn modified_equation_rate(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let fix = &fixtures().modified_equation_rate;
    let params = config.scenario_params(&["gamma", "seeds", "odesteps"])?;
    let gamma = param_f64(params, "gamma")?.unwrap_or(fix.gamma);
    let seeds = param_usize(params, "seeds")?.unwrap_or(fix.seeds);
    let odesteps = param_usize(params, "odesteps")?.unwrap_or(fix.odesteps);
    let n_grid = config.n_grid_or(&fix.n_grid);
    let master_seed = config.master_seed_or(0);
    if config.convention() != SumConvention::EarlierLater {
        return Err(Error::config(
            "convention",
            "the rate calibration is frozen for the default convention",
        ));
    }
    let details = super::probes::rate_details(master_seed, gamma, &n_grid, seeds, odesteps)?;

    let mut slopes: Vec<f64> = details.iter().map(|d| d.slope).collect();
    slopes.sort_by(f64::total_cmp);
    let median_slope = if slopes.len() % 2 == 1 {
        slopes[slopes.len() / 2]
    } else {
        0.5 * (slopes[slopes.len() / 2 - 1] + slopes[slopes.len() / 2])
    };
    let certified = details
        .iter()
        .filter(|d| d.points.iter().all(|p| p.sup_error <= fix.c_cal * p.k_bound))
        .count();
    let pass_fraction = certified as f64 / seeds as f64;
    let mean_r2 = details.iter().map(|d| d.r2).sum::<f64>() / details.len() as f64;

    let checks = vec![
        check(
            "median_slope",
            median_slope >= fix.min_median_slope,
            format!(
                "median log-log slope {median_slope:.4} (theory 3γ−1 = {:.2}, floor {})",
                3.0 * gamma - 1.0,
                fix.min_median_slope
            ),
        ),
        check(
            "certified_fraction",
            pass_fraction >= fix.min_pass_fraction,
            format!(
                "{certified}/{seeds} seeds within c_cal·K·Δ^(3γ−1), c_cal = {}",
                fix.c_cal
            ),
        ),
    ];
    let per_n_mean_sup: Vec<f64> = (0..n_grid.len())
        .map(|i| details.iter().map(|d| d.points[i].sup_error).sum::<f64>() / details.len() as f64)
        .collect();
    Ok(ScenarioReport {
        scenario: "modified_equation_rate".into(),
        master_seed,
        paths: seeds,
        abort_fraction: 0.0,
        pass: false,
        checks,
        measurements: json!({
            "gamma": gamma,
            "n_grid": n_grid,
            "slopes": slopes,
            "median_slope": median_slope,
            "mean_r2": mean_r2,
            "certified_fraction": pass_fraction,
            "c_cal": fix.c_cal,
            "mean_sup_error_per_n": per_n_mean_sup,
        }),
    }
    .finish())
}

fn subdiffusion_fbm(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let params = config.scenario_params(&["hurst"])?;
    let hurst = param_f64(params, "hurst")?.unwrap_or(0.4);
    let partition = unit_partition(config, 1024)?;
    let paths = config.paths_or(10_000);
    let lineage = SeedLineage::new(config.master_seed_or(0));
    let convention = config.convention();
    let spec = match config.noise_spec()? {
        Some(s) => s,
        None => NoiseSpec::new(
            NoiseKind::Fbm { dim: 1, hurst },
            Xi2Rule::Theta(0.5),
        )?,
    };
    let outcome = run_paths(paths, |p| {
        let stream = generate(&spec, &partition, lineage.seed(0, p as u64), convention)?;
        let rsf = RoughStepFunction::build(partition.clone(), stream, convention)?;
        Ok(rsf.terminal())
    });
    let terminals: Vec<TensorPair> = outcome.survivors().cloned().collect();
    let caveat = "non-martingale limit — interpret as E𝕏 minus the symmetric baseline".to_string();
    let nu = empirical_nu_from_terminals(&terminals, 1.0, Some(caveat.clone()))?;
    // The open question stays open: estimates are reported, nothing is
    // asserted beyond clean execution.
    let checks = vec![abort_check(outcome.abort_fraction())];
    Ok(ScenarioReport {
        scenario: "subdiffusion_fbm".into(),
        master_seed: lineage.master(),
        paths,
        abort_fraction: outcome.abort_fraction(),
        pass: false,
        checks,
        measurements: json!({
            "n": partition.num_cells(),
            "hurst": hurst,
            "nu_analogue": mat_json(&nu.nu_hat),
            "nu_analogue_se": mat_json(&nu.nu_se),
            "mean_quadratic": mat_json(&nu.d_hat),
            "caveat": caveat,
        }),
    }
    .finish())
}

fn kolmogorov_scaling(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let params = config.scenario_params(&["q", "band_lo", "band_hi", "pair_budget"])?;
    let q = param_f64(params, "q")?.unwrap_or(8.0);
    let pair_budget = param_usize(params, "pair_budget")?.unwrap_or(20_000);
    let partition = unit_partition(config, 1024)?;
    let paths = config.paths_or(512);
    let lineage = SeedLineage::new(config.master_seed_or(0));
    let convention = config.convention();
    let spec = match config.noise_spec()? {
        Some(s) => s,
        None => NoiseSpec::new(NoiseKind::Brownian { dim: 1 }, Xi2Rule::Theta(0.5))?,
    };
    let (default_lo, default_hi) = match &spec.kind {
        NoiseKind::Brownian { .. } => (0.45, 0.55),
        NoiseKind::Fbm { hurst, .. } => (hurst - 0.05, hurst + 0.05),
        _ => (f64::NAN, f64::NAN),
    };
    let band_lo = param_f64(params, "band_lo")?.unwrap_or(default_lo);
    let band_hi = param_f64(params, "band_hi")?.unwrap_or(default_hi);
    if !(band_lo.is_finite() && band_hi.is_finite()) {
        return Err(Error::config(
            "params.band_lo",
            "no default band for this noise kind; pass band_lo/band_hi",
        ));
    }
    let outcome = run_paths(paths, |p| {
        let stream = generate(&spec, &partition, lineage.seed(0, p as u64), convention)?;
        RoughStepFunction::build(partition.clone(), stream, convention)
    });
    let ensemble: Vec<RoughStepFunction> = outcome.survivors().cloned().collect();
    let report = kolmogorov_exponent(&ensemble, q, pair_budget)?;
    let in_band = |g: f64| g >= band_lo && g <= band_hi;
    let checks = vec![
        check(
            "gamma_level1",
            in_band(report.gamma_hat_level1),
            format!(
                "γ̂₁ = {:.4} in [{band_lo}, {band_hi}], r² = {:.4}",
                report.gamma_hat_level1, report.r2_level1
            ),
        ),
        check(
            "gamma_level2",
            in_band(report.gamma_hat_level2),
            format!(
                "γ̂₂ = {:.4} in [{band_lo}, {band_hi}], r² = {:.4}",
                report.gamma_hat_level2, report.r2_level2
            ),
        ),
        abort_check(outcome.abort_fraction()),
    ];
    Ok(ScenarioReport {
        scenario: "kolmogorov_scaling".into(),
        master_seed: lineage.master(),
        paths,
        abort_fraction: outcome.abort_fraction(),
        pass: false,
        checks,
        measurements: serde_json::to_value(&report)
            .map_err(|e| Error::Parse(e.to_string()))?,
    }
    .finish())
}

fn tightness_probe_scenario(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let fix = &fixtures().tightness;
    let params = config.scenario_params(&["gamma", "expect"])?;
    let expect = param_str(params, "expect")?.unwrap_or("bounded").to_string();
    let default_gamma = if expect == "growth" { fix.negative_gamma } else { 0.45 };
    let gamma = param_f64(params, "gamma")?.unwrap_or(default_gamma);
    let n_grid = config.n_grid_or(&fix.n_grid);
    let paths = config.paths_or(fix.paths);
    let master_seed = config.master_seed_or(0);
    let convention = config.convention();
    if convention != SumConvention::EarlierLater {
        return Err(Error::config(
            "convention",
            "tightness fixtures are frozen for the default convention",
        ));
    }
    let spec = match config.noise_spec()? {
        Some(s) => s,
        None => NoiseSpec::new(NoiseKind::Brownian { dim: 1 }, Xi2Rule::Zero)?,
    };
    let curves = diagnostics::tightness_probe(&spec, &n_grid, gamma, &fix.m_grid, paths, master_seed)?;

    let mut checks = Vec::new();
    match expect.as_str() {
        "bounded" => {
            // All curves must sit inside the frozen envelope.
            let mut worst = f64::NEG_INFINITY;
            let mut ok = true;
            for curve in &curves {
                for (p, env) in curve.p_hat.iter().zip(&fix.envelope) {
                    worst = worst.max(p - env);
                    ok &= p <= env;
                }
            }
            checks.push(check(
                "curves_within_envelope",
                ok,
                format!("max exceedance above frozen envelope: {worst:.4}"),
            ));
        }
        "growth" => {
            let m_idx = fix
                .m_grid
                .iter()
                .position(|m| *m == fix.negative_m_star)
                .ok_or_else(|| Error::InvalidArgument("M* not on the fixture grid".into()))?;
            let first = curves.first().map(|c| c.p_hat[m_idx]).unwrap_or(0.0);
            let last = curves.last().map(|c| c.p_hat[m_idx]).unwrap_or(0.0);
            checks.push(check(
                "exceedance_grows_in_n",
                last - first >= fix.negative_min_growth,
                format!(
                    "P̂(C > {}) grew from {first:.4} (n = {}) to {last:.4} (n = {})",
                    fix.negative_m_star,
                    n_grid.first().unwrap(),
                    n_grid.last().unwrap()
                ),
            ));
        }
        other => {
            return Err(Error::config(
                "params.expect",
                format!("unknown expectation `{other}` (bounded | growth)"),
            ))
        }
    }

    if let Some(path) = &config.outputs().curves_csv {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut file = fs::File::create(path)?;
        diagnostics::write_tightness_csv(&mut file, &curves)?;
    }
    let curves_json: Vec<serde_json::Value> = curves
        .iter()
        .map(|c| json!({"n": c.n, "m_grid": c.m_grid, "p_hat": c.p_hat}))
        .collect();
    Ok(ScenarioReport {
        scenario: "tightness_probe".into(),
        master_seed,
        paths,
        abort_fraction: 0.0,
        pass: false,
        checks,
        measurements: json!({
            "gamma": gamma,
            "expect": expect,
            "n_grid": n_grid,
            "curves": curves_json,
        }),
    }
    .finish())
}

// ---------------------------------------------------------------------------
// Scenario listing and the noise-only estimator entry point
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRow {
    pub key: String,
    pub description: String,
    pub target: String,
    /// PASS / FAIL from the last written report, or "—".
    pub status: String,
}

/// Alphabetical rows, with status looked up from `<dir>/<key>.json`.
pub fn list_scenarios(reports_dir: Option<&Path>) -> Vec<ScenarioRow> {
    SCENARIOS
        .iter()
        .map(|info| {
            let status = reports_dir
                .map(|dir| dir.join(format!("{}.json", info.key)))
                .filter(|p| p.exists())
                .and_then(|p| fs::read_to_string(p).ok())
                .and_then(|text| serde_json::from_str::<ScenarioReport>(&text).ok())
                .map(|r| if r.pass { "PASS".to_string() } else { "FAIL".to_string() })
                .unwrap_or_else(|| "—".to_string());
            ScenarioRow {
                key: info.key.to_string(),
                description: info.description.to_string(),
                target: info.target.to_string(),
                status,
            }
        })
        .collect()
}

/// Noise-only area-correction estimate from a config (`estimate-nu`).
pub fn estimate_nu(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let spec = config
        .noise_spec()?
        .ok_or_else(|| Error::config("noise", "estimate-nu needs a noise block"))?;
    let partition = Arc::new(Partition::uniform(config.n_or(1024), config.t_end_or(1.0))?);
    let paths = config.paths_or(10_000);
    let lineage = SeedLineage::new(config.master_seed_or(0));
    let convention = config.convention();
    let t_end = partition.t_end();
    let outcome = run_paths(paths, |p| {
        let stream = generate(&spec, &partition, lineage.seed(0, p as u64), convention)?;
        let rsf = RoughStepFunction::build(partition.clone(), stream, convention)?;
        Ok(rsf.terminal())
    });
    let terminals: Vec<TensorPair> = outcome.survivors().cloned().collect();
    let caveat = matches!(spec.kind, NoiseKind::Fbm { .. })
        .then(|| "non-martingale limit — interpret as E𝕏 minus the symmetric baseline".to_string());
    let nu = empirical_nu_from_terminals(&terminals, t_end, caveat.clone())?;
    let analytic = analytic_limit(&spec).ok();
    let mut checks = vec![abort_check(outcome.abort_fraction())];
    if let Some(limit) = &analytic {
        let z = nu.max_z_against(&limit.nu);
        checks.push(check(
            "nu_within_3se_of_analytic",
            z <= 3.0 || nu.nu_se.data.iter().all(|s| *s < 1e-12),
            format!("max |ν̂ − ν|/SE = {z:.3}"),
        ));
    }
    let report = ScenarioReport {
        scenario: "estimate_nu".into(),
        master_seed: lineage.master(),
        paths,
        abort_fraction: outcome.abort_fraction(),
        pass: false,
        checks,
        measurements: json!({
            "n": partition.num_cells(),
            "t_end": t_end,
            "nu_hat": mat_json(&nu.nu_hat),
            "nu_se": mat_json(&nu.nu_se),
            "d_hat": mat_json(&nu.d_hat),
            "d_se": mat_json(&nu.d_se),
            "analytic_nu": analytic.as_ref().map(|l| mat_json(&l.nu)),
            "analytic_d": analytic.as_ref().map(|l| mat_json(&l.d_matrix)),
            "caveat": caveat,
        }),
    }
    .finish();
    write_report(&config.outputs(), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_alphabetical_and_complete() {
        let keys: Vec<&str> = SCENARIOS.iter().map(|s| s.key).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
        for required in [
            "lemma31_random_walk",
            "theta_scheme_gbm",
            "fastslow_markov",
            "modified_equation_rate",
            "subdiffusion_fbm",
            "tightness_probe",
        ] {
            assert!(keys.contains(&required), "missing {required}");
        }
    }

    #[test]
    fn unknown_scenario_is_a_config_error() {
        let cfg = ExperimentConfig::from_json(r#"{"version": 1, "scenario": "nope"}"#).unwrap();
        let err = run_scenario(&cfg).unwrap_err();
        assert!(err.to_string().contains("unknown scenario"), "{err}");
    }

    #[test]
    fn small_lemma31_run_passes() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "version": 1,
                "scenario": "lemma31_random_walk",
                "partition": {"n": 256},
                "mc": {"paths": 4000, "master_seed": 1}
            }"#,
        )
        .unwrap();
        let report = run_scenario(&cfg).unwrap();
        assert!(report.pass, "{:?}", report.checks);
        assert_eq!(report.paths, 4000);
    }

    #[test]
    fn small_theta_run_reports_ks() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "version": 1,
                "scenario": "theta_scheme_gbm",
                "partition": {"n": 256},
                "mc": {"paths": 2000, "master_seed": 3},
                "params": {"theta": 1.0}
            }"#,
        )
        .unwrap();
        let report = run_scenario(&cfg).unwrap();
        let m = report.measurements.as_object().unwrap();
        assert!((m["target_mean"].as_f64().unwrap() - 1.0).abs() < 1e-15);
        assert!(m["ks"].as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn estimate_nu_smoke() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "version": 1,
                "scenario": "estimate_nu",
                "noise": {"kind": "iid_walk", "params": {"dist": "rademacher"}},
                "partition": {"n": 128},
                "mc": {"paths": 2000, "master_seed": 5}
            }"#,
        )
        .unwrap();
        let report = estimate_nu(&cfg).unwrap();
        assert!(report.pass, "{:?}", report.checks);
        let nu = report.measurements["nu_hat"][0][0].as_f64().unwrap();
        assert!((nu + 0.5).abs() < 0.05, "nu_hat = {nu}");
    }

    #[test]
    fn report_lookup_in_listing() {
        let dir = tempfile::tempdir().unwrap();
        let rows = list_scenarios(Some(dir.path()));
        assert!(rows.iter().all(|r| r.status == "—"));
        let report = ScenarioReport {
            scenario: "theta_scheme_gbm".into(),
            master_seed: 0,
            paths: 1,
            abort_fraction: 0.0,
            pass: true,
            checks: vec![],
            measurements: json!({}),
        };
        fs::write(
            dir.path().join("theta_scheme_gbm.json"),
            serde_json::to_string(&report).unwrap(),
        )
        .unwrap();
        let rows = list_scenarios(Some(dir.path()));
        let row = rows.iter().find(|r| r.key == "theta_scheme_gbm").unwrap();
        assert_eq!(row.status, "PASS");
    }
}
