//! Pinned-seed probe experiments shared by the scenario layer, the
//! calibration tool, and the acceptance suite. Keeping them in one place
//! guarantees that a frozen fixture constant always refers to exactly the
//! computation that produced it.

use std::sync::Arc;

use crate::diagnostics::rate_fit;
use crate::error::{Error, Result};
use crate::fields::{ScalarLinear, VectorFieldBundle};
use crate::lift::lift;
use crate::noise::{generate, NoiseKind, NoiseSpec, Xi2Rule};
use crate::rde::{solve_modified_equation, solve_rde, RdeConfig};
use crate::recursion::{run, RemainderRule};
use crate::rough_step::{Partition, RoughStepFunction, SumConvention};
use crate::seeds::SeedLineage;

use super::runner::run_paths;

fn linear_bundle() -> VectorFieldBundle {
    VectorFieldBundle::new(Arc::new(ScalarLinear { sigma: 1.0 }))
}

fn brownian_euler_path(
    partition: &Arc<Partition>,
    seed: u64,
    convention: SumConvention,
) -> Result<RoughStepFunction> {
    let spec = NoiseSpec::new(NoiseKind::Brownian { dim: 1 }, Xi2Rule::Zero)?;
    let stream = generate(&spec, partition, seed, convention)?;
    RoughStepFunction::build(partition.clone(), stream, convention)
}

#[derive(Debug, Clone)]
pub struct RatePoint {
    pub n: usize,
    pub delta: f64,
    pub sup_error: f64,
    /// `(1 ∧ C_n⁴)·Δ^{3γ−1}`.
    pub k_bound: f64,
    pub c_n: f64,
}

#[derive(Debug, Clone)]
pub struct RateSeedDetail {
    pub seed_index: usize,
    pub slope: f64,
    pub r2: f64,
    pub points: Vec<RatePoint>,
}

/// Distance between the recursion and its modified equation across a mesh
/// grid, per pinned seed: the raw material behind the rate criterion and
/// the c_cal calibration. Lineage: stream = position of n in the grid,
/// path = seed index.
pub fn rate_details(
    master_seed: u64,
    gamma: f64,
    n_grid: &[usize],
    seeds: usize,
    odesteps: usize,
) -> Result<Vec<RateSeedDetail>> {
    let lineage = SeedLineage::new(master_seed);
    let bundle = linear_bundle();
    let outcome = run_paths(seeds, |s| {
        let mut points = Vec::with_capacity(n_grid.len());
        for (ni, &n) in n_grid.iter().enumerate() {
            let partition = Arc::new(Partition::uniform(n, 1.0)?);
            let rsf = brownian_euler_path(
                &partition,
                lineage.seed(ni as u64, s as u64),
                SumConvention::EarlierLater,
            )?;
            let recursion = run(&bundle, &rsf, &[1.0], None)?;
            let lrp = lift(&rsf);
            let modified = solve_modified_equation(&bundle, &lrp, &[1.0], odesteps)?;
            let sup_error = recursion.sup_distance(&modified.trajectory)?;
            let c_n = rsf.discrete_holder_norm(gamma)?;
            let delta = partition.mesh();
            let k_bound = 1.0f64.min(c_n.powi(4)) * delta.powf(3.0 * gamma - 1.0);
            points.push(RatePoint {
                n,
                delta,
                sup_error,
                k_bound,
                c_n,
            });
        }
        let deltas: Vec<f64> = points.iter().map(|p| p.delta).collect();
        let sups: Vec<f64> = points.iter().map(|p| p.sup_error.max(1e-300)).collect();
        let (slope, _, r2) = rate_fit(&deltas, &sups)?;
        Ok(RateSeedDetail {
            seed_index: s,
            slope,
            r2,
            points,
        })
    });
    if !outcome.aborts.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "rate probe aborted on seeds {:?}",
            outcome.aborts
        )));
    }
    Ok(outcome.per_path.into_iter().flatten().collect())
}

/// Sup distance between the substepped Davie solve and the modified
/// equation on the pinned Brownian Euler fixture (criterion: cross-solver
/// consistency).
pub fn cross_solver_distance(
    n: usize,
    seed: u64,
    substeps: usize,
    odesteps: usize,
) -> Result<f64> {
    let partition = Arc::new(Partition::uniform(n, 1.0)?);
    let rsf = brownian_euler_path(&partition, seed, SumConvention::EarlierLater)?;
    let bundle = linear_bundle();
    let lrp = lift(&rsf);
    let davie = solve_rde(&bundle, &lrp, &[1.0], &RdeConfig::new(substeps, 0.45)?)?;
    let modified = solve_modified_equation(&bundle, &lrp, &[1.0], odesteps)?;
    davie.sup_distance(&modified.trajectory)
}

/// Remainder robustness: drive the same Brownian path with and without a
/// remainder pinned at its bound `0.1·Δ^{3γ}` (signs alternating), and
/// report `sup|Y_r − Y| / Δ^{3γ−1}` per mesh size.
pub fn remainder_robustness_ratios(
    master_seed: u64,
    gamma: f64,
    n_grid: &[usize],
) -> Result<Vec<f64>> {
    let lineage = SeedLineage::new(master_seed);
    let bundle = linear_bundle();
    let mut ratios = Vec::with_capacity(n_grid.len());
    for (ni, &n) in n_grid.iter().enumerate() {
        let partition = Arc::new(Partition::uniform(n, 1.0)?);
        let rsf = brownian_euler_path(
            &partition,
            lineage.seed(ni as u64, 0),
            SumConvention::EarlierLater,
        )?;
        let clean = run(&bundle, &rsf, &[1.0], None)?;
        let c = 0.1;
        let lambda = 3.0 * gamma;
        let rule = RemainderRule::new(c, lambda, move |step, _y, mesh| {
            let sign = if step % 2 == 0 { 1.0 } else { -1.0 };
            vec![sign * c * mesh.powf(lambda)]
        })?;
        let bumped = run(&bundle, &rsf, &[1.0], Some(&rule))?;
        let sup = clean.sup_distance(&bumped)?;
        ratios.push(sup / partition.mesh().powf(3.0 * gamma - 1.0));
    }
    Ok(ratios)
}

#[derive(Debug, Clone)]
pub struct HolderRatioPoint {
    pub n: usize,
    /// Mean over pinned paths of lift-estimate / discrete norm.
    pub ratio: f64,
}

/// Hölder-norm comparability of the lift across mesh sizes on pinned
/// Brownian paths (criterion: lift fidelity).
pub fn holder_ratio_series(
    master_seed: u64,
    gamma: f64,
    levels: u32,
    n_grid: &[usize],
    paths_per_n: usize,
) -> Result<Vec<HolderRatioPoint>> {
    let lineage = SeedLineage::new(master_seed);
    let mut series = Vec::with_capacity(n_grid.len());
    for (ni, &n) in n_grid.iter().enumerate() {
        let partition = Arc::new(Partition::uniform(n, 1.0)?);
        let outcome = run_paths(paths_per_n, |p| {
            let rsf = brownian_euler_path(
                &partition,
                lineage.seed(ni as u64, p as u64),
                SumConvention::EarlierLater,
            )?;
            let discrete = rsf.discrete_holder_norm(gamma)?;
            let estimate = lift(&rsf).holder_norm_estimate(gamma, levels)?;
            Ok(estimate / discrete)
        });
        if !outcome.aborts.is_empty() {
            return Err(Error::InvalidArgument("holder ratio probe aborted".into()));
        }
        let ratios: Vec<f64> = outcome.per_path.into_iter().flatten().collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        series.push(HolderRatioPoint { n, ratio: mean });
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_details_shapes() {
        let details = rate_details(0, 0.45, &[16, 32, 64], 3, 4).unwrap();
        assert_eq!(details.len(), 3);
        for d in &details {
            assert_eq!(d.points.len(), 3);
            assert!(d.points.iter().all(|p| p.sup_error >= 0.0 && p.k_bound > 0.0));
        }
    }

    #[test]
    fn cross_solver_distance_small() {
        let dist = cross_solver_distance(32, 0, 8, 4).unwrap();
        assert!(dist.is_finite() && dist >= 0.0);
        assert!(dist < 0.1, "solvers far apart: {dist}");
    }
}
