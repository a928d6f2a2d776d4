//! Statistical verification layer: moment-scaling exponents, tightness
//! probes for the discrete Hölder norm, two-sample distances, and
//! log-log rate fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pairwise_mean;
use crate::noise::{generate, NoiseSpec};
use crate::rough_step::{Partition, RoughStepFunction, SumConvention};
use crate::seeds::SeedLineage;

/// Fitted moment-scaling exponents at both signature levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentScalingReport {
    pub q: f64,
    pub gamma_hat_level1: f64,
    pub gamma_hat_level2: f64,
    pub r2_level1: f64,
    pub r2_level2: f64,
    /// min of the two fit qualities.
    pub r2: f64,
    pub pairs_used: usize,
}

/// Empirical exceedance curve of the discrete Hölder norm for one mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TightnessCurve {
    pub n: usize,
    pub gamma: f64,
    pub m_grid: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub paths: usize,
}

/// Deterministic pair sample: all mesh pairs when they fit the budget,
/// otherwise strided pairs stratified by dyadic gap size so every length
/// scale keeps the same weight in the fit.
fn select_pairs(n: usize, budget: usize) -> Vec<(usize, usize)> {
    let total = n * (n + 1) / 2;
    let mut pairs = Vec::new();
    if total <= budget {
        for l in 0..n {
            for k in (l + 1)..=n {
                pairs.push((l, k));
            }
        }
        return pairs;
    }
    let groups: Vec<(usize, usize)> = {
        let mut g = Vec::new();
        let mut lo = 1usize;
        while lo <= n {
            let hi = (2 * lo - 1).min(n);
            g.push((lo, hi));
            lo *= 2;
        }
        g
    };
    let per_group = (budget / groups.len()).max(1);
    for (lo, hi) in groups {
        let gaps = hi - lo + 1;
        // Spread the group budget over gaps, then over start offsets.
        let gap_count = gaps.min(per_group).max(1);
        let per_gap = (per_group / gap_count).max(1);
        for gi in 0..gap_count {
            let m = lo + gi * gaps / gap_count;
            let starts = (n + 1 - m).min(per_gap);
            for si in 0..starts {
                let l = si * (n - m) / starts.max(1);
                pairs.push((l, l + m));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Fits the Kolmogorov moment scalings over an ensemble of step functions
/// on a shared partition:
/// level 1 regresses `log (Ê|X_{l,k}|^q)^{1/q}` on `log Δt`,
/// level 2 regresses `log (Ê|𝕏_{l,k}|^{q/2})^{2/q}` on `log Δt` and halves
/// the slope so both estimates target γ.
pub fn kolmogorov_exponent(
    ensemble: &[RoughStepFunction],
    q: f64,
    pair_budget: usize,
) -> Result<MomentScalingReport> {
    if ensemble.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "need ≥ 100 paths, got {}",
            ensemble.len()
        )));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidArgument("q must be positive".into()));
    }
    let first = &ensemble[0];
    let n = first.partition().num_cells();
    let d = first.dim();
    for r in ensemble {
        if r.partition().taus() != first.partition().taus() || r.dim() != d {
            return Err(Error::DimensionMismatch(
                "ensemble paths live on different partitions".into(),
            ));
        }
    }
    let pairs = select_pairs(n, pair_budget.max(16));
    let stats: Vec<(f64, f64, f64)> = pairs
        .par_iter()
        .map(|&(l, k)| {
            let dt = first.partition().tau(k) - first.partition().tau(l);
            let mut m1 = Vec::with_capacity(ensemble.len());
            let mut m2 = Vec::with_capacity(ensemble.len());
            for path in ensemble {
                let inc = path.increment_mesh(l, k);
                let a2: f64 = inc.a.iter().map(|v| v * v).sum();
                let x2: f64 = inc.m.data.iter().map(|v| v * v).sum();
                m1.push(a2.sqrt().powf(q));
                m2.push(x2.sqrt().powf(q / 2.0));
            }
            let e1 = pairwise_mean(&m1).powf(1.0 / q);
            let e2 = pairwise_mean(&m2).powf(2.0 / q);
            (dt, e1, e2)
        })
        .collect();
    let mut logs1 = Vec::new();
    let mut logs2 = Vec::new();
    for (dt, e1, e2) in &stats {
        if *e1 > 0.0 {
            logs1.push((dt.ln(), e1.ln()));
        }
        if *e2 > 0.0 {
            logs2.push((dt.ln(), e2.ln()));
        }
    }
    let (s1, _, r2_1) = linear_fit(&logs1)?;
    let (s2, _, r2_2) = linear_fit(&logs2)?;
    Ok(MomentScalingReport {
        q,
        gamma_hat_level1: s1,
        gamma_hat_level2: s2 / 2.0,
        r2_level1: r2_1,
        r2_level2: r2_2,
        r2: r2_1.min(r2_2),
        pairs_used: stats.len(),
    })
}

/// Empirical exceedance curves `P̂(C_{γ,n} > M)` over a mesh grid. Paths
/// are generated from the spec with lineage stream = position of n in the
/// grid, so adding mesh sizes never reshuffles existing draws.
pub fn tightness_probe(
    spec: &NoiseSpec,
    n_grid: &[usize],
    gamma: f64,
    m_grid: &[f64],
    paths_per_n: usize,
    master_seed: u64,
) -> Result<Vec<TightnessCurve>> {
    if m_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("M grid must be increasing".into()));
    }
    let lineage = SeedLineage::new(master_seed);
    let mut curves = Vec::with_capacity(n_grid.len());
    for (slot, &n) in n_grid.iter().enumerate() {
        let partition = std::sync::Arc::new(Partition::uniform(n, 1.0)?);
        let norms: Vec<f64> = (0..paths_per_n)
            .into_par_iter()
            .map(|p| {
                let stream = generate(
                    spec,
                    &partition,
                    lineage.seed(slot as u64, p as u64),
                    SumConvention::EarlierLater,
                )?;
                let rsf = RoughStepFunction::build(
                    partition.clone(),
                    stream,
                    SumConvention::EarlierLater,
                )?;
                rsf.discrete_holder_norm(gamma)
            })
            .collect::<Result<Vec<f64>>>()?;
        let p_hat: Vec<f64> = m_grid
            .iter()
            .map(|m| norms.iter().filter(|c| **c > *m).count() as f64 / paths_per_n as f64)
            .collect();
        debug_assert!(p_hat.windows(2).all(|w| w[1] <= w[0]));
        curves.push(TightnessCurve {
            n,
            gamma,
            m_grid: m_grid.to_vec(),
            p_hat,
            paths: paths_per_n,
        });
    }
    Ok(curves)
}

/// Writes tightness curves as CSV rows `M,n,p_hat`.
pub fn write_tightness_csv<W: std::io::Write>(
    w: &mut W,
    curves: &[TightnessCurve],
) -> Result<()> {
    writeln!(w, "M,n,p_hat")?;
    for curve in curves {
        for (m, p) in curve.m_grid.iter().zip(&curve.p_hat) {
            writeln!(w, "{m},{},{p}", curve.n)?;
        }
    }
    Ok(())
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.is_empty() || samples_b.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // Advance every entry tied at the current smallest value so ties
        // never produce a spurious CDF gap.
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// 99%-level two-sample KS threshold `1.628·√((m+n)/(m·n))`.
pub fn ks_threshold_99(m: usize, n: usize) -> f64 {
    1.628 * (((m + n) as f64) / ((m * n) as f64)).sqrt()
}

/// Least-squares power-law fit on log–log axes; returns
/// (slope, intercept, r²).
pub fn rate_fit(deltas: &[f64], errors: &[f64]) -> Result<(f64, f64, f64)> {
    if deltas.len() != errors.len() || deltas.len() < 3 {
        return Err(Error::InvalidArgument(
            "rate fit needs ≥ 3 matched points".into(),
        ));
    }
    if deltas.iter().chain(errors).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(
            "rate fit needs strictly positive values".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .zip(errors)
        .map(|(d, e)| (d.ln(), e.ln()))
        .collect();
    linear_fit(&pts)
}

fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::InvalidArgument("fit needs ≥ 2 points".into()));
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("degenerate fit: constant abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, intercept, r2))
}

/// Kendall rank statistics of ys against xs (no ties expected), with the
/// exact one-sided p-value `P(τ_null ≥ τ̂)` from the Mahonian inversion
/// distribution. Used to test estimates for monotone growth.
pub fn kendall_trend(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let m = xs.len();
    if m != ys.len() || m < 3 {
        return Err(Error::InvalidArgument(
            "trend test needs ≥ 3 matched points".into(),
        ));
    }
    if m > 64 {
        return Err(Error::InvalidArgument("trend test capped at 64 points".into()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let seq: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let mut inversions = 0usize;
    for i in 0..m {
        for j in (i + 1)..m {
            if seq[j] < seq[i] {
                inversions += 1;
            }
        }
    }
    let total = m * (m - 1) / 2;
    let tau = 1.0 - 2.0 * inversions as f64 / total as f64;
    // Mahonian counts: number of permutations of m with k inversions.
    let mut counts = vec![1.0f64];
    for step in 1..m {
        let mut next = vec![0.0; counts.len() + step];
        for (k, c) in counts.iter().enumerate() {
            for add in 0..=step {
                next[k + add] += c;
            }
        }
        counts = next;
    }
    let all: f64 = counts.iter().sum();
    let p_greater: f64 = counts[..=inversions].iter().sum::<f64>() / all;
    Ok((tau, p_greater))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::rough_step::IncrementStream;
    use std::sync::Arc;

    #[test]
    fn pair_selection_exact_below_budget() {
        let pairs = select_pairs(16, 1000);
        assert_eq!(pairs.len(), 16 * 17 / 2);
        let pairs = select_pairs(64, 100);
        assert!(pairs.len() <= 140);
        assert!(pairs.iter().all(|(l, k)| l < k && *k <= 64));
        // Every dyadic gap group is represented.
        for (lo, hi) in [(1, 1), (2, 3), (4, 7), (8, 15), (16, 31), (32, 63)] {
            assert!(
                pairs.iter().any(|(l, k)| {
                    let g = k - l;
                    g >= lo && g <= hi
                }),
                "group [{lo},{hi}] unrepresented"
            );
        }
    }

    #[test]
    fn deterministic_linear_path_has_unit_exponent() {
        // ξ_j = Δ: a Lipschitz path with |X_{l,k}| = dt exactly.
        let n = 64;
        let partition = Arc::new(Partition::uniform(n, 1.0).unwrap());
        let mut cells = Vec::new();
        for j in 0..n {
            cells.push((vec![partition.spacing(j)], Mat::zeros(1, 1)));
        }
        let stream = IncrementStream::from_cells(1, &cells).unwrap();
        let rsf = RoughStepFunction::build(partition, stream, SumConvention::EarlierLater).unwrap();
        let ensemble: Vec<RoughStepFunction> = (0..100).map(|_| rsf.clone()).collect();
        let report = kolmogorov_exponent(&ensemble, 4.0, 4000).unwrap();
        assert!((report.gamma_hat_level1 - 1.0).abs() < 1e-6);
        assert!(report.r2_level1 > 0.999999);
    }

    #[test]
    fn kolmogorov_requires_ensemble() {
        let partition = Arc::new(Partition::uniform(4, 1.0).unwrap());
        let stream = IncrementStream::zeros(1, 4);
        let rsf = RoughStepFunction::build(partition, stream, SumConvention::EarlierLater).unwrap();
        assert!(kolmogorov_exponent(&[rsf], 4.0, 100).is_err());
    }

    #[test]
    fn ks_basics() {
        let a = vec![0.1, 0.4, 0.8];
        assert_eq!(ks_distance(&a, &a).unwrap(), 0.0);
        assert!(ks_distance(&a, &[]).is_err());
        // Uniform(0,1) vs Uniform(0.5,1.5): sup CDF gap ≈ 0.5.
        let m = 20_000;
        let u1: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
        let u2: Vec<f64> = u1.iter().map(|v| v + 0.5).collect();
        let ks = ks_distance(&u1, &u2).unwrap();
        assert!((ks - 0.5).abs() < 0.01, "ks = {ks}");
    }

    #[test]
    fn ks_shift_invariance() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 * 0.618).sin()).collect();
        let b: Vec<f64> = (0..400).map(|i| (i as f64 * 0.271).cos()).collect();
        let base = ks_distance(&a, &b).unwrap();
        let shift = 3.7;
        let a2: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let b2: Vec<f64> = b.iter().map(|v| v + shift).collect();
        assert_eq!(base, ks_distance(&a2, &b2).unwrap());
        assert_eq!(base, ks_distance(&b, &a).unwrap());
    }

    #[test]
    fn rate_fit_exact_power_laws() {
        let deltas: Vec<f64> = (1..8).map(|k| 1.0 / (1 << k) as f64).collect();
        let (slope, _, r2) = rate_fit(&deltas, &deltas).unwrap();
        assert!((slope - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        let errors: Vec<f64> = deltas.iter().map(|d| d.powf(0.35)).collect();
        let (slope, _, _) = rate_fit(&deltas, &errors).unwrap();
        assert!((slope - 0.35).abs() < 1e-10);
        assert!(rate_fit(&deltas[..2], &errors[..2]).is_err());
        assert!(rate_fit(&[1.0, 2.0, -3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn kendall_exact_small_cases() {
        // Strictly increasing: τ = 1, p = 1/m!.
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [0.1, 0.2, 0.3, 0.4];
        let (tau, p) = kendall_trend(&xs, &ys).unwrap();
        assert_eq!(tau, 1.0);
        assert!((p - 1.0 / 24.0).abs() < 1e-12);
        // Strictly decreasing: τ = −1, p = 1.
        let ys_rev = [0.4, 0.3, 0.2, 0.1];
        let (tau, p) = kendall_trend(&xs, &ys_rev).unwrap();
        assert_eq!(tau, -1.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn scaling_data_changes_intercept_not_slope() {
        let n = 32;
        let partition = Arc::new(Partition::uniform(n, 1.0).unwrap());
        let mut cells = Vec::new();
        for j in 0..n {
            cells.push((vec![partition.spacing(j)], Mat::zeros(1, 1)));
        }
        let stream = IncrementStream::from_cells(1, &cells).unwrap();
        let rsf =
            RoughStepFunction::build(partition.clone(), stream, SumConvention::EarlierLater)
                .unwrap();
        let lambda = 7.0;
        let mut scaled = rsf.stream().clone();
        for j in 0..n {
            for v in scaled.xi_mut(j) {
                *v *= lambda;
            }
        }
        let rsf2 =
            RoughStepFunction::build(partition, scaled, SumConvention::EarlierLater).unwrap();
        let e1: Vec<RoughStepFunction> = (0..100).map(|_| rsf.clone()).collect();
        let e2: Vec<RoughStepFunction> = (0..100).map(|_| rsf2.clone()).collect();
        let r1 = kolmogorov_exponent(&e1, 4.0, 2000).unwrap();
        let r2 = kolmogorov_exponent(&e2, 4.0, 2000).unwrap();
        assert!((r1.gamma_hat_level1 - r2.gamma_hat_level1).abs() < 1e-10);
    }
}
