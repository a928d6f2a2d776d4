//! Recomputes the frozen constants in `fixtures/acceptance.json` from the
//! pinned seeds and prints the fixture document plus the measurements
//! behind each choice. Run after any change that affects the numerics,
//! then paste the output block into the fixture file.

use roughsim_core::diagnostics::{kendall_trend, tightness_probe};
use roughsim_core::harness::probes::{
    cross_solver_distance, holder_ratio_series, rate_details, remainder_robustness_ratios,
};
use roughsim_core::noise::{NoiseKind, NoiseSpec, Xi2Rule};

fn main() {
    let gamma = 0.45;
    let rate_grid: Vec<usize> = vec![64, 128, 256, 512, 1024, 2048, 4096];
    let tight_grid: Vec<usize> = vec![64, 128, 256, 512, 1024];
    let m_grid: Vec<f64> = vec![2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0];

    eprintln!("== modified equation rate (32 seeds, grid {rate_grid:?}) ==");
    let details = rate_details(0, gamma, &rate_grid, 32, 8).unwrap();
    let mut worst_ratio: f64 = 0.0;
    let mut slopes: Vec<f64> = Vec::new();
    for d in &details {
        slopes.push(d.slope);
        for p in &d.points {
            worst_ratio = worst_ratio.max(p.sup_error / p.k_bound);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let median = 0.5 * (slopes[15] + slopes[16]);
    let c_cal = worst_ratio * 1.25;
    eprintln!("   worst sup/K ratio {worst_ratio:.6}, median slope {median:.4}, slopes {:.3?}", slopes);

    eprintln!("== cross solver band (n = 256, seed 0) ==");
    let dist = cross_solver_distance(256, 0, 64, 8).unwrap();
    let band = dist * 10.0;
    eprintln!("   measured distance {dist:.6e} -> band {band:.6e}");

    eprintln!("== tightness envelope (gamma {gamma}) ==");
    let spec = NoiseSpec::new(NoiseKind::Brownian { dim: 1 }, Xi2Rule::Zero).unwrap();
    let curves = tightness_probe(&spec, &tight_grid, gamma, &m_grid, 400, 0).unwrap();
    let mut envelope = vec![0.0f64; m_grid.len()];
    for c in &curves {
        eprintln!("   n = {:5}: {:?}", c.n, c.p_hat);
        for (slot, p) in envelope.iter_mut().zip(&c.p_hat) {
            *slot = slot.max(*p);
        }
    }
    let envelope: Vec<f64> = envelope.iter().map(|p| (p + 0.05).min(1.0)).collect();
    eprintln!("   envelope (+0.05): {envelope:?}");

    let neg_gamma = 0.6;
    eprintln!("== negative control (gamma {neg_gamma}) ==");
    let neg = tightness_probe(&spec, &tight_grid, neg_gamma, &m_grid, 400, 0).unwrap();
    for c in &neg {
        eprintln!("   n = {:5}: {:?}", c.n, c.p_hat);
    }
    let growths: Vec<f64> = (0..m_grid.len())
        .map(|i| neg.last().unwrap().p_hat[i] - neg.first().unwrap().p_hat[i])
        .collect();
    eprintln!("   growth (last n − first n) per M: {growths:?}");
    let (best_idx, best_growth) = growths
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let m_star = m_grid[best_idx];
    let min_growth = best_growth * 0.5;
    eprintln!("   chosen M* = {m_star}, min growth {min_growth:.4}");

    eprintln!("== remainder robustness ==");
    let ratios = remainder_robustness_ratios(0, gamma, &rate_grid).unwrap();
    eprintln!("   sup|Y_r − Y| / Δ^(3γ−1) per n: {ratios:?}");
    let c_sup = ratios.iter().fold(0.0f64, |a, b| a.max(*b)) * 1.5;

    eprintln!("== holder ratio series (levels 6, 4 paths per n) ==");
    let series = holder_ratio_series(0, gamma, 6, &rate_grid, 4).unwrap();
    let ns: Vec<f64> = series.iter().map(|p| p.n as f64).collect();
    let ratios7: Vec<f64> = series.iter().map(|p| p.ratio).collect();
    eprintln!("   ratios: {ratios7:?}");
    let (tau, p_value) = kendall_trend(&ns, &ratios7).unwrap();
    eprintln!("   kendall tau {tau:.3}, one-sided p against growth {p_value:.4}");
    let max_ratio = ratios7.iter().fold(0.0f64, |a, b| a.max(*b)) * 1.3;

    let doc = serde_json::json!({
        "modified_equation_rate": {
            "gamma": gamma,
            "odesteps": 8,
            "seeds": 32,
            "n_grid": rate_grid,
            "c_cal": round6(c_cal),
            "min_median_slope": 0.25,
            "min_pass_fraction": 0.95
        },
        "cross_solver": {
            "n": 256,
            "seed": 0,
            "substeps": 64,
            "odesteps": 8,
            "band": round_sig(band)
        },
        "tightness": {
            "paths": 400,
            "n_grid": tight_grid,
            "m_grid": m_grid,
            "envelope": envelope.iter().map(|p| round6(*p)).collect::<Vec<f64>>(),
            "negative_gamma": neg_gamma,
            "negative_m_star": m_star,
            "negative_min_growth": round6(min_growth)
        },
        "remainder_robustness": {
            "gamma": gamma,
            "c_sup": round6(c_sup)
        },
        "holder_ratio": {
            "gamma": gamma,
            "levels": 6,
            "max_ratio": round6(max_ratio)
        }
    });
    println!("{}", serde_json::to_string_pretty(&doc).unwrap());
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn round_sig(v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let exp = v.abs().log10().floor();
    let scale = 10f64.powf(5.0 - exp);
    (v * scale).round() / scale
}
