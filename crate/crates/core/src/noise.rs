//! Noise generators for the recursion: i.i.d. walks, Brownian increments
//! with several level-2 rules, fractional Brownian increments with exact
//! covariance, and stationary finite-state Markov chains whose limiting
//! covariance D and area correction ν are analytically summable.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{mean_and_se, Mat};
use crate::rough_step::{IncrementStream, Partition, RoughStepFunction, SumConvention};
use crate::tensor::TensorPair;

/// Largest mesh size for which the dense fractional covariance
/// factorization is attempted.
pub const FBM_MAX_CELLS: usize = 4096;

/// Centered one-dimensional draw distributions for the i.i.d. walk. All
/// built-ins have moments of every order, so the q > 6 requirement holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WalkDistribution {
    /// ±1 with probability ½ each.
    Rademacher,
    /// N(0, 1).
    StandardNormal,
    /// Uniform on [−w, w].
    UniformCentered { half_width: f64 },
}

impl WalkDistribution {
    pub fn variance(&self) -> f64 {
        match self {
            WalkDistribution::Rademacher => 1.0,
            WalkDistribution::StandardNormal => 1.0,
            WalkDistribution::UniformCentered { half_width } => half_width * half_width / 3.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            WalkDistribution::Rademacher => {
                if rng.random::<u32>() & 1 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            WalkDistribution::StandardNormal => StandardNormal.sample(rng),
            WalkDistribution::UniformCentered { half_width } => {
                rng.random_range(-*half_width..*half_width)
            }
        }
    }
}

/// Stationary finite-state Markov chain with a centered vector observable.
#[derive(Debug, Clone)]
pub struct MarkovChainSpec {
    pub states: usize,
    pub dim: usize,
    /// Row-stochastic transition matrix, row-major, states×states.
    pub transition: Vec<f64>,
    /// Stationary law μ with μP = μ.
    pub stationary: Vec<f64>,
    /// Observable v(s), row-major states×dim; must be centered under μ.
    pub observable: Vec<f64>,
}

impl MarkovChainSpec {
    /// Two-state chain on {+1, −1} with stay probability p and the
    /// identity observable.
    pub fn two_state(stay_prob: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&stay_prob) || stay_prob <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "stay probability {stay_prob} outside (0, 1)"
            )));
        }
        let q = 1.0 - stay_prob;
        Ok(MarkovChainSpec {
            states: 2,
            dim: 1,
            transition: vec![stay_prob, q, q, stay_prob],
            stationary: vec![0.5, 0.5],
            observable: vec![1.0, -1.0],
        })
    }

    /// Lazy cyclic three-state chain `P = (1−λ)I + λ·shift` with the
    /// planar observable v(s) = (cos(2πs/3), sin(2πs/3)). Its lag
    /// autocovariances are scaled rotations, so the area correction has a
    /// genuinely antisymmetric part.
    pub fn lazy_cycle_three(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "laziness {lambda} outside (0, 1)"
            )));
        }
        let mut transition = vec![0.0; 9];
        for s in 0..3 {
            transition[s * 3 + s] = 1.0 - lambda;
            transition[s * 3 + (s + 1) % 3] = lambda;
        }
        let mut observable = Vec::with_capacity(6);
        for s in 0..3 {
            let angle = 2.0 * std::f64::consts::PI * s as f64 / 3.0;
            observable.push(angle.cos());
            observable.push(angle.sin());
        }
        Ok(MarkovChainSpec {
            states: 3,
            dim: 2,
            transition,
            stationary: vec![1.0 / 3.0; 3],
            observable,
        })
    }

    fn validate(&self) -> Result<()> {
        const TOL: f64 = 1e-12;
        let s = self.states;
        if s == 0 || self.dim == 0 {
            return Err(Error::InvalidSpec("markov chain needs states and dim ≥ 1".into()));
        }
        if self.transition.len() != s * s
            || self.stationary.len() != s
            || self.observable.len() != s * self.dim
        {
            return Err(Error::InvalidSpec("markov chain array shapes".into()));
        }
        for row in 0..s {
            let mut sum = 0.0;
            for col in 0..s {
                let p = self.transition[row * s + col];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidSpec(format!(
                        "transition[{row},{col}] = {p} not a probability"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > TOL {
                return Err(Error::InvalidSpec(format!(
                    "transition row {row} sums to {sum}"
                )));
            }
        }
        let mass: f64 = self.stationary.iter().sum();
        if (mass - 1.0).abs() > TOL || self.stationary.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidSpec("stationary law is not a probability".into()));
        }
        for col in 0..s {
            let mut acc = 0.0;
            for row in 0..s {
                acc += self.stationary[row] * self.transition[row * s + col];
            }
            if (acc - self.stationary[col]).abs() > TOL {
                return Err(Error::InvalidSpec(format!(
                    "law is not stationary: (μP)[{col}] = {acc} vs μ[{col}] = {}",
                    self.stationary[col]
                )));
            }
        }
        for b in 0..self.dim {
            let mut acc = 0.0;
            for st in 0..s {
                acc += self.stationary[st] * self.observable[st * self.dim + b];
            }
            if acc.abs() > TOL {
                return Err(Error::InvalidSpec(format!(
                    "observable component {b} not centered: mean = {acc}"
                )));
            }
        }
        Ok(())
    }

    /// Lag-j autocovariance run `C_0, C_1, …, C_{len−1}` with
    /// `C_j^{αβ} = Σ_s μ(s) v^α(s) (P^j v^β)(s)`.
    pub fn autocovariances(&self, len: usize) -> Vec<Mat> {
        let s = self.states;
        let d = self.dim;
        let mut w = self.observable.clone(); // P^j v, starts at j = 0
        let mut out = Vec::with_capacity(len);
        let mut next = vec![0.0; s * d];
        for _ in 0..len {
            let mut c = Mat::zeros(d, d);
            for st in 0..s {
                let weight = self.stationary[st];
                for alpha in 0..d {
                    let va = self.observable[st * d + alpha];
                    for beta in 0..d {
                        c.data[alpha * d + beta] += weight * va * w[st * d + beta];
                    }
                }
            }
            out.push(c);
            next.fill(0.0);
            for row in 0..s {
                for col in 0..s {
                    let p = self.transition[row * s + col];
                    if p != 0.0 {
                        for b in 0..d {
                            next[row * d + b] += p * w[col * d + b];
                        }
                    }
                }
            }
            std::mem::swap(&mut w, &mut next);
        }
        out
    }

    /// Modulus of the subdominant transition eigenvalue (the spectral
    /// radius on the centered subspace).
    fn subdominant_modulus(&self) -> f64 {
        let s = self.states;
        let p = DMatrix::from_row_slice(s, s, &self.transition);
        let eigs = p.complex_eigenvalues();
        let mut rho: f64 = 0.0;
        for e in eigs.iter() {
            let modulus = e.norm();
            // Skip the Perron eigenvalue at 1.
            if (e.re - 1.0).abs() < 1e-9 && e.im.abs() < 1e-9 {
                continue;
            }
            rho = rho.max(modulus);
        }
        rho
    }
}

/// Level-2 rule attached to a noise kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Xi2Rule {
    /// Ξ ≡ 0 (left-point / Euler-type data).
    Zero,
    /// Ξ_j = (1−θ)·ξ_j ⊗ ξ_j.
    Theta(f64),
    /// Brownian only: m sub-increments per cell, Ξ_j the left-Riemann
    /// iterated sum over them. Bias O(1/m) toward the exact Lévy area.
    Refined(usize),
}

/// Which process drives the increments.
#[derive(Debug, Clone)]
pub enum NoiseKind {
    /// ξ_j = n^{−1/2} · draw, i.i.d. coordinates. Calibrated to a unit
    /// horizon: the walk CLT normalizes by the cell count, not the cell
    /// width.
    IidWalk { dim: usize, dist: WalkDistribution },
    /// ξ_j ~ N(0, (τ_{j+1} − τ_j)·I).
    Brownian { dim: usize },
    /// Exact-covariance fractional Gaussian increments, iid coordinates.
    Fbm { dim: usize, hurst: f64 },
    /// ξ_j = n^{−1/2} v(state_j) along a stationary chain.
    MarkovChain(MarkovChainSpec),
}

/// Full noise specification: process plus level-2 rule.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub xi2: Xi2Rule,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, xi2: Xi2Rule) -> Result<Self> {
        let spec = NoiseSpec { kind, xi2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            NoiseKind::IidWalk { dim, .. } => *dim,
            NoiseKind::Brownian { dim } => *dim,
            NoiseKind::Fbm { dim, .. } => *dim,
            NoiseKind::MarkovChain(mc) => mc.dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            NoiseKind::IidWalk { dim, dist } => {
                if *dim == 0 {
                    return Err(Error::InvalidSpec("walk dimension must be ≥ 1".into()));
                }
                if let WalkDistribution::UniformCentered { half_width } = dist {
                    if !(half_width.is_finite() && *half_width > 0.0) {
                        return Err(Error::InvalidSpec("uniform half width must be > 0".into()));
                    }
                }
            }
            NoiseKind::Brownian { dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidSpec("brownian dimension must be ≥ 1".into()));
                }
            }
            NoiseKind::Fbm { dim, hurst } => {
                if *dim == 0 {
                    return Err(Error::InvalidSpec("fbm dimension must be ≥ 1".into()));
                }
                if !(*hurst > 1.0 / 3.0 && *hurst < 1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "hurst = {hurst} outside (1/3, 1)"
                    )));
                }
            }
            NoiseKind::MarkovChain(mc) => mc.validate()?,
        }
        match self.xi2 {
            Xi2Rule::Zero => {}
            Xi2Rule::Theta(theta) => {
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::InvalidSpec(format!("θ = {theta} outside [0, 1]")));
                }
            }
            Xi2Rule::Refined(m) => {
                if m == 0 {
                    return Err(Error::InvalidSpec("refined(m) needs m ≥ 1".into()));
                }
                if !matches!(self.kind, NoiseKind::Brownian { .. }) {
                    return Err(Error::InvalidSpec(
                        "refined(m) level-2 data is only defined for brownian noise".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

type FbmCacheKey = (u64, u64);

fn fbm_factor_cache() -> &'static Mutex<HashMap<FbmCacheKey, Arc<DMatrix<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<FbmCacheKey, Arc<DMatrix<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn hash_taus(taus: &[f64]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for t in taus {
        t.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Covariance of fractional increments over cells [s1,t1] and [s2,t2]:
/// `½(|t1−s2|^{2H} + |s1−t2|^{2H} − |t1−t2|^{2H} − |s1−s2|^{2H})`.
fn fbm_increment_cov(hurst: f64, s1: f64, t1: f64, s2: f64, t2: f64) -> f64 {
    let p = 2.0 * hurst;
    0.5 * ((t1 - s2).abs().powf(p) + (s1 - t2).abs().powf(p)
        - (t1 - t2).abs().powf(p)
        - (s1 - s2).abs().powf(p))
}

fn fbm_cholesky(hurst: f64, partition: &Partition) -> Result<Arc<DMatrix<f64>>> {
    let n = partition.num_cells();
    if n > FBM_MAX_CELLS {
        return Err(Error::InvalidSpec(format!(
            "fbm mesh {n} exceeds the dense-factorization guard {FBM_MAX_CELLS}"
        )));
    }
    let key = (hurst.to_bits(), hash_taus(partition.taus()));
    if let Some(hit) = fbm_factor_cache().lock().unwrap().get(&key) {
        return Ok(hit.clone());
    }
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] = fbm_increment_cov(
                hurst,
                partition.tau(i),
                partition.tau(i + 1),
                partition.tau(j),
                partition.tau(j + 1),
            );
        }
    }
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::InvalidSpec("fractional covariance not positive definite".into()))?;
    let factor = Arc::new(chol.l());
    fbm_factor_cache()
        .lock()
        .unwrap()
        .insert(key, factor.clone());
    Ok(factor)
}

/// Generates the increment stream for one path. Bit-reproducible for a
/// fixed (spec, partition, seed, convention).
pub fn generate(
    spec: &NoiseSpec,
    partition: &Partition,
    seed: u64,
    convention: SumConvention,
) -> Result<IncrementStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim();
    let n = partition.num_cells();
    let mut stream = IncrementStream::zeros(d, n);

    match &spec.kind {
        NoiseKind::IidWalk { dist, .. } => {
            let scale = 1.0 / (n as f64).sqrt();
            for j in 0..n {
                for v in stream.xi_mut(j) {
                    *v = scale * dist.sample(&mut rng);
                }
            }
        }
        NoiseKind::Brownian { .. } => {
            if let Xi2Rule::Refined(m) = spec.xi2 {
                refined_brownian(&mut stream, partition, m, convention, &mut rng);
                return Ok(stream);
            }
            for j in 0..n {
                let sd = partition.spacing(j).sqrt();
                for v in stream.xi_mut(j) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = sd * z;
                }
            }
        }
        NoiseKind::Fbm { hurst, .. } => {
            let factor = fbm_cholesky(*hurst, partition)?;
            let mut z = vec![0.0; n];
            for coord in 0..d {
                for slot in z.iter_mut() {
                    *slot = StandardNormal.sample(&mut rng);
                }
                // Lower-triangular multiply, row by row.
                for j in 0..n {
                    let mut acc = 0.0;
                    for (k, zk) in z.iter().enumerate().take(j + 1) {
                        acc += factor[(j, k)] * zk;
                    }
                    stream.xi_mut(j)[coord] = acc;
                }
            }
        }
        NoiseKind::MarkovChain(mc) => {
            let scale = 1.0 / (n as f64).sqrt();
            let mut state = sample_categorical(&mc.stationary, rng.random::<f64>());
            for j in 0..n {
                let xi = stream.xi_mut(j);
                for (b, slot) in xi.iter_mut().enumerate() {
                    *slot = scale * mc.observable[state * mc.dim + b];
                }
                let row = &mc.transition[state * mc.states..(state + 1) * mc.states];
                state = sample_categorical(row, rng.random::<f64>());
            }
        }
    }

    if let Xi2Rule::Theta(theta) = spec.xi2 {
        let w = 1.0 - theta;
        for j in 0..n {
            let xi: Vec<f64> = stream.xi(j).to_vec();
            let m = stream.xi2_mut(j);
            for alpha in 0..d {
                for beta in 0..d {
                    m[alpha * d + beta] = w * xi[alpha] * xi[beta];
                }
            }
        }
    }
    Ok(stream)
}

fn refined_brownian(
    stream: &mut IncrementStream,
    partition: &Partition,
    m: usize,
    convention: SumConvention,
    rng: &mut ChaCha8Rng,
) {
    let d = stream.dim();
    let n = partition.num_cells();
    let mut sub = vec![0.0; m * d];
    for j in 0..n {
        let sd = (partition.spacing(j) / m as f64).sqrt();
        for v in sub.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = sd * z;
        }
        let mut running = vec![0.0; d];
        let xi2 = stream.xi2_mut(j);
        xi2.fill(0.0);
        for a in 0..m {
            let delta = &sub[a * d..(a + 1) * d];
            match convention {
                SumConvention::EarlierLater => {
                    for alpha in 0..d {
                        for beta in 0..d {
                            xi2[alpha * d + beta] += running[alpha] * delta[beta];
                        }
                    }
                }
                SumConvention::LaterEarlier => {
                    for alpha in 0..d {
                        for beta in 0..d {
                            xi2[alpha * d + beta] += delta[alpha] * running[beta];
                        }
                    }
                }
            }
            for (r, dv) in running.iter_mut().zip(delta) {
                *r += dv;
            }
        }
        stream.xi_mut(j).copy_from_slice(&running);
    }
}

fn sample_categorical(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Closed-form limit data for a noise spec.
#[derive(Debug, Clone)]
pub struct AnalyticLimit {
    pub d_matrix: Mat,
    pub nu: Mat,
    pub derivation: String,
}

/// Relative tail target for the autocovariance series.
const SERIES_TOL: f64 = 1e-12;

/// Green–Kubo style limit: covariance D and area correction ν.
///
/// Only i.i.d. walks and Markov chains have closed-form limits here; the
/// Markov series is summed until the geometric tail bound (from the
/// subdominant eigenvalue modulus) drops below 1e−12 relative.
pub fn analytic_limit(spec: &NoiseSpec) -> Result<AnalyticLimit> {
    spec.validate()?;
    let theta_weight = match spec.xi2 {
        Xi2Rule::Zero => 0.0,
        Xi2Rule::Theta(theta) => 1.0 - theta,
        Xi2Rule::Refined(_) => {
            return Err(Error::InvalidSpec(
                "analytic limit is not defined for refined level-2 data".into(),
            ))
        }
    };
    match &spec.kind {
        NoiseKind::IidWalk { dim, dist } => {
            let var = dist.variance();
            let c0 = Mat::identity(*dim).scale(var);
            let d_matrix = c0.clone();
            let nu = c0.scale(-0.5 + theta_weight);
            Ok(AnalyticLimit {
                d_matrix,
                nu,
                derivation: format!(
                    "iid walk: D = Cov(draw), ν = (θ-weight − ½)·D with θ-weight = {theta_weight}"
                ),
            })
        }
        NoiseKind::MarkovChain(mc) => {
            let rho = mc.subdominant_modulus();
            if rho >= 1.0 - 1e-12 {
                return Err(Error::SeriesDiverged(format!(
                    "subdominant eigenvalue modulus {rho} ≥ 1"
                )));
            }
            let s = mc.states;
            let d = mc.dim;
            let mut w = mc.observable.clone(); // P^j v, starting at j = 0
            let mut next = vec![0.0; s * d];
            let lag_cov = |w: &[f64]| -> Mat {
                let mut c = Mat::zeros(d, d);
                for st in 0..s {
                    let weight = mc.stationary[st];
                    for alpha in 0..d {
                        let va = mc.observable[st * d + alpha];
                        for beta in 0..d {
                            c.data[alpha * d + beta] += weight * va * w[st * d + beta];
                        }
                    }
                }
                c
            };
            let c0 = lag_cov(&w);
            let mut d_matrix = c0.clone();
            let mut nu = c0.scale(-0.5);
            let geom = rho / (1.0 - rho);
            let mut lags = 0usize;
            loop {
                next.fill(0.0);
                for row in 0..s {
                    for col in 0..s {
                        let p = mc.transition[row * s + col];
                        if p != 0.0 {
                            for b in 0..d {
                                next[row * d + b] += p * w[col * d + b];
                            }
                        }
                    }
                }
                std::mem::swap(&mut w, &mut next);
                lags += 1;
                let cj = lag_cov(&w);
                d_matrix.add_assign(&cj.add(&cj.transpose()));
                nu.add_assign(&cj.sub(&cj.transpose()).scale(0.5));
                if cj.norm() * geom < SERIES_TOL * d_matrix.norm().max(1e-300) {
                    break;
                }
                if lags > 20_000_000 {
                    return Err(Error::SeriesDiverged(
                        "autocovariance series failed to meet the tail target".into(),
                    ));
                }
            }
            if theta_weight != 0.0 {
                nu.add_assign(&c0.scale(theta_weight));
            }
            Ok(AnalyticLimit {
                d_matrix,
                nu,
                derivation: format!(
                    "markov chain: D = C₀ + Σ(C_j + C_jᵀ), ν = −½C₀ + ½Σ(C_j − C_jᵀ) + {theta_weight}·C₀; \
                     summed {lags} lags, subdominant modulus {rho:.6}"
                ),
            })
        }
        _ => Err(Error::InvalidSpec(
            "analytic limit available for iid walks and markov chains only".into(),
        )),
    }
}

/// Monte Carlo estimate of the area correction with per-entry standard
/// errors.
#[derive(Debug, Clone)]
pub struct NuEstimate {
    pub nu_hat: Mat,
    pub nu_se: Mat,
    pub d_hat: Mat,
    pub d_se: Mat,
    pub paths: usize,
    /// Set for non-martingale drivers (fractional noise): the estimator
    /// then reads as E𝕏 minus the symmetric baseline, not an Itô–
    /// Stratonovich shift.
    pub caveat: Option<String>,
}

impl NuEstimate {
    /// Maximum over entries of |ν̂ − ref| / SE.
    pub fn max_z_against(&self, reference: &Mat) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, r) in reference.data.iter().enumerate() {
            let se = self.nu_se.data[i].max(1e-300);
            worst = worst.max((self.nu_hat.data[i] - r).abs() / se);
        }
        worst
    }
}

/// ν̂ from terminal signatures:
/// `ν̂ = mean(𝕏(T) − ½ X(T) ⊗ X(T)) / T`, with `D̂ = mean(X⊗X)/T`.
///
/// Valid as an area-correction estimator when the increments are centered
/// and the limit is a martingale; pass a caveat for anything else.
pub fn empirical_nu_from_terminals(
    terminals: &[TensorPair],
    t_end: f64,
    caveat: Option<String>,
) -> Result<NuEstimate> {
    if terminals.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let d = terminals[0].dim();
    let paths = terminals.len();
    let mut nu_hat = Mat::zeros(d, d);
    let mut nu_se = Mat::zeros(d, d);
    let mut d_hat = Mat::zeros(d, d);
    let mut d_se = Mat::zeros(d, d);
    let mut samples = vec![0.0; paths];
    let mut dsamples = vec![0.0; paths];
    for alpha in 0..d {
        for beta in 0..d {
            for (p, term) in terminals.iter().enumerate() {
                let quad = term.a[alpha] * term.a[beta];
                samples[p] = (term.m.get(alpha, beta) - 0.5 * quad) / t_end;
                dsamples[p] = quad / t_end;
            }
            let (m, se) = mean_and_se(&samples);
            nu_hat.set(alpha, beta, m);
            nu_se.set(alpha, beta, se);
            let (dm, dse) = mean_and_se(&dsamples);
            d_hat.set(alpha, beta, dm);
            d_se.set(alpha, beta, dse);
        }
    }
    Ok(NuEstimate {
        nu_hat,
        nu_se,
        d_hat,
        d_se,
        paths,
        caveat,
    })
}

/// ν̂ over an ensemble of rough step functions on a common horizon.
pub fn empirical_nu(
    ensemble: &[RoughStepFunction],
    t_end: f64,
    caveat: Option<String>,
) -> Result<NuEstimate> {
    let terminals: Vec<TensorPair> = ensemble.iter().map(|r| r.terminal()).collect();
    empirical_nu_from_terminals(&terminals, t_end, caveat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn uniform(n: usize) -> Arc<Partition> {
        Arc::new(Partition::uniform(n, 1.0).unwrap())
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let spec = NoiseSpec::new(
            NoiseKind::Brownian { dim: 2 },
            Xi2Rule::Theta(0.5),
        )
        .unwrap();
        let p = uniform(16);
        let a = generate(&spec, &p, 7, SumConvention::EarlierLater).unwrap();
        let b = generate(&spec, &p, 7, SumConvention::EarlierLater).unwrap();
        assert_eq!(&a, &b);
        let c = generate(&spec, &p, 8, SumConvention::EarlierLater).unwrap();
        assert_ne!(&a, &c);
    }

    #[test]
    fn markov_spec_validation() {
        let mut mc = MarkovChainSpec::two_state(0.75).unwrap();
        assert!(mc.validate().is_ok());
        mc.transition[0] = 0.9; // row no longer sums to 1
        assert!(mc.validate().is_err());

        let mut mc = MarkovChainSpec::two_state(0.75).unwrap();
        mc.stationary = vec![0.9, 0.1]; // not stationary for symmetric chain
        assert!(mc.validate().is_err());

        let mut mc = MarkovChainSpec::two_state(0.75).unwrap();
        mc.observable = vec![1.0, 0.5]; // not centered
        assert!(mc.validate().is_err());
    }

    #[test]
    fn two_state_analytic_limit() {
        // ρ = 2p − 1; D = (1 + ρ)/(1 − ρ); ν = −½C₀ = −½.
        let spec = NoiseSpec::new(
            NoiseKind::MarkovChain(MarkovChainSpec::two_state(0.75).unwrap()),
            Xi2Rule::Zero,
        )
        .unwrap();
        let limit = analytic_limit(&spec).unwrap();
        assert!((limit.d_matrix.get(0, 0) - 3.0).abs() < 1e-10);
        assert!((limit.nu.get(0, 0) + 0.5).abs() < 1e-10);
    }

    #[test]
    fn scalar_chain_nu_is_half_c0_for_any_mixing() {
        for p in [0.55, 0.7, 0.9] {
            let spec = NoiseSpec::new(
                NoiseKind::MarkovChain(MarkovChainSpec::two_state(p).unwrap()),
                Xi2Rule::Zero,
            )
            .unwrap();
            let limit = analytic_limit(&spec).unwrap();
            // C₀ = E_μ v² = 1 regardless of the stay probability.
            assert!((limit.nu.get(0, 0) + 0.5).abs() < 1e-10, "p = {p}");
        }
    }

    #[test]
    fn three_state_series_matches_brute_force() {
        let mc = MarkovChainSpec::lazy_cycle_three(0.5).unwrap();
        let spec = NoiseSpec::new(NoiseKind::MarkovChain(mc.clone()), Xi2Rule::Zero).unwrap();
        let limit = analytic_limit(&spec).unwrap();
        // Brute force: 10⁶-term partial sum with no early stopping.
        let (s, d) = (mc.states, mc.dim);
        let lag_cov = |w: &[f64]| -> Mat {
            let mut c = Mat::zeros(d, d);
            for st in 0..s {
                for alpha in 0..d {
                    for beta in 0..d {
                        c.data[alpha * d + beta] += mc.stationary[st]
                            * mc.observable[st * d + alpha]
                            * w[st * d + beta];
                    }
                }
            }
            c
        };
        let mut w = mc.observable.clone();
        let c0 = lag_cov(&w);
        let mut d_brute = c0.clone();
        let mut nu_brute = c0.scale(-0.5);
        let mut next = vec![0.0; s * d];
        for _ in 0..1_000_000 {
            next.fill(0.0);
            for row in 0..s {
                for col in 0..s {
                    for b in 0..d {
                        next[row * d + b] += mc.transition[row * s + col] * w[col * d + b];
                    }
                }
            }
            std::mem::swap(&mut w, &mut next);
            let cj = lag_cov(&w);
            d_brute.add_assign(&cj.add(&cj.transpose()));
            nu_brute.add_assign(&cj.sub(&cj.transpose()).scale(0.5));
        }
        assert!(limit.d_matrix.max_abs_diff(&d_brute) < 1e-10);
        assert!(limit.nu.max_abs_diff(&nu_brute) < 1e-10);
        // The antisymmetric part is genuinely nonzero: ½·Im(ρ_c/(1−ρ_c))
        // = 1/(2√3) for λ = ½.
        let anti = limit.nu.antisym_part();
        assert!((anti.get(0, 1) - 0.5 / 3.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn iid_limits() {
        let spec = NoiseSpec::new(
            NoiseKind::IidWalk {
                dim: 2,
                dist: WalkDistribution::StandardNormal,
            },
            Xi2Rule::Zero,
        )
        .unwrap();
        let limit = analytic_limit(&spec).unwrap();
        assert!(limit.d_matrix.max_abs_diff(&Mat::identity(2)) < 1e-15);
        assert!(limit.nu.max_abs_diff(&Mat::identity(2).scale(-0.5)) < 1e-15);

        // θ-rule shifts ν to (½ − θ)·D.
        let spec = NoiseSpec::new(
            NoiseKind::IidWalk {
                dim: 1,
                dist: WalkDistribution::Rademacher,
            },
            Xi2Rule::Theta(0.25),
        )
        .unwrap();
        let limit = analytic_limit(&spec).unwrap();
        assert!((limit.nu.get(0, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn analytic_limit_rejects_brownian() {
        let spec = NoiseSpec::new(NoiseKind::Brownian { dim: 1 }, Xi2Rule::Zero).unwrap();
        assert!(analytic_limit(&spec).is_err());
    }

    #[test]
    fn fbm_covariance_assembly() {
        // H = ½ reduces to independent Brownian increments.
        let p = uniform(8);
        for i in 0..8 {
            for j in 0..8 {
                let c = fbm_increment_cov(
                    0.5,
                    p.tau(i),
                    p.tau(i + 1),
                    p.tau(j),
                    p.tau(j + 1),
                );
                let expect = if i == j { p.spacing(i) } else { 0.0 };
                assert!((c - expect).abs() < 1e-14);
            }
        }
        // Var X(τ_k) = Σ_{i,j<k} cov = τ_k^{2H} by telescoping.
        let hurst = 0.4;
        for k in [1usize, 3, 8] {
            let mut acc = 0.0;
            for i in 0..k {
                for j in 0..k {
                    acc += fbm_increment_cov(
                        hurst,
                        p.tau(i),
                        p.tau(i + 1),
                        p.tau(j),
                        p.tau(j + 1),
                    );
                }
            }
            let expect = p.tau(k).powf(2.0 * hurst);
            assert!((acc - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn fbm_guard_and_hurst_validation() {
        assert!(NoiseSpec::new(
            NoiseKind::Fbm {
                dim: 1,
                hurst: 0.2
            },
            Xi2Rule::Zero
        )
        .is_err());
        let spec = NoiseSpec::new(
            NoiseKind::Fbm {
                dim: 1,
                hurst: 0.4,
            },
            Xi2Rule::Zero,
        )
        .unwrap();
        let p = Arc::new(Partition::uniform(FBM_MAX_CELLS + 1, 1.0).unwrap());
        assert!(generate(&spec, &p, 0, SumConvention::EarlierLater).is_err());
    }

    #[test]
    fn refined_rule_only_for_brownian() {
        assert!(NoiseSpec::new(
            NoiseKind::IidWalk {
                dim: 1,
                dist: WalkDistribution::Rademacher
            },
            Xi2Rule::Refined(4)
        )
        .is_err());
    }

    #[test]
    fn refined_one_substep_has_zero_level_two() {
        let spec =
            NoiseSpec::new(NoiseKind::Brownian { dim: 2 }, Xi2Rule::Refined(1)).unwrap();
        let p = uniform(8);
        let stream = generate(&spec, &p, 3, SumConvention::EarlierLater).unwrap();
        for j in 0..8 {
            assert!(stream.xi2(j).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn empirical_nu_iid_walk_matches_lemma() {
        // ν̂ ≈ −½D within 3 standard errors; E𝕏 = 0 exactly by independence.
        let spec = NoiseSpec::new(
            NoiseKind::IidWalk {
                dim: 1,
                dist: WalkDistribution::Rademacher,
            },
            Xi2Rule::Zero,
        )
        .unwrap();
        let p = uniform(256);
        let terminals: Vec<TensorPair> = (0..4000)
            .map(|s| {
                let stream = generate(&spec, &p, s, SumConvention::EarlierLater).unwrap();
                RoughStepFunction::build(p.clone(), stream, SumConvention::EarlierLater)
                    .unwrap()
                    .terminal()
            })
            .collect();
        let est = empirical_nu_from_terminals(&terminals, 1.0, None).unwrap();
        let z = est.max_z_against(&Mat::identity(1).scale(-0.5));
        assert!(z < 3.0, "z = {z}");
        assert!((est.d_hat.get(0, 0) - 1.0).abs() < 3.0 * est.d_se.get(0, 0) + 1e-12);
    }

    #[test]
    fn empirical_nu_rejects_empty() {
        assert!(empirical_nu_from_terminals(&[], 1.0, None).is_err());
    }
}
