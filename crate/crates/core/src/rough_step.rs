//! Partitions, increment streams, and the rough step function built from
//! them by prefix summation, together with its discrete Hölder norm and a
//! CSV interchange format.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::tensor::TensorPair;

/// Default cap on N·Δ relative to the horizon T. Uniform meshes give
/// N·Δ = T exactly; anything above `DEFAULT_MESH_BOUND_FACTOR · T` is
/// rejected as too unbalanced.
pub const DEFAULT_MESH_BOUND_FACTOR: f64 = 16.0;

/// Strictly increasing mesh `0 = τ_0 < … < τ_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    taus: Vec<f64>,
    mesh: f64,
}

impl Partition {
    /// Validates monotonicity, endpoints, and the balance bound
    /// `N·Δ ≤ bound` (default `DEFAULT_MESH_BOUND_FACTOR · T`).
    pub fn new(taus: Vec<f64>, bound: Option<f64>) -> Result<Self> {
        if taus.len() < 2 {
            return Err(Error::InvalidArgument(
                "partition needs at least two mesh points".into(),
            ));
        }
        if !taus.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidArgument("non-finite mesh point".into()));
        }
        if taus[0] != 0.0 {
            return Err(Error::InvalidArgument("partition must start at 0".into()));
        }
        let mut mesh: f64 = 0.0;
        for w in taus.windows(2) {
            let dt = w[1] - w[0];
            if dt <= 0.0 {
                return Err(Error::InvalidArgument(
                    "mesh points must be strictly increasing".into(),
                ));
            }
            mesh = mesh.max(dt);
        }
        let t_end = *taus.last().unwrap();
        let n = taus.len() - 1;
        let bound = bound.unwrap_or(DEFAULT_MESH_BOUND_FACTOR * t_end);
        if n as f64 * mesh > bound {
            return Err(Error::InvalidArgument(format!(
                "partition too unbalanced: N·Δ = {:.6e} exceeds bound {:.6e}",
                n as f64 * mesh,
                bound
            )));
        }
        Ok(Partition { taus, mesh })
    }

    /// Uniform mesh `τ_k = k·T/n`.
    pub fn uniform(n: usize, t_end: f64) -> Result<Self> {
        if n == 0 || !(t_end > 0.0) {
            return Err(Error::InvalidArgument(
                "uniform partition needs n ≥ 1 and T > 0".into(),
            ));
        }
        let mut taus: Vec<f64> = (0..=n).map(|k| k as f64 * t_end / n as f64).collect();
        taus[n] = t_end;
        Partition::new(taus, None)
    }

    /// Number of cells N.
    pub fn num_cells(&self) -> usize {
        self.taus.len() - 1
    }

    pub fn t_end(&self) -> f64 {
        *self.taus.last().unwrap()
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn tau(&self, k: usize) -> f64 {
        self.taus[k]
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    /// Cell width `τ_{j+1} − τ_j`.
    pub fn spacing(&self, j: usize) -> f64 {
        self.taus[j + 1] - self.taus[j]
    }

    /// Index of the largest mesh point ≤ t (càdlàg evaluation point).
    pub fn floor_index(&self, t: f64) -> usize {
        debug_assert!(t >= 0.0 && t <= self.t_end());
        // partition_point returns the first index with τ > t.
        let idx = self.taus.partition_point(|&tau| tau <= t);
        idx.saturating_sub(1)
    }

    fn nearly_uniform(&self) -> bool {
        let avg = self.t_end() / self.num_cells() as f64;
        self.taus
            .windows(2)
            .all(|w| ((w[1] - w[0]) - avg).abs() <= 1e-12 * avg)
    }
}

/// Per-cell increments `(ξ_j, Ξ_j)` stored flat and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementStream {
    d: usize,
    xis: Vec<f64>,  // N·d
    xi2s: Vec<f64>, // N·d·d
}

impl IncrementStream {
    pub fn zeros(d: usize, n: usize) -> Self {
        IncrementStream {
            d,
            xis: vec![0.0; n * d],
            xi2s: vec![0.0; n * d * d],
        }
    }

    pub fn from_flat(d: usize, xis: Vec<f64>, xi2s: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be ≥ 1".into()));
        }
        if xis.len() % d != 0 || xi2s.len() % (d * d) != 0 || xis.len() / d != xi2s.len() / (d * d)
        {
            return Err(Error::DimensionMismatch(
                "increment stream lengths inconsistent with d".into(),
            ));
        }
        Ok(IncrementStream { d, xis, xi2s })
    }

    /// Builds a stream from per-cell vectors and matrices.
    pub fn from_cells(d: usize, cells: &[(Vec<f64>, Mat)]) -> Result<Self> {
        let mut xis = Vec::with_capacity(cells.len() * d);
        let mut xi2s = Vec::with_capacity(cells.len() * d * d);
        for (xi, m) in cells {
            if xi.len() != d || m.rows != d || m.cols != d {
                return Err(Error::DimensionMismatch(
                    "cell increment has wrong dimension".into(),
                ));
            }
            xis.extend_from_slice(xi);
            xi2s.extend_from_slice(&m.data);
        }
        Ok(IncrementStream { d, xis, xi2s })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.xis.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.xis.is_empty()
    }

    #[inline]
    pub fn xi(&self, j: usize) -> &[f64] {
        &self.xis[j * self.d..(j + 1) * self.d]
    }

    #[inline]
    pub fn xi2(&self, j: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.xi2s[j * dd..(j + 1) * dd]
    }

    pub fn xi_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.xis[j * self.d..(j + 1) * self.d]
    }

    pub fn xi2_mut(&mut self, j: usize) -> &mut [f64] {
        let dd = self.d * self.d;
        &mut self.xi2s[j * dd..(j + 1) * dd]
    }

    /// Cell increment as a tensor pair `(ξ_j, Ξ_j)`.
    pub fn cell_pair(&self, j: usize) -> TensorPair {
        TensorPair::new(
            self.xi(j).to_vec(),
            Mat {
                rows: self.d,
                cols: self.d,
                data: self.xi2(j).to_vec(),
            },
        )
    }
}

/// Direction of the cross term in the level-2 prefix recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SumConvention {
    /// `Σ_{j<i} ξ_j ⊗ ξ_i`: the earlier increment sits left of the outer
    /// product, matching `∫ (X(s) − X(τ)) ⊗ dX(s)`.
    #[default]
    EarlierLater,
    /// Transposed variant `Σ_{j<i} ξ_i ⊗ ξ_j`.
    LaterEarlier,
}

/// The rough step function `(X^n, 𝕏^n)`: prefix sums of an increment
/// stream, evaluated piecewise-constant (càdlàg) between mesh points.
#[derive(Debug, Clone)]
pub struct RoughStepFunction {
    partition: Arc<Partition>,
    stream: IncrementStream,
    prefix_x: Vec<f64>,  // (N+1)·d
    prefix_xx: Vec<f64>, // (N+1)·d·d
    convention: SumConvention,
}

impl RoughStepFunction {
    /// Prefix-sums the stream:
    /// `X[k+1] = X[k] + ξ_k`, `𝕏[k+1] = 𝕏[k] + X[k] ⊗ ξ_k + Ξ_k`
    /// (cross term transposed under [`SumConvention::LaterEarlier`]).
    pub fn build(
        partition: Arc<Partition>,
        stream: IncrementStream,
        convention: SumConvention,
    ) -> Result<Self> {
        let n = partition.num_cells();
        if stream.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "stream has {} cells, partition has {}",
                stream.len(),
                n
            )));
        }
        let d = stream.dim();
        let dd = d * d;
        let mut prefix_x = vec![0.0; (n + 1) * d];
        let mut prefix_xx = vec![0.0; (n + 1) * dd];
        for k in 0..n {
            let xi = stream.xi(k);
            let xi2 = stream.xi2(k);
            let (head_x, tail_x) = prefix_x.split_at_mut((k + 1) * d);
            let px = &head_x[k * d..];
            let next_x = &mut tail_x[..d];
            for i in 0..d {
                next_x[i] = px[i] + xi[i];
            }
            let (head_m, tail_m) = prefix_xx.split_at_mut((k + 1) * dd);
            let pm = &head_m[k * dd..];
            let next_m = &mut tail_m[..dd];
            match convention {
                SumConvention::EarlierLater => {
                    for i in 0..d {
                        for j in 0..d {
                            next_m[i * d + j] = pm[i * d + j] + px[i] * xi[j] + xi2[i * d + j];
                        }
                    }
                }
                SumConvention::LaterEarlier => {
                    for i in 0..d {
                        for j in 0..d {
                            next_m[i * d + j] = pm[i * d + j] + xi[i] * px[j] + xi2[i * d + j];
                        }
                    }
                }
            }
        }
        Ok(RoughStepFunction {
            partition,
            stream,
            prefix_x,
            prefix_xx,
            convention,
        })
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn stream(&self) -> &IncrementStream {
        &self.stream
    }

    pub fn dim(&self) -> usize {
        self.stream.dim()
    }

    pub fn convention(&self) -> SumConvention {
        self.convention
    }

    #[inline]
    pub fn prefix_x(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.prefix_x[k * d..(k + 1) * d]
    }

    #[inline]
    pub fn prefix_xx(&self, k: usize) -> &[f64] {
        let dd = self.dim() * self.dim();
        &self.prefix_xx[k * dd..(k + 1) * dd]
    }

    /// Path value `(X^n(t), 𝕏^n(t))` at the largest mesh point ≤ t.
    pub fn value_at(&self, t: f64) -> Result<TensorPair> {
        if !(0.0..=self.partition.t_end()).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} outside [0, {}]",
                self.partition.t_end()
            )));
        }
        let k = self.partition.floor_index(t);
        Ok(self.pair_at_index(k))
    }

    fn pair_at_index(&self, k: usize) -> TensorPair {
        let d = self.dim();
        TensorPair::new(
            self.prefix_x(k).to_vec(),
            Mat {
                rows: d,
                cols: d,
                data: self.prefix_xx(k).to_vec(),
            },
        )
    }

    /// Terminal value `(X^n(T), 𝕏^n(T))`.
    pub fn terminal(&self) -> TensorPair {
        self.pair_at_index(self.partition.num_cells())
    }

    /// Incremental pair between mesh indices `l ≤ k`:
    /// `X = X[k] − X[l]`, `𝕏 = 𝕏[k] − 𝕏[l] − X[l] ⊗ X` (cross term
    /// transposed under the transposed convention).
    pub fn increment_mesh(&self, l: usize, k: usize) -> TensorPair {
        debug_assert!(l <= k);
        let d = self.dim();
        let pl = self.prefix_x(l);
        let pk = self.prefix_x(k);
        let a: Vec<f64> = pk.iter().zip(pl).map(|(x, y)| x - y).collect();
        let ml = self.prefix_xx(l);
        let mk = self.prefix_xx(k);
        let mut m = Mat::zeros(d, d);
        match self.convention {
            SumConvention::EarlierLater => {
                for i in 0..d {
                    for j in 0..d {
                        m.data[i * d + j] = mk[i * d + j] - ml[i * d + j] - pl[i] * a[j];
                    }
                }
            }
            SumConvention::LaterEarlier => {
                for i in 0..d {
                    for j in 0..d {
                        m.data[i * d + j] = mk[i * d + j] - ml[i * d + j] - a[i] * pl[j];
                    }
                }
            }
        }
        TensorPair::new(a, m)
    }

    /// Incremental pair `(X^n(s,t), 𝕏^n(s,t))` with s, t mapped to the
    /// largest mesh points below them.
    pub fn increment(&self, s: f64, t: f64) -> Result<TensorPair> {
        if s > t {
            return Err(Error::InvalidArgument(format!("s = {s} > t = {t}")));
        }
        if s < 0.0 || t > self.partition.t_end() {
            return Err(Error::InvalidArgument(format!(
                "[{s}, {t}] outside [0, {}]",
                self.partition.t_end()
            )));
        }
        let l = self.partition.floor_index(s);
        let k = self.partition.floor_index(t);
        Ok(self.increment_mesh(l, k))
    }

    /// Exact discrete γ-Hölder norm: the sum of the two maxima
    /// `max |X_{j,k}| / |τ_k − τ_j|^γ` and `max |𝕏_{j,k}|^{1/2} / |τ_k − τ_j|^γ`
    /// over all mesh pairs j < k. O(N²).
    pub fn discrete_holder_norm(&self, gamma: f64) -> Result<f64> {
        let (m1, m2) = self.holder_norm_with_stride(gamma, 1)?;
        Ok(m1 + m2)
    }

    /// The two maxima of the discrete norm, separately (level 1,
    /// level 2 already square-rooted).
    pub fn holder_maxima(&self, gamma: f64) -> Result<(f64, f64)> {
        self.holder_norm_with_stride(gamma, 1)
    }

    /// Strided lower bound of the discrete Hölder norm: only mesh indices
    /// that are multiples of `stride` (plus the endpoint) enter the max.
    /// Intended for N > 4096; never applied implicitly.
    pub fn discrete_holder_norm_subsampled(&self, gamma: f64, stride: usize) -> Result<f64> {
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be ≥ 1".into()));
        }
        let (m1, m2) = self.holder_norm_with_stride(gamma, stride)?;
        Ok(m1 + m2)
    }

    fn holder_norm_with_stride(&self, gamma: f64, stride: usize) -> Result<(f64, f64)> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma = {gamma} outside (0, 1]"
            )));
        }
        let n = self.partition.num_cells();
        let d = self.dim();
        let indices: Vec<usize> = {
            let mut v: Vec<usize> = (0..=n).step_by(stride).collect();
            if *v.last().unwrap() != n {
                v.push(n);
            }
            v
        };
        // Uniform meshes reuse one inverse power per index gap; powf per
        // pair would dominate the O(N²) sweep otherwise.
        let gap_table: Option<Vec<f64>> = if self.partition.nearly_uniform() {
            let avg = self.partition.t_end() / n as f64;
            let mut t = vec![0.0; n + 1];
            for (m, slot) in t.iter_mut().enumerate().skip(1) {
                *slot = (m as f64 * avg).powf(-gamma);
            }
            Some(t)
        } else {
            None
        };

        let mut max1: f64 = 0.0;
        let mut max2sq: f64 = 0.0; // track |𝕏|/dt^{2γ}, sqrt at the end
        if d == 1 {
            let px = &self.prefix_x;
            let pxx = &self.prefix_xx;
            for (a_pos, &l) in indices.iter().enumerate() {
                let xl = px[l];
                let ml = pxx[l];
                let tl = self.partition.tau(l);
                for &k in &indices[a_pos + 1..] {
                    let dx = px[k] - xl;
                    let dm = pxx[k] - ml - xl * dx;
                    let w = match &gap_table {
                        Some(t) => t[k - l],
                        None => (self.partition.tau(k) - tl).powf(-gamma),
                    };
                    max1 = max1.max(dx.abs() * w);
                    max2sq = max2sq.max(dm.abs() * w * w);
                }
            }
        } else {
            let mut scratch = vec![0.0; d];
            for (a_pos, &l) in indices.iter().enumerate() {
                let xl = self.prefix_x(l).to_vec();
                let ml = self.prefix_xx(l).to_vec();
                let tl = self.partition.tau(l);
                for &k in &indices[a_pos + 1..] {
                    let xk = self.prefix_x(k);
                    let mk = self.prefix_xx(k);
                    let mut s1 = 0.0;
                    for i in 0..d {
                        scratch[i] = xk[i] - xl[i];
                        s1 += scratch[i] * scratch[i];
                    }
                    let mut s2 = 0.0;
                    match self.convention {
                        SumConvention::EarlierLater => {
                            for i in 0..d {
                                for j in 0..d {
                                    let v = mk[i * d + j] - ml[i * d + j] - xl[i] * scratch[j];
                                    s2 += v * v;
                                }
                            }
                        }
                        SumConvention::LaterEarlier => {
                            for i in 0..d {
                                for j in 0..d {
                                    let v = mk[i * d + j] - ml[i * d + j] - scratch[i] * xl[j];
                                    s2 += v * v;
                                }
                            }
                        }
                    }
                    let w = match &gap_table {
                        Some(t) => t[k - l],
                        None => (self.partition.tau(k) - tl).powf(-gamma),
                    };
                    max1 = max1.max(s1.sqrt() * w);
                    max2sq = max2sq.max(s2.sqrt() * w * w);
                }
            }
        }
        Ok((max1, max2sq.sqrt()))
    }
}

/// Writes a stream as CSV: `t_start,t_end,xi_1..xi_d,Xi_11..Xi_dd`,
/// one row per cell, header mandatory. Floats use the shortest
/// round-trip representation, so write→read is lossless.
pub fn write_stream_csv<W: Write>(
    w: &mut W,
    partition: &Partition,
    stream: &IncrementStream,
) -> Result<()> {
    let d = stream.dim();
    if stream.len() != partition.num_cells() {
        return Err(Error::DimensionMismatch(
            "stream length does not match partition".into(),
        ));
    }
    let mut header = String::from("t_start,t_end");
    for i in 1..=d {
        header.push_str(&format!(",xi_{i}"));
    }
    for i in 1..=d {
        for j in 1..=d {
            header.push_str(&format!(",Xi_{i}{j}"));
        }
    }
    writeln!(w, "{header}")?;
    for j in 0..stream.len() {
        let mut row = format!("{},{}", partition.tau(j), partition.tau(j + 1));
        for v in stream.xi(j) {
            row.push_str(&format!(",{v}"));
        }
        for v in stream.xi2(j) {
            row.push_str(&format!(",{v}"));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Maximum ambient dimension accepted by the CSV reader.
const MAX_CSV_DIM: usize = 32;

/// Parses the CSV interchange format back into a partition and stream.
///
/// The header is mandatory; d is inferred from the column count. Cells
/// must tile [0, T]: row i's `t_end` must equal row i+1's `t_start` to
/// within 1e-9 relative. Never panics on malformed input.
pub fn read_stream_csv<R: Read>(r: R) -> Result<(Partition, IncrementStream)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("bad header: {e}")))?
        .clone();
    let cols = headers.len();
    let d = (1..=MAX_CSV_DIM)
        .find(|d| 2 + d + d * d == cols)
        .ok_or_else(|| {
            Error::Parse(format!(
                "column count {cols} does not match 2 + d + d² for d ≤ {MAX_CSV_DIM}"
            ))
        })?;
    if headers.get(0) != Some("t_start") || headers.get(1) != Some("t_end") {
        return Err(Error::Parse(
            "header must start with t_start,t_end".into(),
        ));
    }

    let mut t_starts = Vec::new();
    let mut t_ends = Vec::new();
    let mut xis = Vec::new();
    let mut xi2s = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
        if record.len() != cols {
            return Err(Error::Parse(format!(
                "row {}: expected {cols} fields, got {}",
                line + 1,
                record.len()
            )));
        }
        let mut fields = Vec::with_capacity(cols);
        for raw in record.iter() {
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad float `{raw}`", line + 1)))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "row {}: non-finite value",
                    line + 1
                )));
            }
            fields.push(v);
        }
        t_starts.push(fields[0]);
        t_ends.push(fields[1]);
        xis.extend_from_slice(&fields[2..2 + d]);
        xi2s.extend_from_slice(&fields[2 + d..]);
    }
    if t_starts.is_empty() {
        return Err(Error::Parse("stream has no rows".into()));
    }
    let t_total = t_ends[t_ends.len() - 1];
    let tol = 1e-9 * t_total.abs().max(1.0);
    if t_starts[0].abs() > tol {
        return Err(Error::Parse("first cell must start at t = 0".into()));
    }
    for i in 0..t_starts.len() - 1 {
        if (t_ends[i] - t_starts[i + 1]).abs() > tol {
            return Err(Error::Parse(format!(
                "cells {} and {} do not tile the interval",
                i,
                i + 1
            )));
        }
    }
    let mut taus = Vec::with_capacity(t_starts.len() + 1);
    taus.push(0.0);
    taus.extend(t_starts.iter().skip(1));
    taus.push(t_total);
    let partition = Partition::new(taus, None)?;
    let stream = IncrementStream::from_flat(d, xis, xi2s)?;
    Ok((partition, stream))
}
