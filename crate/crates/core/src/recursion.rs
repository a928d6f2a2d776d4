//! The second-order recursion
//! `Y_{j+1} = Y_j + V(Y_j)ξ_j + 𝕍(Y_j):Ξ_j [+ W(Y_j)Δt_j] [+ r_j]`
//! over a rough step function, producing càdlàg trajectories.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{contract_slices, eval_derived_into, VectorFieldBundle};
use crate::linalg::{vec_is_finite, vec_norm};
use crate::rough_step::{IncrementStream, Partition, RoughStepFunction, SumConvention};

/// Provenance carried by a trajectory.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryMeta {
    pub scheme: String,
    pub seed: Option<u64>,
    /// Steps whose iterate left the field's trust region (warning only).
    pub trust_exits: usize,
}

/// Mesh-indexed solution values, evaluated piecewise-constant between
/// mesh points.
#[derive(Debug, Clone)]
pub struct Trajectory {
    partition: Arc<Partition>,
    e: usize,
    values: Vec<f64>, // (N+1)·e
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(partition: Arc<Partition>, e: usize, values: Vec<f64>, meta: TrajectoryMeta) -> Self {
        assert_eq!(values.len(), (partition.num_cells() + 1) * e);
        Trajectory {
            partition,
            e,
            values,
            meta,
        }
    }

    pub fn partition(&self) -> &Arc<Partition> {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.e
    }

    /// Y at mesh index k.
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.e..(k + 1) * self.e]
    }

    /// Y(t) = value at the largest mesh point ≤ t.
    pub fn value_at(&self, t: f64) -> Result<&[f64]> {
        if !(0.0..=self.partition.t_end()).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} outside [0, {}]",
                self.partition.t_end()
            )));
        }
        Ok(self.value(self.partition.floor_index(t)))
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.partition.num_cells())
    }

    /// sup over mesh points of the Euclidean distance to another
    /// trajectory on the same partition.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.partition.taus() != other.partition.taus() || self.e != other.e {
            return Err(Error::DimensionMismatch(
                "trajectories live on different partitions".into(),
            ));
        }
        let mut sup: f64 = 0.0;
        for k in 0..=self.partition.num_cells() {
            let a = self.value(k);
            let b = other.value(k);
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            sup = sup.max(d2.sqrt());
        }
        Ok(sup)
    }

    /// CSV rows `t,y_1..y_e`, header included.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut header = String::from("t");
        for i in 1..=self.e {
            header.push_str(&format!(",y_{i}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..=self.partition.num_cells() {
            let mut row = format!("{}", self.partition.tau(k));
            for v in self.value(k) {
                row.push_str(&format!(",{v}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Per-step remainder injection with a declared bound `|r_j| ≤ c·Δ^λ`,
/// λ > 1; the engine aborts the run on the first violation.
pub struct RemainderRule {
    pub c: f64,
    pub lambda: f64,
    #[allow(clippy::type_complexity)]
    callback: Box<dyn Fn(usize, &[f64], f64) -> Vec<f64> + Send + Sync>,
}

impl RemainderRule {
    pub fn new(
        c: f64,
        lambda: f64,
        callback: impl Fn(usize, &[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(lambda > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "remainder exponent λ = {lambda} must exceed 1"
            )));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument("remainder constant must be ≥ 0".into()));
        }
        Ok(RemainderRule {
            c,
            lambda,
            callback: Box::new(callback),
        })
    }

    fn emit(&self, step: usize, y: &[f64], mesh: f64) -> Result<Vec<f64>> {
        let r = (self.callback)(step, y, mesh);
        let bound = self.c * mesh.powf(self.lambda);
        let norm = vec_norm(&r);
        if norm > bound {
            return Err(Error::RemainderBound {
                step,
                value: norm,
                bound,
            });
        }
        Ok(r)
    }
}

/// Reusable buffers for the one-step update.
pub struct StepScratch {
    v: Vec<f64>,    // e·d
    jac: Vec<f64>,  // e·d·e
    vv: Vec<f64>,   // e·d·d
    drift: Vec<f64>, // e
}

impl StepScratch {
    pub fn new(e: usize, d: usize) -> Self {
        StepScratch {
            v: vec![0.0; e * d],
            jac: vec![0.0; e * d * e],
            vv: vec![0.0; e * d * d],
            drift: vec![0.0; e],
        }
    }
}

/// One Davie step `y ← y + V(y)·a + 𝕍(y):m` computed in place.
///
/// Both the recursion engine and the RDE solver funnel through this
/// function so that substep-1 solves reproduce the recursion bit for bit.
#[inline]
pub fn davie_step(
    bundle: &VectorFieldBundle,
    scratch: &mut StepScratch,
    y: &mut [f64],
    a: &[f64],
    m: &[f64],
) {
    let (e, d) = bundle.dims();
    bundle.eval_v(y, &mut scratch.v);
    bundle.eval_jacobian(y, &mut scratch.jac);
    eval_derived_into(e, d, &scratch.v, &scratch.jac, &mut scratch.vv);
    let dd = d * d;
    for kappa in 0..e {
        let mut acc = y[kappa];
        let vrow = &scratch.v[kappa * d..(kappa + 1) * d];
        for (vb, ab) in vrow.iter().zip(a) {
            acc += vb * ab;
        }
        acc += contract_slices(&scratch.vv[kappa * dd..(kappa + 1) * dd], m);
        y[kappa] = acc;
    }
}

/// Runs the recursion over the step function. The drift term fires only
/// when the bundle carries one; the remainder only when a rule is given.
/// Deterministic given inputs; aborts (never clamps) on a non-finite
/// iterate or a remainder bound violation.
pub fn run(
    bundle: &VectorFieldBundle,
    rsf: &RoughStepFunction,
    y0: &[f64],
    remainder: Option<&RemainderRule>,
) -> Result<Trajectory> {
    let (e, d) = bundle.dims();
    if d != rsf.dim() {
        return Err(Error::DimensionMismatch(format!(
            "field expects d = {d}, stream has d = {}",
            rsf.dim()
        )));
    }
    if y0.len() != e {
        return Err(Error::DimensionMismatch(format!(
            "y0 has length {}, field expects e = {e}",
            y0.len()
        )));
    }
    let partition = rsf.partition().clone();
    let n = partition.num_cells();
    let mesh = partition.mesh();
    let trust = bundle.trust_radius();
    let mut scratch = StepScratch::new(e, d);
    let mut values = vec![0.0; (n + 1) * e];
    values[..e].copy_from_slice(y0);
    let mut y = y0.to_vec();
    let mut trust_exits = 0usize;
    if vec_norm(&y) > trust {
        trust_exits += 1;
    }
    let has_drift = bundle.has_drift();
    for j in 0..n {
        let r = match remainder {
            Some(rule) => Some(rule.emit(j, &y, mesh)?),
            None => None,
        };
        if has_drift {
            bundle.eval_drift(&y, &mut scratch.drift);
        }
        davie_step(bundle, &mut scratch, &mut y, rsf.stream().xi(j), rsf.stream().xi2(j));
        if has_drift {
            let dt = partition.spacing(j);
            for (yk, wk) in y.iter_mut().zip(&scratch.drift) {
                *yk += wk * dt;
            }
        }
        if let Some(r) = r {
            for (yk, rk) in y.iter_mut().zip(&r) {
                *yk += rk;
            }
        }
        if !vec_is_finite(&y) {
            return Err(Error::NonFinite { step: j + 1 });
        }
        if vec_norm(&y) > trust {
            trust_exits += 1;
        }
        values[(j + 1) * e..(j + 2) * e].copy_from_slice(&y);
    }
    Ok(Trajectory::new(
        partition,
        e,
        values,
        TrajectoryMeta {
            scheme: "recursion".into(),
            seed: None,
            trust_exits,
        },
    ))
}

/// Terminal-only variant of [`run`] for large Monte Carlo sweeps: the same
/// update loop without the (N+1)·e trajectory buffer.
pub fn run_terminal(
    bundle: &VectorFieldBundle,
    rsf: &RoughStepFunction,
    y0: &[f64],
    remainder: Option<&RemainderRule>,
) -> Result<Vec<f64>> {
    let (e, d) = bundle.dims();
    if d != rsf.dim() || y0.len() != e {
        return Err(Error::DimensionMismatch("run_terminal dimensions".into()));
    }
    let partition = rsf.partition();
    let n = partition.num_cells();
    let mesh = partition.mesh();
    let mut scratch = StepScratch::new(e, d);
    let mut y = y0.to_vec();
    let has_drift = bundle.has_drift();
    for j in 0..n {
        let r = match remainder {
            Some(rule) => Some(rule.emit(j, &y, mesh)?),
            None => None,
        };
        if has_drift {
            bundle.eval_drift(&y, &mut scratch.drift);
        }
        davie_step(bundle, &mut scratch, &mut y, rsf.stream().xi(j), rsf.stream().xi2(j));
        if has_drift {
            let dt = partition.spacing(j);
            for (yk, wk) in y.iter_mut().zip(&scratch.drift) {
                *yk += wk * dt;
            }
        }
        if let Some(r) = r {
            for (yk, rk) in y.iter_mut().zip(&r) {
                *yk += rk;
            }
        }
        if !vec_is_finite(&y) {
            return Err(Error::NonFinite { step: j + 1 });
        }
    }
    Ok(y)
}

/// θ-scheme wrapper: builds `Ξ_k = (1−θ)·ξ_k ⊗ ξ_k` over the given level-1
/// increments and delegates to [`run`]. θ = 1 is the explicit Euler scheme,
/// θ = ½ the midpoint rule, θ = 0 the backward Euler expansion.
pub fn run_theta_scheme(
    bundle: &VectorFieldBundle,
    partition: Arc<Partition>,
    xis: &[f64],
    theta: f64,
    y0: &[f64],
) -> Result<Trajectory> {
    let rsf = theta_step_function(bundle.dims().1, partition, xis, theta)?;
    let mut traj = run(bundle, &rsf, y0, None)?;
    traj.meta.scheme = format!("theta({theta})");
    Ok(traj)
}

/// The rough step function used by the θ-scheme: level-2 data
/// `Ξ_k = (1−θ)·ξ_k ⊗ ξ_k`.
pub fn theta_step_function(
    d: usize,
    partition: Arc<Partition>,
    xis: &[f64],
    theta: f64,
) -> Result<RoughStepFunction> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("θ = {theta} outside [0, 1]")));
    }
    let n = partition.num_cells();
    if xis.len() != n * d {
        return Err(Error::DimensionMismatch(format!(
            "expected {} increment entries, got {}",
            n * d,
            xis.len()
        )));
    }
    let w = 1.0 - theta;
    let mut stream = IncrementStream::zeros(d, n);
    for j in 0..n {
        stream.xi_mut(j).copy_from_slice(&xis[j * d..(j + 1) * d]);
        let xi: Vec<f64> = xis[j * d..(j + 1) * d].to_vec();
        let m = stream.xi2_mut(j);
        for alpha in 0..d {
            for beta in 0..d {
                m[alpha * d + beta] = w * xi[alpha] * xi[beta];
            }
        }
    }
    RoughStepFunction::build(partition, stream, SumConvention::EarlierLater)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{ConstantDrift, ConstantField, ScalarLinear};
    use crate::linalg::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_bundle() -> VectorFieldBundle {
        VectorFieldBundle::new(Arc::new(ScalarLinear { sigma: 1.0 }))
    }

    fn rsf_from_cells(d: usize, cells: &[(Vec<f64>, Mat)], t_end: f64) -> RoughStepFunction {
        let partition = Arc::new(Partition::uniform(cells.len(), t_end).unwrap());
        let stream = IncrementStream::from_cells(d, cells).unwrap();
        RoughStepFunction::build(partition, stream, SumConvention::EarlierLater).unwrap()
    }

    #[test]
    fn single_euler_step() {
        let rsf = rsf_from_cells(1, &[(vec![0.1], Mat::zeros(1, 1))], 1.0);
        let traj = run(&linear_bundle(), &rsf, &[1.0], None).unwrap();
        assert_eq!(traj.terminal()[0], 1.1);
    }

    #[test]
    fn single_midpoint_step() {
        let rsf = rsf_from_cells(1, &[(vec![0.1], Mat::from_rows(&[&[0.005]]))], 1.0);
        let traj = run(&linear_bundle(), &rsf, &[1.0], None).unwrap();
        assert!((traj.terminal()[0] - 1.105).abs() < 1e-15);
    }

    #[test]
    fn drift_only_riemann_sum() {
        // Zero noise, W ≡ 1: Y(1) = y0 + 1 exactly on a dyadic mesh.
        let n = 8;
        let cells: Vec<(Vec<f64>, Mat)> = (0..n).map(|_| (vec![0.0], Mat::zeros(1, 1))).collect();
        let rsf = rsf_from_cells(1, &cells, 1.0);
        let bundle = linear_bundle()
            .with_drift(Arc::new(ConstantDrift { values: vec![1.0] }))
            .unwrap();
        let traj = run(&bundle, &rsf, &[0.5], None).unwrap();
        assert_eq!(traj.terminal()[0], 1.5);
    }

    #[test]
    fn constant_field_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cells: Vec<(Vec<f64>, Mat)> = (0..32)
            .map(|_| {
                (
                    vec![rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)],
                    Mat::zeros(2, 2),
                )
            })
            .collect();
        let rsf = rsf_from_cells(2, &cells, 1.0);
        let v = Mat::from_rows(&[&[1.0, -2.0]]);
        let bundle = VectorFieldBundle::new(Arc::new(ConstantField { values: v.clone() }));
        let traj = run(&bundle, &rsf, &[0.0], None).unwrap();
        let x = rsf.terminal().a;
        let expect = v.get(0, 0) * x[0] + v.get(0, 1) * x[1];
        assert!((traj.terminal()[0] - expect).abs() <= 1e-13);
    }

    #[test]
    fn scalar_linear_product_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cells: Vec<(Vec<f64>, Mat)> = (0..64)
            .map(|_| {
                let xi = rng.random_range(-0.1..0.1);
                let m = rng.random_range(-0.01..0.01);
                (vec![xi], Mat::from_rows(&[&[m]]))
            })
            .collect();
        let rsf = rsf_from_cells(1, &cells, 1.0);
        let traj = run(&linear_bundle(), &rsf, &[1.0], None).unwrap();
        let mut product = 1.0;
        for (xi, m) in &cells {
            product *= 1.0 + xi[0] + m.get(0, 0);
        }
        assert!((traj.terminal()[0] - product).abs() <= 1e-12);
    }

    #[test]
    fn determinism_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cells: Vec<(Vec<f64>, Mat)> = (0..50)
            .map(|_| (vec![rng.random_range(-0.1..0.1)], Mat::zeros(1, 1)))
            .collect();
        let rsf = rsf_from_cells(1, &cells, 1.0);
        let a = run(&linear_bundle(), &rsf, &[1.0], None).unwrap();
        let b = run(&linear_bundle(), &rsf, &[1.0], None).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn nonfinite_iterate_aborts_with_step() {
        let cells = vec![
            (vec![1e308], Mat::zeros(1, 1)),
            (vec![1e308], Mat::zeros(1, 1)),
        ];
        let rsf = rsf_from_cells(1, &cells, 1.0);
        match run(&linear_bundle(), &rsf, &[1e308], None) {
            Err(Error::NonFinite { step }) => assert!(step >= 1),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn remainder_bound_enforced() {
        let cells = vec![(vec![0.1], Mat::zeros(1, 1)); 4];
        let rsf = rsf_from_cells(1, &cells, 1.0);
        let rule = RemainderRule::new(1.0, 1.5, |_, _, _| vec![10.0]).unwrap();
        match run(&linear_bundle(), &rsf, &[1.0], Some(&rule)) {
            Err(Error::RemainderBound { step, .. }) => assert_eq!(step, 0),
            other => panic!("expected RemainderBound, got {other:?}"),
        }
        // λ ≤ 1 rejected at construction.
        assert!(RemainderRule::new(1.0, 1.0, |_, _, _| vec![0.0]).is_err());
    }

    #[test]
    fn remainder_within_bound_is_applied() {
        let cells = vec![(vec![0.0], Mat::zeros(1, 1)); 4];
        let rsf = rsf_from_cells(1, &cells, 1.0);
        let mesh = rsf.partition().mesh();
        let rule = RemainderRule::new(1.0, 2.0, move |_, _, m| vec![m * m]).unwrap();
        let traj = run(&linear_bundle(), &rsf, &[0.0], Some(&rule)).unwrap();
        assert!((traj.terminal()[0] - 4.0 * mesh * mesh).abs() < 1e-15);
    }

    #[test]
    fn theta_one_is_euler() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let partition = Arc::new(Partition::uniform(16, 1.0).unwrap());
        let xis: Vec<f64> = (0..16).map(|_| rng.random_range(-0.1..0.1)).collect();
        let theta = run_theta_scheme(&linear_bundle(), partition.clone(), &xis, 1.0, &[1.0]).unwrap();
        let cells: Vec<(Vec<f64>, Mat)> = xis.iter().map(|x| (vec![*x], Mat::zeros(1, 1))).collect();
        let rsf = rsf_from_cells(1, &cells, 1.0);
        let euler = run(&linear_bundle(), &rsf, &[1.0], None).unwrap();
        assert_eq!(theta.values, euler.values);
    }

    #[test]
    fn theta_examples() {
        let partition = Arc::new(Partition::uniform(1, 1.0).unwrap());
        let half = run_theta_scheme(&linear_bundle(), partition.clone(), &[0.1], 0.5, &[1.0]).unwrap();
        assert!((half.terminal()[0] - 1.105).abs() < 1e-15);
        let zero = run_theta_scheme(&linear_bundle(), partition.clone(), &[0.1], 0.0, &[1.0]).unwrap();
        assert!((zero.terminal()[0] - 1.11).abs() < 1e-15);
        assert!(run_theta_scheme(&linear_bundle(), partition, &[0.1], 1.5, &[1.0]).is_err());
    }

    #[test]
    fn trajectory_piecewise_constant_eval() {
        let rsf = rsf_from_cells(
            1,
            &[(vec![0.1], Mat::zeros(1, 1)), (vec![0.2], Mat::zeros(1, 1))],
            1.0,
        );
        let traj = run(&linear_bundle(), &rsf, &[1.0], None).unwrap();
        assert_eq!(traj.value_at(0.0).unwrap()[0], 1.0);
        assert_eq!(traj.value_at(0.49).unwrap()[0], 1.0);
        assert_eq!(traj.value_at(0.5).unwrap()[0], 1.1);
        assert_eq!(traj.value_at(1.0).unwrap()[0], traj.terminal()[0]);
        assert!(traj.value_at(1.01).is_err());
    }

    #[test]
    fn csv_export_shape() {
        let rsf = rsf_from_cells(1, &[(vec![0.1], Mat::zeros(1, 1))], 1.0);
        let traj = run(&linear_bundle(), &rsf, &[1.0], None).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("t,y_1\n"));
    }
}
