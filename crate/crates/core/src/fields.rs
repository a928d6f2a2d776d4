//! Vector field bundles: the diffusion field V, its analytic Jacobian, the
//! derived second-order field, and an optional drift, plus a string-keyed
//! registry so experiment configs can reference fields by name.

use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::{vec_norm, Mat};

/// A field V: ℝ^e → ℝ^{e×d} with analytic Jacobian.
///
/// Implementations must be pure and re-entrant: evaluation goes on in
/// parallel from many workers.
pub trait VectorField: Send + Sync {
    /// (e, d).
    fn dims(&self) -> (usize, usize);

    /// Writes V(y) row-major into `out` (length e·d), entry `[κ·d + β]`.
    fn eval(&self, y: &[f64], out: &mut [f64]);

    /// Writes the Jacobian ∂_γ V_κ^β into `out` (length e·d·e), entry
    /// `[(κ·d + β)·e + γ]`.
    fn eval_jacobian(&self, y: &[f64], out: &mut [f64]);

    /// Radius of the ball around the origin on which the field is trusted
    /// to behave like a C³-bounded function.
    fn trust_radius(&self) -> f64 {
        f64::INFINITY
    }
}

/// Drift field W: ℝ^e → ℝ^e.
pub trait DriftField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64], out: &mut [f64]);
}

/// Diffusion field, Jacobian, and optional drift, packaged for the solvers.
#[derive(Clone)]
pub struct VectorFieldBundle {
    field: Arc<dyn VectorField>,
    drift: Option<Arc<dyn DriftField>>,
}

impl VectorFieldBundle {
    pub fn new(field: Arc<dyn VectorField>) -> Self {
        VectorFieldBundle { field, drift: None }
    }

    pub fn with_drift(mut self, drift: Arc<dyn DriftField>) -> Result<Self> {
        if drift.dim() != self.dims().0 {
            return Err(Error::DimensionMismatch(
                "drift dimension does not match field".into(),
            ));
        }
        self.drift = Some(drift);
        Ok(self)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.field.dims()
    }

    pub fn trust_radius(&self) -> f64 {
        self.field.trust_radius()
    }

    #[inline]
    pub fn eval_v(&self, y: &[f64], out: &mut [f64]) {
        self.field.eval(y, out);
    }

    #[inline]
    pub fn eval_jacobian(&self, y: &[f64], out: &mut [f64]) {
        self.field.eval_jacobian(y, out);
    }

    pub fn has_drift(&self) -> bool {
        self.drift.is_some()
    }

    /// Writes W(y) into `out`; returns false (leaving zeros) without a drift.
    pub fn eval_drift(&self, y: &[f64], out: &mut [f64]) -> bool {
        match &self.drift {
            Some(w) => {
                w.eval(y, out);
                true
            }
            None => {
                out.fill(0.0);
                false
            }
        }
    }
}

/// The derived second-order field: e matrices
/// `𝕍_κ^{αβ}(y) = Σ_γ ∂_γ V_κ^β(y) · V_γ^α(y)`.
pub struct DerivedField {
    bundle: VectorFieldBundle,
}

/// Builds the derived field evaluator from a bundle. The Jacobian is
/// taken on trust here; run [`validate_jacobian`] first.
pub fn derived_field(bundle: &VectorFieldBundle) -> DerivedField {
    DerivedField {
        bundle: bundle.clone(),
    }
}

impl DerivedField {
    pub fn dims(&self) -> (usize, usize) {
        self.bundle.dims()
    }

    /// Writes the e matrices into `out` (length e·d·d), entry
    /// `[(κ·d + α)·d + β]` = 𝕍_κ^{αβ}(y).
    pub fn eval(&self, y: &[f64], out: &mut [f64]) {
        let (e, d) = self.dims();
        let mut v = vec![0.0; e * d];
        let mut jac = vec![0.0; e * d * e];
        self.bundle.eval_v(y, &mut v);
        self.bundle.eval_jacobian(y, &mut jac);
        eval_derived_into(e, d, &v, &jac, out);
    }

    /// The matrix 𝕍_κ(y).
    pub fn eval_component(&self, y: &[f64], kappa: usize) -> Mat {
        let (e, d) = self.dims();
        let mut all = vec![0.0; e * d * d];
        self.eval(y, &mut all);
        Mat {
            rows: d,
            cols: d,
            data: all[kappa * d * d..(kappa + 1) * d * d].to_vec(),
        }
    }
}

/// Allocation-free kernel shared with the solvers:
/// `out[(κ·d + α)·d + β] = Σ_γ jac[(κ·d + β)·e + γ] · v[γ·d + α]`.
#[inline]
pub fn eval_derived_into(e: usize, d: usize, v: &[f64], jac: &[f64], out: &mut [f64]) {
    debug_assert_eq!(v.len(), e * d);
    debug_assert_eq!(jac.len(), e * d * e);
    debug_assert_eq!(out.len(), e * d * d);
    for kappa in 0..e {
        for alpha in 0..d {
            for beta in 0..d {
                let mut acc = 0.0;
                for gamma in 0..e {
                    acc += jac[(kappa * d + beta) * e + gamma] * v[gamma * d + alpha];
                }
                out[(kappa * d + alpha) * d + beta] = acc;
            }
        }
    }
}

/// Matrix inner product `A : B = Σ_{αβ} A^{αβ} B^{αβ}`.
pub fn contract(a: &Mat, b: &Mat) -> Result<f64> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(Error::DimensionMismatch(format!(
            "contract: {}×{} vs {}×{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(contract_slices(&a.data, &b.data))
}

#[inline]
pub fn contract_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Finite-difference check of one point.
#[derive(Debug, Clone)]
pub struct JacobianPointCheck {
    pub point: Vec<f64>,
    pub max_rel_error: f64,
    pub pass: bool,
}

/// Report of [`validate_jacobian`].
#[derive(Debug, Clone)]
pub struct JacobianReport {
    pub checks: Vec<JacobianPointCheck>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares the analytic Jacobian against central finite differences at
/// each point (step 1e−5 scaled by the point magnitude); passes at 1e−5.
pub fn validate_jacobian(bundle: &VectorFieldBundle, points: &[Vec<f64>]) -> JacobianReport {
    const TOL: f64 = 1e-5;
    let (e, d) = bundle.dims();
    let mut checks = Vec::with_capacity(points.len());
    let mut v_plus = vec![0.0; e * d];
    let mut v_minus = vec![0.0; e * d];
    let mut analytic = vec![0.0; e * d * e];
    for point in points {
        bundle.eval_jacobian(point, &mut analytic);
        let h = 1e-5 * vec_norm(point).max(1.0);
        let mut max_rel: f64 = 0.0;
        let mut shifted = point.clone();
        for gamma in 0..e {
            shifted[gamma] = point[gamma] + h;
            bundle.eval_v(&shifted, &mut v_plus);
            shifted[gamma] = point[gamma] - h;
            bundle.eval_v(&shifted, &mut v_minus);
            shifted[gamma] = point[gamma];
            for kb in 0..e * d {
                let fd = (v_plus[kb] - v_minus[kb]) / (2.0 * h);
                let an = analytic[kb * e + gamma];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1.0);
                max_rel = max_rel.max(rel);
            }
        }
        checks.push(JacobianPointCheck {
            point: point.clone(),
            max_rel_error: max_rel,
            pass: max_rel <= TOL,
        });
    }
    let pass = checks.iter().all(|c| c.pass);
    JacobianReport {
        checks,
        tolerance: TOL,
        pass,
    }
}

// ---------------------------------------------------------------------------
// Built-in fields and the registry
// ---------------------------------------------------------------------------

/// Scalar linear field V(y) = σy (e = d = 1); 𝕍(y) = σ²y.
pub struct ScalarLinear {
    pub sigma: f64,
}

impl VectorField for ScalarLinear {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * y[0];
    }
    fn eval_jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out[0] = self.sigma;
    }
}

/// Constant field: V(y) ≡ C; 𝕍 ≡ 0.
pub struct ConstantField {
    pub values: Mat, // e×d
}

impl VectorField for ConstantField {
    fn dims(&self) -> (usize, usize) {
        (self.values.rows, self.values.cols)
    }
    fn eval(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.values.data);
    }
    fn eval_jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Affine field `V_κ^β(y) = Σ_γ B[κ][β][γ] y_γ + c[κ][β]`.
pub struct AffineField {
    pub e: usize,
    pub d: usize,
    /// Flat, entry `[(κ·d + β)·e + γ]`.
    pub linear: Vec<f64>,
    /// Flat, entry `[κ·d + β]`.
    pub offset: Vec<f64>,
}

impl AffineField {
    pub fn new(e: usize, d: usize, linear: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if linear.len() != e * d * e || offset.len() != e * d {
            return Err(Error::DimensionMismatch(
                "affine field coefficient shapes".into(),
            ));
        }
        Ok(AffineField {
            e,
            d,
            linear,
            offset,
        })
    }
}

impl VectorField for AffineField {
    fn dims(&self) -> (usize, usize) {
        (self.e, self.d)
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        for kb in 0..self.e * self.d {
            let mut acc = self.offset[kb];
            for gamma in 0..self.e {
                acc += self.linear[kb * self.e + gamma] * y[gamma];
            }
            out[kb] = acc;
        }
    }
    fn eval_jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.linear);
    }
}

/// Bounded smooth test field, e = 1, d = 2: V(y) = (sin y, cos y).
pub struct TrigField;

impl VectorField for TrigField {
    fn dims(&self) -> (usize, usize) {
        (1, 2)
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        out[0] = y[0].sin();
        out[1] = y[0].cos();
    }
    fn eval_jacobian(&self, y: &[f64], out: &mut [f64]) {
        out[0] = y[0].cos();
        out[1] = -y[0].sin();
    }
}

/// Constant drift W(y) ≡ c.
pub struct ConstantDrift {
    pub values: Vec<f64>,
}

impl DriftField for ConstantDrift {
    fn dim(&self) -> usize {
        self.values.len()
    }
    fn eval(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.values);
    }
}

/// Linear drift W(y) = a·y + b (componentwise), e = 1.
pub struct ScalarLinearDrift {
    pub a: f64,
    pub b: f64,
}

impl DriftField for ScalarLinearDrift {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        out[0] = self.a * y[0] + self.b;
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    sigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    matrix: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineParams {
    e: usize,
    d: usize,
    linear: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    offset: Option<Vec<Vec<f64>>>,
}

/// Registry keys understood by [`make_field`].
pub const FIELD_KEYS: &[&str] = &["affine", "constant", "linear", "trig"];

/// Builds a field from its registry key and JSON parameter map.
pub fn make_field(key: &str, params: &serde_json::Value) -> Result<Arc<dyn VectorField>> {
    let bad = |e: serde_json::Error| Error::config(format!("field.params ({key})"), e.to_string());
    match key {
        "linear" => {
            let p: LinearParams = serde_json::from_value(params.clone()).map_err(bad)?;
            if !p.sigma.is_finite() {
                return Err(Error::config("field.params.sigma", "must be finite"));
            }
            Ok(Arc::new(ScalarLinear { sigma: p.sigma }))
        }
        "constant" => {
            let p: ConstantParams = serde_json::from_value(params.clone()).map_err(bad)?;
            let e = p.matrix.len();
            if e == 0 || p.matrix.iter().any(|r| r.len() != p.matrix[0].len()) {
                return Err(Error::config("field.params.matrix", "ragged or empty"));
            }
            let refs: Vec<&[f64]> = p.matrix.iter().map(|r| r.as_slice()).collect();
            Ok(Arc::new(ConstantField {
                values: Mat::from_rows(&refs),
            }))
        }
        "affine" => {
            let p: AffineParams = serde_json::from_value(params.clone()).map_err(bad)?;
            let mut linear = vec![0.0; p.e * p.d * p.e];
            if p.linear.len() != p.e {
                return Err(Error::config("field.params.linear", "needs e outer rows"));
            }
            for (kappa, rows) in p.linear.iter().enumerate() {
                if rows.len() != p.d {
                    return Err(Error::config("field.params.linear", "needs d middle rows"));
                }
                for (beta, gammas) in rows.iter().enumerate() {
                    if gammas.len() != p.e {
                        return Err(Error::config("field.params.linear", "needs e inner cols"));
                    }
                    for (gamma, v) in gammas.iter().enumerate() {
                        linear[(kappa * p.d + beta) * p.e + gamma] = *v;
                    }
                }
            }
            let mut offset = vec![0.0; p.e * p.d];
            if let Some(off) = p.offset {
                if off.len() != p.e || off.iter().any(|r| r.len() != p.d) {
                    return Err(Error::config("field.params.offset", "needs e×d entries"));
                }
                for (kappa, row) in off.iter().enumerate() {
                    for (beta, v) in row.iter().enumerate() {
                        offset[kappa * p.d + beta] = *v;
                    }
                }
            }
            Ok(Arc::new(AffineField::new(p.e, p.d, linear, offset)?))
        }
        "trig" => {
            if !params.is_null() && params != &serde_json::json!({}) {
                return Err(Error::config("field.params", "trig takes no parameters"));
            }
            Ok(Arc::new(TrigField))
        }
        other => Err(Error::config(
            "field.key",
            format!("unknown field `{other}`; known: {FIELD_KEYS:?}"),
        )),
    }
}
