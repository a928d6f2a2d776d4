//! Level-2 truncated tensor algebra over ℝ^d.
//!
//! A [`TensorPair`] holds a level-1 increment together with its level-2
//! iterated-integral block. Pairs compose by [`chen_mul`] and split into a
//! group-like part plus a symmetric defect via [`decompose`].

use crate::error::{Error, Result};
use crate::linalg::{vec_norm, Mat};

/// A level-2 increment: vector part `a` (length d) and matrix part `m` (d×d).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPair {
    pub a: Vec<f64>,
    pub m: Mat,
}

impl TensorPair {
    pub fn zero(d: usize) -> Self {
        TensorPair {
            a: vec![0.0; d],
            m: Mat::zeros(d, d),
        }
    }

    pub fn new(a: Vec<f64>, m: Mat) -> Self {
        assert_eq!(m.rows, a.len());
        assert_eq!(m.cols, a.len());
        TensorPair { a, m }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|x| x.is_finite()) && self.m.is_finite()
    }

    /// max(|a − other.a|∞, |m − other.m|∞)
    pub fn max_abs_diff(&self, other: &TensorPair) -> f64 {
        let va = self
            .a
            .iter()
            .zip(&other.a)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        va.max(self.m.max_abs_diff(&other.m))
    }
}

/// Log-coordinates of a group-like element: vector `a` and the strict upper
/// triangle of an antisymmetric matrix. Storing only the triangle makes
/// `A + Aᵀ = 0` hold exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLogElement {
    d: usize,
    a: Vec<f64>,
    /// Strict upper triangle of A in row-major pair order (0,1), (0,2), ... .
    upper: Vec<f64>,
}

impl GroupLogElement {
    pub fn new(a: Vec<f64>, antisym: &Mat) -> Self {
        let d = a.len();
        assert!(antisym.rows == d && antisym.cols == d);
        let mut upper = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in (i + 1)..d {
                upper.push(antisym.get(i, j));
            }
        }
        GroupLogElement { d, a, upper }
    }

    pub fn from_upper(a: Vec<f64>, upper: Vec<f64>) -> Self {
        let d = a.len();
        assert_eq!(upper.len(), d * (d - 1) / 2);
        GroupLogElement { d, a, upper }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Entry A[i,j] of the antisymmetric matrix.
    pub fn area(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Less => self.upper[self.upper_index(i, j)],
            Ordering::Greater => -self.upper[self.upper_index(j, i)],
            Ordering::Equal => 0.0,
        }
    }

    /// Strict upper-triangle entries paired with their (i, j) indices.
    pub fn planes(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let d = self.d;
        (0..d)
            .flat_map(move |i| ((i + 1)..d).map(move |j| (i, j)))
            .zip(self.upper.iter())
            .map(|((i, j), &v)| (i, j, v))
    }

    /// The full antisymmetric matrix A.
    pub fn antisym_matrix(&self) -> Mat {
        let mut m = Mat::zeros(self.d, self.d);
        for (i, j, v) in self.planes() {
            m.set(i, j, v);
            m.set(j, i, -v);
        }
        m
    }

    fn upper_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.d);
        // Row i starts after rows 0..i, row k contributing d-1-k entries.
        i * self.d - i * (i + 1) / 2 + (j - i - 1)
    }
}

/// Symmetric d×d defect matrix; `z = zᵀ` exactly by storing the upper
/// triangle including the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricDefect {
    d: usize,
    /// Upper triangle including the diagonal, row-major.
    upper: Vec<f64>,
}

impl SymmetricDefect {
    pub fn zero(d: usize) -> Self {
        SymmetricDefect {
            d,
            upper: vec![0.0; d * (d + 1) / 2],
        }
    }

    /// Symmetrizes the input: stores ½(m + mᵀ) on the off-diagonal.
    pub fn from_mat(m: &Mat) -> Self {
        assert!(m.is_square());
        let d = m.rows;
        let mut upper = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                if i == j {
                    upper.push(m.get(i, i));
                } else {
                    upper.push(0.5 * (m.get(i, j) + m.get(j, i)));
                }
            }
        }
        SymmetricDefect { d, upper }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // Row i starts after rows 0..i, row r holding d − r entries.
        self.upper[i * (2 * self.d - i + 1) / 2 + (j - i)]
    }

    pub fn to_mat(&self) -> Mat {
        let mut m = Mat::zeros(self.d, self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> SymmetricDefect {
        SymmetricDefect {
            d: self.d,
            upper: self.upper.iter().map(|v| v * s).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_mat().norm()
    }
}

/// Chen product of two increments:
/// `(a₁, M₁) ∘ (a₂, M₂) = (a₁ + a₂, M₁ + M₂ + a₁ ⊗ a₂)`.
///
/// Associative with neutral element `(0, 0)`; the cross term puts the
/// earlier level-1 increment on the left of the outer product.
pub fn chen_mul(p: &TensorPair, q: &TensorPair) -> Result<TensorPair> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "chen_mul: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let a: Vec<f64> = p.a.iter().zip(&q.a).map(|(x, y)| x + y).collect();
    let mut m = p.m.add(&q.m);
    m.add_outer(&p.a, &q.a, 1.0);
    Ok(TensorPair::new(a, m))
}

/// In-place left accumulation: `acc ← acc ∘ q`. Same arithmetic as
/// [`chen_mul`] without the dimension check or allocation.
pub fn chen_mul_assign(acc: &mut TensorPair, q: &TensorPair) {
    debug_assert_eq!(acc.dim(), q.dim());
    acc.m.add_assign(&q.m);
    acc.m.add_outer(&acc.a, &q.a, 1.0);
    for (x, y) in acc.a.iter_mut().zip(&q.a) {
        *x += y;
    }
}

/// Split a pair into its group-like log-coordinates and symmetric defect:
/// `A = ½(M − Mᵀ)`, `z = ½(M + Mᵀ) − ½ a⊗a`.
pub fn decompose(p: &TensorPair) -> (GroupLogElement, SymmetricDefect) {
    let d = p.dim();
    let g = GroupLogElement::new(p.a.clone(), &p.m.antisym_part());
    let mut zu = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            let sym = 0.5 * (p.m.get(i, j) + p.m.get(j, i));
            zu.push(sym - 0.5 * p.a[i] * p.a[j]);
        }
    }
    (g, SymmetricDefect { d, upper: zu })
}

/// Inverse of [`decompose`]: `(a, ½ a⊗a + A + z)`.
pub fn recompose(g: &GroupLogElement, z: &SymmetricDefect) -> TensorPair {
    let d = g.dim();
    assert_eq!(z.dim(), d);
    let mut m = Mat::zeros(d, d);
    m.add_outer(g.a(), g.a(), 0.5);
    for i in 0..d {
        for j in 0..d {
            let v = m.get(i, j) + g.area(i, j) + z.get(i, j);
            m.set(i, j, v);
        }
    }
    TensorPair::new(g.a().to_vec(), m)
}

/// Upper surrogate for the Carnot–Carathéodory norm:
/// `|a| + Σ_{α<β} 2·√|A^{αβ}|`.
///
/// Homogeneous of degree one under the dilation `(a, A) → (λa, λ²A)`.
pub fn cc_norm_upper(g: &GroupLogElement) -> f64 {
    let mut total = vec_norm(g.a());
    for (_, _, area) in g.planes() {
        total += 2.0 * area.abs().sqrt();
    }
    total
}

/// Level-2 signature of a straight segment with displacement `v`:
/// `(v, ½ v⊗v)`.
pub fn segment_signature(v: &[f64]) -> TensorPair {
    let d = v.len();
    let mut m = Mat::zeros(d, d);
    m.add_outer(v, v, 0.5);
    TensorPair::new(v.to_vec(), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::outer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(rng: &mut ChaCha8Rng, d: usize) -> TensorPair {
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut m = Mat::zeros(d, d);
        for v in m.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        TensorPair::new(a, m)
    }

    #[test]
    fn neutral_element() {
        let z = TensorPair::zero(3);
        let p = chen_mul(&z, &z).unwrap();
        assert_eq!(p, z);
    }

    #[test]
    fn single_entry_cross_term() {
        let p = TensorPair::new(vec![1.0, 0.0], Mat::zeros(2, 2));
        let q = TensorPair::new(vec![0.0, 1.0], Mat::zeros(2, 2));
        let r = chen_mul(&p, &q).unwrap();
        assert_eq!(r.a, vec![1.0, 1.0]);
        assert_eq!(r.m.get(0, 1), 1.0);
        assert_eq!(r.m.get(1, 0), 0.0);
        assert_eq!(r.m.get(0, 0), 0.0);
        assert_eq!(r.m.get(1, 1), 0.0);
    }

    #[test]
    fn associativity_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = random_pair(&mut rng, 3);
            let q = random_pair(&mut rng, 3);
            let r = random_pair(&mut rng, 3);
            let left = chen_mul(&chen_mul(&p, &q).unwrap(), &r).unwrap();
            let right = chen_mul(&p, &chen_mul(&q, &r).unwrap()).unwrap();
            assert!(left.max_abs_diff(&right) <= 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = TensorPair::zero(2);
        let q = TensorPair::zero(3);
        assert!(chen_mul(&p, &q).is_err());
    }

    #[test]
    fn decompose_straight_line() {
        let a = vec![0.7, -0.3];
        let mut m = Mat::zeros(2, 2);
        m.add_outer(&a, &a, 0.5);
        let (g, z) = decompose(&TensorPair::new(a, m));
        for (_, _, v) in g.planes() {
            assert_eq!(v, 0.0);
        }
        assert!(z.norm() < 1e-15);
    }

    #[test]
    fn decompose_worked_example() {
        // a = (1, 0), M = [[0.5, 1], [0, 0]]
        let p = TensorPair::new(
            vec![1.0, 0.0],
            Mat::from_rows(&[&[0.5, 1.0], &[0.0, 0.0]]),
        );
        let (g, z) = decompose(&p);
        assert_eq!(g.area(0, 1), 0.5);
        assert_eq!(g.area(1, 0), -0.5);
        assert_eq!(z.get(0, 1), 0.5);
        assert_eq!(z.get(1, 0), 0.5);
        assert_eq!(z.get(0, 0), 0.0);
        assert_eq!(z.get(1, 1), 0.0);
    }

    #[test]
    fn decompose_pure_area() {
        let m = Mat::from_rows(&[&[0.0, 2.0], &[-2.0, 0.0]]);
        let p = TensorPair::new(vec![0.0, 0.0], m.clone());
        let (g, z) = decompose(&p);
        assert!(g.antisym_matrix().max_abs_diff(&m) == 0.0);
        assert!(z.norm() == 0.0);
    }

    #[test]
    fn recompose_roundtrip_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_pair(&mut rng, 4);
            let (g, z) = decompose(&p);
            let back = recompose(&g, &z);
            assert!(back.max_abs_diff(&p) <= 1e-14);
            // Area is preserved by decompose.
            assert!(back
                .m
                .antisym_part()
                .max_abs_diff(&p.m.antisym_part())
                <= 1e-14);
        }
    }

    #[test]
    fn cc_norm_values() {
        let d2 = |a: Vec<f64>, m: Mat| decompose(&TensorPair::new(a, m)).0;
        assert_eq!(cc_norm_upper(&d2(vec![0.0, 0.0], Mat::zeros(2, 2))), 0.0);
        assert_eq!(cc_norm_upper(&d2(vec![1.0, 0.0], outer(&[1.0, 0.0], &[0.5, 0.0]))), 1.0);
        // Pure area A^{12} = 1/4 → 2·sqrt(1/4) = 1.
        let m = Mat::from_rows(&[&[0.0, 0.25], &[-0.25, 0.0]]);
        let g = d2(vec![0.0, 0.0], m);
        assert!((cc_norm_upper(&g) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cc_norm_homogeneous_under_dilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_pair(&mut rng, 3);
            let (g, _) = decompose(&p);
            let lambda: f64 = rng.random_range(0.1..4.0);
            let scaled = GroupLogElement::new(
                g.a().iter().map(|x| lambda * x).collect(),
                &g.antisym_matrix().scale(lambda * lambda),
            );
            let lhs = cc_norm_upper(&scaled);
            let rhs = lambda * cc_norm_upper(&g);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn segment_signature_matches_definition() {
        let v = vec![0.3, -0.2, 0.1];
        let s = segment_signature(&v);
        assert_eq!(s.a, v);
        assert!(s.m.max_abs_diff(&outer(&v, &v).scale(0.5)) == 0.0);
    }
}
