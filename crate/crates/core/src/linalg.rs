//! Small dense complex linear-algebra helpers shared by the physics modules.
//!
//! General (non-Hermitian) eigenvectors are obtained from the complex Schur
//! form `A = Q T Q†` by back-substitution on the triangular factor.

use nalgebra::{DMatrix, DVector, Matrix5, Schur, Vector5};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type Mat5 = Matrix5<C64>;
pub type Vec5 = Vector5<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

/// Eigenvalues and unit-norm right eigenvectors (as columns) of a square matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<C64>,
    pub vectors: DMatrix<C64>,
}

impl Eigen {
    pub fn vector(&self, j: usize) -> DVector<C64> {
        self.vectors.column(j).into_owned()
    }
}

pub fn eig(a: &DMatrix<C64>) -> Result<Eigen> {
    let n = a.nrows();
    if n != a.ncols() || n == 0 {
        return Err(Error::InvalidInput(format!(
            "eigen-decomposition needs a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.norm();
    if scale == 0.0 {
        return Ok(Eigen {
            values: vec![C64::new(0.0, 0.0); n],
            vectors: DMatrix::identity(n, n),
        });
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailure(n))?;
    let (q, t) = schur.unpack();
    let smin = (f64::EPSILON * t.norm()).max(f64::MIN_POSITIVE);

    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    let mut y = DVector::<C64>::zeros(n);
    for i in 0..n {
        let lambda = t[(i, i)];
        values.push(lambda);
        y.fill(C64::new(0.0, 0.0));
        y[i] = C64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut s = C64::new(0.0, 0.0);
            for l in (j + 1)..=i {
                s += t[(j, l)] * y[l];
            }
            let mut d = t[(j, j)] - lambda;
            if d.norm() < smin {
                d = C64::new(smin, 0.0);
            }
            y[j] = -s / d;
        }
        let v = &q * &y;
        let norm = v.norm();
        vectors.set_column(i, &(v / C64::new(norm, 0.0)));
    }
    Ok(Eigen { values, vectors })
}

pub fn eig5(a: &Mat5) -> Result<(Vec<C64>, Vec<Vec5>)> {
    let d = DMatrix::from_iterator(5, 5, a.iter().copied());
    let e = eig(&d)?;
    let vecs = (0..5)
        .map(|j| Vec5::from_iterator(e.vectors.column(j).iter().copied()))
        .collect();
    Ok((e.values, vecs))
}

/// Multiplies `v` by a unit phase so that its first component whose modulus
/// exceeds `1e-12·‖v‖` is real and positive. Returns the phase factor applied.
pub fn fix_phase<S>(v: &mut nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>) -> C64
where
    S: nalgebra::StorageMut<C64, nalgebra::Dyn, nalgebra::U1>,
{
    let tol = 1e-12 * v.norm();
    match v.iter().find(|x| x.norm() > tol) {
        Some(&x) => {
            let phase = x.conj() / x.norm();
            for e in v.iter_mut() {
                *e *= phase;
            }
            phase
        }
        None => C64::new(1.0, 0.0),
    }
}

/// `‖A†A − I‖_F` for a square matrix.
pub fn unitarity_residual(a: &DMatrix<C64>) -> f64 {
    let n = a.ncols();
    (a.adjoint() * a - DMatrix::<C64>::identity(n, n)).norm()
}

/// Extends the orthonormal columns of `basis` (n × r) to `n` columns by
/// repeatedly adding the standard basis vector with the largest component
/// outside the current span, orthogonalized twice.
pub fn complete_orthonormal(basis: &DMatrix<C64>) -> DMatrix<C64> {
    let n = basis.nrows();
    let mut cols: Vec<DVector<C64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    while cols.len() < n {
        let mut best: Option<(f64, DVector<C64>)> = None;
        for i in 0..n {
            let mut r = DVector::<C64>::zeros(n);
            r[i] = C64::new(1.0, 0.0);
            for _ in 0..2 {
                for c in &cols {
                    let proj = c.dotc(&r);
                    r -= c * proj;
                }
            }
            let norm = r.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-14) {
                best = Some((norm, r));
            }
        }
        let (norm, r) = best.expect("n > 0");
        cols.push(r / C64::new(norm, 0.0));
    }
    DMatrix::from_columns(&cols)
}

/// Full singular value decomposition `A = U Σ V†` with unitary `U` (m × m)
/// and `V` (n × n); singular values descending, `min(m, n)` of them.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<C64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<C64>,
}

/// One-sided Jacobi rotation of columns `p`, `q`: the phase of `q` is
/// removed first so that the 2 × 2 problem is real.
fn rotate_columns(m: &mut DMatrix<C64>, p: usize, q: usize, c: f64, s: f64, phase: C64) {
    let conj = phase.conj();
    for i in 0..m.nrows() {
        let a = m[(i, p)];
        let b = m[(i, q)] * conj;
        m[(i, p)] = a * c - b * s;
        m[(i, q)] = a * s + b * c;
    }
}

/// SVD by one-sided (Hestenes) Jacobi sweeps, accurate for rank-deficient
/// input. Left vectors belonging to singular values `<= zero_tol` are
/// completed to an orthonormal basis rather than normalized from noise.
pub fn svd(a: &DMatrix<C64>, zero_tol: f64) -> Svd {
    if a.nrows() < a.ncols() {
        let t = svd(&a.adjoint(), zero_tol);
        return Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
    }
    let n = a.ncols();
    let mut work = a.clone();
    let mut v = DMatrix::<C64>::identity(n, n);
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = work.column(p).norm_squared();
                let beta = work.column(q).norm_squared();
                let gamma = work.column(p).dotc(&work.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let phase = gamma / g;
                rotate_columns(&mut work, p, q, c, c * t, phase);
                rotate_columns(&mut v, p, q, c, c * t, phase);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n).map(|j| work.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let singular_values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v = DMatrix::from_columns(&order.iter().map(|&j| v.column(j).into_owned()).collect::<Vec<_>>());
    let kept: Vec<DVector<C64>> = order
        .iter()
        .filter(|&&j| norms[j] > zero_tol && norms[j] > 0.0)
        .map(|&j| work.column(j) / C64::new(norms[j], 0.0))
        .collect();
    let u = if kept.is_empty() {
        DMatrix::identity(a.nrows(), a.nrows())
    } else {
        complete_orthonormal(&DMatrix::from_columns(&kept))
    };
    Svd {
        u,
        singular_values,
        v,
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}
