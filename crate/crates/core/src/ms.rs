//! Morris-Shore reduction of bipartite linear systems.
//!
//! A system `dX/dt = -i H X` whose coefficient matrix only links an A-set of
//! variables to a B-set, `H = [[0, V], [V†, 0]]`, decouples into independent
//! two-variable pairs plus uncoupled ("dark") variables. The basis change is
//! the direct sum of the left and right singular bases of `V`; the pair
//! couplings are the singular values. A-set indices precede B-set indices
//! everywhere.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{fix_phase, svd, unitarity_residual, C64};

/// Singular values below this fraction of `‖V‖` are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Complex `n_a × n_b` coupling block between the A and B variable sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    v: DMatrix<C64>,
}

impl CouplingMatrix {
    pub fn new(v: DMatrix<C64>) -> Result<Self> {
        if v.nrows() == 0 || v.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "coupling matrix must be at least 1x1, got {}x{}",
                v.nrows(),
                v.ncols()
            )));
        }
        if v.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::InvalidInput(
                "coupling matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { v })
    }

    /// Builds from row-major real entries.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_a = rows.len();
        let n_b = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_b) {
            return Err(Error::InvalidInput("ragged coupling rows".into()));
        }
        let data: Vec<C64> = rows.iter().flatten().map(|&x| C64::new(x, 0.0)).collect();
        Self::new(DMatrix::from_row_slice(n_a, n_b, &data))
    }

    pub fn n_a(&self) -> usize {
        self.v.nrows()
    }

    pub fn n_b(&self) -> usize {
        self.v.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.v
    }
}

/// Result of the Morris-Shore reduction.
///
/// Columns of `transform` are ordered pair by pair, `(a_1, b_1), (a_2, b_2), …`,
/// followed by the structurally dark vectors of the larger set, so that
/// `M† H M` is block diagonal with blocks `[[0, v_j], [v_j, 0]]` and a
/// trailing zero block.
#[derive(Debug, Clone)]
pub struct MsDecomposition {
    pub n_a: usize,
    pub n_b: usize,
    pub transform: DMatrix<C64>,
    /// Unit vectors annihilated by `H`, supported on the larger variable set.
    pub dark_vectors: Vec<DVector<C64>>,
    /// Singular values of `V`, descending; entries under the rank tolerance are 0.
    pub pair_couplings: Vec<f64>,
    pub n_dark: usize,
}

pub fn assemble_bipartite(v: &CouplingMatrix) -> DMatrix<C64> {
    let (n_a, n_b) = (v.n_a(), v.n_b());
    let mut h = DMatrix::zeros(n_a + n_b, n_a + n_b);
    h.view_mut((0, n_a), (n_a, n_b)).copy_from(&v.v);
    h.view_mut((n_a, 0), (n_b, n_a)).copy_from(&v.v.adjoint());
    h
}

pub fn morris_shore(v: &CouplingMatrix) -> MsDecomposition {
    let (n_a, n_b) = (v.n_a(), v.n_b());
    let n = n_a + n_b;
    let pairs = n_a.min(n_b);
    let vnorm = v.v.norm();

    let tol = RANK_TOLERANCE * vnorm;
    let svd = svd(&v.v, tol);
    let (u, w) = (svd.u, svd.v);

    let mut transform = DMatrix::<C64>::zeros(n, n);
    let mut pair_couplings = Vec::with_capacity(pairs);
    let mut dark_vectors = Vec::new();
    let a_side_dark = n_a >= n_b;

    for j in 0..pairs {
        let sigma = svd.singular_values[j];
        let mut a = DVector::<C64>::zeros(n);
        let mut b = DVector::<C64>::zeros(n);
        a.rows_mut(0, n_a).copy_from(&u.column(j));
        b.rows_mut(n_a, n_b).copy_from(&w.column(j));
        // u†Vw = σ is preserved when both vectors share the same phase factor.
        let phase = if a_side_dark { fix_phase(&mut a) } else { fix_phase(&mut b) };
        if a_side_dark {
            b *= phase;
        } else {
            a *= phase;
        }
        let zero = sigma <= tol;
        pair_couplings.push(if zero { 0.0 } else { sigma });
        if zero {
            dark_vectors.push(if a_side_dark { a.clone() } else { b.clone() });
        }
        transform.set_column(2 * j, &a);
        transform.set_column(2 * j + 1, &b);
    }

    let (big, offset, basis) = if a_side_dark {
        (n_a, 0, u)
    } else {
        (n_b, n_a, w)
    };
    for (slot, j) in (pairs..big).enumerate() {
        let mut d = DVector::<C64>::zeros(n);
        d.rows_mut(offset, big).copy_from(&basis.column(j));
        fix_phase(&mut d);
        transform.set_column(2 * pairs + slot, &d);
        dark_vectors.push(d);
    }

    let n_dark = dark_vectors.len();
    MsDecomposition {
        n_a,
        n_b,
        transform,
        dark_vectors,
        pair_couplings,
        n_dark,
    }
}

impl MsDecomposition {
    /// `M† H M` for the coupling this decomposition was built from.
    pub fn transformed(&self, h: &DMatrix<C64>) -> DMatrix<C64> {
        self.transform.adjoint() * h * &self.transform
    }

    /// Largest deviation of `M† H M` from the ideal block form, in absolute units.
    pub fn block_residual(&self, h: &DMatrix<C64>) -> f64 {
        let t = self.transformed(h);
        let mut ideal = DMatrix::<C64>::zeros(t.nrows(), t.ncols());
        for (j, &vj) in self.pair_couplings.iter().enumerate() {
            ideal[(2 * j, 2 * j + 1)] = C64::new(vj, 0.0);
            ideal[(2 * j + 1, 2 * j)] = C64::new(vj, 0.0);
        }
        (t - ideal).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn unitarity_residual(&self) -> f64 {
        unitarity_residual(&self.transform)
    }

    /// Maps the original variables to the Morris-Shore variables, `Y = M† X`.
    pub fn to_ms_basis(&self, x: &DVector<C64>) -> DVector<C64> {
        self.transform.adjoint() * x
    }

    /// The eigenvalues implied by the reduction, ascending: `±v_j` for every
    /// pair and a zero for each structurally dark variable.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self
            .pair_couplings
            .iter()
            .flat_map(|&v| [v, -v])
            .chain(std::iter::repeat_n(0.0, self.n_a.abs_diff(self.n_b)))
            .collect();
        s.sort_by(f64::total_cmp);
        s
    }
}

/// Ascending eigenvalues of the Hermitian matrix `H` from a dense solver.
pub fn dense_spectrum(h: &DMatrix<C64>) -> Vec<f64> {
    let mut s: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    s
}

/// Checks that every dark vector stays annihilated after a complex diagonal
/// is added on the B-set indices. Holds whenever the dark vectors live on the
/// A set (`n_a ≥ n_b`); when the B set is larger its dark vectors see the
/// added diagonal and the answer is `false` for a nonzero `b_diag`.
pub fn dark_stability_under_b_diagonal(v: &CouplingMatrix, b_diag: &[C64]) -> Result<bool> {
    if b_diag.len() != v.n_b() {
        return Err(Error::InvalidInput(format!(
            "b_diag has length {}, expected {}",
            b_diag.len(),
            v.n_b()
        )));
    }
    let dec = morris_shore(v);
    let mut h = assemble_bipartite(v);
    for (i, &d) in b_diag.iter().enumerate() {
        h[(v.n_a() + i, v.n_a() + i)] += d;
    }
    let hn = h.norm();
    Ok(dec
        .dark_vectors
        .iter()
        .all(|d| (&h * d).norm() <= 1e-10 * hn * d.norm()))
}

fn complex_pairs(v: impl Iterator<Item = C64>) -> Vec<[f64; 2]> {
    v.map(|z| [z.re, z.im]).collect()
}

pub(crate) fn matrix_rows(m: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    m.row_iter()
        .map(|r| complex_pairs(r.iter().copied()))
        .collect()
}

#[derive(Serialize)]
struct MsJson<'a> {
    n_a: usize,
    n_b: usize,
    n_dark: usize,
    pair_couplings: &'a [f64],
    transform: Vec<Vec<[f64; 2]>>,
    dark_vectors: Vec<Vec<[f64; 2]>>,
}

impl Serialize for MsDecomposition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MsJson {
            n_a: self.n_a,
            n_b: self.n_b,
            n_dark: self.n_dark,
            pair_couplings: &self.pair_couplings,
            transform: matrix_rows(&self.transform),
            dark_vectors: self
                .dark_vectors
                .iter()
                .map(|d| complex_pairs(d.iter().copied()))
                .collect(),
        }
        .serialize(s)
    }
}
