//! Spectral primitives on real symmetric matrices.
//!
//! Every matrix function here (powers, exponential, logarithm) is computed
//! through an eigendecomposition `S = V diag(λ) Vᵀ`. Composite products are
//! re-symmetrized with `(M + Mᵀ)/2` so that positivity checks downstream see
//! an exactly symmetric matrix.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default eigenvalue floor, relative to the largest eigenvalue.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// An n×n real symmetric matrix. Symmetrized on construction.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{}", self.0)
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Input(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Input("matrix order must be positive".into()));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("matrix has non-finite entries".into()));
        }
        Ok(SymMatrix(symmetrize(&m)))
    }

    /// Wraps a matrix known to be square and finite; symmetrizes it.
    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        debug_assert!(m.is_square());
        SymMatrix(symmetrize(&m))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Input(format!(
                "expected {} entries for order {n}, got {}",
                n * n,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Input("matrix rows must all have length n".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(n, &flat)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &other.0)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Frobenius inner product `tr(AB)`.
    pub fn frobenius_inner(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    /// Product `self · other · self`, re-symmetrized.
    pub fn sandwich(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix::from_matrix_unchecked(&self.0 * &other.0 * &self.0)
    }

    /// Symmetrized product `(AB + BA)/2` (Jordan product).
    pub fn jordan(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix::from_matrix_unchecked(&self.0 * &other.0)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = sym_eig(self)?;
        Ok(eig.values[self.n() - 1])
    }
}

/// `A M Aᵀ` for a (possibly rectangular) `a`, re-symmetrized.
pub fn congruence(a: &DMatrix<f64>, m: &SymMatrix) -> SymMatrix {
    SymMatrix::from_matrix_unchecked(a * m.as_matrix() * a.transpose())
}

/// Eigendecomposition with eigenvalues in descending order and the
/// largest-magnitude component of each eigenvector made positive.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    /// Rebuilds `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let scaled = DVector::from_iterator(self.values.len(), self.values.iter().map(|&l| f(l)));
        let m = &self.vectors * DMatrix::from_diagonal(&scaled) * self.vectors.transpose();
        SymMatrix::from_matrix_unchecked(m)
    }
}

fn canonicalize(values: DVector<f64>, vectors: DMatrix<f64>) -> Eigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut out_vals = DVector::zeros(n);
    let mut out_vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        out_vals[dst] = values[src];
        let mut col = vectors.column(src).clone_owned();
        let mut lead = 0;
        for i in 1..n {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        out_vecs.set_column(dst, &col);
    }
    Eigen {
        values: out_vals,
        vectors: out_vecs,
    }
}

pub fn sym_eig(s: &SymMatrix) -> Result<Eigen> {
    if s.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = SymmetricEigen::new(s.0.clone());
    Ok(canonicalize(eigenvalues, eigenvectors))
}

/// A symmetric positive definite matrix together with its eigendecomposition.
#[derive(Clone)]
pub struct SpdMatrix {
    sym: SymMatrix,
    eig: Eigen,
}

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpdMatrix{}", self.sym.0)
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.sym == other.sym
    }
}

fn check_floor(values: &DVector<f64>, floor: f64) -> Result<()> {
    let max = values.max();
    let min = values.min();
    if !(max > 0.0) || min <= floor * max {
        return Err(Error::Conditioning(format!(
            "eigenvalue {min:e} is below the floor {floor:e} x {max:e}"
        )));
    }
    Ok(())
}

impl SpdMatrix {
    pub fn new(sym: SymMatrix) -> Result<Self> {
        Self::with_floor(sym, EIGEN_FLOOR)
    }

    pub fn with_floor(sym: SymMatrix, floor: f64) -> Result<Self> {
        let eig = sym_eig(&sym)?;
        check_floor(&eig.values, floor)?;
        Ok(SpdMatrix { sym, eig })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SymMatrix::from_rows(rows)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag)?)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(SymMatrix::identity(n)).expect("identity is positive definite")
    }

    /// Builds `V diag(values) Vᵀ` from an orthonormal `V`, reusing the
    /// decomposition instead of recomputing it.
    fn from_eigen(values: DVector<f64>, vectors: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Conditioning("non-finite eigenvalue".into()));
        }
        let eig = canonicalize(values, vectors);
        check_floor(&eig.values, EIGEN_FLOOR)?;
        let sym = eig.reconstruct_with(|l| l);
        Ok(SpdMatrix { sym, eig })
    }

    pub fn n(&self) -> usize {
        self.sym.n()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.sym
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.sym.as_matrix()
    }

    pub fn eigen(&self) -> &Eigen {
        &self.eig
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig.values[self.n() - 1]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eig.values[0]
    }

    pub fn condition_number(&self) -> f64 {
        self.max_eigenvalue() / self.min_eigenvalue()
    }

    pub fn log_det(&self) -> f64 {
        self.eig.values.iter().map(|l| l.ln()).sum()
    }

    pub fn inverse(&self) -> SpdMatrix {
        self.power_unchecked(-1.0)
    }

    pub fn sqrt(&self) -> SpdMatrix {
        self.power_unchecked(0.5)
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.power_unchecked(-0.5)
    }

    /// Powers with |t| ≤ 1 keep the condition number within the floor.
    fn power_unchecked(&self, t: f64) -> SpdMatrix {
        spd_power(self, t).expect("|t| <= 1 preserves the eigenvalue floor")
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl Serialize for SpdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.sym.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let sym = SymMatrix::deserialize(d)?;
        SpdMatrix::new(sym).map_err(serde::de::Error::custom)
    }
}

/// `P^t = V diag(λᵗ) Vᵀ`.
pub fn spd_power(p: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    if !t.is_finite() {
        return Err(Error::Input("exponent must be finite".into()));
    }
    if t == 1.0 {
        return Ok(p.clone());
    }
    let values = p.eig.values.map(|l| l.powf(t));
    SpdMatrix::from_eigen(values, p.eig.vectors.clone())
}

pub fn spd_log(p: &SpdMatrix) -> SymMatrix {
    p.eig.reconstruct_with(f64::ln)
}

pub fn sym_exp(s: &SymMatrix) -> Result<SpdMatrix> {
    let eig = sym_eig(s)?;
    SpdMatrix::from_eigen(eig.values.map(f64::exp), eig.vectors)
}

/// `E_ij = eᵢeⱼᵀ + eⱼeᵢᵀ` for i ≠ j, `eᵢeᵢᵀ` for i = j.
#[derive(Clone, Debug)]
pub struct SymBasisElement {
    pub i: usize,
    pub j: usize,
    pub matrix: SymMatrix,
}

/// Index pairs `(i, j)` with `i ≤ j` in row-major order.
pub fn sym_index_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

pub fn sym_basis(n: usize) -> Vec<SymBasisElement> {
    sym_index_pairs(n)
        .into_iter()
        .map(|(i, j)| {
            let mut m = DMatrix::zeros(n, n);
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
            SymBasisElement {
                i,
                j,
                matrix: SymMatrix(m),
            }
        })
        .collect()
}
