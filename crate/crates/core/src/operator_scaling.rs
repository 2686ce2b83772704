//! Operator capacity and operator scaling for `T(X) = Σⱼ AⱼXAⱼᵀ`.
//!
//! `log cap(T) = inf_X log det T(X) − log det X` is geodesically convex on
//! 𝕊ⁿ₊₊; it is minimized with the shared geodesic descent engine. At a
//! minimizer `X⋆`, the operators `Âᵢ = T(X⋆)^{−1/2} Aᵢ X⋆^{1/2}` are doubly
//! stochastic. Alternating left/right normalization provides an
//! independent estimate of the capacity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::descent::{geodesic_descent, DescentOptions, DescentStatus, SpdObjective};
use crate::error::{Error, Result};
use crate::manifold::{geodesic_point, Point};
use crate::matfun::{SpdMatrix, SymMatrix};
use crate::sampling::{random_spd, trial_rng};

const PROBES: usize = 20;
const PROBE_SEED: u64 = 0x0b5e55ed;

/// A completely positive map given by its Kraus operators.
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveOperator {
    n: usize,
    kraus: Vec<DMatrix<f64>>,
}

/// File form `{"n": int, "A": [[[real]]]}` with row-major matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorRecord {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Vec<f64>>>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

impl PositiveOperator {
    /// Validates shapes and certifies strict positivity: `T(I) ≻ 0` (which
    /// implies `T(X) ≻ 0` for every `X ≻ 0`) plus seeded SPD probes.
    pub fn new(kraus: Vec<DMatrix<f64>>) -> Result<Self> {
        let op = Self::unchecked(kraus)?;
        let id = op.apply(&SymMatrix::identity(op.n))?;
        SpdMatrix::new(id).map_err(|e| Error::Degenerate(format!("T(I) is not positive definite: {e}")))?;
        for i in 0..PROBES {
            let mut rng = trial_rng(PROBE_SEED, i as u64);
            let x = random_spd(&mut rng, op.n, 1.5);
            SpdMatrix::new(op.apply(x.as_sym())?)
                .map_err(|e| Error::Degenerate(format!("T(X) is not positive definite for probe {i}: {e}")))?;
        }
        Ok(op)
    }

    fn unchecked(kraus: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = kraus.first() else {
            return Err(Error::Input("operator needs at least one Kraus matrix".into()));
        };
        let n = first.nrows();
        if n == 0 {
            return Err(Error::Input("matrix order must be positive".into()));
        }
        for (j, a) in kraus.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::Input(format!(
                    "A_{j} is {}x{}; only square {n}x{n} operators are supported",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::Input(format!("A_{j} has non-finite entries")));
            }
        }
        Ok(PositiveOperator { n, kraus })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kraus(&self) -> &[DMatrix<f64>] {
        &self.kraus
    }

    pub fn to_record(&self) -> OperatorRecord {
        OperatorRecord {
            n: self.n,
            a: self.kraus.iter().map(matrix_rows).collect(),
        }
    }

    pub fn from_record(r: OperatorRecord) -> Result<Self> {
        let kraus =
            r.a.iter()
                .enumerate()
                .map(|(j, rows)| {
                    if rows.len() != r.n || rows.iter().any(|row| row.len() != r.n) {
                        return Err(Error::Input(format!("A_{j} must be {0}x{0}", r.n)));
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    Ok(DMatrix::from_row_slice(r.n, r.n, &flat))
                })
                .collect::<Result<Vec<_>>>()?;
        Self::new(kraus)
    }

    fn check_size(&self, x: &SymMatrix) -> Result<()> {
        if x.n() != self.n {
            return Err(Error::Input(format!("expected order {}, got {}", self.n, x.n())));
        }
        Ok(())
    }

    /// `T(X) = Σ AⱼXAⱼᵀ`.
    pub fn apply(&self, x: &SymMatrix) -> Result<SymMatrix> {
        self.check_size(x)?;
        let sum = self.kraus.iter().fold(DMatrix::zeros(self.n, self.n), |acc, a| {
            acc + a * x.as_matrix() * a.transpose()
        });
        Ok(SymMatrix::from_matrix_unchecked(sum))
    }

    /// `T*(X) = Σ AⱼᵀXAⱼ`.
    pub fn apply_adjoint(&self, x: &SymMatrix) -> Result<SymMatrix> {
        self.check_size(x)?;
        let sum = self.kraus.iter().fold(DMatrix::zeros(self.n, self.n), |acc, a| {
            acc + a.transpose() * x.as_matrix() * a
        });
        Ok(SymMatrix::from_matrix_unchecked(sum))
    }

    fn apply_spd(&self, x: &SpdMatrix) -> Result<SpdMatrix> {
        SpdMatrix::new(self.apply(x.as_sym())?).map_err(|e| Error::Conditioning(format!("T(X) is singular: {e}")))
    }

    /// The unital map `T′(X) = T(P)^{−1/2} T(P^{1/2}XP^{1/2}) T(P)^{−1/2}`,
    /// with Kraus operators `T(P)^{−1/2} Aⱼ P^{1/2}`.
    pub fn unital_at(&self, p: &SpdMatrix) -> Result<PositiveOperator> {
        let left = self.apply_spd(p)?.inv_sqrt();
        let right = p.sqrt();
        let kraus: Vec<DMatrix<f64>> = self
            .kraus
            .iter()
            .map(|a| left.as_matrix() * a * right.as_matrix())
            .collect();
        // One more left normalization removes the rounding error of T(P)^{−1/2}
        // when T(P) is ill-conditioned; in exact arithmetic it is the identity.
        let r = Self::unchecked(kraus.clone())?.apply(&SymMatrix::identity(self.n))?;
        let fix = SpdMatrix::new(r)
            .map_err(|e| Error::Conditioning(format!("T′(I) is singular: {e}")))?
            .inv_sqrt();
        let t = Self::unchecked(kraus.iter().map(|a| fix.as_matrix() * a).collect())?;
        let defect = t
            .apply(&SymMatrix::identity(self.n))?
            .sub(&SymMatrix::identity(self.n))
            .frobenius_norm();
        if defect > 1e-8 {
            return Err(Error::Conditioning(format!("T′(I) differs from I by {defect:e}")));
        }
        Ok(t)
    }
}

/// `log det T(X) − log det X`.
pub fn log_capacity_eval(t: &PositiveOperator, x: &SpdMatrix) -> Result<f64> {
    Ok(t.apply_spd(x)?.log_det() - x.log_det())
}

/// `Σ Aⱼᵀ T(X)⁻¹ Aⱼ − X⁻¹`.
pub fn log_capacity_gradient(t: &PositiveOperator, x: &SpdMatrix) -> Result<SymMatrix> {
    let tinv = t.apply_spd(x)?.inverse();
    Ok(t.apply_adjoint(tinv.as_sym())?.sub(x.inverse().as_sym()))
}

struct CapacityObjective<'a>(&'a PositiveOperator);

impl SpdObjective for CapacityObjective<'_> {
    fn value(&self, x: &SpdMatrix) -> Result<f64> {
        log_capacity_eval(self.0, x)
    }

    fn euclidean_gradient(&self, x: &SpdMatrix) -> Result<SymMatrix> {
        log_capacity_gradient(self.0, x)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityOutcome {
    pub x_star: SpdMatrix,
    pub log_capacity: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub status: DescentStatus,
    /// Objective value after each accepted step.
    pub history: Vec<f64>,
}

/// Minimizes the log capacity objective from `x0`.
pub fn capacity_minimize(t: &PositiveOperator, x0: &SpdMatrix, opts: &DescentOptions) -> Result<CapacityOutcome> {
    if x0.n() != t.n {
        return Err(Error::Input("starting point has the wrong order".into()));
    }
    let out = geodesic_descent(&CapacityObjective(t), x0, opts)?;
    if out.status == DescentStatus::Diverged {
        return Err(Error::CapacityZeroSuspected(format!(
            "objective reached {} with gradient norm {:e}",
            out.value, out.gradient_norm
        )));
    }
    Ok(CapacityOutcome {
        x_star: out.x,
        log_capacity: out.value,
        iterations: out.iterations,
        gradient_norm: out.gradient_norm,
        status: out.status,
        history: out.history,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingResult {
    pub x_star: SpdMatrix,
    pub log_capacity: f64,
    pub scaled: Vec<Vec<Vec<f64>>>,
    /// `‖Σ ÂᵢÂᵢᵀ − I‖_F`.
    pub residual_left: f64,
    /// `‖Σ ÂᵢᵀÂᵢ − I‖_F`.
    pub residual_right: f64,
}

/// Left and right doubly-stochastic residuals of a Kraus family.
pub fn doubly_stochastic_residuals(kraus: &[DMatrix<f64>]) -> (f64, f64) {
    let n = kraus[0].nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let left = kraus
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, a| acc + a * a.transpose());
    let right = kraus
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, a| acc + a.transpose() * a);
    ((left - &id).norm(), (right - &id).norm())
}

/// `Âᵢ = T(X⋆)^{−1/2} Aᵢ X⋆^{1/2}` and its residuals.
pub fn scale(t: &PositiveOperator, x_star: &SpdMatrix) -> Result<ScalingResult> {
    let tx = t.apply_spd(x_star)?;
    let left = tx.inv_sqrt();
    let right = x_star.sqrt();
    let scaled: Vec<DMatrix<f64>> = t
        .kraus
        .iter()
        .map(|a| left.as_matrix() * a * right.as_matrix())
        .collect();
    let (residual_left, residual_right) = doubly_stochastic_residuals(&scaled);
    Ok(ScalingResult {
        log_capacity: tx.log_det() - x_star.log_det(),
        x_star: x_star.clone(),
        scaled: scaled.iter().map(matrix_rows).collect(),
        residual_left,
        residual_right,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AlternatingOutcome {
    pub operator: Vec<Vec<Vec<f64>>>,
    /// `max(residual_left, residual_right)` before each iteration and at the end.
    pub residuals: Vec<f64>,
    /// `Σₖ log det Rₖ + log det Cₖ`, the telescoped capacity estimate.
    pub log_capacity: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const ALTERNATING_TOL: f64 = 1e-10;
pub const ALTERNATING_MAX_ITERS: usize = 1000;

/// Alternately normalizes `Aⱼ ← R^{−1/2}Aⱼ` with `R = ΣAⱼAⱼᵀ` and
/// `Aⱼ ← AⱼC^{−1/2}` with `C = ΣAⱼᵀAⱼ`, stopping when the larger residual
/// is at most [`ALTERNATING_TOL`].
///
/// Each left step changes `log cap` by `−log det R` and each right step by
/// `−log det C`; a doubly stochastic operator has capacity 1, so the sum of
/// the log-determinants estimates `log cap(T)`.
pub fn alternating_scaling(t: &PositiveOperator, iters: usize) -> Result<AlternatingOutcome> {
    let n = t.n;
    let mut kraus = t.kraus.clone();
    let mut log_cap = 0.0;
    let mut residuals = Vec::new();
    let resid = |k: &[DMatrix<f64>]| {
        let (l, r) = doubly_stochastic_residuals(k);
        l.max(r)
    };
    let mut converged = false;
    let mut done = 0;
    for it in 0..iters {
        let r0 = resid(&kraus);
        residuals.push(r0);
        if r0 <= ALTERNATING_TOL {
            converged = true;
            done = it;
            break;
        }
        let r = kraus
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, a| acc + a * a.transpose());
        let r = SpdMatrix::new(SymMatrix::new(r)?).map_err(|e| Error::Degenerate(format!("ΣAAᵀ is singular: {e}")))?;
        log_cap += r.log_det();
        let ri = r.inv_sqrt();
        kraus = kraus.iter().map(|a| ri.as_matrix() * a).collect();

        let c = kraus
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, a| acc + a.transpose() * a);
        let c = SpdMatrix::new(SymMatrix::new(c)?).map_err(|e| Error::Degenerate(format!("ΣAᵀA is singular: {e}")))?;
        log_cap += c.log_det();
        let ci = c.inv_sqrt();
        kraus = kraus.iter().map(|a| a * ci.as_matrix()).collect();
        done = it + 1;
    }
    if !converged {
        let r = resid(&kraus);
        residuals.push(r);
        converged = r <= ALTERNATING_TOL;
    }
    Ok(AlternatingOutcome {
        operator: kraus.iter().map(matrix_rows).collect(),
        residuals,
        log_capacity: log_cap,
        iterations: done,
        converged,
    })
}

/// `λ_min(T′(X²) − T′(X)²)` for the unital map `T′` of `T` at `P`.
pub fn kadison_residual(t: &PositiveOperator, p: &SpdMatrix, x: &SymMatrix) -> Result<f64> {
    let tu = t.unital_at(p)?;
    let x2 = x.jordan(x);
    let tx = tu.apply(x)?;
    tu.apply(&x2)?.sub(&tx.jordan(&tx)).min_eigenvalue()
}

/// `λ_min` of the block matrix `[[T′(X²), T′(X)], [T′(X), I]]`; its Schur
/// complement is `T′(X²) − T′(X)²`.
pub fn schur_certificate(unital: &PositiveOperator, x: &SymMatrix) -> Result<f64> {
    let n = unital.n;
    let a = unital.apply(&x.jordan(x))?;
    let b = unital.apply(x)?;
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(a.as_matrix());
    block.view_mut((0, n), (n, n)).copy_from(b.as_matrix());
    block.view_mut((n, 0), (n, n)).copy_from(b.as_matrix());
    block.view_mut((n, n), (n, n)).fill_with_identity();
    SymMatrix::new(block)?.min_eigenvalue()
}

/// `λ_min((1−t)T(P) + tT(Q) − T(γ(t)))` along the SPD geodesic from P to Q.
pub fn loewner_gap(op: &PositiveOperator, p: &SpdMatrix, q: &SpdMatrix, t: f64) -> Result<f64> {
    let g = geodesic_point(&Point::spd(p.clone()), &Point::spd(q.clone()), t)?;
    let chord = op
        .apply(p.as_sym())?
        .scale(1.0 - t)
        .add(&op.apply(q.as_sym())?.scale(t));
    chord
        .sub(&op.apply(g.as_spd().expect("spd").as_sym())?)
        .min_eigenvalue()
}
