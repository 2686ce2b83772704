//! Brascamp-Lieb data and constants.
//!
//! For a datum `(B, p)` with `Bⱼ ∈ ℝ^{nⱼ×n}` the objective
//!
//! ```text
//! F(X) = Σⱼ pⱼ log det(Bⱼ X Bⱼᵀ) − log det X
//! ```
//!
//! is geodesically convex on 𝕊ⁿ₊₊ for non-degenerate data, and the
//! Brascamp-Lieb constant of a feasible datum is `exp(−½ inf F)`. The
//! infimum is computed by [`geodesic_descent`]. Two independent
//! evaluators are provided for cross-checking: Lieb's Gaussian ratio (any
//! inputs give a lower bound) and, for rank-one data, a concave program in
//! `y ∈ ℝᵐ` built from the Cauchy-Binet expansion.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::descent::{geodesic_descent, DescentOptions, DescentStatus, SpdObjective};
use crate::error::{Error, Result};
use crate::matfun::{congruence, SpdMatrix, SymMatrix};
use crate::sampling::{gaussian_matrix, trial_rng};

/// Tolerance on `|n − Σ pⱼ nⱼ|`.
pub const SCALING_TOL: f64 = 1e-12;
/// Relative singular-value threshold for ranks.
pub const RANK_TOL: f64 = 1e-10;
/// Largest number of maps accepted by the rank-one oracle.
pub const ORACLE_MAX_MAPS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct BlDatum {
    n: usize,
    maps: Vec<DMatrix<f64>>,
    weights: Vec<f64>,
}

/// File form `{"n": int, "p": [real], "B": [[[real]]]}` with row-major maps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlDatumRecord {
    pub n: usize,
    pub p: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
}

impl BlDatum {
    pub fn new(n: usize, maps: Vec<DMatrix<f64>>, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("ambient dimension must be positive".into()));
        }
        if maps.is_empty() || maps.len() != weights.len() {
            return Err(Error::Input(format!(
                "need one weight per map, got {} maps and {} weights",
                maps.len(),
                weights.len()
            )));
        }
        for (j, b) in maps.iter().enumerate() {
            if b.nrows() == 0 || b.ncols() != n {
                return Err(Error::Input(format!(
                    "map {j} is {}x{}, expected n_j x {n} with n_j >= 1",
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::Input(format!("map {j} has non-finite entries")));
            }
        }
        if weights.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Input("weights must be finite and non-negative".into()));
        }
        Ok(BlDatum { n, maps, weights })
    }

    /// `Bⱼ = eⱼᵀ`, `pⱼ = 1`: the Hadamard/Loomis-Whitney-type identity datum.
    pub fn identity_rows(n: usize) -> Self {
        let maps = (0..n)
            .map(|j| DMatrix::from_fn(1, n, |_, c| if c == j { 1.0 } else { 0.0 }))
            .collect();
        BlDatum::new(n, maps, vec![1.0; n]).expect("valid")
    }

    /// Scalar Hölder datum: `n = 1`, `Bⱼ = [1]`.
    pub fn holder(weights: Vec<f64>) -> Result<Self> {
        let maps = vec![DMatrix::from_element(1, 1, 1.0); weights.len()];
        BlDatum::new(1, maps, weights)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn maps(&self) -> &[DMatrix<f64>] {
        &self.maps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_rank_one(&self) -> bool {
        self.maps.iter().all(|b| b.nrows() == 1)
    }

    pub fn to_record(&self) -> BlDatumRecord {
        BlDatumRecord {
            n: self.n,
            p: self.weights.clone(),
            b: self
                .maps
                .iter()
                .map(|m| (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect())
                .collect(),
        }
    }

    pub fn from_record(r: BlDatumRecord) -> Result<Self> {
        let maps =
            r.b.iter()
                .enumerate()
                .map(|(j, rows)| {
                    let cols = rows.first().map_or(0, |row| row.len());
                    if rows.iter().any(|row| row.len() != cols) {
                        return Err(Error::Input(format!("map {j} has ragged rows")));
                    }
                    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                    Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
                })
                .collect::<Result<Vec<_>>>()?;
        BlDatum::new(r.n, maps, r.p)
    }
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_TOL * max).count()
}

/// `n == Σ pⱼ nⱼ` within [`SCALING_TOL`].
pub fn check_scaling_condition(d: &BlDatum) -> bool {
    let s: f64 = d.maps.iter().zip(&d.weights).map(|(b, p)| p * b.nrows() as f64).sum();
    (d.n as f64 - s).abs() <= SCALING_TOL
}

/// Scaling condition plus full row rank of every map.
pub fn check_nondegeneracy(d: &BlDatum) -> bool {
    check_scaling_condition(d) && d.maps.iter().all(|b| rank(b) == b.nrows())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Feasibility {
    /// No violating subspace found; not a proof.
    Plausible { subspaces_tested: usize },
    /// `dim V > Σ pⱼ dim(BⱼV)` for the subspace spanned by `basis` (columns,
    /// listed here one basis vector per entry).
    Refuted {
        basis: Vec<Vec<f64>>,
        dim: usize,
        weighted_image_dim: f64,
    },
}

fn weighted_image_dim(d: &BlDatum, v: &DMatrix<f64>) -> f64 {
    d.maps
        .iter()
        .zip(&d.weights)
        .map(|(b, p)| p * rank(&(b * v)) as f64)
        .sum()
}

fn orthonormal_columns(v: &DMatrix<f64>) -> DMatrix<f64> {
    v.clone().qr().q().columns(0, v.ncols()).into_owned()
}

/// Null space of `b` as orthonormal columns (empty when `b` is injective).
fn kernel(b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = b.ncols();
    let r = rank(b);
    if r >= n {
        return None;
    }
    // Right singular vectors of the zero singular values span ker b.
    let ata = b.transpose() * b;
    let eig = crate::matfun::sym_eig(&SymMatrix::new(ata).ok()?).ok()?;
    Some(eig.vectors.columns(r, n - r).into_owned())
}

/// Searches for a subspace `V` violating `dim V ≤ Σ pⱼ dim(BⱼV)`.
///
/// Candidates: every coordinate subspace (for n ≤ 12), the kernel of every
/// map, and `trials` random subspaces of dimensions 1..n−1. A refutation is
/// exact; `Plausible` means only that no candidate violated the condition.
pub fn heuristic_feasibility(d: &BlDatum, trials: usize, seed: u64) -> Result<Feasibility> {
    if !check_scaling_condition(d) {
        return Err(Error::Usage("scaling condition n = Σ pⱼnⱼ does not hold".into()));
    }
    let n = d.n;
    let mut candidates: Vec<DMatrix<f64>> = Vec::new();
    if n <= 12 {
        for mask in 1u32..(1u32 << n) - 1 {
            let cols: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            candidates.push(DMatrix::from_fn(
                n,
                cols.len(),
                |r, c| if r == cols[c] { 1.0 } else { 0.0 },
            ));
        }
    }
    candidates.extend(d.maps.iter().filter_map(kernel).filter(|k| k.ncols() < n));
    if n > 1 {
        for i in 0..trials {
            let mut rng = trial_rng(seed, i as u64);
            let k = 1 + (i % (n - 1));
            candidates.push(orthonormal_columns(&gaussian_matrix(&mut rng, n, k)));
        }
    }
    for v in &candidates {
        let w = weighted_image_dim(d, v);
        if v.ncols() as f64 > w + SCALING_TOL {
            return Ok(Feasibility::Refuted {
                basis: (0..v.ncols()).map(|c| v.column(c).iter().copied().collect()).collect(),
                dim: v.ncols(),
                weighted_image_dim: w,
            });
        }
    }
    Ok(Feasibility::Plausible {
        subspaces_tested: candidates.len(),
    })
}

fn check_point(d: &BlDatum, x: &SpdMatrix) -> Result<()> {
    if x.n() != d.n {
        return Err(Error::Input(format!(
            "expected a {0}x{0} matrix, got order {1}",
            d.n,
            x.n()
        )));
    }
    Ok(())
}

/// `Bⱼ X Bⱼᵀ` for each map with positive weight.
fn projections<'a>(d: &'a BlDatum, x: &'a SpdMatrix) -> impl Iterator<Item = Result<(usize, SpdMatrix)>> + 'a {
    d.maps
        .iter()
        .zip(&d.weights)
        .enumerate()
        .filter(|(_, (_, p))| **p > 0.0)
        .map(move |(j, (b, _))| {
            SpdMatrix::new(congruence(b, x.as_sym()))
                .map(|m| (j, m))
                .map_err(|e| Error::Conditioning(format!("B_{j} X B_{j}^T is singular: {e}")))
        })
}

/// `F(X) = Σ pⱼ log det(BⱼXBⱼᵀ) − log det X`; zero-weight maps drop out.
pub fn bl_objective(d: &BlDatum, x: &SpdMatrix) -> Result<f64> {
    check_point(d, x)?;
    let mut f = -x.log_det();
    for item in projections(d, x) {
        let (j, m) = item?;
        f += d.weights[j] * m.log_det();
    }
    Ok(f)
}

/// `∇F(X) = Σ pⱼ Bⱼᵀ(BⱼXBⱼᵀ)⁻¹Bⱼ − X⁻¹`.
pub fn bl_objective_gradient(d: &BlDatum, x: &SpdMatrix) -> Result<SymMatrix> {
    check_point(d, x)?;
    let mut g = x.inverse().as_sym().scale(-1.0);
    for item in projections(d, x) {
        let (j, m) = item?;
        let b = &d.maps[j];
        let term = SymMatrix::from_matrix_unchecked(b.transpose() * m.inverse().as_matrix() * b);
        g = g.add(&term.scale(d.weights[j]));
    }
    Ok(g)
}

struct BlObjective<'a>(&'a BlDatum);

impl SpdObjective for BlObjective<'_> {
    fn value(&self, x: &SpdMatrix) -> Result<f64> {
        bl_objective(self.0, x)
    }

    fn euclidean_gradient(&self, x: &SpdMatrix) -> Result<SymMatrix> {
        bl_objective_gradient(self.0, x)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlResult {
    pub x_star: SpdMatrix,
    pub f_value: f64,
    /// `exp(−f_value / 2)`.
    pub bl_constant: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub status: DescentStatus,
    /// Feasibility condition 2 is only checked heuristically.
    pub feasibility: &'static str,
}

/// Minimizes `F` by geodesic gradient descent from `x0`.
pub fn minimize_bl_objective(d: &BlDatum, x0: &SpdMatrix, opts: &DescentOptions) -> Result<BlResult> {
    if !check_nondegeneracy(d) {
        return Err(Error::Degenerate(
            "datum is degenerate: need n = Σ pⱼnⱼ and full row rank of every Bⱼ".into(),
        ));
    }
    check_point(d, x0)?;
    let out = geodesic_descent(&BlObjective(d), x0, opts)?;
    Ok(BlResult {
        bl_constant: (-0.5 * out.value).exp(),
        f_value: out.value,
        x_star: out.x,
        iterations: out.iterations,
        gradient_norm: out.gradient_norm,
        status: out.status,
        feasibility: "heuristic",
    })
}

/// `BL(B, p) = exp(−½ inf F)`, starting the descent at the identity.
pub fn bl_constant(d: &BlDatum, opts: &DescentOptions) -> Result<f64> {
    let r = minimize_bl_objective(d, &SpdMatrix::identity(d.n), opts)?;
    match r.status {
        DescentStatus::Diverged => Err(Error::InfeasibleSuspected(format!(
            "F reached {} with gradient norm {:e}; inf F appears to be −∞",
            r.f_value, r.gradient_norm
        ))),
        _ => Ok(r.bl_constant),
    }
}

/// `(∏ det(Aⱼ)^{pⱼ} / det(Σ pⱼ BⱼᵀAⱼBⱼ))^{1/2}`, a lower bound on BL(B, p).
pub fn lieb_gaussian_value(d: &BlDatum, inputs: &[SpdMatrix]) -> Result<f64> {
    if inputs.len() != d.maps.len() {
        return Err(Error::Input(format!(
            "expected {} Gaussian inputs, got {}",
            d.maps.len(),
            inputs.len()
        )));
    }
    let mut num = 0.0;
    let mut sum = DMatrix::zeros(d.n, d.n);
    for ((b, p), a) in d.maps.iter().zip(&d.weights).zip(inputs) {
        if a.n() != b.nrows() {
            return Err(Error::Input(format!(
                "Gaussian input of order {} for a map with {} rows",
                a.n(),
                b.nrows()
            )));
        }
        num += p * a.log_det();
        sum += b.transpose() * a.as_matrix() * b * *p;
    }
    let den = SpdMatrix::new(SymMatrix::new(sum)?)
        .map_err(|e| Error::Conditioning(format!("Σ pⱼBⱼᵀAⱼBⱼ is singular: {e}")))?;
    Ok((0.5 * (num - den.log_det())).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub step: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            step: 1.0,
            max_iter: 500,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RankOneOptimum {
    pub y_star: Vec<f64>,
    /// `sup f = 2 log BL`.
    pub value: f64,
    pub bl_constant: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Cauchy-Binet expansion of `det(Σⱼ e^{yⱼ} BⱼᵀBⱼ)` for rank-one maps:
/// size-n subsets `α` with `c_α = det(B_α)² > 0`.
struct CauchyBinet {
    subsets: Vec<Vec<usize>>,
    log_coeffs: Vec<f64>,
}

fn subsets_of_size(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

impl CauchyBinet {
    fn new(d: &BlDatum) -> Self {
        let n = d.n;
        let mut subsets = Vec::new();
        let mut log_coeffs = Vec::new();
        for alpha in subsets_of_size(d.maps.len(), n) {
            let rows = DMatrix::from_fn(n, n, |r, c| d.maps[alpha[r]][(0, c)]);
            let c = rows.determinant().powi(2);
            if c > 0.0 {
                subsets.push(alpha);
                log_coeffs.push(c.ln());
            }
        }
        CauchyBinet { subsets, log_coeffs }
    }

    /// `f(y)`, `∇f(y)` and `−∇²f(y)` for
    /// `f(y) = ⟨p,y⟩ − log Σ c_α e^{⟨α,y⟩} − Σ pⱼ log pⱼ`. The negated
    /// Hessian is the covariance of the indicator `1_α` under the weights
    /// `c_α e^{⟨α,y⟩}`.
    fn eval(&self, p: &[f64], y: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = p.len();
        let exps: Vec<f64> = self
            .subsets
            .iter()
            .zip(&self.log_coeffs)
            .map(|(a, lc)| lc + a.iter().map(|&j| y[j]).sum::<f64>())
            .collect();
        let mx = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = exps.iter().map(|e| (e - mx).exp()).collect();
        let total: f64 = weights.iter().sum();
        let lse = mx + total.ln();
        let entropy: f64 = p.iter().filter(|&&pj| pj > 0.0).map(|pj| pj * pj.ln()).sum();
        let value = p.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - lse - entropy;
        let mut mean = DVector::zeros(m);
        let mut second = DMatrix::zeros(m, m);
        for (a, w) in self.subsets.iter().zip(&weights) {
            let w = w / total;
            for &j in a {
                mean[j] += w;
                for &k in a {
                    second[(j, k)] += w;
                }
            }
        }
        let grad = DVector::from_column_slice(p) - &mean;
        let cov = second - &mean * mean.transpose();
        (value, grad, cov)
    }
}

/// Newton direction `C⁺g`, with eigenvalues of the covariance `C` below a
/// relative cutoff treated as zero (`f` is constant along `1` and along
/// any other null direction of `C`).
fn newton_direction(cov: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let eig = cov.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let mut dir = DVector::zeros(grad.len());
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-12 * top {
            let v = eig.eigenvectors.column(k);
            dir += v * (v.dot(grad) / lam);
        }
    }
    dir
}

/// Maximizes the concave rank-one program by damped Newton ascent.
/// `exp(value / 2)` is the Brascamp-Lieb constant.
///
/// This is deliberately a different method from the geodesic descent on
/// `F`, so that agreement between the two is evidence for both.
pub fn rank_one_convex_oracle(d: &BlDatum, y0: &[f64], opts: &OracleOptions) -> Result<RankOneOptimum> {
    if !d.is_rank_one() {
        return Err(Error::Usage(
            "rank-one oracle needs every map to have a single row".into(),
        ));
    }
    let m = d.maps.len();
    if m > ORACLE_MAX_MAPS {
        return Err(Error::Capacity(format!(
            "{m} maps exceed the subset-enumeration limit of {ORACLE_MAX_MAPS}"
        )));
    }
    if y0.len() != m {
        return Err(Error::Input(format!("expected a starting point of length {m}")));
    }
    let cb = CauchyBinet::new(d);
    if cb.subsets.is_empty() {
        return Err(Error::Degenerate(
            "no n rows of the datum are linearly independent".into(),
        ));
    }
    let p = &d.weights;
    let mut y = DVector::from_column_slice(y0);
    let (mut value, mut grad, mut cov) = cb.eval(p, y.as_slice());
    let finish = |y: DVector<f64>, value: f64, iterations: usize, gn: f64| RankOneOptimum {
        y_star: y.iter().copied().collect(),
        value,
        bl_constant: (0.5 * value).exp(),
        iterations,
        gradient_norm: gn,
        converged: gn <= opts.grad_tol,
    };
    for iter in 0..opts.max_iter {
        let gn = grad.norm();
        if gn <= opts.grad_tol {
            return Ok(finish(y, value, iter, gn));
        }
        let mut dir = newton_direction(&cov, &grad);
        let mut slope = dir.dot(&grad);
        if !(slope > 0.0) {
            dir = grad.clone();
            slope = gn * gn;
        }
        let noise = 1e-14 * (1.0 + value.abs());
        let mut eta = opts.step;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &y + &dir * eta;
            let (tv, tg, tc) = cb.eval(p, trial.as_slice());
            // Below the rounding noise in f, require a smaller gradient instead.
            let ok = tv >= value + 1e-4 * eta * slope || ((tv - value).abs() <= noise && tg.norm() < gn);
            if ok {
                y = trial;
                (value, grad, cov) = (tv, tg, tc);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            return Ok(finish(y, value, iter, gn));
        }
    }
    let gn = grad.norm();
    Ok(finish(y, value, opts.max_iter, gn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    fn two_rows(p: Vec<f64>) -> BlDatum {
        BlDatum::new(2, vec![row(&[1.0, 0.0]), row(&[0.0, 1.0])], p).unwrap()
    }

    #[test]
    fn scaling_condition_examples() {
        assert!(check_scaling_condition(&BlDatum::holder(vec![1.0]).unwrap()));
        assert!(check_scaling_condition(&two_rows(vec![1.0, 1.0])));
        assert!(!check_scaling_condition(&two_rows(vec![1.0, 0.5])));
    }

    #[test]
    fn nondegeneracy_examples() {
        assert!(check_nondegeneracy(&two_rows(vec![1.0, 1.0])));
        let zero = BlDatum::new(2, vec![row(&[0.0, 0.0]), row(&[0.0, 1.0])], vec![1.0, 1.0]).unwrap();
        assert!(!check_nondegeneracy(&zero));
        let holder2 = BlDatum::new(2, vec![row(&[1.0, 1.0]), row(&[1.0, 1.0])], vec![0.5, 0.5]).unwrap();
        assert!(!check_nondegeneracy(&holder2));
    }

    #[test]
    fn heuristic_feasibility_examples() {
        assert!(matches!(
            heuristic_feasibility(&two_rows(vec![1.0, 1.0]), 50, 1).unwrap(),
            Feasibility::Plausible { .. }
        ));

        let same = BlDatum::new(2, vec![row(&[1.0, 0.0]), row(&[1.0, 0.0])], vec![1.0, 1.0]).unwrap();
        match heuristic_feasibility(&same, 50, 1).unwrap() {
            Feasibility::Refuted {
                basis,
                dim,
                weighted_image_dim,
            } => {
                assert_eq!(dim, 1);
                assert_eq!(weighted_image_dim, 0.0);
                assert_eq!(basis, vec![vec![0.0, 1.0]]);
            }
            other => panic!("expected refutation, got {other:?}"),
        }
        assert!(matches!(
            heuristic_feasibility(&two_rows(vec![1.0, 0.5]), 5, 1),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn objective_examples() {
        let h = BlDatum::holder(vec![1.0]).unwrap();
        for x in [0.3, 1.0, 7.0] {
            assert!(
                bl_objective(&h, &SpdMatrix::from_diagonal(&[x]).unwrap())
                    .unwrap()
                    .abs()
                    < 1e-15
            );
        }
        let d = two_rows(vec![1.0, 1.0]);
        assert_eq!(bl_objective(&d, &SpdMatrix::identity(2)).unwrap(), 0.0);
        let x = SpdMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let want = 2.0f64.ln() * 2.0 - 3.0f64.ln();
        assert_relative_eq!(bl_objective(&d, &x).unwrap(), want, epsilon = 1e-14);
        assert_relative_eq!(want, 0.28768, epsilon = 1e-5);
    }

    #[test]
    fn singular_projection_is_a_conditioning_error() {
        let d = BlDatum::new(2, vec![row(&[0.0, 0.0]), row(&[0.0, 1.0])], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            bl_objective(&d, &SpdMatrix::identity(2)),
            Err(Error::Conditioning(_))
        ));
    }

    #[test]
    fn zero_weight_maps_drop_out() {
        let d = BlDatum::new(
            2,
            vec![row(&[1.0, 0.0]), row(&[0.0, 1.0]), row(&[0.0, 0.0])],
            vec![1.0, 1.0, 0.0],
        )
        .unwrap();
        let x = SpdMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert_relative_eq!(
            bl_objective(&d, &x).unwrap(),
            bl_objective(&two_rows(vec![1.0, 1.0]), &x).unwrap()
        );
    }

    #[test]
    fn gradient_examples() {
        let d = two_rows(vec![1.0, 1.0]);
        assert!(
            bl_objective_gradient(&d, &SpdMatrix::identity(2))
                .unwrap()
                .frobenius_norm()
                < 1e-15
        );
        let h = BlDatum::holder(vec![0.4, 0.6]).unwrap();
        assert!(
            bl_objective_gradient(&h, &SpdMatrix::from_diagonal(&[3.0]).unwrap())
                .unwrap()
                .frobenius_norm()
                < 1e-15
        );

        let d = BlDatum::new(
            2,
            vec![row(&[1.0, 0.3]), row(&[-0.4, 1.0]), row(&[0.8, 0.8])],
            vec![0.5, 0.75, 0.75],
        )
        .unwrap();
        let x = SpdMatrix::from_rows(&[vec![1.7, -0.2], vec![-0.2, 0.6]]).unwrap();
        let g = bl_objective_gradient(&d, &x).unwrap();
        // Euler identity from F(cX) = F(X).
        assert!(g.frobenius_inner(x.as_sym()).abs() < 1e-13);
    }

    #[test]
    fn minimize_examples() {
        let opts = DescentOptions::default();
        let d = two_rows(vec![1.0, 1.0]);
        let r = minimize_bl_objective(&d, &SpdMatrix::identity(2), &opts).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.f_value, 0.0);

        let x0 = SpdMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let r = minimize_bl_objective(&d, &x0, &opts).unwrap();
        assert_eq!(r.status, DescentStatus::Converged);
        assert!(r.f_value.abs() < 1e-12);
        assert_relative_eq!(r.bl_constant, 1.0, epsilon = 1e-6);
        assert!(r.x_star.as_sym().get(0, 1).abs() < 1e-6);

        let h = BlDatum::holder(vec![0.2, 0.3, 0.5]).unwrap();
        assert_relative_eq!(bl_constant(&h, &opts).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(bl_constant(&d, &opts).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_data_are_rejected() {
        let d = two_rows(vec![1.0, 0.5]);
        assert!(matches!(
            minimize_bl_objective(&d, &SpdMatrix::identity(2), &DescentOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn infeasible_datum_is_flagged() {
        let same = BlDatum::new(2, vec![row(&[1.0, 0.0]), row(&[1.0, 0.0])], vec![1.0, 1.0]).unwrap();
        let x0 = SpdMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 1.0]]).unwrap();
        let r = minimize_bl_objective(&same, &x0, &DescentOptions::default()).unwrap();
        assert_eq!(r.status, DescentStatus::Diverged);
        // F is unbounded below along X = diag(1, s), s → ∞.
        assert!(r.f_value < -5.0);
    }

    #[test]
    fn lieb_examples() {
        let d = two_rows(vec![1.0, 1.0]);
        let ones = vec![SpdMatrix::identity(1), SpdMatrix::identity(1)];
        assert_relative_eq!(lieb_gaussian_value(&d, &ones).unwrap(), 1.0, epsilon = 1e-15);

        let h = BlDatum::holder(vec![0.2, 0.3, 0.5]).unwrap();
        let a = [0.5, 2.0, 7.0];
        let inputs: Vec<_> = a.iter().map(|&v| SpdMatrix::from_diagonal(&[v]).unwrap()).collect();
        let geo: f64 = a.iter().zip(h.weights()).map(|(x, p)| x.powf(*p)).product();
        let arith: f64 = a.iter().zip(h.weights()).map(|(x, p)| x * p).sum();
        let v = lieb_gaussian_value(&h, &inputs).unwrap();
        assert_relative_eq!(v, (geo / arith).sqrt(), epsilon = 1e-14);
        assert!(v <= 1.0);

        let scaled: Vec<_> = inputs
            .iter()
            .map(|x| SpdMatrix::new(x.as_sym().scale(3.7)).unwrap())
            .collect();
        assert_relative_eq!(lieb_gaussian_value(&h, &scaled).unwrap(), v, epsilon = 1e-14);
    }

    #[test]
    fn oracle_examples() {
        let opts = OracleOptions::default();
        let d = two_rows(vec![1.0, 1.0]);
        let r = rank_one_convex_oracle(&d, &[0.3, -1.0], &opts).unwrap();
        assert!(r.converged);
        assert_relative_eq!(r.bl_constant, 1.0, epsilon = 1e-12);

        let h = BlDatum::holder(vec![0.2, 0.3, 0.5]).unwrap();
        let r = rank_one_convex_oracle(&h, &[0.0; 3], &opts).unwrap();
        assert_relative_eq!(r.bl_constant, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn oracle_matches_descent_on_a_fixed_datum() {
        // Rows in general position; p = Σ_α w_α 1_α lies inside the base
        // polytope, so both optima are attained.
        let d = BlDatum::new(
            2,
            vec![row(&[1.0, 0.2]), row(&[-0.3, 1.0]), row(&[0.9, 0.7]), row(&[0.4, -1.2])],
            vec![0.5, 0.4, 0.6, 0.5],
        )
        .unwrap();
        let descent = bl_constant(&d, &DescentOptions::default()).unwrap();
        let oracle = rank_one_convex_oracle(&d, &[0.0; 4], &OracleOptions::default()).unwrap();
        assert!(
            (descent - oracle.bl_constant).abs() <= 1e-4 * descent,
            "{descent} vs {}",
            oracle.bl_constant
        );
    }

    #[test]
    fn oracle_rejects_too_many_maps() {
        let h = BlDatum::holder(vec![1.0 / 21.0; 21]).unwrap();
        assert!(matches!(
            rank_one_convex_oracle(&h, &[0.0; 21], &OracleOptions::default()),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn record_round_trip() {
        let json = r#"{"n": 2, "p": [1.0, 1.0], "B": [[[1.0, 0.0]], [[0.0, 1.0]]]}"#;
        let rec: BlDatumRecord = serde_json::from_str(json).unwrap();
        let d = BlDatum::from_record(rec).unwrap();
        assert_eq!(d, two_rows(vec![1.0, 1.0]));
        let back = serde_json::to_value(d.to_record()).unwrap();
        assert_eq!(back, serde_json::from_str::<serde_json::Value>(json).unwrap());
    }
}
