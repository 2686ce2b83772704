//! Numerical geodesic-convexity testing along closed-form geodesics.
//!
//! A `Violated` verdict carries a witness `(p, q, t)` at which
//! `f(γ(t)) > (1−t)f(p) + t f(q)` beyond tolerance; it is an exact
//! re-evaluation and refutes g-convexity for the built-in metric. A
//! `Consistent` verdict is only evidence. The tester assumes the sampled
//! region is open and totally convex; it does not check this.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{geodesic_point, ManifoldKind, ManifoldSpec, Point};
use crate::operator_scaling::PositiveOperator;
use crate::sampling::{log_uniform, random_spd, trial_rng};

/// Tolerance for equality-type checks (exact evaluations).
pub const TOL_EQ: f64 = 1e-8;
/// Tolerance for checks that go through finite differences.
pub const TOL_INEQ: f64 = 1e-6;
/// Step for the first-order directional derivative.
pub const FD_DELTA: f64 = 1e-5;
pub const DEFAULT_GRID_SIZE: usize = 33;
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

type FieldEval = dyn Fn(&Point) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct ScalarField {
    pub manifold: ManifoldSpec,
    pub name: String,
    eval: Arc<FieldEval>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("name", &self.name)
            .field("manifold", &self.manifold)
            .finish()
    }
}

fn coords(p: &Point) -> &DVector<f64> {
    p.as_vector().expect("vector manifold point")
}

impl ScalarField {
    pub fn new<F>(manifold: ManifoldSpec, name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        ScalarField {
            manifold,
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    /// Evaluates `f`, failing with the location if the value is not finite.
    pub fn eval(&self, p: &Point) -> Result<f64> {
        if p.spec() != self.manifold {
            return Err(Error::Usage(format!(
                "{} is defined on {:?}, got a point on {:?}",
                self.name,
                self.manifold,
                p.spec()
            )));
        }
        let v = (self.eval)(p);
        if !v.is_finite() {
            return Err(Error::Evaluation {
                location: serde_json::to_string(p).unwrap_or_default(),
                message: format!("{} evaluated to {v}", self.name),
            });
        }
        Ok(v)
    }

    /// `log det X` on 𝕊ⁿ₊₊ (geodesically linear).
    pub fn log_det(n: usize) -> Self {
        Self::new(ManifoldSpec::spd(n), "logdet", |p| p.as_spd().expect("spd").log_det())
    }

    pub fn neg_log_det(n: usize) -> Self {
        Self::new(ManifoldSpec::spd(n), "neg-logdet", |p| {
            -p.as_spd().expect("spd").log_det()
        })
    }

    /// `⟨1, log x⟩` on ℝⁿ₊ (geodesically linear).
    pub fn sum_log(n: usize) -> Self {
        Self::new(ManifoldSpec::orthant(n), "sum-log", |p| {
            coords(p).iter().map(|x| x.ln()).sum()
        })
    }

    /// The log-barrier `−Σ log xᵢ` on ℝⁿ₊ (geodesically linear).
    pub fn log_barrier(n: usize) -> Self {
        Self::new(ManifoldSpec::orthant(n), "logbarrier", |p| {
            -coords(p).iter().map(|x| x.ln()).sum::<f64>()
        })
    }

    pub fn posynomial(p: Posynomial) -> Self {
        let n = p.arity();
        Self::new(ManifoldSpec::orthant(n), "posynomial", move |x| p.eval(coords(x)))
    }

    /// `log p(x)` for a posynomial `p`.
    pub fn log_posynomial(p: Posynomial) -> Self {
        let n = p.arity();
        Self::new(ManifoldSpec::orthant(n), "log-posynomial", move |x| {
            p.log_eval(coords(x))
        })
    }

    /// `log det T(X)` for a strictly positive operator `T`.
    pub fn log_det_operator(op: PositiveOperator) -> Self {
        Self::new(ManifoldSpec::spd(op.n()), "logdet-operator", move |p| {
            op.apply(p.as_spd().expect("spd").as_sym())
                .ok()
                .and_then(|y| crate::matfun::SpdMatrix::new(y).ok())
                .map_or(f64::NAN, |y| y.log_det())
        })
    }

    /// `sin(x)·exp(x/12)` on ℝ.
    pub fn sin_exp() -> Self {
        Self::new(ManifoldSpec::euclidean(1), "sin-exp", |p| {
            let x = coords(p)[0];
            x.sin() * (x / 12.0).exp()
        })
    }

    /// `(log x)²` on ℝ₊.
    pub fn log_square() -> Self {
        Self::new(ManifoldSpec::orthant(1), "log-square", |p| coords(p)[0].ln().powi(2))
    }

    /// `log x₁ − x₂` on ℝ²₊; not g-convex.
    pub fn log_minus() -> Self {
        Self::new(ManifoldSpec::orthant(2), "log-minus", |p| {
            let x = coords(p);
            x[0].ln() - x[1]
        })
    }
}

/// One term `c·∏ xᵢ^{aᵢ}` with `c > 0`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PosynomialTerm {
    pub coeff: f64,
    pub exponents: Vec<f64>,
}

/// A sum of terms with positive coefficients and real exponents.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Posynomial {
    pub terms: Vec<PosynomialTerm>,
}

impl Posynomial {
    pub fn new(terms: Vec<PosynomialTerm>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::Input("posynomial needs at least one term".into()));
        };
        let n = first.exponents.len();
        if n == 0 {
            return Err(Error::Input("posynomial terms need at least one exponent".into()));
        }
        for t in &terms {
            if t.exponents.len() != n {
                return Err(Error::Input("posynomial terms have different arity".into()));
            }
            if !(t.coeff > 0.0) || !t.coeff.is_finite() || t.exponents.iter().any(|a| !a.is_finite()) {
                return Err(Error::Input(
                    "posynomial coefficients must be positive and finite".into(),
                ));
            }
        }
        Ok(Posynomial { terms })
    }

    pub fn monomial(coeff: f64, exponents: Vec<f64>) -> Result<Self> {
        Self::new(vec![PosynomialTerm { coeff, exponents }])
    }

    pub fn arity(&self) -> usize {
        self.terms[0].exponents.len()
    }

    /// `log cᵢ + ⟨aᵢ, log x⟩` for every term.
    fn log_terms(&self, x: &DVector<f64>) -> impl Iterator<Item = f64> + '_ {
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        self.terms
            .iter()
            .map(move |t| t.coeff.ln() + t.exponents.iter().zip(&lx).map(|(a, l)| a * l).sum::<f64>())
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.log_terms(x).map(f64::exp).sum()
    }

    pub fn log_eval(&self, x: &DVector<f64>) -> f64 {
        let logs: Vec<f64> = self.log_terms(x).collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Violated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub p: Point,
    pub q: Point,
    pub t: f64,
    /// `(1−t)f(p) + t f(q) − f(γ(t))`; negative at a violation.
    pub gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub function: String,
    pub manifold: ManifoldSpec,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub samples: usize,
    /// Smallest second difference of `f∘γ` seen on the grid(s).
    pub min_second_difference: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub t_grid_size: usize,
    pub tolerance: f64,
}

/// `n` uniformly spaced points in `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Tolerance scaled to the magnitude of the values being compared.
fn scaled_tol(tol: f64, a: f64, b: f64) -> f64 {
    tol * (1.0 + a.abs().max(b.abs()))
}

fn second_differences(ts: &[f64], fs: &[f64]) -> Option<f64> {
    if ts.len() < 3 {
        return None;
    }
    let mut min = f64::INFINITY;
    for i in 1..ts.len() - 1 {
        let h1 = ts[i] - ts[i - 1];
        let h2 = ts[i + 1] - ts[i];
        let d2 = 2.0 * (fs[i - 1] / (h1 * (h1 + h2)) - fs[i] / (h1 * h2) + fs[i + 1] / (h2 * (h1 + h2)));
        min = min.min(d2);
    }
    Some(min)
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::Usage("t grid is empty".into()));
    }
    if t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Usage("t grid must lie in [0, 1]".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Usage("t grid must be strictly increasing".into()));
    }
    Ok(())
}

fn f_along(f: &ScalarField, p: &Point, q: &Point, t: f64) -> Result<f64> {
    f.eval(&geodesic_point(p, q, t)?)
}

/// Checks `f(γ(t)) ≤ (1−t)f(p) + t f(q)` at every grid point.
pub fn midpoint_test(f: &ScalarField, p: &Point, q: &Point, t_grid: &[f64], tol: f64) -> Result<ConvexityReport> {
    check_grid(t_grid)?;
    let fp = f.eval(p)?;
    let fq = f.eval(q)?;
    let bound = scaled_tol(tol, fp, fq);
    let mut values = Vec::with_capacity(t_grid.len());
    let mut worst: Option<(f64, f64)> = None;
    for &t in t_grid {
        let ft = f_along(f, p, q, t)?;
        values.push(ft);
        let gap = (1.0 - t) * fp + t * fq - ft;
        if gap < -bound && worst.is_none_or(|(_, g)| gap < g) {
            worst = Some((t, gap));
        }
    }
    let witness = worst.map(|(t, _)| {
        // Certificate: recompute the gap from scratch at the witness.
        let gap = (1.0 - t) * fp + t * fq - f_along(f, p, q, t).expect("evaluated above");
        Witness {
            p: p.clone(),
            q: q.clone(),
            t,
            gap,
        }
    });
    Ok(ConvexityReport {
        function: f.name.clone(),
        manifold: f.manifold,
        verdict: if witness.is_some() {
            Verdict::Violated
        } else {
            Verdict::Consistent
        },
        witness,
        samples: t_grid.len(),
        min_second_difference: second_differences(t_grid, &values),
        seed: None,
        trials: None,
        t_grid_size: t_grid.len(),
        tolerance: tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderOutcome {
    /// `f(p) + γ̇_pq(f)(p)`.
    pub lhs: f64,
    /// `f(q)`.
    pub rhs: f64,
    pub ok: bool,
}

/// `f(p) + d/dt f(γ(t))|₀ ≤ f(q)`, with the derivative by central
/// difference of step [`FD_DELTA`].
pub fn first_order_test(f: &ScalarField, p: &Point, q: &Point, tol: f64) -> Result<FirstOrderOutcome> {
    let fp = f.eval(p)?;
    let fq = f.eval(q)?;
    let deriv = (f_along(f, p, q, FD_DELTA)? - f_along(f, p, q, -FD_DELTA)?) / (2.0 * FD_DELTA);
    let lhs = fp + deriv;
    Ok(FirstOrderOutcome {
        lhs,
        rhs: fq,
        ok: lhs <= fq + scaled_tol(tol, fp, fq),
    })
}

/// Minimum central second difference of `f∘γ` over the interior grid points.
pub fn second_order_test(f: &ScalarField, p: &Point, q: &Point, t_grid: &[f64]) -> Result<f64> {
    check_grid(t_grid)?;
    if t_grid.len() < 3 {
        return Err(Error::Usage("second differences need at least 3 grid points".into()));
    }
    let values: Result<Vec<f64>> = t_grid.iter().map(|&t| f_along(f, p, q, t)).collect();
    Ok(second_differences(t_grid, &values?).expect("at least 3 points"))
}

/// Source of endpoint pairs for [`violation_search`].
pub trait PairSampler: Sync {
    fn manifold(&self) -> ManifoldSpec;
    fn sample(&self, rng: &mut ChaCha8Rng) -> (Point, Point);
}

/// Default samplers: uniform in `[−10, 10]ⁿ` on ℝⁿ, log-uniform in
/// `[0.1, 10]` per coordinate on ℝⁿ₊, and `exp(S)` with spectral radius of
/// `S` at most 1.5 on 𝕊ⁿ₊₊.
#[derive(Clone, Copy, Debug)]
pub struct DefaultSampler {
    pub manifold: ManifoldSpec,
}

impl DefaultSampler {
    pub fn new(manifold: ManifoldSpec) -> Self {
        DefaultSampler { manifold }
    }

    pub fn point(&self, rng: &mut ChaCha8Rng) -> Point {
        let n = self.manifold.n;
        match self.manifold.kind {
            ManifoldKind::Euclidean => {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..=10.0)).collect();
                Point::euclidean(&x).expect("finite")
            }
            ManifoldKind::PositiveOrthant => {
                let x: Vec<f64> = (0..n).map(|_| log_uniform(rng, 0.1, 10.0)).collect();
                Point::orthant(&x).expect("positive")
            }
            ManifoldKind::SpdCone => Point::spd(random_spd(rng, n, 1.5)),
        }
    }
}

impl PairSampler for DefaultSampler {
    fn manifold(&self) -> ManifoldSpec {
        self.manifold
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (Point, Point) {
        (self.point(rng), self.point(rng))
    }
}

/// Runs `trials` seeded midpoint tests. Trial `i` draws its pair from the
/// independent stream `i` of `seed`, so the outcome does not depend on how
/// trials are scheduled; the reported witness is the one of lowest index.
pub fn violation_search(
    f: &ScalarField,
    sampler: &dyn PairSampler,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<ConvexityReport> {
    if trials == 0 {
        return Err(Error::Usage("trials must be at least 1".into()));
    }
    let grid = uniform_grid(DEFAULT_GRID_SIZE);
    let reports: Result<Vec<ConvexityReport>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let (p, q) = sampler.sample(&mut rng);
            midpoint_test(f, &p, &q, &grid, tol)
        })
        .collect();
    let reports = reports?;
    let min_second_difference = reports.iter().filter_map(|r| r.min_second_difference).reduce(f64::min);
    let witness = reports.iter().find_map(|r| r.witness.clone());
    Ok(ConvexityReport {
        function: f.name.clone(),
        manifold: f.manifold,
        verdict: if witness.is_some() {
            Verdict::Violated
        } else {
            Verdict::Consistent
        },
        witness,
        samples: trials * grid.len(),
        min_second_difference,
        seed: Some(seed),
        trials: Some(trials),
        t_grid_size: grid.len(),
        tolerance: tol,
    })
}
