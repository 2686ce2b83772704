//! Coordinate-frame differential geometry: metric frames, Christoffel
//! symbols of the Levi-Civita connection, covariant derivatives along
//! curves, the geodesic ODE, and the length/energy functionals.
//!
//! Everything here works in frame coordinates `x ∈ ℝᵈ`. For the SPD cone the
//! frame is the basis `{E_ij}` of [`sym_basis`], so a symmetric matrix `S`
//! has coordinates `S_ij` (i ≤ j, row-major).

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{
    geodesic_point, geodesic_velocity, metric_inner, ManifoldKind, ManifoldSpec, Point, Tangent, ORTHANT_FLOOR,
};
use crate::matfun::sym_basis;

type FrameEval = dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync;

/// Metric tensor in frame coordinates: `x ↦ G(x)` with `G_ij = g(∂_i, ∂_j)`.
#[derive(Clone)]
pub struct MetricFrame {
    dim: usize,
    eval: Arc<FrameEval>,
}

impl std::fmt::Debug for MetricFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricFrame").field("dim", &self.dim).finish()
    }
}

impl MetricFrame {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        MetricFrame {
            dim,
            eval: Arc::new(eval),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.dim {
            return Err(Error::Input(format!(
                "frame has dimension {}, got {} coordinates",
                self.dim,
                x.len()
            )));
        }
        (self.eval)(x)
    }
}

pub fn metric_frame_of(m: ManifoldSpec) -> MetricFrame {
    let d = m.dim();
    match m.kind {
        ManifoldKind::Euclidean => MetricFrame::new(d, move |_| Ok(DMatrix::identity(d, d))),
        ManifoldKind::PositiveOrthant => MetricFrame::new(d, move |x| {
            Point::vector(m, x.clone())?;
            Ok(DMatrix::from_diagonal(&x.map(|v| 1.0 / (v * v))))
        }),
        ManifoldKind::SpdCone => {
            let basis: Vec<DMatrix<f64>> = sym_basis(m.n).into_iter().map(|e| e.matrix.into_matrix()).collect();
            MetricFrame::new(d, move |x| {
                let p = Point::from_frame(m, x)?;
                let pinv = p.as_spd().expect("SpdCone point").inverse();
                let scaled: Vec<DMatrix<f64>> = basis.iter().map(|e| pinv.as_matrix() * e).collect();
                // tr(M_a M_b) = Σ_ij M_a[i,j] M_b[j,i]
                Ok(DMatrix::from_fn(d, d, |a, b| scaled[a].dot(&scaled[b].transpose())))
            })
        }
    }
}

/// `Γᵏᵢⱼ` at one point, stored as `gamma[k][i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChristoffelTensor {
    dim: usize,
    data: Vec<f64>,
}

impl ChristoffelTensor {
    pub fn zeros(dim: usize) -> Self {
        ChristoffelTensor {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn idx(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.dim + i) * self.dim + j
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(k, i, j)]
    }

    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let at = self.idx(k, i, j);
        self.data[at] = v;
    }

    /// Largest `|Γᵏᵢⱼ − Γᵏⱼᵢ|`.
    pub fn torsion_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for k in 0..d {
            for i in 0..d {
                for j in (i + 1)..d {
                    worst = worst.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        worst
    }

    /// Replaces each pair `Γᵏᵢⱼ, Γᵏⱼᵢ` by its mean.
    pub fn symmetrize(&mut self) {
        let d = self.dim;
        for k in 0..d {
            for i in 0..d {
                for j in (i + 1)..d {
                    let m = 0.5 * (self.get(k, i, j) + self.get(k, j, i));
                    self.set(k, i, j, m);
                    self.set(k, j, i, m);
                }
            }
        }
    }

    /// `out_k = Σᵢⱼ Γᵏᵢⱼ uᵢ wⱼ`.
    pub fn contract(&self, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        DVector::from_fn(d, |k, _| {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += self.get(k, i, j) * u[i] * w[j];
                }
            }
            s
        })
    }

    pub fn max_abs_diff(&self, other: &ChristoffelTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }
}

/// Produces Christoffel symbols at frame coordinates. Must be callable
/// concurrently.
pub trait ChristoffelSource: Sync {
    fn christoffel_at(&self, x: &DVector<f64>) -> Result<ChristoffelTensor>;
}

impl<F> ChristoffelSource for F
where
    F: Fn(&DVector<f64>) -> Result<ChristoffelTensor> + Sync,
{
    fn christoffel_at(&self, x: &DVector<f64>) -> Result<ChristoffelTensor> {
        self(x)
    }
}

/// Central-difference step `1e-4 · max(1, ‖x‖∞)`.
pub fn default_step(x: &DVector<f64>) -> f64 {
    1e-4 * x.amax().max(1.0)
}

fn metric_derivatives(frame: &MetricFrame, x: &DVector<f64>, h: f64) -> Result<Vec<DMatrix<f64>>> {
    (0..frame.dim())
        .map(|l| {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[l] += h;
            minus[l] -= h;
            Ok((frame.metric_at(&plus)? - frame.metric_at(&minus)?) / (2.0 * h))
        })
        .collect()
}

/// `Γᵏᵢⱼ = ½ Σ_l g^{kl}(∂ᵢg_{jl} + ∂ⱼg_{il} − ∂_l g_{ij})` with central
/// differences, before the torsion symmetry is enforced.
pub fn christoffel_numeric_unsymmetrized(frame: &MetricFrame, x: &DVector<f64>, h: f64) -> Result<ChristoffelTensor> {
    let d = frame.dim();
    let g = frame.metric_at(x)?;
    let ginv = g
        .cholesky()
        .ok_or_else(|| Error::Conditioning("metric tensor is not positive definite".into()))?
        .inverse();
    let dg = metric_derivatives(frame, x, h)?;
    let mut out = ChristoffelTensor::zeros(d);
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for l in 0..d {
                    s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                out.set(k, i, j, 0.5 * s);
            }
        }
    }
    Ok(out)
}

pub fn christoffel_numeric(frame: &MetricFrame, x: &DVector<f64>, h: f64) -> Result<ChristoffelTensor> {
    let mut gamma = christoffel_numeric_unsymmetrized(frame, x, h)?;
    gamma.symmetrize();
    Ok(gamma)
}

/// Closed forms: zero on ℝⁿ, `Γⁱᵢᵢ = −1/pᵢ` on the positive orthant.
pub fn christoffel_closed(m: ManifoldSpec, p: &Point) -> Result<ChristoffelTensor> {
    if p.spec() != m {
        return Err(Error::Usage("point does not belong to the manifold".into()));
    }
    let d = m.dim();
    match m.kind {
        ManifoldKind::Euclidean => Ok(ChristoffelTensor::zeros(d)),
        ManifoldKind::PositiveOrthant => {
            let x = p.as_vector().expect("orthant point");
            let mut g = ChristoffelTensor::zeros(d);
            for i in 0..d {
                g.set(i, i, i, -1.0 / x[i]);
            }
            Ok(g)
        }
        ManifoldKind::SpdCone => Err(Error::Unsupported(
            "no closed-form Christoffel symbols for SpdCone; use the numeric source".into(),
        )),
    }
}

/// Closed-form Christoffel source for Euclidean space and the orthant.
#[derive(Clone, Copy, Debug)]
pub struct ClosedChristoffel {
    spec: ManifoldSpec,
}

impl ClosedChristoffel {
    pub fn new(spec: ManifoldSpec) -> Result<Self> {
        if spec.kind == ManifoldKind::SpdCone {
            return Err(Error::Unsupported("closed-form symbols for SpdCone".into()));
        }
        Ok(ClosedChristoffel { spec })
    }
}

impl ChristoffelSource for ClosedChristoffel {
    fn christoffel_at(&self, x: &DVector<f64>) -> Result<ChristoffelTensor> {
        if self.spec.kind == ManifoldKind::PositiveOrthant && x.iter().any(|&v| v <= ORTHANT_FLOOR) {
            return Err(Error::Conditioning("left the positive orthant".into()));
        }
        christoffel_closed(self.spec, &Point::vector(self.spec, x.clone())?)
    }
}

/// Finite-difference Christoffel source over any metric frame.
#[derive(Clone, Debug)]
pub struct NumericChristoffel {
    frame: MetricFrame,
    step: Option<f64>,
}

impl NumericChristoffel {
    pub fn new(frame: MetricFrame) -> Self {
        NumericChristoffel { frame, step: None }
    }

    pub fn with_step(frame: MetricFrame, h: f64) -> Self {
        NumericChristoffel { frame, step: Some(h) }
    }

    pub fn frame(&self) -> &MetricFrame {
        &self.frame
    }
}

impl ChristoffelSource for NumericChristoffel {
    fn christoffel_at(&self, x: &DVector<f64>) -> Result<ChristoffelTensor> {
        let h = self.step.unwrap_or_else(|| default_step(x));
        christoffel_numeric(&self.frame, x, h)
    }
}

/// Christoffel source appropriate for a manifold: closed form where
/// available, finite differences on the SPD cone.
pub fn default_source(m: ManifoldSpec) -> Box<dyn ChristoffelSource + Send> {
    match m.kind {
        ManifoldKind::SpdCone => Box::new(NumericChristoffel::new(metric_frame_of(m))),
        _ => Box::new(ClosedChristoffel::new(m).expect("vector manifold")),
    }
}

/// Largest violation of `∂ₖg_ij = Σ_l (Γˡₖᵢ g_lj + Γˡₖⱼ g_il)` at `x`, with
/// the left side from central differences of step `h`.
pub fn metric_compatibility_residual(
    frame: &MetricFrame,
    source: &dyn ChristoffelSource,
    x: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    let d = frame.dim();
    let g = frame.metric_at(x)?;
    let dg = metric_derivatives(frame, x, h)?;
    let gamma = source.christoffel_at(x)?;
    let mut worst = 0.0f64;
    for (k, dgk) in dg.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                let mut rhs = 0.0;
                for l in 0..d {
                    rhs += gamma.get(l, k, i) * g[(l, j)] + gamma.get(l, k, j) * g[(i, l)];
                }
                worst = worst.max((dgk[(i, j)] - rhs).abs());
            }
        }
    }
    Ok(worst)
}

/// Discretized curve in frame coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveTrace {
    times: Vec<f64>,
    points: Vec<DVector<f64>>,
    velocities: Vec<DVector<f64>>,
}

impl CurveTrace {
    pub fn new(times: Vec<f64>, points: Vec<DVector<f64>>, velocities: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() != points.len() || times.len() != velocities.len() {
            return Err(Error::Input("trace columns have different lengths".into()));
        }
        if times.is_empty() {
            return Err(Error::Input("empty trace".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("trace times must be strictly increasing".into()));
        }
        let d = points[0].len();
        if points.iter().chain(&velocities).any(|v| v.len() != d) {
            return Err(Error::Input("trace samples have inconsistent dimension".into()));
        }
        Ok(CurveTrace {
            times,
            points,
            velocities,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn velocities(&self) -> &[DVector<f64>] {
        &self.velocities
    }

    pub fn last_point(&self) -> &DVector<f64> {
        self.points.last().expect("non-empty trace")
    }

    pub fn csv_header(&self) -> String {
        let d = self.dim();
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=d).map(|i| format!("x_{i}")));
        cols.extend((1..=d).map(|i| format!("v_{i}")));
        cols.join(",")
    }

    /// CSV with header `t,x_1..x_d,v_1..v_d`, one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for i in 0..self.len() {
            let row: Vec<String> = std::iter::once(self.times[i])
                .chain(self.points[i].iter().copied())
                .chain(self.velocities[i].iter().copied())
                .map(|v| v.to_string())
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Input("empty CSV".into()))?;
        let ncols = header.split(',').count();
        if ncols < 3 || ncols % 2 == 0 {
            return Err(Error::Input(format!("malformed trace header: {header}")));
        }
        let d = (ncols - 1) / 2;
        let (mut times, mut points, mut vels) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Input(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != ncols {
                return Err(Error::Input(format!("line {}: expected {ncols} columns", lineno + 2)));
            }
            times.push(vals[0]);
            points.push(DVector::from_column_slice(&vals[1..=d]));
            vels.push(DVector::from_column_slice(&vals[d + 1..]));
        }
        CurveTrace::new(times, points, vels)
    }
}

/// Samples the closed-form geodesic from `p` to `q` at `samples` uniform
/// times in `[0, 1]`.
pub fn sample_geodesic(p: &Point, q: &Point, samples: usize) -> Result<CurveTrace> {
    if samples < 2 {
        return Err(Error::Usage("need at least two samples".into()));
    }
    let mut times = Vec::with_capacity(samples);
    let mut points = Vec::with_capacity(samples);
    let mut vels = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = i as f64 / (samples - 1) as f64;
        times.push(t);
        points.push(geodesic_point(p, q, t)?.to_frame());
        vels.push(geodesic_velocity(p, q, t)?.to_frame());
    }
    CurveTrace::new(times, points, vels)
}

/// Second-order finite-difference derivative of samples on a (possibly
/// non-uniform) time grid. Requires at least three samples.
pub(crate) fn differentiate(times: &[f64], values: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = times.len();
    debug_assert!(n >= 3);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, c, h1, h2) = if i == 0 {
            (0, 1, 2, times[1] - times[0], times[2] - times[1])
        } else if i == n - 1 {
            (
                n - 3,
                n - 2,
                n - 1,
                times[n - 2] - times[n - 3],
                times[n - 1] - times[n - 2],
            )
        } else {
            (i - 1, i, i + 1, times[i] - times[i - 1], times[i + 1] - times[i])
        };
        // Lagrange weights for the derivative at sample i of the parabola
        // through (a, b, c).
        let (wa, wb, wc) = if i == 0 {
            (
                -(2.0 * h1 + h2) / (h1 * (h1 + h2)),
                (h1 + h2) / (h1 * h2),
                -h1 / (h2 * (h1 + h2)),
            )
        } else if i == n - 1 {
            (
                h2 / (h1 * (h1 + h2)),
                -(h1 + h2) / (h1 * h2),
                (2.0 * h2 + h1) / (h2 * (h1 + h2)),
            )
        } else {
            (-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)))
        };
        out.push(&values[a] * wa + &values[b] * wb + &values[c] * wc);
    }
    out
}

/// `(∇_γ̇ X)ᵏ = Ẋᵏ + Σᵢⱼ γ̇ⁱ Xʲ Γᵏᵢⱼ` at every sample time, with `Ẋ` from
/// finite differences.
pub fn covariant_derivative_along(
    trace: &CurveTrace,
    field: &[DVector<f64>],
    source: &dyn ChristoffelSource,
) -> Result<Vec<DVector<f64>>> {
    if trace.len() < 3 {
        return Err(Error::Usage("covariant derivative needs at least 3 samples".into()));
    }
    if field.len() != trace.len() || field.iter().any(|x| x.len() != trace.dim()) {
        return Err(Error::Usage("vector field does not match the trace".into()));
    }
    let xdot = differentiate(&trace.times, field);
    trace
        .points
        .iter()
        .zip(&trace.velocities)
        .zip(field.iter().zip(xdot))
        .map(|((x, v), (f, fdot))| {
            let gamma = source.christoffel_at(x)?;
            Ok(fdot + gamma.contract(v, f))
        })
        .collect()
}

/// Largest frame-coordinate norm of `∇_γ̇ γ̇` over interior samples.
pub fn geodesic_residual(trace: &CurveTrace, source: &dyn ChristoffelSource) -> Result<f64> {
    let acc = covariant_derivative_along(trace, &trace.velocities, source)?;
    Ok(acc[1..acc.len() - 1].iter().map(|a| a.norm()).fold(0.0, f64::max))
}

/// Integrates `γ̈ₖ = −Σᵢⱼ γ̇ᵢ γ̇ⱼ Γᵏᵢⱼ` on `[0, duration]` with `steps`
/// fixed classical Runge–Kutta steps.
pub fn geodesic_ode_solve(
    source: &dyn ChristoffelSource,
    p0: &DVector<f64>,
    v0: &DVector<f64>,
    duration: f64,
    steps: usize,
) -> Result<CurveTrace> {
    if steps == 0 {
        return Err(Error::Usage("steps must be positive".into()));
    }
    if p0.len() != v0.len() {
        return Err(Error::Input("position and velocity dimensions differ".into()));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Usage("duration must be positive".into()));
    }
    let dt = duration / steps as f64;
    let accel =
        |x: &DVector<f64>, v: &DVector<f64>| -> Result<DVector<f64>> { Ok(-source.christoffel_at(x)?.contract(v, v)) };

    let mut times = vec![0.0];
    let mut points = vec![p0.clone()];
    let mut vels = vec![v0.clone()];
    let bail = |t: f64, times: &[f64], points: &[DVector<f64>], vels: &[DVector<f64>]| Error::Integration {
        t,
        last_valid: Box::new(CurveTrace::new(times.to_vec(), points.to_vec(), vels.to_vec()).expect("valid prefix")),
    };

    // Check that the starting point itself is admissible.
    if source.christoffel_at(p0).is_err() {
        return Err(bail(0.0, &times, &points, &vels));
    }
    for s in 0..steps {
        let t = s as f64 * dt;
        let x = &points[s];
        let v = &vels[s];
        let step = || -> Result<(DVector<f64>, DVector<f64>)> {
            let k1x = v.clone();
            let k1v = accel(x, v)?;
            let x2 = x + &k1x * (0.5 * dt);
            let v2 = v + &k1v * (0.5 * dt);
            let k2v = accel(&x2, &v2)?;
            let x3 = x + &v2 * (0.5 * dt);
            let v3 = v + &k2v * (0.5 * dt);
            let k3v = accel(&x3, &v3)?;
            let x4 = x + &v3 * dt;
            let v4 = v + &k3v * dt;
            let k4v = accel(&x4, &v4)?;
            let nx = x + (k1x + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0);
            let nv = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
            source.christoffel_at(&nx)?;
            Ok((nx, nv))
        };
        match step() {
            Ok((nx, nv)) => {
                times.push(if s + 1 == steps { duration } else { (s + 1) as f64 * dt });
                points.push(nx);
                vels.push(nv);
            }
            Err(_) => return Err(bail(t, &times, &points, &vels)),
        }
    }
    CurveTrace::new(times, points, vels)
}

/// `g_x(v, v)` for frame coordinates on manifold `m`.
pub fn frame_speed_sq(m: ManifoldSpec, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let p = Point::from_frame(m, x)?;
    let u = Tangent::from_frame(&p, v)?;
    metric_inner(&p, &u, &u)
}

fn trapezoid(times: &[f64], f: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(f.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

pub fn curve_length(m: ManifoldSpec, trace: &CurveTrace) -> Result<f64> {
    let speed: Result<Vec<f64>> = trace
        .points
        .iter()
        .zip(&trace.velocities)
        .map(|(x, v)| Ok(frame_speed_sq(m, x, v)?.max(0.0).sqrt()))
        .collect();
    Ok(trapezoid(&trace.times, &speed?))
}

pub fn curve_energy(m: ManifoldSpec, trace: &CurveTrace) -> Result<f64> {
    let e: Result<Vec<f64>> = trace
        .points
        .iter()
        .zip(&trace.velocities)
        .map(|(x, v)| frame_speed_sq(m, x, v))
        .collect();
    Ok(trapezoid(&trace.times, &e?))
}

/// A frame-vector field `φ(t)` and its derivative `φ̇(t)` sampled at the
/// times of a trace.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub values: Vec<DVector<f64>>,
    pub derivatives: Vec<DVector<f64>>,
}

impl Perturbation {
    pub fn zero(trace: &CurveTrace) -> Self {
        let z = DVector::zeros(trace.dim());
        Perturbation {
            values: vec![z.clone(); trace.len()],
            derivatives: vec![z; trace.len()],
        }
    }

    /// `φ(t) = sin(kπs)·direction` with `s` the normalized time in `[0, 1]`.
    pub fn sine_bump(trace: &CurveTrace, direction: &DVector<f64>, k: usize) -> Self {
        let t0 = trace.times[0];
        let span = trace.times[trace.len() - 1] - t0;
        let w = k as f64 * std::f64::consts::PI;
        let mut values = Vec::with_capacity(trace.len());
        let mut derivatives = Vec::with_capacity(trace.len());
        for &t in &trace.times {
            let s = (t - t0) / span;
            values.push(direction * (w * s).sin());
            derivatives.push(direction * (w * (w * s).cos() / span));
        }
        // sin(kπ) is not exactly zero in floating point.
        let last = values.len() - 1;
        values[0].fill(0.0);
        values[last].fill(0.0);
        Perturbation { values, derivatives }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationSample {
    pub u: f64,
    /// `None` when the perturbed curve left the manifold.
    pub energy: Option<f64>,
}

fn perturbed_energy(m: ManifoldSpec, trace: &CurveTrace, pert: &Perturbation, u: f64) -> Option<f64> {
    let mut e = Vec::with_capacity(trace.len());
    for i in 0..trace.len() {
        let x = &trace.points[i] + &pert.values[i] * u;
        let v = &trace.velocities[i] + &pert.derivatives[i] * u;
        e.push(frame_speed_sq(m, &x, &v).ok()?);
    }
    Some(trapezoid(&trace.times, &e))
}

fn check_perturbation(trace: &CurveTrace, pert: &Perturbation) -> Result<()> {
    if pert.values.len() != trace.len() || pert.derivatives.len() != trace.len() {
        return Err(Error::Usage("perturbation is not sampled on the trace times".into()));
    }
    let ends = [&pert.values[0], &pert.values[trace.len() - 1]];
    if ends.iter().any(|v| v.amax() > 1e-12) {
        return Err(Error::Usage("perturbation must vanish at both endpoints".into()));
    }
    Ok(())
}

/// Energies of the variations `ν_u(t) = γ(t) + u·φ(t)` for each `u`.
pub fn variation_energy_test(
    m: ManifoldSpec,
    trace: &CurveTrace,
    pert: &Perturbation,
    u_grid: &[f64],
) -> Result<Vec<VariationSample>> {
    check_perturbation(trace, pert)?;
    Ok(u_grid
        .iter()
        .map(|&u| VariationSample {
            u,
            energy: perturbed_energy(m, trace, pert, u),
        })
        .collect())
}

/// Central difference `dS/du` at `u = 0` with step `du`.
pub fn energy_first_variation(m: ManifoldSpec, trace: &CurveTrace, pert: &Perturbation, du: f64) -> Result<f64> {
    check_perturbation(trace, pert)?;
    let plus = perturbed_energy(m, trace, pert, du);
    let minus = perturbed_energy(m, trace, pert, -du);
    match (plus, minus) {
        (Some(a), Some(b)) => Ok((a - b) / (2.0 * du)),
        _ => Err(Error::Usage("variation step leaves the manifold".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matfun::SpdMatrix;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn frames() {
        let g = metric_frame_of(ManifoldSpec::euclidean(3))
            .metric_at(&v(&[5.0, -1.0, 2.0]))
            .unwrap();
        assert_eq!(g, DMatrix::identity(3, 3));
        let g = metric_frame_of(ManifoldSpec::orthant(1)).metric_at(&v(&[2.0])).unwrap();
        assert_eq!(g[(0, 0)], 0.25);
        let g = metric_frame_of(ManifoldSpec::spd(1)).metric_at(&v(&[2.0])).unwrap();
        assert_relative_eq!(g[(0, 0)], 0.25, epsilon = 1e-15);
        assert!(metric_frame_of(ManifoldSpec::orthant(1))
            .metric_at(&v(&[-1.0]))
            .is_err());
    }

    #[test]
    fn spd_frame_matches_metric_inner() {
        let m = ManifoldSpec::spd(2);
        let p = Point::spd(SpdMatrix::from_rows(&[vec![2.0, 0.4], vec![0.4, 1.0]]).unwrap());
        let a = v(&[0.3, -0.2, 1.1]);
        let b = v(&[-0.5, 0.7, 0.2]);
        let g = metric_frame_of(m).metric_at(&p.to_frame()).unwrap();
        let via_frame = (a.transpose() * &g * &b)[(0, 0)];
        let ua = Tangent::from_frame(&p, &a).unwrap();
        let ub = Tangent::from_frame(&p, &b).unwrap();
        assert_relative_eq!(via_frame, metric_inner(&p, &ua, &ub).unwrap(), epsilon = 1e-13);
    }

    #[test]
    fn numeric_christoffel_examples() {
        let frame = metric_frame_of(ManifoldSpec::euclidean(2));
        let g = christoffel_numeric(&frame, &v(&[0.3, 0.4]), 1e-4).unwrap();
        assert_eq!(g.nonzero_count(), 0);

        let frame = metric_frame_of(ManifoldSpec::orthant(1));
        let g = christoffel_numeric(&frame, &v(&[2.0]), 1e-4).unwrap();
        assert_relative_eq!(g.get(0, 0, 0), -0.5, epsilon = 1e-8);

        let frame = metric_frame_of(ManifoldSpec::orthant(2));
        let g = christoffel_numeric(&frame, &v(&[1.0, 1.0]), 1e-4).unwrap();
        assert_relative_eq!(g.get(0, 0, 0), -1.0, epsilon = 1e-7);
        assert_relative_eq!(g.get(1, 1, 1), -1.0, epsilon = 1e-7);
        for (k, i, j) in [(0, 0, 1), (0, 1, 1), (1, 0, 0), (1, 0, 1)] {
            assert!(g.get(k, i, j).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_christoffel_examples() {
        let g = christoffel_closed(ManifoldSpec::euclidean(2), &Point::euclidean(&[1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(g, ChristoffelTensor::zeros(2));
        let p = Point::orthant(&[0.5, 2.0]).unwrap();
        let g = christoffel_closed(ManifoldSpec::orthant(2), &p).unwrap();
        assert_eq!(g.get(0, 0, 0), -2.0);
        assert_eq!(g.get(1, 1, 1), -0.5);
        let p = Point::orthant(&[0.7, 1.3, 4.0]).unwrap();
        assert_eq!(
            christoffel_closed(ManifoldSpec::orthant(3), &p)
                .unwrap()
                .nonzero_count(),
            3
        );
        let p = Point::spd(SpdMatrix::identity(2));
        assert!(matches!(
            christoffel_closed(ManifoldSpec::spd(2), &p),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn derivative_weights_are_exact_on_quadratics() {
        let times = vec![0.0, 0.1, 0.35, 0.5, 0.9];
        let vals: Vec<_> = times.iter().map(|&t| v(&[3.0 * t * t - t + 2.0])).collect();
        let d = differentiate(&times, &vals);
        for (t, dv) in times.iter().zip(d) {
            assert_relative_eq!(dv[0], 6.0 * t - 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn covariant_derivative_examples() {
        let m = ManifoldSpec::euclidean(2);
        let trace = sample_geodesic(
            &Point::euclidean(&[0.0, 0.0]).unwrap(),
            &Point::euclidean(&[1.0, 2.0]).unwrap(),
            10,
        )
        .unwrap();
        let field = vec![v(&[0.5, -1.0]); trace.len()];
        let src = ClosedChristoffel::new(m).unwrap();
        let out = covariant_derivative_along(&trace, &field, &src).unwrap();
        assert!(out.iter().all(|x| x.norm() < 1e-12));

        let short = CurveTrace::new(vec![0.0, 1.0], vec![v(&[0.0]); 2], vec![v(&[0.0]); 2]).unwrap();
        assert!(matches!(
            covariant_derivative_along(&short, &[v(&[0.0]), v(&[0.0])], &src),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn orthant_geodesic_residual_is_small() {
        let m = ManifoldSpec::orthant(2);
        let p = Point::orthant(&[1.0, 0.5]).unwrap();
        let q = Point::orthant(&[0.5, 1.0]).unwrap();
        let trace = sample_geodesic(&p, &q, 200).unwrap();
        let src = ClosedChristoffel::new(m).unwrap();
        assert!(geodesic_residual(&trace, &src).unwrap() <= 1e-4);
    }

    #[test]
    fn straight_chord_is_not_an_orthant_geodesic() {
        let m = ManifoldSpec::orthant(2);
        let (a, b) = (v(&[1.0, 0.5]), v(&[0.5, 1.0]));
        let d = &b - &a;
        let n = 41;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let points: Vec<_> = times.iter().map(|&t| &a + &d * t).collect();
        let trace = CurveTrace::new(times, points, vec![d.clone(); n]).unwrap();
        let src = ClosedChristoffel::new(m).unwrap();
        let acc = covariant_derivative_along(&trace, trace.velocities(), &src).unwrap();
        // At the midpoint m = (a+b)/2 the residual is Γᵏₖₖ dₖ² = −dₖ²/mₖ.
        let mid = (&a + &b) * 0.5;
        let expected = d.zip_map(&mid, |dk, mk| -dk * dk / mk);
        assert!((&acc[n / 2] - &expected).norm() < 1e-12);
        let res = geodesic_residual(&trace, &src).unwrap();
        assert!(res >= expected.norm() - 1e-12);
        assert!(res > 0.3);
    }

    #[test]
    fn euclidean_ode_is_a_straight_line() {
        let src = ClosedChristoffel::new(ManifoldSpec::euclidean(2)).unwrap();
        let tr = geodesic_ode_solve(&src, &v(&[0.0, 0.0]), &v(&[1.0, 0.0]), 1.0, 10).unwrap();
        assert_eq!(tr.len(), 11);
        assert!((tr.last_point() - v(&[1.0, 0.0])).norm() < 1e-15);
        assert!(tr.points().iter().all(|x| x[1] == 0.0));
    }

    #[test]
    fn orthant_ode_matches_closed_form() {
        let m = ManifoldSpec::orthant(2);
        let p = Point::orthant(&[1.0, 1.0]).unwrap();
        let q = Point::orthant(&[0.5, 1.0]).unwrap();
        let v0 = crate::manifold::log_map(&p, &q).unwrap().to_frame();
        let src = ClosedChristoffel::new(m).unwrap();
        let tr = geodesic_ode_solve(&src, &p.to_frame(), &v0, 1.0, 100).unwrap();
        assert_eq!(tr.points()[0], p.to_frame());
        assert_eq!(tr.velocities()[0], v0);
        assert!((tr.last_point() - q.to_frame()).norm() < 1e-6);
    }

    #[test]
    fn spd_ode_matches_closed_form() {
        let m = ManifoldSpec::spd(2);
        let p = Point::spd(SpdMatrix::from_rows(&[vec![1.2, 0.3], vec![0.3, 0.8]]).unwrap());
        let q = Point::spd(SpdMatrix::from_rows(&[vec![2.0, -0.4], vec![-0.4, 1.5]]).unwrap());
        let v0 = crate::manifold::log_map(&p, &q).unwrap().to_frame();
        let src = NumericChristoffel::new(metric_frame_of(m));
        let tr = geodesic_ode_solve(&src, &p.to_frame(), &v0, 1.0, 100).unwrap();
        assert!((tr.last_point() - q.to_frame()).amax() < 1e-5);
    }

    #[test]
    fn integration_stops_when_leaving_the_orthant() {
        let src = ClosedChristoffel::new(ManifoldSpec::orthant(1)).unwrap();
        // Γ = −1/x gives x(t) = x₀ exp(t v₀/x₀) in exact arithmetic; a coarse
        // step with a huge negative velocity overshoots below zero.
        let err = geodesic_ode_solve(&src, &v(&[1.0]), &v(&[-50.0]), 1.0, 2).unwrap_err();
        match err {
            Error::Integration { last_valid, .. } => assert_eq!(last_valid.len(), 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn length_and_energy_examples() {
        let eu = ManifoldSpec::euclidean(3);
        let tr = sample_geodesic(
            &Point::euclidean(&[0.0, 0.0, 0.0]).unwrap(),
            &Point::euclidean(&[1.0, 0.0, 0.0]).unwrap(),
            5,
        )
        .unwrap();
        assert_relative_eq!(curve_length(eu, &tr).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(curve_energy(eu, &tr).unwrap(), 1.0, epsilon = 1e-15);

        let or = ManifoldSpec::orthant(1);
        let tr = sample_geodesic(&Point::orthant(&[1.0]).unwrap(), &Point::orthant(&[E]).unwrap(), 50).unwrap();
        assert_relative_eq!(curve_length(or, &tr).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(curve_energy(or, &tr).unwrap(), 1.0, epsilon = 1e-12);

        let sp = ManifoldSpec::spd(2);
        let p = Point::spd(SpdMatrix::identity(2));
        let q = Point::spd(SpdMatrix::from_diagonal(&[E * E, 1.0]).unwrap());
        let tr = sample_geodesic(&p, &q, 50).unwrap();
        assert_relative_eq!(curve_length(sp, &tr).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_perturbation_gives_constant_energies() {
        let m = ManifoldSpec::orthant(2);
        let tr = sample_geodesic(
            &Point::orthant(&[1.0, 2.0]).unwrap(),
            &Point::orthant(&[3.0, 0.5]).unwrap(),
            101,
        )
        .unwrap();
        let out = variation_energy_test(m, &tr, &Perturbation::zero(&tr), &[-0.1, 0.0, 0.1]).unwrap();
        let e0 = out[1].energy.unwrap();
        assert!(out.iter().all(|s| s.energy == Some(e0)));
    }

    #[test]
    fn geodesic_energy_is_minimal_under_bumps() {
        let m = ManifoldSpec::orthant(2);
        let tr = sample_geodesic(
            &Point::orthant(&[1.0, 2.0]).unwrap(),
            &Point::orthant(&[3.0, 0.5]).unwrap(),
            1001,
        )
        .unwrap();
        let bump = Perturbation::sine_bump(&tr, &v(&[0.3, -0.2]), 1);
        let grid = [-0.1, -0.05, -0.01, 0.0, 0.01, 0.05, 0.1];
        let out = variation_energy_test(m, &tr, &bump, &grid).unwrap();
        let e0 = out[3].energy.unwrap();
        for s in &out {
            assert!(s.energy.unwrap() >= e0);
        }
        let ds = energy_first_variation(m, &tr, &bump, 1e-4).unwrap();
        assert!(ds.abs() <= 1e-5 * e0);
    }

    #[test]
    fn non_geodesic_has_nonzero_first_variation() {
        let m = ManifoldSpec::orthant(2);
        let (a, b) = (v(&[1.0, 2.0]), v(&[3.0, 0.5]));
        let d = &b - &a;
        let n = 501;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let points: Vec<_> = times.iter().map(|&t| &a + &d * t).collect();
        let chord = CurveTrace::new(times, points, vec![d.clone(); n]).unwrap();
        let basis = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        let worst = basis
            .iter()
            .flat_map(|dir| (1..=3).map(move |k| (dir.clone(), k)))
            .map(|(dir, k)| {
                energy_first_variation(m, &chord, &Perturbation::sine_bump(&chord, &dir, k), 1e-4)
                    .unwrap()
                    .abs()
            })
            .fold(0.0, f64::max);
        assert!(worst > 1e-2);
    }

    #[test]
    fn perturbation_must_vanish_at_endpoints() {
        let m = ManifoldSpec::orthant(1);
        let tr = sample_geodesic(&Point::orthant(&[1.0]).unwrap(), &Point::orthant(&[2.0]).unwrap(), 11).unwrap();
        let mut p = Perturbation::zero(&tr);
        p.values[0][0] = 0.1;
        assert!(matches!(
            variation_energy_test(m, &tr, &p, &[0.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn perturbation_leaving_manifold_is_flagged() {
        let m = ManifoldSpec::orthant(1);
        let tr = sample_geodesic(&Point::orthant(&[1.0]).unwrap(), &Point::orthant(&[2.0]).unwrap(), 11).unwrap();
        let bump = Perturbation::sine_bump(&tr, &v(&[-5.0]), 1);
        let out = variation_energy_test(m, &tr, &bump, &[0.0, 1.0]).unwrap();
        assert!(out[0].energy.is_some());
        assert!(out[1].energy.is_none());
    }

    #[test]
    fn csv_round_trip() {
        let tr = sample_geodesic(
            &Point::orthant(&[1.0, 0.5]).unwrap(),
            &Point::orthant(&[0.5, 1.0]).unwrap(),
            4,
        )
        .unwrap();
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,x_1,x_2,v_1,v_2\n"));
        assert_eq!(CurveTrace::from_csv(&csv).unwrap(), tr);
    }
}
