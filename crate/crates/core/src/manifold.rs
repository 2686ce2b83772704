//! The three supported Riemannian manifolds.
//!
//! * `Euclidean` — ℝⁿ with the standard inner product.
//! * `PositiveOrthant` — ℝⁿ₊ with the Hessian metric of the log-barrier,
//!   `g_p(u, v) = ⟨P⁻¹u, P⁻¹v⟩` where `P = diag(p)`.
//! * `SpdCone` — 𝕊ⁿ₊₊ with `g_P(U, V) = tr[P⁻¹ U P⁻¹ V]`.
//!
//! All three are open subsets of their ambient vector space, so a single
//! global coordinate frame is used and charts are identities.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matfun::{spd_log, spd_power, sym_exp, sym_index_pairs, SpdMatrix, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Euclidean,
    PositiveOrthant,
    SpdCone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub kind: ManifoldKind,
    /// Vector length for the first two kinds, matrix order for `SpdCone`.
    pub n: usize,
}

impl ManifoldSpec {
    pub fn euclidean(n: usize) -> Self {
        ManifoldSpec {
            kind: ManifoldKind::Euclidean,
            n,
        }
    }

    pub fn orthant(n: usize) -> Self {
        ManifoldSpec {
            kind: ManifoldKind::PositiveOrthant,
            n,
        }
    }

    pub fn spd(n: usize) -> Self {
        ManifoldSpec {
            kind: ManifoldKind::SpdCone,
            n,
        }
    }

    /// Intrinsic dimension: n, n, n(n+1)/2.
    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::PositiveOrthant => self.n,
            ManifoldKind::SpdCone => self.n * (self.n + 1) / 2,
        }
    }

    /// Whether frame coordinates describe a point of this manifold.
    pub fn contains_frame(&self, x: &DVector<f64>) -> bool {
        Point::from_frame(*self, x).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Coords {
    Vector(DVector<f64>),
    Matrix(SpdMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    spec: ManifoldSpec,
    coords: Coords,
}

/// Orthant coordinates at or below this value are treated as invalid.
pub const ORTHANT_FLOOR: f64 = 1e-12;

impl Point {
    pub fn euclidean(x: &[f64]) -> Result<Self> {
        Self::vector(ManifoldSpec::euclidean(x.len()), DVector::from_column_slice(x))
    }

    pub fn orthant(x: &[f64]) -> Result<Self> {
        Self::vector(ManifoldSpec::orthant(x.len()), DVector::from_column_slice(x))
    }

    pub fn spd(p: SpdMatrix) -> Self {
        Point {
            spec: ManifoldSpec::spd(p.n()),
            coords: Coords::Matrix(p),
        }
    }

    pub fn vector(spec: ManifoldSpec, x: DVector<f64>) -> Result<Self> {
        if spec.kind == ManifoldKind::SpdCone {
            return Err(Error::Usage("SpdCone points are matrices".into()));
        }
        if x.len() != spec.n || spec.n == 0 {
            return Err(Error::Input(format!(
                "expected {} coordinates, got {}",
                spec.n,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite coordinate".into()));
        }
        if spec.kind == ManifoldKind::PositiveOrthant && x.iter().any(|&v| v <= ORTHANT_FLOOR) {
            return Err(Error::Conditioning(format!(
                "orthant point has a non-positive coordinate: {:?}",
                x.as_slice()
            )));
        }
        Ok(Point {
            spec,
            coords: Coords::Vector(x),
        })
    }

    /// Rebuilds a point from frame coordinates (σ-flattening for SpdCone).
    pub fn from_frame(spec: ManifoldSpec, x: &DVector<f64>) -> Result<Self> {
        match spec.kind {
            ManifoldKind::SpdCone => {
                let s = sym_from_frame(spec.n, x)?;
                Ok(Point::spd(SpdMatrix::new(s)?))
            }
            _ => Self::vector(spec, x.clone()),
        }
    }

    pub fn spec(&self) -> ManifoldSpec {
        self.spec
    }

    pub fn coords(&self) -> &Coords {
        &self.coords
    }

    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match &self.coords {
            Coords::Vector(v) => Some(v),
            Coords::Matrix(_) => None,
        }
    }

    pub fn as_spd(&self) -> Option<&SpdMatrix> {
        match &self.coords {
            Coords::Matrix(m) => Some(m),
            Coords::Vector(_) => None,
        }
    }

    pub fn to_frame(&self) -> DVector<f64> {
        match &self.coords {
            Coords::Vector(v) => v.clone(),
            Coords::Matrix(m) => sym_to_frame(m.as_sym()),
        }
    }
}

/// σ((i,j)) flattening of a symmetric matrix: entries `S_ij`, `i ≤ j`, row-major.
pub fn sym_to_frame(s: &SymMatrix) -> DVector<f64> {
    let pairs = sym_index_pairs(s.n());
    DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| s.get(i, j)))
}

pub fn sym_from_frame(n: usize, x: &DVector<f64>) -> Result<SymMatrix> {
    let pairs = sym_index_pairs(n);
    if x.len() != pairs.len() {
        return Err(Error::Input(format!(
            "expected {} frame coordinates for order {n}, got {}",
            pairs.len(),
            x.len()
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    for (a, &(i, j)) in pairs.iter().enumerate() {
        m[(i, j)] = x[a];
        m[(j, i)] = x[a];
    }
    SymMatrix::new(m)
}

#[derive(Clone, Debug, PartialEq)]
pub enum TangentVec {
    Vector(DVector<f64>),
    Sym(SymMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    base: Point,
    vec: TangentVec,
}

impl Tangent {
    pub fn new(base: &Point, vec: TangentVec) -> Result<Self> {
        let ok = match (&base.coords, &vec) {
            (Coords::Vector(p), TangentVec::Vector(v)) => p.len() == v.len(),
            (Coords::Matrix(p), TangentVec::Sym(v)) => p.n() == v.n(),
            _ => false,
        };
        if !ok {
            return Err(Error::Usage("tangent shape does not match its base point".into()));
        }
        if let TangentVec::Vector(v) = &vec {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Input("non-finite tangent component".into()));
            }
        }
        Ok(Tangent {
            base: base.clone(),
            vec,
        })
    }

    pub fn from_slice(base: &Point, v: &[f64]) -> Result<Self> {
        Self::new(base, TangentVec::Vector(DVector::from_column_slice(v)))
    }

    pub fn from_sym(base: &Point, v: SymMatrix) -> Result<Self> {
        Self::new(base, TangentVec::Sym(v))
    }

    pub fn from_frame(base: &Point, x: &DVector<f64>) -> Result<Self> {
        match base.spec.kind {
            ManifoldKind::SpdCone => Self::from_sym(base, sym_from_frame(base.spec.n, x)?),
            _ => Self::new(base, TangentVec::Vector(x.clone())),
        }
    }

    pub fn zero(base: &Point) -> Self {
        let vec = match &base.coords {
            Coords::Vector(p) => TangentVec::Vector(DVector::zeros(p.len())),
            Coords::Matrix(p) => TangentVec::Sym(SymMatrix::zeros(p.n())),
        };
        Tangent {
            base: base.clone(),
            vec,
        }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn vec(&self) -> &TangentVec {
        &self.vec
    }

    pub fn to_frame(&self) -> DVector<f64> {
        match &self.vec {
            TangentVec::Vector(v) => v.clone(),
            TangentVec::Sym(s) => sym_to_frame(s),
        }
    }

    pub fn scale(&self, c: f64) -> Tangent {
        let vec = match &self.vec {
            TangentVec::Vector(v) => TangentVec::Vector(v * c),
            TangentVec::Sym(s) => TangentVec::Sym(s.scale(c)),
        };
        Tangent {
            base: self.base.clone(),
            vec,
        }
    }

    /// `self + c·other`; both must share a base point.
    pub fn axpy(&self, c: f64, other: &Tangent) -> Result<Tangent> {
        same_base(&self.base, other)?;
        let vec = match (&self.vec, &other.vec) {
            (TangentVec::Vector(a), TangentVec::Vector(b)) => TangentVec::Vector(a + b * c),
            (TangentVec::Sym(a), TangentVec::Sym(b)) => TangentVec::Sym(a.add(&b.scale(c))),
            _ => unreachable!("tangents at the same base share a shape"),
        };
        Ok(Tangent {
            base: self.base.clone(),
            vec,
        })
    }
}

fn same_base(p: &Point, u: &Tangent) -> Result<()> {
    if u.base != *p {
        return Err(Error::Usage("tangent vector is not based at the given point".into()));
    }
    Ok(())
}

fn same_manifold(p: &Point, q: &Point) -> Result<()> {
    if p.spec != q.spec {
        return Err(Error::Usage(format!(
            "points live on different manifolds: {:?} vs {:?}",
            p.spec, q.spec
        )));
    }
    Ok(())
}

pub fn metric_inner(p: &Point, u: &Tangent, v: &Tangent) -> Result<f64> {
    same_base(p, u)?;
    same_base(p, v)?;
    Ok(match (&p.coords, &u.vec, &v.vec) {
        (Coords::Vector(_), TangentVec::Vector(a), TangentVec::Vector(b)) if p.spec.kind == ManifoldKind::Euclidean => {
            a.dot(b)
        }
        (Coords::Vector(x), TangentVec::Vector(a), TangentVec::Vector(b)) => a
            .iter()
            .zip(b.iter())
            .zip(x.iter())
            .map(|((ai, bi), xi)| ai * bi / (xi * xi))
            .sum(),
        (Coords::Matrix(pm), TangentVec::Sym(a), TangentVec::Sym(b)) => {
            let pinv = pm.inverse();
            let left = pinv.as_matrix() * a.as_matrix();
            let right = pinv.as_matrix() * b.as_matrix();
            left.dot(&right.transpose())
        }
        _ => unreachable!("tangent shapes are validated on construction"),
    })
}

/// `S = log(P^{-1/2} Q P^{-1/2})`, the whitened logarithm at P.
fn whitened_log(p: &SpdMatrix, q: &SpdMatrix) -> Result<SymMatrix> {
    let w = p.inv_sqrt();
    let inner = SpdMatrix::new(w.as_sym().sandwich(q.as_sym()))?;
    Ok(spd_log(&inner))
}

/// Closed-form geodesic through `p` (t = 0) and `q` (t = 1).
pub fn geodesic_point(p: &Point, q: &Point, t: f64) -> Result<Point> {
    same_manifold(p, q)?;
    match (&p.coords, &q.coords) {
        (Coords::Vector(a), Coords::Vector(b)) => match p.spec.kind {
            ManifoldKind::Euclidean => Point::vector(p.spec, a * (1.0 - t) + b * t),
            _ => {
                let x = a.zip_map(b, |ai, bi| ai * (bi / ai).powf(t));
                Point::vector(p.spec, x)
            }
        },
        (Coords::Matrix(pm), Coords::Matrix(qm)) => {
            let h = pm.sqrt();
            let w = pm.inv_sqrt();
            let inner = SpdMatrix::new(w.as_sym().sandwich(qm.as_sym()))?;
            let mid = spd_power(&inner, t)?;
            Ok(Point::spd(SpdMatrix::new(h.as_sym().sandwich(mid.as_sym()))?))
        }
        _ => unreachable!("same manifold implies same coordinate kind"),
    }
}

/// Velocity `γ̇(t)` of the closed-form geodesic from `p` to `q`.
pub fn geodesic_velocity(p: &Point, q: &Point, t: f64) -> Result<Tangent> {
    same_manifold(p, q)?;
    let at = geodesic_point(p, q, t)?;
    match (&p.coords, &q.coords, &at.coords) {
        (Coords::Vector(a), Coords::Vector(b), Coords::Vector(g)) => {
            let v = match p.spec.kind {
                ManifoldKind::Euclidean => b - a,
                _ => g.zip_zip_map(a, b, |gi, ai, bi| gi * (bi / ai).ln()),
            };
            Tangent::new(&at, TangentVec::Vector(v))
        }
        (Coords::Matrix(pm), Coords::Matrix(qm), _) => {
            // d/dt P^{1/2} exp(tS) P^{1/2} = P^{1/2} S exp(tS) P^{1/2}
            let s = whitened_log(pm, qm)?;
            let e = sym_exp(&s.scale(t))?;
            let h = pm.sqrt();
            let inner = s.as_matrix() * e.as_matrix();
            let v = SymMatrix::from_matrix_unchecked(h.as_matrix() * inner * h.as_matrix());
            Tangent::from_sym(&at, v)
        }
        _ => unreachable!(),
    }
}

pub fn exp_map(p: &Point, v: &Tangent, t: f64) -> Result<Point> {
    same_base(p, v)?;
    match (&p.coords, &v.vec) {
        (Coords::Vector(x), TangentVec::Vector(u)) => match p.spec.kind {
            ManifoldKind::Euclidean => Point::vector(p.spec, x + u * t),
            _ => Point::vector(p.spec, x.zip_map(u, |xi, ui| xi * (t * ui / xi).exp())),
        },
        (Coords::Matrix(pm), TangentVec::Sym(u)) => {
            let h = pm.sqrt();
            let w = pm.inv_sqrt();
            let e = sym_exp(&w.as_sym().sandwich(u).scale(t))?;
            Ok(Point::spd(SpdMatrix::new(h.as_sym().sandwich(e.as_sym()))?))
        }
        _ => unreachable!(),
    }
}

pub fn log_map(p: &Point, q: &Point) -> Result<Tangent> {
    same_manifold(p, q)?;
    match (&p.coords, &q.coords) {
        (Coords::Vector(a), Coords::Vector(b)) => {
            let v = match p.spec.kind {
                ManifoldKind::Euclidean => b - a,
                _ => a.zip_map(b, |ai, bi| ai * (bi / ai).ln()),
            };
            Tangent::new(p, TangentVec::Vector(v))
        }
        (Coords::Matrix(pm), Coords::Matrix(qm)) => {
            let s = whitened_log(pm, qm)?;
            Tangent::from_sym(p, pm.sqrt().as_sym().sandwich(&s))
        }
        _ => unreachable!(),
    }
}

/// Length of the closed-form geodesic between `p` and `q`.
pub fn distance(p: &Point, q: &Point) -> Result<f64> {
    same_manifold(p, q)?;
    match (&p.coords, &q.coords) {
        (Coords::Vector(a), Coords::Vector(b)) => Ok(match p.spec.kind {
            ManifoldKind::Euclidean => (b - a).norm(),
            _ => a
                .iter()
                .zip(b.iter())
                .map(|(ai, bi)| (bi / ai).ln().powi(2))
                .sum::<f64>()
                .sqrt(),
        }),
        (Coords::Matrix(pm), Coords::Matrix(qm)) => Ok(whitened_log(pm, qm)?.frobenius_norm()),
        _ => unreachable!(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoordsRecord {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

/// Text form of a point: `{"manifold": {...}, "coords": [...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointRecord {
    pub manifold: ManifoldSpec,
    pub coords: CoordsRecord,
}

impl From<&Point> for PointRecord {
    fn from(p: &Point) -> Self {
        let coords = match &p.coords {
            Coords::Vector(v) => CoordsRecord::Vector(v.as_slice().to_vec()),
            Coords::Matrix(m) => CoordsRecord::Matrix(m.as_sym().to_rows()),
        };
        PointRecord {
            manifold: p.spec,
            coords,
        }
    }
}

impl TryFrom<PointRecord> for Point {
    type Error = Error;

    fn try_from(r: PointRecord) -> Result<Point> {
        match (r.manifold.kind, r.coords) {
            (ManifoldKind::SpdCone, CoordsRecord::Matrix(rows)) => {
                let p = SpdMatrix::from_rows(&rows)?;
                if p.n() != r.manifold.n {
                    return Err(Error::Input("matrix order does not match manifold".into()));
                }
                Ok(Point::spd(p))
            }
            (ManifoldKind::SpdCone, CoordsRecord::Vector(_)) => {
                Err(Error::Input("SpdCone coordinates must be a matrix".into()))
            }
            (_, CoordsRecord::Vector(v)) => Point::vector(r.manifold, DVector::from_vec(v)),
            (_, CoordsRecord::Matrix(_)) => Err(Error::Input("vector manifold given a matrix".into())),
        }
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PointRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = PointRecord::deserialize(d)?;
        Point::try_from(r).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn spd_diag(d: &[f64]) -> Point {
        Point::spd(SpdMatrix::from_diagonal(d).unwrap())
    }

    #[test]
    fn dims() {
        assert_eq!(ManifoldSpec::euclidean(4).dim(), 4);
        assert_eq!(ManifoldSpec::orthant(3).dim(), 3);
        assert_eq!(ManifoldSpec::spd(3).dim(), 6);
    }

    #[test]
    fn metric_examples() {
        let p = Point::euclidean(&[0.3, -2.0]).unwrap();
        let u = Tangent::from_slice(&p, &[1.0, 0.0]).unwrap();
        let v = Tangent::from_slice(&p, &[0.0, 1.0]).unwrap();
        assert_eq!(metric_inner(&p, &u, &v).unwrap(), 0.0);

        let p = Point::orthant(&[1.0, 1.0, 1.0]).unwrap();
        let u = Tangent::from_slice(&p, &[1.0, 2.0, 3.0]).unwrap();
        let v = Tangent::from_slice(&p, &[-1.0, 0.5, 2.0]).unwrap();
        assert_relative_eq!(metric_inner(&p, &u, &v).unwrap(), -1.0 + 1.0 + 6.0);

        let p = Point::spd(SpdMatrix::identity(2));
        let u = Tangent::from_sym(&p, SymMatrix::identity(2)).unwrap();
        assert_relative_eq!(metric_inner(&p, &u, &u).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn metric_rejects_foreign_tangent() {
        let p = Point::orthant(&[1.0, 2.0]).unwrap();
        let q = Point::orthant(&[2.0, 2.0]).unwrap();
        let u = Tangent::from_slice(&q, &[1.0, 0.0]).unwrap();
        assert!(matches!(metric_inner(&p, &u, &u), Err(Error::Usage(_))));
        let r = Point::euclidean(&[1.0, 2.0]).unwrap();
        assert!(matches!(geodesic_point(&p, &r, 0.5), Err(Error::Usage(_))));
    }

    #[test]
    fn geodesic_examples() {
        let p = Point::euclidean(&[0.0, 2.0]).unwrap();
        let q = Point::euclidean(&[4.0, -2.0]).unwrap();
        let m = geodesic_point(&p, &q, 0.5).unwrap();
        assert_eq!(m.as_vector().unwrap().as_slice(), &[2.0, 0.0]);

        let p = Point::orthant(&[1.0, 0.5]).unwrap();
        let q = Point::orthant(&[0.5, 1.0]).unwrap();
        let m = geodesic_point(&p, &q, 0.5).unwrap();
        let s = 0.5f64.sqrt();
        assert_relative_eq!(m.as_vector().unwrap()[0], s, epsilon = 1e-15);
        assert_relative_eq!(m.as_vector().unwrap()[1], s, epsilon = 1e-15);
        assert_relative_eq!(
            m.as_vector().unwrap()[0],
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-15
        );

        let i = Point::spd(SpdMatrix::identity(2));
        let qm = SpdMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let q = Point::spd(qm.clone());
        for &t in &[0.0, 0.3, 1.0, 1.7] {
            let g = geodesic_point(&i, &q, t).unwrap();
            let want = spd_power(&qm, t).unwrap();
            assert!((g.as_spd().unwrap().as_matrix() - want.as_matrix()).norm() < 1e-13);
        }
    }

    #[test]
    fn exp_examples() {
        let p = Point::orthant(&[1.0, 1.0]).unwrap();
        let v = Tangent::from_slice(&p, &[1.0, 0.0]).unwrap();
        let q = exp_map(&p, &v, 1.0).unwrap();
        assert_relative_eq!(q.as_vector().unwrap()[0], E, epsilon = 1e-15);
        assert_relative_eq!(q.as_vector().unwrap()[1], 1.0);

        let zero = Tangent::zero(&p);
        assert_eq!(exp_map(&p, &zero, 3.0).unwrap(), p);

        let i = Point::spd(SpdMatrix::identity(2));
        let v = Tangent::from_sym(&i, SymMatrix::from_diagonal(&[1.0, 0.0]).unwrap()).unwrap();
        let q = exp_map(&i, &v, 1.0).unwrap();
        let qm = q.as_spd().unwrap().as_sym();
        assert_relative_eq!(qm.get(0, 0), E, epsilon = 1e-14);
        assert_relative_eq!(qm.get(1, 1), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn exp_velocity_matches_tangent() {
        let p = Point::spd(SpdMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap());
        let v = Tangent::from_sym(&p, SymMatrix::from_row_slice(2, &[0.5, -0.2, -0.2, 0.1]).unwrap()).unwrap();
        let h = 1e-5;
        let plus = exp_map(&p, &v, h).unwrap();
        let minus = exp_map(&p, &v, -h).unwrap();
        let fd = (plus.as_spd().unwrap().as_matrix() - minus.as_spd().unwrap().as_matrix()) / (2.0 * h);
        let TangentVec::Sym(vs) = v.vec() else { unreachable!() };
        assert!((fd - vs.as_matrix()).norm() < 1e-9);
    }

    #[test]
    fn log_examples() {
        let p = Point::orthant(&[1.0, 1.0]).unwrap();
        let z = log_map(&p, &p).unwrap();
        assert_eq!(z.to_frame().norm(), 0.0);
        let q = Point::orthant(&[E, 1.0]).unwrap();
        let v = log_map(&p, &q).unwrap();
        assert_relative_eq!(v.to_frame()[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(v.to_frame()[1], 0.0);

        let i = Point::spd(SpdMatrix::identity(2));
        let q = spd_diag(&[E * E, 1.0]);
        let v = log_map(&i, &q).unwrap();
        assert!((v.to_frame() - DVector::from_vec(vec![2.0, 0.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn distance_examples() {
        let p = Point::euclidean(&[0.0, 0.0]).unwrap();
        let q = Point::euclidean(&[1.0, 0.0]).unwrap();
        assert_eq!(distance(&p, &q).unwrap(), 1.0);
        let p = Point::orthant(&[1.0]).unwrap();
        let q = Point::orthant(&[E]).unwrap();
        assert_relative_eq!(distance(&p, &q).unwrap(), 1.0, epsilon = 1e-15);
        let p = spd_diag(&[1.0]);
        let q = spd_diag(&[E * E]);
        assert_relative_eq!(distance(&p, &q).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn spd_velocity_matches_finite_difference() {
        let p = Point::spd(SpdMatrix::from_rows(&[vec![1.5, 0.2], vec![0.2, 0.7]]).unwrap());
        let q = Point::spd(SpdMatrix::from_rows(&[vec![0.6, -0.1], vec![-0.1, 2.0]]).unwrap());
        let t = 0.37;
        let h = 1e-5;
        let a = geodesic_point(&p, &q, t + h).unwrap().to_frame();
        let b = geodesic_point(&p, &q, t - h).unwrap().to_frame();
        let fd = (a - b) / (2.0 * h);
        let v = geodesic_velocity(&p, &q, t).unwrap().to_frame();
        assert!((fd - v).norm() < 1e-8);
    }

    #[test]
    fn frame_round_trip_and_serde() {
        let p = Point::spd(
            SpdMatrix::from_rows(&[vec![2.0, 0.3, 0.0], vec![0.3, 1.0, -0.2], vec![0.0, -0.2, 1.0]]).unwrap(),
        );
        let x = p.to_frame();
        assert_eq!(x.as_slice(), &[2.0, 0.3, 0.0, 1.0, -0.2, 1.0]);
        assert_eq!(Point::from_frame(p.spec(), &x).unwrap(), p);

        let json = serde_json::to_string(&p).unwrap();
        let back: Point = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);

        assert!(Point::orthant(&[1.0, 0.0]).is_err());
        assert!(!ManifoldSpec::orthant(2).contains_frame(&DVector::from_vec(vec![1.0, -1.0])));
    }
}
