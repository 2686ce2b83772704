//! Seeded random generators for points, matrices and operators.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::matfun::{sym_eig, sym_exp, SpdMatrix, SymMatrix};

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random symmetric matrix with spectral radius exactly `radius`.
pub fn symmetric_with_radius<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> SymMatrix {
    let g = gaussian_matrix(rng, n, n);
    let s = SymMatrix::new(&g + g.transpose()).expect("finite gaussian matrix");
    let eig = sym_eig(&s).expect("finite");
    let rho = eig.values.amax();
    if rho == 0.0 {
        return SymMatrix::zeros(n);
    }
    s.scale(radius / rho)
}

/// `exp(S)` for a random symmetric `S` with spectral radius uniform in
/// `[0, max_radius]`. The condition number is at most `exp(2·max_radius)`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, max_radius: f64) -> SpdMatrix {
    let r = rng.random_range(0.0..=max_radius);
    sym_exp(&symmetric_with_radius(rng, n, r)).expect("bounded spectrum")
}

/// Random SPD matrix with condition number at most `max_condition`.
pub fn random_spd_with_condition<R: Rng + ?Sized>(rng: &mut R, n: usize, max_condition: f64) -> SpdMatrix {
    random_spd(rng, n, 0.5 * max_condition.ln())
}

pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> SymMatrix {
    let g = gaussian_matrix(rng, n, n);
    SymMatrix::new((&g + g.transpose()) * (0.5 * scale)).expect("finite")
}

pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

/// Random orthogonal matrix (QR of a Gaussian matrix).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, n).qr().q()
}

/// Dirichlet(1, …, 1) sample of length `k`.
pub fn uniform_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -rng.random_range(f64::MIN_POSITIVE..1.0).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}
