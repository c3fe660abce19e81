//! Fixed points and asymptotic stability of `γⁿ⁺¹ = XγⁿXᵀ + Y`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::collision::EmbeddingChannel;
use crate::divisibility::condition_number;
use crate::error::{Error, Result};
use crate::kernel::{unvec, vec};
use crate::symplectic::{complex_spectrum, max_abs_diff, scale, symmetrize, CovarianceMatrix};

/// Width of the band around spectral radius 1 reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-8;

/// Largest admissible condition number of `I − X⊗X`.
pub const FIXED_POINT_KAPPA_MAX: f64 = 1e12;

/// Solves `vec γ* = (I − X⊗X)⁻¹ vec Y`.
pub fn fixed_point(ch: &EmbeddingChannel) -> Result<CovarianceMatrix> {
    let d = ch.dim();
    let lhs = DMatrix::<f64>::identity(d * d, d * d) - ch.x().kronecker(ch.x());
    let condition = condition_number(&lhs);
    if condition.is_nan() || condition > FIXED_POINT_KAPPA_MAX {
        return Err(Error::NoFixedPoint(format!(
            "I - X⊗X is singular or ill-conditioned (condition {condition:e})"
        )));
    }
    let v = lhs
        .lu()
        .solve(&vec(ch.y()))
        .ok_or_else(|| Error::NoFixedPoint("I - X⊗X is singular".into()))?;
    let gamma = symmetrize(unvec(&v, d, d)?);
    let residual = max_abs_diff(&ch.apply(&gamma), &gamma);
    if residual > 1e-9 * scale(&gamma) {
        return Err(Error::NoFixedPoint(format!("fixed-point residual {residual:e}")));
    }
    CovarianceMatrix::new(gamma)
}

/// Eigenvalues of a real square matrix, sorted by decreasing modulus, then
/// real part, then imaginary part.
pub fn eigenvalues(x: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let mut evs = complex_spectrum(x)?;
    sort_spectrum(&mut evs);
    Ok(evs)
}

fn sort_spectrum(evs: &mut [Complex64]) {
    evs.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
}

pub fn spectral_radius(x: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(x)?.first().map_or(0.0, |z| z.norm()))
}

/// `max_k |eig_k(X)| < 1 − tol`.
pub fn is_gas(x: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(spectral_radius(x)? < 1.0 - tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    Gas,
    Marginal,
    Unstable,
}

impl StabilityClass {
    pub fn from_radius(rho: f64, tol: f64) -> Self {
        if (rho - 1.0).abs() <= MARGINAL_BAND {
            StabilityClass::Marginal
        } else if rho < 1.0 - tol {
            StabilityClass::Gas
        } else {
            StabilityClass::Unstable
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StabilityClass::Gas => "gas",
            StabilityClass::Marginal => "marginal",
            StabilityClass::Unstable => "unstable",
        }
    }
}

/// `(x(1−w) ± √(x²(1−w)² + 4w))/2` with `x = cos λ_s`, `w = sin λ_e`.
///
/// Each value occurs twice in the spectrum of `X`. The discriminant can be
/// negative, so the pair is returned as complex numbers.
pub fn bs_eigenvalues(lambda_s: f64, lambda_e: f64) -> [Complex64; 2] {
    let x = lambda_s.cos();
    let w = lambda_e.sin();
    let disc = Complex64::new(x * x * (1.0 - w).powi(2) + 4.0 * w, 0.0).sqrt();
    let tr = Complex64::new(x * (1.0 - w), 0.0);
    [(tr + disc) * 0.5, (tr - disc) * 0.5]
}

/// `((1+w̃)x ± √((1−w̃)²x² − 4w̃y²))/2` and `((1−w̃)x ± √((1+w̃)²x² + 4w̃y²))/2`
/// with `w̃ = sinh ν_e`.
pub fn tms_eigenvalues(lambda_s: f64, nu_e: f64) -> [Complex64; 4] {
    let x = lambda_s.cos();
    let y = lambda_s.sin();
    let w = nu_e.sinh();
    let root = |v: f64| Complex64::new(v, 0.0).sqrt();
    let dq = root((1.0 - w).powi(2) * x * x - 4.0 * w * y * y);
    let dp = root((1.0 + w).powi(2) * x * x + 4.0 * w * y * y);
    let tq = Complex64::new((1.0 + w) * x, 0.0);
    let tp = Complex64::new((1.0 - w) * x, 0.0);
    [(tq + dq) * 0.5, (tq - dq) * 0.5, (tp + dp) * 0.5, (tp - dp) * 0.5]
}

/// `ν_e^crit = asinh(1)`.
pub fn tms_critical() -> f64 {
    1f64.asinh()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub eigenvalues: Vec<Complex64>,
    pub spectral_radius: f64,
    pub class: StabilityClass,
    pub is_gas: bool,
    pub fixed_point: Option<CovarianceMatrix>,
    /// `ρ(X) − 1`.
    pub critical_distance: f64,
    pub critical_flag: bool,
}

pub fn analyze(ch: &EmbeddingChannel, tol: f64) -> Result<StabilityReport> {
    let eigenvalues = eigenvalues(ch.x())?;
    let rho = eigenvalues.first().map_or(0.0, |z| z.norm());
    let class = StabilityClass::from_radius(rho, tol);
    let fixed_point = match fixed_point(ch) {
        Ok(fp) => Some(fp),
        Err(Error::NoFixedPoint(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(StabilityReport {
        eigenvalues,
        spectral_radius: rho,
        class,
        is_gas: class == StabilityClass::Gas,
        fixed_point,
        critical_distance: rho - 1.0,
        critical_flag: class == StabilityClass::Marginal,
    })
}
