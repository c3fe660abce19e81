//! Covariance matrices, symplectic matrices and the spectral quantities built
//! on them.
//!
//! Units follow ħ = 1 with the vacuum covariance matrix equal to `I/2`, so a
//! covariance matrix `σ` is physical iff `σ + (i/2)Ω ⪰ 0`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Absolute tolerance for symmetry and symplecticity checks.
pub const TOL_SYM: f64 = 1e-10;
/// Tolerance on the smallest eigenvalue of `σ + (i/2)Ω`.
pub const TOL_POS: f64 = 1e-9;

/// Real symmetric matrix of even dimension `2N` holding the second moments of
/// an `N`-mode zero-mean Gaussian state, ordered `(q1, p1, q2, p2, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    /// Wraps `data` after checking it is square, even-dimensional and
    /// symmetric to [`TOL_SYM`]. The stored matrix is exactly symmetrized.
    ///
    /// Physicality is *not* checked here; see [`is_valid_cm`].
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        check_even_square(&data)?;
        let asym = max_abs_diff(&data, &data.transpose());
        if asym > TOL_SYM * scale(&data) {
            return Err(Error::Validity(format!(
                "covariance matrix is not symmetric (max |σ - σᵀ| = {asym:e})"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validity("covariance matrix has non-finite entries".into()));
        }
        Ok(Self(symmetrize(data)))
    }

    /// Like [`CovarianceMatrix::new`], additionally requiring physicality at
    /// tolerance `tol`.
    pub fn physical(data: DMatrix<f64>, tol: f64) -> Result<Self> {
        let cm = Self::new(data)?;
        if !cm.is_physical(tol) {
            return Err(Error::Validity(format!(
                "covariance matrix violates the uncertainty relation (min eig of σ + iΩ/2 = {:e})",
                min_uncertainty_eigenvalue(&cm.0)
            )));
        }
        Ok(cm)
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self(DMatrix::identity(2 * n_modes, 2 * n_modes) * 0.5)
    }

    /// Thermal state with mean occupation `occupation` in every mode.
    pub fn thermal(n_modes: usize, occupation: f64) -> Self {
        Self(DMatrix::identity(2 * n_modes, 2 * n_modes) * (occupation + 0.5))
    }

    /// `diag(a, b)`.
    pub fn direct_sum(a: &Self, b: &Self) -> Self {
        Self(block_diag(&a.0, &b.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn modes(&self) -> usize {
        self.0.nrows() / 2
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Square sub-block starting at `start` with side `len`.
    pub fn sub_block(&self, start: usize, len: usize) -> Result<Self> {
        if !start.is_multiple_of(2) || !len.is_multiple_of(2) || start + len > self.dim() {
            return Err(Error::Shape(format!(
                "block ({start}, {len}) does not select whole modes of a {}-dim matrix",
                self.dim()
            )));
        }
        Ok(Self(self.0.view((start, start), (len, len)).into_owned()))
    }

    /// Physicality with the tolerance scaled by `max(1, max|σ_ij|)`, which
    /// keeps the check meaningful for strongly amplified states.
    pub fn is_physical(&self, tol: f64) -> bool {
        min_uncertainty_eigenvalue(&self.0) >= -tol * scale(&self.0)
    }
}

impl AsRef<DMatrix<f64>> for CovarianceMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Real matrix `S` with `S Ω Sᵀ = Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix(DMatrix<f64>);

impl SymplecticMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        check_even_square(&data)?;
        let err = symplectic_defect(&data);
        if err > TOL_SYM {
            return Err(Error::Validity(format!(
                "matrix is not symplectic (max |SΩSᵀ - Ω| = {err:e})"
            )));
        }
        Ok(Self(data))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `S σ Sᵀ`.
    pub fn conjugate(&self, cm: &CovarianceMatrix) -> Result<CovarianceMatrix> {
        if cm.dim() != self.0.nrows() {
            return Err(Error::Shape(format!(
                "cannot apply a {}-dim symplectic matrix to a {}-dim covariance matrix",
                self.0.nrows(),
                cm.dim()
            )));
        }
        Ok(CovarianceMatrix(symmetrize(&self.0 * &cm.0 * self.0.transpose())))
    }
}

/// Block-diagonal `Ω` with `n_modes` copies of `[[0, 1], [-1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let dim = 2 * n_modes;
    let mut omega = DMatrix::zeros(dim, dim);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// `max |S Ω Sᵀ − Ω|`.
pub fn symplectic_defect(s: &DMatrix<f64>) -> f64 {
    let omega = symplectic_form(s.nrows() / 2);
    max_abs_diff(&(s * &omega * s.transpose()), &omega)
}

pub fn is_symplectic(s: &DMatrix<f64>, tol: f64) -> bool {
    s.is_square() && s.nrows().is_multiple_of(2) && symplectic_defect(s) <= tol
}

/// Smallest eigenvalue of the Hermitian matrix `σ + (i/2)Ω`.
pub fn min_uncertainty_eigenvalue(sigma: &DMatrix<f64>) -> f64 {
    let omega = symplectic_form(sigma.nrows() / 2);
    let m = DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |i, j| {
        Complex64::new(sigma[(i, j)], 0.5 * omega[(i, j)])
    });
    m.symmetric_eigenvalues().min()
}

/// True iff `σ` is symmetric to [`TOL_SYM`] and `σ + (i/2)Ω ⪰ -tol`.
pub fn is_valid_cm(sigma: &DMatrix<f64>, tol: f64) -> Result<bool> {
    check_even_square(sigma)?;
    if max_abs_diff(sigma, &sigma.transpose()) > TOL_SYM {
        return Ok(false);
    }
    Ok(min_uncertainty_eigenvalue(sigma) >= -tol)
}

/// Symplectic spectrum `ν_1 ≤ … ≤ ν_N`, the moduli of the eigenvalues of `iΩσ`.
pub fn symplectic_eigenvalues(sigma: &CovarianceMatrix) -> Result<Vec<f64>> {
    let tol = TOL_POS * scale(sigma.as_matrix());
    if !sigma.is_physical(TOL_POS) {
        return Err(Error::Validity(
            "symplectic spectrum requested for an unphysical covariance matrix".into(),
        ));
    }
    let n = sigma.modes();
    // eig(Ωσ) = ±iν, so eig(iΩσ) = ∓ν.
    let omega_sigma = symplectic_form(n) * sigma.as_matrix();
    let mut moduli: Vec<f64> = complex_spectrum(&omega_sigma)?
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(f64::total_cmp);
    let nus: Vec<f64> = moduli.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    if let Some(&smallest) = nus.first() {
        if smallest < 0.5 - tol {
            return Err(Error::Validity(format!(
                "symplectic eigenvalue {smallest} below 1/2"
            )));
        }
    }
    Ok(nus)
}

/// Entropy (nats) of a single mode with symplectic eigenvalue `nu`.
pub fn mode_entropy(nu: f64) -> f64 {
    let plus = nu + 0.5;
    let minus = nu - 0.5;
    let mut h = plus * plus.ln();
    if minus > 0.0 {
        h -= minus * minus.ln();
    }
    h.max(0.0)
}

/// Von Neumann entropy (nats) of the Gaussian state with covariance `sigma`.
pub fn gaussian_entropy(sigma: &CovarianceMatrix) -> Result<f64> {
    Ok(symplectic_eigenvalues(sigma)?
        .into_iter()
        .map(mode_entropy)
        .sum())
}

/// Sum of the absolute values of the negative eigenvalues of a Hermitian
/// matrix.
pub fn hermitian_negativity(m: &DMatrix<Complex64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    let norm = m.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let defect = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if defect > TOL_SYM * norm {
        return Err(Error::Shape(format!("matrix is not Hermitian (defect {defect:e})")));
    }
    Ok(m.symmetric_eigenvalues()
        .iter()
        .map(|&ev| 0.5 * (ev.abs() - ev))
        .sum())
}

/// Eigenvalues of a real square matrix through a bounded Schur iteration.
///
/// Highly degenerate spectra (Kronecker squares) can stall the QR sweep at
/// machine-epsilon deflation, so the deflation threshold is relaxed in steps.
pub fn complex_spectrum(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    for eps in [f64::EPSILON, 1e-15, 1e-14, 1e-13] {
        if let Some(schur) = m.clone().try_schur(eps, SCHUR_MAX_ITER) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::Domain("Schur iteration did not converge".into()))
}

const SCHUR_MAX_ITER: usize = 10_000;

pub(crate) fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `max(1, max |m_ij|)`
pub(crate) fn scale(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).fold(1.0, f64::max)
}

fn check_even_square(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    if m.nrows() == 0 || !m.nrows().is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "dimension {} is not a positive even number",
            m.nrows()
        )));
    }
    Ok(())
}
