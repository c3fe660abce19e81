//! Exact memory kernel of the reduced system dynamics.
//!
//! Vectorizing `γⁿ⁺¹ = XγⁿXᵀ + Y` gives `vec γⁿ⁺¹ = (X⊗X) vec γⁿ + vec Y`.
//! Splitting with the projector `P = P_S ⊗ P_S` onto the system block and its
//! complement `Q`, then eliminating the `Q` part, yields
//!
//! ```text
//! θⁿ⁺¹ = X₁₁ θⁿ X₁₁ᵀ + Σ_{r<n} K_{n−r−1}(θʳ) + G_n
//! K̂_n  = π (X⊗X) Q [Q (X⊗X) Q]ⁿ Q (X⊗X) πᵀ
//! ```
//!
//! where `π` extracts `vec θ` from `vec γ`. `K_n(θ) = Σ_ij κ_ij^n M_i θ M_jᵀ`
//! is the same kernel expanded in an orthogonal matrix basis `{M_i}`.

use nalgebra::{DMatrix, DVector};

use crate::collision::{build_embedding, EmbeddedState, EmbeddingChannel, ModelSpec};
use crate::error::{Error, Result};
use crate::symplectic::{max_abs_diff, symmetrize, CovarianceMatrix};

/// Column-stacking vectorization.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra storage is column-major.
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::Shape(format!(
            "cannot unvec a length-{} vector into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Projectors and the system selector used in the kernel construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorizationContext {
    pub system_modes: usize,
    pub ancilla_modes: usize,
    /// `P_S`, projector onto the system rows of `γ`.
    pub p_s: DMatrix<f64>,
    /// `P_E`, projector onto the ancilla rows of `γ`.
    pub p_e: DMatrix<f64>,
    /// `P = P_S ⊗ P_S`.
    pub p: DMatrix<f64>,
    /// `Q = I − P`.
    pub q: DMatrix<f64>,
    /// `π`, with `π vec(γ) = vec(θ)`.
    pub pi: DMatrix<f64>,
}

impl VectorizationContext {
    pub fn new(system_modes: usize, ancilla_modes: usize) -> Result<Self> {
        if system_modes == 0 || ancilla_modes == 0 {
            return Err(Error::Dimension("mode counts must be positive".into()));
        }
        let s = 2 * system_modes;
        let d = s + 2 * ancilla_modes;
        let p_s = DMatrix::from_fn(d, d, |i, j| if i == j && i < s { 1.0 } else { 0.0 });
        let p_e = DMatrix::<f64>::identity(d, d) - &p_s;
        let p = p_s.kronecker(&p_s);
        let q = DMatrix::<f64>::identity(d * d, d * d) - &p;
        let mut pi = DMatrix::zeros(s * s, d * d);
        for col in 0..s {
            for row in 0..s {
                pi[(row + col * s, row + col * d)] = 1.0;
            }
        }
        Ok(Self { system_modes, ancilla_modes, p_s, p_e, p, q, pi })
    }

    pub fn system_dim(&self) -> usize {
        2 * self.system_modes
    }

    pub fn embedded_dim(&self) -> usize {
        2 * (self.system_modes + self.ancilla_modes)
    }

    fn check_x(&self, x: &DMatrix<f64>) -> Result<()> {
        let d = self.embedded_dim();
        if x.shape() != (d, d) {
            return Err(Error::Shape(format!(
                "X is {}x{}, expected {d}x{d}",
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(())
    }
}

pub fn build_context(system_modes: usize, ancilla_modes: usize) -> Result<VectorizationContext> {
    VectorizationContext::new(system_modes, ancilla_modes)
}

/// Ordered matrix basis, orthogonal under `(A|B) = tr(AᵀB)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBasis {
    labels: Vec<String>,
    elements: Vec<DMatrix<f64>>,
}

impl MatrixBasis {
    pub fn new(labels: Vec<String>, elements: Vec<DMatrix<f64>>) -> Result<Self> {
        let dim = elements.first().map(|m| m.nrows()).unwrap_or(0);
        if dim == 0 || labels.len() != elements.len() {
            return Err(Error::Basis("basis must be non-empty with one label per element".into()));
        }
        if elements.iter().any(|m| m.shape() != (dim, dim)) {
            return Err(Error::Basis("basis elements must be square of equal size".into()));
        }
        if elements.len() != dim * dim {
            return Err(Error::Basis(format!(
                "{} elements cannot span {dim}x{dim} matrices",
                elements.len()
            )));
        }
        for (i, a) in elements.iter().enumerate() {
            let norm_a = a.norm_squared();
            if norm_a <= 1e-12 {
                return Err(Error::Basis(format!("basis element {i} vanishes")));
            }
            for (j, b) in elements.iter().enumerate().skip(i + 1) {
                let overlap = a.dot(b);
                if overlap.abs() > 1e-12 * (norm_a * b.norm_squared()).sqrt() {
                    return Err(Error::Basis(format!(
                        "elements {i} and {j} are not orthogonal (overlap {overlap:e})"
                    )));
                }
            }
        }
        Ok(Self { labels, elements })
    }

    /// `{I, σ_z, σ₊, σ₋}`.
    pub fn pauli() -> Self {
        let m = |v: [f64; 4]| DMatrix::from_row_slice(2, 2, &v);
        Self {
            labels: ["1", "z", "+", "-"].iter().map(|s| s.to_string()).collect(),
            elements: vec![
                m([1., 0., 0., 1.]),
                m([1., 0., 0., -1.]),
                m([0., 1., 0., 0.]),
                m([0., 0., 1., 0.]),
            ],
        }
    }

    /// Elementary matrices `E_ab` with label `"ea_b"`.
    pub fn matrix_units(dim: usize) -> Self {
        let mut labels = Vec::with_capacity(dim * dim);
        let mut elements = Vec::with_capacity(dim * dim);
        for a in 0..dim {
            for b in 0..dim {
                labels.push(format!("e{a}_{b}"));
                elements.push(DMatrix::from_fn(dim, dim, |i, j| if (i, j) == (a, b) { 1.0 } else { 0.0 }));
            }
        }
        Self { labels, elements }
    }

    /// Pauli basis for a single mode, matrix units otherwise.
    pub fn default_for(system_dim: usize) -> Self {
        if system_dim == 2 {
            Self::pauli()
        } else {
            Self::matrix_units(system_dim)
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn elements(&self) -> &[DMatrix<f64>] {
        &self.elements
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// `κ_ij`, stored with `i` as row and `j` as column.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausCoefficients(pub DMatrix<f64>);

impl KrausCoefficients {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }
}

/// `κ_ij = tr[(M_jᵀ ⊗ M_iᵀ) K̂] / (tr(M_iᵀM_i) tr(M_jᵀM_j))`.
pub fn kraus_coefficients(kernel: &DMatrix<f64>, basis: &MatrixBasis) -> Result<KrausCoefficients> {
    let dim = basis.dim();
    if kernel.shape() != (dim * dim, dim * dim) {
        return Err(Error::Shape(format!(
            "kernel is {}x{}, basis expects {}",
            kernel.nrows(),
            kernel.ncols(),
            dim * dim
        )));
    }
    let n = basis.len();
    let els = basis.elements();
    let norms: Vec<f64> = els.iter().map(|m| m.norm_squared()).collect();
    let coeffs = DMatrix::from_fn(n, n, |i, j| {
        // tr(Aᵀ K) = Σ A ∘ K
        let probe = els[j].kronecker(&els[i]);
        probe.dot(kernel) / (norms[i] * norms[j])
    });
    Ok(KrausCoefficients(coeffs))
}

/// `Σ_ij κ_ij (M_j ⊗ M_i)`.
pub fn kernel_from_coefficients(coeffs: &KrausCoefficients, basis: &MatrixBasis) -> DMatrix<f64> {
    let els = basis.elements();
    let dim = basis.dim();
    let mut out = DMatrix::zeros(dim * dim, dim * dim);
    for i in 0..els.len() {
        for j in 0..els.len() {
            let c = coeffs.get(i, j);
            if c != 0.0 {
                out += els[j].kronecker(&els[i]) * c;
            }
        }
    }
    out
}

/// `K(θ) = Σ_ij κ_ij M_i θ M_jᵀ`.
pub fn apply_kraus(coeffs: &KrausCoefficients, basis: &MatrixBasis, theta: &DMatrix<f64>) -> DMatrix<f64> {
    let els = basis.elements();
    let mut out = DMatrix::zeros(theta.nrows(), theta.ncols());
    for (i, mi) in els.iter().enumerate() {
        let left = mi * theta;
        for (j, mj) in els.iter().enumerate() {
            let c = coeffs.get(i, j);
            if c != 0.0 {
                out += &left * mj.transpose() * c;
            }
        }
    }
    out
}

/// Kernel matrices `K̂_0 … K̂_{n_max}` with their Kraus coefficients.
#[derive(Debug, Clone)]
pub struct KernelSeries {
    pub kernel_matrices: Vec<DMatrix<f64>>,
    pub coefficients: Vec<KrausCoefficients>,
    pub basis: MatrixBasis,
}

impl KernelSeries {
    pub fn compute(
        x: &DMatrix<f64>,
        ctx: &VectorizationContext,
        n_max: usize,
        basis: MatrixBasis,
    ) -> Result<Self> {
        if basis.dim() != ctx.system_dim() {
            return Err(Error::Basis(format!(
                "basis of {}x{} matrices for a {}-dim system",
                basis.dim(),
                basis.dim(),
                ctx.system_dim()
            )));
        }
        let kernel_matrices = kernel_matrices(x, ctx, n_max)?;
        let coefficients = kernel_matrices
            .iter()
            .map(|k| kraus_coefficients(k, &basis))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { kernel_matrices, coefficients, basis })
    }

    pub fn for_channel(ch: &EmbeddingChannel, n_max: usize) -> Result<Self> {
        let ctx = VectorizationContext::new(ch.system_dim() / 2, ch.ancilla_dim() / 2)?;
        Self::compute(ch.x(), &ctx, n_max, MatrixBasis::default_for(ch.system_dim()))
    }

    pub fn len(&self) -> usize {
        self.kernel_matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel_matrices.is_empty()
    }

    /// `K_n(θ)` through the Kraus expansion.
    pub fn apply(&self, n: usize, theta: &DMatrix<f64>) -> DMatrix<f64> {
        apply_kraus(&self.coefficients[n], &self.basis, theta)
    }
}

fn kernel_matrices(x: &DMatrix<f64>, ctx: &VectorizationContext, n_max: usize) -> Result<Vec<DMatrix<f64>>> {
    ctx.check_x(x)?;
    let xx = x.kronecker(x);
    let qxxq = &ctx.q * &xx * &ctx.q;
    let left = &ctx.pi * &xx * &ctx.q;
    // right_n = [Q(X⊗X)Q]ⁿ Q(X⊗X)πᵀ
    let mut right = &ctx.q * &xx * ctx.pi.transpose();
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        out.push(&left * &right);
        if n < n_max {
            right = &qxxq * right;
        }
    }
    Ok(out)
}

/// `K̂_n`, a `(2N_S)² × (2N_S)²` matrix depending on `X` only.
pub fn mk_matrix(x: &DMatrix<f64>, ctx: &VectorizationContext, n: usize) -> Result<DMatrix<f64>> {
    Ok(kernel_matrices(x, ctx, n)?.pop().expect("n_max + 1 entries"))
}

/// `G_0 … G_{n_max}`, the contributions of the initial ancilla data.
pub fn inhomogeneous_series(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ctx: &VectorizationContext,
    gamma0: &DMatrix<f64>,
    n_max: usize,
) -> Result<Vec<DMatrix<f64>>> {
    ctx.check_x(x)?;
    let d = ctx.embedded_dim();
    if y.shape() != (d, d) || gamma0.shape() != (d, d) {
        return Err(Error::Shape(format!("Y and γ⁰ must be {d}x{d}")));
    }
    let s = ctx.system_dim();
    let xx = x.kronecker(x);
    let qxx = &ctx.q * &xx;
    let left = &ctx.pi * &xx;
    let vy = vec(y);
    // h_n = [Q(X⊗X)]ⁿ Q vec γ⁰ + Σ_{r<n} [Q(X⊗X)]^{n−r−1} vec Y
    let mut h = &ctx.q * vec(gamma0);
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        out.push(unvec(&(&left * &h), s, s)?);
        if n < n_max {
            h = &qxx * h + &vy;
        }
    }
    Ok(out)
}

/// `G_n = unvec(π 𝒢_n)`.
pub fn inhomogeneous_term(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ctx: &VectorizationContext,
    gamma0: &DMatrix<f64>,
    n: usize,
) -> Result<DMatrix<f64>> {
    Ok(inhomogeneous_series(x, y, ctx, gamma0, n)?.pop().expect("n + 1 entries"))
}

/// System trajectory `θ⁰ … θ^{n_max}` rebuilt from the memory-kernel
/// recurrence alone.
pub fn reconstruct_trajectory(spec: &ModelSpec, n_max: usize) -> Result<Vec<DMatrix<f64>>> {
    let ch = build_embedding(spec)?;
    let gamma0 = EmbeddedState::initial(spec).gamma;
    reconstruct_from_channel(&ch, &gamma0, n_max)
}

pub fn reconstruct_from_channel(
    ch: &EmbeddingChannel,
    gamma0: &CovarianceMatrix,
    n_max: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let s = ch.system_dim();
    let ctx = VectorizationContext::new(s / 2, ch.ancilla_dim() / 2)?;
    let series = KernelSeries::compute(ch.x(), &ctx, n_max.saturating_sub(1), MatrixBasis::default_for(s))?;
    let g = inhomogeneous_series(ch.x(), ch.y(), &ctx, gamma0.as_matrix(), n_max)?;
    let x11 = ch.x11();
    let mut thetas = vec![gamma0.as_matrix().view((0, 0), (s, s)).into_owned()];
    for n in 0..n_max {
        let mut next = &x11 * &thetas[n] * x11.transpose() + &g[n];
        for (r, theta_r) in thetas.iter().enumerate().take(n) {
            next += series.apply(n - r - 1, theta_r);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { step: n + 1 });
        }
        thetas.push(symmetrize(next));
    }
    Ok(thetas)
}

/// `κ₁₁ⁿ = ⟨00| χ̄ Q̄ (Q̄ χ̄ Q̄)ⁿ Q̄ χ̄ |00⟩` of the BS model, using only
/// four-dimensional objects: `χ = [[x, y], [yw, −xw]]`, `χ̄ = χ⊗χ`,
/// `Q̄ = I − p⊗p`, `p = |0⟩⟨0|`.
pub fn bs_compact_kernel(lambda_s: f64, lambda_e: f64, n: usize) -> f64 {
    let (x, y, w) = (lambda_s.cos(), lambda_s.sin(), lambda_e.sin());
    let chi = DMatrix::from_row_slice(2, 2, &[x, y, y * w, -x * w]);
    let chi2 = chi.kronecker(&chi);
    let mut q = DMatrix::<f64>::identity(4, 4);
    q[(0, 0)] = 0.0;
    let qcq = &q * &chi2 * &q;
    let mut v = &q * chi2.column(0);
    for _ in 0..n {
        v = &qcq * v;
    }
    chi2.row(0).dot(&(&q * v).transpose())
}

/// Memory kernels of `⟨Q²⟩` and `⟨P²⟩`:
/// `κ_q = κ₁₁ + κ₁z + κz1 + κzz`, `κ_p = κ₁₁ − κ₁z − κz1 + κzz`.
pub fn tms_qp_kernels(coeffs: &KrausCoefficients, basis: &MatrixBasis) -> Result<(f64, f64)> {
    let (one, z) = match (basis.index_of("1"), basis.index_of("z")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Basis("basis lacks the identity and σ_z elements".into())),
    };
    let k11 = coeffs.get(one, one);
    let k1z = coeffs.get(one, z);
    let kz1 = coeffs.get(z, one);
    let kzz = coeffs.get(z, z);
    Ok((k11 + k1z + kz1 + kzz, k11 - k1z - kz1 + kzz))
}

/// Largest deviation between a reconstructed trajectory and reference states.
pub fn max_trajectory_error(reconstructed: &[DMatrix<f64>], reference: &[DMatrix<f64>]) -> f64 {
    reconstructed
        .iter()
        .zip(reference)
        .map(|(a, b)| max_abs_diff(a, b))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::evolve;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn vec_stacks_columns() {
        let m = mat(2, 2, &[1., 2., 3., 4.]);
        assert_eq!(vec(&m).as_slice(), &[1., 3., 2., 4.]);
        assert_eq!(unvec(&vec(&m), 2, 2).unwrap(), m);
        assert!(matches!(unvec(&vec(&m), 3, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn selector_matches_layout() {
        let ctx = build_context(1, 1).unwrap();
        let mut expected = DMatrix::zeros(4, 16);
        for (row, col) in [(0, 0), (1, 1), (2, 4), (3, 5)] {
            expected[(row, col)] = 1.0;
        }
        assert_eq!(ctx.pi, expected);
        let pe = ctx.p_e.kronecker(&ctx.p_e);
        assert_ne!(ctx.q, pe);
    }

    #[test]
    fn context_invariants() {
        for (ns, ne) in [(1, 1), (1, 2), (2, 1)] {
            let ctx = build_context(ns, ne).unwrap();
            let id = DMatrix::<f64>::identity(ctx.p.nrows(), ctx.p.nrows());
            assert_eq!(&ctx.p * &ctx.p, ctx.p);
            assert_eq!(&ctx.q * &ctx.q, ctx.q);
            assert_eq!(&ctx.p + &ctx.q, id);
            assert_eq!((&ctx.p * &ctx.q).amax(), 0.0);
            let s2 = ctx.system_dim().pow(2);
            assert_eq!(&ctx.pi * ctx.pi.transpose(), DMatrix::<f64>::identity(s2, s2));
            assert_eq!(ctx.pi.transpose() * &ctx.pi, ctx.p);
            assert_eq!(&ctx.p_s + &ctx.p_e, DMatrix::<f64>::identity(ctx.embedded_dim(), ctx.embedded_dim()));
        }
    }

    #[test]
    fn selector_extracts_system_block() {
        let ctx = build_context(1, 1).unwrap();
        let theta = mat(2, 2, &[2.0, 0.3, 0.3, 1.1]);
        let eps = mat(2, 2, &[0.9, -0.2, -0.2, 0.7]);
        let gamma = crate::symplectic::block_diag(&theta, &eps);
        assert_eq!(&ctx.pi * vec(&gamma), vec(&theta));
    }

    #[test]
    fn markovian_bs_kernel_vanishes() {
        let ch = build_embedding(&ModelSpec::beam_splitter(0.8, 0.0)).unwrap();
        let ctx = build_context(1, 1).unwrap();
        for n in 0..10 {
            assert!(mk_matrix(ch.x(), &ctx, n).unwrap().amax() < 1e-15);
        }
    }

    #[test]
    fn full_swap_kernel_at_zero() {
        let ctx = build_context(1, 1).unwrap();
        for le in [-1.2, -0.4, 0.3, 0.9, 1.5] {
            let ch = build_embedding(&ModelSpec::beam_splitter(PI / 2.0, le)).unwrap();
            let k0 = kraus_coefficients(&mk_matrix(ch.x(), &ctx, 0).unwrap(), &MatrixBasis::pauli()).unwrap();
            assert_abs_diff_eq!(k0.get(0, 0), f64::sin(le).powi(2), epsilon = 1e-14);
        }
    }

    #[test]
    fn kernel_at_zero_matches_symbolic_form() {
        // κ₁₁⁰ = (x² + w y²)² − x⁴
        let ctx = build_context(1, 1).unwrap();
        for (ls, le) in [(0.5, 0.3), (1.1, -0.7), (-2.2, 2.5)] {
            let (x, y, w) = (f64::cos(ls), f64::sin(ls), f64::sin(le));
            let ch = build_embedding(&ModelSpec::beam_splitter(ls, le)).unwrap();
            let k0 = kraus_coefficients(&mk_matrix(ch.x(), &ctx, 0).unwrap(), &MatrixBasis::pauli()).unwrap();
            assert_abs_diff_eq!(k0.get(0, 0), (x * x + w * y * y).powi(2) - x.powi(4), epsilon = 1e-14);
        }
    }

    #[test]
    fn basis_validation() {
        let m = |v: [f64; 4]| mat(2, 2, &v);
        let skew = MatrixBasis::new(
            ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect(),
            vec![m([1., 0., 0., 1.]), m([1., 0., 0., 0.]), m([0., 1., 0., 0.]), m([0., 0., 1., 0.])],
        );
        assert!(matches!(skew, Err(Error::Basis(_))));
        let short = MatrixBasis::new(vec!["a".into()], vec![m([1., 0., 0., 1.])]);
        assert!(matches!(short, Err(Error::Basis(_))));
        let pauli = MatrixBasis::pauli();
        assert!(MatrixBasis::new(pauli.labels().to_vec(), pauli.elements().to_vec()).is_ok());
        assert!(MatrixBasis::new(
            MatrixBasis::matrix_units(4).labels().to_vec(),
            MatrixBasis::matrix_units(4).elements().to_vec()
        )
        .is_ok());
    }

    #[test]
    fn qp_kernels_of_zero() {
        let zero = KrausCoefficients(DMatrix::zeros(4, 4));
        assert_eq!(tms_qp_kernels(&zero, &MatrixBasis::pauli()).unwrap(), (0.0, 0.0));
        assert!(tms_qp_kernels(&zero, &MatrixBasis::matrix_units(2)).is_err());
    }

    #[test]
    fn compact_kernel_markovian_and_sign_structure() {
        for n in 0..20 {
            assert_eq!(bs_compact_kernel(0.5, 0.0, n), 0.0);
        }
        // λ_s = 0.05, λ_e < 0: negative over the first thirty steps.
        for le in [-0.3, -0.8, -1.2] {
            for n in 0..30 {
                assert!(bs_compact_kernel(0.05, le, n) < 0.0, "le={le} n={n}");
            }
        }
        // λ_s = 0.5, λ_e > 0: sign changes with a decaying envelope.
        let ks: Vec<f64> = (0..60).map(|n| bs_compact_kernel(0.5, 1.1, n)).collect();
        assert!(ks.windows(2).any(|w| w[0] * w[1] < 0.0));
        let head = ks[..10].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tail = ks[50..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(tail < 1e-2 * head);
    }

    #[test]
    fn g_independent_of_theta0() {
        let spec = ModelSpec::two_mode_squeezing(0.6, 0.4);
        let ch = build_embedding(&spec).unwrap();
        let ctx = build_context(1, 1).unwrap();
        let eps = DMatrix::<f64>::identity(2, 2) * 0.5;
        let g_a = crate::symplectic::block_diag(&mat(2, 2, &[3.0, 0.2, 0.2, 1.0]), &eps);
        let g_b = crate::symplectic::block_diag(&(DMatrix::identity(2, 2) * 20.5), &eps);
        for n in [0, 1, 5, 17] {
            let a = inhomogeneous_term(ch.x(), ch.y(), &ctx, &g_a, n).unwrap();
            let b = inhomogeneous_term(ch.x(), ch.y(), &ctx, &g_b, n).unwrap();
            assert!(max_abs_diff(&a, &b) < 1e-13);
        }
    }

    #[test]
    fn markovian_g_is_pure_noise() {
        // λ_e = 0: G_0 = X₁₂ ε X₁₂ᵀ and G_n = y² z² ε afterwards; no kernel part.
        let ls = 0.7f64;
        let ch = build_embedding(&ModelSpec::beam_splitter(ls, 0.0)).unwrap();
        let ctx = build_context(1, 1).unwrap();
        let gamma0 = crate::symplectic::block_diag(&(DMatrix::identity(2, 2) * 4.0), &(DMatrix::identity(2, 2) * 0.5));
        let g = inhomogeneous_series(ch.x(), ch.y(), &ctx, &gamma0, 6).unwrap();
        for gn in g {
            assert!(max_abs_diff(&gn, &(DMatrix::identity(2, 2) * (0.5 * ls.sin().powi(2)))) < 1e-15);
        }
    }

    #[test]
    fn lambda_s_zero_trajectory_is_constant() {
        let theta0 = CovarianceMatrix::new(mat(2, 2, &[5.0, 0.5, 0.5, 2.0])).unwrap();
        let spec = ModelSpec::beam_splitter(0.0, 0.9).with_system_init(theta0.clone());
        for th in reconstruct_trajectory(&spec, 20).unwrap() {
            assert!(max_abs_diff(&th, theta0.as_matrix()) < 1e-13);
        }
    }

    #[test]
    fn reconstruction_matches_evolution_for_paper_models() {
        for spec in [
            ModelSpec::beam_splitter(0.5, 1.1),
            ModelSpec::two_mode_squeezing(0.1, 0.5),
        ] {
            let spec = spec.with_system_init(CovarianceMatrix::thermal(1, 20.0));
            let rec = reconstruct_trajectory(&spec, 50).unwrap();
            let reference: Vec<_> = evolve(&spec, 50).unwrap().iter().map(|s| s.theta().into_inner()).collect();
            assert!(max_trajectory_error(&rec, &reference) <= 1e-8);
        }
    }

    #[test]
    fn multimode_reconstruction() {
        let spec = ModelSpec {
            system_modes: 1,
            ancilla_modes: 2,
            system_coupling: crate::collision::SystemCoupling::General(crate::collision::CollisionBlocks {
                // partial SWAP between the system and the first ancilla mode
                a: DMatrix::identity(2, 2) * 0.6f64.cos(),
                b: {
                    let mut b = DMatrix::zeros(2, 4);
                    b.view_mut((0, 0), (2, 2)).copy_from(&(DMatrix::identity(2, 2) * 0.6f64.sin()));
                    b
                },
                c: {
                    let mut c = DMatrix::zeros(4, 2);
                    c.view_mut((0, 0), (2, 2)).copy_from(&(DMatrix::identity(2, 2) * -0.6f64.sin()));
                    c
                },
                d: {
                    let mut d = DMatrix::identity(4, 4);
                    d.view_mut((0, 0), (2, 2)).copy_from(&(DMatrix::identity(2, 2) * 0.6f64.cos()));
                    d
                },
            }),
            ancilla_coupling: crate::collision::AncillaCoupling::TwoModeSqueezing { nu_e: 0.3 },
            ancilla_state: CovarianceMatrix::vacuum(2),
            system_init: CovarianceMatrix::thermal(1, 3.0),
        };
        let rec = reconstruct_trajectory(&spec, 30).unwrap();
        let reference: Vec<_> = evolve(&spec, 30).unwrap().iter().map(|s| s.theta().into_inner()).collect();
        assert!(max_trajectory_error(&rec, &reference) <= 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn vec_product_identity(v in proptest::collection::vec(-2.0f64..2.0, 12)) {
            let a = mat(2, 2, &v[0..4]);
            let b = mat(2, 2, &v[4..8]);
            let c = mat(2, 2, &v[8..12]);
            let lhs = vec(&(&a * &b * &c));
            let rhs = c.transpose().kronecker(&a) * vec(&b);
            prop_assert!((lhs - rhs).amax() < 1e-13);
        }

        #[test]
        fn unvec_inverts_vec(v in proptest::collection::vec(-5.0f64..5.0, 16)) {
            let m = mat(4, 4, &v);
            prop_assert_eq!(unvec(&vec(&m), 4, 4).unwrap(), m);
        }

        #[test]
        fn coefficients_reconstruct_kernel(v in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let k = mat(4, 4, &v);
            let basis = MatrixBasis::pauli();
            let coeffs = kraus_coefficients(&k, &basis).unwrap();
            prop_assert!((kernel_from_coefficients(&coeffs, &basis) - &k).amax() <= 1e-12);
        }

        #[test]
        fn compact_kernel_matches_projector_form(ls in -PI..PI, le in -PI..PI) {
            let ch = build_embedding(&ModelSpec::beam_splitter(ls, le)).unwrap();
            let series = KernelSeries::for_channel(&ch, 10).unwrap();
            for n in 0..=10 {
                prop_assert!((series.coefficients[n].get(0, 0) - bs_compact_kernel(ls, le, n)).abs() <= 1e-12);
            }
        }

        #[test]
        fn bs_selection_rule(ls in -PI..PI, le in -PI..PI) {
            let ch = build_embedding(&ModelSpec::beam_splitter(ls, le)).unwrap();
            let series = KernelSeries::for_channel(&ch, 12).unwrap();
            for c in &series.coefficients {
                for i in 0..4 {
                    for j in 0..4 {
                        if (i, j) != (0, 0) {
                            prop_assert!(c.get(i, j).abs() <= 1e-12);
                        }
                    }
                }
            }
        }

        #[test]
        fn tms_selection_rule(ls in -PI..PI, nu in 0.0f64..1.2) {
            let ch = build_embedding(&ModelSpec::two_mode_squeezing(ls, nu)).unwrap();
            let series = KernelSeries::for_channel(&ch, 12).unwrap();
            for c in &series.coefficients {
                for i in 0..4 {
                    for j in 0..4 {
                        if i >= 2 || j >= 2 {
                            prop_assert!(c.get(i, j).abs() <= 1e-12 * c.max_abs().max(1.0));
                        }
                    }
                }
            }
        }
    }
}
