//! Collision unitaries at the covariance-matrix level, the Markovian
//! embedding `γ ↦ XγXᵀ + Y` of the system plus the next incoming ancilla, and
//! a brute-force propagation of the whole system–ancilla chain used to check
//! it.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::symplectic::{
    block_diag, symmetrize, CovarianceMatrix, SymplecticMatrix, TOL_POS, TOL_SYM,
};

/// Largest global covariance matrix the chain oracle will build.
pub const MAX_CHAIN_DIM: usize = 512;

/// Two-body collision `[[a, b], [c, d]]` acting on (left, right) subsystems.
///
/// For the system–ancilla collision these are `A, B, C, D`; for the
/// ancilla–ancilla collision `E, F, G, J`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionBlocks {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl CollisionBlocks {
    fn check_shapes(&self, left: usize, right: usize) -> Result<()> {
        let expect = [
            ("top-left", &self.a, (left, left)),
            ("top-right", &self.b, (left, right)),
            ("bottom-left", &self.c, (right, left)),
            ("bottom-right", &self.d, (right, right)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::Shape(format!(
                    "{name} block is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    shape.0,
                    shape.1
                )));
            }
        }
        Ok(())
    }

    /// The assembled two-body matrix.
    pub fn assemble(&self) -> DMatrix<f64> {
        let (l, r) = (self.a.nrows(), self.d.nrows());
        let mut s = DMatrix::zeros(l + r, l + r);
        s.view_mut((0, 0), (l, l)).copy_from(&self.a);
        s.view_mut((0, l), (l, r)).copy_from(&self.b);
        s.view_mut((l, 0), (r, l)).copy_from(&self.c);
        s.view_mut((l, l), (r, r)).copy_from(&self.d);
        s
    }

    pub fn to_symplectic(&self) -> Result<SymplecticMatrix> {
        SymplecticMatrix::new(self.assemble())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemCoupling {
    /// Partial SWAP `exp[λ_s (a†b − b†a)]`.
    BeamSplitter { lambda_s: f64 },
    General(CollisionBlocks),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AncillaCoupling {
    /// Partial SWAP between consecutive ancillas with angle `λ_e`.
    BeamSplitter { lambda_e: f64 },
    /// Two-mode squeezing between consecutive ancillas with strength `ν_e`.
    TwoModeSqueezing { nu_e: f64 },
    General(CollisionBlocks),
}

/// Full description of a collisional model with memory length one.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub system_modes: usize,
    pub ancilla_modes: usize,
    pub system_coupling: SystemCoupling,
    pub ancilla_coupling: AncillaCoupling,
    /// `ε`, the state every fresh ancilla is prepared in.
    pub ancilla_state: CovarianceMatrix,
    /// `θ⁰`.
    pub system_init: CovarianceMatrix,
}

/// Maps an angle to `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

impl ModelSpec {
    /// Single-mode BS model with vacuum ancillas and vacuum system.
    pub fn beam_splitter(lambda_s: f64, lambda_e: f64) -> Self {
        Self {
            system_modes: 1,
            ancilla_modes: 1,
            system_coupling: SystemCoupling::BeamSplitter { lambda_s: wrap_angle(lambda_s) },
            ancilla_coupling: AncillaCoupling::BeamSplitter { lambda_e: wrap_angle(lambda_e) },
            ancilla_state: CovarianceMatrix::vacuum(1),
            system_init: CovarianceMatrix::vacuum(1),
        }
    }

    /// Single-mode TMS model with vacuum ancillas and vacuum system.
    pub fn two_mode_squeezing(lambda_s: f64, nu_e: f64) -> Self {
        Self {
            system_modes: 1,
            ancilla_modes: 1,
            system_coupling: SystemCoupling::BeamSplitter { lambda_s: wrap_angle(lambda_s) },
            ancilla_coupling: AncillaCoupling::TwoModeSqueezing { nu_e },
            ancilla_state: CovarianceMatrix::vacuum(1),
            system_init: CovarianceMatrix::vacuum(1),
        }
    }

    pub fn with_system_init(mut self, theta0: CovarianceMatrix) -> Self {
        self.system_init = theta0;
        self
    }

    pub fn with_ancilla_state(mut self, epsilon: CovarianceMatrix) -> Self {
        self.ancilla_state = epsilon;
        self
    }

    pub fn system_dim(&self) -> usize {
        2 * self.system_modes
    }

    pub fn ancilla_dim(&self) -> usize {
        2 * self.ancilla_modes
    }

    pub fn validate(&self) -> Result<()> {
        if self.system_modes == 0 || self.ancilla_modes == 0 {
            return Err(Error::Dimension("mode counts must be positive".into()));
        }
        if self.system_init.dim() != self.system_dim() {
            return Err(Error::Shape(format!(
                "θ⁰ is {}-dimensional, expected {}",
                self.system_init.dim(),
                self.system_dim()
            )));
        }
        if self.ancilla_state.dim() != self.ancilla_dim() {
            return Err(Error::Shape(format!(
                "ε is {}-dimensional, expected {}",
                self.ancilla_state.dim(),
                self.ancilla_dim()
            )));
        }
        if !self.system_init.is_physical(TOL_POS) {
            return Err(Error::Validity("θ⁰ is not a physical covariance matrix".into()));
        }
        if !self.ancilla_state.is_physical(TOL_POS) {
            return Err(Error::Validity("ε is not a physical covariance matrix".into()));
        }
        build_se_blocks(self)?;
        build_ee_blocks(self)?;
        Ok(())
    }
}

fn check_parameter(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {value} is not finite")))
    }
}

/// `(A, B, C, D)` of the system–ancilla collision.
pub fn build_se_blocks(spec: &ModelSpec) -> Result<CollisionBlocks> {
    let (s, e) = (spec.system_dim(), spec.ancilla_dim());
    let blocks = match &spec.system_coupling {
        SystemCoupling::BeamSplitter { lambda_s } => {
            check_parameter("lambda_s", *lambda_s)?;
            if s != e {
                return Err(Error::Shape(format!(
                    "beam-splitter coupling needs equal system and ancilla mode counts ({} vs {})",
                    spec.system_modes, spec.ancilla_modes
                )));
            }
            let (x, y) = (lambda_s.cos(), lambda_s.sin());
            let id = DMatrix::<f64>::identity(s, s);
            CollisionBlocks { a: &id * x, b: &id * y, c: &id * -y, d: &id * x }
        }
        SystemCoupling::General(blocks) => blocks.clone(),
    };
    blocks.check_shapes(s, e)?;
    blocks.to_symplectic()?;
    Ok(blocks)
}

/// `(E, F, G, J)` of the collision between consecutive ancillas.
pub fn build_ee_blocks(spec: &ModelSpec) -> Result<CollisionBlocks> {
    let e = spec.ancilla_dim();
    let id = DMatrix::<f64>::identity(e, e);
    let blocks = match &spec.ancilla_coupling {
        AncillaCoupling::BeamSplitter { lambda_e } => {
            check_parameter("lambda_e", *lambda_e)?;
            let (z, w) = (lambda_e.cos(), lambda_e.sin());
            CollisionBlocks { a: &id * z, b: &id * w, c: &id * -w, d: &id * z }
        }
        AncillaCoupling::TwoModeSqueezing { nu_e } => {
            check_parameter("nu_e", *nu_e)?;
            if *nu_e < 0.0 {
                return Err(Error::Domain(format!("nu_e = {nu_e} must be non-negative")));
            }
            let (zt, wt) = (nu_e.cosh(), nu_e.sinh());
            let sigma_z = DMatrix::from_fn(e, e, |i, j| {
                if i != j {
                    0.0
                } else if i % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            });
            CollisionBlocks { a: &id * zt, b: &sigma_z * wt, c: &sigma_z * wt, d: &id * zt }
        }
        AncillaCoupling::General(blocks) => blocks.clone(),
    };
    blocks.check_shapes(e, e)?;
    blocks.to_symplectic()?;
    Ok(blocks)
}

/// The pair `(X, Y)` of the affine recurrence `γⁿ⁺¹ = XγⁿXᵀ + Y` on the
/// system plus the next ancilla.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingChannel {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    system_dim: usize,
    ancilla_dim: usize,
}

impl EmbeddingChannel {
    /// Builds a channel from raw matrices. `y` must be symmetric and vanish
    /// outside its ancilla block.
    pub fn from_parts(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        system_dim: usize,
        ancilla_dim: usize,
    ) -> Result<Self> {
        let dim = system_dim + ancilla_dim;
        if x.shape() != (dim, dim) || y.shape() != (dim, dim) {
            return Err(Error::Shape(format!(
                "X is {:?} and Y is {:?}, expected {dim}x{dim}",
                x.shape(),
                y.shape()
            )));
        }
        let outside = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .filter(|&(i, j)| i < system_dim || j < system_dim)
            .map(|(i, j)| y[(i, j)].abs())
            .fold(0.0, f64::max);
        if outside > 0.0 {
            return Err(Error::Shape("Y must vanish outside its ancilla block".into()));
        }
        Ok(Self { x, y: symmetrize(y), system_dim, ancilla_dim })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    pub fn dim(&self) -> usize {
        self.system_dim + self.ancilla_dim
    }

    /// `X₁₁`, the system-to-system block.
    pub fn x11(&self) -> DMatrix<f64> {
        self.x.view((0, 0), (self.system_dim, self.system_dim)).into_owned()
    }

    /// `XγXᵀ + Y`, symmetrized.
    pub fn apply(&self, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&self.x * gamma * self.x.transpose() + &self.y)
    }
}

/// `X = [[A, B], [GC, GD]]`, `Y = diag(0, JεJᵀ)`.
pub fn build_embedding(spec: &ModelSpec) -> Result<EmbeddingChannel> {
    spec.validate()?;
    let se = build_se_blocks(spec)?;
    let ee = build_ee_blocks(spec)?;
    let (s, e) = (spec.system_dim(), spec.ancilla_dim());
    let mut x = DMatrix::zeros(s + e, s + e);
    x.view_mut((0, 0), (s, s)).copy_from(&se.a);
    x.view_mut((0, s), (s, e)).copy_from(&se.b);
    x.view_mut((s, 0), (e, s)).copy_from(&(&ee.c * &se.c));
    x.view_mut((s, s), (e, e)).copy_from(&(&ee.c * &se.d));
    let noise = &ee.d * spec.ancilla_state.as_matrix() * ee.d.transpose();
    let y = block_diag(&DMatrix::zeros(s, s), &noise);
    EmbeddingChannel::from_parts(x, y, s, e)
}

/// Reduced state `γⁿ` of the system and ancilla `E_{n+1}` at time `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedState {
    pub gamma: CovarianceMatrix,
    pub step: usize,
    system_dim: usize,
}

impl EmbeddedState {
    /// `γ⁰ = diag(θ⁰, ε)`.
    pub fn initial(spec: &ModelSpec) -> Self {
        Self {
            gamma: CovarianceMatrix::direct_sum(&spec.system_init, &spec.ancilla_state),
            step: 0,
            system_dim: spec.system_dim(),
        }
    }

    pub fn new(gamma: CovarianceMatrix, step: usize, system_dim: usize) -> Result<Self> {
        if system_dim == 0 || !system_dim.is_multiple_of(2) || system_dim >= gamma.dim() {
            return Err(Error::Shape(format!(
                "system dimension {system_dim} does not split a {}-dim state",
                gamma.dim()
            )));
        }
        Ok(Self { gamma, step, system_dim })
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    /// `θⁿ`
    pub fn theta(&self) -> CovarianceMatrix {
        self.gamma.sub_block(0, self.system_dim).expect("system block")
    }

    /// `εⁿ_{n+1}`, the state of the incoming ancilla.
    pub fn carried_ancilla(&self) -> CovarianceMatrix {
        let e = self.gamma.dim() - self.system_dim;
        self.gamma.sub_block(self.system_dim, e).expect("ancilla block")
    }

    /// `ξⁿ_{n+1}`, system–ancilla correlations.
    pub fn correlations(&self) -> DMatrix<f64> {
        let e = self.gamma.dim() - self.system_dim;
        self.gamma
            .as_matrix()
            .view((0, self.system_dim), (self.system_dim, e))
            .into_owned()
    }
}

/// One application of the embedding recurrence.
pub fn embed_step(state: &EmbeddedState, ch: &EmbeddingChannel) -> Result<EmbeddedState> {
    if state.gamma.dim() != ch.dim() || state.system_dim != ch.system_dim() {
        return Err(Error::Shape(format!(
            "state of dimension {} does not match a channel of dimension {}",
            state.gamma.dim(),
            ch.dim()
        )));
    }
    if !state.gamma.is_physical(TOL_POS) {
        return Err(Error::Validity(format!("γ at step {} is not physical", state.step)));
    }
    let step = state.step + 1;
    let next = ch.apply(state.gamma.as_matrix());
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { step });
    }
    let gamma = CovarianceMatrix::new(next)?;
    if !gamma.is_physical(TOL_POS) {
        return Err(Error::Validity(format!("γ at step {step} is not physical")));
    }
    Ok(EmbeddedState { gamma, step, system_dim: state.system_dim })
}

/// States `γ⁰ … γ^{n_max}` of the embedded recurrence.
pub fn evolve(spec: &ModelSpec, n_max: usize) -> Result<Vec<EmbeddedState>> {
    let ch = build_embedding(spec)?;
    evolve_channel(&ch, EmbeddedState::initial(spec), n_max)
}

pub fn evolve_channel(
    ch: &EmbeddingChannel,
    initial: EmbeddedState,
    n_max: usize,
) -> Result<Vec<EmbeddedState>> {
    let mut states = Vec::with_capacity(n_max + 1);
    states.push(initial);
    for _ in 0..n_max {
        let next = embed_step(states.last().expect("non-empty"), ch)?;
        states.push(next);
    }
    Ok(states)
}

/// `Xⁿ γ⁰ (Xᵀ)ⁿ + Σ_{k<n} Xᵏ Y (Xᵀ)ᵏ`.
pub fn closed_form_state(
    ch: &EmbeddingChannel,
    gamma0: &CovarianceMatrix,
    n: usize,
) -> Result<CovarianceMatrix> {
    if gamma0.dim() != ch.dim() {
        return Err(Error::Shape(format!(
            "γ⁰ of dimension {} does not match a channel of dimension {}",
            gamma0.dim(),
            ch.dim()
        )));
    }
    let dim = ch.dim();
    let mut power = DMatrix::<f64>::identity(dim, dim);
    let mut noise = DMatrix::<f64>::zeros(dim, dim);
    for _ in 0..n {
        noise += &power * ch.y() * power.transpose();
        power = ch.x() * power;
    }
    let out = &power * gamma0.as_matrix() * power.transpose() + noise;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { step: n });
    }
    CovarianceMatrix::new(symmetrize(out))
}

/// Places a two-body collision acting on the subsystems starting at offsets
/// `left` and `right` inside an identity of dimension `dim`.
fn embed_collision(blocks: &CollisionBlocks, dim: usize, left: usize, right: usize) -> DMatrix<f64> {
    let (l, r) = (blocks.a.nrows(), blocks.d.nrows());
    let mut s = DMatrix::<f64>::identity(dim, dim);
    s.view_mut((left, left), (l, l)).copy_from(&blocks.a);
    s.view_mut((left, right), (l, r)).copy_from(&blocks.b);
    s.view_mut((right, left), (r, l)).copy_from(&blocks.c);
    s.view_mut((right, right), (r, r)).copy_from(&blocks.d);
    s
}

/// System covariance `θⁿ` from propagating the full chain
/// `S E₁ … E_{n+1}` with `n` rounds of (system–ancilla, ancilla–ancilla)
/// collisions on `diag(θ⁰, ε, …, ε)`.
pub fn brute_force_chain(spec: &ModelSpec, n: usize) -> Result<CovarianceMatrix> {
    Ok(brute_force_trajectory(spec, n)?.pop().expect("n + 1 states"))
}

/// `θ⁰ … θⁿ` read off one chain of `n` rounds. Ancillas beyond round `k` are
/// still untouched after it, so the system block at that point is `θᵏ`.
pub fn brute_force_trajectory(spec: &ModelSpec, n: usize) -> Result<Vec<CovarianceMatrix>> {
    spec.validate()?;
    let (s, e) = (spec.system_dim(), spec.ancilla_dim());
    let dim = s + (n + 1) * e;
    if dim > MAX_CHAIN_DIM {
        return Err(Error::Resource(format!(
            "chain of {n} collisions needs a {dim}-dim covariance matrix (limit {MAX_CHAIN_DIM})"
        )));
    }
    let se = build_se_blocks(spec)?;
    let ee = build_ee_blocks(spec)?;
    let mut sigma = spec.system_init.as_matrix().clone();
    for _ in 0..=n {
        sigma = block_diag(&sigma, spec.ancilla_state.as_matrix());
    }
    let mut out = Vec::with_capacity(n + 1);
    out.push(spec.system_init.clone());
    for k in 1..=n {
        let ancilla = s + (k - 1) * e;
        let u = embed_collision(&se, dim, 0, ancilla);
        let v = embed_collision(&ee, dim, ancilla, ancilla + e);
        let step = v * u;
        debug_assert!(crate::symplectic::symplectic_defect(&step) <= TOL_SYM * 10.0);
        sigma = symmetrize(&step * sigma * step.transpose());
        out.push(CovarianceMatrix::new(sigma.view((0, 0), (s, s)).into_owned())?);
    }
    Ok(out)
}
