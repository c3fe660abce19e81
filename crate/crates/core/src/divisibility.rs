//! Cumulative and intermediate Gaussian maps of the reduced dynamics and the
//! CP-divisibility monotone.
//!
//! The reduced dynamics from step 0 to step n is the Gaussian map
//! `θ ↦ 𝒳_n θ 𝒳_nᵀ + 𝒴_n`. When `𝒳_n` is invertible the map from n to m is
//! `𝒳_mn = 𝒳_m 𝒳_n⁻¹`, `𝒴_mn = 𝒴_m − 𝒳_mn 𝒴_n 𝒳_mnᵀ`, and it is CPTP iff
//! `M = 2𝒴 + iΩ − i𝒳Ω𝒳ᵀ ⪰ 0`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::collision::{build_embedding, EmbeddingChannel, ModelSpec};
use crate::error::{Error, Result};
use crate::symplectic::{block_diag, hermitian_negativity, symmetrize, symplectic_form, CovarianceMatrix};

/// Default upper bound on `cond(𝒳_n)` for intermediate maps.
pub const KAPPA_MAX: f64 = 1e12;

/// Threshold above which a monotone value counts as non-divisible.
pub const NEGATIVITY_TOL: f64 = 1e-10;

/// `θ ↦ X θ Xᵀ + Y` acting from step `from` to step `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMap {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub from: usize,
    pub to: usize,
}

impl GaussianMap {
    pub fn identity(dim: usize, step: usize) -> Self {
        Self {
            x: DMatrix::identity(dim, dim),
            y: DMatrix::zeros(dim, dim),
            from: step,
            to: step,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn apply(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&self.x * theta * self.x.transpose() + &self.y)
    }
}

/// Cumulative maps `0 → n` for `n = 0 … n_max`.
///
/// `𝒳_n = (Xⁿ)₁₁`; `𝒴_n` is the system block reached from `diag(0, ε)`, which
/// collects the `(Xⁿ)₁₂ ε (Xⁿ)₁₂ᵀ` term and all injected noise.
pub fn cumulative_maps(ch: &EmbeddingChannel, epsilon: &CovarianceMatrix, n_max: usize) -> Result<Vec<GaussianMap>> {
    let (s, e) = (ch.system_dim(), ch.ancilla_dim());
    if epsilon.dim() != e {
        return Err(Error::Shape(format!(
            "ancilla state is {}-dimensional, channel expects {e}",
            epsilon.dim()
        )));
    }
    let mut power = DMatrix::<f64>::identity(s + e, s + e);
    let mut gamma = block_diag(&DMatrix::zeros(s, s), epsilon.as_matrix());
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let x = power.view((0, 0), (s, s)).into_owned();
        let y = gamma.view((0, 0), (s, s)).into_owned();
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Overflow { step: n });
        }
        out.push(GaussianMap { x, y, from: 0, to: n });
        if n < n_max {
            power = ch.x() * power;
            gamma = ch.apply(&gamma);
        }
    }
    Ok(out)
}

pub fn cumulative_map(ch: &EmbeddingChannel, epsilon: &CovarianceMatrix, n: usize) -> Result<GaussianMap> {
    Ok(cumulative_maps(ch, epsilon, n)?.pop().expect("n + 1 maps"))
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    ratio(sv.max(), sv.min())
}

/// `max(σ_max, 1)/σ_min`: the condition number measured against the identity
/// map, so that a uniformly vanishing `𝒳_n = c·I` is still caught.
pub fn map_condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    ratio(sv.max().max(1.0), sv.min())
}

fn ratio(max: f64, min: f64) -> f64 {
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Intermediate map `n → m` from the cumulative maps `0 → n` and `0 → m`.
pub fn intermediate_map(map_n: &GaussianMap, map_m: &GaussianMap) -> Result<GaussianMap> {
    intermediate_map_with(map_n, map_m, KAPPA_MAX)
}

pub fn intermediate_map_with(map_n: &GaussianMap, map_m: &GaussianMap, kappa_max: f64) -> Result<GaussianMap> {
    if map_n.from != 0 || map_m.from != 0 {
        return Err(Error::Domain("intermediate maps are built from cumulative maps".into()));
    }
    if map_m.to < map_n.to {
        return Err(Error::Domain(format!("need m >= n, got n={} m={}", map_n.to, map_m.to)));
    }
    if map_n.dim() != map_m.dim() {
        return Err(Error::Shape("maps act on different dimensions".into()));
    }
    if map_m.to == map_n.to {
        return Ok(GaussianMap::identity(map_n.dim(), map_n.to));
    }
    let condition = map_condition_number(&map_n.x);
    if condition.is_nan() || condition > kappa_max {
        return Err(Error::IllConditioned { condition });
    }
    // 𝒳_mn 𝒳_n = 𝒳_m  ⇔  𝒳_nᵀ 𝒳_mnᵀ = 𝒳_mᵀ
    let x_mn = map_n
        .x
        .transpose()
        .lu()
        .solve(&map_m.x.transpose())
        .ok_or(Error::IllConditioned { condition })?
        .transpose();
    let y_mn = symmetrize(&map_m.y - &x_mn * &map_n.y * x_mn.transpose());
    Ok(GaussianMap { x: x_mn, y: y_mn, from: map_n.to, to: map_m.to })
}

/// `M[𝒳, 𝒴] = 2𝒴 + iΩ − i𝒳Ω𝒳ᵀ`.
pub fn cptp_test_matrix(map: &GaussianMap) -> Result<DMatrix<Complex64>> {
    let d = map.dim();
    if !d.is_multiple_of(2) || map.x.shape() != (d, d) || map.y.shape() != (d, d) {
        return Err(Error::Shape(format!("map of shape {:?} is not a mode map", map.x.shape())));
    }
    let omega = symplectic_form(d / 2);
    let imag = &omega - &map.x * &omega * map.x.transpose();
    Ok(DMatrix::from_fn(d, d, |i, j| Complex64::new(2.0 * map.y[(i, j)], imag[(i, j)])))
}

/// `N = Σ_k (|m_k| − m_k)/2` over the eigenvalues of `M`.
pub fn non_divisibility(map: &GaussianMap) -> Result<f64> {
    hermitian_negativity(&cptp_test_matrix(map)?)
}

/// Reason a grid cell has no value.
#[derive(Debug, Clone, PartialEq)]
pub enum CellFlag {
    IllConditioned { condition: f64 },
    Failed(String),
}

/// `((n, m), N_mn, flag)`.
pub type GridCell<'a> = ((usize, usize), Option<f64>, Option<&'a CellFlag>);

/// `N_mn` for `0 ≤ n < m ≤ n_max`, keyed by `(n, m)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DivisibilityGrid {
    pub n_max: usize,
    pub values: BTreeMap<(usize, usize), f64>,
    pub flags: BTreeMap<(usize, usize), CellFlag>,
}

impl DivisibilityGrid {
    pub fn get(&self, n: usize, m: usize) -> Option<f64> {
        self.values.get(&(n, m)).copied()
    }

    /// Largest value over cells with `lo ≤ n < m ≤ hi`.
    pub fn max_in(&self, lo: usize, hi: usize) -> Option<f64> {
        self.values
            .iter()
            .filter(|(&(n, m), _)| n >= lo && m <= hi)
            .map(|(_, &v)| v)
            .reduce(f64::max)
    }

    /// No computed cell exceeds `tol`.
    pub fn is_divisible(&self, tol: f64) -> bool {
        self.values.values().all(|&v| v <= tol)
    }

    /// Cells in `(n, m)` order, with `None` for flagged ones.
    pub fn cells(&self) -> Vec<GridCell<'_>> {
        let mut keys: Vec<_> = self.values.keys().chain(self.flags.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .map(|k| (k, self.values.get(&k).copied(), self.flags.get(&k)))
            .collect()
    }
}

pub fn divisibility_grid(spec: &ModelSpec, n_max: usize) -> Result<DivisibilityGrid> {
    divisibility_grid_with(spec, n_max, KAPPA_MAX)
}

/// Evaluates every cell. The cumulative table is built once; cells run on the
/// current rayon pool.
pub fn divisibility_grid_with(spec: &ModelSpec, n_max: usize, kappa_max: f64) -> Result<DivisibilityGrid> {
    if n_max < 2 {
        return Err(Error::Domain(format!("divisibility grid needs n_max >= 2, got {n_max}")));
    }
    let ch = build_embedding(spec)?;
    let maps = cumulative_maps(&ch, &spec.ancilla_state, n_max)?;
    let pairs: Vec<(usize, usize)> = (0..n_max).flat_map(|n| (n + 1..=n_max).map(move |m| (n, m))).collect();
    let results: Vec<((usize, usize), std::result::Result<f64, CellFlag>)> = pairs
        .par_iter()
        .map(|&(n, m)| {
            let cell = intermediate_map_with(&maps[n], &maps[m], kappa_max)
                .and_then(|map| non_divisibility(&map))
                .map_err(|err| match err {
                    Error::IllConditioned { condition } => CellFlag::IllConditioned { condition },
                    other => CellFlag::Failed(other.to_string()),
                });
            ((n, m), cell)
        })
        .collect();
    let mut grid = DivisibilityGrid { n_max, ..Default::default() };
    for (key, cell) in results {
        match cell {
            Ok(v) => {
                grid.values.insert(key, v);
            }
            Err(flag) => {
                grid.flags.insert(key, flag);
            }
        }
    }
    Ok(grid)
}

/// `N_{n+1,n}` for consecutive steps only.
pub fn step_non_divisibility(spec: &ModelSpec, n_max: usize) -> Result<Vec<std::result::Result<f64, CellFlag>>> {
    let ch = build_embedding(spec)?;
    let maps = cumulative_maps(&ch, &spec.ancilla_state, n_max)?;
    Ok(maps
        .windows(2)
        .map(|w| {
            intermediate_map(&w[0], &w[1])
                .and_then(|map| non_divisibility(&map))
                .map_err(|err| match err {
                    Error::IllConditioned { condition } => CellFlag::IllConditioned { condition },
                    other => CellFlag::Failed(other.to_string()),
                })
        })
        .collect())
}
