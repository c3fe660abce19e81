//! Quantities read off the embedded state.

use crate::collision::EmbeddedState;
use crate::error::{Error, Result};
use crate::symplectic::{gaussian_entropy, scale, CovarianceMatrix, TOL_POS};

/// Mean occupation `⟨a†a⟩ = (⟨Q²⟩ + ⟨P²⟩ − 1)/2` of mode `mode`.
pub fn occupation(theta: &CovarianceMatrix, mode: usize) -> Result<f64> {
    if mode >= theta.modes() {
        return Err(Error::Shape(format!(
            "mode {mode} out of range for a {}-mode state",
            theta.modes()
        )));
    }
    if !theta.is_physical(TOL_POS) {
        return Err(Error::Validity("occupation of an unphysical state".into()));
    }
    let m = theta.as_matrix();
    let k = 2 * mode;
    Ok(0.5 * (m[(k, k)] + m[(k + 1, k + 1)] - 1.0))
}

/// Total occupation summed over all modes.
pub fn total_occupation(theta: &CovarianceMatrix) -> Result<f64> {
    (0..theta.modes()).map(|k| occupation(theta, k)).sum()
}

/// Mutual information (nats) between the system and the incoming ancilla.
///
/// Round-off negativity down to `-TOL_POS` (scaled with the state) is clamped
/// to zero; anything below is reported as a validity error.
pub fn mutual_information(state: &EmbeddedState) -> Result<f64> {
    if state.correlations().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mi = gaussian_entropy(&state.theta())? + gaussian_entropy(&state.carried_ancilla())?
        - gaussian_entropy(&state.gamma)?;
    let tol = TOL_POS * scale(state.gamma.as_matrix());
    if mi < -tol {
        return Err(Error::Validity(format!("negative mutual information {mi:e}")));
    }
    Ok(mi.max(0.0))
}

/// Stationary occupation `sinh²ν/(1 − sinh²ν)` of the stable TMS model.
pub fn tms_steady_occupation(nu_e: f64) -> Result<f64> {
    if !(0.0..1f64.asinh()).contains(&nu_e) {
        return Err(Error::Domain(format!(
            "nu_e = {nu_e} has no steady state (need 0 <= nu_e < asinh(1))"
        )));
    }
    let s2 = nu_e.sinh().powi(2);
    Ok(s2 / (1.0 - s2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{evolve, ModelSpec};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn occupation_values() {
        assert_eq!(occupation(&CovarianceMatrix::vacuum(1), 0).unwrap(), 0.0);
        assert_abs_diff_eq!(occupation(&CovarianceMatrix::thermal(1, 20.0), 0).unwrap(), 20.0, epsilon = 1e-14);
        let sq = CovarianceMatrix::new(DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5])).unwrap();
        assert_abs_diff_eq!(occupation(&sq, 0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(matches!(occupation(&sq, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn steady_occupation_formula() {
        assert_eq!(tms_steady_occupation(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(tms_steady_occupation(0.5).unwrap(), 0.37276, epsilon = 1e-5);
        assert!(tms_steady_occupation(1f64.asinh() - 1e-9).unwrap() > 1e7);
        assert!(matches!(tms_steady_occupation(1f64.asinh()), Err(Error::Domain(_))));
        assert!(matches!(tms_steady_occupation(0.95), Err(Error::Domain(_))));
    }

    #[test]
    fn markovian_model_has_no_mutual_information() {
        let spec = ModelSpec::beam_splitter(0.5, 0.0).with_system_init(CovarianceMatrix::thermal(1, 20.0));
        for st in evolve(&spec, 40).unwrap() {
            assert_eq!(mutual_information(&st).unwrap(), 0.0);
        }
        let spec = ModelSpec::two_mode_squeezing(0.5, 0.0).with_system_init(CovarianceMatrix::thermal(1, 20.0));
        for st in evolve(&spec, 40).unwrap() {
            assert_eq!(mutual_information(&st).unwrap(), 0.0);
        }
    }

    #[test]
    fn bs_occupation_decays_monotonically_for_weak_ancilla_coupling() {
        let spec = ModelSpec::beam_splitter(0.5, 0.1).with_system_init(CovarianceMatrix::thermal(1, 20.0));
        let occ: Vec<f64> = evolve(&spec, 60)
            .unwrap()
            .iter()
            .map(|s| occupation(&s.theta(), 0).unwrap())
            .collect();
        assert!(occ.windows(2).all(|w| w[1] <= w[0]));
        assert!(occ[60] < 1e-3);
    }

    #[test]
    fn tms_occupation_reaches_steady_value() {
        // λ_s = 1.0 keeps the slowest relaxation mode well inside the unit circle.
        for nu in [0.3, 0.5, 0.7] {
            let spec = ModelSpec::two_mode_squeezing(1.0, nu).with_system_init(CovarianceMatrix::thermal(1, 20.0));
            let states = evolve(&spec, 2000).unwrap();
            let occ = occupation(&states[2000].theta(), 0).unwrap();
            assert_abs_diff_eq!(occ, tms_steady_occupation(nu).unwrap(), epsilon = 1e-6);
        }
    }

    #[test]
    fn unstable_tms_diverges_and_mutual_information_grows() {
        let spec = ModelSpec::two_mode_squeezing(0.1, 0.95).with_system_init(CovarianceMatrix::thermal(1, 20.0));
        let states = evolve(&spec, 400).unwrap();
        let occ = |n: usize| occupation(&states[n].theta(), 0).unwrap();
        assert!(occ(400) > 1e6 * occ(0).max(1.0) / 20.0);
        // Entropies lose all precision once entries reach ~1e16, so stay below that.
        let mi: Vec<f64> = [50, 100, 150, 200].iter().map(|&n| mutual_information(&states[n]).unwrap()).collect();
        assert!(mi.windows(2).all(|w| w[1] > w[0]), "{mi:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bs_homogenizes_to_ancilla(ls in 0.3f64..2.8, le in -1.0f64..1.0, occ_e in 0.0f64..3.0) {
            let spec = ModelSpec::beam_splitter(ls, le)
                .with_system_init(CovarianceMatrix::thermal(1, 20.0))
                .with_ancilla_state(CovarianceMatrix::thermal(1, occ_e));
            let states = evolve(&spec, 3000).unwrap();
            prop_assert!((occupation(&states[3000].theta(), 0).unwrap() - occ_e).abs() < 1e-6);
            prop_assert!(mutual_information(&states[3000]).unwrap() < 1e-6);
        }

        #[test]
        fn mutual_information_non_negative(ls in -3.1f64..3.1, nu in 0.0f64..0.85) {
            let spec = ModelSpec::two_mode_squeezing(ls, nu).with_system_init(CovarianceMatrix::thermal(1, 5.0));
            for st in evolve(&spec, 30).unwrap() {
                prop_assert!(mutual_information(&st).unwrap() >= 0.0);
            }
        }
    }
}
