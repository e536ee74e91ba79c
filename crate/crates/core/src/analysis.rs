//! Small-gain certification of a gain choice.
//!
//! The velocity error `V1 = |v_o - v_c|` and the summed position error
//! `V2 = sum_i |p_i - p_i*|` satisfy a linear comparison system
//! `D+V <= A V + w`. Stability follows when `A` is Hurwitz, which for this
//! structure is the small-gain condition on the loop gain.
//!
//! The Lipschitz constants and the residual ratio fed in here are sampled
//! estimates, so every certificate is empirical.

use nalgebra::{Complex, Matrix2};
use serde::Serialize;
use thiserror::Error;

use crate::simulation::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("delta must lie in [0, 1), got {0}")]
    DeltaOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainCertificateInput {
    pub k_v: f64,
    pub k_p: f64,
    /// Relative allocation error of the QP.
    pub delta: f64,
    pub lipschitz_force: f64,
    pub lipschitz_allocation: f64,
    pub robots: usize,
}

impl GainCertificateInput {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        for (name, value) in [("k_v", self.k_v), ("k_p", self.k_p)] {
            if value.is_nan() || value <= 0.0 {
                return Err(AnalysisError::NonPositive { name, value });
            }
        }
        for (name, value) in [
            ("lipschitz_force", self.lipschitz_force),
            ("lipschitz_allocation", self.lipschitz_allocation),
        ] {
            if value.is_nan() || value < 0.0 {
                return Err(AnalysisError::Negative { name, value });
            }
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(AnalysisError::DeltaOutOfRange(self.delta));
        }
        Ok(())
    }

    /// `N L_phi L_f`, the self-coupling of the position-error subsystem.
    fn coupling(&self) -> f64 {
        self.robots as f64 * self.lipschitz_allocation * self.lipschitz_force
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCertificate {
    pub input: GainCertificateInput,
    pub matrix: [[f64; 2]; 2],
    /// `(re, im)` pairs.
    pub eigenvalues: [(f64, f64); 2],
    pub hurwitz: bool,
    /// Loop gain; `None` when `k_p <= N L_phi L_f`.
    pub small_gain_lhs: Option<f64>,
    pub small_gain_ok: bool,
    /// `(2 - delta) / (1 - delta) * N L_phi L_f`.
    pub kp_threshold: f64,
    pub kp_condition_ok: bool,
    /// The inputs are sampled estimates, not proven bounds.
    pub empirical: bool,
}

/// `A = [[-(1 - delta) k_v, L_f], [N L_phi k_v, -k_p + N L_phi L_f]]`.
pub fn comparison_matrix(inp: &GainCertificateInput) -> Matrix2<f64> {
    let c = inp.coupling();
    Matrix2::new(
        -(1.0 - inp.delta) * inp.k_v,
        inp.lipschitz_force,
        inp.robots as f64 * inp.lipschitz_allocation * inp.k_v,
        -inp.k_p + c,
    )
}

fn eigenvalues_2x2(a: &Matrix2<f64>) -> [Complex<f64>; 2] {
    let half_tr = 0.5 * a.trace();
    let disc = half_tr * half_tr - a.determinant();
    let root = Complex::new(disc, 0.0).sqrt();
    [half_tr + root, half_tr - root]
}

pub fn check_small_gain(inp: &GainCertificateInput) -> Result<GainCertificate, AnalysisError> {
    inp.validate()?;
    let a = comparison_matrix(inp);
    let eig = eigenvalues_2x2(&a);
    let c = inp.coupling();
    let small_gain_lhs = (inp.k_p > c).then(|| {
        let velocity_loop = inp.lipschitz_force / ((1.0 - inp.delta) * inp.k_v);
        let position_loop = inp.robots as f64 * inp.lipschitz_allocation * inp.k_v / (inp.k_p - c);
        velocity_loop * position_loop
    });
    let kp_threshold = (2.0 - inp.delta) / (1.0 - inp.delta) * c;
    Ok(GainCertificate {
        input: *inp,
        matrix: [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]],
        eigenvalues: [(eig[0].re, eig[0].im), (eig[1].re, eig[1].im)],
        hurwitz: eig.iter().all(|z| z.re < 0.0),
        small_gain_ok: small_gain_lhs.is_some_and(|x| x < 1.0),
        small_gain_lhs,
        kp_threshold,
        kp_condition_ok: inp.k_p > kp_threshold,
        empirical: true,
    })
}

/// Certifies a scenario's gains against sampled estimates of `delta`, `L_f` and `L_phi`.
pub fn certify_scenario(
    cfg: &ScenarioConfig,
    delta_hat: f64,
    lipschitz_force: f64,
    lipschitz_allocation: f64,
) -> Result<GainCertificate, AnalysisError> {
    check_small_gain(&GainCertificateInput {
        k_v: cfg.gains.k_v,
        k_p: cfg.gains.k_p,
        delta: delta_hat,
        lipschitz_force,
        lipschitz_allocation,
        robots: cfg.robot_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input(k_p: f64) -> GainCertificateInput {
        GainCertificateInput {
            k_v: 2.0,
            k_p,
            delta: 0.5,
            lipschitz_force: 3.0,
            lipschitz_allocation: 0.1,
            robots: 3,
        }
    }

    #[test]
    fn decoupled_matrix() {
        let a = comparison_matrix(&GainCertificateInput {
            k_v: 1.0,
            k_p: 1.0,
            delta: 0.0,
            lipschitz_force: 0.0,
            lipschitz_allocation: 0.0,
            robots: 3,
        });
        assert_eq!(a, Matrix2::new(-1.0, 0.0, 0.0, -1.0));
    }

    #[test]
    fn substituted_matrix() {
        let a = comparison_matrix(&input(2.0));
        let want = Matrix2::new(-1.0, 3.0, 0.6, -1.1);
        assert!((a - want).amax() < 1e-15);
        assert_eq!(a[(0, 1)], 3.0);
        assert_eq!(a[(1, 0)], 3.0 * 0.1 * 2.0);
    }

    #[test]
    fn rejected_gain() {
        let c = check_small_gain(&input(2.0)).unwrap();
        let lhs = c.small_gain_lhs.unwrap();
        assert!((lhs - 3.0 * 0.6 / 1.1).abs() < 1e-12);
        assert!((lhs - 1.636).abs() < 5e-4);
        assert!(!c.small_gain_ok);
        assert!((c.kp_threshold - 2.7).abs() < 1e-12);
        assert!(!c.hurwitz);
    }

    #[test]
    fn accepted_gain() {
        let c = check_small_gain(&input(10.0)).unwrap();
        let lhs = c.small_gain_lhs.unwrap();
        assert!((lhs - 0.1978).abs() < 5e-5);
        assert!(c.small_gain_ok && c.hurwitz && c.kp_condition_ok);
    }

    #[test]
    fn no_interconnection_is_certified() {
        for (lf, lphi) in [(0.0, 0.3), (4.0, 0.0), (0.0, 0.0)] {
            let c = check_small_gain(&GainCertificateInput {
                lipschitz_force: lf,
                lipschitz_allocation: lphi,
                ..input(1.0)
            })
            .unwrap();
            assert_eq!(c.small_gain_lhs, Some(0.0));
            assert!(c.small_gain_ok && c.hurwitz);
        }
    }

    #[test]
    fn infeasible_domain_is_reported() {
        let c = check_small_gain(&input(0.5)).unwrap();
        assert_eq!(c.small_gain_lhs, None);
        assert!(!c.small_gain_ok);
    }

    #[test]
    fn invalid_inputs() {
        assert!(check_small_gain(&GainCertificateInput {
            delta: 1.0,
            ..input(1.0)
        })
        .is_err());
        assert!(check_small_gain(&GainCertificateInput {
            k_v: 0.0,
            ..input(1.0)
        })
        .is_err());
        assert!(check_small_gain(&GainCertificateInput {
            lipschitz_force: -1.0,
            ..input(1.0)
        })
        .is_err());
    }

    fn arb_input() -> impl Strategy<Value = GainCertificateInput> {
        (
            0.01f64..10.0,
            0.01f64..50.0,
            0.0f64..0.99,
            0.0f64..40.0,
            0.0f64..1.0,
            1usize..8,
        )
            .prop_map(|(k_v, k_p, delta, lf, lphi, robots)| GainCertificateInput {
                k_v,
                k_p,
                delta,
                lipschitz_force: lf,
                lipschitz_allocation: lphi,
                robots,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn small_gain_with_kp_condition_implies_hurwitz(inp in arb_input()) {
            let c = check_small_gain(&inp).unwrap();
            if c.small_gain_ok && c.kp_condition_ok {
                prop_assert!(c.hurwitz);
            }
        }

        #[test]
        fn trace_negative_under_kp_condition(inp in arb_input()) {
            let c = check_small_gain(&inp).unwrap();
            if c.kp_condition_ok {
                prop_assert!(comparison_matrix(&inp).trace() < 0.0);
            }
        }

        #[test]
        fn lhs_decreases_in_kp(inp in arb_input(), bump in 1e-3f64..10.0) {
            let a = check_small_gain(&inp).unwrap();
            let b = check_small_gain(&GainCertificateInput { k_p: inp.k_p + bump, ..inp }).unwrap();
            if let (Some(la), Some(lb)) = (a.small_gain_lhs, b.small_gain_lhs) {
                prop_assert!(lb <= la);
                if la > 0.0 {
                    prop_assert!(lb < la);
                }
            }
            prop_assert!(!(a.small_gain_ok && !b.small_gain_ok));
        }
    }
}
