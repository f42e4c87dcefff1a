//! The complex chart on the phase space: the linear change of variables
//! `x1 = (a1 - b2) + i (a2 + b1)`, ..., its inverse, the first integrals and
//! geometric constraints written in the chart, and the complexified flow
//! used as a cross-check.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rigid::{BodyParams, PhaseState, Vec3};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// The nine chart variables. Images of real states satisfy the conjugacy
/// relations `x2 = conj(x1)`, `y2 = conj(y1)`, `z2 = conj(z1)`,
/// `w2 = conj(w1)` and `Im w3 = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexState {
    pub x1: Complex64,
    pub x2: Complex64,
    pub y1: Complex64,
    pub y2: Complex64,
    pub z1: Complex64,
    pub z2: Complex64,
    pub w1: Complex64,
    pub w2: Complex64,
    pub w3: Complex64,
}

impl ComplexState {
    /// Largest deviation from the conjugacy relations, in absolute value.
    pub fn conjugacy_residual(&self) -> f64 {
        let pairs = [
            self.x1 - self.x2.conj(),
            self.y1 - self.y2.conj(),
            self.z1 - self.z2.conj(),
            self.w1 - self.w2.conj(),
        ];
        pairs
            .iter()
            .map(|d| d.norm())
            .fold(self.w3.im.abs(), f64::max)
    }

    pub fn magnitude(&self) -> f64 {
        [
            self.x1, self.x2, self.y1, self.y2, self.z1, self.z2, self.w1, self.w2, self.w3,
        ]
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
    }
}

/// Forward chart map; exact linear combination of the real variables.
pub fn to_complex(state: &PhaseState) -> ComplexState {
    let w = state.omega.0;
    let al = state.alpha.0;
    let be = state.beta.0;
    let x1 = Complex64::new(al[0] - be[1], al[1] + be[0]);
    let y1 = Complex64::new(al[0] + be[1], al[1] - be[0]);
    let z1 = Complex64::new(al[2], be[2]);
    let w1 = Complex64::new(w[0], w[1]);
    ComplexState {
        x1,
        x2: x1.conj(),
        y1,
        y2: y1.conj(),
        z1,
        z2: z1.conj(),
        w1,
        w2: w1.conj(),
        w3: Complex64::new(w[2], 0.0),
    }
}

/// Inverse chart map. Fails when the imaginary residuals exceed `tol`
/// (absolute, per component), which signals a bad sign branch upstream.
pub fn from_complex(cs: &ComplexState, tol: f64) -> Result<PhaseState> {
    let half = Complex64::new(0.5, 0.0);
    let a_minus = (cs.x1 + cs.x2) * half; // alpha1 - beta2
    let a_plus = (cs.y1 + cs.y2) * half; // alpha1 + beta2
    let s_plus = (cs.x1 - cs.x2) * half / I; // alpha2 + beta1
    let s_minus = (cs.y1 - cs.y2) * half / I; // alpha2 - beta1
    let al3 = (cs.z1 + cs.z2) * half;
    let be3 = (cs.z1 - cs.z2) * half / I;
    let om1 = (cs.w1 + cs.w2) * half;
    let om2 = (cs.w1 - cs.w2) * half / I;

    let comps = [
        (a_minus + a_plus) * half, // alpha1
        (s_plus + s_minus) * half, // alpha2
        al3,                       // alpha3
        (s_plus - s_minus) * half, // beta1
        (a_plus - a_minus) * half, // beta2
        be3,                       // beta3
        om1,
        om2,
        cs.w3,
    ];
    let max_imag = comps.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if max_imag > tol {
        return Err(Error::RealityViolation {
            context: "from_complex",
            max_imag,
            tol,
        });
    }
    Ok(PhaseState {
        omega: Vec3([comps[6].re, comps[7].re, comps[8].re]),
        alpha: Vec3([comps[0].re, comps[1].re, comps[2].re]),
        beta: Vec3([comps[3].re, comps[4].re, comps[5].re]),
    })
}

/// The first integrals H, K, G in chart variables.
pub fn complex_integrals(
    cs: &ComplexState,
    params: &BodyParams,
) -> (Complex64, Complex64, Complex64) {
    let p2 = params.p2;
    let r2 = params.r2;
    let h = 0.5 * cs.w3 * cs.w3 + cs.w1 * cs.w2 - 0.5 * (cs.y1 + cs.y2);
    let k = (cs.w1 * cs.w1 + cs.x1) * (cs.w2 * cs.w2 + cs.x2);
    let g = 0.25 * (p2 - cs.x1 * cs.x2) * cs.w3 * cs.w3
        + 0.5 * (cs.x2 * cs.z1 * cs.w1 + cs.x1 * cs.z2 * cs.w2) * cs.w3
        + 0.25 * (cs.x2 * cs.w1 + cs.y1 * cs.w2) * (cs.y2 * cs.w1 + cs.x1 * cs.w2)
        - 0.25 * p2 * (cs.y1 + cs.y2)
        + 0.25 * r2 * (cs.x1 + cs.x2);
    (h, k, g)
}

/// Residuals of the geometric constraints in chart variables:
/// `z1^2 + x1 y2 - r^2`, `z2^2 + x2 y1 - r^2`,
/// `x1 x2 + y1 y2 + 2 z1 z2 - 2 p^2`.
pub fn complex_constraint_residuals(
    cs: &ComplexState,
    params: &BodyParams,
) -> (Complex64, Complex64, Complex64) {
    let r2: Complex64 = params.r2.into();
    let p2: Complex64 = params.p2.into();
    (
        cs.z1 * cs.z1 + cs.x1 * cs.y2 - r2,
        cs.z2 * cs.z2 + cs.x2 * cs.y1 - r2,
        cs.x1 * cs.x2 + cs.y1 * cs.y2 + 2.0 * cs.z1 * cs.z2 - 2.0 * p2,
    )
}

pub fn max_constraint_residual(cs: &ComplexState, params: &BodyParams) -> f64 {
    let (c1, c2, c3) = complex_constraint_residuals(cs, params);
    c1.norm().max(c2.norm()).max(c3.norm())
}

/// Right-hand side of the complexified flow in the chart, written with the
/// derivative taken with respect to `i t` (so the pushforward of the real
/// flow equals `i` times this field). Kept as a cross-check only; the
/// production integration path is the real flow.
pub fn complex_flow_rhs(cs: &ComplexState) -> ComplexState {
    let half = Complex64::new(0.5, 0.0);
    ComplexState {
        x1: -cs.x1 * cs.w3 + cs.z1 * cs.w1,
        x2: cs.x2 * cs.w3 - cs.z2 * cs.w2,
        y1: -cs.y1 * cs.w3 + cs.z2 * cs.w1,
        y2: cs.y2 * cs.w3 - cs.z1 * cs.w2,
        z1: (cs.x1 * cs.w2 - cs.y2 * cs.w1) * half,
        z2: (-cs.x2 * cs.w1 + cs.y1 * cs.w2) * half,
        w1: (-cs.w1 * cs.w3 - cs.z1) * half,
        w2: (cs.w2 * cs.w3 + cs.z2) * half,
        w3: (cs.y2 - cs.y1) * half,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rigid::{eom_rhs, general_integrals};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> BodyParams {
        BodyParams::new(1.0, 0.4).unwrap()
    }

    #[test]
    fn rest_state_image() {
        let st = PhaseState::new(
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.4, 0.0),
        );
        let cs = to_complex(&st);
        assert!((cs.x1 - Complex64::from(0.6)).norm() < 1e-15);
        assert!((cs.y1 - Complex64::from(1.4)).norm() < 1e-15);
        assert!(cs.z1.norm() < 1e-15 && cs.w1.norm() < 1e-15 && cs.w3.norm() < 1e-15);
        assert_eq!(cs.x2, cs.x1.conj());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = params();
        for _ in 0..1000 {
            let st = PhaseState::random_on_p(&mut rng, &p);
            let back = from_complex(&to_complex(&st), 1e-14).unwrap();
            assert!(back.max_abs_diff(&st) < 1e-14);
        }
    }

    #[test]
    fn integrals_agree_with_real_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = params();
        for _ in 0..1000 {
            let st = PhaseState::random_on_p(&mut rng, &p);
            let iv = general_integrals(&st, &p);
            let (h, k, g) = complex_integrals(&to_complex(&st), &p);
            assert!((h - iv.h).norm() < 1e-12);
            assert!((k - iv.k).norm() < 1e-12);
            assert!((g - iv.g).norm() < 1e-12);
        }
    }

    #[test]
    fn constraints_vanish_on_p_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = params();
        for _ in 0..1000 {
            let st = PhaseState::random_on_p(&mut rng, &p);
            assert!(max_constraint_residual(&to_complex(&st), &p) < 1e-12);
        }
    }

    #[test]
    fn k_reduces_to_x1x2_at_zero_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = params();
        let mut st = PhaseState::random_on_p(&mut rng, &p);
        st.omega = Vec3::ZERO;
        let cs = to_complex(&st);
        let (_, k, _) = complex_integrals(&cs, &p);
        assert!((k - cs.x1 * cs.x2).norm() < 1e-14);
    }

    #[test]
    fn reality_violation_is_reported() {
        let st = PhaseState::new(
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.4, 0.0),
        );
        let mut cs = to_complex(&st);
        cs.x2 += Complex64::new(0.0, 1e-3);
        match from_complex(&cs, 1e-9) {
            Err(Error::RealityViolation { max_imag, .. }) => assert!(max_imag > 1e-4),
            other => panic!("expected reality violation, got {other:?}"),
        }
    }

    #[test]
    fn constraint_residual_responds_polynomially_to_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = params();
        let st = PhaseState::random_on_p(&mut rng, &p);
        let cs = to_complex(&st);
        let delta = Complex64::new(3e-2, -1e-2);
        let mut pert = cs;
        pert.z1 += delta;
        let (c1, _, _) = complex_constraint_residuals(&pert, &p);
        let expected = 2.0 * cs.z1 * delta + delta * delta;
        assert!((c1 - expected).norm() < 1e-14);
    }

    #[test]
    fn complex_flow_matches_pushforward_up_to_factor_i() {
        // Measured convention: d/dt of the chart variables equals
        // +i times the d/d(it) field above.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = params();
        for _ in 0..100 {
            let st = PhaseState::random_on_p(&mut rng, &p);
            let cs = to_complex(&st);
            let d_real = to_complex(&eom_rhs(&st));
            let f = complex_flow_rhs(&cs);
            let pairs = [
                (d_real.x1, f.x1),
                (d_real.y1, f.y1),
                (d_real.z1, f.z1),
                (d_real.w1, f.w1),
                (d_real.w3, f.w3),
            ];
            for (dv, fv) in pairs {
                assert!((dv - I * fv).norm() < 1e-12, "factor-i tangency failed");
            }
        }
    }
}
