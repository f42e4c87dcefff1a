//! Real-variable dynamics of the top in two constant fields: equations of
//! motion, general and geometric first integrals, field-pair invariants and
//! the normalizing automorphism of the field frame.

use rand::Rng;

use crate::error::{Error, Result};

/// Three real components in the paper's nondimensional units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3([x, y, z])
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        let a = self.0;
        let b = other.0;
        Vec3([
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ])
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, c: f64) -> Vec3 {
        Vec3([c * self.0[0], c * self.0[1], c * self.0[2]])
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, other: Vec3) -> Vec3 {
        Vec3([
            self.0[0] + other.0[0],
            self.0[1] + other.0[1],
            self.0[2] + other.0[2],
        ])
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, other: Vec3) -> Vec3 {
        Vec3([
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
        ])
    }
}

/// The nine phase variables (omega, alpha, beta).
///
/// On the constrained phase space `P` the geometric integrals hold:
/// `|alpha|^2 = a^2`, `|beta|^2 = b^2`, `alpha . beta = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseState {
    pub omega: Vec3,
    pub alpha: Vec3,
    pub beta: Vec3,
}

impl PhaseState {
    pub fn new(omega: Vec3, alpha: Vec3, beta: Vec3) -> PhaseState {
        PhaseState { omega, alpha, beta }
    }

    /// Flat layout `[omega, alpha, beta]` used by the integrator.
    pub fn to_array(&self) -> [f64; 9] {
        let mut y = [0.0; 9];
        y[0..3].copy_from_slice(&self.omega.0);
        y[3..6].copy_from_slice(&self.alpha.0);
        y[6..9].copy_from_slice(&self.beta.0);
        y
    }

    pub fn from_slice(y: &[f64]) -> PhaseState {
        assert_eq!(y.len(), 9, "phase state needs 9 components");
        PhaseState {
            omega: Vec3([y[0], y[1], y[2]]),
            alpha: Vec3([y[3], y[4], y[5]]),
            beta: Vec3([y[6], y[7], y[8]]),
        }
    }

    pub fn max_abs_diff(&self, other: &PhaseState) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Random state on `P` for the given field magnitudes: `|alpha| = a`,
    /// `beta` orthogonal with `|beta| = b`, omega standard normal.
    pub fn random_on_p<R: Rng + ?Sized>(rng: &mut R, params: &BodyParams) -> PhaseState {
        let gauss = |rng: &mut R| {
            // Box-Muller; avoids a rand_distr dependency for one sampler.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (-2.0 * u1.ln()).sqrt() * u2.cos()
        };
        loop {
            let mut alpha = Vec3([gauss(rng), gauss(rng), gauss(rng)]);
            if alpha.norm() < 1e-6 {
                continue;
            }
            alpha = alpha.scale(params.a / alpha.norm());
            let v = Vec3([gauss(rng), gauss(rng), gauss(rng)]);
            let perp = v - alpha.scale(v.dot(alpha) / alpha.norm_sq());
            if perp.norm() < 1e-6 {
                continue;
            }
            let beta = perp.scale(params.b / perp.norm());
            let omega = Vec3([gauss(rng), gauss(rng), gauss(rng)]);
            return PhaseState { omega, alpha, beta };
        }
    }
}

/// Field magnitudes and the derived invariants `p^2 = a^2 + b^2`,
/// `r^2 = a^2 - b^2` of the orthogonalized pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyParams {
    pub a: f64,
    pub b: f64,
    pub p2: f64,
    pub r2: f64,
}

impl BodyParams {
    /// Requires `a > 0` and `a > b >= 0`. `b = 0` is the classical
    /// Kowalevski limit; it is accepted here but rejected by the
    /// separation-of-variables modules.
    pub fn new(a: f64, b: f64) -> Result<BodyParams> {
        if a <= 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::Input(format!("need finite a > 0, got a = {a}")));
        }
        if !(b >= 0.0 && a > b) {
            return Err(Error::Input(format!(
                "need a > b >= 0, got a = {a}, b = {b}"
            )));
        }
        Ok(BodyParams {
            a,
            b,
            p2: a * a + b * b,
            r2: a * a - b * b,
        })
    }

    pub fn p(&self) -> f64 {
        self.p2.sqrt()
    }

    pub fn r(&self) -> f64 {
        self.r2.sqrt()
    }

    pub fn r4(&self) -> f64 {
        self.r2 * self.r2
    }
}

/// Constants of the three general first integrals H, K, G.
///
/// `K` is a sum of two squares, so `k >= 0` on the real phase space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegralValues {
    pub h: f64,
    pub k: f64,
    pub g: f64,
}

/// Right-hand side of the equations of motion:
/// `2 domega1 = omega2 omega3 + beta3`, `2 domega2 = -omega1 omega3 - alpha3`,
/// `domega3 = alpha2 - beta1`, `dalpha = alpha x omega`, `dbeta = beta x omega`.
pub fn eom_rhs(state: &PhaseState) -> PhaseState {
    let w = state.omega.0;
    let al = state.alpha.0;
    let be = state.beta.0;
    PhaseState {
        omega: Vec3([
            0.5 * (w[1] * w[2] + be[2]),
            -0.5 * (w[0] * w[2] + al[2]),
            al[1] - be[0],
        ]),
        alpha: state.alpha.cross(state.omega),
        beta: state.beta.cross(state.omega),
    }
}

/// Flat-slice version of [`eom_rhs`] for the integrator.
pub fn eom_rhs_flat(y: &[f64], dy: &mut [f64]) {
    let d = eom_rhs(&PhaseState::from_slice(y));
    dy.copy_from_slice(&d.to_array());
}

/// The general first integrals H, K, G evaluated on a real state.
pub fn general_integrals(state: &PhaseState, params: &BodyParams) -> IntegralValues {
    let w = state.omega.0;
    let al = state.alpha.0;
    let be = state.beta.0;
    let ga = state.alpha.cross(state.beta).0;
    let h = w[0] * w[0] + w[1] * w[1] + 0.5 * w[2] * w[2] - (al[0] + be[1]);
    let k = {
        let u = w[0] * w[0] - w[1] * w[1] + al[0] - be[1];
        let v = 2.0 * w[0] * w[1] + al[1] + be[0];
        u * u + v * v
    };
    let g = {
        let ma = al[0] * w[0] + al[1] * w[1] + 0.5 * al[2] * w[2];
        let mb = be[0] * w[0] + be[1] * w[1] + 0.5 * be[2] * w[2];
        let mg = ga[0] * w[0] + ga[1] * w[1] + 0.5 * ga[2] * w[2];
        ma * ma + mb * mb + w[2] * mg - al[0] * params.b * params.b - be[1] * params.a * params.a
    };
    IntegralValues { h, k, g }
}

/// Residuals of the geometric integrals:
/// `(|alpha|^2 - a^2, |beta|^2 - b^2, alpha . beta)`.
pub fn geometric_residuals(state: &PhaseState, params: &BodyParams) -> (f64, f64, f64) {
    (
        state.alpha.norm_sq() - params.a * params.a,
        state.beta.norm_sq() - params.b * params.b,
        state.alpha.dot(state.beta),
    )
}

pub fn max_geometric_residual(state: &PhaseState, params: &BodyParams) -> f64 {
    let (g1, g2, g3) = geometric_residuals(state, params);
    g1.abs().max(g2.abs()).max(g3.abs())
}

/// Invariants of an arbitrary field pair:
/// `p = sqrt(alpha^2 + beta^2)`, `r = ((alpha^2 - beta^2)^2 + 4 (alpha.beta)^2)^{1/4}`.
///
/// `p >= r >= 0`; `p = r` iff `alpha x beta = 0`, and `r = 0` is the
/// reducible Yehia case.
pub fn field_invariants(alpha: Vec3, beta: Vec3) -> (f64, f64) {
    let sa = alpha.norm_sq();
    let sb = beta.norm_sq();
    let d = alpha.dot(beta);
    let p = (sa + sb).sqrt();
    let r = ((sa - sb) * (sa - sb) + 4.0 * d * d).sqrt().sqrt();
    (p, r)
}

/// The linear automorphism of R^9 rotating the field pair by `theta` in the
/// (alpha, beta)-plane and the body frame by `theta` about the third axis.
/// It preserves the equations of motion and the pair invariants.
pub fn rotate_field_frame(state: &PhaseState, theta: f64) -> PhaseState {
    let (st, ct) = theta.sin_cos();
    let body = |v: Vec3| Vec3([ct * v.0[0] - st * v.0[1], st * v.0[0] + ct * v.0[1], v.0[2]]);
    let ar = body(state.alpha);
    let br = body(state.beta);
    PhaseState {
        omega: body(state.omega),
        alpha: ar.scale(ct) - br.scale(st),
        beta: ar.scale(st) + br.scale(ct),
    }
}

/// Rotates a generic state into the normalized frame with
/// `alpha' . beta' = 0` and `|alpha'| >= |beta'|`; returns the rotated state
/// and the angle used. Fails on `alpha x beta = 0`, where no unique
/// orthogonalizing angle exists.
pub fn normalize_field_frame(state: &PhaseState) -> Result<(PhaseState, f64)> {
    let cross = state.alpha.cross(state.beta);
    let scale = state.alpha.norm_sq().max(state.beta.norm_sq()).max(1e-300);
    if cross.norm_sq() <= 1e-28 * scale * scale {
        return Err(Error::DegenerateFieldPair);
    }
    // (|a'|^2-|b'|^2, 2 a'.b') is the rotation of (u, v) by 2 theta; the
    // choice below sends it to (+sqrt(u^2+v^2), 0), so |alpha'| >= |beta'|.
    let u = state.alpha.norm_sq() - state.beta.norm_sq();
    let v = 2.0 * state.alpha.dot(state.beta);
    let theta = -0.5 * v.atan2(u);
    Ok((rotate_field_frame(state, theta), theta))
}

/// Numerical equilibrium test: `|eom_rhs| < tol` in the max norm.
pub fn is_equilibrium(state: &PhaseState, tol: f64) -> bool {
    let d = eom_rhs(state).to_array();
    d.iter().fold(0.0f64, |m, x| m.max(x.abs())) < tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> BodyParams {
        BodyParams::new(1.0, 0.4).unwrap()
    }

    #[test]
    fn equilibrium_state_has_zero_rhs() {
        let st = PhaseState::new(
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.4, 0.0),
        );
        let d = eom_rhs(&st);
        assert_eq!(d.to_array(), [0.0; 9]);
        assert!(is_equilibrium(&st, 1e-14));
    }

    #[test]
    fn rhs_matches_componentwise_form() {
        let st = PhaseState::new(
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.4, 0.0),
        );
        let d = eom_rhs(&st);
        // dalpha = alpha x omega with omega = e3: (a2, -a1, 0)
        assert_eq!(d.alpha.0, [0.0, -1.0, 0.0]);
        assert_eq!(d.beta.0, [0.4, 0.0, 0.0]);
    }

    #[test]
    fn integrals_at_rest_state() {
        let st = PhaseState::new(
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.4, 0.0),
        );
        let iv = general_integrals(&st, &params());
        assert!((iv.h - (-1.4)).abs() < 1e-15);
        assert!((iv.k - 0.36).abs() < 1e-15);
        assert!((iv.g - (-0.56)).abs() < 1e-15);
    }

    #[test]
    fn k_is_nonnegative_and_geometry_residuals_detect_tilt() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = params();
        for _ in 0..200 {
            let st = PhaseState::random_on_p(&mut rng, &p);
            assert!(general_integrals(&st, &p).k >= 0.0);
            assert!(max_geometric_residual(&st, &p) < 1e-12);
        }
        let tilted = PhaseState::new(
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.1, 0.4, 0.0),
        );
        let (_, _, g3) = geometric_residuals(&tilted, &p);
        assert!((g3 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn field_invariants_examples() {
        let (p, r) = field_invariants(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.4, 0.0));
        assert!((p - 1.16f64.sqrt()).abs() < 1e-12);
        assert!((r - 0.84f64.sqrt()).abs() < 1e-12);
        // parallel pair: p = r
        let (p, r) = field_invariants(Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        assert!((p - 2f64.sqrt()).abs() < 1e-12);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        // reducible Yehia case: r = 0
        let (p, r) = field_invariants(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
        assert!((p - 2f64.sqrt()).abs() < 1e-12);
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn automorphism_commutes_with_flow_and_preserves_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = params();
        for _ in 0..100 {
            let st = PhaseState::random_on_p(&mut rng, &p);
            let theta = rng.gen_range(-3.0..3.0);
            let lhs = eom_rhs(&rotate_field_frame(&st, theta));
            let rhs = rotate_field_frame(&eom_rhs(&st), theta);
            assert!(lhs.max_abs_diff(&rhs) < 1e-13);
            let (p0, r0) = field_invariants(st.alpha, st.beta);
            let rot = rotate_field_frame(&st, theta);
            let (p1, r1) = field_invariants(rot.alpha, rot.beta);
            assert!((p0 - p1).abs() < 1e-12 && (r0 - r1).abs() < 1e-12);
            // H and K are invariant functions of the automorphism; G is a
            // first integral of the rotated system but takes a different
            // value (the geometric integrals it mixes with move).
            let v0 = general_integrals(&st, &p);
            let v1 = general_integrals(&rot, &p);
            assert!((v0.h - v1.h).abs() < 1e-10);
            assert!((v0.k - v1.k).abs() < 1e-10);
        }
    }

    #[test]
    fn rhs_matches_flow_map_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = params();
        let cfg = crate::ode::IntegrationConfig::default();
        for _ in 0..20 {
            let st = PhaseState::random_on_p(&mut rng, &p);
            let dt = 1e-6;
            let traj = crate::ode::integrate_adaptive(
                |_t, y, dy| eom_rhs_flat(y, dy),
                &st.to_array(),
                (0.0, dt),
                &cfg,
            )
            .unwrap();
            let end = PhaseState::from_slice(traj.last_state());
            let d = eom_rhs(&st);
            let a0 = st.to_array();
            let a1 = end.to_array();
            let da = d.to_array();
            for i in 0..9 {
                let fd = (a1[i] - a0[i]) / dt;
                assert!((fd - da[i]).abs() < 1e-5 * (1.0 + da[i].abs()));
            }
        }
    }

    #[test]
    fn normalize_orthogonalizes_and_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let st = PhaseState {
                omega: Vec3([
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]),
                alpha: Vec3([
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]),
                beta: Vec3([
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]),
            };
            if st.alpha.cross(st.beta).norm() < 1e-3 {
                continue;
            }
            let (out, _theta) = normalize_field_frame(&st).unwrap();
            assert!(out.alpha.dot(out.beta).abs() < 1e-12);
            assert!(out.alpha.norm_sq() >= out.beta.norm_sq() - 1e-12);
            let (p0, r0) = field_invariants(st.alpha, st.beta);
            let (p1, r1) = field_invariants(out.alpha, out.beta);
            assert!((p0 - p1).abs() < 1e-12 && (r0 - r1).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_identity_on_orthogonal_ordered_pair() {
        let st = PhaseState::new(
            Vec3::new(0.3, -0.2, 0.5),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.4, 0.0),
        );
        let (out, theta) = normalize_field_frame(&st).unwrap();
        assert!(theta.abs() < 1e-14);
        assert!(out.max_abs_diff(&st) < 1e-14);
    }

    #[test]
    fn normalize_rejects_parallel_pair() {
        let st = PhaseState::new(
            Vec3::ZERO,
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
        );
        assert!(matches!(
            normalize_field_frame(&st),
            Err(Error::DegenerateFieldPair)
        ));
    }

    #[test]
    fn rhs_is_tangent_to_p() {
        // d/dt of each geometric residual along the flow vanishes identically.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = params();
        for _ in 0..1000 {
            let st = PhaseState::random_on_p(&mut rng, &p);
            let d = eom_rhs(&st);
            let r1 = 2.0 * st.alpha.dot(d.alpha);
            let r2 = 2.0 * st.beta.dot(d.beta);
            let r3 = st.alpha.dot(d.beta) + d.alpha.dot(st.beta);
            assert!(r1.abs() < 1e-13 && r2.abs() < 1e-13 && r3.abs() < 1e-13);
        }
    }

    #[test]
    fn body_params_validation() {
        assert!(BodyParams::new(1.0, 0.4).is_ok());
        assert!(BodyParams::new(1.0, 0.0).is_ok()); // classical limit accepted here
        assert!(BodyParams::new(0.4, 1.0).is_err());
        assert!(BodyParams::new(-1.0, 0.0).is_err());
        assert!(BodyParams::new(1.0, 1.0).is_err());
    }
}
