//! Elliptic separation of variables for the second critical subsystem: the
//! separation polynomials, the admissible region, the separated equations
//! `ds1/dt = (1/2) S1 phi1`, `ds2/dt = (1/2) S2 phi2`, and the full
//! reconstruction of the phase state with sign-branch bookkeeping for the
//! four radicals `S1 = sqrt(s1^2 - a^2)`, `phi1 = sqrt(-Phi(s1))`,
//! `S2 = sqrt(b^2 - s2^2)`, `phi2 = sqrt(Phi(s2))`.

use num_complex::Complex64;

use crate::chart::ComplexState;
use crate::critical::{residual_n_normalized, SubsystemNConstants};
use crate::error::{Error, Result};
use crate::ode::{integrate_turning, IntegrationConfig, SeparatedRun, TurningFlow};
use crate::rigid::{max_geometric_residual, BodyParams, PhaseState, Vec3};
use crate::Sign;

pub const BIT_S1: usize = 0;
pub const BIT_PHI1: usize = 1;
pub const BIT_S2: usize = 2;
pub const BIT_PHI2: usize = 3;

/// Separated coordinates plus the sign branch of the four radicals, indexed
/// by the `BIT_*` constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeparatedStateN {
    pub s1: f64,
    pub s2: f64,
    pub signs: [Sign; 4],
}

impl SeparatedStateN {
    pub fn new(s1: f64, s2: f64, signs: [Sign; 4]) -> SeparatedStateN {
        SeparatedStateN { s1, s2, signs }
    }
}

/// `Phi(s) = 4 m s^2 - 4 l s + (l^2 - 1)/m`.
pub fn phi_n(s: f64, c: &SubsystemNConstants) -> f64 {
    4.0 * c.m * s * s - 4.0 * c.ell * s + (c.ell * c.ell - 1.0) / c.m
}

/// `Psi(s1, s2) = 4 m s1 s2 - 2 l (s1 + s2) + (l^2 - 1)/m`; `Psi(s, s) = Phi(s)`.
pub fn psi_n(s1: f64, s2: f64, c: &SubsystemNConstants) -> f64 {
    4.0 * c.m * s1 * s2 - 2.0 * c.ell * (s1 + s2) + (c.ell * c.ell - 1.0) / c.m
}

fn phi_n_deriv(s: f64, c: &SubsystemNConstants) -> f64 {
    8.0 * c.m * s - 4.0 * c.ell
}

/// The four radicands in guard order `[s1^2 - a^2, -Phi(s1), b^2 - s2^2,
/// Phi(s2)]`; all must be nonnegative for the radicals to be real.
pub fn radicands_n(s1: f64, s2: f64, c: &SubsystemNConstants, params: &BodyParams) -> [f64; 4] {
    [
        s1 * s1 - params.a * params.a,
        -phi_n(s1, c),
        params.b * params.b - s2 * s2,
        phi_n(s2, c),
    ]
}

/// Admissibility of a separated point: reality of all four radicals.
pub fn region_n(s1: f64, s2: f64, c: &SubsystemNConstants, params: &BodyParams) -> bool {
    radicands_n(s1, s2, c, params).iter().all(|&v| v >= 0.0)
}

fn ensure_separable(params: &BodyParams) -> Result<()> {
    if params.b <= 0.0 {
        return Err(Error::Input(
            "b = 0 (classical Kowalevski limit) is not supported by the separation modules".into(),
        ));
    }
    Ok(())
}

fn signed_radicals(st: &SeparatedStateN, c: &SubsystemNConstants, params: &BodyParams) -> [f64; 4] {
    let rad = radicands_n(st.s1, st.s2, c, params);
    [
        st.signs[BIT_S1].as_f64() * rad[0].max(0.0).sqrt(),
        st.signs[BIT_PHI1].as_f64() * rad[1].max(0.0).sqrt(),
        st.signs[BIT_S2].as_f64() * rad[2].max(0.0).sqrt(),
        st.signs[BIT_PHI2].as_f64() * rad[3].max(0.0).sqrt(),
    ]
}

/// The separated velocities `(ds1/dt, ds2/dt) = ((1/2) S1 phi1, (1/2) S2 phi2)`
/// with the branch's radical signs.
pub fn separated_rhs_n(
    st: &SeparatedStateN,
    c: &SubsystemNConstants,
    params: &BodyParams,
) -> Result<(f64, f64)> {
    ensure_separable(params)?;
    let rad = radicands_n(st.s1, st.s2, c, params);
    if rad.iter().any(|&v| v < -1e-9) {
        return Err(Error::Inadmissible(format!(
            "({}, {}): radicands {rad:?}",
            st.s1, st.s2
        )));
    }
    let [s1r, f1, s2r, f2] = signed_radicals(st, c, params);
    Ok((0.5 * s1r * f1, 0.5 * s2r * f2))
}

/// Reconstructs the nine phase variables from a separated state.
///
/// The angular-velocity component along the symmetry axis is
/// `omega3 = -(S2 phi1 + S1 phi2)/(s1 - s2)`; the difference form that the
/// final real display pairs with these omega1, omega2 does not satisfy the
/// invariant relations for any sign assignment (see the crate tests), while
/// this one, obtained from the complex display with one consistent radical
/// tower, lands on the subsystem for all sixteen.
pub fn reconstruct_n(
    st: &SeparatedStateN,
    c: &SubsystemNConstants,
    params: &BodyParams,
    tol: f64,
) -> Result<PhaseState> {
    ensure_separable(params)?;
    // rounding-level excursions past a turning line reconstruct as boundary
    // points (the radical is zero there)
    let rad = radicands_n(st.s1, st.s2, c, params);
    let slack = 1e-9 * (1.0 + st.s1 * st.s1).max(1.0 + st.s2 * st.s2);
    if rad.iter().any(|&v| v < -slack) {
        return Err(Error::Inadmissible(format!(
            "({}, {}) outside the accessible region; radicands {rad:?}",
            st.s1, st.s2
        )));
    }
    let state = reconstruct_n_unchecked(st, c, params);
    let geo = max_geometric_residual(&state, params);
    if geo > tol {
        return Err(Error::BranchInconsistency {
            context: "reconstruct_n: geometric residuals",
            residual: geo,
            tol,
        });
    }
    let res = residual_n_normalized(&crate::chart::to_complex(&state))?;
    if res > tol {
        return Err(Error::BranchInconsistency {
            context: "reconstruct_n: invariant relations of N",
            residual: res,
            tol,
        });
    }
    Ok(state)
}

pub(crate) fn reconstruct_n_unchecked(
    st: &SeparatedStateN,
    c: &SubsystemNConstants,
    params: &BodyParams,
) -> PhaseState {
    let (a2, b2, r) = (params.a * params.a, params.b * params.b, params.r());
    let d = st.s1 - st.s2;
    let psi = psi_n(st.s1, st.s2, c);
    let [s1r, f1, s2r, f2] = signed_radicals(st, c, params);
    let dd2 = 2.0 * d * d;
    let al1 = ((st.s1 * st.s2 - a2) * psi + s1r * s2r * f1 * f2) / dd2;
    let al2 = ((st.s1 * st.s2 - a2) * f1 * f2 - s1r * s2r * psi) / dd2;
    let be1 = -((st.s1 * st.s2 - b2) * f1 * f2 - s1r * s2r * psi) / dd2;
    let be2 = ((st.s1 * st.s2 - b2) * psi + s1r * s2r * f1 * f2) / dd2;
    let al3 = r * s1r / d;
    let be3 = r * s2r / d;
    let om1 = r * (c.ell - 2.0 * c.m * st.s1) * f2 / (2.0 * d);
    let om2 = r * (c.ell - 2.0 * c.m * st.s2) * f1 / (2.0 * d);
    let om3 = -(s2r * f1 + s1r * f2) / d;
    PhaseState {
        omega: Vec3([om1, om2, om3]),
        alpha: Vec3([al1, al2, al3]),
        beta: Vec3([be1, be2, be3]),
    }
}

/// Chart-variable form of the reconstruction, evaluated with one consistent
/// complex radical tower (`sqrt(Phi(s1)) = i phi1`, `sqrt(s2^2 - b^2) = i S2`).
/// Kept as the independent second route for cross-validation.
pub fn complex_state_n(
    st: &SeparatedStateN,
    c: &SubsystemNConstants,
    params: &BodyParams,
) -> ComplexState {
    let i = Complex64::new(0.0, 1.0);
    let d = st.s1 - st.s2;
    let psi: Complex64 = psi_n(st.s1, st.s2, c).into();
    let [s1r, f1, s2r, f2] = signed_radicals(st, c, params);
    let r2: Complex64 = params.r2.into();
    let r: Complex64 = params.r().into();
    let sq_phi1 = i * f1; // sqrt(Phi(s1)), Phi(s1) <= 0
    let sq_phi2: Complex64 = f2.into();
    let sq_s1: Complex64 = s1r.into(); // sqrt(s1^2 - a^2)
    let sq_s2 = i * s2r; // sqrt(s2^2 - b^2), s2^2 <= b^2
    let prod_phi = sq_phi1 * sq_phi2;
    let prod_s = sq_s1 * sq_s2;
    let dd2: Complex64 = (2.0 * d * d).into();
    let x1 = -r2 / dd2 * (psi + prod_phi);
    let x2 = -r2 / dd2 * (psi - prod_phi);
    let pole = 2.0 * st.s1 * st.s2 - params.p2;
    let y1 = 2.0 * (Complex64::from(pole) - 2.0 * prod_s) / (psi - prod_phi);
    let y2 = 2.0 * (Complex64::from(pole) + 2.0 * prod_s) / (psi + prod_phi);
    let z1 = r / d * (sq_s1 + sq_s2);
    let z2 = r / d * (sq_s1 - sq_s2);
    let w1 = r * (sq_phi2 - sq_phi1) / (psi - prod_phi);
    let w2 = r * (sq_phi2 + sq_phi1) / (psi + prod_phi);
    let w3 = (sq_s2 * sq_phi1 - sq_s1 * sq_phi2) / d;
    ComplexState {
        x1,
        x2,
        y1,
        y2,
        z1,
        z2,
        w1,
        w2,
        w3,
    }
}

/// Enumerates the sign assignments accepted by the branch filter at a given
/// separated point.
pub fn admissible_branches_n(
    s1: f64,
    s2: f64,
    c: &SubsystemNConstants,
    params: &BodyParams,
    tol: f64,
) -> Vec<SeparatedStateN> {
    let mut out = Vec::new();
    for bits in 0u8..16 {
        let signs = std::array::from_fn(|k| {
            if bits & (1 << k) == 0 {
                Sign::Plus
            } else {
                Sign::Minus
            }
        });
        let st = SeparatedStateN::new(s1, s2, signs);
        if reconstruct_n(&st, c, params, tol).is_ok() {
            out.push(st);
        }
    }
    out
}

struct FlowN<'a> {
    c: &'a SubsystemNConstants,
    params: &'a BodyParams,
    signs: [Sign; 4],
}

impl TurningFlow for FlowN<'_> {
    fn n_guards(&self) -> usize {
        4
    }

    fn rhs(&self, q: &[f64; 2]) -> [f64; 2] {
        let st = SeparatedStateN::new(q[0], q[1], self.signs);
        let [s1r, f1, s2r, f2] = signed_radicals(&st, self.c, self.params);
        [0.5 * s1r * f1, 0.5 * s2r * f2]
    }

    fn guard(&self, idx: usize, q: &[f64; 2]) -> f64 {
        let a2 = self.params.a * self.params.a;
        let b2 = self.params.b * self.params.b;
        match idx {
            0 => q[0] * q[0] - a2,
            1 => -phi_n(q[0], self.c),
            2 => b2 - q[1] * q[1],
            3 => phi_n(q[1], self.c),
            _ => unreachable!(),
        }
    }

    fn guard_coord(&self, idx: usize) -> usize {
        if idx < 2 {
            0
        } else {
            1
        }
    }

    fn speed_sq(&self, coord: usize, q: &[f64; 2]) -> f64 {
        let (ga, gb) = if coord == 0 { (0, 1) } else { (2, 3) };
        0.25 * self.guard(ga, q) * self.guard(gb, q)
    }

    fn speed_sq_slope(&self, idx: usize, q: &[f64; 2]) -> f64 {
        // rhs_i^2 = (1/4) * rad_a(s_i) * rad_b(s_i)
        let coord = self.guard_coord(idx);
        let s = q[coord];
        let (ga, gb) = if coord == 0 { (0, 1) } else { (2, 3) };
        let (va, vb) = (self.guard(ga, q), self.guard(gb, q));
        let da = if ga == 0 { 2.0 * s } else { -2.0 * s };
        let db = if gb == 1 {
            -phi_n_deriv(s, self.c)
        } else {
            phi_n_deriv(s, self.c)
        };
        0.25 * (da * vb + va * db)
    }

    fn flip_guard_bit(&mut self, idx: usize, _root: f64) -> usize {
        // guard order matches the bit order [S1, phi1, S2, phi2]
        self.signs[idx] = self.signs[idx].flip();
        idx
    }

    fn signs(&self) -> Vec<Sign> {
        self.signs.to_vec()
    }

    fn halt(&self, _q: &[f64; 2]) -> Option<String> {
        None
    }
}

/// Integrates the separated equations with turning-point events; the sign
/// bits flip at radicand zeros and the run records them per sample.
pub fn integrate_separated_n(
    st0: &SeparatedStateN,
    c: &SubsystemNConstants,
    params: &BodyParams,
    t_span: (f64, f64),
    cfg: &IntegrationConfig,
) -> Result<SeparatedRun> {
    ensure_separable(params)?;
    if !region_n(st0.s1, st0.s2, c, params) {
        return Err(Error::Inadmissible(format!(
            "initial point ({}, {}) outside the accessible region; radicands {:?}",
            st0.s1,
            st0.s2,
            radicands_n(st0.s1, st0.s2, c, params)
        )));
    }
    let mut flow = FlowN {
        c,
        params,
        signs: st0.signs,
    };
    integrate_turning(&mut flow, [st0.s1, st0.s2], t_span, cfg)
}

/// The separated state at sample `i` of a run.
pub fn run_state_n(run: &SeparatedRun, i: usize) -> SeparatedStateN {
    SeparatedStateN {
        s1: run.states[i][0],
        s2: run.states[i][1],
        signs: std::array::from_fn(|k| run.signs[i][k]),
    }
}
