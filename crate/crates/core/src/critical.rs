//! Membership residuals and partial first integrals for the three critical
//! subsystems M, N, O of the momentum mapping, and the bifurcation relations
//! tying the constants (h, k, g) on each subsystem.

use num_complex::Complex64;

use crate::chart::ComplexState;
use crate::error::{Error, Result};
use crate::rigid::{BodyParams, IntegralValues};

/// Constants (m, l) of the partial integrals M, L on the second critical
/// subsystem. `m != 0` is required: the separation polynomials divide by m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsystemNConstants {
    pub m: f64,
    pub ell: f64,
}

impl SubsystemNConstants {
    pub fn new(m: f64, ell: f64) -> Result<SubsystemNConstants> {
        if !m.is_finite() || !ell.is_finite() {
            return Err(Error::Input("subsystem N constants must be finite".into()));
        }
        if m.abs() < 1e-12 {
            return Err(Error::Input(format!(
                "subsystem N constant m must satisfy |m| >= 1e-12, got {m}"
            )));
        }
        Ok(SubsystemNConstants { m, ell })
    }
}

/// Constants (s, tau) of the partial integrals S, T on the third critical
/// subsystem, with the derived quantities of the separation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsystemOConstants {
    pub s: f64,
    pub tau: f64,
}

/// Derived constants: `sigma = tau^2 - 2 p^2 tau + r^4`, `chi = sqrt(k) >= 0`
/// and `kappa = sqrt(sigma)` (real or pure imaginary).
#[derive(Clone, Copy, Debug)]
pub struct OConstantsDerived {
    pub sigma: f64,
    pub chi: f64,
    pub kappa: Complex64,
}

impl SubsystemOConstants {
    pub fn new(s: f64, tau: f64) -> Result<SubsystemOConstants> {
        if !s.is_finite() || !tau.is_finite() {
            return Err(Error::Input("subsystem O constants must be finite".into()));
        }
        if s.abs() < 1e-12 {
            return Err(Error::DivisionByZero(
                "subsystem O constant s (bifurcation relations divide by s)",
            ));
        }
        Ok(SubsystemOConstants { s, tau })
    }

    /// `chi^2 = k = sigma / (4 s^2) + tau`; fails when k < 0, i.e. the
    /// constants are not realized by any real motion.
    pub fn derived(&self, params: &BodyParams) -> Result<OConstantsDerived> {
        let sigma = self.sigma(params);
        let chi2 = sigma / (4.0 * self.s * self.s) + self.tau;
        if chi2 < 0.0 {
            return Err(Error::Domain(format!(
                "k = {chi2:.6e} < 0: no real motion for (s, tau) = ({}, {})",
                self.s, self.tau
            )));
        }
        Ok(OConstantsDerived {
            sigma,
            chi: chi2.sqrt(),
            kappa: Complex64::from(sigma).sqrt(),
        })
    }

    pub fn sigma(&self, params: &BodyParams) -> f64 {
        self.tau * self.tau - 2.0 * params.p2 * self.tau + params.r4()
    }
}

/// Residuals of the first critical subsystem: `(w1^2 + x1, w2^2 + x2)`.
pub fn residual_m(cs: &ComplexState) -> (Complex64, Complex64) {
    (cs.w1 * cs.w1 + cs.x1, cs.w2 * cs.w2 + cs.x2)
}

/// Scale-free version of [`residual_m`] (largest constituent term
/// normalizes each component).
pub fn residual_m_normalized(cs: &ComplexState) -> f64 {
    let (r1, r2) = residual_m(cs);
    let s1 = (cs.w1 * cs.w1).norm().max(cs.x1.norm()).max(1.0);
    let s2 = (cs.w2 * cs.w2).norm().max(cs.x2.norm()).max(1.0);
    (r1.norm() / s1).max(r2.norm() / s2)
}

/// The Bogoyavlensky integral `F = w1 w2 w3 + z2 w1 + z1 w2`, a partial
/// first integral on M; real-valued on images of real states.
pub fn integral_f(cs: &ComplexState) -> Complex64 {
    cs.w1 * cs.w2 * cs.w3 + cs.z2 * cs.w1 + cs.z1 * cs.w2
}

/// Residuals of the invariant relations of the second critical subsystem:
/// `x1 x2 w3 - (x2 z1 w1 + x1 z2 w2)` and
/// `(x2/x1)(w1^2 + x1) - (x1/x2)(w2^2 + x2)`.
pub fn residual_n(cs: &ComplexState) -> Result<(Complex64, Complex64)> {
    if cs.x1.norm() == 0.0 || cs.x2.norm() == 0.0 {
        return Err(Error::DivisionByZero("residual_n: x1 x2 = 0"));
    }
    let r1 = cs.x1 * cs.x2 * cs.w3 - (cs.x2 * cs.z1 * cs.w1 + cs.x1 * cs.z2 * cs.w2);
    let r2 = (cs.x2 / cs.x1) * (cs.w1 * cs.w1 + cs.x1) - (cs.x1 / cs.x2) * (cs.w2 * cs.w2 + cs.x2);
    Ok((r1, r2))
}

pub fn residual_n_normalized(cs: &ComplexState) -> Result<f64> {
    let (r1, r2) = residual_n(cs)?;
    let s1 = (cs.x1 * cs.x2 * cs.w3)
        .norm()
        .max((cs.x2 * cs.z1 * cs.w1).norm())
        .max((cs.x1 * cs.z2 * cs.w2).norm())
        .max(1.0);
    let s2 = ((cs.x2 / cs.x1) * (cs.w1 * cs.w1 + cs.x1))
        .norm()
        .max(((cs.x1 / cs.x2) * (cs.w2 * cs.w2 + cs.x2)).norm())
        .max(1.0);
    Ok((r1.norm() / s1).max(r2.norm() / s2))
}

/// The pair of almost-everywhere independent integrals (M, L) on the second
/// critical subsystem. The square root in L is the principal value, so the
/// projection modulus `x = sqrt(x1 x2)` is nonnegative on conjugate pairs.
pub fn integrals_n(cs: &ComplexState, params: &BodyParams) -> Result<SubsystemNConstants> {
    if cs.x1.norm() == 0.0 || cs.x2.norm() == 0.0 {
        return Err(Error::DivisionByZero("integrals_n: x1 x2 = 0"));
    }
    let prod = cs.x1 * cs.x2;
    if prod.re < 0.0 && prod.im.abs() < 1e-12 * prod.norm() {
        return Err(Error::BranchCut(
            "integrals_n: x1 x2 on the negative real axis of the principal square root",
        ));
    }
    let m_val = ((cs.x2 / cs.x1) * (cs.w1 * cs.w1 + cs.x1)
        + (cs.x1 / cs.x2) * (cs.w2 * cs.w2 + cs.x2))
        / (2.0 * params.r2);
    let l_val = (cs.w1 * cs.w2 + (cs.x1 * cs.x2 + cs.z1 * cs.z2) * m_val) / prod.sqrt();
    Ok(SubsystemNConstants {
        m: m_val.re,
        ell: l_val.re,
    })
}

/// Residuals of the invariant relations of the third critical subsystem.
pub fn residual_o(cs: &ComplexState) -> Result<(Complex64, Complex64)> {
    if cs.w1.norm() == 0.0 || cs.w2.norm() == 0.0 {
        return Err(Error::DivisionByZero("residual_o: w1 w2 = 0"));
    }
    let (x1, x2, y1, y2, z1, z2) = (cs.x1, cs.x2, cs.y1, cs.y2, cs.z1, cs.z2);
    let (w1, w2, w3) = (cs.w1, cs.w2, cs.w3);
    let r1 = (w2 * x1 + w1 * y2 + w3 * z1) / w1 - (w1 * x2 + w2 * y1 + w3 * z2) / w2;
    let r2 = (w2 * z1 + w1 * z2) * w3 * w3
        + (w2 * z1 * z1 / w1
            + w1 * z2 * z2 / w2
            + w1 * w2 * (y1 + y2)
            + x1 * w2 * w2
            + x2 * w1 * w1)
            * w3
        + w2 * w2 * x1 * z1 / w1
        + w1 * w1 * x2 * z2 / w2
        + x1 * z2 * w2
        + x2 * z1 * w1
        + (w1 * z2 - w2 * z1) * (y1 - y2);
    Ok((r1, r2))
}

/// Scale-free residual for O membership; the second relation mixes degrees
/// 2 through 4 in the phase variables, so each is normalized by its largest
/// constituent term.
pub fn residual_o_normalized(cs: &ComplexState) -> Result<f64> {
    let (r1, r2) = residual_o(cs)?;
    let (x1, x2, y1, y2, z1, z2) = (cs.x1, cs.x2, cs.y1, cs.y2, cs.z1, cs.z2);
    let (w1, w2, w3) = (cs.w1, cs.w2, cs.w3);
    let s1 = [
        (w2 * x1 + w1 * y2 + w3 * z1) / w1,
        (w1 * x2 + w2 * y1 + w3 * z2) / w2,
    ]
    .iter()
    .map(|v| v.norm())
    .fold(1.0f64, f64::max);
    let s2 = [
        (w2 * z1 + w1 * z2) * w3 * w3,
        w2 * z1 * z1 / w1 * w3,
        w1 * z2 * z2 / w2 * w3,
        w1 * w2 * (y1 + y2) * w3,
        x1 * w2 * w2 * w3,
        x2 * w1 * w1 * w3,
        w2 * w2 * x1 * z1 / w1,
        w1 * w1 * x2 * z2 / w2,
        x1 * z2 * w2,
        x2 * z1 * w1,
        (w1 * z2 - w2 * z1) * (y1 - y2),
    ]
    .iter()
    .map(|v| v.norm())
    .fold(1.0f64, f64::max);
    Ok((r1.norm() / s1).max(r2.norm() / s2))
}

/// The pair of almost-everywhere independent integrals (S, T) on the third
/// critical subsystem.
pub fn integrals_o(cs: &ComplexState) -> Result<SubsystemOConstants> {
    if cs.w1.norm() == 0.0 || cs.w2.norm() == 0.0 {
        return Err(Error::DivisionByZero("integrals_o: w1 w2 = 0"));
    }
    let s = -0.25
        * ((cs.y2 * cs.w1 + cs.x1 * cs.w2 + cs.z1 * cs.w3) / cs.w1
            + (cs.x2 * cs.w1 + cs.y1 * cs.w2 + cs.z2 * cs.w3) / cs.w2);
    let t = 0.5
        * (cs.w1 * (cs.x2 * cs.w1 + cs.y1 * cs.w2 + cs.z2 * cs.w3)
            + cs.w2 * (cs.y2 * cs.w1 + cs.x1 * cs.w2 + cs.z1 * cs.w3))
        + cs.x1 * cs.x2
        + cs.z1 * cs.z2;
    Ok(SubsystemOConstants { s: s.re, tau: t.re })
}

/// Constants of the general integrals on `{S = s, T = tau}`:
/// `h = (p^2 - tau)/(2s) + s`,
/// `k = (tau^2 - 2 p^2 tau + r^4)/(4 s^2) + tau`,
/// `g = (p^4 - r^4)/(4s) + (p^2 - tau) s / 2`.
pub fn bifurcation_constants_o(
    c: &SubsystemOConstants,
    params: &BodyParams,
) -> Result<IntegralValues> {
    if c.s == 0.0 {
        return Err(Error::DivisionByZero("bifurcation_constants_o: s = 0"));
    }
    let p2 = params.p2;
    let r4 = params.r4();
    let h = (p2 - c.tau) / (2.0 * c.s) + c.s;
    let k = (c.tau * c.tau - 2.0 * p2 * c.tau + r4) / (4.0 * c.s * c.s) + c.tau;
    let g = (p2 * p2 - r4) / (4.0 * c.s) + 0.5 * (p2 - c.tau) * c.s;
    Ok(IntegralValues { h, k, g })
}

/// Residual of the bifurcation relation on the second critical subsystem,
/// `(p^2 h - 2 g)^2 - r^4 k`.
pub fn bifurcation_residual_n(iv: &IntegralValues, params: &BodyParams) -> f64 {
    let u = params.p2 * iv.h - 2.0 * iv.g;
    u * u - params.r4() * iv.k
}
