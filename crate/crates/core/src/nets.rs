//! The two planar coordinate nets: the (s1, s2) circle net on the (x, z)
//! plane, the (t1, t2) net of tangent lines to a second-order curve on the
//! (xi, x) plane, their link, admissibility checks and the generalized
//! boundary rank test.

use nalgebra::DMatrix;

use crate::chart::ComplexState;
use crate::error::{Error, Result};
use crate::rigid::BodyParams;

/// Moduli of the chart variables: `x^2 = x1 x2`, `y^2 = y1 y2`,
/// `z^2 = z1 z2`; all nonnegative on images of real states, where they
/// satisfy `x^2 + y^2 + 2 z^2 = 2 p^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl ProjectionPoint {
    pub fn ellipsoid_residual(&self, params: &BodyParams) -> f64 {
        self.x * self.x + self.y * self.y + 2.0 * self.z * self.z - 2.0 * params.p2
    }
}

/// A point of the circle-net coordinates. On images of the phase space
/// `s1^2 >= a^2` and `s2^2 <= b^2`, so `s1 != s2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SPoint {
    pub s1: f64,
    pub s2: f64,
}

/// Roots of the tangent-line quadratic through a point of the (xi, x)
/// plane, with the conic parameters they refer to. `t1` carries the
/// `+mu x` determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TPoint {
    pub t1: f64,
    pub t2: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl TPoint {
    /// The two roots ordered `t1 >= t2`.
    pub fn sorted(&self) -> (f64, f64) {
        if self.t1 >= self.t2 {
            (self.t1, self.t2)
        } else {
            (self.t2, self.t1)
        }
    }

    /// Residual of the defining quadratic at `t`.
    pub fn quadratic_residual(&self, t: f64, xi: f64, x: f64) -> f64 {
        let den = self.tau - x * x;
        t * t - 2.0 * self.tau * xi / den * t + (self.tau * xi * xi + self.sigma * x * x) / den
    }
}

/// Nonnegative square roots of the three chart products. Fails when a
/// product has an imaginary part above `tol` (the point is not an image of
/// a real state).
pub fn project_xz(cs: &ComplexState, tol: f64) -> Result<ProjectionPoint> {
    let products = [cs.x1 * cs.x2, cs.y1 * cs.y2, cs.z1 * cs.z2];
    let max_imag = products.iter().map(|p| p.im.abs()).fold(0.0, f64::max);
    let scale = products.iter().map(|p| p.norm()).fold(1.0, f64::max);
    if max_imag > tol * scale {
        return Err(Error::RealityViolation {
            context: "project_xz",
            max_imag,
            tol: tol * scale,
        });
    }
    // On conjugate images the products are |.|^2 >= 0; clamp rounding noise.
    let m = |v: num_complex::Complex64| v.re.max(0.0).sqrt();
    Ok(ProjectionPoint {
        x: m(products[0]),
        y: m(products[1]),
        z: m(products[2]),
    })
}

/// Circle-net coordinates of a point with `x > 0`:
/// `s1 = (x^2 + z^2 + r^2)/(2x)`, `s2 = (x^2 + z^2 - r^2)/(2x)`.
pub fn s_from_xz(x: f64, z: f64, params: &BodyParams) -> Result<SPoint> {
    if x <= 0.0 {
        return Err(Error::Domain(format!(
            "s_from_xz needs x > 0 (x = 0 corresponds to s1 = infinity), got {x}"
        )));
    }
    let q = x * x + z * z;
    Ok(SPoint {
        s1: (q + params.r2) / (2.0 * x),
        s2: (q - params.r2) / (2.0 * x),
    })
}

/// Differentials of the net coordinates, `(ds1/dx, ds1/dz, ds2/dx, ds2/dz)`.
pub fn s_differentials(x: f64, z: f64, params: &BodyParams) -> Result<(f64, f64, f64, f64)> {
    if x <= 0.0 {
        return Err(Error::Domain("s_differentials needs x > 0".into()));
    }
    let r2 = params.r2;
    Ok((
        (x * x - z * z - r2) / (2.0 * x * x),
        z / x,
        (x * x - z * z + r2) / (2.0 * x * x),
        z / x,
    ))
}

/// Inverse of the circle net: `x = r^2/(s1 - s2)`,
/// `z^2 = r^2 (s1 + s2)/(s1 - s2) - x^2`; the nonnegative root is returned.
pub fn xz_from_s(sp: &SPoint, params: &BodyParams) -> Result<(f64, f64)> {
    let d = sp.s1 - sp.s2;
    if d.abs() < 1e-14 {
        return Err(Error::Domain("xz_from_s: s1 = s2".into()));
    }
    let x = params.r2 / d;
    let z2 = params.r2 * (sp.s1 + sp.s2) / d - x * x;
    if z2 < -1e-12 * params.r2.max(1.0) {
        return Err(Error::Domain(format!(
            "xz_from_s: z^2 = {z2:.6e} < 0, point off the net image"
        )));
    }
    Ok((x, z2.max(0.0).sqrt()))
}

/// The rectangle conditions `s1^2 >= a^2`, `s2^2 <= b^2` cutting the image
/// of the phase space out of the net coordinates.
pub fn s_rectangle_check(sp: &SPoint, params: &BodyParams) -> bool {
    sp.s1 * sp.s1 >= params.a * params.a && sp.s2 * sp.s2 <= params.b * params.b
}

/// `Phi_{+-}(x, z) = (x^2 + z^2 +- r^2)^2 - 2 (p^2 +- r^2) x^2`; the image
/// of the phase space on the (x, z) plane is `Phi_+ >= 0`, `Phi_- <= 0`.
pub fn phi_pm(x: f64, z: f64, params: &BodyParams) -> (f64, f64) {
    let q = x * x + z * z;
    (
        (q + params.r2) * (q + params.r2) - 2.0 * (params.p2 + params.r2) * x * x,
        (q - params.r2) * (q - params.r2) - 2.0 * (params.p2 - params.r2) * x * x,
    )
}

/// `sigma = tau^2 - 2 p^2 tau + r^4`, the conic parameter induced by `tau`.
pub fn sigma_from_tau(tau: f64, params: &BodyParams) -> f64 {
    tau * tau - 2.0 * params.p2 * tau + params.r4()
}

/// Tangent-line coordinates of a point `(xi, x)` with respect to the conic
/// `xi^2/sigma + x^2/tau = 1`:
/// `t_{1,2} = (tau xi +- mu x)/(tau - x^2)`,
/// `mu = sqrt(tau xi^2 + sigma x^2 - tau sigma)`.
pub fn t_from_point(xi: f64, x: f64, tau: f64, sigma: f64) -> Result<TPoint> {
    let den = tau - x * x;
    if den.abs() < 1e-14 {
        return Err(Error::Domain(format!(
            "t_from_point: tau = x^2 (tau = {tau}, x = {x})"
        )));
    }
    let disc = tau * xi * xi + sigma * x * x - tau * sigma;
    if disc < 0.0 {
        return Err(Error::Domain(format!(
            "t_from_point: point outside the tangent-net region (discriminant {disc:.6e} < 0)"
        )));
    }
    let mu = disc.sqrt();
    Ok(TPoint {
        t1: (tau * xi + mu * x) / den,
        t2: (tau * xi - mu * x) / den,
        tau,
        sigma,
    })
}

/// The (s1, s2) -> (xi, x) link used to overlay the two nets:
/// `xi = r^2 (s1 + s2)/(s1 - s2) - tau`, `x = r^2/(s1 - s2)`.
pub fn st_link(sp: &SPoint, tau: f64, params: &BodyParams) -> Result<(f64, f64)> {
    let d = sp.s1 - sp.s2;
    if d.abs() < 1e-14 {
        return Err(Error::Domain("st_link: s1 = s2".into()));
    }
    Ok((params.r2 * (sp.s1 + sp.s2) / d - tau, params.r2 / d))
}

/// True when the numerical rank of the fiber-restricted tangent map drops
/// below `dim_z`, i.e. the image of the point lies on the generalized
/// boundary of the accessible region. Rank is decided by singular values
/// with a relative threshold.
pub fn rank_deficient(matrix: &[Vec<f64>], dim_z: usize, rel_tol: f64) -> bool {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return dim_z > 0;
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| matrix[i][j]);
    let svals = m.singular_values();
    let top = svals.iter().cloned().fold(0.0f64, f64::max);
    if top == 0.0 {
        return dim_z > 0;
    }
    let rank = svals.iter().filter(|&&s| s > rel_tol * top).count();
    rank < dim_z
}

/// Generalized-boundary test: evaluates the fiber-restricted Jacobian at the
/// point and applies the rank criterion.
pub fn generalized_boundary_test<P, F>(jacobian_eval: F, point: &P, dim_z: usize) -> bool
where
    F: Fn(&P) -> Vec<Vec<f64>>,
{
    rank_deficient(&jacobian_eval(point), dim_z, 1e-8)
}
