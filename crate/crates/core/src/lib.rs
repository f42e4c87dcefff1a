//! Numerics for the Kowalevski-type top in two constant force fields.
//!
//! The crate covers the full nine-dimensional flow of the top together with
//! its first integrals, the complex chart in which the three critical
//! subsystems M, N, O take a compact form, the two planar coordinate nets
//! used to describe accessible regions, and the separated-variable solutions
//! of the second and third critical subsystems with explicit sign-branch
//! bookkeeping over the radical coverings.
//!
//! All quantities use the nondimensional Kowalevski configuration
//! `I = diag{2, 2, 1}`, `r1 = (1,0,0)`, `r2 = (0,1,0)`; the field pair is
//! normalized to `|alpha| = a`, `|beta| = b`, `alpha . beta = 0` with
//! `a > b >= 0`.

pub mod chart;
pub mod critical;
pub mod error;
pub mod nets;
pub mod ode;
pub mod rigid;
pub mod sov_n;
pub mod sov_o;

pub use chart::ComplexState;
pub use critical::{SubsystemNConstants, SubsystemOConstants};
pub use error::{Error, Result};
pub use nets::{ProjectionPoint, SPoint, TPoint};
pub use num_complex::Complex64;
pub use ode::{IntegrationConfig, Trajectory};
pub use rigid::{BodyParams, IntegralValues, PhaseState, Vec3};
pub use sov_n::SeparatedStateN;
pub use sov_o::SeparatedStateO;

/// Branch sign of one radical in a covering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn from_i8(v: i8) -> Result<Sign> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => Err(Error::Input(format!("sign bit must be +1 or -1, got {v}"))),
        }
    }

    pub fn to_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;
    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}
