//! Scenario configuration: one JSON document drives every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use kowtop_core::{BodyParams, SubsystemNConstants, SubsystemOConstants};

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ParamsConfig {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
pub enum Subsystem {
    M,
    N,
    O,
}

/// Constants of the selected subsystem: `(m, ell)` for N, `(s, tau)` for O.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
pub struct ConstantsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

/// Initial condition: separated coordinates for the subsystem flows, or an
/// explicit nine-component state for the full flow.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
pub struct InitialConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2: Option<f64>,
    /// omega, alpha, beta flat layout.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default)]
pub struct TolerancesConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub event_tol: f64,
    /// Relative drift budget for conserved quantities (simulate).
    pub drift: f64,
    /// Residual budget for membership and round-trip checks.
    pub residual: f64,
    /// Max-norm budget for the separated-vs-direct comparison (separate).
    pub commutation: f64,
}

impl Default for TolerancesConfig {
    fn default() -> Self {
        TolerancesConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: 0.1,
            event_tol: 1e-12,
            drift: 1e-8,
            residual: 1e-8,
            commutation: 1e-5,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default)]
pub struct GridConfig {
    pub s1_min: f64,
    pub s1_max: f64,
    pub s2_min: f64,
    pub s2_max: f64,
    pub n1: usize,
    pub n2: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            s1_min: -2.5,
            s1_max: 2.5,
            s2_min: -0.6,
            s2_max: 0.6,
            n1: 101,
            n2: 41,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ScenarioConfig {
    pub params: ParamsConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsystem: Option<Subsystem>,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    /// Sign bits of the radical branch, +-1 entries; 4 for N, 11 for O.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_bits: Option<Vec<i8>>,
    #[serde(default = "default_span")]
    pub t_span: [f64; 2],
    #[serde(default)]
    pub tolerances: TolerancesConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridConfig,
    /// Number of random draws per identity in `verify`.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Test hook: "phi2_sign" injects a sign error into Phi_2 so the master
    /// identity must fail loudly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject: Option<String>,
}

fn default_span() -> [f64; 2] {
    [0.0, 10.0]
}

fn default_draws() -> usize {
    10_000
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: ScenarioConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn body_params(&self) -> Result<BodyParams> {
        Ok(BodyParams::new(self.params.a, self.params.b)?)
    }

    pub fn n_constants(&self) -> Result<SubsystemNConstants> {
        let (Some(m), Some(ell)) = (self.constants.m, self.constants.ell) else {
            bail!("subsystem N needs constants.m and constants.ell");
        };
        Ok(SubsystemNConstants::new(m, ell)?)
    }

    pub fn o_constants(&self) -> Result<SubsystemOConstants> {
        let (Some(s), Some(tau)) = (self.constants.s, self.constants.tau) else {
            bail!("subsystem O needs constants.s and constants.tau");
        };
        Ok(SubsystemOConstants::new(s, tau)?)
    }

    pub fn integration(&self) -> kowtop_core::IntegrationConfig {
        kowtop_core::IntegrationConfig {
            rel_tol: self.tolerances.rel_tol,
            abs_tol: self.tolerances.abs_tol,
            max_step: self.tolerances.max_step,
            event_tol: self.tolerances.event_tol,
        }
    }

    pub fn validate_span(&self) -> Result<()> {
        if self.t_span[1] <= self.t_span[0] {
            bail!(
                "time span must have positive length, got [{}, {}]",
                self.t_span[0],
                self.t_span[1]
            );
        }
        Ok(())
    }

    pub fn signs<const N: usize>(&self) -> Result<[kowtop_core::Sign; N]> {
        let Some(bits) = &self.branch_bits else {
            bail!("branch_bits ({N} entries of +-1) are required");
        };
        if bits.len() != N {
            bail!("branch_bits must have {N} entries, got {}", bits.len());
        }
        let mut out = [kowtop_core::Sign::Plus; N];
        for (i, &b) in bits.iter().enumerate() {
            out[i] = kowtop_core::Sign::from_i8(b)?;
        }
        Ok(out)
    }
}
