//! Library side of the command-line front end, so commands are callable
//! in-process by the test suites.

pub mod commands;
pub mod config;
pub mod io;

use std::path::Path;

pub use commands::{cmd_region, cmd_separate, cmd_simulate, cmd_verify, CmdReport};
pub use config::ScenarioConfig;

/// Exit codes: 0 pass, 1 input error, 2 verification failure, 3 numerical
/// failure.
pub fn exit_code_for(result: &anyhow::Result<CmdReport>) -> i32 {
    match result {
        Ok(report) if report.pass => 0,
        Ok(_) => 2,
        Err(err) => match err.downcast_ref::<kowtop_core::Error>() {
            Some(
                kowtop_core::Error::StepUnderflow { .. }
                | kowtop_core::Error::RealityViolation { .. }
                | kowtop_core::Error::DoubleRoot { .. }
                | kowtop_core::Error::FlowSingularity(_)
                | kowtop_core::Error::BranchInconsistency { .. },
            ) => 3,
            _ => 1,
        },
    }
}

pub fn run(command: &str, config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> i32 {
    let mut cfg = match ScenarioConfig::load(config_path) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err:#}");
            return 1;
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let result = match command {
        "simulate" => commands::cmd_simulate(&cfg, out),
        "separate" => commands::cmd_separate(&cfg, out),
        "region" => commands::cmd_region(&cfg, out),
        "verify" => commands::cmd_verify(&cfg, out),
        other => {
            eprintln!("error: unknown command {other}");
            return 1;
        }
    };
    match &result {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&report.summary).expect("summary serialization")
            );
        }
        Err(err) => eprintln!("error: {err:#}"),
    }
    exit_code_for(&result)
}
