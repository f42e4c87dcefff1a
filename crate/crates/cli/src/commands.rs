//! The four scenario commands: full-flow simulation, separated integration
//! with reconstruction and cross-validation, accessible-region emission, and
//! the randomized identity verifier.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use kowtop_core::chart::{max_constraint_residual, to_complex};
use kowtop_core::critical::{
    bifurcation_constants_o, bifurcation_residual_n, integrals_n, integrals_o,
};
use kowtop_core::nets::{project_xz, SPoint};
use kowtop_core::ode::{drift_report, integrate_adaptive, SeparatedRun};
use kowtop_core::rigid::{
    eom_rhs_flat, general_integrals, geometric_residuals, max_geometric_residual,
};
use kowtop_core::sov_n::{self, SeparatedStateN};
use kowtop_core::sov_o::{self, SeparatedStateO};
use kowtop_core::{BodyParams, PhaseState, Sign, SubsystemNConstants, SubsystemOConstants};

use crate::config::{ScenarioConfig, Subsystem};
use crate::io::{write_atomic, CsvBuilder};

/// Command outcome: `pass = false` maps to the verification-failure exit
/// code; warnings are printed but do not fail the run.
pub struct CmdReport {
    pub pass: bool,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
}

fn out_dir(cfg: &ScenarioConfig, cli_out: Option<&Path>) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("kowtop-out"))
}

fn json_to_bytes(value: &serde_json::Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serialization");
    bytes.push(b'\n');
    bytes
}

/// Resolves the initial nine-component state: an explicit state vector, or
/// the reconstruction of the configured separated point.
fn initial_state(cfg: &ScenarioConfig, params: &BodyParams) -> Result<PhaseState> {
    if let Some(state) = &cfg.initial.state {
        if state.len() != 9 {
            bail!("initial.state must have 9 components (omega, alpha, beta)");
        }
        return Ok(PhaseState::from_slice(state));
    }
    match cfg.subsystem {
        Some(Subsystem::N) => {
            let c = cfg.n_constants()?;
            let st = n_initial(cfg)?;
            Ok(sov_n::reconstruct_n(
                &st,
                &c,
                params,
                cfg.tolerances.residual,
            )?)
        }
        Some(Subsystem::O) => {
            let c = cfg.o_constants()?;
            let st = o_initial(cfg)?;
            Ok(sov_o::reconstruct_o(
                &st,
                &c,
                params,
                cfg.tolerances.residual,
            )?)
        }
        Some(Subsystem::M) => {
            bail!("subsystem M has no separated reconstruction; provide initial.state explicitly")
        }
        None => bail!("provide initial.state or a subsystem with separated coordinates"),
    }
}

fn n_initial(cfg: &ScenarioConfig) -> Result<SeparatedStateN> {
    let (Some(s1), Some(s2)) = (cfg.initial.s1, cfg.initial.s2) else {
        bail!("subsystem N needs initial.s1 and initial.s2");
    };
    Ok(SeparatedStateN::new(s1, s2, cfg.signs::<4>()?))
}

fn o_initial(cfg: &ScenarioConfig) -> Result<SeparatedStateO> {
    let (Some(t1), Some(t2)) = (cfg.initial.t1, cfg.initial.t2) else {
        bail!("subsystem O needs initial.t1 and initial.t2");
    };
    Ok(SeparatedStateO::new(
        t1,
        t2,
        cfg.signs::<{ sov_o::N_BITS_O }>()?,
    ))
}

fn write_state_csv(path: &Path, times: &[f64], states: &[Vec<f64>]) -> Result<()> {
    let mut csv = CsvBuilder::new(&[
        "t", "omega1", "omega2", "omega3", "alpha1", "alpha2", "alpha3", "beta1", "beta2", "beta3",
    ]);
    for (t, y) in times.iter().zip(states.iter()) {
        let mut row = vec![*t];
        row.extend_from_slice(y);
        csv.row(&row);
    }
    csv.finish(path)
}

// ---------------------------------------------------------------- simulate

pub fn cmd_simulate(cfg: &ScenarioConfig, cli_out: Option<&Path>) -> Result<CmdReport> {
    cfg.validate_span()?;
    let params = cfg.body_params()?;
    let y0 = initial_state(cfg, &params)?;
    let dir = out_dir(cfg, cli_out);

    let traj = integrate_adaptive(
        |_t, y, dy| eom_rhs_flat(y, dy),
        &y0.to_array(),
        (cfg.t_span[0], cfg.t_span[1]),
        &cfg.integration(),
    )?;
    write_state_csv(&dir.join("trajectory.csv"), &traj.times, &traj.states)?;

    let h = |y: &[f64]| general_integrals(&PhaseState::from_slice(y), &params).h;
    let k = |y: &[f64]| general_integrals(&PhaseState::from_slice(y), &params).k;
    let g = |y: &[f64]| general_integrals(&PhaseState::from_slice(y), &params).g;
    let geo1 = |y: &[f64]| geometric_residuals(&PhaseState::from_slice(y), &params).0;
    let geo2 = |y: &[f64]| geometric_residuals(&PhaseState::from_slice(y), &params).1;
    let geo3 = |y: &[f64]| geometric_residuals(&PhaseState::from_slice(y), &params).2;
    let drifts = drift_report(&traj, &[&h, &k, &g, &geo1, &geo2, &geo3]);
    let names = ["H", "K", "G", "alpha_norm", "beta_norm", "alpha_dot_beta"];
    let worst = drifts.iter().cloned().fold(0.0, f64::max);
    let pass = worst < cfg.tolerances.drift;

    #[derive(Serialize)]
    struct DriftEntry {
        name: String,
        max_relative_drift: f64,
    }
    let report = serde_json::json!({
        "command": "simulate",
        "seed": cfg.seed,
        "t_span": cfg.t_span,
        "samples": traj.times.len(),
        "drift_budget": cfg.tolerances.drift,
        "drifts": names
            .iter()
            .zip(drifts.iter())
            .map(|(n, d)| DriftEntry { name: n.to_string(), max_relative_drift: *d })
            .collect::<Vec<_>>(),
        "worst_drift": worst,
        "pass": pass,
    });
    write_atomic(&dir.join("drift_report.json"), &json_to_bytes(&report))?;
    Ok(CmdReport {
        pass,
        warnings: vec![],
        summary: report,
    })
}

// ---------------------------------------------------------------- separate

pub fn cmd_separate(cfg: &ScenarioConfig, cli_out: Option<&Path>) -> Result<CmdReport> {
    cfg.validate_span()?;
    let params = cfg.body_params()?;
    if params.b <= 0.0 {
        bail!("b = 0 (classical Kowalevski limit) is not supported by the separation modules");
    }
    let dir = out_dir(cfg, cli_out);
    let span = (cfg.t_span[0], cfg.t_span[1]);
    let icfg = cfg.integration();
    let tol = cfg.tolerances.residual;

    let (run, rec_states, labels): (SeparatedRun, Vec<PhaseState>, [&str; 2]) = match cfg.subsystem
    {
        Some(Subsystem::N) => {
            let c = cfg.n_constants()?;
            let st0 = n_initial(cfg)?;
            check_admissible_n(&st0, &c, &params)?;
            let run = sov_n::integrate_separated_n(&st0, &c, &params, span, &icfg)?;
            let rec = (0..run.times.len())
                .map(|i| sov_n::reconstruct_n(&sov_n::run_state_n(&run, i), &c, &params, tol))
                .collect::<kowtop_core::Result<Vec<_>>>()?;
            (run, rec, ["s1", "s2"])
        }
        Some(Subsystem::O) => {
            let c = cfg.o_constants()?;
            let st0 = o_initial(cfg)?;
            let run = sov_o::integrate_separated_o(&st0, &c, &params, span, &icfg)?;
            let rec = (0..run.times.len())
                .map(|i| sov_o::reconstruct_o(&sov_o::run_state_o(&run, i), &c, &params, tol))
                .collect::<kowtop_core::Result<Vec<_>>>()?;
            (run, rec, ["t1", "t2"])
        }
        _ => bail!("separate needs subsystem N or O"),
    };

    // separated trajectory with its sign bits
    let n_bits = run.signs.first().map_or(0, |s| s.len());
    let mut header: Vec<String> = vec!["t".into(), labels[0].into(), labels[1].into()];
    header.extend((0..n_bits).map(|i| format!("bit{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvBuilder::new(&header_refs);
    for i in 0..run.times.len() {
        let mut row = vec![run.times[i], run.states[i][0], run.states[i][1]];
        row.extend(run.signs[i].iter().map(|s| s.as_f64()));
        csv.row(&row);
    }
    csv.finish(&dir.join("separated.csv"))?;

    let rec_arrays: Vec<Vec<f64>> = rec_states.iter().map(|s| s.to_array().to_vec()).collect();
    write_state_csv(&dir.join("reconstructed.csv"), &run.times, &rec_arrays)?;

    // direct integration from the initial reconstruction
    let y0 = rec_states[0];
    let direct = integrate_adaptive(|_t, y, dy| eom_rhs_flat(y, dy), &y0.to_array(), span, &icfg)?;
    write_state_csv(&dir.join("direct.csv"), &direct.times, &direct.states)?;

    // max deviation over the separated samples (dense direct evaluation)
    let mut max_dev = 0.0f64;
    let mut at_time = span.0;
    for (i, &t) in run.times.iter().enumerate() {
        let yd = direct.sample(t);
        let d = rec_states[i].max_abs_diff(&PhaseState::from_slice(&yd));
        if d > max_dev {
            max_dev = d;
            at_time = t;
        }
    }
    let end_dev = rec_states
        .last()
        .unwrap()
        .max_abs_diff(&PhaseState::from_slice(direct.last_state()));
    max_dev = max_dev.max(end_dev);
    let pass = max_dev < cfg.tolerances.commutation;

    let report = serde_json::json!({
        "command": "separate",
        "seed": cfg.seed,
        "t_span": cfg.t_span,
        "samples": run.times.len(),
        "turning_events": run.events.iter().map(|e| serde_json::json!({
            "t": e.t, "guard": e.guard, "flipped_bit": e.flipped_bit,
        })).collect::<Vec<_>>(),
        "max_deviation": max_dev,
        "max_deviation_at": at_time,
        "end_deviation": end_dev,
        "budget": cfg.tolerances.commutation,
        "pass": pass,
    });
    write_atomic(&dir.join("comparison.json"), &json_to_bytes(&report))?;
    Ok(CmdReport {
        pass,
        warnings: vec![],
        summary: report,
    })
}

fn check_admissible_n(
    st: &SeparatedStateN,
    c: &SubsystemNConstants,
    params: &BodyParams,
) -> Result<()> {
    let rad = sov_n::radicands_n(st.s1, st.s2, c, params);
    if rad.iter().any(|&v| v < -1e-12) {
        let names = ["s1^2 - a^2", "-Phi(s1)", "b^2 - s2^2", "Phi(s2)"];
        let violated: Vec<String> = names
            .iter()
            .zip(rad.iter())
            .filter(|(_, &v)| v < -1e-12)
            .map(|(n, v)| format!("{n} = {v:.6e}"))
            .collect();
        bail!(
            "initial ({}, {}) is inadmissible; negative radicands: {}",
            st.s1,
            st.s2,
            violated.join(", ")
        );
    }
    Ok(())
}

// ------------------------------------------------------------------ region

struct BoundaryLine {
    label: String,
    /// maps the scan parameter to a point of the line
    point: Box<dyn Fn(f64) -> SPoint>,
    range: (f64, f64),
}

pub fn cmd_region(cfg: &ScenarioConfig, cli_out: Option<&Path>) -> Result<CmdReport> {
    let params = cfg.body_params()?;
    let dir = out_dir(cfg, cli_out);
    let grid = &cfg.grid;
    if grid.n1 == 0 || grid.n2 == 0 {
        bail!("grid resolution must be at least 1x1");
    }

    enum RegionOf {
        N(SubsystemNConstants),
        O(SubsystemOConstants),
    }
    let region = match cfg.subsystem {
        Some(Subsystem::N) => RegionOf::N(cfg.n_constants()?),
        Some(Subsystem::O) => RegionOf::O(cfg.o_constants()?),
        _ => bail!("region needs subsystem N or O"),
    };
    let inside = |s1: f64, s2: f64| -> Result<bool> {
        Ok(match &region {
            RegionOf::N(c) => sov_n::region_n(s1, s2, c, &params),
            RegionOf::O(c) => sov_o::region_o(&SPoint { s1, s2 }, c, &params)?,
        })
    };

    // inside/outside sample grid
    let coord = |lo: f64, hi: f64, n: usize, i: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let mut csv = CsvBuilder::new(&["s1", "s2", "inside"]);
    let mut any_inside = false;
    for i in 0..grid.n1 {
        let s1 = coord(grid.s1_min, grid.s1_max, grid.n1, i);
        for j in 0..grid.n2 {
            let s2 = coord(grid.s2_min, grid.s2_max, grid.n2, j);
            let ins = inside(s1, s2)?;
            any_inside |= ins;
            csv.row(&[s1, s2, if ins { 1.0 } else { 0.0 }]);
        }
    }
    csv.finish(&dir.join("region_grid.csv"))?;

    // boundary polylines: points of the defining lines that bound the region
    let mut lines: Vec<BoundaryLine> = Vec::new();
    let (a, b) = (params.a, params.b);
    let s2span = (grid.s2_min, grid.s2_max);
    let s1span = (grid.s1_min, grid.s1_max);
    for sgn in [1.0, -1.0] {
        lines.push(BoundaryLine {
            label: format!("s1={}a", if sgn > 0.0 { "+" } else { "-" }),
            point: Box::new(move |u| SPoint { s1: sgn * a, s2: u }),
            range: s2span,
        });
        lines.push(BoundaryLine {
            label: format!("s2={}b", if sgn > 0.0 { "+" } else { "-" }),
            point: Box::new(move |u| SPoint { s1: u, s2: sgn * b }),
            range: s1span,
        });
    }
    match &region {
        RegionOf::N(c) => {
            // vertical/horizontal lines at the roots of Phi
            let roots = [(c.ell - 1.0) / (2.0 * c.m), (c.ell + 1.0) / (2.0 * c.m)];
            for (k, root) in roots.into_iter().enumerate() {
                let pm = if k == 0 { "-" } else { "+" };
                lines.push(BoundaryLine {
                    label: format!("Phi(s1)=0{pm}"),
                    point: Box::new(move |u| SPoint { s1: root, s2: u }),
                    range: s2span,
                });
                lines.push(BoundaryLine {
                    label: format!("Phi(s2)=0{pm}"),
                    point: Box::new(move |u| SPoint { s1: u, s2: root }),
                    range: s1span,
                });
            }
        }
        RegionOf::O(c) => {
            let d = c.derived(&params)?;
            let r2 = params.r2;
            for (label, slope_kind, off) in [
                ("Lambda+", false, 2.0 * c.s),
                ("Lambda-", false, -2.0 * c.s),
                ("M+", true, 2.0 * c.s),
                ("M-", true, -2.0 * c.s),
            ] {
                // s1 (1 - q) + s2 (1 + q) + off = 0 with
                // q = (tau -+ 2 s chi)/r^2
                let q = if slope_kind {
                    (c.tau + 2.0 * c.s * d.chi) / r2
                } else {
                    (c.tau - 2.0 * c.s * d.chi) / r2
                };
                let denom = 1.0 + q;
                if denom.abs() < 1e-12 {
                    continue;
                }
                lines.push(BoundaryLine {
                    label: label.to_string(),
                    point: Box::new(move |u| SPoint {
                        s1: u,
                        s2: -(u * (1.0 - q) + off) / denom,
                    }),
                    range: s1span,
                });
            }
        }
    }

    let scan_n = 2000usize;
    let mut bcsv = CsvBuilder::new(&["line", "s1", "s2"]);
    let mut boundary_points = 0usize;
    for line in &lines {
        let (lo, hi) = line.range;
        for k in 0..=scan_n {
            let u = lo + (hi - lo) * k as f64 / scan_n as f64;
            let sp = (line.point)(u);
            if sp.s1 < grid.s1_min
                || sp.s1 > grid.s1_max
                || sp.s2 < grid.s2_min
                || sp.s2 > grid.s2_max
            {
                continue;
            }
            // a boundary point of the closed region: the point itself
            // satisfies the constraints and arbitrarily близкие probes on one
            // side leave the region
            if !inside(sp.s1, sp.s2).unwrap_or(false) {
                continue;
            }
            let eps = 1e-6;
            let mut exits = false;
            for (dx, dy) in [(eps, 0.0), (-eps, 0.0), (0.0, eps), (0.0, -eps)] {
                if !inside(sp.s1 + dx, sp.s2 + dy).unwrap_or(true) {
                    exits = true;
                    break;
                }
            }
            if exits {
                bcsv.row_mixed(&line.label, &[sp.s1, sp.s2]);
                boundary_points += 1;
            }
        }
    }
    bcsv.finish(&dir.join("region_boundary.csv"))?;

    let mut warnings = Vec::new();
    if !any_inside {
        warnings
            .push("accessible region is empty for these constants; boundary file is empty".into());
    }
    let report = serde_json::json!({
        "command": "region",
        "seed": cfg.seed,
        "grid": { "n1": grid.n1, "n2": grid.n2 },
        "any_inside": any_inside,
        "boundary_points": boundary_points,
        "warnings": warnings,
        "pass": true,
    });
    write_atomic(&dir.join("region_report.json"), &json_to_bytes(&report))?;
    Ok(CmdReport {
        pass: true,
        warnings,
        summary: report,
    })
}

// ------------------------------------------------------------------ verify

#[derive(Serialize)]
struct IdentityResult {
    name: String,
    draws: usize,
    max_residual: f64,
    tol: f64,
    pass: bool,
}

fn record(results: &mut Vec<IdentityResult>, name: &str, draws: usize, max_res: f64, tol: f64) {
    results.push(IdentityResult {
        name: name.into(),
        draws,
        max_residual: max_res,
        tol,
        pass: max_res < tol || draws == 0,
    });
}

pub fn cmd_verify(cfg: &ScenarioConfig, cli_out: Option<&Path>) -> Result<CmdReport> {
    let params = cfg.body_params()?;
    let dir = out_dir(cfg, cli_out);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws = cfg.draws;
    let inject_phi2 = cfg.inject.as_deref() == Some("phi2_sign");
    if let Some(other) = cfg.inject.as_deref() {
        if other != "phi2_sign" {
            bail!("unknown inject hook {other:?}");
        }
    }
    let mut warnings = Vec::new();
    if draws == 0 {
        warnings.push("draws = 0: all identity checks are vacuous".into());
    }
    let mut results: Vec<IdentityResult> = Vec::new();

    // master identity of the hyperelliptic separation, over random
    // parameters and points
    {
        let mut worst = 0.0f64;
        let mut done = 0usize;
        while done < draws {
            let a: f64 = rng.gen_range(0.3..2.0);
            let b: f64 = rng.gen_range(0.01..0.99) * a;
            let p = BodyParams::new(a, b).map_err(|e| anyhow!(e))?;
            let Ok(c) =
                SubsystemOConstants::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            else {
                continue;
            };
            if c.derived(&p).is_err() {
                continue;
            }
            let x: f64 = rng.gen_range(-3.0..3.0);
            let xi: f64 = rng.gen_range(-3.0..3.0);
            let mut pol = sov_o::o_polynomials(x, xi, &c, &p)?;
            if inject_phi2 {
                pol.phi2 = -pol.phi2;
            }
            let sigma = c.sigma(&p);
            let lhs = pol.p * pol.p - pol.phi1 * pol.phi2 * pol.psi1 * pol.psi2;
            let rhs =
                4.0 * x * x * (c.tau * xi * xi + sigma * x * x - c.tau * sigma) * pol.q * pol.q;
            let scale = (pol.p * pol.p)
                .abs()
                .max((pol.phi1 * pol.phi2 * pol.psi1 * pol.psi2).abs())
                .max(rhs.abs())
                .max(1.0);
            worst = worst.max((lhs - rhs).abs() / scale);
            done += 1;
        }
        record(&mut results, "master_identity", done, worst, 1e-9);
    }

    // derived-constants identity 4 s^2 chi^2 = sigma + 4 s^2 tau
    {
        let mut worst = 0.0f64;
        let mut done = 0;
        while done < draws {
            let Ok(c) =
                SubsystemOConstants::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
            else {
                continue;
            };
            let Ok(d) = c.derived(&params) else { continue };
            let lhs = 4.0 * c.s * c.s * d.chi * d.chi;
            let rhs = d.sigma + 4.0 * c.s * c.s * c.tau;
            worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
            done += 1;
        }
        record(&mut results, "chi_squared_identity", done, worst, 1e-12);
    }

    // separation-polynomial diagonal Psi(s, s) = Phi(s)
    {
        let mut worst = 0.0f64;
        let mut done = 0;
        while done < draws {
            let Ok(c) =
                SubsystemNConstants::new(rng.gen_range(0.05..2.0), rng.gen_range(-2.0..2.0))
            else {
                continue;
            };
            let s: f64 = rng.gen_range(-3.0..3.0);
            let res = (sov_n::psi_n(s, s, &c) - sov_n::phi_n(s, &c)).abs();
            worst = worst.max(res / (1.0 + sov_n::phi_n(s, &c).abs()));
            done += 1;
        }
        record(&mut results, "psi_diagonal_is_phi", done, worst, 1e-12);
    }

    // chart equivalence of the integrals and constraints on random states
    {
        let mut worst_int = 0.0f64;
        let mut worst_con = 0.0f64;
        let n = draws.min(2000);
        for _ in 0..n {
            let st = PhaseState::random_on_p(&mut rng, &params);
            let iv = general_integrals(&st, &params);
            let cs = to_complex(&st);
            let (h, k, g) = kowtop_core::chart::complex_integrals(&cs, &params);
            worst_int = worst_int
                .max((h - iv.h).norm())
                .max((k - iv.k).norm())
                .max((g - iv.g).norm());
            worst_con = worst_con.max(max_constraint_residual(&cs, &params));
        }
        record(
            &mut results,
            "chart_integral_equivalence",
            n,
            worst_int,
            1e-12,
        );
        record(
            &mut results,
            "chart_constraint_residuals",
            n,
            worst_con,
            1e-12,
        );
    }

    // tangency of the boundary lines to the second-order curve: the
    // intersection is a double point
    {
        let mut worst = 0.0f64;
        let mut done = 0;
        while done < draws.min(2000) {
            let Ok(c) =
                SubsystemOConstants::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5))
            else {
                continue;
            };
            let Ok(d) = c.derived(&params) else { continue };
            if d.chi < 1e-3 {
                continue;
            }
            let sigma = d.sigma;
            // line xi = e1 2 s x + e2 2 s chi into tau xi^2 + sigma x^2
            // - tau sigma = 0: discriminant must vanish
            for (e1, e2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let qa = c.tau * 4.0 * c.s * c.s * e1 * e1 + sigma;
                let qb = c.tau * 2.0 * (e1 * 2.0 * c.s) * (e2 * 2.0 * c.s * d.chi);
                let qc = c.tau * 4.0 * c.s * c.s * d.chi * d.chi - c.tau * sigma;
                let disc = qb * qb - 4.0 * qa * qc;
                let scale = (qb * qb).abs().max((4.0 * qa * qc).abs()).max(1.0);
                worst = worst.max(disc.abs() / scale);
                // double point at x = -e1 e2 tau / chi
                if qa.abs() > 1e-9 {
                    let x0 = -qb / (2.0 * qa);
                    let expected = -e1 * e2 * c.tau / d.chi;
                    worst = worst.max((x0 - expected).abs() / (1.0 + expected.abs()));
                }
            }
            done += 1;
        }
        record(
            &mut results,
            "boundary_tangency_double_point",
            done,
            worst,
            1e-8,
        );
    }

    // subsystem N: reconstruction residuals, integral round-trip, the
    // (R1 +- R2)^2 identity and the moduli relation
    {
        let c = SubsystemNConstants::new(
            cfg.constants.m.unwrap_or(0.5),
            cfg.constants.ell.unwrap_or(1.5),
        )
        .map_err(|e| anyhow!(e))?;
        let mut worst_geo = 0.0f64;
        let mut worst_round = 0.0f64;
        let mut worst_bif = 0.0f64;
        let mut worst_mod = 0.0f64;
        let mut worst_sum = 0.0f64;
        let mut done = 0;
        let n = draws.min(500);
        let mut guard = 0;
        while done < n && guard < 100 * n.max(1) {
            guard += 1;
            let s1: f64 = rng.gen_range(params.a..2.5 * params.a);
            let s2: f64 = rng.gen_range(-params.b..params.b);
            if !sov_n::region_n(s1, s2, &c, &params) {
                continue;
            }
            let bits: u8 = rng.gen_range(0..16);
            let signs = std::array::from_fn(|k| {
                if bits & (1 << k) == 0 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            });
            let st = SeparatedStateN::new(s1, s2, signs);
            let Ok(state) = sov_n::reconstruct_n(&st, &c, &params, cfg.tolerances.residual) else {
                continue;
            };
            worst_geo = worst_geo.max(max_geometric_residual(&state, &params));
            let cs = to_complex(&state);
            if let Ok(got) = integrals_n(&cs, &params) {
                worst_round = worst_round
                    .max((got.m - c.m).abs())
                    .max((got.ell - c.ell).abs());
            }
            let iv = general_integrals(&state, &params);
            worst_bif = worst_bif.max(bifurcation_residual_n(&iv, &params).abs());
            if let Ok(pp) = project_xz(&cs, 1e-8) {
                let w1w2 = (cs.w1 * cs.w2).re;
                worst_mod =
                    worst_mod.max((c.m * (pp.x * pp.x + pp.z * pp.z) + w1w2 - c.ell * pp.x).abs());
            }
            // (R1 +- R2)^2 from the chart x-variables vs r^2 Phi / (s1-s2)^2
            let r2m = kowtop_core::Complex64::from(params.r2 * c.m);
            let r1 = (r2m - cs.x1).sqrt();
            let r2v = (r2m - cs.x2).sqrt();
            let plus = (r1 + r2v) * (r1 + r2v);
            let minus = (r1 - r2v) * (r1 - r2v);
            let d2 = (s1 - s2) * (s1 - s2);
            let e1 = kowtop_core::Complex64::from(params.r2 * sov_n::phi_n(s2, &c) / d2);
            let e2 = kowtop_core::Complex64::from(params.r2 * sov_n::phi_n(s1, &c) / d2);
            let direct = (plus - e1).norm() + (minus - e2).norm();
            let swapped = (plus - e2).norm() + (minus - e1).norm();
            let scale = e1.norm().max(e2.norm()).max(1.0);
            worst_sum = worst_sum.max(direct.min(swapped) / scale);
            done += 1;
        }
        record(&mut results, "n_reconstruction_on_p", done, worst_geo, 1e-9);
        record(
            &mut results,
            "n_integrals_round_trip",
            done,
            worst_round,
            1e-9,
        );
        record(
            &mut results,
            "n_bifurcation_relation",
            done,
            worst_bif,
            1e-8,
        );
        record(&mut results, "n_moduli_relation", done, worst_mod, 1e-9);
        record(
            &mut results,
            "n_sum_difference_identity",
            done,
            worst_sum,
            1e-10,
        );
    }

    // subsystem O at the configured constants: reconstruction residuals and
    // the (h, k, g) relations; tangent-net identities over random branches
    let o_constants = SubsystemOConstants::new(
        cfg.constants.s.unwrap_or(-0.6),
        cfg.constants.tau.unwrap_or(1.2),
    )
    .map_err(|e| anyhow!(e))?;
    if let Ok(d) = o_constants.derived(&params) {
        let c = o_constants;
        let expected = bifurcation_constants_o(&c, &params).map_err(|e| anyhow!(e))?;
        // turning lines delimit the candidate cells for (t1, t2)
        let lines = {
            let mut v = vec![
                -c.tau - params.r2,
                -c.tau + params.r2,
                -2.0 * c.s.abs() * d.chi,
                2.0 * c.s.abs() * d.chi,
            ];
            if d.sigma >= 0.0 {
                v.push(d.sigma.sqrt());
                v.push(-d.sigma.sqrt());
            }
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            v
        };
        let cells: Vec<(f64, f64)> = lines
            .windows(2)
            .filter(|w| w[1] - w[0] > 0.05)
            .map(|w| (w[0] + 0.02, w[1] - 0.02))
            .collect();
        let mut table = sov_o::BranchTable::new(c, params, 1e-8).map_err(|e| anyhow!(e))?;
        let mut worst_geo = 0.0f64;
        let mut worst_hkg = 0.0f64;
        let mut worst_round = 0.0f64;
        let mut worst_xmu = 0.0f64;
        let mut done = 0;
        let n = if cells.len() < 2 { 0 } else { draws.min(200) };
        let mut guard = 0;
        while done < n && guard < 100 * n.max(1) {
            guard += 1;
            let ci = rng.gen_range(0..cells.len());
            let mut cj = rng.gen_range(0..cells.len());
            if cj == ci {
                cj = (cj + 1) % cells.len();
            }
            let t1: f64 = rng.gen_range(cells[ci].0..cells[ci].1);
            let t2: f64 = rng.gen_range(cells[cj].0..cells[cj].1);
            let branches = table.branches(t1, t2);
            if branches.is_empty() {
                continue;
            }
            let pick = rng.gen_range(0..branches.len());
            let (st, state) = &branches[pick];
            worst_geo = worst_geo.max(max_geometric_residual(state, &params));
            let iv = general_integrals(state, &params);
            worst_hkg = worst_hkg
                .max((iv.h - expected.h).abs())
                .max((iv.k - expected.k).abs())
                .max((iv.g - expected.g).abs());
            if let Ok(got) = integrals_o(&to_complex(state)) {
                worst_round = worst_round
                    .max((got.s - c.s).abs())
                    .max((got.tau - c.tau).abs());
            }
            // identities of the tangent-net solution
            let (x, xi, mu) = sov_o::point_from_t(st, &c, &params)?;
            let lhs = x * mu;
            let rhs = kowtop_core::Complex64::from((t1 - t2) / (t1 + t2) * c.tau) * xi;
            worst_xmu = worst_xmu.max((lhs - rhs).norm() / rhs.norm().max(1.0));
            done += 1;
        }
        if done == 0 {
            warnings.push(
                "no admissible (t1, t2) found for the configured subsystem O constants; \
                 the O reconstruction identities are vacuous"
                    .into(),
            );
        }
        record(&mut results, "o_reconstruction_on_p", done, worst_geo, 1e-9);
        record(
            &mut results,
            "o_hkg_match_bifurcation",
            done,
            worst_hkg,
            1e-8,
        );
        record(
            &mut results,
            "o_integrals_round_trip",
            done,
            worst_round,
            1e-8,
        );
        record(&mut results, "o_x_mu_identity", done, worst_xmu, 1e-10);
    } else {
        warnings.push(format!(
            "subsystem O constants (s, tau) = ({}, {}) admit no real motion at these field \
             magnitudes (k < 0); skipping the O reconstruction identities",
            o_constants.s, o_constants.tau
        ));
    }

    let pass = results.iter().all(|r| r.pass);
    let report = serde_json::json!({
        "command": "verify",
        "seed": cfg.seed,
        "draws": draws,
        "inject": cfg.inject,
        "identities": results,
        "warnings": warnings,
        "pass": pass,
    });
    write_atomic(&dir.join("verify_report.json"), &json_to_bytes(&report))?;
    Ok(CmdReport {
        pass,
        warnings,
        summary: report,
    })
}
