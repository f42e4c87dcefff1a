//! Adaptive explicit integration: an embedded Dormand-Prince 5(4) pair with
//! PI step-size control, cubic-Hermite dense output and a bisection helper
//! for event localization. Serves both the nine-dimensional flow and the
//! two-dimensional separated flows.

use crate::error::{Error, Result};

/// Tolerances and limits for one integration run.
#[derive(Clone, Copy, Debug)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Tolerance for locating radicand roots at turning events; the event
    /// state is projected onto the located root.
    pub event_tol: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: 0.1,
            event_tol: 1e-12,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.rel_tol, self.abs_tol, self.max_step, self.event_tol];
        if vals.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::Input(
                "integration tolerances and max_step must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One located event: the guard index that fired and, for separated flows,
/// which sign bit was flipped in response.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub t: f64,
    pub guard: usize,
    pub flipped_bit: Option<usize>,
}

/// Accepted integration samples with derivatives (for dense evaluation) and
/// the event log. Times are strictly increasing.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
    pub events: Vec<EventRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("empty trajectory")
    }

    pub fn push(&mut self, t: f64, y: Vec<f64>, dy: Vec<f64>) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.states.push(y);
        self.derivs.push(dy);
    }

    /// Cubic Hermite interpolation between the bracketing accepted steps.
    /// `t` must lie inside the recorded span; endpoints are returned exactly.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        assert!(!self.is_empty(), "cannot sample an empty trajectory");
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        assert!(
            t >= t0 - 1e-12 && t <= t1 + 1e-12,
            "sample time {t} outside [{t0}, {t1}]"
        );
        let idx = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.states[i].clone(),
            Err(i) => i.clamp(1, self.len() - 1),
        };
        hermite(
            self.times[idx - 1],
            &self.states[idx - 1],
            &self.derivs[idx - 1],
            self.times[idx],
            &self.states[idx],
            &self.derivs[idx],
            t,
        )
    }
}

pub(crate) fn hermite(
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    t1: f64,
    y1: &[f64],
    f1: &[f64],
    t: f64,
) -> Vec<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h * h10 * f0[i] + h01 * y1[i] + h * h11 * f1[i])
        .collect()
}

// Dormand-Prince 5(4) tableau (FSAL).
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and 4th-order weights (error estimator).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
// PI controller exponents for a 5th-order pair.
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;

/// Low-level embedded stepper. Holds the current (t, y, f(t, y)) triple;
/// trial steps are pure and leave the state untouched until accepted.
pub struct Dopri5<F> {
    rhs: F,
    t: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
    err_prev: f64,
}

/// Result of one trial step of size `h`.
pub struct TrialStep {
    pub y_new: Vec<f64>,
    pub dy_new: Vec<f64>,
    pub err_norm: f64,
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(mut rhs: F, t0: f64, y0: Vec<f64>) -> Self {
        let mut dy = vec![0.0; y0.len()];
        rhs(t0, &y0, &mut dy);
        Dopri5 {
            rhs,
            t: t0,
            y: y0,
            dy,
            err_prev: 1.0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    /// Re-seeds the stepper after an external state modification (sign-bit
    /// flip, projection onto a turning point).
    pub fn reset(&mut self, t: f64, y: Vec<f64>) {
        let mut dy = vec![0.0; y.len()];
        (self.rhs)(t, &y, &mut dy);
        self.t = t;
        self.y = y;
        self.dy = dy;
        self.err_prev = 1.0;
    }

    pub fn trial(&mut self, h: f64, cfg: &IntegrationConfig) -> TrialStep {
        let n = self.y.len();
        let mut k = vec![vec![0.0; n]; 7];
        k[0].copy_from_slice(&self.dy);
        let mut ytmp = vec![0.0; n];
        for stage in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    acc += A[stage][j] * kj[i];
                }
                ytmp[i] = self.y[i] + h * acc;
            }
            let ts = self.t + C[stage] * h;
            (self.rhs)(ts, &ytmp, &mut k[stage]);
        }
        // 5th-order solution is stage 7's argument (FSAL): A[6] row = b.
        let mut y_new = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(6) {
                acc += A[6][j] * kj[i];
            }
            y_new[i] = self.y[i] + h * acc;
        }
        let dy_new = k[6].clone();
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            let scale = cfg.abs_tol + cfg.rel_tol * self.y[i].abs().max(y_new[i].abs());
            let r = h * e / scale;
            err_sq += r * r;
        }
        let err_norm = (err_sq / n as f64).sqrt();
        TrialStep {
            y_new,
            dy_new,
            err_norm,
        }
    }

    pub fn accept(&mut self, h: f64, trial: TrialStep) {
        self.t += h;
        self.y = trial.y_new;
        self.dy = trial.dy_new;
        self.err_prev = trial.err_norm.max(1e-10);
    }

    pub fn next_step_size(&self, h: f64, err: f64) -> f64 {
        let err = err.max(1e-16);
        let fac = SAFETY * err.powf(-PI_ALPHA) * self.err_prev.powf(PI_BETA);
        h * fac.clamp(FAC_MIN, FAC_MAX)
    }

    pub fn initial_step_size(&self, t_end: f64, cfg: &IntegrationConfig) -> f64 {
        let scale = self
            .y
            .iter()
            .zip(self.dy.iter())
            .map(|(y, d)| d.abs() / (cfg.abs_tol + cfg.rel_tol * y.abs()))
            .fold(0.0, f64::max);
        let h = if scale > 0.0 { 0.01 / scale } else { 1e-3 };
        h.min(cfg.max_step).min((t_end - self.t).abs()).max(1e-12)
    }
}

/// Integrates `dy/dt = rhs(t, y)` over `t_span`, recording every accepted
/// step. Fails with a step-underflow error near non-integrable
/// singularities.
pub fn integrate_adaptive<F>(
    rhs: F,
    y0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegrationConfig,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    let (t0, t_end) = t_span;
    if t_end <= t0 {
        return Err(Error::Input(format!(
            "time span must be increasing, got [{t0}, {t_end}]"
        )));
    }
    let mut stepper = Dopri5::new(rhs, t0, y0.to_vec());
    let mut traj = Trajectory::default();
    traj.push(t0, y0.to_vec(), stepper.dy().to_vec());

    let mut h = stepper.initial_step_size(t_end, cfg);
    let h_floor = 1e-14 * (t_end - t0).abs().max(1.0);
    while stepper.t() < t_end {
        h = h.min(cfg.max_step).min(t_end - stepper.t());
        let trial = stepper.trial(h, cfg);
        if !trial.err_norm.is_finite() {
            h *= 0.25;
            if h < h_floor {
                return Err(Error::StepUnderflow { t: stepper.t(), h });
            }
            continue;
        }
        if trial.err_norm <= 1.0 {
            let h_used = h;
            let err = trial.err_norm;
            stepper.accept(h_used, trial);
            traj.push(stepper.t(), stepper.y().to_vec(), stepper.dy().to_vec());
            h = stepper.next_step_size(h_used, err);
        } else {
            h = stepper.next_step_size(h, trial.err_norm).min(0.9 * h);
            if h < h_floor {
                return Err(Error::StepUnderflow { t: stepper.t(), h });
            }
        }
    }
    Ok(traj)
}

/// Scalar functional of a flat state vector.
pub type StateFunctional<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Maximum relative drift of each functional along the trajectory:
/// `max_t |F(y(t)) - F(y(0))| / max(1, |F(y(0))|)`.
pub fn drift_report(traj: &Trajectory, functionals: &[StateFunctional]) -> Vec<f64> {
    functionals
        .iter()
        .map(|f| {
            let f0 = f(&traj.states[0]);
            let denom = f0.abs().max(1.0);
            traj.states
                .iter()
                .map(|y| (f(y) - f0).abs() / denom)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Bisection for a root of `g` in `[lo, hi]` with `g(lo)` and `g(hi)` of
/// opposite signs; returns the abscissa bracketed to width `tol`.
pub fn bisect<G: FnMut(f64) -> f64>(mut g: G, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut glo = g(lo);
    debug_assert!(glo * g(hi) <= 0.0, "bisect needs a sign change");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if glo * gm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            glo = gm;
        }
    }
    0.5 * (lo + hi)
}

/// A two-dimensional separated flow whose velocity components vanish on the
/// zero sets of radicand-type guard functions, with one sign bit per radical.
/// Both separated subsystems implement this.
pub trait TurningFlow {
    fn n_guards(&self) -> usize;
    /// dq/dt under the current sign assignment; forbidden-side radicands
    /// contribute zero velocity.
    fn rhs(&self, q: &[f64; 2]) -> [f64; 2];
    /// Guard value (one radicand factor); it changes sign exactly on the
    /// turning lines, with either orientation.
    fn guard(&self, idx: usize, q: &[f64; 2]) -> f64;
    /// Which coordinate the guard constrains (0 or 1).
    fn guard_coord(&self, idx: usize) -> usize;
    /// Squared separated velocity of the coordinate as a smooth formula
    /// (negative on the forbidden side of a turning line).
    fn speed_sq(&self, coord: usize, q: &[f64; 2]) -> f64;
    /// d(speed_sq)/d(q_i), `i = guard_coord(idx)`.
    fn speed_sq_slope(&self, idx: usize, q: &[f64; 2]) -> f64;
    /// Flip the sign bit carried by the radical vanishing at `root`;
    /// returns the bit index.
    fn flip_guard_bit(&mut self, idx: usize, root: f64) -> usize;
    /// Current sign assignment, for trajectory bookkeeping.
    fn signs(&self) -> Vec<crate::Sign>;
    /// Hard stop (e.g. separated coordinates colliding).
    fn halt(&self, q: &[f64; 2]) -> Option<String>;
}

/// Separated trajectory: samples, the sign assignment at each sample and the
/// turning-point event log.
#[derive(Clone, Debug, Default)]
pub struct SeparatedRun {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    pub signs: Vec<Vec<crate::Sign>>,
    pub events: Vec<EventRecord>,
}

impl SeparatedRun {
    pub fn last_state(&self) -> [f64; 2] {
        *self.states.last().expect("empty separated run")
    }

    fn push(&mut self, t: f64, q: [f64; 2], signs: Vec<crate::Sign>) {
        self.times.push(t);
        self.states.push(q);
        self.signs.push(signs);
    }
}

const DOUBLE_ROOT_SLOPE_TOL: f64 = 1e-9;
// Proximity band (relative) below which a guard triggers the turning sweep.
const GUARD_BAND: f64 = 1e-7;

/// Integrates a separated flow through turning points. Near a zero of a
/// radicand guard the square-root vector field is desingularized by the
/// substitution `q_i = root + n w^2`: the pair `(t, q_j)` is integrated as
/// smooth functions of `w` straight through `w = 0`, where the radical's
/// sign bit flips and the velocity component reflects. The event state sits
/// on the root exactly; the event time is bracketed to integrator accuracy.
pub fn integrate_turning<FlowT: TurningFlow>(
    flow: &mut FlowT,
    q0: [f64; 2],
    t_span: (f64, f64),
    cfg: &IntegrationConfig,
) -> Result<SeparatedRun> {
    cfg.validate()?;
    let (t0, t_end) = t_span;
    if t_end <= t0 {
        return Err(Error::Input(format!(
            "time span must be increasing, got [{t0}, {t_end}]"
        )));
    }
    for coord in 0..2 {
        let v2 = flow.speed_sq(coord, &q0);
        if v2 < -1e-9 * (1.0 + q0[coord].powi(4)) {
            return Err(Error::Inadmissible(format!(
                "coordinate {coord} has negative squared speed {v2:.6e} at the initial point"
            )));
        }
    }
    if let Some(reason) = flow.halt(&q0) {
        return Err(Error::FlowSingularity(reason));
    }

    let mut run = SeparatedRun::default();
    run.push(t0, q0, flow.signs());

    let mut t = t0;
    let mut q = q0;

    enum SegmentEnd {
        Done,
        Underflow { t: f64, h: f64 },
        Sweep { idx: usize },
        Samples,
    }

    let h_floor = 1e-14 * (t_end - t0).abs().max(1.0);
    'outer: while t < t_end {
        if let Some(reason) = flow.halt(&q) {
            return Err(Error::FlowSingularity(reason));
        }
        // A start inside a guard band (including exactly on a turning line)
        // needs the sweep immediately: the plain stepper would creep past
        // the root on the clamped field.
        let mut swept = false;
        for idx in 0..flow.n_guards() {
            if guard_band_hit(flow, idx, &q) {
                let (tn, qn) = turning_sweep(flow, idx, t, q, t_end, cfg, &mut run)?;
                t = tn;
                q = qn;
                swept = true;
                break;
            }
        }
        if swept {
            continue 'outer;
        }

        // One smooth segment per sign assignment; the stepper holds a shared
        // borrow of the flow, so bit flips happen only after it is dropped.
        let mut pending: Vec<(f64, [f64; 2], Vec<crate::Sign>)> = Vec::new();
        let end = {
            let flow_ref: &FlowT = flow;
            let mut stepper = Dopri5::new(
                |_t: f64, y: &[f64], dy: &mut [f64]| {
                    let d = flow_ref.rhs(&[y[0], y[1]]);
                    dy.copy_from_slice(&d);
                },
                t,
                q.to_vec(),
            );
            let mut h = stepper.initial_step_size(t_end, cfg);
            loop {
                if stepper.t() >= t_end {
                    break SegmentEnd::Done;
                }
                h = h.min(cfg.max_step).min(t_end - stepper.t());
                let trial = stepper.trial(h, cfg);
                if !trial.err_norm.is_finite() || trial.err_norm > 1.0 {
                    h = if trial.err_norm.is_finite() {
                        stepper.next_step_size(h, trial.err_norm).min(0.9 * h)
                    } else {
                        0.25 * h
                    };
                    if h < h_floor {
                        break SegmentEnd::Underflow { t: stepper.t(), h };
                    }
                    continue;
                }
                // Commit, then check whether any guard entered its band (or
                // changed sign outright) across the step.
                let q_cur = [stepper.y()[0], stepper.y()[1]];
                let q_new = [trial.y_new[0], trial.y_new[1]];
                let mut fired: Option<usize> = None;
                for idx in 0..flow_ref.n_guards() {
                    let g_old = flow_ref.guard(idx, &q_cur);
                    let g_new = flow_ref.guard(idx, &q_new);
                    let band = GUARD_BAND * (1.0 + q_new[flow_ref.guard_coord(idx)].powi(2));
                    if g_old.abs() >= band
                        && (g_old.signum() != g_new.signum() || g_new.abs() < band)
                    {
                        fired = Some(idx);
                        break;
                    }
                }
                match fired {
                    None => {
                        let h_used = h;
                        let err = trial.err_norm;
                        stepper.accept(h_used, trial);
                        let qs = [stepper.y()[0], stepper.y()[1]];
                        pending.push((stepper.t(), qs, flow_ref.signs()));
                        if flow_ref.halt(&qs).is_some() {
                            break SegmentEnd::Samples;
                        }
                        h = stepper.next_step_size(h_used, err);
                    }
                    Some(idx) => {
                        // Sweep from the step start, which is still cleanly
                        // inside the admissible cell.
                        break SegmentEnd::Sweep { idx };
                    }
                }
            }
        };
        for (ts, qs, signs) in pending {
            t = ts;
            q = qs;
            run.push(ts, qs, signs);
        }
        match end {
            SegmentEnd::Done => break 'outer,
            SegmentEnd::Samples => continue 'outer,
            SegmentEnd::Underflow { t, h } => return Err(Error::StepUnderflow { t, h }),
            SegmentEnd::Sweep { idx } => {
                let (tn, qn) = turning_sweep(flow, idx, t, q, t_end, cfg, &mut run)?;
                t = tn;
                q = qn;
            }
        }
    }
    Ok(run)
}

/// True when the guard is inside its proximity band at `q` and the
/// coordinate is moving toward its zero (so a contact is imminent), or
/// sitting on the zero with stalled velocity.
fn guard_band_hit<FlowT: TurningFlow>(flow: &FlowT, idx: usize, q: &[f64; 2]) -> bool {
    let coord = flow.guard_coord(idx);
    let band = GUARD_BAND * (1.0 + q[coord] * q[coord]);
    let g = flow.guard(idx, q);
    if g.abs() >= band {
        return false;
    }
    let v = flow.rhs(q)[coord];
    if v.abs() <= 1e-10 {
        return true;
    }
    // approaching iff |g| shrinks along the motion
    let eps = 1e-7 * (1.0 + q[coord].abs());
    let mut probe = *q;
    probe[coord] += eps * v.signum();
    g.signum() * (flow.guard(idx, &probe) - g) < 0.0
}

/// Finds the zero of the guard's radicand next to `q[coord]` in the given
/// direction, by expanding bracket and bisection on the one-coordinate
/// polynomial.
fn locate_guard_root<FlowT: TurningFlow>(
    flow: &FlowT,
    idx: usize,
    q: &[f64; 2],
    direction: f64,
    tol: f64,
) -> Option<f64> {
    let coord = flow.guard_coord(idx);
    let eval = |v: f64| {
        let mut probe = *q;
        probe[coord] = v;
        flow.guard(idx, &probe)
    };
    let s0 = q[coord];
    let g0 = eval(s0);
    let mut step = 1e-12 * (1.0 + s0.abs());
    let limit = 4.0 * (1.0 + s0.abs());
    let mut prev = s0;
    while step < limit {
        let probe = s0 + direction * step;
        let g = eval(probe);
        if g0.signum() != g.signum() || g == 0.0 {
            let (lo, hi) = if prev <= probe {
                (prev, probe)
            } else {
                (probe, prev)
            };
            let root = bisect(eval, lo, hi, tol * (1.0 + s0.abs()));
            return Some(root);
        }
        prev = probe;
        step *= 2.0;
    }
    None
}

/// Carries the trajectory through one turning contact of guard `idx`,
/// anchored at the accurate pre-contact state `(t_anchor, q_anchor)`.
///
/// With `u = n (q_i - root)` and `w = sqrt(u)` the physical solution is
/// smooth in `w` across the contact: `dw/dt = -(1/2) sqrt(F)` where
/// `F = speed_sq / w^2` extends continuously to `w = 0`. The pair
/// `(t, q_j)` is integrated over `w` from `+w0` down through the flip at
/// `w = 0` to the exit `-w0`.
fn turning_sweep<FlowT: TurningFlow>(
    flow: &mut FlowT,
    idx: usize,
    t_anchor: f64,
    q_anchor: [f64; 2],
    t_end: f64,
    cfg: &IntegrationConfig,
    run: &mut SeparatedRun,
) -> Result<(f64, [f64; 2])> {
    let coord = flow.guard_coord(idx);
    let other = 1 - coord;
    #[cfg(feature = "sweep-trace")]
    eprintln!(
        "sweep: idx={idx} t={t_anchor:.9} q=({:.12}, {:.12}) g={:.3e} v={:.3e}",
        q_anchor[0],
        q_anchor[1],
        flow.guard(idx, &q_anchor),
        flow.rhs(&q_anchor)[coord]
    );
    let v_dir = {
        let v = flow.rhs(&q_anchor)[coord];
        if v.abs() <= 1e-10 {
            // on the line already: no inward half, no flip
            0.0
        } else {
            v.signum()
        }
    };
    let root = if v_dir == 0.0 {
        q_anchor[coord]
    } else {
        match locate_guard_root(flow, idx, &q_anchor, v_dir, cfg.event_tol.min(1e-12)) {
            Some(r) => r,
            None => {
                return Err(Error::Inadmissible(format!(
                    "guard {idx} triggered at ({}, {}) with no radicand zero ahead",
                    q_anchor[0], q_anchor[1]
                )));
            }
        }
    };
    let n = if (q_anchor[coord] - root).abs() > 1e-13 {
        (q_anchor[coord] - root).signum()
    } else {
        // sitting on the root: the admissible side is where the squared
        // speed is positive
        let probe_u = 1e-7 * (1.0 + root.abs());
        let mut probe = q_anchor;
        probe[coord] = root + probe_u;
        let fwd = flow.speed_sq(coord, &probe);
        probe[coord] = root - probe_u;
        let bwd = flow.speed_sq(coord, &probe);
        if fwd <= 0.0 && bwd <= 0.0 {
            return Err(Error::DoubleRoot {
                coordinate: if coord == 0 { "q1" } else { "q2" },
                value: root,
            });
        }
        if fwd >= bwd {
            1.0
        } else {
            -1.0
        }
    };
    // double-root test: F(0) = n * d(speed_sq)/dq_i at the root
    let mut q_root = q_anchor;
    q_root[coord] = root;
    let f0 = n * flow.speed_sq_slope(idx, &q_root);
    let scale = (1.0 + root * root).powi(2);
    if f0 < DOUBLE_ROOT_SLOPE_TOL * scale {
        return Err(Error::DoubleRoot {
            coordinate: if coord == 0 { "q1" } else { "q2" },
            value: root,
        });
    }

    let w0 = (n * (q_anchor[coord] - root)).max(0.0).sqrt();
    // Another speed zero inside the sweep interval means two turning lines
    // nearly coincide; the sweep model does not apply there.
    {
        let mut probe = q_anchor;
        for k in 1..=16 {
            let u = n * w0 * w0 * (k as f64) / 16.0;
            probe[coord] = root + u;
            if flow.speed_sq(coord, &probe) < 0.0 {
                return Err(Error::DoubleRoot {
                    coordinate: if coord == 0 { "q1" } else { "q2" },
                    value: root + u,
                });
            }
        }
    }
    let sweep_cfg = IntegrationConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-13,
        max_step: (w0.max(1e-6)) / 8.0,
        event_tol: cfg.event_tol,
    };
    // F(w, q_j) = speed_sq / w^2 extended through w = 0. Evaluated as the
    // average of the analytic slope over the offset interval,
    // F = (1/u) int_0^u d(speed_sq)/dq_i (root + v) dv with u = n w^2,
    // by 5-point Gauss: no cancellation at small w, exact for the
    // polynomial slope of the elliptic case.
    const GAUSS_X: [f64; 5] = [
        0.046910077030668,
        0.230765344947158,
        0.5,
        0.769234655052842,
        0.953089922969332,
    ];
    const GAUSS_W: [f64; 5] = [
        0.118463442528095,
        0.239314335249683,
        0.284444444444444,
        0.239314335249683,
        0.118463442528095,
    ];
    let f_of = |flow: &FlowT, w: f64, qj: f64| -> f64 {
        let off = n * w * w;
        let mut p = [0.0; 2];
        p[other] = qj;
        let mut acc = 0.0;
        for k in 0..5 {
            p[coord] = root + off * GAUSS_X[k];
            acc += GAUSS_W[k] * flow.speed_sq_slope(idx, &p);
        }
        (n * acc).max(1e-300)
    };
    // (t, q_j) as functions of the sweep parameter u = w0 - w (w decreasing)
    let half = |flow: &FlowT, u_span: (f64, f64), y0: [f64; 2], w_of: &dyn Fn(f64) -> f64| {
        integrate_adaptive(
            |u: f64, y: &[f64], dy: &mut [f64]| {
                let w = w_of(u);
                let mut p = [0.0; 2];
                p[coord] = root + n * w * w;
                p[other] = y[1];
                let f = f_of(flow, w, y[1]);
                let dtdw = -2.0 / f.sqrt(); // t grows while w decreases
                dy[0] = -dtdw; // d t / d u
                dy[1] = -dtdw * flow.rhs(&p)[other]; // d q_j / d u
            },
            &y0,
            u_span,
            &sweep_cfg,
        )
    };

    // inward half: w from w0 to 0
    let (t_contact, qj_contact) = if w0 > 0.0 {
        let traj = half(flow, (0.0, w0), [t_anchor, q_anchor[other]], &|u| w0 - u)?;
        let end = traj.last_state();
        (end[0], end[1])
    } else {
        (t_anchor, q_anchor[other])
    };

    let mut q_contact = [0.0; 2];
    q_contact[coord] = root;
    q_contact[other] = qj_contact;

    if v_dir != 0.0 {
        let bit = flow.flip_guard_bit(idx, root);
        run.events.push(EventRecord {
            t: t_contact,
            guard: idx,
            flipped_bit: Some(bit),
        });
    }
    if t_contact > *run.times.last().unwrap() {
        run.push(t_contact, q_contact, flow.signs());
    }
    if t_contact >= t_end {
        return Ok((t_contact, q_contact));
    }

    // outward half: w from 0 to -w_exit; cap the exit so the sweep does not
    // run far past t_end
    let f_exit = f0.max(1e-12);
    let w_exit = {
        let by_time = 0.5 * (t_end - t_contact) * f_exit.sqrt();
        w0.max(1e-5 * (1.0 + root.abs())).min(by_time.max(1e-9))
    };
    let traj = half(flow, (0.0, w_exit), [t_contact, qj_contact], &|u| -u)?;
    let end = traj.last_state();
    let mut q_out = [0.0; 2];
    q_out[coord] = root + n * w_exit * w_exit;
    q_out[other] = end[1];

    // the flipped branch must move inward; anything else is a sign
    // bookkeeping failure
    let v_probe = flow.rhs(&q_out)[coord];
    if v_probe * n < 0.0 {
        return Err(Error::BranchInconsistency {
            context: "turning sweep: flipped branch still moves outward",
            residual: v_probe.abs(),
            tol: 0.0,
        });
    }
    if end[0] > *run.times.last().unwrap() {
        run.push(end[0], q_out, flow.signs());
    }
    Ok((end[0], q_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    #[test]
    fn oscillator_period_accuracy() {
        let cfg = IntegrationConfig::default();
        let traj = integrate_adaptive(oscillator, &[1.0, 0.0], (0.0, TAU), &cfg).unwrap();
        let end = traj.last_state();
        assert!((end[0] - 1.0).abs() < 1e-8, "y0 end error {}", end[0] - 1.0);
        assert!(end[1].abs() < 1e-8);
    }

    #[test]
    fn fixed_step_order_is_five() {
        // Huge tolerances + max_step pin the step size; halving it must
        // shrink the endpoint error by about 2^5.
        let run = |h: f64| {
            let cfg = IntegrationConfig {
                rel_tol: 1e6,
                abs_tol: 1e6,
                max_step: h,
                event_tol: 1e-12,
            };
            let traj = integrate_adaptive(oscillator, &[1.0, 0.0], (0.0, TAU), &cfg).unwrap();
            let end = traj.last_state();
            ((end[0] - 1.0).powi(2) + end[1].powi(2)).sqrt()
        };
        let e1 = run(TAU / 64.0);
        let e2 = run(TAU / 128.0);
        let ratio = e1 / e2;
        assert!(
            ratio > 8.0 && ratio < 128.0,
            "order ratio {ratio} outside [2^3, 2^7]"
        );
    }

    #[test]
    fn dense_output_matches_analytic_solution() {
        let cfg = IntegrationConfig::default();
        let traj = integrate_adaptive(oscillator, &[1.0, 0.0], (0.0, 2.0), &cfg).unwrap();
        for &t in &[0.1, 0.77, 1.3, 1.99] {
            let y = traj.sample(t);
            assert!((y[0] - t.cos()).abs() < 1e-7);
            assert!((y[1] + t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_bad_spans_and_configs() {
        let cfg = IntegrationConfig::default();
        assert!(integrate_adaptive(oscillator, &[1.0, 0.0], (1.0, 1.0), &cfg).is_err());
        let bad = IntegrationConfig {
            rel_tol: -1.0,
            ..cfg
        };
        assert!(integrate_adaptive(oscillator, &[1.0, 0.0], (0.0, 1.0), &bad).is_err());
    }

    #[test]
    fn drift_of_conserved_energy_is_small_and_perturbed_rhs_is_flagged() {
        let cfg = IntegrationConfig::default();
        let traj = integrate_adaptive(oscillator, &[1.0, 0.0], (0.0, 10.0), &cfg).unwrap();
        let energy = |y: &[f64]| y[0] * y[0] + y[1] * y[1];
        let drift = drift_report(&traj, &[&energy]);
        assert!(drift[0] < 1e-9);

        // negative control: a slightly damped oscillator must show drift
        let damped = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0] - 1e-3 * y[1];
        };
        let traj = integrate_adaptive(damped, &[1.0, 0.0], (0.0, 10.0), &cfg).unwrap();
        let drift = drift_report(&traj, &[&energy]);
        assert!(drift[0] > 1e-4);
    }

    #[test]
    fn bisect_brackets_roots() {
        let root = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-13);
        assert!((root - 2f64.sqrt()).abs() < 1e-12);
    }
}
