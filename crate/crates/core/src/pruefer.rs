//! Modified Pruefer integration of `-u'' + V u = k^2 u` on the half line.
//!
//! The change of variables `u = R sin(theta)`, `u' = k R cos(theta)` turns
//! the second-order equation into
//!
//! ```text
//! dtheta/dx  = k - (V/k) sin^2(theta)
//! dlogR/dx   = (V/2k) sin(2 theta)
//! ```
//!
//! The integrator truncates every accepted step at the multiples of pi/2
//! crossed by theta, so each step sees a smooth right-hand side even for
//! the self-coupled feedback potential, and the sin(2 theta) = 0 switch
//! points are localized to the event tolerance. Two auxiliary quadrature
//! components (the cumulative integrals of |sin 2theta| and of
//! |sin 2theta|/(1+x)) ride along in the state so the crossing statistics
//! come out at integrator accuracy rather than from the coarse output
//! samples.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::potential::{sgn, PotentialSpec};
use crate::rk::{self, State};

/// One point of a Pruefer trajectory: position, unwrapped angle and
/// log-amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrueferState {
    pub x: f64,
    /// Unwrapped angle on the real line, not reduced mod 2 pi.
    pub theta: f64,
    /// log R; the amplitude is tracked in log scale so that polynomial
    /// decay over many decades never underflows.
    pub log_r: f64,
}

/// Integration parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    /// Wavenumber, `lambda = k^2`.
    pub k: f64,
    /// Initial angle theta(0). The default pi/4 is generic: neither a zero
    /// of sin theta nor of cos theta.
    pub theta0: f64,
    pub x_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Max step as a fraction of the half period pi/(2k), in (0, 1/2].
    /// Keeps the oscillation of sin 2theta resolved regardless of the
    /// error controller.
    pub max_step_fraction: f64,
    /// Tolerance on |sin 2theta| at localized switch points.
    pub event_tol: f64,
    /// Number of log-spaced output samples (a short linear prefix on
    /// [0, 1] is added on top).
    pub samples: usize,
}

impl IntegratorConfig {
    pub fn new(k: f64, x_end: f64) -> IntegratorConfig {
        IntegratorConfig {
            k,
            theta0: FRAC_PI_4,
            x_end,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step_fraction: 0.1,
            event_tol: 1e-12,
            samples: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if !(self.x_end > 0.0 && self.x_end.is_finite()) {
            return bad(format!("x_end must be positive, got {}", self.x_end));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.max_step_fraction > 0.0 && self.max_step_fraction <= 0.5) {
            return bad(format!(
                "max step fraction must lie in (0, 1/2], got {}",
                self.max_step_fraction
            ));
        }
        if !(self.event_tol > 0.0) {
            return bad("event tolerance must be positive".into());
        }
        if !self.theta0.is_finite() {
            return bad("theta0 must be finite".into());
        }
        if self.samples < 2 {
            return bad("need at least 2 output samples".into());
        }
        Ok(())
    }

    pub fn max_step(&self) -> f64 {
        self.max_step_fraction * FRAC_PI_2 / self.k
    }
}

/// An output sample, including the running quadrature accumulators.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub x: f64,
    pub theta: f64,
    pub log_r: f64,
    pub v: f64,
    /// Integral of |sin 2theta(y)| dy over [0, x].
    pub abs_sin_cum: f64,
    /// Integral of |sin 2theta(y)|/(1+y) dy over [0, x].
    pub weighted_sin_cum: f64,
}

/// A level crossing `theta(x_i) = theta_base + i pi/2` in the sense of the
/// oscillation bookkeeping: `i` counts consecutive first arrivals at
/// successive multiples of pi/2 above theta(0).
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    /// 1-based consecutive index.
    pub index: usize,
    pub x: f64,
    pub theta: f64,
    pub abs_sin_cum: f64,
    pub weighted_sin_cum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// sin(2 theta) = 0 localized; for the feedback potential this is a
    /// sign switch of V.
    SignSwitch,
    /// Start of a sliding interval of the feedback system (see below).
    SlideStart,
    SlideEnd,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::SignSwitch => "sign_switch",
            EventKind::SlideStart => "slide_start",
            EventKind::SlideEnd => "slide_end",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub kind: EventKind,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    Truncated { x: f64, reason: String },
}

/// Result of one integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub spec: PotentialSpec,
    pub cfg: IntegratorConfig,
    pub samples: Vec<Sample>,
    pub crossings: Vec<Crossing>,
    pub events: Vec<Event>,
    /// Sliding intervals of the feedback system, where the exact
    /// (Filippov) solution keeps theta pinned at an odd multiple of pi/2
    /// and the effective potential equals k^2. Occurs while
    /// `a/(1+x) > k^2`; empty for non-feedback potentials.
    pub slides: Vec<(f64, f64)>,
    /// sgn(sin 2 theta0); the sign pattern of the feedback potential
    /// alternates from here at each recorded switch.
    pub initial_sign: f64,
    pub termination: Termination,
    /// Set if theta retreated below an already-crossed level; the
    /// crossing list is unreliable past this point.
    pub monotone_violation: Option<f64>,
}

impl Trajectory {
    pub fn x_end(&self) -> f64 {
        self.samples.last().map(|s| s.x).unwrap_or(0.0)
    }

    pub fn is_truncated(&self) -> bool {
        matches!(self.termination, Termination::Truncated { .. })
    }

    pub fn final_state(&self) -> PrueferState {
        let s = self.samples.last().expect("trajectory has samples");
        PrueferState {
            x: s.x,
            theta: s.theta,
            log_r: s.log_r,
        }
    }

    /// Interpolate the cumulative quadrature pair (abs, weighted) at `x`,
    /// using the tightest bracket available from samples and crossings.
    pub fn cumulative_at(&self, x: f64) -> Result<(f64, f64)> {
        if self.samples.is_empty() || x < 0.0 || x > self.x_end() * (1.0 + 1e-12) {
            return Err(Error::Analysis(format!(
                "x = {x} outside trajectory range [0, {}]",
                self.x_end()
            )));
        }
        let x = x.min(self.x_end());
        // bracket from samples
        let i = self.samples.partition_point(|s| s.x <= x);
        let (mut lo, mut hi): ((f64, f64, f64), (f64, f64, f64));
        {
            let a = &self.samples[i.saturating_sub(1)];
            lo = (a.x, a.abs_sin_cum, a.weighted_sin_cum);
            let b = self.samples.get(i).unwrap_or(a);
            hi = (b.x, b.abs_sin_cum, b.weighted_sin_cum);
        }
        // tighten with the crossing records, which are much denser at
        // large x
        let j = self.crossings.partition_point(|c| c.x <= x);
        if j > 0 {
            let c = &self.crossings[j - 1];
            if c.x >= lo.0 && c.x <= x {
                lo = (c.x, c.abs_sin_cum, c.weighted_sin_cum);
            }
        }
        if let Some(c) = self.crossings.get(j) {
            if c.x <= hi.0 && c.x >= x {
                hi = (c.x, c.abs_sin_cum, c.weighted_sin_cum);
            }
        }
        if hi.0 <= lo.0 {
            return Ok((lo.1, lo.2));
        }
        let t = ((x - lo.0) / (hi.0 - lo.0)).clamp(0.0, 1.0);
        Ok((lo.1 + t * (hi.1 - lo.1), lo.2 + t * (hi.2 - lo.2)))
    }

    /// Interpolated (theta, logR) at `x` from the output samples.
    pub fn state_at(&self, x: f64) -> Result<PrueferState> {
        if self.samples.is_empty() || x < 0.0 || x > self.x_end() * (1.0 + 1e-12) {
            return Err(Error::Analysis(format!(
                "x = {x} outside trajectory range [0, {}]",
                self.x_end()
            )));
        }
        let x = x.min(self.x_end());
        let i = self.samples.partition_point(|s| s.x <= x);
        let a = &self.samples[i.saturating_sub(1)];
        let b = self.samples.get(i).unwrap_or(a);
        if b.x <= a.x {
            return Ok(PrueferState {
                x: a.x,
                theta: a.theta,
                log_r: a.log_r,
            });
        }
        let t = ((x - a.x) / (b.x - a.x)).clamp(0.0, 1.0);
        Ok(PrueferState {
            x,
            theta: a.theta + t * (b.theta - a.theta),
            log_r: a.log_r + t * (b.log_r - a.log_r),
        })
    }

    /// Export the realized feedback potential as a linear-interpolation
    /// table that a potential-blind solver can consume without access to
    /// the angle.
    ///
    /// Between switch points `V(x) = -a s/(1+x)` with the piecewise
    /// constant sign `s`; on sliding intervals the effective potential is
    /// `k^2`. Each discontinuity is straddled by a node pair at relative
    /// offset 1e-9 so linear interpolation reproduces the jump; interior
    /// spacing is at most `rel_spacing * (1+x)`, matching the 1/(1+x)
    /// scale of the curvature.
    pub fn to_table(&self, rel_spacing: f64) -> Result<crate::potential::Table> {
        use crate::potential::{format_metadata, Interp, Table};
        let a = match &self.spec {
            PotentialSpec::FeedbackSign { amplitude } => *amplitude,
            _ => {
                return Err(Error::InvalidConfig(
                    "tabulation from a trajectory only applies to the feedback potential".into(),
                ))
            }
        };
        if let Termination::Truncated { x, ref reason } = self.termination {
            return Err(Error::TruncatedTrajectory {
                x,
                reason: reason.clone(),
            });
        }
        if !(rel_spacing > 0.0 && rel_spacing <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "relative node spacing must lie in (0, 1/2], got {rel_spacing}"
            )));
        }
        let k = self.cfg.k;
        let x_end = self.x_end();

        // assemble smooth pieces from the event log; sign = 0 marks a
        // sliding piece
        let mut pieces: Vec<(f64, f64, f64)> = Vec::new();
        let mut cur_x = 0.0f64;
        let mut cur_sign = self.initial_sign;
        let mut slide_from: Option<f64> = None;
        for e in &self.events {
            match e.kind {
                EventKind::SignSwitch => {
                    if e.x > cur_x {
                        pieces.push((cur_x, e.x, cur_sign));
                    }
                    cur_sign = -cur_sign;
                    cur_x = e.x;
                }
                EventKind::SlideStart => slide_from = Some(e.x),
                EventKind::SlideEnd => {
                    let s = slide_from.take().unwrap_or(cur_x);
                    if e.x > s {
                        pieces.push((s, e.x, 0.0));
                    }
                    cur_x = e.x;
                    // the trajectory always leaves a slide into the cell
                    // just above an odd boundary, where sin 2theta < 0
                    cur_sign = -1.0;
                }
            }
        }
        if x_end > cur_x {
            pieces.push((cur_x, x_end, cur_sign));
        }

        let mut xs: Vec<f64> = Vec::new();
        let mut vs: Vec<f64> = Vec::new();
        for (i, &(p, q, s)) in pieces.iter().enumerate() {
            let value = |x: f64| if s == 0.0 { k * k } else { -a * s / (1.0 + x) };
            let lo = if i == 0 { p } else { p + 1e-9 * (1.0 + p) };
            let hi = if i == pieces.len() - 1 {
                q
            } else {
                q - 1e-9 * (1.0 + q)
            };
            if hi <= lo {
                continue;
            }
            let mut x = lo;
            while x < hi {
                xs.push(x);
                vs.push(value(x));
                x += rel_spacing * (1.0 + x);
            }
            xs.push(hi);
            vs.push(value(hi));
        }

        let mut t = Table::new(xs, vs, Interp::Linear)?;
        t.metadata = format_metadata(&self.spec);
        t.metadata
            .insert("k".into(), crate::io::format_g17(k));
        t.metadata
            .insert("theta0".into(), crate::io::format_g17(self.cfg.theta0));
        Ok(t)
    }
}

/// The pair of Pruefer right-hand sides for given angle, potential value
/// and wavenumber: `(dtheta/dx, dlogR/dx)`.
pub fn pruefer_rhs(theta: f64, v: f64, k: f64) -> (f64, f64) {
    let s = theta.sin();
    (k - (v / k) * s * s, (v / (2.0 * k)) * (2.0 * theta).sin())
}

/// Convert a Pruefer state to wavefunction coordinates
/// `(u, u') = (e^logR sin theta, k e^logR cos theta)`.
pub fn to_wavefunction(state: &PrueferState, k: f64) -> Result<(f64, f64)> {
    if state.log_r > 700.0 {
        return Err(Error::AmplitudeOverflow { log_r: state.log_r });
    }
    let r = state.log_r.exp();
    Ok((r * state.theta.sin(), k * r * state.theta.cos()))
}

/// Invert the change of variables: recover `(theta, logR)` from
/// `(u, u')`, choosing the angle representative closest to `theta_hint`.
pub fn from_wavefunction(u: f64, u_prime: f64, k: f64, theta_hint: f64) -> Result<(f64, f64)> {
    if u == 0.0 && u_prime == 0.0 {
        return Err(Error::ZeroWavefunction);
    }
    if !(k > 0.0) {
        return Err(Error::InvalidConfig(format!("k must be positive, got {k}")));
    }
    let c = u_prime / k;
    let log_r = 0.5 * (u * u + c * c).ln();
    let raw = u.atan2(c);
    let turns = ((theta_hint - raw) / (2.0 * PI)).round();
    Ok((raw + 2.0 * PI * turns, log_r))
}

/// Return the crossing list, refusing if the angle was seen to retreat
/// below a level it had already crossed.
pub fn detect_crossings(trajectory: &Trajectory) -> Result<&[Crossing]> {
    if let Some(x) = trajectory.monotone_violation {
        return Err(Error::NonMonotoneAngle { x });
    }
    Ok(&trajectory.crossings)
}

// ---------------------------------------------------------------------
// integration
// ---------------------------------------------------------------------

struct Rhs<'a> {
    spec: &'a PotentialSpec,
    k: f64,
    /// sgn(sin 2theta) on the current smooth piece; only consulted by the
    /// feedback potential.
    piece_sign: f64,
}

impl Rhs<'_> {
    fn potential(&self, x: f64, theta: f64) -> Result<f64> {
        match self.spec {
            PotentialSpec::FeedbackSign { amplitude } => {
                let _ = theta; // sign is piecewise constant by construction
                Ok(-(amplitude / (1.0 + x)) * self.piece_sign)
            }
            other => other.evaluate(x, None),
        }
    }

    fn eval(&self, x: f64, y: &State) -> Result<State> {
        let theta = y[0];
        let v = self.potential(x, theta)?;
        let (dtheta, dlog_r) = pruefer_rhs(theta, v, self.k);
        let a2 = (2.0 * theta).sin().abs();
        Ok([dtheta, dlog_r, a2, a2 / (1.0 + x)])
    }
}

fn cell_sign(level: i64) -> f64 {
    if level.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Output abscissas: a linear prefix on [0, 1] plus `n` log-spaced points
/// on (1, x_end].
fn output_grid(x_end: f64, n: usize) -> Vec<f64> {
    let mut grid = Vec::with_capacity(n + 34);
    if x_end <= 1.0 {
        let m = n.max(2);
        for j in 0..=m {
            grid.push(x_end * j as f64 / m as f64);
        }
        return grid;
    }
    const PREFIX: usize = 32;
    for j in 0..=PREFIX {
        grid.push(j as f64 / PREFIX as f64);
    }
    let log_end = x_end.ln();
    for j in 1..=n {
        let x = (log_end * j as f64 / n as f64).exp();
        if x > 1.0 + 1e-12 {
            grid.push(x);
        }
    }
    *grid.last_mut().unwrap() = x_end;
    grid.dedup_by(|a, b| *a <= *b);
    grid
}

struct Builder {
    grid: Vec<f64>,
    next_out: usize,
    samples: Vec<Sample>,
    crossings: Vec<Crossing>,
    events: Vec<Event>,
    slides: Vec<(f64, f64)>,
    monotone_violation: Option<f64>,
}

impl Builder {
    fn emit_between<F>(&mut self, x0: f64, x1: f64, mut state_at: F)
    where
        F: FnMut(f64) -> (State, f64),
    {
        while self.next_out < self.grid.len() && self.grid[self.next_out] <= x1 * (1.0 + 1e-15) {
            let xo = self.grid[self.next_out].min(x1).max(x0);
            let (y, v) = state_at(xo);
            self.samples.push(Sample {
                x: self.grid[self.next_out],
                theta: y[0],
                log_r: y[1],
                v,
                abs_sin_cum: y[2],
                weighted_sin_cum: y[3],
            });
            self.next_out += 1;
        }
    }
}

/// Integrate the Pruefer system for `spec` under `cfg`.
///
/// For `FeedbackSign` the potential is re-evaluated from the current
/// angle piece at every right-hand-side call, every sign switch of
/// sin 2theta is localized to the event tolerance and recorded, and
/// sliding intervals (where the two one-sided vector fields both point at
/// the switch surface) are advanced exactly along theta = const.
pub fn integrate(spec: &PotentialSpec, cfg: &IntegratorConfig) -> Result<Trajectory> {
    spec.validate()?;
    cfg.validate()?;
    if let Some(t) = spec.as_table() {
        if t.x_min() > 0.0 || t.x_max() < cfg.x_end {
            return Err(Error::InvalidConfig(format!(
                "tabulated grid [{}, {}] does not cover [0, {}]",
                t.x_min(),
                t.x_max(),
                cfg.x_end
            )));
        }
    }

    let k = cfg.k;
    let half = FRAC_PI_2;
    let feedback_amp = match spec {
        PotentialSpec::FeedbackSign { amplitude } => Some(*amplitude),
        _ => None,
    };

    let mut x = 0.0f64;
    // theta0 exactly on a boundary falls in the upper cell, consistent
    // with the sgn(0) = +1 convention
    let mut level = (cfg.theta0 / half).floor() as i64;
    let mut y: State = [cfg.theta0, 0.0, 0.0, 0.0];
    let mut max_level = level; // highest boundary index already reached
    let initial_sign = sgn((2.0 * cfg.theta0).sin());

    let mut b = Builder {
        grid: output_grid(cfg.x_end, cfg.samples),
        next_out: 0,
        samples: Vec::new(),
        crossings: Vec::new(),
        events: Vec::new(),
        slides: Vec::new(),
        monotone_violation: None,
    };

    let mut rhs = Rhs {
        spec,
        k,
        piece_sign: cell_sign(level),
    };

    // initial sample at x = 0
    {
        let v0 = rhs.potential(0.0, y[0])?;
        b.emit_between(0.0, 0.0, |_| (y, v0));
    }

    let max_step = cfg.max_step();
    let mut h = max_step.min(1e-2).min(cfg.x_end);
    let mut k1 = rhs.eval(x, &y)?;
    let mut termination = Termination::Completed;
    // guard against event loops pinned at a boundary
    let theta_guard = (cfg.event_tol * 0.5).max(1e-14);

    'outer: while x < cfg.x_end * (1.0 - 1e-15) {
        let mut hs = h.min(max_step).min(cfg.x_end - x);
        if let Some(t) = spec.as_table() {
            if let Some(xn) = t.next_node_after(x) {
                if xn > x {
                    hs = hs.min(xn - x);
                }
            }
        }
        if hs < 1e-14 * (1.0 + x) {
            termination = Termination::Truncated {
                x,
                reason: "step size underflow".into(),
            };
            break;
        }

        let attempt = rk::step(&mut |xx, yy| rhs.eval(xx, yy), x, &y, &k1, hs, cfg.rel_tol, cfg.abs_tol)?;
        if !attempt.y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { x });
        }
        if attempt.err > 1.0 {
            h = rk::next_step_size(hs, attempt.err);
            if h < 1e-14 * (1.0 + x) {
                termination = Termination::Truncated {
                    x,
                    reason: "step size underflow during error control".into(),
                };
                break;
            }
            continue;
        }

        let upper = (level + 1) as f64 * half;
        let lower = level as f64 * half;
        let th_new = attempt.y[0];
        let crossing_up = th_new >= upper;
        let crossing_dn = th_new < lower - theta_guard;

        if !(crossing_up || crossing_dn) {
            // plain accepted step
            let v_of = |xx: f64, th: f64| rhs.potential(xx, th).unwrap_or(f64::NAN);
            b.emit_between(x, x + hs, |xo| {
                let t = ((xo - x) / hs).clamp(0.0, 1.0);
                let yy = attempt.eval(t);
                let v = v_of(xo, yy[0]);
                (yy, v)
            });
            x += hs;
            y = attempt.y;
            k1 = attempt.f_end;
            h = rk::next_step_size(hs, attempt.err);
            continue;
        }

        // localize the boundary arrival: bisect the dense interpolant,
        // then Newton-polish by retaking the step with the exact size
        let target = if crossing_up { upper } else { lower };
        let mut t_lo = 0.0f64;
        let mut t_hi = 1.0f64;
        for _ in 0..60 {
            let tm = 0.5 * (t_lo + t_hi);
            let val = attempt.eval(tm)[0] - target;
            let lo_val = attempt.eval(t_lo)[0] - target;
            if (val >= 0.0) == (lo_val >= 0.0) {
                t_lo = tm;
            } else {
                t_hi = tm;
            }
            if t_hi - t_lo < 1e-14 {
                break;
            }
        }
        let mut h_ev = (0.5 * (t_lo + t_hi) * hs).clamp(1e-300, hs);
        let mut best: Option<rk::Step> = None;
        for _ in 0..8 {
            let trial = rk::step(
                &mut |xx, yy| rhs.eval(xx, yy),
                x,
                &y,
                &k1,
                h_ev,
                cfg.rel_tol,
                cfg.abs_tol,
            )?;
            let theta_end = trial.y[0];
            let resid = (2.0 * theta_end).sin().abs();
            let dtheta = trial.f_end[0];
            best = Some(trial);
            if resid <= cfg.event_tol || dtheta.abs() < 1e-300 {
                break;
            }
            let dh = (target - theta_end) / dtheta;
            let proposed = h_ev + dh;
            if !(proposed > 0.0 && proposed <= hs * (1.0 + 1e-9)) {
                break;
            }
            if (proposed - h_ev).abs() < 1e-16 * (1.0 + x) {
                break;
            }
            h_ev = proposed.min(hs);
        }
        let ev_step = best.expect("at least one event step taken");
        let x_ev = x + h_ev;

        // emit output points inside the truncated step
        {
            let v_of = |xx: f64, th: f64| rhs.potential(xx, th).unwrap_or(f64::NAN);
            b.emit_between(x, x_ev, |xo| {
                let t = ((xo - x) / h_ev).clamp(0.0, 1.0);
                let yy = ev_step.eval(t);
                let v = v_of(xo, yy[0]);
                (yy, v)
            });
        }

        let mut y_ev = ev_step.y;
        y_ev[0] = target; // snap; residual is within the event tolerance
        let boundary = if crossing_up { level + 1 } else { level };

        if feedback_amp.is_some() {
            b.events.push(Event {
                kind: EventKind::SignSwitch,
                x: x_ev,
            });
        }
        if crossing_up && boundary > max_level {
            max_level = boundary;
            let index = b.crossings.len() + 1;
            b.crossings.push(Crossing {
                index,
                x: x_ev,
                theta: target,
                abs_sin_cum: y_ev[2],
                weighted_sin_cum: y_ev[3],
            });
        } else if crossing_dn && boundary < max_level && !b.crossings.is_empty() {
            b.monotone_violation.get_or_insert(x_ev);
        }

        x = x_ev;
        y = y_ev;

        // sliding check: at odd multiples of pi/2 the feedback vector
        // field can point at the surface from both sides
        let mut slid = false;
        if let Some(a) = feedback_amp {
            if boundary.rem_euclid(2) != 0 {
                let attracting = a / (1.0 + x) > k * k;
                if attracting {
                    let x_exit = (a / (k * k) - 1.0).min(cfg.x_end);
                    if x_exit > x {
                        b.events.push(Event {
                            kind: EventKind::SlideStart,
                            x,
                        });
                        // theta, logR and both accumulators are constant
                        // along the slide (sin 2theta = 0)
                        let y_const = y;
                        b.emit_between(x, x_exit, |_| (y_const, k * k));
                        b.slides.push((x, x_exit));
                        b.events.push(Event {
                            kind: EventKind::SlideEnd,
                            x: x_exit,
                        });
                        x = x_exit;
                        slid = true;
                    }
                }
            }
        }

        // pick the cell the trajectory continues in
        if slid {
            // exits upward: dtheta/dx >= 0 above the boundary from here on
            level = boundary;
        } else {
            rhs.piece_sign = cell_sign(boundary); // upper cell, tentatively
            let f_up = rhs.eval(x, &y)?[0];
            level = if f_up >= 0.0 { boundary } else { boundary - 1 };
        }
        rhs.piece_sign = cell_sign(level);
        k1 = rhs.eval(x, &y)?;
        h = h.max(1e-6 * (1.0 + x));

        if x >= cfg.x_end * (1.0 - 1e-15) {
            break 'outer;
        }
    }

    // make sure the final grid point is emitted even if the loop ended a
    // rounding error short of it
    if b.next_out < b.grid.len() && matches!(termination, Termination::Completed) {
        let v = rhs.potential(x, y[0])?;
        let y_final = y;
        b.emit_between(0.0, cfg.x_end, |_| (y_final, v));
    }

    Ok(Trajectory {
        spec: spec.clone(),
        cfg: cfg.clone(),
        samples: b.samples,
        crossings: b.crossings,
        events: b.events,
        slides: b.slides,
        initial_sign,
        termination,
        monotone_violation: b.monotone_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rhs_matches_closed_forms() {
        // V = 0: (k, 0)
        let (dt, dr) = pruefer_rhs(1.234, 0.0, 2.0);
        assert_relative_eq!(dt, 2.0);
        assert_relative_eq!(dr, 0.0);
        // theta = 0: sin = 0
        let (dt, dr) = pruefer_rhs(0.0, 7.0, 1.0);
        assert_relative_eq!(dt, 1.0);
        assert_relative_eq!(dr, 0.0);
        // theta = pi/4, V = 1, k = 1: (1/2, 1/2)
        let (dt, dr) = pruefer_rhs(FRAC_PI_4, 1.0, 1.0);
        assert_relative_eq!(dt, 0.5, epsilon = 1e-15);
        assert_relative_eq!(dr, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn wavefunction_conversion_examples() {
        let (u, up) = to_wavefunction(
            &PrueferState {
                x: 0.0,
                theta: FRAC_PI_2,
                log_r: 0.0,
            },
            3.0,
        )
        .unwrap();
        assert_relative_eq!(u, 1.0);
        assert!(up.abs() < 1e-15);

        let (u, up) = to_wavefunction(
            &PrueferState {
                x: 0.0,
                theta: 0.0,
                log_r: 0.0,
            },
            3.0,
        )
        .unwrap();
        assert_relative_eq!(u, 0.0);
        assert_relative_eq!(up, 3.0);

        let (u, up) = to_wavefunction(
            &PrueferState {
                x: 0.0,
                theta: FRAC_PI_4,
                log_r: 2f64.ln(),
            },
            1.0,
        )
        .unwrap();
        assert_relative_eq!(u, 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(up, 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn from_wavefunction_examples() {
        let (theta, log_r) = from_wavefunction(1.0, 0.0, 2.0, 1.5).unwrap();
        assert_relative_eq!(theta, FRAC_PI_2);
        assert_relative_eq!(log_r, 0.0);
        let (theta, log_r) = from_wavefunction(0.0, 2.0, 2.0, 0.1).unwrap();
        assert_relative_eq!(theta, 0.0);
        assert_relative_eq!(log_r, 0.0);
        assert!(matches!(
            from_wavefunction(0.0, 0.0, 1.0, 0.0),
            Err(Error::ZeroWavefunction)
        ));
    }

    #[test]
    fn wavefunction_round_trip() {
        let s = PrueferState {
            x: 3.0,
            theta: 17.3,
            log_r: -4.2,
        };
        let k = 0.7;
        let (u, up) = to_wavefunction(&s, k).unwrap();
        let (theta, log_r) = from_wavefunction(u, up, k, s.theta).unwrap();
        assert_relative_eq!(theta, s.theta, epsilon = 1e-12);
        assert_relative_eq!(log_r, s.log_r, epsilon = 1e-12);
    }

    #[test]
    fn free_case_is_exact() {
        let cfg = IntegratorConfig {
            theta0: 0.3,
            ..IntegratorConfig::new(1.0, 100.0)
        };
        let traj = integrate(&PotentialSpec::Zero, &cfg).unwrap();
        assert!(!traj.is_truncated());
        for s in &traj.samples {
            assert!(
                (s.theta - 0.3 - s.x).abs() <= 1e-9,
                "theta off at x = {}: {}",
                s.x,
                s.theta - 0.3 - s.x
            );
            assert!(s.log_r.abs() <= 1e-9);
            assert_eq!(s.v, 0.0);
        }
        assert_relative_eq!(traj.x_end(), 100.0);
    }

    #[test]
    fn free_case_crossing_spacing_is_half_period() {
        let cfg = IntegratorConfig {
            theta0: 0.1,
            ..IntegratorConfig::new(1.0, 50.0)
        };
        let traj = integrate(&PotentialSpec::Zero, &cfg).unwrap();
        let cr = detect_crossings(&traj).unwrap();
        assert!(cr.len() > 20);
        // theta = 0.1 + x crosses i*pi/2 at x = i*pi/2 - 0.1
        for c in cr {
            let expect = c.index as f64 * FRAC_PI_2 - 0.1;
            assert!(
                (c.x - expect).abs() < 1e-9,
                "crossing {} at {} expected {}",
                c.index,
                c.x,
                expect
            );
        }
        for w in cr.windows(2) {
            assert!((w[1].x - w[0].x - FRAC_PI_2).abs() < 1e-9);
        }
    }

    #[test]
    fn free_case_abs_sin_accumulator() {
        // integral over a full half period of |sin 2theta| is 1/k
        let cfg = IntegratorConfig {
            theta0: 0.0,
            ..IntegratorConfig::new(2.0, 30.0)
        };
        let traj = integrate(&PotentialSpec::Zero, &cfg).unwrap();
        let cr = detect_crossings(&traj).unwrap();
        for w in cr.windows(2) {
            let v = w[1].abs_sin_cum - w[0].abs_sin_cum;
            assert!((v - 0.5).abs() < 1e-8, "per-period integral {v}");
        }
    }

    #[test]
    fn feedback_records_switches_and_decays() {
        let spec = PotentialSpec::FeedbackSign { amplitude: 1.0 };
        let cfg = IntegratorConfig::new(0.5, 2000.0);
        let traj = integrate(&spec, &cfg).unwrap();
        assert!(!traj.is_truncated());
        assert!(!traj.events.is_empty());
        // a = 1, k = 0.5: one sliding interval ending at a/k^2 - 1 = 3
        assert_eq!(traj.slides.len(), 1);
        let (x_on, x_off) = traj.slides[0];
        assert!(x_on < 1.0);
        assert_relative_eq!(x_off, 3.0, epsilon = 1e-9);
        // log R ~ -p ln x + O(1); a two-point slope cancels the offset
        // (notably the flat stretch contributed by the slide)
        let s0 = traj.state_at(100.0).unwrap();
        let s1 = traj.final_state();
        let p = -(s1.log_r - s0.log_r) / (2000f64 / 100.0).ln();
        assert!((p - 1.0 / (0.5 * PI)).abs() < 0.05, "rough exponent {p}");
    }

    #[test]
    fn feedback_well_posedness_under_tolerance_change() {
        let spec = PotentialSpec::FeedbackSign { amplitude: 1.0 };
        let mut cfg = IntegratorConfig::new(0.5, 1e4);
        cfg.rel_tol = 1e-10;
        cfg.abs_tol = 1e-12;
        let t1 = integrate(&spec, &cfg).unwrap();
        cfg.rel_tol = 1e-12;
        cfg.abs_tol = 1e-14;
        let t2 = integrate(&spec, &cfg).unwrap();
        let d = (t1.final_state().log_r - t2.final_state().log_r).abs();
        assert!(d < 1e-6, "logR tolerance sensitivity {d}");
    }

    #[test]
    fn tabulated_domain_must_cover_range() {
        let t = crate::potential::Table::new(vec![0.0, 5.0], vec![0.0, 0.0], crate::potential::Interp::Step)
            .unwrap();
        let spec = PotentialSpec::Tabulated(t);
        let cfg = IntegratorConfig::new(1.0, 10.0);
        assert!(integrate(&spec, &cfg).is_err());
    }

    #[test]
    fn monotone_angle_where_potential_small() {
        let spec = PotentialSpec::CoulombSign {
            amplitude: 0.3,
            sign: 1,
        };
        let cfg = IntegratorConfig::new(1.0, 200.0);
        let traj = integrate(&spec, &cfg).unwrap();
        // |V| < k^2 everywhere here, so theta strictly increases
        for w in traj.samples.windows(2) {
            assert!(w[1].theta > w[0].theta);
        }
        assert!(traj.monotone_violation.is_none());
    }
}
