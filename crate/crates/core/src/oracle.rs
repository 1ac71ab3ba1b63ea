//! Independent cross-check of the Pruefer pipeline: a deliberately
//! low-tech fixed-step classical RK4 integration of the original
//! second-order equation `-u'' + V u = k^2 u`, sharing no right-hand-side
//! code with the adaptive Pruefer integrator. Agreement between the two
//! is evidence, not tautology.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potential::PotentialSpec;
use crate::pruefer::{from_wavefunction, Trajectory};

/// One recorded point of the direct integration. The pair `(u, u')` is
/// stored rescaled; the true values carry the extra factor
/// `e^{log_scale}` (renormalization guards against overflow for growing
/// solutions).
#[derive(Debug, Clone, Copy)]
pub struct WaveSample {
    pub x: f64,
    pub u: f64,
    pub u_prime: f64,
    pub log_scale: f64,
}

/// Fixed-step direct solution of the second-order equation.
#[derive(Debug, Clone)]
pub struct WaveTrajectory {
    pub k: f64,
    pub u0: f64,
    pub u0_prime: f64,
    pub step: f64,
    pub samples: Vec<WaveSample>,
}

const RESCALE_LIMIT: f64 = 1.3407807929942597e154; // 2^512
const RESCALE_LOG: f64 = 354.8912927985796; // 512 ln 2

/// Classical fixed-step RK4 integration of `u'' = (V - k^2) u` on
/// `[0, x_end]`, recording at the requested abscissas.
///
/// `FeedbackSign` is rejected: the oracle must never evaluate the
/// feedback rule itself (it would inherit the Pruefer angle and lose
/// independence); integrate its exported table instead. Steps never
/// straddle tabulated grid nodes, so each RK4 step sees a smooth
/// potential.
pub fn integrate_direct(
    spec: &PotentialSpec,
    k: f64,
    u0: f64,
    u0_prime: f64,
    x_end: f64,
    step: f64,
    record_at: &[f64],
) -> Result<WaveTrajectory> {
    spec.validate()?;
    if spec.is_feedback() {
        return Err(Error::InvalidConfig(
            "the oracle integrates the feedback potential only through its exported table".into(),
        ));
    }
    if !(k > 0.0 && x_end > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need k > 0 and x_end > 0, got k = {k}, x_end = {x_end}"
        )));
    }
    let max_step = PI / (20.0 * k);
    if !(step > 0.0 && step <= max_step) {
        return Err(Error::InvalidConfig(format!(
            "step {step} does not resolve the oscillation: need 0 < step <= pi/(20k) = {max_step}"
        )));
    }
    if let Some(end) = spec.domain_end() {
        if end < x_end {
            return Err(Error::OutsideTable {
                x: x_end,
                lo: 0.0,
                hi: end,
            });
        }
    }
    let mut stops: Vec<f64> = record_at
        .iter()
        .copied()
        .filter(|&x| x >= 0.0 && x <= x_end)
        .collect();
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stops.dedup();

    let rhs = |x: f64, u: f64, up: f64| -> Result<(f64, f64)> {
        let v = spec.evaluate(x, None)?;
        Ok((up, (v - k * k) * u))
    };

    let mut x = 0.0f64;
    let mut u = u0;
    let mut up = u0_prime;
    let mut log_scale = 0.0f64;
    let mut samples = Vec::with_capacity(stops.len());
    let mut stop_iter = stops.into_iter().peekable();

    if stop_iter.peek() == Some(&0.0) {
        stop_iter.next();
        samples.push(WaveSample {
            x: 0.0,
            u,
            u_prime: up,
            log_scale,
        });
    }

    while x < x_end {
        let next_record = stop_iter.peek().copied();
        let mut target = next_record.unwrap_or(x_end).min(x_end);
        if let Some(t) = spec.as_table() {
            if let Some(node) = t.next_node_after(x) {
                if node < target {
                    target = node;
                }
            }
        }
        if target <= x {
            // should not happen: stops are deduped and nodes strictly
            // increase; guard against float pathologies
            target = x + step;
        }
        let span = target - x;
        let n = (span / step).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for j in 0..n {
            let xj = x + h * j as f64;
            let (a1, b1) = rhs(xj, u, up)?;
            let (a2, b2) = rhs(xj + h / 2.0, u + h / 2.0 * a1, up + h / 2.0 * b1)?;
            let (a3, b3) = rhs(xj + h / 2.0, u + h / 2.0 * a2, up + h / 2.0 * b2)?;
            let (a4, b4) = rhs(xj + h, u + h * a3, up + h * b3)?;
            u += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            up += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
            if u.abs().max(up.abs()) > RESCALE_LIMIT {
                u /= RESCALE_LIMIT;
                up /= RESCALE_LIMIT;
                log_scale += RESCALE_LOG;
            }
            if !(u.is_finite() && up.is_finite()) {
                return Err(Error::NonFiniteState { x: xj });
            }
        }
        x = target;
        if Some(target) == next_record {
            stop_iter.next();
            samples.push(WaveSample {
                x,
                u,
                u_prime: up,
                log_scale,
            });
        }
    }
    Ok(WaveTrajectory {
        k,
        u0,
        u0_prime,
        step,
        samples,
    })
}

/// Discrepancy between the Pruefer trajectory and the direct oracle at
/// common abscissas.
#[derive(Debug, Clone, Serialize)]
pub struct Discrepancy {
    pub max_dtheta: f64,
    pub max_dlog_r: f64,
    pub x_range: (f64, f64),
    pub n_points: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Reconstruct `(theta, logR)` from each oracle sample and compare with
/// the Pruefer trajectory. Initial data must match:
/// `u(0) = R0 sin theta0`, `u'(0) = k R0 cos theta0`.
pub fn cross_check(
    pruefer: &Trajectory,
    wave: &WaveTrajectory,
    tolerance: f64,
) -> Result<Discrepancy> {
    let k = pruefer.cfg.k;
    if (wave.k - k).abs() > 1e-14 * k {
        return Err(Error::InvalidConfig(format!(
            "wavenumber mismatch: {} vs {}",
            wave.k, k
        )));
    }
    let theta0 = pruefer.cfg.theta0;
    let expect_u0 = theta0.sin();
    let expect_up0 = k * theta0.cos();
    if (wave.u0 - expect_u0).abs() > 1e-12 || (wave.u0_prime - expect_up0).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "mismatched initial data: oracle ({}, {}) vs Pruefer ({expect_u0}, {expect_up0})",
            wave.u0, wave.u0_prime
        )));
    }

    let mut max_dtheta = 0.0f64;
    let mut max_dlog_r = 0.0f64;
    let mut n_points = 0usize;
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for ws in &wave.samples {
        let ps = pruefer.state_at(ws.x)?;
        // exact-abscissa match expected; interpolation would blur the
        // comparison
        let (theta, log_r) = match from_wavefunction(ws.u, ws.u_prime, k, ps.theta) {
            Ok(v) => v,
            Err(Error::ZeroWavefunction) => continue,
            Err(e) => return Err(e),
        };
        let log_r = log_r + ws.log_scale;
        max_dtheta = max_dtheta.max((theta - ps.theta).abs());
        max_dlog_r = max_dlog_r.max((log_r - ps.log_r).abs());
        n_points += 1;
        x_min = x_min.min(ws.x);
        x_max = x_max.max(ws.x);
    }
    if n_points == 0 {
        return Err(Error::Analysis("no common comparison points".into()));
    }
    Ok(Discrepancy {
        max_dtheta,
        max_dlog_r,
        x_range: (x_min, x_max),
        n_points,
        tolerance,
        pass: max_dtheta <= tolerance && max_dlog_r <= tolerance,
    })
}

/// Trapezoid quadrature of `u^2` from `x_lo` to the end of the record.
pub fn l2_tail_wave(wave: &WaveTrajectory, x_lo: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = wave
        .samples
        .iter()
        .filter(|s| s.x >= x_lo)
        .map(|s| {
            let u = s.u * s.log_scale.exp();
            (s.x, u * u)
        })
        .collect();
    trapezoid(&pts)
}

/// Trapezoid quadrature of `R^2 = e^{2 logR}` from `x_lo` to the end of
/// the trajectory.
pub fn l2_tail_pruefer(trajectory: &Trajectory, x_lo: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = trajectory
        .samples
        .iter()
        .filter(|s| s.x >= x_lo)
        .map(|s| (s.x, (2.0 * s.log_r).exp()))
        .collect();
    trapezoid(&pts)
}

fn trapezoid(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 2 {
        return Err(Error::Analysis(
            "too few points in the tail for quadrature".into(),
        ));
    }
    let mut acc = 0.0;
    for w in pts.windows(2) {
        acc += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
    }
    Ok(acc)
}
