//! Quantitative analysis of integrated trajectories: decay-exponent fits, the
//! weighted |sin 2theta| integral law, per-period integrals between
//! crossings, the sharp threshold 4a^2/pi^2 and the L2 eigenvalue
//! verdict.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pruefer::{detect_crossings, Trajectory};

/// Least-squares fit of logR against ln x over a window.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Slope of logR vs ln x; decaying R gives a negative slope.
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub sample_count: usize,
}

impl DecayFit {
    /// The decay exponent `p` with `R(x) ~ x^(-p)`.
    pub fn exponent(&self) -> f64 {
        -self.slope
    }
}

const MIN_FIT_SAMPLES: usize = 50;

/// Fit logR = slope * ln x + intercept over trajectory samples inside
/// `[x_lo, x_hi]`. The window must span at least one decade and contain
/// at least 50 samples.
pub fn fit_decay(trajectory: &Trajectory, x_lo: f64, x_hi: f64) -> Result<DecayFit> {
    if !(x_lo >= 1.0) {
        return Err(Error::Analysis(format!(
            "fit window must start at x >= 1, got {x_lo}"
        )));
    }
    if !(x_hi / x_lo >= 10.0) {
        return Err(Error::Analysis(format!(
            "degenerate fit window [{x_lo}, {x_hi}]: needs at least one decade"
        )));
    }
    let pts: Vec<(f64, f64)> = trajectory
        .samples
        .iter()
        .filter(|s| s.x >= x_lo && s.x <= x_hi)
        .map(|s| (s.x.ln(), s.log_r))
        .collect();
    fit_line(&pts, x_lo, x_hi)
}

/// Same fit on raw `(x, logR)` pairs, for imported trajectory files.
pub fn fit_decay_samples(samples: &[(f64, f64)], x_lo: f64, x_hi: f64) -> Result<DecayFit> {
    if !(x_lo >= 1.0) {
        return Err(Error::Analysis(format!(
            "fit window must start at x >= 1, got {x_lo}"
        )));
    }
    if !(x_hi / x_lo >= 10.0) {
        return Err(Error::Analysis(format!(
            "degenerate fit window [{x_lo}, {x_hi}]"
        )));
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(x, _)| *x >= x_lo && *x <= x_hi)
        .map(|(x, r)| (x.ln(), *r))
        .collect();
    fit_line(&pts, x_lo, x_hi)
}

fn fit_line(pts: &[(f64, f64)], x_lo: f64, x_hi: f64) -> Result<DecayFit> {
    let n = pts.len();
    if n < MIN_FIT_SAMPLES {
        return Err(Error::Analysis(format!(
            "too few samples in fit window [{x_lo}, {x_hi}]: {n} < {MIN_FIT_SAMPLES}"
        )));
    }
    let nf = n as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (t, y) in pts {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
    }
    if stt == 0.0 {
        return Err(Error::Analysis("degenerate fit window".into()));
    }
    let slope = sty / stt;
    let intercept = mean_y - slope * mean_t;
    let mut ss = 0.0;
    for (t, y) in pts {
        let r = y - (slope * t + intercept);
        ss += r * r;
    }
    let residual_rms = (ss / nf).sqrt();
    if !residual_rms.is_finite() {
        return Err(Error::Analysis("non-finite residual".into()));
    }
    Ok(DecayFit {
        x_lo,
        x_hi,
        slope,
        intercept,
        residual_rms,
        sample_count: n,
    })
}

/// Value of `int_{x0}^{x} |sin 2theta(y)|/(1+y) dy` together with an
/// estimate of the interpolation error at the window ends.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSinIntegral {
    pub value: f64,
    pub quadrature_error: f64,
}

/// The weighted oscillation integral `int_{x0}^{x} |sin 2theta|/(1+y) dy`;
/// grows like (2/pi) ln x for Coulomb-decay potentials. Evaluated from the integrator's own quadrature
/// accumulator, interpolated at the window ends.
pub fn weighted_sin_integral(trajectory: &Trajectory, x0: f64, x: f64) -> Result<WeightedSinIntegral> {
    if !(x0 >= 1.0) {
        return Err(Error::Analysis(format!("x0 must be >= 1, got {x0}")));
    }
    if !(x > x0) {
        return Err(Error::Analysis(format!("empty window [{x0}, {x}]")));
    }
    let (_, w_lo) = trajectory.cumulative_at(x0)?;
    let (_, w_hi) = trajectory.cumulative_at(x)?;
    // the integrand is bounded by 1/(1+y); the linear interpolation error
    // at each bracket is below the bracket width times that bound
    let bracket = |xq: f64| -> f64 {
        let i = trajectory.samples.partition_point(|s| s.x <= xq);
        let lo = trajectory.samples[i.saturating_sub(1)].x;
        let hi = trajectory.samples.get(i).map(|s| s.x).unwrap_or(lo);
        (hi - lo).max(0.0) / (1.0 + lo)
    };
    Ok(WeightedSinIntegral {
        value: w_hi - w_lo,
        quadrature_error: bracket(x0) + bracket(x),
    })
}

/// `int_{x_i}^{x_{i+1}} |sin 2theta| dy` between consecutive recorded
/// crossings; returns the value and its deviation from 1/k.
pub fn per_period_integral(trajectory: &Trajectory, i: usize) -> Result<(f64, f64)> {
    let crossings = detect_crossings(trajectory)?;
    let a = crossings
        .iter()
        .find(|c| c.index == i)
        .ok_or_else(|| Error::Analysis(format!("crossing {i} not recorded")))?;
    let b = crossings
        .iter()
        .find(|c| c.index == i + 1)
        .ok_or_else(|| Error::Analysis(format!("crossing {} not recorded", i + 1)))?;
    let value = b.abs_sin_cum - a.abs_sin_cum;
    Ok((value, value - 1.0 / trajectory.cfg.k))
}

/// Sharp upper bound on embedded eigenvalues for envelope parameter `a`:
/// 4a^2/pi^2.
pub fn max_eigenvalue_bound(a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::Analysis(format!("envelope amplitude must be >= 0, got {a}")));
    }
    Ok(4.0 * a * a / (PI * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    EmbeddedEigenvalue,
    NotEigenvalue,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::EmbeddedEigenvalue => "embedded_eigenvalue",
            Verdict::NotEigenvalue => "not_eigenvalue",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Structured outcome of the L2 test: the fitted decay exponent against
/// the 1/2 dichotomy, with the threshold arithmetic alongside.
#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueVerdict {
    pub a: f64,
    pub k: f64,
    pub lambda: f64,
    pub threshold: f64,
    pub predicted_exponent: f64,
    pub fitted_exponent: f64,
    pub fit_window: (f64, f64),
    pub fit_residual: f64,
    /// Tail integral of R^2 over the fit window; corroborating evidence
    /// only, the verdict rule is the exponent rule.
    pub tail_l2: f64,
    pub verdict: Verdict,
    /// |fitted exponent - 1/2|.
    pub margin: f64,
    /// Margin below which the finite-x fit cannot decide.
    pub margin_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Apply the exponent-versus-1/2 rule on the default fit window
/// `[10^3, x_end]`.
///
/// Never claims an embedded eigenvalue when `lambda > 4a^2/pi^2`; in that
/// conflict the verdict is inconclusive with a diagnostic.
pub fn verdict(trajectory: &Trajectory, a: f64, k: f64) -> Result<EigenvalueVerdict> {
    if trajectory.is_truncated() {
        let x = trajectory.x_end();
        return Err(Error::TruncatedTrajectory {
            x,
            reason: "cannot issue a verdict on a truncated trajectory".into(),
        });
    }
    let x_end = trajectory.x_end();
    let x_lo = 1e3;
    if !(x_end / x_lo >= 100.0) {
        return Err(Error::Analysis(format!(
            "trajectory too short for a 2-decade fit window: x_end = {x_end}"
        )));
    }
    let fit = fit_decay(trajectory, x_lo, x_end)?;
    let p = fit.exponent();
    let threshold = max_eigenvalue_bound(a)?;
    let lambda = k * k;

    // trapezoid of e^{2 logR} over the window samples
    let mut tail_l2 = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for s in trajectory.samples.iter().filter(|s| s.x >= x_lo) {
        let r2 = (2.0 * s.log_r).exp();
        if let Some((px, pr2)) = prev {
            tail_l2 += 0.5 * (r2 + pr2) * (s.x - px);
        }
        prev = Some((s.x, r2));
    }

    let ln_span = (fit.x_hi / fit.x_lo).ln();
    let margin_floor = (3.0 * fit.residual_rms / ln_span).max(0.02);
    let margin = (p - 0.5).abs();

    let mut diagnostic = None;
    let verdict = if margin <= margin_floor {
        Verdict::Inconclusive
    } else if p > 0.5 {
        if lambda > threshold {
            diagnostic = Some(format!(
                "fitted exponent {p:.4} suggests L2 decay but lambda = {lambda:.6} exceeds the threshold {threshold:.6}"
            ));
            Verdict::Inconclusive
        } else {
            Verdict::EmbeddedEigenvalue
        }
    } else {
        Verdict::NotEigenvalue
    };

    Ok(EigenvalueVerdict {
        a,
        k,
        lambda,
        threshold,
        predicted_exponent: a / (k * PI),
        fitted_exponent: p,
        fit_window: (fit.x_lo, fit.x_hi),
        fit_residual: fit.residual_rms,
        tail_l2,
        verdict,
        margin,
        margin_floor,
        diagnostic,
    })
}

/// Boundedness report for `g(x) = logR(x) + (a/(k pi)) ln x`, the
/// numerical content of the two-sided `+ O(1)` envelope estimates.
#[derive(Debug, Clone, Serialize)]
pub struct OscillationReport {
    pub x_lo: f64,
    pub x_hi: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub spread: f64,
    /// max - min of g within each decade of the window.
    pub per_decade_spread: Vec<f64>,
    /// True when the later decades do not spread more than the earlier
    /// ones (no trend).
    pub bounded: bool,
}

/// Measure the oscillation of `logR + (a/(k pi)) ln x` over `[x_lo, x_end]`.
pub fn lower_envelope_check(trajectory: &Trajectory, a: f64, k: f64, x_lo: f64) -> Result<OscillationReport> {
    if trajectory.is_truncated() {
        return Err(Error::TruncatedTrajectory {
            x: trajectory.x_end(),
            reason: "cannot analyze a truncated trajectory".into(),
        });
    }
    let x_hi = trajectory.x_end();
    if !(x_lo >= 1.0 && x_hi / x_lo >= 1e3) {
        return Err(Error::Analysis(format!(
            "envelope check needs at least 3 decades, got [{x_lo}, {x_hi}]"
        )));
    }
    let coeff = a / (k * PI);
    let decades = (x_hi / x_lo).log10().ceil() as usize;
    let mut per: Vec<(f64, f64)> = vec![(f64::INFINITY, f64::NEG_INFINITY); decades];
    let mut g_min = f64::INFINITY;
    let mut g_max = f64::NEG_INFINITY;
    for s in trajectory.samples.iter().filter(|s| s.x >= x_lo) {
        let g = s.log_r + coeff * s.x.ln();
        g_min = g_min.min(g);
        g_max = g_max.max(g);
        let d = (((s.x / x_lo).log10().floor()) as usize).min(decades - 1);
        per[d].0 = per[d].0.min(g);
        per[d].1 = per[d].1.max(g);
    }
    let per_decade_spread: Vec<f64> = per
        .iter()
        .map(|(lo, hi)| if hi >= lo { hi - lo } else { 0.0 })
        .collect();
    let first = per_decade_spread
        .iter()
        .take(decades / 2)
        .cloned()
        .fold(0.0f64, f64::max);
    let last = per_decade_spread
        .iter()
        .skip(decades / 2)
        .cloned()
        .fold(0.0f64, f64::max);
    Ok(OscillationReport {
        x_lo,
        x_hi,
        g_min,
        g_max,
        spread: g_max - g_min,
        per_decade_spread,
        bounded: last <= first + 0.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;
    use crate::pruefer::{integrate, IntegratorConfig, Sample, Termination, Trajectory};
    use approx::assert_relative_eq;

    fn synthetic_trajectory(f: impl Fn(f64) -> f64) -> Trajectory {
        let cfg = IntegratorConfig::new(1.0, 1e4);
        let mut samples = Vec::new();
        let n = 400;
        for j in 0..=n {
            let x = (1e4f64.ln() * j as f64 / n as f64).exp();
            samples.push(Sample {
                x,
                theta: 0.0,
                log_r: f(x),
                v: 0.0,
                abs_sin_cum: 0.0,
                weighted_sin_cum: 0.0,
            });
        }
        Trajectory {
            spec: PotentialSpec::Zero,
            cfg,
            samples,
            crossings: Vec::new(),
            events: Vec::new(),
            slides: Vec::new(),
            initial_sign: 1.0,
            termination: Termination::Completed,
            monotone_violation: None,
        }
    }

    #[test]
    fn exact_linear_data_recovers_slope() {
        let traj = synthetic_trajectory(|x| -0.5 * x.ln() + 3.0);
        let fit = fit_decay(&traj, 1.0, 1e4).unwrap();
        assert_relative_eq!(fit.exponent(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 3.0, epsilon = 1e-12);
        assert!(fit.residual_rms < 1e-12);
    }

    #[test]
    fn zero_potential_fit_is_flat() {
        let cfg = IntegratorConfig::new(1.0, 1e3);
        let traj = integrate(&PotentialSpec::Zero, &cfg).unwrap();
        let fit = fit_decay(&traj, 1.0, 1e3).unwrap();
        assert!(fit.exponent().abs() < 1e-9);
    }

    #[test]
    fn window_checks() {
        let traj = synthetic_trajectory(|_| 0.0);
        assert!(fit_decay(&traj, 0.5, 100.0).is_err()); // x_lo < 1
        assert!(fit_decay(&traj, 10.0, 50.0).is_err()); // < 1 decade
        assert!(fit_decay(&traj, 9000.0, 1e9).is_err()); // too few samples
    }

    #[test]
    fn threshold_formula() {
        assert_eq!(max_eigenvalue_bound(0.0).unwrap(), 0.0);
        assert_relative_eq!(max_eigenvalue_bound(PI / 2.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            max_eigenvalue_bound(1.0).unwrap(),
            0.4052847345693511,
            epsilon = 1e-12
        );
        assert!(max_eigenvalue_bound(-1.0).is_err());
        // quadratic scaling, exact
        let b1 = max_eigenvalue_bound(0.7).unwrap();
        let b2 = max_eigenvalue_bound(1.4).unwrap();
        assert_eq!(b2, 4.0 * b1);
    }

    #[test]
    fn weighted_integral_of_free_trajectory() {
        let cfg = IntegratorConfig {
            theta0: 0.3,
            ..IntegratorConfig::new(1.0, 2e3)
        };
        let traj = integrate(&PotentialSpec::Zero, &cfg).unwrap();
        let w = weighted_sin_integral(&traj, 1.0, 2e3).unwrap();
        // converges to (2/pi) ln((1+x)/(1+x0)) + O(1) fluctuation
        let expect = (2.0 / PI) * (2001f64 / 2.0).ln();
        assert!((w.value - expect).abs() < 0.1, "value {} expect {}", w.value, expect);
    }

    #[test]
    fn zero_angle_trajectory_has_zero_integral() {
        // theta identically 0 means sin 2theta = 0 and the accumulator
        // stays 0
        let traj = synthetic_trajectory(|_| 0.0);
        let w = weighted_sin_integral(&traj, 1.0, 1e3).unwrap();
        assert_eq!(w.value, 0.0);
    }

    #[test]
    fn per_period_integral_free_case() {
        for k in [1.0, 2.0] {
            let cfg = IntegratorConfig {
                theta0: 0.0,
                ..IntegratorConfig::new(k, 40.0)
            };
            let traj = integrate(&PotentialSpec::Zero, &cfg).unwrap();
            let (v, dev) = per_period_integral(&traj, 3).unwrap();
            assert_relative_eq!(v, 1.0 / k, epsilon = 1e-8);
            assert!(dev.abs() < 1e-8);
        }
    }

    #[test]
    fn missing_crossing_is_error() {
        let traj = synthetic_trajectory(|_| 0.0);
        assert!(per_period_integral(&traj, 1).is_err());
    }

    #[test]
    fn zero_potential_verdict_not_eigenvalue() {
        let cfg = IntegratorConfig::new(0.8, 2e5);
        let traj = integrate(&PotentialSpec::Zero, &cfg).unwrap();
        let v = verdict(&traj, 0.0, 0.8).unwrap();
        assert_eq!(v.verdict, Verdict::NotEigenvalue);
        assert!(v.fitted_exponent.abs() < 1e-6);
        assert_eq!(v.threshold, 0.0);
    }

    #[test]
    fn envelope_check_zero_potential() {
        let cfg = IntegratorConfig::new(1.0, 2e5);
        let traj = integrate(&PotentialSpec::Zero, &cfg).unwrap();
        let rep = lower_envelope_check(&traj, 0.0, 1.0, 100.0).unwrap();
        assert!(rep.spread < 1e-9);
        assert!(rep.bounded);
    }
}
