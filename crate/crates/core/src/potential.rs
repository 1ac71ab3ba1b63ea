//! Potential families with Coulomb-type (1/x) decay and the envelope
//! parameter `a = limsup |x V(x)|` that controls the largest possible
//! embedded eigenvalue.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::io::format_g17;

/// Sign function with the fixed convention `sgn(0) = +1`.
///
/// The switch set of the feedback potential has measure zero, but a
/// deterministic convention is required for reproducible tables.
pub fn sgn(y: f64) -> f64 {
    if y >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Interpolation rule for tabulated potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    /// Piecewise constant on `[x_i, x_{i+1})`. Default; preserves the
    /// sign-step character of synthesized feedback potentials.
    Step,
    /// Piecewise linear between grid nodes.
    Linear,
}

impl Interp {
    pub fn as_str(&self) -> &'static str {
        match self {
            Interp::Step => "step",
            Interp::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Interp> {
        match s {
            "step" => Ok(Interp::Step),
            "linear" => Ok(Interp::Linear),
            other => Err(Error::InvalidPotential(format!(
                "unknown interpolation rule `{other}`"
            ))),
        }
    }
}

/// A tabulated potential on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub interp: Interp,
    /// Key=value metadata carried in the `#` header of the CSV format.
    pub metadata: BTreeMap<String, String>,
}

impl Table {
    pub fn new(x: Vec<f64>, v: Vec<f64>, interp: Interp) -> Result<Table> {
        let t = Table {
            x,
            v,
            interp,
            metadata: BTreeMap::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.v.len() {
            return Err(Error::InvalidPotential(format!(
                "grid/value length mismatch: {} vs {}",
                self.x.len(),
                self.v.len()
            )));
        }
        if self.x.len() < 2 {
            return Err(Error::InvalidPotential(
                "tabulated potential needs at least two grid points".into(),
            ));
        }
        for w in self.x.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidPotential(format!(
                    "grid not strictly increasing at x = {}",
                    w[0]
                )));
            }
        }
        if self.x.iter().chain(self.v.iter()).any(|y| !y.is_finite()) {
            return Err(Error::InvalidPotential(
                "non-finite entry in tabulated potential".into(),
            ));
        }
        Ok(())
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// Evaluate at `x` according to the interpolation rule. Out-of-range
    /// evaluation is an error, never a silent clamp.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if x < self.x_min() || x > self.x_max() {
            return Err(Error::OutsideTable {
                x,
                lo: self.x_min(),
                hi: self.x_max(),
            });
        }
        // index of the last node <= x
        let i = match self.x.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i,
            Err(ins) => ins - 1,
        };
        match self.interp {
            Interp::Step => {
                if i + 1 == self.x.len() {
                    Ok(self.v[i])
                } else {
                    Ok(self.v[i])
                }
            }
            Interp::Linear => {
                if i + 1 == self.x.len() {
                    Ok(self.v[i])
                } else {
                    let t = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
                    Ok(self.v[i] + t * (self.v[i + 1] - self.v[i]))
                }
            }
        }
    }

    /// The first grid node strictly greater than `x`, if any. Integrators
    /// break steps here so that each step sees a smooth potential.
    pub fn next_node_after(&self, x: f64) -> Option<f64> {
        let i = self.x.partition_point(|&p| p <= x);
        self.x.get(i).copied()
    }
}

/// Closed description of a potential family on the half line `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    /// V = 0.
    Zero,
    /// `V(x) = sign * amplitude / (1 + x)`.
    CoulombSign { amplitude: f64, sign: i8 },
    /// `V(x) = -amplitude * sin(2 * wavenumber * x + phase) / (1 + x)`.
    WignerVonNeumann {
        amplitude: f64,
        wavenumber: f64,
        phase: f64,
    },
    /// `V(x) = -(amplitude/(1+x)) * sgn(sin 2 theta(x))`, defined through
    /// the Pruefer angle of the trajectory it drives.
    FeedbackSign { amplitude: f64 },
    /// Imported or exported table.
    Tabulated(Table),
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Zero => Ok(()),
            PotentialSpec::CoulombSign { amplitude, sign } => {
                if !amplitude.is_finite() {
                    return Err(Error::InvalidPotential("non-finite amplitude".into()));
                }
                if *sign != 1 && *sign != -1 {
                    return Err(Error::InvalidPotential(format!(
                        "sign must be +1 or -1, got {sign}"
                    )));
                }
                Ok(())
            }
            PotentialSpec::WignerVonNeumann {
                amplitude,
                wavenumber,
                phase,
            } => {
                if !(amplitude.is_finite() && wavenumber.is_finite() && phase.is_finite()) {
                    return Err(Error::InvalidPotential(
                        "non-finite Wigner-von Neumann parameter".into(),
                    ));
                }
                Ok(())
            }
            PotentialSpec::FeedbackSign { amplitude } => {
                if !(amplitude.is_finite() && *amplitude > 0.0) {
                    return Err(Error::InvalidPotential(format!(
                        "feedback amplitude must be finite and positive, got {amplitude}"
                    )));
                }
                Ok(())
            }
            PotentialSpec::Tabulated(t) => t.validate(),
        }
    }

    pub fn is_feedback(&self) -> bool {
        matches!(self, PotentialSpec::FeedbackSign { .. })
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            PotentialSpec::Zero => "zero",
            PotentialSpec::CoulombSign { .. } => "coulomb_sign",
            PotentialSpec::WignerVonNeumann { .. } => "wigner_von_neumann",
            PotentialSpec::FeedbackSign { .. } => "feedback_sign",
            PotentialSpec::Tabulated(_) => "tabulated",
        }
    }

    /// Evaluate `V(x)`. The Pruefer angle must be supplied iff the variant
    /// is `FeedbackSign`.
    pub fn evaluate(&self, x: f64, theta: Option<f64>) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::InvalidPotential(format!("x must be >= 0, got {x}")));
        }
        match self {
            PotentialSpec::FeedbackSign { amplitude } => {
                let theta = theta.ok_or(Error::MissingAngle)?;
                Ok(-(amplitude / (1.0 + x)) * sgn((2.0 * theta).sin()))
            }
            _ if theta.is_some() => Err(Error::UnexpectedAngle),
            PotentialSpec::Zero => Ok(0.0),
            PotentialSpec::CoulombSign { amplitude, sign } => {
                Ok(f64::from(*sign) * amplitude / (1.0 + x))
            }
            PotentialSpec::WignerVonNeumann {
                amplitude,
                wavenumber,
                phase,
            } => Ok(-amplitude * (2.0 * wavenumber * x + phase).sin() / (1.0 + x)),
            PotentialSpec::Tabulated(t) => t.eval(x),
        }
    }

    /// Upper end of the domain on which the potential can be evaluated.
    pub fn domain_end(&self) -> Option<f64> {
        match self {
            PotentialSpec::Tabulated(t) => Some(t.x_max()),
            _ => None,
        }
    }

    pub fn as_table(&self) -> Option<&Table> {
        match self {
            PotentialSpec::Tabulated(t) => Some(t),
            _ => None,
        }
    }
}

/// Windowed estimate of `limsup (1+x)|V(x)|` over a tail `[T, x_max]`.
#[derive(Debug, Clone)]
pub struct EnvelopeEstimate {
    pub tail_start: f64,
    pub x_max: f64,
    /// Per-window suprema of `(1+x)|V(x)|`; windows partition the tail
    /// log-uniformly.
    pub window_sups: Vec<f64>,
    /// Max of the last half of the window suprema; approximates the limit
    /// superior rather than the supremum.
    pub estimate: f64,
    pub monotone_decreasing: bool,
}

/// Estimate the decay envelope parameter `a = limsup (1+x)|V(x)|`.
///
/// `x_max` is required for analytic variants; for tabulated potentials it
/// defaults to the end of the grid. Tabulated potentials are sampled at
/// their own grid nodes, analytic ones log-uniformly (128 points per
/// window). `FeedbackSign` cannot be evaluated without a trajectory;
/// estimate it on an exported table instead.
pub fn estimate_envelope(
    spec: &PotentialSpec,
    tail_start: f64,
    x_max: Option<f64>,
    window_count: usize,
) -> Result<EnvelopeEstimate> {
    spec.validate()?;
    if spec.is_feedback() {
        return Err(Error::MissingAngle);
    }
    if !(tail_start > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tail start must be positive, got {tail_start}"
        )));
    }
    if window_count < 2 {
        return Err(Error::InvalidConfig(
            "window count must be at least 2".into(),
        ));
    }
    let x_max = match (x_max, spec.domain_end()) {
        (Some(m), _) => m,
        (None, Some(end)) => end,
        (None, None) => {
            return Err(Error::InvalidConfig(
                "x_max required for analytic potentials".into(),
            ))
        }
    };
    if !(x_max > tail_start) {
        return Err(Error::Analysis(format!(
            "empty tail: x_max = {x_max} <= tail start {tail_start}"
        )));
    }
    if let Some(t) = spec.as_table() {
        if t.x_min() > tail_start {
            return Err(Error::Analysis(format!(
                "tabulated data starts at {} > tail start {tail_start}",
                t.x_min()
            )));
        }
    }

    let log_lo = tail_start.ln();
    let log_hi = x_max.ln();
    let mut window_sups = vec![0.0f64; window_count];
    let window_of = |x: f64| -> usize {
        let w = ((x.ln() - log_lo) / (log_hi - log_lo) * window_count as f64).floor() as isize;
        w.clamp(0, window_count as isize - 1) as usize
    };

    let mut record = |x: f64, v: f64| -> Result<()> {
        if !v.is_finite() {
            return Err(Error::Analysis(format!("non-finite V at x = {x}")));
        }
        let e = (1.0 + x) * v.abs();
        let w = window_of(x);
        if e > window_sups[w] {
            window_sups[w] = e;
        }
        Ok(())
    };

    if let Some(t) = spec.as_table() {
        for (&x, &v) in t.x.iter().zip(&t.v) {
            if x >= tail_start && x <= x_max {
                record(x, v)?;
            }
        }
    } else {
        const PER_WINDOW: usize = 128;
        let n = window_count * PER_WINDOW;
        for j in 0..=n {
            let x = (log_lo + (log_hi - log_lo) * j as f64 / n as f64).exp();
            let x = x.min(x_max);
            record(x, spec.evaluate(x, None)?)?;
        }
    }

    let half_start = window_count / 2;
    let estimate = window_sups[half_start..]
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let monotone_decreasing = window_sups.windows(2).all(|w| w[1] <= w[0]);
    Ok(EnvelopeEstimate {
        tail_start,
        x_max,
        window_sups,
        estimate,
        monotone_decreasing,
    })
}

/// Sample a non-feedback potential on an explicit grid.
pub fn tabulate(spec: &PotentialSpec, grid: &[f64]) -> Result<Table> {
    if spec.is_feedback() {
        return Err(Error::MissingAngle);
    }
    let v = grid
        .iter()
        .map(|&x| spec.evaluate(x, None))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(grid.to_vec(), v, Interp::Step)?;
    t.metadata = format_metadata(spec);
    Ok(t)
}

/// Metadata keys identifying a potential, as written to CSV headers.
pub fn format_metadata(spec: &PotentialSpec) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    match spec {
        PotentialSpec::Zero => {}
        PotentialSpec::CoulombSign { amplitude, sign } => {
            m.insert("a".into(), format_g17(*amplitude));
            m.insert("s".into(), sign.to_string());
        }
        PotentialSpec::WignerVonNeumann {
            amplitude,
            wavenumber,
            phase,
        } => {
            m.insert("c".into(), format_g17(*amplitude));
            m.insert("kappa".into(), format_g17(*wavenumber));
            m.insert("phi".into(), format_g17(*phase));
        }
        PotentialSpec::FeedbackSign { amplitude } => {
            m.insert("a".into(), format_g17(*amplitude));
        }
        PotentialSpec::Tabulated(t) => {
            m = t.metadata.clone();
            if let Some(orig) = m.remove("variant") {
                m.insert("source_variant".into(), orig);
            }
        }
    }
    m.insert("variant".into(), spec.variant_name().into());
    m
}

pub const GENERATOR_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Write the tabulated-potential CSV format: `#` metadata lines, a
/// `x,V` header row, then rows at 17 significant digits.
pub fn export_table<W: Write>(w: &mut W, table: &Table) -> Result<()> {
    table.validate()?;
    for (key, val) in &table.metadata {
        // reserved keys are re-emitted below so that
        // export(import(file)) reproduces the file
        if key == "interp" || key == "generator_version" {
            continue;
        }
        writeln!(w, "# {key}={val}")?;
    }
    writeln!(w, "# interp={}", table.interp.as_str())?;
    writeln!(w, "# generator_version={GENERATOR_VERSION}")?;
    writeln!(w, "x,V")?;
    for (x, v) in table.x.iter().zip(&table.v) {
        writeln!(w, "{},{}", format_g17(*x), format_g17(*v))?;
    }
    Ok(())
}

/// Read the tabulated-potential CSV format written by [`export_table`].
pub fn import_table<R: BufRead>(r: R) -> Result<Table> {
    let mut metadata = BTreeMap::new();
    let mut interp = Interp::Step;
    let mut x = Vec::new();
    let mut v = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            line: lineno + 1,
            msg,
        };
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some((key, val)) = rest.split_once('=') {
                if key == "interp" {
                    interp = Interp::parse(val)?;
                } else {
                    metadata.insert(key.to_string(), val.to_string());
                }
            }
            continue;
        }
        if !saw_header {
            if line != "x,V" {
                return Err(err(format!("expected header `x,V`, got `{line}`")));
            }
            saw_header = true;
            continue;
        }
        let (xs, vs) = line
            .split_once(',')
            .ok_or_else(|| err(format!("expected `x,V` row, got `{line}`")))?;
        x.push(
            xs.trim()
                .parse::<f64>()
                .map_err(|e| err(format!("bad x value: {e}")))?,
        );
        v.push(
            vs.trim()
                .parse::<f64>()
                .map_err(|e| err(format!("bad V value: {e}")))?,
        );
    }
    let mut t = Table::new(x, v, interp)?;
    t.metadata = metadata;
    Ok(t)
}
