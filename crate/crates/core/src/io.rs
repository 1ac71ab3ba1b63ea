//! Text formats: trajectory CSV, event CSV, and the shared float
//! formatting used by every exporter.
//!
//! All files carry `# key=value` metadata lines before a column header
//! row. Floats are written with 17 significant digits so that a
//! write/read cycle is bit exact.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::potential::{format_metadata, GENERATOR_VERSION};
use crate::pruefer::Trajectory;

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn format_g17(v: f64) -> String {
    format!("{v:.16e}")
}

fn config_metadata(traj: &Trajectory) -> BTreeMap<String, String> {
    let mut m = format_metadata(&traj.spec);
    let cfg = &traj.cfg;
    m.insert("k".into(), format_g17(cfg.k));
    m.insert("theta0".into(), format_g17(cfg.theta0));
    m.insert("x_end".into(), format_g17(cfg.x_end));
    m.insert("rel_tol".into(), format_g17(cfg.rel_tol));
    m.insert("abs_tol".into(), format_g17(cfg.abs_tol));
    m.insert("initial_sign".into(), format_g17(traj.initial_sign));
    if let crate::pruefer::Termination::Truncated { x, reason } = &traj.termination {
        m.insert("truncated_at".into(), format_g17(*x));
        m.insert("truncated_reason".into(), reason.replace('\n', " "));
    }
    m
}

/// Write the trajectory sample grid: metadata, `x,theta,logR,V` header,
/// one row per output sample.
pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory) -> Result<()> {
    for (key, val) in config_metadata(traj) {
        if key == "generator_version" {
            continue;
        }
        writeln!(w, "# {key}={val}")?;
    }
    writeln!(w, "# generator_version={GENERATOR_VERSION}")?;
    writeln!(w, "x,theta,logR,V")?;
    for s in &traj.samples {
        writeln!(
            w,
            "{},{},{},{}",
            format_g17(s.x),
            format_g17(s.theta),
            format_g17(s.log_r),
            format_g17(s.v)
        )?;
    }
    Ok(())
}

/// Write the event log: crossings and localized switch points merged in
/// order of position, `kind,x` rows.
pub fn write_events_csv<W: Write>(w: &mut W, traj: &Trajectory) -> Result<()> {
    let mut rows: Vec<(f64, &str)> = traj
        .crossings
        .iter()
        .map(|c| (c.x, "crossing"))
        .chain(traj.events.iter().map(|e| (e.x, e.kind.as_str())))
        .collect();
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(b.1)));
    writeln!(w, "kind,x")?;
    for (x, kind) in rows {
        writeln!(w, "{kind},{}", format_g17(x))?;
    }
    Ok(())
}

/// A trajectory read back from CSV. Only the sample rows and metadata
/// survive the round trip; events live in the sibling file.
#[derive(Debug, Clone)]
pub struct ImportedTrajectory {
    pub metadata: BTreeMap<String, String>,
    /// Rows `(x, theta, logR, V)` in file order.
    pub rows: Vec<(f64, f64, f64, f64)>,
}

impl ImportedTrajectory {
    pub fn log_r_samples(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.0, r.2)).collect()
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        self.metadata
            .get(key)
            .ok_or_else(|| Error::Analysis(format!("metadata key `{key}` missing")))?
            .parse::<f64>()
            .map_err(|e| Error::Analysis(format!("metadata key `{key}`: {e}")))
    }
}

/// Read the format written by [`write_trajectory_csv`].
pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<ImportedTrajectory> {
    let mut metadata = BTreeMap::new();
    let mut rows = Vec::new();
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
            if let Some((key, val)) = rest.trim().split_once('=') {
                metadata.insert(key.to_string(), val.to_string());
            }
            continue;
        }
        if !saw_header {
            if line != "x,theta,logR,V" {
                return Err(err(format!("expected header `x,theta,logR,V`, got `{line}`")));
            }
            saw_header = true;
            continue;
        }
        let mut it = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            it.next()
                .ok_or_else(|| err(format!("missing column `{name}`")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| err(format!("bad `{name}` value: {e}")))
        };
        let row = (next("x")?, next("theta")?, next("logR")?, next("V")?);
        if it.next().is_some() {
            return Err(err("too many columns".into()));
        }
        rows.push(row);
    }
    if !saw_header {
        return Err(Error::Parse {
            line: 0,
            msg: "no header row found".into(),
        });
    }
    Ok(ImportedTrajectory { metadata, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;
    use crate::pruefer::{integrate, IntegratorConfig};

    #[test]
    fn g17_round_trips_exactly() {
        for &v in &[
            0.0,
            1.0,
            -1.0,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -1.1e-300,
            f64::MIN_POSITIVE,
        ] {
            let s = format_g17(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn trajectory_round_trip_is_bit_exact() {
        let mut cfg = IntegratorConfig::new(0.5, 50.0);
        cfg.samples = 40;
        let traj = integrate(&PotentialSpec::FeedbackSign { amplitude: 1.0 }, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows.len(), traj.samples.len());
        for (row, s) in back.rows.iter().zip(&traj.samples) {
            assert_eq!(row.0.to_bits(), s.x.to_bits());
            assert_eq!(row.1.to_bits(), s.theta.to_bits());
            assert_eq!(row.2.to_bits(), s.log_r.to_bits());
            assert_eq!(row.3.to_bits(), s.v.to_bits());
        }
        assert_eq!(back.meta_f64("k").unwrap(), 0.5);
        assert_eq!(
            back.metadata.get("variant").map(String::as_str),
            Some("feedback_sign")
        );
    }

    #[test]
    fn identical_runs_write_identical_bytes() {
        let cfg = IntegratorConfig::new(1.0, 30.0);
        let spec = PotentialSpec::CoulombSign {
            amplitude: 1.0,
            sign: -1,
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_trajectory_csv(&mut a, &integrate(&spec, &cfg).unwrap()).unwrap();
        write_trajectory_csv(&mut b, &integrate(&spec, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn events_file_lists_crossings_in_order() {
        let cfg = IntegratorConfig::new(1.0, 20.0);
        let traj = integrate(&PotentialSpec::Zero, &cfg).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("kind,x"));
        let mut last_x = -1.0;
        let mut n = 0;
        for line in lines {
            let (kind, xs) = line.split_once(',').unwrap();
            assert_eq!(kind, "crossing");
            let x: f64 = xs.parse().unwrap();
            assert!(x > last_x);
            last_x = x;
            n += 1;
        }
        assert_eq!(n, traj.crossings.len());
    }

    #[test]
    fn malformed_rows_are_rejected_with_line_numbers() {
        let text = "x,theta,logR,V\n1.0,2.0,nope,0.0\n";
        let e = read_trajectory_csv(text.as_bytes()).unwrap_err();
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
