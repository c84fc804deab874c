//! File formats: CSV tables and JSON summaries.
//!
//! Floating-point columns carry 12 significant digits in scientific
//! notation, lines end in LF, and identical inputs produce byte-identical
//! files, so reruns can be compared with a plain diff.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::circuit::JointDistribution;
use crate::engine::{AnalysisSummary, PartitionSummary, RunRecord};
use crate::error::{Error, Result};
use crate::fit::FringeFit;
use crate::spectrum::{DetectorLabel, SpectrumCurve};

/// 12 significant digits, scientific notation; negative zero collapses to
/// zero so equal values always print equally.
pub fn fmt12(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub const SPECTRUM_HEADER: &str = "frequency_Hz_over_2pi,value";
pub const FRINGE_HEADER: &str = "theta_rad,p1d,p1u,p2d,p2u";
pub const RECORD_HEADER: &str = "trial_id,choice_bit,theta_rad,detector,atom_outcome,seed";

/// Spectrum CSV: ordinary frequency (Hz) against the curve value.
pub fn write_spectrum_csv(path: &Path, curve: &SpectrumCurve) -> Result<()> {
    let mut text = String::from(SPECTRUM_HEADER);
    text.push('\n');
    for (omega, v) in curve.frequencies().iter().zip(curve.values()) {
        let hz = omega / (2.0 * std::f64::consts::PI);
        let _ = writeln!(text, "{},{}", fmt12(hz), fmt12(*v));
    }
    write_text(path, &text)
}

/// Fringe CSV: phase against the joint outcome law over the four basis
/// outcomes (atom level 1 or 2) × (detector down or up).
pub fn write_fringe_csv(path: &Path, rows: &[(f64, JointDistribution)]) -> Result<()> {
    let mut text = String::from(FRINGE_HEADER);
    text.push('\n');
    for (theta, dist) in rows {
        let p = dist.probabilities();
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            fmt12(*theta),
            fmt12(p[0]),
            fmt12(p[1]),
            fmt12(p[2]),
            fmt12(p[3])
        );
    }
    write_text(path, &text)
}

fn detector_str(d: Option<DetectorLabel>) -> &'static str {
    match d {
        None => "none",
        Some(DetectorLabel::Down) => "down",
        Some(DetectorLabel::Up) => "up",
    }
}

/// Record CSV, one row per trial. Identifiers and seeds are exact decimal
/// integers; the phase carries 12 significant digits.
pub fn write_records_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut text = String::from(RECORD_HEADER);
    text.push('\n');
    for r in records {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            r.trial_id,
            r.choice_bit,
            fmt12(r.ramsey_phase),
            detector_str(r.detector),
            r.atom_outcome,
            r.seed
        );
    }
    write_text(path, &text)
}

/// Read a record CSV written by [`write_records_csv`].
pub fn read_records_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(name.clone(), e))?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, reason: String| Error::CsvParse {
        path: name.clone(),
        line,
        reason,
    };
    match lines.next() {
        Some((_, h)) if h.trim() == RECORD_HEADER => {}
        other => {
            return Err(parse_err(
                1,
                format!(
                    "expected header {RECORD_HEADER:?}, got {:?}",
                    other.map(|(_, h)| h).unwrap_or("")
                ),
            ))
        }
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(
                line_no,
                format!("expected 6 fields, got {}", fields.len()),
            ));
        }
        let trial_id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad trial_id {:?}", fields[0])))?;
        let choice_bit: u8 = fields[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad choice_bit {:?}", fields[1])))?;
        let ramsey_phase: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad theta_rad {:?}", fields[2])))?;
        let detector = match fields[3] {
            "none" => None,
            "down" => Some(DetectorLabel::Down),
            "up" => Some(DetectorLabel::Up),
            other => return Err(parse_err(line_no, format!("bad detector {other:?}"))),
        };
        let atom_outcome: u8 = fields[4]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad atom_outcome {:?}", fields[4])))?;
        let seed: u64 = fields[5]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad seed {:?}", fields[5])))?;
        records.push(RunRecord {
            trial_id,
            choice_bit,
            ramsey_phase,
            detector,
            atom_outcome,
            seed,
        });
    }
    Ok(records)
}

fn fit_to_json(fit: &FringeFit) -> Value {
    json!({
        "mean_level": fit.mean_level,
        "visibility": fit.visibility,
        "visibility_stderr": fit.visibility_stderr,
        "phase_offset_rad": fit.phase_offset,
        "rms_residual": fit.rms_residual,
    })
}

fn partition_to_json(p: &PartitionSummary) -> Value {
    json!({
        "trials": p.trials,
        "fit": fit_to_json(&p.fit),
    })
}

/// Analysis summary as a JSON object; map keys are sorted, so the encoding
/// is deterministic.
pub fn analysis_to_json(summary: &AnalysisSummary) -> Value {
    json!({
        "total_trials": summary.total_trials,
        "partitions": {
            "choice_0": partition_to_json(&summary.choice0),
            "choice_1": partition_to_json(&summary.choice1),
            "choice_1_detector_down": partition_to_json(&summary.choice1_down),
            "choice_1_detector_up": partition_to_json(&summary.choice1_up),
        },
        "joint_counts": {
            "down": {"level_1": summary.joint_counts[0][0], "level_2": summary.joint_counts[0][1]},
            "up":   {"level_1": summary.joint_counts[1][0], "level_2": summary.joint_counts[1][1]},
        },
    })
}

/// Joint law of the gate model at one phase, probe off and on.
pub fn circuit_to_json(theta: f64, off: &JointDistribution, on: &JointDistribution) -> Value {
    let law = |d: &JointDistribution| {
        let p = d.probabilities();
        let (a1, a2) = d.atom_marginal();
        json!({
            "p1d": p[0], "p1u": p[1], "p2d": p[2], "p2u": p[3],
            "atom_marginal": {"level_1": a1, "level_2": a2},
        })
    };
    let mut on_law = law(on);
    // conditionals exist only where both detector rows carry weight
    if let (Ok(down), Ok(up)) = (on.atom_given_detector(false), on.atom_given_detector(true)) {
        on_law["atom_given_down"] = json!({"level_1": down.0, "level_2": down.1});
        on_law["atom_given_up"] = json!({"level_1": up.0, "level_2": up.1});
    }
    json!({
        "theta_rad": theta,
        "probe_off": law(off),
        "probe_on": on_law,
    })
}

/// Write a JSON value with a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::run_circuit;

    #[test]
    fn fmt12_is_twelve_significant_digits() {
        assert_eq!(fmt12(0.0), "0.00000000000e0");
        assert_eq!(fmt12(-0.0), "0.00000000000e0");
        assert_eq!(fmt12(1.0), "1.00000000000e0");
        assert_eq!(fmt12(123456.789), "1.23456789000e5");
        assert_eq!(fmt12(-2.5e-8), "-2.50000000000e-8");
        // 12 digits survive a parse round trip at this magnitude
        let x = std::f64::consts::PI;
        let back: f64 = fmt12(x).parse().unwrap();
        assert!((back - x).abs() < 1e-11);
    }

    #[test]
    fn record_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let records = vec![
            RunRecord {
                trial_id: 0,
                choice_bit: 0,
                ramsey_phase: 0.0,
                detector: None,
                atom_outcome: 1,
                seed: 42,
            },
            RunRecord {
                trial_id: 1,
                choice_bit: 1,
                ramsey_phase: 1.5,
                detector: Some(DetectorLabel::Down),
                atom_outcome: 2,
                seed: u64::MAX,
            },
            RunRecord {
                trial_id: 2,
                choice_bit: 1,
                ramsey_phase: 1.5,
                detector: Some(DetectorLabel::Up),
                atom_outcome: 1,
                seed: 7,
            },
        ];
        write_records_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(RECORD_HEADER));
        assert!(!text.contains('\r'));
        let back = read_records_csv(&path).unwrap();
        assert_eq!(back, records);
        // writing again is byte-identical
        let again = dir.path().join("again.csv");
        write_records_csv(&again, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }

    #[test]
    fn malformed_record_csv_is_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(read_records_csv(&path).is_err());
        std::fs::write(&path, format!("{RECORD_HEADER}\n0,0,0.0,none,1\n")).unwrap();
        let err = read_records_csv(&path).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
        std::fs::write(&path, format!("{RECORD_HEADER}\n0,0,0.0,sideways,1,9\n")).unwrap();
        let err = read_records_csv(&path).unwrap_err();
        assert!(err.to_string().contains("sideways"), "{err}");
    }

    #[test]
    fn fringe_csv_has_the_documented_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fringes.csv");
        let rows: Vec<(f64, JointDistribution)> = (0..4)
            .map(|k| {
                let th = k as f64;
                (th, run_circuit(th, false))
            })
            .collect();
        write_fringe_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(FRINGE_HEADER));
        assert_eq!(lines.count(), 4);
        // probe off leaves the detector down: the up columns are zero
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[2], "0.00000000000e0");
            assert_eq!(f[4], "0.00000000000e0");
        }
    }

    #[test]
    fn json_encoding_is_deterministic() {
        let off = run_circuit(0.3, false);
        let on = run_circuit(0.3, true);
        let a = circuit_to_json(0.3, &off, &on);
        let b = circuit_to_json(0.3, &off, &on);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a["probe_on"]["atom_given_down"]["level_1"]
            .as_f64()
            .is_some());
    }
}
