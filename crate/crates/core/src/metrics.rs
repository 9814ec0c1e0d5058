//! Per-run handover metrics computed from trajectory logs, and aggregate tables.
//!
//! Lengths are reported in centimetres and angles in degrees. Distance metrics
//! take the largest value over the three point pairs (or points).

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gripper::Phase;
use crate::scenario::RunOutcome;
use crate::session::TrajectoryLog;

/// Orthonormal frame spanned by three points: `x` along `p2 − p1`, `z` normal
/// to the triangle.
pub fn frame_from_points(p1: &Vector3<f64>, p2: &Vector3<f64>, p3: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let a = p2 - p1;
    let b = p3 - p1;
    let normal = a.cross(&b);
    if !(0.5 * normal.norm() > 1e-9) {
        return Err(Error::CollinearPoints);
    }
    let x = a.normalize();
    let z = x.cross(&b).normalize();
    let y = z.cross(&x);
    Ok(Matrix3::from_columns(&[x, y, z]))
}

fn is_rotation(r: &Matrix3<f64>) -> bool {
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    ortho < 1e-6 && (r.determinant() - 1.0).abs() < 1e-6
}

/// Rotation angle of `R1ᵀR2`, in degrees.
pub fn relative_angle(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> Result<f64> {
    if !is_rotation(r1) || !is_rotation(r2) {
        return Err(Error::NotARotation);
    }
    let c = (((r1.transpose() * r2).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Thresholds of the geometric grasp test applied at finger closure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessCriteria {
    /// Maximum finger-point error (m).
    pub finger_tolerance: f64,
    /// Maximum frame angle error (deg).
    pub angle_tolerance_deg: f64,
}

impl Default for SuccessCriteria {
    fn default() -> Self {
        Self {
            finger_tolerance: 0.02,
            angle_tolerance_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub t_a: f64,
    pub success: bool,
    pub d_i: f64,
    pub l_r: f64,
    pub l_o: f64,
    pub e_d: f64,
    pub theta_i: f64,
    pub theta_r: f64,
    pub theta_o: f64,
    pub e_theta: f64,
    /// Largest finger-point error at the end of the run (cm).
    pub finger_error: f64,
}

impl RunMetrics {
    /// Metric values in table column order, without `SR`.
    pub fn values(&self) -> [f64; 9] {
        [
            self.t_a,
            self.d_i,
            self.l_r,
            self.l_o,
            self.e_d,
            self.theta_i,
            self.theta_r,
            self.theta_o,
            self.e_theta,
        ]
    }
}

/// Column names of every metrics table.
pub const METRIC_COLUMNS: [&str; 10] = [
    "t_a", "SR", "d_i", "L_r", "L_o", "e_d", "theta_i", "theta_r", "theta_o", "e_theta",
];

fn path_length(points: impl Iterator<Item = Vector3<f64>>) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<Vector3<f64>> = None;
    for p in points {
        if let Some(q) = prev {
            total += (p - q).norm();
        }
        prev = Some(p);
    }
    total
}

/// Polyline length of one logged point track (m).
pub fn track_length(log: &TrajectoryLog, gripper: bool, index: usize) -> f64 {
    path_length(log.records.iter().map(|r| {
        if gripper {
            r.gripper_points[index]
        } else {
            r.grasp_points[index]
        }
    }))
}

pub fn compute_metrics(log: &TrajectoryLog) -> Result<RunMetrics> {
    compute_metrics_with(log, &SuccessCriteria::default())
}

/// Metrics of one run. The log must start at robot start and end at finger
/// closure (or at the timeout). Target points are the object-fixed grasp points.
pub fn compute_metrics_with(log: &TrajectoryLog, criteria: &SuccessCriteria) -> Result<RunMetrics> {
    let n = log.records.len();
    if n < 2 {
        return Err(Error::LogTooShort(n));
    }
    let first = &log.records[0];
    let last = &log.records[n - 1];
    let max_pair = |g: &[Vector3<f64>; 3], t: &[Vector3<f64>; 3]| {
        (0..3).map(|i| (t[i] - g[i]).norm()).fold(0.0, f64::max)
    };
    let frame = |p: &[Vector3<f64>; 3]| frame_from_points(&p[0], &p[1], &p[2]);

    let g0 = frame(&first.gripper_points)?;
    let t0 = frame(&first.grasp_points)?;
    let g1 = frame(&last.gripper_points)?;
    let t1 = frame(&last.grasp_points)?;
    let e_theta = relative_angle(&g1, &t1)?;
    let finger_error = (0..2)
        .map(|i| (last.grasp_points[i] - last.gripper_points[i]).norm())
        .fold(0.0, f64::max);

    let success = last.phase == Phase::Done
        && finger_error < criteria.finger_tolerance
        && e_theta < criteria.angle_tolerance_deg;

    Ok(RunMetrics {
        t_a: last.t - first.t,
        success,
        d_i: 100.0 * max_pair(&first.gripper_points, &first.grasp_points),
        l_r: 100.0 * (0..3).map(|i| track_length(log, true, i)).fold(0.0, f64::max),
        l_o: 100.0 * (0..3).map(|i| track_length(log, false, i)).fold(0.0, f64::max),
        e_d: 100.0 * max_pair(&last.gripper_points, &last.grasp_points),
        theta_i: relative_angle(&g0, &t0)?,
        theta_r: relative_angle(&g0, &g1)?,
        theta_o: relative_angle(&t0, &t1)?,
        e_theta,
        finger_error: 100.0 * finger_error,
    })
}

/// Mean and sample standard deviation (n − 1; zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub condition: String,
    /// Attempts counted toward the success rate (system failures excluded).
    pub attempts: usize,
    pub successes: usize,
    pub system_failures: usize,
    /// Success rate in percent.
    pub sr: f64,
    /// `(mean, std)` per metric, over successful runs, in [`RunMetrics::values`] order.
    pub stats: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub rows: Vec<AggregateRow>,
}

/// Groups outcomes by `key` (sorted) and aggregates each group.
pub fn aggregate<F>(outcomes: &[RunOutcome], key: F) -> Result<AggregateTable>
where
    F: Fn(&RunOutcome) -> String,
{
    if outcomes.is_empty() {
        return Err(Error::EmptyGroup("<all>".to_owned()));
    }
    let mut groups: BTreeMap<String, Vec<&RunOutcome>> = BTreeMap::new();
    for o in outcomes {
        groups.entry(key(o)).or_default().push(o);
    }
    let rows = groups
        .into_iter()
        .map(|(condition, runs)| aggregate_group(condition, &runs))
        .collect::<Result<Vec<_>>>()?;
    Ok(AggregateTable { rows })
}

fn aggregate_group(condition: String, runs: &[&RunOutcome]) -> Result<AggregateRow> {
    let system_failures = runs.iter().filter(|r| r.is_system_failure()).count();
    let attempts = runs.len() - system_failures;
    if attempts == 0 {
        return Err(Error::EmptyGroup(condition));
    }
    let successful: Vec<RunMetrics> = runs
        .iter()
        .filter(|r| r.success)
        .filter_map(|r| r.metrics)
        .collect();
    let successes = runs.iter().filter(|r| r.success).count();
    let stats = (0..9)
        .map(|k| {
            let column: Vec<f64> = successful.iter().map(|m| m.values()[k]).collect();
            mean_std(&column)
        })
        .collect();
    Ok(AggregateRow {
        condition,
        attempts,
        successes,
        system_failures,
        sr: 100.0 * successes as f64 / attempts as f64,
        stats,
    })
}

fn cell((mean, std): (f64, f64)) -> String {
    if mean.is_finite() {
        format!("{mean:.2} ({std:.2})")
    } else {
        "-".to_owned()
    }
}

impl AggregateTable {
    /// One row per condition; metric cells hold `mean (std)`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["condition", "runs"];
        header.extend(METRIC_COLUMNS);
        csv.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.condition.clone(), row.attempts.to_string()];
            record.push(cell(row.stats[0]));
            record.push(format!("{:.0}%", row.sr));
            record.extend(row.stats[1..].iter().map(|s| cell(*s)));
            csv.write_record(&record)?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Writes one row per run with the fixed metric columns. `SR` is 100 for a
/// successful run and 0 otherwise.
pub fn write_metrics_csv<W: Write>(w: W, rows: &[RunMetrics]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(METRIC_COLUMNS)?;
    for m in rows {
        let v = m.values();
        let mut record = vec![format!("{:.4}", v[0]), if m.success { "100" } else { "0" }.to_owned()];
        record.extend(v[1..].iter().map(|x| format!("{x:.4}")));
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn canonical_frame_is_identity() {
        let f = frame_from_points(&Vector3::zeros(), &Vector3::x(), &Vector3::y()).unwrap();
        assert!((f - Matrix3::identity()).amax() < 1e-15);
    }

    #[test]
    fn collinear_points_rejected() {
        let err = frame_from_points(&Vector3::zeros(), &Vector3::x(), &(Vector3::x() * 2.0));
        assert!(matches!(err, Err(Error::CollinearPoints)));
    }

    #[test]
    fn known_relative_angles() {
        let r1 = *Rotation3::from_euler_angles(0.2, -0.4, 1.1).matrix();
        assert!(relative_angle(&r1, &r1).unwrap().abs() < 1e-6);
        let rz = *Rotation3::from_axis_angle(&Vector3::z_axis(), 90f64.to_radians()).matrix();
        assert!((relative_angle(&r1, &(r1 * rz)).unwrap() - 90.0).abs() < 1e-9);
        assert!(relative_angle(&(r1 * 2.0), &r1).is_err());
    }

    #[test]
    fn mean_std_degenerate() {
        assert_eq!(mean_std(&[3.0; 20]), (3.0, 0.0));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
