//! Hand-pose conditioning: first-order low-pass on the pose and a
//! constant-velocity Kalman filter for the palm velocity.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Pose;

/// World-frame angular velocity taking `from` to `to` over `dt`.
pub fn angular_velocity(from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>, dt: f64) -> Vector3<f64> {
    (to * from.inverse()).scaled_axis() / dt
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandFilterConfig {
    /// Low-pass cutoff (Hz).
    pub cutoff_hz: f64,
    /// White-acceleration intensity ((m/s²)²·s).
    pub q_proc: f64,
    /// Position measurement variance (m²).
    pub r_meas: f64,
    /// Initial velocity variance ((m/s)²).
    #[serde(default = "default_initial_velocity_var")]
    pub initial_velocity_var: f64,
}

fn default_initial_velocity_var() -> f64 {
    1.0
}

impl Default for HandFilterConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 8.0,
            q_proc: 5.0,
            r_meas: 0.005 * 0.005,
            initial_velocity_var: default_initial_velocity_var(),
        }
    }
}

impl HandFilterConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("hand_filter.cutoff_hz", self.cutoff_hz),
            ("hand_filter.q_proc", self.q_proc),
            ("hand_filter.r_meas", self.r_meas),
            ("hand_filter.initial_velocity_var", self.initial_velocity_var),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowPassState {
    pub cutoff: f64,
    pub last_output: Pose,
}

impl LowPassState {
    pub fn new(cutoff: f64, initial: Pose) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::invalid("cutoff", "must be > 0"));
        }
        Ok(Self {
            cutoff,
            last_output: initial,
        })
    }

    /// Smoothing coefficient `a = dt / (dt + 1/(2π·fc))`.
    pub fn coefficient(&self, dt: f64) -> f64 {
        dt / (dt + 1.0 / (2.0 * std::f64::consts::PI * self.cutoff))
    }

    pub fn update(&mut self, raw: &Pose, dt: f64) -> Result<Pose> {
        if !(dt > 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        if !raw.is_finite() {
            return Err(Error::NonFinite("lowpass_update"));
        }
        let a = self.coefficient(dt);
        let last = self.last_output;
        let position = last.position + (raw.position - last.position) * a;
        // Shortest-arc slerp; opposite rotations fall back to the raw value.
        let orientation = last
            .orientation
            .try_slerp(&raw.orientation, a, 1e-12)
            .unwrap_or(raw.orientation);
        let out = Pose::new(position, orientation);
        self.last_output = out;
        Ok(out)
    }
}

/// Constant-velocity model over a 3-D position: `x = [position; velocity]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanCvState {
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
    pub q_proc: f64,
    pub r_meas: f64,
}

impl KalmanCvState {
    /// Starts at `position` with zero velocity.
    pub fn new(position: Vector3<f64>, config: &HandFilterConfig) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&position);
        let mut p = Matrix6::zeros();
        for i in 0..3 {
            p[(i, i)] = config.r_meas;
            p[(i + 3, i + 3)] = config.initial_velocity_var;
        }
        Self {
            x,
            p,
            q_proc: config.q_proc,
            r_meas: config.r_meas,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(3).into_owned()
    }

    /// One predict/update cycle; returns the velocity estimate.
    pub fn update(&mut self, z: &Vector3<f64>, dt: f64) -> Result<Vector3<f64>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidTimeStep(dt));
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("kalman_update"));
        }
        let eye3 = Matrix3::<f64>::identity();
        let mut f = Matrix6::<f64>::identity();
        f.fixed_view_mut::<3, 3>(0, 3).copy_from(&(eye3 * dt));
        let mut q = Matrix6::<f64>::zeros();
        q.fixed_view_mut::<3, 3>(0, 0).copy_from(&(eye3 * (dt.powi(3) / 3.0)));
        q.fixed_view_mut::<3, 3>(0, 3).copy_from(&(eye3 * (dt * dt / 2.0)));
        q.fixed_view_mut::<3, 3>(3, 0).copy_from(&(eye3 * (dt * dt / 2.0)));
        q.fixed_view_mut::<3, 3>(3, 3).copy_from(&(eye3 * dt));
        q *= self.q_proc;

        let x_pred = f * self.x;
        let p_pred = f * self.p * f.transpose() + q;

        let mut h = Matrix3x6::<f64>::zeros();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&eye3);
        let r = eye3 * self.r_meas;
        let s = h * p_pred * h.transpose() + r;
        let s_chol = s.cholesky().ok_or(Error::FilterDiverged)?;
        // K = P Hᵀ S⁻¹
        let k = s_chol.solve(&(h * p_pred)).transpose();
        let innovation = z - h * x_pred;
        self.x = x_pred + k * innovation;
        // Joseph form keeps P symmetric positive semidefinite.
        let ikh = Matrix6::<f64>::identity() - k * h;
        let p_new = ikh * p_pred * ikh.transpose() + k * r * k.transpose();
        self.p = (p_new + p_new.transpose()) * 0.5;
        let min_eig = self.p.symmetric_eigenvalues().min();
        if !(min_eig >= -1e-9) || !self.x.iter().all(|v| v.is_finite()) {
            return Err(Error::FilterDiverged);
        }
        Ok(self.velocity())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowpass_single_step() {
        let mut lp = LowPassState::new(5.0, Pose::identity()).unwrap();
        let raw = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let out = lp.update(&raw, 0.01).unwrap();
        // a = 0.01 / (0.01 + 1/(10π))
        assert!((out.position.x - 0.23905722).abs() < 1e-8, "{}", out.position.x);
    }

    #[test]
    fn lowpass_large_dt_passes_through() {
        let mut lp = LowPassState::new(5.0, Pose::identity()).unwrap();
        let raw = Pose::from_translation(Vector3::new(0.3, -0.1, 2.0));
        let out = lp.update(&raw, 1e9).unwrap();
        assert!((out.position - raw.position).norm() < 1e-9);
    }

    #[test]
    fn lowpass_rejects_bad_input() {
        let mut lp = LowPassState::new(5.0, Pose::identity()).unwrap();
        let raw = Pose::from_translation(Vector3::new(f64::NAN, 0.0, 0.0));
        assert!(lp.update(&raw, 0.01).is_err());
        assert!(lp.update(&Pose::identity(), 0.0).is_err());
        assert!(LowPassState::new(0.0, Pose::identity()).is_err());
    }

    #[test]
    fn kalman_static_measurements() {
        let cfg = HandFilterConfig::default();
        let z = Vector3::new(0.4, 0.1, 0.3);
        let mut kf = KalmanCvState::new(z, &cfg);
        let mut v = Vector3::zeros();
        for _ in 0..100 {
            v = kf.update(&z, 0.01).unwrap();
            assert!((kf.p - kf.p.transpose()).amax() <= 1e-12);
        }
        assert!(v.norm() < 1e-3);
    }

    #[test]
    fn kalman_tracks_ramp() {
        let cfg = HandFilterConfig::default();
        let dt = 0.01;
        let mut kf = KalmanCvState::new(Vector3::zeros(), &cfg);
        let mut v = Vector3::zeros();
        for i in 1..=200 {
            let z = Vector3::new(i as f64 * dt, 0.0, 0.0);
            v = kf.update(&z, dt).unwrap();
        }
        assert!((v - Vector3::x()).norm() < 0.01, "{v}");
    }
}
