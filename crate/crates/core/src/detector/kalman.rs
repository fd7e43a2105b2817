use nalgebra::{Matrix2, Matrix2x4, Matrix4, SymmetricEigen, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::scene::ActorId;
use crate::{Error, Result};

/// Noise settings of the constant-velocity tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// White-acceleration spectral density, as a standard deviation in m/s².
    pub process_accel_std: f64,
    pub initial_velocity_std: f64,
    /// Fixed per-axis measurement noise. `None` uses the detector's own
    /// distance-dependent sigma.
    pub measurement_std: Option<f64>,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_accel_std: 2.0,
            initial_velocity_std: 10.0,
            measurement_std: None,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.process_accel_std) || !ok(self.initial_velocity_std) {
            return Err(Error::InvalidConfig("kalman noise terms must be positive".into()));
        }
        if let Some(m) = self.measurement_std {
            if !ok(m) {
                return Err(Error::InvalidConfig("measurement_std must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Constant-velocity track over the state `(x, y, vx, vy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub actor_id: ActorId,
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub last_update: f64,
    pub process_accel_std: f64,
    /// Measurements absorbed since initialisation, including the first.
    pub updates: usize,
}

const H: Matrix2x4<f64> = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);

fn check_psd(p: &Matrix4<f64>) -> Result<()> {
    let scale = p.abs().max().max(1.0);
    let tol = 1e-9 * scale;
    if p.iter().any(|v| !v.is_finite()) || (p - p.transpose()).abs().max() > tol {
        return Err(Error::NotPositiveSemiDefinite);
    }
    let eig = SymmetricEigen::new(*p);
    if eig.eigenvalues.min() < -tol {
        return Err(Error::NotPositiveSemiDefinite);
    }
    Ok(())
}

impl KalmanTrack {
    /// Starts a track at a measured position with unknown velocity.
    pub fn new(
        actor_id: ActorId,
        position: Vec2,
        position_std: f64,
        time: f64,
        cfg: &KalmanConfig,
    ) -> Self {
        let pv = position_std * position_std;
        let vv = cfg.initial_velocity_std * cfg.initial_velocity_std;
        Self {
            actor_id,
            mean: Vector4::new(position.x, position.y, 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::new(pv, pv, vv, vv)),
            last_update: time,
            process_accel_std: cfg.process_accel_std,
            updates: 1,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.mean[2], self.mean[3])
    }

    /// Propagates the state by `dt` seconds.
    pub fn predict(&self, dt: f64) -> Result<Self> {
        assert!(dt >= 0.0, "dt must be non-negative");
        check_psd(&self.covariance)?;
        if dt == 0.0 {
            return Ok(self.clone());
        }
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let q = self.process_accel_std * self.process_accel_std;
        let (dt2, dt3) = (dt * dt, dt * dt * dt);
        let mut qm = Matrix4::zeros();
        for axis in 0..2 {
            let (p, v) = (axis, axis + 2);
            qm[(p, p)] = dt3 / 3.0 * q;
            qm[(p, v)] = dt2 / 2.0 * q;
            qm[(v, p)] = dt2 / 2.0 * q;
            qm[(v, v)] = dt * q;
        }
        let cov = f * self.covariance * f.transpose() + qm;
        Ok(Self {
            mean: f * self.mean,
            covariance: 0.5 * (cov + cov.transpose()),
            ..self.clone()
        })
    }

    /// Absorbs a position measurement with noise covariance `r`, using the
    /// Joseph form so the covariance stays symmetric positive semi-definite.
    pub fn update(&self, measured: Vec2, r: Matrix2<f64>, time: f64) -> Result<Self> {
        check_psd(&self.covariance)?;
        if r.iter().any(|v| !v.is_finite())
            || (r - r.transpose()).abs().max() > 1e-12 * r.abs().max().max(1.0)
            || r.cholesky().is_none()
        {
            return Err(Error::NotPositiveDefinite);
        }
        let p = &self.covariance;
        let innovation = Vector2::new(measured.x, measured.y) - H * self.mean;
        let s = H * p * H.transpose() + r;
        let s_inv = s.try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let k = p * H.transpose() * s_inv;
        let ikh = Matrix4::identity() - k * H;
        let cov = ikh * p * ikh.transpose() + k * r * k.transpose();
        Ok(Self {
            mean: self.mean + k * innovation,
            covariance: 0.5 * (cov + cov.transpose()),
            last_update: time,
            updates: self.updates + 1,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track() -> KalmanTrack {
        KalmanTrack::new(1, Vec2::new(3.0, -1.0), 0.5, 0.0, &KalmanConfig::default())
    }

    #[test]
    fn zero_dt_predict_is_identity() {
        let t = track();
        assert_eq!(t.predict(0.0).unwrap(), t);
    }

    #[test]
    fn huge_noise_leaves_state_put() {
        let t = track().predict(0.05).unwrap();
        let r = Matrix2::identity() * 1e20;
        let u = t.update(Vec2::new(100.0, 100.0), r, 0.05).unwrap();
        assert!((u.mean - t.mean).norm() < 1e-6);
    }

    #[test]
    fn converges_on_constant_velocity() {
        let mut t = KalmanTrack::new(1, Vec2::ZERO, 0.1, 0.0, &KalmanConfig::default());
        let dt = 0.05;
        let r = Matrix2::identity() * 0.01;
        for k in 1..=100 {
            let time = k as f64 * dt;
            t = t.predict(dt).unwrap().update(Vec2::new(2.0 * time, 0.0), r, time).unwrap();
        }
        assert!((t.velocity() - Vec2::new(2.0, 0.0)).norm() < 0.05);
    }

    #[test]
    fn update_never_grows_the_trace() {
        let mut t = track();
        let r = Matrix2::new(0.3, 0.05, 0.05, 0.2);
        for k in 1..50 {
            let p = t.predict(0.05).unwrap();
            let u = p.update(Vec2::new(k as f64 * 0.1, 0.0), r, k as f64 * 0.05).unwrap();
            assert!(u.covariance.trace() <= p.covariance.trace() + 1e-12);
            t = u;
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let mut t = track();
        t.covariance[(0, 0)] = -1.0;
        assert!(matches!(t.predict(0.1), Err(Error::NotPositiveSemiDefinite)));
        let t = track();
        let r = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            t.update(Vec2::ZERO, r, 0.0),
            Err(Error::NotPositiveDefinite)
        ));
    }
}
