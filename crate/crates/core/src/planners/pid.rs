use serde::{Deserialize, Serialize};

use crate::scene::ControlInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Symmetric clamp on the error integral, in m.
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 0.8,
            ki: 0.05,
            kd: 0.1,
            integral_limit: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    /// `None` before the first call; the derivative term is zero then.
    pub prev_error: Option<f64>,
}

/// Speed PID. Positive output becomes throttle, negative output brake.
pub fn pid_control(
    target_speed: f64,
    current_speed: f64,
    state: &mut PidState,
    gains: &PidGains,
    dt: f64,
) -> ControlInput {
    assert!(dt > 0.0, "dt must be positive");
    let error = target_speed - current_speed;
    state.integral = (state.integral + error * dt).clamp(-gains.integral_limit, gains.integral_limit);
    let derivative = state.prev_error.map_or(0.0, |p| (error - p) / dt);
    state.prev_error = Some(error);
    let u = gains.kp * error + gains.ki * state.integral + gains.kd * derivative;
    if u >= 0.0 {
        ControlInput {
            throttle: u.min(1.0),
            brake: 0.0,
            steer: 0.0,
        }
    } else {
        ControlInput {
            throttle: 0.0,
            brake: (-u).min(1.0),
            steer: 0.0,
        }
    }
}
