//! Interferometer operating-point hold: a power monitor on the complementary
//! output feeds a positional PID whose output drives the phase shifter.
//!
//! The plant is normalized. Monitored power is `(1 - cos(phi0 + actuator)) / 2`
//! and quadrature (power 0.5 on the rising slope) is the operating point.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidConfig {
    pub kp: f64,
    /// Integral gain, 1/s.
    pub ki: f64,
    /// Derivative gain, s.
    pub kd: f64,
    pub setpoint: f64,
    /// Actuator phase authority in rad, `[lo, hi]`.
    pub output_limits: (f64, f64),
    /// Loop period, s.
    pub loop_period: f64,
    pub anti_windup: bool,
}

impl Default for PidConfig {
    /// Gains tuned once on the normalized plant (plant slope 0.5 per rad at
    /// quadrature) and frozen.
    fn default() -> Self {
        Self {
            kp: 0.5,
            ki: 500.0,
            kd: 1e-4,
            setpoint: 0.5,
            output_limits: (-PI, PI),
            loop_period: 1e-3,
            anti_windup: true,
        }
    }
}

impl PidConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.output_limits;
        if !(lo < hi) {
            return Err(Error::Config(format!("output limits must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if !(self.loop_period > 0.0) {
            return Err(Error::Config("loop period must be positive".into()));
        }
        if !(self.setpoint > 0.0 && self.setpoint < 1.0) {
            return Err(Error::Config(format!("setpoint must be in (0, 1), got {}", self.setpoint)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PidState {
    /// Running integral of the error, in error * s.
    pub integral: f64,
    pub prev_error: Option<f64>,
}

/// One positional PID update on `error = setpoint - measurement`.
///
/// Returns the actuator command (clamped to the output limits). With
/// anti-windup the integral is frozen while the output is saturated in the
/// direction of the error, and its contribution is bounded by `hi - lo`.
pub fn pid_step(config: &PidConfig, state: &PidState, measurement: f64) -> (f64, PidState) {
    let dt = config.loop_period;
    let (lo, hi) = config.output_limits;
    let error = config.setpoint - measurement;
    let derivative = state.prev_error.map_or(0.0, |p| (error - p) / dt);

    let mut integral = state.integral + error * dt;
    let raw = config.kp * error + config.ki * integral + config.kd * derivative;
    if config.anti_windup {
        let pushing_high = raw > hi && error > 0.0;
        let pushing_low = raw < lo && error < 0.0;
        if pushing_high || pushing_low {
            integral = state.integral;
        }
        if config.ki != 0.0 {
            let bound = (hi - lo) / config.ki.abs();
            integral = integral.clamp(-bound, bound);
        }
    }
    let command = (config.kp * error + config.ki * integral + config.kd * derivative).clamp(lo, hi);
    (
        command,
        PidState {
            integral,
            prev_error: Some(error),
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantState {
    /// Static interferometer phase, rad.
    pub phi0: f64,
    /// Random-walk drift of `phi0`, rad/sqrt(s).
    pub drift_rate_std: f64,
    pub actuator_phase: f64,
}

impl Default for PlantState {
    fn default() -> Self {
        Self {
            phi0: FRAC_PI_2,
            drift_rate_std: 0.0,
            actuator_phase: 0.0,
        }
    }
}

impl PlantState {
    /// Drift giving a per-iteration standard deviation of `per_step` rad.
    pub fn with_step_drift(per_step: f64, loop_period: f64) -> Self {
        Self {
            drift_rate_std: per_step / loop_period.sqrt(),
            ..Self::default()
        }
    }

    #[inline]
    pub fn total_phase(&self) -> f64 {
        self.phi0 + self.actuator_phase
    }

    #[inline]
    pub fn monitored_power(&self) -> f64 {
        ((1.0 - self.total_phase().cos()) / 2.0).clamp(0.0, 1.0)
    }

    /// Distance from quadrature, wrapped to `(-pi, pi]`.
    #[inline]
    pub fn phase_error(&self) -> f64 {
        wrap(self.total_phase() - FRAC_PI_2)
    }
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// A step change of `phi0` applied before iteration `step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub step: u64,
    pub delta: f64,
}

impl Disturbance {
    /// Parses `step,delta` rows; a header line and `#` comments are skipped.
    pub fn parse_csv(text: &str) -> Result<Vec<Disturbance>> {
        let mut out = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("step") {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let parse = |s: Option<&str>| s.ok_or(()).and_then(|s| s.parse::<f64>().map_err(|_| ()));
            match (parse(parts.next()), parse(parts.next())) {
                (Ok(step), Ok(delta)) if step >= 0.0 && step.fract() == 0.0 => out.push(Disturbance {
                    step: step as u64,
                    delta,
                }),
                _ => {
                    return Err(Error::Config(format!(
                        "disturbance line {}: expected `step,delta`, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        out.sort_by_key(|d| d.step);
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub measurement: f64,
    pub command: f64,
    pub phase_error: f64,
}

/// Closed-loop simulation. Each iteration applies scheduled disturbances and
/// drift, measures the monitor port, runs the PID and moves the actuator.
/// The recorded phase error is the one left after actuation.
pub fn run_loop(
    pid: &PidConfig,
    plant: PlantState,
    iterations: u64,
    disturbances: &[Disturbance],
    rng_seed: u64,
) -> Result<Vec<TraceRow>> {
    pid.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut plant = plant;
    let mut state = PidState::default();
    let drift_step = plant.drift_rate_std * pid.loop_period.sqrt();
    let mut pending = disturbances.iter().peekable();
    let mut trace = Vec::with_capacity(iterations as usize);
    for step in 0..iterations {
        while let Some(d) = pending.next_if(|d| d.step <= step) {
            plant.phi0 += d.delta;
        }
        if drift_step > 0.0 {
            plant.phi0 += drift_step * rng.sample::<f64, _>(StandardNormal);
        }
        let measurement = plant.monitored_power();
        let (command, next) = pid_step(pid, &state, measurement);
        state = next;
        plant.actuator_phase = command;
        trace.push(TraceRow {
            step,
            measurement,
            command,
            phase_error: plant.phase_error(),
        });
    }
    Ok(trace)
}

pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("step,measurement,command,phase_error\n");
    for r in trace {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.measurement, r.command, r.phase_error));
    }
    out
}

pub fn rms_phase_error(trace: &[TraceRow]) -> f64 {
    (trace.iter().map(|r| r.phase_error * r.phase_error).sum::<f64>() / trace.len() as f64).sqrt()
}
