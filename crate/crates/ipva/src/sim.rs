//! Fixed-step RK4 integration, performance metrics, Welch spectral
//! estimation and stationarity diagnostics.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::SimError;
use crate::model;
use crate::params::{State, SuspensionParams};
use crate::road::RoadSignal;

/// A continuous-time plant integrable by [`integrate`]. Control and
/// disturbance are held zero-order over a step.
pub trait Plant {
    fn deriv(&self, x: &State, u: f64, w: f64) -> Result<State, SimError>;

    /// Sprung-mass acceleration read off a state derivative.
    fn sprung_acceleration(&self, deriv: &State) -> f64;

    /// Instantaneous harvested power at (x, u).
    fn power(&self, x: &State, u: f64) -> f64;
}

/// The nonlinear IPVA quarter car.
#[derive(Debug, Clone, Copy)]
pub struct IpvaPlant {
    pub params: SuspensionParams,
}

impl Plant for IpvaPlant {
    fn deriv(&self, x: &State, u: f64, w: f64) -> Result<State, SimError> {
        Ok(model::dynamics(&self.params, x, u, w)?)
    }

    fn sprung_acceleration(&self, deriv: &State) -> f64 {
        model::sprung_acceleration(&self.params, deriv)
    }

    fn power(&self, x: &State, u: f64) -> f64 {
        model::instantaneous_power(x, u)
    }
}

/// The pendulum-free linear benchmark embedded in the 6-state space
/// (pendulum channels identically zero; power is u·θ̇²).
#[derive(Debug, Clone, Copy)]
pub struct BenchmarkPlant {
    pub params: SuspensionParams,
}

impl Plant for BenchmarkPlant {
    fn deriv(&self, x: &State, u: f64, w: f64) -> Result<State, SimError> {
        let d = model::linear_benchmark_dynamics(
            &self.params,
            &[x.theta, x.theta_dot, x.x_us, x.x_us_dot],
            u,
            w,
        );
        Ok(State {
            theta: d[0],
            theta_dot: d[1],
            phi: 0.0,
            phi_dot: 0.0,
            x_us: d[2],
            x_us_dot: d[3],
        })
    }

    fn sprung_acceleration(&self, deriv: &State) -> f64 {
        model::sprung_acceleration(&self.params, deriv)
    }

    fn power(&self, x: &State, u: f64) -> f64 {
        u * x.theta_dot * x.theta_dot
    }
}

/// A linear time-invariant plant `ẋ = A x + b·u_f + d·w` (the
/// stochastically- or deterministically-linearized models). The input
/// channel is the damping force, already folded into `A` when simulating
/// a passive configuration.
#[derive(Debug, Clone)]
pub struct LtiPlant {
    pub a: nalgebra::Matrix6<f64>,
    pub b: nalgebra::Vector6<f64>,
    pub d: nalgebra::Vector6<f64>,
    pub r_screw: f64,
}

impl Plant for LtiPlant {
    fn deriv(&self, x: &State, u_f: f64, w: f64) -> Result<State, SimError> {
        let xv = nalgebra::Vector6::from_column_slice(&x.to_array());
        let dv = self.a * xv + self.b * u_f + self.d * w;
        Ok(State::from_array([
            dv[0], dv[1], dv[2], dv[3], dv[4], dv[5],
        ]))
    }

    fn sprung_acceleration(&self, deriv: &State) -> f64 {
        deriv.x_us_dot + self.r_screw * deriv.theta_dot
    }

    fn power(&self, x: &State, u_f: f64) -> f64 {
        // force-channel power Fd·(φ̇ − θ̇)
        u_f * x.relative_velocity()
    }
}

/// A simulated run: states and per-sample channels at the road period.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub controls: Vec<f64>,
    pub disturbances: Vec<f64>,
    /// Sprung-mass acceleration, recomputed from the dynamics at each
    /// sample (never numerically differentiated).
    pub accelerations: Vec<f64>,
    pub powers: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Performance metrics of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean harvested power (W).
    pub avg_power: f64,
    /// RMS sprung-mass acceleration (m/s²).
    pub rms_accel: f64,
}

/// Classical fixed-step RK4 over the road realization, control policy
/// evaluated once per step and held.
///
/// The policy sees the step index and current state; the trajectory
/// records `n + 1` samples including the initial condition.
pub fn integrate<P: Plant>(
    plant: &P,
    x0: State,
    mut u_policy: impl FnMut(usize, &State) -> f64,
    road: &RoadSignal,
    duration: f64,
) -> Result<Trajectory, SimError> {
    let ts = road.model.ts;
    let n = (duration / ts).round() as usize;
    assert!(
        n < road.len(),
        "road realization shorter than requested duration"
    );
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        controls: Vec::with_capacity(n + 1),
        disturbances: Vec::with_capacity(n + 1),
        accelerations: Vec::with_capacity(n + 1),
        powers: Vec::with_capacity(n + 1),
    };
    let mut x = x0;
    for k in 0..=n {
        let w = road.samples[k];
        let u = u_policy(k, &x);
        let d = plant.deriv(&x, u, w)?;
        traj.times.push(k as f64 * ts);
        traj.states.push(x);
        traj.controls.push(u);
        traj.disturbances.push(w);
        traj.accelerations.push(plant.sprung_acceleration(&d));
        traj.powers.push(plant.power(&x, u));
        if k == n {
            break;
        }
        x = rk4_step(plant, &x, u, w, ts)?;
        if !x.is_finite() {
            return Err(SimError::NonFiniteState {
                t: (k + 1) as f64 * ts,
            });
        }
    }
    Ok(traj)
}

/// One RK4 step with (u, w) held constant.
pub fn rk4_step<P: Plant>(
    plant: &P,
    x: &State,
    u: f64,
    w: f64,
    ts: f64,
) -> Result<State, SimError> {
    let k1 = plant.deriv(x, u, w)?;
    let k2 = plant.deriv(&(*x + k1 * (ts / 2.0)), u, w)?;
    let k3 = plant.deriv(&(*x + k2 * (ts / 2.0)), u, w)?;
    let k4 = plant.deriv(&(*x + k3 * ts), u, w)?;
    Ok(*x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (ts / 6.0))
}

/// Time-mean power and RMS acceleration, optionally skipping a transient
/// prefix of `skip` samples.
pub fn metrics_with_skip(traj: &Trajectory, skip: usize) -> Result<Metrics, SimError> {
    if traj.len() <= skip {
        return Err(SimError::EmptyTrajectory);
    }
    let n = (traj.len() - skip) as f64;
    let avg_power = traj.powers[skip..].iter().sum::<f64>() / n;
    let rms_accel = (traj.accelerations[skip..]
        .iter()
        .map(|a| a * a)
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(Metrics {
        avg_power,
        rms_accel,
    })
}

pub fn metrics(traj: &Trajectory) -> Result<Metrics, SimError> {
    metrics_with_skip(traj, 0)
}

/// Default Welch segment length (samples).
pub const PSD_SEGMENT_DEFAULT: usize = 1 << 14;

/// Welch averaged-periodogram one-sided PSD with a Hann window and 50%
/// overlap. Returns angular frequencies (rad/s) and density normalized so
/// that the integral over ω recovers the signal variance.
pub fn psd(signal: &[f64], ts: f64, segment: usize) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let segment = segment.min(signal.len().next_power_of_two() >> 1).max(8);
    let hop = segment / 2;
    if signal.len() < segment + hop {
        return Err(SimError::TooShort {
            len: signal.len(),
            min: segment + hop,
        });
    }
    let window: Vec<f64> = (0..segment)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / segment as f64).cos()))
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(segment);
    let nbins = segment / 2 + 1;
    let mut acc = vec![0.0f64; nbins];
    let mut count = 0usize;
    let mut start = 0;
    while start + segment <= signal.len() {
        let mut buf: Vec<Complex<f64>> = (0..segment)
            .map(|i| Complex::new(signal[start + i] * window[i], 0.0))
            .collect();
        fft.process(&mut buf);
        for (b, a) in buf[..nbins].iter().zip(acc.iter_mut()) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    // one-sided density per unit angular frequency
    let fs = 1.0 / ts;
    let scale = ts / (win_power * std::f64::consts::TAU) / count as f64;
    let mut density: Vec<f64> = acc.iter().map(|a| a * scale).collect();
    for d in density[1..nbins - 1].iter_mut() {
        *d *= 2.0; // fold negative frequencies
    }
    let freqs: Vec<f64> = (0..nbins)
        .map(|i| std::f64::consts::TAU * i as f64 * fs / segment as f64)
        .collect();
    Ok((freqs, density))
}

/// Cumulative running mean of a per-sample series.
pub fn cumulative_mean(series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, v) in series.iter().enumerate() {
        sum += v;
        out.push(sum / (i + 1) as f64);
    }
    out
}

/// True when the cumulative mean stays within `band` (relative) of the
/// final mean for every sample at or after index `check_from`.
pub fn stationarity(cum_mean: &[f64], check_from: usize, band: f64) -> bool {
    let last = match cum_mean.last() {
        Some(&v) => v,
        None => return false,
    };
    if last == 0.0 {
        return cum_mean[check_from.min(cum_mean.len() - 1)..]
            .iter()
            .all(|&v| v == 0.0);
    }
    cum_mean[check_from.min(cum_mean.len() - 1)..]
        .iter()
        .all(|&v| ((v - last) / last).abs() <= band)
}
