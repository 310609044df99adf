//! Nonlinear equations of motion of the IPVA-integrated quarter car,
//! the linear benchmark, and the economic stage cost.
//!
//! The plant is written as `G(x)·ẋ = F(x,u,w)` with state
//! `x = (θ, θ̇, φ, φ̇, x_us, ẋ_us)`, control `u = c_e` and road
//! disturbance `w = x_r`. `F` is affine in both `u` and `w`.

use nalgebra::{Matrix3, Matrix6, Vector3};

use crate::error::ModelError;
use crate::params::{State, SuspensionParams};

/// Residual tolerance for the generalized-coordinate acceleration solve.
const SOLVE_TOL: f64 = 1e-6;

/// Inertia entries of the configuration-dependent mass matrix.
///
/// `g22` couples screw rotation to itself, `g24 = g42` couples screw and
/// pendulum, `g44` is the pendulum block; all depend on φ only through
/// `cos φ`.
pub fn inertia_entries(p: &SuspensionParams, phi: f64) -> (f64, f64, f64) {
    let c = phi.cos();
    let mrr = p.m * p.rp * p.r;
    let g22 = p.ms * p.r_screw * p.r_screw
        + p.j_carrier
        + p.m * p.rp * p.rp
        + p.m * p.r * p.r
        + 2.0 * mrr * c
        + p.j_pendulum
        + p.j_rotor;
    let g24 = p.m * p.r * p.r + mrr * c + p.j_pendulum - p.j_rotor;
    let g44 = p.m * p.r * p.r + p.j_pendulum + p.j_rotor;
    (g22, g24, g44)
}

/// The full 6×6 descriptor matrix G(x). Symmetric and positive definite
/// for every pendulum angle over the admissible parameter ranges.
pub fn mass_matrix(p: &SuspensionParams, x: &State) -> Matrix6<f64> {
    let (g22, g24, g44) = inertia_entries(p, x.phi);
    let msr = p.ms * p.r_screw;
    let mt = p.ms + p.mus;
    let mut g = Matrix6::identity();
    g[(1, 1)] = g22;
    g[(1, 3)] = g24;
    g[(1, 5)] = msr;
    g[(3, 1)] = g24;
    g[(3, 3)] = g44;
    g[(5, 1)] = msr;
    g[(5, 5)] = mt;
    g
}

/// Generalized accelerations (θ̈, φ̈, ẍ_us) from the 3×3 reduced solve.
fn accelerations(
    p: &SuspensionParams,
    x: &State,
    u: f64,
    w: f64,
) -> Result<Vector3<f64>, ModelError> {
    let (g22, g24, g44) = inertia_entries(p, x.phi);
    let msr = p.ms * p.r_screw;
    let mt = p.ms + p.mus;
    let g = Matrix3::new(g22, g24, msr, g24, g44, 0.0, msr, 0.0, mt);

    let s = x.phi.sin();
    let mrr = p.m * p.rp * p.r;
    let rr = p.r_screw * p.r_screw;
    let rel = x.phi_dot - x.theta_dot;
    let f2 = -p.cm * rr * x.theta_dot + u * rel - p.ks * rr * x.theta
        + 2.0 * mrr * x.phi_dot * x.theta_dot * s
        + mrr * s * x.phi_dot * x.phi_dot;
    let f4 = -u * rel - mrr * s * x.theta_dot * x.theta_dot - p.kp * x.phi;
    let f6 = -p.kt * (x.x_us - w);
    let f = Vector3::new(f2, f4, f6);

    let acc = g.lu().solve(&f).ok_or(ModelError::LinearSolveFailure {
        residual: f64::INFINITY,
    })?;
    let residual = (g * acc - f).norm();
    let scale = f.norm().max(1.0);
    if !(residual <= SOLVE_TOL * scale) {
        return Err(ModelError::LinearSolveFailure { residual });
    }
    Ok(acc)
}

/// State derivative ẋ = G(x)⁻¹ F(x,u,w) of the nonlinear plant.
pub fn dynamics(p: &SuspensionParams, x: &State, u: f64, w: f64) -> Result<State, ModelError> {
    let acc = accelerations(p, x, u, w)?;
    Ok(State {
        theta: x.theta_dot,
        theta_dot: acc[0],
        phi: x.phi_dot,
        phi_dot: acc[1],
        x_us: x.x_us_dot,
        x_us_dot: acc[2],
    })
}

/// Sprung-mass acceleration ẍ_s = ẍ_us + R·θ̈ read off a state derivative.
pub fn sprung_acceleration(p: &SuspensionParams, deriv: &State) -> f64 {
    deriv.x_us_dot + p.r_screw * deriv.theta_dot
}

/// Instantaneous harvested power P = u·(θ̇ − φ̇)².
pub fn instantaneous_power(x: &State, u: f64) -> f64 {
    let rel = x.theta_dot - x.phi_dot;
    u * rel * rel
}

/// Four-dimensional state of the pendulum-free linear benchmark:
/// (θ, θ̇, x_us, ẋ_us).
pub type BenchmarkState = [f64; 4];

/// Derivative of the linear benchmark
/// `(MsR² + Jr)θ̈ + (cmR² + ce)θ̇ + ksR²θ + RMs·ẍus = 0`,
/// `(Ms + Mus)ẍus + MsR·θ̈ + kt(x_us − x_r) = 0`.
pub fn linear_benchmark_dynamics(
    p: &SuspensionParams,
    x: &BenchmarkState,
    u: f64,
    w: f64,
) -> BenchmarkState {
    let rr = p.r_screw * p.r_screw;
    let m11 = p.ms * rr + p.j_rotor;
    let m12 = p.r_screw * p.ms;
    let m22 = p.ms + p.mus;
    let f1 = -(p.cm * rr + u) * x[1] - p.ks * rr * x[0];
    let f2 = -p.kt * (x[2] - w);
    // 2x2 solve by hand
    let det = m11 * m22 - m12 * m12;
    let a1 = (m22 * f1 - m12 * f2) / det;
    let a2 = (m11 * f2 - m12 * f1) / det;
    [x[1], a1, x[3], a2]
}

/// Undamped natural frequencies of the linear benchmark (rad/s), ascending.
pub fn benchmark_natural_frequencies(p: &SuspensionParams) -> [f64; 2] {
    let rr = p.r_screw * p.r_screw;
    let m11 = p.ms * rr + p.j_rotor;
    let m12 = p.r_screw * p.ms;
    let m22 = p.ms + p.mus;
    let k1 = p.ks * rr;
    let k2 = p.kt;
    // det(K - w^2 M) = 0: (k1 - l m11)(k2 - l m22) - l^2 m12^2 = 0 with l = w^2
    let a = m11 * m22 - m12 * m12;
    let b = -(k1 * m22 + k2 * m11);
    let c = k1 * k2;
    let disc = (b * b - 4.0 * a * c).sqrt();
    let l1 = (-b - disc) / (2.0 * a);
    let l2 = (-b + disc) / (2.0 * a);
    [l1.sqrt(), l2.sqrt()]
}

/// Economic stage cost `l(x,u) = α1(ẋ6 + Rẋ2)² − α2·u(x2 − x4)²`:
/// squared sprung-mass acceleration traded against harvested power.
pub fn stage_cost(
    p: &SuspensionParams,
    x: &State,
    deriv: &State,
    u: f64,
    alpha1: f64,
    alpha2: f64,
) -> f64 {
    let acc = sprung_acceleration(p, deriv);
    alpha1 * acc * acc - alpha2 * instantaneous_power(x, u)
}

/// Total mechanical energy T + V of the unforced plant (w = 0), used by the
/// conservation tests.
pub fn total_energy(p: &SuspensionParams, x: &State) -> f64 {
    let c = x.phi.cos();
    let td = x.theta_dot;
    let pd = x.phi_dot;
    let xd = x.x_us_dot;
    let t = 0.5 * p.mus * xd * xd
        + 0.5 * p.ms * (p.r_screw * td + xd).powi(2)
        + 0.5 * p.j_carrier * td * td
        + 0.5
            * p.m
            * (p.rp * p.rp * td * td
                + p.r * p.r * (td + pd).powi(2)
                + 2.0 * p.rp * p.r * c * td * (td + pd))
        + 0.5 * p.j_pendulum * (td + pd).powi(2)
        + 0.5 * p.j_rotor * (pd - td).powi(2);
    let v = 0.5 * p.ks * (p.r_screw * x.theta).powi(2)
        + 0.5 * p.kt * x.x_us * x.x_us
        + 0.5 * p.kp * x.phi * x.phi;
    t + v
}
