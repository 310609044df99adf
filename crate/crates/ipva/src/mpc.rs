//! Receding-horizon controllers: NMPC on the nonlinear plant, SL-MPC on
//! the stabilized statistically linearized model with passivity
//! constraints, and the closed-loop driver that runs either against the
//! nonlinear plant.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix6, RowVector6, Vector6};

use crate::error::MpcError;
use crate::model;
use crate::observer::{self, HgoConfig, HgoState, Measurements};
use crate::params::{State, SuspensionParams};
use crate::road::{self, PreviewMode, PreviewNoise, RoadSignal};
use crate::sim::{self, IpvaPlant, Metrics, Plant, Trajectory};
use crate::slin::{discretize_zoh, SlStateSpace};

/// Relative velocities below this transmit no damping power; the
/// recovered u is zero there regardless of Fd.
pub const EPS_REL: f64 = 1e-6;

/// Horizon, weights, bounds and solver caps shared by both controllers.
#[derive(Debug, Clone, Copy)]
pub struct MpcConfig {
    /// Horizon length in steps.
    pub n: usize,
    pub ts: f64,
    /// Weight on squared sprung-mass acceleration.
    pub alpha1: f64,
    /// Weight on harvested power (entering the cost negated).
    pub alpha2: f64,
    /// Control bounds [0, ce_max].
    pub ce_max: f64,
    /// NMPC gradient-iteration cap per sample. The default of 2 follows
    /// the real-time-iteration pattern: with warm starting, a couple of
    /// descent steps per 10 ms sample track the receding optimum. Large
    /// caps let the solver converge fully on every subproblem, which on
    /// this plant discovers an aggressive bang-bang pumping strategy —
    /// useful as an offline performance bound, not as the deployable
    /// controller the comparisons are calibrated against.
    pub max_iters: usize,
    /// Relative decrease / projected-gradient tolerance.
    pub tol: f64,
    pub warm_start: bool,
    /// SL-MPC sequential-convexification rounds.
    pub convex_rounds: usize,
    /// Inner QP iteration cap per convex round.
    pub qp_iters: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            n: 15,
            ts: 0.01,
            alpha1: 0.0,
            alpha2: 1.0,
            ce_max: 0.225,
            max_iters: 2,
            tol: 1e-9,
            warm_start: true,
            convex_rounds: 5,
            qp_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    IterationCap,
    /// SL-MPC infeasibility fallback: Fd = 0 (open generator circuit).
    Fallback,
}

/// Solution of one horizon problem. `u` always holds damping
/// coefficients; for SL-MPC the underlying force sequence is in `fd`.
#[derive(Debug, Clone)]
pub struct MpcSolution {
    pub u: Vec<f64>,
    pub fd: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub status: SolverStatus,
}

/// Rollout cost of a candidate control sequence over the preview window.
pub fn nmpc_cost(
    p: &SuspensionParams,
    x0: &State,
    u: &[f64],
    preview: &[f64],
    cfg: &MpcConfig,
) -> Result<f64, MpcError> {
    let plant = IpvaPlant { params: *p };
    let mut x = *x0;
    let mut j = 0.0;
    for k in 0..cfg.n {
        let d = model::dynamics(p, &x, u[k], preview[k])
            .map_err(|_| MpcError::NonFiniteRollout { k })?;
        j += cfg.ts * model::stage_cost(p, &x, &d, u[k], cfg.alpha1, cfg.alpha2);
        x = sim::rk4_step(&plant, &x, u[k], preview[k], cfg.ts)
            .map_err(|_| MpcError::NonFiniteRollout { k })?;
        if !x.is_finite() {
            return Err(MpcError::NonFiniteRollout { k });
        }
    }
    if !j.is_finite() {
        return Err(MpcError::NonFiniteRollout { k: cfg.n });
    }
    Ok(j)
}

fn project_box(u: &mut [f64], lo: f64, hi: f64) {
    for v in u.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

/// Single-shooting NMPC: projected gradient with Barzilai–Borwein steps
/// and backtracking, forward-difference gradients, box [0, ce_max]^N.
///
/// `warm` (the time-shifted previous solution) seeds the iteration when
/// `cfg.warm_start` is set; otherwise the midpoint control is used.
pub fn nmpc_solve(
    p: &SuspensionParams,
    x0: &State,
    preview: &[f64],
    cfg: &MpcConfig,
    warm: Option<&[f64]>,
) -> Result<MpcSolution, MpcError> {
    assert_eq!(
        preview.len(),
        cfg.n,
        "preview length must equal the horizon"
    );
    let mut u = match (cfg.warm_start, warm) {
        (true, Some(w)) if w.len() == cfg.n => w.to_vec(),
        _ => vec![0.5 * cfg.ce_max; cfg.n],
    };
    project_box(&mut u, 0.0, cfg.ce_max);
    let mut cost = nmpc_cost(p, x0, &u, preview, cfg)?;

    let fd_h = 1e-7 * cfg.ce_max.max(1e-3);
    let grad = |u: &[f64], base: f64| -> Result<Vec<f64>, MpcError> {
        let mut g = vec![0.0; cfg.n];
        let mut up = u.to_vec();
        for k in 0..cfg.n {
            // difference into the box so the perturbed point stays feasible
            let h = if u[k] + fd_h <= cfg.ce_max {
                fd_h
            } else {
                -fd_h
            };
            up[k] = u[k] + h;
            g[k] = (nmpc_cost(p, x0, &up, preview, cfg)? - base) / h;
            up[k] = u[k];
        }
        Ok(g)
    };

    let mut g = grad(&u, cost)?;
    let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gnorm == 0.0 {
        return Ok(MpcSolution {
            u,
            fd: Vec::new(),
            cost,
            iterations: 0,
            status: SolverStatus::Converged,
        });
    }
    let mut step = 0.1 * cfg.ce_max / gnorm;
    let mut status = SolverStatus::IterationCap;
    let mut iterations = cfg.max_iters;
    let cost_scale = cost.abs().max(1e-12);

    for it in 0..cfg.max_iters {
        // projected-gradient residual as the stationarity measure
        let mut trial: Vec<f64> = u.iter().zip(&g).map(|(ui, gi)| ui - gi).collect();
        project_box(&mut trial, 0.0, cfg.ce_max);
        let resid = trial
            .iter()
            .zip(&u)
            .map(|(t, ui)| (t - ui) * (t - ui))
            .sum::<f64>()
            .sqrt();
        if resid <= cfg.tol.max(1e-12 * cfg.ce_max) {
            status = SolverStatus::Converged;
            iterations = it;
            break;
        }

        // backtracking along the projection arc
        let mut t = step;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand: Vec<f64> = u.iter().zip(&g).map(|(ui, gi)| ui - t * gi).collect();
            project_box(&mut cand, 0.0, cfg.ce_max);
            let c = nmpc_cost(p, x0, &cand, preview, cfg)?;
            if c < cost - 1e-14 * cost_scale {
                let gc = grad(&cand, c)?;
                // BB step for the next iteration
                let (mut sy, mut ss) = (0.0, 0.0);
                for k in 0..cfg.n {
                    let s = cand[k] - u[k];
                    let y = gc[k] - g[k];
                    sy += s * y;
                    ss += s * s;
                }
                step = if sy > 1e-300 {
                    (ss / sy).clamp(1e-6, 1e6)
                } else {
                    t * 2.0
                };
                u = cand;
                cost = c;
                g = gc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no descent direction left at machine precision: local optimum
            status = SolverStatus::Converged;
            iterations = it + 1;
            break;
        }
    }

    Ok(MpcSolution {
        u,
        fd: Vec::new(),
        cost,
        iterations,
        status,
    })
}

/// ZOH-discretized SL model plus the continuous rows needed to evaluate
/// accelerations and relative velocities inside the horizon.
#[derive(Debug, Clone)]
pub struct DiscreteSlModel {
    pub ad: Matrix6<f64>,
    pub bd: Vector6<f64>,
    pub dd: Vector6<f64>,
    /// Continuous-time sprung-acceleration row: ẍs = acc_row·x + acc_b·Fd + acc_d·w.
    pub acc_row: RowVector6<f64>,
    pub acc_b: f64,
    pub acc_d: f64,
    /// Relative-velocity selector z = x4 − x2.
    pub z_row: RowVector6<f64>,
    pub ts: f64,
}

/// Discretizes a (stabilized) SL state space at the controller period.
pub fn discretize_sl(ss: &SlStateSpace, r_screw: f64, ts: f64) -> DiscreteSlModel {
    let (ad, bd, dd) = discretize_zoh(&ss.a, &ss.b, &ss.d, ts);
    let acc_row = ss.a.row(5) + ss.a.row(1) * r_screw;
    let mut z_row = RowVector6::zeros();
    z_row[3] = 1.0;
    z_row[1] = -1.0;
    DiscreteSlModel {
        ad,
        bd,
        dd,
        acc_row: acc_row.into(),
        acc_b: ss.b[5] + r_screw * ss.b[1],
        acc_d: ss.d[5] + r_screw * ss.d[1],
        z_row,
        ts,
    }
}

/// Horizon prediction: acc = m_acc·Fd + c_acc, z = m_z·Fd + c_z.
struct Prediction {
    m_acc: DMatrix<f64>,
    c_acc: DVector<f64>,
    m_z: DMatrix<f64>,
    c_z: DVector<f64>,
}

fn predict(model: &DiscreteSlModel, x0: &State, preview: &[f64]) -> Prediction {
    let n = preview.len();
    let mut m_acc = DMatrix::zeros(n, n);
    let mut c_acc = DVector::zeros(n);
    let mut m_z = DMatrix::zeros(n, n);
    let mut c_z = DVector::zeros(n);
    // free response and per-input sensitivity states, advanced in lockstep
    let mut xf = Vector6::from_column_slice(&x0.to_array());
    let mut sens: Vec<Vector6<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        c_acc[k] = (model.acc_row * xf)[0] + model.acc_d * preview[k];
        c_z[k] = (model.z_row * xf)[0];
        for (j, s) in sens.iter().enumerate() {
            m_acc[(k, j)] = (model.acc_row * s)[0];
            m_z[(k, j)] = (model.z_row * s)[0];
        }
        m_acc[(k, k)] = model.acc_b;
        // advance
        xf = model.ad * xf + model.dd * preview[k];
        for s in sens.iter_mut() {
            *s = model.ad * *s;
        }
        sens.push(model.bd);
    }
    Prediction {
        m_acc,
        c_acc,
        m_z,
        c_z,
    }
}

/// True (bilinear) horizon cost of an Fd sequence.
fn sl_true_cost(pred: &Prediction, fd: &DVector<f64>, cfg: &MpcConfig) -> f64 {
    let acc = &pred.m_acc * fd + &pred.c_acc;
    let z = &pred.m_z * fd + &pred.c_z;
    let mut j = 0.0;
    for k in 0..fd.len() {
        j += cfg.ts * (cfg.alpha1 * acc[k] * acc[k] - cfg.alpha2 * fd[k] * z[k]);
    }
    j
}

/// Projects an Fd sequence onto the per-step passivity box implied by the
/// realized relative velocities, re-simulating as it goes so the final
/// sequence is exactly feasible for the bilinear constraints.
fn enforce_passivity(
    model: &DiscreteSlModel,
    x0: &State,
    preview: &[f64],
    fd: &mut DVector<f64>,
    ce_max: f64,
) {
    let mut x = Vector6::from_column_slice(&x0.to_array());
    for k in 0..fd.len() {
        let z = (model.z_row * x)[0];
        let (lo, hi) = if z >= 0.0 {
            (0.0, ce_max * z)
        } else {
            (ce_max * z, 0.0)
        };
        fd[k] = fd[k].clamp(lo, hi);
        x = model.ad * x + model.bd * fd[k] + model.dd * preview[k];
    }
}

/// SL-MPC: minimizes the quadratic-in-(x, Fd) stage cost over the Fd
/// sequence subject to the LTI dynamics and the two passivity
/// constraints, by sequential convexification about the previous
/// iterate's predicted relative velocities.
pub fn slmpc_solve(
    model: &DiscreteSlModel,
    x0: &State,
    preview: &[f64],
    cfg: &MpcConfig,
    warm: Option<&[f64]>,
) -> Result<MpcSolution, MpcError> {
    assert_eq!(
        preview.len(),
        cfg.n,
        "preview length must equal the horizon"
    );
    let n = cfg.n;
    let pred = predict(model, x0, preview);

    // Fd = 0 is always feasible (both passivity constraints hold with
    // equality); it doubles as the fallback
    let mut best = DVector::zeros(n);
    enforce_passivity(model, x0, preview, &mut best, cfg.ce_max);
    let mut best_cost = sl_true_cost(&pred, &best, cfg);

    // The bilinear program is nonconvex, so the sequential convexification
    // only finds a local fixed point near its starting trajectory. A small
    // set of qualitatively different starts (previous solution shifted,
    // maximum-damping, zero-damping, and the two alternating bang
    // patterns) covers the vertex structure the power objective favours.
    let mut starts: Vec<DVector<f64>> = Vec::new();
    if let (true, Some(w)) = (cfg.warm_start, warm) {
        if w.len() == n {
            starts.push(DVector::from_column_slice(w));
        }
    }
    starts.push(DVector::zeros(n));
    starts.push(DVector::from_element(n, f64::MAX));

    // The true objective is quadratic in Fd:
    //   J = ts·α1·‖M_acc Fd + c_acc‖² − ts·α2·(Fdᵀ M_z Fd + c_zᵀ Fd).
    // Split the indefinite power curvature P = ts·α2·(M_z + M_zᵀ)/2 into
    // P⁺ − P⁻ by eigenvalue sign; the −Fdᵀ P⁺ Fd part is concave and gets
    // linearized about the iterate, the +Fdᵀ P⁻ Fd part is convex and is
    // kept exactly. Each subproblem is then a convex QP whose solution
    // majorizes a descent step of the true objective (convex–concave
    // procedure), rather than a bare first-order surrogate.
    let p_sym = (&pred.m_z + pred.m_z.transpose()) * (0.5 * cfg.ts * cfg.alpha2);
    let eig = p_sym.clone().symmetric_eigen();
    let mut p_plus = DMatrix::zeros(n, n);
    let mut p_minus = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let outer = &v * v.transpose() * lam.abs();
        if lam >= 0.0 {
            p_plus += outer;
        } else {
            p_minus += outer;
        }
    }

    // convex Hessian: acceleration tracking plus the convex power part
    let h = pred.m_acc.transpose() * &pred.m_acc * (2.0 * cfg.ts * cfg.alpha1) + &p_minus * 2.0;
    let lip = h.clone().symmetric_eigen().eigenvalues.max().max(1e-12);

    let mut rounds = 0;
    for mut fd in starts {
        enforce_passivity(model, x0, preview, &mut fd, cfg.ce_max);
        for _round in 0..cfg.convex_rounds {
            rounds += 1;
            let z_hat = &pred.m_z * &fd + &pred.c_z;
            // per-step boxes from the frozen relative velocities
            let mut lo = vec![0.0; n];
            let mut hi = vec![0.0; n];
            for k in 0..n {
                if z_hat[k] >= 0.0 {
                    hi[k] = cfg.ce_max * z_hat[k];
                } else {
                    lo[k] = cfg.ce_max * z_hat[k];
                }
            }
            // linear term: tracking part, the linear power coefficient, and
            // the linearized concave curvature −2·P⁺·F̂d
            let g_quad = pred.m_acc.transpose() * &pred.c_acc * (2.0 * cfg.ts * cfg.alpha1);
            let g_pow = &pred.c_z * (-cfg.ts * cfg.alpha2) - &p_plus * &fd * 2.0;
            let g0 = g_quad + g_pow;

            // projected gradient on the convex subproblem
            let mut y = fd.clone();
            let step = 1.0 / lip;
            for _ in 0..cfg.qp_iters {
                let grad = &h * &y + &g0;
                let mut moved = 0.0;
                for k in 0..n {
                    let cand = (y[k] - step * grad[k]).clamp(lo[k], hi[k]);
                    moved += (cand - y[k]).abs();
                    y[k] = cand;
                }
                if moved <= 1e-14 * (1.0 + y.norm()) {
                    break;
                }
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(MpcError::SubproblemFailure {
                    reason: "non-finite QP iterate".into(),
                });
            }

            // score the candidate on the true bilinear objective, after
            // restoring exact feasibility
            let mut cand = y.clone();
            enforce_passivity(model, x0, preview, &mut cand, cfg.ce_max);
            let c = sl_true_cost(&pred, &cand, cfg);
            if c < best_cost {
                best_cost = c;
                best = cand;
            }
            let delta = (&y - &fd).norm();
            fd = y;
            if delta <= 1e-12 * (1.0 + fd.norm()) {
                break;
            }
        }
    }

    // recovered damping coefficients along the predicted trajectory
    let mut u = Vec::with_capacity(n);
    let mut x = Vector6::from_column_slice(&x0.to_array());
    for k in 0..n {
        let z = (model.z_row * x)[0];
        u.push(recover_u(best[k], z, cfg.ce_max));
        x = model.ad * x + model.bd * best[k] + model.dd * preview[k];
    }
    let status = if best.iter().all(|v| *v == 0.0) && best_cost >= 0.0 && cfg.alpha2 > 0.0 {
        SolverStatus::Fallback
    } else {
        SolverStatus::Converged
    };
    Ok(MpcSolution {
        u,
        fd: best.iter().copied().collect(),
        cost: best_cost,
        iterations: rounds,
        status,
    })
}

/// Recovers the damping coefficient from a damping force:
/// u = Fd/(x4 − x2) clipped to [0, ce_max]; zero when the relative
/// velocity is negligible.
pub fn recover_u(fd: f64, rel_vel: f64, ce_max: f64) -> f64 {
    if rel_vel.abs() < EPS_REL {
        0.0
    } else {
        (fd / rel_vel).clamp(0.0, ce_max)
    }
}

/// The control law run inside the closed loop.
pub enum Controller<'a> {
    /// Constant damping coefficient.
    Passive(f64),
    Nmpc(MpcConfig),
    SlMpc {
        cfg: MpcConfig,
        model: &'a DiscreteSlModel,
    },
}

/// Closed-loop options: how the controller sees the road, and whether an
/// observer supplies the LRDE estimate.
pub struct ClosedLoopOptions {
    pub mode: PreviewMode,
    /// When set, an HGO tracks the plant and its ŵ feeds LRDE preview.
    pub observer: Option<HgoConfig>,
    /// LRDE without an observer: hold the true last road sample instead
    /// of the estimate (comparison mode).
    pub true_last_sample: bool,
}

impl Default for ClosedLoopOptions {
    fn default() -> Self {
        ClosedLoopOptions {
            mode: PreviewMode::Perfect,
            observer: None,
            true_last_sample: false,
        }
    }
}

/// Result of one closed-loop run.
pub struct ClosedLoopResult {
    pub trajectory: Trajectory,
    pub metrics: Metrics,
    /// Wall-clock milliseconds normalized per 1000 closed-loop steps.
    pub wall_ms_per_1000: f64,
    pub mean_iterations: f64,
    /// Road estimate track (observer runs), aligned with trajectory samples.
    pub w_hat: Vec<f64>,
}

/// Receding-horizon loop: at each step build the preview, solve, apply
/// the first control to the nonlinear plant, advance. The trajectory has
/// the same shape as [`sim::integrate`]'s (n + 1 samples).
pub fn closed_loop(
    p: &SuspensionParams,
    x0: State,
    controller: &Controller,
    signal: &RoadSignal,
    opts: &ClosedLoopOptions,
    duration: f64,
) -> Result<ClosedLoopResult, MpcError> {
    let ts = signal.model.ts;
    let steps = (duration / ts).round() as usize;
    let horizon = match controller {
        Controller::Passive(_) => 0,
        Controller::Nmpc(cfg) => cfg.n,
        Controller::SlMpc { cfg, .. } => cfg.n,
    };
    if steps + horizon >= signal.len() {
        return Err(MpcError::Road(crate::error::RoadError::IndexOutOfRange {
            start: 0,
            end: steps + horizon,
            len: signal.len(),
        }));
    }
    let noise = match opts.mode {
        PreviewMode::Noisy { snr_db } => Some(PreviewNoise::new(signal, snr_db, signal.model.seed)),
        _ => None,
    };

    let plant = IpvaPlant { params: *p };
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        disturbances: Vec::with_capacity(steps + 1),
        accelerations: Vec::with_capacity(steps + 1),
        powers: Vec::with_capacity(steps + 1),
    };
    let mut w_hat_track = Vec::with_capacity(steps + 1);

    let mut x = x0;
    let mut warm: Option<Vec<f64>> = None;
    let mut obs = HgoState::default();
    let mut y_prev = Measurements::from_state(&x0);
    let mut w_hat = 0.0;
    let mut iter_sum = 0.0;
    let mut iter_count = 0usize;

    let t_start = Instant::now();
    for k in 0..=steps {
        let w = signal.samples[k];
        let u = match controller {
            Controller::Passive(ce) => *ce,
            Controller::Nmpc(cfg) => {
                let pv = road::preview(signal, k, cfg.n, opts.mode, w_hat, noise.as_ref())?;
                let sol = nmpc_solve(p, &x, &pv, cfg, warm.as_deref()).map_err(|e| {
                    MpcError::ClosedLoop {
                        step: k,
                        source: Box::new(e),
                    }
                })?;
                iter_sum += sol.iterations as f64;
                iter_count += 1;
                let mut next = sol.u.clone();
                next.rotate_left(1);
                if let Some(last) = next.last_mut() {
                    *last = sol.u[cfg.n - 1];
                }
                warm = Some(next);
                sol.u[0]
            }
            Controller::SlMpc { cfg, model } => {
                let pv = road::preview(signal, k, cfg.n, opts.mode, w_hat, noise.as_ref())?;
                let sol = slmpc_solve(model, &x, &pv, cfg, warm.as_deref()).map_err(|e| {
                    MpcError::ClosedLoop {
                        step: k,
                        source: Box::new(e),
                    }
                })?;
                iter_sum += sol.iterations as f64;
                iter_count += 1;
                let mut next = sol.fd.clone();
                next.rotate_left(1);
                if let Some(last) = next.last_mut() {
                    *last = sol.fd[cfg.n - 1];
                }
                warm = Some(next);
                recover_u(sol.fd[0], x.relative_velocity(), cfg.ce_max)
            }
        };

        let d = plant.deriv(&x, u, w).map_err(MpcError::Sim)?;
        traj.times.push(k as f64 * ts);
        traj.states.push(x);
        traj.controls.push(u);
        traj.disturbances.push(w);
        traj.accelerations.push(plant.sprung_acceleration(&d));
        traj.powers.push(plant.power(&x, u));
        w_hat_track.push(w_hat);
        if k == steps {
            break;
        }

        x = sim::rk4_step(&plant, &x, u, w, ts).map_err(MpcError::Sim)?;
        if !x.is_finite() {
            return Err(MpcError::Sim(crate::error::SimError::NonFiniteState {
                t: (k + 1) as f64 * ts,
            }));
        }

        // observer tracks the plant one sample behind the controller
        if let Some(cfg_obs) = &opts.observer {
            let y_now = Measurements::from_state(&x);
            obs = hgo_advance(&obs, &y_prev, &y_now, cfg_obs, k)?;
            y_prev = y_now;
            match observer::estimate_disturbance(p, &obs, u) {
                Ok(est) => w_hat = est,
                Err(crate::error::ObserverError::DegenerateInversion { .. }) => {}
                Err(e) => {
                    return Err(MpcError::ClosedLoop {
                        step: k,
                        source: Box::new(MpcError::SubproblemFailure {
                            reason: e.to_string(),
                        }),
                    })
                }
            }
        } else if opts.true_last_sample {
            w_hat = signal.samples[k + 1];
        }
    }
    let wall = t_start.elapsed().as_secs_f64() * 1e3;

    let metrics = sim::metrics(&traj).map_err(MpcError::Sim)?;
    Ok(ClosedLoopResult {
        metrics,
        wall_ms_per_1000: wall / (steps.max(1) as f64) * 1000.0,
        mean_iterations: if iter_count > 0 {
            iter_sum / iter_count as f64
        } else {
            0.0
        },
        w_hat: w_hat_track,
        trajectory: traj,
    })
}

fn hgo_advance(
    obs: &HgoState,
    y_prev: &Measurements,
    y_now: &Measurements,
    cfg: &HgoConfig,
    step: usize,
) -> Result<HgoState, MpcError> {
    observer::hgo_step(obs, y_prev, y_now, cfg).map_err(|e| MpcError::ClosedLoop {
        step,
        source: Box::new(MpcError::SubproblemFailure {
            reason: e.to_string(),
        }),
    })
}
