//! Grid-search Pareto design optimization of the absorber geometry and
//! electrical damping, plus the closed-form benchmark oracle.

use rayon::prelude::*;

use crate::error::DesignError;
use crate::params::{State, SuspensionParams};
use crate::road::{generate, RoadModel};
use crate::sim::{integrate, metrics_with_skip, BenchmarkPlant, IpvaPlant, Metrics};

/// A candidate absorber design: pin radius, pendulum length and electrical
/// damping coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignPoint {
    pub rp: f64,
    pub r: f64,
    pub ce: f64,
}

/// Feasibility box for the dimensionless design variables.
pub const ETA_MIN: f64 = 0.5;
pub const ETA_MAX: f64 = 0.9;
pub const MU_R_MIN: f64 = 0.05;
pub const MU_R_MAX: f64 = 0.2;
pub const XI_E_MAX: f64 = 1.0;

impl DesignPoint {
    /// Pendulum-length ratio η = r / Rp.
    pub fn eta(&self) -> f64 {
        self.r / self.rp
    }

    /// Inertance ratio μr = m·Rp² / (Ms·R²).
    pub fn mu_r(&self, p: &SuspensionParams) -> f64 {
        p.m * self.rp * self.rp / (p.ms * p.r_screw * p.r_screw)
    }

    /// Electrical damping ratio ξe = ce / (2·ω0·Ms·R²).
    pub fn xi_e(&self, p: &SuspensionParams) -> f64 {
        self.ce / (2.0 * p.omega0() * p.ms * p.r_screw * p.r_screw)
    }

    /// Checks the design box 0.5 < η < 0.9, 0.05 < μr < 0.2, ξe < 1.
    pub fn validate(&self, p: &SuspensionParams) -> Result<(), DesignError> {
        let eta = self.eta();
        if !(ETA_MIN..=ETA_MAX).contains(&eta) {
            return Err(DesignError::ConstraintViolation {
                reason: format!("eta = {eta:.4} outside [{ETA_MIN}, {ETA_MAX}]"),
            });
        }
        let mu = self.mu_r(p);
        if !(MU_R_MIN..=MU_R_MAX).contains(&mu) {
            return Err(DesignError::ConstraintViolation {
                reason: format!("mu_r = {mu:.4} outside [{MU_R_MIN}, {MU_R_MAX}]"),
            });
        }
        let xi = self.xi_e(p);
        if !(0.0..=XI_E_MAX).contains(&xi) {
            return Err(DesignError::ConstraintViolation {
                reason: format!("xi_e = {xi:.4} outside [0, {XI_E_MAX}]"),
            });
        }
        Ok(())
    }

    /// Base parameters with this design's geometry and nominal damping
    /// substituted in.
    pub fn apply(&self, base: &SuspensionParams) -> SuspensionParams {
        SuspensionParams {
            rp: self.rp,
            r: self.r,
            ..*base
        }
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, Copy)]
pub struct EvaluatedPoint {
    pub design: DesignPoint,
    pub metrics: Metrics,
    pub on_front: bool,
}

/// Result of a grid search: every evaluated point, with non-dominated
/// members flagged and the front extractable sorted by comfort.
#[derive(Debug, Clone)]
pub struct ParetoResult {
    pub points: Vec<EvaluatedPoint>,
}

impl ParetoResult {
    /// Front members sorted by ascending RMS acceleration.
    pub fn front(&self) -> Vec<EvaluatedPoint> {
        let mut f: Vec<EvaluatedPoint> =
            self.points.iter().copied().filter(|p| p.on_front).collect();
        f.sort_by(|a, b| a.metrics.rms_accel.total_cmp(&b.metrics.rms_accel));
        f
    }
}

/// Flags the non-dominated subset in the (−avg_power, rms_accel) plane.
/// A point is dominated when another is at least as good on both axes and
/// strictly better on one.
pub fn pareto_flags(metrics: &[Metrics]) -> Vec<bool> {
    metrics
        .iter()
        .map(|a| {
            !metrics.iter().any(|b| {
                b.avg_power >= a.avg_power
                    && b.rms_accel <= a.rms_accel
                    && (b.avg_power > a.avg_power || b.rms_accel < a.rms_accel)
            })
        })
        .collect()
}

/// Samples to drop before computing metrics (transient washout).
fn transient_skip(road: &RoadModel, duration: f64) -> usize {
    // drop the first 10% of the run, capped at 60 s
    let skip_s = (0.1 * duration).min(60.0);
    (skip_s / road.ts).round() as usize
}

/// Monte-Carlo average of passive nonlinear-plant metrics over a common
/// seed set.
pub fn evaluate_design(
    base: &SuspensionParams,
    d: DesignPoint,
    road: &RoadModel,
    seeds: &[u64],
    duration: f64,
) -> Result<Metrics, DesignError> {
    d.validate(base)?;
    let p = d.apply(base);
    average_runs(seeds, |seed| {
        let signal = generate(&RoadModel { seed, ..*road }, duration);
        let plant = IpvaPlant { params: p };
        let traj = integrate(&plant, State::zero(), |_, _| d.ce, &signal, duration)
            .map_err(|e| DesignError::Sim(e))?;
        metrics_with_skip(&traj, transient_skip(road, duration)).map_err(|e| DesignError::Sim(e))
    })
}

/// Passive linear-benchmark metrics averaged over the same seed protocol.
pub fn evaluate_benchmark(
    base: &SuspensionParams,
    ce: f64,
    road: &RoadModel,
    seeds: &[u64],
    duration: f64,
) -> Result<Metrics, DesignError> {
    average_runs(seeds, |seed| {
        let signal = generate(&RoadModel { seed, ..*road }, duration);
        let plant = BenchmarkPlant { params: *base };
        let traj = integrate(&plant, State::zero(), |_, _| ce, &signal, duration)
            .map_err(|e| DesignError::Sim(e))?;
        metrics_with_skip(&traj, transient_skip(road, duration)).map_err(|e| DesignError::Sim(e))
    })
}

fn average_runs(
    seeds: &[u64],
    run: impl Fn(u64) -> Result<Metrics, DesignError> + Sync,
) -> Result<Metrics, DesignError> {
    if seeds.is_empty() {
        return Err(DesignError::ConstraintViolation {
            reason: "empty seed set".into(),
        });
    }
    // ordered collect keeps the reduction deterministic under parallelism
    let per_seed: Result<Vec<Metrics>, DesignError> = seeds.par_iter().map(|&s| run(s)).collect();
    let per_seed = per_seed?;
    let n = per_seed.len() as f64;
    Ok(Metrics {
        avg_power: per_seed.iter().map(|m| m.avg_power).sum::<f64>() / n,
        rms_accel: per_seed.iter().map(|m| m.rms_accel).sum::<f64>() / n,
    })
}

/// Regular grid over the design box.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub rp: Vec<f64>,
    pub r: Vec<f64>,
    pub ce: Vec<f64>,
}

impl GridSpec {
    /// Default grid: `n` points per axis spanning the feasible box for the
    /// given base parameters (η and μr limits intersected).
    pub fn default_box(base: &SuspensionParams, n: usize) -> Self {
        let msr2 = base.ms * base.r_screw * base.r_screw;
        let rp_lo = (MU_R_MIN * msr2 / base.m).sqrt();
        let rp_hi = (MU_R_MAX * msr2 / base.m).sqrt();
        let ce_hi = XI_E_MAX * 2.0 * base.omega0() * msr2;
        let lin = |lo: f64, hi: f64| -> Vec<f64> {
            // shrink in from the open-box edges
            let pad = (hi - lo) * 0.02;
            let (lo, hi) = (lo + pad, hi - pad);
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64)
                .collect()
        };
        GridSpec {
            rp: lin(rp_lo, rp_hi),
            r: lin(ETA_MIN, ETA_MAX), // stored as η, expanded per rp below
            ce: lin(0.0, ce_hi.min(base.ce_max)),
        }
    }
}

/// Evaluates every feasible grid point (the `r` axis is interpreted as η
/// when it lies inside the η box, letting one grid cover all `rp`) and
/// extracts the Pareto front.
pub fn grid_search(
    base: &SuspensionParams,
    grid: &GridSpec,
    road: &RoadModel,
    seeds: &[u64],
    duration: f64,
) -> Result<ParetoResult, DesignError> {
    let eta_axis = grid.r.iter().all(|&v| (ETA_MIN..=ETA_MAX).contains(&v));
    let mut designs = Vec::new();
    for &rp in &grid.rp {
        for &rv in &grid.r {
            let r = if eta_axis { rv * rp } else { rv };
            for &ce in &grid.ce {
                let d = DesignPoint { rp, r, ce };
                if d.validate(base).is_ok() {
                    designs.push(d);
                }
            }
        }
    }
    let evaluated: Result<Vec<(DesignPoint, Metrics)>, DesignError> = designs
        .iter()
        .map(|&d| evaluate_design(base, d, road, seeds, duration).map(|m| (d, m)))
        .collect();
    let evaluated = evaluated?;
    let flags = pareto_flags(&evaluated.iter().map(|(_, m)| *m).collect::<Vec<_>>());
    Ok(ParetoResult {
        points: evaluated
            .into_iter()
            .zip(flags)
            .map(|((design, metrics), on_front)| EvaluatedPoint {
                design,
                metrics,
                on_front,
            })
            .collect(),
    })
}

/// One-dimensional search over the benchmark's electrical damping.
pub fn linear_benchmark_optimum(
    base: &SuspensionParams,
    ce_grid: &[f64],
    road: &RoadModel,
    seeds: &[u64],
    duration: f64,
) -> Result<ParetoResult, DesignError> {
    let evaluated: Result<Vec<(f64, Metrics)>, DesignError> = ce_grid
        .iter()
        .map(|&ce| evaluate_benchmark(base, ce, road, seeds, duration).map(|m| (ce, m)))
        .collect();
    let evaluated = evaluated?;
    let flags = pareto_flags(&evaluated.iter().map(|(_, m)| *m).collect::<Vec<_>>());
    Ok(ParetoResult {
        points: evaluated
            .into_iter()
            .zip(flags)
            .map(|((ce, metrics), on_front)| EvaluatedPoint {
                design: DesignPoint {
                    rp: 0.0,
                    r: 0.0,
                    ce,
                },
                metrics,
                on_front,
            })
            .collect(),
    })
}

/// Closed-form stationary average power and RMS sprung-mass acceleration
/// of the linear benchmark with the road cutoff taken to zero.
///
/// Power: `P = ce·π·V·Gr·kt / (ce + R²·cm)`. The acceleration variance is
/// the H2 norm of the acceleration-over-road-velocity transfer function
/// against white velocity noise of intensity `2π·Gr·V`, reduced to a
/// polynomial in `R²`.
pub fn closed_form_linear(
    p: &SuspensionParams,
    ce: f64,
    road: &RoadModel,
) -> Result<(f64, f64), DesignError> {
    let r2 = p.r_screw * p.r_screw;
    let denom = ce + r2 * p.cm;
    if denom == 0.0 {
        return Err(DesignError::DivisionByZero);
    }
    let gv = road.gr * road.v;
    let power = ce * std::f64::consts::PI * gv * p.kt / denom;

    let (ms, mus, ks, kt, cm, jr) = (p.ms, p.mus, p.ks, p.kt, p.cm, p.j_rotor);
    let m = ms + mus;
    let c = r2 * ms * ms * denom * (jr * m + r2 * ms * mus);
    let a0 = jr * kt * ce * ce * m + jr.powi(3) * kt * kt;
    let a1 = 2.0 * ce * cm * jr * m * kt + ce * ce * ms * mus * kt + jr * jr * kt * kt * ms
        - 2.0 * jr * jr * ks * m * kt;
    let a2 = 2.0 * ce * cm * kt * ms * mus + cm * cm * jr * kt * m + ks * ks * jr * m * m
        - 2.0 * kt * ks * jr * ms * mus;
    let a3 = ms * mus * cm * cm * kt + ks * ks * ms * mus * m;
    let var = std::f64::consts::PI * gv / c * (a0 + a1 * r2 + a2 * r2 * r2 + a3 * r2 * r2 * r2);
    if var < 0.0 {
        return Err(DesignError::ConstraintViolation {
            reason: format!("negative acceleration variance {var}"),
        });
    }
    Ok((power, var.sqrt()))
}

/// Pareto point 3 geometry from the front (the documented best trade-off).
pub fn point3() -> DesignPoint {
    DesignPoint {
        rp: 0.117,
        r: 0.0897,
        ce: 0.225,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> SuspensionParams {
        SuspensionParams::table1()
    }

    #[test]
    fn point3_is_feasible() {
        point3().validate(&base()).unwrap();
    }

    #[test]
    fn box_violations_are_reported() {
        let p = base();
        let bad_eta = DesignPoint {
            rp: 0.117,
            r: 0.04,
            ce: 0.1,
        };
        assert!(bad_eta.validate(&p).is_err());
        let bad_xi = DesignPoint {
            ce: 10.0,
            ..point3()
        };
        assert!(bad_xi.validate(&p).is_err());
    }

    #[test]
    fn pareto_flag_cases() {
        let both = pareto_flags(&[
            Metrics {
                avg_power: 1.0,
                rms_accel: 1.0,
            },
            Metrics {
                avg_power: 2.0,
                rms_accel: 0.5,
            },
        ]);
        assert_eq!(both, vec![false, true]);
        let tie = pareto_flags(&[
            Metrics {
                avg_power: 1.0,
                rms_accel: 1.0,
            },
            Metrics {
                avg_power: 2.0,
                rms_accel: 1.0,
            },
        ]);
        assert_eq!(tie, vec![false, true]);
        let incomparable = pareto_flags(&[
            Metrics {
                avg_power: 1.0,
                rms_accel: 0.5,
            },
            Metrics {
                avg_power: 2.0,
                rms_accel: 1.0,
            },
        ]);
        assert_eq!(incomparable, vec![true, true]);
    }

    #[test]
    fn zero_ce_harvests_nothing() {
        let d = DesignPoint {
            ce: 0.0,
            ..point3()
        };
        let m = evaluate_design(&base(), d, &RoadModel::default(), &[1, 2], 20.0).unwrap();
        assert_eq!(m.avg_power, 0.0);
        assert!(m.rms_accel > 0.0);
    }

    #[test]
    fn evaluation_is_seed_deterministic() {
        let d = point3();
        let road = RoadModel::default();
        let a = evaluate_design(&base(), d, &road, &[3, 4, 5], 15.0).unwrap();
        let b = evaluate_design(&base(), d, &road, &[3, 4, 5], 15.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn closed_form_reduces_when_motor_losses_vanish() {
        let p = SuspensionParams { cm: 0.0, ..base() };
        let road = RoadModel::default();
        let (power, _) = closed_form_linear(&p, 0.225, &road).unwrap();
        assert_relative_eq!(
            power,
            std::f64::consts::PI * road.v * road.gr * p.kt,
            max_relative = 1e-12
        );
    }

    #[test]
    fn closed_form_scales_with_speed() {
        let p = base();
        let r1 = RoadModel::default();
        let r2 = RoadModel {
            v: 2.0 * r1.v,
            ..r1
        };
        let (p1, s1) = closed_form_linear(&p, 0.225, &r1).unwrap();
        let (p2, s2) = closed_form_linear(&p, 0.225, &r2).unwrap();
        assert_relative_eq!(p2, 2.0 * p1, max_relative = 1e-12);
        assert_relative_eq!(s2, 2.0f64.sqrt() * s1, max_relative = 1e-12);
    }

    #[test]
    fn closed_form_rejects_degenerate_damping() {
        let p = SuspensionParams { cm: 0.0, ..base() };
        assert!(closed_form_linear(&p, 0.0, &RoadModel::default()).is_err());
    }

    #[test]
    fn default_grid_points_are_feasible() {
        let p = base();
        let g = GridSpec::default_box(&p, 4);
        for &rp in &g.rp {
            for &eta in &g.r {
                for &ce in &g.ce {
                    let d = DesignPoint {
                        rp,
                        r: eta * rp,
                        ce,
                    };
                    d.validate(&p).unwrap();
                }
            }
        }
    }

    #[test]
    fn front_extraction_is_order_independent() {
        let ms = [
            Metrics {
                avg_power: 1.0,
                rms_accel: 1.0,
            },
            Metrics {
                avg_power: 3.0,
                rms_accel: 2.0,
            },
            Metrics {
                avg_power: 2.0,
                rms_accel: 0.5,
            },
        ];
        let fwd = pareto_flags(&ms);
        let mut rev = ms;
        rev.reverse();
        let mut back = pareto_flags(&rev);
        back.reverse();
        assert_eq!(fwd, back);
    }
}
