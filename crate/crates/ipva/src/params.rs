//! Physical parameterization of the IPVA-integrated quarter car.
//!
//! All quantities are SI. The screw radius `r_screw` is the ball-screw
//! transmission radius `L / 2π` relating suspension deflection to screw
//! rotation through `x_s − x_us = R θ`.

use crate::error::ModelError;

/// Physical constants of the quarter car plus the inerter-pendulum
/// vibration absorber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuspensionParams {
    /// Sprung mass (kg).
    pub ms: f64,
    /// Unsprung mass (kg).
    pub mus: f64,
    /// Suspension stiffness (N/m).
    pub ks: f64,
    /// Tire stiffness (N/m).
    pub kt: f64,
    /// Mechanical viscous damping (N·s/m), acting through R².
    pub cm: f64,
    /// Screw transmission radius L/2π (m).
    pub r_screw: f64,
    /// Pendulum mass (kg).
    pub m: f64,
    /// Carrier radius: distance from screw axis to pendulum pivot (m).
    pub rp: f64,
    /// Pendulum length (m).
    pub r: f64,
    /// Carrier inertia (kg·m²).
    pub j_carrier: f64,
    /// Pendulum inertia (kg·m²).
    pub j_pendulum: f64,
    /// Generator rotor inertia (kg·m²).
    pub j_rotor: f64,
    /// Optional pendulum restoring stiffness (N·m/rad). Defaults to zero.
    pub kp: f64,
    /// Maximum electrical damping available to the controller (N·s·m).
    pub ce_max: f64,
}

/// Physical ceiling on the electrical damping coefficient (N·s·m) set by
/// generator internal resistance; defines the `ξe < 1` design constraint.
pub const CE_PHYSICAL_MAX: f64 = 7.2;

impl SuspensionParams {
    /// The simulation parameter set of the reference design: 250 kg sprung
    /// mass, 35 kg unsprung, 55 kN/m suspension and 150 kN/m tire
    /// stiffness, 2.5 kg pendulum, rotor inertia 1.21e-4 kg·m².
    ///
    /// The screw radius is calibrated so that the maximum physical
    /// electrical damping of 7.2 N·s·m corresponds to ξe = 1; this also
    /// places the two natural frequencies of the linear benchmark at
    /// 0.85·ω0 and 5.18·ω0.
    pub fn table1() -> Self {
        let ms = 250.0;
        let ks = 55_000.0;
        let mut p = SuspensionParams {
            ms,
            mus: 35.0,
            ks,
            kt: 150_000.0,
            cm: 200.0,
            r_screw: 0.0,
            m: 2.5,
            rp: 0.117,
            r: 0.0897,
            j_carrier: 0.0,
            j_pendulum: 0.0,
            j_rotor: 0.000121,
            kp: 0.0,
            ce_max: 0.225,
        };
        p.r_screw = calibrate_screw_radius(ms, ks, CE_PHYSICAL_MAX);
        p
    }

    /// Undamped sprung-mass natural frequency ω0 = √(ks/Ms) (rad/s).
    pub fn omega0(&self) -> f64 {
        (self.ks / self.ms).sqrt()
    }

    /// Dimensionless pendulum length η = r/Rp.
    pub fn eta(&self) -> f64 {
        self.r / self.rp
    }

    /// Dimensionless pendulum inertia ratio μr = m·Rp²/(Ms·R²).
    pub fn mu_r(&self) -> f64 {
        self.m * self.rp * self.rp / (self.ms * self.r_screw * self.r_screw)
    }

    /// Dimensionless electrical damping ξe = ce/(2·ω0·Ms·R²).
    pub fn xi_e(&self, ce: f64) -> f64 {
        ce / (2.0 * self.omega0() * self.ms * self.r_screw * self.r_screw)
    }

    /// Checks positivity/sign invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("ms", self.ms),
            ("mus", self.mus),
            ("ks", self.ks),
            ("kt", self.kt),
            ("r_screw", self.r_screw),
            ("m", self.m),
            ("rp", self.rp),
            ("r", self.r),
            ("ce_max", self.ce_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be strictly positive",
                });
            }
        }
        let nonneg = [
            ("cm", self.cm),
            ("j_carrier", self.j_carrier),
            ("j_pendulum", self.j_pendulum),
            ("j_rotor", self.j_rotor),
            ("kp", self.kp),
        ];
        for (name, v) in nonneg {
            if v < 0.0 || !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be non-negative",
                });
            }
        }
        Ok(())
    }
}

/// Calibrates the screw transmission radius from the ξe convention:
/// the physical ceiling `ce_phys_max` on electrical damping corresponds
/// to ξe = 1, i.e. R = √(ce_phys_max / (2·ω0·Ms)).
///
/// For the reference masses and stiffnesses this yields R ≈ 0.03116 m and
/// linear-benchmark natural frequencies of 0.851·ω0 and 5.176·ω0.
pub fn calibrate_screw_radius(ms: f64, ks: f64, ce_phys_max: f64) -> f64 {
    let omega0 = (ks / ms).sqrt();
    (ce_phys_max / (2.0 * omega0 * ms)).sqrt()
}

/// State of the six-dimensional nonlinear plant:
/// screw angle θ and rate, pendulum angle φ and rate, unsprung
/// displacement and velocity. The pendulum angle is continuous (never
/// wrapped).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    /// θ, screw angle (rad).
    pub theta: f64,
    /// θ̇ (rad/s).
    pub theta_dot: f64,
    /// φ, pendulum angle (rad).
    pub phi: f64,
    /// φ̇ (rad/s).
    pub phi_dot: f64,
    /// x_us, unsprung displacement (m).
    pub x_us: f64,
    /// ẋ_us (m/s).
    pub x_us_dot: f64,
}

impl State {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        State {
            theta: a[0],
            theta_dot: a[1],
            phi: a[2],
            phi_dot: a[3],
            x_us: a[4],
            x_us_dot: a[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [
            self.theta,
            self.theta_dot,
            self.phi,
            self.phi_dot,
            self.x_us,
            self.x_us_dot,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Relative rotor velocity x4 − x2 = φ̇ − θ̇ seen by the generator.
    pub fn relative_velocity(&self) -> f64 {
        self.phi_dot - self.theta_dot
    }
}

impl std::ops::Add for State {
    type Output = State;
    fn add(self, o: State) -> State {
        let a = self.to_array();
        let b = o.to_array();
        State::from_array([
            a[0] + b[0],
            a[1] + b[1],
            a[2] + b[2],
            a[3] + b[3],
            a[4] + b[4],
            a[5] + b[5],
        ])
    }
}

impl std::ops::Mul<f64> for State {
    type Output = State;
    fn mul(self, s: f64) -> State {
        let a = self.to_array();
        State::from_array([a[0] * s, a[1] * s, a[2] * s, a[3] * s, a[4] * s, a[5] * s])
    }
}

/// Control input in one of the two formulations used by the controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlInput {
    /// Electrical damping coefficient c_e (N·s·m), constrained to
    /// `[0, ce_max]`.
    ElectricalDamping(f64),
    /// Generator damping torque F_d (N·m). Passivity requires
    /// `Fd·(x4 − x2) ≥ 0` and `|Fd| ≤ ce_max·|x4 − x2|`.
    DampingForce(f64),
}

impl ControlInput {
    /// Resolves to an electrical damping coefficient at the given relative
    /// velocity, clipping to `[0, ce_max]`. Near-zero relative velocity
    /// transmits no damping power regardless of u, so it maps to u = 0.
    pub fn as_damping(self, relative_velocity: f64, ce_max: f64, eps_rel: f64) -> f64 {
        match self {
            ControlInput::ElectricalDamping(u) => u.clamp(0.0, ce_max),
            ControlInput::DampingForce(fd) => {
                if relative_velocity.abs() < eps_rel {
                    0.0
                } else {
                    (fd / relative_velocity).clamp(0.0, ce_max)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn table1_is_valid() {
        let p = SuspensionParams::table1();
        p.validate().unwrap();
        assert_relative_eq!(p.omega0(), (55_000.0f64 / 250.0).sqrt());
    }

    #[test]
    fn calibrated_radius_matches_xi_e_convention() {
        let p = SuspensionParams::table1();
        assert_relative_eq!(p.xi_e(CE_PHYSICAL_MAX), 1.0, max_relative = 1e-12);
        assert_relative_eq!(p.r_screw, 0.031158430672, max_relative = 1e-9);
    }

    #[test]
    fn dimensionless_quantities_of_reference_design() {
        let p = SuspensionParams::table1();
        // Pareto point 3 sits inside the design box.
        let eta = p.eta();
        let mu = p.mu_r();
        assert!(0.5 < eta && eta < 0.9, "eta = {eta}");
        assert!(0.05 < mu && mu < 0.2, "mu_r = {mu}");
        assert!(p.xi_e(p.ce_max) < 1.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = SuspensionParams::table1();
        p.ms = -1.0;
        assert!(p.validate().is_err());
        let mut p = SuspensionParams::table1();
        p.cm = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn control_input_resolution() {
        let u = ControlInput::ElectricalDamping(0.1).as_damping(2.0, 0.225, 1e-6);
        assert_relative_eq!(u, 0.1);
        // Fd = 0.1 * rel_vel with rel_vel = 2 recovers u = 0.05.
        let u = ControlInput::DampingForce(0.1).as_damping(2.0, 0.225, 1e-6);
        assert_relative_eq!(u, 0.05);
        // clipping branch
        let u = ControlInput::DampingForce(10.0).as_damping(2.0, 0.225, 1e-6);
        assert_relative_eq!(u, 0.225);
        // zero relative velocity guard
        let u = ControlInput::DampingForce(0.1).as_damping(1e-9, 0.225, 1e-6);
        assert_relative_eq!(u, 0.0);
    }
}
