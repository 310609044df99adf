//! Stochastic linearization of the absorber dynamics, deterministic
//! linearization for comparison, and stabilizability analysis/repair of
//! the resulting LTI pair.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};

use crate::error::SlinError;
use crate::model;
use crate::params::{State, SuspensionParams};
use crate::road::{generate, RoadModel};
use crate::sim::{integrate, IpvaPlant, LtiPlant};

/// Generalized-coordinate form `Ml q̈ + Cl q̇ + Kl q + Φ(q,q̇,q̈) = Q(t)`
/// with q = (θ, φ, x_us). The electrical-damping part of Cl is kept
/// separate so it can become the bilinear control channel.
#[derive(Debug, Clone, Copy)]
pub struct GeneralizedForm {
    pub ml: Matrix3<f64>,
    /// Mechanical (ce-independent) damping.
    pub cl: Matrix3<f64>,
    pub kl: Matrix3<f64>,
}

/// `Cl`'s electrical-damping pattern: `ce · DAMPING_PATTERN` is the part
/// of the damping matrix the controller modulates.
pub fn damping_pattern() -> Matrix3<f64> {
    Matrix3::new(1.0, -1.0, 0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
}

/// Builds the linear part of the generalized form. The cos(φ)-dependent
/// inertia couplings live entirely in Φ, so `ml` is constant.
pub fn generalized_form(p: &SuspensionParams) -> GeneralizedForm {
    let r2 = p.r_screw * p.r_screw;
    let mr2 = p.m * p.r * p.r;
    let ml = Matrix3::new(
        p.ms * r2 + p.j_carrier + p.m * p.rp * p.rp + mr2,
        mr2 + p.j_pendulum,
        p.r_screw * p.ms,
        mr2 + p.j_pendulum,
        mr2 + p.j_pendulum,
        0.0,
        p.r_screw * p.ms,
        0.0,
        p.ms + p.mus,
    );
    let mut cl = Matrix3::zeros();
    cl[(0, 0)] = p.cm * r2;
    let mut kl = Matrix3::zeros();
    kl[(0, 0)] = p.ks * r2;
    kl[(1, 1)] = p.kp;
    kl[(2, 2)] = p.kt;
    GeneralizedForm { ml, cl, kl }
}

/// The nonlinearity vector Φ(q, q̇, q̈). Only the first two components are
/// nonzero.
pub fn phi(
    p: &SuspensionParams,
    q: Vector3<f64>,
    qd: Vector3<f64>,
    qdd: Vector3<f64>,
) -> Vector3<f64> {
    let k = p.m * p.rp * p.r;
    let (s, c) = q[1].sin_cos();
    let (td, pd) = (qd[0], qd[1]);
    let (tdd, pdd) = (qdd[0], qdd[1]);
    Vector3::new(
        2.0 * k * c * tdd + k * c * pdd - 2.0 * k * pd * td * s - k * s * pd * pd,
        k * c * tdd + k * s * td * td,
        0.0,
    )
}

/// Analytic Jacobians of Φ with respect to (q̈, q̇, q), in that order.
pub fn phi_jacobians(
    p: &SuspensionParams,
    q: Vector3<f64>,
    qd: Vector3<f64>,
    qdd: Vector3<f64>,
) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let k = p.m * p.rp * p.r;
    let (s, c) = q[1].sin_cos();
    let (td, pd) = (qd[0], qd[1]);
    let (tdd, pdd) = (qdd[0], qdd[1]);

    let mut d_qdd = Matrix3::zeros();
    d_qdd[(0, 0)] = 2.0 * k * c;
    d_qdd[(0, 1)] = k * c;
    d_qdd[(1, 0)] = k * c;

    let mut d_qd = Matrix3::zeros();
    d_qd[(0, 0)] = -2.0 * k * pd * s;
    d_qd[(0, 1)] = -2.0 * k * td * s - 2.0 * k * s * pd;
    d_qd[(1, 0)] = 2.0 * k * s * td;

    let mut d_q = Matrix3::zeros();
    d_q[(0, 1)] = -2.0 * k * s * tdd - k * s * pdd - 2.0 * k * pd * td * c - k * c * pd * pd;
    d_q[(1, 1)] = -k * s * tdd + k * c * td * td;

    (d_qdd, d_qd, d_q)
}

/// Equivalent linear correction matrices estimated by Monte Carlo over
/// the nonlinear plant's own stationary response.
#[derive(Debug, Clone)]
pub struct SlMatrices {
    pub me: Matrix3<f64>,
    pub ce: Matrix3<f64>,
    pub ke: Matrix3<f64>,
    /// Standard errors of the corresponding entries.
    pub me_se: Matrix3<f64>,
    pub ce_se: Matrix3<f64>,
    pub ke_se: Matrix3<f64>,
    pub n_samples: usize,
}

/// Sample mean and standard error of the mean.
pub fn sample_mean_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean/standard-error accumulator using batch means: trajectory samples
/// are strongly autocorrelated, so iid standard errors would be wildly
/// optimistic. Batches long relative to the correlation time give an
/// honest error bar.
struct Accumulator {
    batch_len: usize,
    current: Matrix3<f64>,
    in_current: usize,
    batches: Vec<Matrix3<f64>>,
}

impl Accumulator {
    fn new(batch_len: usize) -> Self {
        Accumulator {
            batch_len: batch_len.max(1),
            current: Matrix3::zeros(),
            in_current: 0,
            batches: Vec::new(),
        }
    }
    fn push(&mut self, m: &Matrix3<f64>) {
        self.current += m;
        self.in_current += 1;
        if self.in_current == self.batch_len {
            self.batches.push(self.current / self.batch_len as f64);
            self.current = Matrix3::zeros();
            self.in_current = 0;
        }
    }
    fn n(&self) -> usize {
        self.batches.len() * self.batch_len + self.in_current
    }
    fn finish(&self) -> (Matrix3<f64>, Matrix3<f64>) {
        let b = self.batches.len() as f64;
        let mean = self.batches.iter().sum::<Matrix3<f64>>() / b;
        if self.batches.len() < 2 {
            return (mean, Matrix3::from_element(f64::INFINITY));
        }
        let var = self
            .batches
            .iter()
            .map(|m| (m - mean).component_mul(&(m - mean)))
            .sum::<Matrix3<f64>>()
            / (b - 1.0);
        (mean, var.map(|v| (v / b).sqrt()))
    }
}

/// Default stationarity warmup dropped before sampling (s).
pub const SL_WARMUP_DEFAULT: f64 = 60.0;

/// Estimates (Me, Ce, Ke) as sample means of the analytic Φ-Jacobians
/// along a post-warmup nonlinear trajectory under the given road model,
/// with the plant driven passively at `ce_nominal`.
pub fn estimate_sl_matrices(
    p: &SuspensionParams,
    ce_nominal: f64,
    road: &RoadModel,
    n_samples: usize,
    warmup: f64,
    se_tol: f64,
) -> Result<SlMatrices, SlinError> {
    let duration = warmup + n_samples as f64 * road.ts;
    let signal = generate(road, duration);
    let plant = IpvaPlant { params: *p };
    let traj = integrate(&plant, State::zero(), |_, _| ce_nominal, &signal, duration)
        .map_err(SlinError::Sim)?;
    let skip = (warmup / road.ts).round() as usize;

    // ~25 batches, each several correlation times long at Ts = 0.01 s
    let batch_len = ((traj.len() - skip) / 25).max(100);
    let mut acc = [
        Accumulator::new(batch_len),
        Accumulator::new(batch_len),
        Accumulator::new(batch_len),
    ];
    for k in skip..traj.len() {
        let x = &traj.states[k];
        let d = model::dynamics(p, x, traj.controls[k], traj.disturbances[k])
            .map_err(|e| SlinError::Sim(e.into()))?;
        let q = Vector3::new(x.theta, x.phi, x.x_us);
        let qd = Vector3::new(x.theta_dot, x.phi_dot, x.x_us_dot);
        let qdd = Vector3::new(d.theta_dot, d.phi_dot, d.x_us_dot);
        let (jm, jc, jk) = phi_jacobians(p, q, qd, qdd);
        acc[0].push(&jm);
        acc[1].push(&jc);
        acc[2].push(&jk);
    }

    let (me, me_se) = acc[0].finish();
    let (ce, ce_se) = acc[1].finish();
    let (ke, ke_se) = acc[2].finish();
    // standard errors are judged against the scale of the matrix they
    // correct — near-zero-mean entries otherwise never converge
    let gf = generalized_form(p);
    for (mean, se, linear) in [
        (&me, &me_se, &gf.ml),
        (&ce, &ce_se, &gf.cl),
        (&ke, &ke_se, &gf.kl),
    ] {
        let scale = mean.norm() + linear.norm() + 1e-12;
        for i in 0..3 {
            for j in 0..3 {
                if se[(i, j)] > se_tol * scale {
                    return Err(SlinError::NotConverged {
                        i,
                        j,
                        se: se[(i, j)],
                        tol: se_tol * scale,
                        n: acc[0].n(),
                    });
                }
            }
        }
    }
    Ok(SlMatrices {
        me,
        ce,
        ke,
        me_se,
        ce_se,
        ke_se,
        n_samples: acc[0].n(),
    })
}

/// First-order SL model `ẋ = A x + B Fd + D w` in the plant's state
/// ordering (θ, θ̇, φ, φ̇, x_us, ẋ_us), with the damping force
/// `Fd = u(φ̇ − θ̇)` as the input.
#[derive(Debug, Clone)]
pub struct SlStateSpace {
    pub a: Matrix6<f64>,
    pub b: Vector6<f64>,
    pub d: Vector6<f64>,
    pub ce_nominal: f64,
    pub stabilizable: bool,
    pub repair: Option<RepairRecord>,
}

impl SlStateSpace {
    /// Continuous-time plant for simulation; the input is Fd.
    pub fn plant(&self, r_screw: f64) -> LtiPlant {
        LtiPlant {
            a: self.a,
            b: self.b,
            d: self.d,
            r_screw,
        }
    }
}

/// Permutation from block coordinates [q; q̇] to the plant state ordering.
fn block_to_state_permutation() -> Matrix6<f64> {
    // state i ← block j for j in [θ, φ, xus, θ̇, φ̇, ẋus]
    let map = [0usize, 3, 1, 4, 2, 5];
    let mut p = Matrix6::zeros();
    for (i, &j) in map.iter().enumerate() {
        p[(i, j)] = 1.0;
    }
    p
}

/// Assembles the SL state space from the generalized form plus the
/// equivalent correction matrices. The ce-dependent damping is excluded
/// from `A` — it returns through the Fd input channel.
pub fn assemble_sl_statespace(
    p: &SuspensionParams,
    sl: &SlMatrices,
    ce_nominal: f64,
) -> Result<SlStateSpace, SlinError> {
    let gf = generalized_form(p);
    let m = gf.ml + sl.me;
    let c = gf.cl + sl.ce;
    let k = gf.kl + sl.ke;

    let svd = m.svd(false, false);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    let rcond = smin / smax;
    if !(rcond > 1e-12) {
        return Err(SlinError::SingularInertia { rcond });
    }
    let m_inv = m
        .try_inverse()
        .ok_or(SlinError::SingularInertia { rcond })?;

    let mut a_blk = Matrix6::zeros();
    a_blk
        .fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&Matrix3::identity());
    a_blk.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-m_inv * k));
    a_blk.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-m_inv * c));

    // generalized force of a unit Fd: +1 on θ, −1 on φ
    let fb = m_inv * Vector3::new(1.0, -1.0, 0.0);
    let fd_dist = m_inv * Vector3::new(0.0, 0.0, p.kt);
    let mut b_blk = Vector6::zeros();
    let mut d_blk = Vector6::zeros();
    for i in 0..3 {
        b_blk[3 + i] = fb[i];
        d_blk[3 + i] = fd_dist[i];
    }

    let perm = block_to_state_permutation();
    let a = perm * a_blk * perm.transpose();
    let b = perm * b_blk;
    let d = perm * d_blk;

    let (stabilizable, _) = stabilizability_check(
        &DMatrix::from_fn(6, 6, |i, j| a[(i, j)]),
        &DMatrix::from_fn(6, 1, |i, _| b[i]),
    );
    Ok(SlStateSpace {
        a,
        b,
        d,
        ce_nominal,
        stabilizable,
        repair: None,
    })
}

/// Jacobian linearization at the origin: the zero-variance limit where
/// every expectation collapses to the origin value of the Φ-Jacobians.
pub fn deterministic_linearize(
    p: &SuspensionParams,
    ce_nominal: f64,
) -> Result<SlStateSpace, SlinError> {
    let (me, ce, ke) = phi_jacobians(p, Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
    let sl = SlMatrices {
        me,
        ce,
        ke,
        me_se: Matrix3::zeros(),
        ce_se: Matrix3::zeros(),
        ke_se: Matrix3::zeros(),
        n_samples: 0,
    };
    assemble_sl_statespace(p, &sl, ce_nominal)
}

/// Relative singular-value threshold below which directions count as
/// uncontrollable.
pub const CTRB_RANK_TOL: f64 = 1e-9;

/// Kalman controllability decomposition via an orthogonal similarity.
#[derive(Debug, Clone)]
pub struct CtrbDecomposition {
    /// Orthogonal transform, T = [X Y].
    pub t: DMatrix<f64>,
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
    /// Controllable-subspace dimension.
    pub q: usize,
}

impl CtrbDecomposition {
    pub fn a11(&self) -> DMatrix<f64> {
        self.a_hat.view((0, 0), (self.q, self.q)).into_owned()
    }
    pub fn a12(&self) -> DMatrix<f64> {
        let n = self.a_hat.nrows();
        self.a_hat
            .view((0, self.q), (self.q, n - self.q))
            .into_owned()
    }
    pub fn a22(&self) -> DMatrix<f64> {
        let n = self.a_hat.nrows();
        self.a_hat
            .view((self.q, self.q), (n - self.q, n - self.q))
            .into_owned()
    }
    pub fn b1(&self) -> DMatrix<f64> {
        self.b_hat
            .view((0, 0), (self.q, self.b_hat.ncols()))
            .into_owned()
    }
}

pub fn ctrb_decompose(a: &DMatrix<f64>, b: &DMatrix<f64>) -> CtrbDecomposition {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * &block;
    }
    let svd = ctrb.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let q = if smax == 0.0 {
        0
    } else {
        svd.singular_values
            .iter()
            .filter(|&&s| s > CTRB_RANK_TOL * smax)
            .count()
    };
    // U's columns: first q span col(ctrb), remaining complete an
    // orthonormal basis (thin SVD here is n×n since n·m ≥ n)
    let t = u.columns(0, n).into_owned();
    let a_hat = t.transpose() * a * &t;
    let b_hat = t.transpose() * b;
    CtrbDecomposition { t, a_hat, b_hat, q }
}

/// Continuous-time stabilizability: every uncontrollable eigenvalue has a
/// negative real part. Returns the uncontrollable spectrum for reporting.
pub fn stabilizability_check(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> (bool, Vec<nalgebra::Complex<f64>>) {
    let dec = ctrb_decompose(a, b);
    if dec.q == a.nrows() {
        return (true, Vec::new());
    }
    let eigs = dec.a22().complex_eigenvalues();
    let ok = eigs.iter().all(|e| e.re < 0.0);
    (ok, eigs.iter().copied().collect())
}

/// Diagnostics of one stabilizability repair.
#[derive(Debug, Clone)]
pub struct RepairRecord {
    /// ‖Aeq − Â22‖²_F after each outer iteration.
    pub objective: Vec<f64>,
    /// Frobenius norm of A' − A.
    pub delta_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// LMI margin: the Lyapunov inequality is enforced as ⪯ −εI.
pub const LMI_MARGIN: f64 = 1e-6;

/// Commutation matrix K with K·vec(A) = vec(Aᵀ).
fn commutation(n: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            k[(j * n + i, i * n + j)] = 1.0;
        }
    }
    k
}

/// Matrix of the linear map A ↦ AᵀP + PA acting on vec(A).
fn lyap_operator(p: &DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let eye = DMatrix::identity(n, n);
    p.kronecker(&eye) * commutation(n) + eye.kronecker(p)
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unvec(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// Projection onto the symmetric cone {Z : Z ⪯ −εI}.
fn project_negdef(z: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let sym = (z + z.transpose()) * 0.5;
    let n = sym.nrows();
    let eig = nalgebra::SymmetricEigen::new(sym);
    let clipped = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| l.min(-eps)));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

/// Exactly solves min ‖A − A_ref‖²_F  s.t.  AᵀP + PA ⪯ −εI  (convex for
/// fixed P) by ADMM with an eigenvalue-clipping projection.
fn solve_aeq_step(a_ref: &DMatrix<f64>, p: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    let n = a_ref.nrows();
    let lop = lyap_operator(p);
    let rho = 1.0;
    // normal-equation matrix of the A-update
    let lhs = DMatrix::identity(n * n, n * n) * 2.0 + lop.transpose() * &lop * rho;
    let lhs = lhs.lu();
    let mut a = a_ref.clone();
    let mut z = project_negdef(&(a.transpose() * p + p * &a), eps);
    let mut u = DMatrix::zeros(n, n);
    for _ in 0..400 {
        let rhs = vec_of(a_ref) * 2.0 + lop.transpose() * vec_of(&(&z - &u)) * rho;
        a = unvec(&lhs.solve(&rhs).expect("SPD normal equations"), n);
        let la = a.transpose() * p + p * &a;
        z = project_negdef(&(&la + &u), eps);
        u += &la - &z;
    }
    // safeguard: shift down until strictly feasible under P
    let pe = nalgebra::SymmetricEigen::new((p + p.transpose()) * 0.5);
    let pmin = pe.eigenvalues.min().max(1e-12);
    for _ in 0..50 {
        let la = a.transpose() * p + p * &a;
        let lmax = nalgebra::SymmetricEigen::new((&la + la.transpose()) * 0.5)
            .eigenvalues
            .max();
        if lmax <= -eps * 0.99 {
            break;
        }
        a -= DMatrix::identity(n, n) * ((lmax + eps) / (2.0 * pmin));
    }
    a
}

/// Solves AᵀP + PA = −I for P (A Hurwitz), normalized to unit spectral
/// norm.
fn lyapunov_p(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::identity(n, n);
    let at = a.transpose();
    let lhs = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -vec_of(&eye);
    let p = unvec(&lhs.lu().solve(&rhs)?, n);
    let p = (&p + p.transpose()) * 0.5;
    let norm = nalgebra::SymmetricEigen::new(p.clone()).eigenvalues.amax();
    if !norm.is_finite() || norm <= 0.0 {
        return None;
    }
    Some(p / norm)
}

/// Replaces an unstable uncontrollable block with the nearest Hurwitz
/// matrix found by alternating convex steps, then transforms back.
/// Returns the input unchanged when the pair is already stabilizable.
pub fn repair_stabilizability(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, RepairRecord), SlinError> {
    let dec = ctrb_decompose(a, b);
    let n = a.nrows();
    if dec.q == n || dec.a22().complex_eigenvalues().iter().all(|e| e.re < 0.0) {
        return Ok((
            a.clone(),
            RepairRecord {
                objective: vec![0.0],
                delta_norm: 0.0,
                iterations: 0,
                converged: true,
            },
        ));
    }
    let a22 = dec.a22();
    let nu = a22.nrows();
    let mut p = DMatrix::identity(nu, nu);
    let mut best: Option<(DMatrix<f64>, f64)> = None;
    let mut objective = Vec::new();
    let max_outer = 50;
    for _ in 0..max_outer {
        let aeq = solve_aeq_step(&a22, &p, LMI_MARGIN);
        let obj = (&aeq - &a22).norm_squared();
        if let Some((_, prev)) = &best {
            if obj > prev + 1e-12 {
                break; // keep the monotone prefix
            }
        }
        objective.push(obj);
        let improved = best.as_ref().map_or(true, |(_, prev)| obj < prev - 1e-12);
        best = Some((aeq.clone(), obj));
        match lyapunov_p(&aeq) {
            Some(next) => p = next,
            None => break,
        }
        if !improved {
            break;
        }
    }
    let (aeq, best_obj) = best.ok_or(SlinError::RepairNotConverged {
        iters: max_outer,
        best: f64::INFINITY,
    })?;
    if aeq.complex_eigenvalues().iter().any(|e| e.re >= 0.0) {
        return Err(SlinError::RepairNotConverged {
            iters: objective.len(),
            best: best_obj,
        });
    }
    let mut a_hat = dec.a_hat.clone();
    a_hat.view_mut((dec.q, dec.q), (nu, nu)).copy_from(&aeq);
    let repaired = &dec.t * a_hat * dec.t.transpose();
    let delta = (&repaired - a).norm();
    let converged = objective
        .windows(2)
        .last()
        .map_or(true, |w| (w[0] - w[1]).abs() < 1e-8 * (1.0 + w[0]));
    Ok((
        repaired,
        RepairRecord {
            iterations: objective.len(),
            objective,
            delta_norm: delta,
            converged,
        },
    ))
}

/// Repairs an SL state space in place if its pair is not stabilizable.
pub fn ensure_stabilizable(ss: &mut SlStateSpace) -> Result<(), SlinError> {
    if ss.stabilizable {
        return Ok(());
    }
    let a = DMatrix::from_fn(6, 6, |i, j| ss.a[(i, j)]);
    let b = DMatrix::from_fn(6, 1, |i, _| ss.b[i]);
    let (repaired, record) = repair_stabilizability(&a, &b)?;
    for i in 0..6 {
        for j in 0..6 {
            ss.a[(i, j)] = repaired[(i, j)];
        }
    }
    ss.stabilizable = true;
    ss.repair = Some(record);
    Ok(())
}

/// Matrix exponential by scaling-and-squaring with a Taylor series.
fn matrix_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.norm();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(s as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Zero-order-hold discretization of ẋ = A x + B Fd + D w at step `ts`.
pub fn discretize_zoh(
    a: &Matrix6<f64>,
    b: &Vector6<f64>,
    d: &Vector6<f64>,
    ts: f64,
) -> (Matrix6<f64>, Vector6<f64>, Vector6<f64>) {
    // exp of the augmented [[A, B, D]; 0; 0] block gives Ad and the held
    // input integrals in one shot
    let mut aug = DMatrix::zeros(8, 8);
    for i in 0..6 {
        for j in 0..6 {
            aug[(i, j)] = a[(i, j)] * ts;
        }
        aug[(i, 6)] = b[i] * ts;
        aug[(i, 7)] = d[i] * ts;
    }
    let e = matrix_exp(&aug);
    let mut ad = Matrix6::zeros();
    let mut bd = Vector6::zeros();
    let mut dd = Vector6::zeros();
    for i in 0..6 {
        for j in 0..6 {
            ad[(i, j)] = e[(i, j)];
        }
        bd[i] = e[(i, 6)];
        dd[i] = e[(i, 7)];
    }
    (ad, bd, dd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> SuspensionParams {
        SuspensionParams {
            rp: 0.117,
            r: 0.0897,
            ..SuspensionParams::table1()
        }
    }

    #[test]
    fn phi_third_row_is_zero() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let v = |rng: &mut ChaCha8Rng| {
                Vector3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>())
            };
            let (q, qd, qdd) = (v(&mut rng), v(&mut rng), v(&mut rng));
            assert_eq!(phi(&p, q, qd, qdd)[2], 0.0);
            let (jm, jc, jk) = phi_jacobians(&p, q, qd, qdd);
            for j in 0..3 {
                assert_eq!(jm[(2, j)], 0.0);
                assert_eq!(jc[(2, j)], 0.0);
                assert_eq!(jk[(2, j)], 0.0);
            }
        }
    }

    #[test]
    fn phi_jacobians_match_finite_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = 1e-6;
        for _ in 0..100 {
            let v = |rng: &mut ChaCha8Rng| {
                Vector3::new(
                    rng.gen::<f64>() * 2.0 - 1.0,
                    rng.gen::<f64>() * 2.0 - 1.0,
                    rng.gen::<f64>() * 2.0 - 1.0,
                )
            };
            let (q, qd, qdd) = (v(&mut rng), v(&mut rng), v(&mut rng));
            let (jm, jc, jk) = phi_jacobians(&p, q, qd, qdd);
            for j in 0..3 {
                let mut e = Vector3::zeros();
                e[j] = h;
                let fd_m = (phi(&p, q, qd, qdd + e) - phi(&p, q, qd, qdd - e)) / (2.0 * h);
                let fd_c = (phi(&p, q, qd + e, qdd) - phi(&p, q, qd - e, qdd)) / (2.0 * h);
                let fd_k = (phi(&p, q + e, qd, qdd) - phi(&p, q - e, qd, qdd)) / (2.0 * h);
                for i in 0..3 {
                    assert_relative_eq!(jm[(i, j)], fd_m[i], epsilon = 1e-6, max_relative = 1e-6);
                    assert_relative_eq!(jc[(i, j)], fd_c[i], epsilon = 1e-6, max_relative = 1e-6);
                    assert_relative_eq!(jk[(i, j)], fd_k[i], epsilon = 1e-6, max_relative = 1e-6);
                }
            }
        }
    }

    #[test]
    fn origin_jacobian_values() {
        let p = params();
        let k = p.m * p.rp * p.r;
        let (jm, jc, jk) = phi_jacobians(&p, Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
        assert_relative_eq!(jm[(0, 0)], 2.0 * k);
        assert_relative_eq!(jm[(0, 1)], k);
        assert_relative_eq!(jm[(1, 0)], k);
        assert_eq!(jc, Matrix3::zeros());
        assert_eq!(jk, Matrix3::zeros());
    }

    #[test]
    fn cubic_statistical_linearization_recovers_three_sigma_squared() {
        // scalar Φ = q³ under zero-mean Gaussian q: E[∂Φ/∂q] = 3σ²
        use rand_distr::{Distribution, Normal};
        let sigma = 0.7;
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| {
                let q: f64 = normal.sample(&mut rng);
                3.0 * q * q
            })
            .collect();
        let (mean, se) = sample_mean_se(&samples);
        assert_relative_eq!(mean, 3.0 * sigma * sigma, max_relative = 0.02);
        assert!(se < 0.02 * mean);
    }

    #[test]
    fn standard_error_shrinks_with_sample_count() {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<f64> = (0..40_000).map(|_| normal.sample(&mut rng)).collect();
        let (_, se_half) = sample_mean_se(&samples[..20_000]);
        let (_, se_full) = sample_mean_se(&samples);
        let ratio = se_half / se_full;
        assert!((ratio - 2f64.sqrt()).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn deterministic_linearization_matches_dynamics_jacobian() {
        // with the rotor inertia removed the printed generalized form is
        // exact, so the assembled DL must equal the finite-difference
        // Jacobian of the nonlinear vector field at the origin
        let p = SuspensionParams {
            j_rotor: 0.0,
            ..params()
        };
        let ss = deterministic_linearize(&p, 0.1).unwrap();
        let h = 1e-7;
        for j in 0..6 {
            let mut plus = [0.0; 6];
            plus[j] = h;
            let xp = State::from_array(plus);
            let mut minus = [0.0; 6];
            minus[j] = -h;
            let xm = State::from_array(minus);
            let dp = model::dynamics(&p, &xp, 0.0, 0.0).unwrap().to_array();
            let dm = model::dynamics(&p, &xm, 0.0, 0.0).unwrap().to_array();
            for i in 0..6 {
                let fd = (dp[i] - dm[i]) / (2.0 * h);
                assert_relative_eq!(ss.a[(i, j)], fd, epsilon = 1e-5, max_relative = 1e-5);
            }
        }
        // disturbance column against affinity in w
        let d1 = model::dynamics(&p, &State::zero(), 0.0, 1.0)
            .unwrap()
            .to_array();
        for i in 0..6 {
            assert_relative_eq!(ss.d[i], d1[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn disturbance_enters_through_tire_path_only() {
        let p = params();
        let ss = deterministic_linearize(&p, 0.1).unwrap();
        // position rows never see w directly
        assert_eq!(ss.d[0], 0.0);
        assert_eq!(ss.d[2], 0.0);
        assert_eq!(ss.d[4], 0.0);
        assert!(ss.d[5] != 0.0);
    }

    #[test]
    fn double_integrator_is_controllable() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let dec = ctrb_decompose(&a, &b);
        assert_eq!(dec.q, 2);
        let (ok, spectrum) = stabilizability_check(&a, &b);
        assert!(ok);
        assert!(spectrum.is_empty());
    }

    #[test]
    fn diagonal_pair_splits_by_input_channel() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let stable_uncontrollable = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let dec = ctrb_decompose(&a, &stable_uncontrollable);
        assert_eq!(dec.q, 1);
        assert!(stabilizability_check(&a, &stable_uncontrollable).0);

        let unstable_uncontrollable = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (ok, spectrum) = stabilizability_check(&a, &unstable_uncontrollable);
        assert!(!ok);
        assert_eq!(spectrum.len(), 1);
        assert_relative_eq!(spectrum[0].re, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn decomposition_reconstructs_and_block_zeros_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // rank deficiency by construction: block-triangular in a hidden
        // orthogonal frame with the input confined to the upper block
        let raw = DMatrix::from_fn(6, 6, |_, _| rng.gen::<f64>() - 0.5);
        let frame = raw.qr().q();
        let mut a_hat = DMatrix::from_fn(6, 6, |i, j| {
            let v: f64 = rng.gen::<f64>() - 0.5;
            if i == j {
                v - 2.0
            } else {
                v
            }
        });
        for i in 3..6 {
            for j in 0..3 {
                a_hat[(i, j)] = 0.0;
            }
        }
        let mut b_hat = DMatrix::zeros(6, 2);
        for i in 0..3 {
            for j in 0..2 {
                b_hat[(i, j)] = rng.gen::<f64>() - 0.5;
            }
        }
        let a = &frame * a_hat * frame.transpose();
        let b = &frame * b_hat;
        let dec = ctrb_decompose(&a, &b);
        assert_eq!(dec.q, 3);
        let recon = &dec.t * &dec.a_hat * dec.t.transpose();
        assert!((recon - &a).norm() < 1e-10);
        // lower-left block of Â and lower block of B̂ vanish
        let n = 6;
        for i in dec.q..n {
            for j in 0..dec.q {
                assert!(dec.a_hat[(i, j)].abs() < 1e-8, "a_hat[{i},{j}]");
            }
            for j in 0..2 {
                assert!(dec.b_hat[(i, j)].abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rank_is_similarity_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -2.0]);
        let b = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 0.0]);
        let q0 = ctrb_decompose(&a, &b).q;
        let m = DMatrix::from_fn(3, 3, |_, _| rng.gen::<f64>() - 0.5);
        let minv = m.clone().try_inverse().unwrap();
        let q1 = ctrb_decompose(&(&minv * &a * &m), &(&minv * &b)).q;
        assert_eq!(q0, q1);
    }

    #[test]
    fn scalar_repair_approaches_stability_boundary() {
        let a = DMatrix::from_row_slice(1, 1, &[0.1]);
        let b = DMatrix::zeros(1, 1);
        let (repaired, record) = repair_stabilizability(&a, &b).unwrap();
        let aeq = repaired[(0, 0)];
        assert!(aeq < 0.0, "repaired to {aeq}");
        // optimum sits just inside the boundary: |Aeq − 0.1| ≈ 0.1
        assert!((aeq - 0.1).abs() < 0.11, "moved too far: {aeq}");
        assert!(record.delta_norm > 0.0);
        for w in record.objective.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "objective increased: {:?}",
                record.objective
            );
        }
    }

    #[test]
    fn already_stabilizable_is_untouched() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let (repaired, record) = repair_stabilizability(&a, &b).unwrap();
        assert_eq!(repaired, a);
        assert_eq!(record.delta_norm, 0.0);
    }

    #[test]
    fn repair_fixes_pair_and_preserves_controllable_block() {
        // controllable 3-state chain ⊕ uncontrollable block with one
        // unstable mode, mixed through an orthogonal similarity
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let raw = DMatrix::from_fn(6, 6, |_, _| rng.gen::<f64>() - 0.5);
        let t = raw.qr().q();
        let mut blocks = DMatrix::zeros(6, 6);
        blocks
            .view_mut((0, 0), (3, 3))
            .copy_from(&DMatrix::from_row_slice(
                3,
                3,
                &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, -2.0, -3.0],
            ));
        blocks
            .view_mut((3, 3), (3, 3))
            .copy_from(&DMatrix::from_row_slice(
                3,
                3,
                &[0.3, 1.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, -1.5],
            ));
        blocks
            .view_mut((0, 3), (3, 3))
            .copy_from(&DMatrix::from_fn(3, 3, |_, _| rng.gen::<f64>() * 0.1));
        let bvec = DMatrix::from_row_slice(6, 1, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let a = &t * &blocks * t.transpose();
        let b = &t * &bvec;
        assert!(!stabilizability_check(&a, &b).0);

        let (repaired, record) = repair_stabilizability(&a, &b).unwrap();
        assert!(stabilizability_check(&repaired, &b).0);
        assert!(record.delta_norm > 0.0);
        for w in record.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // controllable block untouched in the decomposition frame
        let before = ctrb_decompose(&a, &b);
        let t2 = &before.t;
        let after_hat = t2.transpose() * &repaired * t2;
        let q = before.q;
        let diff = (after_hat.view((0, 0), (q, q)) - before.a_hat.view((0, 0), (q, q))).norm();
        assert!(diff < 1e-8, "controllable block moved by {diff}");
    }

    #[test]
    fn zoh_matches_scalar_exponential() {
        // decoupled scalars on the diagonal: known closed forms
        let mut a = Matrix6::zeros();
        a[(0, 0)] = -2.0;
        let mut b = Vector6::zeros();
        b[0] = 3.0;
        let mut d = Vector6::zeros();
        d[0] = 1.0;
        let ts = 0.01;
        let (ad, bd, dd) = discretize_zoh(&a, &b, &d, ts);
        let expect_a = (-2.0f64 * ts).exp();
        assert_relative_eq!(ad[(0, 0)], expect_a, max_relative = 1e-12);
        assert_relative_eq!(bd[0], (expect_a - 1.0) / -2.0 * 3.0, max_relative = 1e-10);
        assert_relative_eq!(dd[0], (expect_a - 1.0) / -2.0, max_relative = 1e-10);
    }

    #[test]
    fn sl_estimation_is_seed_deterministic_and_half_consistent() {
        let p = params();
        let road = RoadModel {
            seed: 21,
            ..RoadModel::default()
        };
        let a = estimate_sl_matrices(&p, 0.225, &road, 4000, 20.0, 1.0).unwrap();
        let b = estimate_sl_matrices(&p, 0.225, &road, 4000, 20.0, 1.0).unwrap();
        assert_eq!(a.me, b.me);
        assert_eq!(a.ke, b.ke);
        // key inertia entry within 3 SE of the long-run estimate when the
        // sample is doubled
        let long = estimate_sl_matrices(&p, 0.225, &road, 8000, 20.0, 1.0).unwrap();
        let delta = (a.me[(0, 0)] - long.me[(0, 0)]).abs();
        assert!(delta <= 3.0 * a.me_se[(0, 0)] + 3.0 * long.me_se[(0, 0)] + 1e-12);
    }

    #[test]
    fn assembled_sl_statespace_is_stable_and_stabilizable() {
        let p = params();
        let road = RoadModel {
            seed: 23,
            ..RoadModel::default()
        };
        let sl = estimate_sl_matrices(&p, 0.225, &road, 6000, 20.0, 1.0).unwrap();
        let mut ss = assemble_sl_statespace(&p, &sl, 0.225).unwrap();
        // the raw SL model may well be unstable (the pendulum coordinate
        // has no restoring spring) — what matters is that after the
        // repair step the pair is certified stabilizable
        ensure_stabilizable(&mut ss).unwrap();
        assert!(ss.stabilizable);
        let a = DMatrix::from_fn(6, 6, |i, j| ss.a[(i, j)]);
        let b = DMatrix::from_fn(6, 1, |i, _| ss.b[i]);
        assert!(stabilizability_check(&a, &b).0);
    }
}
