//! State- and output-feedback stabilizers: gain synthesis, closed-loop
//! simulation with input delay and measurement noise, and norm diagnostics.

use std::collections::VecDeque;

use nalgebra::{Matrix2, Matrix3, Matrix4, RowVector2, Vector2, Vector3};
use num_complex::Complex64;
use rand_core::RngCore;
use rand_xoshiro::SplitMix64;
use rand_core::SeedableRng;

use crate::error::{Error, Result};
use crate::pde::{check_cfl, step_count, Discretization, FullState};
use crate::reduced::{eigenvalues_2x2, DIVERGENCE_THRESHOLD};
use crate::steady::{self, ForceLaw};

/// Gains reported for the reference vehicle at 50 m/s.
pub const PAPER_F: [[f64; 2]; 2] = [[2.034, -0.0458], [0.0, 0.0]];
pub const PAPER_L: [f64; 2] = [-16.02, -147.267];

pub fn paper_f() -> Matrix2<f64> {
    Matrix2::new(PAPER_F[0][0], PAPER_F[0][1], PAPER_F[1][0], PAPER_F[1][1])
}

pub fn paper_l() -> Vector2<f64> {
    Vector2::new(PAPER_L[0], PAPER_L[1])
}

/// Solve `A^T Q + Q A = -2 q I` for symmetric `Q`; `A` must be Hurwitz.
pub fn lyapunov_solve(a: &Matrix2<f64>, q: f64) -> Result<Matrix2<f64>> {
    let max_real = eigenvalues_2x2(a).iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if !(max_real < 0.0) {
        return Err(Error::NotHurwitz { max_real });
    }
    // Unknowns (Q11, Q12, Q22).
    let m = Matrix3::new(
        2.0 * a[(0, 0)], 2.0 * a[(1, 0)], 0.0,
        a[(0, 1)], a[(0, 0)] + a[(1, 1)], a[(1, 0)],
        0.0, 2.0 * a[(0, 1)], 2.0 * a[(1, 1)],
    );
    let rhs = Vector3::new(-2.0 * q, 0.0, -2.0 * q);
    let sol = m.lu().solve(&rhs).ok_or(Error::NotHurwitz { max_real })?;
    Ok(Matrix2::new(sol[0], sol[1], sol[1], sol[2]))
}

fn check_poles(poles: &[Complex64; 2]) -> Result<(f64, f64)> {
    let [p, q] = *poles;
    let tol = 1e-12 * (1.0 + p.norm() + q.norm());
    let real_pair = p.im.abs() <= tol && q.im.abs() <= tol;
    let conj_pair = (p - q.conj()).norm() <= tol;
    if !(real_pair || conj_pair) {
        return Err(Error::InvalidPoles(format!(
            "{p} and {q} are not closed under conjugation"
        )));
    }
    if !(p.re.is_finite() && q.re.is_finite() && p.im.is_finite() && q.im.is_finite()) {
        return Err(Error::InvalidPoles("poles must be finite".into()));
    }
    Ok(((p + q).re, (p * q).re))
}

fn adjugate(a: &Matrix2<f64>) -> Matrix2<f64> {
    Matrix2::new(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)])
}

/// Row `k` with `eig(A + b k) = poles`, or `None` if `(A, b)` cannot reach them.
fn place_single_input(a: &Matrix2<f64>, b: &Vector2<f64>, trace: f64, det: f64) -> Option<RowVector2<f64>> {
    // tr(A + b k) = tr A + k b, det(A + b k) = det A + k adj(A) b.
    let w = adjugate(a) * b;
    let m = Matrix2::new(b[0], b[1], w[0], w[1]);
    let rhs = Vector2::new(trace - a.trace(), det - a.determinant());
    let scale = m.amax().max(1e-300);
    let k = if m.determinant().abs() > 1e-12 * scale * scale {
        m.lu().solve(&rhs)?
    } else {
        // Uncontrollable pair: accept only a consistent least-squares solution.
        let k = m.pseudo_inverse(1e-12 * scale).ok()? * rhs;
        let resid = (m * k - rhs).amax();
        if resid > 1e-9 * (1.0 + rhs.amax()) {
            return None;
        }
        k
    };
    Some(k.transpose())
}

/// Eigenvalue of `A` left unchanged by every feedback through `G`.
fn fixed_mode(a: &Matrix2<f64>, g: &Matrix2<f64>) -> f64 {
    let eig = eigenvalues_2x2(a);
    for l in eig {
        if l.im != 0.0 {
            continue;
        }
        let shifted = a - Matrix2::identity() * l.re;
        // rank [A - lI, G] < 2 iff a left null vector of A - lI annihilates G.
        let v = Vector2::new(-shifted[(1, 0)], shifted[(0, 0)]);
        let v = if v.norm() > 1e-12 { v } else { Vector2::new(-shifted[(1, 1)], shifted[(0, 1)]) };
        if (v.transpose() * g).amax() <= 1e-9 * (1.0 + g.amax()) * v.norm().max(1.0) {
            return l.re;
        }
    }
    eig[1].re
}

/// State-feedback gain with `eig(A + G F) = poles`. A single input channel is
/// tried first (the other row of `F` is zero), so a zero column of `G` is
/// handled without special cases.
pub fn design_state_feedback(a: &Matrix2<f64>, g: &Matrix2<f64>, poles: &[Complex64; 2]) -> Result<Matrix2<f64>> {
    let (trace, det) = check_poles(poles)?;
    for col in 0..2 {
        let b = g.column(col).into_owned();
        if b.amax() == 0.0 {
            continue;
        }
        if let Some(k) = place_single_input(a, &b, trace, det) {
            let mut f = Matrix2::zeros();
            f.set_row(col, &k);
            return Ok(f);
        }
    }
    if let Some(g_inv) = g.try_inverse() {
        // Target A + G F = companion matrix of the requested polynomial.
        let target = Matrix2::new(0.0, 1.0, -det, trace);
        return Ok(g_inv * (target - a));
    }
    Err(Error::Uncontrollable { mode: fixed_mode(a, g) })
}

/// Observer gain with `eig(A + L C) = poles`, by duality.
pub fn design_observer(a: &Matrix2<f64>, c: &RowVector2<f64>, poles: &[Complex64; 2]) -> Result<Vector2<f64>> {
    let (trace, det) = check_poles(poles)?;
    let at = a.transpose();
    let ct = c.transpose();
    match place_single_input(&at, &ct, trace, det) {
        Some(k) => Ok(k.transpose()),
        None => {
            let mut g = Matrix2::zeros();
            g.set_column(0, &ct);
            let mode = fixed_mode(&at, &g);
            if mode >= 0.0 {
                Err(Error::Undetectable { mode })
            } else {
                Err(Error::InvalidPoles(format!(
                    "unobservable stable mode {mode} must be one of the requested poles"
                )))
            }
        }
    }
}

/// Default controller poles: unstable eigenvalues mirrored into the left half
/// plane with a margin of 0.5; stable ones kept.
pub fn default_controller_poles(a: &Matrix2<f64>) -> [Complex64; 2] {
    eigenvalues_2x2(a).map(|l| {
        if l.re >= 0.0 {
            Complex64::new(-l.re - 0.5, l.im)
        } else {
            l
        }
    })
}

pub fn default_observer_poles(controller: &[Complex64; 2]) -> [Complex64; 2] {
    controller.map(|l| 3.0 * l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub f: Matrix2<f64>,
    pub l: Vector2<f64>,
    pub alpha_star: Vector2<f64>,
}

impl Gains {
    pub fn paper() -> Self {
        Self {
            f: paper_f(),
            l: paper_l(),
            alpha_star: Vector2::zeros(),
        }
    }
}

/// `A1~ + G1~ F` (controller) and `A1~ + L C` (estimation error).
pub fn closed_loop_blocks(
    a1t: &Matrix2<f64>,
    g1t: &Matrix2<f64>,
    c: &RowVector2<f64>,
    gains: &Gains,
) -> (Matrix2<f64>, Matrix2<f64>) {
    (a1t + g1t * gains.f, a1t + gains.l * c)
}

/// Linearized output-feedback matrix in `(X_delta, X~)` coordinates with
/// `X~ = X - X^`.
pub fn separation_matrix(a1t: &Matrix2<f64>, g1t: &Matrix2<f64>, c: &RowVector2<f64>, gains: &Gains) -> Matrix4<f64> {
    let (a1s, a3s) = closed_loop_blocks(a1t, g1t, c, gains);
    let a2s = -g1t * gains.f;
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a1s);
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&a2s);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&a3s);
    m
}

/// One explicit Euler step of the observer driven by measurement `y`.
#[allow(clippy::too_many_arguments)]
pub fn observer_step(
    xhat: &Vector2<f64>,
    y: f64,
    u: &Vector2<f64>,
    disc: &Discretization,
    law: ForceLaw,
    l: &Vector2<f64>,
    dt: f64,
) -> Result<Vector2<f64>> {
    let f = &disc.form;
    let alpha = f.slip_angles(xhat, u);
    let innovation = y - (f.c * xhat)[0];
    let rhs = f.a1 * xhat + f.g1 * steady::force_map_with(&alpha, f, law)? + f.b - l * innovation;
    Ok(xhat + dt * rhs)
}

/// Gaussian samples by the Box-Muller transform on SplitMix64.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    rng: SplitMix64,
    spare: Option<f64>,
}

impl GaussianNoise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: SplitMix64::seed_from_u64(seed),
            spare: None,
        }
    }

    fn uniform(&mut self) -> f64 {
        // 53 random bits mapped to (0, 1].
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.uniform();
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackMode {
    /// `U = U* + F (X^(t - delay) - X*)`.
    #[default]
    Output,
    /// `U = U* + F (X(t - delay) - X*)`; no observer runs.
    State,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopConfig {
    pub gains: Gains,
    pub mode: FeedbackMode,
    /// Input delay in seconds.
    pub delay: f64,
    /// Standard deviation of the yaw-rate noise (rad/s).
    pub noise_std: f64,
    /// Zero-order-hold period of the noise (s).
    pub noise_dt: f64,
    pub seed: u64,
    pub x_star: Vector2<f64>,
    pub u_star: Vector2<f64>,
    /// Force law used by the observer.
    pub observer_law: ForceLaw,
    /// Steady profile used for the `zeta` diagnostic.
    pub zeta_law: ForceLaw,
}

impl ClosedLoopConfig {
    /// Reference experiment: reported gains, 20 ms delay, 0.1 rad/s noise
    /// held for 5 ms, zero target.
    pub fn paper() -> Self {
        Self {
            gains: Gains::paper(),
            mode: FeedbackMode::Output,
            delay: 0.02,
            noise_std: 0.1,
            noise_dt: 0.005,
            seed: 1,
            x_star: Vector2::zeros(),
            u_star: Vector2::zeros(),
            observer_law: ForceLaw::Continuous,
            zeta_law: ForceLaw::Continuous,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "delay",
                value: self.delay,
                reason: "must be finite and >= 0",
            });
        }
        if !(self.noise_dt > 0.0) {
            return Err(Error::InvalidParameter {
                field: "noise_dt",
                value: self.noise_dt,
                reason: "must be positive",
            });
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter {
                field: "noise_std",
                value: self.noise_std,
                reason: "must be >= 0",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ClosedLoopTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector2<f64>>,
    pub xhat: Vec<Vector2<f64>>,
    pub u: Vec<Vector2<f64>>,
    pub forces: Vec<Vector2<f64>>,
    pub zeta_norm: Vec<f64>,
    /// `sqrt(|X - X*|^2 + |zeta|^2 + |X~|^2)`; the last term is absent in
    /// state-feedback mode.
    pub composite_norm: Vec<f64>,
    pub estimate_error_norm: Vec<f64>,
    pub diverged: bool,
}

impl ClosedLoopTrajectory {
    pub fn max_abs_front_steer(&self) -> f64 {
        self.u.iter().map(|u| u[0].abs()).fold(0.0, f64::max)
    }

    /// Sample closest to time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, tk) in self.times.iter().enumerate() {
            if (tk - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }
}

/// Co-simulate plant, noisy measurement, observer and delayed feedback.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_simulate(
    disc: &Discretization,
    config: &ClosedLoopConfig,
    initial: FullState,
    xhat0: Vector2<f64>,
    dt: f64,
    t_end: f64,
    stride: usize,
) -> Result<ClosedLoopTrajectory> {
    config.validate()?;
    check_cfl(&disc.form, &disc.grid, dt)?;
    let steps = step_count(dt, t_end, stride)?;
    let delay_steps = (config.delay / dt).round() as usize;
    let noise_steps = ((config.noise_dt / dt).round() as usize).max(1);
    let f = &disc.form;

    let mut state = FullState::from_profile(initial.x, initial.z);
    let mut xhat = xhat0;
    let mut noise = GaussianNoise::new(config.seed);
    let mut w = 0.0;
    let fed_back = |x: &Vector2<f64>, xhat: &Vector2<f64>| match config.mode {
        FeedbackMode::Output => *xhat,
        FeedbackMode::State => *x,
    };
    let mut delay_line: VecDeque<Vector2<f64>> =
        std::iter::repeat_n(fed_back(&state.x, &xhat), delay_steps + 1).collect();
    let mut traj = ClosedLoopTrajectory::default();

    for n in 0..=steps {
        if n % noise_steps == 0 {
            w = config.noise_std * noise.standard();
        }
        let y = (f.c * state.x)[0] + w;
        if n > 0 {
            delay_line.pop_front();
            delay_line.push_back(fed_back(&state.x, &xhat));
        }
        let u = config.u_star + config.gains.f * (delay_line[0] - config.x_star);

        if n % stride == 0 {
            let t = n as f64 * dt;
            let alpha = f.slip_angles(&state.x, &u);
            let zeta = disc.zeta_norm(&state.z, &alpha, config.zeta_law)?;
            let est = match config.mode {
                FeedbackMode::Output => (state.x - xhat).norm(),
                FeedbackMode::State => 0.0,
            };
            traj.times.push(t);
            traj.x.push(state.x);
            traj.xhat.push(xhat);
            traj.u.push(u);
            traj.forces.push(disc.tire_forces(&state.z, &alpha));
            traj.zeta_norm.push(zeta);
            traj.estimate_error_norm.push(est);
            traj.composite_norm
                .push(((state.x - config.x_star).norm_squared() + zeta * zeta + est * est).sqrt());
        }
        if n == steps {
            break;
        }
        if config.mode == FeedbackMode::Output {
            xhat = observer_step(&xhat, y, &u, disc, config.observer_law, &config.gains.l, dt)?;
        }
        disc.step(&mut state, &u, dt);
        if !(state.x.norm() <= DIVERGENCE_THRESHOLD) || !state.is_finite() || !xhat.iter().all(|v| v.is_finite()) {
            traj.diverged = true;
            break;
        }
    }
    Ok(traj)
}

/// Mean composite norm over the final second of a run started at the
/// equilibrium with the configured noise.
pub fn noise_floor(
    disc: &Discretization,
    config: &ClosedLoopConfig,
    z_star: [Vec<f64>; 2],
    dt: f64,
    t_end: f64,
    stride: usize,
) -> Result<f64> {
    let init = FullState::from_profile(config.x_star, z_star);
    let tr = closed_loop_simulate(disc, config, init, config.x_star, dt, t_end, stride)?;
    let start = t_end - 1.0;
    let tail: Vec<f64> = tr
        .times
        .iter()
        .zip(&tr.composite_norm)
        .filter(|(t, _)| **t >= start)
        .map(|(_, v)| *v)
        .collect();
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Earliest time after which `norms` stays below `threshold`; `None` if the
/// last sample is above it.
pub fn settling_time(times: &[f64], norms: &[f64], threshold: f64) -> Option<f64> {
    let last_above = norms.iter().rposition(|v| *v >= threshold);
    match last_above {
        None => times.first().copied(),
        Some(k) if k + 1 < times.len() => Some(times[k + 1]),
        Some(_) => None,
    }
}

/// Bounding exponential `beta e^{-sigma t}`: `sigma` is the least-squares
/// decay rate of `ln(norm)` over samples above `floor`, and `beta` the
/// smallest constant for which the bound holds on those samples.
pub fn fit_bounding_exponential(times: &[f64], norms: &[f64], floor: f64) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .take_while(|(_, v)| **v > floor)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return (norms.first().copied().unwrap_or(0.0), 0.0);
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sigma = -sty / stt;
    let beta = pts
        .iter()
        .map(|(t, ly)| (ly + sigma * t).exp())
        .fold(0.0, f64::max);
    (beta, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::{Carcass, ModelForm, VehicleParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table1_design() -> (ModelForm, Matrix2<f64>, Matrix2<f64>) {
        let f = ModelForm::default_for(&VehicleParams::table1(), Carcass::Flexible).unwrap();
        let c = steady::cornering_stiffness(&Vector2::zeros(), &f, ForceLaw::Continuous).unwrap();
        let a = steady::a1_tilde(&f, &c);
        let g = steady::g1_tilde(&f, &c);
        (f, a, g)
    }

    fn sorted(mut e: Vec<Complex64>) -> Vec<Complex64> {
        e.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        e
    }

    fn assert_spectrum(a: &Matrix2<f64>, poles: &[Complex64; 2]) {
        let got = sorted(eigenvalues_2x2(a).to_vec());
        let want = sorted(poles.to_vec());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-8 * (1.0 + w.norm()), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn lyapunov_identity_case() {
        let q = lyapunov_solve(&(-Matrix2::identity()), 1.0).unwrap();
        assert_relative_eq!(q, Matrix2::identity(), epsilon = 1e-15);
    }

    #[test]
    fn lyapunov_companion_case() {
        let a = Matrix2::new(0.0, 1.0, -2.0, -3.0);
        let q = lyapunov_solve(&a, 1.0).unwrap();
        let r: Matrix2<f64> = a.transpose() * q + q * a + 2.0 * Matrix2::identity();
        assert!(r.amax() < 1e-12);
        assert_eq!(q[(0, 1)], q[(1, 0)]);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = Matrix2::new(0.1, 0.0, 0.0, -1.0);
        assert!(matches!(lyapunov_solve(&a, 1.0), Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn paper_gains_are_stabilizing() {
        let (f, a, g) = table1_design();
        let (a1s, a3s) = closed_loop_blocks(&a, &g, &f.c, &Gains::paper());
        assert!(eigenvalues_2x2(&a1s).iter().all(|l| l.re < 0.0));
        assert!(eigenvalues_2x2(&a3s).iter().all(|l| l.re < 0.0));
    }

    #[test]
    fn placement_with_rank_one_input() {
        let (_, a, g) = table1_design();
        assert_eq!(g.column(1).amax(), 0.0);
        let poles = [Complex64::new(-3.0, 2.0), Complex64::new(-3.0, -2.0)];
        let f = design_state_feedback(&a, &g, &poles).unwrap();
        assert_eq!(f.row(1).amax(), 0.0);
        assert_spectrum(&(a + g * f), &poles);
    }

    #[test]
    fn keeping_own_poles_gives_zero_gain() {
        let (_, a, g) = table1_design();
        let own = eigenvalues_2x2(&a);
        let f = design_state_feedback(&a, &g, &own).unwrap();
        assert!(f.amax() < 1e-9);
    }

    #[test]
    fn observer_with_own_poles_when_unobservable() {
        // C1 l1 = C2 l2 makes r decouple from beta in the linearization.
        let mut p = VehicleParams::table1();
        p.sigma0[0] = 3720.0 * 269.0 * 0.09 / (2660.0 * 0.11 * 1.4);
        let f = ModelForm::default_for(&p, Carcass::Flexible).unwrap();
        let c = steady::cornering_stiffness(&Vector2::zeros(), &f, ForceLaw::Continuous).unwrap();
        let a = steady::a1_tilde(&f, &c);
        let own = eigenvalues_2x2(&a);
        assert!(own.iter().all(|l| l.re < 0.0));
        let l = design_observer(&a, &f.c, &own).unwrap();
        assert!(l.amax() < 1e-6 * (1.0 + a.amax()));
    }

    #[test]
    fn undetectable_pair_is_rejected() {
        let a = Matrix2::new(0.5, 0.0, 0.0, -1.0);
        let c = RowVector2::new(0.0, 1.0);
        let poles = [Complex64::new(-2.0, 0.0), Complex64::new(-3.0, 0.0)];
        assert!(matches!(design_observer(&a, &c, &poles), Err(Error::Undetectable { .. })));
        let g = Matrix2::new(0.0, 0.0, 1.0, 0.0);
        match design_state_feedback(&a, &g, &poles) {
            Err(Error::Uncontrollable { mode }) => assert_relative_eq!(mode, 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn poles_must_be_conjugate_closed() {
        let a = Matrix2::new(0.0, 1.0, -1.0, 0.0);
        let bad = [Complex64::new(-1.0, 1.0), Complex64::new(-2.0, 0.0)];
        assert!(matches!(
            design_state_feedback(&a, &Matrix2::identity(), &bad),
            Err(Error::InvalidPoles(_))
        ));
    }

    #[test]
    fn separation_spectrum_is_union() {
        let (f, a, g) = table1_design();
        let gains = Gains::paper();
        let m = separation_matrix(&a, &g, &f.c, &gains);
        let (a1s, a3s) = closed_loop_blocks(&a, &g, &f.c, &gains);
        let mut union: Vec<Complex64> = eigenvalues_2x2(&a1s).to_vec();
        union.extend(eigenvalues_2x2(&a3s));
        let full = m.complex_eigenvalues();
        for u in union {
            assert!(full.iter().any(|e| (e - u).norm() < 1e-10 * (1.0 + u.norm())));
        }
    }

    #[test]
    fn default_poles_mirror_unstable_modes() {
        let a = Matrix2::new(1.0, 0.0, 0.0, -2.0);
        let p = default_controller_poles(&a);
        let mut re: Vec<f64> = p.iter().map(|l| l.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(re, vec![-2.0, -1.5]);
        assert_eq!(default_observer_poles(&p)[0], 3.0 * p[0]);
    }

    #[test]
    fn gaussian_noise_statistics_and_reproducibility() {
        let mut a = GaussianNoise::new(7);
        let mut b = GaussianNoise::new(7);
        let xs: Vec<f64> = (0..200_000).map(|_| a.standard()).collect();
        assert!(xs.iter().zip((0..).map(|_| b.standard())).all(|(x, y)| x.to_bits() == y.to_bits()));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
    }

    fn small_disc() -> Discretization {
        let f = ModelForm::default_for(&VehicleParams::table1(), Carcass::Flexible).unwrap();
        Discretization::new(&f, Grid::new(20))
    }

    #[test]
    fn equilibrium_run_without_noise_stays_put() {
        let d = small_disc();
        let mut cfg = ClosedLoopConfig::paper();
        cfg.noise_std = 0.0;
        cfg.delay = 0.0;
        let init = FullState::with_constant_z(Vector2::zeros(), Vector2::zeros(), d.grid);
        let tr = closed_loop_simulate(&d, &cfg, init, Vector2::zeros(), 1e-5, 0.1, 100).unwrap();
        assert!(tr.composite_norm.iter().all(|v| *v == 0.0));
        assert!(tr.u.iter().all(|u| *u == Vector2::zeros()));
    }

    #[test]
    fn zero_delay_line_matches_undelayed_law() {
        let d = small_disc();
        let mut cfg = ClosedLoopConfig::paper();
        cfg.delay = 0.0;
        let init = FullState::with_constant_z(Vector2::new(0.01, -0.02), Vector2::zeros(), d.grid);
        let tr = closed_loop_simulate(&d, &cfg, init, Vector2::zeros(), 1e-5, 0.05, 10).unwrap();
        for (u, xh) in tr.u.iter().zip(&tr.xhat) {
            assert_eq!(*u, cfg.gains.f * xh);
        }
    }

    #[test]
    fn delayed_law_uses_past_estimate() {
        let d = small_disc();
        let cfg = ClosedLoopConfig::paper();
        let init = FullState::with_constant_z(Vector2::new(0.01, -0.02), Vector2::zeros(), d.grid);
        let tr = closed_loop_simulate(&d, &cfg, init, Vector2::new(0.005, 0.0), 1e-5, 0.1, 1).unwrap();
        // Sample k uses the estimate from k - 2000 steps (20 ms at 10 us).
        for k in [2500, 5000, 9000] {
            assert_eq!(tr.u[k], cfg.gains.f * tr.xhat[k - 2000]);
        }
        assert_eq!(tr.u[100], cfg.gains.f * Vector2::new(0.005, 0.0));
    }

    #[test]
    fn settling_time_uses_last_crossing() {
        let t = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v = [1.0, 0.05, 0.2, 0.05, 0.01];
        assert_eq!(settling_time(&t, &v, 0.1), Some(3.0));
        assert_eq!(settling_time(&t, &[1.0, 1.0, 1.0, 1.0, 1.0], 0.1), None);
    }

    #[test]
    fn bounding_exponential_fit() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        let v: Vec<f64> = t.iter().map(|x| 2.0 * (-1.5 * x).exp()).collect();
        let (b, s) = fit_bounding_exponential(&t, &v, 0.0);
        assert_relative_eq!(s, 1.5, max_relative = 1e-10);
        assert_relative_eq!(b, 2.0, max_relative = 1e-10);
    }

    proptest! {
        #[test]
        fn lyapunov_residual_random(tr in 0.1f64..10.0, det_frac in 0.01f64..0.99, off in -5.0f64..5.0, q in 0.1f64..10.0, complex in proptest::bool::ANY) {
            // Hurwitz by construction: trace < 0, det > 0.
            let det = if complex { tr * tr } else { det_frac * tr * tr / 4.0 };
            let a11 = -tr / 2.0 + off.signum() * 0.1;
            let a22 = -tr - a11;
            let a12 = if off == 0.0 { 1.0 } else { off };
            let a21 = (a11 * a22 - det) / a12;
            let a = Matrix2::new(a11, a12, a21, a22);
            let qm = lyapunov_solve(&a, q).unwrap();
            let r = a.transpose() * qm + qm * a + 2.0 * q * Matrix2::identity();
            prop_assert!(r.amax() < 1e-10 * (1.0 + qm.amax() * a.amax()));
            prop_assert!(qm[(0, 0)] > 0.0 && qm.determinant() > 0.0);
        }

        #[test]
        fn placement_random_pairs(a in prop::array::uniform4(-3.0f64..3.0), b in prop::array::uniform2(-3.0f64..3.0)) {
            let am = Matrix2::new(a[0], a[1], a[2], a[3]);
            let bm = Vector2::new(b[0], b[1]);
            let ctrb = Matrix2::from_columns(&[bm, am * bm]);
            prop_assume!(ctrb.determinant().abs() > 1e-2);
            let g = Matrix2::from_columns(&[bm, Vector2::zeros()]);
            let poles = [Complex64::new(-3.0, 0.0), Complex64::new(-4.0, 0.0)];
            let f = design_state_feedback(&am, &g, &poles).unwrap();
            assert_spectrum(&(am + g * f), &poles);
            let c = bm.transpose();
            let obs = [Complex64::new(-5.0, 0.0), Complex64::new(-6.0, 0.0)];
            let l = design_observer(&am.transpose(), &c, &obs).unwrap();
            assert_spectrum(&(am.transpose() + l * c), &obs);
        }
    }
}
