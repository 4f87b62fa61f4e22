//! Time-domain simulation of the full ODE-PDE interconnection and of the
//! frozen-coefficient boundary-layer subsystem.
//!
//! Space: first-order upwind differences on a uniform grid with the inflow
//! node pinned to zero. Time: explicit Euler. Nonlocal terms and tire forces
//! use the trapezoid rule on the same grid.

use nalgebra::{DMatrix, Vector2};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::ModelForm;
use crate::reduced::DIVERGENCE_THRESHOLD;
use crate::steady::{self, ForceLaw};

/// Lumped state, bristle deflections at the grid nodes and time.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub x: Vector2<f64>,
    pub z: [Vec<f64>; 2],
    pub t: f64,
}

impl FullState {
    /// State with a constant bristle deflection; node 0 is set to zero.
    pub fn with_constant_z(x: Vector2<f64>, z0: Vector2<f64>, grid: Grid) -> Self {
        let mut z = [vec![z0[0]; grid.n_nodes()], vec![z0[1]; grid.n_nodes()]];
        z[0][0] = 0.0;
        z[1][0] = 0.0;
        Self { x, z, t: 0.0 }
    }

    pub fn from_profile(x: Vector2<f64>, z: [Vec<f64>; 2]) -> Self {
        let mut s = Self { x, z, t: 0.0 };
        s.z[0][0] = 0.0;
        s.z[1][0] = 0.0;
        s
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite()) && self.z.iter().flatten().all(|v| v.is_finite())
    }
}

/// Largest explicit Euler step satisfying `(Lambda_ii / eps) dt / dxi <= 1`.
pub fn max_stable_dt(form: &ModelForm, grid: &Grid) -> f64 {
    form.eps * grid.spacing() / form.lambda.max()
}

pub fn check_cfl(form: &ModelForm, grid: &Grid, dt: f64) -> Result<()> {
    let dt_max = max_stable_dt(form, grid);
    if dt > 0.0 && dt <= dt_max * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(Error::Cfl { dt, dt_max })
    }
}

/// Grid-sampled kernels of one model, shared by every step of a run.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub form: ModelForm,
    pub grid: Grid,
    /// Trapezoid weight times pressure, per axle.
    wp: [Vec<f64>; 2],
    /// Trapezoid weight times pressure slope, per axle.
    wdp: [Vec<f64>; 2],
}

/// Scalar functionals of the bristle state of one axle.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    p: f64,
    dp: f64,
    end: f64,
}

impl Discretization {
    pub fn new(form: &ModelForm, grid: Grid) -> Self {
        let w = grid.trapezoid_weights();
        let sample = |i: usize, slope: bool| -> Vec<f64> {
            let p = form.pressure(i);
            grid.nodes()
                .zip(&w)
                .map(|(x, wj)| wj * if slope { p.slope(x) } else { p.value(x) })
                .collect()
        };
        Self {
            wp: [sample(0, false), sample(1, false)],
            wdp: [sample(0, true), sample(1, true)],
            form: form.clone(),
            grid,
        }
    }

    fn moments(&self, i: usize, z: &[f64]) -> Moments {
        let mut m = Moments {
            end: z[self.grid.n_cells()],
            ..Default::default()
        };
        for ((zj, a), b) in z.iter().zip(&self.wp[i]).zip(&self.wdp[i]) {
            m.p += a * zj;
            m.dp += b * zj;
        }
        m
    }

    /// Axle forces `K1 z + Sigma(alpha) K2 z + h1(alpha)`, trapezoid quadrature.
    pub fn tire_forces(&self, z: &[Vec<f64>; 2], alpha: &Vector2<f64>) -> Vector2<f64> {
        let kc = self.form.kernel_coefficients();
        Vector2::from_fn(|i, _| {
            let m = self.moments(i, &z[i]);
            let s = self.form.sigma_axle(i, alpha[i]);
            (kc.k1[i] + s * kc.k2[i]) * m.p + self.form.h1_axle(i, alpha[i])
        })
    }

    /// Transport-source update of one axle in place, `z += rate * (...)` with
    /// `rate = dt / eps` (or `ds` in stretched time). The source `h` is added
    /// as given.
    fn advance_axle(&self, i: usize, z: &mut [f64], s: f64, h: f64, rate: f64) {
        let kc = self.form.kernel_coefficients();
        let m = self.moments(i, z);
        let transport = self.form.lambda[i] / self.grid.spacing();
        let constant = s * kc.k3[i] * m.p + kc.k4[i] * m.dp + kc.k5[i] * m.end + h;
        // Descending order keeps z[j - 1] at its old value.
        for j in (1..z.len()).rev() {
            let rhs = -transport * (z[j] - z[j - 1]) + s * z[j] + constant;
            z[j] += rate * rhs;
        }
        z[0] = 0.0;
    }

    /// One explicit Euler step of the full system. Returns the axle forces
    /// evaluated at the start of the step.
    pub fn step(&self, state: &mut FullState, u: &Vector2<f64>, dt: f64) -> Vector2<f64> {
        let f = &self.form;
        let alpha = f.slip_angles(&state.x, u);
        let forces = self.tire_forces(&state.z, &alpha);
        let xdot = f.a1 * state.x + f.g1 * forces + f.b;
        let rate = dt / f.eps;
        for i in 0..2 {
            let s = f.sigma_axle(i, alpha[i]);
            let h = f.h2_axle(i, alpha[i]);
            self.advance_axle(i, &mut state.z[i], s, h, rate);
        }
        state.x += dt * xdot;
        state.t += dt;
        forces
    }

    /// `||z - phi(., alpha)||_{L2}` with the steady profile of `law`.
    pub fn zeta_norm(&self, z: &[Vec<f64>; 2], alpha: &Vector2<f64>, law: ForceLaw) -> Result<f64> {
        let phi = steady::steady_profile(alpha, &self.form, self.grid, law)?;
        let diff = [
            z[0].iter().zip(&phi.values[0]).map(|(a, b)| a - b).collect(),
            z[1].iter().zip(&phi.values[1]).map(|(a, b)| a - b).collect(),
        ];
        Ok(self.grid.l2_norm(&diff))
    }
}

/// Sampling and output options of a full simulation.
#[derive(Debug, Clone)]
pub struct FullSimOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between recorded samples; must divide the step count.
    pub stride: usize,
    pub snapshot_times: Vec<f64>,
    /// Steady profile used for the `zeta` diagnostic.
    pub zeta_law: ForceLaw,
}

#[derive(Debug, Clone, Default)]
pub struct FullTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector2<f64>>,
    pub u: Vec<Vector2<f64>>,
    pub forces: Vec<Vector2<f64>>,
    pub zeta_norm: Vec<f64>,
    pub snapshots: Vec<(f64, [Vec<f64>; 2])>,
    pub diverged: bool,
}

/// Number of steps for `[0, t_end]`, checking that `stride` divides it.
pub fn step_count(dt: f64, t_end: f64, stride: usize) -> Result<usize> {
    if !(dt > 0.0 && t_end >= dt) {
        return Err(Error::Config(format!("need dt > 0 and T >= dt (dt = {dt}, T = {t_end})")));
    }
    let steps = (t_end / dt).round() as usize;
    if ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::Config(format!("T = {t_end} is not a multiple of dt = {dt}")));
    }
    if stride == 0 || !steps.is_multiple_of(stride) {
        return Err(Error::Config(format!(
            "sample stride {stride} does not divide the step count {steps}"
        )));
    }
    Ok(steps)
}

/// Open-loop simulation with input `input(t)`.
pub fn simulate_full<I>(
    disc: &Discretization,
    initial: FullState,
    input: I,
    opts: &FullSimOptions,
) -> Result<FullTrajectory>
where
    I: Fn(f64) -> Vector2<f64>,
{
    check_cfl(&disc.form, &disc.grid, opts.dt)?;
    let steps = step_count(opts.dt, opts.t_end, opts.stride)?;
    let snap_steps: Vec<usize> = opts
        .snapshot_times
        .iter()
        .map(|t| (t / opts.dt).round() as usize)
        .collect();
    let mut state = FullState::from_profile(initial.x, initial.z);
    let mut traj = FullTrajectory::default();
    let record = |traj: &mut FullTrajectory, state: &FullState, t: f64| -> Result<()> {
        let u = input(t);
        let alpha = disc.form.slip_angles(&state.x, &u);
        traj.times.push(t);
        traj.x.push(state.x);
        traj.u.push(u);
        traj.forces.push(disc.tire_forces(&state.z, &alpha));
        traj.zeta_norm.push(disc.zeta_norm(&state.z, &alpha, opts.zeta_law)?);
        Ok(())
    };
    record(&mut traj, &state, 0.0)?;
    if snap_steps.contains(&0) {
        traj.snapshots.push((0.0, state.z.clone()));
    }
    for n in 0..steps {
        let t = n as f64 * opts.dt;
        disc.step(&mut state, &input(t), opts.dt);
        let k = n + 1;
        if !(state.x.norm() <= DIVERGENCE_THRESHOLD) || !state.is_finite() {
            traj.diverged = true;
            break;
        }
        let t_next = k as f64 * opts.dt;
        if k % opts.stride == 0 {
            record(&mut traj, &state, t_next)?;
        }
        if snap_steps.contains(&k) {
            traj.snapshots.push((t_next, state.z.clone()));
        }
    }
    Ok(traj)
}

/// Decay record of the boundary-layer subsystem.
#[derive(Debug, Clone)]
pub struct BoundaryLayerRecord {
    pub s: Vec<f64>,
    pub norms: Vec<f64>,
    /// Least-squares exponential rate fitted on the late window.
    pub omega_hat: f64,
    /// Start of the fit window in stretched time.
    pub fit_start: f64,
}

/// Integrate `zeta_s = -Lambda zeta_xi + Sigma(alpha)[zeta + K3 zeta] + K4 zeta`
/// with `alpha` frozen at `alpha(x, u)`, in stretched time `s = t / eps`.
pub fn simulate_boundary_layer(
    disc: &Discretization,
    zeta0: [Vec<f64>; 2],
    x: &Vector2<f64>,
    u: &Vector2<f64>,
    ds: f64,
    s_end: f64,
) -> Result<BoundaryLayerRecord> {
    let f = &disc.form;
    let ds_max = disc.grid.spacing() / f.lambda.max();
    if !(ds > 0.0 && ds <= ds_max * (1.0 + 1e-12)) {
        return Err(Error::Cfl { dt: ds, dt_max: ds_max });
    }
    let steps = (s_end / ds).round() as usize;
    let alpha = f.slip_angles(x, u);
    let sig = f.sigma(&alpha);
    let mut z = zeta0;
    z[0][0] = 0.0;
    z[1][0] = 0.0;
    let mut s = vec![0.0];
    let mut norms = vec![disc.grid.l2_norm(&z)];
    for n in 0..steps {
        for i in 0..2 {
            disc.advance_axle(i, &mut z[i], sig[i], 0.0, ds);
        }
        s.push((n + 1) as f64 * ds);
        norms.push(disc.grid.l2_norm(&z));
    }
    let transit = 1.0 / f.lambda.min();
    let (omega_hat, fit_start) = fit_decay_rate(&s, &norms, transit);
    Ok(BoundaryLayerRecord {
        s,
        norms,
        omega_hat,
        fit_start,
    })
}

/// Least-squares slope of `-ln(norm)` over the samples after `transit` that
/// also lie in the second half of the record and above `1e-250` times the
/// initial norm. Returns `(rate, window start)`; the rate is `+inf` when the
/// norm vanishes identically.
pub fn fit_decay_rate(s: &[f64], norms: &[f64], transit: f64) -> (f64, f64) {
    let n0 = norms[0];
    if n0 == 0.0 {
        return (f64::INFINITY, 0.0);
    }
    let half = s[s.len() - 1] * 0.5;
    let start = transit.max(half);
    let pts: Vec<(f64, f64)> = s
        .iter()
        .zip(norms)
        .filter(|(si, ni)| **si >= start && **ni > 1e-250 * n0)
        .map(|(si, ni)| (*si, ni.ln()))
        .collect();
    if pts.len() < 2 {
        return (f64::INFINITY, start);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (-sxy / sxx, start)
}

/// Matrix of the semi-discretized boundary-layer generator acting on the
/// unpinned nodes `1..=N` of both axles, ordered `[axle 1; axle 2]`.
pub fn boundary_layer_generator(disc: &Discretization, alpha: &Vector2<f64>) -> DMatrix<f64> {
    let n = disc.grid.n_cells();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let sig = disc.form.sigma(alpha);
    for i in 0..2 {
        let block = pde_block(disc, i, sig[i]);
        a.view_mut((i * n, i * n), (n, n)).copy_from(&block);
    }
    a
}

/// `N x N` matrix of the linear operator
/// `zeta -> -Lambda_i D zeta + s (zeta + K3 zeta) + K4 zeta` of one axle on
/// nodes `1..=N` (node 0 eliminated by the boundary condition).
pub fn pde_block(disc: &Discretization, i: usize, s: f64) -> DMatrix<f64> {
    let n = disc.grid.n_cells();
    let kc = disc.form.kernel_coefficients();
    let transport = disc.form.lambda[i] / disc.grid.spacing();
    let mut a = DMatrix::zeros(n, n);
    for r in 0..n {
        a[(r, r)] += -transport + s;
        if r > 0 {
            a[(r, r - 1)] += transport;
        }
        for c in 0..n {
            // Column c is node c + 1.
            a[(r, c)] += s * kc.k3[i] * disc.wp[i][c + 1] + kc.k4[i] * disc.wdp[i][c + 1];
        }
        a[(r, n - 1)] += kc.k5[i];
    }
    a
}

/// Row vectors mapping nodes `1..=N` of axle `i` to `(int p z, int p' z)`.
pub fn moment_rows(disc: &Discretization, i: usize) -> (Vec<f64>, Vec<f64>) {
    (disc.wp[i][1..].to_vec(), disc.wdp[i][1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Carcass, VehicleParams};
    use approx::assert_relative_eq;

    fn disc(carcass: Carcass, n: usize) -> Discretization {
        let f = ModelForm::default_for(&VehicleParams::table1(), carcass).unwrap();
        Discretization::new(&f, Grid::new(n))
    }

    #[test]
    fn cfl_bound_for_rigid_table1() {
        let d = disc(Carcass::Rigid, 50);
        assert_relative_eq!(max_stable_dt(&d.form, &d.grid), 3.6e-5, max_relative = 1e-12);
        assert!(check_cfl(&d.form, &d.grid, 1e-6).is_ok());
        match check_cfl(&d.form, &d.grid, 1e-4) {
            Err(Error::Cfl { dt_max, .. }) => assert_relative_eq!(dt_max, 3.6e-5, max_relative = 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forces_of_constant_deflection() {
        let d = disc(Carcass::Flexible, 50);
        let c = Vector2::new(0.027, 0.033);
        let st = FullState {
            x: Vector2::zeros(),
            z: [vec![c[0]; 51], vec![c[1]; 51]],
            t: 0.0,
        };
        let fy = d.tire_forces(&st.z, &Vector2::zeros());
        let p = VehicleParams::table1();
        for i in 0..2 {
            assert_relative_eq!(fy[i], p.f_z[i] * p.sigma0[i] * p.patch_len[i] * c[i], max_relative = 1e-13);
        }
        assert_eq!(d.tire_forces(&[vec![0.0; 51], vec![0.0; 51]], &Vector2::zeros()), Vector2::zeros());
    }

    #[test]
    fn forces_on_steady_profile_match_force_map() {
        for carcass in [Carcass::Rigid, Carcass::Flexible] {
            let d = disc(carcass, 400);
            let y = Vector2::new(0.03, -0.05);
            let phi = steady::solve_phi(&y, &d.form, d.grid).unwrap();
            let fy = d.tire_forces(&phi.values, &y);
            let exact = steady::force_map(&y, &d.form).unwrap();
            assert!((fy - exact).amax() < 1e-4 * exact.amax());
            let up = steady::steady_profile(&y, &d.form, d.grid, ForceLaw::Upwind(d.grid)).unwrap();
            let law = steady::force_map_with(&y, &d.form, ForceLaw::Upwind(d.grid)).unwrap();
            assert!((d.tire_forces(&up.values, &y) - law).amax() < 1e-10 * law.amax());
        }
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let d = disc(Carcass::Flexible, 50);
        let mut st = FullState::with_constant_z(Vector2::zeros(), Vector2::zeros(), d.grid);
        for _ in 0..100 {
            d.step(&mut st, &Vector2::zeros(), 1e-6);
        }
        assert_eq!(st.x, Vector2::zeros());
        assert!(st.z.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn boundary_node_stays_pinned() {
        let d = disc(Carcass::Flexible, 50);
        let mut st = FullState::with_constant_z(Vector2::new(0.03, -0.25), Vector2::new(0.027, 0.033), d.grid);
        for _ in 0..200 {
            d.step(&mut st, &Vector2::new(0.01, 0.0), 1e-5);
            assert_eq!(st.z[0][0], 0.0);
            assert_eq!(st.z[1][0], 0.0);
        }
    }

    #[test]
    fn paper_initial_bristle_norm() {
        let g = Grid::new(50);
        let st = FullState::with_constant_z(Vector2::zeros(), Vector2::new(0.027, 0.033), g);
        // Node 0 is pinned, which removes half a cell from the trapezoid sum.
        assert!((g.l2_norm(&st.z) - 0.0426).abs() < 1e-3);
    }

    #[test]
    fn grid_consistent_equilibrium_is_held() {
        let d = disc(Carcass::Flexible, 50);
        let u = Vector2::new(1e-4, 0.0);
        let eq = steady::find_equilibrium(&d.form, &u, &Vector2::zeros(), d.grid, ForceLaw::Upwind(d.grid), None)
            .unwrap();
        let opts = FullSimOptions {
            dt: 1e-5,
            t_end: 1.0,
            stride: 1000,
            snapshot_times: vec![],
            zeta_law: ForceLaw::Upwind(d.grid),
        };
        let init = FullState::from_profile(eq.x_star, eq.z_star.values.clone());
        let tr = simulate_full(&d, init, |_| u, &opts).unwrap();
        for x in &tr.x {
            assert!((x - eq.x_star).amax() < 1e-6);
        }
        assert!(tr.zeta_norm.iter().all(|z| *z < 1e-9));
    }

    #[test]
    fn frozen_slip_relaxes_to_steady_profile() {
        let d = disc(Carcass::Rigid, 50);
        let y = Vector2::new(0.05, 0.05);
        let phi = steady::steady_profile(&y, &d.form, d.grid, ForceLaw::Upwind(d.grid)).unwrap();
        let zeta0 = [
            phi.values[0].iter().map(|v| -v).collect(),
            phi.values[1].iter().map(|v| -v).collect(),
        ];
        // Solving for the transient of z = phi + zeta is the boundary-layer run.
        let rec = simulate_boundary_layer(&d, zeta0, &Vector2::new(0.05, 0.0), &Vector2::zeros(), 0.01, 3.0).unwrap();
        assert!(rec.omega_hat > 0.0);
        let after = rec.s.iter().position(|s| *s >= 1.0 / d.form.lambda.min()).unwrap();
        assert!(rec.norms[after..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn pure_transport_exits_after_transit_time() {
        let mut p = VehicleParams::table1();
        p.phi = [1.0, 1.0];
        let f = ModelForm::default_for(&p, Carcass::Flexible).unwrap();
        let n = 200;
        let d = Discretization::new(&f, Grid::new(n));
        // A bump near the inlet travels at speed Lambda_ii in stretched time.
        let bump: Vec<f64> = d.grid.nodes().map(|x| if (0.05..0.1).contains(&x) { 1.0 } else { 0.0 }).collect();
        let ds = d.grid.spacing() / f.lambda.max();
        let rec = simulate_boundary_layer(&d, [bump.clone(), vec![0.0; n + 1]], &Vector2::zeros(), &Vector2::zeros(), ds, 2.0)
            .unwrap();
        // Zero slip makes Sigma vanish, so only transport acts.
        let centroid_exit = 0.925 / f.lambda[0];
        let idx = rec.norms.iter().position(|v| *v < 0.5 * rec.norms[0]).unwrap();
        assert!((rec.s[idx] - centroid_exit).abs() < 2.0 * d.grid.spacing() / f.lambda[0] + 0.05 / f.lambda[0]);
    }

    #[test]
    fn decay_fit_recovers_exponential() {
        let s: Vec<f64> = (0..200).map(|k| k as f64 * 0.01).collect();
        let n: Vec<f64> = s.iter().map(|x| 3.0 * (-2.5 * x).exp()).collect();
        let (w, _) = fit_decay_rate(&s, &n, 0.1);
        assert_relative_eq!(w, 2.5, max_relative = 1e-10);
    }

    #[test]
    fn generator_matches_stepper() {
        let d = disc(Carcass::Flexible, 30);
        let y = Vector2::new(0.04, -0.02);
        let a = boundary_layer_generator(&d, &y);
        let zeta: Vec<f64> = (0..=30).map(|j| if j == 0 { 0.0 } else { (j as f64 * 0.37).sin() }).collect();
        let zeta2: Vec<f64> = (0..=30).map(|j| if j == 0 { 0.0 } else { (j as f64 * 0.11).cos() }).collect();
        let v = nalgebra::DVector::from_iterator(60, zeta[1..].iter().chain(&zeta2[1..]).copied());
        let av = &a * &v;
        let ds = 1e-3;
        let mut z = [zeta.clone(), zeta2.clone()];
        let sig = d.form.sigma(&y);
        for i in 0..2 {
            d.advance_axle(i, &mut z[i], sig[i], 0.0, ds);
        }
        for j in 1..=30 {
            assert_relative_eq!((z[0][j] - zeta[j]) / ds, av[j - 1], epsilon = 1e-9, max_relative = 1e-9);
            assert_relative_eq!((z[1][j] - zeta2[j]) / ds, av[30 + j - 1], epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn stride_must_divide_steps() {
        assert!(step_count(1e-3, 1.0, 7).is_err());
        assert_eq!(step_count(1e-3, 1.0, 10).unwrap(), 1000);
    }
}
