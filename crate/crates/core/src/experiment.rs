//! Composite experiments shared by the command line and the test suites.

use nalgebra::Vector2;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;

use crate::chart;
use crate::control::{self, ClosedLoopConfig, ClosedLoopTrajectory};
use crate::error::Result;
use crate::grid::Grid;
use crate::model::ModelForm;
use crate::pde::{self, Discretization, FullSimOptions, FullState, FullTrajectory};
use crate::reduced::{self, ReducedTrajectory};
use crate::steady::{self, ForceLaw};

/// Uniform samples on `[lo, hi)` from a seeded SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct UniformStream(SplitMix64);

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        lo + (hi - lo) * u
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryLayerCase {
    pub x: Vector2<f64>,
    pub u: Vector2<f64>,
    pub alpha: Vector2<f64>,
    /// Rate fitted to the simulated decay.
    pub omega_hat: f64,
    /// `-max Re` of the semi-discrete generator.
    pub spectral_rate: f64,
    pub record: pde::BoundaryLayerRecord,
}

impl BoundaryLayerCase {
    pub fn relative_gap(&self) -> f64 {
        (self.omega_hat - self.spectral_rate).abs() / self.spectral_rate.abs()
    }
}

/// Frozen-slip relaxation from a constant deflection `z0` toward the steady
/// profile, with `ds = cfl * ds_max`.
pub fn boundary_layer_case(
    disc: &Discretization,
    x: Vector2<f64>,
    u: Vector2<f64>,
    z0: Vector2<f64>,
    cfl: f64,
    s_end: f64,
) -> Result<BoundaryLayerCase> {
    let f = &disc.form;
    let alpha = f.slip_angles(&x, &u);
    let phi = steady::steady_profile(&alpha, f, disc.grid, ForceLaw::Upwind(disc.grid))?;
    let zeta0 = [0, 1].map(|i| phi.values[i].iter().map(|p| z0[i] - p).collect::<Vec<_>>());
    let ds = cfl * disc.grid.spacing() / f.lambda.max();
    let record = pde::simulate_boundary_layer(disc, zeta0, &x, &u, ds, s_end)?;
    let eigs = chart::spectrum(&pde::boundary_layer_generator(disc, &alpha))?;
    Ok(BoundaryLayerCase {
        x,
        u,
        alpha,
        omega_hat: record.omega_hat,
        spectral_rate: -chart::max_real_part(&eigs),
        record,
    })
}

/// `count` frozen `(X, U)` pairs with every slip angle within `alpha_max`.
pub fn random_frozen_states(form: &ModelForm, seed: u64, count: usize, alpha_max: f64) -> Vec<(Vector2<f64>, Vector2<f64>)> {
    let mut rng = UniformStream::new(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = Vector2::new(rng.next(-0.15, 0.15), rng.next(-0.6, 0.6));
        let u = Vector2::new(rng.next(-0.1, 0.1), 0.0);
        if form.slip_angles(&x, &u).amax() <= alpha_max {
            out.push((x, u));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct EpsilonRun {
    pub eps: f64,
    /// Largest `|X_full - X_reduced|` over the common sample times.
    pub gap: f64,
    pub full: FullTrajectory,
}

#[derive(Debug, Clone)]
pub struct EpsilonSweep {
    pub reduced: ReducedTrajectory,
    pub runs: Vec<EpsilonRun>,
}

impl EpsilonSweep {
    pub fn gaps(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.gap).collect()
    }

    /// Successive gap ratios `gap_k / gap_{k+1}`.
    pub fn ratios(&self) -> Vec<f64> {
        self.runs.windows(2).map(|w| w[0].gap / w[1].gap).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EpsilonSweepSpec {
    pub x0: Vector2<f64>,
    pub z0: Vector2<f64>,
    pub input: Vector2<f64>,
    /// Factors applied to the nominal time-scale parameter.
    pub scales: Vec<f64>,
    /// Full-model step at scale 1; scaled with the time-scale parameter.
    pub dt: f64,
    pub t_end: f64,
    /// Spacing of the compared samples.
    pub sample_dt: f64,
    pub reduced_dt: f64,
}

/// Full model at shrinking time-scale parameter against the reduced model.
///
/// The reduced reference uses the upwind force law on the same grid, so the
/// gap measures the singular-perturbation error and not the spatial one.
pub fn epsilon_sweep(form: &ModelForm, grid: Grid, spec: &EpsilonSweepSpec) -> Result<EpsilonSweep> {
    let law = ForceLaw::Upwind(grid);
    let u = spec.input;
    let red_stride = (spec.sample_dt / spec.reduced_dt).round() as usize;
    let reduced = reduced::simulate_reduced(form, law, spec.x0, |_| u, &form.b, spec.reduced_dt, spec.t_end, red_stride)?;
    let runs = spec
        .scales
        .par_iter()
        .map(|&scale| {
            let f = form.with_eps(form.eps * scale);
            let disc = Discretization::new(&f, grid);
            let dt = spec.dt * scale;
            let opts = FullSimOptions {
                dt,
                t_end: spec.t_end,
                stride: (spec.sample_dt / dt).round() as usize,
                snapshot_times: Vec::new(),
                zeta_law: law,
            };
            let full = pde::simulate_full(&disc, FullState::with_constant_z(spec.x0, spec.z0, grid), |_| u, &opts)?;
            let gap = full
                .x
                .iter()
                .zip(&reduced.x)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            Ok(EpsilonRun { eps: f.eps, gap, full })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EpsilonSweep { reduced, runs })
}

/// Initial lumped state of the k-sweep, `-k [0.03, -0.05]`.
pub fn k_sweep_initial(k: f64) -> Vector2<f64> {
    -k * Vector2::new(0.03, -0.05)
}

#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub label: f64,
    pub trajectory: ClosedLoopTrajectory,
    /// Mean composite norm over the last second of an equilibrium start.
    pub floor: f64,
}

impl ClosedLoopRun {
    pub fn initial_norm(&self) -> f64 {
        self.trajectory.composite_norm[0]
    }

    /// First time the composite norm falls below `fraction` of its initial
    /// value plus the noise floor.
    pub fn crossing_time(&self, fraction: f64) -> Option<f64> {
        let thr = fraction * self.initial_norm() + self.floor;
        let tr = &self.trajectory;
        tr.composite_norm.iter().position(|n| *n < thr).map(|k| tr.times[k])
    }

    /// Mean composite norm over the final second.
    pub fn tail_mean(&self) -> f64 {
        let tr = &self.trajectory;
        let start = tr.times[tr.times.len() - 1] - 1.0;
        let tail: Vec<f64> = tr
            .times
            .iter()
            .zip(&tr.composite_norm)
            .filter(|(t, _)| **t >= start)
            .map(|(_, n)| *n)
            .collect();
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClosedLoopNumerics {
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
}

/// Closed-loop run from `(x0, z0, xhat0)` together with its noise floor.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_with_floor(
    form: &ModelForm,
    grid: Grid,
    config: &ClosedLoopConfig,
    x0: Vector2<f64>,
    z0: Vector2<f64>,
    xhat0: Vector2<f64>,
    num: ClosedLoopNumerics,
    label: f64,
) -> Result<ClosedLoopRun> {
    let disc = Discretization::new(form, grid);
    let eq = steady::find_equilibrium(form, &config.u_star, &form.b, grid, ForceLaw::Upwind(grid), Some(config.x_star))?;
    let mut cfg = config.clone();
    cfg.x_star = eq.x_star;
    let trajectory = control::closed_loop_simulate(
        &disc,
        &cfg,
        FullState::with_constant_z(x0, z0, grid),
        xhat0,
        num.dt,
        num.t_end,
        num.stride,
    )?;
    let floor = control::noise_floor(&disc, &cfg, eq.z_star.values, num.dt, num.t_end, num.stride)?;
    Ok(ClosedLoopRun { label, trajectory, floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Carcass, VehicleParams};

    #[test]
    fn uniform_stream_is_seeded() {
        let a: Vec<f64> = {
            let mut r = UniformStream::new(7);
            (0..5).map(|_| r.next(-1.0, 1.0)).collect()
        };
        let mut r = UniformStream::new(7);
        assert!(a.iter().all(|v| *v == r.next(-1.0, 1.0)));
        assert!(a.iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn frozen_states_respect_slip_bound() {
        let f = ModelForm::default_for(&VehicleParams::table1(), Carcass::Flexible).unwrap();
        for (x, u) in random_frozen_states(&f, 3, 20, 0.2) {
            assert!(f.slip_angles(&x, &u).amax() <= 0.2);
        }
    }

    #[test]
    fn boundary_layer_rates_agree() {
        let f = ModelForm::default_for(&VehicleParams::table1(), Carcass::Flexible).unwrap();
        let d = Discretization::new(&f, Grid::new(30));
        let c = boundary_layer_case(&d, Vector2::new(0.02, 0.1), Vector2::zeros(), Vector2::new(0.027, 0.033), 0.5, 8.0)
            .unwrap();
        assert!(c.omega_hat > 0.0);
        assert!(c.relative_gap() < 0.2, "{} vs {}", c.omega_hat, c.spectral_rate);
    }
}
