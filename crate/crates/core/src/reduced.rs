//! Quasi-static tire model: the lumped ODE with the bristle state replaced by
//! its steady profile.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ModelForm, VehicleParams};
use crate::steady::{self, ForceLaw};

/// Norm of the lumped state beyond which a run is stopped as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Default)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vector2<f64>>,
    pub u: Vec<Vector2<f64>>,
    pub forces: Vec<Vector2<f64>>,
    pub diverged: bool,
}

/// Right side of the reduced ODE.
pub fn reduced_rhs(
    form: &ModelForm,
    law: ForceLaw,
    x: &Vector2<f64>,
    u: &Vector2<f64>,
    b: &Vector2<f64>,
) -> Result<Vector2<f64>> {
    let alpha = form.slip_angles(x, u);
    Ok(form.a1 * x + form.g1 * steady::force_map_with(&alpha, form, law)? + b)
}

/// Classic fourth-order Runge-Kutta integration over `[0, t_end]`, recording
/// every `stride`-th step.
#[allow(clippy::too_many_arguments)]
pub fn simulate_reduced<I>(
    form: &ModelForm,
    law: ForceLaw,
    x0: Vector2<f64>,
    input: I,
    b: &Vector2<f64>,
    dt: f64,
    t_end: f64,
    stride: usize,
) -> Result<ReducedTrajectory>
where
    I: Fn(f64) -> Vector2<f64>,
{
    if !(dt > 0.0 && t_end >= dt) {
        return Err(Error::Config(format!(
            "reduced simulation needs dt > 0 and T >= dt (dt = {dt}, T = {t_end})"
        )));
    }
    if stride == 0 {
        return Err(Error::Config("sample stride must be positive".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let mut traj = ReducedTrajectory::default();
    let mut x = x0;
    let record = |traj: &mut ReducedTrajectory, t: f64, x: &Vector2<f64>| -> Result<()> {
        let u = input(t);
        let alpha = form.slip_angles(x, &u);
        traj.times.push(t);
        traj.x.push(*x);
        traj.u.push(u);
        traj.forces.push(steady::force_map_with(&alpha, form, law)?);
        Ok(())
    };
    record(&mut traj, 0.0, &x)?;
    for n in 0..steps {
        let t = n as f64 * dt;
        let u0 = input(t);
        let um = input(t + 0.5 * dt);
        let u1 = input(t + dt);
        let k1 = reduced_rhs(form, law, &x, &u0, b)?;
        let k2 = reduced_rhs(form, law, &(x + 0.5 * dt * k1), &um, b)?;
        let k3 = reduced_rhs(form, law, &(x + 0.5 * dt * k2), &um, b)?;
        let k4 = reduced_rhs(form, law, &(x + dt * k3), &u1, b)?;
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !(x.norm() <= DIVERGENCE_THRESHOLD) {
            traj.diverged = true;
            break;
        }
        if (n + 1) % stride == 0 {
            record(&mut traj, (n + 1) as f64 * dt, &x)?;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone)]
pub struct ReducedVerdict {
    pub eigenvalues: [Complex64; 2],
    pub hurwitz: bool,
    pub understeer_index: Option<f64>,
    pub c_tilde: Matrix2<f64>,
    pub a1_tilde: Matrix2<f64>,
}

impl ReducedVerdict {
    /// No understeer index is defined when the rear stiffness vanishes.
    pub fn degenerate(&self) -> bool {
        self.understeer_index.is_none()
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues[0].re.max(self.eigenvalues[1].re)
    }
}

pub fn eigenvalues_2x2(a: &Matrix2<f64>) -> [Complex64; 2] {
    let half_tr = 0.5 * a.trace();
    let disc = half_tr * half_tr - a.determinant();
    if disc >= 0.0 {
        let r = disc.sqrt();
        // Avoid cancellation in the smaller root.
        let big = if half_tr >= 0.0 { half_tr + r } else { half_tr - r };
        let small = if big != 0.0 { a.determinant() / big } else { 0.0 };
        let (lo, hi) = if big < small { (big, small) } else { (small, big) };
        [Complex64::new(lo, 0.0), Complex64::new(hi, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(half_tr, -im), Complex64::new(half_tr, im)]
    }
}

/// Local stability of the reduced model at a slip angle.
pub fn reduced_stability(alpha_star: &Vector2<f64>, form: &ModelForm, law: ForceLaw) -> Result<ReducedVerdict> {
    let c_tilde = steady::cornering_stiffness(alpha_star, form, law)?;
    Ok(verdict_from_stiffness(form, c_tilde))
}

pub fn verdict_from_stiffness(form: &ModelForm, c_tilde: Matrix2<f64>) -> ReducedVerdict {
    let a1_tilde = steady::a1_tilde(form, &c_tilde);
    let eigenvalues = eigenvalues_2x2(&a1_tilde);
    ReducedVerdict {
        hurwitz: eigenvalues.iter().all(|l| l.re < 0.0),
        understeer_index: steady::understeer_index(&c_tilde, form),
        eigenvalues,
        c_tilde,
        a1_tilde,
    }
}

/// Speed at which `det A1~` changes sign for an oversteer vehicle; `None` for
/// neutral or understeer stiffness pairs.
pub fn critical_speed(c1: f64, c2: f64, params: &VehicleParams) -> Option<f64> {
    let excess = params.l1 * c1 - params.l2 * c2;
    if excess <= 0.0 {
        return None;
    }
    let wheelbase = params.l1 + params.l2;
    Some((c1 * c2 * wheelbase * wheelbase / (params.m * excess)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Carcass;
    use approx::assert_relative_eq;
    use nalgebra::Matrix2;

    fn flexible() -> ModelForm {
        ModelForm::default_for(&VehicleParams::table1(), Carcass::Flexible).unwrap()
    }

    #[test]
    fn zero_state_is_invariant() {
        let f = flexible();
        let tr = simulate_reduced(&f, ForceLaw::Continuous, Vector2::zeros(), |_| Vector2::zeros(), &Vector2::zeros(), 1e-3, 1.0, 10)
            .unwrap();
        assert!(tr.x.iter().all(|x| *x == Vector2::zeros()));
        assert_eq!(tr.times.len(), 101);
    }

    #[test]
    fn richardson_step_halving() {
        let f = flexible();
        let x0 = Vector2::new(0.03, -0.25);
        let run = |dt: f64, stride| {
            simulate_reduced(&f, ForceLaw::Continuous, x0, |_| Vector2::zeros(), &Vector2::zeros(), dt, 1.0, stride)
                .unwrap()
                .x
                .last()
                .copied()
                .unwrap()
        };
        let a = run(4e-3, 1);
        let b = run(2e-3, 1);
        let c = run(1e-3, 1);
        let ratio = (a - b).norm() / (b - c).norm();
        assert!((ratio - 16.0).abs() < 3.0, "ratio {ratio}");
    }

    #[test]
    fn linear_regime_matches_matrix_exponential() {
        let f = flexible();
        let verdict = reduced_stability(&Vector2::zeros(), &f, ForceLaw::Continuous).unwrap();
        let x0 = Vector2::new(1e-6, -2e-6);
        let tr = simulate_reduced(&f, ForceLaw::Continuous, x0, |_| Vector2::zeros(), &Vector2::zeros(), 1e-3, 2.0, 500)
            .unwrap();
        for (t, x) in tr.times.iter().zip(&tr.x) {
            let exact = (verdict.a1_tilde * *t).exp() * x0;
            assert!((x - exact).norm() < 1e-4 * x0.norm(), "t={t}");
        }
    }

    #[test]
    fn table1_is_oversteer_but_hurwitz_at_50() {
        let f = flexible();
        let v = reduced_stability(&Vector2::zeros(), &f, ForceLaw::Continuous).unwrap();
        assert!(v.hurwitz);
        assert!((v.understeer_index.unwrap() - 1.0916).abs() < 1e-3);
        let vc = critical_speed(v.c_tilde[(0, 0)], v.c_tilde[(1, 1)], f.params()).unwrap();
        assert!((vc - 58.3).abs() < 0.2, "v_crit {vc}");
    }

    #[test]
    fn neutral_steer_symmetric_car_is_always_stable() {
        let mut p = VehicleParams::table1();
        p.l1 = 1.2;
        p.l2 = 1.2;
        for k in 1..=20 {
            p.v_x = 5.0 * k as f64;
            let f = ModelForm::default_for(&p, Carcass::Rigid).unwrap();
            let c = Matrix2::from_diagonal(&Vector2::new(8e4, 8e4));
            let v = verdict_from_stiffness(&f, c);
            assert_relative_eq!(v.understeer_index.unwrap(), 1.0);
            assert!(v.hurwitz);
        }
    }

    #[test]
    fn degenerate_rear_stiffness() {
        let f = flexible();
        let v = verdict_from_stiffness(&f, Matrix2::from_diagonal(&Vector2::new(7e4, 0.0)));
        assert!(v.degenerate());
    }

    #[test]
    fn hurwitz_flips_at_critical_speed() {
        let mut p = VehicleParams::table1();
        let c = Matrix2::from_diagonal(&Vector2::new(70224.0, 90061.2));
        let vc = critical_speed(c[(0, 0)], c[(1, 1)], &p).unwrap();
        for (v, stable) in [(vc - 0.5, true), (vc + 0.5, false)] {
            p.v_x = v;
            let f = ModelForm::default_for(&p, Carcass::Flexible).unwrap();
            assert_eq!(verdict_from_stiffness(&f, c).hurwitz, stable);
        }
    }

    #[test]
    fn understeer_is_stable_at_every_speed() {
        let mut p = VehicleParams::table1();
        let c = Matrix2::from_diagonal(&Vector2::new(50000.0, 90061.2));
        for k in 1..=20 {
            p.v_x = 5.0 * k as f64;
            let f = ModelForm::default_for(&p, Carcass::Flexible).unwrap();
            let v = verdict_from_stiffness(&f, c);
            assert!(v.understeer_index.unwrap() < 1.0);
            assert!(v.hurwitz);
            assert_eq!(v.hurwitz, steady::is_hurwitz_2x2(&v.a1_tilde));
        }
    }

    #[test]
    fn eigenvalues_of_diagonal_and_rotation() {
        let e = eigenvalues_2x2(&Matrix2::new(-1.0, 0.0, 0.0, -2.0));
        assert_eq!(e[0], Complex64::new(-2.0, 0.0));
        assert_eq!(e[1], Complex64::new(-1.0, 0.0));
        let e = eigenvalues_2x2(&Matrix2::new(-1.0, 3.0, -3.0, -1.0));
        assert_relative_eq!(e[1].im, 3.0);
        assert_relative_eq!(e[1].re, -1.0);
    }
}
