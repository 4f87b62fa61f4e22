//! Steady bristle profiles, the steady force map and system equilibria.
//!
//! For a frozen slip angle `y` the steady profile of axle `i` solves the
//! scalar nonlocal problem
//!
//! ```text
//! phi' / Lbar_i = s (phi + K3 phi) + K4 phi + h,   phi(0) = 0,
//! ```
//!
//! with `s = Sigma_ii(y)` and `h = h2_i(y)`. The right side is `s phi + q` for
//! a constant `q` that depends on `phi` only through three scalar functionals
//! (`int p phi`, `int p' phi`, `phi(1)`), so the solution is `q` times a unit
//! response and `q` is found by fixed-point iteration on those functionals.
//!
//! Two force laws are provided. [`ForceLaw::Continuous`] uses the exact unit
//! response and exact moments. [`ForceLaw::Upwind`] uses the steady state of
//! the upwind/trapezoid semi-discretization that the time-domain simulator
//! integrates, so equilibria computed with it are exact fixed points of the
//! discrete dynamics.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::grid::{gauss_legendre, Grid};
use crate::model::{Carcass, ModelForm, PressureProfile};

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 200;
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;
/// Panels of the composite Gauss-Legendre rule used for exact moments.
const MOMENT_PANELS: usize = 64;

/// How the steady force map is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForceLaw {
    /// Exact steady profile and exact integrals.
    #[default]
    Continuous,
    /// Steady state of the upwind scheme on the given grid, trapezoid integrals.
    Upwind(Grid),
}

/// `expm1(a x) / a`, the solution of `g' = a g + 1`, `g(0) = 0`.
pub fn unit_shape(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        x
    } else {
        (a * x).exp_m1() / a
    }
}

/// `int_0^1 unit_shape(a, x) dx = (expm1(a) - a) / a^2`.
fn unit_shape_mean(a: f64) -> f64 {
    if a.abs() < 1e-3 {
        0.5 + a * (1.0 / 6.0 + a * (1.0 / 24.0 + a * (1.0 / 120.0 + a / 720.0)))
    } else {
        (a.exp_m1() - a) / (a * a)
    }
}

/// Response of one axle to a unit constant source, with the functionals that
/// feed back into the source.
struct UnitResponse {
    /// Nodal values when computed on a grid.
    nodal: Option<Vec<f64>>,
    /// `int p u`.
    p_moment: f64,
    /// `int p' u`.
    dp_moment: f64,
    /// `u(1)`.
    end: f64,
}

fn continuous_response(form: &ModelForm, i: usize, s: f64) -> UnitResponse {
    let lb = form.lbar_axle()[i];
    let a = lb * s;
    let end = lb * unit_shape(a, 1.0);
    match form.pressure(i) {
        PressureProfile::Constant => UnitResponse {
            nodal: None,
            p_moment: lb * unit_shape_mean(a),
            dp_moment: 0.0,
            end,
        },
        p => {
            let g = Grid::new(MOMENT_PANELS);
            UnitResponse {
                nodal: None,
                p_moment: lb * gauss_legendre(&g, |x| p.value(x) * unit_shape(a, x)),
                dp_moment: lb * gauss_legendre(&g, |x| p.slope(x) * unit_shape(a, x)),
                end,
            }
        }
    }
}

fn upwind_response(form: &ModelForm, i: usize, s: f64, grid: &Grid) -> UnitResponse {
    let transport = form.lambda[i] / grid.spacing();
    let diag = transport - s;
    let rho = transport / diag;
    let mut w = vec![0.0; grid.n_nodes()];
    for j in 1..grid.n_nodes() {
        w[j] = rho * w[j - 1] + 1.0 / diag;
    }
    let p = form.pressure(i);
    let pw: Vec<f64> = grid.nodes().zip(&w).map(|(x, v)| p.value(x) * v).collect();
    let dpw: Vec<f64> = grid.nodes().zip(&w).map(|(x, v)| p.slope(x) * v).collect();
    UnitResponse {
        p_moment: grid.integrate(&pw),
        dp_moment: grid.integrate(&dpw),
        end: w[grid.n_cells()],
        nodal: Some(w),
    }
}

/// Amplitude `q` of the constant source for one axle.
fn source_amplitude(form: &ModelForm, i: usize, s: f64, h: f64, unit: &UnitResponse) -> Result<f64> {
    let kc = form.kernel_coefficients();
    let feedback = s * kc.k3[i] * unit.p_moment + kc.k4[i] * unit.dp_moment + kc.k5[i] * unit.end;
    if feedback == 0.0 || h == 0.0 {
        return Ok(h);
    }
    let mut q = h;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let next = h + feedback * q;
        if !next.is_finite() {
            break;
        }
        if (next - q).abs() <= FIXED_POINT_TOL * next.abs() {
            return Ok(next);
        }
        q = next;
    }
    Err(Error::NonContraction {
        component: i + 1,
        iterations: FIXED_POINT_MAX_ITER,
    })
}

/// Steady bristle profile sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BristleProfile {
    pub grid: Grid,
    pub values: [Vec<f64>; 2],
    pub y: Vector2<f64>,
}

impl BristleProfile {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: [vec![0.0; grid.n_nodes()], vec![0.0; grid.n_nodes()]],
            y: Vector2::zeros(),
        }
    }
}

/// Exact steady profile at the grid nodes.
pub fn solve_phi(y: &Vector2<f64>, form: &ModelForm, grid: Grid) -> Result<BristleProfile> {
    steady_profile(y, form, grid, ForceLaw::Continuous)
}

/// Steady profile under the given force law. For [`ForceLaw::Upwind`] the
/// grid of the law is used and `grid` must match it.
pub fn steady_profile(
    y: &Vector2<f64>,
    form: &ModelForm,
    grid: Grid,
    law: ForceLaw,
) -> Result<BristleProfile> {
    let mut values = [Vec::new(), Vec::new()];
    for (i, out) in values.iter_mut().enumerate() {
        let s = form.sigma_axle(i, y[i]);
        let h = form.h2_axle(i, y[i]);
        *out = match law {
            ForceLaw::Continuous => {
                let unit = continuous_response(form, i, s);
                let q = source_amplitude(form, i, s, h, &unit)?;
                let lb = form.lbar_axle()[i];
                let a = lb * s;
                grid.nodes().map(|x| q * lb * unit_shape(a, x)).collect()
            }
            ForceLaw::Upwind(g) => {
                assert_eq!(g, grid, "upwind force law grid differs from profile grid");
                let unit = upwind_response(form, i, s, &g);
                let q = source_amplitude(form, i, s, h, &unit)?;
                unit.nodal.unwrap().into_iter().map(|w| q * w).collect()
            }
        };
    }
    Ok(BristleProfile {
        grid,
        values,
        y: *y,
    })
}

/// Steady lateral axle forces `Phi(y) = K1 phi + Sigma(y) K2 phi + h1(y)`.
pub fn force_map(y: &Vector2<f64>, form: &ModelForm) -> Result<Vector2<f64>> {
    force_map_with(y, form, ForceLaw::Continuous)
}

pub fn force_map_with(y: &Vector2<f64>, form: &ModelForm, law: ForceLaw) -> Result<Vector2<f64>> {
    let kc = form.kernel_coefficients();
    let mut out = Vector2::zeros();
    for i in 0..2 {
        let s = form.sigma_axle(i, y[i]);
        let h = form.h2_axle(i, y[i]);
        let unit = match law {
            ForceLaw::Continuous => continuous_response(form, i, s),
            ForceLaw::Upwind(g) => upwind_response(form, i, s, &g),
        };
        let q = source_amplitude(form, i, s, h, &unit)?;
        out[i] = (kc.k1[i] + s * kc.k2[i]) * q * unit.p_moment + form.h1_axle(i, y[i]);
    }
    Ok(out)
}

/// Diagonal matrix of generalized cornering stiffnesses `dPhi/dy` at `alpha`,
/// by central differences with step `max(1e-6, 1e-6 |alpha_i|)`.
pub fn cornering_stiffness(alpha: &Vector2<f64>, form: &ModelForm, law: ForceLaw) -> Result<Matrix2<f64>> {
    let mut c = Matrix2::zeros();
    for i in 0..2 {
        let h = f64::max(1e-6, 1e-6 * alpha[i].abs());
        let mut plus = *alpha;
        let mut minus = *alpha;
        plus[i] += h;
        minus[i] -= h;
        let fp = force_map_with(&plus, form, law)?[i];
        let fm = force_map_with(&minus, form, law)?[i];
        c[(i, i)] = (fp - fm) / (2.0 * h);
    }
    Ok(c)
}

/// Linearization of the reduced dynamics about a slip angle.
pub fn a1_tilde(form: &ModelForm, c_tilde: &Matrix2<f64>) -> Matrix2<f64> {
    form.a1 + form.g1 * c_tilde * form.a2
}

pub fn g1_tilde(form: &ModelForm, c_tilde: &Matrix2<f64>) -> Matrix2<f64> {
    form.g1 * c_tilde * form.g2
}

/// Hurwitz test of a real 2x2 matrix by trace and determinant.
pub fn is_hurwitz_2x2(a: &Matrix2<f64>) -> bool {
    a.trace() < 0.0 && a.determinant() > 0.0
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub x_star: Vector2<f64>,
    pub z_star: BristleProfile,
    pub alpha_star: Vector2<f64>,
    pub f_star: Vector2<f64>,
    pub u_star: Vector2<f64>,
    pub b: Vector2<f64>,
    pub c_tilde: Matrix2<f64>,
    pub a1_tilde: Matrix2<f64>,
    pub g1_tilde: Matrix2<f64>,
    pub law: ForceLaw,
    pub residual: f64,
    pub iterations: usize,
}

impl Equilibrium {
    /// Understeer index `C1 l1 / (C2 l2)`; `None` when `C2 = 0`.
    pub fn understeer_index(&self, form: &ModelForm) -> Option<f64> {
        understeer_index(&self.c_tilde, form)
    }
}

pub fn understeer_index(c_tilde: &Matrix2<f64>, form: &ModelForm) -> Option<f64> {
    let p = form.params();
    let rear = c_tilde[(1, 1)] * p.l2;
    if rear == 0.0 {
        None
    } else {
        Some(c_tilde[(0, 0)] * p.l1 / rear)
    }
}

fn reduced_residual(
    x: &Vector2<f64>,
    u: &Vector2<f64>,
    b: &Vector2<f64>,
    form: &ModelForm,
    law: ForceLaw,
) -> Result<Vector2<f64>> {
    let alpha = form.slip_angles(x, u);
    Ok(form.a1 * x + form.g1 * force_map_with(&alpha, form, law)? + b)
}

/// Equilibrium for a constant input and disturbance by damped Newton on the
/// reduced residual `A1 X + G1 Phi(A2 X + G2 U) + b`.
pub fn find_equilibrium(
    form: &ModelForm,
    u_star: &Vector2<f64>,
    b: &Vector2<f64>,
    grid: Grid,
    law: ForceLaw,
    guess: Option<Vector2<f64>>,
) -> Result<Equilibrium> {
    let mut x = guess.unwrap_or_else(Vector2::zeros);
    let mut r = reduced_residual(&x, u_star, b, form, law)?;
    let mut iterations = 0;
    while r.amax() >= NEWTON_TOL {
        if iterations == NEWTON_MAX_ITER {
            return Err(Error::NewtonStagnation {
                iterations,
                residual: r.amax(),
            });
        }
        iterations += 1;
        let c = cornering_stiffness(&form.slip_angles(&x, u_star), form, law)?;
        let jac = a1_tilde(form, &c);
        let step = jac.lu().solve(&(-r)).ok_or(Error::NewtonStagnation {
            iterations,
            residual: r.amax(),
        })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = x + lambda * step;
            let rt = reduced_residual(&trial, u_star, b, form, law)?;
            if rt.amax() < r.amax() {
                x = trial;
                r = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonStagnation {
                iterations,
                residual: r.amax(),
            });
        }
    }
    let alpha = form.slip_angles(&x, u_star);
    let c_tilde = cornering_stiffness(&alpha, form, law)?;
    let z_star = match law {
        ForceLaw::Upwind(g) => steady_profile(&alpha, form, g, law)?,
        ForceLaw::Continuous => solve_phi(&alpha, form, grid)?,
    };
    Ok(Equilibrium {
        x_star: x,
        z_star,
        alpha_star: alpha,
        f_star: force_map_with(&alpha, form, law)?,
        u_star: *u_star,
        b: *b,
        a1_tilde: a1_tilde(form, &c_tilde),
        g1_tilde: g1_tilde(form, &c_tilde),
        c_tilde,
        law,
        residual: r.amax(),
        iterations,
    })
}

/// Numerical estimate of `sup |d phi / d y|` over a box `|y_i| <= bound`,
/// sampled on `samples` points per axis. Diagnostic only.
pub fn estimate_m_phi(form: &ModelForm, bound: f64, samples: usize) -> Result<f64> {
    let grid = Grid::new(64);
    let mut best: f64 = 0.0;
    let h = 1e-6;
    for k in 0..samples {
        let yk = if samples == 1 {
            0.0
        } else {
            -bound + 2.0 * bound * k as f64 / (samples - 1) as f64
        };
        let plus = solve_phi(&Vector2::repeat(yk + h), form, grid)?;
        let minus = solve_phi(&Vector2::repeat(yk - h), form, grid)?;
        for i in 0..2 {
            for (a, b) in plus.values[i].iter().zip(&minus.values[i]) {
                best = best.max(((a - b) / (2.0 * h)).abs());
            }
        }
    }
    Ok(best)
}

/// True when the carcass model carries nonlocal terms.
pub fn is_nonlocal(form: &ModelForm) -> bool {
    form.carcass == Carcass::Flexible && form.kernel_coefficients().k5.amax() > 0.0
}
