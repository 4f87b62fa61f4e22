//! Linearized full-model generator, its spectrum, and stability charts over
//! (understeer index, speed).

use nalgebra::{DMatrix, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Carcass, ModelForm, PressureProfile, VehicleParams};
use crate::pde::{moment_rows, pde_block, Discretization};
use crate::reduced;
use crate::steady::{self, Equilibrium, ForceLaw};

/// Dense generator of the linearized semi-discrete system, ordered
/// `[X; z_1 nodes 1..=N; z_2 nodes 1..=N]`. Node 0 is eliminated by the
/// boundary condition.
#[derive(Debug, Clone)]
pub struct LinearGenerator {
    pub matrix: DMatrix<f64>,
    pub n_cells: usize,
    pub alpha_star: Vector2<f64>,
}

/// Central-difference slope of `f` at `y` with step `max(1e-6, 1e-6 |y|)`.
/// At a kink this is the mean of the one-sided slopes.
fn slope<F: Fn(f64) -> f64>(f: F, y: f64) -> f64 {
    let h = f64::max(1e-6, 1e-6 * y.abs());
    (f(y + h) - f(y - h)) / (2.0 * h)
}

/// Linearize about an equilibrium whose bristle profile lives on `disc.grid`.
pub fn assemble_generator(eq: &Equilibrium, disc: &Discretization) -> LinearGenerator {
    let f = &disc.form;
    let n = disc.grid.n_cells();
    let size = 2 + 2 * n;
    let kc = f.kernel_coefficients();
    let alpha = eq.alpha_star;
    let sig = f.sigma(&alpha);
    let mut m = DMatrix::zeros(size, size);

    // Sensitivities of the forces and of the PDE source to alpha.
    let mut force_alpha = Vector2::zeros();
    let mut source_alpha: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
    for i in 0..2 {
        let z = &eq.z_star.values[i];
        let (wp, _) = moment_rows(disc, i);
        let p_star: f64 = wp.iter().zip(&z[1..]).map(|(w, v)| w * v).sum();
        let ds = slope(|y| f.sigma_axle(i, y), alpha[i]);
        let dh1 = slope(|y| f.h1_axle(i, y), alpha[i]);
        let dh2 = slope(|y| f.h2_axle(i, y), alpha[i]);
        force_alpha[i] = ds * kc.k2[i] * p_star + dh1;
        for j in 0..n {
            source_alpha[i][j] = ds * (z[j + 1] + kc.k3[i] * p_star) + dh2;
        }
    }

    // Lumped block and coupling from z into X.
    let a1 = f.a1 + f.g1 * nalgebra::Matrix2::from_diagonal(&force_alpha) * f.a2;
    m.view_mut((0, 0), (2, 2)).copy_from(&a1);
    for i in 0..2 {
        let (wp, _) = moment_rows(disc, i);
        let gain = kc.k1[i] + sig[i] * kc.k2[i];
        for (c, w) in wp.iter().enumerate() {
            for r in 0..2 {
                m[(r, 2 + i * n + c)] = f.g1[(r, i)] * gain * w;
            }
        }
    }

    // PDE blocks and coupling from X into z.
    let inv_eps = 1.0 / f.eps;
    for i in 0..2 {
        let block = pde_block(disc, i, sig[i]) * inv_eps;
        m.view_mut((2 + i * n, 2 + i * n), (n, n)).copy_from(&block);
        for j in 0..n {
            for c in 0..2 {
                m[(2 + i * n + j, c)] = inv_eps * source_alpha[i][j] * f.a2[(i, c)];
            }
        }
    }

    LinearGenerator {
        matrix: m,
        n_cells: n,
        alpha_star: alpha,
    }
}

/// Eigenvalues of a dense real matrix via the real Schur form.
pub fn spectrum(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let size = a.nrows();
    let max_abs = a.amax();
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Eigensolver { size, max_abs });
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::Eigensolver { size, max_abs })?;
    let ev = schur.complex_eigenvalues();
    Ok(ev.iter().copied().collect())
}

pub fn max_real_part(eigs: &[Complex64]) -> f64 {
    eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Rightmost real part of the full generator at the zero equilibrium.
pub fn zero_equilibrium_abscissa(form: &ModelForm, grid: Grid) -> Result<f64> {
    let disc = Discretization::new(form, grid);
    let eq = steady::find_equilibrium(form, &Vector2::zeros(), &Vector2::zeros(), grid, ForceLaw::Upwind(grid), None)?;
    let gen = assemble_generator(&eq, &disc);
    Ok(max_real_part(&spectrum(&gen.matrix)?))
}

/// Copy of `params` with the front micro-stiffness scaled so that the
/// understeer index `C1(0) l1 / (C2(0) l2)` equals `target`.
pub fn params_for_index(
    params: &VehicleParams,
    carcass: Carcass,
    pressure: &[PressureProfile; 2],
    target: f64,
) -> Result<VehicleParams> {
    let mut p = params.clone();
    // C1(0) is proportional to sigma0_1, so one rescaling is exact up to the
    // finite-difference error; a second pass removes it.
    for _ in 0..2 {
        let form = ModelForm::assemble(&p, carcass, pressure.clone(), Default::default())?;
        let c = steady::cornering_stiffness(&Vector2::zeros(), &form, ForceLaw::Continuous)?;
        let index = steady::understeer_index(&c, &form).ok_or(Error::InvalidParameter {
            field: "sigma0_2",
            value: p.sigma0[1],
            reason: "rear cornering stiffness vanishes",
        })?;
        p.sigma0[0] *= target / index;
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartCell {
    pub understeer_index: f64,
    pub v_x: f64,
    pub max_real_part: f64,
    pub stable: bool,
    /// Critical speed of the reduced model, if the cell is oversteer.
    pub v_crit: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub index: Vec<f64>,
    pub v_x: Vec<f64>,
    pub n_cells: usize,
    pub carcass: Carcass,
    pub pressure: [PressureProfile; 2],
}

/// `steps` equally spaced values on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![lo],
        _ => (0..steps)
            .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
            .collect(),
    }
}

fn chart_cell(base: &VehicleParams, spec: &ChartSpec, index: f64, v_x: f64) -> Result<ChartCell> {
    let mut p = params_for_index(base, spec.carcass, &spec.pressure, index)?;
    p.v_x = v_x;
    let form = ModelForm::assemble(&p, spec.carcass, spec.pressure.clone(), Default::default())?;
    let grid = Grid::new(spec.n_cells);
    let mrp = zero_equilibrium_abscissa(&form, grid)?;
    let c = steady::cornering_stiffness(&Vector2::zeros(), &form, ForceLaw::Continuous)?;
    Ok(ChartCell {
        understeer_index: index,
        v_x,
        max_real_part: mrp,
        stable: mrp < 0.0,
        v_crit: reduced::critical_speed(c[(0, 0)], c[(1, 1)], &p),
        error: None,
    })
}

/// Evaluate every (index, v_x) cell, index-major. Cells run in parallel on
/// the current rayon pool; failures are recorded per cell.
pub fn sweep_chart(base: &VehicleParams, spec: &ChartSpec) -> Vec<ChartCell> {
    let pairs: Vec<(f64, f64)> = spec
        .index
        .iter()
        .flat_map(|i| spec.v_x.iter().map(move |v| (*i, *v)))
        .collect();
    pairs
        .par_iter()
        .map(|&(index, v_x)| {
            chart_cell(base, spec, index, v_x).unwrap_or_else(|e| ChartCell {
                understeer_index: index,
                v_x,
                max_real_part: f64::NAN,
                stable: false,
                v_crit: None,
                error: Some(e.to_string()),
            })
        })
        .collect()
}

/// Run `sweep_chart` on a dedicated pool of `jobs` threads (0 = rayon default).
pub fn sweep_chart_with_jobs(base: &VehicleParams, spec: &ChartSpec, jobs: usize) -> Result<Vec<ChartCell>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(|| sweep_chart(base, spec)))
}
