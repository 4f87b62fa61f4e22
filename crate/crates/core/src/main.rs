use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use semitrack::chart;
use semitrack::experiment::{self, ClosedLoopNumerics, EpsilonSweepSpec};
use semitrack::grid::Grid;
use semitrack::io::{self, Angle, RunRecord, Scenario, ScenarioFile, Table};
use semitrack::model::ModelForm;
use semitrack::pde::{self, Discretization, FullSimOptions, FullState};
use semitrack::reduced;
use semitrack::steady::{self, ForceLaw};
use semitrack::{Error, Result};

/// Single-track vehicle with distributed tire friction: equilibria,
/// simulation, stability charts and observer-based control.
#[derive(Debug, Parser)]
#[command(name = "semitrack", version)]
struct Cli {
    /// Scenario file (TOML). Missing keys take the reference defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory for CSV files and run.json.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the steady turn at a constant steering input and print it as a CSV row.
    Equilibrium(EquilibriumArgs),
    /// Simulate the reduced (quasi-static tire) model.
    SimulateReduced(ReducedArgs),
    /// Simulate the full lumped/distributed model with upwind differences.
    SimulateFull(FullArgs),
    /// Simulate the closed loop with delayed feedback, noise and observer.
    SimulateClosed(ClosedArgs),
    /// Relaxation of the bristle deviation at random frozen slip angles.
    BoundaryLayer(BoundaryArgs),
    /// Sweep understeer index and speed; report the rightmost eigenvalue.
    StabilityChart(ChartArgs),
    /// Compare full and reduced models as the time-scale parameter shrinks.
    EpsilonSweep(EpsilonArgs),
}

#[derive(Debug, Args)]
struct SpeedArg {
    /// Longitudinal speed (m/s).
    #[arg(long)]
    vx: Option<f64>,
}

#[derive(Debug, Args)]
struct EquilibriumArgs {
    #[command(flatten)]
    speed: SpeedArg,
    /// Front steering angle (rad, or with a `deg`/`rad` suffix).
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true)]
    delta1: Option<f64>,
    /// Rear steering angle (rad, or with a `deg`/`rad` suffix).
    #[arg(long, value_parser = parse_angle, allow_hyphen_values = true)]
    delta2: Option<f64>,
    /// Evaluate the force map on this grid instead of exactly.
    #[arg(long)]
    n_cells: Option<usize>,
}

#[derive(Debug, Args)]
struct ReducedArgs {
    #[command(flatten)]
    speed: SpeedArg,
    /// Time step (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon (s).
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Steps between output rows.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Debug, Args)]
struct FullArgs {
    #[command(flatten)]
    speed: SpeedArg,
    /// Cells of the contact-patch grid.
    #[arg(long)]
    n_cells: Option<usize>,
    /// Time step (s); checked against the CFL limit.
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon (s).
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Steps between output rows.
    #[arg(long)]
    stride: Option<usize>,
    /// Comma-separated times (s) at which bristle profiles are written.
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct ClosedArgs {
    /// Feed back the true state (no observer).
    #[arg(long, conflicts_with = "output_feedback")]
    state_feedback: bool,
    /// Feed back the observer estimate (default).
    #[arg(long)]
    output_feedback: bool,
    /// Feedback gain, four comma-separated entries in row-major order.
    #[arg(long = "F", value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    f: Option<Vec<f64>>,
    /// Observer gain, two comma-separated entries.
    #[arg(long = "L", value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    l: Option<Vec<f64>>,
    /// Input delay (s).
    #[arg(long)]
    delay: Option<f64>,
    /// Yaw-rate noise standard deviation (rad/s).
    #[arg(long)]
    noise_std: Option<f64>,
    /// Noise hold period (s).
    #[arg(long)]
    noise_dt: Option<f64>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Start from X0 = -k [0.03, -0.05] instead of the configured X0.
    #[arg(long)]
    k: Option<f64>,
    /// Longitudinal speed (m/s).
    #[arg(long)]
    vx: Option<f64>,
    /// Cells of the contact-patch grid.
    #[arg(long)]
    n_cells: Option<usize>,
    /// Time step (s).
    #[arg(long)]
    dt: Option<f64>,
    /// Horizon (s).
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// Steps between output rows.
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Debug, Args)]
struct BoundaryArgs {
    #[command(flatten)]
    speed: SpeedArg,
    /// Number of random frozen states.
    #[arg(long, default_value_t = 10)]
    cases: usize,
    /// Seed of the frozen-state sampler.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Bound on the slip angles of the sampled states (rad).
    #[arg(long, default_value_t = 0.2)]
    alpha_max: f64,
    /// Cells of the contact-patch grid.
    #[arg(long)]
    n_cells: Option<usize>,
    /// Stretched-time horizon.
    #[arg(long)]
    s_end: Option<f64>,
}

#[derive(Debug, Args)]
struct ChartArgs {
    #[arg(long)]
    index_min: Option<f64>,
    #[arg(long)]
    index_max: Option<f64>,
    #[arg(long)]
    index_steps: Option<usize>,
    /// Lowest speed (m/s).
    #[arg(long)]
    vx_min: Option<f64>,
    /// Highest speed (m/s).
    #[arg(long)]
    vx_max: Option<f64>,
    #[arg(long)]
    vx_steps: Option<usize>,
    /// Cells of the contact-patch grid.
    #[arg(long)]
    n_cells: Option<usize>,
    /// Worker threads, 0 for one per core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct EpsilonArgs {
    #[command(flatten)]
    speed: SpeedArg,
    /// Cells of the contact-patch grid.
    #[arg(long)]
    n_cells: Option<usize>,
    /// Full-model step at the nominal time scale (s); scaled with it.
    /// Replaces the scenario's `dt`.
    #[arg(long, default_value_t = 1e-5)]
    dt: f64,
    /// Horizon (s). Replaces the scenario's `T`.
    #[arg(long = "T", default_value_t = 2.0)]
    t_end: f64,
    /// Comma-separated factors applied to the time-scale parameter.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    /// Spacing of the compared samples (s).
    #[arg(long, default_value_t = 1e-3)]
    sample_dt: f64,
}

fn parse_angle(s: &str) -> std::result::Result<f64, String> {
    Angle::parse(s)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let mut file = io::load_scenario_file(cli.config.as_deref())?;
    let (name, mut record) = match &cli.command {
        Command::Equilibrium(a) => ("equilibrium", equilibrium(a, &mut file, &cli.out)?),
        Command::SimulateReduced(a) => ("simulate-reduced", simulate_reduced(a, &mut file, &cli.out)?),
        Command::SimulateFull(a) => ("simulate-full", simulate_full(a, &mut file, &cli.out)?),
        Command::SimulateClosed(a) => ("simulate-closed", simulate_closed(a, &mut file, &cli.out)?),
        Command::BoundaryLayer(a) => ("boundary-layer", boundary_layer(a, &mut file, &cli.out)?),
        Command::StabilityChart(a) => ("stability-chart", stability_chart(a, &mut file, &cli.out)?),
        Command::EpsilonSweep(a) => ("epsilon-sweep", epsilon_sweep(a, &mut file, &cli.out)?),
    };
    record.command = name.to_string();
    record.wall_time_s = started.elapsed().as_secs_f64();
    record.write(&cli.out.join("run.json"))
}

fn build_form(s: &Scenario) -> Result<ModelForm> {
    ModelForm::assemble(&s.params, s.carcass, s.pressure.clone(), Default::default())
}

fn write(table: &Table, out: &Path, name: &str, record: &mut RunRecord) -> Result<()> {
    io::emit_csv(table, &out.join(name))?;
    record.outputs.push(name.to_string());
    Ok(())
}

fn equilibrium(a: &EquilibriumArgs, file: &mut ScenarioFile, out: &Path) -> Result<RunRecord> {
    set(&mut file.v_x, a.speed.vx);
    if let Some(d) = a.delta1 {
        file.initial.u[0] = Angle(d);
    }
    if let Some(d) = a.delta2 {
        file.initial.u[1] = Angle(d);
    }
    if let Some(n) = a.n_cells {
        file.numerics.n_cells = n;
    }
    let s = Scenario::from_file(file.clone())?;
    let form = build_form(&s)?;
    let grid = Grid::new(s.numerics.n_cells);
    let law = if a.n_cells.is_some() { ForceLaw::Upwind(grid) } else { ForceLaw::Continuous };
    let eq = steady::find_equilibrium(&form, &s.input(), &form.b, grid, law, None)?;
    let verdict = reduced::verdict_from_stiffness(&form, eq.c_tilde);
    let mut t = Table::new(&[
        "beta", "r", "alpha1", "alpha2", "Fy1", "Fy2", "C11", "C12", "C21", "C22", "eig1_re", "eig1_im", "eig2_re",
        "eig2_im", "understeer_index",
    ]);
    let c = eq.c_tilde;
    let e = verdict.eigenvalues;
    t.push([
        eq.x_star[0],
        eq.x_star[1],
        eq.alpha_star[0],
        eq.alpha_star[1],
        eq.f_star[0],
        eq.f_star[1],
        c[(0, 0)],
        c[(0, 1)],
        c[(1, 0)],
        c[(1, 1)],
        e[0].re,
        e[0].im,
        e[1].re,
        e[1].im,
        verdict.understeer_index.unwrap_or(f64::NAN),
    ]);
    print!("{}", t.to_csv_string()?);
    let mut rec = RunRecord::new("equilibrium", &s);
    write(&t, out, "equilibrium.csv", &mut rec)?;
    rec.note("hurwitz", verdict.hurwitz);
    rec.note("newton_iterations", eq.iterations);
    rec.note("residual", eq.residual);
    Ok(rec)
}

fn simulate_reduced(a: &ReducedArgs, file: &mut ScenarioFile, out: &Path) -> Result<RunRecord> {
    set(&mut file.v_x, a.speed.vx);
    set(&mut file.numerics.reduced_dt, a.dt);
    set(&mut file.numerics.t_end, a.t_end);
    set(&mut file.numerics.reduced_stride, a.stride);
    let s = Scenario::from_file(file.clone())?;
    let form = build_form(&s)?;
    let n = &s.numerics;
    let u = s.input();
    let tr = reduced::simulate_reduced(&form, ForceLaw::Continuous, s.x0(), |_| u, &form.b, n.reduced_dt, n.t_end, n.reduced_stride)?;
    let mut t = Table::new(&["t", "beta", "r", "Fy1", "Fy2", "delta1", "delta2"]);
    for k in 0..tr.times.len() {
        t.push([tr.times[k], tr.x[k][0], tr.x[k][1], tr.forces[k][0], tr.forces[k][1], tr.u[k][0], tr.u[k][1]]);
    }
    let mut rec = RunRecord::new("simulate-reduced", &s);
    write(&t, out, "reduced.csv", &mut rec)?;
    rec.note("diverged", tr.diverged);
    Ok(rec)
}

fn simulate_full(a: &FullArgs, file: &mut ScenarioFile, out: &Path) -> Result<RunRecord> {
    set(&mut file.v_x, a.speed.vx);
    set(&mut file.numerics.n_cells, a.n_cells);
    set(&mut file.numerics.dt, a.dt);
    set(&mut file.numerics.t_end, a.t_end);
    set(&mut file.numerics.stride, a.stride);
    set(&mut file.numerics.snapshot_times, a.snapshot_times.clone());
    let s = Scenario::from_file(file.clone())?;
    let form = build_form(&s)?;
    let grid = Grid::new(s.numerics.n_cells);
    let disc = Discretization::new(&form, grid);
    let n = &s.numerics;
    let opts = FullSimOptions {
        dt: n.dt,
        t_end: n.t_end,
        stride: n.stride,
        snapshot_times: n.snapshot_times.clone(),
        zeta_law: ForceLaw::Upwind(grid),
    };
    let u = s.input();
    let tr = pde::simulate_full(&disc, FullState::with_constant_z(s.x0(), s.z0(), grid), |_| u, &opts)?;
    let mut t = Table::new(&["t", "beta", "r", "Fy1", "Fy2", "delta1", "delta2", "zeta_norm"]);
    for k in 0..tr.times.len() {
        t.push([
            tr.times[k],
            tr.x[k][0],
            tr.x[k][1],
            tr.forces[k][0],
            tr.forces[k][1],
            tr.u[k][0],
            tr.u[k][1],
            tr.zeta_norm[k],
        ]);
    }
    let mut rec = RunRecord::new("simulate-full", &s);
    write(&t, out, "states.csv", &mut rec)?;
    for (time, z) in &tr.snapshots {
        let mut snap = Table::new(&["xi", "z1", "z2"]);
        for (j, xi) in grid.nodes().enumerate() {
            snap.push([xi, z[0][j], z[1][j]]);
        }
        write(&snap, out, &format!("snapshot_t{time}.csv"), &mut rec)?;
    }
    rec.note("diverged", tr.diverged);
    rec.note("dt_max", pde::max_stable_dt(&form, &grid));
    Ok(rec)
}

fn simulate_closed(a: &ClosedArgs, file: &mut ScenarioFile, out: &Path) -> Result<RunRecord> {
    set(&mut file.v_x, a.vx);
    set(&mut file.numerics.n_cells, a.n_cells);
    set(&mut file.numerics.dt, a.dt);
    set(&mut file.numerics.t_end, a.t_end);
    set(&mut file.numerics.stride, a.stride);
    let c = &mut file.control;
    if a.state_feedback {
        c.mode = "state".into();
    } else if a.output_feedback {
        c.mode = "output".into();
    }
    if let Some(f) = &a.f {
        c.f = f.as_slice().try_into().map_err(|_| Error::Config(format!("--F needs 4 entries, got {}", f.len())))?;
    }
    if let Some(l) = &a.l {
        c.l = l.as_slice().try_into().map_err(|_| Error::Config(format!("--L needs 2 entries, got {}", l.len())))?;
    }
    set(&mut c.delay, a.delay);
    set(&mut c.noise_std, a.noise_std);
    set(&mut c.noise_dt, a.noise_dt);
    set(&mut c.seed, a.seed);
    if let Some(k) = a.k {
        let x0 = experiment::k_sweep_initial(k);
        file.initial.x0 = [x0[0], x0[1]];
    }
    let s = Scenario::from_file(file.clone())?;
    let form = build_form(&s)?;
    let grid = Grid::new(s.numerics.n_cells);
    let cfg = s.closed_loop_config();
    let num = ClosedLoopNumerics {
        dt: s.numerics.dt,
        t_end: s.numerics.t_end,
        stride: s.numerics.stride,
    };
    let run = experiment::closed_loop_with_floor(&form, grid, &cfg, s.x0(), s.z0(), s.xhat0(), num, a.k.unwrap_or(0.0))?;
    let tr = &run.trajectory;
    let mut states = Table::new(&["t", "beta", "r", "Fy1", "Fy2", "delta1", "delta2", "zeta_norm", "beta_hat", "r_hat"]);
    let mut norms = Table::new(&["t", "composite_norm", "estimate_error_norm"]);
    for k in 0..tr.times.len() {
        states.push([
            tr.times[k],
            tr.x[k][0],
            tr.x[k][1],
            tr.forces[k][0],
            tr.forces[k][1],
            tr.u[k][0],
            tr.u[k][1],
            tr.zeta_norm[k],
            tr.xhat[k][0],
            tr.xhat[k][1],
        ]);
        norms.push([tr.times[k], tr.composite_norm[k], tr.estimate_error_norm[k]]);
    }
    let mut rec = RunRecord::new("simulate-closed", &s);
    write(&states, out, "states.csv", &mut rec)?;
    write(&norms, out, "norms.csv", &mut rec)?;
    rec.note("diverged", tr.diverged);
    rec.note("noise_floor", run.floor);
    rec.note("max_abs_delta1_deg", tr.max_abs_front_steer().to_degrees());
    rec.note("crossing_time_10pct", run.crossing_time(0.1));
    Ok(rec)
}

fn boundary_layer(a: &BoundaryArgs, file: &mut ScenarioFile, out: &Path) -> Result<RunRecord> {
    set(&mut file.v_x, a.speed.vx);
    set(&mut file.numerics.n_cells, a.n_cells);
    set(&mut file.numerics.boundary_s_end, a.s_end);
    let s = Scenario::from_file(file.clone())?;
    let form = build_form(&s)?;
    let disc = Discretization::new(&form, Grid::new(s.numerics.n_cells));
    let mut t = Table::new(&[
        "case", "beta", "r", "delta1", "delta2", "alpha1", "alpha2", "omega_hat", "spectral_rate", "relative_gap",
    ]);
    let mut curves = Table::new(&["case", "s", "norm"]);
    for (k, (x, u)) in experiment::random_frozen_states(&form, a.seed, a.cases, a.alpha_max).into_iter().enumerate() {
        let c = experiment::boundary_layer_case(&disc, x, u, s.z0(), s.numerics.boundary_cfl, s.numerics.boundary_s_end)?;
        t.push(vec![
            io::Field::from(k),
            x[0].into(),
            x[1].into(),
            u[0].into(),
            u[1].into(),
            c.alpha[0].into(),
            c.alpha[1].into(),
            c.omega_hat.into(),
            c.spectral_rate.into(),
            c.relative_gap().into(),
        ]);
        let every = (c.record.s.len() / 200).max(1);
        for j in (0..c.record.s.len()).step_by(every) {
            curves.push(vec![io::Field::from(k), c.record.s[j].into(), c.record.norms[j].into()]);
        }
    }
    let mut rec = RunRecord::new("boundary-layer", &s);
    write(&t, out, "boundary_layer.csv", &mut rec)?;
    write(&curves, out, "boundary_layer_norms.csv", &mut rec)?;
    rec.note("seed", a.seed);
    Ok(rec)
}

fn stability_chart(a: &ChartArgs, file: &mut ScenarioFile, out: &Path) -> Result<RunRecord> {
    let c = &mut file.chart;
    set(&mut c.index_min, a.index_min);
    set(&mut c.index_max, a.index_max);
    set(&mut c.index_steps, a.index_steps);
    set(&mut c.vx_min, a.vx_min);
    set(&mut c.vx_max, a.vx_max);
    set(&mut c.vx_steps, a.vx_steps);
    set(&mut c.jobs, a.jobs);
    set(&mut file.numerics.n_cells, a.n_cells);
    let s = Scenario::from_file(file.clone())?;
    let cells = chart::sweep_chart_with_jobs(&s.params, &s.chart_spec(), s.chart.jobs)?;
    let mut t = Table::new(&["index", "v_x", "max_real_part", "stable", "v_crit", "error"]);
    for cell in &cells {
        t.push(vec![
            io::Field::from(cell.understeer_index),
            cell.v_x.into(),
            cell.max_real_part.into(),
            cell.stable.into(),
            cell.v_crit.unwrap_or(f64::NAN).into(),
            cell.error.clone().unwrap_or_default().into(),
        ]);
    }
    let mut rec = RunRecord::new("stability-chart", &s);
    write(&t, out, "chart.csv", &mut rec)?;
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    rec.note("failed_cells", failed);
    if failed == cells.len() && !cells.is_empty() {
        return Err(Error::Config(format!("every chart cell failed; first error: {}", cells[0].error.as_deref().unwrap_or(""))));
    }
    Ok(rec)
}

fn epsilon_sweep(a: &EpsilonArgs, file: &mut ScenarioFile, out: &Path) -> Result<RunRecord> {
    set(&mut file.v_x, a.speed.vx);
    set(&mut file.numerics.n_cells, a.n_cells);
    set(&mut file.numerics.eps_scales, a.scales.clone());
    file.numerics.dt = a.dt;
    file.numerics.t_end = a.t_end;
    let s = Scenario::from_file(file.clone())?;
    let form = build_form(&s)?;
    let spec = EpsilonSweepSpec {
        x0: s.x0(),
        z0: s.z0(),
        input: s.input(),
        scales: s.numerics.eps_scales.clone(),
        dt: s.numerics.dt,
        t_end: s.numerics.t_end,
        sample_dt: a.sample_dt,
        reduced_dt: s.numerics.reduced_dt,
    };
    let sweep = experiment::epsilon_sweep(&form, Grid::new(s.numerics.n_cells), &spec)?;
    let mut t = Table::new(&["eps", "gap", "ratio"]);
    let ratios = sweep.ratios();
    for (k, r) in sweep.runs.iter().enumerate() {
        let ratio = if k == 0 { f64::NAN } else { ratios[k - 1] };
        t.push([r.eps, r.gap, ratio]);
    }
    let mut rec = RunRecord::new("epsilon-sweep", &s);
    write(&t, out, "epsilon_sweep.csv", &mut rec)?;
    rec.note("reference", "reduced model, upwind force law on the same grid");
    Ok(rec)
}
