//! Scripted, reproducible experiment suites: initial-data families,
//! lifespan-versus-amplitude scans, the 1-D steep-gradient blowup
//! demonstration, and manufactured-solution convergence studies.

use crate::bump;
use crate::diagnostics::DiagnosticsRecord;
use crate::grid::{read_snapshot, GridError, GridSpec, ScalarField, State};
use crate::model::wave_speeds;
use crate::solver::{self, RunOutcome, RunStatus, SolverConfig, SolverError, SourceSpec};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("snapshot error: {0}")]
    Snapshot(#[from] crate::grid::SnapshotError),
    #[error("support radius {radius} does not fit inside the grid extent {extent}")]
    SupportExceedsGrid { radius: f64, extent: f64 },
    #[error("invalid experiment setup: {0}")]
    Invalid(String),
}

/// Initial-data profile shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `amplitude * profile(|x| / support_radius)`: the smooth compact bump.
    Bump,
    /// The bump with its first axis compressed by `steepness` and the whole
    /// shape normalized by the profile's peak slope, so the peak gradient is
    /// `amplitude * steepness / support_radius` exactly.
    SteepBump,
    /// Initial state loaded from a snapshot file.
    Custom(PathBuf),
}

/// How the initial velocity is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityMode {
    /// v = 0 (a one-parameter standing family).
    #[default]
    Zero,
    /// `v = -c1(u0) d1 u0`: launches the data as a right-moving packet along
    /// the first axis, concentrating the steepening in one Riemann family.
    TravelingAxis1,
}

/// The family `u(0) = amplitude * f(x)` with compactly supported smooth `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDataFamily {
    pub profile: Profile,
    pub amplitude: f64,
    pub support_radius: f64,
    pub steepness: f64,
    pub velocity: VelocityMode,
}

impl InitialDataFamily {
    pub fn bump(amplitude: f64, support_radius: f64) -> Self {
        Self {
            profile: Profile::Bump,
            amplitude,
            support_radius,
            steepness: 1.0,
            velocity: VelocityMode::Zero,
        }
    }

    pub fn steep(amplitude: f64, support_radius: f64, steepness: f64) -> Self {
        Self {
            profile: Profile::SteepBump,
            amplitude,
            support_radius,
            steepness,
            velocity: VelocityMode::Zero,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.amplitude >= 0.0) {
            return Err(ExperimentError::Invalid(format!(
                "amplitude must be nonnegative, got {}",
                self.amplitude
            )));
        }
        if !(self.support_radius > 0.0) {
            return Err(ExperimentError::Invalid(format!(
                "support_radius must be positive, got {}",
                self.support_radius
            )));
        }
        if !(self.steepness >= 1.0) {
            return Err(ExperimentError::Invalid(format!(
                "steepness must be at least 1, got {}",
                self.steepness
            )));
        }
        Ok(())
    }

    /// Closed-form initial angle at a position (zero outside the support).
    fn u0(&self, x: [f64; 3], dim: usize) -> f64 {
        let r = self.support_radius;
        match self.profile {
            Profile::Bump => {
                let s = norm_dim(x, dim) / r;
                self.amplitude * bump::profile(s)
            }
            Profile::SteepBump => {
                let mut y = x;
                y[0] *= self.steepness;
                let s = norm_dim(y, dim) / r;
                self.amplitude * bump::profile(s) / bump::PROFILE_MAX_SLOPE
            }
            Profile::Custom(_) => unreachable!("custom profiles load snapshots"),
        }
    }

    /// Closed-form derivative of `u0` along the first axis.
    fn d1_u0(&self, x: [f64; 3], dim: usize) -> f64 {
        let r = self.support_radius;
        match self.profile {
            Profile::Bump => {
                let rho = norm_dim(x, dim);
                let s = rho / r;
                self.amplitude * bump::profile_d1_over_s(s) * x[0] / (r * r)
            }
            Profile::SteepBump => {
                let mut y = x;
                y[0] *= self.steepness;
                let s = norm_dim(y, dim) / r;
                self.amplitude * bump::profile_d1_over_s(s) * self.steepness * self.steepness
                    * x[0]
                    / (r * r * bump::PROFILE_MAX_SLOPE)
            }
            Profile::Custom(_) => unreachable!(),
        }
    }
}

fn norm_dim(x: [f64; 3], dim: usize) -> f64 {
    (0..dim).map(|i| x[i] * x[i]).sum::<f64>().sqrt()
}

/// Sample the family on a grid. The support must fit strictly inside the box.
pub fn make_initial(
    family: &InitialDataFamily,
    spec: &GridSpec,
    constants: &crate::model::ElasticConstants,
) -> Result<State, ExperimentError> {
    family.validate()?;
    if let Profile::Custom(path) = &family.profile {
        return Ok(read_snapshot(path)?);
    }
    if family.support_radius >= spec.min_extent() {
        return Err(ExperimentError::SupportExceedsGrid {
            radius: family.support_radius,
            extent: spec.min_extent(),
        });
    }
    let dim = spec.dim();
    let u = ScalarField::from_fn(*spec, |x| family.u0(x, dim));
    let v = match family.velocity {
        VelocityMode::Zero => ScalarField::zeros(*spec),
        VelocityMode::TravelingAxis1 => ScalarField::from_fn(*spec, |x| {
            let u0 = family.u0(x, dim);
            let c1 = wave_speeds(constants, u0).0.sqrt();
            -c1 * family.d1_u0(x, dim)
        }),
    };
    Ok(State::new(0.0, u, v)?)
}

/// One row of a lifespan table.
#[derive(Debug, Clone, PartialEq)]
pub struct LifespanRow {
    pub epsilon: f64,
    pub grid: String,
    pub t_num: f64,
    pub status: RunStatus,
    /// Completed rows never saw a terminal event; their `t_num` is the
    /// horizon, retained but flagged.
    pub censored: bool,
}

/// Lifespan-versus-amplitude table, sorted by amplitude descending.
#[derive(Debug, Clone)]
pub struct LifespanTable {
    pub rows: Vec<LifespanRow>,
    /// Least-squares slope of `ln T_num` against `1/epsilon` over the
    /// non-censored rows; `None` with fewer than two of them.
    pub log_lifespan_slope: Option<f64>,
}

impl LifespanTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,grid,t_num,status,censored\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{},{:.16e},{},{}\n",
                r.epsilon, r.grid, r.t_num, r.status, r.censored
            ));
        }
        out
    }
}

/// Run the solver once per amplitude with identical grid and integrator
/// settings; amplitudes must be positive and distinct.
pub fn lifespan_scan(
    amplitudes: &[f64],
    base_config: &SolverConfig,
    family: &InitialDataFamily,
    spec: &GridSpec,
) -> Result<(LifespanTable, Vec<RunOutcome>), ExperimentError> {
    if amplitudes.is_empty() {
        return Err(ExperimentError::Invalid("no amplitudes given".into()));
    }
    for (i, &e) in amplitudes.iter().enumerate() {
        if !(e > 0.0) {
            return Err(ExperimentError::Invalid(format!(
                "amplitudes must be positive, got {e}"
            )));
        }
        if amplitudes[..i].contains(&e) {
            return Err(ExperimentError::Invalid(format!("duplicate amplitude {e}")));
        }
    }
    let mut eps: Vec<f64> = amplitudes.to_vec();
    eps.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let grid_desc = format!(
        "dim={} points={} extent={}",
        spec.dim(),
        spec.points(1),
        spec.extent(1)
    );
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for &epsilon in &eps {
        let fam = InitialDataFamily { amplitude: epsilon, ..family.clone() };
        let initial = make_initial(&fam, spec, &base_config.constants)?;
        let outcome = solver::run(&initial, base_config, fam.support_radius)?;
        rows.push(LifespanRow {
            epsilon,
            grid: grid_desc.clone(),
            t_num: outcome.t_end,
            status: outcome.status,
            censored: outcome.status == RunStatus::Completed,
        });
        outcomes.push(outcome);
    }

    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| !r.censored && r.t_num > 0.0)
        .map(|r| (1.0 / r.epsilon, r.t_num.ln()))
        .collect();
    let log_lifespan_slope = if fit.len() >= 2 { Some(least_squares_slope(&fit)) } else { None };

    Ok((LifespanTable { rows, log_lifespan_slope }, outcomes))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Report of the 1-D blowup demonstration: the steep run, the equal-constant
/// control on the same data, the gradient time series, and the energy drift
/// measured at the last record before detection.
#[derive(Debug)]
pub struct BlowupReport {
    pub main: RunOutcome,
    pub control: RunOutcome,
    /// Detection time of the main run, if it blew up.
    pub t_num: Option<f64>,
    /// |E - E0| / E0 at the last record strictly before detection.
    pub pre_detection_drift: f64,
    pub gradient_series: Vec<(f64, f64)>,
}

/// Configuration of [`blowup_demo_1d`].
#[derive(Debug, Clone)]
pub struct BlowupDemoConfig {
    pub main: SolverConfig,
    /// Constants for the control run (must have alpha = gamma).
    pub control: SolverConfig,
    pub family: InitialDataFamily,
    pub spec: GridSpec,
    /// Point count for the control run (the linear control needs no front
    /// resolution; a coarser grid keeps it cheap).
    pub control_points: usize,
}

/// Run the steep-data 1-D case against its linear control.
pub fn blowup_demo_1d(config: &BlowupDemoConfig) -> Result<BlowupReport, ExperimentError> {
    if config.spec.dim() != 1 {
        return Err(ExperimentError::Invalid("blowup demo is one-dimensional".into()));
    }
    let c = &config.main.constants;
    if c.alpha() == c.gamma() {
        return Err(ExperimentError::Invalid(
            "main run needs alpha != gamma (no blowup mechanism otherwise)".into(),
        ));
    }
    let cc = &config.control.constants;
    if cc.alpha() != cc.gamma() {
        return Err(ExperimentError::Invalid("control run needs alpha = gamma".into()));
    }

    let initial = make_initial(&config.family, &config.spec, c)?;
    let main = solver::run(&initial, &config.main, config.family.support_radius)?;

    let control_spec = GridSpec::new(1, &[config.spec.extent(1)], &[config.control_points])?;
    let control_initial = make_initial(&config.family, &control_spec, cc)?;
    let control = solver::run(&control_initial, &config.control, config.family.support_radius)?;

    let gradient_series: Vec<(f64, f64)> =
        main.diagnostics.iter().map(|r| (r.t, r.grad_max)).collect();
    let t_num = (main.status == RunStatus::BlowupDetected).then_some(main.t_end);
    let pre_detection_drift = pre_terminal_drift(&main.diagnostics);

    Ok(BlowupReport { main, control, t_num, pre_detection_drift, gradient_series })
}

/// Relative energy drift at the last record strictly before the final one
/// (the final record sits at the terminal event itself).
pub fn pre_terminal_drift(records: &[DiagnosticsRecord]) -> f64 {
    if records.len() < 2 {
        return 0.0;
    }
    let e0 = records[0].total_energy;
    if e0 <= 0.0 {
        return 0.0;
    }
    let last = &records[records.len() - 2];
    (last.total_energy - e0).abs() / e0
}

/// Relative energy drift over all records of a run.
pub fn max_energy_drift(records: &[DiagnosticsRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let e0 = records[0].total_energy;
    if e0 <= 0.0 {
        return 0.0;
    }
    records
        .iter()
        .map(|r| (r.total_energy - e0).abs() / e0)
        .fold(0.0, f64::max)
}

/// Convergence study report: errors against the manufactured solution on a
/// refinement ladder, and self-convergence differences in time.
#[derive(Debug)]
pub struct ConvergenceReport {
    pub spatial: Vec<(usize, f64)>,
    pub spatial_orders: Vec<f64>,
    pub temporal_diffs: Vec<(f64, f64)>,
    pub temporal_orders: Vec<f64>,
}

/// Configuration of [`convergence_study`].
#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub constants: crate::model::ElasticConstants,
    pub source: SourceSpec,
    pub dim: usize,
    pub extent: f64,
    /// Coarsest point count; the study runs it, its double, and its quadruple.
    pub base_points: usize,
    pub t_final: f64,
    /// CFL safety for the spatial ladder (dt scales with h automatically).
    pub cfl_safety: f64,
    /// Point count of the fixed grid for the time-refinement ladder.
    pub temporal_points: usize,
    /// Safety factors for the time ladder (each halves dt).
    pub temporal_safeties: [f64; 3],
}

/// L2 error against the manufactured solution at the final time.
fn mms_error(
    config: &ConvergenceConfig,
    points: usize,
    safety: f64,
) -> Result<(f64, State), ExperimentError> {
    let eff = points + 1 - points % 2; // keep the origin on a cell (odd count)
    let spec = GridSpec::cubic(config.dim, config.extent, eff)?;
    let u = ScalarField::from_fn(spec, |x| config.source.exact_solution(0.0, x));
    let v = ScalarField::from_fn(spec, |x| config.source.exact_velocity(0.0, x));
    let initial = State::new(0.0, u, v)?;

    let mut solver_config = SolverConfig::new(config.constants, config.t_final);
    solver_config.cfl_safety = safety;
    solver_config.source = Some(config.source);
    solver_config.record_every = usize::MAX - 1;
    solver_config.diagnostics = crate::diagnostics::DiagnosticsLevel::Basic;

    let n_steps = (config.t_final / solver::cfl_dt(&spec, &config.constants, safety))
        .ceil()
        .max(1.0) as usize;
    let dt = config.t_final / n_steps as f64;
    let mut state = initial;
    for _ in 0..n_steps {
        state = solver::step_rk4(&state, dt, &solver_config)?;
    }

    let mut err = state.u.clone();
    let t = state.t;
    let exact = ScalarField::from_fn(spec, |x| config.source.exact_solution(t, x));
    err.zip_apply(&exact, |a, b| a - b);
    Ok((err.l2_norm(), state))
}

/// Run grids at base, 2x, and 4x resolution with dt proportional to h, then
/// a dt-only ladder on a fixed grid (errors differenced to cancel the fixed
/// spatial bias). Reports observed orders.
pub fn convergence_study(config: &ConvergenceConfig) -> Result<ConvergenceReport, ExperimentError> {
    let ladder = [
        config.base_points,
        config.base_points * 2,
        config.base_points * 4,
    ];
    let mut spatial = Vec::new();
    for &points in &ladder {
        let (err, _) = mms_error(config, points, config.cfl_safety)?;
        spatial.push((points, err));
    }
    let spatial_orders: Vec<f64> = spatial
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).log2())
        .collect();

    // time ladder at fixed space: successive solution differences cancel the
    // common spatial error, leaving the pure dt^4 component
    let mut time_states = Vec::new();
    for &safety in &config.temporal_safeties {
        let (_, state) = mms_error(config, config.temporal_points, safety)?;
        time_states.push((safety, state));
    }
    let mut temporal_diffs = Vec::new();
    for w in time_states.windows(2) {
        let mut diff = w[0].1.u.clone();
        diff.zip_apply(&w[1].1.u, |a, b| a - b);
        temporal_diffs.push((w[0].0, diff.l2_norm()));
    }
    let temporal_orders: Vec<f64> = temporal_diffs
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).log2())
        .collect();

    Ok(ConvergenceReport { spatial, spatial_orders, temporal_diffs, temporal_orders })
}
