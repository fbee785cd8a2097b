//! The experiment commands, driven by a [`RunConfig`].

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use gradflow_core::{
    ButcherTableau, Certification, DgField, DgSpace, EnergyRecord, EocTable, InitialCondition, ManufacturedSolution,
    Mesh, Potential, StepState, Stepper, StepperOptions, SwiftHohenberg, ZeroPotential,
};
use log::{info, warn};

use crate::config::{InitialSpec, PotentialKind, RunConfig, SourceSpec, TableauSource};
use crate::error::{CliError, Result};
use crate::output::{sample_grid, write_grid_csv, write_vtk, EnergyWriter, FieldFile};

/// Relative slack allowed in the per-step energy inequality.
pub const ENERGY_TOL: f64 = 1e-10;

pub fn build_space(cfg: &RunConfig, cells: Option<usize>) -> Result<Arc<DgSpace>> {
    let m = &cfg.mesh;
    let counts: Vec<usize> = match cells {
        Some(n) => vec![n; m.cells.len()],
        None => m.cells.clone(),
    };
    let axes: Vec<gradflow_core::Axis> = (0..counts.len())
        .map(|d| gradflow_core::Axis::new(m.lower[d], m.upper[d], counts[d]))
        .collect();
    let mesh = Mesh::new(&axes, m.bc)?;
    Ok(DgSpace::new(mesh, m.degree))
}

pub fn build_potential(cfg: &RunConfig) -> Result<Potential> {
    let md = &cfg.model;
    let shape: Arc<dyn gradflow_core::PotentialShape> = match md.potential {
        PotentialKind::SwiftHohenberg => Arc::new(SwiftHohenberg {
            epsilon: md.epsilon,
            g: md.g,
        }),
        PotentialKind::Zero => Arc::new(ZeroPotential),
    };
    Ok(Potential::new(shape, md.c0, md.a)?)
}

pub fn load_tableau(source: &TableauSource) -> Result<ButcherTableau> {
    match source {
        TableauSource::Builtin(name) => Ok(ButcherTableau::builtin(name)?),
        TableauSource::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let name = path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned());
            ButcherTableau::parse(&name, &text).map_err(|e| CliError::from(e).in_file(path))
        }
    }
}

fn manufactured(cfg: &RunConfig, name: &str) -> Result<ManufacturedSolution> {
    Ok(ManufacturedSolution::named(name, cfg.mesh.cells.len(), build_potential(cfg)?)?)
}

pub fn build_stepper(cfg: &RunConfig, space: Arc<DgSpace>) -> Result<Stepper> {
    let options = StepperOptions {
        solver: gradflow_core::SolverOptions {
            kind: cfg.solver.kind,
            ..Default::default()
        },
        pc: cfg.pc,
        allow_uncertified: cfg.solver.allow_uncertified,
    };
    let stepper = Stepper::new(space, build_potential(cfg)?, load_tableau(&cfg.time.tableau)?, options)?;
    Ok(match &cfg.source {
        SourceSpec::None => stepper,
        SourceSpec::Manufactured(name) => stepper.with_forcing(Arc::new(manufactured(cfg, name)?)),
    })
}

pub fn initial_state(cfg: &RunConfig, stepper: &Stepper) -> Result<StepState> {
    let space = stepper.space();
    let ic = match &cfg.initial {
        InitialSpec::Zero => InitialCondition::function(|_| 0.0),
        InitialSpec::Random { seed, amplitude } => InitialCondition::RandomCellMeans {
            seed: *seed,
            amplitude: *amplitude,
        },
        InitialSpec::Manufactured(name) => {
            let ms = manufactured(cfg, name)?;
            let nodal = ms.nodal_exact(space, 0.0);
            let u = space.project_quad(&nodal);
            return Ok(stepper.initial_state(0.0, &nodal, u)?);
        }
        InitialSpec::File(path) => return load_state(path, stepper),
    };
    let (nodal, u) = ic.realize(space)?;
    Ok(stepper.initial_state(0.0, &nodal, u)?)
}

/// Restores a state saved by [`save_state`]; the mesh and degree must match.
pub fn load_state(path: &Path, stepper: &Stepper) -> Result<StepState> {
    let file = FieldFile::load(path)?;
    let space = stepper.space();
    if !file.matches(space) {
        return Err(CliError::Format {
            path: path.to_path_buf(),
            message: "field was saved on a different mesh or degree".into(),
        });
    }
    let u = DgField::from_coeffs(space, file.u)?;
    let aux = DgField::from_coeffs(space, file.aux)?;
    let q = gradflow_core::apply_lh(stepper.operator(), &u);
    Ok(StepState {
        step: file.step,
        t: file.t,
        u,
        q,
        aux,
    })
}

pub fn save_state(path: &Path, space: &Arc<DgSpace>, state: &StepState) -> Result<()> {
    FieldFile::new(space, state.step, state.t, &state.u, &state.aux).save(path)
}

/// Runs the configured manufactured problem to the final time and returns
/// the L2 and max errors.
fn manufactured_errors(cfg: &RunConfig, cells: Option<usize>, tau: f64) -> Result<(f64, f64, f64)> {
    let SourceSpec::Manufactured(name) = &cfg.source else {
        return Err(CliError::Invalid(
            "accuracy studies need an exact solution (source.kind = manufactured:<name>)".into(),
        ));
    };
    let mut run_cfg = cfg.clone();
    run_cfg.initial = InitialSpec::Manufactured(name.clone());
    let space = build_space(&run_cfg, cells)?;
    let stepper = build_stepper(&run_cfg, Arc::clone(&space))?;
    let steps = cfg.steps_for(tau)?;
    let state = initial_state(&run_cfg, &stepper)?;
    let end = stepper.run(state, tau, steps, |_, _| Ok(()))?;
    let ms = manufactured(cfg, name)?;
    let t = end.t;
    let l2 = space.error_l2(&end.u, |x| ms.exact(x, t));
    let linf = space.error_linf(&end.u, |x| ms.exact(x, t));
    Ok((space.mesh().h(), l2, linf))
}

/// Errors at the final time for each mesh in `sweep.cells` (or the configured mesh).
pub fn accuracy_space(cfg: &RunConfig) -> Result<EocTable> {
    cfg.validate()?;
    let mut table = EocTable::new("h");
    let sweep: Vec<Option<usize>> = if cfg.sweep.cells.is_empty() {
        vec![None]
    } else {
        cfg.sweep.cells.iter().map(|&n| Some(n)).collect()
    };
    for cells in sweep {
        let (h, l2, linf) = manufactured_errors(cfg, cells, cfg.time.tau)?;
        info!("h = {h}: L2 error {l2:e}, max error {linf:e}");
        table.push(h, l2, linf);
    }
    Ok(table)
}

/// Errors at the final time for each step in `sweep.tau` (or the configured step).
pub fn accuracy_time(cfg: &RunConfig) -> Result<EocTable> {
    cfg.validate()?;
    let mut table = EocTable::new("tau");
    let taus = if cfg.sweep.tau.is_empty() {
        vec![cfg.time.tau]
    } else {
        cfg.sweep.tau.clone()
    };
    for tau in taus {
        let (_, l2, linf) = manufactured_errors(cfg, None, tau)?;
        info!("tau = {tau}: L2 error {l2:e}, max error {linf:e}");
        table.push(tau, l2, linf);
    }
    Ok(table)
}

#[derive(Clone, Debug)]
pub struct SimulationSummary {
    pub records: Vec<EnergyRecord>,
    pub final_state: StepState,
    /// Largest `(E^{n+1} - E^n) / |E^n|` over the run.
    pub max_energy_increase: f64,
    /// Largest `(E^{n+1} + bound - E^n) / |E^n|` over the run.
    pub max_bound_violation: f64,
    pub snapshots: Vec<std::path::PathBuf>,
}

impl SimulationSummary {
    /// Both energy inequalities hold at every step to the relative tolerance.
    pub fn energy_stable(&self) -> bool {
        self.max_energy_increase <= ENERGY_TOL && self.max_bound_violation <= ENERGY_TOL
    }
}

/// Snapshot steps: the configured times rounded to the step grid, or six
/// evenly spaced times ending at the final step.
pub fn snapshot_steps(cfg: &RunConfig, steps: usize) -> Vec<usize> {
    let tau = cfg.time.tau;
    let mut out: Vec<usize> = if cfg.output.snapshot_times.is_empty() {
        (1..=6).map(|k| (k * steps).div_ceil(6)).collect()
    } else {
        cfg.output
            .snapshot_times
            .iter()
            .map(|&t| (t / tau).round())
            .filter(|&n| n >= 0.0 && n <= steps as f64)
            .map(|n| n as usize)
            .collect()
    };
    out.sort_unstable();
    out.dedup();
    out
}

fn record(state: &StepState, area_shift: f64, prev: Option<f64>, bound: f64, pc: usize) -> EnergyRecord {
    let energy = state.energy();
    EnergyRecord {
        step: state.step,
        t: state.t,
        energy,
        shifted: energy - area_shift,
        dissipation: prev.map_or(0.0, |p| p - energy),
        bound,
        pc_iterations: pc,
    }
}

/// Pattern simulation: energy history, snapshots and optional final field.
pub fn simulate(cfg: &RunConfig) -> Result<SimulationSummary> {
    cfg.validate()?;
    let space = build_space(cfg, None)?;
    let stepper = build_stepper(cfg, Arc::clone(&space))?;
    let steps = cfg.steps_for(cfg.time.tau)?;
    let state = initial_state(cfg, &stepper)?;
    let area_shift = stepper.potential().c0() * space.mesh().volume();
    let out = &cfg.output;
    let fmt = out.snapshot_format;
    let snap_at = snapshot_steps(cfg, steps);

    let mut energy_out = if out.energy_csv.is_empty() {
        None
    } else {
        Some(EnergyWriter::create(&out.dir.join(&out.energy_csv))?)
    };
    let mut records = vec![record(&state, area_shift, None, 0.0, 0)];
    let mut snapshots = Vec::new();
    let snapshot = |state: &StepState, snapshots: &mut Vec<std::path::PathBuf>| -> Result<()> {
        if !(fmt.vtk() || fmt.csv()) || !snap_at.contains(&state.step) {
            return Ok(());
        }
        let grid = sample_grid(&space, &state.u, out.samples_per_cell);
        if fmt.vtk() {
            let p = out.dir.join(format!("snapshot_{:06}.vtk", state.step));
            write_vtk(&p, &grid, state.t)?;
            snapshots.push(p);
        }
        if fmt.csv() {
            let p = out.dir.join(format!("snapshot_{:06}.csv", state.step));
            write_grid_csv(&p, &grid)?;
            snapshots.push(p);
        }
        Ok(())
    };
    if let Some(w) = energy_out.as_mut() {
        w.write(&records[0])?;
    }
    snapshot(&state, &mut snapshots)?;

    let mut max_increase = f64::NEG_INFINITY;
    let mut max_violation = f64::NEG_INFINITY;
    let mut failure: Option<CliError> = None;
    let end = stepper.run(state, cfg.time.tau, steps, |s, report| {
        let prev = records.last().map(|r| r.energy).unwrap_or(f64::NAN);
        let r = record(s, area_shift, Some(prev), report.bound, report.pc_iterations);
        let scale = prev.abs().max(f64::MIN_POSITIVE);
        let increase = (r.energy - prev) / scale;
        let violation = (r.energy + r.bound - prev) / scale;
        if violation > ENERGY_TOL {
            warn!("step {}: energy inequality violated by {violation:e} (relative)", s.step);
        }
        max_increase = max_increase.max(increase);
        max_violation = max_violation.max(violation);
        let io = (|| {
            if let Some(w) = energy_out.as_mut() {
                w.write(&r)?;
            }
            snapshot(s, &mut snapshots)
        })();
        records.push(r);
        if let Err(e) = io {
            let msg = e.to_string();
            failure = Some(e);
            return Err(gradflow_core::Error::InvalidParameter(msg));
        }
        Ok(())
    });
    let end = match (end, failure) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };
    if let Some(w) = energy_out {
        w.finish()?;
    }
    if !out.final_field.is_empty() {
        save_state(&out.dir.join(&out.final_field), &space, &end)?;
    }
    Ok(SimulationSummary {
        records,
        final_state: end,
        max_energy_increase: max_increase,
        max_bound_violation: max_violation,
        snapshots,
    })
}

/// Butcher array, stability matrix, its eigenvalues and the verdict.
#[derive(Clone, Debug)]
pub struct TableauReport {
    pub tableau: ButcherTableau,
    pub stability_matrix: Vec<Vec<f64>>,
    pub certification: Certification,
}

pub fn check_tableau(tableau: ButcherTableau) -> TableauReport {
    TableauReport {
        stability_matrix: tableau.stability_matrix(),
        certification: tableau.certify(),
        tableau,
    }
}

impl fmt::Display for TableauReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "tableau {}", self.tableau.name())?;
        write!(f, "{}", self.tableau)?;
        writeln!(f, "stability matrix M = B A + A^T B - b b^T:")?;
        for row in &self.stability_matrix {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>24.16e}")).collect();
            writeln!(f, "  {}", cells.join(" "))?;
        }
        let ev: Vec<String> = self
            .certification
            .eigenvalues()
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect();
        writeln!(f, "eigenvalues: {}", ev.join(" "))?;
        match &self.certification {
            Certification::Stable { .. } => writeln!(f, "verdict: algebraically stable"),
            Certification::Unstable { reason, .. } => writeln!(f, "verdict: not algebraically stable ({reason})"),
        }
    }
}
