//! Run configuration: a flat `key = value` text format grouped in `[section]`s.
//!
//! ```text
//! [mesh]
//! lower = 0 0
//! upper = 100 100
//! cells = 64 64
//! ```
//!
//! Keys are addressed as `section.key` on the command line. Numbers accept a
//! trailing `pi` factor (`-2pi`, `pi/4`).

use std::fmt;
use std::path::PathBuf;

use gradflow_core::{BoundaryKind, PcConfig, SolverKind};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MeshConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
    pub bc: BoundaryKind,
    pub degree: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    SwiftHohenberg,
    Zero,
}

impl PotentialKind {
    fn name(self) -> &'static str {
        match self {
            PotentialKind::SwiftHohenberg => "swift-hohenberg",
            PotentialKind::Zero => "zero",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub potential: PotentialKind,
    pub epsilon: f64,
    pub g: f64,
    pub a: f64,
    pub c0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TableauSource {
    Builtin(String),
    File(PathBuf),
}

/// Length of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Duration {
    FinalTime(f64),
    Steps(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeConfig {
    pub tableau: TableauSource,
    pub tau: f64,
    pub duration: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub allow_uncertified: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec {
    Zero,
    /// Uniform cell means in `[-amplitude, amplitude]`.
    Random { seed: u64, amplitude: f64 },
    /// A named exact solution at the start time.
    Manufactured(String),
    /// A field file written by `simulate`.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceSpec {
    None,
    Manufactured(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotFormat {
    None,
    Vtk,
    Csv,
    Both,
}

impl SnapshotFormat {
    fn name(self) -> &'static str {
        match self {
            SnapshotFormat::None => "none",
            SnapshotFormat::Vtk => "vtk",
            SnapshotFormat::Csv => "csv",
            SnapshotFormat::Both => "both",
        }
    }

    pub fn vtk(self) -> bool {
        matches!(self, SnapshotFormat::Vtk | SnapshotFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, SnapshotFormat::Csv | SnapshotFormat::Both)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Energy history file name inside `dir`; empty disables it.
    pub energy_csv: String,
    /// Snapshot times; empty means six evenly spaced times ending at the final time.
    pub snapshot_times: Vec<f64>,
    pub snapshot_format: SnapshotFormat,
    pub samples_per_cell: usize,
    /// Final field file name inside `dir`; empty disables it.
    pub final_field: String,
}

/// Resolutions swept by the accuracy commands.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub cells: Vec<usize>,
    pub tau: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub model: ModelConfig,
    pub time: TimeConfig,
    pub pc: PcConfig,
    pub solver: SolverConfig,
    pub initial: InitialSpec,
    pub source: SourceSpec,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: MeshConfig {
                lower: vec![0.0, 0.0],
                upper: vec![100.0, 100.0],
                cells: vec![64, 64],
                bc: BoundaryKind::Periodic,
                degree: 2,
            },
            model: ModelConfig {
                potential: PotentialKind::SwiftHohenberg,
                epsilon: 0.3,
                g: 0.0,
                a: 1.0,
                c0: 1000.0,
            },
            time: TimeConfig {
                tableau: TableauSource::Builtin("gl4".into()),
                tau: 0.1,
                duration: Duration::Steps(100),
            },
            pc: PcConfig::default(),
            solver: SolverConfig {
                kind: SolverKind::Iterative,
                allow_uncertified: false,
            },
            initial: InitialSpec::Random {
                seed: 1,
                amplitude: 0.1,
            },
            source: SourceSpec::None,
            output: OutputConfig {
                dir: PathBuf::from("."),
                energy_csv: "energy.csv".into(),
                snapshot_times: Vec::new(),
                snapshot_format: SnapshotFormat::Vtk,
                samples_per_cell: 4,
                final_field: String::new(),
            },
            sweep: SweepConfig {
                cells: Vec::new(),
                tau: Vec::new(),
            },
        }
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let bad = || format!("cannot parse `{s}` as a number");
    if let Some(pos) = s.find("pi") {
        let (head, tail) = (&s[..pos], &s[pos + 2..]);
        let factor = match head.trim() {
            "" | "+" => 1.0,
            "-" => -1.0,
            h => h.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?,
        };
        let divisor = match tail.trim() {
            "" => 1.0,
            t => t
                .strip_prefix('/')
                .ok_or_else(bad)?
                .trim()
                .parse::<f64>()
                .map_err(|_| bad())?,
        };
        return Ok(factor * std::f64::consts::PI / divisor);
    }
    let v: f64 = s.parse().map_err(|_| bad())?;
    Ok(v)
}

fn parse_finite(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    s.split_whitespace().map(item).collect()
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.trim().parse().map_err(|_| format!("cannot parse `{s}` as a nonnegative integer"))
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s.trim() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        other => Err(format!("expected true or false, found `{other}`")),
    }
}

fn join<T: fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

impl RunConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }

    /// Applies configuration text, keeping keys it does not mention.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(CliError::config(line_no, format!("unterminated section header `{line}`")));
                };
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(line_no, format!("expected `key = value`, found `{line}`")));
            };
            if section.is_empty() {
                return Err(CliError::config(line_no, "key outside of any [section]"));
            }
            let full = format!("{section}.{}", key.trim());
            self.set(&full, value.trim()).map_err(|m| CliError::config(line_no, m))?;
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Override(format!("expected `section.key=value`, found `{assignment}`")))?;
        self.set(key.trim(), value.trim())
            .map_err(|m| CliError::Override(format!("{}: {m}", key.trim())))
    }

    /// Sets one key. Sweep keys are `sweep.cells` and `sweep.tau`.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "mesh.lower" => self.mesh.lower = parse_list(value, parse_finite)?,
            "mesh.upper" => self.mesh.upper = parse_list(value, parse_finite)?,
            "mesh.cells" => self.mesh.cells = parse_list(value, parse_usize)?,
            "mesh.bc" => self.mesh.bc = BoundaryKind::from_name(value).map_err(|e| e.to_string())?,
            "mesh.degree" => self.mesh.degree = parse_usize(value)?,
            "model.potential" => {
                self.model.potential = match value {
                    "swift-hohenberg" => PotentialKind::SwiftHohenberg,
                    "zero" => PotentialKind::Zero,
                    other => return Err(format!("unknown potential `{other}`")),
                }
            }
            "model.epsilon" => self.model.epsilon = parse_finite(value)?,
            "model.g" => self.model.g = parse_finite(value)?,
            "model.a" => self.model.a = parse_finite(value)?,
            "model.c0" => self.model.c0 = parse_finite(value)?,
            "time.tableau" => {
                self.time.tableau = match value.strip_prefix("file:") {
                    Some(path) => TableauSource::File(PathBuf::from(path.trim())),
                    None => TableauSource::Builtin(value.to_string()),
                }
            }
            "time.tau" => self.time.tau = parse_f64(value)?,
            "time.final_time" => self.time.duration = Duration::FinalTime(parse_f64(value)?),
            "time.steps" => self.time.duration = Duration::Steps(parse_usize(value)?),
            "pc.iterations" => self.pc.max_iterations = parse_usize(value)?,
            "pc.tolerance" => self.pc.tolerance = parse_f64(value)?,
            "pc.reject_growth" => self.pc.reject_growth = parse_bool(value)?,
            "solver.kind" => self.solver.kind = SolverKind::from_name(value).map_err(|e| e.to_string())?,
            "solver.allow_uncertified" => self.solver.allow_uncertified = parse_bool(value)?,
            "initial.kind" => {
                self.initial = match value {
                    "zero" => InitialSpec::Zero,
                    "random" => match self.initial {
                        InitialSpec::Random { .. } => return Ok(()),
                        _ => InitialSpec::Random {
                            seed: 1,
                            amplitude: 0.1,
                        },
                    },
                    "manufactured" => InitialSpec::Manufactured("sine-half".into()),
                    "file" => InitialSpec::File(PathBuf::new()),
                    other => return Err(format!("unknown initial condition `{other}`")),
                }
            }
            "initial.seed" => match &mut self.initial {
                InitialSpec::Random { seed, .. } => {
                    *seed = value.trim().parse().map_err(|_| format!("cannot parse seed `{value}`"))?
                }
                _ => return Err("initial.seed requires initial.kind = random".into()),
            },
            "initial.amplitude" => match &mut self.initial {
                InitialSpec::Random { amplitude, .. } => *amplitude = parse_finite(value)?,
                _ => return Err("initial.amplitude requires initial.kind = random".into()),
            },
            "initial.name" => match &mut self.initial {
                InitialSpec::Manufactured(name) => *name = value.to_string(),
                _ => return Err("initial.name requires initial.kind = manufactured".into()),
            },
            "initial.path" => match &mut self.initial {
                InitialSpec::File(path) => *path = PathBuf::from(value),
                _ => return Err("initial.path requires initial.kind = file".into()),
            },
            "source.kind" => {
                self.source = match value {
                    "none" => SourceSpec::None,
                    v => match v.strip_prefix("manufactured:") {
                        Some(name) => SourceSpec::Manufactured(name.trim().to_string()),
                        None => return Err(format!("unknown source `{v}` (none | manufactured:<name>)")),
                    },
                }
            }
            "output.dir" => self.output.dir = PathBuf::from(value),
            "output.energy_csv" => self.output.energy_csv = value.to_string(),
            "output.snapshot_times" => self.output.snapshot_times = parse_list(value, parse_finite)?,
            "output.snapshot_format" => {
                self.output.snapshot_format = match value {
                    "none" => SnapshotFormat::None,
                    "vtk" => SnapshotFormat::Vtk,
                    "csv" => SnapshotFormat::Csv,
                    "both" => SnapshotFormat::Both,
                    other => return Err(format!("unknown snapshot format `{other}`")),
                }
            }
            "output.samples_per_cell" => self.output.samples_per_cell = parse_usize(value)?,
            "output.final_field" => self.output.final_field = value.to_string(),
            "sweep.cells" => self.sweep.cells = parse_list(value, parse_usize)?,
            "sweep.tau" => self.sweep.tau = parse_list(value, parse_f64)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Checks the invariants the commands rely on.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Invalid(m));
        let m = &self.mesh;
        let dim = m.cells.len();
        if !(1..=2).contains(&dim) || m.lower.len() != dim || m.upper.len() != dim {
            return bad(format!(
                "mesh needs 1 or 2 axes with matching lower/upper/cells (got {}, {}, {})",
                m.lower.len(),
                m.upper.len(),
                dim
            ));
        }
        if m.lower.iter().zip(&m.upper).any(|(lo, hi)| !(lo < hi)) {
            return bad("mesh.lower must be below mesh.upper on every axis".into());
        }
        if m.degree > 4 {
            return bad(format!("mesh.degree = {} outside 0..=4", m.degree));
        }
        if !(self.time.tau > 0.0 && self.time.tau.is_finite()) {
            return bad(format!("time.tau = {} must be positive", self.time.tau));
        }
        self.steps_for(self.time.tau)?;
        if !(self.pc.tolerance >= 0.0) {
            return bad(format!("pc.tolerance = {} must be nonnegative", self.pc.tolerance));
        }
        if !(self.model.c0 > 0.0) {
            return bad(format!("model.c0 = {} must be positive", self.model.c0));
        }
        if let InitialSpec::Random { amplitude, .. } = self.initial {
            if !(amplitude >= 0.0) {
                return bad(format!("initial.amplitude = {amplitude} must be nonnegative"));
            }
        }
        if self.output.samples_per_cell == 0 {
            return bad("output.samples_per_cell must be at least 1".into());
        }
        if self.sweep.tau.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("sweep.tau entries must be positive".into());
        }
        Ok(())
    }

    /// Number of steps of size `tau` covering the configured duration.
    pub fn steps_for(&self, tau: f64) -> Result<usize> {
        match self.time.duration {
            Duration::Steps(n) => Ok(n),
            Duration::FinalTime(t) => {
                let n = (t / tau).round();
                if !(t >= 0.0) || (n * tau - t).abs() > 1e-9 * t.abs().max(tau) {
                    return Err(CliError::Invalid(format!(
                        "final time {t} is not an integer multiple of the step {tau}"
                    )));
                }
                Ok(n as usize)
            }
        }
    }

    pub fn final_time(&self) -> Result<f64> {
        Ok(self.steps_for(self.time.tau)? as f64 * self.time.tau)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.mesh;
        writeln!(f, "[mesh]")?;
        writeln!(f, "lower = {}", join(&m.lower))?;
        writeln!(f, "upper = {}", join(&m.upper))?;
        writeln!(f, "cells = {}", join(&m.cells))?;
        writeln!(f, "bc = {}", m.bc.name())?;
        writeln!(f, "degree = {}", m.degree)?;

        let md = &self.model;
        writeln!(f, "\n[model]")?;
        writeln!(f, "potential = {}", md.potential.name())?;
        writeln!(f, "epsilon = {:?}", md.epsilon)?;
        writeln!(f, "g = {:?}", md.g)?;
        writeln!(f, "a = {:?}", md.a)?;
        writeln!(f, "c0 = {:?}", md.c0)?;

        writeln!(f, "\n[time]")?;
        match &self.time.tableau {
            TableauSource::Builtin(name) => writeln!(f, "tableau = {name}")?,
            TableauSource::File(path) => writeln!(f, "tableau = file:{}", path.display())?,
        }
        writeln!(f, "tau = {:?}", self.time.tau)?;
        match self.time.duration {
            Duration::FinalTime(t) => writeln!(f, "final_time = {t:?}")?,
            Duration::Steps(n) => writeln!(f, "steps = {n}")?,
        }

        writeln!(f, "\n[pc]")?;
        writeln!(f, "iterations = {}", self.pc.max_iterations)?;
        writeln!(f, "tolerance = {:?}", self.pc.tolerance)?;
        writeln!(f, "reject_growth = {}", self.pc.reject_growth)?;

        writeln!(f, "\n[solver]")?;
        writeln!(f, "kind = {}", self.solver.kind.name())?;
        writeln!(f, "allow_uncertified = {}", self.solver.allow_uncertified)?;

        writeln!(f, "\n[initial]")?;
        match &self.initial {
            InitialSpec::Zero => writeln!(f, "kind = zero")?,
            InitialSpec::Random { seed, amplitude } => {
                writeln!(f, "kind = random")?;
                writeln!(f, "seed = {seed}")?;
                writeln!(f, "amplitude = {amplitude:?}")?;
            }
            InitialSpec::Manufactured(name) => {
                writeln!(f, "kind = manufactured")?;
                writeln!(f, "name = {name}")?;
            }
            InitialSpec::File(path) => {
                writeln!(f, "kind = file")?;
                writeln!(f, "path = {}", path.display())?;
            }
        }

        writeln!(f, "\n[source]")?;
        match &self.source {
            SourceSpec::None => writeln!(f, "kind = none")?,
            SourceSpec::Manufactured(name) => writeln!(f, "kind = manufactured:{name}")?,
        }

        let o = &self.output;
        writeln!(f, "\n[output]")?;
        writeln!(f, "dir = {}", o.dir.display())?;
        writeln!(f, "energy_csv = {}", o.energy_csv)?;
        writeln!(f, "snapshot_times = {}", join(&o.snapshot_times))?;
        writeln!(f, "snapshot_format = {}", o.snapshot_format.name())?;
        writeln!(f, "samples_per_cell = {}", o.samples_per_cell)?;
        writeln!(f, "final_field = {}", o.final_field)?;

        writeln!(f, "\n[sweep]")?;
        writeln!(f, "cells = {}", join(&self.sweep.cells))?;
        write!(f, "tau = {}", join(&self.sweep.tau))?;
        writeln!(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_string()).unwrap(), cfg);
    }

    #[test]
    fn pi_numbers() {
        assert_eq!(parse_f64("-2pi").unwrap(), -2.0 * std::f64::consts::PI);
        assert_eq!(parse_f64("pi/4").unwrap(), std::f64::consts::PI / 4.0);
        assert_eq!(parse_f64("4*pi").unwrap(), 4.0 * std::f64::consts::PI);
        assert_eq!(parse_f64("1e-3").unwrap(), 1e-3);
        assert!(parse_f64("pie").is_err());
        assert!(parse_f64("two").is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "[mesh]\ndegree = 2\n\n[time]\ntau = fast\n";
        match RunConfig::parse(text) {
            Err(CliError::Config { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("fast"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = RunConfig::parse("[mesh]\ncolour = red\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(RunConfig::parse("degree = 2").is_err());
        assert!(RunConfig::parse("[mesh\n").is_err());
        assert!(RunConfig::parse("[mesh]\ndegree 2\n").is_err());
    }

    #[test]
    fn overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("time.tau=0.5").unwrap();
        cfg.apply_override("time.final_time = 2").unwrap();
        assert_eq!(cfg.time.tau, 0.5);
        assert_eq!(cfg.steps_for(0.5).unwrap(), 4);
        assert!(cfg.apply_override("time.tau").is_err());
        assert!(cfg.apply_override("initial.name=x").is_err());
        cfg.apply_override("initial.kind=manufactured").unwrap();
        cfg.apply_override("initial.name=sine-quarter").unwrap();
        assert_eq!(cfg.initial, InitialSpec::Manufactured("sine-quarter".into()));
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.time.duration = Duration::FinalTime(1.1);
        cfg.time.tau = 0.1;
        cfg.validate().unwrap();
        assert_eq!(cfg.steps_for(0.1).unwrap(), 11);
        cfg.time.duration = Duration::FinalTime(1.05);
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.mesh.degree = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.time.tau = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.mesh.upper = vec![100.0];
        assert!(cfg.validate().is_err());
    }
}
