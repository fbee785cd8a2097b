//! Energy histories, plot snapshots and field files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use gradflow_core::{BoundaryKind, DgField, DgSpace, EnergyRecord};

use crate::error::{CliError, Result};

pub const ENERGY_HEADER: &str = "n,t,E,E_shifted,dissipation,bound,pc_iters";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Streams energy records as CSV. Values carry 17 significant digits.
pub struct EnergyWriter {
    out: Box<dyn Write>,
    path: std::path::PathBuf,
}

impl EnergyWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut w = Self {
            out: Box::new(create(path)?),
            path: path.to_path_buf(),
        };
        w.line(ENERGY_HEADER)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn write(&mut self, r: &EnergyRecord) -> Result<()> {
        let line = format_energy(r);
        self.line(&line)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

pub fn format_energy(r: &EnergyRecord) -> String {
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
        r.step, r.t, r.energy, r.shifted, r.dissipation, r.bound, r.pc_iterations
    )
}

/// Parses a file written by [`EnergyWriter`].
pub fn read_energy_csv(path: &Path) -> Result<Vec<EnergyRecord>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize, m: &str| CliError::Format {
        path: path.to_path_buf(),
        message: format!("line {line}: {m}"),
    };
    let mut out = Vec::new();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if ln == 0 {
            if line != ENERGY_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(ln + 1, "expected 7 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(ln + 1, "bad number"));
        out.push(EnergyRecord {
            step: f[0].parse().map_err(|_| bad(ln + 1, "bad step"))?,
            t: num(f[1])?,
            energy: num(f[2])?,
            shifted: num(f[3])?,
            dissipation: num(f[4])?,
            bound: num(f[5])?,
            pc_iterations: f[6].parse().map_err(|_| bad(ln + 1, "bad iteration count"))?,
        });
    }
    Ok(out)
}

/// Uniform plot grid: `samples` points per cell and axis, placed at sub-cell centres.
pub struct PlotGrid {
    pub coords: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

pub fn sample_grid(space: &Arc<DgSpace>, u: &DgField, samples: usize) -> PlotGrid {
    let mesh = space.mesh();
    let dim = space.dim();
    let coords: Vec<Vec<f64>> = (0..dim)
        .map(|d| {
            let ax = mesh.axis(d);
            let n = ax.cells * samples;
            let h = ax.length() / n as f64;
            (0..n).map(|i| ax.lo + (i as f64 + 0.5) * h).collect()
        })
        .collect();
    let nx = coords[0].len();
    let ny = if dim == 2 { coords[1].len() } else { 1 };
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let cx = i / samples;
            let (c, x) = if dim == 2 {
                (mesh.cell_id([cx, j / samples]), vec![coords[0][i], coords[1][j]])
            } else {
                (cx, vec![coords[0][i]])
            };
            values.push(space.eval_in_cell(u, c, &x));
        }
    }
    PlotGrid { coords, values }
}

/// Legacy ASCII VTK rectilinear grid with point data `u`.
pub fn write_vtk(path: &Path, grid: &PlotGrid, t: f64) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| CliError::io(path, e);
    let nx = grid.coords[0].len();
    let ny = grid.coords.get(1).map_or(1, Vec::len);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "gradflow u at t = {t:.16e}")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET RECTILINEAR_GRID")?;
        writeln!(w, "DIMENSIONS {nx} {ny} 1")?;
        let axis = |w: &mut BufWriter<File>, name: &str, v: &[f64]| -> std::io::Result<()> {
            writeln!(w, "{name}_COORDINATES {} double", v.len())?;
            for x in v {
                writeln!(w, "{x:.16e}")?;
            }
            Ok(())
        };
        axis(&mut w, "X", &grid.coords[0])?;
        axis(&mut w, "Y", grid.coords.get(1).map_or(&[0.0][..], Vec::as_slice))?;
        axis(&mut w, "Z", &[0.0])?;
        writeln!(w, "POINT_DATA {}", nx * ny)?;
        writeln!(w, "SCALARS u double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in &grid.values {
            writeln!(w, "{v:.16e}")?;
        }
        w.flush()
    };
    body().map_err(io)
}

/// Plain CSV grid `x,y,u`, one row per plot point.
pub fn write_grid_csv(path: &Path, grid: &PlotGrid) -> Result<()> {
    let mut w = create(path)?;
    let nx = grid.coords[0].len();
    let ny = grid.coords.get(1).map_or(1, Vec::len);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "x,y,u")?;
        for j in 0..ny {
            let y = grid.coords.get(1).map_or(0.0, |c| c[j]);
            for i in 0..nx {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", grid.coords[0][i], y, grid.values[j * nx + i])?;
            }
        }
        w.flush()
    };
    body().map_err(|e| CliError::io(path, e))
}

const FIELD_MAGIC: &str = "gradflow-field 1";

/// Contents of a field file: the mesh it lives on and the coefficients of
/// `u` and of the auxiliary variable.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
    pub bc: BoundaryKind,
    pub degree: usize,
    pub step: usize,
    pub t: f64,
    pub u: Vec<f64>,
    pub aux: Vec<f64>,
}

impl FieldFile {
    pub fn new(space: &Arc<DgSpace>, step: usize, t: f64, u: &DgField, aux: &DgField) -> Self {
        let mesh = space.mesh();
        let axes = mesh.axes();
        Self {
            lower: axes.iter().map(|a| a.lo).collect(),
            upper: axes.iter().map(|a| a.hi).collect(),
            cells: axes.iter().map(|a| a.cells).collect(),
            bc: mesh.bc(),
            degree: space.degree(),
            step,
            t,
            u: u.coeffs().to_vec(),
            aux: aux.coeffs().to_vec(),
        }
    }

    /// True when the file was written on the same mesh and degree as `space`.
    pub fn matches(&self, space: &DgSpace) -> bool {
        let m = space.mesh();
        let axes = m.axes();
        self.degree == space.degree()
            && self.bc == m.bc()
            && self.cells.len() == axes.len()
            && axes.iter().enumerate().all(|(d, a)| {
                a.cells == self.cells[d] && a.lo == self.lower[d] && a.hi == self.upper[d]
            })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let mut body = || -> std::io::Result<()> {
            writeln!(w, "{FIELD_MAGIC}")?;
            writeln!(w, "lower {}", list(&self.lower))?;
            writeln!(w, "upper {}", list(&self.upper))?;
            writeln!(
                w,
                "cells {}",
                self.cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
            )?;
            writeln!(w, "bc {}", self.bc.name())?;
            writeln!(w, "degree {}", self.degree)?;
            writeln!(w, "step {}", self.step)?;
            writeln!(w, "t {:?}", self.t)?;
            writeln!(w, "coefficients {}", self.u.len())?;
            for (u, a) in self.u.iter().zip(&self.aux) {
                writeln!(w, "{u:?} {a:?}")?;
            }
            w.flush()
        };
        body().map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |line: usize, m: String| CliError::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: {m}"),
        };
        let mut lines = text.lines().enumerate();
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (ln, line) = lines.next().ok_or_else(|| bad(0, format!("missing `{key}`")))?;
            let rest = if key.is_empty() {
                line
            } else {
                line.strip_prefix(key)
                    .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
                    .ok_or_else(|| bad(ln + 1, format!("expected `{key}`")))?
            };
            Ok((ln + 1, rest.to_string()))
        };
        let (ln, magic) = next("")?;
        if magic != FIELD_MAGIC {
            return Err(bad(ln, "not a gradflow field file".into()));
        }
        let floats = |ln: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(ln, format!("bad number `{t}`"))))
                .collect()
        };
        let (ln, s) = next("lower")?;
        let lower = floats(ln, &s)?;
        let (ln, s) = next("upper")?;
        let upper = floats(ln, &s)?;
        let (ln, s) = next("cells")?;
        let cells = s
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(ln, format!("bad cell count `{t}`"))))
            .collect::<Result<Vec<usize>>>()?;
        let (ln, s) = next("bc")?;
        let bc = BoundaryKind::from_name(&s).map_err(|e| bad(ln, e.to_string()))?;
        let (ln, s) = next("degree")?;
        let degree = s.parse().map_err(|_| bad(ln, "bad degree".into()))?;
        let (ln, s) = next("step")?;
        let step = s.parse().map_err(|_| bad(ln, "bad step".into()))?;
        let (ln, s) = next("t")?;
        let t = s.parse().map_err(|_| bad(ln, "bad time".into()))?;
        let (ln, s) = next("coefficients")?;
        let n: usize = s.parse().map_err(|_| bad(ln, "bad coefficient count".into()))?;
        let mut u = Vec::with_capacity(n);
        let mut aux = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, s) = next("")?;
            let v = floats(ln, &s)?;
            if v.len() != 2 {
                return Err(bad(ln, "expected two coefficients".into()));
            }
            u.push(v[0]);
            aux.push(v[1]);
        }
        Ok(Self {
            lower,
            upper,
            cells,
            bc,
            degree,
            step,
            t,
            u,
            aux,
        })
    }
}
