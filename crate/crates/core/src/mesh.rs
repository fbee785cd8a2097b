//! Uniform axis-aligned meshes in one and two dimensions.
//!
//! Cells are numbered `ix + nx * iy`. Faces normal to axis 0 come first,
//! followed by faces normal to axis 1. Every two-sided face stores the cell
//! on its low side as `k1` and the cell on its high side as `k2`, so the face
//! normal points from `k1` to `k2`. On a periodic mesh the wrap face between
//! the last and the first cell of a row is enumerated once, with the last
//! cell as `k1`.

use crate::error::{Error, Result};

/// Boundary treatment of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Periodic,
    /// `d_n u = d_n Lap u = 0` on the boundary.
    Natural,
}

impl BoundaryKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::Periodic => "periodic",
            BoundaryKind::Natural => "natural",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "periodic" => Ok(BoundaryKind::Periodic),
            "natural" => Ok(BoundaryKind::Natural),
            _ => Err(Error::UnknownName {
                kind: "boundary condition",
                name: name.to_string(),
            }),
        }
    }
}

/// One coordinate direction of the mesh: the interval `[lo, hi]` split into `cells` equal parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Self {
        Self { lo, hi, cells }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.cells as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    PeriodicWrap,
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    /// Axis the face normal is aligned with.
    pub axis: usize,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    pub kind: FaceKind,
}

impl Face {
    pub fn is_two_sided(&self) -> bool {
        self.k1.is_some() && self.k2.is_some()
    }

    /// Number of cells adjacent to the face.
    pub fn cell_count(&self) -> usize {
        self.k1.is_some() as usize + self.k2.is_some() as usize
    }
}

/// A face as seen from one of its cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellFace {
    pub face: usize,
    /// True when the face normal points out of the cell (the cell is `k1`).
    pub outward: bool,
}

/// Geometry of a single cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub index: [usize; 2],
    pub lower: [f64; 2],
    pub size: [f64; 2],
}

impl Cell {
    pub fn center(&self, dim: usize) -> [f64; 2] {
        let mut c = [0.0; 2];
        for d in 0..dim {
            c[d] = self.lower[d] + 0.5 * self.size[d];
        }
        c
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    axes: Vec<Axis>,
    bc: BoundaryKind,
    faces: Vec<Face>,
    cell_faces: Vec<Vec<CellFace>>,
}

impl Mesh {
    /// Builds a uniform mesh. `axes` has one entry per dimension (1 or 2).
    pub fn new(axes: &[Axis], bc: BoundaryKind) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidMesh(format!(
                "dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for (d, ax) in axes.iter().enumerate() {
            if ax.cells < 2 {
                return Err(Error::InvalidMesh(format!(
                    "axis {d} needs at least 2 cells, got {}",
                    ax.cells
                )));
            }
            if !(ax.lo.is_finite() && ax.hi.is_finite()) || ax.hi <= ax.lo {
                return Err(Error::InvalidMesh(format!(
                    "axis {d} has degenerate interval [{}, {}]",
                    ax.lo, ax.hi
                )));
            }
        }
        let mut mesh = Self {
            axes: axes.to_vec(),
            bc,
            faces: Vec::new(),
            cell_faces: Vec::new(),
        };
        mesh.build_faces();
        Ok(mesh)
    }

    /// Convenience constructor for the 2D box `[x0,x1] x [y0,y1]`.
    pub fn rectangle(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize, bc: BoundaryKind) -> Result<Self> {
        Self::new(&[Axis::new(x.0, x.1, nx), Axis::new(y.0, y.1, ny)], bc)
    }

    pub fn interval(lo: f64, hi: f64, n: usize, bc: BoundaryKind) -> Result<Self> {
        Self::new(&[Axis::new(lo, hi, n)], bc)
    }

    fn counts(&self) -> [usize; 2] {
        let mut n = [1; 2];
        for (d, ax) in self.axes.iter().enumerate() {
            n[d] = ax.cells;
        }
        n
    }

    fn build_faces(&mut self) {
        let dim = self.dim();
        let n = self.counts();
        let mut faces = Vec::new();
        for axis in 0..dim {
            let other = 1 - axis;
            let rows = if dim == 2 { n[other] } else { 1 };
            for r in 0..rows {
                let cell_at = |i: usize| {
                    let mut idx = [0; 2];
                    idx[axis] = i;
                    if dim == 2 {
                        idx[other] = r;
                    }
                    idx[0] + n[0] * idx[1]
                };
                let len = n[axis];
                match self.bc {
                    BoundaryKind::Periodic => {
                        for f in 0..len {
                            let kind = if f + 1 == len {
                                FaceKind::PeriodicWrap
                            } else {
                                FaceKind::Interior
                            };
                            faces.push(Face {
                                axis,
                                k1: Some(cell_at(f)),
                                k2: Some(cell_at((f + 1) % len)),
                                kind,
                            });
                        }
                    }
                    BoundaryKind::Natural => {
                        faces.push(Face {
                            axis,
                            k1: None,
                            k2: Some(cell_at(0)),
                            kind: FaceKind::Boundary,
                        });
                        for f in 1..len {
                            faces.push(Face {
                                axis,
                                k1: Some(cell_at(f - 1)),
                                k2: Some(cell_at(f)),
                                kind: FaceKind::Interior,
                            });
                        }
                        faces.push(Face {
                            axis,
                            k1: Some(cell_at(len - 1)),
                            k2: None,
                            kind: FaceKind::Boundary,
                        });
                    }
                }
            }
        }
        let mut cell_faces = vec![Vec::with_capacity(2 * dim); self.num_cells()];
        for (fi, face) in faces.iter().enumerate() {
            if let Some(k1) = face.k1 {
                cell_faces[k1].push(CellFace {
                    face: fi,
                    outward: true,
                });
            }
            if let Some(k2) = face.k2 {
                cell_faces[k2].push(CellFace {
                    face: fi,
                    outward: false,
                });
            }
        }
        self.faces = faces;
        self.cell_faces = cell_faces;
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, d: usize) -> &Axis {
        &self.axes[d]
    }

    pub fn bc(&self) -> BoundaryKind {
        self.bc
    }

    pub fn num_cells(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> Result<&Face> {
        self.faces.get(f).ok_or(Error::IndexOutOfRange {
            what: "face",
            index: f,
            len: self.faces.len(),
        })
    }

    /// Largest cell edge length. See [`Mesh::cell_diameter`] for the diagonal.
    pub fn h(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(0.0, f64::max)
    }

    pub fn cell_diameter(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| a.spacing() * a.spacing())
            .sum::<f64>()
            .sqrt()
    }

    /// Measure of the whole domain.
    pub fn volume(&self) -> f64 {
        self.axes.iter().map(Axis::length).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn cell_id(&self, index: [usize; 2]) -> usize {
        let n = self.counts();
        index[0] + n[0] * index[1]
    }

    pub fn cell(&self, c: usize) -> Result<Cell> {
        let len = self.num_cells();
        if c >= len {
            return Err(Error::IndexOutOfRange {
                what: "cell",
                index: c,
                len,
            });
        }
        Ok(self.cell_unchecked(c))
    }

    pub(crate) fn cell_unchecked(&self, c: usize) -> Cell {
        let n = self.counts();
        let index = [c % n[0], c / n[0]];
        let mut lower = [0.0; 2];
        let mut size = [0.0; 2];
        for (d, ax) in self.axes.iter().enumerate() {
            size[d] = ax.spacing();
            lower[d] = ax.lo + index[d] as f64 * size[d];
        }
        Cell { index, lower, size }
    }

    /// All faces adjacent to `cell`, with the orientation flag relative to that cell.
    pub fn faces_of(&self, cell: usize) -> Result<&[CellFace]> {
        self.cell_faces
            .get(cell)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                what: "cell",
                index: cell,
                len: self.num_cells(),
            })
    }

    /// Cell adjacent to `cell` across its high side along `axis`, if any.
    pub fn neighbor_high(&self, cell: usize, axis: usize) -> Option<usize> {
        self.cell_faces[cell]
            .iter()
            .find(|cf| cf.outward && self.faces[cf.face].axis == axis)
            .and_then(|cf| self.faces[cf.face].k2)
    }

    /// Locates the cell containing `x`; points on the upper boundary belong to the last cell.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for (d, ax) in self.axes.iter().enumerate() {
            let t = (x[d] - ax.lo) / ax.spacing();
            if !(t >= -1e-12 && t <= ax.cells as f64 + 1e-12) {
                return None;
            }
            idx[d] = (t.floor().max(0.0) as usize).min(ax.cells - 1);
        }
        Some(self.cell_id(idx))
    }
}
