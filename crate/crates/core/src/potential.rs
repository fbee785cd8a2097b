//! Nonlinear potentials, the auxiliary-variable map and manufactured solutions.

use std::fmt;
use std::sync::Arc;

use crate::dg::{DgSpace, QuadField};
use crate::error::{Error, Result};

pub const DEFAULT_C0: f64 = 1000.0;

/// A smooth scalar potential `Phi` and its derivative.
pub trait PotentialShape: Send + Sync + fmt::Debug {
    fn value(&self, w: f64) -> f64;
    fn derivative(&self, w: f64) -> f64;
    fn describe(&self) -> String;
}

/// `Phi(w) = -eps/2 w^2 - g/3 w^3 + w^4/4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwiftHohenberg {
    pub epsilon: f64,
    pub g: f64,
}

impl PotentialShape for SwiftHohenberg {
    fn value(&self, w: f64) -> f64 {
        let w2 = w * w;
        -0.5 * self.epsilon * w2 - self.g / 3.0 * w2 * w + 0.25 * w2 * w2
    }

    fn derivative(&self, w: f64) -> f64 {
        -self.epsilon * w - self.g * w * w + w * w * w
    }

    fn describe(&self) -> String {
        format!("swift-hohenberg(epsilon={}, g={})", self.epsilon, self.g)
    }
}

/// `Phi = 0`; reduces the model to the linear flow.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ZeroPotential;

impl PotentialShape for ZeroPotential {
    fn value(&self, _w: f64) -> f64 {
        0.0
    }

    fn derivative(&self, _w: f64) -> f64 {
        0.0
    }

    fn describe(&self) -> String {
        "zero".into()
    }
}

/// Model parameters: the shape of `Phi`, the shift `C0` and the operator shift `a`
/// in `L = -(Laplacian + a)`.
#[derive(Clone, Debug)]
pub struct Potential {
    shape: Arc<dyn PotentialShape>,
    c0: f64,
    a: f64,
}

impl Potential {
    pub fn new(shape: Arc<dyn PotentialShape>, c0: f64, a: f64) -> Result<Self> {
        if !(c0.is_finite() && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("C0 = {c0}, a = {a}")));
        }
        Ok(Self { shape, c0, a })
    }

    /// Swift-Hohenberg model with `a = 1` and the default shift.
    pub fn swift_hohenberg(epsilon: f64, g: f64) -> Self {
        Self {
            shape: Arc::new(SwiftHohenberg { epsilon, g }),
            c0: DEFAULT_C0,
            a: 1.0,
        }
    }

    pub fn zero(a: f64) -> Self {
        Self {
            shape: Arc::new(ZeroPotential),
            c0: DEFAULT_C0,
            a,
        }
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn with_a(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    pub fn shape(&self) -> &Arc<dyn PotentialShape> {
        &self.shape
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn phi(&self, w: f64) -> f64 {
        self.shape.value(w)
    }

    pub fn dphi(&self, w: f64) -> f64 {
        self.shape.derivative(w)
    }

    fn radicand(&self, w: f64) -> Result<f64> {
        let r = self.phi(w) + self.c0;
        if r > 0.0 && r.is_finite() {
            Ok(r)
        } else {
            Err(Error::NonpositiveRadicand {
                w,
                c0: self.c0,
                radicand: r,
            })
        }
    }

    /// `H(w) = Phi'(w) / sqrt(Phi(w) + C0)`.
    pub fn h(&self, w: f64) -> Result<f64> {
        Ok(self.dphi(w) / self.radicand(w)?.sqrt())
    }

    /// `sqrt(Phi(w) + C0)`, the pointwise auxiliary variable.
    pub fn aux(&self, w: f64) -> Result<f64> {
        Ok(self.radicand(w)?.sqrt())
    }

    pub fn h_field(&self, u: &QuadField) -> Result<QuadField> {
        self.map_field(u, |w| self.h(w))
    }

    pub fn aux_field(&self, u: &QuadField) -> Result<QuadField> {
        self.map_field(u, |w| self.aux(w))
    }

    fn map_field(&self, u: &QuadField, f: impl Fn(f64) -> Result<f64>) -> Result<QuadField> {
        let values = u.values().iter().map(|&w| f(w)).collect::<Result<Vec<_>>>()?;
        QuadField::from_values(u.space(), values)
    }
}

/// Critical points `u_-`, `u_+` of the Swift-Hohenberg potential and the depth
/// `b = -min(Phi(u_-), Phi(u_+))`, so `Phi >= -b` everywhere.
pub fn sh_minima(epsilon: f64, g: f64) -> (f64, f64, f64) {
    let disc = (g * g + 4.0 * epsilon).sqrt();
    let lo = 0.5 * (g - disc);
    let hi = 0.5 * (g + disc);
    let depth = |v: f64| (g * v * (g * g + 4.0 * epsilon) + epsilon * (g * g + 3.0 * epsilon)) / 12.0;
    (lo, hi, depth(lo).max(depth(hi)))
}

/// Separable sine mode `v = exp(-r t) prod_d sin(kappa x_d)`, an eigenfunction of
/// `L^2` with eigenvalue `r = (dim kappa^2 - a)^2`. With source `f = Phi'(v)` it
/// solves the forced gradient flow exactly.
#[derive(Clone, Debug)]
pub struct ManufacturedSolution {
    pub wavenumber: f64,
    pub dim: usize,
    potential: Potential,
}

/// Names accepted by [`ManufacturedSolution::named`].
pub const MANUFACTURED_NAMES: [&str; 2] = ["sine-half", "sine-quarter"];

impl ManufacturedSolution {
    pub fn new(wavenumber: f64, dim: usize, potential: Potential) -> Self {
        Self {
            wavenumber,
            dim,
            potential,
        }
    }

    pub fn named(name: &str, dim: usize, potential: Potential) -> Result<Self> {
        let kappa = match name {
            "sine-half" => 0.5,
            "sine-quarter" => 0.25,
            _ => {
                return Err(Error::UnknownName {
                    kind: "manufactured solution",
                    name: name.to_string(),
                })
            }
        };
        Ok(Self::new(kappa, dim, potential))
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn decay_rate(&self) -> f64 {
        let s = self.dim as f64 * self.wavenumber * self.wavenumber - self.potential.a();
        s * s
    }

    pub fn exact(&self, x: &[f64], t: f64) -> f64 {
        let space: f64 = x.iter().take(self.dim).map(|&xi| (self.wavenumber * xi).sin()).product();
        (-self.decay_rate() * t).exp() * space
    }

    pub fn source(&self, x: &[f64], t: f64) -> f64 {
        self.potential.dphi(self.exact(x, t))
    }

    /// `exact` at every quadrature node, using the product structure so that
    /// sines are only evaluated once per node coordinate.
    pub fn nodal_exact(&self, space: &Arc<DgSpace>, t: f64) -> QuadField {
        let mesh = space.mesh();
        let nodes = &space.rule().nodes;
        let m = nodes.len();
        let decay = (-self.decay_rate() * t).exp();
        let tables: Vec<Vec<f64>> = (0..space.dim())
            .map(|d| {
                let ax = mesh.axis(d);
                let h = ax.spacing();
                (0..ax.cells)
                    .flat_map(|i| {
                        nodes
                            .iter()
                            .map(move |z| (self.wavenumber * (ax.lo + h * (i as f64 + 0.5 * (z + 1.0)))).sin())
                    })
                    .collect()
            })
            .collect();
        let nx = mesh.axis(0).cells;
        let nn = space.nodes_per_cell();
        let mut values = vec![0.0; space.n_quad()];
        for (c, cv) in values.chunks_exact_mut(nn).enumerate() {
            let (ix, iy) = (c % nx, c / nx);
            for (nd, v) in cv.iter_mut().enumerate() {
                let (a, b) = (nd % m, nd / m);
                let mut p = decay * tables[0][ix * m + a];
                if space.dim() == 2 {
                    p *= tables[1][iy * m + b];
                }
                *v = p;
            }
        }
        QuadField::from_values(space, values).expect("one value per node")
    }

    pub fn nodal_source(&self, space: &Arc<DgSpace>, t: f64) -> QuadField {
        self.nodal_exact(space, t).map(|v| self.potential.dphi(v))
    }
}
