//! Initial data.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dg::{DgField, DgSpace, QuadField};
use crate::error::{Error, Result};

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum InitialCondition {
    /// A pointwise function, projected onto the space.
    Function(PointFn),
    /// Piecewise constants with cell means drawn uniformly from `[-amplitude, amplitude]`.
    RandomCellMeans { seed: u64, amplitude: f64 },
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Function(_) => f.write_str("Function(..)"),
            InitialCondition::RandomCellMeans { seed, amplitude } => f
                .debug_struct("RandomCellMeans")
                .field("seed", seed)
                .field("amplitude", amplitude)
                .finish(),
        }
    }
}

impl InitialCondition {
    pub fn function(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        InitialCondition::Function(Arc::new(f))
    }

    /// Nodal values of the initial data and its projection.
    pub fn realize(&self, space: &Arc<DgSpace>) -> Result<(QuadField, DgField)> {
        match self {
            InitialCondition::Function(f) => {
                let nodal = space.sample(|x| f(x));
                let u = space.project_quad(&nodal);
                Ok((nodal, u))
            }
            InitialCondition::RandomCellMeans { seed, amplitude } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::InvalidParameter(format!("amplitude {amplitude}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut u = DgField::zeros(space);
                // The constant basis function is 1/sqrt(|K|).
                let scale = space.mesh().cell_volume().sqrt();
                for c in 0..space.mesh().num_cells() {
                    let mean = if *amplitude > 0.0 {
                        rng.gen_range(-*amplitude..=*amplitude)
                    } else {
                        0.0
                    };
                    u.cell_mut(c)[0] = mean * scale;
                }
                let nodal = space.eval_at_quad(&u);
                Ok((nodal, u))
            }
        }
    }
}
