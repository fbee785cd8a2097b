//! Linearly implicit energy-quadratized Runge-Kutta steps, with and without the
//! prediction-correction loop.
//!
//! The auxiliary variable `U = sqrt(Phi(u) + C0)` is advanced alongside `u`, so
//! every step costs a linear solve. A step first fixes extrapolated stage values
//! `u*_i`, freezes `H_i = H(u*_i)`, and then solves the stage system once.

use std::sync::Arc;

use log::debug;

use crate::dg::{DgField, DgSpace, QuadField};
use crate::diagnostics::discrete_energy;
use crate::error::{Error, Result};
use crate::operators::{apply_lh, assemble_g, SolverOptions, SparseOperator, StageSolver, StageSystem};
use crate::operators::stage::assemble_stage_system;
use crate::potential::{ManufacturedSolution, Potential};
use crate::rk::ButcherTableau;

/// A time-dependent source term, sampled at the quadrature nodes.
pub trait SourceTerm: Send + Sync {
    fn nodal(&self, space: &Arc<DgSpace>, t: f64) -> QuadField;
}

/// Source given pointwise as `f(x, t)`.
pub struct PointSource<F>(pub F);

impl<F: Fn(&[f64], f64) -> f64 + Send + Sync> SourceTerm for PointSource<F> {
    fn nodal(&self, space: &Arc<DgSpace>, t: f64) -> QuadField {
        space.sample(|x| (self.0)(x, t))
    }
}

impl SourceTerm for ManufacturedSolution {
    fn nodal(&self, space: &Arc<DgSpace>, t: f64) -> QuadField {
        self.nodal_source(space, t)
    }
}

pub type Forcing = Arc<dyn SourceTerm>;

/// Discrete solution at one time level.
#[derive(Clone, Debug)]
pub struct StepState {
    pub step: usize,
    pub t: f64,
    pub u: DgField,
    /// `L_h u`.
    pub q: DgField,
    /// Projected auxiliary variable `U_h`.
    pub aux: DgField,
}

impl StepState {
    pub fn energy(&self) -> f64 {
        discrete_energy(&self.q, &self.aux)
    }
}

/// A time node used for extrapolation: `(t, u, U_h)`.
#[derive(Clone, Debug)]
pub struct HistoryPoint {
    pub t: f64,
    pub u: DgField,
    pub aux: DgField,
}

/// Data left by the previous step: its start point and its stage values.
#[derive(Clone, Debug)]
pub struct History {
    pub points: Vec<HistoryPoint>,
}

/// Prediction-correction controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcConfig {
    /// Maximum prediction sweeps; zero skips the loop.
    pub max_iterations: usize,
    /// Sweeps stop once the largest stage update falls below this.
    pub tolerance: f64,
    /// Stop, discarding the latest sweep, when the update grows from one sweep
    /// to the next (the explicit fixed-point map is not contracting).
    pub reject_growth: bool,
}

impl Default for PcConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2,
            tolerance: 1e-10,
            reject_growth: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepperOptions {
    pub solver: SolverOptions,
    pub pc: PcConfig,
    /// Run tableaux that fail the algebraic-stability check.
    pub allow_uncertified: bool,
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            pc: PcConfig::default(),
            allow_uncertified: false,
        }
    }
}

/// Per-step diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// `tau sum_i b_i ||xi_i||^2`.
    pub bound: f64,
    pub pc_iterations: usize,
    /// Last prediction update, `max_i ||u_i^{m+1} - u_i^m||_inf`.
    pub pc_change: f64,
    pub solver_iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: StepState,
    pub history: History,
    pub report: StepReport,
    /// Stage slopes `xi_i` of the correction.
    pub xi: Vec<DgField>,
}

pub struct Stepper {
    space: Arc<DgSpace>,
    g: Arc<SparseOperator>,
    potential: Potential,
    tableau: ButcherTableau,
    solver: StageSolver,
    pc: PcConfig,
    forcing: Option<Forcing>,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper")
            .field("space", &self.space)
            .field("tableau", &self.tableau.name())
            .field("pc", &self.pc)
            .field("forced", &self.forcing.is_some())
            .finish()
    }
}

impl Stepper {
    pub fn new(space: Arc<DgSpace>, potential: Potential, tableau: ButcherTableau, options: StepperOptions) -> Result<Self> {
        if !options.allow_uncertified {
            if let crate::rk::Certification::Unstable { reason, .. } = tableau.certify() {
                return Err(Error::UncertifiedTableau {
                    name: tableau.name().to_string(),
                    reason,
                });
            }
        }
        if !(options.pc.tolerance >= 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance {}", options.pc.tolerance)));
        }
        let g = Arc::new(assemble_g(&space, potential.a()));
        let solver = StageSolver::new(&space, potential.a(), options.solver)?;
        Ok(Self {
            space,
            g,
            potential,
            tableau,
            solver,
            pc: options.pc,
            forcing: None,
        })
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn operator(&self) -> &Arc<SparseOperator> {
        &self.g
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn tableau(&self) -> &ButcherTableau {
        &self.tableau
    }

    pub fn pc(&self) -> PcConfig {
        self.pc
    }

    /// State at `t0` from nodal initial data: `u_h = Pi u0`, `U_h = Pi sqrt(Phi(u0) + C0)`.
    pub fn initial_state(&self, t0: f64, nodal: &QuadField, u: DgField) -> Result<StepState> {
        let aux = self.space.project_quad(&self.potential.aux_field(nodal)?);
        let q = apply_lh(&self.g, &u);
        Ok(StepState {
            step: 0,
            t: t0,
            u,
            q,
            aux,
        })
    }

    fn sources(&self, t: f64, tau: f64) -> Option<Vec<DgField>> {
        self.forcing.as_ref().map(|f| {
            self.tableau
                .c()
                .iter()
                .map(|&ci| self.space.project_quad(&f.nodal(&self.space, t + ci * tau)))
                .collect()
        })
    }

    /// `base + tau sum_j a_ij x_j` for every stage `i`.
    fn stage_combinations(&self, base: &DgField, x: &[DgField], tau: f64) -> Vec<DgField> {
        let s = self.tableau.stages();
        (0..s)
            .map(|i| DgField::combine(base, (0..s).map(|j| (tau * self.tableau.a(i, j), &x[j]))))
            .collect()
    }

    /// Nodal `base + tau sum_j a_ij l_j` projected, for every stage `i`.
    fn aux_stage_values(&self, base: &QuadField, l: &[QuadField], tau: f64) -> Vec<DgField> {
        let s = self.tableau.stages();
        (0..s)
            .map(|i| {
                let mut v = base.clone();
                for (j, lj) in l.iter().enumerate() {
                    v.axpy(tau * self.tableau.a(i, j), lj);
                }
                self.space.project_quad(&v)
            })
            .collect()
    }

    /// One step of the base scheme with prescribed extrapolated stage values.
    pub fn leqrk_step(&self, state: &StepState, ustar: &[DgField], tau: f64) -> Result<StepOutcome> {
        let sources = self.sources(state.t, tau);
        self.correct(state, ustar, tau, sources.as_deref())
    }

    fn correct(&self, state: &StepState, ustar: &[DgField], tau: f64, sources: Option<&[DgField]>) -> Result<StepOutcome> {
        let s = self.tableau.stages();
        if ustar.len() != s {
            return Err(Error::Incompatible(format!("{} extrapolated values for {s} stages", ustar.len())));
        }
        let weights = ustar
            .iter()
            .map(|u| self.potential.h_field(&self.space.eval_at_quad(u)))
            .collect::<Result<Vec<_>>>()?;
        let sys = assemble_stage_system(
            Arc::clone(&self.g),
            &self.tableau,
            tau,
            &state.u,
            &state.aux,
            weights.clone(),
            sources,
        )?;
        let sol = self.solver.solve(&sys)?;

        let l: Vec<QuadField> = weights
            .iter()
            .zip(&sol.xi)
            .map(|(h, xi)| h.mul(&self.space.eval_at_quad(xi)).map(|v| 0.5 * v))
            .collect();
        let aux_nodal = self.space.eval_at_quad(&state.aux);
        let aux_stages = self.aux_stage_values(&aux_nodal, &l, tau);
        let u_stages = self.stage_combinations(&state.u, &sol.xi, tau);

        let b = self.tableau.b();
        let u = DgField::combine(&state.u, b.iter().zip(&sol.xi).map(|(&bi, xi)| (tau * bi, xi)));
        let q = apply_lh(&self.g, &u);
        let mut aux_new = aux_nodal;
        for (&bi, li) in b.iter().zip(&l) {
            aux_new.axpy(tau * bi, li);
        }
        let aux = self.space.project_quad(&aux_new);
        let bound = tau
            * b.iter()
                .zip(&sol.xi)
                .map(|(&bi, xi)| bi * xi.coeff_norm().powi(2))
                .sum::<f64>();

        let mut points = Vec::with_capacity(s + 1);
        points.push(HistoryPoint {
            t: state.t,
            u: state.u.clone(),
            aux: state.aux.clone(),
        });
        for ((ci, ui), ai) in self.tableau.c().iter().zip(u_stages).zip(aux_stages) {
            points.push(HistoryPoint {
                t: state.t + ci * tau,
                u: ui,
                aux: ai,
            });
        }
        Ok(StepOutcome {
            state: StepState {
                step: state.step + 1,
                t: state.t + tau,
                u,
                q,
                aux,
            },
            history: History { points },
            report: StepReport {
                bound,
                pc_iterations: 0,
                pc_change: 0.0,
                solver_iterations: sol.iterations,
                residual: sol.residual,
            },
            xi: sol.xi,
        })
    }

    /// Initial stage guesses: extrapolation through the previous step's nodes and
    /// the current state, or the current state itself on the first step.
    pub fn initial_guess(&self, state: &StepState, history: Option<&History>, tau: f64) -> Result<(Vec<DgField>, Vec<DgField>)> {
        let s = self.tableau.stages();
        match history {
            None => Ok((vec![state.u.clone(); s], vec![state.aux.clone(); s])),
            Some(h) => {
                let mut nodes = h.points.clone();
                nodes.push(HistoryPoint {
                    t: state.t,
                    u: state.u.clone(),
                    aux: state.aux.clone(),
                });
                let targets: Vec<f64> = self.tableau.c().iter().map(|ci| state.t + ci * tau).collect();
                extrapolate(&nodes, &targets, tau)
            }
        }
    }

    /// One prediction-correction step.
    pub fn pc_step(&self, state: &StepState, history: Option<&History>, tau: f64) -> Result<StepOutcome> {
        let s = self.tableau.stages();
        let (mut u_tilde, mut aux_tilde) = self.initial_guess(state, history, tau)?;
        let mut iterations = 0;
        let mut change = 0.0;
        let sources = self.sources(state.t, tau);
        if self.pc.max_iterations > 0 {
            let aux_nodal = self.space.eval_at_quad(&state.aux);
            for m in 0..self.pc.max_iterations {
                let weights = u_tilde
                    .iter()
                    .map(|u| self.potential.h_field(&self.space.eval_at_quad(u)))
                    .collect::<Result<Vec<_>>>()?;
                let rhs: Vec<DgField> = (0..s)
                    .map(|i| {
                        let mut r = self
                            .space
                            .project_quad(&weights[i].mul(&self.space.eval_at_quad(&aux_tilde[i])));
                        r.scale(-1.0);
                        if let Some(src) = &sources {
                            r.axpy(1.0, &src[i]);
                        }
                        r
                    })
                    .collect();
                let sys = StageSystem::new(Arc::clone(&self.g), &self.tableau, tau, &state.u, None, rhs)?;
                let sol = self.solver.solve(&sys)?;
                let l: Vec<QuadField> = weights
                    .iter()
                    .zip(&sol.xi)
                    .map(|(h, xi)| h.mul(&self.space.eval_at_quad(xi)).map(|v| 0.5 * v))
                    .collect();
                let next_u = self.stage_combinations(&state.u, &sol.xi, tau);
                let next_aux = self.aux_stage_values(&aux_nodal, &l, tau);
                let update = next_u
                    .iter()
                    .zip(&u_tilde)
                    .map(|(a, b)| {
                        let mut d = a.clone();
                        d.axpy(-1.0, b);
                        self.space.norm_linf(&d)
                    })
                    .fold(0.0, f64::max);
                if self.pc.reject_growth && m > 0 && !(update <= change) {
                    debug!("prediction sweep {} rejected: update {update:e} after {change:e}", m + 1);
                    break;
                }
                change = update;
                u_tilde = next_u;
                aux_tilde = next_aux;
                iterations = m + 1;
                debug!("prediction sweep {iterations}: change {change:e}");
                if change < self.pc.tolerance {
                    break;
                }
            }
        }
        let mut out = self.correct(state, &u_tilde, tau, sources.as_deref())?;
        out.report.pc_iterations = iterations;
        out.report.pc_change = change;
        Ok(out)
    }

    /// Advances `steps` prediction-correction steps, calling `observe` after each.
    pub fn run(
        &self,
        initial: StepState,
        tau: f64,
        steps: usize,
        mut observe: impl FnMut(&StepState, &StepReport) -> Result<()>,
    ) -> Result<StepState> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step {tau}")));
        }
        let t0 = initial.t - initial.step as f64 * tau;
        let mut state = initial;
        let mut history: Option<History> = None;
        for _ in 0..steps {
            let out = self.pc_step(&state, history.as_ref(), tau)?;
            state = out.state;
            // Avoid drift from repeated addition.
            state.t = t0 + state.step as f64 * tau;
            history = Some(out.history);
            observe(&state, &out.report)?;
        }
        Ok(state)
    }
}

/// Relative tolerance (in units of the step) for treating two nodes as one.
const COINCIDENT_TOL: f64 = 1e-9;
/// Largest allowed relative difference of data at coincident nodes.
const COINCIDENT_DATA_TOL: f64 = 1e-8;

/// Lagrange extrapolation of `(u, U_h)` through `nodes` to each target time.
/// Nodes closer than a small fraction of `tau` are merged, keeping the later one,
/// provided their data agree.
pub fn extrapolate(nodes: &[HistoryPoint], targets: &[f64], tau: f64) -> Result<(Vec<DgField>, Vec<DgField>)> {
    let mut uniq: Vec<&HistoryPoint> = Vec::with_capacity(nodes.len());
    for p in nodes {
        if let Some(k) = uniq.iter().position(|q| (q.t - p.t).abs() <= COINCIDENT_TOL * tau) {
            let q = uniq[k];
            let scale = 1.0 + q.u.coeff_norm().max(q.aux.coeff_norm());
            let diff = q.u.max_abs_diff(&p.u).max(q.aux.max_abs_diff(&p.aux));
            if diff > COINCIDENT_DATA_TOL * scale {
                return Err(Error::CoincidentNodes { t: p.t });
            }
            uniq[k] = p;
        } else {
            uniq.push(p);
        }
    }
    let mut us = Vec::with_capacity(targets.len());
    let mut auxs = Vec::with_capacity(targets.len());
    for &t in targets {
        let w = lagrange_weights(&uniq.iter().map(|p| p.t).collect::<Vec<_>>(), t);
        let mut u = DgField::zeros(uniq[0].u.space());
        let mut a = DgField::zeros(uniq[0].aux.space());
        for (p, wk) in uniq.iter().zip(&w) {
            u.axpy(*wk, &p.u);
            a.axpy(*wk, &p.aux);
        }
        us.push(u);
        auxs.push(a);
    }
    Ok((us, auxs))
}

/// Lagrange basis values `L_k(t)` for distinct nodes.
pub fn lagrange_weights(nodes: &[f64], t: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|k| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &tj)| (t - tj) / (nodes[k] - tj))
                .product()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_weights_reproduce_polynomials() {
        let nodes = [0.0, 0.3, 0.7, 1.0];
        for &t in &[1.2, 1.5, -0.1] {
            let w = lagrange_weights(&nodes, t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            let cubic = |x: f64| 2.0 * x * x * x - x + 0.5;
            let interp: f64 = nodes.iter().zip(&w).map(|(&x, wk)| wk * cubic(x)).sum();
            assert!((interp - cubic(t)).abs() < 1e-12);
        }
    }
}
