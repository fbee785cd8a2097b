//! The coupled linear system for the Runge-Kutta stage unknowns `(xi_i, q_i)`.
//!
//! For stages `i = 1..s`
//!
//! `xi_i + tau/2 sum_j a_ij W_ij xi_j + G q_i = r_i`
//! `tau sum_j a_ij G xi_j - q_i = -G u^n`
//!
//! where `W_ij` is the mass matrix weighted by `H_i H_j` (absent in the
//! prediction form). Eliminating `q_i` gives the reduced system
//!
//! `xi_i + tau/2 sum_j a_ij W_ij xi_j + tau G^2 sum_j a_ij xi_j = r_i - G^2 u^n`,
//!
//! The iterative solver runs GMRES on the unreduced system, preconditioned by
//! its exact spectral inverse without the weighted mass blocks; the reduced
//! form only appears inside the preconditioner, one eigenvalue at a time.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use faer::linalg::solvers::Solve;
use faer::Mat;
use log::{debug, trace};

use super::gmres::gmres;
use super::sparse::SparseOperator;
use super::spectral::{invert_small, SpectralOperator, StagePreconditioner};
use crate::dg::{DgField, DgSpace, QuadField};
use crate::error::{Error, Result};
use crate::rk::ButcherTableau;

#[derive(Clone, Debug)]
pub struct StageSystem {
    space: Arc<DgSpace>,
    g: Arc<SparseOperator>,
    tableau: ButcherTableau,
    tau: f64,
    /// Nodal `H_i` per stage; `None` drops the weighted mass blocks.
    weights: Option<Vec<QuadField>>,
    rhs_xi: Vec<Vec<f64>>,
    rhs_q: Vec<f64>,
}

impl StageSystem {
    /// `rhs_xi[i]` is the right-hand side of the first row of stage `i`.
    pub fn new(
        g: Arc<SparseOperator>,
        tableau: &ButcherTableau,
        tau: f64,
        u_n: &DgField,
        weights: Option<Vec<QuadField>>,
        rhs_xi: Vec<DgField>,
    ) -> Result<Self> {
        let space = Arc::clone(u_n.space());
        let s = tableau.stages();
        if g.dim() != space.n_dofs() {
            return Err(Error::Incompatible(format!(
                "operator of size {} on a space with {} dofs",
                g.dim(),
                space.n_dofs()
            )));
        }
        if rhs_xi.len() != s {
            return Err(Error::Incompatible(format!("{} right-hand sides for {s} stages", rhs_xi.len())));
        }
        if let Some(w) = &weights {
            if w.len() != s || w.iter().any(|f| f.values().len() != space.n_quad()) {
                return Err(Error::Incompatible("stage weights do not match the stages".into()));
            }
        }
        if rhs_xi.iter().any(|f| f.coeffs().len() != space.n_dofs()) {
            return Err(Error::Incompatible("right-hand side on a different space".into()));
        }
        let rhs_q = g.mul_vec(u_n.coeffs()).into_iter().map(|v| -v).collect();
        Ok(Self {
            space,
            g,
            tableau: tableau.clone(),
            tau,
            weights,
            rhs_xi: rhs_xi.into_iter().map(DgField::into_coeffs).collect(),
            rhs_q,
        })
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn operator(&self) -> &Arc<SparseOperator> {
        &self.g
    }

    pub fn tableau(&self) -> &ButcherTableau {
        &self.tableau
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn stages(&self) -> usize {
        self.tableau.stages()
    }

    pub fn has_coupling(&self) -> bool {
        self.weights.is_some()
    }

    /// Unknowns per block.
    pub fn block_len(&self) -> usize {
        self.space.n_dofs()
    }

    /// Total unknowns, `2 s n`. Layout: `xi_1..xi_s` followed by `q_1..q_s`.
    pub fn dim(&self) -> usize {
        2 * self.stages() * self.block_len()
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.dim());
        for r in &self.rhs_xi {
            b.extend_from_slice(r);
        }
        for _ in 0..self.stages() {
            b.extend_from_slice(&self.rhs_q);
        }
        b
    }

    /// `out += coef * Pi(H_i sum_t c_t H_{j_t} x_t)`.
    fn add_coupling(&self, i: usize, terms: &[(usize, f64, &[f64])], coef: f64, out: &mut [f64]) {
        let Some(w) = &self.weights else {
            return;
        };
        let nq = self.space.n_quad();
        let mut acc = vec![0.0; nq];
        let mut vals = vec![0.0; nq];
        for &(j, c, x) in terms {
            if c == 0.0 {
                continue;
            }
            self.space.eval_values_into(x, &mut vals);
            for ((a, v), hj) in acc.iter_mut().zip(&vals).zip(w[j].values()) {
                *a += c * hj * v;
            }
        }
        for (a, hi) in acc.iter_mut().zip(w[i].values()) {
            *a *= coef * hi;
        }
        let mut proj = vec![0.0; out.len()];
        self.space.project_values_into(&acc, &mut proj);
        out.iter_mut().zip(&proj).for_each(|(o, p)| *o += p);
    }

    /// Full system matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let s = self.stages();
        let n = self.block_len();
        let (xi, q) = x.split_at(s * n);
        let gxi: Vec<Vec<f64>> = (0..s).map(|j| self.g.mul_vec(&xi[j * n..(j + 1) * n])).collect();
        let mut y = vec![0.0; self.dim()];
        for i in 0..s {
            let row1 = &mut y[i * n..(i + 1) * n];
            let gq = self.g.mul_vec(&q[i * n..(i + 1) * n]);
            for e in 0..n {
                row1[e] = xi[i * n + e] + gq[e];
            }
            let terms: Vec<_> = (0..s)
                .map(|j| (j, self.tableau.a(i, j), &xi[j * n..(j + 1) * n]))
                .collect();
            self.add_coupling(i, &terms, 0.5 * self.tau, row1);
            let row2 = &mut y[(s + i) * n..(s + i + 1) * n];
            for e in 0..n {
                let sum: f64 = (0..s).map(|j| self.tableau.a(i, j) * gxi[j][e]).sum();
                row2[e] = self.tau * sum - q[i * n + e];
            }
        }
        y
    }

    /// `||A x - b|| / ||b||`, or `||A x||` when `b = 0`.
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let b = self.rhs();
        let ax = self.apply(x);
        let r = ax.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nb > 0.0 {
            r / nb
        } else {
            r
        }
    }

    /// Triplets of `coef * W_ij` shifted by the given block offsets.
    fn coupling_triplets(&self, i: usize, j: usize, coef: f64, row0: usize, col0: usize, trip: &mut Vec<(usize, usize, f64)>) {
        let Some(w) = &self.weights else {
            return;
        };
        if coef == 0.0 {
            return;
        }
        let nl = self.space.n_local();
        let nn = self.space.nodes_per_cell();
        let phi = self.space.basis_at_nodes();
        let qw = self.space.node_weights();
        let (hi, hj) = (w[i].values(), w[j].values());
        let mut block = vec![0.0; nl * nl];
        for c in 0..self.space.mesh().num_cells() {
            block.iter_mut().for_each(|b| *b = 0.0);
            for nd in 0..nn {
                let k = c * nn + nd;
                let f = coef * qw[nd] * hi[k] * hj[k];
                let row = &phi[nd * nl..(nd + 1) * nl];
                for r in 0..nl {
                    for cc in 0..nl {
                        block[r * nl + cc] += f * row[r] * row[cc];
                    }
                }
            }
            for r in 0..nl {
                for cc in 0..nl {
                    trip.push((row0 + c * nl + r, col0 + c * nl + cc, block[r * nl + cc]));
                }
            }
        }
    }

    fn g_triplets(&self, coef: f64, row0: usize, col0: usize, trip: &mut Vec<(usize, usize, f64)>) {
        if coef == 0.0 {
            return;
        }
        trip.extend(self.g.triplets().map(|(r, c, v)| (row0 + r, col0 + c, coef * v)));
    }

    fn diag_triplets(&self, coef: f64, row0: usize, col0: usize, trip: &mut Vec<(usize, usize, f64)>) {
        trip.extend((0..self.block_len()).map(|e| (row0 + e, col0 + e, coef)));
    }

    /// The full `2s`-block matrix.
    pub fn to_sparse(&self) -> SparseOperator {
        let s = self.stages();
        let n = self.block_len();
        let mut trip = Vec::new();
        for i in 0..s {
            self.diag_triplets(1.0, i * n, i * n, &mut trip);
            self.g_triplets(1.0, i * n, (s + i) * n, &mut trip);
            self.diag_triplets(-1.0, (s + i) * n, (s + i) * n, &mut trip);
            for j in 0..s {
                let a = self.tableau.a(i, j);
                self.coupling_triplets(i, j, 0.5 * self.tau * a, i * n, j * n, &mut trip);
                self.g_triplets(self.tau * a, (s + i) * n, j * n, &mut trip);
            }
        }
        SparseOperator::from_triplets(self.dim(), trip).expect("block offsets inside the system")
    }

    /// The `2`-block system of stage `i` alone: `[[I + tau/2 a_ii W_ii, G], [tau a_ii G, -I]]`.
    pub fn stage_block(&self, i: usize) -> SparseOperator {
        let n = self.block_len();
        let a = self.tableau.a(i, i);
        let mut trip = Vec::new();
        self.diag_triplets(1.0, 0, 0, &mut trip);
        self.coupling_triplets(i, i, 0.5 * self.tau * a, 0, 0, &mut trip);
        self.g_triplets(1.0, 0, n, &mut trip);
        self.g_triplets(self.tau * a, n, 0, &mut trip);
        self.diag_triplets(-1.0, n, n, &mut trip);
        SparseOperator::from_triplets(2 * n, trip).expect("block offsets inside the system")
    }
}

/// Builds the correction system: `r_i = -(H_i U_h, phi) + (f_i, phi)`.
pub fn assemble_stage_system(
    g: Arc<SparseOperator>,
    tableau: &ButcherTableau,
    tau: f64,
    u_n: &DgField,
    aux: &DgField,
    weights: Vec<QuadField>,
    sources: Option<&[DgField]>,
) -> Result<StageSystem> {
    let space = u_n.space();
    let aux_vals = space.eval_at_quad(aux);
    let mut rhs = Vec::with_capacity(weights.len());
    for (i, h) in weights.iter().enumerate() {
        let mut r = space.project_quad(&h.mul(&aux_vals));
        r.scale(-1.0);
        if let Some(src) = sources {
            r.axpy(1.0, &src[i]);
        }
        rhs.push(r);
    }
    StageSystem::new(g, tableau, tau, u_n, Some(weights), rhs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Sparse LU factorization.
    Direct,
    /// GMRES with the spectral stage preconditioner.
    Iterative,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Direct => "direct",
            SolverKind::Iterative => "iterative",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "direct" => Ok(SolverKind::Direct),
            "iterative" => Ok(SolverKind::Iterative),
            _ => Err(Error::UnknownName {
                kind: "solver",
                name: name.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Required relative residual of the full system.
    pub rtol: f64,
    pub max_iterations: usize,
    pub restart: usize,
    /// Solve all stages at once even when the tableau is lower triangular.
    pub monolithic: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::Iterative,
            rtol: 1e-12,
            max_iterations: 400,
            restart: 40,
            monolithic: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StageSolution {
    pub xi: Vec<DgField>,
    pub q: Vec<DgField>,
    /// Relative residual of the full system.
    pub residual: f64,
    /// Inner iterations (zero for the direct solver).
    pub iterations: usize,
}

const MAX_REFINEMENTS: usize = 3;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

type PreconditionerCache = Mutex<HashMap<Vec<u64>, Arc<StagePreconditioner>>>;

/// Solves stage systems on one space; keeps the spectral factorization and
/// preconditioners between calls.
#[derive(Debug)]
pub struct StageSolver {
    options: SolverOptions,
    spectral: Option<Arc<SpectralOperator>>,
    cache: PreconditionerCache,
}

impl StageSolver {
    /// `a` is the shift the operator was assembled with.
    pub fn new(space: &DgSpace, a: f64, options: SolverOptions) -> Result<Self> {
        let spectral = match options.kind {
            SolverKind::Iterative => Some(Arc::new(SpectralOperator::new(space, a)?)),
            SolverKind::Direct => None,
        };
        Ok(Self {
            options,
            spectral,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn spectral(&self) -> Option<&Arc<SpectralOperator>> {
        self.spectral.as_ref()
    }

    pub fn solve(&self, sys: &StageSystem) -> Result<StageSolution> {
        let stagewise = sys.tableau.is_lower_triangular() && !self.options.monolithic;
        let b = sys.rhs();
        let b_norm = norm(&b);
        let atol = 0.5 * self.options.rtol * b_norm;
        let (mut x, mut iterations) = self.solve_rhs(sys, &b, stagewise, atol)?;
        let mut residual = sys.relative_residual(&x);
        debug!("stage solve: {iterations} iterations, relative residual {residual:e}");
        for _ in 0..MAX_REFINEMENTS {
            if residual <= self.options.rtol {
                break;
            }
            let ax = sys.apply(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let (dx, it) = self.solve_rhs(sys, &r, stagewise, atol)?;
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
            iterations += it;
            let next = sys.relative_residual(&x);
            debug!("refinement: {it} iterations, relative residual {next:e}");
            if !(next < residual) {
                residual = next;
                break;
            }
            residual = next;
        }
        if !(residual <= self.options.rtol) {
            return Err(Error::SolverFailure {
                reason: format!("{} solve missed the tolerance {:e}", self.options.kind.name(), self.options.rtol),
                residual,
            });
        }
        let n = sys.block_len();
        let s = sys.stages();
        let field = |k: usize| DgField::from_coeffs(&sys.space, x[k * n..(k + 1) * n].to_vec());
        Ok(StageSolution {
            xi: (0..s).map(field).collect::<Result<_>>()?,
            q: (s..2 * s).map(field).collect::<Result<_>>()?,
            residual,
            iterations,
        })
    }

    fn solve_rhs(&self, sys: &StageSystem, b: &[f64], stagewise: bool, atol: f64) -> Result<(Vec<f64>, usize)> {
        match self.options.kind {
            SolverKind::Direct if stagewise => Ok((solve_direct_stagewise(sys, b)?, 0)),
            SolverKind::Direct => Ok((lu_solve(&sys.to_sparse(), b)?, 0)),
            SolverKind::Iterative => self.solve_iterative(sys, b, stagewise, atol),
        }
    }

    fn preconditioner(&self, a: &[Vec<f64>], tau: f64) -> Result<Arc<StagePreconditioner>> {
        let spectral = self.spectral.as_ref().expect("iterative solver owns a factorization");
        let mut key = vec![tau.to_bits()];
        key.extend(a.iter().flatten().map(|v| v.to_bits()));
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(p) = cache.get(&key) {
            return Ok(Arc::clone(p));
        }
        if cache.len() > 16 {
            cache.clear();
        }
        let p = Arc::new(StagePreconditioner::new(spectral, a, tau)?);
        cache.insert(key, Arc::clone(&p));
        Ok(p)
    }

    fn solve_iterative(&self, sys: &StageSystem, b_full: &[f64], stagewise: bool, atol: f64) -> Result<(Vec<f64>, usize)> {
        let spectral = Arc::clone(self.spectral.as_ref().expect("iterative solver owns a factorization"));
        if spectral.len() != sys.block_len() {
            return Err(Error::Incompatible("solver built for a different space".into()));
        }
        let s = sys.stages();
        let n = sys.block_len();
        let tau = sys.tau;
        let tab = &sys.tableau;
        let g = &sys.g;
        let groups: Vec<Vec<usize>> = if stagewise {
            (0..s).map(|i| vec![i]).collect()
        } else {
            vec![(0..s).collect()]
        };

        let mut x = vec![0.0; 2 * s * n];
        let mut gxi: Vec<Option<Vec<f64>>> = vec![None; s];
        let mut iterations = 0;
        for group in &groups {
            let r = group.len();
            let sub: Vec<Vec<f64>> = group
                .iter()
                .map(|&i| group.iter().map(|&j| tab.a(i, j)).collect())
                .collect();
            // Unknowns of the group: xi_i for i in the group, then q_i.
            let mut b = vec![0.0; 2 * r * n];
            for (gi, &i) in group.iter().enumerate() {
                b[gi * n..(gi + 1) * n].copy_from_slice(&b_full[i * n..(i + 1) * n]);
                b[(r + gi) * n..(r + gi + 1) * n].copy_from_slice(&b_full[(s + i) * n..(s + i + 1) * n]);
                let done: Vec<usize> = (0..s).filter(|j| gxi[*j].is_some()).collect();
                let terms: Vec<_> = done
                    .iter()
                    .map(|&j| (j, tab.a(i, j), &x[j * n..(j + 1) * n]))
                    .collect();
                sys.add_coupling(i, &terms, -0.5 * tau, &mut b[gi * n..(gi + 1) * n]);
                for &j in &done {
                    let c = tau * tab.a(i, j);
                    if c != 0.0 {
                        let gj = gxi[j].as_ref().unwrap();
                        b[(r + gi) * n..(r + gi + 1) * n]
                            .iter_mut()
                            .zip(gj)
                            .for_each(|(v, w)| *v -= c * w);
                    }
                }
            }
            let pre = self.preconditioner(&sub, tau)?;
            let op = |v: &[f64], y: &mut [f64]| {
                let gv: Vec<Vec<f64>> = (0..2 * r).map(|k| g.mul_vec(&v[k * n..(k + 1) * n])).collect();
                for (gi, &i) in group.iter().enumerate() {
                    let (head, tail) = y.split_at_mut(r * n);
                    let y1 = &mut head[gi * n..(gi + 1) * n];
                    for e in 0..n {
                        y1[e] = v[gi * n + e] + gv[r + gi][e];
                    }
                    let terms: Vec<_> = group
                        .iter()
                        .enumerate()
                        .map(|(k, &j)| (j, tab.a(i, j), &v[k * n..(k + 1) * n]))
                        .collect();
                    sys.add_coupling(i, &terms, 0.5 * tau, y1);
                    let y2 = &mut tail[gi * n..(gi + 1) * n];
                    for e in 0..n {
                        let sum: f64 = (0..r).map(|k| sub[gi][k] * gv[k][e]).sum();
                        y2[e] = tau * sum - v[(r + gi) * n + e];
                    }
                }
            };
            let out = match AdiPreconditioner::new(sys, group, &sub, &spectral)? {
                None => {
                    let prec = |v: &[f64], y: &mut [f64]| pre.apply_block(&spectral, tau, v, y);
                    gmres(&b, op, prec, atol, self.options.restart, self.options.max_iterations)
                }
                Some(adi) => {
                    let prec = |v: &[f64], y: &mut [f64]| adi.apply_block(v, y);
                    gmres(&b, op, prec, atol, self.options.restart, self.options.max_iterations)
                }
            };
            trace!("gmres on stages {group:?}: {} iterations, residual {:e}, target {atol:e}", out.iterations, out.residual);
            iterations += out.iterations;
            for (gi, &i) in group.iter().enumerate() {
                let xi = &out.x[gi * n..(gi + 1) * n];
                x[i * n..(i + 1) * n].copy_from_slice(xi);
                x[(s + i) * n..(s + i + 1) * n].copy_from_slice(&out.x[(r + gi) * n..(r + gi + 1) * n]);
                gxi[i] = Some(g.mul_vec(xi));
            }
        }
        Ok((x, iterations))
    }
}

/// Weighted mass terms below this size (relative to the identity) are left to
/// the exact spectral preconditioner.
const WEIGHTED_MASS_THRESHOLD: f64 = 0.05;
/// Ratio between consecutive ADI shifts.
const SHIFT_RATIO: f64 = 4.0;
const MAX_SHIFTS: usize = 24;

/// Peaceman-Rachford sweeps for the reduced stage operator `X + Y`, where
/// `X = I + tau/2 (a_ij W_ij)` is block diagonal over cells and
/// `Y = tau A (x) G^2` is diagonal in the spectral basis. Used when the weighted
/// mass term is too large for the spectral inverse of `I + Y` alone.
struct AdiPreconditioner<'a> {
    spectral: &'a SpectralOperator,
    g: &'a SparseOperator,
    tau: f64,
    stages: usize,
    n_local: usize,
    /// Row-major coupling matrix of the group.
    a: Vec<f64>,
    shifts: Vec<f64>,
    /// `X` restricted to each cell, `(stages n_local)^2` entries per cell.
    cell_blocks: Vec<f64>,
    /// Per shift: cellwise inverses of `X + rho I`.
    cell_inverses: Vec<Vec<f64>>,
    /// Per shift: inverses of `rho I + tau lambda^2 A` per eigenvalue.
    spectral_inverses: Vec<Vec<f64>>,
}

impl<'a> AdiPreconditioner<'a> {
    fn new(sys: &'a StageSystem, group: &[usize], sub: &[Vec<f64>], spectral: &'a SpectralOperator) -> Result<Option<Self>> {
        let Some(w) = sys.weights.as_ref() else {
            return Ok(None);
        };
        let tau = sys.tau;
        let a_norm = sub
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
        let hmax = group.iter().map(|&i| w[i].max_abs()).fold(0.0f64, f64::max);
        let x_max = 0.5 * tau * a_norm * hmax * hmax;
        if x_max <= WEIGHTED_MASS_THRESHOLD {
            return Ok(None);
        }
        let lam_max = spectral.eigenvalues().iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let upper = (1.0 + x_max).max(tau * a_norm * lam_max * lam_max);
        let lower = 0.5;
        let count = (((upper / lower).ln() / SHIFT_RATIO.ln()).ceil() as usize + 1).min(MAX_SHIFTS);
        let ratio = (upper / lower).powf(1.0 / count as f64);
        // Largest shift first: it damps the stiff components that smaller shifts amplify least.
        let shifts: Vec<f64> = (0..count).rev().map(|k| lower * ratio.powf(k as f64 + 0.5)).collect();

        let space = &sys.space;
        let r = group.len();
        let nl = space.n_local();
        let nn = space.nodes_per_cell();
        let size = r * nl;
        let phi = space.basis_at_nodes();
        let qw = space.node_weights();
        let cells = space.mesh().num_cells();
        let mut cell_blocks = vec![0.0; cells * size * size];
        for (c, m) in cell_blocks.chunks_exact_mut(size * size).enumerate() {
            for d in 0..size {
                m[d * size + d] = 1.0;
            }
            for (gi, &i) in group.iter().enumerate() {
                for (gj, &j) in group.iter().enumerate() {
                    let coef = 0.5 * tau * sub[gi][gj];
                    if coef == 0.0 {
                        continue;
                    }
                    let (hi, hj) = (w[i].values(), w[j].values());
                    for nd in 0..nn {
                        let k = c * nn + nd;
                        let f = coef * qw[nd] * hi[k] * hj[k];
                        let row = &phi[nd * nl..(nd + 1) * nl];
                        for p in 0..nl {
                            for q in 0..nl {
                                m[(gi * nl + p) * size + gj * nl + q] += f * row[p] * row[q];
                            }
                        }
                    }
                }
            }
        }
        let singular = || Error::SolverFailure {
            reason: "singular shifted block in the stage preconditioner".into(),
            residual: f64::NAN,
        };
        let mut cell_inverses = Vec::with_capacity(count);
        let mut spectral_inverses = Vec::with_capacity(count);
        let mut work = vec![0.0; size * size];
        let mut small = vec![0.0; r * r];
        for &rho in &shifts {
            let mut inv = vec![0.0; cells * size * size];
            for (blk, out) in cell_blocks.chunks_exact(size * size).zip(inv.chunks_exact_mut(size * size)) {
                work.copy_from_slice(blk);
                for d in 0..size {
                    work[d * size + d] += rho;
                }
                invert_small(&mut work, out, size).ok_or_else(singular)?;
            }
            cell_inverses.push(inv);
            let mut sinv = vec![0.0; spectral.len() * r * r];
            for (e, &lam) in spectral.eigenvalues().iter().enumerate() {
                let t = tau * lam * lam;
                for i in 0..r {
                    for j in 0..r {
                        small[i * r + j] = t * sub[i][j] + if i == j { rho } else { 0.0 };
                    }
                }
                invert_small(&mut small, &mut sinv[e * r * r..(e + 1) * r * r], r).ok_or_else(singular)?;
            }
            spectral_inverses.push(sinv);
        }
        Ok(Some(Self {
            spectral,
            g: &sys.g,
            tau,
            stages: r,
            n_local: nl,
            a: sub.iter().flatten().copied().collect(),
            shifts,
            cell_blocks,
            cell_inverses,
            spectral_inverses,
        }))
    }

    /// `out = M v` with `M` one `(stages n_local)^2` block per cell.
    fn cellwise(&self, blocks: &[f64], v: &[f64], out: &mut [f64]) {
        let (r, nl) = (self.stages, self.n_local);
        let size = r * nl;
        let n = v.len() / r;
        let mut local = vec![0.0; size];
        for (c, m) in blocks.chunks_exact(size * size).enumerate() {
            for g in 0..r {
                local[g * nl..(g + 1) * nl].copy_from_slice(&v[g * n + c * nl..g * n + (c + 1) * nl]);
            }
            for g in 0..r {
                for p in 0..nl {
                    let row = &m[(g * nl + p) * size..(g * nl + p + 1) * size];
                    out[g * n + c * nl + p] = row.iter().zip(&local).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// `out = tau (A (x) G^2) v`.
    fn apply_y(&self, v: &[f64], out: &mut [f64]) {
        let r = self.stages;
        let n = v.len() / r;
        let g2: Vec<Vec<f64>> = (0..r).map(|j| self.g.mul_vec(&self.g.mul_vec(&v[j * n..(j + 1) * n]))).collect();
        for i in 0..r {
            for e in 0..n {
                out[i * n + e] = self.tau * (0..r).map(|j| self.a[i * r + j] * g2[j][e]).sum::<f64>();
            }
        }
    }

    /// `out = (rho I + Y)^{-1} v` for shift number `k`.
    fn solve_y(&self, k: usize, v: &[f64], out: &mut [f64]) {
        let r = self.stages;
        let n = self.spectral.len();
        let inv = &self.spectral_inverses[k];
        let mut hat = vec![0.0; r * n];
        for i in 0..r {
            self.spectral.forward(&v[i * n..(i + 1) * n], &mut hat[i * n..(i + 1) * n]);
        }
        let mut sol = vec![0.0; r * n];
        for e in 0..n {
            let m = &inv[e * r * r..(e + 1) * r * r];
            for i in 0..r {
                sol[i * n + e] = (0..r).map(|j| m[i * r + j] * hat[j * n + e]).sum();
            }
        }
        for i in 0..r {
            self.spectral.backward(&sol[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
        }
    }

    /// Approximate solution of `(X + Y) x = f`, one double sweep per shift.
    fn solve_reduced(&self, f: &[f64]) -> Vec<f64> {
        let len = f.len();
        let mut x = vec![0.0; len];
        let mut t = vec![0.0; len];
        let mut rhs = vec![0.0; len];
        for (k, &rho) in self.shifts.iter().enumerate() {
            // (X + rho) x' = f - Y x + rho x
            self.apply_y(&x, &mut t);
            for e in 0..len {
                rhs[e] = f[e] - t[e] + rho * x[e];
            }
            self.cellwise(&self.cell_inverses[k], &rhs, &mut x);
            // (Y + rho) x'' = f - X x' + rho x'
            self.cellwise(&self.cell_blocks, &x, &mut t);
            for e in 0..len {
                rhs[e] = f[e] - t[e] + rho * x[e];
            }
            self.solve_y(k, &rhs, &mut x);
        }
        x
    }

    /// Approximate inverse of the unreduced block `[[X, G], [tau A (x) G, -I]]`.
    fn apply_block(&self, v: &[f64], out: &mut [f64]) {
        let r = self.stages;
        let n = v.len() / (2 * r);
        let (r1, r2) = v.split_at(r * n);
        let mut f = r1.to_vec();
        for i in 0..r {
            let gr = self.g.mul_vec(&r2[i * n..(i + 1) * n]);
            f[i * n..(i + 1) * n].iter_mut().zip(&gr).for_each(|(a, b)| *a += b);
        }
        let xi = self.solve_reduced(&f);
        let gxi: Vec<Vec<f64>> = (0..r).map(|j| self.g.mul_vec(&xi[j * n..(j + 1) * n])).collect();
        let (o1, o2) = out.split_at_mut(r * n);
        o1.copy_from_slice(&xi);
        for i in 0..r {
            for e in 0..n {
                let s: f64 = (0..r).map(|j| self.a[i * r + j] * gxi[j][e]).sum();
                o2[i * n + e] = self.tau * s - r2[i * n + e];
            }
        }
    }
}

fn lu_solve(mat: &SparseOperator, b: &[f64]) -> Result<Vec<f64>> {
    let lu = mat.to_faer().sp_lu().map_err(|e| Error::SolverFailure {
        reason: format!("sparse LU failed: {e:?}"),
        residual: f64::NAN,
    })?;
    let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    Ok((0..b.len()).map(|i| x[(i, 0)]).collect())
}

fn solve_direct_stagewise(sys: &StageSystem, b_full: &[f64]) -> Result<Vec<f64>> {
    let s = sys.stages();
    let n = sys.block_len();
    let tau = sys.tau;
    let mut xi = vec![0.0; s * n];
    let mut q = vec![0.0; s * n];
    let mut gxi: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let mut b = vec![0.0; 2 * n];
        b[..n].copy_from_slice(&b_full[i * n..(i + 1) * n]);
        b[n..].copy_from_slice(&b_full[(s + i) * n..(s + i + 1) * n]);
        let terms: Vec<_> = (0..i)
            .map(|j| (j, sys.tableau.a(i, j), &xi[j * n..(j + 1) * n]))
            .collect();
        sys.add_coupling(i, &terms, -0.5 * tau, &mut b[..n]);
        for (j, gj) in gxi.iter().enumerate() {
            let c = tau * sys.tableau.a(i, j);
            b[n..].iter_mut().zip(gj).for_each(|(x, y)| *x -= c * y);
        }
        let sol = lu_solve(&sys.stage_block(i), &b)?;
        xi[i * n..(i + 1) * n].copy_from_slice(&sol[..n]);
        q[i * n..(i + 1) * n].copy_from_slice(&sol[n..]);
        gxi.push(sys.g.mul_vec(&sol[..n]));
    }
    xi.extend(q);
    Ok(xi)
}

/// One-off solve without keeping a [`StageSolver`] around.
pub fn solve_stage_system(sys: &StageSystem, a: f64, options: &SolverOptions) -> Result<StageSolution> {
    StageSolver::new(&sys.space, a, options.clone())?.solve(sys)
}
