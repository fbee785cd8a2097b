//! Broken polynomial space on a uniform mesh with an L2-orthonormal tensor Legendre basis.
//!
//! On a cell with edge lengths `h_d` the basis function with local degrees
//! `(p, q)` is `sqrt(2/h_x) l_p(zx) * sqrt(2/h_y) l_q(zy)`, where `l_p` are the
//! orthonormal Legendre polynomials on `[-1, 1]`. The mass matrix is the
//! identity, so L2 projection and the discrete operator `L_h` are explicit.
//!
//! Coefficients are stored cell by cell; inside a cell the local index is
//! `p + (k+1) q`. Quadrature values follow the same layout with node index
//! `a + m b` and `m = k + 2` Gauss points per axis.

pub mod quadrature;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{FaceKind, Mesh};
pub use quadrature::QuadRule;
use quadrature::orthonormal_legendre;

pub struct DgSpace {
    mesh: Mesh,
    degree: usize,
    rule: QuadRule,
    n_local: usize,
    n_nodes: usize,
    /// Physical basis values at the quadrature nodes, `[node * n_local + l]`.
    phi: Vec<f64>,
    /// Physical quadrature weights, one per node of a cell.
    weights: Vec<f64>,
    /// Reference 1D tables: `l_p` and `l_p'` at the quadrature nodes, `[a * (k+1) + p]`.
    ref_val: Vec<f64>,
    ref_der: Vec<f64>,
    /// `l_p(-1)`, `l_p(1)`, `l_p'(-1)`, `l_p'(1)`.
    ends: [Vec<f64>; 4],
}

impl fmt::Debug for DgSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DgSpace")
            .field("dim", &self.mesh.dim())
            .field("cells", &self.mesh.num_cells())
            .field("degree", &self.degree)
            .field("quad_points", &self.rule.len())
            .finish()
    }
}

impl DgSpace {
    /// Space of degree `k` with the default `k + 2` point rule per axis.
    pub fn new(mesh: Mesh, degree: usize) -> Arc<Self> {
        Self::with_quadrature(mesh, degree, degree + 2)
    }

    pub fn with_quadrature(mesh: Mesh, degree: usize, points: usize) -> Arc<Self> {
        assert!(points > degree, "need at least k+1 quadrature points for an orthonormal basis");
        let dim = mesh.dim();
        let k1 = degree + 1;
        let rule = QuadRule::gauss_legendre(points);
        let m = rule.len();
        let mut ref_val = vec![0.0; m * k1];
        let mut ref_der = vec![0.0; m * k1];
        for (a, &z) in rule.nodes.iter().enumerate() {
            orthonormal_legendre(
                degree,
                z,
                &mut ref_val[a * k1..(a + 1) * k1],
                &mut ref_der[a * k1..(a + 1) * k1],
            );
        }
        let mut ends = [vec![0.0; k1], vec![0.0; k1], vec![0.0; k1], vec![0.0; k1]];
        {
            let [lo_v, hi_v, lo_d, hi_d] = &mut ends;
            orthonormal_legendre(degree, -1.0, lo_v, lo_d);
            orthonormal_legendre(degree, 1.0, hi_v, hi_d);
        }
        let n_local = k1.pow(dim as u32);
        let n_nodes = m.pow(dim as u32);
        let scale: f64 = mesh.axes().iter().map(|a| (2.0 / a.spacing()).sqrt()).product();
        let jac: f64 = mesh.axes().iter().map(|a| 0.5 * a.spacing()).product();
        let mut phi = vec![0.0; n_nodes * n_local];
        let mut weights = vec![0.0; n_nodes];
        for n in 0..n_nodes {
            let (a, b) = (n % m, n / m);
            weights[n] = jac * rule.weights[a] * if dim == 2 { rule.weights[b] } else { 1.0 };
            for l in 0..n_local {
                let (p, q) = (l % k1, l / k1);
                let mut v = ref_val[a * k1 + p];
                if dim == 2 {
                    v *= ref_val[b * k1 + q];
                }
                phi[n * n_local + l] = scale * v;
            }
        }
        Arc::new(Self {
            mesh,
            degree,
            rule,
            n_local,
            n_nodes,
            phi,
            weights,
            ref_val,
            ref_der,
            ends,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn rule(&self) -> &QuadRule {
        &self.rule
    }

    /// Basis functions per cell, `(k+1)^dim`.
    pub fn n_local(&self) -> usize {
        self.n_local
    }

    /// Quadrature nodes per cell, `m^dim`.
    pub fn nodes_per_cell(&self) -> usize {
        self.n_nodes
    }

    pub fn n_dofs(&self) -> usize {
        self.n_local * self.mesh.num_cells()
    }

    pub fn n_quad(&self) -> usize {
        self.n_nodes * self.mesh.num_cells()
    }

    /// Basis values at the nodes of any cell, `[node * n_local + l]`.
    pub fn basis_at_nodes(&self) -> &[f64] {
        &self.phi
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.weights
    }

    /// 1D reference tables `(l_p(z_a), l_p'(z_a))`, indexed `[a * (k+1) + p]`.
    pub fn reference_tables(&self) -> (&[f64], &[f64]) {
        (&self.ref_val, &self.ref_der)
    }

    /// Reference end values `(l_p(-1), l_p(1), l_p'(-1), l_p'(1))`.
    pub fn reference_ends(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        (&self.ends[0], &self.ends[1], &self.ends[2], &self.ends[3])
    }

    /// Physical coordinates of quadrature node `n` of cell `c`.
    pub fn node_position(&self, c: usize, n: usize) -> [f64; 2] {
        let cell = self.mesh.cell_unchecked(c);
        let m = self.rule.len();
        let ab = [n % m, n / m];
        let mut x = [0.0; 2];
        for d in 0..self.dim() {
            x[d] = cell.lower[d] + 0.5 * (self.rule.nodes[ab[d]] + 1.0) * cell.size[d];
        }
        x
    }

    /// Values of all local basis functions of cell `c` at the physical point `x`.
    pub fn basis_at_point(&self, c: usize, x: &[f64], out: &mut [f64]) {
        let cell = self.mesh.cell_unchecked(c);
        let k1 = self.degree + 1;
        let mut vals = [vec![0.0; k1], vec![0.0; k1]];
        let mut der = vec![0.0; k1];
        let mut scale = 1.0;
        for d in 0..self.dim() {
            let z = 2.0 * (x[d] - cell.lower[d]) / cell.size[d] - 1.0;
            orthonormal_legendre(self.degree, z, &mut vals[d], &mut der);
            scale *= (2.0 / cell.size[d]).sqrt();
        }
        for (l, o) in out.iter_mut().enumerate().take(self.n_local) {
            let (p, q) = (l % k1, l / k1);
            let mut v = vals[0][p];
            if self.dim() == 2 {
                v *= vals[1][q];
            }
            *o = scale * v;
        }
    }

    /// Pointwise evaluation of `f` at every quadrature node.
    pub fn sample(self: &Arc<Self>, f: impl Fn(&[f64]) -> f64) -> QuadField {
        let mut values = vec![0.0; self.n_quad()];
        for c in 0..self.mesh.num_cells() {
            for n in 0..self.n_nodes {
                let x = self.node_position(c, n);
                values[c * self.n_nodes + n] = f(&x[..self.dim()]);
            }
        }
        QuadField {
            space: Arc::clone(self),
            values,
        }
    }

    /// Piecewise L2 projection of a pointwise-evaluable function.
    pub fn project(self: &Arc<Self>, f: impl Fn(&[f64]) -> f64) -> DgField {
        self.project_quad(&self.sample(f))
    }

    /// Piecewise L2 projection of nodal data; coefficients are quadrature inner products.
    pub fn project_quad(self: &Arc<Self>, f: &QuadField) -> DgField {
        let mut coeffs = vec![0.0; self.n_dofs()];
        self.project_values_into(&f.values, &mut coeffs);
        DgField {
            space: Arc::clone(self),
            coeffs,
        }
    }

    pub(crate) fn project_values_into(&self, values: &[f64], coeffs: &mut [f64]) {
        let (nl, nn) = (self.n_local, self.n_nodes);
        for (cv, cc) in values.chunks_exact(nn).zip(coeffs.chunks_exact_mut(nl)) {
            cc.iter_mut().for_each(|x| *x = 0.0);
            for n in 0..nn {
                let wf = self.weights[n] * cv[n];
                let row = &self.phi[n * nl..(n + 1) * nl];
                for (o, &b) in cc.iter_mut().zip(row) {
                    *o += wf * b;
                }
            }
        }
    }

    pub(crate) fn eval_values_into(&self, coeffs: &[f64], values: &mut [f64]) {
        let (nl, nn) = (self.n_local, self.n_nodes);
        for (cc, cv) in coeffs.chunks_exact(nl).zip(values.chunks_exact_mut(nn)) {
            for n in 0..nn {
                let row = &self.phi[n * nl..(n + 1) * nl];
                cv[n] = row.iter().zip(cc).map(|(b, c)| b * c).sum();
            }
        }
    }

    /// Exact evaluation of a DG field at all quadrature nodes.
    pub fn eval_at_quad(self: &Arc<Self>, u: &DgField) -> QuadField {
        let mut values = vec![0.0; self.n_quad()];
        self.eval_values_into(&u.coeffs, &mut values);
        QuadField {
            space: Arc::clone(self),
            values,
        }
    }

    /// Evaluates `u` at a physical point inside cell `c` (one-sided on cell boundaries).
    pub fn eval_in_cell(&self, u: &DgField, c: usize, x: &[f64]) -> f64 {
        let mut b = vec![0.0; self.n_local];
        self.basis_at_point(c, x, &mut b);
        b.iter().zip(u.cell(c)).map(|(b, c)| b * c).sum()
    }

    /// Evaluates `u` at a physical point, or `None` outside the domain.
    pub fn eval_point(&self, u: &DgField, x: &[f64]) -> Option<f64> {
        self.mesh.locate(x).map(|c| self.eval_in_cell(u, c, x))
    }

    /// Averages and jumps of `u` and of its normal derivative at the face quadrature nodes.
    ///
    /// On a boundary face the single available trace is returned as the
    /// average and the jumps are zero.
    pub fn trace_avg_jump(&self, u: &DgField, face: usize) -> Result<FaceTrace> {
        let f = *self.mesh.face(face)?;
        let minus = f.k1.map(|c| self.one_sided_trace(u, c, f.axis, true));
        let plus = f.k2.map(|c| self.one_sided_trace(u, c, f.axis, false));
        Ok(match (minus, plus) {
            (Some((v1, d1)), Some((v2, d2))) => FaceTrace {
                kind: f.kind,
                average: v1.iter().zip(&v2).map(|(a, b)| 0.5 * (a + b)).collect(),
                jump: v1.iter().zip(&v2).map(|(a, b)| b - a).collect(),
                normal_average: d1.iter().zip(&d2).map(|(a, b)| 0.5 * (a + b)).collect(),
                normal_jump: d1.iter().zip(&d2).map(|(a, b)| b - a).collect(),
            },
            (Some((v, d)), None) | (None, Some((v, d))) => FaceTrace {
                kind: f.kind,
                jump: vec![0.0; v.len()],
                normal_jump: vec![0.0; d.len()],
                average: v,
                normal_average: d,
            },
            (None, None) => unreachable!("faces always touch a cell"),
        })
    }

    /// Trace values and `d/dx_axis` derivative of `u` on the low (`high = false`)
    /// or high side of cell `c` along `axis`, at the transverse quadrature nodes.
    fn one_sided_trace(&self, u: &DgField, c: usize, axis: usize, high: bool) -> (Vec<f64>, Vec<f64>) {
        let k1 = self.degree + 1;
        let m = self.rule.len();
        let cell = self.mesh.cell_unchecked(c);
        let (ev, ed) = if high {
            (&self.ends[1], &self.ends[3])
        } else {
            (&self.ends[0], &self.ends[2])
        };
        let h_n = cell.size[axis];
        let s_n = (2.0 / h_n).sqrt();
        let coeffs = u.cell(c);
        if self.dim() == 1 {
            let v: f64 = (0..k1).map(|p| coeffs[p] * s_n * ev[p]).sum();
            let d: f64 = (0..k1).map(|p| coeffs[p] * s_n * (2.0 / h_n) * ed[p]).sum();
            return (vec![v], vec![d]);
        }
        let other = 1 - axis;
        let s_t = (2.0 / cell.size[other]).sqrt();
        let mut vals = vec![0.0; m];
        let mut ders = vec![0.0; m];
        for b in 0..m {
            let (mut v, mut d) = (0.0, 0.0);
            for l in 0..self.n_local {
                let pq = [l % k1, l / k1];
                let (pn, pt) = (pq[axis], pq[other]);
                let t = s_t * self.ref_val[b * k1 + pt];
                v += coeffs[l] * s_n * ev[pn] * t;
                d += coeffs[l] * s_n * (2.0 / h_n) * ed[pn] * t;
            }
            vals[b] = v;
            ders[b] = d;
        }
        (vals, ders)
    }

    /// L2 norm by quadrature.
    pub fn norm_l2(self: &Arc<Self>, u: &DgField) -> f64 {
        self.eval_at_quad(u).norm_l2()
    }

    /// Max of `|u|` over quadrature nodes and cell corners.
    pub fn norm_linf(self: &Arc<Self>, u: &DgField) -> f64 {
        let at_nodes = self.eval_at_quad(u).values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut corners = 0.0f64;
        self.for_each_corner(|c, x| {
            corners = corners.max(self.eval_in_cell(u, c, x).abs());
        });
        at_nodes.max(corners)
    }

    fn for_each_corner(&self, mut f: impl FnMut(usize, &[f64])) {
        let dim = self.dim();
        for c in 0..self.mesh.num_cells() {
            let cell = self.mesh.cell_unchecked(c);
            for corner in 0..(1usize << dim) {
                let mut x = [0.0; 2];
                for d in 0..dim {
                    x[d] = cell.lower[d] + if corner >> d & 1 == 1 { cell.size[d] } else { 0.0 };
                }
                f(c, &x[..dim]);
            }
        }
    }

    /// `||u - exact||_L2` by quadrature.
    pub fn error_l2(self: &Arc<Self>, u: &DgField, exact: impl Fn(&[f64]) -> f64) -> f64 {
        let uq = self.eval_at_quad(u);
        let ex = self.sample(&exact);
        let mut s = 0.0;
        for (a, b) in uq.values.chunks_exact(self.n_nodes).zip(ex.values.chunks_exact(self.n_nodes)) {
            for n in 0..self.n_nodes {
                let e = a[n] - b[n];
                s += self.weights[n] * e * e;
            }
        }
        s.sqrt()
    }

    /// Max of `|u - exact|` over quadrature nodes and cell corners.
    pub fn error_linf(self: &Arc<Self>, u: &DgField, exact: impl Fn(&[f64]) -> f64) -> f64 {
        let uq = self.eval_at_quad(u);
        let ex = self.sample(&exact);
        let mut e = uq
            .values
            .iter()
            .zip(&ex.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        self.for_each_corner(|c, x| {
            e = e.max((self.eval_in_cell(u, c, x) - exact(x)).abs());
        });
        e
    }
}

/// Traces of a field and its normal derivative at the quadrature nodes of one face.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceTrace {
    pub kind: FaceKind,
    pub average: Vec<f64>,
    pub jump: Vec<f64>,
    pub normal_average: Vec<f64>,
    pub normal_jump: Vec<f64>,
}

/// Piecewise polynomial: per-cell modal coefficients in the orthonormal basis.
#[derive(Clone, Debug)]
pub struct DgField {
    space: Arc<DgSpace>,
    coeffs: Vec<f64>,
}

impl DgField {
    pub fn zeros(space: &Arc<DgSpace>) -> Self {
        Self {
            space: Arc::clone(space),
            coeffs: vec![0.0; space.n_dofs()],
        }
    }

    pub fn from_coeffs(space: &Arc<DgSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::Incompatible(format!(
                "expected {} coefficients, got {}",
                space.n_dofs(),
                coeffs.len()
            )));
        }
        Ok(Self {
            space: Arc::clone(space),
            coeffs,
        })
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        let nl = self.space.n_local;
        &self.coeffs[c * nl..(c + 1) * nl]
    }

    pub fn cell_mut(&mut self, c: usize) -> &mut [f64] {
        let nl = self.space.n_local;
        &mut self.coeffs[c * nl..(c + 1) * nl]
    }

    /// `self += alpha * x`
    pub fn axpy(&mut self, alpha: f64, x: &DgField) {
        debug_assert!(Arc::ptr_eq(&self.space, &x.space));
        for (a, b) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= alpha);
    }

    /// `base + sum_j w_j f_j`
    pub fn combine(base: &DgField, terms: impl IntoIterator<Item = (f64, impl std::borrow::Borrow<DgField>)>) -> DgField {
        let mut out = base.clone();
        for (w, f) in terms {
            out.axpy(w, f.borrow());
        }
        out
    }

    /// Euclidean norm of the coefficient vector (equals the L2 norm by orthonormality).
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// L2 inner product via the coefficients.
    pub fn dot(&self, other: &DgField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &DgField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// One value per quadrature node per cell. Lives outside the polynomial space.
#[derive(Clone, Debug)]
pub struct QuadField {
    space: Arc<DgSpace>,
    values: Vec<f64>,
}

impl QuadField {
    pub fn zeros(space: &Arc<DgSpace>) -> Self {
        Self {
            space: Arc::clone(space),
            values: vec![0.0; space.n_quad()],
        }
    }

    pub fn from_values(space: &Arc<DgSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.n_quad() {
            return Err(Error::Incompatible(format!(
                "expected {} nodal values, got {}",
                space.n_quad(),
                values.len()
            )));
        }
        Ok(Self {
            space: Arc::clone(space),
            values,
        })
    }

    pub fn space(&self) -> &Arc<DgSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> QuadField {
        QuadField {
            space: Arc::clone(&self.space),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Nodewise product.
    pub fn mul(&self, other: &QuadField) -> QuadField {
        QuadField {
            space: Arc::clone(&self.space),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }

    /// `self += alpha * x` nodewise.
    pub fn axpy(&mut self, alpha: f64, x: &QuadField) {
        for (a, b) in self.values.iter_mut().zip(&x.values) {
            *a += alpha * b;
        }
    }

    /// Discrete L2 norm using the quadrature weights.
    pub fn norm_l2(&self) -> f64 {
        let nn = self.space.n_nodes;
        let w = &self.space.weights;
        self.values
            .chunks_exact(nn)
            .map(|cv| cv.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl PartialEq for DgField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.space, &other.space) && self.coeffs == other.coeffs
    }
}

impl PartialEq for QuadField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.space, &other.space) && self.values == other.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryKind;
    use std::f64::consts::PI;

    fn square(n: usize, k: usize) -> Arc<DgSpace> {
        let mesh = Mesh::rectangle((-2.0 * PI, 2.0 * PI), (-2.0 * PI, 2.0 * PI), n, n, BoundaryKind::Periodic).unwrap();
        DgSpace::new(mesh, k)
    }

    #[test]
    fn projection_reproduces_basis_functions() {
        let space = square(3, 2);
        let target = 5 * space.n_local() + 4;
        let mut coeffs = vec![0.0; space.n_dofs()];
        coeffs[target] = 1.0;
        let u = DgField::from_coeffs(&space, coeffs).unwrap();
        let back = space.project_quad(&space.eval_at_quad(&u));
        assert!(back.max_abs_diff(&u) < 1e-12);
    }

    #[test]
    fn constant_projection() {
        let space = square(4, 3);
        let u = space.project(|_| 1.0);
        let q = space.eval_at_quad(&u);
        assert!(q.values().iter().all(|v| (v - 1.0).abs() < 1e-13));
        // ||1||_L2 on |Omega| = 16 pi^2 is 4 pi.
        assert!((space.norm_l2(&u) - 4.0 * PI).abs() < 1e-12);
        assert!((u.coeff_norm() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn linear_field_at_gauss_nodes() {
        let mesh = Mesh::interval(0.0, 1.0, 2, BoundaryKind::Natural).unwrap();
        let space = DgSpace::with_quadrature(mesh, 1, 2);
        let u = space.project(|x| x[0]);
        let q = space.eval_at_quad(&u);
        let r = 1.0 / (2.0 * 3f64.sqrt());
        // cell 0 is [0, 0.5]: nodes 0.25 -+ r/2
        assert!((q.values()[0] - (0.25 - 0.5 * r)).abs() < 1e-15);
        assert!((q.values()[1] - (0.25 + 0.5 * r)).abs() < 1e-15);

        // Cells of width 1: nodes 0.5 -+ 1/(2 sqrt 3) in the first cell.
        let mesh = Mesh::interval(0.0, 2.0, 2, BoundaryKind::Natural).unwrap();
        let space = DgSpace::with_quadrature(mesh, 1, 2);
        let q = space.eval_at_quad(&space.project(|x| x[0]));
        assert!((q.values()[0] - (0.5 - r)).abs() < 1e-14);
        assert!((q.values()[1] - (0.5 + r)).abs() < 1e-14);
    }

    #[test]
    fn zero_norms() {
        let space = square(2, 1);
        let z = DgField::zeros(&space);
        assert_eq!(space.norm_l2(&z), 0.0);
        assert_eq!(space.norm_linf(&z), 0.0);
    }

    #[test]
    fn traces_of_continuous_and_stepped_fields() {
        let space = square(4, 2);
        let u = space.project(|x| 0.3 + 0.1 * x[0] - 0.02 * x[1] + 0.01 * x[0] * x[1]);
        for (f, face) in space.mesh().faces().iter().enumerate() {
            let t = space.trace_avg_jump(&u, f).unwrap();
            if face.kind == FaceKind::Interior {
                assert!(t.jump.iter().all(|j| j.abs() < 1e-12));
            }
        }

        let mesh = Mesh::interval(0.0, 2.0, 2, BoundaryKind::Natural).unwrap();
        let space = DgSpace::new(mesh, 1);
        let u = space.project(|x| if x[0] < 1.0 { 1.0 } else { 3.0 });
        let inner = space
            .mesh()
            .faces()
            .iter()
            .position(|f| f.kind == FaceKind::Interior)
            .unwrap();
        let t = space.trace_avg_jump(&u, inner).unwrap();
        assert!((t.average[0] - 2.0).abs() < 1e-13);
        assert!((t.jump[0] - 2.0).abs() < 1e-13);
        let t = space.trace_avg_jump(&u, 0).unwrap();
        assert_eq!(t.jump, vec![0.0]);
        assert!((t.average[0] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn normal_derivative_trace() {
        let mesh = Mesh::rectangle((0.0, 1.0), (0.0, 1.0), 2, 2, BoundaryKind::Natural).unwrap();
        let space = DgSpace::new(mesh, 2);
        let u = space.project(|x| x[0] * x[0] + 3.0 * x[1]);
        let f = space
            .mesh()
            .faces()
            .iter()
            .position(|f| f.axis == 0 && f.kind == FaceKind::Interior)
            .unwrap();
        let t = space.trace_avg_jump(&u, f).unwrap();
        // face at x = 0.5: d/dx = 2x = 1
        assert!(t.normal_average.iter().all(|d| (d - 1.0).abs() < 1e-12));
        assert!(t.normal_jump.iter().all(|d| d.abs() < 1e-12));
    }
}
