//! Discrete energy and convergence-order tables.

use std::fmt;

use crate::dg::DgField;

/// `E_h = 1/2 ||q||^2 + ||U_h||^2`; with an orthonormal basis the L2 norms are
/// coefficient norms.
pub fn discrete_energy(q: &DgField, aux: &DgField) -> f64 {
    let qn = q.coeff_norm();
    let un = aux.coeff_norm();
    0.5 * qn * qn + un * un
}

/// One line of the energy history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    /// `E - C0 |Omega|`, the energy of the original variables up to quadrature.
    pub shifted: f64,
    /// `E^{n-1} - E^n`; zero on the initial record.
    pub dissipation: f64,
    /// `tau sum_i b_i ||xi_i||^2`, the guaranteed lower bound on the dissipation.
    pub bound: f64,
    pub pc_iterations: usize,
}

/// Experimental order of convergence between two errors whose parameters
/// differ by `ratio`.
pub fn eoc(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (coarse / fine).ln() / ratio.ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EocRow {
    /// Mesh size or time step.
    pub parameter: f64,
    pub error_l2: f64,
    pub error_linf: f64,
    pub order_l2: Option<f64>,
    pub order_linf: Option<f64>,
}

/// Errors from a refinement sweep together with the observed orders.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EocTable {
    pub label: String,
    pub rows: Vec<EocRow>,
}

impl EocTable {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; orders are computed against the previous row.
    pub fn push(&mut self, parameter: f64, error_l2: f64, error_linf: f64) {
        let (order_l2, order_linf) = match self.rows.last() {
            Some(prev) => {
                let ratio = prev.parameter / parameter;
                (
                    Some(eoc(prev.error_l2, error_l2, ratio)),
                    Some(eoc(prev.error_linf, error_linf, ratio)),
                )
            }
            None => (None, None),
        };
        self.rows.push(EocRow {
            parameter,
            error_l2,
            error_linf,
            order_l2,
            order_linf,
        });
    }

    pub fn orders_l2(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order_l2).collect()
    }

    pub fn orders_linf(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order_linf).collect()
    }
}

impl fmt::Display for EocTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order = |o: Option<f64>| o.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        writeln!(
            f,
            "{:>12} {:>14} {:>7} {:>14} {:>7}",
            self.label, "L2 error", "order", "Linf error", "order"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>12.5e} {:>14.5e} {:>7} {:>14.5e} {:>7}",
                r.parameter,
                r.error_l2,
                order(r.order_l2),
                r.error_linf,
                order(r.order_linf)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eoc_of_reference_errors() {
        // Fourth-order temporal sequence: 2.10020e-3 -> 1.38306e-4 is 3.92.
        assert!((eoc(2.10020e-3, 1.38306e-4, 2.0) - 3.92).abs() < 0.005);
        assert!((eoc(1.0, 0.25, 2.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn table_orders() {
        let mut t = EocTable::new("h");
        t.push(1.0, 1.0, 2.0);
        t.push(0.5, 0.125, 0.5);
        t.push(0.25, 0.015625, 0.125);
        assert_eq!(t.orders_l2().len(), 2);
        assert!(t.orders_l2().iter().all(|o| (o - 3.0).abs() < 1e-12));
        assert!(t.orders_linf().iter().all(|o| (o - 2.0).abs() < 1e-12));
        let text = t.to_string();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("3.00"));
    }
}
