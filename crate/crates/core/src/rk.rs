//! Butcher tableaux and the algebraic-stability certificate.

use std::fmt;

use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Tolerance on the consistency conditions `c_i = sum_j a_ij`, `sum_i b_i = 1`.
pub const CONSISTENCY_TOL: f64 = 1e-14;
/// Eigenvalues of `M` above `-PSD_TOL` count as nonnegative.
pub const PSD_TOL: f64 = 1e-12;
/// Weights above `-WEIGHT_TOL` count as nonnegative.
pub const WEIGHT_TOL: f64 = 1e-14;

/// Names accepted by [`ButcherTableau::builtin`].
pub const BUILTIN_NAMES: [&str; 6] = [
    "qz2",
    "crouzeix3",
    "gl4",
    "backward-euler",
    "implicit-midpoint",
    "forward-euler",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau {
    name: String,
    stages: usize,
    /// Row-major `s x s`.
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl ButcherTableau {
    /// Builds a tableau from its rows. `c` defaults to the row sums of `A`.
    pub fn new(name: impl Into<String>, a: Vec<Vec<f64>>, b: Vec<f64>, c: Option<Vec<f64>>) -> Result<Self> {
        let s = b.len();
        if s == 0 {
            return Err(Error::InvalidTableau("no stages".into()));
        }
        if a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(Error::InvalidTableau(format!("A must be {s}x{s} to match b")));
        }
        if a.iter().flatten().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTableau("non-finite coefficient".into()));
        }
        let row_sums: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
        let c = match c {
            Some(c) => {
                if c.len() != s {
                    return Err(Error::InvalidTableau(format!("c has {} entries, expected {s}", c.len())));
                }
                for (i, (ci, rs)) in c.iter().zip(&row_sums).enumerate() {
                    if (ci - rs).abs() > CONSISTENCY_TOL * (1.0 + rs.abs()) {
                        return Err(Error::InvalidTableau(format!(
                            "c_{} = {ci} differs from the row sum {rs}",
                            i + 1
                        )));
                    }
                }
                c
            }
            None => row_sums,
        };
        let bsum: f64 = b.iter().sum();
        if (bsum - 1.0).abs() > CONSISTENCY_TOL {
            return Err(Error::InvalidTableau(format!("weights sum to {bsum}, expected 1")));
        }
        Ok(Self {
            name: name.into(),
            stages: s,
            a: a.into_iter().flatten().collect(),
            b,
            c,
        })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let r3 = 3f64.sqrt();
        match name {
            "qz2" => Self::new(
                name,
                vec![vec![0.25, 0.0], vec![0.5, 0.25]],
                vec![0.5, 0.5],
                Some(vec![0.25, 0.75]),
            ),
            "crouzeix3" => {
                let g = 0.5 + r3 / 6.0;
                Self::new(
                    name,
                    vec![vec![g, 0.0], vec![-r3 / 3.0, g]],
                    vec![0.5, 0.5],
                    Some(vec![g, 0.5 - r3 / 6.0]),
                )
            }
            "gl4" => Self::new(
                name,
                vec![vec![0.25, 0.25 - r3 / 6.0], vec![0.25 + r3 / 6.0, 0.25]],
                vec![0.5, 0.5],
                Some(vec![0.5 - r3 / 6.0, 0.5 + r3 / 6.0]),
            ),
            "backward-euler" => Self::new(name, vec![vec![1.0]], vec![1.0], Some(vec![1.0])),
            "implicit-midpoint" => Self::new(name, vec![vec![0.5]], vec![1.0], Some(vec![0.5])),
            "forward-euler" => Self::new(name, vec![vec![0.0]], vec![1.0], Some(vec![0.0])),
            _ => Err(Error::UnknownName {
                kind: "tableau",
                name: name.to_string(),
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.stages + j]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// True when `a_ij = 0` for all `j > i` (stages can be solved one after another).
    pub fn is_lower_triangular(&self) -> bool {
        (0..self.stages).all(|i| (i + 1..self.stages).all(|j| self.a(i, j) == 0.0))
    }

    /// `M_ij = b_i a_ij + b_j a_ji - b_i b_j`.
    pub fn stability_matrix(&self) -> Vec<Vec<f64>> {
        let s = self.stages;
        let b = &self.b;
        (0..s)
            .map(|i| {
                (0..s)
                    .map(|j| b[i] * self.a(i, j) + b[j] * self.a(j, i) - b[i] * b[j])
                    .collect()
            })
            .collect()
    }

    /// Checks `b_i >= 0` and `M` positive semi-definite.
    pub fn certify(&self) -> Certification {
        let m = self.stability_matrix();
        let eigenvalues = symmetric_eigenvalues(&m);
        if let Some((i, bi)) = self.b.iter().enumerate().find(|(_, &bi)| bi < -WEIGHT_TOL) {
            return Certification::Unstable {
                eigenvalues,
                reason: format!("negative weight b_{} = {bi}", i + 1),
            };
        }
        if let Some(min) = eigenvalues.iter().copied().reduce(f64::min) {
            if min < -PSD_TOL {
                return Certification::Unstable {
                    eigenvalues,
                    reason: format!("M has negative eigenvalue {min:e}"),
                };
            }
        }
        Certification::Stable { eigenvalues }
    }

    /// Parses the text produced by the `Display` impl: rows `c_i | a_i1 .. a_is`,
    /// a weight row `| b_1 .. b_s`, optional separator lines of `-`, `+`, `=`,
    /// and `#` comments. Entries may be decimals or fractions `p/q`.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut cs = Vec::new();
        let mut b: Option<Vec<f64>> = None;
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line.chars().all(|ch| matches!(ch, '-' | '+' | '=' | ' ')) {
                continue;
            }
            let Some((left, right)) = line.split_once('|') else {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected `c | a_i1 ... a_is` or `| b_1 ... b_s`".into(),
                });
            };
            let entries = right
                .split_whitespace()
                .map(|tok| parse_number(tok, line_no))
                .collect::<Result<Vec<_>>>()?;
            if entries.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "row has no coefficients".into(),
                });
            }
            let left = left.trim();
            if left.is_empty() {
                if b.is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "second weight row".into(),
                    });
                }
                b = Some(entries);
            } else {
                if b.is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "stage row after the weight row".into(),
                    });
                }
                cs.push(parse_number(left, line_no)?);
                rows.push((line_no, entries));
            }
        }
        let b = b.ok_or(Error::Parse {
            line: text.lines().count().max(1),
            message: "missing weight row `| b_1 ... b_s`".into(),
        })?;
        for (line_no, row) in &rows {
            if row.len() != b.len() {
                return Err(Error::Parse {
                    line: *line_no,
                    message: format!("expected {} coefficients, found {}", b.len(), row.len()),
                });
            }
        }
        let a = rows.into_iter().map(|(_, r)| r).collect();
        Self::new(name, a, b, Some(cs))
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let bad = || Error::Parse {
        line,
        message: format!("cannot parse `{tok}` as a number"),
    };
    match tok.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let q: f64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0.0 {
                return Err(bad());
            }
            Ok(p / q)
        }
        None => tok.parse().map_err(|_| bad()),
    }
}

impl fmt::Display for ButcherTableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.stages;
        let num = |v: f64| format!("{v:?}");
        let cw = self.c.iter().map(|&v| num(v).len()).max().unwrap_or(1);
        let aw = self
            .a
            .iter()
            .chain(&self.b)
            .map(|&v| num(v).len())
            .max()
            .unwrap_or(1);
        for i in 0..s {
            write!(f, "{:>cw$} |", num(self.c[i]))?;
            for j in 0..s {
                write!(f, " {:>aw$}", num(self.a(i, j)))?;
            }
            writeln!(f)?;
        }
        writeln!(f, "{}-+{}", "-".repeat(cw), "-".repeat(s * (aw + 1)))?;
        write!(f, "{:>cw$} |", "")?;
        for j in 0..s {
            write!(f, " {:>aw$}", num(self.b[j]))?;
        }
        writeln!(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Certification {
    Stable { eigenvalues: Vec<f64> },
    Unstable { eigenvalues: Vec<f64>, reason: String },
}

impl Certification {
    pub fn is_stable(&self) -> bool {
        matches!(self, Certification::Stable { .. })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        match self {
            Certification::Stable { eigenvalues } | Certification::Unstable { eigenvalues, .. } => eigenvalues,
        }
    }
}

/// Eigenvalues of a small symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mat = Mat::<f64>::from_fn(n, n, |i, j| m[i][j]);
    let mut ev = mat
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("symmetric eigenvalue solver failed on a small matrix");
    ev.sort_by(f64::total_cmp);
    ev
}

impl ButcherTableau {
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &[Vec<f64>]) -> f64 {
        m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn builtin_coefficients() {
        let qz = ButcherTableau::builtin("qz2").unwrap();
        assert_eq!((qz.a(0, 0), qz.a(0, 1), qz.a(1, 0), qz.a(1, 1)), (0.25, 0.0, 0.5, 0.25));
        assert_eq!(qz.b(), &[0.5, 0.5]);
        assert_eq!(qz.c(), &[0.25, 0.75]);
        let gl = ButcherTableau::builtin("gl4").unwrap();
        let r = 3f64.sqrt() / 6.0;
        assert!((gl.a(0, 1) - (0.25 - r)).abs() < 1e-16);
        assert!((gl.a(1, 0) - (0.25 + r)).abs() < 1e-16);
        assert!((gl.c()[0] - (0.5 - r)).abs() < 1e-16);
        assert!(!gl.is_lower_triangular());
        let be = ButcherTableau::builtin("backward-euler").unwrap();
        assert_eq!((be.a(0, 0), be.b()[0], be.c()[0]), (1.0, 1.0, 1.0));
        assert!(matches!(
            ButcherTableau::builtin("rk4"),
            Err(Error::UnknownName { .. })
        ));
    }

    #[test]
    fn stability_matrices() {
        let g = 0.25 + 3f64.sqrt() / 6.0;
        let qz = ButcherTableau::builtin("qz2").unwrap().stability_matrix();
        let gl = ButcherTableau::builtin("gl4").unwrap().stability_matrix();
        assert!(max_abs(&qz) <= 1e-14);
        assert!(max_abs(&gl) <= 1e-14);
        let cz = ButcherTableau::builtin("crouzeix3").unwrap().stability_matrix();
        let want = [[g, -g], [-g, g]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((cz[i][j] - want[i][j]).abs() <= 1e-14);
                assert_eq!(cz[i][j], cz[j][i]);
            }
        }
    }

    #[test]
    fn certification() {
        for name in ["qz2", "gl4", "crouzeix3", "backward-euler", "implicit-midpoint"] {
            assert!(ButcherTableau::builtin(name).unwrap().certify().is_stable(), "{name}");
        }
        // Crouzeix: eigenvalues of g [[1,-1],[-1,1]] are {0, 2g}.
        let cert = ButcherTableau::builtin("crouzeix3").unwrap().certify();
        let ev = cert.eigenvalues();
        let g = 0.25 + 3f64.sqrt() / 6.0;
        assert!(ev[0].abs() < 1e-14);
        assert!((ev[1] - 2.0 * g).abs() < 1e-14);
        assert!((ev[1] - 1.077350).abs() < 1e-6);

        let fe = ButcherTableau::builtin("forward-euler").unwrap();
        assert_eq!(fe.stability_matrix(), vec![vec![-1.0]]);
        assert!(!fe.certify().is_stable());

        let neg = ButcherTableau::new("neg", vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.5, -0.5], None).unwrap();
        match neg.certify() {
            Certification::Unstable { reason, .. } => assert!(reason.contains("negative weight")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn consistency_is_enforced() {
        assert!(ButcherTableau::new("x", vec![vec![0.5]], vec![0.9], None).is_err());
        assert!(ButcherTableau::new("x", vec![vec![0.5]], vec![1.0], Some(vec![0.4])).is_err());
        assert!(ButcherTableau::new("x", vec![vec![0.5, 0.0]], vec![1.0], None).is_err());
    }

    #[test]
    fn display_parse_round_trip() {
        for name in BUILTIN_NAMES {
            let t = ButcherTableau::builtin(name).unwrap();
            let text = t.to_string();
            let back = ButcherTableau::parse(name, &text).unwrap();
            assert_eq!(back, t, "{text}");
        }
        let t = ButcherTableau::parse("frac", "1/4 | 1/4 0\n3/4 | 1/2 1/4\n----\n | 1/2 1/2\n").unwrap();
        assert_eq!(t, ButcherTableau::builtin("qz2").unwrap().renamed("frac"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = ButcherTableau::parse("bad", "# header\n0.5 | 0.5 abc\n | 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = ButcherTableau::parse("bad", "0.5 | 0.5\n0.5 0.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = ButcherTableau::parse("bad", "1 | 1 0\n | 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        assert!(matches!(
            ButcherTableau::parse("bad", "1 | 1\n"),
            Err(Error::Parse { .. })
        ));
    }
}

