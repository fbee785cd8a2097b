//! Gauss-Legendre quadrature and Legendre polynomials on the reference interval `[-1, 1]`.

/// Gauss-Legendre rule with `m` points on `[-1, 1]`, nodes in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn gauss_legendre(m: usize) -> Self {
        assert!(m >= 1, "quadrature needs at least one point");
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..m.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_m.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(m, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[-1, 1]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Returns `(P_n(x), P_n'(x))` for the classical Legendre polynomial.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 1..n {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        let d2 = d0 + (2.0 * jf + 1.0) * p1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
    }
    (p1, d1)
}

/// Values and derivatives of the L2([-1,1])-orthonormal Legendre polynomials
/// `sqrt((2p+1)/2) P_p` for `p = 0..=k`, written into `val` and `der`.
pub fn orthonormal_legendre(k: usize, x: f64, val: &mut [f64], der: &mut [f64]) {
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    for p in 0..=k {
        let (v, d) = match p {
            0 => (1.0, 0.0),
            1 => (x, 1.0),
            _ => {
                let j = (p - 1) as f64;
                let p2 = ((2.0 * j + 1.0) * x * p1 - j * p0) / (j + 1.0);
                let d2 = d0 + (2.0 * j + 1.0) * p1;
                p0 = p1;
                p1 = p2;
                d0 = d1;
                d1 = d2;
                (p2, d2)
            }
        };
        let s = ((2 * p + 1) as f64 / 2.0).sqrt();
        val[p] = s * v;
        der[p] = s * d;
    }
}
