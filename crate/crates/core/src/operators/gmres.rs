//! Restarted GMRES with right preconditioning.

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||b - A x||` computed from the final iterate.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from zero. Stops once `||b - A x|| <= atol`, or after
/// `max_iter` inner iterations in total.
pub fn gmres(
    b: &[f64],
    mut op: impl FnMut(&[f64], &mut [f64]),
    mut prec: impl FnMut(&[f64], &mut [f64]),
    atol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let restart = restart.max(1);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut beta = norm(&r);
    let mut iterations = 0;
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];

    while beta > atol && iterations < max_iter {
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(restart + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            prec(&v[j], &mut z);
            op(&z, &mut w);
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let hij = dot(&w, vi);
                    h[i][j] += hij;
                    w.iter_mut().zip(vi).for_each(|(wk, vk)| *wk -= hij * vk);
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            iterations += 1;
            if g[j + 1].abs() <= atol || iterations >= max_iter || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wk| wk / hn).collect());
        }
        if used == 0 {
            break;
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| h[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut comb = vec![0.0; n];
        for (vi, yi) in v.iter().zip(&y) {
            comb.iter_mut().zip(vi).for_each(|(c, vk)| *c += yi * vk);
        }
        prec(&comb, &mut z);
        x.iter_mut().zip(&z).for_each(|(xk, zk)| *xk += zk);
        op(&x, &mut w);
        r.iter_mut().zip(b.iter().zip(&w)).for_each(|(rk, (bk, wk))| *rk = bk - wk);
        let new_beta = norm(&r);
        let stalled = new_beta >= beta;
        beta = new_beta;
        if stalled {
            break;
        }
    }
    GmresOutcome {
        x,
        iterations,
        residual: beta,
        converged: beta <= atol,
    }
}
