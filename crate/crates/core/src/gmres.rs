//! Restarted GMRES with right preconditioning on flat complex vectors.

use crate::linalg::C64;

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            restart: 30,
            max_iters: 200,
            rel_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresOutcome {
    pub iterations: usize,
    /// `||b - A x|| / ||b||`, recomputed from the final iterate.
    pub rel_residual: f64,
    pub converged: bool,
}

fn hnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn hdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solve `A x = b` starting from `x`, with `A` applied by `op` and the right
/// preconditioner `M^-1` applied by `precond`.
pub fn gmres<A, P>(op: A, precond: P, b: &[C64], x: &mut [C64], opts: GmresOptions) -> GmresOutcome
where
    A: Fn(&[C64]) -> Vec<C64>,
    P: Fn(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let bnorm = hnorm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        return GmresOutcome {
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        };
    }
    let residual = |x: &[C64]| -> Vec<C64> {
        let ax = op(x);
        b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
    };
    let mut total = 0;
    let mut r = residual(x);
    let mut rel = hnorm(&r) / bnorm;
    while rel > opts.rel_tol && total < opts.max_iters {
        let m = opts.restart.min(opts.max_iters - total);
        let beta = hnorm(&r);
        let mut basis: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|z| z / beta).collect());
        // Hessenberg columns after Givens rotation
        let mut h: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut cs: Vec<(f64, C64)> = Vec::with_capacity(m);
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k = 0;
        while k < m {
            let z = precond(&basis[k]);
            let mut w = op(&z);
            let mut col = vec![C64::new(0.0, 0.0); k + 2];
            for (j, v) in basis.iter().enumerate() {
                let hij = hdot(v, &w);
                col[j] = hij;
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= hij * vi);
            }
            let wn = hnorm(&w);
            col[k + 1] = C64::new(wn, 0.0);
            for (j, &(cj, sj)) in cs.iter().enumerate() {
                let (a, bb) = (col[j], col[j + 1]);
                col[j] = cj * a + sj * bb;
                col[j + 1] = -sj.conj() * a + cj * bb;
            }
            let (a, bb) = (col[k], col[k + 1]);
            let denom = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (cr, sr) = if denom == 0.0 {
                (1.0, C64::new(0.0, 0.0))
            } else if a.norm() == 0.0 {
                (0.0, (bb / bb.norm()).conj())
            } else {
                let ph = a / a.norm();
                (a.norm() / denom, ph * bb.conj() / denom)
            };
            col[k] = cr * a + sr * bb;
            col[k + 1] = C64::new(0.0, 0.0);
            g[k + 1] = -sr.conj() * g[k];
            g[k] *= cr;
            cs.push((cr, sr));
            h.push(col);
            k += 1;
            total += 1;
            let est = g[k].norm() / bnorm;
            if est <= opts.rel_tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|z| z / wn).collect());
        }
        // back substitution on the k x k triangle
        let mut y = vec![C64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in (i + 1)..k {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![C64::new(0.0, 0.0); n];
        for (yi, v) in y.iter().zip(&basis) {
            update.iter_mut().zip(v).for_each(|(u, vi)| *u += yi * vi);
        }
        let dz = precond(&update);
        x.iter_mut().zip(&dz).for_each(|(xi, d)| *xi += d);
        r = residual(x);
        rel = hnorm(&r) / bnorm;
    }
    GmresOutcome {
        iterations: total,
        rel_residual: rel,
        converged: rel <= opts.rel_tol,
    }
}
