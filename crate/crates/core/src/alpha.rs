//! The `epsilon = 0` theory: cell problem, alpha tensor, mean-field matrix and
//! selection of an unstable large-scale wavevector.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpectralVectorField, VelocityProfile, WaveIndex, TWO_PI};
use crate::linalg::{self, c, CMat3, CVec3, C64, I, ZERO3};
use crate::par;

/// Relative tolerance under which two directions count as equally unstable.
pub const GAMMA_TIE: f64 = 1e-12;

/// The 3x3 alpha tensor with its symmetry diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMatrix {
    entries: CMat3,
    hermiticity_defect: f64,
    imag_defect: f64,
}

impl AlphaMatrix {
    pub fn from_entries(entries: CMat3) -> Self {
        let hermiticity_defect = linalg::max_abs(&(entries - entries.transpose()));
        let imag_defect = entries.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        Self {
            entries,
            hermiticity_defect,
            imag_defect,
        }
    }

    pub fn from_real(rows: [[f64; 3]; 3]) -> Self {
        Self::from_entries(CMat3::from_fn(|i, j| c(rows[i][j], 0.0)))
    }

    pub fn zero() -> Self {
        Self::from_entries(CMat3::zeros())
    }

    pub fn entries(&self) -> &CMat3 {
        &self.entries
    }

    /// Largest `|alpha_ij - alpha_ji|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.hermiticity_defect
    }

    /// Largest `|Im alpha_ij|`.
    pub fn imag_defect(&self) -> f64 {
        self.imag_defect
    }

    /// Largest entry modulus.
    pub fn norm(&self) -> f64 {
        linalg::max_abs(&self.entries)
    }

    /// Real symmetric part `(Re alpha + Re alpha^T) / 2`.
    pub fn symmetric_real(&self) -> Matrix3<f64> {
        let re = self.entries.map(|z| z.re);
        (re + re.transpose()) * 0.5
    }

    /// Whether both defects are within `rel` times the entry scale.
    pub fn is_real_symmetric(&self, rel: f64) -> bool {
        let s = self.norm();
        self.hermiticity_defect <= rel * s && self.imag_defect <= rel * s
    }

    pub fn rows(&self) -> [[C64; 3]; 3] {
        let m = &self.entries;
        [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]])
    }
}

/// Diagonal symbol `-|2 pi k + kappa|^2 - shift` of the perturbed cell operator.
#[inline]
pub(crate) fn cell_symbol(k: [i64; 3], kappa: [f64; 3], shift: C64) -> C64 {
    let q = [
        TWO_PI * k[0] as f64 + kappa[0],
        TWO_PI * k[1] as f64 + kappa[1],
        TWO_PI * k[2] as f64 + kappa[2],
    ];
    c(-linalg::rdot(&q, &q), 0.0) - shift
}

/// `-i (2 pi k + kappa) ^ (u_k ^ bbar)`, the forcing of the cell problem at mode `k`.
#[inline]
pub(crate) fn cell_forcing(k: [i64; 3], kappa: [f64; 3], u_k: &CVec3, bbar: &CVec3) -> CVec3 {
    let sym = [
        c(0.0, -(TWO_PI * k[0] as f64 + kappa[0])),
        c(0.0, -(TWO_PI * k[1] as f64 + kappa[1])),
        c(0.0, -(TWO_PI * k[2] as f64 + kappa[2])),
    ];
    linalg::cross(&sym, &linalg::cross(u_k, bbar))
}

/// Forcing field `-curl_kappa(U ^ bbar)`; its mean vanishes since `U` is mean-free.
pub(crate) fn cell_forcing_field(
    u: &VelocityProfile,
    bbar: &CVec3,
    kappa: [f64; 3],
) -> SpectralVectorField {
    let f = u.field();
    let half = f.half();
    let mut out = SpectralVectorField::zeros_aniso(half);
    for (i, (cf, uk)) in out.coeffs_mut().iter_mut().zip(f.coeffs()).enumerate() {
        if linalg::norm_sqr(uk) != 0.0 {
            *cf = cell_forcing(crate::field::wave_of(half, i), kappa, uk, bbar);
        }
    }
    out
}

/// `forcing(k) / d(k)` for `k != 0`, zero mean, with `d` from [`cell_symbol`].
pub(crate) fn diag_solve(
    mut forcing: SpectralVectorField,
    kappa: [f64; 3],
    shift: C64,
) -> SpectralVectorField {
    let half = forcing.half();
    par::for_each_indexed_mut(forcing.coeffs_mut(), |i, cf| {
        let k = crate::field::wave_of(half, i);
        if k == [0; 3] {
            *cf = ZERO3;
        } else {
            let d = cell_symbol(k, kappa, shift);
            *cf = [cf[0] / d, cf[1] / d, cf[2] / d];
        }
    });
    forcing
}

/// Solution of `Laplace b = -curl(U ^ bbar)` on mean-free fields.
pub fn cell_solve(u: &VelocityProfile, bbar: &CVec3) -> SpectralVectorField {
    diag_solve(
        cell_forcing_field(u, bbar, [0.0; 3]),
        [0.0; 3],
        C64::new(0.0, 0.0),
    )
}

pub(crate) fn basis(j: usize) -> CVec3 {
    let mut e = ZERO3;
    e[j] = c(1.0, 0.0);
    e
}

/// Matrix with columns `mean(U ^ b_j)`.
pub(crate) fn mean_wedge_columns(u: &VelocityProfile, cols: &[SpectralVectorField]) -> CMat3 {
    let means = par::map_slice(cols, |b| u.field().wedge(b).mean_part());
    CMat3::from_fn(|i, j| means[j][i])
}

/// `alpha(U)` with column `j` equal to `mean(U ^ cell_solve(U, e_j))`.
pub fn alpha(u: &VelocityProfile) -> AlphaMatrix {
    let cols = par::map_indexed(3, |j| cell_solve(u, &basis(j)));
    AlphaMatrix::from_entries(mean_wedge_columns(u, &cols))
}

/// `alpha(U)` summed mode by mode in closed form:
/// `sum_{k != 0} U(-k) ^ [i k ^ (U(k) ^ e_j)] / (2 pi |k|^2)`.
pub fn alpha_closed_sum(u: &VelocityProfile) -> AlphaMatrix {
    let support = u.support();
    let f = u.field();
    let mut m = CMat3::zeros();
    for j in 0..3 {
        let e = basis(j);
        let mut col = ZERO3;
        for (k, uk) in &support {
            let um = f.get(-*k);
            let kv = linalg::real3(k.as_f64());
            let inner = linalg::scale(I, &linalg::cross(&kv, &linalg::cross(uk, &e)));
            let w = linalg::cross(&um, &inner);
            let s = 1.0 / (TWO_PI * k.norm_sqr() as f64);
            col = linalg::add(&col, &linalg::scale_re(s, &w));
        }
        for i in 0..3 {
            m[(i, j)] = col[i];
        }
    }
    AlphaMatrix::from_entries(m)
}

/// `M = i xi ^ (alpha .) - |xi|^2 I`.
pub fn mean_matrix(alpha: &CMat3, xi: &[f64; 3]) -> CMat3 {
    linalg::cross_matrix(xi) * alpha * I - CMat3::identity() * c(linalg::rdot(xi, xi), 0.0)
}

/// `gamma(e)`: largest real part among the eigenvalues of `i e ^ (alpha .)`.
pub fn gamma(alpha: &CMat3, e: &[f64; 3]) -> f64 {
    let m = linalg::cross_matrix(e) * alpha * I;
    linalg::eigenvalues(&m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenpair of `m` with the largest real part; the vector has unit norm.
pub fn leading_eigenpair(m: &CMat3) -> (C64, CVec3) {
    let ev = linalg::eigenvalues(m);
    let lambda = ev
        .iter()
        .copied()
        .fold(ev[0], |a, b| if b.re > a.re { b } else { a });
    let (v, _) = linalg::null_vector(m, lambda);
    (lambda, v)
}

/// A mean mode `M(xi) b0 = lambda b0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanModeSolution {
    pub xi: [f64; 3],
    pub lambda: C64,
    pub b0: CVec3,
}

impl MeanModeSolution {
    pub fn solve(alpha: &CMat3, xi: [f64; 3]) -> Self {
        let (lambda, b0) = leading_eigenpair(&mean_matrix(alpha, &xi));
        Self { xi, lambda, b0 }
    }

    pub fn xi_norm(&self) -> f64 {
        linalg::rnorm(&self.xi)
    }

    pub fn is_growing(&self) -> bool {
        self.lambda.re > 0.0
    }
}

/// Outcome of [`select_xi`].
#[derive(Clone, Debug, PartialEq)]
pub struct XiSelection {
    /// Unit direction (first nonzero component positive).
    pub direction: [f64; 3],
    pub gamma: f64,
    /// Optimum `|xi| = gamma / 2` along `direction`.
    pub optimal: MeanModeSolution,
    /// Components snapped to `2 pi p / q`; equals `optimal` when not snapped.
    pub snapped: MeanModeSolution,
    pub is_snapped: bool,
    pub denominator_bound: u64,
}

impl XiSelection {
    pub fn solution(&self) -> &MeanModeSolution {
        &self.snapped
    }
}

/// Flip sign so the first nonzero component is positive.
fn canonical(mut e: [f64; 3]) -> [f64; 3] {
    let n = linalg::rnorm(&e);
    for x in e.iter_mut() {
        *x /= n;
    }
    if let Some(&first) = e.iter().find(|x| **x != 0.0) {
        if first < 0.0 {
            for x in e.iter_mut() {
                *x = -*x;
            }
        }
    }
    e
}

/// `n` points of the Fibonacci lattice on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

/// Candidate directions: eigenvectors of the symmetric part, the axes and a
/// Fibonacci sphere, all canonicalized.
fn candidate_directions(alpha: &AlphaMatrix, samples: usize) -> Vec<[f64; 3]> {
    let eig = SymmetricEigen::new(alpha.symmetric_real());
    let mut dirs: Vec<[f64; 3]> = (0..3)
        .map(|j| {
            let v = eig.eigenvectors.column(j);
            [v[0], v[1], v[2]]
        })
        .collect();
    dirs.extend([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    dirs.extend(fibonacci_sphere(samples));
    dirs.into_iter()
        .filter(|e| linalg::rnorm(e) > 0.0)
        .map(canonical)
        .collect()
}

/// `true` when `(ga, ea)` ranks strictly above `(gb, eb)`: larger gamma, ties
/// broken by the lexicographically larger direction.
fn ranks_above(ga: f64, ea: &[f64; 3], gb: f64, eb: &[f64; 3]) -> bool {
    let tie = GAMMA_TIE * ga.abs().max(gb.abs());
    if (ga - gb).abs() <= tie {
        ea.partial_cmp(eb) == Some(std::cmp::Ordering::Greater)
    } else {
        ga > gb
    }
}

/// Best rational approximation `p / q` of `x >= 0` with `1 <= q <= qmax`,
/// via convergents and semiconvergents of the continued fraction.
pub fn best_rational(x: f64, qmax: u64) -> (u64, u64) {
    assert!(x >= 0.0 && qmax >= 1);
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut r = x;
    loop {
        let a = r.floor();
        if a > u64::MAX as f64 / 4.0 {
            break;
        }
        let a = a as u64;
        let q2 = a.saturating_mul(q1).saturating_add(q0);
        if q2 > qmax {
            // largest admissible semiconvergent
            let t = (qmax - q0) / q1.max(1);
            let (ps, qs) = (t * p1 + p0, t * q1 + q0);
            if q1 == 0 {
                return (ps, qs);
            }
            let es = (x - ps as f64 / qs as f64).abs();
            let ec = (x - p1 as f64 / q1 as f64).abs();
            return if t >= 1 && es < ec {
                (ps, qs)
            } else {
                (p1, q1)
            };
        }
        let p2 = a * p1 + p0;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = r - a as f64;
        if frac <= 1e-15 * r.max(1.0) || (x - p1 as f64 / q1 as f64) == 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    (p1, q1)
}

/// Snap each nonzero component to `2 pi p / q` with `1 <= p`, `q <= bound`;
/// zero components stay zero.
pub fn snap_xi(xi: &[f64; 3], bound: u64) -> [f64; 3] {
    xi.map(|x| {
        if x == 0.0 {
            return 0.0;
        }
        let (p, q) = best_rational(x.abs() / TWO_PI, bound);
        let p = p.max(1);
        x.signum() * TWO_PI * p as f64 / q as f64
    })
}

/// Pick the most unstable direction among the candidates, place `xi` at the
/// optimal radius `gamma / 2` and snap it (skipped when `denominator_bound` is 0).
pub fn select_xi(
    alpha: &AlphaMatrix,
    direction_samples: usize,
    denominator_bound: u64,
) -> Result<XiSelection> {
    let m = *alpha.entries();
    let dirs = candidate_directions(alpha, direction_samples);
    let gammas = par::map_slice(&dirs, |e| gamma(&m, e));
    let mut best = 0;
    for i in 1..dirs.len() {
        if ranks_above(gammas[i], &dirs[i], gammas[best], &dirs[best]) {
            best = i;
        }
    }
    let (e, g) = (dirs[best], gammas[best]);
    let tol = 1e-10 * alpha.norm();
    if !(g > tol) || g <= 0.0 {
        return Err(Error::NoUnstableDirection { best_gamma: g });
    }
    let r = g / 2.0;
    let optimal = MeanModeSolution::solve(&m, e.map(|x| r * x));
    let (snapped, is_snapped) = if denominator_bound == 0 {
        (optimal.clone(), false)
    } else {
        let s = MeanModeSolution::solve(&m, snap_xi(&optimal.xi, denominator_bound));
        if s.lambda.re <= 0.0 {
            return Err(Error::SnapDestroyedGrowth {
                bound: denominator_bound,
                re_lambda: s.lambda.re,
            });
        }
        (s, true)
    };
    Ok(XiSelection {
        direction: e,
        gamma: g,
        optimal,
        snapped,
        is_snapped,
        denominator_bound,
    })
}

/// Wave index helper for tests and callers building single-mode flows.
pub fn unit_wave(axis: usize) -> WaveIndex {
    let mut k = [0; 3];
    k[axis] = 1;
    WaveIndex(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{abc_flow, make_profile, random_profile};
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn cof_quadratic(a: &Matrix3<f64>, e: &[f64; 3]) -> f64 {
        // e^T cof(a) e, cofactor matrix spelled out entrywise
        let cof = Matrix3::from_fn(|i, j| {
            let r: Vec<usize> = (0..3).filter(|&x| x != i).collect();
            let s: Vec<usize> = (0..3).filter(|&x| x != j).collect();
            let minor = a[(r[0], s[0])] * a[(r[1], s[1])] - a[(r[0], s[1])] * a[(r[1], s[0])];
            if (i + j) % 2 == 0 {
                minor
            } else {
                -minor
            }
        });
        let ev = nalgebra::Vector3::new(e[0], e[1], e[2]);
        (ev.transpose() * cof * ev)[(0, 0)]
    }

    #[test]
    fn cell_solve_zero_flow() {
        let u = abc_flow(0.0, 0.0, 0.0, 3);
        assert_eq!(cell_solve(&u, &basis(0)).l2_norm(), 0.0);
    }

    #[test]
    fn cell_solve_single_wave() {
        let a = 1.7;
        let u = abc_flow(a, 0.0, 0.0, 3);
        let b = cell_solve(&u, &basis(2));
        // (A / 2 pi)(cos z, -sin z, 0): coefficient at +e3 is (A/4pi)(1, i, 0)
        let s = a / (4.0 * PI);
        let expect = [c(s, 0.0), c(0.0, s), c(0.0, 0.0)];
        let got = b.get(WaveIndex::new(0, 0, 1));
        assert!(linalg::norm(&linalg::sub(&got, &expect)) < 1e-15);
        let got_m = b.get(WaveIndex::new(0, 0, -1));
        assert!(linalg::norm(&linalg::sub(&got_m, &linalg::conj3(&expect))) < 1e-15);
        assert_eq!(b.nnz(), 2);
        assert_eq!(cell_solve(&u, &basis(0)).l2_norm(), 0.0);
    }

    #[test]
    fn cell_solve_residual() {
        let u = random_profile(4, 2.0, 3);
        let bbar = [c(0.3, 0.1), c(-1.0, 0.0), c(0.5, 0.5)];
        let b = cell_solve(&u, &bbar);
        // Laplacian symbol -|2 pi k|^2
        let mut res = b.clone();
        for (i, cf) in res.coeffs_mut().iter_mut().enumerate() {
            let k = crate::field::wave_of(b.half(), i);
            let l = -TWO_PI * TWO_PI * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
            *cf = linalg::scale_re(l, cf);
        }
        let ub = SpectralVectorField::constant(4, bbar);
        let curl = u.field().wedge(&ub).curl_bloch([0.0; 3]);
        let r = res.add(&curl).l2_norm() / curl.l2_norm();
        assert!(r < 1e-14, "{r}");
        assert_eq!(b.mean_part(), ZERO3);
    }

    #[test]
    fn alpha_abc_closed_form() {
        for (a, b, cc) in [(1.0, 1.0, 1.0), (1.0, 0.5, -2.0), (0.3, 0.0, 1.1)] {
            let al = alpha(&abc_flow(a, b, cc, 4));
            let expect = Matrix3::from_diagonal(&nalgebra::Vector3::new(b * b, cc * cc, a * a))
                * (-1.0 / TWO_PI);
            let diff = al.entries().map(|z| z) - expect.map(|x| c(x, 0.0));
            assert!(
                linalg::max_abs(&diff) < 1e-12 * expect.abs().max(),
                "{a} {b} {cc}"
            );
        }
    }

    #[test]
    fn alpha_paths_agree_and_symmetric() {
        for seed in 0..5 {
            let u = random_profile(4, 4.0, seed);
            let a = alpha(&u);
            let b = alpha_closed_sum(&u);
            let scale = a.norm();
            assert!(linalg::max_abs(&(a.entries() - b.entries())) <= 1e-12 * scale);
            assert!(a.is_real_symmetric(1e-10));
        }
    }

    #[test]
    fn alpha_is_quadratic() {
        let u = random_profile(3, 3.0, 9);
        let a = alpha(&u);
        let a2 = alpha(&u.scaled(-2.5));
        let diff = a2.entries() - a.entries() * c(6.25, 0.0);
        assert!(linalg::max_abs(&diff) < 1e-12 * a2.norm());
        assert_eq!(alpha(&abc_flow(0.0, 0.0, 0.0, 2)), AlphaMatrix::zero());
    }

    #[test]
    fn mean_matrix_examples() {
        let al = CMat3::identity() * c(0.7, 0.0);
        assert_eq!(mean_matrix(&al, &[0.0; 3]), CMat3::zeros());
        let r = 0.3;
        let mut ev = linalg::eigenvalues(&mean_matrix(&al, &[r, 0.0, 0.0])).map(|z| z.re);
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut expect = [-r * r, 0.7 * r - r * r, -0.7 * r - r * r];
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in ev.iter().zip(expect) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn gamma_matches_cofactor_oracle() {
        let u = random_profile(3, 3.0, 5);
        let a = alpha(&u);
        let s = a.symmetric_real();
        for e in fibonacci_sphere(20) {
            let g2 = cof_quadratic(&s, &e);
            let g = gamma(a.entries(), &e);
            if g2 > 1e-8 * s.abs().max().powi(2) {
                assert!((g * g - g2).abs() < 1e-9 * g2, "{g} {g2}");
            } else {
                assert!(g.abs() < 1e-6 * s.abs().max());
            }
        }
    }

    #[test]
    fn gamma_eigenvalue_structure() {
        let a = alpha(&random_profile(3, 3.0, 8));
        let e = canonical([0.2, -0.4, 0.9]);
        let m = linalg::cross_matrix(&e) * a.entries() * I;
        let ev = linalg::eigenvalues(&m);
        let scale = a.norm();
        assert!(m.trace().norm() < 1e-14 * scale);
        assert!(ev.iter().any(|z| z.norm() < 1e-10 * scale));
    }

    #[test]
    fn select_abc_111() {
        let al = AlphaMatrix::from_real([
            [-1.0 / TWO_PI, 0.0, 0.0],
            [0.0, -1.0 / TWO_PI, 0.0],
            [0.0, 0.0, -1.0 / TWO_PI],
        ]);
        let sel = select_xi(&al, 200, 79).unwrap();
        assert!((sel.gamma - 1.0 / TWO_PI).abs() < 1e-14);
        assert!((sel.optimal.xi_norm() - 1.0 / (4.0 * PI)).abs() < 1e-14);
        assert!((sel.optimal.lambda.re - 1.0 / (16.0 * PI * PI)).abs() < 1e-14);
        assert_eq!(sel.direction, [1.0, 0.0, 0.0]);
        assert!((sel.snapped.xi[0] - TWO_PI / 79.0).abs() < 1e-15);
        assert_eq!(&sel.snapped.xi[1..], &[0.0, 0.0]);
        let r = sel.snapped.xi[0];
        let oracle = sel.gamma * r - r * r;
        assert!((sel.snapped.lambda.re - oracle).abs() < 1e-14);
        assert!(sel.snapped.lambda.re > 0.99 * 0.00633);
        for sol in [&sel.optimal, &sel.snapped] {
            let xb = linalg::dot(&linalg::real3(sol.xi), &sol.b0);
            assert!(xb.norm() < 1e-10);
        }
    }

    #[test]
    fn select_rejects_indefinite_alpha() {
        let al = AlphaMatrix::from_real([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]]);
        assert!(matches!(
            select_xi(&al, 500, 79),
            Err(Error::NoUnstableDirection { .. })
        ));
        assert!(matches!(
            select_xi(&AlphaMatrix::zero(), 50, 79),
            Err(Error::NoUnstableDirection { .. })
        ));
        // sphere oracle: transverse determinant never positive
        let s = al.symmetric_real();
        for e in fibonacci_sphere(2000) {
            assert!(cof_quadratic(&s, &e) <= 1e-15);
        }
    }

    #[test]
    fn optimum_is_stationary_in_radius() {
        let al = alpha(&random_profile(3, 3.0, 2));
        let Ok(sel) = select_xi(&al, 100, 0) else {
            return;
        };
        let e = sel.direction;
        let lam = |r: f64| {
            MeanModeSolution::solve(al.entries(), e.map(|x| r * x))
                .lambda
                .re
        };
        let r0 = sel.optimal.xi_norm();
        let h = 1e-4 * r0;
        let d = (lam(r0 + h) - lam(r0 - h)) / (2.0 * h);
        assert!(d.abs() < 1e-8, "{d}");
    }

    #[test]
    fn best_rational_examples() {
        assert_eq!(best_rational(0.5, 10), (1, 2));
        assert_eq!(best_rational(PI, 7), (22, 7));
        assert_eq!(best_rational(PI, 120), (355, 113));
        assert_eq!(best_rational(1.0 / (8.0 * PI * PI), 79), (1, 79));
        // semiconvergent: 0.2857 ~ 2/7
        assert_eq!(best_rational(2.0 / 7.0 + 1e-6, 9), (2, 7));
        // brute-force oracle
        for &x in &[0.1234, 0.7213, 0.0126, 3.3] {
            let (p, q) = best_rational(x, 50);
            let err = (x - p as f64 / q as f64).abs();
            for qq in 1..=50u64 {
                let pp = (x * qq as f64).round();
                assert!(err <= (x - pp / qq as f64).abs() + 1e-15);
            }
        }
    }

    #[test]
    fn make_profile_feeds_alpha() {
        let mut m = BTreeMap::new();
        m.insert(
            WaveIndex::new(0, 0, 1),
            [c(0.0, -0.5), c(0.5, 0.0), c(0.0, 0.0)],
        );
        m.insert(
            WaveIndex::new(0, 0, -1),
            [c(0.0, 0.5), c(0.5, 0.0), c(0.0, 0.0)],
        );
        let u = make_profile(&m, 2, 1e-10).unwrap();
        let a = alpha(&u);
        assert!((a.entries()[(2, 2)].re + 1.0 / TWO_PI).abs() < 1e-15);
    }
}
