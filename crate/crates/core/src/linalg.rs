//! Small dense helpers: complex 3-vectors and 3x3 complex matrices.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CVec3 = [C64; 3];
pub type CMat3 = Matrix3<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);
pub const ZERO3: CVec3 = [ZERO; 3];

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn real3(v: [f64; 3]) -> CVec3 {
    v.map(|x| c(x, 0.0))
}

#[inline]
pub fn cross(a: &CVec3, b: &CVec3) -> CVec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Bilinear product `a . b` (no conjugation).
#[inline]
pub fn dot(a: &CVec3, b: &CVec3) -> C64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Hermitian product `conj(a) . b`.
#[inline]
pub fn hdot(a: &CVec3, b: &CVec3) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1] + a[2].conj() * b[2]
}

#[inline]
pub fn norm_sqr(a: &CVec3) -> f64 {
    a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()
}

#[inline]
pub fn norm(a: &CVec3) -> f64 {
    norm_sqr(a).sqrt()
}

#[inline]
pub fn add(a: &CVec3, b: &CVec3) -> CVec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: &CVec3, b: &CVec3) -> CVec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(s: C64, a: &CVec3) -> CVec3 {
    [s * a[0], s * a[1], s * a[2]]
}

#[inline]
pub fn scale_re(s: f64, a: &CVec3) -> CVec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn conj3(a: &CVec3) -> CVec3 {
    [a[0].conj(), a[1].conj(), a[2].conj()]
}

#[inline]
pub fn rdot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn rnorm(a: &[f64; 3]) -> f64 {
    rdot(a, a).sqrt()
}

pub fn to_vector(v: &CVec3) -> Vector3<C64> {
    Vector3::new(v[0], v[1], v[2])
}

pub fn from_vector(v: &Vector3<C64>) -> CVec3 {
    [v[0], v[1], v[2]]
}

/// Matrix of `v -> xi ^ v`.
pub fn cross_matrix(xi: &[f64; 3]) -> CMat3 {
    let [x, y, z] = *xi;
    Matrix3::new(
        c(0.0, 0.0),
        c(-z, 0.0),
        c(y, 0.0),
        c(z, 0.0),
        c(0.0, 0.0),
        c(-x, 0.0),
        c(-y, 0.0),
        c(x, 0.0),
        c(0.0, 0.0),
    )
}

/// Frobenius norm.
pub fn fro(m: &CMat3) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat3) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigenvalues of a general complex 3x3 matrix, read off the diagonal of the
/// complex Schur form and polished by Newton steps on the characteristic
/// polynomial.
pub fn eigenvalues(m: &CMat3) -> [C64; 3] {
    let (_, t) = m.schur().unpack();
    let mut ev = [t[(0, 0)], t[(1, 1)], t[(2, 2)]];
    // characteristic polynomial x^3 + a2 x^2 + a1 x + a0
    let a2 = -m.trace();
    let a1 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)];
    let a0 = -m.determinant();
    let scale = fro(m).max(f64::MIN_POSITIVE);
    for z in ev.iter_mut() {
        for _ in 0..3 {
            let p = ((*z + a2) * *z + a1) * *z + a0;
            let dp = (3.0 * *z + 2.0 * a2) * *z + a1;
            if dp.norm() <= 1e-8 * scale * scale {
                break;
            }
            let step = p / dp;
            if !step.is_finite() || step.norm() > 1e-6 * scale {
                break;
            }
            *z -= step;
        }
    }
    ev
}

/// Unit null vector of `m - lambda I`, taken as the right singular vector of
/// the smallest singular value. Returns the vector and that singular value.
/// The phase is fixed so the largest component is real and positive.
pub fn null_vector(m: &CMat3, lambda: C64) -> (CVec3, f64) {
    let shifted = m - CMat3::identity() * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let (imin, smin) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc },
            );
    let row = v_t.row(imin);
    let mut v = [row[0].conj(), row[1].conj(), row[2].conj()];
    normalize_phase(&mut v);
    (v, smin)
}

/// Scale to unit norm with the largest-magnitude component real positive.
pub fn normalize_phase(v: &mut CVec3) {
    let n = norm(v);
    if n == 0.0 {
        return;
    }
    let (imax, _) = v.iter().enumerate().fold((0, -1.0), |acc, (i, z)| {
        if z.norm() > acc.1 + 1e-14 {
            (i, z.norm())
        } else {
            acc
        }
    });
    let phase = v[imax].conj() / v[imax].norm();
    for z in v.iter_mut() {
        *z = *z * phase / n;
    }
}

pub fn mat_vec(m: &CMat3, v: &CVec3) -> CVec3 {
    from_vector(&(m * to_vector(v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_matrix_acts_as_cross_product() {
        let xi = [0.3, -1.2, 2.0];
        let v = [c(1.0, 2.0), c(-0.5, 0.1), c(0.7, -0.3)];
        let via_m = mat_vec(&cross_matrix(&xi), &v);
        let direct = cross(&real3(xi), &v);
        for i in 0..3 {
            assert!((via_m[i] - direct[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn eigenvalues_of_triangular_matrix() {
        let m = CMat3::new(
            c(1.0, 1.0),
            c(2.0, 0.0),
            c(0.0, 3.0),
            ZERO,
            c(-2.0, 0.0),
            c(1.0, 1.0),
            ZERO,
            ZERO,
            c(0.5, -0.5),
        );
        let mut ev = eigenvalues(&m).to_vec();
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((ev[0] - c(-2.0, 0.0)).norm() < 1e-12);
        assert!((ev[1] - c(0.5, -0.5)).norm() < 1e-12);
        assert!((ev[2] - c(1.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn null_vector_solves_eigenproblem() {
        let m = CMat3::new(
            c(2.0, 0.0),
            c(1.0, 0.5),
            ZERO,
            c(1.0, -0.5),
            c(3.0, 0.0),
            c(0.2, 0.0),
            ZERO,
            c(0.2, 0.0),
            c(1.0, 0.0),
        );
        for lam in eigenvalues(&m) {
            let (v, smin) = null_vector(&m, lam);
            assert!(smin < 1e-12);
            let r = sub(&mat_vec(&m, &v), &scale(lam, &v));
            assert!(norm(&r) < 1e-12);
            assert!((norm(&v) - 1.0).abs() < 1e-14);
        }
    }
}
