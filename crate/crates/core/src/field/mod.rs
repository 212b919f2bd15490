//! Truncated Fourier representation of complex 3-vector fields on a periodic box.
//!
//! A field stores one complex 3-vector per wave index `k` with `|k_i| <= half_i`,
//! for the basis `exp(2 pi i k . theta)` on the unit torus, or
//! `exp(2 pi i (k_i / T_i) theta_i)` on a box with integer periods `T`.
//! Storage is lexicographic in `(k_1, k_2, k_3)`, `k_3` fastest.
//!
//! The unit-cell operations (`curl_bloch`, `leray_project`, `seminorm`) use
//! integer wave indices directly; the `*_on` variants take a [`BoxSpec`].

pub mod io;
mod profile;

pub use profile::{abc_flow, make_profile, random_profile, VelocityProfile, DEFAULT_TOLERANCE};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{smooth_size, Fft3};
use crate::linalg::{self, CVec3, C64, ZERO, ZERO3};
use crate::par;

pub const TWO_PI: f64 = 2.0 * PI;

/// Modes at or below this count make a field "sparse" for [`SpectralVectorField::wedge`].
const SPARSE_LIMIT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveIndex(pub [i64; 3]);

impl WaveIndex {
    pub const ZERO: WaveIndex = WaveIndex([0, 0, 0]);

    pub fn new(k1: i64, k2: i64, k3: i64) -> Self {
        Self([k1, k2, k3])
    }

    pub fn norm_sqr(self) -> i64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn is_zero(self) -> bool {
        self.0 == [0, 0, 0]
    }

    pub fn as_f64(self) -> [f64; 3] {
        self.0.map(|x| x as f64)
    }
}

impl std::ops::Neg for WaveIndex {
    type Output = Self;

    fn neg(self) -> Self {
        Self(self.0.map(|x| -x))
    }
}

/// Periods of a box in units of the unit cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSpec {
    periods: [u64; 3],
}

impl BoxSpec {
    pub fn new(periods: [u64; 3]) -> Result<Self> {
        if periods.contains(&0) {
            return Err(Error::InvalidBox(periods));
        }
        Ok(Self { periods })
    }

    pub fn unit() -> Self {
        Self { periods: [1, 1, 1] }
    }

    pub fn periods(&self) -> [u64; 3] {
        self.periods
    }

    /// Physical wavevector `2 pi k_i / T_i`.
    #[inline]
    pub fn wavevector(&self, k: [i64; 3]) -> [f64; 3] {
        [
            TWO_PI * k[0] as f64 / self.periods[0] as f64,
            TWO_PI * k[1] as f64 / self.periods[1] as f64,
            TWO_PI * k[2] as f64 / self.periods[2] as f64,
        ]
    }

    pub fn volume(&self) -> u64 {
        self.periods.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralVectorField {
    half: [usize; 3],
    reality: bool,
    coeffs: Vec<CVec3>,
}

impl SpectralVectorField {
    /// Zero field with cubic truncation order `n`.
    pub fn zeros(n: usize) -> Self {
        Self::zeros_aniso([n, n, n])
    }

    /// Zero field with per-axis truncation.
    pub fn zeros_aniso(half: [usize; 3]) -> Self {
        let len = half.iter().map(|h| 2 * h + 1).product();
        Self {
            half,
            reality: false,
            coeffs: vec![ZERO3; len],
        }
    }

    /// Constant field.
    pub fn constant(n: usize, v: CVec3) -> Self {
        let mut f = Self::zeros(n);
        f.set_mean(v);
        f
    }

    pub fn from_coeffs(half: [usize; 3], coeffs: Vec<CVec3>, reality: bool) -> Result<Self> {
        let len: usize = half.iter().map(|h| 2 * h + 1).product();
        if coeffs.len() != len {
            return Err(Error::InvalidArgument(format!(
                "expected {len} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            half,
            reality,
            coeffs,
        })
    }

    pub fn half(&self) -> [usize; 3] {
        self.half
    }

    /// Cubic truncation order; the largest half-width for anisotropic fields.
    pub fn order(&self) -> usize {
        *self.half.iter().max().unwrap()
    }

    pub fn is_cubic(&self) -> bool {
        self.half[0] == self.half[1] && self.half[1] == self.half[2]
    }

    pub fn dims(&self) -> [usize; 3] {
        self.half.map(|h| 2 * h + 1)
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn reality_flag(&self) -> bool {
        self.reality
    }

    pub fn with_reality(mut self, flag: bool) -> Self {
        self.reality = flag;
        self
    }

    pub fn set_reality(&mut self, flag: bool) {
        self.reality = flag;
    }

    pub fn coeffs(&self) -> &[CVec3] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [CVec3] {
        &mut self.coeffs
    }

    #[inline]
    pub fn index_of(&self, k: [i64; 3]) -> Option<usize> {
        let [h0, h1, h2] = self.half.map(|h| h as i64);
        if k[0].abs() > h0 || k[1].abs() > h1 || k[2].abs() > h2 {
            return None;
        }
        let [_, d1, d2] = self.dims();
        Some((((k[0] + h0) as usize) * d1 + (k[1] + h1) as usize) * d2 + (k[2] + h2) as usize)
    }

    #[inline]
    pub fn wave(&self, idx: usize) -> [i64; 3] {
        let [_, d1, d2] = self.dims();
        let i2 = idx % d2;
        let i1 = (idx / d2) % d1;
        let i0 = idx / (d1 * d2);
        [
            i0 as i64 - self.half[0] as i64,
            i1 as i64 - self.half[1] as i64,
            i2 as i64 - self.half[2] as i64,
        ]
    }

    fn zero_index(&self) -> usize {
        self.index_of([0, 0, 0]).unwrap()
    }

    /// Coefficient at `k`, zero outside the cube.
    pub fn get(&self, k: WaveIndex) -> CVec3 {
        self.index_of(k.0).map_or(ZERO3, |i| self.coeffs[i])
    }

    pub fn set(&mut self, k: WaveIndex, v: CVec3) -> Result<()> {
        let i = self.index_of(k.0).ok_or(Error::IndexOutOfRange(k))?;
        self.coeffs[i] = v;
        Ok(())
    }

    /// Iterate `(k, coefficient)` in storage order.
    pub fn modes(&self) -> impl Iterator<Item = (WaveIndex, &CVec3)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, c)| (WaveIndex(self.wave(i)), c))
    }

    /// Number of modes with a nonzero coefficient.
    pub fn nnz(&self) -> usize {
        self.coeffs
            .iter()
            .filter(|c| linalg::norm_sqr(c) != 0.0)
            .count()
    }

    pub fn mean_part(&self) -> CVec3 {
        self.coeffs[self.zero_index()]
    }

    pub fn set_mean(&mut self, v: CVec3) {
        let i = self.zero_index();
        self.coeffs[i] = v;
    }

    pub fn fluct_part(&self) -> Self {
        let mut f = self.clone();
        f.set_mean(ZERO3);
        f
    }

    // ---- linear algebra on coefficient vectors ----

    pub fn scaled(&self, s: C64) -> Self {
        let mut f = self.clone();
        f.scale_mut(s);
        if s.im != 0.0 {
            f.reality = false;
        }
        f
    }

    pub fn scale_mut(&mut self, s: C64) {
        par::for_each_indexed_mut(&mut self.coeffs, |_, c| *c = linalg::scale(s, c));
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: C64, other: &Self) {
        self.check_same_shape(other);
        let o = &other.coeffs;
        par::for_each_indexed_mut(&mut self.coeffs, |i, c| {
            *c = linalg::add(c, &linalg::scale(s, &o[i]))
        });
        self.reality = self.reality && other.reality && s.im == 0.0;
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut f = self.clone();
        f.axpy(C64::new(1.0, 0.0), other);
        f
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut f = self.clone();
        f.axpy(C64::new(-1.0, 0.0), other);
        f
    }

    /// Hermitian inner product `sum_k conj(self_k) . other_k`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.check_same_shape(other);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(ZERO, |acc, (a, b)| acc + linalg::hdot(a, b))
    }

    fn check_same_shape(&self, other: &Self) {
        assert_eq!(self.half, other.half, "fields have different truncations");
    }

    /// Copy into a field with truncation `half`, dropping or zero-padding modes.
    pub fn resampled(&self, half: [usize; 3]) -> Self {
        let mut f = Self::zeros_aniso(half);
        f.reality = self.reality;
        for (i, c) in self.coeffs.iter().enumerate() {
            if let Some(j) = f.index_of(self.wave(i)) {
                f.coeffs[j] = *c;
            }
        }
        f
    }

    // ---- differential operators ----

    /// Coefficientwise `(2 pi i k + i kappa) ^ coeff(k)` on the unit cell.
    pub fn curl_bloch(&self, kappa: [f64; 3]) -> Self {
        self.curl_on(&BoxSpec::unit(), kappa)
    }

    /// Bloch-shifted curl on a box: `i (2 pi k./T + kappa) ^ coeff(k)`.
    pub fn curl_on(&self, bx: &BoxSpec, kappa: [f64; 3]) -> Self {
        let mut out = self.clone();
        let half = self.half;
        par::for_each_indexed_mut(&mut out.coeffs, |i, c| {
            let k = wave_of(half, i);
            let q = bx.wavevector(k);
            let sym = [
                C64::new(0.0, q[0] + kappa[0]),
                C64::new(0.0, q[1] + kappa[1]),
                C64::new(0.0, q[2] + kappa[2]),
            ];
            *c = linalg::cross(&sym, c);
        });
        out.reality = self.reality && kappa == [0.0; 3];
        out
    }

    /// Largest `|(2 pi k./T + kappa) . coeff(k)|` over all modes.
    pub fn divergence_defect_on(&self, bx: &BoxSpec, kappa: [f64; 3]) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let q = bx.wavevector(self.wave(i));
                let s = linalg::real3([q[0] + kappa[0], q[1] + kappa[1], q[2] + kappa[2]]);
                linalg::dot(&s, c).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn divergence_defect(&self, kappa: [f64; 3]) -> f64 {
        self.divergence_defect_on(&BoxSpec::unit(), kappa)
    }

    /// Leray projection on the unit cell: `c - k (k . c) / |k|^2` for `k != 0`.
    pub fn leray_project(&self) -> Self {
        self.leray_project_on(&BoxSpec::unit())
    }

    pub fn leray_project_on(&self, bx: &BoxSpec) -> Self {
        let mut out = self.clone();
        let half = self.half;
        par::for_each_indexed_mut(&mut out.coeffs, |i, c| {
            let k = wave_of(half, i);
            if k == [0, 0, 0] {
                return;
            }
            let q = bx.wavevector(k);
            *c = leray_mode(&q, c);
        });
        out
    }

    // ---- norms ----

    /// `sqrt(sum_k |k|^(2m) |coeff(k)|^2)` with `|0|^0 = 1`.
    pub fn seminorm(&self, m: u32) -> f64 {
        self.modes()
            .map(|(k, c)| {
                let w = if m == 0 {
                    1.0
                } else {
                    (k.norm_sqr() as f64).powi(m as i32)
                };
                w * linalg::norm_sqr(c)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Spectral L2 norm (unit-volume normalization).
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(linalg::norm_sqr).sum::<f64>().sqrt()
    }

    /// `sqrt(sum_k (1 + |2 pi k./T|^2)^s |coeff(k)|^2)`.
    pub fn sobolev_norm(&self, s: f64, bx: &BoxSpec) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let q = bx.wavevector(self.wave(i));
                (1.0 + linalg::rdot(&q, &q)).powf(s) * linalg::norm_sqr(c)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest `|coeff(-k) - conj(coeff(k))|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = WaveIndex(self.wave(i));
            let m = self.get(-k);
            worst = worst.max(linalg::norm(&linalg::sub(&m, &linalg::conj3(c))));
        }
        worst
    }

    /// Overwrite with the Hermitian-symmetric part, making the field exactly real.
    pub fn symmetrize_real(&mut self) {
        let snapshot = self.coeffs.clone();
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            let k = wave_of(self.half, i);
            let j = index_in(self.half, [-k[0], -k[1], -k[2]]).unwrap();
            let m = linalg::conj3(&snapshot[j]);
            *c = linalg::scale_re(0.5, &linalg::add(c, &m));
        }
        self.reality = true;
    }

    // ---- collocation ----

    /// Values on a uniform grid of size `dims` (each at least `2 half + 1`).
    pub fn to_grid(&self, dims: [usize; 3]) -> [Vec<C64>; 3] {
        assert!(
            (0..3).all(|a| dims[a] > 2 * self.half[a]),
            "grid too small for truncation"
        );
        let plan = Fft3::cached(dims);
        let len = plan.len();
        let mut grids = [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]];
        for (i, c) in self.coeffs.iter().enumerate() {
            let k = self.wave(i);
            let g = grid_index(dims, k);
            for comp in 0..3 {
                grids[comp][g] = c[comp];
            }
        }
        for g in grids.iter_mut() {
            plan.inverse(g);
        }
        grids
    }

    /// Fourier coefficients of grid values, truncated to `half`.
    pub fn from_grid(mut grids: [Vec<C64>; 3], dims: [usize; 3], half: [usize; 3]) -> Self {
        let plan = Fft3::cached(dims);
        let inv = 1.0 / plan.len() as f64;
        for g in grids.iter_mut() {
            plan.forward(g);
        }
        let mut out = Self::zeros_aniso(half);
        par::for_each_indexed_mut(&mut out.coeffs, |i, c| {
            let k = wave_of(half, i);
            let g = grid_index(dims, k);
            *c = [grids[0][g] * inv, grids[1][g] * inv, grids[2][g] * inv];
        });
        out
    }

    /// Grid size for exact (alias-free) quadratic products at this truncation.
    pub fn product_grid(&self) -> [usize; 3] {
        self.half.map(|h| smooth_size(3 * h + 1))
    }

    // ---- products ----

    /// Fourier coefficients of the pointwise cross product, truncated back to
    /// this field's order. Uses direct convolution when either factor is
    /// sparse, collocation on a padded grid otherwise.
    pub fn wedge(&self, other: &Self) -> Self {
        self.check_same_shape(other);
        if self.nnz().min(other.nnz()) <= SPARSE_LIMIT {
            self.wedge_direct(other)
        } else {
            self.wedge_collocation(other)
        }
    }

    /// Convolution `sum_{p+q=k} a(p) ^ b(q)`, iterating over the sparser factor.
    pub fn wedge_direct(&self, other: &Self) -> Self {
        self.check_same_shape(other);
        let a_sparse = self.nnz() <= other.nnz();
        let (sparse, dense) = if a_sparse {
            (self, other)
        } else {
            (other, self)
        };
        let support: Vec<([i64; 3], CVec3)> = sparse
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| linalg::norm_sqr(c) != 0.0)
            .map(|(i, c)| (sparse.wave(i), *c))
            .collect();
        let half = self.half;
        let mut out = Self::zeros_aniso(half);
        par::for_each_indexed_mut(&mut out.coeffs, |i, acc| {
            let k = wave_of(half, i);
            let mut sum = ZERO3;
            for (p, cp) in &support {
                let q = [k[0] - p[0], k[1] - p[1], k[2] - p[2]];
                if let Some(j) = index_in(half, q) {
                    let cq = &dense.coeffs[j];
                    let term = if a_sparse {
                        linalg::cross(cp, cq)
                    } else {
                        linalg::cross(cq, cp)
                    };
                    sum = linalg::add(&sum, &term);
                }
            }
            *acc = sum;
        });
        out.reality = self.reality && other.reality;
        out
    }

    /// Pointwise product on a zero-padded grid of at least `3N + 1` points.
    pub fn wedge_collocation(&self, other: &Self) -> Self {
        self.check_same_shape(other);
        let dims = self.product_grid();
        let a = self.to_grid(dims);
        let b = other.to_grid(dims);
        let len = a[0].len();
        let mut prod = [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]];
        {
            let [p0, p1, p2] = &mut prod;
            for j in 0..len {
                let v = linalg::cross(&[a[0][j], a[1][j], a[2][j]], &[b[0][j], b[1][j], b[2][j]]);
                p0[j] = v[0];
                p1[j] = v[1];
                p2[j] = v[2];
            }
        }
        let mut out = Self::from_grid(prod, dims, self.half);
        out.reality = self.reality && other.reality;
        out
    }
}

/// `c - q (q . c) / |q|^2`.
#[inline]
pub(crate) fn leray_mode(q: &[f64; 3], c: &CVec3) -> CVec3 {
    let q2 = linalg::rdot(q, q);
    if q2 == 0.0 {
        return *c;
    }
    let qc = linalg::real3(*q);
    let proj = linalg::dot(&qc, c) / q2;
    linalg::sub(c, &linalg::scale(proj, &qc))
}

#[inline]
pub(crate) fn wave_of(half: [usize; 3], idx: usize) -> [i64; 3] {
    let d1 = 2 * half[1] + 1;
    let d2 = 2 * half[2] + 1;
    let i2 = idx % d2;
    let i1 = (idx / d2) % d1;
    let i0 = idx / (d1 * d2);
    [
        i0 as i64 - half[0] as i64,
        i1 as i64 - half[1] as i64,
        i2 as i64 - half[2] as i64,
    ]
}

#[inline]
pub(crate) fn index_in(half: [usize; 3], k: [i64; 3]) -> Option<usize> {
    let h = half.map(|x| x as i64);
    if k[0].abs() > h[0] || k[1].abs() > h[1] || k[2].abs() > h[2] {
        return None;
    }
    let d1 = (2 * half[1] + 1) as i64;
    let d2 = (2 * half[2] + 1) as i64;
    Some((((k[0] + h[0]) * d1 + (k[1] + h[1])) * d2 + (k[2] + h[2])) as usize)
}

#[inline]
pub(crate) fn grid_index(dims: [usize; 3], k: [i64; 3]) -> usize {
    let w = |a: usize| k[a].rem_euclid(dims[a] as i64) as usize;
    (w(0) * dims[1] + w(1)) * dims[2] + w(2)
}
