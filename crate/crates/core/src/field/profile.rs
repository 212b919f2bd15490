use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{leray_mode, SpectralVectorField, WaveIndex};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CVec3, C64, ZERO3};

/// Default relative tolerance for divergence and reality checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// A real, mean-free, solenoidal velocity field on the unit torus.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityProfile {
    field: SpectralVectorField,
    divergence_tolerance: f64,
}

impl VelocityProfile {
    /// Validate an existing field. Hermitian symmetry is enforced exactly on
    /// success and the mean is set to exactly zero.
    pub fn from_field(mut field: SpectralVectorField, tol: f64) -> Result<Self> {
        let scale = field.coeffs().iter().map(linalg::norm).fold(0.0, f64::max);
        let mean = linalg::norm(&field.mean_part());
        if mean > tol * scale {
            return Err(Error::NonzeroMean(mean));
        }
        for (i, cf) in field.coeffs().iter().enumerate() {
            let k = WaveIndex(field.wave(i));
            let mirror = field.get(-k);
            let defect = linalg::norm(&linalg::sub(&mirror, &linalg::conj3(cf)));
            if defect > tol * scale {
                return Err(Error::NotReal { index: k, defect });
            }
        }
        for (i, cf) in field.coeffs().iter().enumerate() {
            let k = WaveIndex(field.wave(i));
            if k.is_zero() {
                continue;
            }
            let kv = linalg::real3(k.as_f64());
            let kn = (k.norm_sqr() as f64).sqrt();
            let cn = linalg::norm(cf);
            let defect = linalg::dot(&kv, cf).norm();
            if defect > tol * kn * cn {
                return Err(Error::NotDivergenceFree {
                    index: k,
                    defect: defect / (kn * cn),
                });
            }
        }
        field.set_mean(ZERO3);
        field.symmetrize_real();
        Ok(Self {
            field,
            divergence_tolerance: tol,
        })
    }

    pub fn field(&self) -> &SpectralVectorField {
        &self.field
    }

    pub fn order(&self) -> usize {
        self.field.order()
    }

    pub fn divergence_tolerance(&self) -> f64 {
        self.divergence_tolerance
    }

    /// `sum_k |U(k)|`, an upper bound for `max |U|`.
    pub fn sup_bound(&self) -> f64 {
        self.field.coeffs().iter().map(linalg::norm).sum()
    }

    /// `c U` for real `c`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            field: self.field.scaled(c(s, 0.0)).with_reality(true),
            divergence_tolerance: self.divergence_tolerance,
        }
    }

    /// Same flow with cubic truncation `n` (modes beyond `n` are dropped).
    pub fn resampled(&self, n: usize) -> Self {
        Self {
            field: self.field.resampled([n, n, n]),
            divergence_tolerance: self.divergence_tolerance,
        }
    }

    /// Nonzero modes as `(k, U(k))`.
    pub fn support(&self) -> Vec<(WaveIndex, CVec3)> {
        self.field
            .modes()
            .filter(|(_, v)| linalg::norm_sqr(v) != 0.0)
            .map(|(k, v)| (k, *v))
            .collect()
    }
}

/// Build a profile from explicit coefficients on the cube `[-n, n]^3`.
pub fn make_profile(
    coeffs: &BTreeMap<WaveIndex, CVec3>,
    n: usize,
    tol: f64,
) -> Result<VelocityProfile> {
    let mut field = SpectralVectorField::zeros(n);
    for (k, v) in coeffs {
        field.set(*k, *v)?;
    }
    VelocityProfile::from_field(field, tol)
}

/// `U = (A sin z + C cos y, B sin x + A cos z, C sin y + B cos x)` with
/// `x, y, z = 2 pi theta_{1,2,3}`.
pub fn abc_flow(a: f64, b: f64, cc: f64, n: usize) -> VelocityProfile {
    assert!(n >= 1, "ABC flow needs truncation order >= 1");
    let h = 0.5;
    let mut field = SpectralVectorField::zeros(n);
    let modes: [(WaveIndex, CVec3); 6] = [
        (
            WaveIndex::new(0, 0, 1),
            [c(0.0, -h * a), c(h * a, 0.0), c(0.0, 0.0)],
        ),
        (
            WaveIndex::new(0, 0, -1),
            [c(0.0, h * a), c(h * a, 0.0), c(0.0, 0.0)],
        ),
        (
            WaveIndex::new(0, 1, 0),
            [c(h * cc, 0.0), c(0.0, 0.0), c(0.0, -h * cc)],
        ),
        (
            WaveIndex::new(0, -1, 0),
            [c(h * cc, 0.0), c(0.0, 0.0), c(0.0, h * cc)],
        ),
        (
            WaveIndex::new(1, 0, 0),
            [c(0.0, 0.0), c(0.0, -h * b), c(h * b, 0.0)],
        ),
        (
            WaveIndex::new(-1, 0, 0),
            [c(0.0, 0.0), c(0.0, h * b), c(h * b, 0.0)],
        ),
    ];
    for (k, v) in modes {
        field.set(k, v).expect("n >= 1");
    }
    VelocityProfile {
        field: field.with_reality(true),
        divergence_tolerance: DEFAULT_TOLERANCE,
    }
}

/// Seeded random profile with `|U(k)| ~ |k|^-decay`, solenoidal and real.
pub fn random_profile(n: usize, decay: f64, seed: u64) -> VelocityProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = SpectralVectorField::zeros(n);
    let len = field.len();
    // draw for the lexicographically positive half, mirror the rest
    for i in (len / 2 + 1)..len {
        let k = WaveIndex(field.wave(i));
        let kn = (k.norm_sqr() as f64).sqrt();
        let amp = kn.powf(-decay);
        let mut v: CVec3 = ZERO3;
        for z in v.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z = C64::new(re, im) * amp;
        }
        let v = leray_mode(&k.as_f64(), &v);
        field.set(k, v).unwrap();
        field.set(-k, linalg::conj3(&v)).unwrap();
    }
    VelocityProfile {
        field: field.with_reality(true),
        divergence_tolerance: DEFAULT_TOLERANCE,
    }
}
