//! Three-dimensional complex FFTs built from rustfft line transforms.
//!
//! Arrays are stored lexicographically, axis 0 slowest. Transforms are
//! unnormalized in both directions; callers divide by `len()` after a
//! forward transform when they want Fourier coefficients.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::par;

pub struct Fft3 {
    dims: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "empty FFT grid");
        let mut planner = FftPlanner::new();
        let forward = dims.map(|d| planner.plan_fft_forward(d));
        let inverse = dims.map(|d| planner.plan_fft_inverse(d));
        Self {
            dims,
            forward,
            inverse,
        }
    }

    /// Shared plan for `dims`; plans are cached process-wide.
    pub fn cached(dims: [usize; 3]) -> Arc<Fft3> {
        static CACHE: OnceLock<Mutex<HashMap<[usize; 3], Arc<Fft3>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("fft plan cache poisoned");
        map.entry(dims)
            .or_insert_with(|| Arc::new(Fft3::new(dims)))
            .clone()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-place `X_k = sum_j x_j exp(-2 pi i k j / n)` along all three axes.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, Direction::Forward);
    }

    /// In-place `x_j = sum_k X_k exp(+2 pi i k j / n)` along all three axes.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, Direction::Inverse);
    }

    fn plan(&self, axis: usize, dir: Direction) -> &Arc<dyn Fft<f64>> {
        match dir {
            Direction::Forward => &self.forward[axis],
            Direction::Inverse => &self.inverse[axis],
        }
    }

    fn transform(&self, data: &mut [Complex64], dir: Direction) {
        assert_eq!(data.len(), self.len(), "grid size mismatch");
        let [n0, n1, n2] = self.dims;
        let slab = n1 * n2;

        // axis 2: contiguous lines, a slab holds n1 of them
        if n2 > 1 {
            let plan = self.plan(2, dir).clone();
            par::for_each_chunk_mut(data, slab, |_, s| plan.process(s));
        }

        // axis 1: transpose each slab so the lines become contiguous
        if n1 > 1 {
            let plan = self.plan(1, dir).clone();
            par::for_each_chunk_mut(data, slab, |_, s| {
                let mut t = vec![Complex64::new(0.0, 0.0); slab];
                for i1 in 0..n1 {
                    for i2 in 0..n2 {
                        t[i2 * n1 + i1] = s[i1 * n2 + i2];
                    }
                }
                plan.process(&mut t);
                for i1 in 0..n1 {
                    for i2 in 0..n2 {
                        s[i1 * n2 + i2] = t[i2 * n1 + i1];
                    }
                }
            });
        }

        // axis 0: gather blocks of strided lines, transform, scatter back
        if n0 > 1 {
            let plan = self.plan(0, dir).clone();
            let block = 64.min(slab).max(1);
            let nblocks = slab.div_ceil(block);
            let src: &[Complex64] = data;
            let blocks = par::map_indexed(nblocks, |b| {
                let start = b * block;
                let end = (start + block).min(slab);
                let mut lines = vec![Complex64::new(0.0, 0.0); (end - start) * n0];
                for (l, col) in (start..end).enumerate() {
                    for i0 in 0..n0 {
                        lines[l * n0 + i0] = src[i0 * slab + col];
                    }
                }
                plan.process(&mut lines);
                lines
            });
            for (b, lines) in blocks.into_iter().enumerate() {
                let start = b * block;
                for (l, line) in lines.chunks(n0).enumerate() {
                    let col = start + l;
                    for (i0, v) in line.iter().enumerate() {
                        data[i0 * slab + col] = *v;
                    }
                }
            }
        }
    }
}

/// Smallest integer `>= n` whose only prime factors are 2, 3 and 5.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}
