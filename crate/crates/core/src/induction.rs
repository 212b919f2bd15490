//! Linear induction equation in the Bloch frame,
//! `dB/dt = eps^-3 curl_kappa(U ^ B) + eps^-4 Laplace_kappa B`, in rescaled time.
//!
//! Time stepping is second-order exponential time differencing (ETD2RK): the
//! diffusion symbol is integrated exactly and the induction term explicitly.

use std::io::Write;

use serde::Serialize;

use crate::continuation::BlochMode;
use crate::error::{Error, Result};
use crate::field::{SpectralVectorField, VelocityProfile, TWO_PI};
use crate::linalg::{self, c, CVec3, C64, ZERO3};
use crate::par;

/// Default safety factor of the advective stability bound.
pub const DEFAULT_SAFETY: f64 = 0.5;

/// `phi_1(z) = (e^z - 1) / z` and `phi_2(z) = (e^z - 1 - z) / z^2`, both exact at 0.
pub fn phi12(z: f64) -> (f64, f64) {
    if z.abs() < 1e-3 {
        let z2 = z * z;
        (
            1.0 + z / 2.0 + z2 / 6.0 + z2 * z / 24.0 + z2 * z2 / 120.0,
            0.5 + z / 6.0 + z2 / 24.0 + z2 * z / 120.0 + z2 * z2 / 720.0,
        )
    } else {
        let em1 = z.exp_m1();
        (em1 / z, (em1 - z) / (z * z))
    }
}

/// Effective explicit step `(1 - e^{-D h}) / D` of a mode damped at rate `D`.
pub fn effective_step(damping: f64, h: f64) -> f64 {
    if damping * h < 1e-12 {
        h
    } else {
        -(-damping * h).exp_m1() / damping
    }
}

/// Largest `h` with `max_k effective_step(D_k, h) R_k <= safety`, given
/// `(D_k, R_k)` pairs; infinite when the bound never binds.
pub fn stable_dt(rates: &[(f64, f64)], safety: f64) -> f64 {
    let worst = |h: f64| {
        rates
            .iter()
            .map(|&(d, r)| effective_step(d, h) * r)
            .fold(0.0, f64::max)
    };
    let sat = rates
        .iter()
        .map(|&(d, r)| {
            if d > 0.0 {
                r / d
            } else if r > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    if sat <= safety {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while worst(hi) <= safety {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if worst(mid) <= safety {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Bloch-frame state of the linear induction equation.
#[derive(Clone, Debug, PartialEq)]
pub struct DnsState {
    pub b: SpectralVectorField,
    pub t: f64,
    pub epsilon: f64,
    pub xi: [f64; 3],
}

impl DnsState {
    pub fn new(b: SpectralVectorField, epsilon: f64, xi: [f64; 3]) -> Self {
        Self {
            b,
            t: 0.0,
            epsilon,
            xi,
        }
    }

    pub fn kappa(&self) -> [f64; 3] {
        let e2 = self.epsilon * self.epsilon;
        self.xi.map(|x| e2 * x)
    }

    /// Envelope of a Bloch mode, resampled to order `n`.
    pub fn from_mode(mode: &BlochMode, n: usize) -> Self {
        let env = mode.envelope().resampled([n, n, n]);
        Self::new(env, mode.epsilon, mode.xi)
    }

    /// Largest `|div_kappa B(k)|` relative to `||B||`.
    pub fn divergence_defect(&self) -> f64 {
        let n = self.b.l2_norm();
        if n == 0.0 {
            0.0
        } else {
            self.b.divergence_defect(self.kappa()) / n
        }
    }
}

/// ETD2RK integrator for a fixed `(U, epsilon, xi, dt)`.
#[derive(Clone, Debug)]
pub struct InductionStepper {
    u: VelocityProfile,
    epsilon: f64,
    xi: [f64; 3],
    kappa: [f64; 3],
    dt: f64,
    /// Per mode: `(e^{L h}, h phi_1(L h), h phi_2(L h))`.
    coeffs: Vec<(f64, f64, f64)>,
}

impl InductionStepper {
    /// Build a stepper; fails with `StabilityViolation` when `dt` exceeds the
    /// advective bound at `safety`.
    pub fn new(
        u: &VelocityProfile,
        epsilon: f64,
        xi: [f64; 3],
        dt: f64,
        safety: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidArgument(
                "epsilon and dt must be positive".into(),
            ));
        }
        let bound = max_stable_dt(u, epsilon, xi, safety);
        if dt > bound {
            return Err(Error::StabilityViolation { dt, bound });
        }
        let n = u.order();
        let e2 = epsilon * epsilon;
        let kappa = xi.map(|x| e2 * x);
        let inv4 = 1.0 / (e2 * e2);
        let proto = SpectralVectorField::zeros(n);
        let coeffs = (0..proto.len())
            .map(|i| {
                let q = bloch_wavevector(proto.wave(i), kappa);
                let z = -inv4 * linalg::rdot(&q, &q) * dt;
                let (p1, p2) = phi12(z);
                (z.exp(), dt * p1, dt * p2)
            })
            .collect();
        Ok(Self {
            u: u.clone(),
            epsilon,
            xi,
            kappa,
            dt,
            coeffs,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `eps^-3 curl_kappa(U ^ B)`.
    pub fn induction(&self, b: &SpectralVectorField) -> SpectralVectorField {
        let e3 = self.epsilon.powi(3);
        let mut out = self.u.field().wedge(b).curl_bloch(self.kappa);
        out.scale_mut(c(1.0 / e3, 0.0));
        out
    }

    pub fn step(&self, state: &DnsState) -> Result<DnsState> {
        if state.b.half() != self.u.field().half() {
            return Err(Error::InvalidArgument(
                "state and flow truncations differ".into(),
            ));
        }
        let n0 = self.induction(&state.b);
        let mut a = state.b.clone();
        par::for_each_indexed_mut(a.coeffs_mut(), |i, v| {
            let (e, p1, _) = self.coeffs[i];
            *v = linalg::add(
                &linalg::scale_re(e, v),
                &linalg::scale_re(p1, &n0.coeffs()[i]),
            );
        });
        let na = self.induction(&a);
        let mut next = a;
        par::for_each_indexed_mut(next.coeffs_mut(), |i, v| {
            let (_, _, p2) = self.coeffs[i];
            let d = linalg::sub(&na.coeffs()[i], &n0.coeffs()[i]);
            *v = linalg::add(v, &linalg::scale_re(p2, &d));
        });
        next.set_reality(false);
        let t = state.t + self.dt;
        if next
            .coeffs()
            .iter()
            .any(|v| v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
        {
            return Err(Error::NanDetected { t });
        }
        Ok(DnsState {
            b: next,
            t,
            epsilon: self.epsilon,
            xi: self.xi,
        })
    }
}

fn bloch_wavevector(k: [i64; 3], kappa: [f64; 3]) -> [f64; 3] {
    [
        TWO_PI * k[0] as f64 + kappa[0],
        TWO_PI * k[1] as f64 + kappa[1],
        TWO_PI * k[2] as f64 + kappa[2],
    ]
}

/// Largest `dt` with `max_k h_eff(k) R_k <= safety`, where `D_k = eps^-4 |q_k|^2`,
/// `R_k = eps^-3 sup|U| |q_k|` and `q_k = 2 pi k + kappa`.
pub fn max_stable_dt(u: &VelocityProfile, epsilon: f64, xi: [f64; 3], safety: f64) -> f64 {
    let e2 = epsilon * epsilon;
    let kappa = xi.map(|x| e2 * x);
    let sup = u.sup_bound();
    let proto = SpectralVectorField::zeros(u.order());
    let rates: Vec<(f64, f64)> = (0..proto.len())
        .map(|i| {
            let q = linalg::rnorm(&bloch_wavevector(proto.wave(i), kappa));
            (q * q / (e2 * e2), sup * q / (e2 * epsilon))
        })
        .collect();
    stable_dt(&rates, safety)
}

/// One row of a DNS time series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub l2_norm: f64,
    pub log_norm: f64,
    pub div_defect: f64,
}

/// Integrate to `t_end`, recording every `record_every` steps (and at the end).
pub fn integrate(
    stepper: &InductionStepper,
    mut state: DnsState,
    t_end: f64,
    record_every: usize,
) -> Result<(DnsState, Vec<SeriesRow>)> {
    let record = |s: &DnsState| {
        let n = s.b.l2_norm();
        SeriesRow {
            t: s.t,
            l2_norm: n,
            log_norm: n.ln(),
            div_defect: s.divergence_defect(),
        }
    };
    let every = record_every.max(1);
    let steps = ((t_end - state.t) / stepper.dt()).round().max(0.0) as usize;
    let mut rows = vec![record(&state)];
    for i in 1..=steps {
        state = stepper.step(&state)?;
        if i % every == 0 || i == steps {
            rows.push(record(&state));
        }
    }
    Ok((state, rows))
}

pub fn write_series_csv<W: Write>(mut w: W, rows: &[SeriesRow]) -> std::io::Result<()> {
    writeln!(w, "t,l2_norm,log_norm,div_defect")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.l2_norm, r.log_norm, r.div_defect
        )?;
    }
    Ok(())
}

/// Least-squares growth rate of `log(norm)` over a trailing window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub rate: f64,
    pub fit_window: (f64, f64),
    /// RMS deviation of `log(norm)` from the fitted line.
    pub fit_residual: f64,
    pub series: Vec<(f64, f64)>,
}

impl GrowthReport {
    /// Rate in the original time `t = t' / eps^3`.
    pub fn rate_rawtime(&self, epsilon: f64) -> f64 {
        self.rate * epsilon.powi(3)
    }
}

/// Fit over the last half of the samples.
pub fn growth_rate(series: &[(f64, f64)]) -> Result<GrowthReport> {
    growth_rate_window(series, 0.5)
}

/// Fit over the trailing `fraction` of the samples.
pub fn growth_rate_window(series: &[(f64, f64)], fraction: f64) -> Result<GrowthReport> {
    if series.len() < 10 {
        return Err(Error::DegenerateInput(format!(
            "{} samples, need at least 10",
            series.len()
        )));
    }
    if let Some(&(t, n)) = series.iter().find(|(_, n)| !(*n > 0.0)) {
        return Err(Error::DegenerateInput(format!(
            "non-positive norm {n} at t = {t}"
        )));
    }
    let logs: Vec<(f64, f64)> = series.iter().map(|&(t, n)| (t, n.ln())).collect();
    let start = ((1.0 - fraction.clamp(0.0, 1.0)) * series.len() as f64).floor() as usize;
    let start = start.min(series.len() - 2);
    let win = &logs[start..];
    let m = win.len() as f64;
    let tm = win.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = win.iter().map(|p| p.1).sum::<f64>() / m;
    let stt = win.iter().map(|p| (p.0 - tm).powi(2)).sum::<f64>();
    let sty = win.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum::<f64>();
    let rate = sty / stt;
    let fit_residual = (win
        .iter()
        .map(|p| (p.1 - ym - rate * (p.0 - tm)).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(GrowthReport {
        rate,
        fit_window: (win[0].0, win[win.len() - 1].0),
        fit_residual,
        series: logs,
    })
}

/// Scaled residual of the Bloch eigen-equation for a packaged mode:
/// `sqrt(|r0|^2 + ||r~||^2) / ||bbar + eps b~||` with
/// `r0 = i xi ^ mean(U ^ b~) - (|xi|^2 + lambda) bbar` and
/// `r~ = curl_kappa fluct(U ^ (bbar + eps b~)) + Laplace_kappa b~ - eps^4 lambda b~`.
/// Both pieces are the exact equation multiplied by a power of `eps`, so the
/// residual stays meaningful at `eps = 0`.
pub fn validate_mode(mode: &BlochMode, u: &VelocityProfile) -> Result<f64> {
    let n = u.order();
    if mode.btilde.order() > n {
        return Err(Error::InvalidArgument(format!(
            "mode truncation {} exceeds flow truncation {n}",
            mode.btilde.order()
        )));
    }
    let bt = mode.btilde.resampled([n, n, n]);
    let (eps, lam, xi) = (mode.epsilon, mode.lambda, mode.xi);
    let kappa = mode.kappa();
    let mut env = bt.scaled(c(eps, 0.0));
    env.set_mean(mode.bbar);
    let norm = env.l2_norm();
    if norm == 0.0 {
        return Err(Error::DegenerateInput("zero mode".into()));
    }
    let mean_w = u.field().wedge(&bt).mean_part();
    let x2 = linalg::rdot(&xi, &xi);
    let r0 = linalg::sub(
        &linalg::cross(&linalg::scale(linalg::I, &linalg::real3(xi)), &mean_w),
        &linalg::scale(lam + x2, &mode.bbar),
    );
    let mut w = u.field().wedge(&env);
    w.set_mean(ZERO3);
    let mut r = w.curl_bloch(kappa);
    let e4lam = lam * eps.powi(4);
    par::for_each_indexed_mut(r.coeffs_mut(), |i, v| {
        let k = crate::field::wave_of(bt.half(), i);
        let q = bloch_wavevector(k, kappa);
        let d = c(-linalg::rdot(&q, &q), 0.0) - e4lam;
        *v = linalg::add(v, &linalg::scale(d, &bt.coeffs()[i]));
    });
    r.set_mean(ZERO3);
    let total = (linalg::norm_sqr(&r0) + r.l2_norm().powi(2)).sqrt();
    Ok(total / norm)
}

/// Mean-free random solenoidal Bloch field with `|B(k)| ~ (1 + |k|)^-decay`.
pub fn random_bloch_field(n: usize, kappa: [f64; 3], decay: f64, seed: u64) -> SpectralVectorField {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralVectorField::zeros(n);
    for i in 0..f.len() {
        let k = f.wave(i);
        let q = bloch_wavevector(k, kappa);
        let kn = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        let amp = (1.0 + kn).powf(-decay);
        let mut v: CVec3 = ZERO3;
        for z in v.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z = C64::new(re, im) * amp;
        }
        f.coeffs_mut()[i] = crate::field::leray_mode(&q, &v);
    }
    f
}
