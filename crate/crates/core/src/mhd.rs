//! Nonlinear perturbation MHD about a steady flow `(U, 0)` on an integer box,
//! in rescaled time:
//!
//! `du/dt = eps^-3 (P(u ^ Omega + U ^ omega) + Laplace u) + eps^-3 P(j ^ b + u ^ omega)`
//! `db/dt = eps^-3 curl(U ^ b) + eps^-4 Laplace b + eps^-3 curl(u ^ b)`
//!
//! with `Omega = curl U`, `omega = curl u`, `j = curl b`. The advective terms are
//! written in rotational form; the gradient parts they drop are removed by the
//! Leray projection `P` anyway.

use std::io::Write;

use serde::Serialize;

use crate::continuation::BlochMode;
use crate::error::{Error, Result};
use crate::field::{BoxSpec, SpectralVectorField, VelocityProfile};
use crate::induction::{phi12, stable_dt};
use crate::linalg::{self, c, CVec3, C64, ZERO, ZERO3};
use crate::par;

/// Sobolev index used for diagnostics unless overridden.
pub const DEFAULT_S: f64 = 3.0;
/// Safety factor for [`MhdSystem::max_stable_dt`]; the bound counts every
/// coupling at full strength, so values above 1 remain stable.
pub const MHD_SAFETY: f64 = 2.0;
/// Threshold as a fraction of `||U||_{H^s}` on the box.
pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.1;

/// `eta = 1/2 - 5/(4 s)`.
pub fn eta(s: f64) -> f64 {
    0.5 - 5.0 / (4.0 * s)
}

/// Half-widths `N_cell T_i (+1 where the Bloch shift is nonzero)`, enough to hold
/// both conjugate Bloch sectors of a cell-order `n_cell` mode.
pub fn box_half(bx: &BoxSpec, n_cell: usize, xi: &[f64; 3]) -> [usize; 3] {
    let t = bx.periods();
    [0, 1, 2].map(|i| n_cell * t[i] as usize + usize::from(xi[i] != 0.0))
}

/// Unit-cell field placed on the box: cell mode `k` goes to box mode `T k`.
pub fn tile(
    field: &SpectralVectorField,
    bx: &BoxSpec,
    half: [usize; 3],
) -> Result<SpectralVectorField> {
    let t = bx.periods().map(|x| x as i64);
    let mut out = SpectralVectorField::zeros_aniso(half);
    for (k, v) in field.modes() {
        if linalg::norm_sqr(v) == 0.0 {
            continue;
        }
        let m = [k.0[0] * t[0], k.0[1] * t[1], k.0[2] * t[2]];
        let j = out.index_of(m).ok_or(Error::BoxMismatch {
            cell: field.half(),
            box_periods: bx.periods(),
        })?;
        out.coeffs_mut()[j] = *v;
    }
    Ok(out.with_reality(field.reality_flag()))
}

/// Complex Bloch mode `e^{i kappa . theta}(bbar + eps b~)` as a box field.
pub fn mode_on_box(
    mode: &BlochMode,
    bx: &BoxSpec,
    half: [usize; 3],
) -> Result<SpectralVectorField> {
    let t = bx.periods();
    let kappa = mode.kappa();
    let mismatch = || Error::BoxMismatch {
        cell: mode.btilde.half(),
        box_periods: t,
    };
    let mut shift = [0i64; 3];
    for i in 0..3 {
        let s = kappa[i] * t[i] as f64 / crate::field::TWO_PI;
        let r = s.round();
        if (s - r).abs() > 1e-9 * r.abs().max(1.0) {
            return Err(mismatch());
        }
        shift[i] = r as i64;
    }
    let env = mode.envelope();
    let tt = t.map(|x| x as i64);
    let mut out = SpectralVectorField::zeros_aniso(half);
    for (k, v) in env.modes() {
        if linalg::norm_sqr(v) == 0.0 {
            continue;
        }
        let m = [0, 1, 2].map(|i| k.0[i] * tt[i] + shift[i]);
        let j = out.index_of(m).ok_or_else(mismatch)?;
        out.coeffs_mut()[j] = *v;
    }
    Ok(out)
}

/// Real part of a box field: `(c(m) + conj(c(-m))) / 2`.
pub fn real_part(f: &SpectralVectorField) -> SpectralVectorField {
    let mut r = f.clone();
    r.symmetrize_real();
    r
}

/// Perturbation state `(u, b)` on a box.
#[derive(Clone, Debug, PartialEq)]
pub struct MhdState {
    pub u: SpectralVectorField,
    pub b: SpectralVectorField,
    pub t: f64,
}

impl MhdState {
    pub fn zeros(half: [usize; 3]) -> Self {
        Self {
            u: SpectralVectorField::zeros_aniso(half).with_reality(true),
            b: SpectralVectorField::zeros_aniso(half).with_reality(true),
            t: 0.0,
        }
    }

    pub fn new(u: SpectralVectorField, b: SpectralVectorField) -> Self {
        Self { u, b, t: 0.0 }
    }

    pub fn l2_norm(&self) -> f64 {
        self.u.l2_norm().hypot(self.b.l2_norm())
    }

    pub fn sobolev_norm(&self, s: f64, bx: &BoxSpec) -> f64 {
        self.u.sobolev_norm(s, bx).hypot(self.b.sobolev_norm(s, bx))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            u: self.u.scaled(c(a, 0.0)).with_reality(self.u.reality_flag()),
            b: self.b.scaled(c(a, 0.0)).with_reality(self.b.reality_flag()),
            t: self.t,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self {
            u: self.u.sub(&o.u),
            b: self.b.sub(&o.b),
            t: self.t,
        }
    }

    fn is_finite(&self) -> bool {
        let ok = |f: &SpectralVectorField| {
            f.coeffs()
                .iter()
                .all(|v| v.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        };
        ok(&self.u) && ok(&self.b)
    }
}

/// Which explicit terms to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Terms {
    linear: bool,
    nonlinear: bool,
}

/// Operators of the perturbation system on a fixed box and truncation.
#[derive(Clone, Debug)]
pub struct MhdSystem {
    bx: BoxSpec,
    half: [usize; 3],
    dims: [usize; 3],
    epsilon: f64,
    base: SpectralVectorField,
    base_grid: [Vec<C64>; 3],
    vort_grid: [Vec<C64>; 3],
    base_sup: f64,
    vort_sup: f64,
    /// `|q|^2` per mode.
    q2: Vec<f64>,
}

impl MhdSystem {
    /// `u_cell` is tiled onto the box; pass a zero profile for the pure
    /// nonlinear operator.
    pub fn new(
        u_cell: &VelocityProfile,
        bx: BoxSpec,
        half: [usize; 3],
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        let base = tile(u_cell.field(), &bx, half)?;
        let vort = base.curl_on(&bx, [0.0; 3]);
        let dims = base.product_grid();
        let base_grid = base.to_grid(dims);
        let vort_grid = vort.to_grid(dims);
        let sup = |f: &SpectralVectorField| f.coeffs().iter().map(linalg::norm).sum::<f64>();
        let q2 = (0..base.len())
            .map(|i| {
                let q = bx.wavevector(base.wave(i));
                linalg::rdot(&q, &q)
            })
            .collect();
        Ok(Self {
            base_sup: sup(&base),
            vort_sup: sup(&vort),
            bx,
            half,
            dims,
            epsilon,
            base,
            base_grid,
            vort_grid,
            q2,
        })
    }

    pub fn box_spec(&self) -> &BoxSpec {
        &self.bx
    }

    pub fn half(&self) -> [usize; 3] {
        self.half
    }

    pub fn grid(&self) -> [usize; 3] {
        self.dims
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Tiled base flow.
    pub fn base(&self) -> &SpectralVectorField {
        &self.base
    }

    /// `(eps^-3 Laplace u, eps^-4 Laplace b)`.
    fn diffusion(&self, st: &MhdState) -> (SpectralVectorField, SpectralVectorField) {
        let e3 = self.epsilon.powi(3);
        let e4 = e3 * self.epsilon;
        let lap = |f: &SpectralVectorField, nu: f64| {
            let mut out = f.clone();
            par::for_each_indexed_mut(out.coeffs_mut(), |i, v| {
                *v = linalg::scale_re(-nu * self.q2[i], v)
            });
            out
        };
        (lap(&st.u, 1.0 / e3), lap(&st.b, 1.0 / e4))
    }

    /// Explicit (non-diffusive) terms, evaluated on the padded grid.
    fn explicit(&self, st: &MhdState, terms: Terms) -> (SpectralVectorField, SpectralVectorField) {
        let dims = self.dims;
        let len = dims.iter().product::<usize>();
        let omega = st.u.curl_on(&self.bx, [0.0; 3]);
        let cur = st.b.curl_on(&self.bx, [0.0; 3]);
        let ((ug, wg), (bg, jg)) = par::join(
            || par::join(|| st.u.to_grid(dims), || omega.to_grid(dims)),
            || par::join(|| st.b.to_grid(dims), || cur.to_grid(dims)),
        );
        let at = |g: &[Vec<C64>; 3], j: usize| [g[0][j], g[1][j], g[2][j]];
        let mut mom = [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]];
        let mut ind = [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]];
        for j in 0..len {
            let (u, w, b, jj) = (at(&ug, j), at(&wg, j), at(&bg, j), at(&jg, j));
            let mut m = ZERO3;
            let mut n = ZERO3;
            if terms.linear {
                let (big_u, big_w) = (at(&self.base_grid, j), at(&self.vort_grid, j));
                m = linalg::add(&linalg::cross(&u, &big_w), &linalg::cross(&big_u, &w));
                n = linalg::cross(&big_u, &b);
            }
            if terms.nonlinear {
                m = linalg::add(
                    &m,
                    &linalg::add(&linalg::cross(&jj, &b), &linalg::cross(&u, &w)),
                );
                n = linalg::add(&n, &linalg::cross(&u, &b));
            }
            for a in 0..3 {
                mom[a][j] = m[a];
                ind[a][j] = n[a];
            }
        }
        let inv3 = c(self.epsilon.powi(-3), 0.0);
        let (mom, ind) = par::join(
            || SpectralVectorField::from_grid(mom, dims, self.half),
            || SpectralVectorField::from_grid(ind, dims, self.half),
        );
        let du = mom.leray_project_on(&self.bx).scaled(inv3);
        let db = ind.curl_on(&self.bx, [0.0; 3]).scaled(inv3);
        (du, db)
    }

    /// Linear part `G(u, b)` of the right-hand side.
    pub fn linear_rhs(&self, st: &MhdState) -> (SpectralVectorField, SpectralVectorField) {
        let (du, db) = self.explicit(
            st,
            Terms {
                linear: true,
                nonlinear: false,
            },
        );
        let (lu, lb) = self.diffusion(st);
        (du.add(&lu), db.add(&lb))
    }

    /// Quadratic part `Q((u, b), (u, b))`.
    pub fn nonlinear_q(&self, st: &MhdState) -> (SpectralVectorField, SpectralVectorField) {
        self.explicit(
            st,
            Terms {
                linear: false,
                nonlinear: true,
            },
        )
    }

    /// Full right-hand side `G + Q`, with all products formed in one grid pass.
    pub fn rhs(&self, st: &MhdState) -> (SpectralVectorField, SpectralVectorField) {
        let (du, db) = self.explicit(
            st,
            Terms {
                linear: true,
                nonlinear: true,
            },
        );
        let (lu, lb) = self.diffusion(st);
        (du.add(&lu), db.add(&lb))
    }

    /// Largest `dt` with `h_eff R <= safety` on every mode of both channels:
    /// `b`: `D = eps^-4 |q|^2`, `R = eps^-3 sup|U| |q|`;
    /// `u`: `D = eps^-3 |q|^2`, `R = eps^-3 (sup|U| |q| + sup|Omega|)`.
    pub fn max_stable_dt(&self, safety: f64) -> f64 {
        let e3 = self.epsilon.powi(3);
        let e4 = e3 * self.epsilon;
        let mut rates = Vec::with_capacity(2 * self.q2.len());
        for &q2 in &self.q2 {
            let q = q2.sqrt();
            rates.push((q2 / e4, self.base_sup * q / e3));
            rates.push((q2 / e3, (self.base_sup * q + self.vort_sup) / e3));
        }
        stable_dt(&rates, safety)
    }
}

/// ETD2RK integrator for [`MhdSystem`], with Leray projection after every step.
#[derive(Clone, Debug)]
pub struct MhdStepper {
    sys: MhdSystem,
    dt: f64,
    /// Per mode: `(e^{L h}, h phi_1, h phi_2)` for the `u` and `b` channels.
    cu: Vec<(f64, f64, f64)>,
    cb: Vec<(f64, f64, f64)>,
}

impl MhdStepper {
    pub fn new(sys: MhdSystem, dt: f64, safety: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        let bound = sys.max_stable_dt(safety);
        if dt > bound {
            return Err(Error::StabilityViolation { dt, bound });
        }
        let e3 = sys.epsilon.powi(3);
        let e4 = e3 * sys.epsilon;
        let coef = |nu: f64| -> Vec<(f64, f64, f64)> {
            sys.q2
                .iter()
                .map(|&q2| {
                    let z = -nu * q2 * dt;
                    let (p1, p2) = phi12(z);
                    (z.exp(), dt * p1, dt * p2)
                })
                .collect()
        };
        let (cu, cb) = (coef(1.0 / e3), coef(1.0 / e4));
        Ok(Self { sys, dt, cu, cb })
    }

    pub fn system(&self) -> &MhdSystem {
        &self.sys
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn explicit(&self, st: &MhdState) -> (SpectralVectorField, SpectralVectorField) {
        self.sys.explicit(
            st,
            Terms {
                linear: true,
                nonlinear: true,
            },
        )
    }

    pub fn step(&self, st: &MhdState) -> Result<MhdState> {
        let (nu0, nb0) = self.explicit(st);
        let stage = |f: &SpectralVectorField, n: &SpectralVectorField, co: &[(f64, f64, f64)]| {
            let mut out = f.clone();
            par::for_each_indexed_mut(out.coeffs_mut(), |i, v| {
                let (e, p1, _) = co[i];
                *v = linalg::add(
                    &linalg::scale_re(e, v),
                    &linalg::scale_re(p1, &n.coeffs()[i]),
                );
            });
            out
        };
        let a = MhdState {
            u: stage(&st.u, &nu0, &self.cu),
            b: stage(&st.b, &nb0, &self.cb),
            t: st.t + self.dt,
        };
        let (nua, nba) = self.explicit(&a);
        let correct = |f: &SpectralVectorField,
                       na: &SpectralVectorField,
                       n0: &SpectralVectorField,
                       co: &[(f64, f64, f64)]| {
            let mut out = f.clone();
            par::for_each_indexed_mut(out.coeffs_mut(), |i, v| {
                let d = linalg::sub(&na.coeffs()[i], &n0.coeffs()[i]);
                *v = linalg::add(v, &linalg::scale_re(co[i].2, &d));
            });
            let mut p = out.leray_project_on(&self.sys.bx);
            p.symmetrize_real();
            p
        };
        let next = MhdState {
            u: correct(&a.u, &nua, &nu0, &self.cu),
            b: correct(&a.b, &nba, &nb0, &self.cb),
            t: a.t,
        };
        if !next.is_finite() {
            return Err(Error::NanDetected { t: next.t });
        }
        Ok(next)
    }
}

/// One sample of a nonlinear run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MhdRow {
    pub t: f64,
    pub l2_norm: f64,
    pub hs_norm: f64,
    pub div_u: f64,
    pub div_b: f64,
}

pub fn write_mhd_csv<W: Write>(mut w: W, rows: &[MhdRow]) -> std::io::Result<()> {
    writeln!(w, "t,l2_norm,hs_norm,div_u,div_b")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.l2_norm, r.hs_norm, r.div_u, r.div_b
        )?;
    }
    Ok(())
}

/// `||Q||_{L2} / (eps^-3 ||U||_{L2}^{1+eta} ||U||_{H^s}^{1-eta})` for one state.
pub fn q_ratio(sys: &MhdSystem, st: &MhdState, s: f64) -> f64 {
    let (qu, qb) = sys.nonlinear_q(st);
    let num = qu.l2_norm().hypot(qb.l2_norm());
    let e = eta(s);
    let l2 = st.l2_norm();
    let hs = st.sobolev_norm(s, sys.box_spec());
    num / (sys.epsilon().powi(-3) * l2.powf(1.0 + e) * hs.powf(1.0 - e))
}

/// `||U||_{H^r} / (||U||_{L2}^eta ||U||_{H^s}^{1-eta})` with `r = (1 - eta) s`; at most 1.
pub fn interp_check(st: &MhdState, s: f64, bx: &BoxSpec) -> f64 {
    let e = eta(s);
    let r = (1.0 - e) * s;
    st.sobolev_norm(r, bx) / (st.l2_norm().powf(e) * st.sobolev_norm(s, bx).powf(1.0 - e))
}

/// Random real solenoidal state on `sys`'s box with `|c(m)| ~ (1 + |q|)^-slope`.
pub fn random_state(sys: &MhdSystem, slope: f64, seed: u64) -> MhdState {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let bx = *sys.box_spec();
    let mut draw = || {
        let mut f = SpectralVectorField::zeros_aniso(sys.half());
        for i in 0..f.len() {
            let q = bx.wavevector(f.wave(i));
            let amp = (1.0 + linalg::rnorm(&q)).powf(-slope);
            let mut v: CVec3 = ZERO3;
            for z in v.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *z = C64::new(re, im) * amp;
            }
            f.coeffs_mut()[i] = v;
        }
        f.set_mean(ZERO3);
        let mut p = f.leray_project_on(&bx);
        p.symmetrize_real();
        p
    };
    let u = draw();
    let b = draw();
    MhdState::new(u, b)
}

/// Sample `samples` random states with slopes spread over `[1, 4]` and return
/// the largest [`q_ratio`].
pub fn q_estimate_probe(samples: usize, s: f64, epsilon: f64, seed: u64) -> Result<f64> {
    let sys = probe_system(epsilon)?;
    let ratios = par::map_indexed(samples, |i| {
        let slope = 1.0 + 3.0 * i as f64 / samples.max(1) as f64;
        q_ratio(
            &sys,
            &random_state(&sys, slope, seed.wrapping_add(i as u64)),
            s,
        )
    });
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Unit box at half-width 4 without base flow; the setting of the a-priori probes.
pub fn probe_system(epsilon: f64) -> Result<MhdSystem> {
    let zero = crate::field::abc_flow(0.0, 0.0, 0.0, 1);
    MhdSystem::new(&zero, BoxSpec::unit(), [4, 4, 4], epsilon)
}

/// Outcome of [`run_instability`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstabilityReport {
    pub deltas: Vec<f64>,
    pub threshold: f64,
    pub thresholds_hit: Vec<bool>,
    /// First crossing of the threshold (linear interpolation between steps).
    pub t_delta: Vec<Option<f64>>,
    /// Largest `||U(t) - delta e^{lambda t} U_0||_{H^s} / (delta e^{lambda t})`
    /// while `delta e^{lambda t} <= 0.01`.
    pub shadowing_error: Vec<f64>,
    pub amplitude_curves: Vec<Vec<MhdRow>>,
    /// Time of the first non-finite state; that run stops there.
    pub nan_at: Vec<Option<f64>>,
    /// Least-squares fit `t_delta = slope ln(1/delta) + intercept` over hits.
    pub slope_fit: Option<f64>,
    pub intercept: Option<f64>,
    /// Largest deviation from the fit.
    pub fit_residual: Option<f64>,
    /// `max t_delta - min t_delta` over hits.
    pub spread: Option<f64>,
    pub lambda: f64,
}

impl InstabilityReport {
    pub fn all_hit(&self) -> bool {
        self.thresholds_hit.iter().all(|&h| h)
    }

    pub fn none_hit(&self) -> bool {
        self.thresholds_hit.iter().all(|&h| !h)
    }

    /// Fit residual within `frac` of the spread.
    pub fn is_affine(&self, frac: f64) -> bool {
        matches!((self.fit_residual, self.spread), (Some(r), Some(s)) if r <= frac * s)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub s: f64,
    pub threshold_frac: f64,
    pub horizon: f64,
    pub dt: f64,
    pub record_every: usize,
    /// Amplitude `delta e^{lambda t}` up to which shadowing is measured.
    pub shadow_limit: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            s: DEFAULT_S,
            threshold_frac: DEFAULT_THRESHOLD_FRAC,
            horizon: 10.0,
            dt: 1e-3,
            record_every: 10,
            shadow_limit: 0.01,
        }
    }
}

/// Threshold crossing, shadowing error, samples and NaN time of one run.
type DeltaRun = (Option<f64>, f64, Vec<MhdRow>, Option<f64>);

/// Unit-`H^s` real initial field `(0, Re b_L)` of a mode on the stepper's box.
pub fn initial_mode_state(sys: &MhdSystem, mode: &BlochMode, s: f64) -> Result<MhdState> {
    let bl = real_part(&mode_on_box(mode, sys.box_spec(), sys.half())?);
    let n = bl.sobolev_norm(s, sys.box_spec());
    if n == 0.0 {
        return Err(Error::DegenerateInput(
            "mode has zero norm on the box".into(),
        ));
    }
    let b = bl.scaled(c(1.0 / n, 0.0)).with_reality(true);
    Ok(MhdState::new(
        SpectralVectorField::zeros_aniso(sys.half()).with_reality(true),
        b,
    ))
}

/// Integrate each `delta U_0` until `||U||_{H^s}` reaches
/// `threshold_frac ||U_base||_{H^s}` or the horizon.
pub fn run_instability(
    stepper: &MhdStepper,
    mode: &BlochMode,
    deltas: &[f64],
    opts: RunOptions,
) -> Result<InstabilityReport> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("empty delta list".into()));
    }
    if deltas.windows(2).any(|w| !(w[1] < w[0])) || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidArgument(
            "deltas must be positive and decreasing".into(),
        ));
    }
    let sys = stepper.system();
    let bx = *sys.box_spec();
    let s = opts.s;
    let u0 = initial_mode_state(sys, mode, s)?;
    let threshold = opts.threshold_frac * sys.base().sobolev_norm(s, &bx);
    let lambda = mode.lambda.re;
    let every = opts.record_every.max(1);
    let runs = par::map_slice(deltas, |&delta| -> Result<DeltaRun> {
        let mut st = u0.scaled(delta);
        let row = |st: &MhdState| MhdRow {
            t: st.t,
            l2_norm: st.l2_norm(),
            hs_norm: st.sobolev_norm(s, &bx),
            div_u: st.u.divergence_defect_on(&bx, [0.0; 3]),
            div_b: st.b.divergence_defect_on(&bx, [0.0; 3]),
        };
        let mut rows = vec![row(&st)];
        let mut shadow = 0.0f64;
        let mut prev = (st.t, rows[0].hs_norm);
        let steps = (opts.horizon / stepper.dt()).ceil() as usize;
        let mut hit = None;
        let mut nan = None;
        for i in 1..=steps {
            st = match stepper.step(&st) {
                Ok(next) => next,
                Err(Error::NanDetected { t }) => {
                    nan = Some(t);
                    break;
                }
                Err(e) => return Err(e),
            };
            let hs = st.sobolev_norm(s, &bx);
            let amp = delta * (lambda * st.t).exp();
            if amp <= opts.shadow_limit && i % every == 0 {
                let lin = u0.scaled(amp);
                shadow = shadow.max(st.sub(&lin).sobolev_norm(s, &bx) / amp);
            }
            if hs >= threshold {
                let (t0, h0) = prev;
                let frac = (threshold - h0) / (hs - h0);
                hit = Some(t0 + frac * (st.t - t0));
                rows.push(row(&st));
                break;
            }
            if i % every == 0 {
                rows.push(row(&st));
            }
            prev = (st.t, hs);
        }
        if hit.is_none() && nan.is_none() && rows.last().is_some_and(|r| r.t < st.t) {
            rows.push(row(&st));
        }
        Ok((hit, shadow, rows, nan))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    let t_delta: Vec<Option<f64>> = runs.iter().map(|r| r.0).collect();
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .zip(&t_delta)
        .filter_map(|(d, t)| t.map(|t| ((1.0 / d).ln(), t)))
        .collect();
    let (slope_fit, intercept, fit_residual, spread) = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let xm = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx = pts.iter().map(|p| (p.0 - xm).powi(2)).sum::<f64>();
        let sxy = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum::<f64>();
        let slope = sxy / sxx;
        let icpt = ym - slope * xm;
        let res = pts
            .iter()
            .map(|p| (p.1 - icpt - slope * p.0).abs())
            .fold(0.0, f64::max);
        let tmax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let tmin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        (Some(slope), Some(icpt), Some(res), Some(tmax - tmin))
    } else {
        (None, None, None, None)
    };
    Ok(InstabilityReport {
        deltas: deltas.to_vec(),
        threshold,
        thresholds_hit: t_delta.iter().map(|t| t.is_some()).collect(),
        t_delta,
        shadowing_error: runs.iter().map(|r| r.1).collect(),
        nan_at: runs.iter().map(|r| r.3).collect(),
        amplitude_curves: runs.into_iter().map(|r| r.2).collect(),
        slope_fit,
        intercept,
        fit_residual,
        spread,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alpha::{alpha, select_xi};
    use crate::continuation::{build_mode, newton_lambda};
    use crate::field::abc_flow;

    fn small_system() -> (MhdSystem, VelocityProfile) {
        let u = abc_flow(1.0, 0.8, 1.2, 2);
        let sys = MhdSystem::new(&u, BoxSpec::new([3, 1, 2]).unwrap(), [7, 2, 5], 0.5).unwrap();
        (sys, u)
    }

    fn rel(a: &MhdState, b: &MhdState) -> f64 {
        a.sub(b).l2_norm() / b.l2_norm().max(f64::MIN_POSITIVE)
    }

    fn pair(p: (SpectralVectorField, SpectralVectorField)) -> MhdState {
        MhdState::new(p.0, p.1)
    }

    #[test]
    fn eta_values() {
        assert_eq!(eta(5.0), 0.25);
        assert_eq!(eta(4.0), 3.0 / 16.0);
    }

    #[test]
    fn zero_is_fixed_point() {
        let (sys, _) = small_system();
        let dt = 0.5 * sys.max_stable_dt(0.5);
        let st = MhdStepper::new(sys.clone(), dt, 0.5).unwrap();
        let mut s = MhdState::zeros(sys.half());
        for _ in 0..5 {
            s = st.step(&s).unwrap();
        }
        assert_eq!(s.l2_norm(), 0.0);
        assert_eq!(pair(sys.nonlinear_q(&s)).l2_norm(), 0.0);
    }

    #[test]
    fn zero_flow_linear_part_is_viscous() {
        let zero = abc_flow(0.0, 0.0, 0.0, 2);
        let sys = MhdSystem::new(&zero, BoxSpec::new([2, 1, 1]).unwrap(), [4, 2, 2], 0.5).unwrap();
        let st = random_state(&sys, 1.0, 3);
        let st = MhdState::new(st.u, SpectralVectorField::zeros_aniso(sys.half()));
        let g = pair(sys.linear_rhs(&st));
        let mut expect = st.u.clone();
        for (i, v) in expect.coeffs_mut().iter_mut().enumerate() {
            *v = linalg::scale_re(-8.0 * sys.q2[i], v);
        }
        assert!(g.u.sub(&expect).l2_norm() <= 1e-13 * expect.l2_norm());
        assert_eq!(g.b.l2_norm(), 0.0);
    }

    #[test]
    fn rhs_splits_into_linear_and_quadratic() {
        let (sys, _) = small_system();
        let st = random_state(&sys, 1.5, 7);
        let full = pair(sys.rhs(&st));
        let (g, q) = (pair(sys.linear_rhs(&st)), pair(sys.nonlinear_q(&st)));
        let sum = MhdState::new(g.u.add(&q.u), g.b.add(&q.b));
        assert!(rel(&full, &sum) <= 1e-13, "{}", rel(&full, &sum));
    }

    #[test]
    fn q_is_quadratic_and_magnetic_channel_vanishes_without_b() {
        let (sys, _) = small_system();
        let st = random_state(&sys, 1.5, 8);
        let q1 = pair(sys.nonlinear_q(&st));
        let q2 = pair(sys.nonlinear_q(&st.scaled(-3.0)));
        assert!(rel(&q2, &q1.scaled(9.0)) <= 1e-12);
        let no_b = MhdState::new(st.u.clone(), SpectralVectorField::zeros_aniso(sys.half()));
        let q = pair(sys.nonlinear_q(&no_b));
        assert_eq!(q.b.l2_norm(), 0.0);
        // -P(u . grad u) through a direct spectral evaluation of the advection
        let bx = *sys.box_spec();
        let dims = sys.grid();
        let ug = st.u.to_grid(dims);
        let len = ug[0].len();
        let mut adv = [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]];
        for comp in 0..3 {
            let mut grad = Vec::new();
            for dir in 0..3 {
                let mut d = st.u.clone();
                for (i, v) in d.coeffs_mut().iter_mut().enumerate() {
                    let q = bx.wavevector(st.u.wave(i));
                    *v = [c(0.0, q[dir]) * v[comp], ZERO, ZERO];
                }
                grad.push(d.to_grid(dims)[0].clone());
            }
            for j in 0..len {
                adv[comp][j] =
                    ug[0][j] * grad[0][j] + ug[1][j] * grad[1][j] + ug[2][j] * grad[2][j];
            }
        }
        let adv = SpectralVectorField::from_grid(adv, dims, sys.half()).leray_project_on(&bx);
        let expect = adv.scaled(c(-8.0, 0.0));
        assert!(q.u.sub(&expect).l2_norm() <= 1e-12 * expect.l2_norm());
    }

    #[test]
    fn linearization_matches_finite_difference() {
        let (sys, _) = small_system();
        let st = random_state(&sys, 2.0, 9);
        let h = 1e-6;
        let fd = pair(sys.rhs(&st.scaled(h))).scaled(1.0 / h);
        let g = pair(sys.linear_rhs(&st));
        assert!(rel(&fd, &g) <= 1e-5, "{}", rel(&fd, &g));
    }

    #[test]
    fn steps_preserve_divergence_and_reality() {
        let (sys, _) = small_system();
        let dt = 0.5 * sys.max_stable_dt(0.5);
        let bx = *sys.box_spec();
        let stp = MhdStepper::new(sys.clone(), dt, 0.5).unwrap();
        let mut s = random_state(&sys, 2.0, 4).scaled(0.1);
        for _ in 0..3 {
            s = stp.step(&s).unwrap();
            let n = s.l2_norm();
            assert!(s.u.divergence_defect_on(&bx, [0.0; 3]) <= 1e-10 * n);
            assert!(s.b.divergence_defect_on(&bx, [0.0; 3]) <= 1e-10 * n);
            assert!(s.u.hermitian_defect() <= 1e-10 * n && s.b.hermitian_defect() <= 1e-10 * n);
        }
    }

    #[test]
    fn interpolation_holds_with_equality_on_single_modes() {
        let (sys, _) = small_system();
        let bx = *sys.box_spec();
        for seed in 0..10 {
            let st = random_state(&sys, 0.5 + 0.3 * seed as f64, seed);
            assert!(interp_check(&st, 4.0, &bx) <= 1.0 + 1e-12);
        }
        let mut b = SpectralVectorField::zeros_aniso(sys.half());
        b.set(
            crate::field::WaveIndex::new(2, 1, 0),
            [c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.5)],
        )
        .unwrap();
        b.symmetrize_real();
        let st = MhdState::new(SpectralVectorField::zeros_aniso(sys.half()), b);
        assert!((interp_check(&st, 4.0, &bx) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn q_ratio_is_scale_invariant() {
        let sys = probe_system(0.5).unwrap();
        let st = random_state(&sys, 2.0, 1);
        let (a, b) = (
            q_ratio(&sys, &st, 4.0),
            q_ratio(&sys, &st.scaled(37.0), 4.0),
        );
        assert!((a - b).abs() <= 1e-10 * a);
    }

    fn growth_error(
        u: &VelocityProfile,
        mode: &crate::continuation::BlochMode,
        dt: f64,
        t_end: f64,
    ) -> f64 {
        let bx = mode.box_spec.unwrap();
        let sys = MhdSystem::new(u, bx, box_half(&bx, u.order(), &mode.xi), mode.epsilon).unwrap();
        let u0 = initial_mode_state(&sys, mode, 3.0).unwrap().scaled(1e-8);
        let stp = MhdStepper::new(sys, dt, 1e6).unwrap();
        let mut st = u0.clone();
        while st.t < t_end - 1e-12 {
            st = stp.step(&st).unwrap();
        }
        let exact = u0.scaled((mode.lambda.re * st.t).exp());
        st.sub(&exact).l2_norm() / exact.l2_norm()
    }

    #[test]
    fn mode_error_converges_at_second_order() {
        let a = crate::field::TWO_PI;
        let u = abc_flow(a, a, a, 1);
        let sel = select_xi(&alpha(&u), 50, 8).unwrap();
        let xi = sel.snapped.xi;
        let lam = newton_lambda(&u, xi, 0.5, sel.snapped.lambda)
            .unwrap()
            .lambda;
        let mode = build_mode(&u, xi, 0.5, lam).unwrap();
        let dt = 2e-3;
        let e1 = growth_error(&u, &mode, dt, 0.2);
        let e2 = growth_error(&u, &mode, dt / 2.0, 0.2);
        let e3 = growth_error(&u, &mode, dt / 4.0, 0.2);
        assert!(e1 < 0.05, "{e1}");
        assert!(e1 / e2 > 3.0 && e2 / e3 > 3.5, "{e1} {e2} {e3}");
    }

    #[test]
    fn tiling_checks_fit() {
        let u = abc_flow(1.0, 1.0, 1.0, 2);
        let bx = BoxSpec::new([4, 1, 1]).unwrap();
        assert!(tile(u.field(), &bx, [8, 2, 2]).is_ok());
        assert!(matches!(
            tile(u.field(), &bx, [3, 2, 2]),
            Err(Error::BoxMismatch { .. })
        ));
    }

    #[test]
    fn bloch_mode_is_eigenvector_on_box() {
        // A = 2 pi makes the optimal xi = pi e1 and the eps = 1/2 box (8, 1, 1)
        let a = crate::field::TWO_PI;
        let u = abc_flow(a, a, a, 2);
        let sel = select_xi(&alpha(&u), 50, 8).unwrap();
        let xi = sel.snapped.xi;
        assert!((xi[0] - std::f64::consts::PI).abs() < 1e-14);
        let eps = 0.5;
        let lam = newton_lambda(&u, xi, eps, sel.snapped.lambda)
            .unwrap()
            .lambda;
        let mode = build_mode(&u, xi, eps, lam).unwrap();
        let bx = mode.box_spec.unwrap();
        assert_eq!(bx.periods(), [8, 1, 1]);
        let sys = MhdSystem::new(&u, bx, box_half(&bx, 2, &xi), eps).unwrap();
        let st = initial_mode_state(&sys, &mode, 3.0).unwrap();
        let g = pair(sys.linear_rhs(&st));
        let r = rel(&g, &st.scaled(lam.re));
        assert!(r <= 1e-6, "{r}");
    }
}
