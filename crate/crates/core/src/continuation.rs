//! The `epsilon > 0` theory: the perturbed cell operator, `alpha_eps`, the
//! dispersion determinant, Newton continuation of `lambda(epsilon)` and
//! assembly of the Bloch growing mode.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alpha::{self, basis, cell_forcing_field, cell_symbol, diag_solve, mean_wedge_columns};
use crate::error::{Error, Result};
use crate::field::{io as field_io, BoxSpec, SpectralVectorField, VelocityProfile, TWO_PI};
use crate::gmres::{gmres, GmresOptions, GmresOutcome};
use crate::linalg::{self, c, CMat3, CVec3, C64, ZERO3};
use crate::par;

/// Accepted relative residual of the linear solve when the iteration budget
/// runs out before the target tolerance.
pub const SOLVE_ACCEPT: f64 = 1e-10;

/// `L = Laplace_kappa - eps^4 lambda + eps curl_kappa(fluct(U ^ .))` on mean-free
/// fields, `kappa = eps^2 xi`.
#[derive(Clone, Debug)]
pub struct PerturbedCellOperator {
    u: VelocityProfile,
    xi: [f64; 3],
    epsilon: f64,
    lambda: C64,
    kappa: [f64; 3],
    shift: C64,
}

impl PerturbedCellOperator {
    pub fn new(u: &VelocityProfile, xi: [f64; 3], epsilon: f64, lambda: C64) -> Self {
        let e2 = epsilon * epsilon;
        Self {
            u: u.clone(),
            xi,
            epsilon,
            lambda,
            kappa: xi.map(|x| e2 * x),
            shift: lambda * (e2 * e2),
        }
    }

    pub fn kappa(&self) -> [f64; 3] {
        self.kappa
    }

    pub fn xi(&self) -> [f64; 3] {
        self.xi
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn lambda(&self) -> C64 {
        self.lambda
    }

    pub fn order(&self) -> usize {
        self.u.order()
    }

    pub fn apply(&self, b: &SpectralVectorField) -> SpectralVectorField {
        let half = b.half();
        let mut w = self.u.field().wedge(b);
        w.set_mean(ZERO3);
        let mut out = w.curl_bloch(self.kappa);
        let (eps, kappa, shift) = (self.epsilon, self.kappa, self.shift);
        let src = b.coeffs();
        par::for_each_indexed_mut(out.coeffs_mut(), |i, cf| {
            let k = crate::field::wave_of(half, i);
            if k == [0; 3] {
                *cf = ZERO3;
            } else {
                let d = cell_symbol(k, kappa, shift);
                let diag = linalg::scale(d, &src[i]);
                *cf = linalg::add(&diag, &linalg::scale_re(eps, cf));
            }
        });
        out.set_reality(false);
        out
    }

    /// `-curl_kappa(U ^ bbar)`, which equals `-curl(U ^ bbar) - eps^2 i xi ^ (U ^ bbar)`.
    pub fn forcing(&self, bbar: &CVec3) -> SpectralVectorField {
        cell_forcing_field(&self.u, bbar, self.kappa)
    }

    /// Inverse of the diagonal part; exact inverse at `epsilon = 0`.
    pub fn precondition(&self, b: SpectralVectorField) -> SpectralVectorField {
        diag_solve(b, self.kappa, self.shift)
    }

    /// Solve `L b = rhs` for mean-free `b`.
    pub fn solve(
        &self,
        rhs: &SpectralVectorField,
        opts: GmresOptions,
    ) -> Result<(SpectralVectorField, GmresOutcome)> {
        let x0 = self.precondition(rhs.clone());
        if self.epsilon == 0.0 {
            return Ok((
                x0,
                GmresOutcome {
                    iterations: 0,
                    rel_residual: 0.0,
                    converged: true,
                },
            ));
        }
        let half = rhs.half();
        let wrap =
            |v: &[C64]| SpectralVectorField::from_coeffs(half, unflatten(v), false).expect("shape");
        let mut x = flatten(x0.coeffs());
        let out = gmres(
            |v| flatten(self.apply(&wrap(v)).coeffs()),
            |v| flatten(self.precondition(wrap(v)).coeffs()),
            &flatten(rhs.coeffs()),
            &mut x,
            opts,
        );
        if !out.converged && !(out.rel_residual <= SOLVE_ACCEPT) {
            return Err(Error::SolverDiverged {
                residual: out.rel_residual,
                iterations: out.iterations,
            });
        }
        Ok((wrap(&x), out))
    }
}

fn flatten(v: &[CVec3]) -> Vec<C64> {
    v.iter().flat_map(|z| z.iter().copied()).collect()
}

fn unflatten(v: &[C64]) -> Vec<CVec3> {
    v.chunks_exact(3).map(|z| [z[0], z[1], z[2]]).collect()
}

/// `b~` solving `L b~ = -curl_kappa(U ^ bbar)`.
pub fn solve_fluct(
    u: &VelocityProfile,
    xi: [f64; 3],
    epsilon: f64,
    lambda: C64,
    bbar: &CVec3,
) -> Result<SpectralVectorField> {
    let op = PerturbedCellOperator::new(u, xi, epsilon, lambda);
    op.solve(&op.forcing(bbar), GmresOptions::default())
        .map(|(b, _)| b)
}

/// `alpha_{xi,eps,mu}(U)` with column `j` equal to `mean(U ^ solve_fluct(e_j))`.
pub fn alpha_eps(u: &VelocityProfile, xi: [f64; 3], epsilon: f64, mu: C64) -> Result<CMat3> {
    let cols = par::map_indexed(3, |j| solve_fluct(u, xi, epsilon, mu, &basis(j)));
    let cols: Vec<SpectralVectorField> = cols.into_iter().collect::<Result<_>>()?;
    Ok(mean_wedge_columns(u, &cols))
}

/// `i xi ^ (alpha .) - |xi|^2 I` for a given alpha.
pub fn shifted_mean_matrix(alpha_eps: &CMat3, xi: &[f64; 3]) -> CMat3 {
    alpha::mean_matrix(alpha_eps, xi)
}

/// Value of the dispersion determinant with its natural scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dispersion {
    pub value: C64,
    /// `max(||i xi ^ alpha||_F, |xi|^2, |mu|)^3`.
    pub scale: f64,
    /// `||i xi ^ alpha||_F + |xi|^2`, a bound on the spectral radius of the matrix.
    pub radius: f64,
}

/// `f(eps, mu) = det(i xi ^ alpha_{xi,eps,mu} - |xi|^2 - mu)`.
pub fn dispersion(u: &VelocityProfile, xi: [f64; 3], epsilon: f64, mu: C64) -> Result<Dispersion> {
    let a = alpha_eps(u, xi, epsilon, mu)?;
    Ok(dispersion_from_alpha(&a, &xi, mu))
}

pub fn dispersion_from_alpha(alpha_eps: &CMat3, xi: &[f64; 3], mu: C64) -> Dispersion {
    let ax = linalg::cross_matrix(xi) * alpha_eps * linalg::I;
    let x2 = linalg::rdot(xi, xi);
    let m = ax - CMat3::identity() * c(x2 + mu.re, mu.im);
    let af = linalg::fro(&ax);
    Dispersion {
        value: m.determinant(),
        scale: af.max(x2).max(mu.norm()).powi(3),
        radius: af + x2,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    pub max_iters: usize,
    /// `|f| <= f_tol * scale`.
    pub f_tol: f64,
    pub step_abs: f64,
    pub step_rel: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            f_tol: 1e-10,
            step_abs: 1e-12,
            step_rel: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonResult {
    pub lambda: C64,
    /// `|f| / scale` at `lambda`.
    pub residual: f64,
    pub iters: usize,
    /// Last secant slope, an estimate of `df/dmu`.
    pub df_dmu: C64,
    /// `|df/dmu| radius / (f_tol scale)`.
    pub derivative_margin: f64,
}

/// Complex secant iteration on `mu -> f(eps, mu)`.
pub fn newton_lambda(
    u: &VelocityProfile,
    xi: [f64; 3],
    epsilon: f64,
    lambda_init: C64,
) -> Result<NewtonResult> {
    newton_lambda_with(u, xi, epsilon, lambda_init, NewtonOptions::default())
}

pub fn newton_lambda_with(
    u: &VelocityProfile,
    xi: [f64; 3],
    epsilon: f64,
    lambda_init: C64,
    opts: NewtonOptions,
) -> Result<NewtonResult> {
    let eval = |mu: C64| dispersion(u, xi, epsilon, mu);
    let mut history = vec![lambda_init];
    let mut mu0 = lambda_init;
    let mut f0 = eval(mu0)?;
    let out_of_region = |mu: C64, d: &Dispersion| mu.norm() > 2.0 * d.radius;
    if out_of_region(mu0, &f0) {
        return Err(Error::NoConvergence {
            iterations: 0,
            reason: "initial guess outside the spectral bound of the mean matrix".into(),
            history,
        });
    }
    let margin = |df: C64, d: &Dispersion| df.norm() * d.radius / (opts.f_tol * d.scale);
    // secant seed step
    let h = 1e-6 * mu0.norm().max(f0.radius).max(f64::MIN_POSITIVE);
    let mut mu1 = mu0 + h;
    let mut f1 = eval(mu1)?;
    let slope0 = (f1.value - f0.value) / (mu1 - mu0);
    if f0.value.norm() <= opts.f_tol * f0.scale {
        return Ok(NewtonResult {
            lambda: mu0,
            residual: f0.value.norm() / f0.scale,
            iters: 0,
            df_dmu: slope0,
            derivative_margin: margin(slope0, &f0),
        });
    }
    history.push(mu1);
    for it in 1..=opts.max_iters {
        let df = f1.value - f0.value;
        if df.norm() <= f64::EPSILON * f1.value.norm().max(f0.value.norm()) * 1e-3
            || df.norm() == 0.0
        {
            return Err(Error::DerivativeVanished { mu: mu1 });
        }
        let slope = df / (mu1 - mu0);
        let mu2 = mu1 - f1.value / slope;
        if !mu2.re.is_finite() || !mu2.im.is_finite() {
            return Err(Error::DerivativeVanished { mu: mu1 });
        }
        history.push(mu2);
        let f2 = eval(mu2)?;
        if out_of_region(mu2, &f2) {
            return Err(Error::NoConvergence {
                iterations: it,
                reason: "iterate left the spectral bound of the mean matrix".into(),
                history,
            });
        }
        let step = (mu2 - mu1).norm();
        if f2.value.norm() <= opts.f_tol * f2.scale
            && step <= opts.step_abs + opts.step_rel * mu2.norm()
        {
            return Ok(NewtonResult {
                lambda: mu2,
                residual: f2.value.norm() / f2.scale,
                iters: it,
                df_dmu: slope,
                derivative_margin: margin(slope, &f2),
            });
        }
        (mu0, f0, mu1, f1) = (mu1, f1, mu2, f2);
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iters,
        reason: "iteration cap reached".into(),
        history,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub epsilon: f64,
    pub lambda: C64,
    /// `|f(eps, lambda)| / scale`.
    pub residual: f64,
    pub newton_iters: usize,
    pub df_dmu: C64,
    pub derivative_margin: f64,
}

/// Sampled branch `eps -> lambda(eps)` starting at the mean-field eigenvalue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationBranch {
    pub xi: [f64; 3],
    pub samples: Vec<BranchSample>,
    pub epsilon_max_requested: f64,
    pub epsilon_max_reached: f64,
    /// Why the branch stopped short, if it did.
    pub truncated: Option<String>,
    /// Samples with `|Im lambda| > 1e-8`.
    pub imaginary_anomalies: Vec<f64>,
}

pub const IMAG_ANOMALY: f64 = 1e-8;

impl ContinuationBranch {
    pub fn is_complete(&self) -> bool {
        self.truncated.is_none()
    }

    pub fn lambda_at(&self, epsilon: f64) -> Option<C64> {
        self.samples
            .iter()
            .find(|s| s.epsilon == epsilon)
            .map(|s| s.lambda)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epsilon,re_lambda,im_lambda,residual,newton_iters")?;
        for s in &self.samples {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                s.epsilon, s.lambda.re, s.lambda.im, s.residual, s.newton_iters
            )?;
        }
        Ok(())
    }
}

/// Uniform grid `eps_i = i eps_max / (steps - 1)`.
pub fn epsilon_grid(epsilon_max: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![0.0];
    }
    (0..steps)
        .map(|i| i as f64 * epsilon_max / (steps - 1) as f64)
        .collect()
}

/// Continue `lambda(eps)` from the mean-field eigenvalue at `xi` over a uniform grid.
pub fn continue_branch(
    u: &VelocityProfile,
    xi: [f64; 3],
    epsilon_max: f64,
    steps: usize,
) -> ContinuationBranch {
    let a0 = alpha::alpha(u);
    let lambda0 = alpha::MeanModeSolution::solve(a0.entries(), xi).lambda;
    let grid = epsilon_grid(epsilon_max, steps);
    let mut samples: Vec<BranchSample> = Vec::with_capacity(grid.len());
    let mut truncated = None;
    for &eps in &grid {
        let n = samples.len();
        let guess = match n {
            0 => lambda0,
            1 => samples[0].lambda,
            2 => samples[1].lambda * 2.0 - samples[0].lambda,
            _ => samples[n - 1].lambda * 3.0 - samples[n - 2].lambda * 3.0 + samples[n - 3].lambda,
        };
        match newton_lambda(u, xi, eps, guess) {
            Ok(r) if r.lambda.re > 0.0 => samples.push(BranchSample {
                epsilon: eps,
                lambda: r.lambda,
                residual: r.residual,
                newton_iters: r.iters,
                df_dmu: r.df_dmu,
                derivative_margin: r.derivative_margin,
            }),
            Ok(r) => {
                truncated = Some(format!(
                    "Re lambda = {:e} <= 0 at epsilon = {eps}",
                    r.lambda.re
                ));
                break;
            }
            Err(e) => {
                truncated = Some(format!("epsilon = {eps}: {e}"));
                break;
            }
        }
    }
    let epsilon_max_reached = samples.last().map_or(0.0, |s| s.epsilon);
    let imaginary_anomalies = samples
        .iter()
        .filter(|s| s.lambda.im.abs() > IMAG_ANOMALY)
        .map(|s| s.epsilon)
        .collect();
    ContinuationBranch {
        xi,
        samples,
        epsilon_max_requested: if steps <= 1 { 0.0 } else { epsilon_max },
        epsilon_max_reached,
        truncated,
        imaginary_anomalies,
    }
}

/// Largest distance from an eigenvalue of the assembled matrix to the branch value.
pub const EIGEN_MATCH: f64 = 1e-8;
/// Relative distance to an integer below which a box period is rounded.
pub const BOX_ROUNDING: f64 = 1e-9;

/// `e^{lambda t + i eps^2 xi . theta} (bbar + eps b~(theta))`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochMode {
    pub xi: [f64; 3],
    pub epsilon: f64,
    pub lambda: C64,
    pub bbar: CVec3,
    pub btilde: SpectralVectorField,
    /// Real periods `2 pi / (eps^2 |xi_i|)`, 1 where `xi_i = 0`; infinite at `eps = 0`.
    pub periods: [f64; 3],
    /// Integer box when every period is an integer.
    pub box_spec: Option<BoxSpec>,
}

impl BlochMode {
    pub fn kappa(&self) -> [f64; 3] {
        let e2 = self.epsilon * self.epsilon;
        self.xi.map(|x| e2 * x)
    }

    /// Periodic envelope `bbar + eps b~` as one field.
    pub fn envelope(&self) -> SpectralVectorField {
        let mut f = self.btilde.scaled(c(self.epsilon, 0.0));
        f.set_mean(self.bbar);
        f.set_reality(false);
        f
    }

    /// Largest `|(2 pi k + kappa) . B(k)|` of the envelope, relative to its L2 norm.
    pub fn bloch_divergence(&self) -> f64 {
        let env = self.envelope();
        env.divergence_defect(self.kappa()) / env.l2_norm()
    }

    pub fn save(&self, stem: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let stem = stem.as_ref();
        let field_path = stem.with_extension("field");
        let json_path = stem.with_extension("json");
        field_io::save_field(&field_path, &self.btilde)?;
        let manifest = ModeManifest {
            xi: self.xi,
            epsilon: self.epsilon,
            lambda: [self.lambda.re, self.lambda.im],
            bbar: self.bbar.map(|z| [z.re, z.im]),
            r#box: self.box_spec.map(|b| b.periods()),
            periods: self
                .periods
                .map(|p| if p.is_finite() { Some(p) } else { None }),
            btilde: field_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        let text =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&json_path, text + "\n")?;
        Ok((field_path, json_path))
    }

    /// Load from the JSON manifest written by [`BlochMode::save`].
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path.as_ref();
        let text = fs::read_to_string(path)?;
        let m: ModeManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("mode manifest: {e}")))?;
        let field_path = path.with_file_name(&m.btilde);
        let btilde = field_io::load_field(field_path)?;
        let box_spec = match m.r#box {
            Some(p) => Some(BoxSpec::new(p)?),
            None => None,
        };
        Ok(Self {
            xi: m.xi,
            epsilon: m.epsilon,
            lambda: C64::new(m.lambda[0], m.lambda[1]),
            bbar: m.bbar.map(|[re, im]| C64::new(re, im)),
            btilde,
            periods: m.periods.map(|p| p.unwrap_or(f64::INFINITY)),
            box_spec,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModeManifest {
    xi: [f64; 3],
    epsilon: f64,
    lambda: [f64; 2],
    bbar: [[f64; 2]; 3],
    r#box: Option<[u64; 3]>,
    periods: [Option<f64>; 3],
    btilde: String,
}

/// Box periods for `xi` at `epsilon`, and the integer box if they are all integral.
pub fn box_for(xi: &[f64; 3], epsilon: f64) -> ([f64; 3], Option<BoxSpec>) {
    let e2 = epsilon * epsilon;
    let periods = xi.map(|x| {
        if x == 0.0 {
            1.0
        } else {
            TWO_PI / (e2 * x.abs())
        }
    });
    let ints: Option<Vec<u64>> = periods
        .iter()
        .map(|&p| {
            let r = p.round();
            (p.is_finite() && r >= 1.0 && (p - r).abs() <= BOX_ROUNDING * r).then_some(r as u64)
        })
        .collect();
    let bx = ints.and_then(|v| BoxSpec::new([v[0], v[1], v[2]]).ok());
    (periods, bx)
}

/// Assemble the Bloch mode at a converged branch sample.
pub fn build_mode(
    u: &VelocityProfile,
    xi: [f64; 3],
    epsilon: f64,
    lambda: C64,
) -> Result<BlochMode> {
    let a = alpha_eps(u, xi, epsilon, lambda)?;
    let m = shifted_mean_matrix(&a, &xi);
    let ev = linalg::eigenvalues(&m);
    let nearest = ev.iter().copied().fold(ev[0], |acc, z| {
        if (z - lambda).norm() < (acc - lambda).norm() {
            z
        } else {
            acc
        }
    });
    let distance = (nearest - lambda).norm();
    if distance > EIGEN_MATCH {
        return Err(Error::EigenvectorMismatch {
            distance,
            tolerance: EIGEN_MATCH,
        });
    }
    let (bbar, _) = linalg::null_vector(&m, lambda);
    let btilde = solve_fluct(u, xi, epsilon, lambda, &bbar)?;
    let (periods, box_spec) = box_for(&xi, epsilon);
    Ok(BlochMode {
        xi,
        epsilon,
        lambda,
        bbar,
        btilde,
        periods,
        box_spec,
    })
}
