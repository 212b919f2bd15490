//! Fast invariant checks run by the `check` command. Each check is cheap
//! enough to run in seconds on one core.

use serde::Serialize;

use crate::alpha::{alpha, alpha_closed_sum, cell_solve, select_xi};
use crate::continuation::{newton_lambda, PerturbedCellOperator, SOLVE_ACCEPT};
use crate::field::io::{read_field, write_field};
use crate::field::{abc_flow, random_profile, BoxSpec, SpectralVectorField, TWO_PI};
use crate::gmres::GmresOptions;
use crate::induction::{
    max_stable_dt, random_bloch_field, DnsState, InductionStepper, DEFAULT_SAFETY,
};
use crate::linalg::{self, c};
use crate::mhd::{interp_check, random_state, MhdState, MhdStepper, MhdSystem, MHD_SAFETY};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, limit: f64) -> CheckResult {
    CheckResult {
        name,
        passed: value <= limit,
        detail: format!("{value:.3e} <= {limit:.1e}"),
    }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> CheckResult {
    CheckResult {
        name,
        passed: false,
        detail: e.to_string(),
    }
}

fn field_round_trip() -> CheckResult {
    let f = random_profile(3, 2.0, 11).field().clone();
    let mut buf = Vec::new();
    if let Err(e) = write_field(&mut buf, &f) {
        return failed("field_round_trip", e);
    }
    match read_field(buf.as_slice()) {
        Ok(g) => {
            let same = f.coeffs().iter().zip(g.coeffs()).all(|(a, b)| {
                a.iter().zip(b).all(|(x, y)| {
                    x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()
                })
            });
            CheckResult {
                name: "field_round_trip",
                passed: same && g.reality_flag() == f.reality_flag(),
                detail: format!("bit-exact: {same}"),
            }
        }
        Err(e) => failed("field_round_trip", e),
    }
}

fn wedge_paths() -> CheckResult {
    let a = random_profile(3, 1.0, 1).field().clone();
    let b = random_profile(3, 1.0, 2).field().clone();
    let d = a.wedge(&b).sub(&a.wedge_direct(&b)).l2_norm() / a.wedge_direct(&b).l2_norm();
    check("wedge_fft_vs_direct", d, 1e-12)
}

fn alpha_real_symmetric() -> CheckResult {
    let worst = (0..10u64)
        .map(|seed| {
            let a = alpha(&random_profile(4, 4.0, seed));
            let n = a.norm().max(f64::MIN_POSITIVE);
            (a.hermiticity_defect() / n).max(a.imag_defect() / n)
        })
        .fold(0.0, f64::max);
    check("alpha_real_symmetric", worst, 1e-10)
}

fn alpha_oracles() -> CheckResult {
    let u = random_profile(4, 4.0, 5);
    let (op, closed) = (alpha(&u), alpha_closed_sum(&u));
    let d = linalg::fro(&(op.entries() - closed.entries())) / op.norm();
    let abc = alpha(&abc_flow(1.0, 2.0, 0.5, 2));
    let expect = [4.0, 0.25, 1.0].map(|x| -x / TWO_PI);
    let mut e = 0.0f64;
    for (i, &di) in expect.iter().enumerate() {
        for j in 0..3 {
            let want = if i == j { di } else { 0.0 };
            e = e.max((abc.entries()[(i, j)] - c(want, 0.0)).norm());
        }
    }
    check("alpha_operational_vs_closed", d.max(e / abc.norm()), 1e-12)
}

fn abc_eps_zero() -> CheckResult {
    let u = abc_flow(1.0, 1.0, 1.0, 2);
    match select_xi(&alpha(&u), 50, 0) {
        Ok(sel) => {
            let pi = std::f64::consts::PI;
            let d = (sel.optimal.lambda.re - 1.0 / (16.0 * pi * pi))
                .abs()
                .max((sel.optimal.xi_norm() - 1.0 / (4.0 * pi)).abs());
            check("abc_lambda0_and_xi", d, 1e-10)
        }
        Err(e) => failed("abc_lambda0_and_xi", e),
    }
}

fn perturbed_solve_reduces_to_cell_solve() -> CheckResult {
    let u = random_profile(3, 3.0, 4);
    let bbar = [c(1.0, 0.0), c(-0.5, 0.2), c(0.3, 0.0)];
    let op = PerturbedCellOperator::new(&u, [0.1, 0.0, 0.0], 0.0, c(0.01, 0.0));
    match op.solve(&op.forcing(&bbar), GmresOptions::default()) {
        Ok((x, _)) => {
            let r = cell_solve(&u, &bbar);
            check(
                "eps_zero_solve_matches_cell_solve",
                x.sub(&r).l2_norm() / r.l2_norm(),
                0.0,
            )
        }
        Err(e) => failed("eps_zero_solve_matches_cell_solve", e),
    }
}

fn newton_small_eps() -> CheckResult {
    let u = abc_flow(1.0, 1.0, 1.0, 3);
    let pi = std::f64::consts::PI;
    let xi = [1.0 / (4.0 * pi), 0.0, 0.0];
    match newton_lambda(&u, xi, 0.05, c(1.0 / (16.0 * pi * pi), 0.0)) {
        Ok(r) => check("newton_residual_small_eps", r.residual, SOLVE_ACCEPT),
        Err(e) => failed("newton_residual_small_eps", e),
    }
}

fn induction_divergence() -> CheckResult {
    let u = abc_flow(1.0, 1.0, 1.0, 3);
    let xi = [0.3, 0.0, 0.0];
    let eps = 0.5;
    let dt = max_stable_dt(&u, eps, xi, DEFAULT_SAFETY);
    let b = random_bloch_field(3, [eps * eps * xi[0], 0.0, 0.0], 2.0, 3);
    let mut st = DnsState::new(b, eps, xi);
    let stepper = match InductionStepper::new(&u, eps, xi, dt, DEFAULT_SAFETY) {
        Ok(s) => s,
        Err(e) => return failed("induction_divergence", e),
    };
    let mut worst = 0.0f64;
    for _ in 0..20 {
        st = match stepper.step(&st) {
            Ok(s) => s,
            Err(e) => return failed("induction_divergence", e),
        };
        worst = worst.max(st.divergence_defect() / st.b.l2_norm());
    }
    check("induction_divergence", worst, 1e-10)
}

fn mhd_system() -> Option<MhdSystem> {
    let u = abc_flow(1.0, 0.8, 1.2, 2);
    MhdSystem::new(&u, BoxSpec::new([2, 1, 1]).ok()?, [5, 2, 2], 0.5).ok()
}

fn mhd_checks() -> Vec<CheckResult> {
    let Some(sys) = mhd_system() else {
        return vec![failed("mhd_setup", "box construction failed")];
    };
    let mut out = Vec::new();
    let dt = sys.max_stable_dt(MHD_SAFETY);
    match MhdStepper::new(sys.clone(), dt, MHD_SAFETY) {
        Ok(stp) => {
            let mut z = MhdState::zeros(sys.half());
            let mut ok = true;
            for _ in 0..5 {
                match stp.step(&z) {
                    Ok(n) => z = n,
                    Err(_) => ok = false,
                }
            }
            out.push(check(
                "mhd_zero_equilibrium",
                if ok { z.l2_norm() } else { f64::INFINITY },
                0.0,
            ));
            let bx = *sys.box_spec();
            let mut s = random_state(&sys, 2.0, 1).scaled(0.1);
            let mut worst = 0.0f64;
            for _ in 0..5 {
                match stp.step(&s) {
                    Ok(n) => s = n,
                    Err(e) => return vec![failed("mhd_divergence_and_reality", e)],
                }
                let n = s.l2_norm();
                worst = worst
                    .max(s.u.divergence_defect_on(&bx, [0.0; 3]) / n)
                    .max(s.b.divergence_defect_on(&bx, [0.0; 3]) / n)
                    .max(s.u.hermitian_defect() / n)
                    .max(s.b.hermitian_defect() / n);
            }
            out.push(check("mhd_divergence_and_reality", worst, 1e-10));
        }
        Err(e) => out.push(failed("mhd_zero_equilibrium", e)),
    }
    let st = random_state(&sys, 1.5, 2);
    let (fu, fb) = sys.rhs(&st);
    let (gu, gb) = sys.linear_rhs(&st);
    let (qu, qb) = sys.nonlinear_q(&st);
    let split = fu
        .sub(&gu.add(&qu))
        .l2_norm()
        .hypot(fb.sub(&gb.add(&qb)).l2_norm())
        / fu.l2_norm().hypot(fb.l2_norm());
    out.push(check("mhd_rhs_split", split, 1e-13));
    let worst = (0..20u64)
        .map(|i| {
            interp_check(
                &random_state(&sys, 0.5 + 0.2 * i as f64, i),
                4.0,
                sys.box_spec(),
            )
        })
        .fold(0.0, f64::max);
    out.push(check("interpolation_constant_one", worst - 1.0, 1e-12));
    out
}

fn leray_idempotent() -> CheckResult {
    let f = SpectralVectorField::zeros(2);
    let g = crate::field::random_profile(3, 1.0, 9).field().clone();
    let p = g.leray_project();
    let d = p.leray_project().sub(&p).l2_norm() + f.leray_project().l2_norm();
    check("leray_idempotent", d / p.l2_norm(), 1e-14)
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = vec![
        field_round_trip(),
        wedge_paths(),
        leray_idempotent(),
        alpha_real_symmetric(),
        alpha_oracles(),
        abc_eps_zero(),
        perturbed_solve_reduces_to_cell_solve(),
        newton_small_eps(),
        induction_divergence(),
    ];
    out.extend(mhd_checks());
    out
}
