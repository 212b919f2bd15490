//! Command implementations. Each returns `Ok(())` for exit 0.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use alpha_dynamo::alpha::{alpha, alpha_closed_sum, select_xi, AlphaMatrix, XiSelection};
use alpha_dynamo::continuation::{
    build_mode, continue_branch, newton_lambda, BlochMode, ContinuationBranch,
};
use alpha_dynamo::field::io::load_field;

use alpha_dynamo::field::{abc_flow, random_profile, VelocityProfile, DEFAULT_TOLERANCE};
use alpha_dynamo::induction::{
    growth_rate, integrate, max_stable_dt, random_bloch_field, validate_mode, write_series_csv,
    DnsState, InductionStepper, DEFAULT_SAFETY,
};
use alpha_dynamo::invariants;
use alpha_dynamo::mhd::{
    box_half, run_instability, write_mhd_csv, MhdStepper, MhdSystem, RunOptions, MHD_SAFETY,
};
use alpha_dynamo::Error;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Flow, RunConfig};
use crate::exit::Failure;

type Outcome = Result<(), Failure>;

const DNS_HORIZON_MODE: f64 = 200.0;
const DNS_HORIZON_RANDOM: f64 = 800.0;
const MHD_HORIZON: f64 = 20.0;
const RANDOM_INIT_DECAY: f64 = 2.0;
/// Lower bound on the number of DNS steps when the stability bound is loose.
const MIN_DNS_STEPS: f64 = 1000.0;

pub fn build_flow(cfg: &RunConfig) -> Result<VelocityProfile, Failure> {
    match &cfg.flow {
        Flow::Abc { params: [a, b, c] } => Ok(abc_flow(*a, *b, *c, cfg.n)),
        Flow::Random { seed, decay } => Ok(random_profile(cfg.n, *decay, *seed)),
        Flow::File { path } => {
            let field =
                load_field(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            let u = VelocityProfile::from_field(field, DEFAULT_TOLERANCE)
                .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
            Ok(if u.order() == cfg.n {
                u
            } else {
                u.resampled(cfg.n)
            })
        }
    }
}

fn write_json(dir: &Path, name: &str, v: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::io(e.to_string()))?;
    fs::write(dir.join(name), text + "\n")
        .map_err(|e| Failure::io(format!("{}: {e}", dir.join(name).display())))
}

fn output_dir(cfg: &RunConfig) -> Result<&Path, Failure> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Failure::io(format!("{}: {e}", cfg.output_dir.display())))?;
    Ok(&cfg.output_dir)
}

fn cpair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn matrix_json(a: &AlphaMatrix) -> Value {
    let rows = a.rows();
    json!({
        "re": rows.map(|r| r.map(|z| z.re)),
        "im": rows.map(|r| r.map(|z| z.im)),
    })
}

fn flow_json(cfg: &RunConfig) -> Value {
    json!({ "flow": cfg.flow, "N": cfg.n })
}

pub fn cmd_alpha(cfg: &RunConfig) -> Outcome {
    let u = build_flow(cfg)?;
    let a = alpha(&u);
    let closed = alpha_closed_sum(&u);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let closed_defect = alpha_dynamo::linalg::fro(&(a.entries() - closed.entries())) / scale;
    let report = json!({
        "alpha": matrix_json(&a),
        "hermiticity_defect": a.hermiticity_defect(),
        "imag_defect": a.imag_defect(),
        "closed_sum_defect": closed_defect,
        "flow": flow_json(cfg),
    });
    write_json(output_dir(cfg)?, "alpha.json", &report)?;
    for r in a.rows() {
        println!(
            "{:>24.16e} {:>24.16e} {:>24.16e}",
            r[0].re, r[1].re, r[2].re
        );
    }
    println!(
        "hermiticity_defect {:.3e} imag_defect {:.3e}",
        a.hermiticity_defect(),
        a.imag_defect()
    );
    Ok(())
}

/// Either `alpha.json` (`{"alpha": {"re": .., "im": ..}}`) or a bare 3x3 real array.
pub fn load_alpha_matrix(path: &Path) -> Result<AlphaMatrix, Failure> {
    let text =
        fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let grid = |v: &Value| -> Option<[[f64; 3]; 3]> { serde_json::from_value(v.clone()).ok() };
    let bad = || Failure::config(format!("{}: expected a 3x3 matrix", path.display()));
    if let Some(re) = grid(&v) {
        return Ok(AlphaMatrix::from_real(re));
    }
    let re = v.pointer("/alpha/re").and_then(grid).ok_or_else(bad)?;
    let im = v
        .pointer("/alpha/im")
        .and_then(grid)
        .unwrap_or([[0.0; 3]; 3]);
    let m = alpha_dynamo::linalg::CMat3::from_fn(|i, j| Complex64::new(re[i][j], im[i][j]));
    Ok(AlphaMatrix::from_entries(m))
}

fn selection(cfg: &RunConfig, u: Option<&VelocityProfile>) -> Result<XiSelection, Failure> {
    let a = match (&cfg.alpha_matrix, u) {
        (Some(p), _) => load_alpha_matrix(p)?,
        (None, Some(u)) => alpha(u),
        (None, None) => alpha(&build_flow(cfg)?),
    };
    Ok(select_xi(&a, cfg.direction_samples, cfg.denominator_bound)?)
}

fn selection_json(sel: &XiSelection) -> Value {
    let s = sel.solution();
    json!({
        "xi": s.xi,
        "lambda0": cpair(s.lambda),
        "b0": s.b0.map(cpair),
        "gamma": sel.gamma,
        "snapped": sel.is_snapped,
        "direction": sel.direction,
        "optimal_xi": sel.optimal.xi,
        "optimal_lambda0": cpair(sel.optimal.lambda),
        "denominator_bound": sel.denominator_bound,
    })
}

pub fn cmd_find_xi(cfg: &RunConfig) -> Outcome {
    let sel = selection(cfg, None)?;
    write_json(output_dir(cfg)?, "xi.json", &selection_json(&sel))?;
    let s = sel.solution();
    println!(
        "xi [{:.16e}, {:.16e}, {:.16e}] lambda0 {:.16e} snapped {}",
        s.xi[0], s.xi[1], s.xi[2], s.lambda.re, sel.is_snapped
    );
    Ok(())
}

fn mode_lambda(
    u: &VelocityProfile,
    br: &ContinuationBranch,
    eps: f64,
) -> Result<Complex64, Failure> {
    let nearest = br
        .samples
        .iter()
        .min_by(|a, b| (a.epsilon - eps).abs().total_cmp(&(b.epsilon - eps).abs()))
        .ok_or_else(|| Failure::new(5, "truncated", "branch has no samples"))?;
    if (nearest.epsilon - eps).abs() <= 1e-12 * eps.max(1.0) {
        return Ok(nearest.lambda);
    }
    Ok(newton_lambda(u, br.xi, eps, nearest.lambda)?.lambda)
}

pub fn cmd_branch(cfg: &RunConfig) -> Outcome {
    let u = build_flow(cfg)?;
    let sel = selection(cfg, Some(&u))?;
    let xi = sel.solution().xi;
    let br = continue_branch(&u, xi, cfg.epsilon_max, cfg.steps);
    let dir = output_dir(cfg)?;
    let f = fs::File::create(dir.join("branch.csv"))?;
    br.write_csv(BufWriter::new(f))?;
    let mut modes = Vec::new();
    for (i, &eps) in cfg.mode_epsilons.iter().enumerate() {
        if eps > br.epsilon_max_reached + 1e-12 || br.samples.is_empty() {
            continue;
        }
        let lam = mode_lambda(&u, &br, eps)?;
        let mode = build_mode(&u, xi, eps, lam)?;
        let (_, manifest) = mode.save(dir.join(format!("mode_{i}")))?;
        modes.push(json!({
            "epsilon": eps,
            "lambda": cpair(lam),
            "manifest": manifest.file_name().map(|s| s.to_string_lossy().into_owned()),
            "box": mode.box_spec.map(|b| b.periods()),
        }));
    }
    let first = br.samples.first();
    let summary = json!({
        "selection": selection_json(&sel),
        "samples": br.samples.len(),
        "epsilon_max_requested": br.epsilon_max_requested,
        "epsilon_max_reached": br.epsilon_max_reached,
        "truncated": br.truncated,
        "imaginary_anomalies": br.imaginary_anomalies,
        "df_dmu_at_zero": first.map(|s| cpair(s.df_dmu)),
        "derivative_margin_at_zero": first.map(|s| s.derivative_margin),
        "two_lambda0_squared": first.map(|s| 2.0 * s.lambda.re * s.lambda.re),
        "modes": modes,
        "flow": flow_json(cfg),
    });
    write_json(dir, "branch.json", &summary)?;
    println!(
        "branch: {} samples, epsilon reached {:.6}, lambda(end) {:.16e}",
        br.samples.len(),
        br.epsilon_max_reached,
        br.samples.last().map_or(f64::NAN, |s| s.lambda.re)
    );
    match &br.truncated {
        Some(why) => Err(Failure::new(5, "truncated", why.clone())),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct ValidationReport {
    init: String,
    rate: f64,
    window: (f64, f64),
    residual: f64,
    rate_rawtime: f64,
    branch_re_lambda: f64,
    relative_error: f64,
    tolerance: f64,
    dt: f64,
    horizon: f64,
    max_div_defect: f64,
    mode_residual: f64,
}

pub fn cmd_validate(cfg: &RunConfig) -> Outcome {
    let u = build_flow(cfg)?;
    let mode = BlochMode::load(&cfg.mode)
        .map_err(|e| Failure::io(format!("{}: {e}", cfg.mode.display())))?;
    let mode_residual = validate_mode(&mode, &u).unwrap_or(f64::INFINITY);
    let n = u.order();
    let (eps, xi) = (mode.epsilon, mode.xi);
    if !(eps > 0.0) {
        return Err(Failure::config("DNS needs a mode with epsilon > 0"));
    }
    let state = match cfg.init.as_str() {
        "random" => DnsState::new(
            random_bloch_field(n, mode.kappa(), RANDOM_INIT_DECAY, cfg.seed),
            eps,
            xi,
        ),
        _ => DnsState::from_mode(&mode, n),
    };
    let horizon = cfg.horizon.unwrap_or(if cfg.init == "random" {
        DNS_HORIZON_RANDOM
    } else {
        DNS_HORIZON_MODE
    });
    let dt = cfg
        .dt
        .unwrap_or_else(|| max_stable_dt(&u, eps, xi, DEFAULT_SAFETY).min(horizon / MIN_DNS_STEPS));
    let stepper = InductionStepper::new(&u, eps, xi, dt, DEFAULT_SAFETY)?;
    let (_, rows) = integrate(&stepper, state, horizon, cfg.record_every)?;
    let dir = output_dir(cfg)?;
    write_series_csv(
        BufWriter::new(fs::File::create(dir.join("growth.csv"))?),
        &rows,
    )?;
    let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.l2_norm)).collect();
    let g = growth_rate(&series)?;
    let target = mode.lambda.re;
    let report = ValidationReport {
        init: cfg.init.clone(),
        rate: g.rate,
        window: g.fit_window,
        residual: g.fit_residual,
        rate_rawtime: g.rate_rawtime(eps),
        branch_re_lambda: target,
        relative_error: (g.rate - target).abs() / target.abs(),
        tolerance: cfg.tolerance("validate"),
        dt,
        horizon,
        max_div_defect: rows
            .iter()
            .map(|r| r.div_defect / r.l2_norm)
            .fold(0.0, f64::max),
        mode_residual,
    };
    write_json(dir, "growth.json", &report)?;
    println!(
        "rate {:.10e} branch {:.10e} relative error {:.3e}",
        report.rate, target, report.relative_error
    );
    if !(g.rate > 0.0) {
        return Err(Failure::new(
            6,
            "no-growth",
            format!("measured rate {:.6e} is not positive", g.rate),
        ));
    }
    if !(report.relative_error <= report.tolerance) {
        return Err(Failure::new(
            1,
            "mismatch",
            format!(
                "relative error {:.3e} exceeds {:.3e}",
                report.relative_error, report.tolerance
            ),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct InstabilitySummary {
    delta: Vec<f64>,
    t_delta: Vec<Option<f64>>,
    hit: Vec<bool>,
    slope_fit: Option<f64>,
    intercept: Option<f64>,
    residual: Option<f64>,
    spread: Option<f64>,
    threshold: f64,
    lambda: f64,
    shadowing_error: Vec<f64>,
    nan_at: Vec<Option<f64>>,
    dt: f64,
    grid: [usize; 3],
    r#box: [u64; 3],
}

pub fn cmd_nonlinear(cfg: &RunConfig) -> Outcome {
    if cfg.deltas.is_empty() {
        return Err(Failure::config("delta list is empty"));
    }
    let u = build_flow(cfg)?;
    let mode = BlochMode::load(&cfg.mode)
        .map_err(|e| Failure::io(format!("{}: {e}", cfg.mode.display())))?;
    let bx = mode.box_spec.ok_or_else(|| {
        Failure::config("mode has no integer box; snap xi with a denominator bound")
    })?;
    let sys = MhdSystem::new(&u, bx, box_half(&bx, u.order(), &mode.xi), mode.epsilon)?;
    let dt = cfg.dt.unwrap_or_else(|| sys.max_stable_dt(MHD_SAFETY));
    let grid = sys.grid();
    let stepper = MhdStepper::new(sys, dt, MHD_SAFETY)?;
    let opts = RunOptions {
        s: cfg.sobolev_index,
        threshold_frac: cfg.threshold_frac,
        horizon: cfg.horizon.unwrap_or(MHD_HORIZON),
        dt,
        record_every: cfg.record_every,
        ..RunOptions::default()
    };
    let rep = run_instability(&stepper, &mode, &cfg.deltas, opts)?;
    let dir = output_dir(cfg)?;
    for (i, rows) in rep.amplitude_curves.iter().enumerate() {
        write_mhd_csv(
            BufWriter::new(fs::File::create(
                dir.join(format!("nonlinear_delta_{i}.csv")),
            )?),
            rows,
        )?;
    }
    let summary = InstabilitySummary {
        delta: rep.deltas.clone(),
        t_delta: rep.t_delta.clone(),
        hit: rep.thresholds_hit.clone(),
        slope_fit: rep.slope_fit,
        intercept: rep.intercept,
        residual: rep.fit_residual,
        spread: rep.spread,
        threshold: rep.threshold,
        lambda: rep.lambda,
        shadowing_error: rep.shadowing_error.clone(),
        nan_at: rep.nan_at.clone(),
        dt,
        grid,
        r#box: bx.periods(),
    };
    write_json(dir, "instability.json", &summary)?;
    for (d, t) in rep.deltas.iter().zip(&rep.t_delta) {
        match t {
            Some(t) => println!("delta {d:.1e} t_delta {t:.10e}"),
            None => println!("delta {d:.1e} threshold not reached"),
        }
    }
    if let Some(t) = rep.nan_at.iter().flatten().next() {
        return Err(Failure::from(Error::NanDetected { t: *t }));
    }
    if rep.none_hit() {
        return Err(Failure::new(
            7,
            "horizon-exceeded",
            "no delta reached the threshold",
        ));
    }
    if !rep.all_hit() {
        return Err(Failure::new(
            1,
            "threshold-missed",
            "some deltas did not reach the threshold",
        ));
    }
    let tol = cfg.tolerance("affinity");
    if rep.deltas.len() >= 3 && !rep.is_affine(tol) {
        return Err(Failure::new(
            1,
            "not-affine",
            format!(
                "fit residual {:?} exceeds {tol} of spread {:?}",
                rep.fit_residual, rep.spread
            ),
        ));
    }
    println!(
        "slope {:?} residual {:?} spread {:?}",
        rep.slope_fit, rep.fit_residual, rep.spread
    );
    Ok(())
}

pub fn cmd_check() -> Outcome {
    let results = invariants::run_all();
    let mut failed = 0;
    for r in &results {
        println!(
            "{} {} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(Failure::new(
            1,
            "check-failed",
            format!("{failed} of {} checks failed", results.len()),
        ));
    }
    Ok(())
}
