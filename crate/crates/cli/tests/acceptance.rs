//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! `PASS`/`FAIL` line per criterion and exits nonzero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use alpha_dynamo::alpha::{alpha, alpha_closed_sum, select_xi};
use alpha_dynamo::continuation::{
    build_mode, continue_branch, dispersion, newton_lambda, BlochMode,
};
use alpha_dynamo::field::io::{load_field, save_field};
use alpha_dynamo::field::{abc_flow, random_profile, VelocityProfile, TWO_PI};
use alpha_dynamo::induction::{
    growth_rate, integrate, max_stable_dt, random_bloch_field, validate_mode, DnsState,
    InductionStepper, DEFAULT_SAFETY,
};
use alpha_dynamo::linalg::{self, c, C64};
use alpha_dynamo::mhd::{
    box_half, interp_check, probe_system, q_estimate_probe, q_ratio, random_state, run_instability,
    MhdState, MhdStepper, MhdSystem, RunOptions, MHD_SAFETY,
};

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

struct Suite {
    results: Vec<Outcome>,
}

impl Suite {
    fn record(
        &mut self,
        id: u32,
        name: &'static str,
        budget_s: u64,
        start: Instant,
        checks: Vec<(bool, String)>,
    ) {
        let elapsed = start.elapsed();
        let budget = Duration::from_secs(budget_s);
        let mut passed = checks.iter().all(|c| c.0);
        let mut detail: Vec<String> = checks
            .into_iter()
            .map(|(ok, d)| if ok { d } else { format!("FAILED {d}") })
            .collect();
        if elapsed > budget {
            passed = false;
            detail.push(format!(
                "FAILED runtime {:.1}s over {}s",
                elapsed.as_secs_f64(),
                budget_s
            ));
        }
        let o = Outcome {
            id,
            name,
            passed,
            detail: detail.join("; "),
            elapsed,
            budget,
        };
        println!("{}", line(&o));
        self.results.push(o);
    }
}

fn line(o: &Outcome) -> String {
    format!(
        "{} criterion {} ({}) [{:.1}s of {}s]: {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.elapsed.as_secs_f64(),
        o.budget.as_secs(),
        o.detail
    )
}

fn le(name: &str, value: f64, limit: f64) -> (bool, String) {
    (value <= limit, format!("{name} {value:.3e} <= {limit:.1e}"))
}

fn ge(name: &str, value: f64, limit: f64) -> (bool, String) {
    (value >= limit, format!("{name} {value:.3e} >= {limit:.1e}"))
}

fn within(name: &str, value: f64, lo: f64, hi: f64) -> (bool, String) {
    (
        value >= lo && value <= hi,
        format!("{name} {value:.4} in [{lo}, {hi}]"),
    )
}

fn criteria_1_2(suite: &mut Suite) {
    let start = Instant::now();
    let profiles: Vec<VelocityProfile> = (0..100).map(|s| random_profile(8, 4.0, s)).collect();
    let alphas: Vec<_> = profiles.iter().map(alpha).collect();
    let worst = alphas
        .iter()
        .map(|a| (a.hermiticity_defect() / a.norm()).max(a.imag_defect() / a.norm()))
        .fold(0.0, f64::max);
    suite.record(
        1,
        "alpha real symmetric",
        30,
        start,
        vec![le("max relative defect", worst, 1e-10)],
    );

    let start = Instant::now();
    let alphas: Vec<_> = profiles.iter().map(alpha).collect();
    let closed = profiles
        .iter()
        .zip(&alphas)
        .map(|(u, a)| linalg::fro(&(a.entries() - alpha_closed_sum(u).entries())) / a.norm())
        .fold(0.0, f64::max);
    let mut abc = 0.0f64;
    for (a, b, cc) in [(1.0, 1.0, 1.0), (1.0, 2.0, 0.5), (0.3, 1.7, 2.2)] {
        let m = alpha(&abc_flow(a, b, cc, 4));
        let diag = [b * b, cc * cc, a * a].map(|x| -x / TWO_PI);
        let mut d = 0.0f64;
        for (i, &di) in diag.iter().enumerate() {
            for j in 0..3 {
                let want = if i == j { di } else { 0.0 };
                d = d.max((m.entries()[(i, j)] - c(want, 0.0)).norm());
            }
        }
        abc = abc.max(d / diag.iter().map(|x| x.abs()).fold(0.0, f64::max));
    }
    suite.record(
        2,
        "alpha oracle equivalence",
        30,
        start,
        vec![
            le("operational vs closed sum", closed, 1e-12),
            le("ABC closed form", abc, 1e-12),
        ],
    );
}

fn criterion_3(suite: &mut Suite) {
    let start = Instant::now();
    let u = abc_flow(1.0, 1.0, 1.0, 4);
    let sel = select_xi(&alpha(&u), 200, 0).expect("ABC(1,1,1) is unstable");
    let lam0 = sel.optimal.lambda;
    let xi = sel.optimal.xi;
    let want_lam = 1.0 / (16.0 * PI * PI);
    let f0 = dispersion(&u, xi, 0.0, lam0).unwrap();
    // central difference of the determinant in mu
    let h = 1e-4 * lam0.re;
    let fp = dispersion(&u, xi, 0.0, lam0 + h).unwrap().value;
    let fm = dispersion(&u, xi, 0.0, lam0 - h).unwrap().value;
    let dfdmu = (fp - fm) / (2.0 * h);
    let margin = dfdmu.norm() * f0.radius / f0.scale;
    let detail = format!(
        "df/dmu {:.6e}{:+.1e}i; -8 lambda0^2 = {:.6e}; stated 2 lambda0^2 = {:.6e}",
        dfdmu.re,
        dfdmu.im,
        -8.0 * want_lam * want_lam,
        2.0 * want_lam * want_lam
    );
    suite.record(
        3,
        "eps = 0 spectral structure",
        5,
        start,
        vec![
            le("|lambda0 - 1/(16 pi^2)|", (lam0 - want_lam).norm(), 1e-10),
            le(
                "||xi| - 1/(4 pi)|",
                (sel.optimal.xi_norm() - 1.0 / (4.0 * PI)).abs(),
                1e-10,
            ),
            le("|f(0, lambda0)| / scale", f0.value.norm() / f0.scale, 1e-12),
            ge("derivative margin / Newton tolerance", margin / 1e-10, 1e3),
            (true, detail),
        ],
    );
}

fn criterion_4(suite: &mut Suite) -> BlochMode {
    let start = Instant::now();
    let u = abc_flow(1.0, 1.0, 1.0, 16);
    let xi = select_xi(&alpha(&u), 200, 100).unwrap().solution().xi;
    let br = continue_branch(&u, xi, 0.2, 20);
    let mut worst_res = 0.0f64;
    for s in &br.samples {
        let d = dispersion(&u, xi, s.epsilon, s.lambda).unwrap();
        worst_res = worst_res.max(d.value.norm() / d.scale);
    }
    let min_re = br
        .samples
        .iter()
        .map(|s| s.lambda.re)
        .fold(f64::INFINITY, f64::min);
    let max_im = br
        .samples
        .iter()
        .map(|s| s.lambda.im.abs())
        .fold(0.0, f64::max);
    let cubic_error = |h: f64| {
        let mut guess = br.samples[0].lambda;
        let l: Vec<C64> = (0..5)
            .map(|i| {
                let r = newton_lambda(&u, xi, i as f64 * h, guess).unwrap();
                guess = r.lambda;
                r.lambda
            })
            .collect();
        (l[4] - (-l[0] + l[1] * 4.0 - l[2] * 6.0 + l[3] * 4.0)).norm()
    };
    let ratio = cubic_error(0.05) / cubic_error(0.025);
    let mode = build_mode(&u, xi, 0.2, br.samples.last().unwrap().lambda).unwrap();
    suite.record(
        4,
        "branch continuation",
        300,
        start,
        vec![
            (
                br.samples.len() == 20 && br.is_complete(),
                format!(
                    "{} samples to eps {}",
                    br.samples.len(),
                    br.epsilon_max_reached
                ),
            ),
            le("max |f| / scale", worst_res, 1e-10),
            (min_re > 0.0, format!("min Re lambda {min_re:.6e} > 0")),
            le("max |Im lambda|", max_im, 1e-8),
            within("cubic halving ratio", ratio, 12.0, 20.0),
        ],
    );
    mode
}

fn criterion_5(suite: &mut Suite) -> BlochMode {
    let start = Instant::now();
    let eps = 0.125;
    let u = abc_flow(1.0, 1.0, 1.0, 16);
    let xi = select_xi(&alpha(&u), 200, 100).unwrap().solution().xi;
    let br = continue_branch(&u, xi, eps, 6);
    let lam = br.samples.last().unwrap().lambda;
    let mode = build_mode(&u, xi, eps, lam).unwrap();
    let dt = max_stable_dt(&u, eps, xi, DEFAULT_SAFETY);
    let stepper = InductionStepper::new(&u, eps, xi, dt, DEFAULT_SAFETY).unwrap();
    let run = |state: DnsState, horizon: f64| {
        let (_, rows) = integrate(&stepper, state, horizon, 10).unwrap();
        let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.l2_norm)).collect();
        let drift = rows
            .iter()
            .map(|r| r.div_defect / r.l2_norm)
            .fold(0.0, f64::max);
        (growth_rate(&series).unwrap().rate, drift)
    };
    let (rate_mode, drift_mode) = run(DnsState::from_mode(&mode, 16), 200.0);
    let noise = random_bloch_field(16, mode.kappa(), 2.0, 42);
    let (rate_rand, drift_rand) = run(DnsState::new(noise, eps, xi), 800.0);
    suite.record(
        5,
        "DNS validation",
        600,
        start,
        vec![
            le(
                "mode-init relative rate error",
                (rate_mode - lam.re).abs() / lam.re,
                0.02,
            ),
            le(
                "random-init relative rate error",
                (rate_rand - lam.re).abs() / lam.re,
                0.02,
            ),
            le("div drift", drift_mode.max(drift_rand), 1e-10),
        ],
    );
    mode
}

fn criterion_7(suite: &mut Suite) -> BlochMode {
    let start = Instant::now();
    let a = TWO_PI;
    let n = 3;
    let eps = 0.5;
    let u = abc_flow(a, a, a, n);
    let xi = select_xi(&alpha(&u), 200, 8).unwrap().solution().xi;
    let br = continue_branch(&u, xi, eps, 11);
    let mode = build_mode(&u, xi, eps, br.samples.last().unwrap().lambda).unwrap();
    let bx = mode.box_spec.expect("integer box");
    let sys = MhdSystem::new(&u, bx, box_half(&bx, n, &xi), eps).unwrap();
    let grid = sys.grid();
    let dt = sys.max_stable_dt(MHD_SAFETY);
    let stepper = MhdStepper::new(sys, dt, MHD_SAFETY).unwrap();
    let opts = RunOptions {
        horizon: 20.0,
        dt,
        ..RunOptions::default()
    };
    let rep = run_instability(&stepper, &mode, &[1e-2, 1e-3, 1e-4], opts).unwrap();
    let shadow = rep.shadowing_error.iter().copied().fold(0.0, f64::max);
    let periods = bx.periods();
    suite.record(
        7,
        "nonlinear instability",
        3600,
        start,
        vec![
            (
                periods.iter().all(|&t| t <= 8) && grid.iter().product::<usize>() <= 64 * 64 * 64,
                format!("box {periods:?}, grid {grid:?}"),
            ),
            (
                rep.all_hit(),
                format!(
                    "t_delta {:?} at threshold {:.4e}",
                    rep.t_delta, rep.threshold
                ),
            ),
            le(
                "fit residual / spread",
                rep.fit_residual.unwrap_or(f64::INFINITY) / rep.spread.unwrap_or(0.0),
                0.1,
            ),
            le("shadowing error", shadow, 0.05),
            (
                true,
                format!(
                    "slope {:.6} vs 1/lambda {:.6}",
                    rep.slope_fit.unwrap_or(f64::NAN),
                    1.0 / rep.lambda
                ),
            ),
        ],
    );
    mode
}

fn noisy(mode: &BlochMode, seed: u64) -> BlochMode {
    let mut m = mode.clone();
    let n = m.btilde.order();
    let noise = random_bloch_field(n, [0.0; 3], 1.0, seed).resampled(m.btilde.half());
    let bn = noise.l2_norm();
    m.btilde.axpy(c(0.1 * m.btilde.l2_norm() / bn, 0.0), &noise);
    let nb = linalg::norm(&m.bbar);
    m.bbar = linalg::add(
        &m.bbar,
        &linalg::scale_re(
            0.1 * nb / 3f64.sqrt(),
            &[c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 1.0)],
        ),
    );
    m
}

fn criterion_6(suite: &mut Suite, modes: &[(BlochMode, VelocityProfile)], dir: &Path) {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut weakest = f64::INFINITY;
    for (i, (mode, u)) in modes.iter().enumerate() {
        let (_, manifest) = mode.save(dir.join(format!("mode_{i}"))).unwrap();
        let loaded = BlochMode::load(&manifest).unwrap();
        worst = worst.max(validate_mode(&loaded, u).unwrap());
        weakest = weakest.min(validate_mode(&noisy(&loaded, 17 + i as u64), u).unwrap());
    }
    suite.record(
        6,
        "operator residual",
        60,
        start,
        vec![
            le("max packaged residual", worst, 1e-8),
            ge("min noisy residual", weakest, 1e-2),
        ],
    );
}

fn criterion_8(suite: &mut Suite) {
    let start = Instant::now();
    let s = 4.0;
    let sys = probe_system(0.5).unwrap();
    let bx = *sys.box_spec();
    let states: Vec<MhdState> = (0..100)
        .map(|i| random_state(&sys, 1.0 + 3.0 * i as f64 / 100.0, i))
        .collect();
    let interp = states
        .iter()
        .map(|st| interp_check(st, s, &bx))
        .fold(0.0, f64::max);
    let mut single = 0.0f64;
    for (k, v) in [
        ([1, 0, 0], [0.0, 1.0, 0.5]),
        ([2, -1, 3], [1.0, 2.0, 0.0]),
        ([0, 0, 4], [0.3, -0.7, 0.0]),
    ] {
        let mut b = alpha_dynamo::field::SpectralVectorField::zeros_aniso(sys.half());
        let q = bx.wavevector(k);
        let vec = alpha_dynamo::linalg::real3(v);
        // remove the component along q so the mode is solenoidal
        let qq = linalg::rdot(&q, &q);
        let along = linalg::dot(&alpha_dynamo::linalg::real3(q), &vec) / qq;
        let sol = linalg::sub(&vec, &linalg::scale(along, &alpha_dynamo::linalg::real3(q)));
        b.set(alpha_dynamo::field::WaveIndex(k), sol).unwrap();
        b.symmetrize_real();
        let st = MhdState::new(
            alpha_dynamo::field::SpectralVectorField::zeros_aniso(sys.half()),
            b,
        );
        single = single.max((interp_check(&st, s, &bx) - 1.0).abs());
    }
    let mut scale_dev = 0.0f64;
    for st in states.iter().step_by(10) {
        let r = q_ratio(&sys, st, s);
        for f in [1e-3, 7.0, 1e3] {
            scale_dev = scale_dev.max((q_ratio(&sys, &st.scaled(f), s) - r).abs() / r);
        }
    }
    let probes: Vec<f64> = (0..5)
        .map(|k| q_estimate_probe(100, s, 0.5, 1000 * k).unwrap())
        .collect();
    let pmax = probes.iter().copied().fold(0.0, f64::max);
    let pmin = probes.iter().copied().fold(f64::INFINITY, f64::min);
    suite.record(
        8,
        "a-priori estimate probes",
        60,
        start,
        vec![
            le("max interpolation ratio - 1", interp - 1.0, 1e-12),
            le("single-mode |ratio - 1|", single, 1e-12),
            le("Q-ratio scale deviation", scale_dev, 1e-10),
            (
                pmax.is_finite() && pmax / pmin <= 2.0,
                format!(
                    "probe maxima {:.4e}..{:.4e}, spread x{:.3}",
                    pmin,
                    pmax,
                    pmax / pmin
                ),
            ),
        ],
    );
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_alpha-dynamo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn criterion_9(suite: &mut Suite, dir: &Path) {
    let start = Instant::now();
    let mut checks = Vec::new();
    let f = random_profile(6, 2.0, 9).field().clone();
    let path = dir.join("u.field");
    save_field(&path, &f).unwrap();
    let g = load_field(&path).unwrap();
    let bits = |x: &alpha_dynamo::field::SpectralVectorField| -> Vec<u64> {
        x.coeffs()
            .iter()
            .flat_map(|v| v.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]))
            .collect()
    };
    checks.push((
        bits(&f) == bits(&g) && f.half() == g.half(),
        "field file bit-exact round trip".to_string(),
    ));
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        let o = out.to_str().unwrap();
        let br = run_cli(&[
            "branch",
            "--flow",
            "random:3",
            "--N",
            "4",
            "--steps",
            "4",
            "--epsilon-max",
            "0.1",
            "--denominator-bound",
            "0",
            "--output-dir",
            o,
        ]);
        let dns = run_cli(&[
            "validate-dns",
            "--flow",
            "random:3",
            "--N",
            "4",
            "--init",
            "random",
            "--seed",
            "5",
            "--horizon",
            "50",
            "--output-dir",
            o,
        ]);
        let read = |n: &str| std::fs::read(out.join(n)).unwrap_or_default();
        outputs.push((
            br.status.code(),
            read("branch.csv"),
            read("mode_0.field"),
            read("growth.csv"),
        ));
        let _ = dns;
    }
    let same = outputs[0] == outputs[1] && !outputs[0].1.is_empty() && !outputs[0].3.is_empty();
    checks.push((
        same,
        format!(
            "repeated runs byte-identical (branch exit {:?})",
            outputs[0].0
        ),
    ));
    let chk = run_cli(&["check"]);
    let text = String::from_utf8_lossy(&chk.stdout);
    let n = text.lines().filter(|l| l.starts_with("PASS")).count();
    checks.push((
        chk.status.success() && !text.contains("FAIL"),
        format!("check: {n} invariants green"),
    ));
    suite.record(9, "infrastructure", 600, start, checks);
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut suite = Suite {
        results: Vec::new(),
    };
    criteria_1_2(&mut suite);
    criterion_3(&mut suite);
    let m4 = criterion_4(&mut suite);
    let m5 = criterion_5(&mut suite);
    let m7 = criterion_7(&mut suite);
    let a = TWO_PI;
    let modes = vec![
        (m4, abc_flow(1.0, 1.0, 1.0, 16)),
        (m5, abc_flow(1.0, 1.0, 1.0, 16)),
        (m7, abc_flow(a, a, a, 3)),
    ];
    criterion_6(&mut suite, &modes, dir.path());
    criterion_8(&mut suite);
    criterion_9(&mut suite, dir.path());
    suite.results.sort_by_key(|o| o.id);
    println!("\nacceptance summary");
    for o in &suite.results {
        println!("{}", line(o));
    }
    let failed = suite.results.iter().filter(|o| !o.passed).count();
    println!(
        "{} of {} criteria passed",
        suite.results.len() - failed,
        suite.results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
