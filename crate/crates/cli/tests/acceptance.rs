//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::{LN_2, TAU};
use std::process::Command;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use spinsat::extremal::{
    adjoint_seed, clock_compare, default_seeds, propagate_bang, propagate_singular, switch_from_seed,
    trace_switching_curve, BangSign, ExtremalPoint, DEFAULT_SEED_COUNT, SWITCH_HORIZON,
};
use spinsat::model::{admissibility_bound, det_f1_v, flow, horizontal_ordinate, polar_diagnostics, singular_control};
use spinsat::synthesis::{
    asymptotic_times, bang_sequence, inversion_recovery, reachability_threshold, shoot_two_bang, sweep_ratio,
    synthesize_optimal, ArcKind, SynthesisOptions,
};
use spinsat::{NormalizedParams, Options, PhysicalParams, PlanarState, SingularBranch, Trajectory};

struct Gate {
    failed: usize,
}

impl Gate {
    /// `checks` pairs a label with its outcome; the line lists failed labels.
    fn report(&mut self, id: u32, title: &str, checks: &[(String, bool)]) {
        let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
        let detail: Vec<&str> = checks.iter().map(|c| c.0.as_str()).collect();
        if bad.is_empty() {
            println!("PASS [{id}] {title}: {}", detail.join("; "));
        } else {
            self.failed += 1;
            println!("FAIL [{id}] {title}: failed {}", bad.join("; "));
        }
    }
}

fn reference() -> PhysicalParams {
    PhysicalParams::new(0.740, 0.060, 32.3).unwrap()
}

fn criterion_1(g: &mut Gate) {
    let t = Instant::now();
    let opt = synthesize_optimal(&reference(), &SynthesisOptions::default());
    let ir = inversion_recovery(&reference(), &Options::default());
    let elapsed = t.elapsed().as_secs_f64();
    let (Ok(opt), Ok(ir)) = (opt, ir) else {
        return g.report(1, "reference durations", &[("synthesis failed".into(), false)]);
    };
    let (t_opt, t_ir) = (1e3 * opt.total_seconds, 1e3 * ir.total_seconds);
    let gain = 100.0 * (t_ir - t_opt) / t_ir;
    g.report(
        1,
        "reference durations",
        &[
            (format!("T_opt = {t_opt:.2} ms (202 +/- 5)"), (t_opt - 202.0).abs() <= 5.0),
            (format!("T_IR = {t_ir:.2} ms (478 +/- 10)"), (t_ir - 478.0).abs() <= 10.0),
            (format!("gain = {gain:.2} % (58 +/- 2)"), (gain - 58.0).abs() <= 2.0),
            (format!("runtime {elapsed:.3} s (< 1)"), elapsed < 1.0),
        ],
    );
}

fn criterion_2(g: &mut Gate) {
    let n = reference().normalize().unwrap();
    let (ig, ib) = (1.0 / n.small_gamma, 1.0 / n.big_gamma);
    g.report(
        2,
        "normalization",
        &[
            (format!("1/gamma = {ig:.4} (23.9 +/- 0.1)"), (ig - 23.9).abs() <= 0.1),
            (format!("1/Gamma = {ib:.4} (1.94 +/- 0.01)"), (ib - 1.94).abs() <= 0.01),
        ],
    );
}

fn criterion_3(g: &mut Gate) {
    let a = asymptotic_times(0.740, 0.060).unwrap();
    let rel = ((a.t_ir_inf - 0.740 * LN_2) / (0.740 * LN_2)).abs();
    g.report(
        3,
        "asymptotics",
        &[
            (format!("ratio_inf = {:.5} (0.389 +/- 0.001)", a.ratio_inf), (a.ratio_inf - 0.389).abs() <= 1e-3),
            (format!("T_IR_inf rel err {rel:.1e} (<= 1e-12)"), rel <= 1e-12),
        ],
    );
}

fn criterion_4(g: &mut Gate) {
    let omegas: Vec<f64> = (0..50).map(|i| 2.0 * 250f64.powf(i as f64 / 49.0)).collect();
    let t = Instant::now();
    let rows = sweep_ratio(&reference(), &omegas, &SynthesisOptions::default()).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let first = ratios.first().copied().unwrap_or(f64::NAN);
    let rise = ratios.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let last = rows.last().and_then(|r| r.ratio).unwrap_or(f64::NAN);
    let threshold = reachability_threshold(&reference(), 2.0, 3.5, 1e-3, &SynthesisOptions::default());
    let th = threshold.as_ref().copied().unwrap_or(f64::NAN);
    let in_unit = ratios.iter().all(|&r| r > 0.0 && r <= 1.0);
    g.report(
        4,
        "sweep shape",
        &[
            (format!("first reachable ratio {first:.4} (>= 0.95)"), first >= 0.95),
            (format!("largest increase {rise:.1e} (<= 1e-3)"), rise <= 1e-3),
            (format!("ratios in (0, 1]: {in_unit}"), in_unit),
            (format!("ratio at 500 Hz {last:.4} (0.389 +/- 0.02)"), (last - 0.389).abs() <= 0.02),
            (format!("threshold {th:.3} Hz (in [2.0, 3.5])"), (2.0..=3.5).contains(&th)),
            (format!("runtime {elapsed:.3} s for 50 amplitudes (< 30)"), elapsed < 30.0),
        ],
    );
}

fn criterion_5(g: &mut Gate) {
    let s = synthesize_optimal(&reference(), &SynthesisOptions::default()).unwrap();
    let kinds: Vec<ArcKind> = s.arcs.iter().map(|a| a.kind).collect();
    let want = [ArcKind::Bang, ArcKind::SingularHorizontal, ArcKind::Bang, ArcKind::SingularVertical];
    let radius = s.end().map_or(f64::NAN, |e| e.radius());
    let check = s.switching_check;
    g.report(
        5,
        "four-arc structure",
        &[
            (format!("arcs {}", s.structure()), kinds == want),
            (format!("terminal radius {radius:.1e} (< 1e-6)"), radius < 1e-6),
            (
                match check {
                    Some(c) => format!("arc 3 crosses switching curve: {} (clearance {:.4})", c.crosses, c.clearance),
                    None => "switching curve not traced".into(),
                },
                check.is_some_and(|c| !c.crosses),
            ),
        ],
    );
}

fn optimal_piece(n: &NormalizedParams, ya: f64, d: f64, o: &Options) -> Trajectory<2> {
    let z0 = horizontal_ordinate(n).unwrap();
    let y_min = admissibility_bound(n).unwrap();
    let arc = propagate_singular(&PlanarState::new(ya, z0), SingularBranch::Horizontal, &[], 10.0, n, o).unwrap();
    let mut t = arc.trajectory;
    t.append(bang_sequence(PlanarState::new(y_min, z0), &[(-TAU, d)], n, o).unwrap());
    t
}

fn competitor(
    n: &NormalizedParams,
    a: PlanarState,
    b: PlanarState,
    u: [f64; 2],
    guess: [f64; 2],
    o: &Options,
) -> Trajectory<2> {
    let s = shoot_two_bang(a, b, u, guess, n, o).unwrap();
    bang_sequence(a, &[(u[0], s[0]), (u[1], s[1])], n, o).unwrap()
}

fn criterion_6(g: &mut Gate) {
    let n = reference().normalize().unwrap();
    let z0 = horizontal_ordinate(&n).unwrap();
    let y_min = admissibility_bound(&n).unwrap();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut checks = Vec::new();

    let mut worst = 0f64;
    for _ in 0..1000 {
        let (r, th) = (rng.gen::<f64>().sqrt(), rng.gen_range(0.0..TAU));
        let s = PlanarState::new(r * th.cos(), r * th.sin());
        if let Ok(d) = polar_diagnostics(&s, &n) {
            worst = worst.max((det_f1_v(&s, &n) - d.r * d.dr_dot_dtheta).abs());
        }
    }
    checks.push((format!("det(F1,V) vs r dr_dot/dtheta max err {worst:.1e} (< 1e-10)"), worst < 1e-10));

    let (mut zdot, mut odd, mut axis) = (0f64, 0f64, 0f64);
    for _ in 0..1000 {
        let y = rng.gen_range(1e-3..1.0);
        let s = PlanarState::new(y, z0);
        let u = singular_control(&s, &n).unwrap();
        zdot = zdot.max(flow(&s, u, &n)[1].abs());
        odd = odd.max((singular_control(&PlanarState::new(-y, z0), &n).unwrap() + u).abs());
        axis = axis.max(singular_control(&PlanarState::new(0.0, rng.gen_range(-1.0..1.0)), &n).unwrap().abs());
    }
    checks.push((
        format!("u_s: |z_dot| {zdot:.1e}, oddness {odd:.1e}, u_s(0,z) {axis:.1e}"),
        zdot < 1e-10 && odd == 0.0 && axis == 0.0,
    ));

    let (mut lo, mut hi) = (1e-6, 1.0);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if singular_control(&PlanarState::new(m, z0), &n).unwrap().abs() > TAU {
            lo = m;
        } else {
            hi = m;
        }
    }
    let bis = 0.5 * (lo + hi);
    let at_bound = [y_min, -y_min].map(|y| (singular_control(&PlanarState::new(y, z0), &n).unwrap().abs() - TAU).abs());
    checks.push((
        format!(
            "y_min {y_min:.6} vs bisection {:.1e}; |u_s(+-y_min)| - 2pi {:.1e}",
            (bis - y_min).abs(),
            at_bound[0].max(at_bound[1])
        ),
        (bis - y_min).abs() < 1e-10 && at_bound.iter().all(|&e| e <= 1e-6),
    ));

    let o = Options::with_tol(1e-12);
    let a = optimal_piece(&n, 0.03, 0.015, &o);
    let (from, to) = (PlanarState::new(0.03, z0), PlanarState::from_array(a.last().state));
    let x0 = PlanarState::new(0.3, -0.5);
    let b = bang_sequence(x0, &[(TAU, 0.05), (-TAU, 0.08)], &n, &o).unwrap();
    let b_end = PlanarState::from_array(b.last().state);
    let pairs = [
        (a.clone(), competitor(&n, from, to, [-TAU, TAU], [0.1, 0.1], &o)),
        (a, competitor(&n, from, to, [TAU, -TAU], [0.02, 0.05], &o)),
        (b, competitor(&n, x0, b_end, [-TAU, TAU], [0.08, 0.05], &o)),
    ];
    let (mut dev, mut anti, mut audit) = (0f64, 0f64, f64::INFINITY);
    for (i, (p, q)) in pairs.iter().enumerate() {
        let cc = clock_compare(p, q, &n).unwrap();
        dev = dev.max((cc - (p.duration() - q.duration())).abs());
        anti = anti.max((cc + clock_compare(q, p, &n).unwrap()).abs());
        if i < 2 {
            audit = audit.min(clock_compare(q, p, &n).unwrap());
        }
    }
    checks.push((
        format!("clock form: |loop - dtau| {dev:.1e}, antisymmetry {anti:.1e}, competitor - optimal {audit:.2e}"),
        dev < 1e-6 && anti < 1e-10 && audit >= -1e-6,
    ));

    let opts = Options::default();
    let (mut h_min, mut h_drift, mut scale) = (f64::INFINITY, 0f64, 0f64);
    for &y in &default_seeds(&n, DEFAULT_SEED_COUNT).unwrap() {
        let s = PlanarState::new(y, z0);
        let p = adjoint_seed(&s, &n).unwrap();
        let arc =
            propagate_bang(&ExtremalPoint::new(s, p, TAU, &n), BangSign::Plus, &[], SWITCH_HORIZON, &n, &opts).unwrap();
        let h0 = arc.points[0].1.h;
        for (_, e) in &arc.points {
            h_min = h_min.min(e.h);
            h_drift = h_drift.max((e.h - h0).abs());
        }
        let base = switch_from_seed(&n, s, p, SWITCH_HORIZON, &opts).unwrap().unwrap();
        for k in [1e-3, 1e3] {
            let other = switch_from_seed(&n, s, p.scaled(k), SWITCH_HORIZON, &opts).unwrap().unwrap();
            scale = scale.max((other.tau - base.tau).abs());
        }
    }
    let curve = trace_switching_curve(&n, &default_seeds(&n, 8).unwrap(), &opts).unwrap();
    checks.push((
        format!(
            "extremals: min H {h_min:.1e}, H drift {h_drift:.1e}, scaling {scale:.1e}, curve points {}",
            curve.points.len()
        ),
        h_min >= -1e-9 && h_drift <= 1e-8 && scale <= 1e-10,
    ));

    let t = |tol: f64| synthesize_optimal(&reference(), &SynthesisOptions::with_tol(tol)).map(|s| s.total_tau);
    let conv = match (t(1e-10), t(5e-11)) {
        (Ok(a), Ok(b)) => (a - b).abs(),
        _ => f64::NAN,
    };
    checks.push((format!("self-convergence |dT_opt| {conv:.1e} (< 1e-6)"), conv < 1e-6));

    g.report(6, "property suite", &checks);
}

fn criterion_7(g: &mut Gate) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("reference.toml");
    std::fs::write(&cfg, "[relaxation]\nt1_ms = 740.0\nt2_ms = 60.0\n\n[control]\nomega_max_hz = 32.3\n").unwrap();
    let files = ["schedule.toml", "trajectory.csv", "summary.toml"];
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_spinsat"))
            .args(["synthesize", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .unwrap()
            .status;
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.join(f)).unwrap_or_default()).collect();
        runs.push((status.success(), bytes));
    }
    let identical = runs[0].1 == runs[1].1 && runs[0].1.iter().all(|b| !b.is_empty());
    g.report(
        7,
        "determinism",
        &[
            (format!("both runs exit 0: {}", runs.iter().all(|r| r.0)), runs.iter().all(|r| r.0)),
            (format!("{} files byte-identical: {identical}", files.len()), identical),
        ],
    );
}

fn main() {
    let mut g = Gate { failed: 0 };
    criterion_1(&mut g);
    criterion_2(&mut g);
    criterion_3(&mut g);
    criterion_4(&mut g);
    criterion_5(&mut g);
    criterion_6(&mut g);
    criterion_7(&mut g);
    println!("acceptance: {} of 7 criteria passed", 7 - g.failed);
    if g.failed > 0 {
        std::process::exit(1);
    }
}
