use std::path::PathBuf;

use serde::Serialize;
use spinsat::extremal::{default_seeds, trace_switching_curve, ExtremalError, SingularClass, DEFAULT_SEED_COUNT};
use spinsat::model::{admissibility_bound, horizontal_ordinate, ModelError};
use spinsat::synthesis::{
    asymptotic_times, field_map, inversion_recovery, simulate_schedule, singular_lines, sweep_ratio,
    synthesize_optimal, ArcControl, ControlSchedule, Junction, SingularLinePoint, SwitchingCheck, SynthesisError,
    SynthesisOptions,
};
use spinsat::{NormalizedParams, PhysicalParams, PlanarState, SingularBranch};

use crate::config::RunConfig;
use crate::output::{float, opt_float, Bundle};
use crate::CliError;

/// Resampling step of the exported trajectory, normalized time.
pub const TRAJECTORY_DT: f64 = 1e-3;

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Unreachable(_) => CliError::Unreachable(e.to_string()),
            SynthesisError::UnsupportedRegime { .. } | SynthesisError::InvalidAmplitudes(_) => {
                CliError::Config(e.to_string())
            }
            SynthesisError::Model(m) => m.into(),
            SynthesisError::Extremal(x) => x.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<ExtremalError> for CliError {
    fn from(e: ExtremalError) -> Self {
        match e {
            ExtremalError::Model(m) => m.into(),
            ExtremalError::NoSeeds(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParams(_) | ModelError::DegenerateRelaxation => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

fn synthesis_options(cfg: &RunConfig) -> SynthesisOptions {
    SynthesisOptions::with_tol(cfg.tol)
}

#[derive(Serialize)]
struct ArcRecord {
    kind: &'static str,
    u: ArcControl,
    duration_tau: f64,
    duration_ms: f64,
    start: [f64; 2],
    end: [f64; 2],
}

#[derive(Serialize)]
struct ParamsRecord {
    t1_s: f64,
    t2_s: f64,
    omega_max_hz: f64,
    big_gamma: f64,
    small_gamma: f64,
    u_max: f64,
}

#[derive(Serialize)]
struct ScheduleFile {
    total_tau: f64,
    total_ms: f64,
    total_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    junction: Option<Junction>,
    params: ParamsRecord,
    arcs: Vec<ArcRecord>,
}

impl ScheduleFile {
    fn new(s: &ControlSchedule) -> Self {
        let p = &s.params;
        Self {
            total_tau: s.total_tau,
            total_ms: 1e3 * s.total_seconds,
            total_seconds: s.total_seconds,
            junction: s.junction,
            params: params_record(p, &s.normalized),
            arcs: s
                .arcs
                .iter()
                .map(|a| ArcRecord {
                    kind: a.kind.as_str(),
                    u: a.u,
                    duration_tau: a.duration_tau,
                    duration_ms: 1e3 * p.seconds_from_tau(a.duration_tau),
                    start: a.start,
                    end: a.end,
                })
                .collect(),
        }
    }
}

fn params_record(p: &PhysicalParams, n: &NormalizedParams) -> ParamsRecord {
    ParamsRecord {
        t1_s: p.t1,
        t2_s: p.t2,
        omega_max_hz: p.omega_max_hz,
        big_gamma: n.big_gamma,
        small_gamma: n.small_gamma,
        u_max: n.u_max,
    }
}

#[derive(Serialize)]
struct Summary {
    t_opt_tau: f64,
    t_opt_ms: f64,
    t_ir_tau: f64,
    t_ir_ms: f64,
    gain_percent: f64,
    structure: String,
    y_min: f64,
    z0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    switching_check: Option<SwitchingCheck>,
}

pub fn synthesize(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = cfg.params()?;
    let opt = synthesize_optimal(&p, &synthesis_options(cfg))?;
    let ir = inversion_recovery(&p, &cfg.options())?;
    let traj = simulate_schedule(&opt, PlanarState::NORTH_POLE, &cfg.options().sample_every(TRAJECTORY_DT))?;

    let n = &opt.normalized;
    let summary = Summary {
        t_opt_tau: opt.total_tau,
        t_opt_ms: 1e3 * opt.total_seconds,
        t_ir_tau: ir.total_tau,
        t_ir_ms: 1e3 * ir.total_seconds,
        gain_percent: 100.0 * (ir.total_seconds - opt.total_seconds) / ir.total_seconds,
        structure: opt.structure(),
        y_min: admissibility_bound(n)?,
        z0: horizontal_ordinate(n)?,
        switching_check: opt.switching_check,
    };

    let mut out = Bundle::new(&cfg.output_dir, &cfg.digest());
    out.toml("schedule.toml", &ScheduleFile::new(&opt))?;
    let rows = traj.samples.iter().map(|s| {
        vec![
            float(s.tau),
            float(1e3 * p.seconds_from_tau(s.tau)),
            float(s.state[0]),
            float(s.state[1]),
            float(s.u),
            opt.arcs[s.segment].kind.as_str().to_string(),
        ]
    });
    out.csv("trajectory.csv", &[], &["tau", "t_ms", "y", "z", "u", "arc_kind"], rows)?;
    out.toml("summary.toml", &summary)?;
    println!(
        "t_opt = {:.3} ms, t_ir = {:.3} ms, gain = {:.2} %",
        summary.t_opt_ms, summary.t_ir_ms, summary.gain_percent
    );
    out.write()
}

/// `LO:HI:N`, log-spaced, endpoints included.
pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("malformed --omega-range '{s}', expected LO:HI:N"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 || (n == 1 && hi != lo) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect())
}

pub fn sweep(cfg: &RunConfig, omegas: &[f64]) -> Result<Vec<PathBuf>, CliError> {
    if omegas.is_empty() {
        return Err(CliError::Usage("no amplitudes: pass --omega or --omega-range".into()));
    }
    let base = PhysicalParams::new(cfg.t1_s(), cfg.t2_s(), omegas[0]).map_err(|e| CliError::Config(e.to_string()))?;
    let so = SynthesisOptions { check_switching: false, ..synthesis_options(cfg) };
    let rows = sweep_ratio(&base, omegas, &so)?;
    let asym = asymptotic_times(cfg.t1_s(), cfg.t2_s()).ok();

    let mut out = Bundle::new(&cfg.output_dir, &cfg.digest());
    let note: Vec<String> = asym
        .iter()
        .map(|a| {
            format!(
                "asymptote t_opt_inf_s={} t_ir_inf_s={} ratio_inf={}",
                float(a.t_opt_inf),
                float(a.t_ir_inf),
                float(a.ratio_inf)
            )
        })
        .collect();
    let csv_rows = rows.iter().map(|r| {
        vec![float(r.omega_hz), opt_float(r.t_opt_s), opt_float(r.t_ir_s), opt_float(r.ratio), r.reachable.to_string()]
    });
    out.csv("sweep.csv", &note, &["omega_hz", "t_opt_s", "t_ir_s", "ratio", "reachable"], csv_rows)?;
    if let Some(a) = asym {
        asymptote_csv(&mut out, a)?;
        println!("{}", note[0]);
    }
    let reachable = rows.iter().filter(|r| r.reachable).count();
    println!("{} amplitudes, {reachable} reachable", rows.len());
    out.write()
}

fn asymptote_csv(out: &mut Bundle, a: spinsat::synthesis::AsymptoticTimes) -> Result<(), CliError> {
    out.csv(
        "asymptote.csv",
        &[],
        &["t_opt_inf_s", "t_ir_inf_s", "ratio_inf", "alpha"],
        [vec![float(a.t_opt_inf), float(a.t_ir_inf), float(a.ratio_inf), float(a.alpha)]],
    )
}

pub fn asymptote(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let a = asymptotic_times(cfg.t1_s(), cfg.t2_s()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = Bundle::new(&cfg.output_dir, &cfg.digest());
    asymptote_csv(&mut out, a)?;
    println!("t_opt_inf = {:.6} s, t_ir_inf = {:.6} s, ratio_inf = {:.6}", a.t_opt_inf, a.t_ir_inf, a.ratio_inf);
    out.write()
}

fn branch_str(b: SingularBranch) -> &'static str {
    match b {
        SingularBranch::Horizontal => "horizontal",
        SingularBranch::Vertical => "vertical",
    }
}

fn class_str(c: SingularClass) -> &'static str {
    match c {
        SingularClass::TimeMinimizing => "time_minimizing",
        SingularClass::TimeMaximizing => "time_maximizing",
    }
}

fn line_rows(points: &[SingularLinePoint]) -> impl Iterator<Item = Vec<String>> + '_ {
    points.iter().map(|p| {
        vec![float(p.y), float(p.z), float(p.u_s), p.admissible.to_string(), class_str(p.classification).into()]
    })
}

pub fn fieldmap(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let n = cfg.params()?.normalize()?;
    let map = field_map(&n, cfg.grid_n)?;
    let (horizontal, vertical) = singular_lines(&n, cfg.grid_n)?;

    let mut out = Bundle::new(&cfg.output_dir, &cfg.digest());
    let rows = map.cells.iter().map(|c| {
        vec![
            float(c.y),
            float(c.z),
            opt_float(c.dr_dot_dtheta),
            opt_float(c.det_f1v),
            c.on_singular.map(branch_str).unwrap_or_default().into(),
            c.classification.map(class_str).unwrap_or_default().into(),
        ]
    });
    out.csv(
        "fieldmap.csv",
        &[format!("grid_n={}", cfg.grid_n)],
        &["y", "z", "dr_dot_dtheta", "det_f1v", "on_singular", "classification"],
        rows,
    )?;
    let cols = ["y", "z", "u_s", "admissible", "classification"];
    if !horizontal.is_empty() {
        out.csv("singular_horizontal.csv", &[], &cols, line_rows(&horizontal))?;
    }
    out.csv("singular_vertical.csv", &[], &cols, line_rows(&vertical))?;
    out.write()
}

pub fn switching_curve(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let n = cfg.params()?.normalize()?;
    horizontal_ordinate(&n)?;
    if n.big_gamma <= n.small_gamma {
        return Err(CliError::Config("switching curve needs T1 > T2".into()));
    }
    let seeds = default_seeds(&n, DEFAULT_SEED_COUNT)?;
    let curve = trace_switching_curve(&n, &seeds, &cfg.options())?;
    for y in &curve.missed {
        eprintln!("spinsat: seed y = {y:e} did not switch within the horizon");
    }
    let mut out = Bundle::new(&cfg.output_dir, &cfg.digest());
    let meta = vec![
        format!("seed_point y_min={} z0={}", float(curve.seed.y), float(curve.seed.z)),
        format!("seeds={} switched={} missed={}", seeds.len(), curve.points.len(), curve.missed.len()),
    ];
    let rows = curve.points.iter().map(|p| vec![float(p.seed_y), float(p.state.y), float(p.state.z), float(p.tau)]);
    out.csv("switching_curve.csv", &meta, &["seed_y", "switch_y", "switch_z", "tau_to_switch"], rows)?;
    out.write()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_is_log_spaced_with_exact_endpoints() {
        let r = parse_range("2:500:5").unwrap();
        assert_eq!(r.len(), 5);
        assert_eq!((r[0], r[4]), (2.0, 500.0));
        let q: Vec<f64> = r.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(q.iter().all(|x| (x - q[0]).abs() < 1e-12));
        assert_eq!(parse_range("32.3:32.3:1").unwrap(), vec![32.3]);
    }

    #[test]
    fn malformed_ranges() {
        for s in ["", "2:500", "2:500:0", "500:2:4", "-1:5:3", "a:b:c", "2:5:1"] {
            assert!(matches!(parse_range(s), Err(CliError::Usage(_))), "{s}");
        }
    }
}
