//! Browser bindings: synthesis, amplitude sweep and field map, returned as JSON.

use serde::Serialize;
use spinsat::synthesis::{
    asymptotic_times, field_map, inversion_recovery, simulate_schedule, sweep_ratio, synthesize_optimal,
    ControlSchedule, SynthesisOptions,
};
use spinsat::{Options, PhysicalParams, PlanarState};
use wasm_bindgen::prelude::*;

const PLOT_DT: f64 = 5e-3;
const MAX_SWEEP: usize = 400;
const MAX_GRID: usize = 512;

#[derive(Serialize)]
struct Path {
    y: Vec<f64>,
    z: Vec<f64>,
    /// Arc index per point.
    arc: Vec<usize>,
}

#[derive(Serialize)]
struct ArcView {
    kind: &'static str,
    duration_ms: f64,
}

#[derive(Serialize)]
struct SynthesisView {
    t_opt_ms: f64,
    t_ir_ms: f64,
    gain_percent: f64,
    arcs: Vec<ArcView>,
    optimal: Path,
    ir: Path,
}

fn params(t1_ms: f64, t2_ms: f64, omega_hz: f64) -> Result<PhysicalParams, String> {
    PhysicalParams::new(t1_ms * 1e-3, t2_ms * 1e-3, omega_hz).map_err(|e| e.to_string())
}

fn path(s: &ControlSchedule) -> Result<Path, String> {
    let t = simulate_schedule(s, PlanarState::NORTH_POLE, &Options::default().sample_every(PLOT_DT))
        .map_err(|e| e.to_string())?;
    Ok(Path {
        y: t.samples.iter().map(|p| p.state[0]).collect(),
        z: t.samples.iter().map(|p| p.state[1]).collect(),
        arc: t.samples.iter().map(|p| p.segment).collect(),
    })
}

pub fn synthesize_json(t1_ms: f64, t2_ms: f64, omega_hz: f64) -> Result<String, String> {
    let p = params(t1_ms, t2_ms, omega_hz)?;
    let opt = synthesize_optimal(&p, &SynthesisOptions::default()).map_err(|e| e.to_string())?;
    let ir = inversion_recovery(&p, &Options::default()).map_err(|e| e.to_string())?;
    let view = SynthesisView {
        t_opt_ms: 1e3 * opt.total_seconds,
        t_ir_ms: 1e3 * ir.total_seconds,
        gain_percent: 100.0 * (ir.total_seconds - opt.total_seconds) / ir.total_seconds,
        arcs: opt
            .arcs
            .iter()
            .map(|a| ArcView { kind: a.kind.as_str(), duration_ms: 1e3 * p.seconds_from_tau(a.duration_tau) })
            .collect(),
        optimal: path(&opt)?,
        ir: path(&ir)?,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SweepView {
    omega_hz: Vec<f64>,
    ratio: Vec<Option<f64>>,
    ratio_inf: Option<f64>,
}

pub fn sweep_json(t1_ms: f64, t2_ms: f64, lo_hz: f64, hi_hz: f64, count: usize) -> Result<String, String> {
    if !(lo_hz > 0.0 && hi_hz > lo_hz) || !(2..=MAX_SWEEP).contains(&count) {
        return Err(format!("need 0 < lo < hi and 2..={MAX_SWEEP} amplitudes"));
    }
    let base = params(t1_ms, t2_ms, lo_hz)?;
    let (a, b) = (lo_hz.ln(), hi_hz.ln());
    let omegas: Vec<f64> = (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect();
    let so = SynthesisOptions { check_switching: false, ..SynthesisOptions::default() };
    let rows = sweep_ratio(&base, &omegas, &so).map_err(|e| e.to_string())?;
    let view = SweepView {
        omega_hz: omegas,
        ratio: rows.iter().map(|r| r.ratio).collect(),
        ratio_inf: asymptotic_times(base.t1, base.t2).ok().map(|x| x.ratio_inf),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct FieldView {
    grid_n: usize,
    /// Row-major, `z` outer; `null` at the origin.
    dr_dot_dtheta: Vec<Option<f64>>,
    z0: Option<f64>,
}

pub fn field_map_json(t1_ms: f64, t2_ms: f64, omega_hz: f64, grid_n: usize) -> Result<String, String> {
    if !(2..=MAX_GRID).contains(&grid_n) {
        return Err(format!("grid must have 2..={MAX_GRID} nodes"));
    }
    let n = params(t1_ms, t2_ms, omega_hz)?.normalize().map_err(|e| e.to_string())?;
    let map = field_map(&n, grid_n).map_err(|e| e.to_string())?;
    let view = FieldView {
        grid_n,
        dr_dot_dtheta: map.cells.iter().map(|c| c.dr_dot_dtheta).collect(),
        z0: spinsat::model::horizontal_ordinate(&n).ok(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn synthesize(t1_ms: f64, t2_ms: f64, omega_hz: f64) -> Result<String, JsValue> {
    synthesize_json(t1_ms, t2_ms, omega_hz).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep(t1_ms: f64, t2_ms: f64, lo_hz: f64, hi_hz: f64, count: usize) -> Result<String, JsValue> {
    sweep_json(t1_ms, t2_ms, lo_hz, hi_hz, count).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = fieldMap)]
pub fn field_map_js(t1_ms: f64, t2_ms: f64, omega_hz: f64, grid_n: usize) -> Result<String, JsValue> {
    field_map_json(t1_ms, t2_ms, omega_hz, grid_n).map_err(|e| JsValue::from_str(&e))
}
