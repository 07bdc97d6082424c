//! Browser bindings for meanfield-lab: particle trajectories, the fixed-point
//! gap sequence and a small propagation-of-chaos sweep. Every entry point
//! takes an experiment config as JSON and returns JSON.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use meanfield_lab::chaos::chaos_sweep;
use meanfield_lab::config::ExperimentConfig;
use meanfield_lab::engine::solve_n_particle;
use meanfield_lab::fields::BuiltinField;
use meanfield_lab::meanfield::fixed_point;

const PRESETS: [(&str, &str); 3] = [
    ("leader_follower", include_str!("../../../configs/leader_follower.json")),
    ("meanfield", include_str!("../../../configs/reversion_meanfield.json")),
    ("chaos", include_str!("../../../configs/reversion_chaos.json")),
];

fn load(config: &str) -> Result<(ExperimentConfig, BuiltinField), String> {
    let cfg = ExperimentConfig::from_json(config).map_err(|e| e.to_string())?;
    let field = cfg.build_field().map_err(|e| e.to_string())?;
    field.check_ranges().map_err(|e| e.to_string())?;
    Ok((cfg, field))
}

pub fn preset_json(name: &str) -> Result<String, String> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| text.to_string())
        .ok_or_else(|| format!("no preset named {name}"))
}

/// Paths as `[[x_1, x_2, w_1], ...]` per agent, plus the mean of `w_1`.
pub fn simulate_json(config: &str) -> Result<String, String> {
    let (cfg, field) = load(config)?;
    let sim = cfg.sim_config();
    let init = cfg.init.sample_ensemble(sim.seed, sim.agents, cfg.space.len()).map_err(|e| e.to_string())?;
    let bundle = solve_n_particle(&init, &field, &sim).map_err(|e| e.to_string())?;
    let steps = bundle.times().len();
    let paths: Vec<Vec<[f64; 3]>> = (0..bundle.paths())
        .map(|i| {
            (0..steps)
                .map(|k| {
                    let x = bundle.position(i, k);
                    [x[0], x.get(1).copied().unwrap_or(0.0), bundle.strategy(i, k)[0]]
                })
                .collect()
        })
        .collect();
    let mean_w1: Vec<f64> = (0..steps)
        .map(|k| (0..bundle.paths()).map(|i| bundle.strategy(i, k)[0]).sum::<f64>() / bundle.paths() as f64)
        .collect();
    Ok(json!({ "times": bundle.times(), "paths": paths, "mean_w1": mean_w1, "labels": cfg.space.labels() }).to_string())
}

pub fn fixed_point_json(config: &str, tol: f64, max_iter: usize) -> Result<String, String> {
    let (cfg, field) = load(config)?;
    let (_, report) =
        fixed_point(&field, &cfg.init, &cfg.space, &cfg.sim_config(), tol, max_iter).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

pub fn chaos_json(config: &str, n_grid: &[u32], reps: usize) -> Result<String, String> {
    let (cfg, field) = load(config)?;
    let grid: Vec<usize> = n_grid.iter().map(|&n| n as usize).collect();
    let max_n = grid.iter().copied().max().ok_or("empty N grid")?;
    let mut law_cfg = cfg.sim_config();
    law_cfg.agents = 4 * max_n;
    law_cfg.record_stride = 1;
    let (law, _) = fixed_point(&field, &cfg.init, &cfg.space, &law_cfg, 1e-4, 30).map_err(|e| e.to_string())?;
    let sweep = chaos_sweep(&field, &law_cfg, &cfg.init, &law, &cfg.space, &grid, reps, cfg.seed)
        .map_err(|e| e.to_string())?;
    let rows: Vec<Value> =
        sweep.results.iter().map(|r| json!({ "n": r.n, "err": r.err, "stderr": r.stderr })).collect();
    Ok(json!({ "results": rows, "slope": sweep.slope }).to_string())
}

#[wasm_bindgen]
pub fn preset(name: &str) -> Result<String, JsError> {
    preset_json(name).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(config: &str) -> Result<String, JsError> {
    simulate_json(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fixedPoint)]
pub fn fixed_point_gaps(config: &str, tol: f64, max_iter: usize) -> Result<String, JsError> {
    fixed_point_json(config, tol, max_iter).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn chaos(config: &str, n_grid: &[u32], reps: usize) -> Result<String, JsError> {
    chaos_json(config, n_grid, reps).map_err(|e| JsError::new(&e))
}
