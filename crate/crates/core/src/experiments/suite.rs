//! Experiment drivers and their CSV rows.

use std::io::Write;

use serde::Serialize;

use super::scenarios::{corridor, loop_track, straightaway, CorridorDisturbance};
use super::{calibrate_latency, run_scenario_with, Mode, Scenario, ScenarioConfig, ScenarioError};

/// Edits applied to every built-in scenario before it runs.
pub type Tweak<'a> = &'a dyn Fn(&mut ScenarioConfig);

fn tweaked(s: Scenario, tweak: Tweak) -> Result<Scenario, ScenarioError> {
    let mut config = s.config;
    tweak(&mut config);
    Scenario::new(config, s.map)
}

fn latency_for(s: &Scenario) -> Result<super::LatencyModel, ScenarioError> {
    calibrate_latency(s).map_err(|e| ScenarioError::Invalid(format!("latency calibration failed: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp1Row {
    pub mode: &'static str,
    pub delta_d: f64,
    pub run: usize,
    pub f_plan_hz: f64,
    pub mean_v_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp1Summary {
    pub mode: &'static str,
    pub delta_d: f64,
    pub mean_f_plan_hz: f64,
    pub std_f_plan_hz: f64,
    pub mean_v_mps: f64,
    pub std_v_mps: f64,
    pub min_command_rate_hz: f64,
    pub max_command_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment1 {
    pub rows: Vec<Exp1Row>,
    pub summary: Vec<Exp1Summary>,
    /// Simulated seconds per planner iteration used by every run.
    pub c_iter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyCurveRow {
    pub delta_d: f64,
    pub bare_rrt_f_plan_hz: f64,
    pub sbamp_f_plan_hz: f64,
    pub sbamp_command_rate_hz: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Lateral-teleport sweep on the straightaway, `runs` seeds per point.
pub fn experiment1(delta_ds: &[f64], runs: usize) -> Result<Experiment1, ScenarioError> {
    experiment1_with(delta_ds, runs, &|_| {})
}

pub fn experiment1_with(delta_ds: &[f64], runs: usize, tweak: Tweak) -> Result<Experiment1, ScenarioError> {
    if delta_ds.is_empty() || runs == 0 {
        return Err(ScenarioError::Invalid("need at least one delta_d and one run".into()));
    }
    let latency = latency_for(&tweaked(straightaway(0.0, 1), tweak)?)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for mode in [Mode::BareRrt, Mode::Sbamp] {
        for &dd in delta_ds {
            let scenario = tweaked(straightaway(dd, runs), tweak)?;
            let mut f = Vec::new();
            let mut v = Vec::new();
            let mut cmd_min = f64::INFINITY;
            let mut cmd_max: f64 = 0.0;
            for (run, &seed) in scenario.config.seeds.iter().enumerate() {
                let m = run_scenario_with(&scenario, mode, seed, latency)?.metrics;
                rows.push(Exp1Row {
                    mode: mode.as_str(),
                    delta_d: dd,
                    run,
                    f_plan_hz: m.f_plan,
                    mean_v_mps: m.mean_v,
                });
                f.push(m.f_plan);
                v.push(m.mean_v);
                cmd_min = cmd_min.min(m.command_rate);
                cmd_max = cmd_max.max(m.command_rate);
            }
            let (mf, sf) = mean_std(&f);
            let (mv, sv) = mean_std(&v);
            summary.push(Exp1Summary {
                mode: mode.as_str(),
                delta_d: dd,
                mean_f_plan_hz: mf,
                std_f_plan_hz: sf,
                mean_v_mps: mv,
                std_v_mps: sv,
                min_command_rate_hz: cmd_min,
                max_command_rate_hz: cmd_max,
            });
        }
    }
    Ok(Experiment1 { rows, summary, c_iter: latency.c_iter })
}

/// Figure data: planning frequency against teleport distance per mode.
pub fn frequency_curve(exp: &Experiment1) -> Vec<FrequencyCurveRow> {
    let find = |mode: Mode, dd: f64| exp.summary.iter().find(|s| s.mode == mode.as_str() && s.delta_d == dd);
    exp.summary
        .iter()
        .filter(|s| s.mode == Mode::BareRrt.as_str())
        .filter_map(|b| {
            let s = find(Mode::Sbamp, b.delta_d)?;
            Some(FrequencyCurveRow {
                delta_d: b.delta_d,
                bare_rrt_f_plan_hz: b.mean_f_plan_hz,
                sbamp_f_plan_hz: s.mean_f_plan_hz,
                sbamp_command_rate_hz: s.min_command_rate_hz,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp2Row {
    pub mode: &'static str,
    pub disturbance: &'static str,
    pub magnitude: f64,
    /// Every seed recovered.
    pub recovered: bool,
    /// Slowest recovery over the seeds; infinite if any failed.
    pub t_recover_s: f64,
    pub collisions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Result {
    /// Largest magnitude found with every seed recovering.
    pub threshold: f64,
    /// One row per magnitude tried, in the order tried.
    pub rows: Vec<Exp2Row>,
}

/// Evaluates one disturbance magnitude over all seeds.
pub fn corridor_trial(
    mode: Mode,
    disturbance: CorridorDisturbance,
    magnitude: f64,
    seeds: &[u64],
) -> Result<Exp2Row, ScenarioError> {
    corridor_trial_with(mode, disturbance, magnitude, seeds, &|_| {})
}

pub fn corridor_trial_with(
    mode: Mode,
    disturbance: CorridorDisturbance,
    magnitude: f64,
    seeds: &[u64],
    tweak: Tweak,
) -> Result<Exp2Row, ScenarioError> {
    let scenario = tweaked(corridor(disturbance, magnitude, seeds), tweak)?;
    let latency = latency_for(&tweaked(corridor(disturbance, 0.0, seeds), tweak)?)?;
    let mut recovered = true;
    let mut slowest: f64 = 0.0;
    let mut collisions = 0;
    for &seed in seeds {
        let m = run_scenario_with(&scenario, mode, seed, latency)?.metrics;
        recovered &= m.recovered;
        slowest = slowest.max(m.time_to_recovery);
        collisions += m.collisions;
    }
    Ok(Exp2Row {
        mode: mode.as_str(),
        disturbance: disturbance.as_str(),
        magnitude,
        recovered,
        t_recover_s: if recovered { slowest } else { f64::INFINITY },
        collisions,
    })
}

/// Bisection for the failure threshold of one disturbance type.
pub fn experiment2(
    mode: Mode,
    disturbance: CorridorDisturbance,
    seeds: &[u64],
    bisection_steps: usize,
) -> Result<Exp2Result, ScenarioError> {
    experiment2_with(mode, disturbance, seeds, bisection_steps, &|_| {})
}

pub fn experiment2_with(
    mode: Mode,
    disturbance: CorridorDisturbance,
    seeds: &[u64],
    bisection_steps: usize,
    tweak: Tweak,
) -> Result<Exp2Result, ScenarioError> {
    if seeds.is_empty() {
        return Err(ScenarioError::Invalid("need at least one seed".into()));
    }
    let trial = |m: f64| corridor_trial_with(mode, disturbance, m, seeds, tweak);
    let (lo0, hi0) = disturbance.range();
    let mut rows = Vec::new();
    let base = trial(lo0)?;
    let base_ok = base.recovered;
    rows.push(base);
    if !base_ok {
        return Ok(Exp2Result { threshold: lo0, rows });
    }
    let top = trial(hi0)?;
    let top_ok = top.recovered;
    rows.push(top);
    if top_ok {
        return Ok(Exp2Result { threshold: hi0, rows });
    }
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..bisection_steps {
        let mid = 0.5 * (lo + hi);
        let row = trial(mid)?;
        if row.recovered {
            lo = mid;
        } else {
            hi = mid;
        }
        rows.push(row);
    }
    Ok(Exp2Result { threshold: lo, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exp3Row {
    pub seed: u64,
    pub recovered: bool,
    pub collisions: usize,
    pub t_recover_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp3Summary {
    pub rows: Vec<Exp3Row>,
    pub recovery_rate: f64,
    pub collisions: usize,
    /// Collisions summed over the runs that recovered.
    pub collisions_on_recovered: usize,
}

/// Randomized shove-and-spin runs on the loop track.
pub fn experiment3(mode: Mode, seeds: &[u64], scale: f64) -> Result<Exp3Summary, ScenarioError> {
    experiment3_with(mode, seeds, scale, &|_| {})
}

pub fn experiment3_with(mode: Mode, seeds: &[u64], scale: f64, tweak: Tweak) -> Result<Exp3Summary, ScenarioError> {
    if seeds.is_empty() {
        return Err(ScenarioError::Invalid("need at least one seed".into()));
    }
    let mut rows = Vec::new();
    for &seed in seeds {
        let scenario = tweaked(loop_track(seed, scale), tweak)?;
        let latency = latency_for(&scenario)?;
        let m = run_scenario_with(&scenario, mode, seed, latency)?.metrics;
        rows.push(Exp3Row { seed, recovered: m.recovered, collisions: m.collisions, t_recover_s: m.time_to_recovery });
    }
    let recovered = rows.iter().filter(|r| r.recovered).count();
    Ok(Exp3Summary {
        recovery_rate: recovered as f64 / rows.len() as f64,
        collisions: rows.iter().map(|r| r.collisions).sum(),
        collisions_on_recovered: rows.iter().filter(|r| r.recovered).map(|r| r.collisions).sum(),
        rows,
    })
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
