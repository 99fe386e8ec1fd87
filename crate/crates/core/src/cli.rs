//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags, unknown
//! `--set` keys, malformed scenario or map files), 2 for runtime failures
//! such as a plan that cannot be found. Every command that writes files
//! also writes `manifest.json` listing each artifact with its SHA-256 and
//! the hash of the configuration that produced it.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::ds::{fit_warm, synthesize_demo};
use crate::experiments::{
    self, frequency_curve, write_csv, CorridorDisturbance, Mode, Scenario, ScenarioConfig, ScenarioError,
};
use crate::grid::OccupancyGrid;
use crate::planner::{plan_detailed, WaypointPath};
use crate::rng;
use crate::supervisor::write_events_csv;
use crate::vehicle::write_trajectory_csv;

#[derive(Debug, Parser)]
#[command(name = "sbamp", version, about = "RRT* planning with a stable learned controller")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Map file; replaces the scenario's map_path.
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Run seed; defaults to the scenario's first seed, or 0 for the
    /// experiments.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Scenario override, dotted key path and JSON value, e.g.
    /// `planner.max_iterations=500` or `goal=[4,1]`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan one path from the scenario start to its goal.
    Plan,
    /// Fit a stable field to a path (a CSV via --path, or a fresh plan).
    Fit {
        #[arg(long)]
        path: Option<PathBuf>,
    },
    /// Run one scenario and write its logs.
    Simulate,
    /// Planning frequency against teleport distance.
    Exp1 {
        /// Teleport distances, comma separated.
        #[arg(long, default_value = "0,0.5,1,1.5,2,2.5,3,3.5,4")]
        dd: String,
        /// Runs per distance.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
    },
    /// Failure thresholds in the 5 m x 2 m corridor.
    Exp2 {
        #[arg(long, value_enum)]
        disturbance: Option<DisturbanceArg>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 6)]
        bisection_steps: usize,
    },
    /// Randomized shoves and spins on the loop track.
    Exp3 {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Multiplies every perturbation magnitude.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Check a scenario file and print it with every default filled in.
    Validate {
        /// Scenario file; same as --scenario.
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "bare_rrt", alias = "bare-rrt")]
    BareRrt,
    Sbamp,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::BareRrt => Mode::BareRrt,
            ModeArg::Sbamp => Mode::Sbamp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DisturbanceArg {
    Translate,
    Rotate,
    #[value(name = "corner_trap", alias = "corner-trap")]
    CornerTrap,
}

impl From<DisturbanceArg> for CorridorDisturbance {
    fn from(d: DisturbanceArg) -> Self {
        match d {
            DisturbanceArg::Translate => CorridorDisturbance::Translate,
            DisturbanceArg::Rotate => CorridorDisturbance::Rotate,
            DisturbanceArg::CornerTrap => CorridorDisturbance::CornerTrap,
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Parse(_) | ScenarioError::Map(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Runs the command line `args` (program name first) and returns the exit
/// code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let argv: Vec<String> = args.iter().skip(1).map(|a| portable_arg(&a.to_string_lossy())).collect();
    match run(cli, argv) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn run(cli: Cli, argv: Vec<String>) -> Result<(), Failure> {
    let c = &cli.common;
    match &cli.command {
        Command::Validate { file } => {
            let path = file.as_ref().or(c.scenario.as_ref());
            let scenario = load_scenario(path.map(PathBuf::as_path), c.map.as_deref(), &c.set)?;
            let text = serde_json::to_string_pretty(&scenario.config).map_err(runtime)?;
            println!("{text}");
            Ok(())
        }
        Command::Plan => {
            let scenario = load_scenario(c.scenario.as_deref(), c.map.as_deref(), &c.set)?;
            let mut out = Output::new(&c.out, "plan", argv, &scenario.config)?;
            let cfg = &scenario.config;
            let mut r = rng::stream(run_seed(c, &scenario), 0);
            let result = plan_detailed(&scenario.planning_map(), cfg.start.position(), scenario.goal(), &cfg.planner, &mut r)
                .map_err(runtime)?;
            println!("cost {:.4} m, {} waypoints, {} iterations", result.path.cost, result.path.len(), result.iterations);
            out.write("path.csv", result.path.to_csv().into_bytes())?;
            out.finish()
        }
        Command::Fit { path } => {
            let scenario = load_scenario(c.scenario.as_deref(), c.map.as_deref(), &c.set)?;
            let cfg = &scenario.config;
            let mut out = Output::new(&c.out, "fit", argv, cfg)?;
            let path = match path {
                Some(p) => {
                    let f = std::fs::File::open(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
                    WaypointPath::from_csv(f).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
                }
                None => {
                    let mut r = rng::stream(run_seed(c, &scenario), 0);
                    let plan = plan_detailed(&scenario.planning_map(), cfg.start.position(), scenario.goal(), &cfg.planner, &mut r)
                        .map_err(runtime)?;
                    plan.path.shortcut(&scenario.planning_map()).densify(cfg.waypoint_spacing)
                }
            };
            let sup = cfg.supervisor_config();
            let spacing = sup.demo_spacing.min(path.cost / (8 * sup.k) as f64);
            let demo = synthesize_demo(&path, sup.demo_speed, spacing).map_err(runtime)?;
            let (model, report) = fit_warm(&demo, sup.k, sup.eps_stab, &sup.fit, None).map_err(runtime)?;
            println!(
                "K {} ({} pruned), {} samples, objective {:.6} -> {:.6} in {} iterations",
                model.k(),
                report.pruned,
                demo.len(),
                report.initial_objective,
                report.objective,
                report.iterations
            );
            out.write("path.csv", path.to_csv().into_bytes())?;
            out.write("model.json", model.to_json().into_bytes())?;
            out.finish()
        }
        Command::Simulate => {
            let scenario = load_scenario(c.scenario.as_deref(), c.map.as_deref(), &c.set)?;
            let mode = c.mode.map(Mode::from).unwrap_or(Mode::Sbamp);
            let mut out = Output::new(&c.out, "simulate", argv, &scenario.config)?;
            let log = experiments::run_scenario(&scenario, mode, run_seed(c, &scenario))?;
            let m = &log.metrics;
            println!(
                "{}: recovered {}, collisions {}, f_plan {:.3} Hz, command rate {:.2} Hz, goal error {:.3} m",
                mode.as_str(),
                m.recovered,
                m.collisions,
                m.f_plan,
                m.command_rate,
                m.final_goal_error
            );
            let mut buf = Vec::new();
            write_trajectory_csv(&log.trajectory, &mut buf).map_err(runtime)?;
            out.write("trajectory.csv", buf)?;
            let mut buf = Vec::new();
            write_events_csv(&log.events, &mut buf).map_err(runtime)?;
            out.write("events.csv", buf)?;
            out.write("plans.csv", csv_bytes(&log.plans)?)?;
            out.write("metrics.json", json_bytes(m)?)?;
            out.finish()
        }
        Command::Exp1 { dd, seeds } => {
            let dds = parse_list(dd)?;
            let (tweak, base) = experiment_tweak(c)?;
            let mut out = Output::new(&c.out, "exp1", argv, &base)?;
            let e = experiments::experiment1_with(&dds, *seeds, &*tweak)?;
            for s in &e.summary {
                println!(
                    "{:8} dd {:4.2}  f_plan {:6.3} +- {:5.3} Hz  v {:5.3} m/s  command rate >= {:.2} Hz",
                    s.mode, s.delta_d, s.mean_f_plan_hz, s.std_f_plan_hz, s.mean_v_mps, s.min_command_rate_hz
                );
            }
            out.write("exp1.csv", csv_bytes(&e.rows)?)?;
            out.write("exp1_summary.csv", csv_bytes(&e.summary)?)?;
            out.write("f_plan_vs_dd.csv", csv_bytes(&frequency_curve(&e))?)?;
            out.finish()
        }
        Command::Exp2 { disturbance, seeds, bisection_steps } => {
            let (tweak, base) = experiment_tweak(c)?;
            let seed_list: Vec<u64> = seed_range(c, *seeds);
            let mut out = Output::new(&c.out, "exp2", argv, &base)?;
            let dists = match disturbance {
                Some(d) => vec![CorridorDisturbance::from(*d)],
                None => vec![CorridorDisturbance::Translate, CorridorDisturbance::Rotate, CorridorDisturbance::CornerTrap],
            };
            let modes = modes(c.mode);
            let mut rows = Vec::new();
            let mut thresholds = Vec::new();
            for d in dists {
                for &mode in &modes {
                    let r = experiments::experiment2_with(mode, d, &seed_list, *bisection_steps, &*tweak)?;
                    println!("{:8} {:12} threshold {:.4}", mode.as_str(), d.as_str(), r.threshold);
                    thresholds.push(ThresholdRow { mode: mode.as_str(), disturbance: d.as_str(), threshold: r.threshold });
                    rows.extend(r.rows);
                }
            }
            out.write("exp2.csv", csv_bytes(&rows)?)?;
            out.write("exp2_thresholds.csv", csv_bytes(&thresholds)?)?;
            out.finish()
        }
        Command::Exp3 { seeds, scale } => {
            let (tweak, base) = experiment_tweak(c)?;
            let seed_list: Vec<u64> = seed_range(c, *seeds);
            let mode = c.mode.map(Mode::from).unwrap_or(Mode::Sbamp);
            let mut out = Output::new(&c.out, "exp3", argv, &base)?;
            let r = experiments::experiment3_with(mode, &seed_list, *scale, &*tweak)?;
            println!(
                "{}: recovery rate {:.3} over {} seeds, {} collisions ({} on recovered runs)",
                mode.as_str(),
                r.recovery_rate,
                r.rows.len(),
                r.collisions,
                r.collisions_on_recovered
            );
            out.write("exp3.csv", csv_bytes(&r.rows)?)?;
            let summary = [Exp3SummaryRow {
                mode: mode.as_str(),
                seeds: r.rows.len(),
                recovery_rate: r.recovery_rate,
                collisions: r.collisions,
                collisions_on_recovered: r.collisions_on_recovered,
            }];
            out.write("exp3_summary.csv", csv_bytes(&summary)?)?;
            out.finish()
        }
    }
}

#[derive(Serialize)]
struct ThresholdRow {
    mode: &'static str,
    disturbance: &'static str,
    threshold: f64,
}

#[derive(Serialize)]
struct Exp3SummaryRow {
    mode: &'static str,
    seeds: usize,
    recovery_rate: f64,
    collisions: usize,
    collisions_on_recovered: usize,
}

fn run_seed(c: &Common, scenario: &Scenario) -> u64 {
    c.seed.unwrap_or(scenario.config.seeds[0])
}

fn seed_range(c: &Common, n: usize) -> Vec<u64> {
    let first = c.seed.unwrap_or(0);
    (first..first + n as u64).collect()
}

fn modes(m: Option<ModeArg>) -> Vec<Mode> {
    match m {
        Some(m) => vec![m.into()],
        None => vec![Mode::BareRrt, Mode::Sbamp],
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Failure::Usage(format!("--dd: `{s}` is not a number")))
        })
        .collect()
}

/// Checks `--set` overrides against the default scenario once and returns
/// them as an edit for the built-in scenarios, plus the edited defaults for
/// the manifest.
fn experiment_tweak(c: &Common) -> Result<(Box<dyn Fn(&mut ScenarioConfig)>, ScenarioConfig), Failure> {
    if c.scenario.is_some() || c.map.is_some() {
        return Err(Failure::Usage("experiments use built-in scenarios; --scenario and --map do not apply".into()));
    }
    let overrides = parse_overrides(&c.set)?;
    let base = apply_overrides(ScenarioConfig::default(), &overrides)?;
    let tweak = move |cfg: &mut ScenarioConfig| {
        // keys were validated against the defaults, so this cannot fail
        if let Ok(edited) = apply_overrides(cfg.clone(), &overrides) {
            *cfg = edited;
        }
    };
    Ok((Box::new(tweak), base))
}

fn parse_overrides(set: &[String]) -> Result<Vec<(String, Value)>, Failure> {
    set.iter()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set `{kv}`: expected KEY=VALUE")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            Ok((k.trim().to_string(), value))
        })
        .collect()
}

fn apply_overrides(config: ScenarioConfig, overrides: &[(String, Value)]) -> Result<ScenarioConfig, Failure> {
    if overrides.is_empty() {
        return Ok(config);
    }
    let mut root = serde_json::to_value(&config).map_err(runtime)?;
    for (key, value) in overrides {
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| Failure::Usage(format!("--set: unknown key `{key}`")))?;
        }
        *slot = value.clone();
    }
    serde_json::from_value(root).map_err(|e| Failure::Usage(format!("--set: {e}")))
}

fn load_scenario(path: Option<&Path>, map: Option<&Path>, set: &[String]) -> Result<Scenario, Failure> {
    let overrides = parse_overrides(set)?;
    let (config, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            let config: ScenarioConfig =
                serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            (config, p.parent().unwrap_or(Path::new(".")).to_path_buf())
        }
        None => (ScenarioConfig::default(), PathBuf::from(".")),
    };
    let config = apply_overrides(config, &overrides)?;
    let map_file = match (map, &config.map_path) {
        (Some(m), _) => m.to_path_buf(),
        (None, Some(m)) => base.join(m),
        (None, None) => return Err(Failure::Usage("no map: pass --map or set map_path in the scenario".into())),
    };
    let grid = OccupancyGrid::load(&map_file).map_err(|e| Failure::Usage(format!("{}: {e}", map_file.display())))?;
    Scenario::new(config, grid).map_err(|e| Failure::Usage(e.to_string()))
}

/// Reduces absolute paths to their file names so manifests do not depend
/// on where the command ran.
fn portable_arg(arg: &str) -> String {
    let (prefix, value) = match arg.split_once('=') {
        Some((k, v)) if k.starts_with("--") => (format!("{k}="), v),
        _ => (String::new(), arg),
    };
    let path = Path::new(value);
    match path.file_name() {
        Some(name) if path.is_absolute() => format!("{prefix}{}", name.to_string_lossy()),
        _ => arg.to_string(),
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).map_err(runtime)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(runtime)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(64);
    for b in Sha256::digest(bytes) {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Writes artifacts and then the manifest describing them.
struct Output {
    dir: PathBuf,
    command: &'static str,
    argv: Vec<String>,
    config: Value,
    config_hash: String,
    artifacts: Vec<Value>,
}

impl Output {
    fn new(dir: &Path, command: &'static str, argv: Vec<String>, config: &ScenarioConfig) -> Result<Self, Failure> {
        let config = serde_json::to_value(config).map_err(runtime)?;
        let config_hash = sha256_hex(config.to_string().as_bytes());
        Ok(Self { dir: dir.to_path_buf(), command, argv, config, config_hash, artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), Failure> {
        std::fs::create_dir_all(&self.dir).map_err(|e| runtime(format!("output directory {}: {e}", self.dir.display())))?;
        let path = self.dir.join(name);
        std::fs::write(&path, &bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        self.artifacts.push(json!({
            "file": name,
            "bytes": bytes.len(),
            "sha256": sha256_hex(&bytes),
            "config_sha256": self.config_hash,
        }));
        Ok(())
    }

    fn finish(self) -> Result<(), Failure> {
        let defaults = ScenarioConfig::default();
        let sup = defaults.supervisor_config();
        let manifest = json!({
            "command": self.command,
            "argv": self.argv,
            "config_sha256": self.config_hash,
            "config": self.config,
            "defaults": {
                "dt_c": defaults.dt_c,
                "dt_g": defaults.dt_g,
                "eps_stab": sup.eps_stab,
                "k": sup.k,
                "waypoint_radius": sup.waypoint_radius,
                "corridor_tolerance": defaults.corridor_tolerance,
                "goal_tolerance": defaults.goal_tolerance,
                "scenario": serde_json::to_value(&defaults).map_err(runtime)?,
            },
            "artifacts": self.artifacts,
        });
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, json_bytes(&manifest)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
    }
}
