//! Subcommand implementations.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ber_core::agents::{Agent, DdpgAgent, DqnAgent};
use ber_core::env::bitflip::{bit_oracle_distance, BitFlipEnv, BitState};
use ber_core::env::{sample_reversibility, GoalEnv};
use ber_core::nn::{load_net, save_net};
use ber_core::rng::{stream, Stream};
use ber_core::snake::dynamics::write_trajectory;
use ber_core::snake::{summarize_path, SnakeConfig, SnakeEnv, Vec2, WaveAction};
use ber_core::trainer::metrics::{moving_average, write_metrics_row, write_windowed, METRICS_HEADER};
use ber_core::trainer::{run_trial, Trainer, Trajectory};
use serde::Serialize;

use crate::config::{load_env, AgentConfig, EnvConfig, RunConfig};
use crate::plot::{line_plot, Series};
use crate::run::{prepare_dir, stem, RunManifest};
use crate::{CliError, EvalArgs, PlotArgs, SimulateArgs, TrainArgs, ValidateArgs};

/// What the commands need beyond [`GoalEnv`].
trait EnvExtras: GoalEnv {
    /// Task difficulty: Hamming distance or metres to the goal.
    fn initial_distance(&self, start: &Self::Goal, goal: &Self::Goal) -> f64;
    /// Duration of one step when it has a physical meaning.
    fn step_duration_s(&self) -> Option<f64>;
    fn format_goal(&self, goal: &Self::Goal) -> String;
    /// One line of a task file, returned as `(goal, start)`.
    fn parse_task(&self, line: &str) -> Result<(Self::Goal, Self::Goal), String>;
}

impl EnvExtras for BitFlipEnv {
    fn initial_distance(&self, start: &BitState, goal: &BitState) -> f64 {
        bit_oracle_distance(start, goal) as f64
    }

    fn step_duration_s(&self) -> Option<f64> {
        None
    }

    fn format_goal(&self, goal: &BitState) -> String {
        goal.to_string()
    }

    /// `start goal` as bit strings.
    fn parse_task(&self, line: &str) -> Result<(BitState, BitState), String> {
        let parts: Vec<&str> = line.split([',', ' ']).filter(|s| !s.is_empty()).collect();
        let [start, goal] = parts[..] else {
            return Err(format!("expected `start goal`, got `{line}`"));
        };
        let parse = |s: &str| BitState::parse(s).map_err(|e| e.to_string());
        let (start, goal) = (parse(start)?, parse(goal)?);
        if start.len() != self.bits() || goal.len() != self.bits() {
            return Err(format!("expected {}-bit states in `{line}`", self.bits()));
        }
        Ok((goal, start))
    }
}

impl EnvExtras for SnakeEnv {
    fn initial_distance(&self, start: &Vec2, goal: &Vec2) -> f64 {
        ((goal[0] - start[0]).powi(2) + (goal[1] - start[1]).powi(2)).sqrt()
    }

    fn step_duration_s(&self) -> Option<f64> {
        Some(self.config().reward.period_s)
    }

    fn format_goal(&self, goal: &Vec2) -> String {
        format!("{};{}", goal[0], goal[1])
    }

    /// `x y` of a target, in metres; the robot starts at the origin.
    fn parse_task(&self, line: &str) -> Result<(Vec2, Vec2), String> {
        let v: Vec<f64> = line
            .split([',', ' '])
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
            .collect::<Result<_, _>>()?;
        match v[..] {
            [x, y] if x.is_finite() && y.is_finite() => Ok(([x, y], [0.0, 0.0])),
            _ => Err(format!("expected `x y`, got `{line}`")),
        }
    }
}

fn bitflip_env(b: &crate::config::BitFlipConfig) -> Result<BitFlipEnv, CliError> {
    Ok(match b.max_steps {
        Some(m) => BitFlipEnv::with_max_steps(b.bits, m)?,
        None => BitFlipEnv::new(b.bits)?,
    })
}

fn snake_env(config: &SnakeConfig) -> Result<SnakeEnv, CliError> {
    SnakeEnv::new(config.clone()).map_err(|e| CliError::Config(format!("env: {e}")))
}

/// Runs `$body` with `$env` and `$agent` bound to the concrete pair the config selects.
macro_rules! with_pair {
    ($cfg:expr, $seed:expr, |$env:ident, $agent:ident| $body:expr) => {{
        let mut init = stream($seed, Stream::Init);
        match (&$cfg.env, &$cfg.agent) {
            (EnvConfig::Bitflip(b), AgentConfig::Dqn(d)) => {
                let $env = bitflip_env(b)?;
                let $agent = DqnAgent::new(&$env.observation_scale(), $env.action_dim(), d.clone(), &mut init)?;
                $body
            }
            (EnvConfig::Snake(s), AgentConfig::Ddpg(d)) => {
                let $env = snake_env(s)?;
                let $agent = DdpgAgent::new(&$env.observation_scale(), &$env.action_scale(), d.clone(), &mut init)?;
                $body
            }
            _ => Err(CliError::Config("env and agent kinds do not match".into())),
        }
    }};
}

#[derive(Serialize)]
struct CheckpointInfo<'a> {
    epoch: usize,
    seed: u64,
    networks: Vec<&'static str>,
    agent: &'a AgentConfig,
    replay: &'a ber_core::replay::ReplaySchedule,
}

fn save_checkpoint<A: Agent>(agent: &A, dir: &Path, epoch: usize, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let nets = agent.networks();
    for (name, net) in &nets {
        save_net(net, &dir.join(format!("{name}.net")))?;
    }
    let info = CheckpointInfo {
        epoch,
        seed: cfg.trainer.seed,
        networks: nets.iter().map(|(n, _)| *n).collect(),
        agent: &cfg.agent,
        replay: &cfg.trainer.replay,
    };
    fs::write(
        dir.join("checkpoint.json"),
        serde_json::to_string_pretty(&info).map_err(ber_core::Error::from)?,
    )?;
    Ok(())
}

fn load_checkpoint<A: Agent>(agent: &mut A, dir: &Path) -> Result<(), CliError> {
    let names: Vec<&'static str> = agent.networks().iter().map(|(n, _)| *n).collect();
    for name in names {
        let path = dir.join(format!("{name}.net"));
        let net = load_net(&path)
            .map_err(|e| CliError::Runtime(format!("cannot load network `{name}` from {}: {e}", path.display())))?;
        agent
            .set_network(name, net)
            .map_err(|e| CliError::Runtime(format!("checkpoint does not fit this configuration: {e}")))?;
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.trainer.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.trainer.epochs = epochs;
    }
    cfg.validate()?;
    let seed = cfg.trainer.seed;
    let dir = prepare_dir(args.out.as_deref(), &format!("{}-seed{seed}", stem(Some(&args.config), "run")))?;
    RunManifest::new("train", Some(&args.config), Some(seed), &dir).write(&dir)?;
    fs::write(
        dir.join("config.toml"),
        toml::to_string(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    with_pair!(cfg, seed, |env, agent| train_loop(env, agent, &cfg, &dir))
}

fn train_loop<E: EnvExtras, A: Agent>(env: E, agent: A, cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let mut metrics = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    writeln!(metrics, "{METRICS_HEADER}")?;
    let mut episodes = if cfg.episode_log {
        let mut w = BufWriter::new(File::create(dir.join("episodes.csv"))?);
        writeln!(w, "epoch,step,action,reward,distance_ratio,deflection,success")?;
        Some(w)
    } else {
        None
    };
    let mut trainer = Trainer::new(env, agent, cfg.trainer.clone())?;
    let every = cfg.checkpoint_every;
    let mut io_error = None;
    let result = trainer.train(|t, m| {
        let mut write = || -> Result<(), CliError> {
            write_metrics_row(&mut metrics, m)?;
            if let (Some(w), Some(traj)) = (episodes.as_mut(), t.last_forward()) {
                log_episode(w, t.env(), m.epoch, traj)?;
            }
            if every.is_some_and(|k| (m.epoch + 1) % k == 0) {
                save_checkpoint(t.agent(), &dir.join("checkpoints").join(format!("epoch_{}", m.epoch + 1)), m.epoch + 1, cfg)?;
            }
            Ok(())
        };
        match write() {
            Ok(()) => Ok(true),
            Err(e) => {
                io_error = Some(e);
                Ok(false)
            }
        }
    });
    metrics.flush()?;
    if let Some(w) = episodes.as_mut() {
        w.flush()?;
    }
    if let Some(e) = io_error {
        return Err(e);
    }
    result?;

    save_checkpoint(trainer.agent(), &dir.join("checkpoint"), trainer.epoch(), cfg)?;
    let history = trainer.history();
    write_windowed(File::create(dir.join("windowed.csv"))?, history, cfg.trainer.window)?;
    let w = trainer.windowed();
    let label = stem(Some(dir), "run");
    for (name, series, y) in [
        ("success", &w.success, "windowed success rate"),
        ("return", &w.episode_return, "windowed return"),
    ] {
        let s = Series {
            label: label.clone(),
            points: series.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect(),
        };
        fs::write(dir.join(format!("{name}.svg")), line_plot(y, "epoch", y, &[s], false))?;
    }
    let last = |v: &[f64]| v.last().copied().unwrap_or(0.0);
    println!(
        "trained {} epochs: windowed success {:.3}, windowed return {:.3}; outputs in {}",
        history.len(),
        last(&w.success),
        last(&w.episode_return),
        dir.display()
    );
    Ok(())
}

fn log_episode<E: GoalEnv, W: Write>(w: &mut W, env: &E, epoch: usize, traj: &Trajectory<E>) -> Result<(), CliError> {
    for (k, ((a, r), p)) in traj.actions.iter().zip(&traj.rewards).zip(&traj.progress).enumerate() {
        let action: Vec<String> = env.encode_action(a).iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "{epoch},{k},{},{},{},{},{}",
            action.join(";"),
            r.reward,
            p.distance_ratio,
            p.deflection,
            r.success as u8
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    episodes: usize,
    success_rate: Option<f64>,
    mean_steps: Option<f64>,
    mean_return: Option<f64>,
    avg_distance: Option<f64>,
    avg_deflection: Option<f64>,
    mean_initial_distance: Option<f64>,
    /// Mean of initial distance over episode time, successful episodes only.
    avg_velocity: Option<f64>,
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.trainer.seed);
    if !args.checkpoint.is_dir() {
        return Err(CliError::Runtime(format!("checkpoint directory {} not found", args.checkpoint.display())));
    }
    with_pair!(cfg, seed, |env, agent| eval_loop(env, agent, &cfg, args, seed))
}

/// success, steps, return, mean distance, mean deflection, initial distance, velocity
type EpisodeRow = (bool, f64, f64, f64, f64, f64, Option<f64>);

fn eval_loop<E: EnvExtras, A: Agent>(
    env: E,
    mut agent: A,
    cfg: &RunConfig,
    args: &EvalArgs,
    seed: u64,
) -> Result<(), CliError> {
    load_checkpoint(&mut agent, &args.checkpoint)?;
    let mut rng = stream(seed, Stream::Eval);
    let tasks: Vec<(E::Goal, E::Goal)> = match &args.targets {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let parsed: Vec<_> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| env.parse_task(l).map_err(|e| CliError::Config(format!("{}: {e}", path.display()))))
                .collect::<Result<_, _>>()?;
            parsed.into_iter().cycle().take(args.episodes).collect()
        }
        None => {
            let epochs = cfg.trainer.epochs;
            (0..args.episodes).map(|_| env.sample_task(&mut rng, epochs, epochs)).collect()
        }
    };
    let dir = &prepare_dir(args.out.as_deref(), &format!("eval-{}", stem(Some(&args.config), "run")))?;
    RunManifest::new("eval", Some(&args.config), Some(seed), dir).write(dir)?;

    let mut rows = BufWriter::new(File::create(dir.join("episodes.csv"))?);
    writeln!(
        rows,
        "episode,start,goal,steps,success,return,avg_distance,avg_deflection,initial_distance,velocity"
    )?;
    let mut acc: Vec<EpisodeRow> = Vec::new();
    for (i, (goal, start)) in tasks.iter().enumerate() {
        let traj = run_trial(&env, &mut agent, goal, start, &mut rng, false)?;
        let d0 = env.initial_distance(start, goal);
        let velocity = env
            .step_duration_s()
            .filter(|_| !traj.is_empty())
            .map(|t| d0 / (traj.len() as f64 * t));
        writeln!(
            rows,
            "{i},{},{},{},{},{},{},{},{},{}",
            env.format_goal(start),
            env.format_goal(goal),
            traj.len(),
            traj.success() as u8,
            traj.episode_return(),
            traj.avg_distance(),
            traj.avg_deflection(),
            d0,
            velocity.map(|v| v.to_string()).unwrap_or_default()
        )?;
        acc.push((traj.success(), traj.len() as f64, traj.episode_return(), traj.avg_distance(), traj.avg_deflection(), d0, velocity));
    }
    rows.flush()?;

    let n = acc.len();
    let mean = |f: &dyn Fn(&EpisodeRow) -> f64| {
        (n > 0).then(|| acc.iter().map(f).sum::<f64>() / n as f64)
    };
    let velocities: Vec<f64> = acc.iter().filter(|a| a.0).filter_map(|a| a.6).collect();
    let summary = EvalSummary {
        episodes: n,
        success_rate: mean(&|a| if a.0 { 1.0 } else { 0.0 }),
        mean_steps: mean(&|a| a.1),
        mean_return: mean(&|a| a.2),
        avg_distance: mean(&|a| a.3),
        avg_deflection: mean(&|a| a.4),
        mean_initial_distance: mean(&|a| a.5),
        avg_velocity: (!velocities.is_empty()).then(|| velocities.iter().sum::<f64>() / velocities.len() as f64),
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(ber_core::Error::from)?,
    )?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!("{:<22} {}", "episodes", summary.episodes);
    println!("{:<22} {}", "success rate", cell(summary.success_rate));
    println!("{:<22} {}", "mean steps", cell(summary.mean_steps));
    println!("{:<22} {}", "mean initial distance", cell(summary.mean_initial_distance));
    println!("{:<22} {}", "avg distance", cell(summary.avg_distance));
    println!("{:<22} {}", "avg deflection", cell(summary.avg_deflection));
    println!("{:<22} {}", "avg velocity", cell(summary.avg_velocity));
    Ok(())
}

/// Pressure program: `const:b1,b2,c` or a file with one `b1,b2,c` line per period.
fn parse_program(spec: &str) -> Result<Vec<WaveAction>, CliError> {
    let parse_line = |line: &str| -> Result<WaveAction, CliError> {
        let v: Vec<&str> = line.split([',', ' ']).filter(|s| !s.is_empty()).collect();
        let [b1, b2, c] = v[..] else {
            return Err(CliError::Config(format!("program entry `{line}` needs `b1,b2,c`")));
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| CliError::Config(format!("program value `{s}`: {e}")));
        let c = num(c)?;
        if c != 1.0 && c != -1.0 {
            return Err(CliError::Config(format!("program direction must be 1 or -1, got {c}")));
        }
        WaveAction::new(num(b1)?, num(b2)?, c as i8).map_err(|e| CliError::Config(e.to_string()))
    };
    if let Some(rest) = spec.strip_prefix("const:") {
        return Ok(vec![parse_line(rest)?]);
    }
    let text = fs::read_to_string(spec).map_err(|e| CliError::Config(format!("cannot read program {spec}: {e}")))?;
    let program: Vec<WaveAction> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_line)
        .collect::<Result<_, _>>()?;
    if program.is_empty() {
        return Err(CliError::Config(format!("program {spec} has no entries")));
    }
    Ok(program)
}

fn snake_config_of(path: Option<&Path>) -> Result<SnakeConfig, CliError> {
    match path {
        None => Ok(SnakeConfig::default()),
        Some(p) => match load_env(p)? {
            EnvConfig::Snake(s) => Ok(s),
            EnvConfig::Bitflip(_) => Err(CliError::Config(format!("{}: simulate needs a snake environment", p.display()))),
        },
    }
}

#[derive(Serialize)]
struct SimulationSummary {
    periods: usize,
    final_com: Vec2,
    final_heading: f64,
    path: ber_core::snake::PathSummary,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = snake_config_of(args.config.as_deref())?;
    let program = parse_program(&args.program)?;
    if !(args.duration >= 0.0 && args.duration.is_finite()) {
        return Err(CliError::Config(format!("duration must be non-negative, got {}", args.duration)));
    }
    let env = snake_env(&config)?;
    let dir = prepare_dir(args.out.as_deref(), &format!("simulate-{}", stem(args.config.as_deref(), "default")))?;
    RunManifest::new("simulate", args.config.as_deref(), None, &dir).write(&dir)?;

    let periods = (args.duration / config.reward.period_s).round() as usize;
    let last = program.len() - 1;
    let actions: Vec<WaveAction> = (0..periods).map(|k| program[k.min(last)]).collect();
    let start = env.reset(&[0.0, 0.0]);
    let (end, samples) = env.rollout(&start, &actions)?;
    write_trajectory(&samples, BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
    let points: Vec<Vec2> = samples.iter().map(|s| s.com).collect();
    let summary = SimulationSummary {
        periods,
        final_com: end.body.com,
        final_heading: end.body.heading,
        path: summarize_path(&points, start.body.heading),
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(ber_core::Error::from)?,
    )?;
    if args.plot {
        let s = Series {
            label: "COM".into(),
            points: points.iter().map(|p| (p[0], p[1])).collect(),
        };
        fs::write(dir.join("com_path.svg"), line_plot("centre of mass path", "x (m)", "y (m)", &[s], true))?;
    }
    println!(
        "{} periods: COM ({:.4}, {:.4}) m, forward {:.4} m, lateral {:.4} m, fitted curvature {:.4} 1/m; outputs in {}",
        periods,
        end.body.com[0],
        end.body.com[1],
        summary.path.forward_m,
        summary.path.lateral_m,
        summary.path.curvature_per_m,
        dir.display()
    );
    Ok(())
}

pub fn validate_reversibility(args: &ValidateArgs) -> Result<(), CliError> {
    let env_cfg = load_env(&args.config)?;
    // build the env before creating any output
    enum Env {
        Bit(BitFlipEnv),
        Snake(Box<SnakeEnv>),
    }
    let env = match &env_cfg {
        EnvConfig::Bitflip(b) => Env::Bit(bitflip_env(b)?),
        EnvConfig::Snake(s) => Env::Snake(Box::new(snake_env(s)?)),
    };
    let dir = prepare_dir(args.out.as_deref(), &format!("reversibility-{}", stem(Some(&args.config), "run")))?;
    RunManifest::new("validate-reversibility", Some(&args.config), Some(args.seed), &dir).write(&dir)?;
    let mut rng = stream(args.seed, Stream::Eval);
    let report = match &env {
        Env::Bit(e) => sample_reversibility(e, args.samples, args.warmup, &mut rng)?,
        Env::Snake(e) => sample_reversibility(e.as_ref(), args.samples, args.warmup, &mut rng)?,
    };
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report).map_err(ber_core::Error::from)?,
    )?;
    println!(
        "{} transitions, {} skipped below the displacement threshold: {:.1}% with K < 1, median {:.4}, p95 {:.4}, max {:.4}",
        report.ratios.len(),
        report.skipped,
        100.0 * report.fraction_below_one,
        report.median,
        report.p95,
        report.max
    );
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    Ok((header, rows))
}

fn series_label(path: &Path) -> String {
    let parent = path.parent().and_then(|p| p.file_name()).map(|s| s.to_string_lossy().into_owned());
    match parent {
        Some(p) if !p.is_empty() => format!("{p}/{}", stem(Some(path), "")),
        _ => stem(Some(path), "series"),
    }
}

pub fn plot(args: &PlotArgs) -> Result<(), CliError> {
    let mut series = Vec::new();
    let mut path_plot = None;
    for input in &args.input {
        let (header, rows) = read_csv(input)?;
        let col = |name: &str| header.iter().position(|h| h == name);
        let is_path = col("x_m").is_some() && col("y_m").is_some();
        if path_plot.is_some_and(|p| p != is_path) {
            return Err(CliError::Config("cannot mix trajectory and metrics files in one plot".into()));
        }
        path_plot = Some(is_path);
        let points = if is_path {
            let (x, y) = (col("x_m").unwrap(), col("y_m").unwrap());
            rows.iter().map(|r| (r[x], r[y])).collect()
        } else {
            let c = col(&args.column).ok_or_else(|| {
                CliError::Config(format!("{} has no column `{}` (columns: {})", input.display(), args.column, header.join(", ")))
            })?;
            let e = col("epoch");
            let values: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let smooth = moving_average(&values, args.window);
            rows.iter()
                .zip(smooth)
                .enumerate()
                .map(|(i, (r, v))| (e.map_or(i as f64, |e| r[e]), v))
                .collect()
        };
        series.push(Series {
            label: series_label(input),
            points,
        });
    }
    let svg = if path_plot == Some(true) {
        line_plot("centre of mass path", "x (m)", "y (m)", &series, true)
    } else {
        let y = format!("{} (window {})", args.column, args.window);
        line_plot(&y, "epoch", &y, &series, false)
    };
    fs::write(&args.out, svg)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
