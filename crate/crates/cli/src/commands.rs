use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use spiking_snake::config::{KeyValues, RunConfig, SWEEP_SIZES};
use spiking_snake::controllers::{write_control_trace_csv, ControlTraceRecord, ControllerKind};
use spiking_snake::env::SnakeEnv;
use spiking_snake::exec::Workers;
use spiking_snake::metrics::{self, Agent, AggregateReport};
use spiking_snake::neuron::{self, ThreePhaseProtocol, Thresholds};
use spiking_snake::oscillator::{self, PhasePoint};
use spiking_snake::ppo::{write_training_log_csv, Checkpoint, Trainer};
use spiking_snake::rod::{write_trajectory_csv, TrajectoryRecord};

use crate::{
    Common, DemoNeuronArgs, DemoOscillatorArgs, EvalArgs, ExportArgs, PpoArgs, SnakeArgs,
    SweepArgs, TrainArgs, OUTPUT_ROOT_ENV,
};

fn out_dir(common: &Common) -> Result<PathBuf> {
    let root = std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    let dir = match &common.out {
        Some(o) => root.join(o),
        None => root,
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn key_values(common: &Common, snake: Option<&SnakeArgs>, ppo: Option<&PpoArgs>) -> Result<KeyValues> {
    let mut kv = match &common.config {
        Some(p) => {
            if !p.exists() {
                bail!("config file {} does not exist", p.display());
            }
            KeyValues::from_file(p)?
        }
        None => KeyValues::default(),
    };
    for s in &common.set {
        kv.set_override(s)?;
    }
    let mut flag = |k: &str, v: Option<String>| -> Result<()> {
        if let Some(v) = v {
            kv.insert(k, &v, format!("--{k}"))?;
        }
        Ok(())
    };
    flag("workers", common.workers.map(|w| w.to_string()))?;
    if let Some(s) = snake {
        flag("controller", s.controller.clone())?;
        flag("m", s.m.map(|x| x.to_string()))?;
        flag("n", s.n.map(|x| x.to_string()))?;
        flag("seed", s.seed.map(|x| x.to_string()))?;
    }
    if let Some(p) = ppo {
        flag("total_steps", p.steps.map(|x| x.to_string()))?;
        flag("horizon", p.horizon.map(|x| x.to_string()))?;
        flag("n_envs", p.n_envs.map(|x| x.to_string()))?;
        flag("epochs", p.epochs.map(|x| x.to_string()))?;
        flag("minibatch_size", p.minibatch.map(|x| x.to_string()))?;
        flag("learning_rate", p.lr.map(|x| x.to_string()))?;
    }
    Ok(kv)
}

fn load_config(kv: &KeyValues) -> Result<RunConfig> {
    let cfg = RunConfig::from_key_values(kv)?;
    let (m, n) = (cfg.env.snake.m, cfg.env.snake.n);
    if !SWEEP_SIZES.contains(&(m, n)) {
        log::warn!("snake size m={m} n={n} is outside the evaluated set {SWEEP_SIZES:?}");
    }
    Ok(cfg)
}

pub fn demo_neuron(a: DemoNeuronArgs) -> Result<()> {
    let dir = out_dir(&a.common)?;
    let kv = key_values(&a.common, None, None)?;
    let mut protocol = ThreePhaseProtocol::default();
    if let Some(dt) = kv.get("dt")? {
        protocol.params.dt = dt;
    }
    if let Some(tau) = kv.get("tau")? {
        protocol.params.tau = tau;
    }
    let trace = protocol.run()?;
    let path = dir.join("neuron_trace.csv");
    neuron::write_trace_csv(&path, &trace)?;
    let spikes = trace.iter().filter(|r| r.o != 0).count();
    info!("{} steps, {spikes} spikes -> {}", trace.len(), path.display());
    Ok(())
}

pub fn demo_oscillator(a: DemoOscillatorArgs) -> Result<()> {
    let dir = out_dir(&a.common)?;
    let cfg = load_config(&key_values(&a.common, None, None)?)?;
    let mut params = cfg.oscillator;
    params.thr = Thresholds::new(a.un, a.up)?;
    let traj = oscillator::simulate(&params, PhasePoint::new(a.q0, a.qdot0), a.steps)?;
    let path = dir.join("oscillator.csv");
    oscillator::write_oscillator_csv(&path, &traj)?;
    let late = &traj[traj.len() / 2..];
    let (lo, hi) = late
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| (l.min(r.q), h.max(r.q)));
    info!("late q range [{lo:.4}, {hi:.4}] -> {}", path.display());
    Ok(())
}

fn run_training(cfg: &RunConfig, dir: &Path, checkpoint_every: u64) -> Result<Checkpoint> {
    let mut trainer = Trainer::new(cfg.env.clone(), cfg.ppo.clone())?;
    info!(
        "training {} m={} n={}: {} iterations of {} steps",
        cfg.env.controller,
        cfg.env.snake.m,
        cfg.env.snake.n,
        cfg.ppo.iterations(),
        cfg.ppo.batch_size()
    );
    let log = trainer.run(|t, rec| {
        info!(
            "iter {} steps {} mean reward {:.1} success {:.2}",
            rec.iteration, rec.env_steps, rec.mean_ep_reward, rec.success_rate
        );
        if checkpoint_every > 0 && rec.iteration % checkpoint_every == 0 {
            t.checkpoint()
                .save(&dir.join(format!("checkpoint_{:06}.json", rec.iteration)))?;
        }
        Ok(())
    })?;
    write_training_log_csv(&dir.join("training_log.csv"), &log)?;
    spiking_snake::io::write_csv_atomic(&dir.join("episodes.csv"), trainer.episodes())?;
    let ckpt = trainer.checkpoint();
    ckpt.save(&dir.join("checkpoint.json"))?;
    Ok(ckpt)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let dir = out_dir(&a.common)?;
    let cfg = load_config(&key_values(&a.common, Some(&a.snake), Some(&a.ppo))?)?;
    spiking_snake::io::write_text_atomic(&dir.join("config.cfg"), &cfg.to_text())?;
    run_training(&cfg, &dir, a.checkpoint_every)?;
    info!("outputs in {}", dir.display());
    Ok(())
}

fn method_label(kind: ControllerKind, trained: bool) -> String {
    if trained {
        format!("{kind}+ppo")
    } else {
        "random".into()
    }
}

fn write_report(dir: &Path, report: &AggregateReport, episodes: &[metrics::EpisodeResult]) -> Result<()> {
    report.write_json(&dir.join("report.json"))?;
    metrics::write_episodes_csv(&dir.join("episodes.csv"), episodes)?;
    let table = metrics::format_table(std::slice::from_ref(report));
    spiking_snake::io::write_text_atomic(&dir.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let dir = out_dir(&a.common)?;
    let kv = key_values(&a.common, Some(&a.snake), None)?;
    let cfg = load_config(&kv)?;
    let (agent, env, trained) = match &a.checkpoint {
        Some(p) => {
            if !p.exists() {
                bail!("checkpoint {} does not exist", p.display());
            }
            let ckpt = Checkpoint::load(p)?;
            (Agent::Policy(Box::new(ckpt.policy)), ckpt.env, true)
        }
        None => (Agent::Random, cfg.env.clone(), false),
    };
    let workers = Workers::new(cfg.ppo.workers)?;
    let results = metrics::evaluate(&agent, &env, a.episodes, cfg.ppo.seed, workers)?;
    let label = metrics::configuration_label(env.controller, env.snake.m, env.snake.n);
    let report = AggregateReport::new(method_label(env.controller, trained), label, &[results.clone()])?;
    write_report(&dir, &report, &results)
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let dir = out_dir(&a.common)?;
    let kv = key_values(&a.common, Some(&a.snake), Some(&a.ppo))?;
    let mut reports = Vec::new();
    for (m, n) in SWEEP_SIZES {
        let mut sized = kv.clone();
        sized.insert("m", &m.to_string(), "sweep")?;
        sized.insert("n", &n.to_string(), "sweep")?;
        let cfg = RunConfig::from_key_values(&sized)?;
        let label = metrics::configuration_label(cfg.env.controller, m, n);
        let sub = dir.join(&label);
        std::fs::create_dir_all(&sub)?;
        let agent = if a.random {
            Agent::Random
        } else {
            Agent::Policy(Box::new(run_training(&cfg, &sub, 0)?.policy))
        };
        let results = metrics::evaluate(
            &agent,
            &cfg.env,
            a.episodes,
            cfg.ppo.seed,
            Workers::new(cfg.ppo.workers)?,
        )?;
        let report = AggregateReport::new(method_label(cfg.env.controller, !a.random), label, &[results.clone()])?;
        write_report(&sub, &report, &results)?;
        reports.push(report);
    }
    spiking_snake::io::write_json_atomic(&dir.join("sweep.json"), &reports)?;
    spiking_snake::io::write_text_atomic(&dir.join("sweep_table.txt"), &metrics::format_table(&reports))?;
    Ok(())
}

pub fn export_trajectory(a: ExportArgs) -> Result<()> {
    if a.every == 0 {
        bail!("--every must be >= 1");
    }
    let dir = out_dir(&a.common)?;
    let cfg = load_config(&key_values(&a.common, Some(&a.snake), None)?)?;
    let (agent, mut env_cfg) = match &a.checkpoint {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            (Agent::Policy(Box::new(ckpt.policy)), ckpt.env)
        }
        None => (Agent::Random, cfg.env.clone()),
    };
    env_cfg.record_log = true;
    env_cfg.mode = spiking_snake::env::EnvMode::Eval;
    let seed = cfg.ppo.seed;
    let mut env = SnakeEnv::new(env_cfg)?;
    let (mut obs, target) = env.reset(seed)?;
    let (low, high) = env.action_bounds();
    let mut random =
        spiking_snake::controllers::RandomController::with_bounds(low, high, env.action_dim(), seed);
    let mut trajectory: Vec<TrajectoryRecord> = env.snake().rod.snapshot();
    let mut control: Vec<ControlTraceRecord> = Vec::new();
    let mut k = 0usize;
    let mut err = None;
    loop {
        let action = match &agent {
            Agent::Policy(p) => p
                .mean_action(&p.normalize_obs(&obs))
                .into_iter()
                .map(|x| x.clamp(low, high))
                .collect(),
            _ => random.sample(),
        };
        let r = env.step_observed(&action, |snake, cmd| {
            k += 1;
            if k % a.every == 0 {
                trajectory.extend(snake.rod.snapshot());
                match ControlTraceRecord::from_step(snake, cmd) {
                    Ok(rows) => control.extend(rows),
                    Err(e) => err = Some(e),
                }
            }
        })?;
        if let Some(e) = err.take() {
            return Err(e.into());
        }
        obs = r.observation;
        if r.terminated || r.truncated {
            info!(
                "target ({:.2}, {:.2}) success {} after {} steps",
                target.position[0],
                target.position[1],
                r.info.success,
                env.step_count()
            );
            break;
        }
    }
    write_trajectory_csv(&dir.join("trajectory.csv"), &trajectory)?;
    write_control_trace_csv(&dir.join("control.csv"), &control)?;
    env.write_log_jsonl(&dir.join("episode.jsonl"))?;
    Ok(())
}
