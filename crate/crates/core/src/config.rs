//! Flat `key = value` run configuration.
//!
//! One entry per line, `#` starts a comment. Lists are comma separated.
//! Later entries (and command-line overrides) replace earlier ones; unknown
//! keys are rejected.
//!
//! ```text
//! controller = spikingsoft
//! m = 3
//! n = 3
//! C_q = 5.0
//! anisotropic_friction = 1.0, 0.0001, 1.0
//! total_steps = 200000
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvMode, TargetSampling};
use crate::error::{Error, Result};
use crate::oscillator::OscillatorParams;
use crate::ppo::PpoConfig;

/// Every key a config file may set.
pub const KEYS: &[&str] = &[
    // neuron
    "C_q",
    "C_t",
    "tau",
    "dt",
    // rod and ground
    "density",
    "rayleigh_damping",
    "poisson_ratio",
    "youngs_modulus",
    "gravity",
    "friction_froude",
    "friction_length",
    "anisotropic_friction",
    "contact_frequency",
    "contact_damping_ratio",
    "slip_epsilon",
    // snake
    "controller",
    "m",
    "n",
    "node_radius",
    "node_spacing",
    // task
    "agent_hz",
    "time_limit",
    "target_center",
    "target_radius",
    "target_sampling",
    "touch_radius",
    "goal_radius",
    "goal_reward",
    "destruction_penalty",
    "mode",
    // CPG
    "cpg_amplitude_ratio",
    "cpg_self_inhibit_weight",
    "cpg_mutual_inhibit_weight",
    "cpg_discharge_rate",
    "cpg_adaption_rate",
    "cpg_coupling_weights",
    "cpg_torque_gain",
    // PPO
    "total_steps",
    "horizon",
    "n_envs",
    "epochs",
    "minibatch_size",
    "clip",
    "gamma",
    "lambda",
    "learning_rate",
    "entropy_coef",
    "value_coef",
    "max_grad_norm",
    "hidden",
    "log_std_init",
    "normalize_obs",
    "normalize_reward",
    "seed",
    "workers",
    // oscillator demo
    "osc_mass",
    "osc_stiffness",
    "osc_damping",
    "osc_C_q",
    "osc_C_t",
];

/// Raw entries, keyed by name, with the line each came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut kv = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let location = format!("{origin}:{}", i + 1);
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                location: location.clone(),
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            kv.insert(k.trim(), v.trim(), location)?;
        }
        Ok(kv)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Adds or replaces one entry.
    pub fn insert(&mut self, key: &str, value: &str, location: impl Into<String>) -> Result<()> {
        let location = location.into();
        if !KEYS.contains(&key) {
            return Err(Error::Config {
                location,
                message: format!("unknown key `{key}`"),
            });
        }
        self.entries
            .insert(key.to_string(), (value.to_string(), location));
        Ok(())
    }

    /// Parses `key=value` override strings.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec.split_once('=').ok_or_else(|| Error::Config {
            location: "override".into(),
            message: format!("expected key=value, got `{spec}`"),
        })?;
        self.insert(k.trim(), v.trim(), "override")
    }

    /// Entries of `other` win.
    pub fn merge(&mut self, other: KeyValues) {
        self.entries.extend(other.entries);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some((v, loc)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.parse().map(Some).map_err(|_| Error::Config {
            location: loc.clone(),
            message: format!("cannot parse `{v}` for `{key}`"),
        })
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some((v, loc)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<Vec<T>, _>>()
            .map(Some)
            .map_err(|_| Error::Config {
                location: loc.clone(),
                message: format!("cannot parse list `{v}` for `{key}`"),
            })
    }

    fn get_array<const N: usize>(&self, key: &str) -> Result<Option<[f64; N]>> {
        match self.get_list::<f64>(key)? {
            None => Ok(None),
            Some(v) => v.try_into().map(Some).map_err(|v: Vec<f64>| Error::Config {
                location: self.entries[key].1.clone(),
                message: format!("`{key}` needs {N} values, got {}", v.len()),
            }),
        }
    }
}

/// Everything a command needs, built from defaults plus key-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub oscillator: OscillatorParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            oscillator: OscillatorParams::default(),
        }
    }
}

macro_rules! set {
    ($kv:expr, $key:literal, $target:expr) => {
        if let Some(v) = $kv.get($key)? {
            $target = v;
        }
    };
}

impl RunConfig {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = Self::default();
        c.apply(kv)?;
        Ok(c)
    }

    /// Overlays every entry present in `kv`, then validates.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        let env = &mut self.env;
        if let Some(kind) = kv.raw("controller") {
            env.controller = kind.parse()?;
        }
        let m = kv.get("m")?.unwrap_or(env.snake.m);
        let n = kv.get("n")?.unwrap_or(env.snake.n);
        if m != env.snake.m || n != env.snake.n {
            let spacing = env.snake.segment_length / env.snake.n as f64;
            env.snake.m = m;
            env.snake.n = n;
            env.snake.segment_length = spacing * n as f64;
        }
        if let Some(s) = kv.get::<f64>("node_spacing")? {
            env.snake.segment_length = s * env.snake.n as f64;
        }
        set!(kv, "node_radius", env.snake.node_radius);
        if let Some(l) = kv.get::<f64>("friction_length")? {
            env.snake.friction_length = Some(l);
        }

        let dts = &mut env.controller_params.dts;
        set!(kv, "C_q", dts.c_q);
        set!(kv, "C_t", dts.c_t);
        set!(kv, "tau", dts.tau);
        set!(kv, "dt", dts.dt);

        let mat = &mut env.material;
        set!(kv, "density", mat.density);
        set!(kv, "rayleigh_damping", mat.rayleigh_damping);
        set!(kv, "poisson_ratio", mat.poisson_ratio);
        set!(kv, "youngs_modulus", mat.youngs_modulus);

        let phys = &mut env.physics;
        set!(kv, "gravity", phys.gravity);
        set!(kv, "friction_froude", phys.froude);
        if let Some(a) = kv.get_array::<3>("anisotropic_friction")? {
            phys.friction_coeffs = a;
        }
        set!(kv, "contact_frequency", phys.contact_frequency);
        set!(kv, "contact_damping_ratio", phys.contact_damping_ratio);
        set!(kv, "slip_epsilon", phys.slip_epsilon);

        set!(kv, "agent_hz", env.agent_hz);
        set!(kv, "time_limit", env.time_limit_s);
        if let Some(c) = kv.get_array::<2>("target_center")? {
            env.target_center = c;
        }
        set!(kv, "target_radius", env.target_radius_sample);
        if let Some(s) = kv.raw("target_sampling") {
            env.target_sampling = s.parse()?;
        }
        set!(kv, "touch_radius", env.touch_radius);
        set!(kv, "goal_radius", env.reward.goal_radius);
        set!(kv, "goal_reward", env.reward.goal_reward);
        set!(kv, "destruction_penalty", env.reward.destruction_penalty);
        if let Some(s) = kv.raw("mode") {
            env.mode = match s {
                "train" => EnvMode::Train,
                "eval" => EnvMode::Eval,
                other => return Err(Error::invalid(format!("unknown mode `{other}`"))),
            };
        }

        let cpg = &mut env.controller_params.cpg;
        set!(kv, "cpg_amplitude_ratio", cpg.amplitude_ratio);
        set!(kv, "cpg_self_inhibit_weight", cpg.self_inhibit_weight);
        set!(kv, "cpg_mutual_inhibit_weight", cpg.mutual_inhibit_weight);
        set!(kv, "cpg_discharge_rate", cpg.discharge_rate);
        set!(kv, "cpg_adaption_rate", cpg.adaption_rate);
        if let Some(w) = kv.get_array::<2>("cpg_coupling_weights")? {
            cpg.coupling_weights = w;
        }
        set!(kv, "cpg_torque_gain", cpg.torque_gain);

        let ppo = &mut self.ppo;
        set!(kv, "total_steps", ppo.total_steps);
        set!(kv, "horizon", ppo.horizon);
        set!(kv, "n_envs", ppo.n_envs);
        set!(kv, "epochs", ppo.epochs);
        set!(kv, "minibatch_size", ppo.minibatch_size);
        set!(kv, "clip", ppo.clip);
        set!(kv, "gamma", ppo.gamma);
        set!(kv, "lambda", ppo.lambda);
        set!(kv, "learning_rate", ppo.learning_rate);
        set!(kv, "entropy_coef", ppo.entropy_coef);
        set!(kv, "value_coef", ppo.value_coef);
        set!(kv, "max_grad_norm", ppo.max_grad_norm);
        if let Some(h) = kv.get_list("hidden")? {
            ppo.hidden = h;
        }
        set!(kv, "log_std_init", ppo.log_std_init);
        set!(kv, "normalize_obs", ppo.normalize_obs);
        set!(kv, "normalize_reward", ppo.normalize_reward);
        set!(kv, "seed", ppo.seed);
        set!(kv, "workers", ppo.workers);

        let osc = &mut self.oscillator;
        set!(kv, "osc_mass", osc.mass);
        set!(kv, "osc_stiffness", osc.stiffness);
        set!(kv, "osc_damping", osc.damping);
        set!(kv, "osc_C_q", osc.dts.c_q);
        set!(kv, "osc_C_t", osc.dts.c_t);
        if let Some(dt) = kv.get("dt")? {
            osc.dts.dt = dt;
        }
        if let Some(tau) = kv.get("tau")? {
            osc.dts.tau = tau;
        }

        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        self.oscillator.validate()
    }

    /// Renders the config back to `key = value` text that re-parses to the
    /// same values.
    pub fn to_text(&self) -> String {
        let e = &self.env;
        let p = &self.ppo;
        let o = &self.oscillator;
        let d = &e.controller_params.dts;
        let c = &e.controller_params.cpg;
        let list = |xs: &[f64]| {
            xs.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut lines = vec![
            format!("controller = {}", e.controller),
            format!("m = {}", e.snake.m),
            format!("n = {}", e.snake.n),
            format!("node_radius = {:?}", e.snake.node_radius),
            format!("node_spacing = {:?}", e.snake.segment_length / e.snake.n as f64),
        ];
        if let Some(l) = e.snake.friction_length {
            lines.push(format!("friction_length = {l:?}"));
        }
        lines.extend([
            format!("C_q = {:?}", d.c_q),
            format!("C_t = {:?}", d.c_t),
            format!("tau = {:?}", d.tau),
            format!("dt = {:?}", d.dt),
            format!("density = {:?}", e.material.density),
            format!("rayleigh_damping = {:?}", e.material.rayleigh_damping),
            format!("poisson_ratio = {:?}", e.material.poisson_ratio),
            format!("youngs_modulus = {:?}", e.material.youngs_modulus),
            format!("gravity = {:?}", e.physics.gravity),
            format!("friction_froude = {:?}", e.physics.froude),
            format!("anisotropic_friction = {}", list(&e.physics.friction_coeffs)),
            format!("contact_frequency = {:?}", e.physics.contact_frequency),
            format!("contact_damping_ratio = {:?}", e.physics.contact_damping_ratio),
            format!("slip_epsilon = {:?}", e.physics.slip_epsilon),
            format!("agent_hz = {:?}", e.agent_hz),
            format!("time_limit = {:?}", e.time_limit_s),
            format!("target_center = {}", list(&e.target_center)),
            format!("target_radius = {:?}", e.target_radius_sample),
            format!(
                "target_sampling = {}",
                match e.target_sampling {
                    TargetSampling::Disk => "disk",
                    TargetSampling::Circle => "circle",
                }
            ),
            format!("touch_radius = {:?}", e.touch_radius),
            format!("goal_radius = {:?}", e.reward.goal_radius),
            format!("goal_reward = {:?}", e.reward.goal_reward),
            format!("destruction_penalty = {:?}", e.reward.destruction_penalty),
            format!(
                "mode = {}",
                match e.mode {
                    EnvMode::Train => "train",
                    EnvMode::Eval => "eval",
                }
            ),
            format!("cpg_amplitude_ratio = {:?}", c.amplitude_ratio),
            format!("cpg_self_inhibit_weight = {:?}", c.self_inhibit_weight),
            format!("cpg_mutual_inhibit_weight = {:?}", c.mutual_inhibit_weight),
            format!("cpg_discharge_rate = {:?}", c.discharge_rate),
            format!("cpg_adaption_rate = {:?}", c.adaption_rate),
            format!("cpg_coupling_weights = {}", list(&c.coupling_weights)),
            format!("cpg_torque_gain = {:?}", c.torque_gain),
            format!("total_steps = {}", p.total_steps),
            format!("horizon = {}", p.horizon),
            format!("n_envs = {}", p.n_envs),
            format!("epochs = {}", p.epochs),
            format!("minibatch_size = {}", p.minibatch_size),
            format!("clip = {:?}", p.clip),
            format!("gamma = {:?}", p.gamma),
            format!("lambda = {:?}", p.lambda),
            format!("learning_rate = {:?}", p.learning_rate),
            format!("entropy_coef = {:?}", p.entropy_coef),
            format!("value_coef = {:?}", p.value_coef),
            format!("max_grad_norm = {:?}", p.max_grad_norm),
            format!(
                "hidden = {}",
                p.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(", ")
            ),
            format!("log_std_init = {:?}", p.log_std_init),
            format!("normalize_obs = {}", p.normalize_obs),
            format!("normalize_reward = {}", p.normalize_reward),
            format!("seed = {}", p.seed),
            format!("workers = {}", p.workers),
            format!("osc_mass = {:?}", o.mass),
            format!("osc_stiffness = {:?}", o.stiffness),
            format!("osc_damping = {:?}", o.damping),
            format!("osc_C_q = {:?}", o.dts.c_q),
            format!("osc_C_t = {:?}", o.dts.c_t),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

impl FromStr for TargetSampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disk" => Ok(Self::Disk),
            "circle" => Ok(Self::Circle),
            other => Err(Error::invalid(format!("unknown target sampling `{other}`"))),
        }
    }
}

/// Sizes accepted by the scalability sweep, as `(m, n)`.
pub const SWEEP_SIZES: [(usize, usize); 4] = [(1, 3), (3, 3), (5, 3), (3, 6)];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_types() {
        let kv = KeyValues::parse(
            "# neuron\nC_q = 10 # inline\n\nanisotropic_friction = 1, 0.5, 2\nhidden=32,32\n",
            "t",
        )
        .unwrap();
        assert_eq!(kv.get::<f64>("C_q").unwrap(), Some(10.0));
        assert_eq!(kv.get_list::<usize>("hidden").unwrap(), Some(vec![32, 32]));
        let c = RunConfig::from_key_values(&kv).unwrap();
        assert_eq!(c.env.controller_params.dts.c_q, 10.0);
        assert_eq!(c.env.physics.friction_coeffs, [1.0, 0.5, 2.0]);
        assert_eq!(c.ppo.hidden, vec![32, 32]);
    }

    #[test]
    fn unknown_key_and_bad_value_name_the_line() {
        let e = KeyValues::parse("C_q = 1\nbogus = 2\n", "f.cfg").unwrap_err();
        assert!(e.to_string().contains("f.cfg:2"), "{e}");
        let kv = KeyValues::parse("m = three\n", "f.cfg").unwrap();
        let e = RunConfig::from_key_values(&kv).unwrap_err();
        assert!(e.to_string().contains("f.cfg:1"), "{e}");
        assert!(KeyValues::parse("no equals sign\n", "f").is_err());
        let kv = KeyValues::parse("anisotropic_friction = 1, 2\n", "f").unwrap();
        assert!(RunConfig::from_key_values(&kv).is_err());
    }

    #[test]
    fn overrides_win() {
        let mut kv = KeyValues::parse("seed = 1\nm = 1\n", "f").unwrap();
        kv.set_override("seed=9").unwrap();
        assert!(kv.set_override("nope=1").is_err());
        let c = RunConfig::from_key_values(&kv).unwrap();
        assert_eq!(c.ppo.seed, 9);
        assert_eq!(c.env.snake.m, 1);
    }

    #[test]
    fn size_change_keeps_spacing() {
        let kv = KeyValues::parse("m = 5\nn = 6\n", "f").unwrap();
        let c = RunConfig::from_key_values(&kv).unwrap();
        let spacing = c.env.snake.segment_length / 6.0;
        assert!((spacing - 0.1).abs() < 1e-12);
        assert_eq!(c.env.observation_dim(), 2 * (5 * 6 + 1) + 5);
    }

    #[test]
    fn text_roundtrip() {
        let mut kv = KeyValues::default();
        kv.set_override("controller=cpg").unwrap();
        kv.set_override("gamma=0.97").unwrap();
        kv.set_override("target_sampling=circle").unwrap();
        let c = RunConfig::from_key_values(&kv).unwrap();
        let back = RunConfig::from_key_values(&KeyValues::parse(&c.to_text(), "t").unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn every_key_is_known() {
        let text = RunConfig::default().to_text();
        for line in text.lines() {
            let k = line.split('=').next().unwrap().trim();
            assert!(KEYS.contains(&k), "{k}");
        }
    }
}
