//! Run configuration: one JSON document, optionally overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use qlm_core::circuit::{Backend, UnavailableBackend, DEFAULT_SEGMENTS};
use qlm_core::dynamics::{EvolutionConfig, DEFAULT_FOURIER_N, DEFAULT_N_STEPS, DEFAULT_T_F_NS};
use qlm_core::model::Model;
use qlm_core::optim::fdgd::{ClassRates, FdgdConfig};
use qlm_core::optim::lm::LmConfig;
use qlm_core::optim::{OptimizerKind, TrainOptions};
use qlm_core::training::{random_circuit, random_hamiltonian, DEFAULT_STAGE_EPOCHS, DEFAULT_TRAINING_QUBIT_CAP};

/// A configuration problem. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hamiltonian,
    Circuit,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hamiltonian" => Ok(Self::Hamiltonian),
            "circuit" => Ok(Self::Circuit),
            other => Err(format!("unknown model {other:?}; expected hamiltonian or circuit")),
        }
    }
}

/// `exact`, `shots:N` (or `shots` with a separate count) or `external`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Exact,
    Shots(Option<u64>),
    External,
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Self::Exact),
            "external" => Ok(Self::External),
            "shots" => Ok(Self::Shots(None)),
            _ => match s.strip_prefix("shots:") {
                Some(n) => n
                    .parse::<u64>()
                    .map(|n| Self::Shots(Some(n)))
                    .map_err(|_| format!("bad shot count in {s:?}")),
                None => Err(format!("unknown backend {s:?}; expected exact, shots:N or external")),
            },
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Exact => f.write_str("exact"),
            BackendSpec::External => f.write_str("external"),
            BackendSpec::Shots(None) => f.write_str("shots"),
            BackendSpec::Shots(Some(n)) => write!(f, "shots:{n}"),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub qubits: Vec<usize>,
    /// Defaults to 20, 20, 20, 10, ... by qubit count.
    #[serde(default)]
    pub epochs: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_qubits: usize,
    pub model: ModelKind,
    pub optimizer: OptimizerKind,
    pub backend: BackendSpec,
    /// Shot count when `backend` is `shots` or `external` without one.
    pub shots: u64,
    pub seed: Option<u64>,
    pub epochs: usize,
    pub t_f_ns: f64,
    pub n_steps: usize,
    pub n_segments: usize,
    pub fourier_n: usize,
    /// Noise level placeholder. Only 0 is accepted.
    pub rnp: f64,
    pub lm: LmConfig,
    pub fdgd: Option<FdgdConfig>,
    pub backprop_rates: Option<ClassRates>,
    pub stages: Option<StageConfig>,
    pub out: Option<PathBuf>,
    /// Adds per-epoch wall time to the log. Logs are then no longer reproducible.
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_qubits: 2,
            model: ModelKind::Circuit,
            optimizer: OptimizerKind::Lm,
            backend: BackendSpec::Exact,
            shots: 1024,
            seed: None,
            epochs: 50,
            t_f_ns: DEFAULT_T_F_NS,
            n_steps: DEFAULT_N_STEPS,
            n_segments: DEFAULT_SEGMENTS,
            fourier_n: DEFAULT_FOURIER_N,
            rnp: 0.0,
            lm: LmConfig::default(),
            fdgd: None,
            backprop_rates: None,
            stages: None,
            out: None,
            record_wall_time: false,
        }
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub optimizer: Option<OptimizerKind>,
    pub backend: Option<BackendSpec>,
    pub shots: Option<u64>,
    pub qubits: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            config_err(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    /// Applies flags. `--qubits` sets the qubit count for `train` and the
    /// last stage for `stage`.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(opt) = o.optimizer {
            self.optimizer = opt;
        }
        if let Some(b) = o.backend {
            self.backend = b;
        }
        if let Some(n) = o.shots {
            self.shots = n;
            if let BackendSpec::Shots(_) = self.backend {
                self.backend = BackendSpec::Shots(Some(n));
            }
        }
        if let Some(n) = o.qubits {
            self.n_qubits = n;
            let first = self.stages.as_ref().map_or(2, |s| s.qubits.first().copied().unwrap_or(2));
            self.stages = Some(StageConfig { qubits: (first..=n.max(first)).collect(), epochs: None });
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let seed_missing = self.seed.is_none();
        let checks: [(bool, String); 11] = [
            (seed_missing, "seed is required (set \"seed\" or pass --seed)".into()),
            (self.n_qubits < 2, format!("n_qubits must be at least 2, got {}", self.n_qubits)),
            (
                self.n_qubits > DEFAULT_TRAINING_QUBIT_CAP,
                format!("n_qubits must be at most {DEFAULT_TRAINING_QUBIT_CAP}, got {}", self.n_qubits),
            ),
            (self.epochs == 0, "epochs must be at least 1".into()),
            (!(self.t_f_ns > 0.0 && self.t_f_ns.is_finite()), format!("t_f_ns must be positive, got {}", self.t_f_ns)),
            (self.n_steps == 0, "n_steps must be at least 1".into()),
            (self.n_segments == 0, "n_segments must be at least 1".into()),
            (!self.rnp.is_finite() || self.rnp < 0.0, format!("rnp must be finite and non-negative, got {}", self.rnp)),
            (self.rnp != 0.0, "rnp: noise injection is not implemented; only 0 is accepted".into()),
            (self.shots_count() == Some(0), "shot count must be at least 1".into()),
            (
                self.optimizer == OptimizerKind::Backprop && self.model != ModelKind::Hamiltonian,
                "the backprop optimizer needs \"model\": \"hamiltonian\"".into(),
            ),
        ];
        if let Some((_, msg)) = checks.iter().find(|(bad, _)| *bad) {
            return Err(config_err(msg.clone()));
        }
        if self.model == ModelKind::Hamiltonian && self.backend == BackendSpec::External {
            return Err(config_err("the hamiltonian model cannot run on an external backend"));
        }
        if let Some(f) = &self.fdgd {
            f.validate().map_err(|e| config_err(format!("fdgd: {e}")))?;
        }
        if let Some(r) = &self.backprop_rates {
            r.validate().map_err(|e| config_err(format!("backprop_rates: {e}")))?;
        }
        if self.lm.max_traversals == 0 {
            return Err(config_err("lm.max_traversals must be at least 1"));
        }
        if let Some(st) = &self.stages {
            self.stage_plan_shape(st)?;
        }
        Ok(())
    }

    fn shots_count(&self) -> Option<u64> {
        match self.backend {
            BackendSpec::Exact => None,
            BackendSpec::Shots(n) => Some(n.unwrap_or(self.shots)),
            BackendSpec::External => Some(self.shots),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated configs carry a seed")
    }

    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig { n_steps: self.n_steps }
    }

    pub fn backend(&self) -> anyhow::Result<Backend> {
        Ok(match self.backend {
            BackendSpec::Exact => Backend::Exact,
            BackendSpec::Shots(n) => Backend::shots(n.unwrap_or(self.shots), self.seed())?,
            BackendSpec::External => Backend::External { backend: Arc::new(UnavailableBackend), shots: self.shots },
        })
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            seed: self.seed(),
            lm: self.lm,
            fdgd: self.fdgd,
            backprop_rates: self.backprop_rates,
            record_wall_time: self.record_wall_time,
        }
    }

    /// Seeded random initialization for `n_qubits`.
    pub fn initial_model(&self, n_qubits: usize) -> anyhow::Result<Model> {
        Ok(match self.model {
            ModelKind::Circuit => Model::Circuit(random_circuit(n_qubits, self.n_segments, self.seed())?),
            ModelKind::Hamiltonian => Model::Hamiltonian {
                params: random_hamiltonian(n_qubits, self.t_f_ns, self.fourier_n, self.seed())?,
                evolution: self.evolution(),
            },
        })
    }

    fn stage_plan_shape(&self, st: &StageConfig) -> anyhow::Result<(Vec<usize>, Vec<usize>)> {
        if st.qubits.is_empty() {
            return Err(config_err("stages.qubits must list at least one qubit count"));
        }
        if st.qubits[0] < 2 || st.qubits.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("stages.qubits must be strictly increasing and start at 2 or more"));
        }
        if st.qubits.iter().any(|&n| n > DEFAULT_TRAINING_QUBIT_CAP) {
            return Err(config_err(format!("stages.qubits must not exceed {DEFAULT_TRAINING_QUBIT_CAP}")));
        }
        let epochs = match &st.epochs {
            Some(e) if e.len() != st.qubits.len() => {
                return Err(config_err("stages.epochs must have one entry per stage"));
            }
            Some(e) if e.contains(&0) => return Err(config_err("stages.epochs entries must be at least 1")),
            Some(e) => e.clone(),
            None => st
                .qubits
                .iter()
                .map(|&n| DEFAULT_STAGE_EPOCHS.get(n - 2).copied().unwrap_or(10))
                .collect(),
        };
        Ok((st.qubits.clone(), epochs))
    }

    /// Qubit counts and epochs per stage; defaults to `2..=n_qubits`.
    pub fn stages(&self) -> anyhow::Result<(Vec<usize>, Vec<usize>)> {
        let default = StageConfig { qubits: (2..=self.n_qubits).collect(), epochs: None };
        self.stage_plan_shape(self.stages.as_ref().unwrap_or(&default))
    }

    pub fn out_dir(&self) -> anyhow::Result<PathBuf> {
        self.out.clone().ok_or_else(|| config_err("no output directory (set \"out\" or pass --out)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_spec_round_trip() {
        for s in ["exact", "shots", "shots:1024", "external"] {
            assert_eq!(s.parse::<BackendSpec>().unwrap().to_string(), s);
        }
        assert!("shots:x".parse::<BackendSpec>().is_err());
        assert!("gpu".parse::<BackendSpec>().is_err());
    }

    #[test]
    fn defaults_need_only_a_seed() {
        let cfg = RunConfig::parse(r#"{"seed": 3}"#, "inline").unwrap();
        cfg.validate().unwrap();
        assert_eq!((cfg.t_f_ns, cfg.n_steps, cfg.fourier_n, cfg.n_segments), (200.0, 400, 3, 4));
        assert!(RunConfig::default().validate().is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = RunConfig::parse("{\n  \"seed\": 1,\n  \"modle\": \"circuit\"\n}", "cfg.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("cfg.json:3:"), "{msg}");
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn rnp_must_be_zero() {
        let cfg = RunConfig::parse(r#"{"seed": 1, "rnp": 0.1}"#, "inline").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::parse(r#"{"seed": 1, "backend": "shots"}"#, "inline").unwrap();
        cfg.apply(&Overrides { seed: Some(9), shots: Some(64), qubits: Some(4), ..Default::default() });
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.backend, BackendSpec::Shots(Some(64)));
        assert_eq!(cfg.stages().unwrap(), (vec![2, 3, 4], vec![20, 20, 20]));
    }

    #[test]
    fn stage_shape_checks() {
        let cfg = RunConfig::parse(r#"{"seed": 1, "stages": {"qubits": [2, 4, 3]}}"#, "inline").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse(r#"{"seed": 1, "stages": {"qubits": [2, 3], "epochs": [5]}}"#, "inline").unwrap();
        assert!(cfg.validate().is_err());
    }
}
