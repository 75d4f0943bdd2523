//! TOML configuration files and the run-level config hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{BrakingParams, ResistanceParams, TractionParams, TrainPhysics};
use crate::error::{Error, Result};
use crate::line_data::{load_line, LineDataset};
use crate::mdp_env::EnvConfig;
use crate::ppo::PpoConfig;
use crate::units::kmh_to_ms;

pub const DEFAULT_PHYSICS_TOML: &str = include_str!("../../../data/default_physics.toml");
pub const DEFAULT_ENV_TOML: &str = include_str!("../../../data/default_env.toml");
pub const DEFAULT_PPO_TOML: &str = include_str!("../../../data/default_ppo.toml");

/// Physics parameter file, in file units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsFile {
    pub mass_kg: f64,
    pub speed_limit_kmh: f64,
    #[serde(default)]
    pub gravity_component_kn: f64,
    pub traction: TractionFile,
    pub braking: BrakingFile,
    pub resistance: ResistanceParams,
    pub efficiency: EfficiencyFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionFile {
    pub p1_kn: f64,
    pub p2_ms: f64,
    pub v1_kmh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrakingFile {
    pub p3_kn: f64,
    pub p4_ms: f64,
    pub v2_kmh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyFile {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl PhysicsFile {
    pub fn into_physics(&self) -> Result<TrainPhysics> {
        let phys = TrainPhysics {
            mass_kg: self.mass_kg,
            traction: TractionParams::new(self.traction.p1_kn, self.traction.p2_ms, kmh_to_ms(self.traction.v1_kmh))?,
            braking: BrakingParams::new(self.braking.p3_kn, self.braking.p4_ms, kmh_to_ms(self.braking.v2_kmh))?,
            resistance: ResistanceParams::new(
                self.resistance.lambda1,
                self.resistance.lambda2,
                self.resistance.lambda3,
            )?,
            beta1: self.efficiency.beta1,
            beta2: self.efficiency.beta2,
            beta3: self.efficiency.beta3,
            gravity_component_kn: self.gravity_component_kn,
            speed_limit_ms: kmh_to_ms(self.speed_limit_kmh),
        };
        phys.validate()?;
        Ok(phys)
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::config(context, e.to_string()))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::MissingFile {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_physics(text: &str, context: &str) -> Result<TrainPhysics> {
    parse_toml::<PhysicsFile>(text, context)?.into_physics()
}

pub fn load_physics(path: &Path) -> Result<TrainPhysics> {
    parse_physics(&read(path)?, &path.display().to_string())
}

pub fn default_physics() -> TrainPhysics {
    parse_physics(DEFAULT_PHYSICS_TOML, "default_physics.toml").expect("shipped physics file is valid")
}

pub fn parse_env(text: &str, context: &str) -> Result<EnvConfig> {
    let cfg: EnvConfig = parse_toml(text, context)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_env(path: &Path) -> Result<EnvConfig> {
    parse_env(&read(path)?, &path.display().to_string())
}

pub fn default_env() -> EnvConfig {
    parse_env(DEFAULT_ENV_TOML, "default_env.toml").expect("shipped env file is valid")
}

pub fn parse_ppo(text: &str, context: &str) -> Result<PpoConfig> {
    let cfg: PpoConfig = parse_toml(text, context)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_ppo(path: &Path) -> Result<PpoConfig> {
    parse_ppo(&read(path)?, &path.display().to_string())
}

pub fn default_ppo() -> PpoConfig {
    parse_ppo(DEFAULT_PPO_TOML, "default_ppo.toml").expect("shipped ppo file is valid")
}

/// Top-level run file: paths to the four inputs plus an output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub line: PathBuf,
    pub physics: PathBuf,
    pub env: PathBuf,
    pub ppo: PathBuf,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Everything a command needs, loaded and validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub line: LineDataset,
    pub physics: TrainPhysics,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// The shipped Xiamen configuration.
    pub fn shipped() -> Self {
        RunConfig {
            line: LineDataset::xiamen_line1(),
            physics: default_physics(),
            env: default_env(),
            ppo: default_ppo(),
            out_dir: PathBuf::from("runs"),
        }
    }

    /// Reads a TOML run file, or a JSON snapshot written by a previous command.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            let snap: ConfigSnapshot = serde_json::from_str(&read(path)?)
                .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            return snap.into_run_config();
        }
        let file: RunFile = parse_toml(&read(path)?, &path.display().to_string())?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        Ok(RunConfig {
            line: load_line(&resolve(&file.line))?,
            physics: load_physics(&resolve(&file.physics))?,
            env: load_env(&resolve(&file.env))?,
            ppo: load_ppo(&resolve(&file.ppo))?,
            out_dir: file.out.as_deref().map(resolve).unwrap_or_else(|| PathBuf::from("runs")),
        })
    }

    /// Hash over line data, physics and environment; identifies comparable runs.
    pub fn config_hash(&self) -> String {
        config_hash(&self.line, &self.physics, &self.env)
    }

    pub fn snapshot(&self) -> ConfigSnapshot {
        ConfigSnapshot {
            config_hash: self.config_hash(),
            line: self.line.clone(),
            physics: self.physics.clone(),
            env: self.env.clone(),
            ppo: self.ppo.clone(),
            out: self.out_dir.clone(),
        }
    }
}

/// Fully resolved configuration, in internal units, as written next to every
/// command's outputs. Loading it back reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSnapshot {
    pub config_hash: String,
    pub line: LineDataset,
    pub physics: TrainPhysics,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub out: PathBuf,
}

impl ConfigSnapshot {
    pub fn into_run_config(self) -> Result<RunConfig> {
        self.line.validate()?;
        self.physics.validate()?;
        self.env.validate()?;
        self.ppo.validate()?;
        let cfg = RunConfig {
            line: self.line,
            physics: self.physics,
            env: self.env,
            ppo: self.ppo,
            out_dir: self.out,
        };
        if cfg.config_hash() != self.config_hash {
            return Err(Error::config("snapshot", "config_hash does not match its contents"));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

pub fn config_hash(line: &LineDataset, physics: &TrainPhysics, env: &EnvConfig) -> String {
    let mut h = Sha256::new();
    for part in [
        serde_json::to_vec(line).expect("serializable"),
        serde_json::to_vec(physics).expect("serializable"),
        serde_json::to_vec(env).expect("serializable"),
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(&part);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
