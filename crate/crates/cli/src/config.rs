//! Experiment configuration, parsed strictly from TOML.

use anyhow::{bail, Context, Result};
use infhit::simulate::{uniform_grid, Stepping};
use infhit::transform::TransformKind;
use infhit::verify::Tolerances;
use infhit::{LimitLaw, ScalingFunction, SystemModel, TargetSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required, here or on the command line.
    pub seed: Option<u64>,
    pub system: SystemModel,
    /// Target sequence `E_1, E_2, ...`; most commands use the last one.
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub scaling: ScalingSource,
    #[serde(default)]
    pub mode: Mode,
    pub law: Option<LimitLaw>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_cap")]
    pub cap: u64,
    #[serde(default)]
    pub stepping: Stepping,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Not part of the experiment's identity, so left out of the hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub transform: Option<TransformSection>,
    pub verify: Option<VerifySection>,
}

fn default_samples() -> usize {
    10_000
}

fn default_cap() -> u64 {
    10_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalingSource {
    /// Closed-form return sequence of the system.
    #[default]
    Known,
    /// Fit from the simulated wandering rate of `Y`.
    Estimated {
        n_max: u64,
        n_samples: usize,
        alpha: f64,
    },
    Explicit {
        c: f64,
        alpha: f64,
        #[serde(default)]
        beta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Return,
    Hitting,
    #[default]
    Both,
    /// Both laws under the distorted normalization `mu(E) a(phi)`.
    Distorted,
}

impl Mode {
    pub fn distorted(self) -> bool {
        self == Self::Distorted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub t_max: f64,
    /// Number of grid points including both ends.
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            t_max: 10.0,
            points: 1001,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Vec<f64> {
        uniform_grid(self.t_max, self.points - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformAction {
    #[default]
    Forward,
    Invert,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformInput {
    /// The configured limit law evaluated on the grid.
    #[default]
    Law,
    /// The empirical return law of the last target.
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSection {
    pub operator: TransformKind,
    #[serde(default)]
    pub action: TransformAction,
    #[serde(default)]
    pub input: TransformInput,
    /// Residual bound for the fixed point.
    #[serde(default = "default_fixed_point_tol")]
    pub tol: f64,
}

fn default_fixed_point_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    #[default]
    ReturnVsHitting,
    Convergence,
    Robustness,
    Decomposition,
    Tightness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub check: Check,
    /// One relative shift per target, for the robustness check.
    #[serde(default)]
    pub perturbations: Vec<f64>,
    /// `(m, n)` pairs for the tightness check.
    #[serde(default)]
    pub pairs: Vec<(u64, u64)>,
    /// Sets and horizon of the decomposition check.
    #[serde(default)]
    pub set_a: Vec<usize>,
    #[serde(default)]
    pub set_b: Vec<usize>,
    #[serde(default = "default_steps")]
    pub n_max: usize,
}

fn default_steps() -> usize {
    8
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    /// Field-level checks beyond what the types enforce.
    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            bail!("seed: missing; set it in the config or pass --seed");
        }
        if self.n_samples == 0 {
            bail!("n_samples: must be positive");
        }
        if self.cap == 0 {
            bail!("cap: must be positive");
        }
        if !(self.grid.t_max.is_finite() && self.grid.t_max > 0.0) {
            bail!("grid.t_max: must be positive, got {}", self.grid.t_max);
        }
        if self.grid.points < 2 {
            bail!("grid.points: need at least 2, got {}", self.grid.points);
        }
        if let Some(law) = &self.law {
            law.validate().context("law")?;
        }
        for (i, t) in self.targets.iter().enumerate() {
            self.system
                .validate_target(t)
                .with_context(|| format!("targets[{i}]"))?;
        }
        let t = self.tolerances;
        for (name, v) in [
            ("transform", t.transform),
            ("law", t.law),
            ("censored_mass", t.censored_mass),
            ("robustness", t.robustness),
            ("decomposition", t.decomposition),
            ("noise_multiple", t.noise_multiple),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                bail!("tolerances.{name}: must be non-negative, got {v}");
            }
        }
        if let ScalingSource::Estimated {
            n_max, n_samples, ..
        } = self.scaling
        {
            if n_max == 0 || n_samples == 0 {
                bail!("scaling: n_max and n_samples must be positive");
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn require_targets(&self) -> Result<&[TargetSpec]> {
        if self.targets.is_empty() {
            bail!("targets: at least one target is required for this command");
        }
        Ok(&self.targets)
    }

    /// SHA-256 of the canonical JSON form, which fixes field order and number formatting.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn explicit_scaling(&self) -> Result<Option<ScalingFunction>> {
        match self.scaling {
            ScalingSource::Explicit { c, alpha, beta } => {
                Ok(Some(ScalingFunction::new(c, alpha, beta).context("scaling")?))
            }
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
[system]
kind = "renewal_tower"
alpha = 0.5
[[targets]]
kind = "label_interval"
lo = 0.0
hi = 0.1
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.mode, Mode::Both);
        assert_eq!(c.grid.points, 1001);
        assert_eq!(c.scaling, ScalingSource::Known);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\n[grid]\nt_max = 5.0\nstep = 0.1\n");
        let err = format!("{:#}", ExperimentConfig::parse(&text).unwrap_err());
        assert!(err.contains("step"), "{err}");
    }

    #[test]
    fn missing_seed_is_rejected() {
        let text = MINIMAL.replace("seed = 1", "");
        let c = ExperimentConfig::parse(&text).unwrap();
        assert!(format!("{}", c.validate().unwrap_err()).contains("seed"));
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = Some(2);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_system_parameter_is_reported() {
        let text = MINIMAL.replace("alpha = 0.5", "alpha = 1.5");
        assert!(ExperimentConfig::parse(&text).is_err());
    }
}
