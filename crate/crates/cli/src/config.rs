//! Run configuration: one experiment, one strategy, one seed.

use std::path::{Path, PathBuf};

use avocc_core::agent::{AgentConfig, Strategy};
use avocc_core::redirect::GainConfig;
use avocc_core::resolver::ResolutionConstraints;
use avocc_core::rng::{derive_seed, Stream};
use avocc_core::scenario::{generate_scene, load_scene, Scene, SceneConfig, SceneError, WorkspaceLayout};
use serde::{Deserialize, Serialize};

use crate::error::{read_input, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub strategy: Strategy,
    /// Scene file to load. Relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_file: Option<PathBuf>,
    /// Scene to generate. Its seed is replaced by one derived from `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneConfig>,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub gains: GainConfig,
    #[serde(default)]
    pub constraints: ResolutionConstraints,
    #[serde(default)]
    pub layout: WorkspaceLayout,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    /// Not serialized, so a trace does not depend on where it was written.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_trials() -> usize {
    15
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn with_scene(strategy: Strategy, scene: SceneConfig) -> Self {
        RunConfig {
            strategy,
            scene_file: None,
            scene: Some(scene),
            agent: AgentConfig::default(),
            gains: GainConfig::default(),
            constraints: ResolutionConstraints::default(),
            layout: WorkspaceLayout::default(),
            n_trials: default_trials(),
            output_dir: default_output_dir(),
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid run config: {e}")))
    }

    /// Loads a config file, anchoring a relative scene path to the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = read_input(path)?;
        let text = String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let (Some(file), Some(dir)) = (&cfg.scene_file, path.parent()) {
            if file.is_relative() {
                cfg.scene_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }

    /// Checks the config and pins every derived value: the scene seed and
    /// the agent seed both come from the run seed.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        match (&self.scene_file, &mut self.scene) {
            (Some(_), Some(_)) => return Err(CliError::Usage("give either scene_file or scene, not both".into())),
            (None, None) => return Err(CliError::Usage("no scene source: set scene_file or scene".into())),
            (Some(path), None) => {
                if !path.is_file() {
                    return Err(CliError::Usage(format!("scene file {} not found", path.display())));
                }
            }
            (None, Some(scene)) => {
                scene.seed = derive_seed(self.seed, Stream::Scene);
                scene.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        self.agent.seed = self.seed;
        self.agent.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.gains
            .validate()
            .map_err(|e| CliError::Usage(format!("invalid gains: {e}")))?;
        self.constraints
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.layout.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.n_trials == 0 {
            return Err(CliError::Usage("n_trials must be at least 1".into()));
        }
        Ok(self)
    }

    /// Loads or generates the scene of a resolved config.
    pub fn build_scene(&self) -> Result<Scene, CliError> {
        if let Some(path) = &self.scene_file {
            let bytes = read_input(path)?;
            return load_scene(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())));
        }
        let scene_cfg = self.scene.as_ref().expect("resolved config has a scene source");
        generate_scene(scene_cfg).map_err(|e| match e {
            SceneError::GenerationFailure(m) => CliError::Scenario(m),
            other => CliError::Usage(other.to_string()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"strategy":"rdw","scene":{"tree_count":10,"target_count":0}}"#).unwrap();
        assert_eq!(cfg.n_trials, 15);
        assert_eq!(cfg.gains, GainConfig::default());
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_field_rejected() {
        let err = RunConfig::from_json(r#"{"strategy":"rdw","scene":{},"bogus":1}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn scene_source_must_be_unique() {
        let both = RunConfig {
            scene_file: Some("x.json".into()),
            ..RunConfig::with_scene(Strategy::None, SceneConfig::default())
        };
        assert!(matches!(both.resolve(), Err(CliError::Usage(_))));
        let neither = RunConfig {
            scene: None,
            ..RunConfig::with_scene(Strategy::None, SceneConfig::default())
        };
        assert!(matches!(neither.resolve(), Err(CliError::Usage(_))));
    }

    #[test]
    fn seeds_derive_from_run_seed() {
        let cfg = RunConfig {
            seed: 5,
            ..RunConfig::with_scene(
                Strategy::Atr,
                SceneConfig {
                    seed: 999,
                    ..Default::default()
                },
            )
        }
        .resolve()
        .unwrap();
        assert_eq!(cfg.scene.unwrap().seed, derive_seed(5, Stream::Scene));
        assert_eq!(cfg.agent.seed, 5);
    }
}
