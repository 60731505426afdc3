//! Run configuration: one JSON file per experiment, with command-line flags
//! overriding individual keys.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dtdg_core::graph::GeneratorConfig;
use dtdg_core::models::{Architecture, ModelConfig};
use dtdg_core::pipeline::{BootstrapConfig, GridSpec, MonthRange, TrainConfig, WindowSpec, DEFAULT_WINDOW_LEN};
use dtdg_core::seed::derive_seed;
use serde::{Deserialize, Serialize};

/// Window length plus optional explicit month ranges. Either all three
/// ranges are given or none, in which case the default split is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub window_len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<MonthRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<MonthRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<MonthRange>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            window_len: DEFAULT_WINDOW_LEN,
            train: None,
            val: None,
            test: None,
        }
    }
}

impl WindowConfig {
    pub fn resolve(&self, n_months: usize) -> Result<WindowSpec> {
        let spec = match (self.train, self.val, self.test) {
            (None, None, None) => WindowSpec::default_for(n_months, self.window_len)?,
            (Some(train), Some(val), Some(test)) => WindowSpec {
                window_len: self.window_len,
                train,
                val,
                test,
            },
            _ => bail!("window: give all of train, val and test or none of them"),
        };
        spec.validate(n_months)?;
        Ok(spec)
    }

    pub fn explicit(spec: &WindowSpec) -> Self {
        WindowConfig {
            window_len: spec.window_len,
            train: Some(spec.train),
            val: Some(spec.val),
            test: Some(spec.test),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub architecture: Architecture,
    #[serde(default)]
    pub candidates: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it by name.
    pub seed: u64,
    pub jobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub generator: GeneratorConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    pub window: WindowConfig,
    pub bootstrap: BootstrapConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 1,
            data: None,
            out: None,
            generator: GeneratorConfig::default(),
            model: None,
            train: TrainConfig::default(),
            window: WindowConfig::default(),
            bootstrap: BootstrapConfig::default(),
            grid: None,
        }
    }
}

/// Values given on the command line; each replaces the config key of the
/// same name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Reads the config (or starts from defaults), applies the overrides and
    /// derives every component seed from the master seed.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &overrides.data {
            cfg.data = Some(d.clone());
        }
        if let Some(o) = &overrides.out {
            cfg.out = Some(o.clone());
        }
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(j) = overrides.jobs {
            cfg.jobs = j;
        }
        if cfg.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        cfg.derive_seeds();
        Ok(cfg)
    }

    /// Named sub-streams: `generator`, `bootstrap`; the model and trainer
    /// take the master seed and derive `init`, `dropout` and `smote` from it.
    pub fn derive_seeds(&mut self) {
        self.generator.seed = derive_seed(self.seed, "generator");
        self.bootstrap.seed = derive_seed(self.seed, "bootstrap");
        self.train.seed = self.seed;
        if let Some(m) = &mut self.model {
            m.seed = self.seed;
        }
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .context("no data directory: pass --data or set \"data\" in the config")
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .context("no output directory: pass --out or set \"out\" in the config")
    }

    pub fn model(&self) -> Result<&ModelConfig> {
        self.model.as_ref().context("config has no \"model\" section")
    }

    pub fn grid(&self) -> Result<&GridConfig> {
        self.grid.as_ref().context("config has no \"grid\" section")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub dtdg: &'static str,
    pub bundle_format: u32,
    pub checkpoint_format: u32,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            dtdg: env!("CARGO_PKG_VERSION"),
            bundle_format: dtdg_core::graph::FORMAT_VERSION,
            checkpoint_format: dtdg_core::models::CHECKPOINT_VERSION,
        }
    }
}

/// Contents of `resolved_config.json` in every run directory.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig<'a> {
    pub command: &'static str,
    pub versions: Versions,
    pub config: &'a RunConfig,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"seed": 3, "jobs": 2, "data": "a", "model": {"architecture": "features_gru", "rnn_hidden": 4}}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(
            Some(&path),
            &Overrides {
                data: Some("b".into()),
                seed: Some(9),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(cfg.data.as_deref(), Some(Path::new("b")));
        assert_eq!(cfg.jobs, 2);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.model.unwrap().seed, 9);
        assert_eq!(cfg.generator.seed, derive_seed(9, "generator"));
        assert_eq!(cfg.bootstrap.seed, derive_seed(9, "bootstrap"));
    }

    #[test]
    fn unknown_keys_and_partial_windows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"sed": 3}"#).unwrap();
        assert!(RunConfig::load(Some(&path), &Overrides::default()).is_err());

        let w = WindowConfig {
            train: Some(MonthRange::new(0, 5).unwrap()),
            ..WindowConfig::default()
        };
        assert!(w.resolve(12).is_err());
        let spec = WindowConfig::default().resolve(12).unwrap();
        assert_eq!(WindowConfig::explicit(&spec).resolve(12).unwrap(), spec);
    }

    #[test]
    fn resolved_config_parses_back() {
        let mut cfg = RunConfig::load(None, &Overrides::default()).unwrap();
        cfg.model = Some(ModelConfig::new(Architecture::PagerankGru));
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
