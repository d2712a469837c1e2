//! Run configuration: one TOML file describing the dataset, split,
//! estimator constants, generator roster, classifier, and loop settings.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::closed_loop::LoopConfig;
use crate::dataset::SplitSpec;
use crate::error::{Error, Result};
use crate::generators::{
    DtwWarpGenerator, Generator, GmxGenerator, RimGenerator, SubprocessGenerator, TswGenerator,
};
use crate::model::{Classifier, LogisticClassifier, MlpClassifier, SubprocessClassifier};
use crate::stats::{PairingMode, StatsConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Independent closed-loop repetitions with derived seeds.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default = "default_generators")]
    pub generators: Vec<GeneratorConfig>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default, rename = "loop")]
    pub loop_section: LoopSection,
}

fn default_seed() -> u64 {
    42
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_repeats() -> usize {
    3
}

fn default_generators() -> Vec<GeneratorConfig> {
    vec![
        GeneratorConfig::Gmx {
            n_components: default_gmx_components(),
        },
        GeneratorConfig::Rim {
            depth: default_rim_depth(),
        },
        GeneratorConfig::Tsw {
            n_segments: default_tsw_segments(),
            warp_ratio: default_tsw_ratio(),
        },
        GeneratorConfig::DtwWarp {
            blend: default_dtw_blend(),
        },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Windows CSV (long or flat layout) split by group key.
    WindowsCsv { path: PathBuf, t: usize, f: usize },
    /// UCR archive TSV pair; the train file is re-split into train/val and
    /// the test file is held out.
    UcrTsv {
        train_path: PathBuf,
        test_path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    /// When false, every window is its own group (no date disjointness).
    pub by_group: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.7,
            val: 0.2,
            test: 0.1,
            by_group: true,
        }
    }
}

impl SplitConfig {
    pub fn spec(&self, seed: u64) -> Result<SplitSpec> {
        SplitSpec::new((self.train, self.val, self.test), seed)
    }
}

fn default_rim_depth() -> usize {
    2
}
fn default_tsw_segments() -> usize {
    4
}
fn default_tsw_ratio() -> f64 {
    0.8
}
fn default_dtw_blend() -> f64 {
    0.5
}
fn default_gmx_components() -> usize {
    3
}
fn default_timeout_secs() -> u64 {
    300
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorConfig {
    Rim {
        #[serde(default = "default_rim_depth")]
        depth: usize,
    },
    Tsw {
        #[serde(default = "default_tsw_segments")]
        n_segments: usize,
        #[serde(default = "default_tsw_ratio")]
        warp_ratio: f64,
    },
    DtwWarp {
        #[serde(default = "default_dtw_blend")]
        blend: f64,
    },
    Gmx {
        #[serde(default = "default_gmx_components")]
        n_components: usize,
    },
    Copy {},
    Subprocess {
        id: String,
        command: Vec<String>,
        pairing: PairingMode,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

impl GeneratorConfig {
    pub fn build(&self, stats: &StatsConfig) -> Box<dyn Generator> {
        match self {
            GeneratorConfig::Rim { depth } => Box::new(RimGenerator { depth: *depth }),
            GeneratorConfig::Tsw {
                n_segments,
                warp_ratio,
            } => Box::new(TswGenerator {
                n_segments: *n_segments,
                warp_ratio: *warp_ratio,
            }),
            GeneratorConfig::DtwWarp { blend } => {
                Box::new(DtwWarpGenerator { blend: *blend })
            }
            GeneratorConfig::Gmx { n_components } => Box::new(GmxGenerator {
                n_components: *n_components,
                variance_threshold: stats.variance_threshold,
                d_max: stats.d_max,
            }),
            GeneratorConfig::Copy {} => Box::new(crate::generators::CopyGenerator),
            GeneratorConfig::Subprocess {
                id,
                command,
                pairing,
                timeout_secs,
            } => Box::new(SubprocessGenerator {
                id: id.clone(),
                command: command.clone(),
                pairing: *pairing,
                timeout: Duration::from_secs(*timeout_secs),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassifierConfig {
    Logistic {
        #[serde(default = "default_l2")]
        l2: f64,
        #[serde(default = "default_logistic_epochs")]
        epochs: usize,
        #[serde(default = "default_logistic_lr")]
        lr: f64,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
        #[serde(default = "default_mlp_epochs")]
        epochs: usize,
        #[serde(default = "default_mlp_lr")]
        lr: f64,
    },
    Subprocess {
        id: String,
        command: Vec<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

fn default_l2() -> f64 {
    1.0
}
fn default_logistic_epochs() -> usize {
    500
}
fn default_logistic_lr() -> f64 {
    0.1
}
fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_mlp_epochs() -> usize {
    300
}
fn default_mlp_lr() -> f64 {
    0.05
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig::Logistic {
            l2: default_l2(),
            epochs: default_logistic_epochs(),
            lr: default_logistic_lr(),
        }
    }
}

impl ClassifierConfig {
    pub fn build(&self) -> Box<dyn Classifier> {
        match self {
            ClassifierConfig::Logistic { l2, epochs, lr } => Box::new(LogisticClassifier {
                l2: *l2,
                epochs: *epochs,
                lr: *lr,
            }),
            ClassifierConfig::Mlp { hidden, epochs, lr } => Box::new(MlpClassifier {
                hidden: hidden.clone(),
                epochs: *epochs,
                lr: *lr,
            }),
            ClassifierConfig::Subprocess {
                id,
                command,
                timeout_secs,
            } => Box::new(SubprocessClassifier {
                id: id.clone(),
                command: command.clone(),
                timeout: Duration::from_secs(*timeout_secs),
            }),
        }
    }
}

/// Loop hyperparameters as written in the config file; `b_max` defaults to
/// half the training-set size when unset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopSection {
    pub eta: [f64; 5],
    pub b_min: usize,
    pub b_max: Option<usize>,
    pub kappa: f64,
    pub rho_r: f64,
    pub s: usize,
    pub r_max: usize,
    pub stop_fraction: f64,
    pub eps: f64,
}

impl Default for LoopSection {
    fn default() -> Self {
        LoopSection {
            eta: [0.5, 0.3, 0.1, 0.1, 0.2],
            b_min: 30,
            b_max: None,
            kappa: 1.6,
            rho_r: 0.9,
            s: 3,
            r_max: 3,
            stop_fraction: 0.05,
            eps: 1e-8,
        }
    }
}

impl LoopSection {
    pub fn loop_config(&self, train_size: usize, seed: u64) -> Result<LoopConfig> {
        let b_max = self
            .b_max
            .unwrap_or_else(|| (train_size / 2).max(self.b_min));
        let cfg = LoopConfig {
            eta: self.eta,
            b_min: self.b_min,
            b_max,
            kappa: self.kappa,
            rho_r: self.rho_r,
            retries: self.s,
            max_reject_streak: self.r_max,
            stop_fraction: self.stop_fraction,
            eps: self.eps,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn from_toml_str(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&raw)?;
        // Dataset paths are resolved relative to the config file.
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        Ok(cfg)
    }

    fn resolve_relative(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&p);
            }
        };
        match &mut self.dataset {
            DatasetConfig::WindowsCsv { path, .. } => fix(path),
            DatasetConfig::UcrTsv {
                train_path,
                test_path,
            } => {
                fix(train_path);
                fix(test_path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetConfig::WindowsCsv { path, t, f } => {
                if *t == 0 || *f == 0 {
                    return Err(Error::Config("window shape must be positive".into()));
                }
                if !path.exists() {
                    return Err(Error::Config(format!("dataset file {} not found", path.display())));
                }
            }
            DatasetConfig::UcrTsv {
                train_path,
                test_path,
            } => {
                for p in [train_path, test_path] {
                    if !p.exists() {
                        return Err(Error::Config(format!("dataset file {} not found", p.display())));
                    }
                }
            }
        }
        self.split.spec(self.seed)?;
        self.stats.validate()?;
        if self.generators.is_empty() {
            return Err(Error::Config("at least one generator is required".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        // Loop section ranges are checked against a placeholder size here
        // and again with the real training size at run time.
        self.loop_section.loop_config(1000, self.seed)?;
        Ok(())
    }

    pub fn build_generators(&self) -> Vec<Box<dyn Generator>> {
        self.generators
            .iter()
            .map(|g| g.build(&self.stats))
            .collect()
    }

    pub fn build_classifier(&self) -> Box<dyn Classifier> {
        self.classifier.build()
    }
}
