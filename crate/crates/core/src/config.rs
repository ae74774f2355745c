//! Run configuration files.
//!
//! TOML with one table per concern. Every key except `seed` has a default.
//!
//! ```toml
//! seed = 7
//! mode = "compressed"          # baseline | compressed | random-sparse
//!
//! [data]
//! format = "idx"               # idx | image-dir
//! train_images = "mnist/train-images-idx3-ubyte"
//! train_labels = "mnist/train-labels-idx1-ubyte"
//! test_images = "mnist/t10k-images-idx3-ubyte"
//! test_labels = "mnist/t10k-labels-idx1-ubyte"
//!
//! [output]
//! dir = "runs/compressed"
//! workers = 2
//!
//! [compression]
//! pruning_threshold = 0.3
//! levels = 2
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Dotted keys such as `network.exc.theta_plus = 0.05` work as usual in TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compression::CompressionConfig;
use crate::error::{Error, Result};
use crate::network::{NetworkParams, PresentationParams};
use crate::pipeline::{Mode, RunSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// MNIST-style IDX image and label files.
    #[default]
    Idx,
    /// `root/<class>/<image>` directory tree, preprocessed to 28x28.
    ImageDir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub format: DataFormat,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Root of an image directory tree (`format = "image-dir"`).
    pub image_root: Option<PathBuf>,
    /// Share of each class's files held out for testing, drawn at random
    /// from the run seed.
    pub test_fraction: f64,
    /// Per-class counts after balancing by duplication.
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Where preprocessed image directories are cached; none disables it.
    pub cache: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            format: DataFormat::Idx,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            image_root: None,
            test_fraction: 0.2,
            train_per_class: 1000,
            test_per_class: 200,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Parallel runs for `sweep` and `compare-sparse`.
    pub workers: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunLimits {
    /// Connectivity kept by `random-sparse` mode.
    pub random_connectivity: f64,
    /// Training images used for labeling; 0 means as many as training used.
    pub label_images: usize,
    /// Test images evaluated; 0 means the whole test set.
    pub test_images: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        let s = RunSettings::default();
        Self {
            random_connectivity: s.random_connectivity,
            label_images: s.label_images,
            test_images: s.test_images,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required; runs are never seeded from the clock.
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub network: NetworkParams,
    #[serde(default)]
    pub presentation: PresentationParams,
    #[serde(default)]
    pub compression: CompressionConfig,
    #[serde(default)]
    pub run: RunLimits,
}

fn default_mode() -> Mode {
    RunSettings::default().mode
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub threshold: Option<f64>,
    pub levels: Option<usize>,
    pub neurons: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| {
                    let line = text[..s.start].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            config_err(&field, e.message().to_string())
        })
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        let d = &mut self.data;
        for p in [
            &mut d.train_images,
            &mut d.train_labels,
            &mut d.test_images,
            &mut d.test_labels,
            &mut d.image_root,
            &mut d.cache,
        ] {
            fix(p);
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(t) = o.threshold {
            self.compression.pruning_threshold = t;
        }
        if let Some(l) = o.levels {
            self.compression.levels = l;
        }
        if let Some(n) = o.neurons {
            self.network.topology.n_exc = n;
            self.network.topology.n_inh = n;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            seed: self.seed,
            mode: self.mode,
            network: self.network,
            presentation: self.presentation,
            compression: self.compression,
            random_connectivity: self.run.random_connectivity,
            label_images: self.run.label_images,
            test_images: self.run.test_images,
        }
    }

    /// Checks parameters and that every referenced input path exists.
    pub fn validate(&self) -> Result<()> {
        self.settings().validate().map_err(|e| match e {
            Error::InvalidParam { name, reason } => config_err(&name, reason),
            other => other,
        })?;
        if self.output.workers == 0 {
            return Err(config_err("output.workers", "must be >= 1"));
        }
        let need = |field: &str, p: &Option<PathBuf>| -> Result<()> {
            match p {
                None => Err(config_err(field, "required for this data format")),
                Some(p) if !p.exists() => Err(config_err(field, format!("{} does not exist", p.display()))),
                Some(_) => Ok(()),
            }
        };
        let d = &self.data;
        match d.format {
            DataFormat::Idx => {
                need("data.train_images", &d.train_images)?;
                need("data.train_labels", &d.train_labels)?;
                need("data.test_images", &d.test_images)?;
                need("data.test_labels", &d.test_labels)?;
            }
            DataFormat::ImageDir => {
                need("data.image_root", &d.image_root)?;
                if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
                    return Err(config_err("data.test_fraction", "must lie in (0, 1)"));
                }
                if d.train_per_class == 0 || d.test_per_class == 0 {
                    return Err(config_err("data.train_per_class/test_per_class", "must be > 0"));
                }
            }
        }
        Ok(())
    }
}
