//! Run configuration: a TOML file with sections, overridden by flags.

use std::path::{Path, PathBuf};

use p2px_core::pipeline::ModelConfig;
use p2px_core::sampling::SamplerKind;
use p2px_core::train::TrainConfig;
use p2px_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Train,
    Render,
    Bench,
    Densify,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Input cloud (PLY).
    pub cloud: Option<PathBuf>,
    /// Camera file in the text camera format.
    pub cameras: Option<PathBuf>,
    /// Directory of ground-truth PNGs, one per camera in name order.
    pub images: Option<PathBuf>,
    /// Synthetic scene: `sphere`, `room`, or a scene TOML file.
    pub scene: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensifyConfig {
    pub samples_per_point: usize,
    pub radius: f64,
    pub threshold: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            samples_per_point: 8,
            radius: p2px_core::sampling::DEFAULT_RADIUS,
            threshold: p2px_core::fields::DENSITY_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub densify: DensifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            seed: 0,
            paths: Paths {
                out: PathBuf::from("out"),
                ..Default::default()
            },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            densify: DensifyConfig::default(),
        }
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub sampler: Option<SamplerKind>,
    pub rays: Option<[usize; 2]>,
    pub radius: Option<f64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
    pub scene: Option<String>,
    pub cloud: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub steps: Option<usize>,
    pub lambda_pc: Option<f64>,
    pub factor: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: Overrides) {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(o.seed, self.seed);
        set!(o.sampler, self.model.sampler);
        set!(o.radius, self.model.radius);
        set!(o.samples, self.model.samples);
        set!(o.out, self.paths.out);
        set!(o.steps, self.train.steps);
        set!(o.lambda_pc, self.train.loss.pc);
        set!(o.factor, self.densify.samples_per_point);
        if o.rays.is_some() {
            self.model.ray_grid = o.rays;
        }
        for (src, dst) in [
            (o.cloud, &mut self.paths.cloud),
            (o.cameras, &mut self.paths.cameras),
            (o.images, &mut self.paths.images),
            (o.checkpoint, &mut self.paths.checkpoint),
        ] {
            if src.is_some() {
                *dst = src;
            }
        }
        if o.scene.is_some() {
            self.paths.scene = o.scene;
        }
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if !(self.densify.radius > 0.0) {
            return Err(Error::Config(format!("densify radius must be positive, got {}", self.densify.radius)));
        }
        Ok(())
    }
}

/// Parses `HxW`.
pub fn parse_grid(s: &str) -> std::result::Result<[usize; 2], String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    if h == 0 || w == 0 {
        return Err(format!("ray grid {s:?} is empty"));
    }
    Ok([h, w])
}
