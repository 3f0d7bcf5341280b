//! Scene inputs: a synthetic scene (preset or TOML) or files on disk.

use std::path::{Path, PathBuf};

use p2px_core::camera::parse_cameras;
use p2px_core::pipeline::{ModelConfig, UPSAMPLE_FACTOR};
use p2px_core::scene::{generate_synthetic_scene, load_ply, raycast_gt, SyntheticScene};
use p2px_core::train::TrainView;
use p2px_core::{Camera, Error, Image, PointCloud, Result};

use crate::config::RunConfig;

pub struct SceneData {
    pub cloud: PointCloud,
    pub cameras: Vec<Camera>,
    pub synthetic: Option<SyntheticScene>,
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(io_error(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
    }
}

/// Built-in presets: `sphere` (4 views, 128×128) and `room` (4 views, 256×192).
pub fn synthetic_scene(spec: &str) -> Result<SyntheticScene> {
    match spec {
        "sphere" => Ok(SyntheticScene::sphere_on_floor(4, 128)),
        "room" => Ok(SyntheticScene::room(4, 256, 192)),
        path => {
            let path = Path::new(path);
            require_file(path)?;
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            SyntheticScene::from_toml(&text)
        }
    }
}

pub fn load_scene(cfg: &RunConfig, need_cameras: bool) -> Result<SceneData> {
    let p = &cfg.paths;
    if let Some(spec) = &p.scene {
        let scene = synthetic_scene(spec)?;
        let (cloud, cameras) = generate_synthetic_scene(&scene, scene.density)?;
        return Ok(SceneData {
            cloud,
            cameras,
            synthetic: Some(scene),
        });
    }
    let cloud_path = p.cloud.as_ref().ok_or_else(|| Error::Config("no input: set paths.scene or paths.cloud".into()))?;
    require_file(cloud_path)?;
    let cloud = load_ply(cloud_path)?;
    let cameras = match &p.cameras {
        Some(path) => {
            require_file(path)?;
            parse_cameras(&std::fs::read_to_string(path).map_err(|e| io_error(path, e))?)?
        }
        None if need_cameras => return Err(Error::Config("paths.cameras is required for this command".into())),
        None => Vec::new(),
    };
    Ok(SceneData {
        cloud,
        cameras,
        synthetic: None,
    })
}

/// Decoder output size `(width, height)` for `camera`.
pub fn output_size(model: &ModelConfig, camera: &Camera) -> (usize, usize) {
    let (h, w) = model.grid_for(camera);
    (w * UPSAMPLE_FACTOR, h * UPSAMPLE_FACTOR)
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_error(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

/// Cameras paired with targets at the decoder's output size: ray-cast for
/// synthetic scenes, loaded from `paths.images` otherwise.
pub fn training_views(cfg: &RunConfig, data: &SceneData) -> Result<Vec<TrainView>> {
    if let Some(scene) = &data.synthetic {
        return Ok(data
            .cameras
            .iter()
            .map(|c| {
                let (w, h) = output_size(&cfg.model, c);
                TrainView {
                    camera: c.clone(),
                    target: raycast_gt(scene, &c.scaled(w, h)),
                }
            })
            .collect());
    }
    let dir = cfg.paths.images.as_ref().ok_or_else(|| Error::Config("paths.images is required to train on files".into()))?;
    let files = png_files(dir)?;
    if files.len() != data.cameras.len() {
        return Err(Error::Config(format!("{} cameras but {} images in {}", data.cameras.len(), files.len(), dir.display())));
    }
    data.cameras
        .iter()
        .zip(files)
        .map(|(c, f)| {
            let target = Image::load_png(&f)?;
            let want = output_size(&cfg.model, c);
            if (target.width, target.height) != want {
                return Err(Error::Shape(format!(
                    "{} is {}x{}, expected {}x{}",
                    f.display(),
                    target.width,
                    target.height,
                    want.0,
                    want.1
                )));
            }
            Ok(TrainView {
                camera: c.clone(),
                target,
            })
        })
        .collect()
}
