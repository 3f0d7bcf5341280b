use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use p2px_core::fields::densify;
use p2px_core::pipeline::{Model, ModelConfig, RenderStats};
use p2px_core::sampling::SamplerKind;
use p2px_core::scene::{save_ply, PlyFormat};
use p2px_core::train::Trainer;
use p2px_core::{Error, Result};

use crate::alloc;
use crate::config::RunConfig;
use crate::data::{io_error, load_scene, require_file, training_views};

pub const TIMING_HEADER: &str = "camera,sampling_s,encode_s,field_s,render_s,decode_s,total_s,mean_valid,fallback_rays";
pub const BENCH_HEADER: &str = "sampler,mean_valid,field_evals,render_s,peak_mem_bytes";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.paths.out.as_path();
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    Ok(dir)
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.checkpoint.clone().unwrap_or_else(|| cfg.paths.out.join("model.ckpt"))
}

/// Architecture settings stored next to a checkpoint.
fn sidecar(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// Loads a checkpoint; cell and decoder come from its sidecar when present,
/// sampling settings from the run config.
fn load_model(cfg: &RunConfig, sampler: SamplerKind) -> Result<Model> {
    let ckpt = cfg
        .paths
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("paths.checkpoint is required for this command".into()))?;
    require_file(ckpt)?;
    let mut model_cfg = ModelConfig {
        sampler,
        ..cfg.model.clone()
    };
    let side = sidecar(ckpt);
    if side.is_file() {
        let text = std::fs::read_to_string(&side).map_err(|e| io_error(&side, e))?;
        let stored: ModelConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", side.display())))?;
        model_cfg.cell = stored.cell;
        model_cfg.decoder = stored.decoder;
    }
    Model::load(model_cfg, ckpt)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let data = load_scene(cfg, true)?;
    let views = training_views(cfg, &data)?;
    let model = Model::new(cfg.model.clone(), cfg.seed)?;
    let ctx = model.context(data.cloud)?;
    let dir = out_dir(cfg)?;
    write_text(&dir.join("run.toml"), &cfg.to_toml())?;
    let mut trainer = Trainer::new(model, ctx, views, cfg.train.clone())?;
    let log_path = dir.join("train_log.csv");
    let mut log = create(&log_path)?;
    let logs = trainer.train(Some(&mut log))?;
    log.flush().map_err(|e| io_error(&log_path, e))?;

    let ckpt = checkpoint_path(cfg);
    trainer.model.save(&ckpt)?;
    write_text(&sidecar(&ckpt), &toml::to_string_pretty(&trainer.model.config).expect("model config serializes"))?;

    let eval = trainer.evaluate()?;
    let mut text = String::from("view,psnr,ssim\n");
    for (i, (p, s)) in eval.psnr.iter().zip(&eval.ssim).enumerate() {
        text.push_str(&format!("{i},{p:.4},{s:.6}\n"));
    }
    write_text(&dir.join("eval.csv"), &text)?;
    if let Some(last) = logs.last() {
        println!("trained {} steps, final loss {:.5}", last.step + 1, last.loss_total);
    }
    println!("training views: mean PSNR {:.2} dB, mean SSIM {:.4}", eval.mean_psnr(), eval.mean_ssim());
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

fn timing_row(i: usize, s: &RenderStats) -> String {
    format!(
        "{i},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{}",
        s.sampling_s,
        s.encode_s,
        s.field_s,
        s.render_s,
        s.decode_s,
        s.total_s(),
        s.mean_valid,
        s.fallback_rays
    )
}

pub fn render(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg, cfg.model.sampler)?;
    let data = load_scene(cfg, true)?;
    let ctx = model.context(data.cloud)?;
    let dir = out_dir(cfg)?;
    let timing_path = dir.join("timing.csv");
    let mut timing = create(&timing_path)?;
    let werr = |e| io_error(&timing_path, e);
    writeln!(timing, "{TIMING_HEADER}").map_err(werr)?;
    let mut valid = 0.0;
    for (i, cam) in data.cameras.iter().enumerate() {
        let out = model.render(&ctx, cam)?;
        out.image.write_png(dir.join(format!("view_{i:03}.png")))?;
        writeln!(timing, "{}", timing_row(i, &out.stats)).map_err(werr)?;
        valid += out.stats.mean_valid;
    }
    timing.flush().map_err(werr)?;
    println!(
        "rendered {} views to {} (mean valid samples per ray {:.2})",
        data.cameras.len(),
        dir.display(),
        valid / data.cameras.len().max(1) as f64
    );
    Ok(())
}

/// One bench row per sampler.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub sampler: SamplerKind,
    pub mean_valid: f64,
    pub field_evals: usize,
    pub render_s: f64,
    pub peak_mem_bytes: usize,
}

pub fn bench(cfg: &RunConfig) -> Result<()> {
    let data = load_scene(cfg, true)?;
    let dir = out_dir(cfg)?;
    let mut rows = Vec::new();
    for sampler in [SamplerKind::Uniform, SamplerKind::CoarseToFine, SamplerKind::PointGuided] {
        let model = if cfg.paths.checkpoint.is_some() {
            load_model(cfg, sampler)?
        } else {
            Model::new(
                ModelConfig {
                    sampler,
                    ..cfg.model.clone()
                },
                cfg.seed,
            )?
        };
        let ctx = model.context(data.cloud.clone())?;
        alloc::reset_peak();
        let base = alloc::peak_bytes();
        let mut row = BenchRow {
            sampler,
            mean_valid: 0.0,
            field_evals: 0,
            render_s: 0.0,
            peak_mem_bytes: 0,
        };
        for cam in &data.cameras {
            let out = model.render(&ctx, cam)?;
            let s = &out.stats;
            row.mean_valid += s.mean_valid / data.cameras.len() as f64;
            let coarse = if sampler == SamplerKind::CoarseToFine { model.config.samples / 2 } else { 0 };
            row.field_evals += (s.mean_valid * s.rays as f64).round() as usize + coarse * s.rays;
            row.render_s += s.total_s();
        }
        row.peak_mem_bytes = alloc::peak_bytes().saturating_sub(base);
        rows.push(row);
    }
    let mut text = format!("{BENCH_HEADER}\n");
    for r in &rows {
        text.push_str(&format!("{},{:.4},{},{:.6},{}\n", r.sampler, r.mean_valid, r.field_evals, r.render_s, r.peak_mem_bytes));
    }
    write_text(&dir.join("bench.csv"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn densify_cmd(cfg: &RunConfig) -> Result<()> {
    let model = load_model(cfg, cfg.model.sampler)?;
    let data = load_scene(cfg, false)?;
    let ctx = model.context(data.cloud)?;
    let pyramid = model.encode(&ctx);
    let d = &cfg.densify;
    let dense = densify(&ctx.cloud, &model.store, &model.fields, &pyramid, d.samples_per_point, d.radius, d.threshold, cfg.seed)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("densified.ply");
    save_ply(&dense, &path, PlyFormat::BinaryLittleEndian)?;
    println!("densified {} -> {} points: {}", ctx.cloud.len(), dense.len(), path.display());
    Ok(())
}
