//! Optimization loop: one view per step, combined point / pixel / feature
//! loss, AdamW with an exponentially decaying learning rate, CSV logging.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{generate_rays, Camera};
use crate::fields::grid::trilinear_map;
use crate::fields::NUM_SCALES;
use crate::imaging::Image;
use crate::losses::{loss_nr, loss_pc, total_loss, LossWeights, PerceptualNet};
use crate::metrics::{psnr, ssim};
use crate::pipeline::{Model, SceneContext, UPSAMPLE_FACTOR};
use crate::sampling::SamplerKind;
use crate::tensor::{adamw_step, LrSchedule, OptimState, Tape, Tensor, Var};
use crate::{Error, Result};

pub const CSV_HEADER: &str = "step,loss_total,loss_pc,loss_nr,loss_per,psnr,ssim";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub weight_decay: f64,
    pub loss: LossWeights,
    /// Cloud points supervised per step.
    pub pc_points: usize,
    /// Stratified jitter of the sample depths during training.
    pub jitter: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let lr = LrSchedule::default();
        TrainConfig {
            steps: 2000,
            lr_start: lr.start,
            lr_end: lr.end,
            weight_decay: 1e-4,
            loss: LossWeights::default(),
            pc_points: 1024,
            jitter: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let both_zero = self.lr_start == 0.0 && self.lr_end == 0.0;
        if !(both_zero || (self.lr_start > 0.0 && self.lr_end > 0.0)) {
            return Err(Error::Config(format!("learning rates must be positive, got {} -> {}", self.lr_start, self.lr_end)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            start: self.lr_start,
            end: self.lr_end,
        }
    }
}

/// A camera with its ground-truth image at the decoder's output size.
#[derive(Clone, Debug)]
pub struct TrainView {
    pub camera: Camera,
    pub target: Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepLog {
    pub step: usize,
    pub loss_total: f64,
    pub loss_pc: f64,
    pub loss_nr: f64,
    pub loss_per: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl StepLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.8},{:.8},{:.8},{:.8},{:.4},{:.6}",
            self.step, self.loss_total, self.loss_pc, self.loss_nr, self.loss_per, self.psnr, self.ssim
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl Evaluation {
    pub fn mean_psnr(&self) -> f64 {
        self.psnr.iter().sum::<f64>() / self.psnr.len().max(1) as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.ssim.iter().sum::<f64>() / self.ssim.len().max(1) as f64
    }
}

#[derive(Debug)]
pub struct Trainer {
    pub model: Model,
    pub ctx: SceneContext,
    pub views: Vec<TrainView>,
    pub config: TrainConfig,
    optim: OptimState,
    perceptual: PerceptualNet,
    rng: ChaCha8Rng,
    step: usize,
}

impl Trainer {
    pub fn new(model: Model, ctx: SceneContext, views: Vec<TrainView>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if views.is_empty() {
            return Err(Error::InvalidArgument("training needs at least one view".into()));
        }
        for (i, v) in views.iter().enumerate() {
            let (h, w) = model.config.grid_for(&v.camera);
            let want = (w * UPSAMPLE_FACTOR, h * UPSAMPLE_FACTOR);
            if (v.target.width, v.target.height) != want {
                return Err(Error::Shape(format!(
                    "view {i}: target is {}x{}, decoder output is {}x{}",
                    v.target.width, v.target.height, want.0, want.1
                )));
            }
        }
        let optim = OptimState::new(&model.store, config.lr_start, config.weight_decay);
        Ok(Trainer {
            perceptual: PerceptualNet::new(config.seed ^ 0x5EED),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            model,
            ctx,
            views,
            config,
            optim,
            step: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// Point-supervision loss on a random subset of the cloud.
    fn point_loss(&mut self, tape: &mut Tape, volumes: &[Var; NUM_SCALES]) -> Var {
        let cloud = &self.ctx.cloud;
        let k = self.config.pc_points.min(cloud.len());
        if k == 0 {
            return tape.constant(Tensor::scalar(0.0));
        }
        let idx = sample_indices(&mut self.rng, cloud.len(), k).into_vec();
        let points: Vec<_> = idx.iter().map(|&i| cloud.positions[i]).collect();
        let colors: Vec<f64> = idx.iter().flat_map(|&i| cloud.colors[i]).collect();
        let l = NUM_SCALES - 1;
        let geo = &self.ctx.geometry;
        let map = trilinear_map(geo.scale_grid(l), geo.cell, &points);
        let q = tape.gather_weighted(volumes[l], Arc::new(map));
        let head = &self.model.fields.heads[l];
        let h = head.forward(tape, &self.model.store, q);
        let c = head.color(tape, &h);
        loss_pc(tape, c, h.sigma, &Tensor::new(vec![k, 3], colors), self.config.loss.density_threshold)
    }

    /// One optimization step on a randomly chosen view.
    pub fn step(&mut self) -> Result<StepLog> {
        let v = self.rng.gen_range(0..self.views.len());
        let jitter_seed = self.config.jitter.then(|| self.rng.gen::<u64>());
        let camera = self.views[v].camera.clone();
        let grid = self.model.config.grid_for(&camera);

        let mut tape = Tape::new();
        let volumes = self.model.fields.encode_on_tape(&mut tape, &self.model.store, &self.ctx.base, &self.ctx.geometry);
        let pyramid = (self.model.config.sampler == SamplerKind::CoarseToFine).then(|| self.model.pyramid_of(&tape, &self.ctx, &volumes));
        let rays = generate_rays(&camera, grid)?;
        let samples = self.model.sample_rays(&self.ctx, &rays, grid, pyramid.as_ref(), jitter_seed)?;
        let out = self.model.forward_from_volumes(&mut tape, &self.ctx.geometry, &volumes, &samples)?;

        let target = self.views[v].target.clone();
        let target_t = Tensor::new(vec![3, target.height, target.width], target.to_chw());
        let l_nr = loss_nr(&mut tape, out.image, &target_t);
        let gt = tape.constant(target_t);
        let l_per = self.perceptual.distance(&mut tape, out.image, gt);
        let l_pc = self.point_loss(&mut tape, &volumes);
        let total = total_loss(&mut tape, &self.config.loss, l_pc, l_nr, l_per);

        let loss_total = tape.scalar(total);
        if !loss_total.is_finite() {
            let dump = format!(
                "loss at step {} is {loss_total} (view {v}, loss_pc {}, loss_nr {}, loss_per {}, rays {}, mean valid {:.2}, fallback rays {}, non-finite image values {})",
                self.step,
                tape.scalar(l_pc),
                tape.scalar(l_nr),
                tape.scalar(l_per),
                samples.rays(),
                samples.mean_valid(),
                samples.fallback_rays(),
                tape.value(out.image).iter().filter(|x| !x.is_finite()).count(),
            );
            log::error!("{dump}");
            return Err(Error::NonFinite(dump));
        }
        let grads = tape.backward(total)?;
        self.model.store.zero_grad();
        grads.accumulate_into(&mut self.model.store);
        self.optim.lr = self.config.schedule().rate(self.step, self.config.steps);
        adamw_step(&mut self.model.store, &mut self.optim);

        let pred = Image::from_chw(tape.value(out.image), target.width, target.height);
        let log = StepLog {
            step: self.step,
            loss_total,
            loss_pc: tape.scalar(l_pc),
            loss_nr: tape.scalar(l_nr),
            loss_per: tape.scalar(l_per),
            psnr: psnr(&pred, &target)?,
            ssim: ssim(&pred, &target)?,
        };
        self.step += 1;
        Ok(log)
    }

    /// Runs the remaining steps, writing one CSV row per step to `csv`.
    pub fn train(&mut self, mut csv: Option<&mut dyn Write>) -> Result<Vec<StepLog>> {
        let io = |e| Error::io("training log", e);
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{CSV_HEADER}").map_err(io)?;
        }
        let started = Instant::now();
        let mut logs = Vec::with_capacity(self.config.steps.saturating_sub(self.step));
        while self.step < self.config.steps {
            let log = self.step()?;
            if let Some(w) = csv.as_mut() {
                writeln!(w, "{}", log.csv_row()).map_err(io)?;
            }
            if log.step % 100 == 0 {
                log::info!(
                    "step {} loss {:.5} psnr {:.2} ({:.1}s)",
                    log.step,
                    log.loss_total,
                    log.psnr,
                    started.elapsed().as_secs_f64()
                );
            }
            logs.push(log);
        }
        Ok(logs)
    }

    /// PSNR/SSIM of deterministic renders of every training view.
    pub fn evaluate(&self) -> Result<Evaluation> {
        let mut eval = Evaluation::default();
        for v in &self.views {
            let img = self.model.render(&self.ctx, &v.camera)?.image;
            eval.psnr.push(psnr(&img, &v.target)?);
            eval.ssim.push(ssim(&img, &v.target)?);
        }
        Ok(eval)
    }
}
