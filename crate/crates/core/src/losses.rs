//! Training objectives on the tape: point-cloud supervision, pixel MSE and a
//! frozen multi-scale feature distance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fields::DENSITY_THRESHOLD;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub pc: f64,
    pub nr: f64,
    pub per: f64,
    /// Density threshold `D` of the point term.
    pub density_threshold: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pc: 0.1,
            nr: 1.0,
            per: 0.1,
            density_threshold: DENSITY_THRESHOLD,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = [self.pc, self.nr, self.per].iter().all(|v| *v >= 0.0 && v.is_finite()) && self.density_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid loss weights {self:?}")))
        }
    }
}

/// `mean_k ‖ĉ_k − c_k‖² + (1/D)·relu(D − σ_k)` with `color[K, 3]`, `sigma[K]`.
pub fn loss_pc(tape: &mut Tape, color: Var, sigma: Var, target: &Tensor, d: f64) -> Var {
    let k = tape.shape(sigma)[0];
    let t = tape.constant(target.clone());
    let diff = tape.sub(color, t);
    let sq = tape.square(diff);
    let color_term = tape.sum(sq);
    let neg = tape.scale(sigma, -1.0);
    let gap = tape.add_scalar(neg, d);
    let hinge = tape.relu(gap);
    let hinge = tape.sum(hinge);
    let hinge = tape.scale(hinge, 1.0 / d);
    let total = tape.add(color_term, hinge);
    tape.scale(total, 1.0 / k.max(1) as f64)
}

/// Mean squared error against a constant target of the same shape.
pub fn loss_nr(tape: &mut Tape, image: Var, target: &Tensor) -> Var {
    assert_eq!(tape.shape(image), target.shape(), "loss_nr: shape mismatch");
    let t = tape.constant(target.clone());
    let d = tape.sub(image, t);
    let sq = tape.square(d);
    tape.mean(sq)
}

/// Frozen random feature pyramid: four stride-2 3×3 convolutions with ReLU
/// between levels. The distance compares pre-activation features.
#[derive(Clone, Debug)]
pub struct PerceptualNet {
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl PerceptualNet {
    pub const LEVELS: usize = 4;
    pub const CHANNELS: usize = 16;

    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut cin = 3;
        for _ in 0..Self::LEVELS {
            let fan = cin * 9;
            weights.push(Tensor::randn(&[Self::CHANNELS, cin, 3, 3], (1.0 / fan as f64).sqrt(), &mut rng));
            biases.push(Tensor::zeros(&[Self::CHANNELS]));
            cin = Self::CHANNELS;
        }
        PerceptualNet { weights, biases }
    }

    /// Pre-activation features of every level for a `[3, H, W]` image.
    pub fn features(&self, tape: &mut Tape, image: Var) -> Vec<Var> {
        let mut x = image;
        let mut out = Vec::with_capacity(Self::LEVELS);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let wv = tape.constant(w.clone());
            let bv = tape.constant(b.clone());
            let f = tape.conv2d(x, wv, bv, 2, 1);
            out.push(f);
            x = tape.relu(f);
        }
        out
    }

    /// `Σ_levels mean |φ(a) − φ(b)|`.
    pub fn distance(&self, tape: &mut Tape, a: Var, b: Var) -> Var {
        let fa = self.features(tape, a);
        let fb = self.features(tape, b);
        let mut total = tape.constant(Tensor::scalar(0.0));
        for (x, y) in fa.into_iter().zip(fb) {
            let d = tape.sub(x, y);
            let d = tape.abs(d);
            let m = tape.mean(d);
            total = tape.add(total, m);
        }
        total
    }
}

/// `λ_pc·L_pc + λ_nr·L_nr + λ_per·L_per`.
pub fn total_loss(tape: &mut Tape, w: &LossWeights, pc: Var, nr: Var, per: Var) -> Var {
    let a = tape.scale(pc, w.pc);
    let b = tape.scale(nr, w.nr);
    let c = tape.scale(per, w.per);
    let ab = tape.add(a, b);
    tape.add(ab, c)
}
