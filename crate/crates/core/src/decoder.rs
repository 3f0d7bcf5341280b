//! Fusion decoder: rendered feature maps modulate a learned 2D feature map
//! through conditional layer normalization, interleaved with ×2 sub-pixel
//! upsampling, and a final ToRGB convolution.
//!
//! Stage `l` (coarse to fine) runs `fuse(𝓕, f^l)`, a ReLU, and, except after
//! the last stage, `upsample2x`. Four stages give ×8 overall.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fields::{FEATURE_CHANNELS, NUM_SCALES};
use crate::imaging::Image;
use crate::layers::Conv2d;
use crate::render::RenderedFeatureMaps;
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Feature channels of 𝓕 during each stage.
    pub channels: [usize; NUM_SCALES],
    /// Kernel of the channel-expanding convolution before each pixel shuffle.
    pub upsample_kernel: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            channels: [64, 64, 32, 16],
            upsample_kernel: 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub config: DecoderConfig,
    initial: ParamId,
    condition: Vec<Conv2d>,
    upsample: Vec<Conv2d>,
    to_rgb: Conv2d,
}

impl Decoder {
    pub fn new(store: &mut ParamStore, config: DecoderConfig, rng: &mut impl Rng) -> Self {
        let ch = config.channels;
        let initial = store.add("dec.initial", Tensor::randn(&[ch[0]], 1.0, rng));
        let condition = (0..NUM_SCALES)
            .map(|l| {
                let conv = Conv2d::new(store, &format!("dec.cond{}", l + 1), FEATURE_CHANNELS, 2 * ch[l], 3, rng);
                // Start near the identity modulation: small weights, γ bias 1, β bias 0.
                store.get_mut(conv.w).value.data_mut().iter_mut().for_each(|w| *w *= 0.1);
                store.get_mut(conv.b).value.data_mut()[..ch[l]].fill(1.0);
                conv
            })
            .collect();
        let upsample = (0..NUM_SCALES - 1)
            .map(|l| Conv2d::new(store, &format!("dec.up{}", l + 1), ch[l], 4 * ch[l + 1], config.upsample_kernel, rng))
            .collect();
        let to_rgb = Conv2d::new(store, "dec.to_rgb", ch[NUM_SCALES - 1], 3, 3, rng);
        Decoder {
            config,
            initial,
            condition,
            upsample,
            to_rgb,
        }
    }

    /// `γ ⊙ LN(state) + β`, `(γ, β)` from a 3×3 convolution of `f`, which must
    /// already match the state's spatial size.
    pub fn fuse(&self, tape: &mut Tape, store: &ParamStore, stage: usize, state: Var, f: Var) -> Result<Var> {
        let (ss, sf) = (tape.shape(state).to_vec(), tape.shape(f).to_vec());
        if ss.len() != 3 || sf.len() != 3 || ss[1..] != sf[1..] {
            return Err(Error::Shape(format!("fuse: state {ss:?} vs condition {sf:?}")));
        }
        let c = ss[0];
        let gb = self.condition[stage].forward(tape, store, f);
        let gamma = tape.narrow(gb, 0, 0, c);
        let beta = tape.narrow(gb, 0, c, c);
        let normed = tape.layer_norm_channels(state, LN_EPS);
        let scaled = tape.mul(gamma, normed);
        Ok(tape.add(scaled, beta))
    }

    /// Channel-expanding convolution followed by a ×2 pixel shuffle.
    pub fn upsample2x(&self, tape: &mut Tape, store: &ParamStore, stage: usize, state: Var) -> Var {
        let y = self.upsample[stage].forward(tape, store, state);
        tape.pixel_shuffle(y)
    }

    /// 3×3 convolution to RGB and a sigmoid.
    pub fn to_rgb(&self, tape: &mut Tape, store: &ParamStore, state: Var) -> Var {
        let y = self.to_rgb.forward(tape, store, state);
        tape.sigmoid(y)
    }

    /// `maps[l]` is `[C_l, H, W]` on the ray grid; returns `[3, 8H, 8W]`.
    pub fn decode(&self, tape: &mut Tape, store: &ParamStore, maps: &[Var]) -> Result<Var> {
        if maps.len() != NUM_SCALES {
            return Err(Error::InvalidArgument(format!("decoder expects {NUM_SCALES} feature maps, got {}", maps.len())));
        }
        let s0 = tape.shape(maps[0]).to_vec();
        if s0.len() != 3 || s0[0] != FEATURE_CHANNELS {
            return Err(Error::Shape(format!("feature map shape {s0:?}")));
        }
        let (h, w) = (s0[1], s0[2]);
        let init = tape.param(store, self.initial);
        let mut state = tape.broadcast_channels(init, h, w);
        for l in 0..NUM_SCALES {
            if tape.shape(maps[l]) != s0.as_slice() {
                return Err(Error::Shape(format!("feature map {l} has shape {:?}, expected {s0:?}", tape.shape(maps[l]))));
            }
            let f = if l == 0 { maps[l] } else { tape.upsample_nearest(maps[l], 1 << l) };
            state = self.fuse(tape, store, l, state, f)?;
            state = tape.relu(state);
            if l + 1 < NUM_SCALES {
                state = self.upsample2x(tape, store, l, state);
            }
        }
        Ok(self.to_rgb(tape, store, state))
    }

    /// Inference-only decode of plain feature maps.
    pub fn decode_image(&self, store: &ParamStore, maps: &RenderedFeatureMaps) -> Result<Image> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = maps
            .maps
            .iter()
            .zip(&maps.channels)
            .map(|(m, &c)| tape.constant(Tensor::new(vec![c, maps.height, maps.width], m.clone())))
            .collect();
        let out = self.decode(&mut tape, store, &vars)?;
        let s = tape.shape(out).to_vec();
        Ok(Image::from_chw(tape.value(out), s[2], s[1]))
    }
}
