//! Volume-rendering integrator: weights from densities and spacing, and the
//! weighted sums that turn per-sample colors or features into pixels.
//!
//! The differentiable batched form lives on the tape ([`crate::tensor::Tape::composite`]);
//! the functions here are the plain scalar versions used for inference
//! diagnostics and as references.

use crate::{Error, Result};

/// Per-sample compositing terms of one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RayWeights {
    pub weights: Vec<f64>,
    pub transmittance: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl RayWeights {
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `α_i = 1 − exp(−σ_i δ_i)`, `T_i = exp(−Σ_{j<i} σ_j δ_j)`, `w_i = T_i α_i`.
/// Transmittance is accumulated in log space.
pub fn compute_weights(sigma: &[f64], delta: &[f64]) -> Result<RayWeights> {
    if sigma.len() != delta.len() {
        return Err(Error::Shape(format!("{} densities but {} deltas", sigma.len(), delta.len())));
    }
    if let Some((index, &value)) = sigma.iter().enumerate().find(|(_, s)| !(**s >= 0.0)) {
        return Err(Error::NegativeDensity { index, value });
    }
    if let Some(d) = delta.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::InvalidArgument(format!("sample spacing must be positive, got {d}")));
    }
    let n = sigma.len();
    let mut out = RayWeights {
        weights: Vec::with_capacity(n),
        transmittance: Vec::with_capacity(n),
        alpha: Vec::with_capacity(n),
    };
    let mut depth = 0.0f64;
    for (s, d) in sigma.iter().zip(delta) {
        let tau = s * d;
        let t = (-depth).exp();
        // exp_m1 keeps α accurate for tiny σδ; an infinite σ gives α = 1.
        let a = if tau.is_infinite() { 1.0 } else { -(-tau).exp_m1() };
        out.transmittance.push(t);
        out.alpha.push(a);
        out.weights.push(t * a);
        depth += tau;
    }
    Ok(out)
}

/// `ĉ = Σ w_i c_i`.
pub fn render_color(weights: &[f64], colors: &[[f64; 3]]) -> [f64; 3] {
    assert_eq!(weights.len(), colors.len(), "render_color: one color per weight");
    let mut c = [0.0; 3];
    for (w, col) in weights.iter().zip(colors) {
        for k in 0..3 {
            c[k] += w * col[k];
        }
    }
    c
}

/// `Σ w_i f_i` for `C`-channel features stored row-major as `[n, C]`.
pub fn render_feature(weights: &[f64], features: &[f64], channels: usize) -> Vec<f64> {
    assert_eq!(weights.len() * channels, features.len(), "render_feature: shape mismatch");
    let mut out = vec![0.0; channels];
    for (w, f) in weights.iter().zip(features.chunks(channels.max(1))) {
        for (o, v) in out.iter_mut().zip(f) {
            *o += w * v;
        }
    }
    out
}

/// Feature maps rendered on one ray grid: per scale `[C, H, W]` planar.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFeatureMaps {
    pub height: usize,
    pub width: usize,
    pub channels: Vec<usize>,
    pub maps: Vec<Vec<f64>>,
    /// Optional direct RGB from the finest scale, `[3, H, W]`.
    pub rgb: Option<Vec<f64>>,
}

impl RenderedFeatureMaps {
    pub fn num_scales(&self) -> usize {
        self.maps.len()
    }

    pub fn is_finite(&self) -> bool {
        self.maps.iter().flatten().chain(self.rgb.iter().flatten()).all(|v| v.is_finite())
    }
}
