use super::{ParamId, ParamStore, Tensor};

pub const DEFAULT_LR_START: f64 = 0.004;
pub const DEFAULT_LR_END: f64 = 0.0004;

/// AdamW moments and hyperparameters.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimState {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let moments: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        OptimState {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: moments.clone(),
            second: moments,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, id: ParamId) -> &Tensor {
        &self.first[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &Tensor {
        &self.second[id.0]
    }
}

/// Parameters skipped by an update because their gradient was not finite.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub skipped: Vec<ParamId>,
}

/// One decoupled-weight-decay Adam update using the gradients held in `store`.
/// Gradients are left in place; callers zero them between steps.
pub fn adamw_step(store: &mut ParamStore, state: &mut OptimState) -> StepReport {
    assert_eq!(store.len(), state.first.len(), "optimizer state does not match parameter store");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let mut report = StepReport::default();
    for id in store.ids().collect::<Vec<_>>() {
        let p = store.get_mut(id);
        if !p.grad.is_finite() {
            log::warn!("non-finite gradient; skipping update of parameter #{}", id.0);
            report.skipped.push(id);
            continue;
        }
        let m = state.first[id.0].data_mut();
        let v = state.second[id.0].data_mut();
        let g = p.grad.data();
        let w = p.value.data_mut();
        for i in 0..w.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= state.lr * (m_hat / (v_hat.sqrt() + state.eps) + state.weight_decay * w[i]);
        }
    }
    report
}

/// Exponential decay between two learning rates over a fixed step budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            start: DEFAULT_LR_START,
            end: DEFAULT_LR_END,
        }
    }
}

impl LrSchedule {
    pub fn rate(&self, step: usize, total_steps: usize) -> f64 {
        if total_steps == 0 || self.start == self.end {
            return self.start;
        }
        let step = if step > total_steps {
            log::warn!("lr schedule step {step} beyond total {total_steps}; clamping");
            total_steps
        } else {
            step
        };
        let frac = step as f64 / total_steps as f64;
        self.start * (self.end / self.start).powf(frac)
    }
}

/// Default schedule: 0.004 decaying exponentially to 0.0004 at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize) -> f64 {
    LrSchedule::default().rate(step, total_steps)
}
