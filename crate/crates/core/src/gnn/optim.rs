use super::{GcnModel, Gradients};

/// Linear warmup to `peak` over `warmup` steps, then constant. `step` is
/// 1-based.
pub fn lr_at(step: u64, peak: f64, warmup: u64) -> f64 {
    if warmup == 0 {
        return peak;
    }
    peak * (step as f64 / warmup as f64).min(1.0)
}

/// Adam with decoupled weight decay, applied to every parameter block.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl AdamW {
    pub fn new(model: &GcnModel, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut GcnModel, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        let layers = model.layers_mut();
        for (l, layer) in layers.iter_mut().enumerate() {
            let ms = self.m.layers[l].blocks_mut();
            let vs = self.v.layers[l].blocks_mut();
            let gs = grads.layers[l].blocks();
            for (((p, m), v), g) in layer.blocks_mut().into_iter().zip(ms).zip(vs).zip(gs) {
                for k in 0..p.len() {
                    m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                    v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                    let m_hat = m[k] / c1;
                    let v_hat = v[k] / c2;
                    p[k] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * p[k]);
                }
            }
        }
    }
}
