use serde::{Deserialize, Serialize};

use super::model::{Gradients, StudentParams, TENSOR_NAMES};
use crate::error::{Error, Result};

/// Linear warmup then linear decay to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base_lr: f64,
    pub total_iters: usize,
    pub warmup_frac: f64,
}

impl Schedule {
    pub fn warmup_iters(&self) -> usize {
        ((self.warmup_frac * self.total_iters as f64).round() as usize).clamp(1, self.total_iters.max(1))
    }
}

/// Learning rate at `iter` ∈ `[0, total]`: rises linearly to `base_lr` at
/// the end of warmup and falls linearly to zero at `total`.
pub fn lr_at(iter: usize, schedule: &Schedule) -> Result<f64> {
    let total = schedule.total_iters;
    if iter > total {
        return Err(Error::InvalidInput(format!(
            "iteration {iter} beyond schedule length {total}"
        )));
    }
    if total == 0 {
        return Ok(0.0);
    }
    let warmup = schedule.warmup_iters();
    let factor = if iter < warmup {
        iter as f64 / warmup as f64
    } else if total == warmup {
        0.0
    } else {
        (total - iter) as f64 / (total - warmup) as f64
    };
    Ok(schedule.base_lr * factor.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moment estimates for every tensor plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &StudentParams) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        OptimState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One decoupled-weight-decay Adam update on a flat slice, with `step` the
/// 1-based step number used for bias correction.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update_slice(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    step: u64,
    hp: &AdamHyper,
) {
    update_span(param, grad, m, v, Coeffs::new(lr, step, hp));
}

#[derive(Clone, Copy)]
struct Coeffs {
    lr: f64,
    decay: f64,
    beta1: f64,
    beta2: f64,
    bc1: f64,
    bc2: f64,
    eps: f64,
}

impl Coeffs {
    fn new(lr: f64, step: u64, hp: &AdamHyper) -> Self {
        Coeffs {
            lr,
            decay: lr * hp.weight_decay,
            beta1: hp.beta1,
            beta2: hp.beta2,
            bc1: 1.0 - hp.beta1.powi(step as i32),
            bc2: 1.0 - hp.beta2.powi(step as i32),
            eps: hp.eps,
        }
    }
}

#[inline]
fn update_span(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], c: Coeffs) {
    for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *w -= c.decay * *w;
        *m = c.beta1 * *m + (1.0 - c.beta1) * g;
        *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
        let m_hat = *m / c.bc1;
        let v_hat = *v / c.bc2;
        *w -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
}

#[inline]
fn update_span_zero_grad(w: &mut [f64], m: &mut [f64], v: &mut [f64], c: Coeffs) {
    for ((w, m), v) in w.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
        *w -= c.decay * *w;
        *m *= c.beta1;
        *v *= c.beta2;
        let m_hat = *m / c.bc1;
        let v_hat = *v / c.bc2;
        *w -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
}

/// Applies one AdamW step to every parameter. Embedding rows without a
/// gradient entry are updated with a zero gradient.
pub fn adamw_step(
    params: &mut StudentParams,
    grads: &Gradients,
    state: &mut OptimState,
    lr: f64,
    hp: &AdamHyper,
) -> Result<()> {
    let d = params.config.embed_dim;
    if let Some((name, offset)) = grads.first_non_finite(d) {
        return Err(Error::Numeric(format!(
            "non-finite gradient in `{name}` at offset {offset} (step {})",
            state.step + 1
        )));
    }
    if state.m.len() != TENSOR_NAMES.len() {
        return Err(Error::InvalidInput("optimizer state has wrong tensor count".into()));
    }
    state.step += 1;
    let c = Coeffs::new(lr, state.step, hp);

    let [emb, w1, b1, w2, b2] = params.tensors_mut();
    let rows = emb.len() / d;
    let mut sparse = grads.embedding.iter().peekable();
    let (m0, v0) = (&mut state.m[0], &mut state.v[0]);
    for r in 0..rows {
        let grad_row = sparse.next_if(|(&idx, _)| idx as usize == r).map(|(_, g)| g.as_slice());
        let span = r * d..(r + 1) * d;
        let (w, m, v) = (&mut emb[span.clone()], &mut m0[span.clone()], &mut v0[span]);
        match grad_row {
            Some(g) => update_span(w, g, m, v, c),
            // never-touched row: the Adam term is exactly zero, only decay applies
            None if m.iter().chain(v.iter()).all(|&x| x == 0.0) => {
                for w in w {
                    *w -= c.decay * *w;
                }
            }
            None => update_span_zero_grad(w, m, v, c),
        }
    }
    let dense: [(&mut Vec<f64>, &Vec<f64>); 4] = [(w1, &grads.w1), (b1, &grads.b1), (w2, &grads.w2), (b2, &grads.b2)];
    for (t, (param, grad)) in dense.into_iter().enumerate() {
        update_span(param, grad, &mut state.m[t + 1], &mut state.v[t + 1], c);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::student::ModelConfig;

    fn sched(total: usize) -> Schedule {
        Schedule {
            base_lr: 1.0,
            total_iters: total,
            warmup_frac: 0.025,
        }
    }

    #[test]
    fn schedule_examples() {
        let s = sched(20_000);
        assert_eq!(s.warmup_iters(), 500);
        assert_eq!(lr_at(500, &s).unwrap(), 1.0);
        assert_eq!(lr_at(20_000, &s).unwrap(), 0.0);
        assert_eq!(lr_at(250, &s).unwrap(), 0.5);
        assert_eq!(lr_at(0, &s).unwrap(), 0.0);
        assert!((lr_at(10_250, &s).unwrap() - 0.5).abs() < 1e-12);
        assert!(lr_at(20_001, &s).is_err());
    }

    #[test]
    fn schedule_peak_is_maximum() {
        let s = sched(1000);
        let peak = lr_at(s.warmup_iters(), &s).unwrap();
        for i in 0..=1000 {
            assert!(lr_at(i, &s).unwrap() <= peak);
        }
    }

    #[test]
    fn scalar_update_examples() {
        let hp = AdamHyper {
            weight_decay: 0.0,
            ..Default::default()
        };
        let (mut w, mut m, mut v) = ([1.0], [0.0], [0.0]);
        adamw_update_slice(&mut w, &[0.0], &mut m, &mut v, 0.1, 1, &hp);
        assert_eq!(w[0], 1.0);

        // m_hat = v_hat = 1, so w = 1 - 0.1 / (1 + 1e-8)
        adamw_update_slice(&mut w, &[1.0], &mut m, &mut v, 0.1, 1, &hp);
        assert!((w[0] - 0.9).abs() < 1e-8);

        let hp = AdamHyper::default();
        let (mut w, mut m, mut v) = ([2.0], [0.0], [0.0]);
        adamw_update_slice(&mut w, &[0.0], &mut m, &mut v, 0.1, 1, &hp);
        assert!((w[0] - 2.0 * (1.0 - 0.001)).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_non_finite_gradients() {
        let cfg = ModelConfig {
            hash_bits: 4,
            embed_dim: 2,
            hidden: 3,
            embed_init_std: 0.1,
        };
        let mut p = StudentParams::init_from_seed(cfg, 0).unwrap();
        let mut state = OptimState::new(&p);
        let mut g = Gradients::zeros(&cfg);
        g.w2[1] = f64::NAN;
        let err = adamw_step(&mut p, &g, &mut state, 0.1, &AdamHyper::default()).unwrap_err();
        assert!(err.to_string().contains("w2"));
        assert_eq!(state.step, 0);
    }

    #[test]
    fn sparse_step_matches_dense_update() {
        let cfg = ModelConfig {
            hash_bits: 4,
            embed_dim: 2,
            hidden: 3,
            embed_init_std: 0.1,
        };
        let p0 = StudentParams::init_from_seed(cfg, 9).unwrap();
        let mut g = Gradients::zeros(&cfg);
        g.embedding.insert(3, vec![0.5, -1.0]);
        g.w1[4] = 2.0;
        let hp = AdamHyper::default();

        let mut p = p0.clone();
        let mut state = OptimState::new(&p);
        adamw_step(&mut p, &g, &mut state, 0.01, &hp).unwrap();

        let mut dense_emb = vec![0.0; p0.embedding.len()];
        dense_emb[6] = 0.5;
        dense_emb[7] = -1.0;
        let mut q = p0.clone();
        let mut ms = OptimState::new(&q);
        let grads = [dense_emb, g.w1.clone(), g.b1.clone(), g.w2.clone(), g.b2.clone()];
        for (t, tensor) in q.tensors_mut().into_iter().enumerate() {
            let (m, v) = (&mut ms.m[t], &mut ms.v[t]);
            adamw_update_slice(tensor, &grads[t], m, v, 0.01, 1, &hp);
        }
        assert_eq!(p, q);
    }
}
