//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use cellcast_core::losses::LossSpec;
use cellcast_core::model::{init_model, predict, sample_gradient, ModelConfig, ModelWeights};
use cellcast_core::params::Parameters;
use cellcast_core::prompting::{TokenSequence, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        layers: 2,
        hidden: 12,
        heads: 2,
        ffn_dim: 16,
        vocab_size: Vocabulary::standard().len(),
        max_len: 12,
        pool_kernel: 3,
        pool_stride: 3,
        head_dims: vec![8, 4, 1],
        output_shift: 0.0,
        output_scale: 1.0,
    }
}

/// Larger init than the default so that every tensor carries a gradient well
/// above finite-difference noise.
pub fn tiny_model(seed: u64) -> ModelWeights {
    let mut w = init_model(&tiny_config(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for t in w.tensors_mut() {
        t.mapv_inplace(|v| v * 4.0 + rng.random_range(-0.05..0.05));
    }
    w
}

pub fn random_tokens(seed: u64, active: usize) -> TokenSequence {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = (0..cfg.max_len)
        .map(|_| rng.random_range(1..cfg.vocab_size as u32))
        .collect();
    let mask_index = active / 2;
    ids[mask_index] = Vocabulary::standard().mask_id();
    for id in ids.iter_mut().skip(active) {
        *id = 0;
    }
    let attention_mask = (0..cfg.max_len).map(|i| u8::from(i < active)).collect();
    TokenSequence {
        ids,
        attention_mask,
        mask_index,
    }
}

/// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)` over
/// every parameter, using central differences.
pub fn max_relative_error<P: Parameters>(
    params: &P,
    analytic: &P,
    floor: f64,
    loss: impl Fn(&P) -> f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    let names: Vec<String> = analytic.tensors().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic
        .tensors()
        .into_iter()
        .map(|(_, t)| t.iter().copied().collect())
        .collect();
    let mut probe = params.clone();
    for (ti, name) in names.iter().enumerate() {
        for (k, &a) in grads[ti].iter().enumerate() {
            let orig = probe.tensors_mut()[ti].as_slice_mut().unwrap()[k];
            probe.tensors_mut()[ti].as_slice_mut().unwrap()[k] = orig + EPS;
            let plus = loss(&probe);
            probe.tensors_mut()[ti].as_slice_mut().unwrap()[k] = orig - EPS;
            let minus = loss(&probe);
            probe.tensors_mut()[ti].as_slice_mut().unwrap()[k] = orig;
            let n = (plus - minus) / (2.0 * EPS);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{k}] analytic {a:e} numeric {n:e}"));
            }
        }
    }
    worst
}

/// Worst relative error of the encoder gradient on the tiny model, with the
/// target placed `offset` away from the current prediction.
pub fn encoder_gradient_error(loss: LossSpec, offset: f64) -> (f64, String) {
    let w = tiny_model(5);
    let tokens = random_tokens(17, 9);
    let target = predict(&w, &tokens).unwrap() + offset;
    let (grads, _, _) = sample_gradient(&w, &tokens, target, loss).unwrap();
    max_relative_error(&w, &grads, 1e-6, |p| {
        loss.value(target, predict(p, &tokens).unwrap())
    })
}
