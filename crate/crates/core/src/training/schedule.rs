use std::f64::consts::PI;

use super::TrainError;

/// Cosine annealing from `base_lr` at step 0 down to 0 at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64) -> Result<f64, TrainError> {
    if total_steps == 0 {
        return Err(TrainError::InvalidConfig(
            "total_steps must be positive".into(),
        ));
    }
    if step > total_steps {
        return Err(TrainError::InvalidConfig(format!(
            "step {step} beyond schedule length {total_steps}"
        )));
    }
    if step == total_steps {
        return Ok(0.0);
    }
    Ok(base_lr * (1.0 + (PI * step as f64 / total_steps as f64).cos()) / 2.0)
}
