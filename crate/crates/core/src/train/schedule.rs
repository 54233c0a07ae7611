use crate::config::TrainConfig;

/// `lr × decay^floor(iteration / decay_every)`.
pub fn learning_rate(iteration: u64, cfg: &TrainConfig) -> f64 {
    cfg.lr * cfg.lr_decay.powf((iteration / cfg.decay_every) as f64)
}
