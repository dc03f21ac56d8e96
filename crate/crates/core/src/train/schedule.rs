use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Linear warmup from 0, then cosine decay to 0 at the last step.
    #[default]
    WarmupCosine,
    Constant,
}

/// Learning rate at a (possibly fractional) step.
pub fn lr_at_f(step: f64, max_lr: f64, warmup_frac: f64, total_steps: usize, schedule: Schedule) -> f64 {
    if schedule == Schedule::Constant {
        return max_lr;
    }
    let total = total_steps as f64;
    let warm = warmup_frac * total;
    let step = step.clamp(0.0, total);
    if step < warm {
        max_lr * step / warm
    } else if total > warm {
        let progress = (step - warm) / (total - warm);
        0.5 * max_lr * (1.0 + (std::f64::consts::PI * progress).cos())
    } else {
        max_lr
    }
}
