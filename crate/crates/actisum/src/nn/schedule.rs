//! Linear learning-rate warmup.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WarmupSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    /// Fraction of `base_lr` applied at step 0, in (0, 1].
    pub start_factor: f64,
}

impl WarmupSchedule {
    pub fn new(base_lr: f64, warmup_steps: u64, start_factor: f64) -> Self {
        WarmupSchedule {
            base_lr,
            warmup_steps,
            start_factor,
        }
    }

    /// Linear interpolation from `start_factor * base_lr` at step 0 up to
    /// `base_lr` at `warmup_steps`; constant afterwards.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step >= self.warmup_steps || self.warmup_steps == 0 {
            return self.base_lr;
        }
        let progress = step as f64 / self.warmup_steps as f64;
        self.base_lr * (self.start_factor + (1.0 - self.start_factor) * progress)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let s = WarmupSchedule::new(1e-3, 100, 0.1);
        assert!((s.lr_at(0) - 1e-4).abs() < 1e-18);
        assert!((s.lr_at(100) - 1e-3).abs() < 1e-18);
        assert!((s.lr_at(50) - 5.5e-4).abs() < 1e-18);
        assert!((s.lr_at(10_000) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn non_decreasing_through_warmup() {
        let s = WarmupSchedule::new(3e-4, 100, 0.25);
        let mut prev = 0.0;
        for step in 0..=150 {
            let lr = s.lr_at(step);
            assert!(lr >= prev, "lr decreased at step {step}");
            prev = lr;
        }
    }
}
