//! Learning-rate schedules: linear warmup then linear decay to zero, and
//! polynomial decay `base * (1 - step/total)^power`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    LinearWarmup {
        base_lr: f64,
        total_steps: u64,
        warmup_ratio: f64,
    },
    Polynomial {
        base_lr: f64,
        total_steps: u64,
        power: f64,
    },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::LinearWarmup { base_lr, total_steps, warmup_ratio } => {
                if !(0.0..=1.0).contains(&warmup_ratio) {
                    return Err(Error::Validation(format!("warmup ratio {warmup_ratio} outside [0, 1]")));
                }
                if base_lr < 0.0 || total_steps == 0 {
                    return Err(Error::Validation("base_lr must be >= 0 and total_steps > 0".into()));
                }
            }
            LrSchedule::Polynomial { base_lr, total_steps, power } => {
                if power <= 0.0 {
                    return Err(Error::Validation(format!("power {power} must be > 0")));
                }
                if base_lr < 0.0 || total_steps == 0 {
                    return Err(Error::Validation("base_lr must be >= 0 and total_steps > 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Learning rate at `step` in `[0, total_steps]`.
    pub fn lr_at(&self, step: u64) -> Result<f64> {
        self.validate()?;
        match *self {
            LrSchedule::LinearWarmup { base_lr, total_steps, warmup_ratio } => {
                if step > total_steps {
                    return Err(Error::Validation(format!(
                        "step {step} beyond total_steps {total_steps}"
                    )));
                }
                let warmup = (warmup_ratio * total_steps as f64).round() as u64;
                if step <= warmup {
                    if warmup == 0 {
                        return Ok(base_lr);
                    }
                    Ok(base_lr * step as f64 / warmup as f64)
                } else {
                    let rest = (total_steps - warmup) as f64;
                    Ok(base_lr * (total_steps - step) as f64 / rest)
                }
            }
            LrSchedule::Polynomial { base_lr, total_steps, power } => {
                if step > total_steps {
                    return Err(Error::Validation(format!(
                        "step {step} beyond total_steps {total_steps}"
                    )));
                }
                let frac = 1.0 - step as f64 / total_steps as f64;
                Ok(base_lr * frac.powf(power))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_endpoints() {
        let s = LrSchedule::LinearWarmup { base_lr: 2.0, total_steps: 1000, warmup_ratio: 0.05 };
        assert_eq!(s.lr_at(0).unwrap(), 0.0);
        assert_eq!(s.lr_at(50).unwrap(), 2.0); // end of warmup
        assert_eq!(s.lr_at(1000).unwrap(), 0.0);
        // halfway through decay: (1000-500)/(1000-50)
        assert!((s.lr_at(500).unwrap() - 2.0 * 500.0 / 950.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_endpoints() {
        let s = LrSchedule::Polynomial { base_lr: 1e-3, total_steps: 100, power: 0.1 };
        assert_eq!(s.lr_at(0).unwrap(), 1e-3);
        assert_eq!(s.lr_at(100).unwrap(), 0.0);
        let mid = s.lr_at(50).unwrap();
        assert!((mid - 1e-3 * 0.5f64.powf(0.1)).abs() < 1e-18);
    }

    #[test]
    fn step_beyond_total_rejected() {
        let s = LrSchedule::Polynomial { base_lr: 1.0, total_steps: 10, power: 1.0 };
        assert!(s.lr_at(11).is_err());
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(LrSchedule::LinearWarmup { base_lr: 1.0, total_steps: 10, warmup_ratio: 1.5 }
            .validate()
            .is_err());
        assert!(LrSchedule::Polynomial { base_lr: 1.0, total_steps: 10, power: 0.0 }
            .validate()
            .is_err());
    }
}
