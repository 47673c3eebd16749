use serde::{Deserialize, Serialize};

use super::CodecError;

pub const MAX_QP: i64 = 63;

/// Operating-point schedule: qp → Lagrange multiplier and quantizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub base_qp: u8,
    /// Added to `base_qp` by position within each 8-frame group.
    pub qp_offsets: [i32; 8],
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Temporal reference is dropped on every frame index divisible by this.
    pub reset_period: u32,
    /// Quantizer step at qp 63.
    pub step_ref: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            base_qp: 32,
            qp_offsets: [0, 1, 0, 2, 0, 2, 0, 2],
            lambda_min: 2e-5,
            lambda_max: 1.8e-3,
            reset_period: 32,
            step_ref: 12.0,
        }
    }
}

impl QualityConfig {
    pub fn with_base_qp(qp: i64) -> Result<Self, CodecError> {
        Ok(QualityConfig {
            base_qp: check_qp(qp)? as u8,
            ..QualityConfig::default()
        })
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        check_qp(self.base_qp as i64)?;
        if self.reset_period == 0 {
            return Err(CodecError::BadConfig(
                "reset_period must be at least 1".into(),
            ));
        }
        if !(self.lambda_min > 0.0
            && self.lambda_min < self.lambda_max
            && self.lambda_max.is_finite())
        {
            return Err(CodecError::BadConfig(format!(
                "need 0 < lambda_min < lambda_max, got {} and {}",
                self.lambda_min, self.lambda_max
            )));
        }
        if !(self.step_ref > 0.0 && self.step_ref.is_finite()) {
            return Err(CodecError::BadConfig(format!(
                "step_ref {} must be positive",
                self.step_ref
            )));
        }
        Ok(())
    }

    /// Log-linear between `lambda_min` at qp 0 and `lambda_max` at qp 63.
    pub fn lambda_of_qp(&self, qp: i64) -> Result<f64, CodecError> {
        let qp = check_qp(qp)?;
        Ok(self.lambda_min * (self.lambda_max / self.lambda_min).powf(qp as f64 / MAX_QP as f64))
    }

    /// Step proportional to √λ, anchored at `step_ref` for qp 63.
    pub fn step_of_qp(&self, qp: i64) -> Result<f64, CodecError> {
        let lambda = self.lambda_of_qp(qp)?;
        Ok(self.step_for_lambda(lambda))
    }

    pub fn step_for_lambda(&self, lambda: f64) -> f64 {
        self.step_ref * (lambda / self.lambda_max).sqrt()
    }

    pub fn qp_of_frame(&self, base_qp: i64, frame_index: u64) -> i64 {
        let offset = self.qp_offsets[(frame_index % 8) as usize] as i64;
        (base_qp + offset).clamp(0, MAX_QP)
    }

    pub fn is_reset_frame(&self, frame_index: u64) -> bool {
        frame_index.is_multiple_of(self.reset_period as u64)
    }
}

fn check_qp(qp: i64) -> Result<i64, CodecError> {
    if (0..=MAX_QP).contains(&qp) {
        Ok(qp)
    } else {
        Err(CodecError::QpOutOfRange(qp))
    }
}

/// Largest residual magnitude in quantizer units: ceil(255 / Δ).
pub fn k_max_for_step(step: f64) -> usize {
    (255.0 / step).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_endpoints_and_midpoint() {
        let cfg = QualityConfig::default();
        assert!((cfg.lambda_of_qp(0).unwrap() - 2e-5).abs() < 1e-18);
        assert!((cfg.lambda_of_qp(63).unwrap() - 1.8e-3).abs() < 1e-15);
        // 2e-5 * 90^(31/63) evaluated at 30 significant digits
        let expected = 1.830802046418727e-4;
        assert!((cfg.lambda_of_qp(31).unwrap() - expected).abs() < 1e-17);
        assert!(matches!(
            cfg.lambda_of_qp(64),
            Err(CodecError::QpOutOfRange(64))
        ));
        assert!(matches!(
            cfg.lambda_of_qp(-1),
            Err(CodecError::QpOutOfRange(-1))
        ));
    }

    #[test]
    fn step_anchor_and_floor() {
        let cfg = QualityConfig::default();
        assert!((cfg.step_of_qp(63).unwrap() - 12.0).abs() < 1e-12);
        let bottom = cfg.step_of_qp(0).unwrap();
        assert!((bottom - 12.0 * (2e-5f64 / 1.8e-3).sqrt()).abs() < 1e-12);
        assert!((bottom - 1.2649110640673517).abs() < 1e-12);
        let steps: Vec<f64> = (0..=63).map(|q| cfg.step_of_qp(q).unwrap()).collect();
        assert!(steps.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn per_frame_offsets() {
        let cfg = QualityConfig::default();
        assert_eq!(cfg.qp_of_frame(32, 11), 34);
        assert_eq!(cfg.qp_of_frame(63, 1), 63);
        assert_eq!(cfg.qp_of_frame(30, 8), 30);
        assert_eq!(cfg.qp_of_frame(0, 0), 0);
    }

    #[test]
    fn validation() {
        let mut cfg = QualityConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.reset_period = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = QualityConfig::default();
        cfg.lambda_min = cfg.lambda_max;
        assert!(cfg.validate().is_err());
        assert!(QualityConfig::with_base_qp(64).is_err());
    }

    #[test]
    fn alphabet_bound() {
        assert_eq!(k_max_for_step(12.0), 22);
        assert_eq!(k_max_for_step(1.0), 255);
    }
}
