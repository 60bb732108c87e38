//! Engine configuration: every threshold and cadence parameter in one place.

use thiserror::Error;

use crate::Real;

/// All thresholds and cadence parameters of the pipeline.
///
/// Defaults follow the reference operating point: 120 px location threshold,
/// 50 degrees direction threshold, a 10-frame evaluation period, LOF
/// contamination 0.2 with a neighborhood of 80% of the cluster size, and a
/// temporary-pool trigger of 5.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig<R: Real> {
    /// Location distance threshold in pixels.
    pub d_th: R,
    /// Direction angle threshold in degrees, in (0, 180].
    pub theta_th: R,
    /// Frames between outlier evaluations.
    pub eval_period: u64,
    /// Fraction of a cluster that may be flagged per evaluation, in (0, 0.5].
    pub lof_contamination: R,
    /// Fraction of the cluster size used as the LOF neighborhood, in (0, 1].
    pub lof_neighbor_fraction: R,
    /// Weight of the heading embedding relative to d_th-normalized location
    /// in the LOF feature space.
    pub theta_norm: R,
    /// Temporary-pool size that triggers re-clustering.
    pub temp_trigger: usize,
    /// Minimum members for a (frame, cluster) pair to count toward CMDD.
    pub min_cmdd_members: usize,
    /// Frames a memberless cluster coasts before retiring; defaults to
    /// `eval_period` when unset.
    pub coast_limit: Option<u64>,
    /// CTEO/CTEL location threshold in pixels; defaults to `0.5 * d_th`.
    pub error_threshold_loc: Option<R>,
    /// CTEO/CTEL direction threshold in degrees; defaults to `0.5 * theta_th`.
    pub error_threshold_dir: Option<R>,
}

impl<R: Real> Default for EngineConfig<R> {
    fn default() -> Self {
        Self {
            d_th: R::of(120.0),
            theta_th: R::of(50.0),
            eval_period: 10,
            lof_contamination: R::of(0.2),
            lof_neighbor_fraction: R::of(0.8),
            theta_norm: R::one(),
            temp_trigger: 5,
            min_cmdd_members: 2,
            coast_limit: None,
            error_threshold_loc: None,
            error_threshold_dir: None,
        }
    }
}

impl<R: Real> EngineConfig<R> {
    /// Effective coasting limit in frames.
    pub fn coast_frames(&self) -> u64 {
        self.coast_limit.unwrap_or(self.eval_period)
    }

    /// Effective CTEO/CTEL location threshold (pixels).
    pub fn cteo_threshold_loc(&self) -> R {
        self.error_threshold_loc
            .unwrap_or_else(|| self.d_th * R::of(0.5))
    }

    /// Effective CTEO/CTEL direction threshold (degrees).
    pub fn cteo_threshold_dir(&self) -> R {
        self.error_threshold_dir
            .unwrap_or_else(|| self.theta_th * R::of(0.5))
    }

    pub fn validate(self) -> Result<Self, ConfigError> {
        validate_config(self)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{field} {reason}")]
    Invalid {
        field: &'static str,
        reason: String,
    },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// Returns the config unchanged iff every invariant holds; otherwise a
/// violation error naming the offending field.
pub fn validate_config<R: Real>(cfg: EngineConfig<R>) -> Result<EngineConfig<R>, ConfigError> {
    if !(cfg.d_th > R::zero()) || !cfg.d_th.is_finite() {
        return Err(invalid("d_th", "must be positive"));
    }
    if !(cfg.theta_th > R::zero()) || !(cfg.theta_th <= R::of(180.0)) {
        return Err(invalid("theta_th", "must be in (0, 180]"));
    }
    if cfg.eval_period < 1 {
        return Err(invalid("eval_period", "must be at least 1"));
    }
    if !(cfg.lof_contamination > R::zero()) || !(cfg.lof_contamination <= R::of(0.5)) {
        return Err(invalid("lof_contamination", "must be in (0, 0.5]"));
    }
    if !(cfg.lof_neighbor_fraction > R::zero()) || !(cfg.lof_neighbor_fraction <= R::one()) {
        return Err(invalid("lof_neighbor_fraction", "must be in (0, 1]"));
    }
    if !(cfg.theta_norm >= R::zero()) || !cfg.theta_norm.is_finite() {
        return Err(invalid("theta_norm", "must be finite and non-negative"));
    }
    if cfg.temp_trigger < 1 {
        return Err(invalid("temp_trigger", "must be at least 1"));
    }
    if cfg.min_cmdd_members < 1 {
        return Err(invalid("min_cmdd_members", "must be at least 1"));
    }
    if let Some(c) = cfg.coast_limit {
        if c < 1 {
            return Err(invalid("coast_limit", "must be at least 1"));
        }
    }
    if let Some(t) = cfg.error_threshold_loc {
        if !(t > R::zero()) {
            return Err(invalid("error_threshold_loc", "must be positive"));
        }
    }
    if let Some(t) = cfg.error_threshold_dir {
        if !(t > R::zero()) {
            return Err(invalid("error_threshold_dir", "must be positive"));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = EngineConfig::<f64>::default();
        assert_eq!(cfg.d_th, 120.0);
        assert_eq!(cfg.theta_th, 50.0);
        assert_eq!(cfg.eval_period, 10);
        assert_eq!(cfg.lof_contamination, 0.2);
        assert_eq!(cfg.lof_neighbor_fraction, 0.8);
        assert_eq!(cfg.temp_trigger, 5);
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn derived_defaults() {
        let cfg = EngineConfig::<f64>::default();
        assert_eq!(cfg.coast_frames(), 10);
        assert_eq!(cfg.cteo_threshold_loc(), 60.0);
        assert_eq!(cfg.cteo_threshold_dir(), 25.0);
    }

    #[test]
    fn zero_distance_threshold_rejected() {
        let cfg = EngineConfig::<f64> {
            d_th: 0.0,
            ..Default::default()
        };
        let err = validate_config(cfg).unwrap_err();
        assert_eq!(err.to_string(), "d_th must be positive");
    }

    #[test]
    fn angular_threshold_beyond_half_range_rejected() {
        let cfg = EngineConfig::<f64> {
            theta_th: 181.0,
            ..Default::default()
        };
        let err = validate_config(cfg).unwrap_err();
        assert!(err.to_string().contains("theta_th"));
    }

    #[test]
    fn works_for_f32() {
        let cfg = EngineConfig::<f32>::default();
        assert!(validate_config(cfg).is_ok());
    }
}
