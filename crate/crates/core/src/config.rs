use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a trace field is turned into a motion mask.
///
/// Textual form (CLI and config files): `fixed:<value>`, `percentile:<p>`
/// or `otsu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ThresholdMode {
    Fixed(f64),
    /// Percentile in (0, 100] of the valid trace values.
    Percentile(f64),
    /// Otsu split of `ln(trace + ε)`.
    Otsu,
}

impl Default for ThresholdMode {
    fn default() -> Self {
        ThresholdMode::Percentile(99.0)
    }
}

impl fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdMode::Fixed(v) => write!(f, "fixed:{v}"),
            ThresholdMode::Percentile(p) => write!(f, "percentile:{p}"),
            ThresholdMode::Otsu => f.write_str("otsu"),
        }
    }
}

impl FromStr for ThresholdMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "otsu" {
            return Ok(ThresholdMode::Otsu);
        }
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("threshold mode {s:?}: expected fixed:<v>, percentile:<p> or otsu"))?;
        let value: f64 = value
            .parse()
            .map_err(|e| format!("threshold value {value:?}: {e}"))?;
        match kind {
            "fixed" if value.is_finite() => Ok(ThresholdMode::Fixed(value)),
            "percentile" if value > 0.0 && value <= 100.0 => Ok(ThresholdMode::Percentile(value)),
            _ => Err(format!("invalid threshold mode {s:?}")),
        }
    }
}

impl TryFrom<String> for ThresholdMode {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ThresholdMode> for String {
    fn from(m: ThresholdMode) -> String {
        m.to_string()
    }
}

/// Filter scales, integration window and fusion thresholds shared by the
/// motion and fusion stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    /// Frames per derivative window; odd and at least 3.
    pub temporal_window: usize,
    pub spatial_sigma: f64,
    pub temporal_sigma: f64,
    /// Half-width of the square spatial integration window Ω.
    pub integration_radius: usize,
    pub threshold: ThresholdMode,
    /// Blob area (px²) separating "small" from "large" motion blobs.
    pub small_large_area_cutoff: f64,
    pub morphology_radius: usize,
    pub min_blob_area: usize,
    /// Fraction of a motion blob that must lie in the appearance mask for
    /// the blob to count as appearance-supported.
    pub overlap_fraction: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            temporal_window: 5,
            spatial_sigma: 1.0,
            temporal_sigma: 1.0,
            integration_radius: 2,
            threshold: ThresholdMode::default(),
            small_large_area_cutoff: 400.0,
            morphology_radius: 1,
            min_blob_area: 8,
            overlap_fraction: 0.3,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.temporal_window < 3 || self.temporal_window.is_multiple_of(2) {
            return bad(format!(
                "temporal_window must be odd and >= 3, got {}",
                self.temporal_window
            ));
        }
        if !(self.spatial_sigma > 0.0 && self.spatial_sigma.is_finite()) {
            return bad(format!("spatial_sigma must be > 0, got {}", self.spatial_sigma));
        }
        if !(self.temporal_sigma > 0.0 && self.temporal_sigma.is_finite()) {
            return bad(format!("temporal_sigma must be > 0, got {}", self.temporal_sigma));
        }
        if !(self.small_large_area_cutoff > 0.0) {
            return bad("small_large_area_cutoff must be > 0".into());
        }
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction <= 1.0) {
            return bad(format!(
                "overlap_fraction must be in (0,1], got {}",
                self.overlap_fraction
            ));
        }
        Ok(())
    }

    /// Frames without output at each end of a sequence.
    pub fn half_window(&self) -> usize {
        self.temporal_window / 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_mode_text_form() {
        for m in [
            ThresholdMode::Fixed(0.01),
            ThresholdMode::Percentile(99.0),
            ThresholdMode::Otsu,
        ] {
            assert_eq!(m.to_string().parse::<ThresholdMode>().unwrap(), m);
        }
        assert!("percentile:0".parse::<ThresholdMode>().is_err());
        assert!("median".parse::<ThresholdMode>().is_err());
    }

    #[test]
    fn defaults_validate() {
        SequenceConfig::default().validate().unwrap();
        let even = SequenceConfig {
            temporal_window: 4,
            ..Default::default()
        };
        assert!(even.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SequenceConfig {
            threshold: ThresholdMode::Otsu,
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<SequenceConfig>(&text).unwrap(), cfg);
        let partial: SequenceConfig = toml::from_str("integration_radius = 3").unwrap();
        assert_eq!(partial.integration_radius, 3);
        assert_eq!(partial.temporal_window, 5);
    }
}
