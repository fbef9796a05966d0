use serde::{Deserialize, Serialize};

use super::LodError;
use crate::field::Point;

/// Viewpoint distance bands and the per-band parameters of each LOD method.
/// Distances are in centimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandConfig {
    /// Upper bound of each band, strictly increasing.
    pub thresholds: Vec<f64>,
    pub cluster_factors: Vec<usize>,
    pub neighbor_depths: Vec<usize>,
    /// Exact point count produced by re-resolution.
    pub targets: Vec<usize>,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            thresholds: vec![500.0, 1000.0, 1500.0, 2000.0],
            cluster_factors: vec![1, 2, 5, 10],
            neighbor_depths: vec![0, 1, 2, 3],
            targets: vec![120_000, 30_000, 7_500, 1_875],
        }
    }
}

impl BandConfig {
    pub fn validate(&self) -> Result<(), LodError> {
        let n = self.thresholds.len();
        if n == 0 {
            return Err(LodError::InvalidArgument("at least one band is required".into()));
        }
        if n > u8::MAX as usize + 1 {
            return Err(LodError::InvalidArgument(format!(
                "{n} bands do not fit the wire band field"
            )));
        }
        if self
            .thresholds
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
            || self.thresholds.iter().any(|t| !t.is_finite())
        {
            return Err(LodError::InvalidArgument(format!(
                "band thresholds must be finite and strictly increasing: {:?}",
                self.thresholds
            )));
        }
        for (name, len) in [
            ("cluster_factors", self.cluster_factors.len()),
            ("neighbor_depths", self.neighbor_depths.len()),
            ("targets", self.targets.len()),
        ] {
            if len != n {
                return Err(LodError::InvalidArgument(format!(
                    "{name} has {len} entries for {n} bands"
                )));
            }
        }
        if self.cluster_factors.contains(&0) || self.targets.contains(&0) {
            return Err(LodError::InvalidArgument(
                "cluster factors and targets must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn check_band(&self, band: usize) -> Result<(), LodError> {
        if band < self.len() {
            Ok(())
        } else {
            Err(LodError::InvalidBand {
                band,
                bands: self.len(),
            })
        }
    }
}

/// Index of the first band whose threshold exceeds the camera-to-target
/// distance; anything farther than the last threshold stays in the last band.
pub fn select_band(viewpoint: &Point, target: &Point, bands: &BandConfig) -> usize {
    let distance = (viewpoint - target).norm();
    bands
        .thresholds
        .iter()
        .position(|&t| t > distance)
        .unwrap_or(bands.len().saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(d: f64) -> usize {
        select_band(&Point::new(d, 0.0, 0.0), &Point::origin(), &BandConfig::default())
    }

    #[test]
    fn band_selection() {
        assert_eq!(at(250.0), 0);
        assert_eq!(at(499.999), 0);
        assert_eq!(at(500.0), 1);
        assert_eq!(at(750.0), 1);
        assert_eq!(at(1250.0), 2);
        assert_eq!(at(1999.0), 3);
        assert_eq!(at(1e6), 3);
    }

    #[test]
    fn validation() {
        assert!(BandConfig::default().validate().is_ok());
        let c = BandConfig {
            thresholds: vec![500.0, 400.0, 1500.0, 2000.0],
            ..BandConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = BandConfig::default();
        c.targets.pop();
        assert!(c.validate().is_err());
        assert!(matches!(
            BandConfig::default().check_band(4),
            Err(LodError::InvalidBand { .. })
        ));
    }
}
