//! Distance estimation from RSSI and the normalized-proximity baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Log-distance path loss model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlmParams<R> {
    /// Calibrated RSSI at the 1 m reference distance, dBm.
    pub measured_power: R,
    /// Path loss exponent; 1.5 is the indoor default.
    pub path_loss_exponent: R,
    /// Extra loss from obstacles between transmitter and receiver, dB.
    pub obstacle_loss: R,
}

impl<R: Real> PlmParams<R> {
    pub fn new(measured_power: R, path_loss_exponent: R, obstacle_loss: R) -> PlmParams<R> {
        PlmParams {
            measured_power,
            path_loss_exponent,
            obstacle_loss,
        }
    }

    /// Defaults for the wearable coin beacons at their lowest broadcast power.
    pub fn coin_default() -> PlmParams<R> {
        PlmParams::new(R::of(-75.0), R::of(1.5), R::zero())
    }

    /// Defaults for the long-range ceiling beacons.
    pub fn ceiling_default() -> PlmParams<R> {
        PlmParams::new(R::of(-62.0), R::of(1.5), R::zero())
    }

    /// Distance in meters for a known RSSI.
    pub fn distance(&self, rssi: R) -> R {
        let ten = R::of(10.0);
        let exp = (self.measured_power - rssi - self.obstacle_loss)
            / (ten * self.path_loss_exponent);
        ten.powf(exp)
    }

    /// RSSI at a given distance; inverse of [`PlmParams::distance`].
    pub fn rssi(&self, distance: R) -> R {
        let ten = R::of(10.0);
        self.measured_power
            - self.obstacle_loss
            - ten * self.path_loss_exponent * distance.log10()
    }
}

/// Distance from a possibly-Unknown RSSI reading.
pub fn plm_distance<R: Real>(rssi: Option<R>, params: &PlmParams<R>) -> Result<R> {
    match rssi {
        Some(r) => Ok(params.distance(r)),
        None => Err(Error::UnknownRssi),
    }
}

/// RSSI a transmitter at `distance` meters would produce.
pub fn plm_rssi<R: Real>(distance: R, params: &PlmParams<R>) -> Result<R> {
    if distance <= R::zero() {
        return Err(Error::NonPositiveDistance(distance.as_f64()));
    }
    Ok(params.rssi(distance))
}

/// Min-max normalization of distances into a probability-like score:
/// 1 at the global minimum distance, 0 at the global maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedProximity<R> {
    pub x_min: R,
    pub x_max: R,
}

impl<R: Real> NormalizedProximity<R> {
    /// Fit the normalization range over every distance in the dataset.
    pub fn fit(values: impl IntoIterator<Item = R>) -> Result<NormalizedProximity<R>> {
        let mut x_min = R::infinity();
        let mut x_max = R::neg_infinity();
        for v in values {
            if v < x_min {
                x_min = v;
            }
            if v > x_max {
                x_max = v;
            }
        }
        if !(x_max > x_min) {
            return Err(Error::DegenerateRange);
        }
        Ok(NormalizedProximity { x_min, x_max })
    }

    pub fn score(&self, x: R) -> R {
        (self.x_max - x) / (self.x_max - self.x_min)
    }
}

/// Score every per-second distance series; input and output are keyed by the
/// caller (one inner vector per pair).
pub fn normalized_proximity<R: Real>(pair_distances: &[Vec<R>]) -> Result<Vec<Vec<R>>> {
    let np = NormalizedProximity::fit(pair_distances.iter().flatten().copied())?;
    Ok(pair_distances
        .iter()
        .map(|series| series.iter().map(|&x| np.score(x)).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: f64) -> PlmParams<f64> {
        PlmParams::new(-75.0, n, 0.0)
    }

    #[test]
    fn distance_at_measured_power_is_one_meter() {
        assert!((params(1.5).distance(-75.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fifteen_db_drop_is_ten_meters_at_n_1_5() {
        assert!((params(1.5).distance(-90.0) - 10.0).abs() < 1e-9);
        assert!((params(1.5).rssi(10.0) - -90.0).abs() < 1e-9);
    }

    #[test]
    fn half_decade_drop() {
        let d = params(1.5).distance(-75.0 - 7.5);
        assert!((d - 10f64.sqrt()).abs() < 1e-12, "{d}");
    }

    #[test]
    fn unknown_rssi_is_an_error() {
        assert!(matches!(
            plm_distance(None, &params(1.5)),
            Err(Error::UnknownRssi)
        ));
        assert!(matches!(
            plm_rssi(0.0, &params(1.5)),
            Err(Error::NonPositiveDistance(_))
        ));
    }

    #[test]
    fn distance_is_monotone_decreasing_in_rssi() {
        let p = params(2.0);
        let mut prev = f64::INFINITY;
        for rssi_i in (-100..=-40).step_by(5) {
            let d = p.distance(rssi_i as f64);
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn round_trip_in_f32() {
        let p: PlmParams<f32> = PlmParams::new(-75.0, 1.5, 0.0);
        for d in [0.3f32, 1.0, 4.2, 18.0] {
            let back = p.distance(p.rssi(d));
            assert!((back - d).abs() / d < 1e-4, "{d} -> {back}");
        }
    }

    #[test]
    fn np_endpoints_and_midpoint() {
        let np = NormalizedProximity::fit([2.0, 6.0, 4.0]).unwrap();
        assert_eq!(np.score(2.0), 1.0);
        assert_eq!(np.score(6.0), 0.0);
        assert_eq!(np.score(4.0), 0.5);
    }

    #[test]
    fn np_degenerate_range() {
        assert!(matches!(
            NormalizedProximity::fit([3.0, 3.0, 3.0]),
            Err(Error::DegenerateRange)
        ));
    }

    #[test]
    fn np_is_monotone_in_negative_distance() {
        let series = vec![vec![1.0, 5.0, 3.0], vec![2.0, 4.0, 6.0]];
        let scored = normalized_proximity(&series).unwrap();
        let flat_d: Vec<f64> = series.into_iter().flatten().collect();
        let flat_s: Vec<f64> = scored.into_iter().flatten().collect();
        for i in 0..flat_d.len() {
            for j in 0..flat_d.len() {
                assert_eq!(flat_d[i] < flat_d[j], flat_s[i] > flat_s[j]);
            }
        }
    }
}
