//! Raw logs to uniform, gap-free signals.
//!
//! Motion is resampled to an exact 100 Hz grid. Beacon sightings are
//! aggregated to one value per second (mean of the known readings inside
//! that second). Ceiling-beacon gaps are filled by linear interpolation in
//! the distance domain; coin-beacon gaps are filled with the dataset-wide
//! maximum observed distance (the pair was out of range) and mirrored into
//! the RSSI domain as the dataset-wide minimum observed RSSI, flagged as
//! filled so features can tell imputed values from observed ones.

use crate::error::{Error, Result};
use crate::model::{
    all_pairs, BeaconSource, MotionSeries, PairKey, RawMotion, SessionDataset,
};
use crate::proximity::PlmParams;

/// RSSI assumed when a dataset contains no observed coin reading at all.
const FALLBACK_MIN_RSSI: f64 = -95.0;

#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub target_hz: f64,
    pub coin_plm: PlmParams<f64>,
    /// `measured_power` here is the fallback when a ceiling sighting does
    /// not carry its own calibration value.
    pub ceiling_plm: PlmParams<f64>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_hz: 100.0,
            coin_plm: PlmParams::coin_default(),
            ceiling_plm: PlmParams::ceiling_default(),
        }
    }
}

/// Per-pair, per-direction coin-beacon series. Direction `ab` means the
/// canonical first member's phone hearing the second member's beacon.
#[derive(Debug, Clone, Default)]
pub struct CoinPairSeries {
    pub rssi_ab: Vec<f64>,
    pub rssi_ba: Vec<f64>,
    pub dist_ab: Vec<f64>,
    pub dist_ba: Vec<f64>,
    pub filled_ab: Vec<bool>,
    pub filled_ba: Vec<bool>,
}

/// Preprocessed session: everything downstream features need.
#[derive(Debug, Clone)]
pub struct CleanSession {
    pub duration_s: usize,
    /// Per participant, exactly `target_hz * duration_s` samples.
    pub motion: Vec<MotionSeries>,
    /// Indexed by canonical pair order.
    pub coin: Vec<CoinPairSeries>,
    /// Number of ceiling beacons seen in the data.
    pub n_ceiling: usize,
    /// `[participant * n_ceiling + k][second]`, gap-free.
    pub ceiling_dist: Vec<Vec<f64>>,
}

impl CleanSession {
    pub fn n_participants(&self) -> usize {
        self.motion.len()
    }

    /// Mean of the two directional distances; the pair proximity the
    /// normalized-proximity baseline scores.
    pub fn pair_distance(&self, pair_idx: usize, second: usize) -> f64 {
        let c = &self.coin[pair_idx];
        0.5 * (c.dist_ab[second] + c.dist_ba[second])
    }
}

/// Linear-interpolation resampling of motion magnitudes onto a uniform grid.
///
/// Values outside the raw time span clamp to the nearest endpoint.
pub fn resample_motion(raw: &RawMotion, target_hz: f64, duration_s: usize) -> Result<MotionSeries> {
    if raw.t.len() < 2 {
        return Err(Error::TooFewSamples);
    }
    let n_out = (target_hz * duration_s as f64).round() as usize;
    let interp = |values: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(n_out);
        let mut hi = 0usize; // first raw index with t >= grid time
        for k in 0..n_out {
            let t = k as f64 / target_hz;
            while hi < raw.t.len() && raw.t[hi] < t {
                hi += 1;
            }
            let v = if hi == 0 {
                values[0]
            } else if hi == raw.t.len() {
                values[raw.t.len() - 1]
            } else {
                let (t0, t1) = (raw.t[hi - 1], raw.t[hi]);
                let (v0, v1) = (values[hi - 1], values[hi]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            };
            out.push(v);
        }
        out
    };
    Ok(MotionSeries {
        sample_rate: target_hz,
        t0: 0.0,
        lin_acc_mag: interp(&raw.lin_acc_mag),
        gravity_mag: interp(&raw.gravity_mag),
        rotation_rate_mag: interp(&raw.rotation_rate_mag),
    })
}

/// Fill gaps (NaN) in a distance series: interior gaps by linear
/// interpolation, leading/trailing gaps with the nearest observed value.
pub fn impute_ceiling(series: &mut [f64]) -> Result<()> {
    let first = series.iter().position(|v| !v.is_nan());
    let Some(first) = first else {
        return Err(Error::AllMissing {
            participant: String::new(),
            beacon: 0,
        });
    };
    let last = series.iter().rposition(|v| !v.is_nan()).unwrap();
    for i in 0..first {
        series[i] = series[first];
    }
    for i in last + 1..series.len() {
        series[i] = series[last];
    }
    let mut i = first;
    while i < last {
        if !series[i + 1].is_nan() {
            i += 1;
            continue;
        }
        // Gap [i+1, j): interpolate between the surrounding observations.
        let mut j = i + 1;
        while series[j].is_nan() {
            j += 1;
        }
        let (v0, v1) = (series[i], series[j]);
        let span = (j - i) as f64;
        for k in i + 1..j {
            series[k] = v0 + (v1 - v0) * (k - i) as f64 / span;
        }
        i = j;
    }
    Ok(())
}

/// Fill gaps in one directional coin series: distance becomes the
/// dataset-wide maximum observed distance, RSSI the dataset-wide minimum
/// observed RSSI, and the entry is flagged filled.
pub fn impute_coin(
    rssi: &mut [f64],
    dist: &mut [f64],
    filled: &mut [bool],
    global_max_distance: f64,
    global_min_rssi: f64,
) {
    for s in 0..rssi.len() {
        if rssi[s].is_nan() {
            rssi[s] = global_min_rssi;
            dist[s] = global_max_distance;
            filled[s] = true;
        }
    }
}

/// Run the full preprocessing pass over an ingested session.
pub fn preprocess(ds: &SessionDataset, cfg: &PreprocessConfig) -> Result<CleanSession> {
    let n = ds.n_participants();
    let t = ds.duration_s;
    let pairs = all_pairs(n);

    let mut motion = Vec::with_capacity(n);
    for raw in &ds.motion {
        motion.push(resample_motion(raw, cfg.target_hz, t)?);
    }

    // Per-second aggregation. sums[slot] / counts[slot] later becomes the
    // per-second mean RSSI.
    let n_ceiling = ds
        .sightings
        .iter()
        .filter_map(|s| match s.source {
            BeaconSource::Ceiling { index } => Some(index),
            _ => None,
        })
        .max()
        .unwrap_or(0);

    let minor_to_idx: std::collections::BTreeMap<u16, u32> = ds
        .participants
        .iter()
        .enumerate()
        .map(|(i, m)| (m.beacon_minor, i as u32))
        .collect();

    let mut coin_sum = vec![0.0f64; n * n * t];
    let mut coin_cnt = vec![0u32; n * n * t];
    let mut ceil_sum = vec![0.0f64; n * n_ceiling * t];
    let mut ceil_cnt = vec![0u32; n * n_ceiling * t];
    let mut ceil_mp = vec![f64::NAN; n * n_ceiling];

    for s in &ds.sightings {
        let Some(rssi) = s.rssi else { continue };
        let sec = s.t.floor() as usize;
        if sec >= t {
            continue;
        }
        let rx = s.receiver as usize;
        match s.source {
            BeaconSource::Coin { minor } => {
                let Some(&tx) = minor_to_idx.get(&minor) else {
                    continue;
                };
                let slot = (rx * n + tx as usize) * t + sec;
                coin_sum[slot] += rssi;
                coin_cnt[slot] += 1;
            }
            BeaconSource::Ceiling { index } => {
                let k = index - 1;
                let slot = (rx * n_ceiling + k) * t + sec;
                ceil_sum[slot] += rssi;
                ceil_cnt[slot] += 1;
                if let Some(mp) = s.measured_power {
                    ceil_mp[rx * n_ceiling + k] = mp;
                }
            }
        }
    }

    // Ceiling: per-second mean RSSI -> distance, then interpolate gaps.
    let mut ceiling_dist = vec![vec![f64::NAN; t]; n * n_ceiling];
    for p in 0..n {
        for k in 0..n_ceiling {
            let mp = ceil_mp[p * n_ceiling + k];
            let plm = if mp.is_nan() {
                cfg.ceiling_plm
            } else {
                PlmParams::new(mp, cfg.ceiling_plm.path_loss_exponent, cfg.ceiling_plm.obstacle_loss)
            };
            let series = &mut ceiling_dist[p * n_ceiling + k];
            for sec in 0..t {
                let slot = (p * n_ceiling + k) * t + sec;
                if ceil_cnt[slot] > 0 {
                    series[sec] = plm.distance(ceil_sum[slot] / ceil_cnt[slot] as f64);
                }
            }
            impute_ceiling(series).map_err(|_| Error::AllMissing {
                participant: ds.participants[p].participant_id.clone(),
                beacon: k + 1,
            })?;
        }
    }

    // Coin: per-second mean RSSI per direction, distances, global extrema,
    // then fill.
    let directional = |rx: usize, tx: usize| -> (Vec<f64>, Vec<f64>) {
        let mut rssi = vec![f64::NAN; t];
        let mut dist = vec![f64::NAN; t];
        for sec in 0..t {
            let slot = (rx * n + tx) * t + sec;
            if coin_cnt[slot] > 0 {
                let r = coin_sum[slot] / coin_cnt[slot] as f64;
                rssi[sec] = r;
                dist[sec] = cfg.coin_plm.distance(r);
            }
        }
        (rssi, dist)
    };

    let mut coin: Vec<CoinPairSeries> = Vec::with_capacity(pairs.len());
    let mut global_max_dist = f64::NEG_INFINITY;
    let mut global_min_rssi = f64::INFINITY;
    for &PairKey { a, b } in &pairs {
        let (rssi_ab, dist_ab) = directional(a as usize, b as usize);
        let (rssi_ba, dist_ba) = directional(b as usize, a as usize);
        for v in dist_ab.iter().chain(dist_ba.iter()) {
            if !v.is_nan() && *v > global_max_dist {
                global_max_dist = *v;
            }
        }
        for v in rssi_ab.iter().chain(rssi_ba.iter()) {
            if !v.is_nan() && *v < global_min_rssi {
                global_min_rssi = *v;
            }
        }
        coin.push(CoinPairSeries {
            rssi_ab,
            rssi_ba,
            dist_ab,
            dist_ba,
            filled_ab: vec![false; t],
            filled_ba: vec![false; t],
        });
    }
    if !global_max_dist.is_finite() {
        global_min_rssi = FALLBACK_MIN_RSSI;
        global_max_dist = cfg.coin_plm.distance(FALLBACK_MIN_RSSI);
    }
    for c in &mut coin {
        impute_coin(
            &mut c.rssi_ab,
            &mut c.dist_ab,
            &mut c.filled_ab,
            global_max_dist,
            global_min_rssi,
        );
        impute_coin(
            &mut c.rssi_ba,
            &mut c.dist_ba,
            &mut c.filled_ba,
            global_max_dist,
            global_min_rssi,
        );
    }

    Ok(CleanSession {
        duration_s: t,
        motion,
        coin,
        n_ceiling,
        ceiling_dist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(t: Vec<f64>, mags: Vec<f64>) -> RawMotion {
        RawMotion {
            lin_acc_mag: mags.clone(),
            gravity_mag: mags.clone(),
            rotation_rate_mag: mags,
            t,
        }
    }

    #[test]
    fn constant_input_stays_constant() {
        let r = raw(vec![0.0, 0.33, 0.9, 1.7], vec![1.0; 4]);
        let m = resample_motion(&r, 100.0, 2).unwrap();
        assert_eq!(m.lin_acc_mag.len(), 200);
        assert!(m.lin_acc_mag.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn linear_interpolation_midpoint() {
        let r = raw(vec![0.0, 1.0], vec![0.0, 2.0]);
        let m = resample_motion(&r, 100.0, 2).unwrap();
        assert!((m.lin_acc_mag[50] - 1.0).abs() < 1e-12);
        // Past the raw span, clamp to the last value.
        assert_eq!(m.lin_acc_mag[199], 2.0);
    }

    #[test]
    fn single_sample_is_too_few() {
        let r = raw(vec![0.0], vec![1.0]);
        assert!(matches!(
            resample_motion(&r, 100.0, 1),
            Err(Error::TooFewSamples)
        ));
    }

    #[test]
    fn resampling_uniform_100hz_is_identity() {
        let n = 300;
        let t: Vec<f64> = (0..n).map(|k| k as f64 / 100.0).collect();
        let vals: Vec<f64> = (0..n).map(|k| (k as f64 * 0.13).sin().abs()).collect();
        let m = resample_motion(&raw(t, vals.clone()), 100.0, 3).unwrap();
        for (a, b) in m.lin_acc_mag.iter().zip(vals.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ceiling_interior_gap_is_midpoint() {
        let mut s = vec![f64::NAN, 2.0, f64::NAN, 4.0, f64::NAN];
        impute_ceiling(&mut s).unwrap();
        assert_eq!(s, vec![2.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn ceiling_leading_gap_takes_first_value() {
        let mut s = vec![f64::NAN, f64::NAN, 1.5, 2.5];
        impute_ceiling(&mut s).unwrap();
        assert_eq!(&s[..2], &[1.5, 1.5]);
    }

    #[test]
    fn ceiling_all_missing_is_an_error() {
        let mut s = vec![f64::NAN; 4];
        assert!(impute_ceiling(&mut s).is_err());
    }

    #[test]
    fn coin_gap_gets_global_extrema() {
        let mut rssi = vec![-60.0, f64::NAN, -70.0];
        let mut dist = vec![1.0, f64::NAN, 2.0];
        let mut filled = vec![false; 3];
        impute_coin(&mut rssi, &mut dist, &mut filled, 9.0, -92.0);
        assert_eq!(rssi, vec![-60.0, -92.0, -70.0]);
        assert_eq!(dist, vec![1.0, 9.0, 2.0]);
        assert_eq!(filled, vec![false, true, false]);
    }

    #[test]
    fn coin_without_gaps_is_unchanged() {
        let mut rssi = vec![-60.0, -61.0];
        let mut dist = vec![1.0, 1.1];
        let mut filled = vec![false; 2];
        impute_coin(&mut rssi, &mut dist, &mut filled, 9.0, -92.0);
        assert_eq!(rssi, vec![-60.0, -61.0]);
        assert!(filled.iter().all(|&f| !f));
    }

    #[test]
    fn coin_never_in_range_becomes_all_filled() {
        let mut rssi = vec![f64::NAN; 3];
        let mut dist = vec![f64::NAN; 3];
        let mut filled = vec![false; 3];
        impute_coin(&mut rssi, &mut dist, &mut filled, 9.0, -92.0);
        assert!(filled.iter().all(|&f| f));
        assert!(dist.iter().all(|&d| d == 9.0));
    }

    #[test]
    fn magnitude_is_rotation_invariant() {
        // Rotating the axis triple must leave the ingested magnitude alone.
        let mag = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let rotate_z = |v: [f64; 3], a: f64| {
            [
                v[0] * a.cos() - v[1] * a.sin(),
                v[0] * a.sin() + v[1] * a.cos(),
                v[2],
            ]
        };
        let rotate_x = |v: [f64; 3], a: f64| {
            [
                v[0],
                v[1] * a.cos() - v[2] * a.sin(),
                v[1] * a.sin() + v[2] * a.cos(),
            ]
        };
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let v = [next() * 2.0 - 1.0, next() * 2.0 - 1.0, next() * 2.0 - 1.0];
            let r = rotate_x(rotate_z(v, next() * std::f64::consts::TAU), next() * std::f64::consts::TAU);
            assert!((mag(v) - mag(r)).abs() < 1e-12);
        }
    }
}
