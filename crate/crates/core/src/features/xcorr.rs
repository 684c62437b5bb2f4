//! Windowed normalized cross-correlation between two motion signals.
//!
//! Both windows are standardized (zero mean, unit variance over the full
//! window) and the raw linear correlation is evaluated on the overlap at
//! each candidate lag, divided by the window length. The peak value and its
//! lag (in seconds) are the features. Positive lag means the second signal
//! trails the first.
//!
//! [`xcorr_window`] evaluates one window directly. [`XcorrBatch`] produces
//! the same numbers for every trailing window of a long signal pair using
//! compensated prefix sums, in O(lags x samples) total instead of
//! O(lags x samples x window).

use crate::num::Real;

/// Lag grid and window geometry, all in samples.
#[derive(Debug, Clone, Copy)]
pub struct XcorrParams {
    /// Window length (e.g. 10 s at 100 Hz = 1000).
    pub window: usize,
    /// Maximum |lag|.
    pub max_lag: usize,
    /// Spacing between evaluated lags; must divide `max_lag`.
    pub lag_step: usize,
}

impl XcorrParams {
    pub fn from_seconds(sample_rate: f64, window_s: f64, max_lag_s: f64, lag_step_s: f64) -> Self {
        XcorrParams {
            window: (window_s * sample_rate).round() as usize,
            max_lag: (max_lag_s * sample_rate).round() as usize,
            lag_step: ((lag_step_s * sample_rate).round() as usize).max(1),
        }
    }

    fn lags(&self) -> impl Iterator<Item = i64> + '_ {
        let (max, step) = (self.max_lag as i64, self.lag_step as i64);
        (-max..=max).step_by(self.lag_step.max(1)).filter(move |l| l.abs() <= max && (l + max) % step == 0)
    }
}

/// Variance floor below which a window counts as constant.
fn variance_floor<R: Real>(mean: R) -> R {
    R::of(1e-10) * (R::one() + mean * mean)
}

fn window_moments<R: Real>(w: &[R]) -> (R, R) {
    let n = R::of(w.len() as f64);
    let mean = w.iter().copied().sum::<R>() / n;
    let var = w.iter().map(|&v| (v - mean) * (v - mean)).sum::<R>() / n;
    (mean, var)
}

/// Cross-correlation features for one pair of equal-length windows.
///
/// Returns `(max_corr, lag_in_samples_as_scalar)`; divide by the sample
/// rate for seconds. A (near-)constant window on either side yields
/// `(0, 0)`.
pub fn xcorr_window<R: Real>(x: &[R], y: &[R], params: &XcorrParams) -> (R, R) {
    assert_eq!(x.len(), y.len());
    assert_eq!(x.len(), params.window);
    let n = x.len();
    let (mx, vx) = window_moments(x);
    let (my, vy) = window_moments(y);
    if vx <= variance_floor(mx) || vy <= variance_floor(my) {
        return (R::zero(), R::zero());
    }
    let denom = R::of(n as f64) * vx.sqrt() * vy.sqrt();

    let mut best = R::neg_infinity();
    let mut best_lag = 0i64;
    for lag in params.lags() {
        let (lo, hi) = (lag.max(0) as usize, n - (-lag).max(0) as usize);
        // x index i pairs with y index i + lag; both must stay in-window.
        let mut acc = R::zero();
        for j in lo..hi {
            let i = (j as i64 - lag) as usize;
            acc += (x[i] - mx) * (y[j] - my);
        }
        let r = acc / denom;
        if r > best {
            best = r;
            best_lag = lag;
        }
    }
    (best, R::of(best_lag as f64))
}

/// Neumaier-compensated prefix sums; `prefix[i]` is the sum of the first
/// `i` terms.
fn prefix_sum<R: Real>(values: impl Iterator<Item = R>, len: usize) -> Vec<R> {
    let mut out = Vec::with_capacity(len + 1);
    out.push(R::zero());
    let mut sum = R::zero();
    let mut comp = R::zero();
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
        out.push(sum + comp);
    }
    debug_assert_eq!(out.len(), len + 1);
    out
}

/// Per-second cross-correlation features over a whole session.
pub struct XcorrBatch<'a, R> {
    x: &'a [R],
    y: &'a [R],
    params: XcorrParams,
    px: Vec<R>,
    px2: Vec<R>,
    py: Vec<R>,
    py2: Vec<R>,
}

impl<'a, R: Real> XcorrBatch<'a, R> {
    pub fn new(x: &'a [R], y: &'a [R], params: XcorrParams) -> Self {
        assert_eq!(x.len(), y.len());
        let n = x.len();
        XcorrBatch {
            px: prefix_sum(x.iter().copied(), n),
            px2: prefix_sum(x.iter().map(|&v| v * v), n),
            py: prefix_sum(y.iter().copied(), n),
            py2: prefix_sum(y.iter().map(|&v| v * v), n),
            x,
            y,
            params,
        }
    }

    /// `(max_corr, lag_samples)` for every trailing window ending at
    /// `sample_rate * (s + 1)`; seconds whose window would start before the
    /// signal begins get NaN (caller maps them to Missing).
    pub fn run(&self, sample_rate: usize, duration_s: usize) -> (Vec<R>, Vec<R>) {
        let n = self.x.len();
        let w = self.params.window;
        let mut best = vec![R::nan(); duration_s];
        let mut best_lag = vec![R::nan(); duration_s];

        // Window moments and validity per second.
        let first_full = if w == 0 { 0 } else { (w / sample_rate).saturating_sub(1) };
        let nw = R::of(w as f64);
        let mut denom = vec![R::zero(); duration_s];
        let mut mean_x = vec![R::zero(); duration_s];
        let mut mean_y = vec![R::zero(); duration_s];
        let mut degenerate = vec![true; duration_s];
        for s in 0..duration_s {
            let end = (s + 1) * sample_rate;
            if end < w || end > n {
                continue;
            }
            let (w0, w1) = (end - w, end);
            let mx = (self.px[w1] - self.px[w0]) / nw;
            let my = (self.py[w1] - self.py[w0]) / nw;
            let vx = ((self.px2[w1] - self.px2[w0]) / nw - mx * mx).max(R::zero());
            let vy = ((self.py2[w1] - self.py2[w0]) / nw - my * my).max(R::zero());
            mean_x[s] = mx;
            mean_y[s] = my;
            if vx > variance_floor(mx) && vy > variance_floor(my) {
                degenerate[s] = false;
                denom[s] = nw * vx.sqrt() * vy.sqrt();
            } else {
                // Constant window: fixed (0, 0) output.
                best[s] = R::zero();
                best_lag[s] = R::zero();
            }
        }

        let mut pq: Vec<R> = Vec::new();
        for lag in self.params.lags() {
            // Products x[i] * y[i + lag] where both indices are valid.
            pq.clear();
            pq.reserve(n + 1);
            pq.push(R::zero());
            let mut sum = R::zero();
            let mut comp = R::zero();
            for i in 0..n {
                let j = i as i64 + lag;
                let v = if j >= 0 && (j as usize) < n {
                    self.x[i] * self.y[j as usize]
                } else {
                    R::zero()
                };
                let t = sum + v;
                comp += if sum.abs() >= v.abs() {
                    (sum - t) + v
                } else {
                    (v - t) + sum
                };
                sum = t;
                pq.push(sum + comp);
            }

            let lag_r = R::of(lag as f64);
            for s in first_full..duration_s {
                if degenerate[s] {
                    continue;
                }
                let end = (s + 1) * sample_rate;
                if end < w || end > n {
                    continue;
                }
                let (w0, w1) = (end - w, end);
                // Overlap in x-index space.
                let a0 = w0 + (-lag).max(0) as usize;
                let a1 = w1 - lag.max(0) as usize;
                let m = R::of((a1 - a0) as f64);
                let s_xy = pq[a1] - pq[a0];
                let s_x = self.px[a1] - self.px[a0];
                let y0 = (a0 as i64 + lag) as usize;
                let y1 = (a1 as i64 + lag) as usize;
                let s_y = self.py[y1] - self.py[y0];
                let cov = s_xy - mean_x[s] * s_y - mean_y[s] * s_x + m * mean_x[s] * mean_y[s];
                let r = cov / denom[s];
                if best[s].is_nan() || r > best[s] {
                    best[s] = r;
                    best_lag[s] = lag_r;
                }
            }
        }
        (best, best_lag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(window: usize, max_lag: usize, step: usize) -> XcorrParams {
        XcorrParams {
            window,
            max_lag,
            lag_step: step,
        }
    }

    /// Brute-force double-loop reference with the same definition.
    fn brute_force(x: &[f64], y: &[f64], p: &XcorrParams) -> (f64, f64) {
        let n = x.len();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
        let (mx, my) = (mean(x), mean(y));
        let var = |v: &[f64], m: f64| v.iter().map(|&a| (a - m) * (a - m)).sum::<f64>() / n as f64;
        let (vx, vy) = (var(x, mx), var(y, my));
        if vx <= 1e-10 * (1.0 + mx * mx) || vy <= 1e-10 * (1.0 + my * my) {
            return (0.0, 0.0);
        }
        let mut best = f64::NEG_INFINITY;
        let mut best_lag = 0i64;
        let mut lag = -(p.max_lag as i64);
        while lag <= p.max_lag as i64 {
            let mut acc = 0.0;
            let mut count = 0;
            for i in 0..n {
                let j = i as i64 + lag;
                if j >= 0 && (j as usize) < n {
                    acc += (x[i] - mx) * (y[j as usize] - my);
                    count += 1;
                }
            }
            let _ = count;
            let r = acc / (n as f64 * vx.sqrt() * vy.sqrt());
            if r > best {
                best = r;
                best_lag = lag;
            }
            lag += p.lag_step as i64;
        }
        (best, best_lag as f64)
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn identical_signals_peak_at_zero_lag() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let (r, lag) = xcorr_window(&x, &x, &params(200, 50, 5));
        assert!((r - 1.0).abs() < 1e-12, "{r}");
        assert_eq!(lag, 0.0);
    }

    #[test]
    fn constant_signal_gives_zero() {
        let x = vec![0.1f64; 100];
        let y: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).cos()).collect();
        assert_eq!(xcorr_window(&x, &y, &params(100, 20, 2)), (0.0, 0.0));
        assert_eq!(xcorr_window(&y, &x, &params(100, 20, 2)), (0.0, 0.0));
    }

    #[test]
    fn planted_shift_is_recovered_with_positive_lag() {
        // y trails x by 30 samples.
        let mut state = 7u64;
        let base: Vec<f64> = (0..400).map(|_| lcg(&mut state) - 0.5).collect();
        let x: Vec<f64> = base[30..330].to_vec();
        let y: Vec<f64> = base[0..300].to_vec();
        let (r, lag) = xcorr_window(&x, &y, &params(300, 60, 10));
        assert!(r > 0.8, "{r}");
        assert_eq!(lag, 30.0);
        // Swapping the roles flips the sign.
        let (_, lag_rev) = xcorr_window(&y, &x, &params(300, 60, 10));
        assert_eq!(lag_rev, -30.0);
    }

    #[test]
    fn window_matches_brute_force_on_random_signals() {
        let mut state = 42u64;
        for trial in 0..50 {
            let n = 80 + (trial % 7) * 30;
            let p = params(n, n / 4, 1 + trial % 4);
            let x: Vec<f64> = (0..n).map(|_| lcg(&mut state) * 2.0 - 1.0).collect();
            let y: Vec<f64> = (0..n).map(|_| lcg(&mut state) * 2.0 - 1.0).collect();
            let (r1, l1) = xcorr_window(&x, &y, &p);
            let (r2, l2) = brute_force(&x, &y, &p);
            assert!((r1 - r2).abs() < 1e-9, "trial {trial}: {r1} vs {r2}");
            assert_eq!(l1, l2, "trial {trial}");
        }
    }

    #[test]
    fn batch_agrees_with_window_evaluation() {
        let mut state = 99u64;
        let rate = 20;
        let dur = 12;
        let n = rate * dur;
        let x: Vec<f64> = (0..n).map(|_| lcg(&mut state) * 2.0 - 1.0).collect();
        let y: Vec<f64> = (0..n).map(|_| lcg(&mut state) * 2.0 - 1.0).collect();
        let p = params(3 * rate, rate, 5);
        let batch = XcorrBatch::new(&x, &y, p);
        let (rs, lags) = batch.run(rate, dur);
        for s in 0..dur {
            let end = (s + 1) * rate;
            if end < p.window {
                assert!(rs[s].is_nan());
                continue;
            }
            let (r, l) = xcorr_window(&x[end - p.window..end], &y[end - p.window..end], &p);
            assert!((rs[s] - r).abs() < 1e-9, "s={s}: {} vs {r}", rs[s]);
            assert_eq!(lags[s], l, "s={s}");
        }
    }

    #[test]
    fn batch_handles_constant_windows() {
        let rate = 10;
        let dur = 6;
        let mut x = vec![0.5f64; rate * dur];
        let y: Vec<f64> = (0..rate * dur).map(|i| (i as f64 * 0.9).sin()).collect();
        // Make the last windows non-constant.
        for (i, v) in x.iter_mut().enumerate().skip(rate * 4) {
            *v = (i as f64 * 0.7).cos();
        }
        let p = params(2 * rate, rate / 2, 1);
        let (rs, lags) = XcorrBatch::new(&x, &y, p).run(rate, dur);
        assert_eq!((rs[2], lags[2]), (0.0, 0.0));
        assert!(rs[5].abs() > 0.0);
    }
}
