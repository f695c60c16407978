//! Surface EMG processing: filter, rectify, smooth, quantify, evaluate.
//!
//! Every operation is pure and works on a [`SampleSeries`]. Windowed
//! operations use centred windows of `round(window_s * rate_hz)` samples.
//! Near the ends the window is truncated to the samples that exist, so the
//! output always has the same length as the input.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shimmer::SAMPLE_RATE_HZ;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmgError {
    #[error("invalid series: {0}")]
    InvalidSeries(&'static str),
    #[error("invalid window: {window_s} s is shorter than two samples at {rate_hz} Hz")]
    InvalidWindow { window_s: f64, rate_hz: f64 },
    #[error("series is empty or shorter than one window")]
    EmptySeries,
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
    #[error("reference channel has zero RMS")]
    ZeroDenominator,
    #[error("series of {0} s is too short (need at least 2 s)")]
    TooShort(f64),
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
}

/// Uniformly sampled signal in millivolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    samples: Vec<f64>,
    rate_hz: f64,
}

impl SampleSeries {
    pub fn new(samples: Vec<f64>, rate_hz: f64) -> Result<Self, EmgError> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(EmgError::InvalidSeries("rate_hz must be positive"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(EmgError::InvalidSeries("samples must be finite"));
        }
        Ok(Self { samples, rate_hz })
    }

    /// Series at the sensor's default 500 Hz rate.
    pub fn at_default_rate(samples: Vec<f64>) -> Result<Self, EmgError> {
        Self::new(samples, SAMPLE_RATE_HZ)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            rate_hz: self.rate_hz,
        }
    }

    /// Parses the text form: a `rate_hz=<value>` header, then one sample
    /// per line. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, EmgError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or(EmgError::InvalidSeries("missing header"))?;
        let rate = header
            .strip_prefix("rate_hz=")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or(EmgError::InvalidSeries("bad rate_hz header"))?;
        let samples = lines
            .map(|l| l.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| EmgError::InvalidSeries("bad sample line"))?;
        Self::new(samples, rate)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 10 + 16);
        let _ = writeln!(out, "rate_hz={}", self.rate_hz);
        for x in &self.samples {
            let _ = writeln!(out, "{x}");
        }
        out
    }
}

fn window_len(window_s: f64, rate_hz: f64) -> Result<usize, EmgError> {
    // Tolerate representation error in e.g. 0.004 * 500.
    if !(window_s * rate_hz >= 2.0 - 1e-9) || !window_s.is_finite() {
        return Err(EmgError::InvalidWindow { window_s, rate_hz });
    }
    Ok((window_s * rate_hz).round() as usize)
}

/// Centred window bounds `[lo, hi)` for index `i` in a series of `n`.
fn window_bounds(i: usize, w: usize, n: usize) -> (usize, usize) {
    let before = (w - 1) / 2;
    let after = w / 2;
    (i.saturating_sub(before), (i + after + 1).min(n))
}

fn moving_mean(values: impl Iterator<Item = f64>, n: usize, w: usize) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let (lo, hi) = window_bounds(i, w, n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

pub const DEFAULT_FILTER_CUTOFF_HZ: f64 = 10.0;

/// Single-pole high-pass filter removing DC offset and slow drift.
///
/// The filter starts in steady state for the first sample, so a constant
/// input yields an all-zero output.
pub fn dc_filter(s: &SampleSeries, cutoff_hz: f64) -> SampleSeries {
    let dt = 1.0 / s.rate_hz;
    let rc = 1.0 / (2.0 * PI * cutoff_hz);
    let alpha = rc / (rc + dt);
    let mut out = Vec::with_capacity(s.len());
    let mut prev_x = s.samples.first().copied().unwrap_or(0.0);
    let mut prev_y = 0.0;
    for &x in &s.samples {
        let y = alpha * (prev_y + x - prev_x);
        out.push(y);
        prev_x = x;
        prev_y = y;
    }
    s.with_samples(out)
}

pub fn rectify(s: &SampleSeries) -> SampleSeries {
    s.with_samples(s.samples.iter().map(|x| x.abs()).collect())
}

/// Centred moving average (integral averaging).
pub fn smooth(s: &SampleSeries, window_s: f64) -> Result<SampleSeries, EmgError> {
    let w = window_len(window_s, s.rate_hz)?;
    let n = s.len();
    Ok(s.with_samples(moving_mean(s.samples.iter().copied(), n, w)))
}

/// Root mean square of the whole series (0 for an empty series).
pub fn rms(s: &SampleSeries) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    (s.samples.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt()
}

/// Sliding-window RMS envelope with the same edge rule as [`smooth`].
pub fn rms_envelope(s: &SampleSeries, window_s: f64) -> Result<SampleSeries, EmgError> {
    let w = window_len(window_s, s.rate_hz)?;
    let n = s.len();
    let ms = moving_mean(s.samples.iter().map(|x| x * x), n, w);
    // Prefix-sum differences can dip a hair below zero.
    Ok(s.with_samples(ms.into_iter().map(|v| v.max(0.0).sqrt()).collect()))
}

/// Mean of the rectified series.
pub fn integral_average(s: &SampleSeries) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    s.samples.iter().map(|x| x.abs()).sum::<f64>() / s.len() as f64
}

/// Mean over consecutive traces of each trace's max minus min. A trailing
/// partial trace is dropped.
pub fn peak_to_peak_average(s: &SampleSeries, trace_s: f64) -> Result<f64, EmgError> {
    let t = window_len(trace_s, s.rate_hz)?;
    let traces = s.len() / t;
    if traces == 0 {
        return Err(EmgError::EmptySeries);
    }
    let total: f64 = s
        .samples
        .chunks_exact(t)
        .map(|trace| {
            let (lo, hi) = trace
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                });
            hi - lo
        })
        .sum();
    Ok(total / traces as f64)
}

/// One detected burst of muscle activity. `offset_s` is exclusive: it is the
/// time of the first sample after the burst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub onset_s: f64,
    pub offset_s: f64,
}

impl Activation {
    pub fn duration_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }
}

/// Maximal runs where `envelope >= threshold`, dropping runs shorter than
/// `min_duration_s`.
pub fn activation_timing(
    envelope: &SampleSeries,
    threshold: f64,
    min_duration_s: f64,
) -> Result<Vec<Activation>, EmgError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(EmgError::InvalidThreshold(threshold));
    }
    let rate = envelope.rate_hz;
    let min_len = (min_duration_s * rate - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let n = envelope.len();
    for i in 0..=n {
        let active = i < n && envelope.samples[i] >= threshold;
        match (active, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    out.push(Activation {
                        onset_s: s as f64 / rate,
                        offset_s: i as f64 / rate,
                    });
                }
                start = None;
            }
            _ => {}
        }
    }
    Ok(out)
}

/// `rms(left) / rms(right)`; 1.0 means both sides worked equally.
pub fn symmetry_ratio(left: &SampleSeries, right: &SampleSeries) -> Result<f64, EmgError> {
    if left.rate_hz != right.rate_hz {
        return Err(EmgError::RateMismatch(left.rate_hz, right.rate_hz));
    }
    let denom = rms(right);
    if denom == 0.0 {
        return Err(EmgError::ZeroDenominator);
    }
    Ok(rms(left) / denom)
}

/// Least-squares slope (mV/s) of one-second RMS bins against bin centre
/// time. Negative values mean the muscle is doing less work over time.
pub fn fatigue_slope(envelope: &SampleSeries) -> Result<f64, EmgError> {
    let duration = envelope.duration_s();
    if duration < 2.0 {
        return Err(EmgError::TooShort(duration));
    }
    let bin = envelope.rate_hz.round().max(1.0) as usize;
    let points: Vec<(f64, f64)> = envelope
        .samples
        .chunks_exact(bin)
        .enumerate()
        .map(|(k, chunk)| {
            let t = (k as f64 + 0.5) * bin as f64 / envelope.rate_hz;
            let ms = chunk.iter().map(|x| x * x).sum::<f64>() / chunk.len() as f64;
            (t, ms.sqrt())
        })
        .collect();
    if points.len() < 2 {
        return Err(EmgError::TooShort(duration));
    }
    Ok(least_squares_slope(&points))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_v = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), &(t, v)| {
        (num + (t - mean_t) * (v - mean_v), den + (t - mean_t) * (t - mean_t))
    });
    num / den
}

/// Tunables for [`analyze`]. Recorded in every report it produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgConfig {
    pub filter_cutoff_hz: f64,
    pub smooth_window_s: f64,
    pub trace_s: f64,
    /// Fixed activation threshold in mV. When absent the threshold is
    /// `baseline_factor` times the RMS of the first `baseline_s` seconds.
    pub threshold_mv: Option<f64>,
    pub baseline_s: f64,
    pub baseline_factor: f64,
    pub min_activation_s: f64,
}

impl Default for EmgConfig {
    fn default() -> Self {
        Self {
            filter_cutoff_hz: DEFAULT_FILTER_CUTOFF_HZ,
            smooth_window_s: 0.05,
            trace_s: 0.25,
            threshold_mv: None,
            baseline_s: 1.0,
            baseline_factor: 2.0,
            min_activation_s: 0.1,
        }
    }
}

/// Threshold used when the baseline is perfectly silent.
const MIN_THRESHOLD_MV: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmgReport {
    pub rms: f64,
    pub integral_average: f64,
    pub peak_to_peak_avg: f64,
    pub activations: Vec<Activation>,
    pub symmetry_ratio: Option<f64>,
    /// Absent for recordings shorter than two seconds.
    pub fatigue_slope: Option<f64>,
    pub threshold_mv: f64,
    pub duration_s: f64,
    pub config: EmgConfig,
}

/// The activation envelope: filtered, rectified, then smoothed.
pub fn envelope(s: &SampleSeries, cfg: &EmgConfig) -> Result<SampleSeries, EmgError> {
    smooth(&rectify(&dc_filter(s, cfg.filter_cutoff_hz)), cfg.smooth_window_s)
}

/// Runs the full chain on one channel.
pub fn analyze(s: &SampleSeries, cfg: &EmgConfig) -> Result<EmgReport, EmgError> {
    if s.len() < 2 {
        return Err(EmgError::EmptySeries);
    }
    let filtered = dc_filter(s, cfg.filter_cutoff_hz);
    let rectified = rectify(&filtered);
    let env = smooth(&rectified, cfg.smooth_window_s)?;

    let threshold = match cfg.threshold_mv {
        Some(t) => t,
        None => {
            let n = ((cfg.baseline_s * s.rate_hz).round() as usize).clamp(1, s.len());
            let base = filtered.with_samples(filtered.samples[..n].to_vec());
            (cfg.baseline_factor * rms(&base)).max(MIN_THRESHOLD_MV)
        }
    };
    let trace_s = cfg.trace_s.min(s.duration_s());
    let peak_to_peak_avg = peak_to_peak_average(&filtered, trace_s)?;

    Ok(EmgReport {
        rms: rms(&filtered),
        integral_average: integral_average(&filtered),
        peak_to_peak_avg,
        activations: activation_timing(&env, threshold, cfg.min_activation_s)?,
        symmetry_ratio: None,
        fatigue_slope: fatigue_slope(&rectified).ok(),
        threshold_mv: threshold,
        duration_s: s.duration_s(),
        config: *cfg,
    })
}

/// Analyses `left` and fills in its symmetry against `right`.
pub fn analyze_pair(
    left: &SampleSeries,
    right: &SampleSeries,
    cfg: &EmgConfig,
) -> Result<EmgReport, EmgError> {
    let mut report = analyze(left, cfg)?;
    let l = dc_filter(left, cfg.filter_cutoff_hz);
    let r = dc_filter(right, cfg.filter_cutoff_hz);
    report.symmetry_ratio = Some(symmetry_ratio(&l, &r)?);
    Ok(report)
}

impl EmgReport {
    /// Flat `key=value` rendering, one quantity per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "duration_s={}", self.duration_s);
        let _ = writeln!(out, "rms_mv={}", self.rms);
        let _ = writeln!(out, "integral_average_mv={}", self.integral_average);
        let _ = writeln!(out, "peak_to_peak_avg_mv={}", self.peak_to_peak_avg);
        match self.fatigue_slope {
            Some(v) => _ = writeln!(out, "fatigue_slope_mv_per_s={v}"),
            None => _ = writeln!(out, "fatigue_slope_mv_per_s="),
        }
        match self.symmetry_ratio {
            Some(v) => _ = writeln!(out, "symmetry_ratio={v}"),
            None => _ = writeln!(out, "symmetry_ratio="),
        }
        let _ = writeln!(out, "threshold_mv={}", self.threshold_mv);
        let _ = writeln!(out, "activation_count={}", self.activations.len());
        let spans: Vec<String> = self
            .activations
            .iter()
            .map(|a| format!("{}:{}", a.onset_s, a.offset_s))
            .collect();
        let _ = writeln!(out, "activations={}", spans.join(","));
        let c = &self.config;
        let _ = writeln!(out, "config.filter_cutoff_hz={}", c.filter_cutoff_hz);
        let _ = writeln!(out, "config.smooth_window_s={}", c.smooth_window_s);
        let _ = writeln!(out, "config.trace_s={}", c.trace_s);
        let _ = writeln!(out, "config.min_activation_s={}", c.min_activation_s);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> SampleSeries {
        SampleSeries::new(v.to_vec(), 500.0).unwrap()
    }

    fn sine(amp: f64, freq: f64, secs: f64, offset: f64) -> SampleSeries {
        let n = (secs * 500.0) as usize;
        let v = (0..n)
            .map(|i| offset + amp * (2.0 * PI * freq * i as f64 / 500.0).sin())
            .collect();
        SampleSeries::new(v, 500.0).unwrap()
    }

    #[test]
    fn series_validation() {
        assert!(SampleSeries::new(vec![1.0], 0.0).is_err());
        assert!(SampleSeries::new(vec![f64::NAN], 500.0).is_err());
        assert!(SampleSeries::new(vec![], 500.0).is_ok());
    }

    #[test]
    fn series_text_round_trip() {
        let s = SampleSeries::new(vec![0.1, -2.5, 1e-7, 3.0], 250.0).unwrap();
        let text = s.to_text();
        assert!(text.starts_with("rate_hz=250\n"));
        assert_eq!(SampleSeries::parse(&text).unwrap(), s);
        assert!(SampleSeries::parse("0.5\n1.0\n").is_err());
    }

    #[test]
    fn dc_filter_constant_and_zero() {
        let out = dc_filter(&series(&[3.5; 100]), 10.0);
        assert!(out.samples().iter().all(|&x| x == 0.0));
        let out = dc_filter(&series(&[0.0; 100]), 10.0);
        assert!(out.samples().iter().all(|&x| x == 0.0));
        assert_eq!(out.len(), 100);
    }

    #[test]
    fn dc_filter_removes_offset_from_sine() {
        let amp = 1.0;
        let s = sine(amp, 60.0, 3.0, 0.5);
        let out = dc_filter(&s, 10.0);
        // one whole number of periods after the first second
        let tail = &out.samples()[500..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(mean.abs() < 0.01 * amp, "residual offset {mean}");
    }

    #[test]
    fn rectify_basics() {
        assert_eq!(rectify(&series(&[-1.0, 2.0, -3.0])).samples(), &[1.0, 2.0, 3.0]);
        let pos = series(&[0.0, 1.0, 2.0]);
        assert_eq!(rectify(&pos), pos);
        let s = series(&[-1.0, 0.5, -0.25]);
        assert_eq!(rectify(&rectify(&s)), rectify(&s));
    }

    #[test]
    fn smooth_constant_and_impulse() {
        let c = series(&[2.0; 40]);
        for (a, b) in smooth(&c, 0.01).unwrap().samples().iter().zip(c.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut v = vec![0.0; 21];
        v[10] = 1.0;
        let out = smooth(&series(&v), 0.01).unwrap(); // w = 5
        for (i, &x) in out.samples().iter().enumerate() {
            let expect = if (8..=12).contains(&i) { 0.2 } else { 0.0 };
            assert!((x - expect).abs() < 1e-12, "index {i}: {x}");
        }
    }

    #[test]
    fn smooth_rejects_sub_two_sample_window() {
        let s = series(&[1.0; 10]);
        assert!(matches!(smooth(&s, 0.001), Err(EmgError::InvalidWindow { .. })));
        assert!(smooth(&s, 0.004).is_ok());
        assert!(rms_envelope(&s, 0.001).is_err());
    }

    #[test]
    fn smooth_edges_use_truncated_window() {
        let out = smooth(&series(&[1.0, 2.0, 3.0, 4.0, 5.0]), 0.006).unwrap(); // w = 3
        let expect = [1.5, 2.0, 3.0, 4.0, 4.5];
        for (a, b) in out.samples().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rms_identities() {
        assert_eq!(rms(&series(&[-3.0; 17])), 3.0);
        let s = sine(2.0, 10.0, 1.0, 0.0);
        assert!((rms(&s) - 2.0 / 2f64.sqrt()).abs() < 2.0 / 2f64.sqrt() * 1e-3);
        let env = rms_envelope(&series(&[-2.0; 30]), 0.02).unwrap();
        assert!(env.samples().iter().all(|&x| (x - 2.0).abs() < 1e-12));
    }

    #[test]
    fn integral_average_of_sine_is_0637_of_half_peak_to_peak() {
        let amp = 3.0;
        let s = sine(amp, 10.0, 10.0, 0.0);
        let ratio = integral_average(&s) / amp;
        assert!((ratio - 0.637).abs() <= 0.637 * 0.005, "ratio {ratio}");
        assert_eq!(integral_average(&series(&[-1.5; 8])), 1.5);
    }

    #[test]
    fn peak_to_peak() {
        let s = sine(2.0, 10.0, 2.0, 0.0);
        let p = peak_to_peak_average(&s, 0.1).unwrap();
        assert!((p - 4.0).abs() <= 0.04, "{p}");
        assert_eq!(peak_to_peak_average(&series(&[1.0; 50]), 0.01).unwrap(), 0.0);
        assert_eq!(
            peak_to_peak_average(&series(&[1.0; 3]), 0.01),
            Err(EmgError::EmptySeries)
        );
        // trailing partial trace is dropped
        let v = [0.0, 1.0, 0.0, 5.0, 0.0];
        assert_eq!(peak_to_peak_average(&series(&v), 0.004).unwrap(), 3.0);
    }

    #[test]
    fn activation_edge_cases() {
        let env = series(&[0.1; 100]);
        assert!(activation_timing(&env, 1.0, 0.0).unwrap().is_empty());
        let acts = activation_timing(&env, 1e-12, 0.1).unwrap();
        assert_eq!(acts, vec![Activation { onset_s: 0.0, offset_s: 0.2 }]);
        assert!(matches!(activation_timing(&env, 0.0, 0.1), Err(EmgError::InvalidThreshold(_))));
        assert!(activation_timing(&env, -1.0, 0.1).is_err());
    }

    #[test]
    fn activation_drops_short_runs() {
        let mut v = vec![0.0; 200];
        v[10..15].iter_mut().for_each(|x| *x = 1.0); // 10 ms
        v[50..150].iter_mut().for_each(|x| *x = 1.0); // 200 ms
        let acts = activation_timing(&series(&v), 0.5, 0.1).unwrap();
        assert_eq!(acts, vec![Activation { onset_s: 0.1, offset_s: 0.3 }]);
    }

    #[test]
    fn activation_burst_train() {
        // 5 bursts of 0.5 s at 1 s spacing, starting at 1 s
        let mut v = vec![0.0; 500 * 7];
        for k in 0..5 {
            let on = 500 + k * 500;
            v[on..on + 250].iter_mut().for_each(|x| *x = 2.0);
        }
        let acts = activation_timing(&series(&v), 1.0, 0.1).unwrap();
        assert_eq!(acts.len(), 5);
        for (k, a) in acts.iter().enumerate() {
            assert!((a.onset_s - (1.0 + k as f64)).abs() <= 1.0 / 500.0);
            assert!((a.offset_s - (1.5 + k as f64)).abs() <= 1.0 / 500.0);
        }
    }

    #[test]
    fn symmetry() {
        let l = sine(1.0, 20.0, 1.0, 0.0);
        assert_eq!(symmetry_ratio(&l, &l).unwrap(), 1.0);
        let r = l.with_samples(l.samples().iter().map(|x| 2.0 * x).collect());
        assert!((symmetry_ratio(&l, &r).unwrap() - 0.5).abs() < 1e-12);
        let z = series(&[0.0; 10]);
        assert_eq!(symmetry_ratio(&l, &z), Err(EmgError::ZeroDenominator));
        let other = SampleSeries::new(vec![1.0], 250.0).unwrap();
        assert!(matches!(symmetry_ratio(&l, &other), Err(EmgError::RateMismatch(..))));
    }

    #[test]
    fn fatigue_slopes() {
        let flat = series(&vec![4.0; 500 * 5]);
        assert!(fatigue_slope(&flat).unwrap().abs() < 1e-9);

        let (a, b) = (100.0, 4.0);
        let decay: Vec<f64> = (0..500 * 10).map(|i| a - b * i as f64 / 500.0).collect();
        let slope = fatigue_slope(&series(&decay)).unwrap();
        assert!((slope + b).abs() <= 0.02 * b, "slope {slope}");

        let rising: Vec<f64> = (0..500 * 4).map(|i| 1.0 + i as f64 / 500.0).collect();
        assert!(fatigue_slope(&series(&rising)).unwrap() > 0.0);

        assert!(matches!(fatigue_slope(&series(&[1.0; 999])), Err(EmgError::TooShort(_))));
    }

    #[test]
    fn analyze_reports_consistent_quantities() {
        let s = sine(100.0, 80.0, 3.0, 5.0);
        let r = analyze(&s, &EmgConfig::default()).unwrap();
        assert!(r.rms >= r.integral_average);
        assert!(r.integral_average >= 0.0);
        assert!(r.peak_to_peak_avg > 0.0);
        assert!(r.fatigue_slope.is_some());
        let kv = r.to_kv();
        assert!(kv.contains("rms_mv="));
        assert!(kv.contains("config.smooth_window_s=0.05"));
    }

    proptest::proptest! {
        #[test]
        fn power_mean_inequality(v in proptest::collection::vec(-1e3f64..1e3, 1..300)) {
            let s = series(&v);
            proptest::prop_assert!(rms(&s) >= integral_average(&s) - 1e-12 * rms(&s));
        }

        #[test]
        fn smoothing_does_not_increase_variance(v in proptest::collection::vec(-10f64..10.0, 10..200)) {
            let s = series(&v);
            let sm = smooth(&s, 0.01).unwrap();
            let var = |x: &[f64]| {
                let m = x.iter().sum::<f64>() / x.len() as f64;
                x.iter().map(|y| (y - m).powi(2)).sum::<f64>() / x.len() as f64
            };
            proptest::prop_assert!(var(sm.samples()) <= var(s.samples()) + 1e-9);
        }

        #[test]
        fn scale_equivariance(v in proptest::collection::vec(-10f64..10.0, 10..200), k in 0f64..20.0) {
            let s = series(&v);
            let ks = series(&v.iter().map(|x| k * x).collect::<Vec<_>>());
            let a = smooth(&ks, 0.01).unwrap();
            let b = smooth(&s, 0.01).unwrap();
            for (x, y) in a.samples().iter().zip(b.samples()) {
                proptest::prop_assert!((x - k * y).abs() <= 1e-9 * (1.0 + k * y.abs()));
            }
            proptest::prop_assert!((rms(&ks) - k * rms(&s)).abs() <= 1e-9 * (1.0 + k * rms(&s)));
        }

        #[test]
        fn activations_disjoint_and_long_enough(
            v in proptest::collection::vec(0f64..2.0, 1..400),
            thr in 0.1f64..1.9,
            min_ms in 0u32..50,
        ) {
            let min_s = min_ms as f64 / 1000.0;
            let acts = activation_timing(&series(&v), thr, min_s).unwrap();
            for w in acts.windows(2) {
                proptest::prop_assert!(w[0].offset_s < w[1].onset_s);
            }
            for a in &acts {
                proptest::prop_assert!(a.onset_s < a.offset_s);
                proptest::prop_assert!(a.duration_s() >= min_s - 1e-9);
            }
        }

        #[test]
        fn window_ops_preserve_length(v in proptest::collection::vec(-5f64..5.0, 0..100)) {
            let s = series(&v);
            proptest::prop_assert_eq!(smooth(&s, 0.02).unwrap().len(), v.len());
            proptest::prop_assert_eq!(rms_envelope(&s, 0.02).unwrap().len(), v.len());
            proptest::prop_assert_eq!(dc_filter(&s, 10.0).len(), v.len());
            proptest::prop_assert_eq!(rectify(&s).len(), v.len());
        }
    }
}
