//! Signal cleaning: tail truncation, forward fill, trailing moving average,
//! polyphase FIR resampling and first-hour clipping.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record_io::RawRecord;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("record contains only zero or missing samples")]
    AllInvalid,
    #[error("first sample is missing; nothing to carry forward")]
    LeadingMissing,
    #[error("rate ratio {0} has no rational approximation L/M with L, M <= 1000")]
    IrrationalRatio(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// A uniformly sampled, gap-free heart-rate series in beats/min.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub samples: Vec<f64>,
    pub sampling_rate_hz: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sampling_rate_hz: f64) -> Self {
        Self {
            samples,
            sampling_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }

    /// Converts a record that has no missing samples.
    pub fn from_record(record: &RawRecord) -> Option<Self> {
        let samples = record.samples.iter().copied().collect::<Option<Vec<_>>>()?;
        Some(Self::new(samples, record.sampling_rate_hz))
    }

    pub fn to_record(&self, patient_id: &str, start_offset_s: f64) -> RawRecord {
        RawRecord {
            patient_id: patient_id.to_string(),
            samples: self.samples.iter().map(|&v| Some(v)).collect(),
            sampling_rate_hz: self.sampling_rate_hz,
            start_offset_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Window length in samples; 1 disables smoothing.
    pub window_len: usize,
}

fn is_invalid(s: Option<f64>) -> bool {
    matches!(s, None | Some(0.0))
}

/// Drops the leading and trailing runs made only of zeros and missing values.
pub fn truncate_tails(record: &RawRecord) -> Result<RawRecord, PreprocessError> {
    let first = record
        .samples
        .iter()
        .position(|&s| !is_invalid(s))
        .ok_or(PreprocessError::AllInvalid)?;
    let last = record
        .samples
        .iter()
        .rposition(|&s| !is_invalid(s))
        .unwrap();
    let dropped_head = first as f64 / record.sampling_rate_hz;
    Ok(RawRecord {
        patient_id: record.patient_id.clone(),
        samples: record.samples[first..=last].to_vec(),
        sampling_rate_hz: record.sampling_rate_hz,
        start_offset_s: record.start_offset_s + dropped_head,
    })
}

/// Replaces every missing sample with the closest preceding present value.
pub fn forward_fill(record: &RawRecord) -> Result<RawRecord, PreprocessError> {
    let mut last = match record.samples.first() {
        Some(Some(v)) => *v,
        Some(None) => return Err(PreprocessError::LeadingMissing),
        None => return Err(PreprocessError::AllInvalid),
    };
    let samples = record
        .samples
        .iter()
        .map(|s| {
            if let Some(v) = s {
                last = *v;
            }
            Some(last)
        })
        .collect();
    Ok(RawRecord {
        samples,
        ..record.clone()
    })
}

/// Trailing moving average of width `window_len`, with an expanding window
/// over the first `window_len - 1` samples.
///
/// Sums are accumulated as offsets from the first sample so that constant
/// signals come back exactly, and each output is clamped to the range of the
/// window it averages.
pub fn moving_average(signal: &Signal, cfg: SmoothingConfig) -> Signal {
    let w = cfg.window_len.max(1);
    let s = &signal.samples;
    if w == 1 || s.is_empty() {
        return signal.clone();
    }
    let origin = s[0];
    let mut sum = 0.0;
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut out = Vec::with_capacity(s.len());
    for t in 0..s.len() {
        sum += s[t] - origin;
        if t >= w {
            sum -= s[t - w] - origin;
        }
        while maxq.back().is_some_and(|&j| s[j] <= s[t]) {
            maxq.pop_back();
        }
        maxq.push_back(t);
        while minq.back().is_some_and(|&j| s[j] >= s[t]) {
            minq.pop_back();
        }
        minq.push_back(t);
        let start = (t + 1).saturating_sub(w);
        while maxq.front().is_some_and(|&j| j < start) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&j| j < start) {
            minq.pop_front();
        }
        let width = (t - start + 1) as f64;
        let mean = origin + sum / width;
        out.push(mean.clamp(s[minq[0]], s[maxq[0]]));
    }
    Signal::new(out, signal.sampling_rate_hz)
}

/// Smallest-denominator fraction `up / down` with both terms at most 1000
/// that matches `ratio` within 1e-9 relative.
pub fn rational_ratio(ratio: f64) -> Result<(usize, usize), PreprocessError> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(PreprocessError::IrrationalRatio(ratio));
    }
    for down in 1..=1000usize {
        let up = (ratio * down as f64).round();
        if (1.0..=1000.0).contains(&up) && ((up / down as f64) - ratio).abs() <= 1e-9 * ratio {
            return Ok((up as usize, down));
        }
    }
    Err(PreprocessError::IrrationalRatio(ratio))
}

/// Kaiser shape parameter of the anti-aliasing window.
pub const KAISER_BETA: f64 = 5.0;
/// Taps per unit of `max(up, down)`.
pub const TAPS_PER_FACTOR: usize = 32;
/// Cutoff as a fraction of the tighter of the two Nyquist limits.
pub const CUTOFF_MARGIN: f64 = 0.9;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc low-pass for rational resampling by `up / down`,
/// scaled to a passband gain of `up`. Always odd length.
pub fn design_lowpass(up: usize, down: usize) -> Vec<f64> {
    let factor = up.max(down);
    let len = TAPS_PER_FACTOR * factor + 1;
    let centre = (len - 1) as f64 / 2.0;
    // Cutoff in cycles per (upsampled) sample.
    let fc = CUTOFF_MARGIN * 0.5 / factor as f64;
    let norm = bessel_i0(KAISER_BETA);
    (0..len)
        .map(|n| {
            let t = n as f64 - centre;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let r = t / centre;
            let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
            up as f64 * sinc * window
        })
        .collect()
}

/// Length of the anti-aliasing filter used for a given rate change.
pub fn filter_len(from_hz: f64, to_hz: f64) -> Result<usize, PreprocessError> {
    let (up, down) = rational_ratio(to_hz / from_hz)?;
    Ok(if up == 1 && down == 1 {
        1
    } else {
        TAPS_PER_FACTOR * up.max(down) + 1
    })
}

/// Polyphase rational resampler: zero-stuff by `up`, low-pass, keep every
/// `down`-th sample. The input is extended by repeating its end samples.
/// The filter's group delay is removed so output sample `m` sits at time
/// `m / target_hz` like input sample `m * down / up`.
pub fn resample(signal: &Signal, target_hz: f64) -> Result<Signal, PreprocessError> {
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(PreprocessError::InvalidConfig(format!(
            "target rate must be positive, got {target_hz}"
        )));
    }
    let (up, down) = rational_ratio(target_hz / signal.sampling_rate_hz)?;
    if up == 1 && down == 1 {
        return Ok(Signal::new(signal.samples.clone(), target_hz));
    }
    let h = design_lowpass(up, down);
    let delay = (h.len() - 1) / 2;
    let x = &signal.samples;
    let n_in = x.len();
    let n_out = (n_in * up).div_ceil(down);
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out {
        // Position in the upsampled stream, shifted by the group delay.
        let pos = m * down + delay;
        // Taps k with (pos - k) divisible by `up` hit input samples. Beyond
        // either end the edge sample is repeated, so the output does not
        // ramp in from zero.
        let mut k = pos % up;
        let mut acc = 0.0;
        while k < h.len() {
            let idx = (pos as isize - k as isize).div_euclid(up as isize);
            acc += h[k] * x[idx.clamp(0, n_in as isize - 1) as usize];
            k += up;
        }
        out.push(acc);
    }
    Ok(Signal::new(out, target_hz))
}

/// Keeps at most the first hour of samples.
pub fn clip_first_hour(signal: &Signal) -> Signal {
    clip_duration(signal, 3600.0)
}

pub fn clip_duration(signal: &Signal, seconds: f64) -> Signal {
    let keep = (seconds * signal.sampling_rate_hz).floor() as usize;
    if signal.len() <= keep {
        return signal.clone();
    }
    Signal::new(
        signal.samples[..keep.max(1)].to_vec(),
        signal.sampling_rate_hz,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Smoothing window in samples at `target_hz`. Records at other rates use
    /// the window of equal duration in their own samples.
    pub window: usize,
    pub target_hz: f64,
    pub first_hour_only: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            window: 300,
            target_hz: 1.0,
            first_hour_only: true,
        }
    }
}

impl PreprocessConfig {
    /// Window covering one full hour at the target rate.
    pub fn one_hour_window(target_hz: f64) -> usize {
        (3600.0 * target_hz).round().max(1.0) as usize
    }

    pub fn native_window(&self, native_hz: f64) -> usize {
        ((self.window as f64) * native_hz / self.target_hz)
            .round()
            .max(1.0) as usize
    }
}

/// Truncate, fill, smooth, resample, then (optionally) clip to one hour.
pub fn preprocess_pipeline(
    record: &RawRecord,
    cfg: &PreprocessConfig,
) -> Result<Signal, PreprocessError> {
    if cfg.window == 0 {
        return Err(PreprocessError::InvalidConfig(
            "smoothing window must be at least 1".into(),
        ));
    }
    let trimmed = truncate_tails(record)?;
    let filled = forward_fill(&trimmed)?;
    let signal = Signal::from_record(&filled).expect("forward fill leaves no gaps");
    let smoothed = moving_average(
        &signal,
        SmoothingConfig {
            window_len: cfg.native_window(signal.sampling_rate_hz),
        },
    );
    let resampled = resample(&smoothed, cfg.target_hz)?;
    Ok(if cfg.first_hour_only {
        clip_first_hour(&resampled)
    } else {
        resampled
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(samples: &[Option<f64>]) -> RawRecord {
        RawRecord::new("p", samples.to_vec(), 1.0)
    }

    #[test]
    fn truncation() {
        let r =
            truncate_tails(&rec(&[Some(0.0), Some(0.0), Some(80.0), Some(82.0), None])).unwrap();
        assert_eq!(r.samples, vec![Some(80.0), Some(82.0)]);
        assert_eq!(r.start_offset_s, 2.0);
        let r = truncate_tails(&rec(&[Some(80.0), Some(0.0), Some(82.0)])).unwrap();
        assert_eq!(r.samples, vec![Some(80.0), Some(0.0), Some(82.0)]);
        assert_eq!(
            truncate_tails(&rec(&[Some(0.0), None, Some(0.0)])),
            Err(PreprocessError::AllInvalid)
        );
    }

    #[test]
    fn filling() {
        let r = forward_fill(&rec(&[Some(80.0), None, None, Some(84.0)])).unwrap();
        assert_eq!(
            r.samples,
            vec![Some(80.0), Some(80.0), Some(80.0), Some(84.0)]
        );
        let clean = rec(&[Some(1.0), Some(2.0)]);
        assert_eq!(forward_fill(&clean).unwrap(), clean);
        assert_eq!(
            forward_fill(&rec(&[None, Some(80.0)])),
            Err(PreprocessError::LeadingMissing)
        );
    }

    #[test]
    fn moving_average_hand_values() {
        let s = Signal::new(vec![1.0, 2.0, 3.0, 4.0], 1.0);
        let out = moving_average(&s, SmoothingConfig { window_len: 2 });
        assert_eq!(out.samples, vec![1.0, 1.5, 2.5, 3.5]);
        let c = Signal::new(vec![0.1; 50], 1.0);
        assert_eq!(
            moving_average(&c, SmoothingConfig { window_len: 7 }).samples,
            vec![0.1; 50]
        );
    }

    #[test]
    fn rational_ratios() {
        assert_eq!(rational_ratio(1.0).unwrap(), (1, 1));
        assert_eq!(rational_ratio(2.0).unwrap(), (2, 1));
        assert_eq!(rational_ratio(1.0 / 0.17).unwrap(), (100, 17));
        assert_eq!(rational_ratio(0.5).unwrap(), (1, 2));
        assert!(matches!(
            rational_ratio(std::f64::consts::PI),
            Err(PreprocessError::IrrationalRatio(_))
        ));
    }

    #[test]
    fn same_rate_is_identity() {
        let s = Signal::new(vec![80.0, 81.5, 79.0], 0.5);
        assert_eq!(resample(&s, 0.5).unwrap(), s);
    }

    #[test]
    fn output_length_formula() {
        let s = Signal::new(vec![80.0; 9021], 1.0 / 6.0);
        assert_eq!(resample(&s, 1.0).unwrap().len(), 54126);
        let s = Signal::new(vec![80.0; 612], 0.17);
        assert_eq!(resample(&s, 1.0).unwrap().len(), 3600);
        let s = Signal::new(vec![80.0; 101], 1.0);
        assert_eq!(resample(&s, 0.5).unwrap().len(), 51);
    }

    #[test]
    fn filter_has_unit_dc_gain_per_phase() {
        let (up, down) = (100, 17);
        let h = design_lowpass(up, down);
        for phase in 0..up {
            let g: f64 = h.iter().skip(phase).step_by(up).sum();
            assert!((g - 1.0).abs() < 5e-3, "phase {phase} gain {g}");
        }
    }

    #[test]
    fn clipping() {
        let long = Signal::new(vec![1.0; 7200], 1.0);
        let clipped = clip_first_hour(&long);
        assert_eq!(clipped.len(), 3600);
        assert!((clipped.len() - 1) as f64 / clipped.sampling_rate_hz <= 3600.0);
        let short = Signal::new(vec![1.0; 1800], 1.0);
        assert_eq!(clip_first_hour(&short), short);
    }

    #[test]
    fn pipeline_is_identity_on_clean_input() {
        let samples: Vec<f64> = (0..3600).map(|i| 80.0 + (i % 7) as f64).collect();
        let r = RawRecord::new("p", samples.iter().map(|&v| Some(v)).collect(), 1.0);
        let cfg = PreprocessConfig {
            window: 1,
            target_hz: 1.0,
            first_hour_only: true,
        };
        assert_eq!(preprocess_pipeline(&r, &cfg).unwrap().samples, samples);
    }

    #[test]
    fn pipeline_fills_interior_gaps() {
        let mut samples: Vec<Option<f64>> = (0..600).map(|i| Some(70.0 + (i % 5) as f64)).collect();
        for s in &mut samples[100..140] {
            *s = None;
        }
        let r = RawRecord::new("p", samples, 0.5);
        let out = preprocess_pipeline(&r, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.sampling_rate_hz, 1.0);
        assert!(out.samples.iter().all(|v| v.is_finite()));
        assert_eq!(out.len(), 1200);
    }

    #[test]
    fn resampled_constant_has_flat_edges() {
        for from in [0.17, 0.5, 2.0] {
            let y = resample(&Signal::new(vec![80.0; 400], from), 1.0).unwrap();
            for v in &y.samples {
                assert!((v - 80.0).abs() < 0.05, "{from} Hz: {v}");
            }
        }
    }

    fn naive_window_mean(s: &[f64], t: usize, w: usize) -> f64 {
        let start = (t + 1).saturating_sub(w);
        let window = &s[start..=t];
        window.iter().sum::<f64>() / window.len() as f64
    }

    proptest! {
        #[test]
        fn moving_average_matches_naive(
            s in prop::collection::vec(40.0..200.0f64, 1..300),
            w in 1usize..80,
        ) {
            let out = moving_average(&Signal::new(s.clone(), 1.0), SmoothingConfig { window_len: w });
            prop_assert_eq!(out.len(), s.len());
            for t in 0..s.len() {
                let expected = naive_window_mean(&s, t, w);
                prop_assert!((out.samples[t] - expected).abs() <= 1e-9 * expected.abs());
                let start = (t + 1).saturating_sub(w);
                let lo = s[start..=t].iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = s[start..=t].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= out.samples[t] && out.samples[t] <= hi);
            }
        }

        #[test]
        fn moving_average_window_one_is_identity(s in prop::collection::vec(-1e3..1e3f64, 1..100)) {
            let sig = Signal::new(s, 2.0);
            prop_assert_eq!(moving_average(&sig, SmoothingConfig { window_len: 1 }), sig);
        }

        #[test]
        fn band_limited_sines_survive_resampling(
            rel_freq in 0.01..0.4f64,
            phase in 0.0..std::f64::consts::TAU,
            case in 0usize..4,
        ) {
            let (from, to): (f64, f64) = [(0.5, 1.0), (1.0, 0.5), (0.17, 1.0), (1.0 / 6.0, 1.0)][case];
            let freq = rel_freq * from.min(to);
            let n = 2000;
            let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * freq * i as f64 / from + phase).sin()).collect();
            let y = resample(&Signal::new(x, from), to).unwrap();
            let trim = filter_len(from, to).unwrap() / 2;
            let (up, down) = rational_ratio(to / from).unwrap();
            // Output samples whose filter support lies fully inside the input.
            let last = (n * up).saturating_sub(trim) / down;
            for m in trim..last.min(y.len()) {
                let expected = (2.0 * PI * freq * m as f64 / to + phase).sin();
                prop_assert!((y.samples[m] - expected).abs() <= 0.05, "m={} got {} want {}", m, y.samples[m], expected);
            }
        }
    }
}
