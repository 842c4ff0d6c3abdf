//! Facial ROI intensity traces, pulse extraction and spectral analysis.
//!
//! Live traces carry a small pulse sinusoid; periodic ambient light adds a
//! second sinusoid to every channel regardless of liveness. A detector that
//! looks for spectral periodicity in the heart-rate band therefore sees a
//! convincing "pulse" in a mask recording under periodic light — the
//! failure mode this simulator reproduces.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math;

/// Heart-rate-like band of the periodic ambient light, Hz.
pub const PERIODIC_LIGHT_BAND: (f64, f64) = (0.7, 4.0);
/// Allowed ambient intensity range, lux.
pub const LUX_RANGE: (f64, f64) = (400.0, 1600.0);

/// Relative channel response of the sensor (R, G, B).
const CHANNEL_BASE: [f64; 3] = [0.9, 1.0, 0.8];
/// Pulse amplitude per channel; the green channel carries most of the
/// blood-volume signal.
const PULSE_GAIN: [f64; 3] = [0.4, 1.0, 0.6];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LightMode {
    Constant,
    Periodic { frequency_hz: f64 },
}

/// Ambient light configuration of one recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSchedule {
    pub mode: LightMode,
    /// Modulation amplitude relative to the baseline intensity.
    pub amplitude: f64,
    pub base_lux: f64,
}

impl LightSchedule {
    pub fn constant(base_lux: f64) -> LightSchedule {
        LightSchedule {
            mode: LightMode::Constant,
            amplitude: 0.0,
            base_lux,
        }
    }

    pub fn periodic(frequency_hz: f64, amplitude: f64, base_lux: f64) -> LightSchedule {
        LightSchedule {
            mode: LightMode::Periodic { frequency_hz },
            amplitude,
            base_lux,
        }
    }

    pub fn validate(&self) -> Result<(), RppgError> {
        if !(LUX_RANGE.0..=LUX_RANGE.1).contains(&self.base_lux) {
            return Err(RppgError::LuxOutOfRange(self.base_lux));
        }
        if !(self.amplitude >= 0.0) {
            return Err(RppgError::NegativeAmplitude(self.amplitude));
        }
        if let LightMode::Periodic { frequency_hz } = self.mode {
            if !(PERIODIC_LIGHT_BAND.0..=PERIODIC_LIGHT_BAND.1).contains(&frequency_hz) {
                return Err(RppgError::FrequencyOutOfBand(frequency_hz));
            }
        }
        Ok(())
    }

    fn frequency(&self) -> Option<f64> {
        match self.mode {
            LightMode::Constant => None,
            LightMode::Periodic { frequency_hz } => Some(frequency_hz),
        }
    }
}

/// Mean ROI intensity per color channel over time.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiTrace {
    /// R, G, B channel means, one value per frame.
    pub channels: [Vec<f64>; 3],
    pub frame_rate: f64,
    pub is_live: bool,
    /// Ground-truth pulse rate (meaningful for live traces).
    pub pulse_rate_hz: f64,
}

impl RoiTrace {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RppgError {
    #[error("base lux {0} outside [400, 1600]")]
    LuxOutOfRange(f64),
    #[error("periodic light frequency {0} Hz outside [0.7, 4.0]")]
    FrequencyOutOfBand(f64),
    #[error("light amplitude {0} must be non-negative")]
    NegativeAmplitude(f64),
    #[error("duration {0} s too short; at least 2 s of signal required")]
    DurationTooShort(f64),
    #[error("frame rate {frame_rate} Hz below the Nyquist requirement {required} Hz")]
    NyquistViolation { required: f64, frame_rate: f64 },
    #[error("signal of length {0} too short for spectral analysis")]
    SignalTooShort(usize),
    #[error("frequency band is empty or outside the spectrum")]
    EmptyBand,
}

/// Synthesise one ROI trace: baseline + optional pulse + optional periodic
/// light + white noise, all per channel. Deterministic given the rng.
pub fn synth_trace<R: Rng + ?Sized>(
    is_live: bool,
    pulse_rate_hz: f64,
    schedule: &LightSchedule,
    duration_s: f64,
    frame_rate: f64,
    noise_level: f64,
    rng: &mut R,
) -> Result<RoiTrace, RppgError> {
    schedule.validate()?;
    if duration_s < 2.0 {
        return Err(RppgError::DurationTooShort(duration_s));
    }
    let mut required = if is_live { 2.0 * pulse_rate_hz } else { 0.0 };
    if let Some(f) = schedule.frequency() {
        required = required.max(2.0 * f);
    }
    if frame_rate < required {
        return Err(RppgError::NyquistViolation {
            required,
            frame_rate,
        });
    }
    let samples = math::floor(duration_s * frame_rate + 0.5) as usize;
    let phase_pulse: f64 = rng.random_range(0.0..2.0 * math::PI);
    let phase_light: f64 = rng.random_range(0.0..2.0 * math::PI);
    let mut channels = [
        Vec::with_capacity(samples),
        Vec::with_capacity(samples),
        Vec::with_capacity(samples),
    ];
    for t in 0..samples {
        let time = t as f64 / frame_rate;
        let pulse = if is_live {
            math::sin(2.0 * math::PI * pulse_rate_hz * time + phase_pulse)
        } else {
            0.0
        };
        let light = match schedule.frequency() {
            Some(f) => math::sin(2.0 * math::PI * f * time + phase_light),
            None => 0.0,
        };
        for (c, channel) in channels.iter_mut().enumerate() {
            let baseline = schedule.base_lux * CHANNEL_BASE[c];
            let noise: f64 = StandardNormal.sample(rng);
            let value = baseline
                + PULSE_GAIN[c] * pulse
                + schedule.amplitude * baseline * light
                + noise_level * noise;
            channel.push(value.max(0.0));
        }
    }
    Ok(RoiTrace {
        channels,
        frame_rate,
        is_live,
        pulse_rate_hz,
    })
}

/// Channel-averaged signal, detrended by subtracting a centred one-second
/// moving average (shrinking at the edges).
pub fn extract_rppg(trace: &RoiTrace) -> Vec<f64> {
    let len = trace.len();
    let mut mean_signal = Vec::with_capacity(len);
    for t in 0..len {
        let sum: f64 = trace.channels.iter().map(|c| c[t]).sum();
        mean_signal.push(sum / 3.0);
    }
    let mut window = math::floor(trace.frame_rate + 0.5) as usize;
    if window == 0 {
        window = 1;
    }
    if window % 2 == 0 {
        window += 1;
    }
    let half = window / 2;
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(len - 1);
        let local: f64 =
            mean_signal[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        out.push(mean_signal[t] - local);
    }
    out
}

/// One-sided periodogram of the mean-removed, Hann-windowed signal.
///
/// Powers are normalised by the window energy so that their sum equals
/// `||w (x - mean)||^2 / ||w||^2`. Frequency resolution is
/// `frame_rate / len`.
pub fn psd(signal: &[f64], frame_rate: f64) -> Result<(Vec<f64>, Vec<f64>), RppgError> {
    let len = signal.len();
    if len < 4 {
        return Err(RppgError::SignalTooShort(len));
    }
    let mean = math::mean(signal);
    let mut windowed = Vec::with_capacity(len);
    let mut window_energy = 0.0;
    for (t, &x) in signal.iter().enumerate() {
        // Periodic Hann window: bin-aligned sinusoids spread over exactly
        // three bins.
        let w = 0.5 * (1.0 - math::cos(2.0 * math::PI * t as f64 / len as f64));
        window_energy += w * w;
        windowed.push(w * (x - mean));
    }
    let bins = len / 2 + 1;
    let mut freqs = Vec::with_capacity(bins);
    let mut power = Vec::with_capacity(bins);
    let norm = 1.0 / (len as f64 * window_energy);
    for k in 0..bins {
        let mut re = 0.0;
        let mut im = 0.0;
        let step = -2.0 * math::PI * k as f64 / len as f64;
        for (t, &y) in windowed.iter().enumerate() {
            let angle = step * t as f64;
            re += y * math::cos(angle);
            im += y * math::sin(angle);
        }
        let mag2 = re * re + im * im;
        // Double the interior bins so the one-sided sum keeps the total.
        let fold = if k == 0 || (len % 2 == 0 && k == len / 2) {
            1.0
        } else {
            2.0
        };
        freqs.push(k as f64 * frame_rate / len as f64);
        power.push(fold * mag2 * norm);
    }
    Ok((freqs, power))
}

/// Peak frequency and peak-to-median power ratio within a band.
pub fn periodicity_score(
    freqs: &[f64],
    power: &[f64],
    band: (f64, f64),
) -> Result<(f64, f64), RppgError> {
    debug_assert_eq!(freqs.len(), power.len());
    if band.0 > band.1 {
        return Err(RppgError::EmptyBand);
    }
    let in_band: Vec<usize> = (0..freqs.len())
        .filter(|&i| freqs[i] >= band.0 && freqs[i] <= band.1)
        .collect();
    if in_band.is_empty() {
        return Err(RppgError::EmptyBand);
    }
    let mut peak_index = in_band[0];
    for &i in &in_band {
        if power[i] > power[peak_index] {
            peak_index = i;
        }
    }
    let band_powers: Vec<f64> = in_band.iter().map(|&i| power[i]).collect();
    let med = math::median(&band_powers);
    let peak = power[peak_index];
    let score = if peak == 0.0 {
        0.0
    } else if med == 0.0 {
        f64::INFINITY
    } else {
        peak / med
    };
    Ok((freqs[peak_index], score))
}

/// Convenience: extract, analyse and score one trace over the standard
/// heart-rate band.
pub fn trace_periodicity(trace: &RoiTrace) -> Result<(f64, f64), RppgError> {
    let signal = extract_rppg(trace);
    let (freqs, power) = psd(&signal, trace.frame_rate)?;
    periodicity_score(&freqs, &power, PERIODIC_LIGHT_BAND)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn noiseless_live(pulse: f64) -> RoiTrace {
        synth_trace(
            true,
            pulse,
            &LightSchedule::constant(800.0),
            10.0,
            30.0,
            0.0,
            &mut rng(1),
        )
        .unwrap()
    }

    #[test]
    fn trace_shape_and_determinism() {
        let a = synth_trace(
            true,
            1.2,
            &LightSchedule::constant(800.0),
            10.0,
            30.0,
            0.5,
            &mut rng(7),
        )
        .unwrap();
        assert_eq!(a.len(), 300);
        assert!(a.channels.iter().all(|c| c.iter().all(|&v| v >= 0.0)));
        let b = synth_trace(
            true,
            1.2,
            &LightSchedule::constant(800.0),
            10.0,
            30.0,
            0.5,
            &mut rng(7),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            LightSchedule::constant(100.0).validate(),
            Err(RppgError::LuxOutOfRange(_))
        ));
        assert!(matches!(
            LightSchedule::periodic(5.0, 0.05, 800.0).validate(),
            Err(RppgError::FrequencyOutOfBand(_))
        ));
        assert!(matches!(
            synth_trace(
                true,
                1.2,
                &LightSchedule::constant(800.0),
                1.0,
                30.0,
                0.0,
                &mut rng(1)
            ),
            Err(RppgError::DurationTooShort(_))
        ));
        assert!(matches!(
            synth_trace(
                true,
                2.0,
                &LightSchedule::constant(800.0),
                10.0,
                3.0,
                0.0,
                &mut rng(1)
            ),
            Err(RppgError::NyquistViolation { .. })
        ));
    }

    #[test]
    fn constant_trace_detrends_to_zero() {
        let trace = synth_trace(
            false,
            0.0,
            &LightSchedule::constant(800.0),
            5.0,
            20.0,
            0.0,
            &mut rng(3),
        )
        .unwrap();
        let signal = extract_rppg(&trace);
        assert!(signal.iter().all(|&v| math::fabs(v) < 1e-9));
    }

    #[test]
    fn extraction_of_identical_channels_matches_single_channel() {
        let base = noiseless_live(1.2);
        let mut identical = base.clone();
        identical.channels[0] = base.channels[1].clone();
        identical.channels[2] = base.channels[1].clone();
        let merged = extract_rppg(&identical);
        let single = RoiTrace {
            channels: [
                base.channels[1].clone(),
                base.channels[1].clone(),
                base.channels[1].clone(),
            ],
            ..identical.clone()
        };
        let single = extract_rppg(&single);
        for (a, b) in merged.iter().zip(&single) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sinusoid_survives_detrending() {
        // Pure 1.2 Hz component must keep at least 90% of its energy.
        let trace = noiseless_live(1.2);
        let raw: Vec<f64> = (0..trace.len())
            .map(|t| {
                let v: f64 = trace.channels.iter().map(|c| c[t]).sum::<f64>() / 3.0;
                v
            })
            .collect();
        let raw_mean = math::mean(&raw);
        let raw_energy: f64 = raw.iter().map(|&v| (v - raw_mean) * (v - raw_mean)).sum();
        let detrended = extract_rppg(&trace);
        let (freqs, power) = psd(&detrended, trace.frame_rate).unwrap();
        let peak_bin = (1.2 * trace.len() as f64 / trace.frame_rate).round() as usize;
        let near: f64 = power[peak_bin.saturating_sub(1)..=(peak_bin + 1).min(freqs.len() - 1)]
            .iter()
            .sum();
        let total: f64 = power.iter().sum();
        assert!(near / total > 0.9);
        assert!(raw_energy > 0.0);
    }

    #[test]
    fn psd_parseval_and_zero_signal() {
        let trace = synth_trace(
            true,
            1.3,
            &LightSchedule::periodic(2.5, 0.05, 800.0),
            6.0,
            25.0,
            0.7,
            &mut rng(11),
        )
        .unwrap();
        let signal = extract_rppg(&trace);
        let (_, power) = psd(&signal, trace.frame_rate).unwrap();
        let mean = math::mean(&signal);
        let len = signal.len();
        let mut windowed_energy = 0.0;
        let mut window_energy = 0.0;
        for (t, &x) in signal.iter().enumerate() {
            let w = 0.5 * (1.0 - math::cos(2.0 * math::PI * t as f64 / len as f64));
            windowed_energy += (w * (x - mean)) * (w * (x - mean));
            window_energy += w * w;
        }
        let expected = windowed_energy / window_energy;
        let total: f64 = power.iter().sum();
        assert_relative_eq!(total, expected, max_relative = 1e-9);

        let zeros = vec![0.0; 64];
        let (_, power) = psd(&zeros, 16.0).unwrap();
        assert!(power.iter().all(|&p| p == 0.0));

        assert!(matches!(psd(&[1.0, 2.0], 4.0), Err(RppgError::SignalTooShort(2))));
    }

    #[test]
    fn bin_aligned_sinusoid_concentrates() {
        // 2.0 Hz at 32 Hz over 8 s: exactly bin 16 of 256 samples.
        let fs = 32.0;
        let len = 256;
        let signal: Vec<f64> = (0..len)
            .map(|t| math::sin(2.0 * math::PI * 2.0 * t as f64 / fs))
            .collect();
        let (freqs, power) = psd(&signal, fs).unwrap();
        let peak = math::argsort_desc(&power)[0];
        assert_relative_eq!(freqs[peak], 2.0, max_relative = 1e-12);
        let near: f64 = power[peak - 1..=peak + 1].iter().sum();
        let total: f64 = power.iter().sum();
        assert!(near / total > 0.99);
    }

    #[test]
    fn periodicity_score_band_handling() {
        let fs = 30.0;
        let signal: Vec<f64> = (0..300)
            .map(|t| math::sin(2.0 * math::PI * 1.2 * t as f64 / fs))
            .collect();
        let (freqs, power) = psd(&signal, fs).unwrap();
        let (peak, score) = periodicity_score(&freqs, &power, (0.7, 4.0)).unwrap();
        assert_relative_eq!(peak, 1.2, max_relative = 1e-12);
        assert!(score > 100.0);

        assert!(matches!(
            periodicity_score(&freqs, &power, (50.0, 60.0)),
            Err(RppgError::EmptyBand)
        ));
        assert!(matches!(
            periodicity_score(&freqs, &power, (4.0, 0.7)),
            Err(RppgError::EmptyBand)
        ));
    }

    #[test]
    fn mask_under_periodic_light_shows_pseudo_pulse() {
        let schedule = LightSchedule::periodic(2.0, 0.02, 800.0);
        let trace = synth_trace(false, 0.0, &schedule, 10.0, 30.0, 0.3, &mut rng(5)).unwrap();
        let (peak, score) = trace_periodicity(&trace).unwrap();
        assert_relative_eq!(peak, 2.0, max_relative = 1e-9);
        assert!(score > 10.0);

        let quiet = synth_trace(
            false,
            0.0,
            &LightSchedule::constant(800.0),
            10.0,
            30.0,
            0.3,
            &mut rng(5),
        )
        .unwrap();
        let (_, quiet_score) = trace_periodicity(&quiet).unwrap();
        assert!(quiet_score < score);
    }
}
