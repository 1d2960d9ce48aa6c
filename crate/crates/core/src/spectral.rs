//! Log-Mel filterbank (FBANK) extraction.
//!
//! Pipeline: pre-emphasis over the whole waveform, framing, windowing,
//! power spectrum of each frame, triangular Mel filters, natural log with a
//! floor. The DFT is computed at the exact frame length (no zero padding), so
//! `power_spectrum` has `L/2 + 1` bins for a frame of `L` samples.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::feat::{FeatureMatrix, StreamSource};

/// Mono audio, samples as plain amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/L)`.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub n_mels: usize,
    pub pre_emphasis: f64,
    pub sample_rate: u32,
    pub log_floor: f64,
    pub window: Window,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            n_mels: 80,
            pre_emphasis: 0.97,
            sample_rate: 16_000,
            log_floor: 1e-10,
            window: Window::Hann,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_shift_ms > 0.0 && self.frame_length_ms >= self.frame_shift_ms) {
            return Err(Error::Config(format!(
                "need frame_length_ms >= frame_shift_ms > 0, got {} / {}",
                self.frame_length_ms, self.frame_shift_ms
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::Config(format!(
                "pre-emphasis must be in [0, 1), got {}",
                self.pre_emphasis
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log floor must be positive".into()));
        }
        if self.frame_length() == 0 || self.frame_shift() == 0 {
            return Err(Error::Config(
                "frame length and shift must span at least one sample".into(),
            ));
        }
        Ok(())
    }

    /// Frame length in samples.
    pub fn frame_length(&self) -> usize {
        (self.sample_rate as f64 * self.frame_length_ms / 1000.0).round() as usize
    }

    /// Frame shift in samples.
    pub fn frame_shift(&self) -> usize {
        (self.sample_rate as f64 * self.frame_shift_ms / 1000.0).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.frame_length() / 2 + 1
    }
}

/// `y[0] = x[0]`, `y[t] = x[t] - coeff * x[t-1]`.
pub fn pre_emphasize(w: &Waveform, coeff: f64) -> Result<Waveform> {
    if !(0.0..=1.0).contains(&coeff) {
        return Err(Error::InvalidArgument(format!(
            "pre-emphasis coefficient {coeff} outside [0, 1]"
        )));
    }
    let x = &w.samples;
    let mut y = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        y.push(first);
    }
    y.extend(x.windows(2).map(|p| p[1] - coeff * p[0]));
    Waveform::new(y, w.sample_rate)
}

/// Number of full frames: `floor((n - len) / shift) + 1`, or 0 when `n < len`.
pub fn frame_count(n: usize, len: usize, shift: usize) -> usize {
    if n < len || shift == 0 {
        0
    } else {
        (n - len) / shift + 1
    }
}

/// Contiguous frames starting at multiples of the shift. Trailing samples
/// that do not fill a frame are dropped.
pub fn frame_signal<'a>(w: &'a Waveform, cfg: &SpectralConfig) -> Result<Vec<&'a [f64]>> {
    cfg.validate()?;
    let (len, shift) = (cfg.frame_length(), cfg.frame_shift());
    let n = frame_count(w.len(), len, shift);
    Ok((0..n).map(|t| &w.samples[t * shift..t * shift + len]).collect())
}

/// Windowed power spectrum with a cached FFT plan for one frame length.
pub struct PowerSpectrum {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl PowerSpectrum {
    pub fn new(frame_len: usize, window: Window) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(frame_len);
        Self {
            fft,
            window: window.coefficients(frame_len),
        }
    }

    pub fn frame_len(&self) -> usize {
        self.window.len()
    }

    /// `|DFT_k(w ⊙ frame)|²` for `k = 0..=L/2`.
    pub fn compute(&self, frame: &[f64]) -> Vec<f64> {
        assert_eq!(frame.len(), self.window.len(), "frame length mismatch");
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf[..frame.len() / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }
}

/// One-shot power spectrum. Prefer [`PowerSpectrum`] when processing many
/// frames of the same length.
pub fn power_spectrum(frame: &[f64], window: Window) -> Vec<f64> {
    assert!(!frame.is_empty(), "empty frame");
    PowerSpectrum::new(frame.len(), window).compute(frame)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `n_mels + 2` band edges, equally spaced on
/// the Mel scale from 0 Hz to Nyquist.
pub fn mel_band_edges(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// `n_mels × (L/2 + 1)` triangular filterbank.
///
/// Triangles are evaluated in Hz at each FFT bin's frequency and each row is
/// then scaled so its largest tap is exactly 1.
pub fn mel_matrix(cfg: &SpectralConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let len = cfg.frame_length();
    let n_bins = cfg.n_bins();
    let edges = mel_band_edges(cfg.n_mels, cfg.sample_rate);
    let bin_hz = cfg.sample_rate as f64 / len as f64;

    let mut fb = Array2::<f64>::zeros((cfg.n_mels, n_bins));
    for (m, mut row) in fb.rows_mut().into_iter().enumerate() {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for (k, v) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rising = (f - lo) / (center - lo);
            let falling = (hi - f) / (hi - center);
            *v = rising.min(falling).max(0.0);
        }
        let peak = row.fold(0.0f64, |a, &b| a.max(b));
        if peak <= 0.0 {
            return Err(Error::Config(format!(
                "Mel filter {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; \
                 n_mels={} is too large for a {len}-point DFT",
                cfg.n_mels
            )));
        }
        row.mapv_inplace(|v| v / peak);
    }
    Ok(fb)
}

/// Full FBANK extraction, `T_SF × n_mels`.
pub fn extract_fbank(w: &Waveform, cfg: &SpectralConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::Config(format!(
            "waveform is {} Hz but config expects {} Hz",
            w.sample_rate(),
            cfg.sample_rate
        )));
    }
    let emphasized = pre_emphasize(w, cfg.pre_emphasis)?;
    let frames = frame_signal(&emphasized, cfg)?;
    let fb = mel_matrix(cfg)?;
    let spec = PowerSpectrum::new(cfg.frame_length(), cfg.window);

    let mut out = Array2::<f64>::zeros((frames.len(), cfg.n_mels));
    for (frame, mut row) in frames.iter().zip(out.rows_mut()) {
        let power = spec.compute(frame);
        let power = ArrayView1::from(&power);
        for (dst, filt) in row.iter_mut().zip(fb.rows()) {
            *dst = filt.dot(&power).max(cfg.log_floor).ln();
        }
    }
    FeatureMatrix::new(out, cfg.frame_shift_ms as f32, StreamSource::Sf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    /// Direct O(L²) DFT used as the reference.
    fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let mut re = 0.0;
                let mut im = 0.0;
                for (t, v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re, im)
            })
            .collect()
    }

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 16_000).unwrap()
    }

    #[test]
    fn pre_emphasis_examples() {
        let w = wave(vec![0.3, -1.0, 2.0]);
        assert_eq!(pre_emphasize(&w, 0.0).unwrap(), w);

        let ones = wave(vec![1.0; 4]);
        assert_eq!(pre_emphasize(&ones, 1.0).unwrap().samples(), &[1.0, 0.0, 0.0, 0.0]);

        let y = pre_emphasize(&wave(vec![1.0, 2.0, 3.0]), 0.97).unwrap();
        let expected = [1.0, 2.0 - 0.97, 3.0 - 0.97 * 2.0];
        for (a, b) in y.samples().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((y.samples()[1] - 1.03).abs() < 1e-12);
        assert!((y.samples()[2] - 1.06).abs() < 1e-12);
    }

    #[test]
    fn non_finite_samples_rejected() {
        assert!(matches!(
            Waveform::new(vec![0.0, f64::NAN], 16_000),
            Err(Error::InvalidInput(_))
        ));
        assert!(Waveform::new(vec![f64::INFINITY], 16_000).is_err());
        assert!(Waveform::new(vec![], 0).is_err());
    }

    #[test]
    fn framing_examples() {
        let cfg = SpectralConfig::default();
        assert_eq!((cfg.frame_length(), cfg.frame_shift()), (400, 160));
        let w = wave(vec![0.0; 16_000]);
        assert_eq!(frame_signal(&w, &cfg).unwrap().len(), 98);
        let w = wave(vec![0.0; 400]);
        assert_eq!(frame_signal(&w, &cfg).unwrap().len(), 1);
        let w = wave(vec![0.0; 399]);
        assert_eq!(frame_signal(&w, &cfg).unwrap().len(), 0);
    }

    #[test]
    fn frames_are_contiguous_views() {
        let cfg = SpectralConfig::default();
        let w = wave((0..1000).map(|i| i as f64).collect());
        let frames = frame_signal(&w, &cfg).unwrap();
        for (t, f) in frames.iter().enumerate() {
            assert_eq!(f.len(), 400);
            assert_eq!(f[0], (t * 160) as f64);
            assert_eq!(f[399], (t * 160 + 399) as f64);
        }
    }

    #[test]
    fn dc_frame_has_all_energy_in_bin_zero() {
        let p = power_spectrum(&[0.7; 64], Window::Rectangular);
        assert!((p[0] - (0.7 * 64.0f64).powi(2)).abs() < 1e-9);
        assert!(p[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn sinusoid_on_exact_bin_is_single_peak() {
        let l = 128;
        let k0 = 9;
        let x: Vec<f64> = (0..l)
            .map(|n| (2.0 * PI * k0 as f64 * n as f64 / l as f64).cos())
            .collect();
        let p = power_spectrum(&x, Window::Rectangular);
        let oracle = naive_dft(&x);
        let argmax = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, k0);
        // cos at bin k0 puts (L/2)^2 into bins k0 and L-k0.
        assert!((p[k0] - (l as f64 / 2.0).powi(2)).abs() < 1e-6);
        let (re, im) = oracle[k0];
        assert!((p[k0] - (re * re + im * im)).abs() < 1e-6);
        for (k, v) in p.iter().enumerate() {
            if k != k0 {
                assert!(*v < 1e-9, "bin {k} = {v}");
            }
        }
    }

    #[test]
    fn odd_length_bins() {
        assert_eq!(power_spectrum(&[1.0; 401], Window::Hann).len(), 201);
        assert_eq!(power_spectrum(&[1.0; 1], Window::Hann).len(), 1);
    }

    #[test]
    fn mel_matrix_shape_and_peaks() {
        let cfg = SpectralConfig::default();
        let fb = mel_matrix(&cfg).unwrap();
        assert_eq!(fb.dim(), (80, 201));
        let edges = mel_band_edges(80, 16_000);
        let bin_hz = 16_000.0 / 400.0;
        for (m, row) in fb.rows().into_iter().enumerate() {
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            let (argmax, peak) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            assert_eq!(*peak, 1.0);
            // The peak bin is one of the two bins bracketing the center frequency.
            assert!((argmax as f64 * bin_hz - edges[m + 1]).abs() < bin_hz);
        }
    }

    #[test]
    fn mel_matrix_covers_interior_bins() {
        let cfg = SpectralConfig::default();
        let fb = mel_matrix(&cfg).unwrap();
        let edges = mel_band_edges(80, 16_000);
        let bin_hz = 16_000.0 / 400.0;
        let first = (edges[1] / bin_hz).ceil() as usize;
        let last = (edges[80] / bin_hz).floor() as usize;
        for k in first..=last {
            assert!(fb.column(k).iter().any(|v| *v > 0.0), "bin {k} uncovered");
        }
    }

    #[test]
    fn too_many_mels_is_config_error() {
        let cfg = SpectralConfig {
            n_mels: 200,
            ..Default::default()
        };
        assert!(matches!(mel_matrix(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn one_second_gives_98_by_80() {
        let mut rng = SplitMix64::new(1);
        let w = wave((0..16_000).map(|_| rng.gaussian() * 0.1).collect());
        let f = extract_fbank(&w, &SpectralConfig::default()).unwrap();
        assert_eq!(f.data.dim(), (98, 80));
        assert_eq!(f.frame_shift_ms, 10.0);
        assert_eq!(f.source, StreamSource::Sf);
    }

    #[test]
    fn silence_hits_the_floor() {
        let cfg = SpectralConfig::default();
        let f = extract_fbank(&wave(vec![0.0; 4000]), &cfg).unwrap();
        let floor = cfg.log_floor.ln();
        assert!(f.data.iter().all(|v| *v == floor));
    }

    #[test]
    fn sample_rate_mismatch_is_config_error() {
        let w = Waveform::new(vec![0.0; 800], 8_000).unwrap();
        assert!(matches!(
            extract_fbank(&w, &SpectralConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            SpectralConfig { frame_shift_ms: 0.0, ..Default::default() },
            SpectralConfig { frame_length_ms: 5.0, ..Default::default() },
            SpectralConfig { n_mels: 0, ..Default::default() },
            SpectralConfig { pre_emphasis: 1.0, ..Default::default() },
            SpectralConfig { log_floor: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    proptest! {
        #[test]
        fn frame_count_formula(n in 0usize..5000, len in 1usize..600, shift in 1usize..300) {
            let shift = shift.min(len);
            let expected = if n >= len { (n - len) / shift + 1 } else { 0 };
            prop_assert_eq!(frame_count(n, len, shift), expected);
            // last frame fits, one more would not
            if expected > 0 {
                prop_assert!((expected - 1) * shift + len <= n);
                prop_assert!(expected * shift + len > n);
            }
        }

        #[test]
        fn fbank_is_finite(seed in any::<u64>(), n in 400usize..3000, scale in 0.0f64..1e4) {
            let mut rng = SplitMix64::new(seed);
            let w = wave((0..n).map(|_| rng.gaussian() * scale).collect());
            let f = extract_fbank(&w, &SpectralConfig::default()).unwrap();
            prop_assert!(f.data.iter().all(|v| v.is_finite()));
        }
    }
}
