//! Audio decoding, six-band short-time energies and their rate of rise.

use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DB_FLOOR: f64 = -120.0;
pub const N_BANDS: usize = 6;

/// Mono samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Validation("audio buffer is empty".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        if let Some(i) = samples
            .iter()
            .position(|x| !x.is_finite() || x.abs() > 1.0)
        {
            return Err(Error::Validation(format!(
                "sample {i} = {} outside [-1, 1]",
                samples[i]
            )));
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

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Reads a 16-bit PCM RIFF/WAVE file, averaging channels down to mono.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {:?} with {} bits per sample (need 16-bit PCM)",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = usize::from(spec.channels.max(1));
    let raw = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_wav_error(path, e))?;
    let samples = raw
        .chunks(channels)
        .map(|frame| {
            let sum: f64 = frame.iter().map(|&s| f64::from(s) / 32768.0).sum();
            sum / frame.len() as f64
        })
        .collect();
    AudioBuffer::new(samples, spec.sample_rate)
}

fn map_wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => {
            Error::UnsupportedFormat(format!("{}: non-PCM encoding", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Writes 16-bit mono PCM. Used to build test fixtures and demo inputs.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_wav_error(path, e))?;
    for &x in &audio.samples {
        let s = (x * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(s).map_err(|e| map_wav_error(path, e))?;
    }
    w.finalize().map_err(|e| map_wav_error(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub band_edges: [(f64, f64); N_BANDS],
    pub coarse_smoothing_ms: f64,
    pub fine_smoothing_ms: f64,
    pub difference_span_ms: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window: 512,
            hop: 160,
            band_edges: [
                (0.0, 400.0),
                (800.0, 1500.0),
                (1200.0, 2000.0),
                (2000.0, 3500.0),
                (3500.0, 5000.0),
                (5000.0, 8000.0),
            ],
            coarse_smoothing_ms: 50.0,
            fine_smoothing_ms: 26.0,
            difference_span_ms: 50.0,
        }
    }
}

impl FrontendConfig {
    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / f64::from(self.sample_rate)
    }

    fn ms_to_frames(&self, ms: f64) -> usize {
        ((ms / 1000.0 / self.hop_seconds()).round() as usize).max(1)
    }

    pub fn smoothing_frames(&self, scale: Scale) -> usize {
        match scale {
            Scale::Coarse => self.ms_to_frames(self.coarse_smoothing_ms),
            Scale::Fine => self.ms_to_frames(self.fine_smoothing_ms),
        }
    }

    pub fn span_frames(&self) -> usize {
        self.ms_to_frames(self.difference_span_ms)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.window < 2 || self.hop == 0 {
            return Err(Error::Validation("frontend rate, window and hop must be positive".into()));
        }
        for (i, &(lo, hi)) in self.band_edges.iter().enumerate() {
            if !(lo >= 0.0 && lo < hi) {
                return Err(Error::Validation(format!(
                    "band {} edges ({lo}, {hi}) not strictly increasing",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Per-frame dB energy in each of the six bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnergyTrack {
    /// `frames x 6`, each value `>= DB_FLOOR`.
    pub frames: Array2<f64>,
    pub hop: f64,
    /// Time of the first frame's center in seconds.
    pub offset: f64,
    pub band_edges: [(f64, f64); N_BANDS],
}

impl BandEnergyTrack {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        self.offset + frame as f64 * self.hop
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::from_matrix(self.frames.view())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateOfRiseTrack {
    /// `frames x 6` dB differences.
    pub values: Array2<f64>,
    pub hop: f64,
    pub offset: f64,
    pub scale: Scale,
    /// Smoothing width in frames used to build this track.
    pub smoothing: usize,
}

impl RateOfRiseTrack {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        self.offset + frame as f64 * self.hop
    }
}

pub fn frame_count(n_samples: usize, window: usize, hop: usize) -> usize {
    if n_samples < window {
        0
    } else {
        1 + (n_samples - window) / hop
    }
}

pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Short-time band energies. A band's energy is the one-sided power of its
/// FFT bins scaled so that summing every bin reproduces the windowed frame's
/// time-domain energy.
pub fn band_energies(audio: &AudioBuffer, cfg: &FrontendConfig) -> Result<BandEnergyTrack> {
    cfg.validate()?;
    if audio.sample_rate() != cfg.sample_rate {
        return Err(Error::Precondition(format!(
            "audio sampled at {} Hz, frontend expects {} Hz",
            audio.sample_rate(),
            cfg.sample_rate
        )));
    }
    let n = cfg.window;
    if audio.len() <= n {
        return Err(Error::InsufficientInput(format!(
            "{} samples, need more than one {n}-sample window",
            audio.len()
        )));
    }
    let n_frames = frame_count(audio.len(), n, cfg.hop);
    let window = hann(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let bin_hz = f64::from(cfg.sample_rate) / n as f64;
    let nyquist_bin = n / 2;

    // bin -> bands it belongs to, with the one-sided weight folded in
    let band_bins: Vec<Vec<(usize, f64)>> = cfg
        .band_edges
        .iter()
        .map(|&(lo, hi)| {
            (0..=nyquist_bin)
                .filter(|&k| {
                    let f = k as f64 * bin_hz;
                    f >= lo && (f < hi || (k == nyquist_bin && f <= hi))
                })
                .map(|k| {
                    let w = if k == 0 || (n.is_multiple_of(2) && k == nyquist_bin) { 1.0 } else { 2.0 };
                    (k, w / n as f64)
                })
                .collect()
        })
        .collect();

    let samples = audio.samples();
    let mut frames = Array2::<f64>::zeros((n_frames, N_BANDS));
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for f in 0..n_frames {
        let start = f * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (b, bins) in band_bins.iter().enumerate() {
            let e: f64 = bins.iter().map(|&(k, w)| w * buf[k].norm_sqr()).sum();
            frames[[f, b]] = to_db(e);
        }
    }

    Ok(BandEnergyTrack {
        frames,
        hop: cfg.hop_seconds(),
        offset: n as f64 / 2.0 / f64::from(cfg.sample_rate),
        band_edges: cfg.band_edges,
    })
}

pub fn to_db(energy: f64) -> f64 {
    if energy > 0.0 {
        (10.0 * energy.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Centered moving average with edge replication, then a difference over
/// `span` frames: `ror[t] = S[t + span/2] - S[t - (span - span/2)]`.
pub fn rate_of_rise(
    track: &BandEnergyTrack,
    scale: Scale,
    cfg: &FrontendConfig,
) -> Result<RateOfRiseTrack> {
    let smoothing = cfg.smoothing_frames(scale);
    let span = cfg.span_frames();
    let n = track.n_frames();
    if n < smoothing.max(2) {
        return Err(Error::InsufficientInput(format!(
            "{n} frames, smoothing needs {smoothing}"
        )));
    }
    let ahead = span / 2;
    let behind = span - ahead;
    let mut values = Array2::<f64>::zeros((n, N_BANDS));
    for b in 0..N_BANDS {
        let smoothed = moving_average(&track.frames.column(b).to_vec(), smoothing);
        for t in 0..n {
            let hi = (t + ahead).min(n - 1);
            let lo = t.saturating_sub(behind);
            values[[t, b]] = smoothed[hi] - smoothed[lo];
        }
    }
    Ok(RateOfRiseTrack {
        values,
        hop: track.hop,
        offset: track.offset,
        scale,
        smoothing,
    })
}

fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let lead = ((width - 1) / 2) as isize;
    (0..n)
        .map(|t| {
            let sum: f64 = (0..width as isize)
                .map(|j| x[(t - lead + j).clamp(0, n - 1) as usize])
                .sum();
            sum / width as f64
        })
        .collect()
}
