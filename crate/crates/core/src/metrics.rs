//! Model-quality metrics: average NMSE, block-wise instantaneous NMSE with a
//! worst-case (max) summary, adjacent-channel error power ratio (ACEPR),
//! adjacent-channel power ratio (ACPR), and error spectra.
//!
//! Spectral estimates use an averaged periodogram: Hann window, 50% overlap,
//! 4096-point segments by default, rescaled so the summed PSD bins equal the
//! time-domain mean power (Parseval).
//!
//! ACEPR is defined as the worst adjacent-band error power divided by the
//! in-channel power of the measured signal; ACPR as the worst adjacent-band
//! power of the signal divided by its own in-channel power. Bands default to
//! a channel width equal to the signal bandwidth with adjacent channels
//! immediately flanking.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::IqSignal;

/// Reporting floor for zero-error NMSE values, in dB.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Default instantaneous-NMSE block size in samples.
pub const DEFAULT_BLOCK_SIZE: usize = 4000;

/// Default number of initial blocks excluded from the max-NMSE summary, so
/// the state ramp-up from the zero initial condition is ignored.
pub const DEFAULT_SKIP_BLOCKS: usize = 2;

/// Default periodogram segment length.
pub const DEFAULT_SEGMENT_LEN: usize = 4096;

/// 10 log10( sum |y_meas - y_model|^2 / sum |y_meas|^2 ), floored at
/// [`NMSE_FLOOR_DB`] for zero error.
pub fn nmse_db(y_model: &IqSignal, y_meas: &IqSignal) -> Result<f64> {
    if y_model.len() != y_meas.len() {
        return Err(Error::invalid(format!(
            "length mismatch: model {} vs measurement {}",
            y_model.len(),
            y_meas.len()
        )));
    }
    nmse_db_slices(&y_model.samples, &y_meas.samples)
}

pub(crate) fn nmse_db_slices(y_model: &[Complex64], y_meas: &[Complex64]) -> Result<f64> {
    let ref_power: f64 = y_meas.iter().map(|c| c.norm_sqr()).sum();
    if ref_power == 0.0 {
        return Err(Error::invalid("reference signal has zero power"));
    }
    let err_power: f64 = y_meas
        .iter()
        .zip(y_model)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(ratio_db(err_power / ref_power))
}

fn ratio_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        NMSE_FLOOR_DB
    } else {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    }
}

/// Per-block NMSE profile. Each block's mean squared error is normalized by
/// the mean power of the *entire* measured record, not by per-block power, so
/// quiet segments are not flattered.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockNmseProfile {
    pub block_size: usize,
    pub per_block_nmse_db: Vec<f64>,
    pub skip_initial_blocks: usize,
    pub max_nmse_db: f64,
}

pub fn block_nmse(
    y_model: &IqSignal,
    y_meas: &IqSignal,
    block_size: usize,
    skip_initial: usize,
) -> Result<BlockNmseProfile> {
    if y_model.len() != y_meas.len() {
        return Err(Error::invalid("length mismatch between model and measurement"));
    }
    if block_size < 1 {
        return Err(Error::invalid("block_size must be >= 1"));
    }
    let n_blocks = y_meas.len() / block_size;
    if n_blocks == 0 {
        return Err(Error::invalid(format!(
            "record of {} samples is shorter than one {}-sample block",
            y_meas.len(),
            block_size
        )));
    }
    if skip_initial >= n_blocks {
        return Err(Error::invalid(format!(
            "skip_initial {skip_initial} leaves no blocks out of {n_blocks}"
        )));
    }
    let ref_mean = y_meas.mean_power();
    if ref_mean == 0.0 {
        return Err(Error::invalid("reference signal has zero power"));
    }
    let per_block_nmse_db: Vec<f64> = (0..n_blocks)
        .map(|b| {
            let lo = b * block_size;
            let hi = lo + block_size;
            let mse = y_meas.samples[lo..hi]
                .iter()
                .zip(&y_model.samples[lo..hi])
                .map(|(a, c)| (a - c).norm_sqr())
                .sum::<f64>()
                / block_size as f64;
            ratio_db(mse / ref_mean)
        })
        .collect();
    let max_nmse_db = per_block_nmse_db[skip_initial..]
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BlockNmseProfile {
        block_size,
        per_block_nmse_db,
        skip_initial_blocks: skip_initial,
        max_nmse_db,
    })
}

/// Sampled power spectral density. `psd` holds power per bin; the bins sum to
/// the time-domain mean power of the analyzed record. Frequencies are centered
/// (−fs/2 .. fs/2).
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freq_hz: Vec<f64>,
    pub psd: Vec<f64>,
}

impl Psd {
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum()
    }

    /// Sum of bins whose normalized frequency (cycles/sample) lies in
    /// [lo, hi).
    fn band_power(&self, sample_rate: f64, lo: f64, hi: f64) -> f64 {
        self.freq_hz
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| {
                let fn_ = *f / sample_rate;
                fn_ >= lo && fn_ < hi
            })
            .map(|(_, p)| p)
            .sum()
    }
}

/// Averaged periodogram (Hann window, 50% overlap) rescaled so the bins sum
/// exactly to the record's time-domain mean power.
pub fn welch_psd(samples: &[Complex64], sample_rate: f64, segment_len: usize) -> Result<Psd> {
    if samples.len() < segment_len {
        return Err(Error::invalid(format!(
            "record of {} samples is shorter than one {segment_len}-sample FFT frame",
            samples.len()
        )));
    }
    let n = segment_len;
    let window: Vec<f64> = (0..n)
        .map(|i| {
            0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / (n - 1).max(1) as f64).cos())
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let hop = (n / 2).max(1);
    let mut acc = vec![0.0f64; n];
    let mut start = 0;
    while start + n <= samples.len() {
        let mut buf: Vec<Complex64> = samples[start..start + n]
            .iter()
            .zip(&window)
            .map(|(s, w)| s * *w)
            .collect();
        fft.process(&mut buf);
        for (a, v) in acc.iter_mut().zip(&buf) {
            *a += v.norm_sqr();
        }
        start += hop;
    }
    // Rescale so the bins sum to the record's mean power (Parseval).
    let mean_power =
        samples.iter().map(|c| c.norm_sqr()).sum::<f64>() / samples.len() as f64;
    let total: f64 = acc.iter().sum();
    let scale = if total > 0.0 {
        mean_power / total
    } else {
        0.0
    };
    // fftshift so bins run -fs/2 .. fs/2.
    let half = n / 2;
    let mut psd = Vec::with_capacity(n);
    let mut freq_hz = Vec::with_capacity(n);
    for i in 0..n {
        let bin = (i + half) % n;
        freq_hz.push((i as f64 - half as f64) / n as f64 * sample_rate);
        psd.push(acc[bin] * scale);
    }
    Ok(Psd { freq_hz, psd })
}

fn check_bands(channel_bw: f64, adjacent_offset: f64) -> Result<()> {
    if !(channel_bw > 0.0) || channel_bw > 1.0 {
        return Err(Error::invalid("channel_bw must be in (0, 1]"));
    }
    if adjacent_offset < channel_bw {
        return Err(Error::invalid(
            "adjacent band overlaps the channel (adjacent_offset < channel_bw)",
        ));
    }
    if adjacent_offset + channel_bw / 2.0 > 0.5 {
        return Err(Error::invalid("adjacent band exceeds Nyquist"));
    }
    Ok(())
}

/// Worst adjacent-band error power over in-channel measured-signal power,
/// in dB. `channel_bw` and `adjacent_offset` are fractions of the sample
/// rate; the adjacent bands are centered at +-adjacent_offset with the same
/// width as the channel.
pub fn acepr_db(
    y_model: &IqSignal,
    y_meas: &IqSignal,
    channel_bw: f64,
    adjacent_offset: f64,
) -> Result<f64> {
    check_bands(channel_bw, adjacent_offset)?;
    if y_model.len() != y_meas.len() {
        return Err(Error::invalid("length mismatch between model and measurement"));
    }
    let error: Vec<Complex64> = y_meas
        .samples
        .iter()
        .zip(&y_model.samples)
        .map(|(a, b)| a - b)
        .collect();
    let seg = DEFAULT_SEGMENT_LEN.min(pow2_at_most(y_meas.len()));
    let err_psd = welch_psd(&error, y_meas.sample_rate, seg)?;
    let meas_psd = welch_psd(&y_meas.samples, y_meas.sample_rate, seg)?;
    let fs = y_meas.sample_rate;
    let half = channel_bw / 2.0;
    let in_channel = meas_psd.band_power(fs, -half, half);
    if in_channel == 0.0 {
        return Err(Error::invalid("measured signal has no in-channel power"));
    }
    let upper = err_psd.band_power(fs, adjacent_offset - half, adjacent_offset + half);
    let lower = err_psd.band_power(fs, -adjacent_offset - half, -adjacent_offset + half);
    Ok(ratio_db(upper.max(lower) / in_channel))
}

/// Worst adjacent-band power over in-channel power of the signal itself.
pub fn acpr_db(y: &IqSignal, channel_bw: f64, adjacent_offset: f64) -> Result<f64> {
    check_bands(channel_bw, adjacent_offset)?;
    let seg = DEFAULT_SEGMENT_LEN.min(pow2_at_most(y.len()));
    let psd = welch_psd(&y.samples, y.sample_rate, seg)?;
    let fs = y.sample_rate;
    let half = channel_bw / 2.0;
    let in_channel = psd.band_power(fs, -half, half);
    if in_channel == 0.0 {
        return Err(Error::invalid("signal has no in-channel power"));
    }
    let upper = psd.band_power(fs, adjacent_offset - half, adjacent_offset + half);
    let lower = psd.band_power(fs, -adjacent_offset - half, -adjacent_offset + half);
    Ok(ratio_db(upper.max(lower) / in_channel))
}

/// Averaged-periodogram PSD of the model error over `segment`, Parseval
/// normalized.
pub fn error_spectrum(
    y_model: &IqSignal,
    y_meas: &IqSignal,
    segment: std::ops::Range<usize>,
) -> Result<Psd> {
    if y_model.len() != y_meas.len() {
        return Err(Error::invalid("length mismatch between model and measurement"));
    }
    if segment.end > y_meas.len() || segment.start >= segment.end {
        return Err(Error::invalid(format!(
            "invalid segment {segment:?} for record of {} samples",
            y_meas.len()
        )));
    }
    let len = segment.end - segment.start;
    if len < 64 {
        return Err(Error::invalid(
            "segment shorter than one FFT frame (64 samples minimum)",
        ));
    }
    let error: Vec<Complex64> = y_meas.samples[segment.clone()]
        .iter()
        .zip(&y_model.samples[segment])
        .map(|(a, b)| a - b)
        .collect();
    let seg_len = DEFAULT_SEGMENT_LEN.min(pow2_at_most(len));
    welch_psd(&error, y_meas.sample_rate, seg_len)
}

fn pow2_at_most(n: usize) -> usize {
    let mut p = 1;
    while p * 2 <= n {
        p *= 2;
    }
    p
}
