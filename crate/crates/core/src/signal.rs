//! Complex baseband signal carrier, file I/O, and deterministic test-signal
//! generators.
//!
//! The on-disk binary format is "IQF1": 4 magic bytes `IQF1`, the sample rate
//! as a little-endian f64, the sample count as a little-endian u64, then
//! interleaved (I, Q) f64 pairs. A CSV alternative with header `i,q` is
//! provided for interoperability; its sample rate travels out of band.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IQF1";

/// A complex baseband sample sequence with its sample rate in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

impl IqSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("signal must contain at least one sample"));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid(format!(
                "sample rate must be finite and positive, got {sample_rate}"
            )));
        }
        if samples.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("signal contains non-finite samples"));
        }
        Ok(IqSignal {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of |x[n]|^2 over the record.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        self.mean_power().sqrt()
    }

    /// Returns a copy scaled by a complex factor.
    pub fn scaled(&self, factor: Complex64) -> IqSignal {
        IqSignal {
            samples: self.samples.iter().map(|c| c * factor).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Description of a multi-segment burst: each segment has a relative power in
/// dB, and `rms_level` sets the RMS amplitude of the strongest segment.
#[derive(Debug, Clone, PartialEq)]
pub struct BurstProfile {
    pub segment_length: usize,
    pub power_steps_db: Vec<f64>,
    pub rms_level: f64,
}

impl BurstProfile {
    pub fn validate(&self) -> Result<()> {
        if self.segment_length < 1 {
            return Err(Error::invalid("segment_length must be >= 1"));
        }
        if self.power_steps_db.is_empty() {
            return Err(Error::invalid("power_steps_db must be non-empty"));
        }
        if !(self.rms_level > 0.0) || !self.rms_level.is_finite() {
            return Err(Error::invalid("rms_level must be finite and positive"));
        }
        Ok(())
    }
}

/// Generates band-limited complex Gaussian noise with abrupt per-segment power
/// steps.
///
/// The noise stream is drawn from a ChaCha8 generator seeded with `seed`
/// (stable across releases), low-pass filtered to `bandwidth_fraction` of the
/// sample rate with a Blackman-windowed sinc (stopband > 70 dB), normalized to
/// unit RMS over the whole stream, and then each segment is scaled so the
/// strongest segment sits at `rms_level` and segments differ by the requested
/// dB steps exactly in the applied gain.
pub fn generate_bursty(
    profile: &BurstProfile,
    bandwidth_fraction: f64,
    sample_rate: f64,
    seed: u64,
) -> Result<IqSignal> {
    profile.validate()?;
    if !(bandwidth_fraction > 0.0 && bandwidth_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "bandwidth_fraction must be in (0, 1], got {bandwidth_fraction}"
        )));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }

    let n = profile.segment_length * profile.power_steps_db.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(gauss(&mut rng), gauss(&mut rng)))
        .collect();

    // Band-limit. The complex noise band is two-sided, so the low-pass cutoff
    // is bandwidth_fraction / 2 in cycles per sample.
    let cutoff = bandwidth_fraction / 2.0;
    if cutoff < 0.5 {
        let taps = blackman_sinc_taps(cutoff, 129);
        noise = convolve_same(&noise, &taps);
    }

    let rms = (noise.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64).sqrt();
    let max_step = profile
        .power_steps_db
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    for (seg, &step_db) in profile.power_steps_db.iter().enumerate() {
        let gain = profile.rms_level / rms * 10f64.powf((step_db - max_step) / 20.0);
        for s in &mut noise[seg * profile.segment_length..(seg + 1) * profile.segment_length] {
            *s *= gain;
        }
    }

    IqSignal::new(noise, sample_rate)
}

/// x[n] = A e^{-j w0 n} + B with w0 = 2 pi offset_hz / sample_rate.
pub fn generate_two_tone(
    a: f64,
    b: f64,
    offset_hz: f64,
    length: usize,
    sample_rate: f64,
) -> Result<IqSignal> {
    if length < 1 {
        return Err(Error::invalid("length must be >= 1"));
    }
    if offset_hz.abs() >= sample_rate / 2.0 {
        return Err(Error::invalid(format!(
            "tone offset {offset_hz} Hz is at or beyond Nyquist ({} Hz)",
            sample_rate / 2.0
        )));
    }
    let w0 = 2.0 * std::f64::consts::PI * offset_hz / sample_rate;
    let samples = (0..length)
        .map(|n| Complex64::from_polar(a, -w0 * n as f64) + Complex64::new(b, 0.0))
        .collect();
    IqSignal::new(samples, sample_rate)
}

/// Writes a signal in the IQF1 binary format.
pub fn write_iq(signal: &IqSignal, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&signal.sample_rate.to_le_bytes())?;
    w.write_all(&(signal.samples.len() as u64).to_le_bytes())?;
    for c in &signal.samples {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a signal in the IQF1 binary format.
pub fn read_iq(path: impl AsRef<Path>) -> Result<IqSignal> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_at(&mut r, &mut magic, 0)?;
    if &magic != MAGIC {
        return Err(Error::format(
            format!(
                "bad magic {:?}, expected {:?} (\"IQF1\")",
                magic, MAGIC
            ),
            Some(0),
        ));
    }
    let mut buf8 = [0u8; 8];
    read_exact_at(&mut r, &mut buf8, 4)?;
    let sample_rate = f64::from_le_bytes(buf8);
    read_exact_at(&mut r, &mut buf8, 12)?;
    let count = u64::from_le_bytes(buf8) as usize;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let offset = 20 + 16 * i as u64;
        read_exact_at(&mut r, &mut buf8, offset)?;
        let re = f64::from_le_bytes(buf8);
        read_exact_at(&mut r, &mut buf8, offset + 8)?;
        let im = f64::from_le_bytes(buf8);
        samples.push(Complex64::new(re, im));
    }
    if count == 0 {
        return Err(Error::format("file declares zero samples", Some(12)));
    }
    IqSignal::new(samples, sample_rate)
        .map_err(|e| Error::format(format!("invalid payload: {e}"), Some(4)))
}

/// Writes the CSV alternative: header `i,q`, one row per sample. The sample
/// rate is not stored.
pub fn write_csv(signal: &IqSignal, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "i,q")?;
    for c in &signal.samples {
        writeln!(w, "{:.17e},{:.17e}", c.re, c.im)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV alternative. The sample rate travels out of band.
pub fn read_csv(path: impl AsRef<Path>, sample_rate: f64) -> Result<IqSignal> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "i,q" => {}
        Some(h) => {
            return Err(Error::format(
                format!("expected header \"i,q\", got {h:?}"),
                Some(0),
            ))
        }
        None => return Err(Error::format("empty file", Some(0))),
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| Error::format(format!("line {}: missing field", lineno + 2), None))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::format(format!("line {}: {e}", lineno + 2), None))
        };
        let re = parse(parts.next())?;
        let im = parse(parts.next())?;
        samples.push(Complex64::new(re, im));
    }
    IqSignal::new(samples, sample_rate)
}

fn read_exact_at(r: &mut impl Read, buf: &mut [u8], offset: u64) -> Result<()> {
    r.read_exact(buf).map_err(|_| {
        Error::format(
            format!("truncated file: expected {} more bytes", buf.len()),
            Some(offset),
        )
    })
}

/// Standard normal via Box-Muller on the raw ChaCha stream; kept local so the
/// generated sequence is stable regardless of rand_distr internals.
pub(crate) fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    use rand::Rng;
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() / std::f64::consts::SQRT_2
}

fn blackman_sinc_taps(cutoff: f64, len: usize) -> Vec<f64> {
    let mid = (len / 2) as isize;
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let k = i as isize - mid;
            let sinc = if k == 0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * k as f64).sin()
                    / (std::f64::consts::PI * k as f64)
            };
            let w = 0.42
                - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos()
                + 0.08 * (4.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

fn convolve_same(x: &[Complex64], taps: &[f64]) -> Vec<Complex64> {
    let mid = taps.len() / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &t) in taps.iter().enumerate() {
                let j = i as isize + mid as isize - k as isize;
                if j >= 0 && (j as usize) < n {
                    acc += x[j as usize] * t;
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_tone_dc_only() {
        let s = generate_two_tone(0.0, 1.0, 0.0, 16, 1e6).unwrap();
        for c in &s.samples {
            assert_eq!(*c, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn two_tone_quarter_rate_period_four() {
        let s = generate_two_tone(1.0, 0.0, 2.5e5, 64, 1e6).unwrap();
        for n in 0..60 {
            assert_abs_diff_eq!(s.samples[n].re, s.samples[n + 4].re, epsilon = 1e-12);
            assert_abs_diff_eq!(s.samples[n].im, s.samples[n + 4].im, epsilon = 1e-12);
            assert_abs_diff_eq!(s.samples[n].norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_tone_magnitude_bounded() {
        let s = generate_two_tone(0.5, 0.5, 1.7e4, 512, 1e6).unwrap();
        for c in &s.samples {
            assert!(c.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn two_tone_rejects_beyond_nyquist() {
        assert!(generate_two_tone(1.0, 0.0, 6e5, 16, 1e6).is_err());
    }

    #[test]
    fn two_tone_periodic_when_offset_divides_rate() {
        // offset = rate / 8 -> period 8 samples, exact (deterministic phase grid).
        let s = generate_two_tone(0.7, 0.3, 1.25e5, 64, 1e6).unwrap();
        for n in 0..56 {
            assert_abs_diff_eq!(s.samples[n].re, s.samples[n + 8].re, epsilon = 1e-9);
            assert_abs_diff_eq!(s.samples[n].im, s.samples[n + 8].im, epsilon = 1e-9);
        }
    }

    #[test]
    fn bursty_is_deterministic() {
        let profile = BurstProfile {
            segment_length: 1000,
            power_steps_db: vec![0.0, -10.0],
            rms_level: 1.0,
        };
        let a = generate_bursty(&profile, 0.2, 1e6, 42).unwrap();
        let b = generate_bursty(&profile, 0.2, 1e6, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_bursty(&profile, 0.2, 1e6, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bursty_single_segment_rms() {
        let profile = BurstProfile {
            segment_length: 100_000,
            power_steps_db: vec![0.0],
            rms_level: 0.5,
        };
        let s = generate_bursty(&profile, 0.13, 30.72e6, 7).unwrap();
        assert!((s.rms() - 0.5).abs() / 0.5 < 0.01);
    }

    #[test]
    fn bursty_segment_power_ratios() {
        let profile = BurstProfile {
            segment_length: 100_000,
            power_steps_db: vec![0.0, -10.0, 0.0, -10.0],
            rms_level: 1.0,
        };
        let s = generate_bursty(&profile, 4.0 / 30.72, 30.72e6, 1).unwrap();
        let seg_power = |k: usize| {
            s.samples[k * 100_000..(k + 1) * 100_000]
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                / 100_000.0
        };
        let ratio_db = 10.0 * (seg_power(0) / seg_power(1)).log10();
        assert!((ratio_db - 10.0).abs() < 0.1, "ratio {ratio_db} dB");
    }

    #[test]
    fn bursty_rejects_bad_profile() {
        let profile = BurstProfile {
            segment_length: 0,
            power_steps_db: vec![0.0],
            rms_level: 1.0,
        };
        assert!(generate_bursty(&profile, 0.5, 1e6, 0).is_err());
    }

    #[test]
    fn iq_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.iq");
        let s = IqSignal::new(
            vec![Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.0)],
            1e6,
        )
        .unwrap();
        write_iq(&s, &path).unwrap();
        let back = read_iq(&path).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn iq_read_empty_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.iq");
        std::fs::write(&path, b"").unwrap();
        match read_iq(&path) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn iq_bad_magic_names_expected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.iq");
        std::fs::write(&path, b"NOPE0000000000000000").unwrap();
        match read_iq(&path) {
            Err(Error::Format { msg, offset }) => {
                assert!(msg.contains("IQF1"), "{msg}");
                assert_eq!(offset, Some(0));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn iq_truncated_payload_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.iq");
        let s = IqSignal::new(vec![Complex64::new(1.0, 2.0); 4], 1e6).unwrap();
        write_iq(&s, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match read_iq(&path) {
            Err(Error::Format { offset, .. }) => assert!(offset.unwrap() >= 20),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let s = IqSignal::new(
            vec![Complex64::new(0.125, -7.5), Complex64::new(1e-17, 3.0)],
            2e6,
        )
        .unwrap();
        write_csv(&s, &path).unwrap();
        let back = read_csv(&path, 2e6).unwrap();
        assert_eq!(s, back);
    }
}
