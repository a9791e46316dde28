//! Two-tone initialization of the long-term-memory filter.
//!
//! A two-tone probe x[n] = A e^{-j w0 n} + B driven through a first-order
//! model (no short-term memory) produces four spectral lines whose magnitudes
//! depend on the static parameters theta0, theta1 and on the filter magnitude
//! response |G(w0)|. Sweeping the tone offset therefore samples |G| without
//! knowing the filter in advance: first the static parameters are solved from
//! a stacked two-column least-squares system, then |G(w_k)| follows per
//! offset, and finally an AR(1) or ARMA(1,1) filter is fitted to the sampled
//! response to seed the full identification.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::IqSignal;
use crate::state::{frequency_response, StateFilter, STABILITY_MARGIN};

/// One spectral measurement at tone offset `offset` (normalized rad/sample).
/// `mag_dc` is the measured magnitude at zero frequency, `mag_offset` the
/// magnitude at the +offset line. A measurement with `offset == 0.0` is the
/// static reference (both tones collapsed onto DC); its `mag_offset` is
/// ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoToneMeasurement {
    pub offset: f64,
    pub a: f64,
    pub b: f64,
    pub mag_dc: f64,
    pub mag_offset: f64,
}

impl TwoToneMeasurement {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::invalid("tone amplitudes must be positive"));
        }
        if self.mag_dc < 0.0 || self.mag_offset < 0.0 || !self.offset.is_finite() {
            return Err(Error::invalid("magnitudes must be >= 0 and offset finite"));
        }
        if self.offset < 0.0 {
            return Err(Error::invalid("offset must be >= 0"));
        }
        Ok(())
    }
}

/// Sampled filter magnitude response |G(w_k)|.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledResponse {
    pub omegas: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl SampledResponse {
    pub fn new(omegas: Vec<f64>, magnitudes: Vec<f64>) -> Result<Self> {
        if omegas.len() != magnitudes.len() {
            return Err(Error::invalid("omega and magnitude lists must be aligned"));
        }
        if magnitudes.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::invalid("magnitudes must be >= 0"));
        }
        Ok(SampledResponse { omegas, magnitudes })
    }
}

/// Magnitudes of the single-bin DFTs at {0, -offset, -2 offset, +offset},
/// evaluated over the largest integer number of tone periods that fits in the
/// record so the four lines stay orthogonal.
///
/// Returns `(mag_dc, mag_offset_neg, mag_2offset_neg, mag_offset_pos)` where
/// the probe tone A sits at -offset and the +offset line is pure
/// intermodulation.
pub fn extract_tone_magnitudes(
    y: &IqSignal,
    offset: f64,
) -> Result<(f64, f64, f64, f64)> {
    if !(offset > 0.0 && offset < std::f64::consts::PI) {
        return Err(Error::invalid("offset must be in (0, pi) rad/sample"));
    }
    let period = 2.0 * std::f64::consts::PI / offset;
    let full_periods = (y.len() as f64 / period).floor();
    if full_periods < 1.0 {
        return Err(Error::invalid(format!(
            "record of {} samples is shorter than one tone period ({:.1} samples)",
            y.len(),
            period
        )));
    }
    let n_use = (full_periods * period).round() as usize;
    let n_use = n_use.min(y.len());
    let bin = |w: f64| -> f64 {
        let acc: Complex64 = y.samples[..n_use]
            .iter()
            .enumerate()
            .map(|(n, s)| s * Complex64::from_polar(1.0, w * n as f64))
            .sum();
        (acc / n_use as f64).norm()
    };
    // A component c e^{-j w n} is recovered by correlating with e^{+j w n}.
    Ok((bin(0.0), bin(offset), bin(2.0 * offset), bin(-offset)))
}

/// Least-squares solve for the static parameters (theta0, theta1) from a
/// measurement sweep. Rows are [(A+B), (A+B)^3] with right-hand side |Y|_0
/// for the zero-offset reference, and [B, B^3 + A^2 B] with right-hand side
/// mag_dc -/+ mag_offset for each nonzero offset. Spectrum analyzers report
/// magnitudes, so the sign the +offset intermodulation line contributes with
/// is not observable; both sign conventions are solved and the one with the
/// smaller residual wins.
pub fn solve_static_params(measurements: &[TwoToneMeasurement]) -> Result<(f64, f64)> {
    for m in measurements {
        m.validate()?;
    }
    if measurements.len() < 2 {
        return Err(Error::invalid("need at least two measurements"));
    }
    let build = |sign: f64| -> (Vec<[f64; 2]>, Vec<f64>) {
        let mut rows = Vec::with_capacity(measurements.len());
        let mut rhs = Vec::with_capacity(measurements.len());
        for m in measurements {
            if m.offset == 0.0 {
                let t = m.a + m.b;
                rows.push([t, t * t * t]);
                rhs.push(m.mag_dc);
            } else {
                rows.push([m.b, m.b.powi(3) + m.a * m.a * m.b]);
                rhs.push(m.mag_dc + sign * m.mag_offset);
            }
        }
        (rows, rhs)
    };
    let mut best: Option<(f64, (f64, f64))> = None;
    for sign in [-1.0, 1.0] {
        let (rows, rhs) = build(sign);
        let sol = solve_two_column(&rows, &rhs)?;
        let residual: f64 = rows
            .iter()
            .zip(&rhs)
            .map(|(r, y)| {
                let e = r[0] * sol.0 + r[1] * sol.1 - y;
                e * e
            })
            .sum();
        if best.as_ref().map_or(true, |(b, _)| residual < *b) {
            best = Some((residual, sol));
        }
    }
    Ok(best.unwrap().1)
}

fn solve_two_column(rows: &[[f64; 2]], rhs: &[f64]) -> Result<(f64, f64)> {
    let mut g00 = 0.0;
    let mut g01 = 0.0;
    let mut g11 = 0.0;
    let mut r0 = 0.0;
    let mut r1 = 0.0;
    for (row, y) in rows.iter().zip(rhs) {
        g00 += row[0] * row[0];
        g01 += row[0] * row[1];
        g11 += row[1] * row[1];
        r0 += row[0] * y;
        r1 += row[1] * y;
    }
    let det = g00 * g11 - g01 * g01;
    let scale = g00.max(g11);
    if det.abs() <= 1e-12 * scale * scale {
        return Err(Error::numerical(
            "two-tone system is singular; measurements do not span two distinct rows",
        ));
    }
    Ok(((g11 * r0 - g01 * r1) / det, (g00 * r1 - g01 * r0) / det))
}

/// Per-offset |G(w_k)| from the DC-line magnitudes:
/// |G(w)| = (mag_dc - (B^3 + A^2 B) theta1 - B theta0) / (A^2 B theta1).
/// Zero-offset reference measurements are skipped.
pub fn response_from_measurements(
    measurements: &[TwoToneMeasurement],
    theta0: f64,
    theta1: f64,
) -> Result<SampledResponse> {
    if theta1 == 0.0 {
        return Err(Error::invalid(
            "theta1 = 0: device is static, no long-term memory response observable",
        ));
    }
    let mut omegas = Vec::new();
    let mut magnitudes = Vec::new();
    for m in measurements {
        m.validate()?;
        let a2b = m.a * m.a * m.b;
        let g = (m.mag_dc - (m.b.powi(3) + a2b) * theta1 - m.b * theta0) / (a2b * theta1);
        omegas.push(m.offset);
        magnitudes.push(g.max(0.0));
    }
    SampledResponse::new(omegas, magnitudes)
}

/// Filter family to fit against a sampled response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialFilterKind {
    Ar1,
    Arma11,
}

/// Fits an AR(1) or ARMA(1,1) whose DC-normalized magnitude response matches
/// the samples in the least-squares sense on a log-magnitude scale. A coarse
/// grid over the pole radius seeds a Nelder-Mead refinement; `allow_complex`
/// adds imaginary parts of the pole (and zero) as free variables.
pub fn fit_initial_filter(
    response: &SampledResponse,
    kind: InitialFilterKind,
    allow_complex: bool,
) -> Result<StateFilter> {
    if response.omegas.len() < 3 {
        return Err(Error::invalid("need at least three sampled frequencies"));
    }
    let targets: Vec<f64> = response
        .magnitudes
        .iter()
        .map(|&m| m.max(1e-12).ln())
        .collect();

    let objective = |params: &[f64]| -> f64 {
        let filter = match filter_from_params(kind, params) {
            Ok(f) => f,
            Err(_) => return f64::INFINITY,
        };
        let h = frequency_response(&filter, &response.omegas);
        let h0 = frequency_response(&filter, &[0.0])[0].norm();
        if !(h0 > 0.0) {
            return f64::INFINITY;
        }
        h.iter()
            .zip(&targets)
            .map(|(g, t)| {
                let e = (g.norm() / h0).max(1e-12).ln() - t;
                e * e
            })
            .sum()
    };

    // Pole radii clustered toward 1 to resolve long memories.
    let mut best_params: Option<(f64, Vec<f64>)> = None;
    for i in 0..240 {
        let one_minus = 10f64.powf(-6.0 + 6.0 * (i as f64 / 239.0));
        let alpha = 1.0 - one_minus;
        let params = match kind {
            InitialFilterKind::Ar1 => {
                if allow_complex {
                    vec![alpha, 0.0]
                } else {
                    vec![alpha]
                }
            }
            InitialFilterKind::Arma11 => {
                if allow_complex {
                    vec![alpha, 0.0, 0.0, 0.0]
                } else {
                    vec![alpha, 0.0]
                }
            }
        };
        let cost = objective(&params);
        if best_params.as_ref().map_or(true, |(b, _)| cost < *b) {
            best_params = Some((cost, params));
        }
    }
    let (_, start) = best_params.unwrap();
    let refined = nelder_mead(&objective, &start, 1e-12, 4000);
    let filter = filter_from_params(kind, &refined)
        .map_err(|_| Error::numerical("filter fit did not converge to a stable filter"))?;
    Ok(filter)
}

fn filter_from_params(kind: InitialFilterKind, params: &[f64]) -> Result<StateFilter> {
    match kind {
        InitialFilterKind::Ar1 => {
            let pole = if params.len() >= 2 {
                Complex64::new(params[0], params[1])
            } else {
                Complex64::new(params[0], 0.0)
            };
            if pole.norm() >= 1.0 - STABILITY_MARGIN {
                return Err(Error::numerical("unstable pole"));
            }
            StateFilter::ar(vec![pole])
        }
        InitialFilterKind::Arma11 => {
            let (pole, zero) = if params.len() >= 4 {
                (
                    Complex64::new(params[0], params[1]),
                    Complex64::new(params[2], params[3]),
                )
            } else {
                (
                    Complex64::new(params[0], 0.0),
                    Complex64::new(params[1], 0.0),
                )
            };
            if pole.norm() >= 1.0 - STABILITY_MARGIN {
                return Err(Error::numerical("unstable pole"));
            }
            StateFilter::arma(vec![pole], vec![zero])
        }
    }
}

/// Minimal Nelder-Mead for the low-dimensional filter fits.
fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    tol: f64,
    max_iters: usize,
) -> Vec<f64> {
    let n = start.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    simplex.push((f(start), start.to_vec()));
    for i in 0..n {
        let mut p = start.to_vec();
        let step = if p[i].abs() > 1e-6 { 0.05 * (1.0 - p[i].abs()).abs().max(0.01) } else { 0.02 };
        p[i] += step;
        simplex.push((f(&p), p));
    }
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        if simplex[n].0 - simplex[0].0 <= tol * (1.0 + simplex[0].0.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(_, p)| p[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = (0..n)
            .map(|d| centroid[d] + (centroid[d] - worst.1[d]))
            .collect();
        let fr = f(&reflect);
        if fr < simplex[0].0 {
            let expand: Vec<f64> = (0..n)
                .map(|d| centroid[d] + 2.0 * (centroid[d] - worst.1[d]))
                .collect();
            let fe = f(&expand);
            simplex[n] = if fe < fr { (fe, expand) } else { (fr, reflect) };
        } else if fr < simplex[n - 1].0 {
            simplex[n] = (fr, reflect);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|d| centroid[d] + 0.5 * (worst.1[d] - centroid[d]))
                .collect();
            let fc = f(&contract);
            if fc < worst.0 {
                simplex[n] = (fc, contract);
            } else {
                let best = simplex[0].1.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = entry
                        .1
                        .iter()
                        .zip(&best)
                        .map(|(v, b)| b + 0.5 * (v - b))
                        .collect();
                    *entry = (f(&p), p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
    simplex[0].1.clone()
}

/// Logarithmic offset grid in Hz, inclusive of both endpoints.
pub fn log_offset_grid(start_hz: f64, stop_hz: f64, count: usize) -> Result<Vec<f64>> {
    if !(start_hz > 0.0 && stop_hz > start_hz) || count < 2 {
        return Err(Error::invalid("need 0 < start < stop and count >= 2"));
    }
    let lo = start_hz.ln();
    let hi = stop_hz.ln();
    Ok((0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Writes a measurement sweep as CSV (`offset_hz,a,b,mag_dc,mag_offset`).
/// Offsets are stored in Hz relative to `sample_rate`.
pub fn write_measurements(
    path: &Path,
    measurements: &[TwoToneMeasurement],
    sample_rate: f64,
) -> Result<()> {
    if !(sample_rate > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let mut out = String::from("offset_hz,a,b,mag_dc,mag_offset\n");
    for m in measurements {
        m.validate()?;
        let hz = m.offset * sample_rate / (2.0 * std::f64::consts::PI);
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            hz, m.a, m.b, m.mag_dc, m.mag_offset
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a measurement sweep written by [`write_measurements`].
pub fn read_measurements(path: &Path, sample_rate: f64) -> Result<Vec<TwoToneMeasurement>> {
    if !(sample_rate > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("offset_hz,a,b,mag_dc,mag_offset") => {}
        _ => {
            return Err(Error::format(
                "expected header 'offset_hz,a,b,mag_dc,mag_offset'",
                None,
            ))
        }
    }
    let mut measurements = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::format(
                format!("line {}: expected 5 fields, got {}", i + 2, fields.len()),
                None,
            ));
        }
        let mut values = [0.0f64; 5];
        for (v, f) in values.iter_mut().zip(&fields) {
            *v = f.trim().parse::<f64>().map_err(|e| {
                Error::format(format!("line {}: bad number '{}': {e}", i + 2, f), None)
            })?;
        }
        let m = TwoToneMeasurement {
            offset: values[0] * 2.0 * std::f64::consts::PI / sample_rate,
            a: values[1],
            b: values[2],
            mag_dc: values[3],
            mag_offset: values[4],
        };
        m.validate()?;
        measurements.push(m);
    }
    Ok(measurements)
}
