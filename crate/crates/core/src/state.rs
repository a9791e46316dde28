//! Long-term memory state computation: s[n] is a low-pass-filtered version of
//! the instantaneous input power |x[n]|^2, produced by an FIR moving average,
//! an AR filter, or an ARMA filter.
//!
//! The recursions are kept exactly as written:
//!
//! * AR(T):    s[n] = |x[n]|^2 + sum_k alpha_k s[n-k]
//! * ARMA(T,Z): s[n] = |x[n]|^2 + sum_k beta_k |x[n-k]|^2 + sum_k alpha_k s[n-k]
//! * FIR(N):   s[n] = (1/N) sum_{k=0}^{N-1} |x[n-k]|^2
//!
//! The FIR form carries its 1/N normalization; AR/ARMA are not DC-normalized
//! (the dynamic-parameter scale absorbs the gain). Poles and zeros may be
//! complex, in which case the state is the raw complex recursion output.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::IqSignal;

/// Poles with |alpha| >= 1 - STABILITY_MARGIN are rejected at construction.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum StateFilter {
    Fir {
        window: usize,
        initial_state: Complex64,
    },
    Ar {
        poles: Vec<Complex64>,
        initial_state: Complex64,
    },
    Arma {
        poles: Vec<Complex64>,
        zeros: Vec<Complex64>,
        initial_state: Complex64,
    },
}

impl StateFilter {
    pub fn fir(window: usize) -> Result<Self> {
        if window < 1 {
            return Err(Error::invalid("FIR window must be >= 1"));
        }
        Ok(StateFilter::Fir {
            window,
            initial_state: Complex64::new(0.0, 0.0),
        })
    }

    pub fn ar1(alpha: f64) -> Result<Self> {
        Self::ar(vec![Complex64::new(alpha, 0.0)])
    }

    pub fn ar(poles: Vec<Complex64>) -> Result<Self> {
        check_poles(&poles)?;
        Ok(StateFilter::Ar {
            poles,
            initial_state: Complex64::new(0.0, 0.0),
        })
    }

    pub fn arma11(alpha: f64, beta: f64) -> Result<Self> {
        Self::arma(
            vec![Complex64::new(alpha, 0.0)],
            vec![Complex64::new(beta, 0.0)],
        )
    }

    pub fn arma(poles: Vec<Complex64>, zeros: Vec<Complex64>) -> Result<Self> {
        check_poles(&poles)?;
        if zeros.is_empty() {
            return Err(Error::invalid("ARMA filter needs at least one zero"));
        }
        Ok(StateFilter::Arma {
            poles,
            zeros,
            initial_state: Complex64::new(0.0, 0.0),
        })
    }

    /// Warm-start value used for s[k] at k < 0 (streaming DPD restarts).
    pub fn with_initial_state(mut self, s0: Complex64) -> Self {
        match &mut self {
            StateFilter::Fir { initial_state, .. }
            | StateFilter::Ar { initial_state, .. }
            | StateFilter::Arma { initial_state, .. } => *initial_state = s0,
        }
        self
    }

    pub fn poles(&self) -> &[Complex64] {
        match self {
            StateFilter::Fir { .. } => &[],
            StateFilter::Ar { poles, .. } | StateFilter::Arma { poles, .. } => poles,
        }
    }

    pub fn zeros(&self) -> &[Complex64] {
        match self {
            StateFilter::Arma { zeros, .. } => zeros,
            _ => &[],
        }
    }

    pub fn initial_state(&self) -> Complex64 {
        match self {
            StateFilter::Fir { initial_state, .. }
            | StateFilter::Ar { initial_state, .. }
            | StateFilter::Arma { initial_state, .. } => *initial_state,
        }
    }

    /// Builds the same filter kind from a flat [poles..., zeros...] parameter
    /// vector, preserving the initial state. Used by the Gauss-Newton updates.
    pub fn with_params(&self, params: &[Complex64]) -> Result<StateFilter> {
        match self {
            StateFilter::Fir { .. } => Err(Error::Unsupported(
                "FIR window size is not a continuous parameter".into(),
            )),
            StateFilter::Ar { poles, initial_state } => {
                assert_eq!(params.len(), poles.len());
                check_poles(params)?;
                Ok(StateFilter::Ar {
                    poles: params.to_vec(),
                    initial_state: *initial_state,
                })
            }
            StateFilter::Arma {
                poles,
                zeros,
                initial_state,
            } => {
                assert_eq!(params.len(), poles.len() + zeros.len());
                let (p, z) = params.split_at(poles.len());
                check_poles(p)?;
                Ok(StateFilter::Arma {
                    poles: p.to_vec(),
                    zeros: z.to_vec(),
                    initial_state: *initial_state,
                })
            }
        }
    }

    /// Flat [poles..., zeros...] parameter vector (empty for FIR).
    pub fn params(&self) -> Vec<Complex64> {
        let mut v = self.poles().to_vec();
        v.extend_from_slice(self.zeros());
        v
    }
}

fn check_poles(poles: &[Complex64]) -> Result<()> {
    if poles.is_empty() {
        return Err(Error::invalid("filter needs at least one pole"));
    }
    for a in poles {
        if a.norm() >= 1.0 - STABILITY_MARGIN {
            return Err(Error::invalid(format!(
                "unstable pole |alpha| = {} (must be < 1 - 1e-9)",
                a.norm()
            )));
        }
    }
    Ok(())
}

/// Runs the state recursion over the record. Output length equals input
/// length; s[k] = initial_state and |x[k]|^2 = 0 for k < 0.
pub fn compute_state(filter: &StateFilter, x: &IqSignal) -> Vec<Complex64> {
    let power: Vec<f64> = x.samples.iter().map(|c| c.norm_sqr()).collect();
    compute_state_from_power(filter, &power)
}

/// Same recursion on a precomputed |x[n]|^2 sequence.
pub fn compute_state_from_power(filter: &StateFilter, power: &[f64]) -> Vec<Complex64> {
    let n = power.len();
    match filter {
        StateFilter::Fir { window, .. } => {
            let w = *window;
            let mut out = Vec::with_capacity(n);
            let mut acc = 0.0;
            for i in 0..n {
                acc += power[i];
                if i >= w {
                    acc -= power[i - w];
                }
                out.push(Complex64::new(acc / w as f64, 0.0));
            }
            out
        }
        StateFilter::Ar {
            poles,
            initial_state,
        } => recurse(power, poles, &[], *initial_state),
        StateFilter::Arma {
            poles,
            zeros,
            initial_state,
        } => recurse(power, poles, zeros, *initial_state),
    }
}

fn recurse(
    power: &[f64],
    poles: &[Complex64],
    zeros: &[Complex64],
    initial: Complex64,
) -> Vec<Complex64> {
    let n = power.len();
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = Complex64::new(power[i], 0.0);
        for (k, b) in zeros.iter().enumerate() {
            let idx = i as isize - (k + 1) as isize;
            if idx >= 0 {
                v += b * power[idx as usize];
            }
        }
        for (k, a) in poles.iter().enumerate() {
            let idx = i as isize - (k + 1) as isize;
            v += a * if idx >= 0 { s[idx as usize] } else { initial };
        }
        s.push(v);
    }
    s
}

/// Approximate effective memory length in samples: 1/(1-|alpha|) for AR(1),
/// the window size for FIR. Undefined for other configurations.
pub fn effective_memory(filter: &StateFilter) -> Result<f64> {
    match filter {
        StateFilter::Fir { window, .. } => Ok(*window as f64),
        StateFilter::Ar { poles, .. } if poles.len() == 1 => Ok(1.0 / (1.0 - poles[0].norm())),
        _ => Err(Error::Unsupported(
            "effective memory is defined for FIR and AR(1) filters only".into(),
        )),
    }
}

/// Transfer-function evaluation at normalized frequencies (rad/sample):
/// G(w) = (1 + sum beta_k e^{-jwk}) / (1 - sum alpha_k e^{-jwk}) for AR/ARMA,
/// and the 1/N moving-average response for FIR.
pub fn frequency_response(filter: &StateFilter, omegas: &[f64]) -> Vec<Complex64> {
    omegas
        .iter()
        .map(|&w| match filter {
            StateFilter::Fir { window, .. } => {
                let n = *window;
                (0..n)
                    .map(|k| Complex64::from_polar(1.0, -w * k as f64))
                    .sum::<Complex64>()
                    / n as f64
            }
            StateFilter::Ar { poles, .. } => {
                Complex64::new(1.0, 0.0) / denom(poles, w)
            }
            StateFilter::Arma { poles, zeros, .. } => {
                let num = Complex64::new(1.0, 0.0)
                    + zeros
                        .iter()
                        .enumerate()
                        .map(|(k, b)| b * Complex64::from_polar(1.0, -w * (k + 1) as f64))
                        .sum::<Complex64>();
                num / denom(poles, w)
            }
        })
        .collect()
}

fn denom(poles: &[Complex64], w: f64) -> Complex64 {
    Complex64::new(1.0, 0.0)
        - poles
            .iter()
            .enumerate()
            .map(|(k, a)| a * Complex64::from_polar(1.0, -w * (k + 1) as f64))
            .sum::<Complex64>()
}
