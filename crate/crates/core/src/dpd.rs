//! Indirect-learning digital predistortion on top of the long-term-memory
//! model.
//!
//! The state filters come from a converged forward identification and stay
//! frozen: each DPD iteration only re-solves the linear parameters of the
//! inverse (post-distorter) model with the amplifier's input and output roles
//! swapped, then copies it in front of the amplifier. The predistorted drive
//! is rescaled every iteration so the average output power matches the linear
//! reference, keeping the comparison across iterations honest.

use num_complex::Complex64;

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::ident::solve_theta;
use crate::ltmodel::LtModel;
use crate::metrics::{acpr_db, block_nmse, nmse_db, DEFAULT_BLOCK_SIZE, DEFAULT_SKIP_BLOCKS};
use crate::signal::IqSignal;
use crate::state::{compute_state, StateFilter};

/// Which signal drives the state filters when fitting the inverse model.
/// `Regressor` (default) uses the normalized amplifier output, the signal the
/// inverse model's basis is built from; `Input` uses the amplifier input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSide {
    Regressor,
    Input,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpdConfig {
    pub basis: BasisSpec,
    pub frozen_filters: Vec<StateFilter>,
    pub iterations: usize,
    pub ridge: f64,
    pub state_side: StateSide,
    /// Peak amplitude above which the predistorted drive raises a warning
    /// flag in the iteration metrics (never an error).
    pub clip_warn_level: Option<f64>,
    /// Power-matching tolerance for the output-power constraint, in dB.
    pub power_tol_db: f64,
    pub acpr_channel_bw: f64,
    pub acpr_adjacent_offset: f64,
    pub block_size: usize,
    pub skip_initial_blocks: usize,
}

impl DpdConfig {
    pub fn new(basis: BasisSpec, frozen_filters: Vec<StateFilter>) -> Self {
        DpdConfig {
            basis,
            frozen_filters,
            iterations: 5,
            ridge: 0.0,
            state_side: StateSide::Regressor,
            clip_warn_level: None,
            power_tol_db: 0.1,
            acpr_channel_bw: 0.25,
            acpr_adjacent_offset: 0.25,
            block_size: DEFAULT_BLOCK_SIZE,
            skip_initial_blocks: DEFAULT_SKIP_BLOCKS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be >= 1"));
        }
        if !(self.power_tol_db > 0.0) {
            return Err(Error::invalid("power tolerance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpdSession {
    pub inverse_model: LtModel,
    pub frozen_filters: Vec<StateFilter>,
    pub target_output_power: f64,
    pub iteration: usize,
    pub clip_warn_level: Option<f64>,
    pub power_tol_db: f64,
}

/// Metrics of one closed-loop iteration. Iteration 0 is the no-DPD baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub nmse_to_linear_db: f64,
    pub acpr_db: f64,
    pub worst_block_nmse_db: f64,
    pub mean_output_power: f64,
    pub clip_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpdOutcome {
    pub predistorted: IqSignal,
    pub output: IqSignal,
    /// Complex small-signal gain of the linear reference.
    pub linear_gain: Complex64,
    pub metrics: Vec<IterationMetrics>,
    /// False when the loop stopped early after two consecutive worsenings.
    pub converged: bool,
}

impl DpdOutcome {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("ltpa-dpd-report-version = 1\n");
        out.push_str(&format!("converged = {}\n", self.converged));
        out.push_str(&format!(
            "linear_gain = {:.9e} {:.9e}\n",
            self.linear_gain.re, self.linear_gain.im
        ));
        out.push_str("[iterations]\n");
        out.push_str("# iter nmse_to_linear_db acpr_db worst_block_nmse_db mean_output_power clip_warning\n");
        for m in &self.metrics {
            out.push_str(&format!(
                "{} {:.6} {:.6} {:.6} {:.9e} {}\n",
                m.iteration,
                m.nmse_to_linear_db,
                m.acpr_db,
                m.worst_block_nmse_db,
                m.mean_output_power,
                m.clip_warning
            ));
        }
        out
    }
}

/// Complex small-signal gain from the lowest-power decile of input samples.
pub fn linear_gain(x: &IqSignal, y: &IqSignal) -> Result<Complex64> {
    if x.len() != y.len() {
        return Err(Error::invalid("input and output must be aligned"));
    }
    if x.len() < 10 {
        return Err(Error::invalid("need at least 10 samples for a decile"));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x.samples[a].norm_sqr().total_cmp(&x.samples[b].norm_sqr()));
    let take = x.len() / 10;
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0f64;
    for &i in &order[..take] {
        num += x.samples[i].conj() * y.samples[i];
        den += x.samples[i].norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::numerical("lowest-power decile is all zeros"));
    }
    Ok(num / den)
}

/// Fits the inverse model: regressors from the gain-normalized amplifier
/// output, target the amplifier input, state filters frozen (no pole/zero
/// refinement).
pub fn fit_inverse(
    pa_input: &IqSignal,
    pa_output: &IqSignal,
    basis: &BasisSpec,
    frozen_filters: &[StateFilter],
    ridge: f64,
    state_side: StateSide,
) -> Result<LtModel> {
    let g = linear_gain(pa_input, pa_output)?;
    if g.norm() == 0.0 {
        return Err(Error::numerical("zero small-signal gain"));
    }
    let u = IqSignal::new(
        pa_output.samples.iter().map(|s| s / g).collect(),
        pa_output.sample_rate,
    )?;
    let state_source = match state_side {
        StateSide::Regressor => &u,
        StateSide::Input => pa_input,
    };
    let states: Vec<Vec<Complex64>> = frozen_filters
        .iter()
        .map(|f| compute_state(f, state_source))
        .collect();
    let (theta0, theta_dyn) = solve_theta(basis, &states, &u, pa_input, ridge)?;
    LtModel::new(
        *basis,
        frozen_filters.to_vec(),
        theta0,
        theta_dyn,
        "inverse model",
    )
}

/// Applies the inverse model to `x` and scales the result so the amplifier's
/// average output power matches the session target within `power_tol_db`.
/// Returns the scaled drive, the matching amplifier output, and a clip
/// warning flag.
pub fn predistort<F>(
    session: &DpdSession,
    x: &IqSignal,
    pa: &F,
) -> Result<(IqSignal, IqSignal, bool)>
where
    F: Fn(&IqSignal) -> Result<IqSignal>,
{
    let z = session.inverse_model.predict(x)?;
    let power_of = |scale: f64| -> Result<(IqSignal, IqSignal, f64)> {
        let drive = z.scaled(Complex64::new(scale, 0.0));
        let out = pa(&drive)?;
        let p = out.mean_power();
        Ok((drive, out, p))
    };
    let target = session.target_output_power;
    if !(target > 0.0) {
        return Err(Error::invalid("target output power must be positive"));
    }

    // Multiplicative fixed point: c <- c * sqrt(target / p(c)). Exact in one
    // step for a linear device, fast contraction for mildly compressive
    // ones.
    let err_db = |p: f64| 10.0 * (p / target).log10();
    let mut scale = 1.0f64;
    for _ in 0..60 {
        let (_, _, p) = power_of(scale)?;
        let e = err_db(p);
        if e.abs() <= session.power_tol_db / 100.0 {
            break;
        }
        scale *= (target / p).sqrt();
        if !scale.is_finite() || scale > 1e9 || scale < 1e-9 {
            return Err(Error::numerical(
                "output power scaling diverged; amplifier response is degenerate",
            ));
        }
    }
    let (drive, out, p) = power_of(scale)?;
    if err_db(p).abs() > session.power_tol_db {
        return Err(Error::numerical(format!(
            "could not match target output power ({:.3} dB off)",
            err_db(p)
        )));
    }
    let clip = session
        .clip_warn_level
        .map(|l| drive.samples.iter().any(|s| s.norm() > l))
        .unwrap_or(false);
    Ok((drive, out, clip))
}

/// Closed-loop indirect learning: fit the inverse on the latest
/// (drive, output) pair, predistort the original input, re-measure, repeat.
/// Stops early after two consecutive worsenings of the NMSE to the linear
/// reference and returns the best iteration seen.
pub fn run_dpd_loop<F>(pa: &F, x: &IqSignal, config: &DpdConfig) -> Result<DpdOutcome>
where
    F: Fn(&IqSignal) -> Result<IqSignal>,
{
    config.validate()?;
    let y0 = pa(x)?;
    let g = linear_gain(x, &y0)?;
    let reference = IqSignal::new(
        x.samples.iter().map(|s| g * s).collect(),
        x.sample_rate,
    )?;
    let target = reference.mean_power();

    let measure = |iteration: usize, y: &IqSignal, clip: bool| -> Result<IterationMetrics> {
        let profile = block_nmse(y, &reference, config.block_size, config.skip_initial_blocks)?;
        Ok(IterationMetrics {
            iteration,
            nmse_to_linear_db: nmse_db(y, &reference)?,
            acpr_db: acpr_db(y, config.acpr_channel_bw, config.acpr_adjacent_offset)?,
            worst_block_nmse_db: profile.max_nmse_db,
            mean_output_power: y.mean_power(),
            clip_warning: clip,
        })
    };

    let mut metrics = vec![measure(0, &y0, false)?];
    let mut fit_input = x.clone();
    let mut fit_output = y0;
    let mut best: Option<(f64, IqSignal, IqSignal)> = None;
    let mut worsening = 0usize;
    let mut converged = true;

    for iteration in 1..=config.iterations {
        let inverse = fit_inverse(
            &fit_input,
            &fit_output,
            &config.basis,
            &config.frozen_filters,
            config.ridge,
            config.state_side,
        )?;
        let session = DpdSession {
            inverse_model: inverse,
            frozen_filters: config.frozen_filters.clone(),
            target_output_power: target,
            iteration,
            clip_warn_level: config.clip_warn_level,
            power_tol_db: config.power_tol_db,
        };
        debug_assert_eq!(session.inverse_model.state_filters, config.frozen_filters);
        let (drive, out, clip) = predistort(&session, x, pa)?;
        let m = measure(iteration, &out, clip)?;
        let nmse = m.nmse_to_linear_db;
        metrics.push(m);

        if best.as_ref().map_or(true, |(b, _, _)| nmse < *b) {
            best = Some((nmse, drive.clone(), out.clone()));
            worsening = 0;
        } else {
            worsening += 1;
            if worsening >= 2 {
                converged = false;
                break;
            }
        }
        fit_input = drive;
        fit_output = out;
    }

    let (_, predistorted, output) = best.expect("at least one iteration ran");
    Ok(DpdOutcome {
        predistorted,
        output,
        linear_gain: g,
        metrics,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pasim::{default_doherty_like, SyntheticPa};
    use crate::signal::{generate_bursty, BurstProfile};

    fn drive_signal(seed: u64) -> IqSignal {
        let profile = BurstProfile {
            segment_length: 6000,
            power_steps_db: vec![0.0, -10.0, 0.0, -10.0],
            rms_level: 0.025,
        };
        generate_bursty(&profile, 0.2, 30.72e6, seed).unwrap()
    }

    fn pa_closure(pa: SyntheticPa) -> impl Fn(&IqSignal) -> Result<IqSignal> {
        move |x: &IqSignal| pa.evaluate(x)
    }

    #[test]
    fn linear_gain_on_linear_device() {
        let x = drive_signal(1);
        let g = Complex64::new(1.7, -0.4);
        let y = IqSignal::new(x.samples.iter().map(|s| g * s).collect(), x.sample_rate).unwrap();
        let est = linear_gain(&x, &y).unwrap();
        assert!((est - g).norm() < 1e-12);
    }

    #[test]
    fn inverse_of_linear_pa_is_identity() {
        let x = drive_signal(2);
        let g = Complex64::new(2.0, 0.5);
        let y = IqSignal::new(x.samples.iter().map(|s| g * s).collect(), x.sample_rate).unwrap();
        let basis = BasisSpec::mp(3, 1);
        let model = fit_inverse(&x, &y, &basis, &[], 0.0, StateSide::Regressor).unwrap();
        // The normalized output equals x, so the inverse is the identity:
        // unit linear aligned term, everything else zero.
        for (label, coeff) in basis.column_labels().iter().zip(&model.theta0) {
            if label.p == 1 && label.m == 0 {
                assert!((coeff - Complex64::new(1.0, 0.0)).norm() < 1e-8);
            } else {
                assert!(coeff.norm() < 1e-8, "spurious coefficient {coeff}");
            }
        }
    }

    #[test]
    fn inverse_round_trip_on_synthetic_pa() {
        // Fitting the forward direction on data generated by the inverse
        // model must compose to near identity at the record level.
        let pa = default_doherty_like().noiseless();
        let x = drive_signal(3);
        let y = pa.evaluate(&x).unwrap();
        let basis = pa.true_model.basis;
        let filters = pa.true_model.state_filters.clone();
        let inverse = fit_inverse(&x, &y, &basis, &filters, 0.0, StateSide::Regressor).unwrap();
        let g = linear_gain(&x, &y).unwrap();
        let u = IqSignal::new(y.samples.iter().map(|s| s / g).collect(), y.sample_rate).unwrap();
        let x_hat = inverse.predict(&u).unwrap();
        let nmse = nmse_db(&x_hat, &x).unwrap();
        assert!(nmse < -35.0, "inverse round trip NMSE {nmse}");
    }

    #[test]
    fn predistort_meets_power_target() {
        let pa = default_doherty_like();
        let x = drive_signal(4);
        let config = DpdConfig::new(pa.true_model.basis, pa.true_model.state_filters.clone());
        let f = pa_closure(pa);
        let outcome = run_dpd_loop(&f, &x, &config).unwrap();
        let target = outcome.linear_gain.norm_sqr() * x.mean_power();
        for m in &outcome.metrics[1..] {
            let err = 10.0 * (m.mean_output_power / target).log10();
            assert!(err.abs() <= 0.1, "iteration {} off by {err} dB", m.iteration);
        }
    }

    #[test]
    fn dpd_improves_on_baseline() {
        let pa = default_doherty_like();
        let x = drive_signal(5);
        let mut config =
            DpdConfig::new(pa.true_model.basis, pa.true_model.state_filters.clone());
        config.iterations = 3;
        let f = pa_closure(pa);
        let outcome = run_dpd_loop(&f, &x, &config).unwrap();
        let baseline = outcome.metrics[0].nmse_to_linear_db;
        let best = outcome
            .metrics[1..]
            .iter()
            .map(|m| m.nmse_to_linear_db)
            .fold(f64::INFINITY, f64::min);
        assert!(best < baseline - 1.0, "baseline {baseline}, best {best}");
    }

    #[test]
    fn single_iteration_equals_fit_plus_apply() {
        let pa = default_doherty_like();
        let x = drive_signal(6);
        let mut config =
            DpdConfig::new(pa.true_model.basis, pa.true_model.state_filters.clone());
        config.iterations = 1;
        let f = pa_closure(pa.clone());
        let outcome = run_dpd_loop(&f, &x, &config).unwrap();

        let y0 = pa.evaluate(&x).unwrap();
        let inverse = fit_inverse(
            &x,
            &y0,
            &config.basis,
            &config.frozen_filters,
            0.0,
            StateSide::Regressor,
        )
        .unwrap();
        let g = linear_gain(&x, &y0).unwrap();
        let session = DpdSession {
            inverse_model: inverse,
            frozen_filters: config.frozen_filters.clone(),
            target_output_power: g.norm_sqr() * x.mean_power(),
            iteration: 1,
            clip_warn_level: None,
            power_tol_db: 0.1,
        };
        let (drive, _, _) = predistort(&session, &x, &f).unwrap();
        assert_eq!(outcome.predistorted.samples, drive.samples);
    }

    #[test]
    fn linear_pa_hits_floor_in_one_iteration() {
        let g = Complex64::new(3.0, 0.0);
        let f = move |x: &IqSignal| {
            IqSignal::new(x.samples.iter().map(|s| g * s).collect(), x.sample_rate)
        };
        let x = drive_signal(7);
        let mut config = DpdConfig::new(BasisSpec::mp(3, 1), vec![]);
        config.iterations = 1;
        let outcome = run_dpd_loop(&f, &x, &config).unwrap();
        assert!(outcome.metrics[1].nmse_to_linear_db < -100.0);
    }

    #[test]
    fn frozen_filters_survive_all_iterations() {
        let pa = default_doherty_like();
        let x = drive_signal(8);
        let mut config =
            DpdConfig::new(pa.true_model.basis, pa.true_model.state_filters.clone());
        config.iterations = 2;
        let f = pa_closure(pa.clone());
        let y = pa.evaluate(&x).unwrap();
        let inverse = fit_inverse(
            &x,
            &y,
            &config.basis,
            &config.frozen_filters,
            0.0,
            config.state_side,
        )
        .unwrap();
        assert_eq!(inverse.state_filters, config.frozen_filters);
        let outcome = run_dpd_loop(&f, &x, &config).unwrap();
        assert!(outcome.metrics.len() >= 2);
    }

    #[test]
    fn zeroed_dynamic_inverse_reduces_to_classical() {
        let pa = default_doherty_like().noiseless();
        let x = drive_signal(9);
        let y = pa.evaluate(&x).unwrap();
        let basis = pa.true_model.basis;
        let mut inverse = fit_inverse(
            &x,
            &y,
            &basis,
            &pa.true_model.state_filters,
            0.0,
            StateSide::Regressor,
        )
        .unwrap();
        for c in &mut inverse.theta_dyn[0] {
            *c = Complex64::new(0.0, 0.0);
        }
        let classical = LtModel::classical(basis, inverse.theta0.clone(), "").unwrap();
        let a = inverse.predict(&x).unwrap();
        let b = classical.predict(&x).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn clip_warning_is_reported() {
        let pa = default_doherty_like();
        let x = drive_signal(10);
        let mut config =
            DpdConfig::new(pa.true_model.basis, pa.true_model.state_filters.clone());
        config.iterations = 1;
        config.clip_warn_level = Some(1e-6); // everything trips the warning
        let f = pa_closure(pa);
        let outcome = run_dpd_loop(&f, &x, &config).unwrap();
        assert!(outcome.metrics[1].clip_warning);
    }

    #[test]
    fn report_text_contains_iterations() {
        let pa = default_doherty_like();
        let x = drive_signal(11);
        let mut config =
            DpdConfig::new(pa.true_model.basis, pa.true_model.state_filters.clone());
        config.iterations = 1;
        let f = pa_closure(pa);
        let outcome = run_dpd_loop(&f, &x, &config).unwrap();
        let text = outcome.to_text();
        assert!(text.starts_with("ltpa-dpd-report-version = 1"));
        assert!(text.contains("[iterations]"));
    }
}
