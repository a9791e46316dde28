//! The long-term-memory behavioral model: a nonlinear basis whose parameters
//! vary linearly with one or more slow power states,
//!
//! ```text
//! y[n] = H_x[n] . (theta0 + sum_k s_k[n] theta_k)
//! ```
//!
//! With no state filters (K = 0) this reduces exactly to the classical
//! linear-in-parameters model y = H_x . theta0.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::basis::{build_matrix, BasisKind, BasisMatrix, BasisSpec};
use crate::error::{Error, Result};
use crate::signal::IqSignal;
use crate::state::{compute_state, StateFilter};

pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LtModel {
    pub basis: BasisSpec,
    pub state_filters: Vec<StateFilter>,
    pub theta0: Vec<Complex64>,
    pub theta_dyn: Vec<Vec<Complex64>>,
    pub label: String,
}

impl LtModel {
    pub fn new(
        basis: BasisSpec,
        state_filters: Vec<StateFilter>,
        theta0: Vec<Complex64>,
        theta_dyn: Vec<Vec<Complex64>>,
        label: impl Into<String>,
    ) -> Result<Self> {
        basis.validate()?;
        let count = basis.parameter_count();
        if theta0.len() != count {
            return Err(Error::invalid(format!(
                "theta0 has {} entries, basis has {} columns",
                theta0.len(),
                count
            )));
        }
        if theta_dyn.len() != state_filters.len() {
            return Err(Error::invalid(format!(
                "{} state filters but {} dynamic parameter vectors",
                state_filters.len(),
                theta_dyn.len()
            )));
        }
        for (k, t) in theta_dyn.iter().enumerate() {
            if t.len() != count {
                return Err(Error::invalid(format!(
                    "theta.{} has {} entries, basis has {} columns",
                    k + 1,
                    t.len(),
                    count
                )));
            }
        }
        Ok(LtModel {
            basis,
            state_filters,
            theta0,
            theta_dyn,
            label: label.into(),
        })
    }

    /// A classical (state-free) model.
    pub fn classical(basis: BasisSpec, theta0: Vec<Complex64>, label: impl Into<String>) -> Result<Self> {
        LtModel::new(basis, vec![], theta0, vec![], label)
    }

    pub fn num_states(&self) -> usize {
        self.state_filters.len()
    }

    /// Total parameter count: (1 + K) basis columns.
    pub fn parameter_count(&self) -> usize {
        (1 + self.num_states()) * self.basis.parameter_count()
    }

    /// Model output for the record `x`, states computed from scratch.
    pub fn predict(&self, x: &IqSignal) -> Result<IqSignal> {
        let h = build_matrix(&self.basis, x)?;
        let states: Vec<Vec<Complex64>> = self
            .state_filters
            .iter()
            .map(|f| compute_state(f, x))
            .collect();
        let y = self.predict_with(&h, &states);
        IqSignal::new(y, x.sample_rate)
    }

    /// Model output given a prebuilt basis matrix and state sequences. Used by
    /// the identification loop to avoid rebuilding H_x.
    pub fn predict_with(&self, h: &BasisMatrix, states: &[Vec<Complex64>]) -> Vec<Complex64> {
        assert_eq!(states.len(), self.num_states());
        let mut y = h.apply(&self.theta0);
        for (s, theta) in states.iter().zip(&self.theta_dyn) {
            let dyn_part = h.apply(theta);
            for (n, v) in y.iter_mut().enumerate() {
                *v += s[n] * dyn_part[n];
            }
        }
        y
    }

    /// Floating-point operations per output sample under the documented cost
    /// model (real flops; one complex multiply = 6, complex add = 2,
    /// real-by-complex multiply = 2):
    ///
    /// * envelope table: |x|^2 (3) + sqrt (1) + P-2 real multiplies for the
    ///   power chain (orders above 2);
    /// * one real-by-complex multiply (2) per column with p >= 2;
    /// * dot products: (1+K) * cols complex multiplies and adds, plus one
    ///   complex multiply and add per state to apply s_k;
    /// * state update per AR/ARMA filter: one complex multiply and one
    ///   complex add per pole and per zero; FIR: 2 adds and 1 multiply.
    pub fn flop_cost(&self) -> usize {
        const CM: usize = 6;
        const CA: usize = 2;
        const CRM: usize = 2;
        let p = self.basis.nonlinear_order;
        let cols = self.basis.parameter_count();
        let k = self.num_states();

        let mut cost = 3 + 1 + p.saturating_sub(2); // envelope power table
        let scaled_cols = self
            .basis
            .column_labels()
            .iter()
            .filter(|l| l.p >= 2)
            .count();
        cost += CRM * scaled_cols;
        cost += (1 + k) * cols * CM + ((1 + k) * cols - 1) * CA;
        cost += k * (CM + CA);
        for f in &self.state_filters {
            cost += match f {
                StateFilter::Fir { .. } => 3,
                _ => (f.poles().len() + f.zeros().len()) * (CM + CA),
            };
        }
        cost
    }
}

// ---------------------------------------------------------------------------
// Model file: versioned line-oriented text, sections [basis], [state_filter.k],
// [theta.0], [theta.k]; complex values as `re im` pairs with 17 significant
// digits.
// ---------------------------------------------------------------------------

pub fn save_model(model: &LtModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn model_to_string(model: &LtModel) -> String {
    let mut out = String::new();
    out.push_str(&format!("ltpa-model-version = {MODEL_FILE_VERSION}\n"));
    out.push_str(&format!("label = {}\n", model.label));
    out.push_str("[basis]\n");
    out.push_str(&format!("kind = {}\n", model.basis.kind));
    out.push_str(&format!("nonlinear_order = {}\n", model.basis.nonlinear_order));
    out.push_str(&format!("memory_depth = {}\n", model.basis.memory_depth));
    out.push_str(&format!("cross_depth = {}\n", model.basis.cross_depth));
    out.push_str(&format!("odd_only = {}\n", model.basis.odd_only));
    for (k, f) in model.state_filters.iter().enumerate() {
        out.push_str(&format!("[state_filter.{k}]\n"));
        match f {
            StateFilter::Fir { window, .. } => {
                out.push_str("kind = fir\n");
                out.push_str(&format!("window = {window}\n"));
            }
            StateFilter::Ar { poles, .. } => {
                out.push_str("kind = ar\n");
                push_array(&mut out, "pole", poles);
            }
            StateFilter::Arma { poles, zeros, .. } => {
                out.push_str("kind = arma\n");
                push_array(&mut out, "pole", poles);
                push_array(&mut out, "zero", zeros);
            }
        }
        let s0 = f.initial_state();
        out.push_str(&format!("initial_state = {} {}\n", fmt(s0.re), fmt(s0.im)));
    }
    out.push_str("[theta.0]\n");
    push_indexed(&mut out, &model.theta0);
    for (k, t) in model.theta_dyn.iter().enumerate() {
        out.push_str(&format!("[theta.{}]\n", k + 1));
        push_indexed(&mut out, t);
    }
    out
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_array(out: &mut String, name: &str, values: &[Complex64]) {
    out.push_str(&format!("{name}s = {}\n", values.len()));
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{name} {i} {} {}\n", fmt(v.re), fmt(v.im)));
    }
}

fn push_indexed(out: &mut String, values: &[Complex64]) {
    out.push_str(&format!("count = {}\n", values.len()));
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i} {} {}\n", fmt(v.re), fmt(v.im)));
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LtModel> {
    let text = fs::read_to_string(path)?;
    model_from_str(&text)
}

pub fn model_from_str(text: &str) -> Result<LtModel> {
    let mut lines = text.lines().enumerate();
    let ferr = |line: usize, msg: String| Error::format(format!("line {}: {msg}", line + 1), None);

    match lines.next() {
        Some((_, l)) if parse_kv(l) == Some(("ltpa-model-version", "1")) => {}
        Some((i, l)) => {
            return Err(ferr(
                i,
                format!("expected `ltpa-model-version = 1`, got {l:?}"),
            ))
        }
        None => return Err(Error::format("empty model file", Some(0))),
    }

    // Collect sections as (header -> lines).
    let mut label = String::new();
    let mut sections: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            let name = line[1..line.len() - 1].to_string();
            if sections.contains_key(&name) {
                return Err(ferr(i, format!("duplicate section [{name}]")));
            }
            sections.insert(name.clone(), Vec::new());
            current = Some(name);
        } else if let Some(sec) = &current {
            sections
                .get_mut(sec)
                .unwrap()
                .push((i, line.to_string()));
        } else if let Some(("label", v)) = parse_kv(line) {
            label = v.to_string();
        } else {
            return Err(ferr(i, format!("unexpected line outside section: {line:?}")));
        }
    }

    let basis_lines = sections
        .remove("basis")
        .ok_or_else(|| Error::format("missing [basis] section", None))?;
    let kv: BTreeMap<&str, (usize, &str)> = basis_lines
        .iter()
        .filter_map(|(i, l)| parse_kv(l).map(|(k, v)| (k, (*i, v))))
        .collect();
    let get = |key: &str| -> Result<&str> {
        kv.get(key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::format(format!("[basis] missing key {key}"), None))
    };
    let kind = match get("kind")? {
        "mp" => BasisKind::Mp,
        "gmp" => BasisKind::Gmp,
        "volterra" => BasisKind::Volterra,
        other => return Err(Error::format(format!("unknown basis kind {other:?}"), None)),
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|e| Error::format(format!("[basis] {key}: {e}"), None))
    };
    let basis = BasisSpec {
        kind,
        nonlinear_order: parse_usize("nonlinear_order")?,
        memory_depth: parse_usize("memory_depth")?,
        cross_depth: parse_usize("cross_depth")?,
        odd_only: get("odd_only")? == "true",
    };

    let mut state_filters = Vec::new();
    for k in 0.. {
        let Some(lines) = sections.remove(&format!("state_filter.{k}")) else {
            break;
        };
        state_filters.push(parse_filter(&lines)?);
    }

    let mut thetas = Vec::new();
    for k in 0.. {
        let Some(lines) = sections.remove(&format!("theta.{k}")) else {
            break;
        };
        thetas.push(parse_theta(&lines)?);
    }
    if let Some(name) = sections.keys().next() {
        return Err(Error::format(format!("unexpected section [{name}]"), None));
    }
    if thetas.is_empty() {
        return Err(Error::format("missing [theta.0] section", None));
    }
    let theta0 = thetas.remove(0);
    if thetas.len() != state_filters.len() {
        return Err(Error::format(
            format!(
                "{} state filter(s) but {} dynamic theta vector(s); counts must match",
                state_filters.len(),
                thetas.len()
            ),
            None,
        ));
    }
    LtModel::new(basis, state_filters, theta0, thetas, label)
        .map_err(|e| Error::format(format!("inconsistent model: {e}"), None))
}

fn parse_kv(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

fn parse_complex(fields: &[&str]) -> Result<Complex64> {
    if fields.len() != 2 {
        return Err(Error::format(
            format!("expected `re im`, got {} field(s)", fields.len()),
            None,
        ));
    }
    let re: f64 = fields[0]
        .parse()
        .map_err(|e| Error::format(format!("bad real part: {e}"), None))?;
    let im: f64 = fields[1]
        .parse()
        .map_err(|e| Error::format(format!("bad imaginary part: {e}"), None))?;
    if !re.is_finite() || !im.is_finite() {
        return Err(Error::format("non-finite numeric field", None));
    }
    Ok(Complex64::new(re, im))
}

fn parse_filter(lines: &[(usize, String)]) -> Result<StateFilter> {
    let mut kind = None;
    let mut window = None;
    let mut poles: Vec<Complex64> = Vec::new();
    let mut zeros: Vec<Complex64> = Vec::new();
    let mut initial = Complex64::new(0.0, 0.0);
    for (_, line) in lines {
        if let Some((k, v)) = parse_kv(line) {
            match k {
                "kind" => kind = Some(v.to_string()),
                "window" => {
                    window = Some(v.parse::<usize>().map_err(|e| {
                        Error::format(format!("bad window: {e}"), None)
                    })?)
                }
                "poles" | "zeros" => {} // redundant counts, validated below
                "initial_state" => {
                    initial = parse_complex(&v.split_whitespace().collect::<Vec<_>>())?
                }
                other => return Err(Error::format(format!("unknown filter key {other:?}"), None)),
            }
        } else {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.first() {
                Some(&"pole") => poles.push(parse_complex(&fields[2..])?),
                Some(&"zero") => zeros.push(parse_complex(&fields[2..])?),
                _ => return Err(Error::format(format!("unexpected line {line:?}"), None)),
            }
        }
    }
    let filter = match kind.as_deref() {
        Some("fir") => StateFilter::fir(
            window.ok_or_else(|| Error::format("fir filter missing window", None))?,
        )?,
        Some("ar") => StateFilter::ar(poles)?,
        Some("arma") => StateFilter::arma(poles, zeros)?,
        other => return Err(Error::format(format!("unknown filter kind {other:?}"), None)),
    };
    Ok(filter.with_initial_state(initial))
}

fn parse_theta(lines: &[(usize, String)]) -> Result<Vec<Complex64>> {
    let mut declared = None;
    let mut values = Vec::new();
    for (_, line) in lines {
        if let Some(("count", v)) = parse_kv(line) {
            declared = Some(v.parse::<usize>().map_err(|e| {
                Error::format(format!("bad count: {e}"), None)
            })?);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::format(
                format!("expected `index re im`, got {line:?}"),
                None,
            ));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|e| Error::format(format!("bad index: {e}"), None))?;
        if idx != values.len() {
            return Err(Error::format(
                format!("theta entries out of order at index {idx}"),
                None,
            ));
        }
        values.push(parse_complex(&fields[1..])?);
    }
    if let Some(d) = declared {
        if d != values.len() {
            return Err(Error::format(
                format!("theta declares {d} entries but has {}", values.len()),
                None,
            ));
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_signal(len: usize, seed: u64) -> IqSignal {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        IqSignal::new(
            (0..len)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
            1e6,
        )
        .unwrap()
    }

    fn test_model(seed: u64) -> LtModel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let basis = BasisSpec::mp(5, 2);
        let count = basis.parameter_count();
        let mut theta = |scale: f64| -> Vec<Complex64> {
            (0..count)
                .map(|_| Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
                .collect()
        };
        LtModel::new(
            basis,
            vec![StateFilter::ar1(0.97).unwrap()],
            theta(1.0),
            vec![theta(0.05)],
            "test",
        )
        .unwrap()
    }

    #[test]
    fn classical_model_equals_matrix_product() {
        let basis = BasisSpec::mp(3, 1);
        let theta: Vec<Complex64> = (0..basis.parameter_count())
            .map(|i| Complex64::new(1.0 / (i + 1) as f64, 0.1 * i as f64))
            .collect();
        let model = LtModel::classical(basis, theta.clone(), "classical").unwrap();
        let x = random_signal(64, 4);
        let y = model.predict(&x).unwrap();
        let h = build_matrix(&basis, &x).unwrap();
        let direct = h.apply(&theta);
        assert_eq!(y.samples, direct);
    }

    #[test]
    fn zero_dynamic_theta_bit_equals_classical() {
        let mut model = test_model(1);
        for t in model.theta_dyn.iter_mut().flatten() {
            *t = Complex64::new(0.0, 0.0);
        }
        let classical =
            LtModel::classical(model.basis, model.theta0.clone(), "c").unwrap();
        let x = random_signal(128, 5);
        assert_eq!(
            model.predict(&x).unwrap().samples,
            classical.predict(&x).unwrap().samples
        );
    }

    #[test]
    fn scalar_reference_loop_oracle() {
        // Sample-by-sample evaluation of the MP + AR(1) model equations in an
        // independent scalar double loop.
        let model = test_model(2);
        let alpha = model.state_filters[0].poles()[0];
        let x = random_signal(512, 6);
        let y = model.predict(&x).unwrap();
        let p = model.basis.nonlinear_order;
        let m_max = model.basis.memory_depth;
        let mut s_prev = Complex64::new(0.0, 0.0);
        for n in 0..512usize {
            let s = Complex64::new(x.samples[n].norm_sqr(), 0.0) + alpha * s_prev;
            s_prev = s;
            let mut expected = Complex64::new(0.0, 0.0);
            let mut col = 0;
            for m in 0..=m_max {
                for pp in 1..=p {
                    let xv = if n >= m {
                        x.samples[n - m]
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    let basis_val = xv * xv.norm().powi(pp as i32 - 1);
                    expected += basis_val * (model.theta0[col] + s * model.theta_dyn[0][col]);
                    col += 1;
                }
            }
            assert!(
                (y.samples[n] - expected).norm() <= 1e-10 * expected.norm().max(1.0),
                "n={n}"
            );
        }
    }

    #[test]
    fn constant_envelope_reduces_to_effective_parameters() {
        let model = test_model(3);
        let c = 0.6;
        let x = IqSignal::new(vec![Complex64::new(c, 0.0); 3000], 1e6).unwrap();
        let y = model.predict(&x).unwrap();
        let g0 = 1.0 / (1.0 - model.state_filters[0].poles()[0].re);
        let s_bar = Complex64::new(c * c * g0, 0.0);
        let theta_eff: Vec<Complex64> = model
            .theta0
            .iter()
            .zip(&model.theta_dyn[0])
            .map(|(a, b)| a + s_bar * b)
            .collect();
        let classical = LtModel::classical(model.basis, theta_eff, "eff").unwrap();
        let y_eff = classical.predict(&x).unwrap();
        // compare after state settling
        for n in 2500..3000 {
            assert!((y.samples[n] - y_eff.samples[n]).norm() < 1e-6);
        }
    }

    #[test]
    fn lt_parameter_count_doubles() {
        let model = test_model(4);
        let classical = LtModel::classical(model.basis, model.theta0.clone(), "c").unwrap();
        assert_eq!(model.parameter_count(), 2 * classical.parameter_count());
    }

    #[test]
    fn smallest_model_costs_one_complex_multiply() {
        let model = LtModel::classical(
            BasisSpec::mp(1, 0),
            vec![Complex64::new(1.0, 0.0)],
            "tiny",
        )
        .unwrap();
        // envelope table (|x|^2 + sqrt) + one complex multiply, no adds.
        assert_eq!(model.flop_cost(), 4 + 6);
    }

    #[test]
    fn flop_cost_matches_hand_count_mp74_ar1() {
        let basis = BasisSpec::mp(7, 4);
        let count = basis.parameter_count();
        let model = LtModel::new(
            basis,
            vec![StateFilter::ar1(0.999).unwrap()],
            vec![Complex64::new(0.1, 0.0); count],
            vec![vec![Complex64::new(0.01, 0.0); count]],
            "mp74",
        )
        .unwrap();
        // Hand tally per the documented table:
        // envelope: 3 + 1 + (7-2) = 9
        // scaled columns: p>=2 -> 6 orders * 5 lags = 30 columns -> 60
        // dots: 2*35 complex muls (420) + (70-1) complex adds (138)
        // apply state: 1 mul + 1 add = 8
        // AR(1) update: 1 pole -> 6 + 2 = 8
        assert_eq!(model.flop_cost(), 9 + 60 + 420 + 138 + 8 + 8);
    }

    proptest! {
        #[test]
        fn flop_cost_monotone(p in 1usize..6, m in 0usize..5, k in 0usize..3) {
            let mk = |p: usize, m: usize, k: usize| {
                let basis = BasisSpec::mp(p, m);
                let c = basis.parameter_count();
                LtModel::new(
                    basis,
                    (0..k).map(|_| StateFilter::ar1(0.9).unwrap()).collect(),
                    vec![Complex64::new(0.1, 0.0); c],
                    vec![vec![Complex64::new(0.0, 0.0); c]; k],
                    "",
                )
                .unwrap()
                .flop_cost()
            };
            prop_assert!(mk(p + 1, m, k) > mk(p, m, k));
            prop_assert!(mk(p, m + 1, k) > mk(p, m, k));
            prop_assert!(mk(p, m, k + 1) > mk(p, m, k));
        }

        #[test]
        fn mp_predict_phase_homogeneous(seed in 0u64..30, phase in 0.0..std::f64::consts::TAU) {
            let model = test_model(seed);
            let x = random_signal(100, seed + 1000);
            let c = Complex64::from_polar(1.0, phase);
            let y = model.predict(&x).unwrap();
            let yr = model.predict(&x.scaled(c)).unwrap();
            for (a, b) in y.samples.iter().zip(&yr.samples) {
                prop_assert!((a * c - b).norm() < 1e-9 * a.norm().max(1.0));
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ltpa");
        let model = test_model(7);
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn arma_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ltpa");
        let basis = BasisSpec::gmp(3, 1, 1);
        let c = basis.parameter_count();
        let model = LtModel::new(
            basis,
            vec![
                StateFilter::arma11(0.995, -0.3).unwrap(),
                StateFilter::fir(40).unwrap(),
            ],
            vec![Complex64::new(0.123456789012345, -1.0); c],
            vec![vec![Complex64::new(1e-7, 2e-3); c]; 2],
            "arma fixture",
        )
        .unwrap();
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn mismatched_theta_count_is_format_error() {
        let model = test_model(8);
        let mut text = model_to_string(&model);
        // Drop the dynamic theta section entirely: K=1 filters, one theta.
        let cut = text.find("[theta.1]").unwrap();
        text.truncate(cut);
        match model_from_str(&text) {
            Err(Error::Format { msg, .. }) => assert!(msg.contains("must match"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn handwritten_minimal_model_is_identity_gain() {
        let text = "ltpa-model-version = 1\n\
                    label = identity\n\
                    [basis]\n\
                    kind = mp\n\
                    nonlinear_order = 1\n\
                    memory_depth = 0\n\
                    cross_depth = 0\n\
                    odd_only = false\n\
                    [theta.0]\n\
                    0 1.0 0.0\n";
        let model = model_from_str(text).unwrap();
        let x = random_signal(16, 9);
        let y = model.predict(&x).unwrap();
        assert_eq!(y.samples, x.samples);
    }

    #[test]
    fn corrupt_numeric_field_is_format_error() {
        let model = test_model(10);
        let text = model_to_string(&model).replace("nonlinear_order = 5", "nonlinear_order = bogus");
        assert!(matches!(
            model_from_str(&text),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let model = test_model(11);
        let text = model_to_string(&model).replacen("= 1", "= 2", 1);
        assert!(matches!(model_from_str(&text), Err(Error::Format { .. })));
    }
}
