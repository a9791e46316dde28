//! Small line-oriented file format for a single state filter, used to hand
//! the two-tone initialization result to `fit --state-file`.

use std::path::Path;

use num_complex::Complex64;

use ltpa_core::state::StateFilter;
use ltpa_core::Error;

pub fn write_filter(path: &Path, filter: &StateFilter) -> Result<(), Error> {
    let mut out = String::from("ltpa-filter-version = 1\n");
    match filter {
        StateFilter::Fir { window, .. } => {
            out.push_str("kind = fir\n");
            out.push_str(&format!("window = {window}\n"));
        }
        StateFilter::Ar { poles, .. } => {
            out.push_str("kind = ar\n");
            for p in poles {
                out.push_str(&format!("pole = {:.17e} {:.17e}\n", p.re, p.im));
            }
        }
        StateFilter::Arma { poles, zeros, .. } => {
            out.push_str("kind = arma\n");
            for p in poles {
                out.push_str(&format!("pole = {:.17e} {:.17e}\n", p.re, p.im));
            }
            for z in zeros {
                out.push_str(&format!("zero = {:.17e} {:.17e}\n", z.re, z.im));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_filter(path: &Path) -> Result<StateFilter, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut kind: Option<String> = None;
    let mut window: Option<usize> = None;
    let mut poles: Vec<Complex64> = Vec::new();
    let mut zeros: Vec<Complex64> = Vec::new();
    let mut lines = text.lines();
    match lines.next() {
        Some("ltpa-filter-version = 1") => {}
        other => {
            return Err(Error::format(
                format!("expected filter header, got {other:?}"),
                Some(0),
            ))
        }
    }
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("bad filter line {line:?}"), None))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "kind" => kind = Some(value.to_string()),
            "window" => {
                window = Some(value.parse().map_err(|_| {
                    Error::format(format!("bad window value {value:?}"), None)
                })?)
            }
            "pole" | "zero" => {
                let mut parts = value.split_whitespace();
                let re: f64 = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::format(format!("bad complex value {value:?}"), None))?;
                let im: f64 = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::format(format!("bad complex value {value:?}"), None))?;
                let c = Complex64::new(re, im);
                if key == "pole" {
                    poles.push(c);
                } else {
                    zeros.push(c);
                }
            }
            _ => return Err(Error::format(format!("unknown filter key {key:?}"), None)),
        }
    }
    match kind.as_deref() {
        Some("fir") => StateFilter::fir(
            window.ok_or_else(|| Error::format("fir filter needs a window line", None))?,
        ),
        Some("ar") => StateFilter::ar(poles),
        Some("arma") => StateFilter::arma(poles, zeros),
        other => Err(Error::format(format!("unknown filter kind {other:?}"), None)),
    }
}

pub fn describe(filter: &StateFilter) -> String {
    match filter {
        StateFilter::Fir { window, .. } => format!("fir({window})"),
        StateFilter::Ar { poles, .. } if poles.len() == 1 && poles[0].im == 0.0 => {
            format!("ar1(alpha = {:.6})", poles[0].re)
        }
        StateFilter::Ar { poles, .. } => format!("ar({} poles)", poles.len()),
        StateFilter::Arma { poles, zeros, .. }
            if poles.len() == 1 && zeros.len() == 1 && poles[0].im == 0.0 && zeros[0].im == 0.0 =>
        {
            format!("arma11(alpha = {:.6}, beta = {:.6})", poles[0].re, zeros[0].re)
        }
        StateFilter::Arma { poles, zeros, .. } => {
            format!("arma({} poles, {} zeros)", poles.len(), zeros.len())
        }
    }
}
