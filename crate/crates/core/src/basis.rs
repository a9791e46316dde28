//! Regression-matrix construction for the supported behavioral-model
//! structures: memory polynomial (MP), generalized memory polynomial (GMP),
//! and a pruned baseband Volterra series.
//!
//! Conventions (fixed here so parameter counts are reproducible):
//!
//! * MP: columns x[n-m] |x[n-m]|^(p-1) for p = 1..P, m = 0..M.
//! * GMP(P, M, G): the MP columns plus, for p >= 2 and g = 1..G, the lagged
//!   and leading envelope cross terms x[n-m] |x[n-m-g]|^(p-1) and
//!   x[n-m] |x[n-m+g]|^(p-1). The p = 1 cross terms are omitted because they
//!   duplicate the MP linear columns.
//! * Volterra(P, M): the MP (diagonal-kernel) columns plus, for p >= 2, the
//!   first-off-diagonal envelope terms x[n-m] |x[n-m-1]|^(p-1) and
//!   x[n-m] |x[n-m+1]|^(p-1).
//! * Samples at negative indices are zero; leading signals (n-m+g beyond the
//!   record end) are also zero.
//! * `odd_only` restricts p to 1, 3, 5, ...

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::IqSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Mp,
    Gmp,
    Volterra,
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisKind::Mp => write!(f, "mp"),
            BasisKind::Gmp => write!(f, "gmp"),
            BasisKind::Volterra => write!(f, "volterra"),
        }
    }
}

/// Structure of the nonlinear basis: model family, nonlinear order P, memory
/// depth M, and cross-term depth G (GMP only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub nonlinear_order: usize,
    pub memory_depth: usize,
    pub cross_depth: usize,
    pub odd_only: bool,
}

/// Label of one basis column: nonlinear order `p`, memory lag `m`, and the
/// envelope lag `g` relative to `m` (0 for aligned terms, signed for GMP /
/// Volterra cross terms).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnLabel {
    pub p: usize,
    pub m: usize,
    pub g: i64,
}

impl BasisSpec {
    pub fn mp(p: usize, m: usize) -> Self {
        BasisSpec {
            kind: BasisKind::Mp,
            nonlinear_order: p,
            memory_depth: m,
            cross_depth: 0,
            odd_only: false,
        }
    }

    pub fn gmp(p: usize, m: usize, g: usize) -> Self {
        BasisSpec {
            kind: BasisKind::Gmp,
            nonlinear_order: p,
            memory_depth: m,
            cross_depth: g,
            odd_only: false,
        }
    }

    pub fn volterra(p: usize, m: usize) -> Self {
        BasisSpec {
            kind: BasisKind::Volterra,
            nonlinear_order: p,
            memory_depth: m,
            cross_depth: 0,
            odd_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nonlinear_order < 1 {
            return Err(Error::invalid("nonlinear order P must be >= 1"));
        }
        if self.kind != BasisKind::Gmp && self.cross_depth != 0 {
            return Err(Error::invalid("cross_depth G must be 0 unless kind is GMP"));
        }
        if self.parameter_count() == 0 {
            return Err(Error::invalid("basis has no columns"));
        }
        Ok(())
    }

    fn orders(&self) -> Vec<usize> {
        let step = if self.odd_only { 2 } else { 1 };
        (1..=self.nonlinear_order).step_by(step).collect()
    }

    /// Labels of the generated columns, in column order.
    pub fn column_labels(&self) -> Vec<ColumnLabel> {
        // Memory-major ordering: for each lag m, all nonlinear orders p. This
        // matches the reference MP(2,1) layout [x[n], x[n]|x[n]|, x[n-1], ...].
        let mut labels = Vec::new();
        for m in 0..=self.memory_depth {
            for p in self.orders() {
                labels.push(ColumnLabel { p, m, g: 0 });
            }
        }
        let cross_depth = match self.kind {
            BasisKind::Mp => 0,
            BasisKind::Gmp => self.cross_depth,
            BasisKind::Volterra => 1,
        };
        for g in 1..=cross_depth {
            for m in 0..=self.memory_depth {
                for p in self.orders() {
                    if p < 2 {
                        continue;
                    }
                    labels.push(ColumnLabel { p, m, g: g as i64 });
                    labels.push(ColumnLabel {
                        p,
                        m,
                        g: -(g as i64),
                    });
                }
            }
        }
        labels
    }

    pub fn parameter_count(&self) -> usize {
        self.column_labels().len()
    }
}

/// The regression matrix H_x, stored row-major (one row per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<Complex64>,
    pub column_labels: Vec<ColumnLabel>,
}

impl BasisMatrix {
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    /// y[n] = H_x[n] . theta
    pub fn apply(&self, theta: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(theta.len(), self.cols, "theta length mismatch");
        (0..self.rows)
            .map(|n| {
                self.row(n)
                    .iter()
                    .zip(theta)
                    .map(|(h, t)| h * t)
                    .sum::<Complex64>()
            })
            .collect()
    }
}

/// Builds the regression matrix for `spec` over the record `x`. Samples
/// before index 0 (and past the end, for leading terms) are treated as zero.
pub fn build_matrix(spec: &BasisSpec, x: &IqSignal) -> Result<BasisMatrix> {
    spec.validate()?;
    if x.len() < spec.memory_depth + 1 {
        return Err(Error::invalid(format!(
            "signal length {} is shorter than memory depth {} + 1",
            x.len(),
            spec.memory_depth
        )));
    }
    let labels = spec.column_labels();
    let n = x.len();
    let env: Vec<f64> = x.samples.iter().map(|c| c.norm()).collect();
    let sample = |i: isize| -> Complex64 {
        if i >= 0 && (i as usize) < n {
            x.samples[i as usize]
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let envelope = |i: isize| -> f64 {
        if i >= 0 && (i as usize) < n {
            env[i as usize]
        } else {
            0.0
        }
    };
    let mut entries = Vec::with_capacity(n * labels.len());
    for row in 0..n {
        for label in &labels {
            let base = row as isize - label.m as isize;
            let env_idx = base - label.g as isize;
            let value = sample(base) * envelope(env_idx).powi(label.p as i32 - 1);
            entries.push(value);
        }
    }
    Ok(BasisMatrix {
        rows: n,
        cols: labels.len(),
        entries,
        column_labels: labels,
    })
}
