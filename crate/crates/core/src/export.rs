//! Text renderings of matrices and provenance headers.

use ndarray::Array2;
use sha2::{Digest, Sha256};

/// Ordered `key=value` metadata written at the top of every artifact.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provenance {
    pub fields: Vec<(String, String)>,
}

impl Provenance {
    pub fn new() -> Self {
        Self::default()
    }

    /// Provenance seeded with the SHA-256 digest of the raw input.
    pub fn for_input(input: &[u8]) -> Self {
        Self::new().with("input_sha256", hex::encode(Sha256::digest(input)))
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.fields.push((key.into(), value.to_string()));
        self
    }

    /// `<prefix> key=value key=value`, or nothing when empty.
    pub fn comment_line(&self, prefix: &str) -> String {
        if self.fields.is_empty() {
            return String::new();
        }
        let body: Vec<String> = self
            .fields
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("{prefix} {}\n", body.join(" "))
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Tab-delimited symmetric matrix with a header row and column of asset
/// codes, preceded by `#` metadata lines.
pub fn matrix_to_text(meta: &[String], assets: &[String], values: &Array2<f64>) -> String {
    let mut out = String::new();
    for m in meta {
        out.push_str("# ");
        out.push_str(m);
        out.push('\n');
    }
    out.push_str("asset");
    for a in assets {
        out.push('\t');
        out.push_str(a);
    }
    out.push('\n');
    for (i, a) in assets.iter().enumerate() {
        out.push_str(a);
        for j in 0..assets.len() {
            out.push('\t');
            out.push_str(&format_value(values[[i, j]]));
        }
        out.push('\n');
    }
    out
}

/// Covariance or correlation export with its `numeraire`/`n` metadata line.
pub fn labeled_matrix_text(
    numeraire: &str,
    sample_size: usize,
    assets: &[String],
    values: &Array2<f64>,
) -> String {
    matrix_to_text(
        &[format!("numeraire={numeraire} n={sample_size}")],
        assets,
        values,
    )
}

pub fn cov_text(c: &crate::CovMatrix) -> String {
    labeled_matrix_text(c.numeraire(), c.sample_size(), c.assets(), c.values())
}

pub fn corr_text(c: &crate::CorrMatrix) -> String {
    labeled_matrix_text(c.numeraire(), c.sample_size(), c.assets(), c.values())
}

pub fn mean_text(m: &crate::MeanVector) -> String {
    let mut out = format!("# numeraire={}\nasset\tmean\n", m.numeraire);
    for (a, v) in m.assets.iter().zip(m.values.iter()) {
        out.push_str(&format!("{a}\t{}\n", format_value(*v)));
    }
    out
}

/// Partial-correlation export; uncovered entries are written as `nan`.
pub fn partial_text(p: &crate::PartialCorrMatrix) -> String {
    let ridge = p.ridge.map_or("none".to_string(), |l| format!("{l:e}"));
    matrix_to_text(
        &[
            format!("numeraire={} n={}", p.numeraires.join(","), p.sample_size),
            format!("ridge={ridge} cond={:.6e}", p.condition_estimate),
        ],
        &p.assets,
        &p.values,
    )
}
