//! Partial correlations from the precision matrix, assembly of a full
//! asset-by-asset matrix from several numeraires, and the cross-numeraire
//! invariance audit.
//!
//! The partial correlation of `X` and `Y` given every other asset does not
//! depend on the numeraire: moving from `U` to `W` subtracts `w^u` from each
//! series, and `w^u` lies in the span of the conditioning set. Numerically the
//! agreement is limited only by the conditioning of the correlation matrix.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::AlignedPanel;
use crate::linalg::{norm1, spd_inverse, CholeskyFailure};
use crate::numeraire::{find, log_returns, sample_correlation, CorrMatrix, CovMatrix};

/// Default ridge added to the diagonal when regularization is requested.
pub const DEFAULT_RIDGE: f64 = 1e-8;
/// Condition-number (1-norm) guard for inversion.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionOptions {
    /// `Some(λ)` adds λ to the diagonal before inverting.
    pub ridge: Option<f64>,
    pub max_condition: f64,
}

impl Default for PrecisionOptions {
    fn default() -> Self {
        Self {
            ridge: None,
            max_condition: MAX_CONDITION,
        }
    }
}

impl PrecisionOptions {
    pub fn with_ridge(ridge: f64) -> Self {
        Self {
            ridge: Some(ridge),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionMatrix {
    pub assets: Vec<String>,
    pub values: Array2<f64>,
    pub source_numeraire: String,
    /// 1-norm condition number of the (possibly ridged) inverted matrix.
    pub condition_estimate: f64,
    pub ridge: Option<f64>,
}

/// Pair with the largest absolute off-diagonal entry.
fn most_pegged_pair(assets: &[String], values: &Array2<f64>) -> (String, String) {
    let mut best = (0, 0, -1.0);
    for i in 0..assets.len() {
        for j in (i + 1)..assets.len() {
            let v = values[[i, j]].abs();
            if v > best.2 {
                best = (i, j, v);
            }
        }
    }
    if best.2 < 0.0 {
        let a = assets.first().cloned().unwrap_or_default();
        return (a.clone(), a);
    }
    (assets[best.0].clone(), assets[best.1].clone())
}

fn invert_guarded(
    assets: &[String],
    values: &Array2<f64>,
    numeraire: &str,
    opts: &PrecisionOptions,
) -> Result<PrecisionMatrix> {
    let mut a = values.clone();
    if let Some(l) = opts.ridge {
        for i in 0..a.nrows() {
            a[[i, i]] += l;
        }
    }
    let inv = match spd_inverse(&a) {
        Ok(inv) => inv,
        Err(CholeskyFailure::Singular { .. }) => {
            let (a, b) = most_pegged_pair(assets, values);
            return Err(Error::IllConditioned {
                condition: f64::INFINITY,
                a,
                b,
            });
        }
        Err(CholeskyFailure::NotPositiveDefinite { index, pivot }) => {
            return Err(Error::NotPositiveDefinite {
                asset: assets[index].clone(),
                pivot,
            });
        }
    };
    let condition = norm1(&a) * norm1(&inv);
    if condition.is_nan() || condition > opts.max_condition {
        let (a, b) = most_pegged_pair(assets, values);
        return Err(Error::IllConditioned { condition, a, b });
    }
    Ok(PrecisionMatrix {
        assets: assets.to_vec(),
        values: inv,
        source_numeraire: numeraire.to_string(),
        condition_estimate: condition,
        ridge: opts.ridge,
    })
}

/// Inverse of the correlation matrix through a Cholesky factorization.
pub fn precision_matrix(corr: &CorrMatrix, opts: &PrecisionOptions) -> Result<PrecisionMatrix> {
    invert_guarded(corr.assets(), corr.values(), corr.numeraire(), opts)
}

/// Symmetric matrix of partial correlations with a coverage mask.
///
/// `sample_size` is the smallest pairwise sample behind any covered entry and
/// `conditioning_size` the number of variables each entry was conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialCorrMatrix {
    pub assets: Vec<String>,
    /// NaN where not covered.
    pub values: Array2<f64>,
    pub coverage: Array2<bool>,
    pub sample_size: usize,
    pub conditioning_size: usize,
    pub ridge: Option<f64>,
    /// Largest condition estimate among the inverted matrices.
    pub condition_estimate: f64,
    /// Numeraires whose runs contributed entries.
    pub numeraires: Vec<String>,
}

impl PartialCorrMatrix {
    pub fn index_of(&self, code: &str) -> Option<usize> {
        find(&self.assets, code)
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        self.coverage[[i, j]].then(|| self.values[[i, j]])
    }

    pub fn is_fully_covered(&self) -> bool {
        self.coverage.iter().all(|&c| c)
    }

    /// Coverage error naming the first uncovered pair.
    pub fn require_full_coverage(&self) -> Result<()> {
        for ((i, j), &c) in self.coverage.indexed_iter() {
            if !c {
                return Err(Error::Coverage {
                    a: self.assets[i].clone(),
                    b: self.assets[j].clone(),
                });
            }
        }
        Ok(())
    }
}

fn normalize_precision(p: &PrecisionMatrix) -> Array2<f64> {
    let k = p.assets.len();
    let mut rho = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        rho[[i, i]] = 1.0;
        for j in (i + 1)..k {
            let v = -p.values[[i, j]] / (p.values[[i, i]] * p.values[[j, j]]).sqrt();
            let v = v.clamp(-1.0, 1.0);
            rho[[i, j]] = v;
            rho[[j, i]] = v;
        }
    }
    rho
}

fn from_precision(p: &PrecisionMatrix, sample_size: usize) -> PartialCorrMatrix {
    let k = p.assets.len();
    PartialCorrMatrix {
        assets: p.assets.clone(),
        values: normalize_precision(p),
        coverage: Array2::from_elem((k, k), true),
        sample_size,
        conditioning_size: k.saturating_sub(2),
        ridge: p.ridge,
        condition_estimate: p.condition_estimate,
        numeraires: vec![p.source_numeraire.clone()],
    }
}

/// `ρ_{x,y} = -P_{x,y} / sqrt(P_{x,x} P_{y,y})` with `P` the precision matrix.
pub fn partial_correlations(
    corr: &CorrMatrix,
    opts: &PrecisionOptions,
) -> Result<PartialCorrMatrix> {
    let p = precision_matrix(corr, opts)?;
    Ok(from_precision(&p, corr.sample_size()))
}

/// Same normalization applied to the inverse covariance matrix.
pub fn partial_correlations_from_covariance(
    cov: &CovMatrix,
    opts: &PrecisionOptions,
) -> Result<PartialCorrMatrix> {
    let p = invert_guarded(cov.assets(), cov.values(), cov.numeraire(), opts)?;
    Ok(from_precision(&p, cov.sample_size()))
}

/// Partial correlations of every non-numeraire asset measured in `numeraire`.
pub fn partial_correlations_in(
    aligned: &AlignedPanel,
    numeraire: &str,
    opts: &PrecisionOptions,
) -> Result<PartialCorrMatrix> {
    let corr = sample_correlation(&log_returns(aligned, numeraire)?)?;
    partial_correlations(&corr, opts)
}

/// Per-entry spread of partial correlations across admissible numeraires.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyAudit {
    pub assets: Vec<String>,
    /// Max absolute pairwise discrepancy; NaN where fewer than two numeraires
    /// were admissible.
    pub discrepancy: Array2<f64>,
    pub max_discrepancy: f64,
}

/// Full universe partial-correlation matrix: each pair `{X, Y}` is taken from
/// the first listed numeraire not in `{X, Y}`. Pairs no listed numeraire can
/// reach stay uncovered (see [`PartialCorrMatrix::require_full_coverage`]).
pub fn assemble_full_partial_matrix(
    aligned: &AlignedPanel,
    numeraires: &[String],
    opts: &PrecisionOptions,
    exec: Exec,
) -> Result<(PartialCorrMatrix, AssemblyAudit)> {
    if numeraires.is_empty() {
        return Err(Error::Usage("at least one numeraire is required".into()));
    }
    let universe = aligned.panel().universe();
    for u in numeraires {
        if find(&universe, u).is_none() {
            return Err(Error::UnknownAsset(u.clone()));
        }
    }
    let runs = exec.try_map(numeraires, |u| partial_correlations_in(aligned, u, opts))?;

    let n = universe.len();
    let mut values = Array2::from_elem((n, n), f64::NAN);
    let mut coverage = Array2::from_elem((n, n), false);
    let mut discrepancy = Array2::from_elem((n, n), f64::NAN);
    let mut max_discrepancy = 0.0_f64;
    for i in 0..n {
        values[[i, i]] = 1.0;
        coverage[[i, i]] = true;
        discrepancy[[i, i]] = 0.0;
        for j in (i + 1)..n {
            let admissible: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.get(&universe[i], &universe[j]))
                .collect();
            let Some(&first) = admissible.first() else {
                continue;
            };
            values[[i, j]] = first;
            values[[j, i]] = first;
            coverage[[i, j]] = true;
            coverage[[j, i]] = true;
            if admissible.len() >= 2 {
                let lo = admissible.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = admissible.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let d = hi - lo;
                discrepancy[[i, j]] = d;
                discrepancy[[j, i]] = d;
                max_discrepancy = max_discrepancy.max(d);
            }
        }
    }
    let matrix = PartialCorrMatrix {
        assets: universe.clone(),
        values,
        coverage,
        sample_size: runs.iter().map(|r| r.sample_size).min().unwrap_or(0),
        conditioning_size: runs.iter().map(|r| r.conditioning_size).max().unwrap_or(0),
        ridge: opts.ridge,
        condition_estimate: runs
            .iter()
            .map(|r| r.condition_estimate)
            .fold(0.0, f64::max),
        numeraires: numeraires.to_vec(),
    };
    Ok((
        matrix,
        AssemblyAudit {
            assets: universe,
            discrepancy,
            max_discrepancy,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub u: String,
    pub w: String,
    /// `(X, Y, |ρ^u - ρ^w|)` for every pair disjoint from `{U, W}`.
    pub pairs: Vec<(String, String, f64)>,
    pub max: f64,
    pub mean: f64,
}

impl InvarianceReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# invariance u={} w={} pairs={} max={:.6e} mean={:.6e}\n",
            self.u,
            self.w,
            self.pairs.len(),
            self.max,
            self.mean
        );
        for (a, b, d) in &self.pairs {
            out.push_str(&format!("{a}\t{b}\t{d:.6e}\n"));
        }
        out
    }
}

/// Compare partial correlations computed in numeraires `u` and `w`.
pub fn invariance_report(
    aligned: &AlignedPanel,
    u: &str,
    w: &str,
    opts: &PrecisionOptions,
) -> Result<InvarianceReport> {
    if u == w {
        return Err(Error::Precondition(format!(
            "invariance report needs two distinct numeraires, got {u} twice"
        )));
    }
    let pu = partial_correlations_in(aligned, u, opts)?;
    let pw = partial_correlations_in(aligned, w, opts)?;
    let mut pairs = Vec::new();
    let common: Vec<&String> = pu.assets.iter().filter(|a| *a != w).collect();
    for (i, a) in common.iter().enumerate() {
        for b in &common[i + 1..] {
            let (Some(x), Some(y)) = (pu.get(a, b), pw.get(a, b)) else {
                continue;
            };
            pairs.push((a.to_string(), b.to_string(), (x - y).abs()));
        }
    }
    let max = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
    let mean = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64
    };
    Ok(InvarianceReport {
        u: u.to_string(),
        w: w.to_string(),
        pairs,
        max,
        mean,
    })
}
