//! Log returns under an arbitrary numeraire and the analytic transforms of
//! means, covariances and correlations between numeraires.
//!
//! All asset lists are kept sorted. When an operation re-expresses a panel or
//! matrix in a new numeraire `W`, the old numeraire `U` is inserted at its
//! sorted position and `W` is removed.

use std::sync::Arc;

use chrono::NaiveDate;
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::AlignedPanel;

/// Tolerance (relative to matrix scale) below which a rounding excursion is
/// treated as zero: correlation clamping and negative-variance checks.
pub const ROUNDING_TOL: f64 = 1e-12;

/// Sorted insert of `code` into an already sorted list.
pub(crate) fn insert_sorted(list: &mut Vec<String>, code: &str) {
    let at = list
        .binary_search_by(|a| a.as_str().cmp(code))
        .unwrap_or_else(|e| e);
    list.insert(at, code.to_string());
}

pub(crate) fn find(list: &[String], code: &str) -> Option<usize> {
    list.binary_search_by(|a| a.as_str().cmp(code)).ok()
}

/// Asset list for a re-expression from `old` to `new` numeraire.
fn rebased_assets(assets: &[String], old: &str, new: &str) -> Vec<String> {
    let mut out: Vec<String> = assets.iter().filter(|a| *a != new).cloned().collect();
    insert_sorted(&mut out, old);
    out
}

fn sorted_unique(assets: &[String]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..assets.len()).collect();
    order.sort_by(|&a, &b| assets[a].cmp(&assets[b]));
    if let Some(w) = order.windows(2).find(|w| assets[w[0]] == assets[w[1]]) {
        return Err(Error::Schema(format!("duplicate asset `{}`", assets[w[0]])));
    }
    Ok(order)
}

#[derive(Debug)]
struct Frame {
    assets: Vec<String>,
    returns: Array2<f64>,
}

/// Daily natural-log returns of every asset except the numeraire.
///
/// Absent returns are NaN. The panel remembers the frame it was measured in,
/// so rebasing is always evaluated from that frame and a round trip back to
/// it reproduces the original series bit for bit.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    numeraire: String,
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    returns: Array2<f64>,
    anchor: Arc<Frame>,
}

impl PartialEq for ReturnPanel {
    fn eq(&self, other: &Self) -> bool {
        self.numeraire == other.numeraire
            && self.dates == other.dates
            && self.assets == other.assets
            && self.returns.shape() == other.returns.shape()
            && self
                .returns
                .iter()
                .zip(other.returns.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl ReturnPanel {
    pub fn new(
        numeraire: impl Into<String>,
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        returns: Array2<f64>,
    ) -> Result<Self> {
        let numeraire = numeraire.into();
        if returns.dim() != (dates.len(), assets.len()) {
            return Err(Error::Schema(format!(
                "return matrix is {:?}, expected ({}, {})",
                returns.dim(),
                dates.len(),
                assets.len()
            )));
        }
        if assets.contains(&numeraire) {
            return Err(Error::Schema(format!(
                "numeraire `{numeraire}` listed among assets"
            )));
        }
        if returns.iter().any(|r| r.is_infinite()) {
            return Err(Error::Schema("non-finite return".into()));
        }
        let order = sorted_unique(&assets)?;
        let assets: Vec<String> = order.iter().map(|&i| assets[i].clone()).collect();
        let returns = Array2::from_shape_fn(returns.dim(), |(t, j)| returns[[t, order[j]]]);
        let anchor = Arc::new(Frame {
            assets: assets.clone(),
            returns: returns.clone(),
        });
        Ok(Self {
            numeraire,
            dates,
            assets,
            returns,
            anchor,
        })
    }

    pub fn numeraire(&self) -> &str {
        &self.numeraire
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    /// Return matrix, NaN where a return is absent.
    pub fn returns(&self) -> &Array2<f64> {
        &self.returns
    }

    pub fn asset_index(&self, code: &str) -> Option<usize> {
        find(&self.assets, code)
    }

    pub fn series(&self, code: &str) -> Option<ArrayView1<'_, f64>> {
        self.asset_index(code).map(|i| self.returns.column(i))
    }

    /// `true` when no return is absent.
    pub fn is_complete(&self) -> bool {
        !self.returns.iter().any(|r| r.is_nan())
    }

    /// Numeraire plus assets, sorted.
    pub fn universe(&self) -> Vec<String> {
        let mut u = self.assets.clone();
        insert_sorted(&mut u, &self.numeraire);
        u
    }
}

/// Log returns of every asset in numeraire `numeraire`.
///
/// Prices are converted by triangular equivalence, `X/U = (X/B)/(U/B)` with
/// `B` the panel base. The return on date `t` compares the cross rate with its
/// value on the most recent earlier date where both legs were quoted (for the
/// base numeraire this is exactly the alignment reference date).
pub fn log_returns(aligned: &AlignedPanel, numeraire: &str) -> Result<ReturnPanel> {
    let panel = aligned.panel();
    let universe = panel.universe();
    if find(&universe, numeraire).is_none() {
        return Err(Error::UnknownAsset(numeraire.to_string()));
    }
    let assets: Vec<String> = universe.into_iter().filter(|a| a != numeraire).collect();
    let n_dates = panel.dates().len();
    let mut full = Array2::from_elem((n_dates, assets.len()), f64::NAN);
    for (j, asset) in assets.iter().enumerate() {
        let mut last: Option<f64> = None;
        let mut count = 0usize;
        for t in 0..n_dates {
            let (Some(px), Some(pu)) = (panel.price_of(asset, t), panel.price_of(numeraire, t))
            else {
                continue;
            };
            let level = (px / pu).ln();
            if let Some(prev) = last {
                full[[t, j]] = level - prev;
                count += 1;
            }
            last = Some(level);
        }
        if count == 0 {
            return Err(Error::Alignment {
                asset: asset.clone(),
                message: format!("no consecutive common quotes with numeraire {numeraire}"),
            });
        }
    }
    let rows: Vec<usize> = (0..n_dates)
        .filter(|&t| full.row(t).iter().any(|r| !r.is_nan()))
        .collect();
    let dates = rows.iter().map(|&t| panel.dates()[t]).collect();
    let returns = Array2::from_shape_fn((rows.len(), assets.len()), |(k, j)| full[[rows[k], j]]);
    ReturnPanel::new(numeraire, dates, assets, returns)
}

/// Re-express a return panel in `new_numeraire`: `x^w = x^u - w^u`, and the
/// old numeraire appears with series `-w^u`.
pub fn rebase_returns(returns: &ReturnPanel, new_numeraire: &str) -> Result<ReturnPanel> {
    if new_numeraire == returns.numeraire {
        return Ok(returns.clone());
    }
    if returns.asset_index(new_numeraire).is_none() {
        return Err(Error::UnknownAsset(new_numeraire.to_string()));
    }
    let frame = &returns.anchor;
    // series in the anchor frame; the anchor numeraire is identically zero
    let column = |code: &str| -> Option<ArrayView1<'_, f64>> {
        find(&frame.assets, code).map(|i| frame.returns.column(i))
    };
    let assets = rebased_assets(&returns.assets, &returns.numeraire, new_numeraire);
    let rows = returns.dates.len();
    let mut out = Array2::zeros((rows, assets.len()));
    let w = column(new_numeraire);
    for (j, asset) in assets.iter().enumerate() {
        let x = column(asset);
        for t in 0..rows {
            let xv = x.map_or(0.0, |c| c[t]);
            let wv = w.map_or(0.0, |c| c[t]);
            out[[t, j]] = xv - wv;
        }
    }
    Ok(ReturnPanel {
        numeraire: new_numeraire.to_string(),
        dates: returns.dates.clone(),
        assets,
        returns: out,
        anchor: Arc::clone(&returns.anchor),
    })
}

/// Per-asset mean log return in one numeraire.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    pub numeraire: String,
    pub assets: Vec<String>,
    pub values: Array1<f64>,
}

impl MeanVector {
    pub fn get(&self, code: &str) -> Option<f64> {
        find(&self.assets, code).map(|i| self.values[i])
    }
}

/// Arithmetic mean of each asset's present returns.
pub fn mean_vector(returns: &ReturnPanel) -> Result<MeanVector> {
    let mut values = Array1::zeros(returns.assets.len());
    for (j, asset) in returns.assets.iter().enumerate() {
        let (sum, n) = returns
            .returns
            .column(j)
            .iter()
            .filter(|r| !r.is_nan())
            .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
        if n == 0 {
            return Err(Error::Alignment {
                asset: asset.clone(),
                message: "no returns to average".into(),
            });
        }
        values[j] = sum / n as f64;
    }
    Ok(MeanVector {
        numeraire: returns.numeraire.clone(),
        assets: returns.assets.clone(),
        values,
    })
}

/// `<x^w> = <x^u> - <w^u>`; the old numeraire gets `-<w^u>`.
pub fn mean_transform(means: &MeanVector, new_numeraire: &str) -> Result<MeanVector> {
    if new_numeraire == means.numeraire {
        return Ok(means.clone());
    }
    let w = means
        .get(new_numeraire)
        .ok_or_else(|| Error::UnknownAsset(new_numeraire.to_string()))?;
    let assets = rebased_assets(&means.assets, &means.numeraire, new_numeraire);
    let values = assets
        .iter()
        .map(|a| means.get(a).unwrap_or(0.0) - w)
        .collect();
    Ok(MeanVector {
        numeraire: new_numeraire.to_string(),
        assets,
        values,
    })
}

macro_rules! labeled_matrix {
    ($ty:ident) => {
        impl $ty {
            pub fn numeraire(&self) -> &str {
                &self.numeraire
            }

            pub fn assets(&self) -> &[String] {
                &self.assets
            }

            pub fn values(&self) -> &Array2<f64> {
                &self.values
            }

            pub fn sample_size(&self) -> usize {
                self.sample_size
            }

            pub fn index_of(&self, code: &str) -> Option<usize> {
                find(&self.assets, code)
            }

            /// Entry by asset codes.
            pub fn get(&self, a: &str, b: &str) -> Option<f64> {
                Some(self.values[[self.index_of(a)?, self.index_of(b)?]])
            }
        }
    };
}

fn check_square(assets: &[String], values: &Array2<f64>) -> Result<()> {
    if values.dim() != (assets.len(), assets.len()) {
        return Err(Error::Structure(format!(
            "matrix is {:?} for {} assets",
            values.dim(),
            assets.len()
        )));
    }
    for i in 0..assets.len() {
        for j in 0..i {
            let (a, b) = (values[[i, j]], values[[j, i]]);
            if a.to_bits() != b.to_bits() && !(a.is_nan() && b.is_nan()) {
                return Err(Error::Structure(format!(
                    "matrix not symmetric at {}/{}",
                    assets[i], assets[j]
                )));
            }
        }
    }
    Ok(())
}

/// Sample covariance of log returns in one numeraire.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    numeraire: String,
    assets: Vec<String>,
    values: Array2<f64>,
    sample_size: usize,
}

labeled_matrix!(CovMatrix);

impl CovMatrix {
    /// Validates squareness, exact symmetry and a non-negative diagonal.
    /// Assets must be sorted and distinct.
    pub fn new(
        numeraire: impl Into<String>,
        assets: Vec<String>,
        values: Array2<f64>,
        sample_size: usize,
    ) -> Result<Self> {
        let numeraire = numeraire.into();
        check_square(&assets, &values)?;
        if assets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Structure(
                "assets must be sorted and distinct".into(),
            ));
        }
        if assets.contains(&numeraire) {
            return Err(Error::Structure(format!(
                "numeraire `{numeraire}` listed among assets"
            )));
        }
        if let Some(i) = (0..assets.len()).find(|&i| values[[i, i]] < 0.0) {
            return Err(Error::Structure(format!(
                "negative variance for {}",
                assets[i]
            )));
        }
        Ok(Self {
            numeraire,
            assets,
            values,
            sample_size,
        })
    }

    /// Largest absolute diagonal entry; the reference scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.values
            .diag()
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Entry with the numeraire itself seeded as the zero series.
    pub(crate) fn seeded(&self, a: &str, b: &str) -> Result<f64> {
        if a == self.numeraire || b == self.numeraire {
            return Ok(0.0);
        }
        self.get(a, b).ok_or_else(|| {
            Error::UnknownAsset(if self.index_of(a).is_none() { a } else { b }.to_string())
        })
    }
}

/// Pearson correlation matrix in one numeraire.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    numeraire: String,
    assets: Vec<String>,
    values: Array2<f64>,
    sample_size: usize,
}

labeled_matrix!(CorrMatrix);

impl CorrMatrix {
    /// Validates symmetry, unit diagonal and entries in [-1, 1].
    pub fn new(
        numeraire: impl Into<String>,
        assets: Vec<String>,
        values: Array2<f64>,
        sample_size: usize,
    ) -> Result<Self> {
        check_square(&assets, &values)?;
        if assets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Structure(
                "assets must be sorted and distinct".into(),
            ));
        }
        for ((i, j), &v) in values.indexed_iter() {
            if i == j && v != 1.0 {
                return Err(Error::Structure(format!(
                    "diagonal entry for {} is {v}, expected 1",
                    assets[i]
                )));
            }
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::Structure(format!(
                    "correlation {v} out of range at {}/{}",
                    assets[i], assets[j]
                )));
            }
        }
        Ok(Self {
            numeraire: numeraire.into(),
            assets,
            values,
            sample_size,
        })
    }
}

/// Pairwise-complete sample covariance with the (n - 1) divisor.
pub fn sample_covariance(returns: &ReturnPanel) -> Result<CovMatrix> {
    sample_covariance_with(returns, Exec::default())
}

pub fn sample_covariance_with(returns: &ReturnPanel, exec: Exec) -> Result<CovMatrix> {
    let k = returns.assets.len();
    let data = &returns.returns;
    let pair_error = |i: usize, j: usize, n: usize| Error::InsufficientPair {
        a: returns.assets[i].clone(),
        b: returns.assets[j].clone(),
        message: format!("{n} common return(s); need at least 2"),
    };

    let rows: Vec<Result<(Vec<f64>, usize)>> = if returns.is_complete() {
        let n = data.nrows();
        if n < 2 && k > 0 {
            return Err(pair_error(0, 0, n));
        }
        let means = data
            .mean_axis(ndarray::Axis(0))
            .unwrap_or_else(|| Array1::zeros(k));
        // asset-major centered copy so each row is contiguous
        let centered = Array2::from_shape_fn((k, n), |(i, t)| data[[t, i]] - means[i]);
        let denom = (n - 1) as f64;
        exec.map_range(k, |i| {
            let xi = centered.row(i);
            let row = (i..k).map(|j| xi.dot(&centered.row(j)) / denom).collect();
            Ok((row, n))
        })
    } else {
        exec.map_range(k, |i| {
            let mut row = Vec::with_capacity(k - i);
            let mut min_n = usize::MAX;
            for j in i..k {
                let pairs: Vec<(f64, f64)> = data
                    .column(i)
                    .iter()
                    .zip(data.column(j).iter())
                    .filter(|(x, y)| !x.is_nan() && !y.is_nan())
                    .map(|(&x, &y)| (x, y))
                    .collect();
                let n = pairs.len();
                if n < 2 {
                    return Err(pair_error(i, j, n));
                }
                let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
                let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
                let s: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
                row.push(s / (n - 1) as f64);
                min_n = min_n.min(n);
            }
            Ok((row, min_n))
        })
    };

    let mut values = Array2::zeros((k, k));
    let mut sample_size = usize::MAX;
    for (i, row) in rows.into_iter().enumerate() {
        let (row, n) = row?;
        sample_size = sample_size.min(n);
        for (off, v) in row.into_iter().enumerate() {
            values[[i, i + off]] = v;
            values[[i + off, i]] = v;
        }
    }
    if k == 0 {
        sample_size = returns.dates.len();
    }
    CovMatrix::new(
        returns.numeraire.clone(),
        returns.assets.clone(),
        values,
        sample_size,
    )
}

/// `C^w_{x,y} = C^u_{x,y} - C^u_{x,w} - C^u_{y,w} + C^u_{w,w}`, with the old
/// numeraire's own row seeded as zero (its return in itself is identically 0).
pub fn covariance_transform(cov: &CovMatrix, new_numeraire: &str) -> Result<CovMatrix> {
    if new_numeraire == cov.numeraire {
        return Ok(cov.clone());
    }
    if cov.index_of(new_numeraire).is_none() {
        return Err(Error::UnknownAsset(new_numeraire.to_string()));
    }
    if cov.values.iter().any(|v| v.is_nan()) {
        return Err(Error::Structure(
            "covariance matrix has missing entries".into(),
        ));
    }
    let assets = rebased_assets(&cov.assets, &cov.numeraire, new_numeraire);
    let k = assets.len();
    let w = new_numeraire;
    let cww = cov.seeded(w, w)?;
    let cross: Vec<f64> = assets
        .iter()
        .map(|a| cov.seeded(a, w))
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let v = cov.seeded(&assets[i], &assets[j])? - cross[i] - cross[j] + cww;
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    // a diagonal that rounds below zero is genuinely zero (perfect peg)
    let tol = ROUNDING_TOL * cov.scale();
    for i in 0..k {
        let v = values[[i, i]];
        if v < 0.0 {
            if v < -tol {
                return Err(Error::Numerical(format!(
                    "transformed variance of {} is {v:e}",
                    assets[i]
                )));
            }
            values[[i, i]] = 0.0;
        }
    }
    CovMatrix::new(new_numeraire, assets, values, cov.sample_size)
}

/// `C^w_{x,x} = C^u_{x,x} - 2 C^u_{x,w} + C^u_{w,w}`.
pub fn variance_transform(cov: &CovMatrix, x: &str, new_numeraire: &str) -> Result<f64> {
    if x == new_numeraire {
        return Err(Error::Domain(format!(
            "variance of {x} in itself is identically zero"
        )));
    }
    let v = cov.seeded(x, x)? - 2.0 * cov.seeded(x, new_numeraire)?
        + cov.seeded(new_numeraire, new_numeraire)?;
    let tol = ROUNDING_TOL * cov.scale();
    if v < -tol {
        return Err(Error::Numerical(format!(
            "transformed variance of {x} is {v:e}"
        )));
    }
    Ok(v.max(0.0))
}

/// Normalize a covariance matrix to correlations. Zero variances are an
/// error; entries beyond [-1, 1] by at most [`ROUNDING_TOL`] are clamped.
pub fn correlation_from_covariance(cov: &CovMatrix) -> Result<CorrMatrix> {
    let k = cov.assets.len();
    let tol = ROUNDING_TOL * cov.scale();
    let sd: Vec<f64> = (0..k)
        .map(|i| {
            let v = cov.values[[i, i]];
            if v <= tol {
                Err(Error::DegenerateAsset {
                    asset: cov.assets[i].clone(),
                    message: format!("variance {v:e} in numeraire {}", cov.numeraire),
                })
            } else {
                Ok(v.sqrt())
            }
        })
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((k, k));
    for i in 0..k {
        values[[i, i]] = 1.0;
        for j in (i + 1)..k {
            let mut r = cov.values[[i, j]] / (sd[i] * sd[j]);
            if r.abs() > 1.0 {
                if r.abs() - 1.0 > ROUNDING_TOL {
                    return Err(Error::Numerical(format!(
                        "correlation {r} for {}/{} exceeds unity",
                        cov.assets[i], cov.assets[j]
                    )));
                }
                r = r.signum();
            }
            values[[i, j]] = r;
            values[[j, i]] = r;
        }
    }
    CorrMatrix::new(
        cov.numeraire.clone(),
        cov.assets.clone(),
        values,
        cov.sample_size,
    )
}

/// Correlations in `new_numeraire` computed from covariances in the current one.
pub fn correlation_transform(cov: &CovMatrix, new_numeraire: &str) -> Result<CorrMatrix> {
    correlation_from_covariance(&covariance_transform(cov, new_numeraire)?)
}

/// Direct path: returns → covariance → correlation.
pub fn sample_correlation(returns: &ReturnPanel) -> Result<CorrMatrix> {
    correlation_from_covariance(&sample_covariance(returns)?)
}
