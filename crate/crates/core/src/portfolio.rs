//! Portfolio returns and variances under a change of numeraire.
//!
//! The portfolio log return is taken as the weighted sum of asset log returns,
//! `x^u = Σ α_i x_i^u`. That is a linearization of the log of the weighted
//! basket, kept as is so the variance algebra stays exact.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::numeraire::{CovMatrix, ReturnPanel, ROUNDING_TOL};

/// Tolerance on `Σ α_i = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub label: String,
    weights: BTreeMap<String, f64>,
}

impl Portfolio {
    /// Weights may be negative (short positions) but must be finite, and
    /// every asset may appear once.
    pub fn new(label: impl Into<String>, weights: Vec<(String, f64)>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Precondition("portfolio has no assets".into()));
        }
        let mut map = BTreeMap::new();
        for (asset, w) in weights {
            if !w.is_finite() {
                return Err(Error::Precondition(format!("weight of {asset} is {w}")));
            }
            if map.insert(asset.clone(), w).is_some() {
                return Err(Error::Precondition(format!("asset {asset} listed twice")));
            }
        }
        Ok(Self {
            label: label.into(),
            weights: map,
        })
    }

    /// Parse `ASSET<TAB>weight` lines; `#` starts a comment.
    pub fn parse(text: &str, label: impl Into<String>) -> Result<Self> {
        let mut weights = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t').map(str::trim).filter(|p| !p.is_empty());
            let (Some(asset), Some(weight), None) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Parse {
                    line: k + 1,
                    message: format!("expected `ASSET<TAB>weight`, got `{line}`"),
                });
            };
            let w: f64 = weight.parse().map_err(|_| Error::Parse {
                line: k + 1,
                message: format!("bad weight `{weight}`"),
            })?;
            weights.push((asset.to_string(), w));
        }
        Self::new(label, weights)
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn is_normalized(&self) -> bool {
        (self.weights.values().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL
    }

    fn require_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "portfolio `{}` weights sum to {}, but the rebasing identity x^w = x^u - w^u needs Σα = 1",
                self.label,
                self.weights.values().sum::<f64>()
            )))
        }
    }
}

/// A dated real series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl Series {
    /// Present returns of one asset; the numeraire itself is the zero series.
    pub fn of_asset(returns: &ReturnPanel, code: &str) -> Result<Series> {
        if code == returns.numeraire() {
            return Ok(Series {
                dates: returns.dates().to_vec(),
                values: vec![0.0; returns.dates().len()],
            });
        }
        let col = returns
            .series(code)
            .ok_or_else(|| Error::UnknownAsset(code.to_string()))?;
        let (dates, values) = returns
            .dates()
            .iter()
            .zip(col.iter())
            .filter(|(_, v)| !v.is_nan())
            .map(|(d, v)| (*d, *v))
            .unzip();
        Ok(Series { dates, values })
    }

    /// Keep only the listed dates, which must all be present.
    pub fn restrict_to(&self, dates: &[NaiveDate]) -> Result<Series> {
        let index: BTreeMap<NaiveDate, f64> = self
            .dates
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .collect();
        let values = dates
            .iter()
            .map(|d| {
                index.get(d).copied().ok_or_else(|| Error::Alignment {
                    asset: "series".into(),
                    message: format!("no value on {d}"),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Series {
            dates: dates.to_vec(),
            values,
        })
    }

    /// Sample variance with the (n - 1) divisor.
    pub fn variance(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    }
}

/// `x^u = Σ α_i x_i^u` over the dates where every portfolio asset has a return.
pub fn portfolio_return_series(returns: &ReturnPanel, p: &Portfolio) -> Result<Series> {
    let columns = p
        .weights
        .iter()
        .map(|(asset, w)| {
            if asset == returns.numeraire() {
                Ok((None, *w))
            } else {
                returns
                    .series(asset)
                    .map(|c| (Some(c), *w))
                    .ok_or_else(|| Error::UnknownAsset(asset.clone()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (t, d) in returns.dates().iter().enumerate() {
        let mut sum = 0.0;
        let mut complete = true;
        for (col, w) in &columns {
            let v = col.as_ref().map_or(0.0, |c| c[t]);
            if v.is_nan() {
                complete = false;
                break;
            }
            sum += w * v;
        }
        if complete {
            dates.push(*d);
            values.push(sum);
        }
    }
    if dates.is_empty() {
        return Err(Error::Alignment {
            asset: p.label.clone(),
            message: "portfolio assets share no return dates".into(),
        });
    }
    Ok(Series { dates, values })
}

/// `x^w = x^u - w^u` for a normalized portfolio.
pub fn portfolio_rebase(p: &Portfolio, series_u: &Series, w_series_u: &Series) -> Result<Series> {
    p.require_normalized()?;
    if series_u.dates != w_series_u.dates || series_u.values.len() != w_series_u.values.len() {
        return Err(Error::Alignment {
            asset: p.label.clone(),
            message: format!(
                "portfolio series has {} points, numeraire series {}",
                series_u.values.len(),
                w_series_u.values.len()
            ),
        });
    }
    Ok(Series {
        dates: series_u.dates.clone(),
        values: series_u
            .values
            .iter()
            .zip(&w_series_u.values)
            .map(|(x, w)| x - w)
            .collect(),
    })
}

/// Quadratic form `αᵀ C α`.
pub fn portfolio_variance(cov: &CovMatrix, p: &Portfolio) -> Result<f64> {
    let mut v = 0.0;
    for (a, wa) in &p.weights {
        for (b, wb) in &p.weights {
            v += wa * wb * cov.seeded(a, b)?;
        }
    }
    let tol = ROUNDING_TOL * cov.scale();
    if v < -tol {
        return Err(Error::Numerical(format!(
            "portfolio variance {v:e} is negative"
        )));
    }
    Ok(v)
}

/// `C^u_{x,w} = 2 Σ α_i C^u_{x_i,w}`, with the factor 2 folded into the symbol.
pub fn portfolio_cross_covariance(cov: &CovMatrix, p: &Portfolio, w: &str) -> Result<f64> {
    if w != cov.numeraire() && cov.index_of(w).is_none() {
        return Err(Error::UnknownAsset(w.to_string()));
    }
    let mut s = 0.0;
    for (a, wa) in &p.weights {
        s += wa * cov.seeded(a, w)?;
    }
    Ok(2.0 * s)
}

/// `C^w_{x,x} = C^u_{x,x} - C^u_{x,w} + C^u_{w,w}` for a normalized portfolio.
pub fn portfolio_variance_transform(cov: &CovMatrix, p: &Portfolio, w: &str) -> Result<f64> {
    p.require_normalized()?;
    let v =
        portfolio_variance(cov, p)? - portfolio_cross_covariance(cov, p, w)? + cov.seeded(w, w)?;
    let tol = ROUNDING_TOL * cov.scale();
    if v < -tol {
        return Err(Error::Numerical(format!(
            "transformed portfolio variance {v:e} is negative"
        )));
    }
    Ok(v.max(0.0))
}
