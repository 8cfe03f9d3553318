//! Independent reference computations used by the integration tests. Nothing
//! here calls the library's statistics; everything starts from raw prices.
#![allow(dead_code)]

use numeraire_lab::synth::{synthetic_panel, SyntheticSpec};
use numeraire_lab::PricePanel;

pub fn dense_panel(seed: u64, assets: usize, days: usize) -> PricePanel {
    synthetic_panel(&SyntheticSpec::new(seed, assets, days))
}

/// Price of `code` in the panel base, base itself = 1.
pub fn price(panel: &PricePanel, code: &str, t: usize) -> f64 {
    if code == panel.base() {
        1.0
    } else {
        let i = panel.assets().iter().position(|a| a == code).unwrap();
        panel.prices()[[t, i]]
    }
}

/// Dense log returns of every universe asset except `numeraire`, computed from
/// explicit cross prices X/U. Columns follow `names`.
pub fn oracle_returns(panel: &PricePanel, numeraire: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let names: Vec<String> = panel
        .universe()
        .into_iter()
        .filter(|a| a != numeraire)
        .collect();
    let n = panel.dates().len();
    let cols = names
        .iter()
        .map(|x| {
            (1..n)
                .map(|t| {
                    let now = price(panel, x, t) / price(panel, numeraire, t);
                    let before = price(panel, x, t - 1) / price(panel, numeraire, t - 1);
                    (now / before).ln()
                })
                .collect()
        })
        .collect();
    (names, cols)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn oracle_mean(xs: &[f64]) -> f64 {
    compensated_sum(xs) / xs.len() as f64
}

/// Two-pass covariance with the (n - 1) divisor.
pub fn oracle_cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (oracle_mean(x), oracle_mean(y));
    let mut s = 0.0;
    for t in 0..x.len() {
        s += (x[t] - mx) * (y[t] - my);
    }
    s / (x.len() - 1) as f64
}

pub fn oracle_corr(x: &[f64], y: &[f64]) -> f64 {
    oracle_cov(x, y) / (oracle_cov(x, x) * oracle_cov(y, y)).sqrt()
}

pub fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale
}

/// Random correlation matrix from a low-rank-plus-diagonal covariance.
pub fn random_corr(seed: u64, k: usize) -> numeraire_lab::CorrMatrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let factors = 2.min(k);
    let b: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..factors).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let d: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let mut c = ndarray::Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            let mut s: f64 = (0..factors).map(|f| b[i][f] * b[j][f]).sum();
            if i == j {
                s += d[i];
            }
            c[[i, j]] = s;
        }
    }
    let mut r = ndarray::Array2::zeros((k, k));
    for i in 0..k {
        for j in 0..k {
            r[[i, j]] = if i == j {
                1.0
            } else {
                c[[i, j]] / (c[[i, i]] * c[[j, j]]).sqrt()
            };
        }
    }
    let names = (0..k).map(|i| format!("V{i:02}")).collect();
    numeraire_lab::CorrMatrix::new("U", names, r, 100).unwrap()
}

/// Normalized random portfolio over `assets`, shorts allowed.
pub fn random_portfolio(seed: u64, assets: &[String]) -> numeraire_lab::Portfolio {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let size = rng.random_range(2..=assets.len().min(5));
    let mut picked = assets.to_vec();
    for i in 0..size {
        let j = rng.random_range(i..picked.len());
        picked.swap(i, j);
    }
    let raw: Vec<f64> = (0..size).map(|_| rng.random_range(-0.5..1.5)).collect();
    let total: f64 = raw.iter().sum::<f64>() + 1.0;
    let mut weights: Vec<(String, f64)> = picked[..size]
        .iter()
        .zip(&raw)
        .map(|(a, w)| (a.clone(), w / total))
        .collect();
    // remaining mass on the first asset so the sum is 1 to rounding
    let rest = 1.0 - weights.iter().map(|(_, w)| w).sum::<f64>();
    weights[0].1 += rest;
    numeraire_lab::Portfolio::new(format!("P{seed}"), weights).unwrap()
}
