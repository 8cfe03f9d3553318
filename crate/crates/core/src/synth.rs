//! Seeded synthetic price panels: correlated geometric random walks quoted in
//! a base asset. Used by tests, benches and the acceptance suite.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::PricePanel;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Priced assets, excluding the base.
    pub assets: usize,
    pub days: usize,
    pub base: String,
    /// Number of latent common factors driving the returns.
    pub factors: usize,
    /// Probability that any single quote is missing.
    pub missing_rate: f64,
}

impl SyntheticSpec {
    pub fn new(seed: u64, assets: usize, days: usize) -> Self {
        Self {
            seed,
            assets,
            days,
            base: "BASE".into(),
            factors: 3,
            missing_rate: 0.0,
        }
    }
}

/// Asset code used for synthetic column `i`.
pub fn asset_code(i: usize) -> String {
    format!("A{i:02}")
}

/// Weekday calendar starting on 2014-01-01.
pub fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Factor-model log returns `r = B f + s e`, exponentiated into prices.
pub fn synthetic_panel(spec: &SyntheticSpec) -> PricePanel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let loadings: Vec<Vec<f64>> = (0..spec.assets)
        .map(|_| {
            (0..spec.factors)
                .map(|_| rng.random_range(-1.0..1.0) * 0.006)
                .collect()
        })
        .collect();
    let idio: Vec<f64> = (0..spec.assets)
        .map(|_| rng.random_range(0.002..0.008))
        .collect();
    let mut log_price: Vec<f64> = (0..spec.assets)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();

    let mut prices = Array2::from_elem((spec.days, spec.assets), f64::NAN);
    for t in 0..spec.days {
        let f: Vec<f64> = (0..spec.factors).map(|_| unit.sample(&mut rng)).collect();
        for i in 0..spec.assets {
            if t > 0 {
                let common: f64 = loadings[i].iter().zip(&f).map(|(b, f)| b * f).sum();
                log_price[i] += common + idio[i] * unit.sample(&mut rng);
            }
            let missing = spec.missing_rate > 0.0 && rng.random_bool(spec.missing_rate);
            if !missing {
                prices[[t, i]] = log_price[i].exp();
            }
        }
    }
    PricePanel::new(
        spec.base.clone(),
        business_days(spec.days),
        (0..spec.assets).map(asset_code).collect(),
        prices,
    )
    .expect("synthetic panel satisfies panel invariants")
}
