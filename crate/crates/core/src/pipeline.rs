//! End-to-end pipeline stages producing named text artifacts.
//!
//! Every stage is deterministic: artifacts are keyed by file name in a sorted
//! map, rows are emitted in canonical asset order and no timestamps are
//! written, so identical inputs give byte-identical outputs.

use std::collections::BTreeMap;

use crate::analysis::{
    clusters_text, export_network_with, masking_report, most_similar, significant_edges,
    threshold_components, NetworkFormat, TestCount,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::export::{
    corr_text, cov_text, format_value, matrix_to_text, mean_text, partial_text, Provenance,
};
use crate::ingest::{
    align_and_fill, apply_exclusions, parse_price_panel, AlignedPanel, ExclusionRules, PricePanel,
};
use crate::numeraire::{
    correlation_from_covariance, covariance_transform, find, log_returns, mean_transform,
    mean_vector, sample_covariance,
};
use crate::partial::{assemble_full_partial_matrix, invariance_report, PrecisionOptions};

/// File name → contents.
pub type Artifacts = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub base: String,
    /// Empty means the default list, see [`RunConfig::resolved_numeraires`].
    pub numeraires: Vec<String>,
    pub thresholds: Vec<f64>,
    pub alpha: f64,
    pub tests: TestCount,
    pub ridge: Option<f64>,
    pub rules: ExclusionRules,
    pub formats: Vec<NetworkFormat>,
    pub invariance_audit: bool,
    pub exec: Exec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            base: "USD".into(),
            numeraires: Vec::new(),
            thresholds: vec![0.9, 0.8, 0.6],
            alpha: 0.05,
            tests: TestCount::Square,
            ridge: None,
            rules: ExclusionRules::default(),
            formats: vec![NetworkFormat::Dot],
            invariance_audit: false,
            exec: Exec::default(),
        }
    }
}

impl RunConfig {
    /// Parameter checks that need no data.
    pub fn validate_parameters(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Usage(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Usage(format!("threshold {t} outside (0, 1)")));
        }
        if let Some(l) = self.ridge {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Usage(format!("ridge must be positive, got {l}")));
            }
        }
        if self.rules.constant_run < 2 {
            return Err(Error::Usage("constant-run must be at least 2".into()));
        }
        if self.base.is_empty() {
            return Err(Error::Usage("base asset code is empty".into()));
        }
        Ok(())
    }

    /// Explicit numeraires, or the base followed by two alternatives (EUR
    /// first when present, then the first other assets in sorted order).
    ///
    /// Three are needed for full coverage: with only `U` and `W` the pair
    /// `{U, W}` has no numeraire outside it.
    pub fn resolved_numeraires(&self, universe: &[String]) -> Vec<String> {
        if !self.numeraires.is_empty() {
            return self.numeraires.clone();
        }
        let mut out = vec![self.base.clone()];
        if self.base != "EUR" && find(universe, "EUR").is_some() {
            out.push("EUR".to_string());
        }
        for a in universe {
            if out.len() >= 3 {
                break;
            }
            if !out.contains(a) {
                out.push(a.clone());
            }
        }
        out
    }

    /// Every referenced code must exist in the panel universe.
    pub fn validate_against(&self, universe: &[String]) -> Result<()> {
        self.validate_parameters()?;
        for code in self.resolved_numeraires(universe) {
            if find(universe, &code).is_none() {
                return Err(Error::UnknownAsset(code));
            }
        }
        Ok(())
    }

    pub fn precision(&self) -> PrecisionOptions {
        PrecisionOptions {
            ridge: self.ridge,
            ..PrecisionOptions::default()
        }
    }

    fn provenance(&self, input: &[u8]) -> Provenance {
        Provenance::for_input(input).with("base", &self.base)
    }
}

fn prefixed(provenance: &Provenance, body: String) -> String {
    let mut out = provenance.comment_line("#");
    out.push_str(&body);
    out
}

/// Parse raw quotes and apply the exclusion rules.
pub fn ingest(raw: &str, cfg: &RunConfig) -> Result<(PricePanel, Artifacts)> {
    cfg.validate_parameters()?;
    let panel = parse_price_panel(raw, &cfg.base)?;
    let (clean, report) = apply_exclusions(&panel, &cfg.rules)?;
    let prov = cfg
        .provenance(raw.as_bytes())
        .with("max_missing", cfg.rules.max_missing)
        .with("constant_run", cfg.rules.constant_run)
        .with(
            "keep",
            cfg.rules.keep.iter().cloned().collect::<Vec<_>>().join(","),
        );
    let mut out = Artifacts::new();
    out.insert("panel.csv".into(), prefixed(&prov, clean.to_delimited()));
    out.insert("removed.tsv".into(), prefixed(&prov, report.to_text()));
    Ok((clean, out))
}

/// Parse an already cleaned panel and check the config against it.
pub fn load_clean(raw: &str, cfg: &RunConfig) -> Result<AlignedPanel> {
    cfg.validate_parameters()?;
    let panel = parse_price_panel(raw, &cfg.base)?;
    cfg.validate_against(&panel.universe())?;
    align_and_fill(panel)
}

/// Ordered numeraire pairs `(u, w)` from distinct list positions.
pub fn numeraire_pairs(numeraires: &[String]) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for (i, u) in numeraires.iter().enumerate() {
        for (j, w) in numeraires.iter().enumerate() {
            if i != j {
                pairs.push((u.clone(), w.clone()));
            }
        }
    }
    pairs
}

/// Direct and transformed means, covariances and correlations for each pair.
pub fn transform_stage(aligned: &AlignedPanel, cfg: &RunConfig, input: &[u8]) -> Result<Artifacts> {
    let numeraires = cfg.resolved_numeraires(&aligned.panel().universe());
    let pairs = numeraire_pairs(&numeraires);
    let results = cfg.exec.try_map(&pairs, |(u, w)| {
        let ru = log_returns(aligned, u)?;
        let rw = log_returns(aligned, w)?;
        let cov_u = sample_covariance(&ru)?;
        let cov_w = sample_covariance(&rw)?;
        let mean_w = mean_vector(&rw)?;
        let mean_t = mean_transform(&mean_vector(&ru)?, w)?;
        let cov_t = covariance_transform(&cov_u, w)?;
        let corr_w = correlation_from_covariance(&cov_w)?;
        let corr_t = correlation_from_covariance(&cov_t)?;
        Ok((
            u.clone(),
            w.clone(),
            mean_w,
            mean_t,
            cov_w,
            cov_t,
            corr_w,
            corr_t,
        ))
    })?;

    let mut out = Artifacts::new();
    let mut summary =
        String::from("u\tw\tr2\tmax_abs_corr_error\tmax_abs_cov_error\tmax_abs_mean_error\n");
    for (u, w, mean_w, mean_t, cov_w, cov_t, corr_w, corr_t) in results {
        let prov = cfg.provenance(input).with("u", &u).with("w", &w);
        let max_diff = |a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let k = corr_w.assets().len();
        let (mut obs, mut pred) = (Vec::new(), Vec::new());
        for i in 0..k {
            for j in (i + 1)..k {
                obs.push(corr_w.values()[[i, j]]);
                pred.push(corr_t.values()[[i, j]]);
            }
        }
        let r2 = crate::analysis::coefficient_of_determination(&obs, &pred);
        let mean_err = mean_w
            .values
            .iter()
            .zip(mean_t.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        summary.push_str(&format!(
            "{u}\t{w}\t{}\t{}\t{}\t{}\n",
            format_value(r2),
            format_value(max_diff(corr_w.values(), corr_t.values())),
            format_value(max_diff(cov_w.values(), cov_t.values())),
            format_value(mean_err),
        ));
        out.insert(
            format!("mean_{w}_direct.tsv"),
            prefixed(&prov, mean_text(&mean_w)),
        );
        out.insert(
            format!("mean_{u}_to_{w}_transformed.tsv"),
            prefixed(&prov, mean_text(&mean_t)),
        );
        out.insert(
            format!("cov_{w}_direct.tsv"),
            prefixed(&prov, cov_text(&cov_w)),
        );
        out.insert(
            format!("cov_{u}_to_{w}_transformed.tsv"),
            prefixed(&prov, cov_text(&cov_t)),
        );
        out.insert(
            format!("corr_{w}_direct.tsv"),
            prefixed(&prov, corr_text(&corr_w)),
        );
        out.insert(
            format!("corr_{u}_to_{w}_transformed.tsv"),
            prefixed(&prov, corr_text(&corr_t)),
        );
    }
    out.insert(
        "transform_r2.tsv".into(),
        prefixed(&cfg.provenance(input), summary),
    );
    Ok(out)
}

/// Assembled partial-correlation matrix, its audit and (optionally) the
/// invariance report between the first two numeraires.
pub fn partial_stage(aligned: &AlignedPanel, cfg: &RunConfig, input: &[u8]) -> Result<Artifacts> {
    let numeraires = cfg.resolved_numeraires(&aligned.panel().universe());
    let (pcorr, audit) =
        assemble_full_partial_matrix(aligned, &numeraires, &cfg.precision(), cfg.exec)?;
    let prov = cfg
        .provenance(input)
        .with("numeraires", numeraires.join(","));
    let mut out = Artifacts::new();
    out.insert("partial.tsv".into(), prefixed(&prov, partial_text(&pcorr)));
    out.insert(
        "partial_audit.tsv".into(),
        prefixed(
            &prov,
            matrix_to_text(
                &[format!(
                    "max_discrepancy={}",
                    format_value(audit.max_discrepancy)
                )],
                &audit.assets,
                &audit.discrepancy,
            ),
        ),
    );
    if cfg.invariance_audit {
        if numeraires.len() < 2 {
            return Err(Error::Usage(
                "invariance audit needs at least two numeraires".into(),
            ));
        }
        let report = invariance_report(aligned, &numeraires[0], &numeraires[1], &cfg.precision())?;
        out.insert("invariance.tsv".into(), prefixed(&prov, report.to_text()));
    }
    Ok(out)
}

/// Bonferroni-filtered partial-correlation network in each requested format.
pub fn network_stage(aligned: &AlignedPanel, cfg: &RunConfig, input: &[u8]) -> Result<Artifacts> {
    let numeraires = cfg.resolved_numeraires(&aligned.panel().universe());
    let (pcorr, _) =
        assemble_full_partial_matrix(aligned, &numeraires, &cfg.precision(), cfg.exec)?;
    pcorr.require_full_coverage()?;
    let tests = cfg.tests.count(pcorr.assets.len());
    let edges = significant_edges(&pcorr, pcorr.sample_size, cfg.alpha, tests)?;
    let prov = cfg
        .provenance(input)
        .with("numeraires", numeraires.join(","))
        .with("alpha", cfg.alpha)
        .with("tests", tests)
        .with(
            "ridge",
            cfg.ridge.map_or("none".into(), |l| format!("{l:e}")),
        );
    let mut out = Artifacts::new();
    for f in &cfg.formats {
        out.insert(
            format!("network.{}", f.extension()),
            export_network_with(&edges, *f, &prov),
        );
    }
    Ok(out)
}

pub fn similar_stage(aligned: &AlignedPanel, cfg: &RunConfig, input: &[u8]) -> Result<Artifacts> {
    let table = most_similar(aligned, cfg.exec)?;
    let mut out = Artifacts::new();
    out.insert("similar.tsv".into(), table.to_text(&cfg.provenance(input)));
    Ok(out)
}

pub fn clusters_stage(aligned: &AlignedPanel, cfg: &RunConfig, input: &[u8]) -> Result<Artifacts> {
    let numeraires = cfg.resolved_numeraires(&aligned.panel().universe());
    let mut out = Artifacts::new();
    for u in &numeraires {
        let corr = crate::numeraire::sample_correlation(&log_returns(aligned, u)?)?;
        let clusters = threshold_components(&corr, &cfg.thresholds);
        let prov = cfg.provenance(input).with("numeraire", u).with(
            "thresholds",
            cfg.thresholds
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        out.insert(format!("clusters_{u}.tsv"), clusters_text(&clusters, &prov));
    }
    Ok(out)
}

pub fn masking_stage(
    aligned: &AlignedPanel,
    cfg: &RunConfig,
    input: &[u8],
    x: &str,
    y: &str,
    neutral: Option<&str>,
) -> Result<Artifacts> {
    let universe = aligned.panel().universe();
    for code in [x, y].into_iter().chain(neutral) {
        if find(&universe, code).is_none() {
            return Err(Error::UnknownAsset(code.to_string()));
        }
    }
    let neutral = match neutral {
        Some(n) => n.to_string(),
        None => std::iter::once(&cfg.base)
            .chain(universe.iter())
            .find(|a| *a != x && *a != y)
            .cloned()
            .ok_or_else(|| Error::Precondition("no neutral numeraire available".into()))?,
    };
    let reference = cfg.resolved_numeraires(&universe);
    let report = masking_report(aligned, x, y, &neutral, &reference)?;
    let mut out = Artifacts::new();
    out.insert(
        format!("masking_{x}_{y}.tsv"),
        report.to_text(&cfg.provenance(input)),
    );
    Ok(out)
}

/// Ingest, then every analysis stage on the cleaned panel.
pub fn run_pipeline(raw: &str, cfg: &RunConfig) -> Result<Artifacts> {
    let (clean, mut out) = ingest(raw, cfg)?;
    cfg.validate_against(&clean.universe())?;
    let aligned = align_and_fill(clean)?;
    let input = raw.as_bytes();
    out.extend(transform_stage(&aligned, cfg, input)?);
    out.extend(partial_stage(&aligned, cfg, input)?);
    out.extend(network_stage(&aligned, cfg, input)?);
    out.extend(similar_stage(&aligned, cfg, input)?);
    out.extend(clusters_stage(&aligned, cfg, input)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthetic_panel, SyntheticSpec};

    fn raw() -> String {
        let mut spec = SyntheticSpec::new(3, 5, 120);
        spec.base = "USD".into();
        synthetic_panel(&spec).to_delimited()
    }

    #[test]
    fn default_numeraires() {
        let cfg = RunConfig::default();
        let u: Vec<String> = ["A", "EUR", "USD"].iter().map(|s| s.to_string()).collect();
        assert_eq!(cfg.resolved_numeraires(&u), vec!["USD", "EUR", "A"]);
        let u: Vec<String> = ["A", "B", "USD"].iter().map(|s| s.to_string()).collect();
        assert_eq!(cfg.resolved_numeraires(&u), vec!["USD", "A", "B"]);
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = RunConfig {
            invariance_audit: true,
            formats: vec![
                NetworkFormat::Dot,
                NetworkFormat::Json,
                NetworkFormat::EdgeList,
            ],
            ..RunConfig::default()
        };
        let a = run_pipeline(&raw(), &cfg).unwrap();
        let seq = RunConfig {
            exec: Exec::Sequential,
            ..cfg.clone()
        };
        let b = run_pipeline(&raw(), &seq).unwrap();
        assert_eq!(a, b);
        assert!(a.contains_key("network.dot"));
        assert!(a.contains_key("similar.tsv"));
        assert!(a.contains_key("corr_USD_to_A00_transformed.tsv"));
    }

    #[test]
    fn same_numeraire_exports_are_identical() {
        let cfg = RunConfig {
            numeraires: vec!["A01".into(), "A01".into()],
            ..RunConfig::default()
        };
        let aligned = load_clean(&raw(), &cfg).unwrap();
        let out = transform_stage(&aligned, &cfg, b"x").unwrap();
        assert_eq!(
            out["corr_A01_direct.tsv"],
            out["corr_A01_to_A01_transformed.tsv"]
        );
        assert_eq!(
            out["cov_A01_direct.tsv"],
            out["cov_A01_to_A01_transformed.tsv"]
        );
    }

    #[test]
    fn config_is_checked_before_work() {
        let cfg = RunConfig {
            numeraires: vec!["NOPE".into()],
            ..RunConfig::default()
        };
        assert!(matches!(
            load_clean(&raw(), &cfg),
            Err(Error::UnknownAsset(_))
        ));
        let cfg = RunConfig {
            alpha: 1.5,
            ..RunConfig::default()
        };
        assert!(matches!(run_pipeline(&raw(), &cfg), Err(Error::Usage(_))));
    }
}
