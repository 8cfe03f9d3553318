//! Empirical analyses built on the numeraire transforms: transform
//! validation, threshold clusters, most-similar assets, significance-filtered
//! partial-correlation networks and the masking diagnostic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::export::Provenance;
use crate::ingest::AlignedPanel;
use crate::numeraire::{
    correlation_transform, log_returns, sample_correlation, sample_covariance, CorrMatrix,
};
use crate::partial::PartialCorrMatrix;

/// Agreement between correlations measured directly in `w` and correlations
/// transformed analytically from `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformValidation {
    pub u: String,
    pub w: String,
    pub r2: f64,
    pub max_abs_error: f64,
    pub direct: CorrMatrix,
    pub transformed: CorrMatrix,
}

/// Coefficient of determination of `predicted` against `observed`.
pub fn coefficient_of_determination(observed: &[f64], predicted: &[f64]) -> f64 {
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p).powi(2))
        .sum();
    if ss_res == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

pub fn transform_validation(
    aligned: &AlignedPanel,
    u: &str,
    w: &str,
) -> Result<TransformValidation> {
    let direct = sample_correlation(&log_returns(aligned, w)?)?;
    let transformed = if u == w {
        direct.clone()
    } else {
        correlation_transform(&sample_covariance(&log_returns(aligned, u)?)?, w)?
    };
    if direct.assets() != transformed.assets() {
        return Err(Error::Structure(
            "direct and transformed matrices cover different assets".into(),
        ));
    }
    let k = direct.assets().len();
    let mut observed = Vec::new();
    let mut predicted = Vec::new();
    for i in 0..k {
        for j in (i + 1)..k {
            observed.push(direct.values()[[i, j]]);
            predicted.push(transformed.values()[[i, j]]);
        }
    }
    let max_abs_error = observed
        .iter()
        .zip(&predicted)
        .map(|(o, p)| (o - p).abs())
        .fold(0.0, f64::max);
    Ok(TransformValidation {
        u: u.to_string(),
        w: w.to_string(),
        r2: coefficient_of_determination(&observed, &predicted),
        max_abs_error,
        direct,
        transformed,
    })
}

/// R² of the transformed correlations in `w` (from `u`) against the
/// empirical ones, over all off-diagonal entries.
pub fn transform_validation_r2(aligned: &AlignedPanel, u: &str, w: &str) -> Result<f64> {
    transform_validation(aligned, u, w).map(|v| v.r2)
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index as root keeps the structure deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdClusters {
    pub threshold: f64,
    /// Connected components of size ≥ 2, members sorted, components ordered
    /// by their smallest member.
    pub components: Vec<Vec<String>>,
    /// Edges with `r > threshold`, in row-major order.
    pub edges: Vec<(String, String, f64)>,
}

/// Connected components of the graph with an edge wherever the correlation
/// strictly exceeds each threshold.
pub fn threshold_components(corr: &CorrMatrix, thresholds: &[f64]) -> Vec<ThresholdClusters> {
    let assets = corr.assets();
    let k = assets.len();
    thresholds
        .iter()
        .map(|&tau| {
            let mut ds = DisjointSet::new(k);
            let mut edges = Vec::new();
            for i in 0..k {
                for j in (i + 1)..k {
                    let r = corr.values()[[i, j]];
                    if r > tau {
                        ds.union(i, j);
                        edges.push((assets[i].clone(), assets[j].clone(), r));
                    }
                }
            }
            let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
            for (i, asset) in assets.iter().enumerate() {
                groups.entry(ds.find(i)).or_default().push(asset.clone());
            }
            // assets are sorted and roots are the smallest index, so BTreeMap
            // order is already smallest-member order
            let components = groups.into_values().filter(|g| g.len() >= 2).collect();
            ThresholdClusters {
                threshold: tau,
                components,
                edges,
            }
        })
        .collect()
}

pub fn clusters_text(clusters: &[ThresholdClusters], provenance: &Provenance) -> String {
    let mut out = provenance.comment_line("#");
    out.push_str("threshold\tcomponent\tmembers\n");
    for c in clusters {
        for (k, comp) in c.components.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", c.threshold, k + 1, comp.join(",")));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityRow {
    pub asset: String,
    /// Most frequent winner; several when their counts tie.
    pub most_similar: Vec<String>,
    pub occurrences: usize,
    /// Number of numeraires scanned for this asset.
    pub numeraires: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityTable {
    pub rows: Vec<SimilarityRow>,
}

impl SimilarityTable {
    pub fn row(&self, asset: &str) -> Option<&SimilarityRow> {
        self.rows.iter().find(|r| r.asset == asset)
    }

    pub fn to_text(&self, provenance: &Provenance) -> String {
        let mut out = provenance.comment_line("#");
        out.push_str("asset\tmost_similar\toccurrences\tnumeraires\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.asset,
                r.most_similar.join(","),
                r.occurrences,
                r.numeraires
            ));
        }
        out
    }
}

/// For every asset `X`, count across numeraires `U ≠ X` which asset `Z ∉ {X, U}`
/// maximizes `r^u_{x,z}`. Exactly tied maxima credit every tied asset.
pub fn most_similar(aligned: &AlignedPanel, exec: Exec) -> Result<SimilarityTable> {
    let universe = aligned.panel().universe();
    if universe.len() < 3 {
        return Err(Error::Precondition(format!(
            "most-similar analysis needs at least 3 assets, got {}",
            universe.len()
        )));
    }
    let matrices = exec.try_map(&universe, |u| sample_correlation(&log_returns(aligned, u)?))?;
    let rows = exec.map(&universe, |x| {
        let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
        let mut scanned = 0;
        for corr in matrices.iter().filter(|c| c.numeraire() != x) {
            scanned += 1;
            let i = corr
                .index_of(x)
                .expect("asset present under foreign numeraire");
            let row = corr.values().row(i);
            let best = (0..row.len())
                .filter(|&j| j != i)
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            for j in (0..row.len()).filter(|&j| j != i && row[j] == best) {
                *tally.entry(corr.assets()[j].as_str()).or_default() += 1;
            }
        }
        let occurrences = tally.values().copied().max().unwrap_or(0);
        SimilarityRow {
            asset: x.clone(),
            most_similar: tally
                .iter()
                .filter(|(_, &c)| c == occurrences)
                .map(|(a, _)| a.to_string())
                .collect(),
            occurrences,
            numeraires: scanned,
        }
    });
    Ok(SimilarityTable { rows })
}

/// How many simultaneous tests the Bonferroni divisor counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestCount {
    /// Every matrix element, `N²`.
    #[default]
    Square,
    /// Distinct unordered pairs, `N(N-1)/2`.
    Pairs,
}

impl TestCount {
    pub fn count(self, assets: usize) -> usize {
        match self {
            TestCount::Square => assets * assets,
            TestCount::Pairs => assets * assets.saturating_sub(1) / 2,
        }
    }
}

impl FromStr for TestCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(TestCount::Square),
            "pairs" => Ok(TestCount::Pairs),
            other => Err(Error::Usage(format!(
                "unknown test-count policy `{other}` (expected square or pairs)"
            ))),
        }
    }
}

pub const SIGNIFICANCE_METHOD: &str = "fisher-z(dof=n-k-3),two-sided,bonferroni";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub weight: f64,
    pub p_value: f64,
    /// `|ρ| = 1`: the test statistic is infinite.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkEdgeList {
    pub method: String,
    pub alpha: f64,
    pub tests: usize,
    /// Per-edge level `alpha / tests`.
    pub level: f64,
    pub sample_size: usize,
    pub conditioning_size: usize,
    pub edges: Vec<Edge>,
}

/// Two-sided p-value of a partial correlation under the Fisher z transform.
pub fn fisher_z_p_value(rho: f64, dof: f64) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let z = rho.abs().atanh() * dof.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Keep the partial correlations with p-value below `alpha / tests`.
pub fn significant_edges(
    pcorr: &PartialCorrMatrix,
    sample_size: usize,
    alpha: f64,
    tests: usize,
) -> Result<NetworkEdgeList> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if tests == 0 {
        return Err(Error::Precondition(
            "number of tests must be at least 1".into(),
        ));
    }
    let k = pcorr.conditioning_size;
    if sample_size <= k + 3 {
        return Err(Error::StatisticalPower(format!(
            "sample size {sample_size} must exceed conditioning size {k} + 3"
        )));
    }
    let dof = (sample_size - k - 3) as f64;
    let level = alpha / tests as f64;
    let n = pcorr.assets.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if !pcorr.coverage[[i, j]] {
                continue;
            }
            let rho = pcorr.values[[i, j]];
            let p = fisher_z_p_value(rho, dof);
            if p < level {
                edges.push(Edge {
                    a: pcorr.assets[i].clone(),
                    b: pcorr.assets[j].clone(),
                    weight: rho,
                    p_value: p,
                    degenerate: rho.abs() >= 1.0,
                });
            }
        }
    }
    Ok(NetworkEdgeList {
        method: SIGNIFICANCE_METHOD.into(),
        alpha,
        tests,
        level,
        sample_size,
        conditioning_size: k,
        edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkFormat {
    Dot,
    Json,
    EdgeList,
}

impl FromStr for NetworkFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(NetworkFormat::Dot),
            "json" => Ok(NetworkFormat::Json),
            "edgelist" | "tsv" => Ok(NetworkFormat::EdgeList),
            other => Err(Error::Usage(format!(
                "unknown network format `{other}` (expected dot, json, edgelist or tsv)"
            ))),
        }
    }
}

impl fmt::Display for NetworkFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkFormat::Dot => "dot",
            NetworkFormat::Json => "json",
            NetworkFormat::EdgeList => "edgelist",
        })
    }
}

impl NetworkFormat {
    pub fn extension(self) -> &'static str {
        match self {
            NetworkFormat::Dot => "dot",
            NetworkFormat::Json => "json",
            NetworkFormat::EdgeList => "tsv",
        }
    }
}

fn sorted_edges(list: &NetworkEdgeList) -> Vec<&Edge> {
    let mut edges: Vec<&Edge> = list.edges.iter().collect();
    edges.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
    edges
}

pub fn export_network(list: &NetworkEdgeList, format: NetworkFormat) -> String {
    export_network_with(list, format, &Provenance::new())
}

/// Render an edge list deterministically. Negative weights are drawn bold
/// and red in DOT output.
pub fn export_network_with(
    list: &NetworkEdgeList,
    format: NetworkFormat,
    provenance: &Provenance,
) -> String {
    let edges = sorted_edges(list);
    match format {
        NetworkFormat::Dot => {
            let mut out = provenance.comment_line("//");
            out.push_str(&format!(
                "// method={} alpha={} tests={}\n",
                list.method, list.alpha, list.tests
            ));
            out.push_str("graph partial_correlations {\n");
            let nodes: BTreeSet<&str> = edges
                .iter()
                .flat_map(|e| [e.a.as_str(), e.b.as_str()])
                .collect();
            for n in &nodes {
                out.push_str(&format!("  \"{n}\";\n"));
            }
            for e in &edges {
                let style = if e.weight < 0.0 {
                    ", style=bold, color=red"
                } else {
                    ""
                };
                out.push_str(&format!(
                    "  \"{}\" -- \"{}\" [weight={}, label=\"{:.3}\"{}];\n",
                    e.a, e.b, e.weight, e.weight, style
                ));
            }
            out.push_str("}\n");
            out
        }
        NetworkFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                provenance: BTreeMap<&'a str, &'a str>,
                method: &'a str,
                alpha: f64,
                tests: usize,
                level: f64,
                sample_size: usize,
                conditioning_size: usize,
                edges: Vec<&'a Edge>,
            }
            let doc = Doc {
                provenance: provenance
                    .fields
                    .iter()
                    .map(|(k, v)| (k.as_str(), v.as_str()))
                    .collect(),
                method: &list.method,
                alpha: list.alpha,
                tests: list.tests,
                level: list.level,
                sample_size: list.sample_size,
                conditioning_size: list.conditioning_size,
                edges,
            };
            let mut s = serde_json::to_string_pretty(&doc).expect("edge list serializes");
            s.push('\n');
            s
        }
        NetworkFormat::EdgeList => {
            let mut out = provenance.comment_line("#");
            out.push_str(&format!(
                "# method={} alpha={} tests={}\n",
                list.method, list.alpha, list.tests
            ));
            out.push_str("a\tb\tweight\tp_value\n");
            for e in &edges {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{:e}\n",
                    e.a, e.b, e.weight, e.p_value
                ));
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskingReport {
    pub x: String,
    pub y: String,
    pub neutral: String,
    /// `r_{x,y}` under each reference numeraire not in `{x, y}`.
    pub pair_correlations: Vec<(String, f64)>,
    /// `|r_{y,z}|` with `x` as numeraire.
    pub under_x: Vec<(String, f64)>,
    /// `|r_{y,z}|` under the neutral numeraire.
    pub under_neutral: Vec<(String, f64)>,
    pub median_under_x: f64,
    pub median_neutral: f64,
    /// `median_neutral / median_under_x`; above 1 when `x` masks `y`.
    pub score: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl MaskingReport {
    pub fn to_text(&self, provenance: &Provenance) -> String {
        let mut out = provenance.comment_line("#");
        out.push_str(&format!(
            "# x={} y={} neutral={} median_under_x={:.6} median_neutral={:.6} score={:.6}\n",
            self.x, self.y, self.neutral, self.median_under_x, self.median_neutral, self.score
        ));
        out.push_str("numeraire\tr_xy\n");
        for (u, r) in &self.pair_correlations {
            out.push_str(&format!("{u}\t{r:.6}\n"));
        }
        out.push_str("z\tabs_r_yz_under_x\tabs_r_yz_neutral\n");
        for ((z, a), (_, b)) in self.under_x.iter().zip(&self.under_neutral) {
            out.push_str(&format!("{z}\t{a:.6}\t{b:.6}\n"));
        }
        out
    }
}

/// Descriptive check of whether using `x` as numeraire suppresses the
/// correlations of `y` with the remaining assets.
pub fn masking_report(
    aligned: &AlignedPanel,
    x: &str,
    y: &str,
    neutral: &str,
    reference: &[String],
) -> Result<MaskingReport> {
    if x == y {
        return Err(Error::Precondition(format!(
            "masking pair needs two assets, got {x} twice"
        )));
    }
    if neutral == x || neutral == y {
        return Err(Error::Precondition(format!(
            "neutral numeraire {neutral} must differ from {x} and {y}"
        )));
    }
    let under_x = sample_correlation(&log_returns(aligned, x)?)?;
    let under_n = sample_correlation(&log_returns(aligned, neutral)?)?;
    let others: Vec<String> = aligned
        .panel()
        .universe()
        .into_iter()
        .filter(|z| z != x && z != y && z != neutral)
        .collect();
    if others.is_empty() {
        return Err(Error::Precondition(
            "masking report needs at least one asset besides x, y and the neutral numeraire".into(),
        ));
    }
    let abs_r = |c: &CorrMatrix, z: &str| -> Result<f64> {
        c.get(y, z)
            .map(f64::abs)
            .ok_or_else(|| Error::UnknownAsset(z.to_string()))
    };
    let ux = others
        .iter()
        .map(|z| Ok((z.clone(), abs_r(&under_x, z)?)))
        .collect::<Result<Vec<_>>>()?;
    let un = others
        .iter()
        .map(|z| Ok((z.clone(), abs_r(&under_n, z)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut pair_correlations = Vec::new();
    for u in reference.iter().filter(|u| *u != x && *u != y) {
        let c = sample_correlation(&log_returns(aligned, u)?)?;
        let r = c
            .get(x, y)
            .ok_or_else(|| Error::UnknownAsset(format!("{x}/{y}")))?;
        pair_correlations.push((u.clone(), r));
    }
    let mx = median(&ux.iter().map(|p| p.1).collect::<Vec<_>>());
    let mn = median(&un.iter().map(|p| p.1).collect::<Vec<_>>());
    Ok(MaskingReport {
        x: x.to_string(),
        y: y.to_string(),
        neutral: neutral.to_string(),
        pair_correlations,
        under_x: ux,
        under_neutral: un,
        median_under_x: mx,
        median_neutral: mn,
        score: mn / mx,
    })
}
