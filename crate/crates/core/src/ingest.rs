//! Price panel parsing, exclusion rules and reference-date alignment.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use chrono::NaiveDate;
use ndarray::Array2;

use crate::error::{Error, Result};

/// Dated table of prices quoted in `base` (units of base per unit of asset).
///
/// Missing quotes are stored as NaN. Asset columns are kept in sorted order so
/// that every derived matrix has a canonical layout.
#[derive(Debug, Clone)]
pub struct PricePanel {
    base: String,
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    prices: Array2<f64>,
}

/// Prices compare bitwise so that missing quotes are equal to each other.
impl PartialEq for PricePanel {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
            && self.dates == other.dates
            && self.assets == other.assets
            && self.prices.shape() == other.prices.shape()
            && self
                .prices
                .iter()
                .zip(other.prices.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl PricePanel {
    /// Build a panel, validating its invariants. `prices[[t, i]]` is NaN when
    /// asset `i` has no quote on date `t`. Columns are reordered to sorted
    /// asset order.
    pub fn new(
        base: impl Into<String>,
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        prices: Array2<f64>,
    ) -> Result<Self> {
        let base = base.into();
        if prices.nrows() != dates.len() || prices.ncols() != assets.len() {
            return Err(Error::Schema(format!(
                "price matrix is {}x{} but panel has {} dates and {} assets",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                assets.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Schema(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        let mut seen = HashSet::new();
        for a in &assets {
            if !seen.insert(a.as_str()) {
                return Err(Error::Schema(format!("duplicate asset column `{a}`")));
            }
        }
        if seen.contains(base.as_str()) {
            return Err(Error::Schema(format!(
                "base asset `{base}` appears as a priced column"
            )));
        }
        for ((t, i), &p) in prices.indexed_iter() {
            if !p.is_nan() && !(p.is_finite() && p > 0.0) {
                return Err(Error::Data {
                    line: t + 2,
                    column: assets[i].clone(),
                    message: format!("price {p} is not strictly positive and finite"),
                });
            }
        }

        let mut order: Vec<usize> = (0..assets.len()).collect();
        order.sort_by(|&a, &b| assets[a].cmp(&assets[b]));
        let sorted_assets = order.iter().map(|&i| assets[i].clone()).collect();
        let sorted_prices =
            Array2::from_shape_fn((dates.len(), assets.len()), |(t, j)| prices[[t, order[j]]]);
        Ok(Self {
            base,
            dates,
            assets: sorted_assets,
            prices: sorted_prices,
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn asset_index(&self, code: &str) -> Option<usize> {
        self.assets.binary_search_by(|a| a.as_str().cmp(code)).ok()
    }

    pub fn is_present(&self, t: usize, i: usize) -> bool {
        !self.prices[[t, i]].is_nan()
    }

    /// `true` where a quote is missing.
    pub fn missing_mask(&self) -> Array2<bool> {
        self.prices.mapv(f64::is_nan)
    }

    pub fn missing_count(&self, i: usize) -> usize {
        self.prices.column(i).iter().filter(|p| p.is_nan()).count()
    }

    /// All assets including the base, sorted.
    pub fn universe(&self) -> Vec<String> {
        let mut all = self.assets.clone();
        all.push(self.base.clone());
        all.sort();
        all
    }

    /// Price of `code` in units of the base; the base itself is 1 everywhere.
    pub(crate) fn price_of(&self, code: &str, t: usize) -> Option<f64> {
        if code == self.base {
            return Some(1.0);
        }
        let i = self.asset_index(code)?;
        let p = self.prices[[t, i]];
        (!p.is_nan()).then_some(p)
    }

    /// Keep only the listed columns (in panel order).
    pub fn select_assets(&self, keep: &[usize]) -> PricePanel {
        let prices = Array2::from_shape_fn((self.dates.len(), keep.len()), |(t, j)| {
            self.prices[[t, keep[j]]]
        });
        PricePanel {
            base: self.base.clone(),
            dates: self.dates.clone(),
            assets: keep.iter().map(|&i| self.assets[i].clone()).collect(),
            prices,
        }
    }

    /// Serialize as comma-delimited text readable by [`parse_price_panel`].
    /// Values use the shortest representation that round-trips exactly.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("date");
        for a in &self.assets {
            out.push(',');
            out.push_str(a);
        }
        out.push('\n');
        for (t, d) in self.dates.iter().enumerate() {
            out.push_str(&d.format("%Y-%m-%d").to_string());
            for i in 0..self.assets.len() {
                out.push(',');
                let p = self.prices[[t, i]];
                if !p.is_nan() {
                    out.push_str(&format!("{p}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Parse a delimited price table. The delimiter (tab or comma) is detected
/// from the header row; the first column holds ISO-8601 dates and the rest
/// are asset codes. Empty cells are missing quotes and lines starting with
/// `#` are comments.
pub fn parse_price_panel(source: &str, base: &str) -> Result<PricePanel> {
    let header_line = source.lines().find(|l| !l.starts_with('#')).unwrap_or("");
    if header_line.trim().is_empty() {
        return Err(Error::NoData);
    }
    let delimiter = if header_line.contains('\t') {
        b'\t'
    } else {
        b','
    };

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source.as_bytes());

    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.len() < 2 {
        return Err(Error::Schema(
            "header needs a date column and at least one asset column".into(),
        ));
    }
    let assets: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    {
        let mut seen = HashSet::new();
        for a in &assets {
            if a.is_empty() {
                return Err(Error::Schema("empty asset code in header".into()));
            }
            if !seen.insert(a.as_str()) {
                return Err(Error::Schema(format!("duplicate asset column `{a}`")));
            }
        }
        if seen.contains(base) {
            return Err(Error::Schema(format!(
                "base asset `{base}` appears as a priced column"
            )));
        }
    }

    let mut rows: BTreeMap<NaiveDate, (usize, Vec<f64>)> = BTreeMap::new();
    for (k, record) in reader.records().enumerate() {
        let fallback_line = k + 2;
        let record = record.map_err(|e| csv_error(e, fallback_line))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(fallback_line);
        let raw_date = record.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::Parse {
            line,
            message: format!("malformed date `{raw_date}`"),
        })?;
        let mut values = Vec::with_capacity(assets.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                values.push(f64::NAN);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Data {
                line,
                column: assets[j].clone(),
                message: format!("non-numeric cell `{cell}`"),
            })?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Data {
                    line,
                    column: assets[j].clone(),
                    message: format!("price `{cell}` is not strictly positive and finite"),
                });
            }
            values.push(v);
        }
        if let Some((first, _)) = rows.get(&date) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate date {date} (first seen on line {first})"),
            });
        }
        rows.insert(date, (line, values));
    }
    if rows.is_empty() {
        return Err(Error::NoData);
    }

    let dates: Vec<NaiveDate> = rows.keys().copied().collect();
    let mut prices = Array2::from_elem((dates.len(), assets.len()), f64::NAN);
    for (t, (_, values)) in rows.values().enumerate() {
        for (j, &v) in values.iter().enumerate() {
            prices[[t, j]] = v;
        }
    }
    PricePanel::new(base, dates, assets, prices)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parameters of the asset exclusion rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExclusionRules {
    /// Assets with at least this many missing quotes are dropped.
    pub max_missing: usize,
    /// Assets whose quote repeats unchanged over at least this many
    /// consecutive present days are dropped.
    pub constant_run: usize,
    /// Assets exempt from the missing-value rule.
    pub keep: BTreeSet<String>,
}

impl Default for ExclusionRules {
    fn default() -> Self {
        Self {
            max_missing: 10,
            constant_run: 5,
            keep: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemovalReason {
    MissingValues { count: usize },
    ConstantRun { length: usize },
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RemovalReason::MissingValues { count } => write!(f, "missing_values={count}"),
            RemovalReason::ConstantRun { length } => write!(f, "constant_run={length}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Removal {
    pub asset: String,
    pub reason: RemovalReason,
}

/// Removed assets with every rule that fired for them, in rule order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RemovalReport {
    pub removals: Vec<Removal>,
}

impl RemovalReport {
    pub fn removed_assets(&self) -> BTreeSet<&str> {
        self.removals.iter().map(|r| r.asset.as_str()).collect()
    }

    /// One `ASSET<TAB>reason` line per fired rule.
    pub fn to_text(&self) -> String {
        self.removals
            .iter()
            .map(|r| format!("{}\t{}\n", r.asset, r.reason))
            .collect()
    }
}

/// Longest run of bit-identical consecutive present quotes. Missing days are
/// skipped and neither extend nor break a run.
pub fn longest_constant_run(column: impl IntoIterator<Item = f64>) -> usize {
    let mut longest = 0;
    let mut current = 0;
    let mut last: Option<f64> = None;
    for p in column.into_iter().filter(|p| !p.is_nan()) {
        current = match last {
            Some(prev) if prev.to_bits() == p.to_bits() => current + 1,
            _ => 1,
        };
        longest = longest.max(current);
        last = Some(p);
    }
    longest
}

/// Drop assets with too many missing quotes (unless kept) and assets with a
/// constant quote versus the panel base over `constant_run` present days.
pub fn apply_exclusions(
    panel: &PricePanel,
    rules: &ExclusionRules,
) -> Result<(PricePanel, RemovalReport)> {
    if rules.constant_run < 2 {
        return Err(Error::Precondition(format!(
            "constant_run must be at least 2, got {}",
            rules.constant_run
        )));
    }
    let mut report = RemovalReport::default();
    let mut survivors = Vec::new();
    for (i, asset) in panel.assets().iter().enumerate() {
        let mut removed = false;
        let missing = panel.missing_count(i);
        if missing >= rules.max_missing && !rules.keep.contains(asset) {
            report.removals.push(Removal {
                asset: asset.clone(),
                reason: RemovalReason::MissingValues { count: missing },
            });
            removed = true;
        }
        let run = longest_constant_run(panel.prices().column(i).iter().copied());
        if run >= rules.constant_run {
            report.removals.push(Removal {
                asset: asset.clone(),
                reason: RemovalReason::ConstantRun { length: run },
            });
            removed = true;
        }
        if !removed {
            survivors.push(i);
        }
    }
    Ok((panel.select_assets(&survivors), report))
}

/// A panel together with, for every asset and every date on which it is
/// quoted, the most recent earlier date on which it was also quoted.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    panel: PricePanel,
    references: Vec<Vec<Option<usize>>>,
}

impl AlignedPanel {
    pub fn panel(&self) -> &PricePanel {
        &self.panel
    }

    /// Reference date index for asset column `i` at date index `t`.
    pub fn reference(&self, i: usize, t: usize) -> Option<usize> {
        self.references[i][t]
    }

    /// Map date → reference date for one asset.
    pub fn reference_map(&self, asset: &str) -> Option<BTreeMap<NaiveDate, NaiveDate>> {
        let i = self.panel.asset_index(asset)?;
        let dates = self.panel.dates();
        Some(
            self.references[i]
                .iter()
                .enumerate()
                .filter_map(|(t, r)| r.map(|r| (dates[t], dates[r])))
                .collect(),
        )
    }
}

/// Attach previous-quote references to every present price. A Monday quote
/// refers back to Friday, a post-holiday quote to the day before the holiday.
/// No prices are invented.
pub fn align_and_fill(panel: PricePanel) -> Result<AlignedPanel> {
    let mut references = Vec::with_capacity(panel.assets().len());
    for (i, asset) in panel.assets().iter().enumerate() {
        let mut last = None;
        let mut refs = vec![None; panel.dates().len()];
        let mut present = 0usize;
        for (t, slot) in refs.iter_mut().enumerate() {
            if panel.is_present(t, i) {
                *slot = last;
                last = Some(t);
                present += 1;
            }
        }
        if present < 2 {
            return Err(Error::Alignment {
                asset: asset.clone(),
                message: format!("only {present} present price(s); need at least 2"),
            });
        }
        references.push(refs);
    }
    Ok(AlignedPanel { panel, references })
}
