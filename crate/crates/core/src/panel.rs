//! Panel data model: N units observed over T consecutive years.
//!
//! Covers CSV ingestion (wide and long layouts), period alignment,
//! target-ratio rescaling and optional Hodrick-Prescott pre-smoothing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_UNITS: usize = 2;
pub const MIN_PERIODS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitId {
    pub code: String,
    pub name: String,
}

impl UnitId {
    /// Builds a unit id, using the EU country name for known two-letter codes.
    pub fn new(code: impl Into<String>) -> Self {
        let code = code.into();
        let name = eu_country_name(&code).unwrap_or(&code).to_string();
        UnitId { code, name }
    }
}

/// Display names for the EU-28 member-state codes (Eurostat convention, EL = Greece).
pub fn eu_country_name(code: &str) -> Option<&'static str> {
    Some(match code {
        "BE" => "Belgium",
        "BG" => "Bulgaria",
        "CZ" => "Czech Republic",
        "DK" => "Denmark",
        "DE" => "Germany",
        "EE" => "Estonia",
        "IE" => "Ireland",
        "EL" => "Greece",
        "ES" => "Spain",
        "FR" => "France",
        "HR" => "Croatia",
        "IT" => "Italy",
        "CY" => "Cyprus",
        "LV" => "Latvia",
        "LT" => "Lithuania",
        "LU" => "Luxembourg",
        "HU" => "Hungary",
        "MT" => "Malta",
        "NL" => "Netherlands",
        "AT" => "Austria",
        "PL" => "Poland",
        "PT" => "Portugal",
        "RO" => "Romania",
        "SI" => "Slovenia",
        "SK" => "Slovakia",
        "FI" => "Finland",
        "SE" => "Sweden",
        "UK" => "United Kingdom",
        _ => return None,
    })
}

/// Admissible value range for panel cells.
///
/// `Positive` is the default. `NonNegative` admits zero shares (sector
/// indicators start at 0% for some countries) as long as every period has a
/// positive cross-sectional mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDomain {
    #[default]
    Positive,
    NonNegative,
}

impl ValueDomain {
    fn admits(self, v: f64) -> bool {
        match self {
            ValueDomain::Positive => v > 0.0,
            ValueDomain::NonNegative => v >= 0.0,
        }
    }
}

/// Balanced panel of indicator values, stored row-major (one row per unit).
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    units: Vec<UnitId>,
    periods: Vec<i32>,
    values: Vec<f64>,
    domain: ValueDomain,
}

impl Panel {
    /// Builds a strictly positive panel from per-unit series.
    pub fn new(units: Vec<UnitId>, first_period: i32, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_domain(units, first_period, rows, ValueDomain::Positive)
    }

    pub fn with_domain(
        units: Vec<UnitId>,
        first_period: i32,
        rows: Vec<Vec<f64>>,
        domain: ValueDomain,
    ) -> Result<Self> {
        if units.len() != rows.len() {
            return Err(Error::InvalidConfig(format!(
                "{} unit labels for {} series",
                units.len(),
                rows.len()
            )));
        }
        let t = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != t) {
            return Err(Error::InvalidConfig(format!(
                "series of unit {} has {} periods, expected {t}",
                units[bad].code,
                rows[bad].len()
            )));
        }
        let periods = (0..t as i32).map(|k| first_period + k).collect();
        let values = rows.into_iter().flatten().collect();
        Self::from_parts(units, periods, values, domain)
    }

    fn from_parts(
        units: Vec<UnitId>,
        periods: Vec<i32>,
        values: Vec<f64>,
        domain: ValueDomain,
    ) -> Result<Self> {
        let (n, t) = (units.len(), periods.len());
        if n < MIN_UNITS || t < MIN_PERIODS {
            return Err(Error::EmptyPanel { units: n, periods: t });
        }
        let mut seen = BTreeSet::new();
        for u in &units {
            if u.code.is_empty() || !u.code.is_ascii() {
                return Err(Error::InvalidConfig(format!("invalid unit code {:?}", u.code)));
            }
            if !seen.insert(u.code.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate unit code {}", u.code)));
            }
        }
        if periods.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::InvalidConfig("periods must be consecutive years".into()));
        }
        for (i, u) in units.iter().enumerate() {
            for (j, &p) in periods.iter().enumerate() {
                let v = values[i * t + j];
                if !v.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "non-finite value for unit {} in period {p}",
                        u.code
                    )));
                }
                if !domain.admits(v) {
                    return Err(Error::NonPositiveValue {
                        unit: u.code.clone(),
                        period: p,
                        value: v,
                    });
                }
            }
        }
        let panel = Panel {
            units,
            periods,
            values,
            domain,
        };
        if domain == ValueDomain::NonNegative {
            for (j, &p) in panel.periods.iter().enumerate() {
                if panel.column(j).all(|v| v == 0.0) {
                    return Err(Error::ZeroCrossSection(p));
                }
            }
        }
        Ok(panel)
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn units(&self) -> &[UnitId] {
        &self.units
    }

    pub fn periods(&self) -> &[i32] {
        &self.periods
    }

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn series(&self, unit: usize) -> &[f64] {
        let t = self.n_periods();
        &self.values[unit * t..(unit + 1) * t]
    }

    pub fn value(&self, unit: usize, period: usize) -> f64 {
        self.values[unit * self.n_periods() + period]
    }

    /// Cross-section at period index `period`, in unit order.
    pub fn column(&self, period: usize) -> impl Iterator<Item = f64> + '_ {
        let t = self.n_periods();
        (0..self.n_units()).map(move |i| self.values[i * t + period])
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.units.iter().position(|u| u.code == code)
    }

    pub fn codes(&self) -> Vec<String> {
        self.units.iter().map(|u| u.code.clone()).collect()
    }

    /// Sub-panel holding the given units, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Panel> {
        let units = idx.iter().map(|&i| self.units[i].clone()).collect();
        let values = idx.iter().flat_map(|&i| self.series(i).iter().copied()).collect();
        Self::from_parts(units, self.periods.clone(), values, self.domain)
    }

    /// Sub-panel restricted to the years `first..=last`.
    pub fn restrict_periods(&self, first: i32, last: i32) -> Result<Panel> {
        let lo = self.periods.iter().position(|&p| p == first);
        let hi = self.periods.iter().position(|&p| p == last);
        let (Some(lo), Some(hi)) = (lo, hi) else {
            return Err(Error::InvalidConfig(format!(
                "period range {first}-{last} is outside the panel"
            )));
        };
        let t = self.n_periods();
        let values = (0..self.n_units())
            .flat_map(|i| self.values[i * t + lo..=i * t + hi].iter().copied())
            .collect();
        Self::from_parts(
            self.units.clone(),
            self.periods[lo..=hi].to_vec(),
            values,
            self.domain,
        )
    }

    /// Every value multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<Panel> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidConfig(format!("scale factor {k} must be positive")));
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= k);
        Ok(out)
    }

    /// Writes the panel in the wide layout. Values use the shortest
    /// round-trip decimal representation.
    pub fn write_wide<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["unit".to_string()];
        header.extend(self.periods.iter().map(|p| p.to_string()));
        wtr.write_record(&header)?;
        for (i, u) in self.units.iter().enumerate() {
            let mut row = vec![u.code.clone()];
            row.extend(self.series(i).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[default]
    Wide,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Edge years with gaps are trimmed; any interior gap is an error.
    #[default]
    Strict,
    /// Keeps the contiguous year range and unit subset retaining the most
    /// complete cells, dropping the rest with a warning.
    Lenient,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub layout: Layout,
    pub missing: MissingPolicy,
    pub domain: ValueDomain,
}

#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: Panel,
    pub warnings: Vec<String>,
}

fn is_missing_marker(s: &str) -> bool {
    matches!(s, "" | "NA" | ":")
}

fn parse_cell(s: &str, line: usize) -> Result<Option<f64>> {
    let s = s.trim();
    if is_missing_marker(s) {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::MalformedInput {
            line,
            reason: format!("cannot parse value {s:?}"),
        }),
    }
}

fn parse_year(s: &str, line: usize) -> Result<i32> {
    s.trim().parse::<i32>().map_err(|_| Error::MalformedInput {
        line,
        reason: format!("cannot parse year {s:?}"),
    })
}

fn csv_reader<R: Read>(src: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(false)
        .from_reader(src)
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn malformed(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::MalformedInput {
        line,
        reason: e.to_string(),
    }
}

/// Unaligned grid read from a file: one optional cell per (unit, year).
struct Grid {
    codes: Vec<String>,
    years: Vec<i32>,
    cells: Vec<Vec<Option<f64>>>,
}

fn read_wide<R: Read>(src: R) -> Result<Grid> {
    let mut rdr = csv_reader(src);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(malformed)?,
        None => return Err(Error::EmptyPanel { units: 0, periods: 0 }),
    };
    let line = record_line(&header);
    if header.get(0) != Some("unit") {
        return Err(Error::MalformedInput {
            line,
            reason: "wide header must start with `unit`".into(),
        });
    }
    let years = header
        .iter()
        .skip(1)
        .map(|y| parse_year(y, line))
        .collect::<Result<Vec<_>>>()?;
    if years.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::MalformedInput {
            line,
            reason: "year columns must be consecutive and increasing".into(),
        });
    }
    let mut codes = Vec::new();
    let mut cells = Vec::new();
    for rec in records {
        let rec = rec.map_err(malformed)?;
        let line = record_line(&rec);
        let code = rec.get(0).unwrap_or_default().to_string();
        if code.is_empty() {
            return Err(Error::MalformedInput {
                line,
                reason: "empty unit code".into(),
            });
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|c| parse_cell(c, line))
            .collect::<Result<Vec<_>>>()?;
        codes.push(code);
        cells.push(row);
    }
    Ok(Grid { codes, years, cells })
}

fn read_long<R: Read>(src: R) -> Result<Grid> {
    let mut rdr = csv_reader(src);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(malformed)?,
        None => return Err(Error::EmptyPanel { units: 0, periods: 0 }),
    };
    let cols: Vec<&str> = header.iter().collect();
    if cols != ["unit", "year", "value"] {
        return Err(Error::MalformedInput {
            line: record_line(&header),
            reason: "long header must be `unit,year,value`".into(),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut obs: HashMap<String, BTreeMap<i32, Option<f64>>> = HashMap::new();
    for rec in records {
        let rec = rec.map_err(malformed)?;
        let line = record_line(&rec);
        let code = rec[0].to_string();
        if code.is_empty() {
            return Err(Error::MalformedInput {
                line,
                reason: "empty unit code".into(),
            });
        }
        let year = parse_year(&rec[1], line)?;
        let value = parse_cell(&rec[2], line)?;
        let entry = obs.entry(code.clone()).or_insert_with(|| {
            order.push(code.clone());
            BTreeMap::new()
        });
        if entry.insert(year, value).is_some() {
            return Err(Error::MalformedInput {
                line,
                reason: format!("duplicate observation for {code} in {year}"),
            });
        }
    }
    let lo = obs.values().filter_map(|m| m.keys().next()).min().copied();
    let hi = obs.values().filter_map(|m| m.keys().last()).max().copied();
    let years: Vec<i32> = match (lo, hi) {
        (Some(lo), Some(hi)) => (lo..=hi).collect(),
        _ => Vec::new(),
    };
    let cells = order
        .iter()
        .map(|c| years.iter().map(|y| obs[c].get(y).copied().flatten()).collect())
        .collect();
    Ok(Grid {
        codes: order,
        years,
        cells,
    })
}

/// Reads a panel from CSV text.
///
/// The period range is the maximal contiguous range with complete data for
/// every retained unit. See [`MissingPolicy`] for how gaps are treated.
pub fn load_panel<R: Read>(src: R, opts: &LoadOptions) -> Result<LoadedPanel> {
    let grid = match opts.layout {
        Layout::Wide => read_wide(src)?,
        Layout::Long => read_long(src)?,
    };
    let mut seen = BTreeSet::new();
    for c in &grid.codes {
        if !seen.insert(c.as_str()) {
            return Err(Error::MalformedInput {
                line: 0,
                reason: format!("duplicate unit {c}"),
            });
        }
    }
    for (i, row) in grid.cells.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if let Some(v) = *v {
                if !opts.domain.admits(v) {
                    return Err(Error::NonPositiveValue {
                        unit: grid.codes[i].clone(),
                        period: grid.years[j],
                        value: v,
                    });
                }
            }
        }
    }
    if grid.codes.len() < MIN_UNITS || grid.years.len() < MIN_PERIODS {
        return Err(Error::EmptyPanel {
            units: grid.codes.len(),
            periods: grid.years.len(),
        });
    }

    let mut warnings = Vec::new();
    let (keep, lo, hi) = match opts.missing {
        MissingPolicy::Strict => {
            let complete = |j: usize| grid.cells.iter().all(|r| r[j].is_some());
            let t = grid.years.len();
            let Some(lo) = (0..t).find(|&j| complete(j)) else {
                return Err(Error::EmptyPanel {
                    units: grid.codes.len(),
                    periods: 0,
                });
            };
            let hi = (0..t).rev().find(|&j| complete(j)).unwrap_or(lo);
            for (i, row) in grid.cells.iter().enumerate() {
                if let Some(j) = (lo..=hi).find(|&j| row[j].is_none()) {
                    return Err(Error::MissingValue {
                        unit: grid.codes[i].clone(),
                        period: grid.years[j],
                    });
                }
            }
            ((0..grid.codes.len()).collect::<Vec<_>>(), lo, hi)
        }
        MissingPolicy::Lenient => best_complete_block(&grid).ok_or(Error::EmptyPanel {
            units: 0,
            periods: 0,
        })?,
    };
    if lo > 0 || hi + 1 < grid.years.len() {
        warnings.push(format!(
            "period range trimmed to {}-{}",
            grid.years[lo], grid.years[hi]
        ));
    }
    for (i, c) in grid.codes.iter().enumerate() {
        if !keep.contains(&i) {
            warnings.push(format!(
                "unit {c} dropped: incomplete over {}-{}",
                grid.years[lo], grid.years[hi]
            ));
        }
    }
    let units = keep.iter().map(|&i| UnitId::new(grid.codes[i].clone())).collect();
    let values = keep
        .iter()
        .flat_map(|&i| grid.cells[i][lo..=hi].iter().map(|v| v.expect("complete block")))
        .collect();
    let panel = Panel::from_parts(units, grid.years[lo..=hi].to_vec(), values, opts.domain)?;
    Ok(LoadedPanel { panel, warnings })
}

/// Year range and unit subset maximising the number of complete cells.
/// Ties prefer more units, then the later range.
fn best_complete_block(grid: &Grid) -> Option<(Vec<usize>, usize, usize)> {
    let t = grid.years.len();
    let mut best: Option<(usize, usize, Vec<usize>, usize, usize)> = None;
    for lo in 0..t {
        for hi in lo + MIN_PERIODS - 1..t {
            let keep: Vec<usize> = (0..grid.codes.len())
                .filter(|&i| grid.cells[i][lo..=hi].iter().all(Option::is_some))
                .collect();
            if keep.len() < MIN_UNITS {
                continue;
            }
            let cells = keep.len() * (hi - lo + 1);
            let better = match &best {
                None => true,
                Some((bc, bn, ..)) => (cells, keep.len()) >= (*bc, *bn),
            };
            if better {
                best = Some((cells, keep.len(), keep, lo, hi));
            }
        }
    }
    best.map(|(_, _, keep, lo, hi)| (keep, lo, hi))
}

/// Per-unit positive targets, e.g. national 2020 RES shares in percent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetVector {
    targets: BTreeMap<String, f64>,
}

impl TargetVector {
    pub fn new(pairs: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut targets = BTreeMap::new();
        for (unit, value) in pairs {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidTarget { unit, value });
            }
            if targets.insert(unit.clone(), value).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate target for {unit}")));
            }
        }
        Ok(TargetVector { targets })
    }

    /// Same target for every listed unit.
    pub fn uniform<'a>(codes: impl IntoIterator<Item = &'a str>, value: f64) -> Result<Self> {
        Self::new(codes.into_iter().map(|c| (c.to_string(), value)))
    }

    pub fn get(&self, code: &str) -> Option<f64> {
        self.targets.get(code).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.targets.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Element-wise reciprocal.
    pub fn reciprocal(&self) -> Self {
        TargetVector {
            targets: self.targets.iter().map(|(k, v)| (k.clone(), 1.0 / v)).collect(),
        }
    }
}

/// Reads a `unit,target` file.
pub fn load_targets<R: Read>(src: R) -> Result<TargetVector> {
    let mut rdr = csv_reader(src);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(malformed)?,
        None => return Err(Error::InvalidConfig("empty target file".into())),
    };
    let cols: Vec<&str> = header.iter().collect();
    if cols != ["unit", "target"] {
        return Err(Error::MalformedInput {
            line: record_line(&header),
            reason: "target header must be `unit,target`".into(),
        });
    }
    let mut pairs = Vec::new();
    for rec in records {
        let rec = rec.map_err(malformed)?;
        let line = record_line(&rec);
        let value = parse_cell(&rec[1], line)?.ok_or(Error::MalformedInput {
            line,
            reason: "missing target".into(),
        })?;
        pairs.push((rec[0].to_string(), value));
    }
    TargetVector::new(pairs)
}

/// Divides each unit's series by its target ("distance to goal" panel).
pub fn rescale_to_targets(panel: &Panel, targets: &TargetVector) -> Result<Panel> {
    let t = panel.n_periods();
    let mut out = panel.clone();
    for (i, u) in panel.units.iter().enumerate() {
        let k = targets
            .get(&u.code)
            .ok_or_else(|| Error::MissingTarget(u.code.clone()))?;
        out.values[i * t..(i + 1) * t].iter_mut().for_each(|v| *v /= k);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SmoothingConfig {
    #[default]
    None,
    HpFilter { lambda: f64 },
}

impl SmoothingConfig {
    /// Conventional smoothing parameter for annual data.
    pub const ANNUAL_HP_LAMBDA: f64 = 6.25;

    pub fn validate(&self) -> Result<()> {
        match *self {
            SmoothingConfig::HpFilter { lambda } if !(lambda > 0.0 && lambda.is_finite()) => Err(
                Error::InvalidConfig(format!("HP lambda must be positive, got {lambda}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Optional pre-smoothing of every unit's series.
pub fn smooth(panel: &Panel, cfg: &SmoothingConfig) -> Result<Panel> {
    cfg.validate()?;
    let SmoothingConfig::HpFilter { lambda } = *cfg else {
        return Ok(panel.clone());
    };
    let t = panel.n_periods();
    let mut out = panel.clone();
    for i in 0..panel.n_units() {
        let trend = hp_trend(panel.series(i), lambda);
        for (j, v) in trend.into_iter().enumerate() {
            if !panel.domain.admits(v) {
                return Err(Error::SmoothingBrokePositivity {
                    unit: panel.units[i].code.clone(),
                    period: panel.periods[j],
                });
            }
            out.values[i * t + j] = v;
        }
    }
    let t = out.periods.clone();
    Panel::from_parts(out.units, t, out.values, out.domain)
}

/// Hodrick-Prescott trend: the minimiser of
/// `sum (y_t - tau_t)^2 + lambda * sum (second difference of tau)^2`.
///
/// Solved as `tau = y - D' (I/lambda + D D')^{-1} D y`, where `D` is the
/// second-difference operator. `D D'` is a banded Toeplitz matrix, so the
/// inner system is a symmetric pentadiagonal solve that stays well
/// conditioned as lambda grows (the limit is the least-squares line).
pub fn hp_trend(y: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    if n < 3 {
        return y.to_vec();
    }
    let m = n - 2;
    let dy: Vec<f64> = (0..m).map(|k| y[k] - 2.0 * y[k + 1] + y[k + 2]).collect();
    let inv = 1.0 / lambda;
    let diag = vec![6.0 + inv; m];
    let off1 = vec![-4.0; m.saturating_sub(1)];
    let off2 = vec![1.0; m.saturating_sub(2)];
    let z = solve_pentadiagonal(&diag, &off1, &off2, &dy);
    // tau = y - D'z
    let mut tau = y.to_vec();
    for (k, zk) in z.iter().enumerate() {
        tau[k] -= zk;
        tau[k + 1] += 2.0 * zk;
        tau[k + 2] -= zk;
    }
    tau
}

/// Solves a symmetric positive definite pentadiagonal system by banded LDL'.
fn solve_pentadiagonal(diag: &[f64], off1: &[f64], off2: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut d = vec![0.0; m];
    let mut l1 = vec![0.0; m]; // L[k+1][k]
    let mut l2 = vec![0.0; m]; // L[k+2][k]
    for k in 0..m {
        let mut dk = diag[k];
        if k >= 1 {
            dk -= l1[k - 1] * l1[k - 1] * d[k - 1];
        }
        if k >= 2 {
            dk -= l2[k - 2] * l2[k - 2] * d[k - 2];
        }
        d[k] = dk;
        if k + 1 < m {
            let mut a = off1[k];
            if k >= 1 {
                a -= l2[k - 1] * l1[k - 1] * d[k - 1];
            }
            l1[k] = a / dk;
        }
        if k + 2 < m {
            l2[k] = off2[k] / dk;
        }
    }
    let mut x = rhs.to_vec();
    for k in 0..m {
        if k >= 1 {
            x[k] -= l1[k - 1] * x[k - 1];
        }
        if k >= 2 {
            x[k] -= l2[k - 2] * x[k - 2];
        }
    }
    for k in 0..m {
        x[k] /= d[k];
    }
    for k in (0..m).rev() {
        if k + 1 < m {
            x[k] -= l1[k] * x[k + 1];
        }
        if k + 2 < m {
            x[k] -= l2[k] * x[k + 2];
        }
    }
    x
}
