//! Probit inputs: window-averaged covariates and a club partition file.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use clubconv_core::clustering::ClubPartition;
use clubconv_core::probit::DesignMatrix;

use crate::config::CovariateSpec;
use crate::error::{CliError, Result};

/// Unit code -> year -> value. Zero and negative values are allowed.
pub type CovariateSeries = BTreeMap<String, BTreeMap<i32, f64>>;

fn is_missing(s: &str) -> bool {
    matches!(s, "" | "NA" | ":")
}

fn reader<R: Read>(src: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(src)
}

fn bad(path: &Path, line: u64, reason: impl Into<String>) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        reason: format!("line {line}: {}", reason.into()),
    }
}

/// Long-layout covariate file `unit,year,value`.
pub fn read_covariate<R: Read>(src: R, path: &Path) -> Result<CovariateSeries> {
    let mut rdr = reader(src);
    let header = rdr.headers().map_err(|e| bad(path, 1, e.to_string()))?.clone();
    if header.len() != 3 || &header[0] != "unit" || &header[1] != "year" || &header[2] != "value" {
        return Err(bad(path, 1, "expected header `unit,year,value`"));
    }
    let mut out = CovariateSeries::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let year: i32 = rec[1].parse().map_err(|_| bad(path, line, format!("bad year `{}`", &rec[1])))?;
        if is_missing(&rec[2]) {
            continue;
        }
        let value: f64 = rec[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad(path, line, format!("bad value `{}`", &rec[2])))?;
        if out.entry(rec[0].to_string()).or_default().insert(year, value).is_some() {
            return Err(bad(path, line, format!("duplicate {} {year}", &rec[0])));
        }
    }
    Ok(out)
}

pub fn load_covariate(path: &Path) -> Result<CovariateSeries> {
    let f = std::fs::File::open(path).map_err(CliError::io(path))?;
    read_covariate(f, path)
}

/// Mean over the available years of `window` (inclusive).
pub fn window_mean(series: &BTreeMap<i32, f64>, window: (i32, i32)) -> Option<f64> {
    let vals: Vec<f64> = series.range(window.0..=window.1).map(|(_, &v)| v).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn missing(reason: String) -> CliError {
    CliError::Core(clubconv_core::Error::InvalidDesign(reason))
}

/// One row per unit, one column per spec.
pub fn covariate_rows(
    units: &[String],
    specs: &[CovariateSpec],
    sources: &BTreeMap<String, CovariateSeries>,
) -> Result<Vec<Vec<f64>>> {
    units
        .iter()
        .map(|u| {
            specs
                .iter()
                .map(|s| {
                    let series = sources
                        .get(&s.source)
                        .and_then(|c| c.get(u))
                        .ok_or_else(|| missing(format!("no {} data for {u}", s.source)))?;
                    let m = window_mean(series, s.window).ok_or_else(|| {
                        missing(format!("no {} data for {u} in {}-{}", s.source, s.window.0, s.window.1))
                    })?;
                    Ok(if s.square { m * m } else { m })
                })
                .collect()
        })
        .collect()
}

/// Design matrix with a leading constant; `y = 1` for club 2 and `0` for club 1.
pub fn build_design(
    partition: &[(String, u32)],
    specs: &[CovariateSpec],
    sources: &BTreeMap<String, CovariateSeries>,
) -> Result<DesignMatrix> {
    let units: Vec<String> = partition.iter().map(|(u, _)| u.clone()).collect();
    let y = partition
        .iter()
        .map(|(u, c)| match c {
            1 => Ok(0),
            2 => Ok(1),
            0 => Err(CliError::Core(clubconv_core::Error::InvalidDesign(format!(
                "{u} is divergent; the outcome needs clubs 1 and 2 only"
            )))),
            _ => Err(CliError::Core(clubconv_core::Error::InvalidDesign(format!(
                "{u} is in club {c}; the outcome needs clubs 1 and 2 only"
            )))),
        })
        .collect::<Result<Vec<u8>>>()?;
    let rows: Vec<Vec<f64>> = covariate_rows(&units, specs, sources)?
        .into_iter()
        .map(|r| std::iter::once(1.0).chain(r).collect())
        .collect();
    let names = std::iter::once("const".to_string())
        .chain(specs.iter().map(|s| s.name.clone()))
        .collect();
    Ok(DesignMatrix::from_rows(names, &rows, y)?)
}

/// Partition file `unit,club`; club numbers start at 1 and divergent
/// units (`divergent`) are read as club 0.
pub fn read_partition<R: Read>(src: R, path: &Path) -> Result<Vec<(String, u32)>> {
    let mut rdr = reader(src);
    let header = rdr.headers().map_err(|e| bad(path, 1, e.to_string()))?.clone();
    if header.len() != 2 || &header[0] != "unit" || &header[1] != "club" {
        return Err(bad(path, 1, "expected header `unit,club`"));
    }
    let mut out: Vec<(String, u32)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let club: u32 = match &rec[1] {
            "divergent" => 0,
            c => c
                .parse()
                .ok()
                .filter(|&c| c >= 1)
                .ok_or_else(|| bad(path, line, format!("club must be a positive integer, got `{c}`")))?,
        };
        if out.iter().any(|(u, _)| u == &rec[0]) {
            return Err(bad(path, line, format!("duplicate unit {}", &rec[0])));
        }
        out.push((rec[0].to_string(), club));
    }
    Ok(out)
}

pub fn load_partition(path: &Path) -> Result<Vec<(String, u32)>> {
    let f = std::fs::File::open(path).map_err(CliError::io(path))?;
    read_partition(f, path)
}

/// Writes `unit,club` in club order; divergent units get `divergent`.
pub fn write_partition<W: std::io::Write>(partition: &ClubPartition, w: W) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["unit", "club"])?;
    for (k, club) in partition.clubs.iter().enumerate() {
        for m in &club.members {
            wtr.write_record([m.as_str(), &(k + 1).to_string()])?;
        }
    }
    for d in &partition.divergent {
        wtr.write_record([d.as_str(), "divergent"])?;
    }
    wtr.flush()
}
