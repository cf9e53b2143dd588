//! Plot-ready transition-path CSVs.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use clubconv_core::clustering::ClubPartition;
use clubconv_core::logt::TransitionPaths;

use crate::fmt::g12;

fn create(path: &Path) -> std::io::Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn year_header(first: &str, periods: &[i32]) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain(periods.iter().map(i32::to_string))
        .collect()
}

/// Writes `h.csv` (unit x year) and `H.csv` (year, H). With a grouping it
/// also writes `club_means.csv` (year x club) and `relative_to_club.csv`,
/// each club member's path divided by its club's mean path.
pub fn emit_paths(paths: &TransitionPaths, grouping: Option<&ClubPartition>, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = create(&dir.join("h.csv"))?;
    w.write_record(year_header("unit", &paths.periods))?;
    for (u, row) in paths.units.iter().zip(&paths.h) {
        w.write_record(std::iter::once(u.code.clone()).chain(row.iter().map(|&v| g12(v))))?;
    }
    w.flush()?;

    let mut w = create(&dir.join("H.csv"))?;
    w.write_record(["year", "H"])?;
    for (p, v) in paths.periods.iter().zip(&paths.variance) {
        w.write_record([p.to_string(), g12(*v)])?;
    }
    w.flush()?;

    let Some(partition) = grouping else {
        return Ok(());
    };
    let rows_of = |members: &[String]| -> Vec<usize> {
        members
            .iter()
            .filter_map(|m| paths.units.iter().position(|u| &u.code == m))
            .collect()
    };
    let means: Vec<Vec<f64>> = partition
        .clubs
        .iter()
        .map(|c| paths.mean_path(&rows_of(&c.members)))
        .collect();

    let mut w = create(&dir.join("club_means.csv"))?;
    let header: Vec<String> = std::iter::once("year".to_string())
        .chain((1..=means.len()).map(|k| format!("club{k}")))
        .collect();
    w.write_record(&header)?;
    for (t, p) in paths.periods.iter().enumerate() {
        w.write_record(std::iter::once(p.to_string()).chain(means.iter().map(|m| g12(m[t]))))?;
    }
    w.flush()?;

    let mut w = create(&dir.join("relative_to_club.csv"))?;
    let mut header = vec!["unit".to_string(), "club".to_string()];
    header.extend(paths.periods.iter().map(i32::to_string));
    w.write_record(&header)?;
    for (k, club) in partition.clubs.iter().enumerate() {
        for i in rows_of(&club.members) {
            let rel = paths.h[i].iter().zip(&means[k]).map(|(h, m)| g12(h / m));
            w.write_record([paths.units[i].code.clone(), (k + 1).to_string()].into_iter().chain(rel))?;
        }
    }
    w.flush()?;
    Ok(())
}
