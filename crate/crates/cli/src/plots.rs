//! Emits one gnuplot script per CSV series in a report directory. Nothing is
//! rendered here; the scripts are plain text a user can feed to gnuplot.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Writes `{stem}.gp` next to every `{stem}.csv` in `dir` and returns the
/// script paths. A directory without any CSV series is an error.
pub fn plot_emit(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut csvs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            (path.extension().and_then(|e| e.to_str()) == Some("csv")).then_some(path)
        })
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("no CSV series in {}", dir.display()),
        ));
    }
    let mut scripts = Vec::with_capacity(csvs.len());
    for csv in csvs {
        let stem = csv
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("series")
            .to_string();
        let file_name = csv
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("series.csv")
            .to_string();
        // The CSV starts with a JSON comment line and a column header, hence
        // the two skipped lines.
        let script = format!(
            "# gnuplot script for {file_name}\n\
             set datafile separator ','\n\
             set key off\n\
             set xlabel 't'\n\
             set ylabel '{stem}'\n\
             set terminal pngcairo size 960,640\n\
             set output '{stem}.png'\n\
             plot '{file_name}' skip 2 using 1:2 with lines\n"
        );
        let path = csv.with_extension("gp");
        fs::write(&path, script)?;
        scripts.push(path);
    }
    Ok(scripts)
}
