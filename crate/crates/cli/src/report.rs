//! Table rendering and density-plot data for finished runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use estimand_forge_core::harness::output::{self, RawRow};
use estimand_forge_core::{ResultRow, Strategy};
use serde::Serialize;

pub const DENSITY_HEADER: &str = "scenario_id,replicate,mix_tpe,pooled_hr,log_hr";

#[derive(Debug, Serialize)]
struct DensityRow<'a> {
    scenario_id: &'a str,
    replicate: u64,
    mix_tpe: f64,
    pooled_hr: f64,
    log_hr: f64,
}

fn estimator_label(mix_tpe: f64) -> String {
    let tpe = (mix_tpe * 100.0).round() as i64;
    match tpe {
        0 => "pure HE".to_string(),
        100 => "pure TPE".to_string(),
        _ => format!("TPE {tpe}% + HE {}%", 100 - tpe),
    }
}

fn interval(center: f64, low: f64, high: f64) -> String {
    format!("{center:.2} ({low:.2}, {high:.2})")
}

/// Rows of one (scenario, dgm, pooling) block, in file order.
fn blocks(rows: &[ResultRow]) -> Vec<&[ResultRow]> {
    let same = |a: &ResultRow, b: &ResultRow| a.scenario_id == b.scenario_id && a.dgm == b.dgm && a.pooling == b.pooling;
    rows.chunk_by(|a, b| same(a, b)).collect()
}

pub fn render_tables(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    for block in blocks(rows) {
        let first = &block[0];
        let truth = |s: Strategy| block.iter().find(|r| r.ref_estimand == s).map_or(f64::NAN, |r| r.true_hr);
        let _ = writeln!(
            out,
            "{} | dgm {} | pooling {} | N = {}",
            first.scenario_id,
            first.dgm.as_str(),
            first.pooling.as_str(),
            first.n_replicates
        );
        let _ = writeln!(
            out,
            "{:<18} {:<19} | vs HE (true {:.2})               | vs TPE (true {:.2})",
            "",
            "",
            truth(Strategy::Hypothetical),
            truth(Strategy::TreatmentPolicy)
        );
        let _ = writeln!(
            out,
            "{:<18} {:<19} | {:<22} {:>8} | {:<22} {:>8}",
            "estimator", "HR (mean 95% CI)", "bias (2.5%, 97.5%)", "coverage", "bias (2.5%, 97.5%)", "coverage"
        );
        let mut mixes: Vec<f64> = block.iter().map(|r| r.mix_tpe).collect();
        mixes.dedup();
        for mix in mixes {
            let find = |s: Strategy| block.iter().find(|r| r.mix_tpe == mix && r.ref_estimand == s);
            let (Some(he), Some(tp)) = (find(Strategy::Hypothetical), find(Strategy::TreatmentPolicy)) else {
                continue;
            };
            let _ = writeln!(
                out,
                "{:<18} {:<19} | {:<22} {:>8.2} | {:<22} {:>8.2}",
                estimator_label(mix),
                interval(he.mean_hr, he.mean_ci_low, he.mean_ci_high),
                interval(he.bias, he.pct2_5, he.pct97_5),
                he.coverage,
                interval(tp.bias, tp.pct2_5, tp.pct97_5),
                tp.coverage
            );
        }
        out.push('\n');
    }
    out
}

fn raw_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("raw_") && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Density-plot data: one row per (replicate, mixing proportion).
pub fn write_density(raw_path: &Path, out_dir: &Path) -> Result<PathBuf> {
    let raw: Vec<RawRow> = output::read_file(raw_path)?;
    let rows: Vec<DensityRow> = raw
        .iter()
        .map(|r| DensityRow {
            scenario_id: &r.scenario_id,
            replicate: r.replicate,
            mix_tpe: r.mix_tpe,
            pooled_hr: r.pooled_hr,
            log_hr: r.pooled_hr.ln(),
        })
        .collect();
    let name = raw_path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_prefix("raw_"))
        .context("raw file name")?;
    let path = out_dir.join(format!("density_{name}"));
    output::write_file(&path, &rows, DENSITY_HEADER)?;
    Ok(path)
}

pub fn run(results: &Path, raw_dir: Option<&Path>, output_dir: Option<&Path>) -> Result<()> {
    ensure!(results.is_file(), "results file not found: {}", results.display());
    let rows: Vec<ResultRow> =
        output::read_file(results).with_context(|| format!("reading {}", results.display()))?;
    ensure!(!rows.is_empty(), "{} contains no result rows", results.display());
    let tables = render_tables(&rows);

    let Some(out_dir) = output_dir else {
        print!("{tables}");
        return Ok(());
    };
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let tables_path = out_dir.join("tables.txt");
    std::fs::write(&tables_path, &tables).with_context(|| format!("writing {}", tables_path.display()))?;

    let default_raw = results.parent().unwrap_or(Path::new(".")).join("raw");
    let raw_dir = raw_dir.unwrap_or(&default_raw);
    let mut written = 0;
    for raw in raw_files(raw_dir)? {
        write_density(&raw, out_dir)?;
        written += 1;
    }
    println!(
        "wrote {} and {written} density files to {}",
        tables_path.display(),
        out_dir.display()
    );
    Ok(())
}
