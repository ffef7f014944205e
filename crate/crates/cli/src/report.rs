use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tsmeta::eval::{rank_results, read_results_csv, write_ranked_csv, write_results_csv, Flag, RankedRow};

pub fn report(files: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_results_csv(f).with_context(|| format!("reading {}", f.display()))?);
    }
    let ranked = rank_results(&rows);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_results_csv(&dir.join("merged.csv"), &rows)?;
        write_ranked_csv(&dir.join("ranked.csv"), &ranked)?;
    }
    print!("{}", table(&ranked));
    Ok(())
}

/// Plain-text table; `**` marks the best and `*` the second-best MAE of
/// each column.
pub fn table(rows: &[RankedRow]) -> String {
    let mut s = format!(
        "{:<16} {:<14} {:>5} {:>7} {:>19}\n",
        "dataset", "model", "steps", "horizon", "MAE ± CI95"
    );
    for r in rows {
        let mark = match r.flag {
            Flag::Best => "**",
            Flag::Second => "*",
            Flag::None => "",
        };
        s += &format!(
            "{:<16} {:<14} {:>5} {:>7} {:>8.5} ± {:.5} {mark}\n",
            r.dataset, r.model, r.gradient_steps, r.horizon, r.mae, r.ci95
        );
    }
    s
}
