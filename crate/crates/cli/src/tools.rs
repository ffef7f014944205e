//! `gradcheck` and `synth`.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use tsmeta::eval::{synth_task_family, SynthConfig};
use tsmeta::verify::{gradient_suite, oracle_suite};

use crate::config::ConfigError;
use crate::NumericalFailure;

pub fn gradcheck(seed: u64, instances: usize) -> Result<()> {
    let mut failed = Vec::new();
    for c in gradient_suite(seed)? {
        let r = &c.report;
        println!(
            "{} {:<52} max rel. error {:.2e} over {} parameters (tolerance {:.0e})",
            if r.passed { "PASS" } else { "FAIL" },
            c.name,
            r.max_relative_error,
            r.checked,
            r.tolerance
        );
        if !r.passed {
            failed.push(c.name.to_string());
        }
    }
    let o = oracle_suite(seed, instances)?;
    println!(
        "{} {:<52} max abs. error {:.2e} over {} instances (tolerance {:.0e})",
        if o.passed { "PASS" } else { "FAIL" },
        "kernel oracle vs one-step adaptation",
        o.max_abs_error,
        o.instances,
        o.tolerance
    );
    if !o.passed {
        failed.push("kernel oracle".into());
    }
    if !failed.is_empty() {
        return Err(NumericalFailure(format!("failed checks: {}", failed.join(", "))).into());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for the CSVs, params.json and config.toml.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    regimes: usize,
    #[arg(long, default_value_t = 6)]
    series: usize,
    #[arg(long, default_value_t = 1000)]
    length: usize,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    #[arg(long, default_value_t = 1.0)]
    drift: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
}

/// Desk-scale starter configuration written next to the synthetic CSVs.
pub const SYNTH_CONFIG: &str = include_str!("../presets/synth.toml");

pub fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        regimes: a.regimes,
        series_count: a.series,
        length: a.length,
        channels: a.channels,
        drift: a.drift,
        noise: a.noise,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    let family = synth_task_family(&cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for s in &family.series {
        let path = a.out.join(format!("{}.csv", s.id));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        let mut header: Vec<String> = (0..cfg.channels).map(|k| format!("x{k}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for t in 0..s.len() {
            let mut rec: Vec<String> = s.channels.row(t).iter().map(f64::to_string).collect();
            rec.push(s.target[t].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    let params = serde_json::to_string_pretty(&family.params)?;
    std::fs::write(a.out.join("params.json"), params + "\n")?;
    std::fs::write(a.out.join("config.toml"), SYNTH_CONFIG)?;
    eprintln!("wrote {} series to {}", family.series.len(), a.out.display());
    Ok(())
}
