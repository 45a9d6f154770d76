use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use serde_json::json;

use ttkf::timing::{
    linear_fit_r2, measure_dense_step_seconds, median, run_scaling_sweep, ScalingConfig,
};
use ttkf::tt::RoundingPolicy;

use crate::config::{load, pick};
use crate::{CliError, Outcome};

#[derive(Args, Debug)]
pub(crate) struct BenchArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Smallest degree in the sweep.
    #[arg(long)]
    d_min: Option<usize>,
    /// Largest degree in the sweep.
    #[arg(long)]
    d_max: Option<usize>,
    /// Mode size n.
    #[arg(long)]
    mode_size: Option<usize>,
    /// Filter steps per degree (the median is reported).
    #[arg(long)]
    iterations: Option<usize>,
    /// Rounding tolerance τ.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Rank cap (1 reproduces the linear-in-d regime).
    #[arg(long)]
    max_rank: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Timing table CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also time the dense reference filter (refuses oversized states).
    #[arg(long)]
    dense: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchFile {
    d_min: Option<usize>,
    d_max: Option<usize>,
    mode_size: Option<usize>,
    iterations: Option<usize>,
    tolerance: Option<f64>,
    max_rank: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    dense: Option<bool>,
}

pub(crate) fn run(args: BenchArgs) -> Result<Outcome, CliError> {
    let file: BenchFile = match &args.config {
        Some(path) => load(path)?,
        None => BenchFile::default(),
    };
    let d_min = pick(args.d_min, file.d_min).unwrap_or(2);
    let d_max = pick(args.d_max, file.d_max).unwrap_or(8);
    let mode_size = pick(args.mode_size, file.mode_size).unwrap_or(32);
    let iterations = pick(args.iterations, file.iterations).unwrap_or(100);
    let tolerance = pick(args.tolerance, file.tolerance).unwrap_or(0.1);
    let max_rank = pick(args.max_rank, file.max_rank).or(Some(1));
    let seed = pick(args.seed, file.seed).unwrap_or(0);
    let dense = args.dense || file.dense.unwrap_or(false);
    let out = pick(args.out, file.out);

    if d_min < 1 || d_max < d_min {
        return Err(CliError::Usage(format!("invalid degree range {d_min}..{d_max}")));
    }
    let cfg = ScalingConfig {
        degrees: (d_min..=d_max).collect(),
        mode_size,
        iterations,
        policy: RoundingPolicy::new(tolerance, max_rank)?,
        seed,
    };
    let points = run_scaling_sweep(&cfg)?;

    let mut dense_medians: Vec<Option<f64>> = vec![None; points.len()];
    if dense {
        for (i, point) in points.iter().enumerate() {
            let times = measure_dense_step_seconds(mode_size, point.degree, iterations, seed)?;
            dense_medians[i] = Some(median(times));
        }
    }

    if let Some(path) = &out {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        if dense {
            writeln!(w, "d,median_seconds,dense_median_seconds")?;
        } else {
            writeln!(w, "d,median_seconds")?;
        }
        for (point, dm) in points.iter().zip(&dense_medians) {
            match dm {
                Some(dm) => writeln!(w, "{},{},{}", point.degree, point.median_seconds, dm)?,
                None => writeln!(w, "{},{}", point.degree, point.median_seconds)?,
            }
        }
    }

    let fit: Vec<(f64, f64)> =
        points.iter().map(|p| (p.degree as f64, p.median_seconds)).collect();
    let r2 = linear_fit_r2(&fit);
    let summary = json!({
        "mode_size": mode_size,
        "iterations": iterations,
        "tolerance": tolerance,
        "max_rank": max_rank,
        "points": points
            .iter()
            .zip(&dense_medians)
            .map(|(p, dm)| {
                json!({
                    "d": p.degree,
                    "median_seconds": p.median_seconds,
                    "dense_median_seconds": dm,
                })
            })
            .collect::<Vec<_>>(),
        "linear_fit_r2": r2,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    Ok(Outcome::Ok)
}
