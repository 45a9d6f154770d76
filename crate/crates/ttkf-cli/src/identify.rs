use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use serde_json::json;

use ttkf::io::{load_tensor_train, read_io_csv, save_tensor_train};
use ttkf::kalman::{ModelSpec, ProcessNoise, Transition};
use ttkf::timing::median;
use ttkf::tt::{RoundingPolicy, TTMatrix};
use ttkf::volterra::{identify, rmse, IdentifyOptions, IdentifyResult, StepMetrics};

use crate::config::{broadcast, load, pick, require};
use crate::{CliError, Outcome};

#[derive(Args, Debug)]
pub(crate) struct IdentifyArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input/output record CSV (`t,u1..up,y1..yl`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Memory length M.
    #[arg(long)]
    memory: Option<usize>,
    /// Volterra degree d.
    #[arg(long)]
    degree: Option<usize>,
    /// Initial coefficient variance σ² (one value, or one per output).
    #[arg(long, value_delimiter = ',')]
    sigma2: Option<Vec<f64>>,
    /// Measurement-noise variance (one value, or one per output).
    #[arg(long, value_delimiter = ',')]
    measurement_variance: Option<Vec<f64>>,
    /// Process-noise variance; builds Q = q·I (default: none).
    #[arg(long)]
    process_noise_variance: Option<f64>,
    /// Relative rounding tolerance τ.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Hard cap on every TT rank.
    #[arg(long)]
    max_rank: Option<usize>,
    /// Number of samples to filter (default: all minus the holdout).
    #[arg(long)]
    steps: Option<usize>,
    /// True kernel container for the relative-error column.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Hold out the last N samples and report the RMSE of simulating them.
    #[arg(long)]
    holdout: Option<usize>,
    /// Clean reference CSV for the holdout RMSE (default: the input record).
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Per-iteration metrics CSV.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Identified kernel container.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentifyFile {
    input: Option<PathBuf>,
    memory: Option<usize>,
    degree: Option<usize>,
    sigma2: Option<Vec<f64>>,
    measurement_variance: Option<Vec<f64>>,
    process_noise_variance: Option<f64>,
    tolerance: Option<f64>,
    max_rank: Option<usize>,
    steps: Option<usize>,
    truth: Option<PathBuf>,
    holdout: Option<usize>,
    reference: Option<PathBuf>,
    metrics_out: Option<PathBuf>,
    model_out: Option<PathBuf>,
}

pub(crate) fn run(args: IdentifyArgs) -> Result<Outcome, CliError> {
    let file: IdentifyFile = match &args.config {
        Some(path) => load(path)?,
        None => IdentifyFile::default(),
    };
    let input = require(pick(args.input, file.input), "input")?;
    let memory = require(pick(args.memory, file.memory), "memory")?;
    let degree = require(pick(args.degree, file.degree), "degree")?;
    let sigma2 = require(pick(args.sigma2, file.sigma2), "sigma2")?;
    let measurement_variance = require(
        pick(args.measurement_variance, file.measurement_variance),
        "measurement-variance",
    )?;
    let tolerance = pick(args.tolerance, file.tolerance).unwrap_or(0.0);
    let max_rank = pick(args.max_rank, file.max_rank);
    let steps = pick(args.steps, file.steps);
    let truth_path = pick(args.truth, file.truth);
    let holdout = pick(args.holdout, file.holdout).unwrap_or(0);
    let reference = pick(args.reference, file.reference);
    let metrics_out = pick(args.metrics_out, file.metrics_out);
    let model_out = pick(args.model_out, file.model_out);
    let process_noise_variance = pick(args.process_noise_variance, file.process_noise_variance);

    if !input.exists() {
        return Err(CliError::Usage(format!("input file {} does not exist", input.display())));
    }
    let record = read_io_csv(&input)?;
    let p = record.num_inputs();
    let l = record.num_outputs();
    let n = p * memory + 1;
    let total = record.num_samples();
    if holdout >= total {
        return Err(CliError::Usage(format!(
            "holdout {holdout} exceeds the record length {total}"
        )));
    }
    let filter_span = total - holdout;
    let steps = steps.unwrap_or(filter_span).min(filter_span);

    let policy = RoundingPolicy::new(tolerance, max_rank)?;
    let truth = match &truth_path {
        Some(path) => Some(load_tensor_train(path)?),
        None => None,
    };
    let opts = IdentifyOptions {
        inputs: p,
        outputs: l,
        memory,
        degree,
        init_variance: broadcast(sigma2, l, "sigma2")?,
        policy,
        steps: Some(steps),
        truth,
    };
    let measurement_variance = broadcast(measurement_variance, l, "measurement-variance")?;
    let process_noise = match process_noise_variance {
        Some(q) => ProcessNoise::Diagonal(TTMatrix::scaled_identity(&vec![q; l], n, degree)?),
        None => ProcessNoise::Zero,
    };
    let model = ModelSpec {
        transition: Transition::Identity,
        process_noise,
        measurement_variance,
    };

    let result = identify(&opts, &model, &record)?;

    if let Some(path) = &metrics_out {
        write_metrics_csv(path, &result.metrics, l, degree)?;
    }
    if let Some(path) = &model_out {
        save_tensor_train(path, &result.spec.kernel)?;
    }

    let holdout_rmse = if holdout > 0 {
        let reference_outputs = match &reference {
            Some(path) => read_io_csv(path)?.outputs().to_vec(),
            None => record.outputs().to_vec(),
        };
        if reference_outputs.len() != l || reference_outputs[0].len() != total {
            return Err(CliError::Usage(
                "reference record does not match the input record shape".into(),
            ));
        }
        let mut values = Vec::with_capacity(l);
        for (b, reference_channel) in reference_outputs.iter().enumerate() {
            let mut simulated = Vec::with_capacity(holdout);
            for t in filter_span..total {
                simulated.push(result.spec.simulate(record.inputs(), t)?[b]);
            }
            values.push(rmse(&simulated, &reference_channel[filter_span..]));
        }
        Some(values)
    } else {
        None
    };

    print_summary(&result, holdout_rmse.as_deref());
    Ok(Outcome::Ok)
}

fn print_summary(result: &IdentifyResult, holdout_rmse: Option<&[f64]>) {
    let metrics = &result.metrics;
    let times: Vec<f64> = metrics.iter().map(|m| m.seconds).collect();
    let d_minus_1 = result.spec.kernel.ranks().len();
    let mut max_mean = vec![0usize; d_minus_1];
    let mut max_cov = vec![0usize; d_minus_1];
    for m in metrics {
        for (acc, &r) in max_mean.iter_mut().zip(&m.mean_ranks) {
            *acc = (*acc).max(r);
        }
        for (acc, &r) in max_cov.iter_mut().zip(&m.cov_ranks) {
            *acc = (*acc).max(r);
        }
    }
    let summary = json!({
        "steps": metrics.len(),
        "outputs": result.spec.outputs,
        "final_rel_err": metrics.last().and_then(|m| m.rel_err),
        "median_step_seconds": if times.is_empty() { json!(null) } else { json!(median(times)) },
        "max_mean_ranks": max_mean,
        "max_cov_ranks": max_cov,
        "final_mean_ranks": result.spec.kernel.ranks(),
        "holdout_rmse": holdout_rmse,
        "kernel_storage_floats": result.spec.kernel.storage_floats(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
}

fn write_metrics_csv(
    path: &PathBuf,
    metrics: &[StepMetrics],
    l: usize,
    degree: usize,
) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec!["t".to_string(), "rel_err".to_string()];
    if l == 1 {
        header.push("innovation".into());
        header.push("s".into());
    } else {
        header.extend((1..=l).map(|k| format!("innovation_{k}")));
        header.extend((1..=l).map(|k| format!("s_{k}")));
    }
    header.extend((1..degree).map(|k| format!("rank_mean_{k}")));
    header.extend((1..degree).map(|k| format!("rank_cov_{k}")));
    header.push("step_seconds".into());
    writeln!(out, "{}", header.join(","))?;
    for m in metrics {
        let mut row = vec![
            m.t.to_string(),
            m.rel_err.map(|e| format!("{e}")).unwrap_or_default(),
        ];
        row.extend(m.innovation.iter().map(|v| format!("{v}")));
        row.extend(m.innovation_variance.iter().map(|v| format!("{v}")));
        row.extend(m.mean_ranks.iter().map(|r| r.to_string()));
        row.extend(m.cov_ranks.iter().map(|r| r.to_string()));
        row.push(format!("{}", m.seconds));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
