use std::path::PathBuf;

use clap::Args;
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;
use serde_json::json;

use ttkf::io::read_io_csv;
use ttkf::kalman::{
    contract_cov_oracle, dense_step, DenseKalmanState, KalmanState, ModelSpec,
    ORACLE_STATE_GUARD,
};
use ttkf::tt::{RoundingPolicy, TensorTrain};
use ttkf::volterra::build_ut;

use crate::config::{broadcast, load, pick};
use crate::{CliError, Outcome};

#[derive(Args, Debug)]
pub(crate) struct CompareArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optional record CSV; without it, standard-normal data is generated.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Input channel count for generated data.
    #[arg(long)]
    inputs: Option<usize>,
    /// Memory length M.
    #[arg(long)]
    memory: Option<usize>,
    /// Volterra degree d.
    #[arg(long)]
    degree: Option<usize>,
    /// Initial coefficient variance σ².
    #[arg(long, value_delimiter = ',')]
    sigma2: Option<Vec<f64>>,
    /// Measurement-noise variance.
    #[arg(long, value_delimiter = ',')]
    measurement_variance: Option<Vec<f64>>,
    /// Relative rounding tolerance τ of the tensor-train filter.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_rank: Option<usize>,
    /// Steps to run.
    #[arg(long)]
    steps: Option<usize>,
    /// Seed for generated data.
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum allowed relative deviation; exceeding it exits with code 1.
    #[arg(long)]
    bound: Option<f64>,
    /// Per-step deviation CSV.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareFile {
    input: Option<PathBuf>,
    inputs: Option<usize>,
    memory: Option<usize>,
    degree: Option<usize>,
    sigma2: Option<Vec<f64>>,
    measurement_variance: Option<Vec<f64>>,
    tolerance: Option<f64>,
    max_rank: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
    bound: Option<f64>,
    report_out: Option<PathBuf>,
}

pub(crate) fn run(args: CompareArgs) -> Result<Outcome, CliError> {
    let file: CompareFile = match &args.config {
        Some(path) => load(path)?,
        None => CompareFile::default(),
    };
    let memory = crate::config::require(pick(args.memory, file.memory), "memory")?;
    let degree = crate::config::require(pick(args.degree, file.degree), "degree")?;
    let tolerance = pick(args.tolerance, file.tolerance).unwrap_or(0.0);
    let max_rank = pick(args.max_rank, file.max_rank);
    let steps = pick(args.steps, file.steps).unwrap_or(100);
    let seed = pick(args.seed, file.seed).unwrap_or(0);
    let bound = pick(args.bound, file.bound).unwrap_or(1e-8);
    let input = pick(args.input, file.input);
    let inputs_flag = pick(args.inputs, file.inputs);

    // data: either a record or generated noise
    let (input_channels, outputs) = match &input {
        Some(path) => {
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "input file {} does not exist",
                    path.display()
                )));
            }
            let record = read_io_csv(path)?;
            (record.inputs().to_vec(), record.outputs().to_vec())
        }
        None => {
            let p = inputs_flag.unwrap_or(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ins: Vec<Vec<f64>> = (0..p)
                .map(|_| (0..steps).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let outs: Vec<Vec<f64>> =
                vec![(0..steps).map(|_| rng.sample(StandardNormal)).collect()];
            (ins, outs)
        }
    };
    let p = input_channels.len();
    let l = outputs.len();
    let n = p * memory + 1;
    let state_len = n.checked_pow(degree as u32).unwrap_or(usize::MAX);
    if state_len > ORACLE_STATE_GUARD {
        return Err(CliError::Usage(format!(
            "dense comparison refuses state length {n}^{degree} = {state_len} > {ORACLE_STATE_GUARD}"
        )));
    }
    let steps = steps.min(input_channels[0].len()).min(outputs[0].len());

    let sigma2 = broadcast(pick(args.sigma2, file.sigma2).unwrap_or(vec![1000.0]), l, "sigma2")?;
    let r_diag = broadcast(
        pick(args.measurement_variance, file.measurement_variance).unwrap_or(vec![0.01]),
        l,
        "measurement-variance",
    )?;

    let policy = RoundingPolicy::new(tolerance, max_rank)?;
    let model = ModelSpec::time_invariant(r_diag.clone())?;
    let mut tn = KalmanState::init(&sigma2, n, degree, policy)?;
    let mut dense = DenseKalmanState::init(&sigma2, state_len)?;

    let mut rows = Vec::with_capacity(steps);
    let mut max_mean_dev = 0.0_f64;
    let mut max_cov_dev = 0.0_f64;
    for t in 0..steps {
        let ut = build_ut(&input_channels, t, memory)?;
        let c = TensorTrain::rank1_from_vector(&ut, degree)?;
        let c_dense = Array1::from_vec(c.contract_matrix()?.column(0).to_vec());
        let y: Vec<f64> = outputs.iter().map(|ch| ch[t]).collect();
        tn = tn.step(&model, &c, &y)?.state;
        dense = dense_step(&dense, None, None, &c_dense, &r_diag, &y)?;

        let tn_mean = tn.mean.contract_matrix()?;
        let mean_dev = relative_deviation(tn_mean.iter(), dense.mean.iter());
        let tn_cov = contract_cov_oracle(&tn.cov)?;
        let mut cov_dev = 0.0_f64;
        for (got, expect) in tn_cov.iter().zip(&dense.cov) {
            cov_dev = cov_dev.max(relative_deviation(got.iter(), expect.iter()));
        }
        max_mean_dev = max_mean_dev.max(mean_dev);
        max_cov_dev = max_cov_dev.max(cov_dev);
        rows.push((t, mean_dev, cov_dev));
    }

    if let Some(path) = &args.report_out.or(file.report_out) {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,mean_rel_dev,cov_rel_dev")?;
        for (t, m, c) in &rows {
            writeln!(out, "{t},{m},{c}")?;
        }
    }

    let pass = max_mean_dev <= bound && max_cov_dev <= bound;
    let summary = json!({
        "steps": steps,
        "state_length": state_len,
        "tolerance": tolerance,
        "bound": bound,
        "max_mean_rel_deviation": max_mean_dev,
        "max_cov_rel_deviation": max_cov_dev,
        "pass": pass,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    if pass {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Failed(format!(
            "deviation exceeded bound {bound}: mean {max_mean_dev}, cov {max_cov_dev}"
        )))
    }
}

fn relative_deviation<'a>(
    got: impl Iterator<Item = &'a f64>,
    expect: impl Iterator<Item = &'a f64> + Clone,
) -> f64 {
    let norm: f64 = expect.clone().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = got
        .zip(expect)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / norm
    }
}
