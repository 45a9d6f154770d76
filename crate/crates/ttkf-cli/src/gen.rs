use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use serde_json::json;

use ttkf::io::{save_tensor_train, write_io_csv};
use ttkf::volterra::{gen_experiment1, gen_mixer, IoRecord};

use crate::config::{load, pick, require, write_json};
use crate::{CliError, Outcome};

#[derive(Args, Debug)]
pub(crate) struct GenArgs {
    /// JSON config file; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Which generator to run: `siso4` or `mixer`.
    #[arg(long)]
    experiment: Option<String>,
    /// PRNG seed (ChaCha8).
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count for `siso4` (the mixer is fixed at 6000).
    #[arg(long)]
    samples: Option<usize>,
    /// Mixer output SNR in dB; omit for a noise-free record.
    #[arg(long)]
    snr: Option<f64>,
    /// Output CSV path; a `<out>.meta.json` sidecar records the parameters.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the true kernel (`siso4` only).
    #[arg(long)]
    truth_out: Option<PathBuf>,
    /// Where to write the clean reference output CSV (`mixer` only).
    #[arg(long)]
    reference_out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenFile {
    experiment: Option<String>,
    seed: Option<u64>,
    samples: Option<usize>,
    snr: Option<f64>,
    out: Option<PathBuf>,
    truth_out: Option<PathBuf>,
    reference_out: Option<PathBuf>,
}

pub(crate) fn run(args: GenArgs) -> Result<Outcome, CliError> {
    let file: GenFile = match &args.config {
        Some(path) => load(path)?,
        None => GenFile::default(),
    };
    let experiment = require(pick(args.experiment, file.experiment), "experiment")?;
    let seed = pick(args.seed, file.seed).unwrap_or(0);
    let out = require(pick(args.out, file.out), "out")?;
    let samples = pick(args.samples, file.samples).unwrap_or(1000);
    let snr = pick(args.snr, file.snr);
    let truth_out = pick(args.truth_out, file.truth_out);
    let reference_out = pick(args.reference_out, file.reference_out);

    match experiment.as_str() {
        "siso4" => {
            let (record, kernel) = gen_experiment1(seed, samples)?;
            write_io_csv(&out, &record)?;
            if let Some(path) = &truth_out {
                save_tensor_train(path, &kernel)?;
            }
            let meta = json!({
                "experiment": "siso4",
                "seed": seed,
                "samples": samples,
                "memory": 4,
                "degree": 4,
                "noise_variance": 1e-2,
                "truth_out": truth_out.as_ref().map(|p| p.display().to_string()),
            });
            write_json(&sidecar_path(&out), &meta)?;
        }
        "mixer" => {
            let snr_db = snr.unwrap_or(f64::INFINITY);
            let data = gen_mixer(seed, snr_db)?;
            write_io_csv(&out, &data.record)?;
            if let Some(path) = &reference_out {
                let reference = IoRecord::new(
                    data.record.inputs().to_vec(),
                    vec![data.reference.clone()],
                    data.record.sample_rate_hz(),
                )?;
                write_io_csv(path, &reference)?;
            }
            let meta = json!({
                "experiment": "mixer",
                "seed": seed,
                "samples": data.record.num_samples(),
                "snr_db": if snr_db.is_finite() { json!(snr_db) } else { json!("inf") },
                "sample_rate_hz": data.record.sample_rate_hz(),
                "reference_out": reference_out.as_ref().map(|p| p.display().to_string()),
            });
            write_json(&sidecar_path(&out), &meta)?;
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown experiment `{other}` (expected `siso4` or `mixer`)"
            )))
        }
    }
    Ok(Outcome::Ok)
}

fn sidecar_path(out: &std::path::Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}
