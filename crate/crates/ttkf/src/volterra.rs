//! Discrete-time MIMO Volterra systems in tensor-train form.
//!
//! A `p`-input `l`-output system of degree `d` and memory `M` is carried by a
//! kernel train whose `d` modes all have size `p·M + 1`; the extended input
//! vector `u_t = (1, u_1(t), ..., u_p(t−M+1))` turns all kernel degrees from
//! 0 to `d` into one homogeneous form: `y(t) = (u_t^{⊗d})ᵀ · V`. Simulation
//! evaluates the train left to right against `u_t`; identification runs the
//! tensor-train Kalman filter with the rank-one measurement train built from
//! `u_t`, so the `(pM+1)^d` coefficient vector never materializes.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kalman::{KalmanState, ModelSpec, StepResult};
use crate::tt::{RoundingPolicy, TensorTrain};

/// A Volterra model: sizes plus the kernel train (batch = outputs).
#[derive(Debug, Clone)]
pub struct VolterraSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub memory: usize,
    pub degree: usize,
    pub kernel: TensorTrain,
}

impl VolterraSpec {
    pub fn new(
        inputs: usize,
        outputs: usize,
        memory: usize,
        degree: usize,
        kernel: TensorTrain,
    ) -> Result<Self> {
        if inputs < 1 || outputs < 1 || memory < 1 || degree < 1 {
            return Err(Error::invalid("p, l, M, d must all be at least 1"));
        }
        let n = inputs * memory + 1;
        if kernel.order() != degree || kernel.mode_dims().iter().any(|&m| m != n) {
            return Err(Error::dim_mismatch(format!(
                "kernel must have {degree} modes of size {n}, got {:?}",
                kernel.mode_dims()
            )));
        }
        if kernel.batch_size() != outputs {
            return Err(Error::BatchMismatch { left: outputs, right: kernel.batch_size() });
        }
        Ok(VolterraSpec { inputs, outputs, memory, degree, kernel })
    }

    /// Extended input length `p·M + 1`.
    pub fn ut_len(&self) -> usize {
        self.inputs * self.memory + 1
    }

    /// Evaluate the outputs at sample `t` (zero-padded pre-history).
    pub fn simulate(&self, inputs: &[Vec<f64>], t: usize) -> Result<Vec<f64>> {
        if inputs.len() != self.inputs {
            return Err(Error::dim_mismatch(format!(
                "{} input channels supplied, model has {}",
                inputs.len(),
                self.inputs
            )));
        }
        let ut = build_ut(inputs, t, self.memory)?;
        simulate_kernel(&self.kernel, &ut)
    }
}

/// Input/output samples of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct IoRecord {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    sample_rate_hz: Option<f64>,
}

impl IoRecord {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
        sample_rate_hz: Option<f64>,
    ) -> Result<Self> {
        if inputs.is_empty() || outputs.is_empty() {
            return Err(Error::invalid("need at least one input and one output channel"));
        }
        let t = inputs[0].len();
        if inputs.iter().chain(&outputs).any(|ch| ch.len() != t) {
            return Err(Error::dim_mismatch("channels have unequal sample counts"));
        }
        Ok(IoRecord { inputs, outputs, sample_rate_hz })
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn num_samples(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn sample_rate_hz(&self) -> Option<f64> {
        self.sample_rate_hz
    }

    /// Keep only the output channel `index` (the mixer SNR runs filter one
    /// noisy output at a time).
    pub fn select_output(&self, index: usize) -> Result<IoRecord> {
        if index >= self.outputs.len() {
            return Err(Error::IndexOutOfRange {
                mode: 0,
                index,
                dim: self.outputs.len(),
            });
        }
        Ok(IoRecord {
            inputs: self.inputs.clone(),
            outputs: vec![self.outputs[index].clone()],
            sample_rate_hz: self.sample_rate_hz,
        })
    }
}

/// Extended input vector at sample `t`: a leading 1, then all `p` channels at
/// lag 0, then lag 1, ..., lag `M−1`. Samples before the record start count
/// as zero.
pub fn build_ut(inputs: &[Vec<f64>], t: usize, memory: usize) -> Result<Vec<f64>> {
    let p = inputs.len();
    if p == 0 || memory == 0 {
        return Err(Error::invalid("need at least one channel and memory ≥ 1"));
    }
    let samples = inputs[0].len();
    if t >= samples {
        return Err(Error::IndexOutOfRange { mode: 0, index: t, dim: samples });
    }
    let mut ut = Vec::with_capacity(p * memory + 1);
    ut.push(1.0);
    for lag in 0..memory {
        for channel in inputs {
            ut.push(if t >= lag { channel[t - lag] } else { 0.0 });
        }
    }
    Ok(ut)
}

/// Whether `build_ut` at sample `t` had to zero-pad missing pre-history.
pub fn ut_is_padded(t: usize, memory: usize) -> bool {
    t + 1 < memory
}

/// Evaluate a kernel train against an extended input vector: contract each
/// core's mode index with `u_t`, then multiply the `r × r'` factors left to
/// right. Costs `O(d·n·r² + d·r³)`.
fn simulate_kernel(kernel: &TensorTrain, ut: &[f64]) -> Result<Vec<f64>> {
    use ndarray::{Array2, ShapeBuilder};
    let l = kernel.batch_size();
    let mut acc: Option<Array2<f64>> = None;
    for core in kernel.cores() {
        let (rl, n, rr) = (core.dims()[0], core.dims()[1], core.dims()[2]);
        if n != ut.len() {
            return Err(Error::dim_mismatch(format!(
                "input vector length {} does not match kernel mode {n}",
                ut.len()
            )));
        }
        let mut factor = Array2::<f64>::zeros((rl, rr).f());
        for (i, &w) in ut.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for c in 0..rr {
                for r in 0..rl {
                    factor[[r, c]] += w * core.at(&[r, i, c]);
                }
            }
        }
        acc = Some(match acc {
            None => factor,
            Some(prev) => prev.dot(&factor),
        });
    }
    let acc = acc.expect("kernel has at least one core");
    debug_assert_eq!(acc.dim(), (l, 1));
    Ok(acc.column(0).to_vec())
}

/// Per-step diagnostics of an identification run.
#[derive(Debug, Clone)]
pub struct StepMetrics {
    pub t: usize,
    pub innovation: Vec<f64>,
    pub innovation_variance: Vec<f64>,
    pub mean_ranks: Vec<usize>,
    pub cov_ranks: Vec<usize>,
    pub seconds: f64,
    /// `‖v_true − m(t)‖₂ / ‖v_true‖₂` when a true kernel was supplied.
    pub rel_err: Option<f64>,
    /// Sample used zero-padded pre-history.
    pub padded: bool,
}

#[derive(Debug, Clone)]
pub struct IdentifyOptions {
    pub inputs: usize,
    pub outputs: usize,
    pub memory: usize,
    pub degree: usize,
    /// Initial coefficient variance σ² per output.
    pub init_variance: Vec<f64>,
    pub policy: RoundingPolicy,
    /// Number of samples to filter; defaults to the whole record.
    pub steps: Option<usize>,
    /// True kernel for the relative-error metric (single output only).
    pub truth: Option<TensorTrain>,
}

#[derive(Debug, Clone)]
pub struct IdentifyResult {
    pub spec: VolterraSpec,
    pub metrics: Vec<StepMetrics>,
    pub state: KalmanState,
}

/// Recursive identification: zero-mean / scaled-identity initialization, then
/// one filter step per sample with the rank-one measurement train built from
/// `u_t`.
pub fn identify(opts: &IdentifyOptions, model: &ModelSpec, data: &IoRecord) -> Result<IdentifyResult> {
    let p = opts.inputs;
    let l = opts.outputs;
    if data.num_inputs() != p {
        return Err(Error::dim_mismatch(format!(
            "record has {} input channels, options say {p}",
            data.num_inputs()
        )));
    }
    if data.num_outputs() != l {
        return Err(Error::BatchMismatch { left: l, right: data.num_outputs() });
    }
    if opts.init_variance.len() != l || model.measurement_variance.len() != l {
        return Err(Error::BatchMismatch { left: l, right: opts.init_variance.len() });
    }
    if data.num_samples() <= opts.memory {
        return Err(Error::invalid(format!(
            "record too short: {} samples for memory {}",
            data.num_samples(),
            opts.memory
        )));
    }
    let n = p * opts.memory + 1;
    let d = opts.degree;
    if let Some(truth) = &opts.truth {
        if l != 1 {
            return Err(Error::invalid("relative-error metric needs a single output"));
        }
        if truth.order() != d || truth.mode_dims().iter().any(|&m| m != n) {
            return Err(Error::dim_mismatch("true kernel has wrong shape"));
        }
    }
    let truth_norm = match &opts.truth {
        Some(truth) => Some(tt_norm(truth)?),
        None => None,
    };

    let steps = opts.steps.unwrap_or(data.num_samples()).min(data.num_samples());
    let mut state = KalmanState::init(&opts.init_variance, n, d, opts.policy.clone())?;
    let mut metrics = Vec::with_capacity(steps);
    for t in 0..steps {
        let started = Instant::now();
        let ut = build_ut(data.inputs(), t, opts.memory)?;
        let c = TensorTrain::rank1_from_vector(&ut, d)?;
        let y: Vec<f64> = data.outputs().iter().map(|ch| ch[t]).collect();
        let StepResult { state: next, innovation, innovation_variance } =
            state.step(model, &c, &y)?;
        state = next;
        let seconds = started.elapsed().as_secs_f64();
        let rel_err = match (&opts.truth, truth_norm) {
            (Some(truth), Some(norm)) => {
                let neg_mean = state.mean.scale_batch_slices(&[-1.0])?;
                let diff = truth.add(&neg_mean)?;
                Some(tt_norm(&diff)? / norm)
            }
            _ => None,
        };
        metrics.push(StepMetrics {
            t,
            innovation,
            innovation_variance,
            mean_ranks: state.mean.ranks(),
            cov_ranks: state.cov.ranks(),
            seconds,
            rel_err,
            padded: ut_is_padded(t, opts.memory),
        });
    }
    let spec = VolterraSpec::new(p, l, opts.memory, d, state.mean.clone())?;
    Ok(IdentifyResult { spec, metrics, state })
}

/// Frobenius norm of a batch-1 train via the self-contraction chain; never
/// materializes the dense vector.
pub fn tt_norm(tt: &TensorTrain) -> Result<f64> {
    use ndarray::{Array2, ShapeBuilder};
    if tt.batch_size() != 1 {
        return Err(Error::invalid("norm chain needs batch size 1"));
    }
    let mut acc: Option<Array2<f64>> = None;
    for core in tt.cores() {
        let (rl, n, rr) = (core.dims()[0], core.dims()[1], core.dims()[2]);
        // W[(a,b), (a',b')] = Σ_i G[a,i,a']·G[b,i,b']
        let mut w = Array2::<f64>::zeros((rl * rl, rr * rr).f());
        for i in 0..n {
            for a in 0..rl {
                for ap in 0..rr {
                    let ga = core.at(&[a, i, ap]);
                    if ga == 0.0 {
                        continue;
                    }
                    for b in 0..rl {
                        for bp in 0..rr {
                            w[[a + rl * b, ap + rr * bp]] += ga * core.at(&[b, i, bp]);
                        }
                    }
                }
            }
        }
        acc = Some(match acc {
            None => w,
            Some(prev) => prev.dot(&w),
        });
    }
    let acc = acc.expect("at least one core");
    Ok(acc[[0, 0]].max(0.0).sqrt())
}

/// Synthetic degree-4 SISO data: a standard-normal length-5 coefficient
/// vector defines the rank-one kernel `v^{⊗4}`; inputs are standard normal
/// and the output carries N(0, 10⁻²) measurement noise. Draw order: the 5
/// kernel entries, then all inputs, then all noise samples, from one
/// ChaCha8 stream seeded with `seed`.
pub fn gen_experiment1(seed: u64, samples: usize) -> Result<(IoRecord, TensorTrain)> {
    const MEMORY: usize = 4;
    const DEGREE: usize = 4;
    const NOISE_STD: f64 = 0.1; // variance 1e-2
    if samples <= MEMORY {
        return Err(Error::invalid("need more samples than the memory length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v0: Vec<f64> = (0..MEMORY + 1).map(|_| rng.sample(StandardNormal)).collect();
    let kernel = TensorTrain::rank1_from_vector(&v0, DEGREE)?;
    let u: Vec<f64> = (0..samples).map(|_| rng.sample(StandardNormal)).collect();
    let inputs = vec![u];
    let mut outputs = vec![Vec::with_capacity(samples)];
    for t in 0..samples {
        let ut = build_ut(&inputs, t, MEMORY)?;
        let clean = simulate_kernel(&kernel, &ut)?[0];
        let noise: f64 = rng.sample(StandardNormal);
        outputs[0].push(clean + NOISE_STD * noise);
    }
    Ok((IoRecord::new(inputs, outputs, None)?, kernel))
}

/// Mixer data: noisy record plus the clean reference output.
#[derive(Debug, Clone)]
pub struct MixerData {
    pub record: IoRecord,
    pub reference: Vec<f64>,
}

/// Double-balanced-mixer data: a 100 Hz sine LO and a 300 Hz square-wave IF
/// with a π/8 phase offset, sampled at 5 kHz for 6000 samples. The reference
/// output is the ideal product `lo·if`; Gaussian noise is scaled so the
/// record's measured SNR equals `snr_db` exactly (infinite `snr_db` means no
/// noise).
pub fn gen_mixer(seed: u64, snr_db: f64) -> Result<MixerData> {
    const SAMPLE_RATE: f64 = 5000.0;
    const SAMPLES: usize = 6000;
    const LO_HZ: f64 = 100.0;
    const IF_HZ: f64 = 300.0;
    if snr_db.is_nan() {
        return Err(Error::invalid("snr_db must not be NaN"));
    }
    let mut lo = Vec::with_capacity(SAMPLES);
    let mut if_sig = Vec::with_capacity(SAMPLES);
    let mut reference = Vec::with_capacity(SAMPLES);
    for k in 0..SAMPLES {
        let t = k as f64 / SAMPLE_RATE;
        let lo_t = (2.0 * std::f64::consts::PI * LO_HZ * t).sin();
        let if_arg = 2.0 * std::f64::consts::PI * IF_HZ * t - std::f64::consts::PI / 8.0;
        let if_t = square_wave(if_arg);
        lo.push(lo_t);
        if_sig.push(if_t);
        reference.push(lo_t * if_t);
    }
    let output = if snr_db.is_infinite() && snr_db > 0.0 {
        reference.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..SAMPLES).map(|_| rng.sample(StandardNormal)).collect();
        let p_ref = reference.iter().map(|x| x * x).sum::<f64>() / SAMPLES as f64;
        let p_noise = noise.iter().map(|x| x * x).sum::<f64>() / SAMPLES as f64;
        let target = p_ref * 10f64.powf(-snr_db / 10.0);
        let scale = (target / p_noise).sqrt();
        reference.iter().zip(&noise).map(|(r, e)| r + scale * e).collect()
    };
    let record = IoRecord::new(vec![lo, if_sig], vec![output], Some(SAMPLE_RATE))?;
    Ok(MixerData { record, reference })
}

/// `sign(sin(x))` with `sign(0) := 1`.
fn square_wave(arg: f64) -> f64 {
    if arg.sin() >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Root-mean-square error between two equally long slices.
pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len().max(1);
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64).sqrt()
}
