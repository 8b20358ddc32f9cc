//! Deterministic Monte Carlo BER engine.
//!
//! Every trial owns a random stream derived from `(master_seed, Eb/N0, trial
//! index)`, and trials run in fixed-size batches whose integer error counts are
//! summed. Stopping is only checked between batches, so the result does not
//! depend on the number of worker threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{add_noise, noise_variance_for_ebn0, sample_channel, ChannelParams};
use crate::error::{Error, Result};
use crate::receiver::{split_joint_index, Detector, DetectorScratch};
use crate::waveform::SystemConfig;

pub const DEFAULT_MIN_ERRORS: u64 = 200;
pub const DEFAULT_MAX_TRIALS: u64 = 1_000_000;
pub const DEFAULT_BATCH_TRIALS: u64 = 2_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub config: SystemConfig,
    pub channel: ChannelParams,
    pub ebn0_db_points: Vec<f64>,
    pub min_errors: u64,
    pub max_trials: u64,
    pub master_seed: u64,
    /// Trials per batch; stopping is evaluated between batches.
    pub batch_trials: u64,
    /// Debug switch: skip noise entirely.
    pub noiseless: bool,
}

impl SweepSpec {
    pub fn new(config: SystemConfig, channel: ChannelParams, ebn0_db_points: Vec<f64>) -> Self {
        Self {
            config,
            channel,
            ebn0_db_points,
            min_errors: DEFAULT_MIN_ERRORS,
            max_trials: DEFAULT_MAX_TRIALS,
            master_seed: 0,
            batch_trials: DEFAULT_BATCH_TRIALS,
            noiseless: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.channel.validate()?;
        let delay = self.channel.largest_delay();
        if delay >= self.config.n {
            return Err(Error::InvalidDelay { delay, n: self.config.n });
        }
        if self.config.cp_len < delay {
            return Err(Error::InvalidConfig(format!(
                "cyclic prefix of {} samples is shorter than the largest delay {delay}",
                self.config.cp_len
            )));
        }
        if self.max_trials == 0 || self.batch_trials == 0 {
            return Err(Error::InvalidConfig("trial limits must be positive".into()));
        }
        if self.ebn0_db_points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("Eb/N0 points must be finite".into()));
        }
        if self.ebn0_db_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("Eb/N0 points must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// One simulated Eb/N0 point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerRow {
    pub ebn0_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Binomial standard error `sqrt(ber (1 - ber) / bits)`.
    pub stderr: f64,
}

impl BerRow {
    pub fn new(ebn0_db: f64, trials: u64, bit_errors: u64, bits_per_trial: usize) -> Self {
        let bits = (trials * bits_per_trial as u64) as f64;
        let ber = if bits > 0.0 { bit_errors as f64 / bits } else { 0.0 };
        let stderr = if bits > 0.0 {
            (ber * (1.0 - ber) / bits).sqrt()
        } else {
            0.0
        };
        Self {
            ebn0_db,
            trials,
            bit_errors,
            ber,
            stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BerCurve {
    pub rows: Vec<BerRow>,
}

impl BerCurve {
    /// Eb/N0 at which the curve first crosses `target`, interpolating
    /// log10(BER) linearly between neighbouring points.
    pub fn ebn0_at_ber(&self, target: f64) -> Option<f64> {
        self.rows.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            if a.ber >= target && b.ber <= target && a.ber > 0.0 {
                if b.ber <= 0.0 {
                    return Some(b.ebn0_db);
                }
                let (la, lb, lt) = (a.ber.log10(), b.ber.log10(), target.log10());
                if la == lb {
                    return Some(a.ebn0_db);
                }
                Some(a.ebn0_db + (la - lt) / (la - lb) * (b.ebn0_db - a.ebn0_db))
            } else {
                None
            }
        })
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Random stream of one trial: the ChaCha key comes from the seed and the
/// Eb/N0 point, the trial index selects the stream.
pub fn trial_rng(master_seed: u64, ebn0_db: f64, trial: u64) -> ChaCha8Rng {
    let key = splitmix64(master_seed ^ splitmix64(ebn0_db.to_bits()));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(trial);
    rng
}

struct Engine {
    detector: Detector,
    spec: SweepSpec,
    per_user: u64,
}

impl Engine {
    fn new(spec: &SweepSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            detector: Detector::new(&spec.config)?,
            spec: spec.clone(),
            per_user: spec.config.candidates_per_user() as u64,
        })
    }

    fn trial(&self, ebn0_db: f64, sigma2: f64, trial: u64, scratch: &mut TrialScratch) -> Result<u64> {
        let cfg = &self.spec.config;
        let mut rng = trial_rng(self.spec.master_seed, ebn0_db, trial);
        let realization = sample_channel(&self.spec.channel, cfg.users, &mut rng);
        scratch.labels.clear();
        scratch
            .labels
            .extend((0..cfg.users).map(|_| rng.gen_range(0..self.per_user)));

        self.detector.prepare(&realization, &mut scratch.detector)?;
        scratch.r.clear();
        scratch.r.resize(cfg.n, Complex64::new(0.0, 0.0));
        for (u, &label) in scratch.labels.iter().enumerate() {
            let y = scratch.detector.received(u, label as usize);
            scratch.r.iter_mut().zip(y).for_each(|(a, b)| *a += b);
        }
        add_noise(&mut scratch.r, sigma2, &mut rng);

        let decision = self.detector.search(&scratch.r, &mut scratch.detector);
        let decided = split_joint_index(cfg, decision.candidate_index);
        Ok(scratch
            .labels
            .iter()
            .zip(&decided)
            .map(|(a, b)| u64::from((a ^ b).count_ones()))
            .sum())
    }

    fn point(&self, ebn0_db: f64) -> Result<BerRow> {
        let spec = &self.spec;
        let sigma2 = if spec.noiseless {
            0.0
        } else {
            noise_variance_for_ebn0(&spec.config, ebn0_db)
        };
        let mut trials = 0u64;
        let mut errors = 0u64;
        while trials < spec.max_trials && errors < spec.min_errors {
            let end = (trials + spec.batch_trials).min(spec.max_trials);
            let batch: u64 = (trials..end)
                .into_par_iter()
                .map_init(TrialScratch::default, |scratch, t| {
                    self.trial(ebn0_db, sigma2, t, scratch)
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            errors += batch;
            trials = end;
        }
        Ok(BerRow::new(ebn0_db, trials, errors, spec.config.bits_per_block()))
    }
}

#[derive(Default)]
struct TrialScratch {
    detector: DetectorScratch,
    labels: Vec<u64>,
    r: Vec<Complex64>,
}

/// Simulates one Eb/N0 point.
pub fn run_point(spec: &SweepSpec, ebn0_db: f64) -> Result<BerRow> {
    if !ebn0_db.is_finite() {
        return Err(Error::InvalidConfig("Eb/N0 must be finite".into()));
    }
    Engine::new(spec)?.point(ebn0_db)
}

/// Simulates every Eb/N0 point of the spec in order.
pub fn run_sweep(spec: &SweepSpec) -> Result<BerCurve> {
    if spec.ebn0_db_points.is_empty() {
        spec.validate()?;
        return Ok(BerCurve::default());
    }
    let engine = Engine::new(spec)?;
    let rows = spec
        .ebn0_db_points
        .iter()
        .map(|&x| engine.point(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(BerCurve { rows })
}
