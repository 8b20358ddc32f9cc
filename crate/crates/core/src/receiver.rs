//! Joint maximum-likelihood detection over every user's chirp index and
//! constellation symbols, assuming perfect channel knowledge.
//!
//! A joint candidate is identified by the concatenation of all users' bit
//! labels (user 1 most significant), so candidate order is lexicographic with
//! user 1 outermost and, within a user, direction bit, chirp index and then
//! symbols.

use num_complex::Complex64;

use crate::channel::{ChannelRealization, PreparedChannel};
use crate::error::{Error, Result};
use crate::numerics::energy;
use crate::waveform::{ComplexSignal, SystemConfig, Transmitter, UserMessage};

/// Largest joint search space the detector accepts.
pub const DEFAULT_CANDIDATE_CAP: u128 = 1 << 24;

/// One user's part of a joint hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHypothesis {
    /// Some(0) = up-chirp, Some(1) = down-chirp in combined mode.
    pub direction: Option<u8>,
    pub nu: usize,
    /// Natural-binary symbol label per constellation symbol.
    pub symbol_indices: Vec<usize>,
}

/// A joint hypothesis over all users together with its bit label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateMessage {
    pub users: Vec<UserHypothesis>,
    pub bit_label: Vec<u8>,
    /// Position in lexicographic enumeration; equals the label read as an integer.
    pub candidate_index: u64,
}

impl CandidateMessage {
    pub fn from_index(config: &SystemConfig, candidate_index: u64) -> Self {
        let labels = split_joint_index(config, candidate_index);
        let per_symbol = config.bits_per_symbol();
        let mut bit_label = Vec::with_capacity(config.bits_per_block());
        let users = labels
            .iter()
            .map(|&label| {
                let msg = UserMessage::from_label(config, label);
                bit_label.extend(msg.bits());
                UserHypothesis {
                    direction: msg.direction_bit,
                    nu: msg.chirp_index(),
                    symbol_indices: msg
                        .symbol_bits
                        .chunks(per_symbol.max(1))
                        .map(crate::waveform::chirp_index)
                        .collect(),
                }
            })
            .collect();
        Self {
            users,
            bit_label,
            candidate_index,
        }
    }

    /// Per-user messages this candidate transmits.
    pub fn messages(&self, config: &SystemConfig) -> Vec<UserMessage> {
        split_joint_index(config, self.candidate_index)
            .into_iter()
            .map(|label| UserMessage::from_label(config, label))
            .collect()
    }
}

/// Per-user labels packed in a joint candidate index.
pub fn split_joint_index(config: &SystemConfig, index: u64) -> Vec<u64> {
    let width = config.bits_per_user();
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    (0..config.users)
        .map(|u| (index >> (width * (config.users - 1 - u))) & mask)
        .collect()
}

/// Joint candidate index from per-user labels.
pub fn join_labels(config: &SystemConfig, labels: &[u64]) -> u64 {
    let width = config.bits_per_user();
    labels.iter().fold(0, |acc, &l| (acc << width) | l)
}

/// Size of the joint search space, `(2^{bits per user})^U`.
pub fn search_space(config: &SystemConfig) -> u128 {
    let bits = config.bits_per_block();
    if bits >= 127 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

fn check_cap(config: &SystemConfig, cap: u128) -> Result<()> {
    let candidates = search_space(config);
    if candidates > cap {
        return Err(Error::SearchSpaceTooLarge { candidates, cap });
    }
    Ok(())
}

/// Every joint candidate in lexicographic order.
pub fn enumerate_candidates(config: &SystemConfig) -> Result<Vec<CandidateMessage>> {
    config.validate()?;
    check_cap(config, DEFAULT_CANDIDATE_CAP)?;
    Ok((0..search_space(config) as u64)
        .map(|i| CandidateMessage::from_index(config, i))
        .collect())
}

/// Hamming distance between two candidates' bit labels.
pub fn count_bit_errors(tx: &CandidateMessage, rx: &CandidateMessage) -> Result<usize> {
    if tx.bit_label.len() != rx.bit_label.len() {
        return Err(Error::InvalidComparison {
            left: tx.bit_label.len(),
            right: rx.bit_label.len(),
        });
    }
    Ok(tx
        .bit_label
        .iter()
        .zip(&rx.bit_label)
        .filter(|(a, b)| a != b)
        .count())
}

/// Output of the exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub candidate_index: u64,
    /// Squared residual norm `‖r - Σ_u H_u s_u‖²`.
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub decided: CandidateMessage,
    /// Residual norm `‖r - Σ_u H_u s_u‖`.
    pub metric: f64,
    pub bit_errors: usize,
    pub total_bits: usize,
}

/// Reusable buffers for one detection thread.
#[derive(Debug, Clone, Default)]
pub struct DetectorScratch {
    channels: Vec<PreparedChannel>,
    /// `received[u][label]` = `H_u s_u(label)`.
    received: Vec<Vec<Vec<Complex64>>>,
    residuals: Vec<Vec<Complex64>>,
}

impl DetectorScratch {
    /// Noiseless received contribution of user `u` sending `label`, valid after
    /// [`Detector::prepare`].
    pub fn received(&self, u: usize, label: usize) -> &[Complex64] {
        &self.received[u][label]
    }
}

/// ML detector with every user's candidate transmit blocks precomputed.
#[derive(Debug, Clone)]
pub struct Detector {
    config: SystemConfig,
    /// `transmit[u][label]`, unchanneled.
    transmit: Vec<Vec<Vec<Complex64>>>,
}

impl Detector {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        Self::with_cap(config, DEFAULT_CANDIDATE_CAP)
    }

    pub fn with_cap(config: &SystemConfig, cap: u128) -> Result<Self> {
        config.validate()?;
        check_cap(config, cap)?;
        let tx = Transmitter::new(config)?;
        let per_user = config.candidates_per_user() as u64;
        let transmit = (0..config.users)
            .map(|u| {
                (0..per_user)
                    .map(|label| {
                        tx.modulate(&UserMessage::from_label(config, label), u)
                            .map(ComplexSignal::into_samples)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            transmit,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    /// Unchanneled transmit block of user `u` sending `label`.
    pub fn transmit(&self, u: usize, label: usize) -> &[Complex64] {
        &self.transmit[u][label]
    }

    /// Applies each user's channel to all of that user's candidate blocks.
    pub fn prepare(&self, realization: &ChannelRealization, scratch: &mut DetectorScratch) -> Result<()> {
        let cfg = &self.config;
        if realization.users.len() != cfg.users {
            return Err(Error::InvalidConfig(format!(
                "channel realization has {} users, config has {}",
                realization.users.len(),
                cfg.users
            )));
        }
        let n = cfg.n;
        scratch.channels.resize_with(cfg.users, Default::default);
        scratch.received.resize_with(cfg.users, Vec::new);
        scratch.residuals.resize_with(cfg.users + 1, Vec::new);
        for r in &mut scratch.residuals {
            r.resize(n, Complex64::new(0.0, 0.0));
        }
        for u in 0..cfg.users {
            scratch.channels[u].reset(&realization.users[u], n)?;
            let rx = &mut scratch.received[u];
            rx.resize_with(self.transmit[u].len(), Vec::new);
            for (out, s) in rx.iter_mut().zip(&self.transmit[u]) {
                out.resize(n, Complex64::new(0.0, 0.0));
                scratch.channels[u].apply_into(s, out);
            }
        }
        Ok(())
    }

    /// Exhaustive search over the prepared candidates. Ties keep the lowest
    /// candidate index.
    pub fn search(&self, r: &[Complex64], scratch: &mut DetectorScratch) -> Decision {
        assert_eq!(r.len(), self.config.n);
        scratch.residuals[0].copy_from_slice(r);
        let mut best = Decision {
            candidate_index: 0,
            metric: f64::INFINITY,
        };
        descend(
            &scratch.received,
            &mut scratch.residuals,
            0,
            0,
            self.config.bits_per_user(),
            &mut best,
        );
        best
    }

    /// Prepares for `realization` and searches.
    pub fn detect(
        &self,
        r: &[Complex64],
        realization: &ChannelRealization,
        scratch: &mut DetectorScratch,
    ) -> Result<Decision> {
        self.prepare(realization, scratch)?;
        Ok(self.search(r, scratch))
    }
}

/// Depth-first walk over users; `residuals[0]` holds `r` minus the
/// contributions already chosen for users before `user`.
fn descend(
    received: &[Vec<Vec<Complex64>>],
    residuals: &mut [Vec<Complex64>],
    user: usize,
    prefix: u64,
    width: usize,
    best: &mut Decision,
) {
    let (current, rest) = residuals.split_at_mut(1);
    let current = &current[0];
    let last = user + 1 == received.len();
    for (label, y) in received[user].iter().enumerate() {
        let index = (prefix << width) | label as u64;
        if last {
            let metric: f64 = current
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            if metric < best.metric {
                *best = Decision {
                    candidate_index: index,
                    metric,
                };
            }
        } else {
            rest[0]
                .iter_mut()
                .zip(current.iter().zip(y))
                .for_each(|(out, (a, b))| *out = a - b);
            descend(received, rest, user + 1, index, width, best);
        }
    }
}

/// One-shot ML detection with the true channel. `transmitted` is only used to
/// count bit errors.
pub fn ml_detect(
    r: &ComplexSignal,
    realization: &ChannelRealization,
    config: &SystemConfig,
    transmitted: &CandidateMessage,
) -> Result<DetectionResult> {
    let detector = Detector::new(config)?;
    let mut scratch = DetectorScratch::default();
    let decision = detector.detect(r.samples(), realization, &mut scratch)?;
    let decided = CandidateMessage::from_index(config, decision.candidate_index);
    let bit_errors = count_bit_errors(transmitted, &decided)?;
    Ok(DetectionResult {
        total_bits: decided.bit_label.len(),
        decided,
        metric: decision.metric.sqrt(),
        bit_errors,
    })
}

/// Squared residual of one joint candidate, computed directly.
pub fn candidate_metric(r: &[Complex64], scratch: &DetectorScratch, labels: &[u64]) -> f64 {
    let mut residual = r.to_vec();
    for (u, &label) in labels.iter().enumerate() {
        residual
            .iter_mut()
            .zip(&scratch.received[u][label as usize])
            .for_each(|(a, b)| *a -= b);
    }
    energy(&residual)
}
