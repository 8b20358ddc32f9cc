//! Analytical tooling: PAPR, spectral efficiency, the single-user
//! pairwise-error BER upper bound with its diversity order, and the halving
//! search for the largest ambiguity-free chirp modulation order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{doppler_matrix, sample_channel, ChannelParams, PathProfile};
use crate::error::{Error, Result};
use crate::numerics::{
    circular_shift_matrix, hermitian_eigen, ComplexMatrix, DEFAULT_RANK_TOLERANCE,
};
use crate::receiver::{search_space, CandidateMessage, DEFAULT_CANDIDATE_CAP};
use crate::waveform::{ComplexSignal, SystemConfig, Sweep, Transmitter, UserMessage};

/// Per-sample tolerance for declaring two composite signals identical.
pub const AMBIGUITY_TOLERANCE: f64 = 1e-9;

/// Peak-to-average power ratio in dB.
pub fn papr_db(s: &ComplexSignal) -> Result<f64> {
    let powers: Vec<f64> = s.samples().iter().map(Complex64::norm_sqr).collect();
    let mean = powers.iter().sum::<f64>() / powers.len().max(1) as f64;
    if mean == 0.0 {
        return Err(Error::UndefinedPapr);
    }
    let peak = powers.iter().copied().fold(0.0, f64::max);
    Ok(10.0 * (peak / mean).log10())
}

/// Worst-case PAPR of user `u` for each chirp index `ν = 0..P`.
///
/// All `Q^M` symbol vectors are visited when there are at most `max_draws` of
/// them; otherwise `max_draws` random vectors are drawn from `seed`.
pub fn papr_by_chirp_index(
    config: &SystemConfig,
    u: usize,
    max_draws: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let tx = Transmitter::new(config)?;
    let symbol_labels = 1u64 << config.symbol_bits();
    let labels: Vec<u64> = if symbol_labels as u128 <= max_draws as u128 {
        (0..symbol_labels).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..max_draws).map(|_| rng.gen_range(0..symbol_labels)).collect()
    };
    let chirp_width = config.symbol_bits();
    (0..config.p)
        .map(|nu| {
            let mut worst = f64::NEG_INFINITY;
            for &sym in &labels {
                let label = ((nu as u64) << chirp_width) | sym;
                let s = tx.modulate(&UserMessage::from_label(config, label), u)?;
                worst = worst.max(papr_db(&s)?);
            }
            Ok((nu, worst))
        })
        .collect()
}

/// Information bits per second per hertz: `U(M log2 Q + log2 P [+1]) / N`.
pub fn spectral_efficiency(config: &SystemConfig) -> f64 {
    config.bits_per_block() as f64 / config.n as f64
}

fn require_single_user(config: &SystemConfig) -> Result<()> {
    if config.users != 1 {
        return Err(Error::InvalidConfig(format!(
            "the pairwise bound is single-user, got U = {}",
            config.users
        )));
    }
    Ok(())
}

/// N×L matrix whose column `l` is `D_l Π^{l} s(a)`, so that `E(a) h` is the
/// noiseless received block for path gains `h`.
pub fn effective_matrix(
    candidate: &CandidateMessage,
    profile: &[PathProfile],
    config: &SystemConfig,
) -> Result<ComplexMatrix> {
    require_single_user(config)?;
    let tx = Transmitter::new(config)?;
    let message = candidate
        .messages(config)
        .pop()
        .ok_or_else(|| Error::InvalidConfig("empty candidate".into()))?;
    let s = tx.modulate(&message, 0)?;
    effective_matrix_of(s.samples(), profile, config.n)
}

fn effective_matrix_of(s: &[Complex64], profile: &[PathProfile], n: usize) -> Result<ComplexMatrix> {
    let columns = profile
        .iter()
        .map(|p| {
            if p.delay >= n {
                return Err(Error::InvalidDelay { delay: p.delay, n });
            }
            doppler_matrix(p.doppler, n)
                .mul(&circular_shift_matrix(n, p.delay)?)?
                .mul_vec(s)
        })
        .collect::<Result<Vec<_>>>()?;
    ComplexMatrix::from_columns(&columns)
}

/// Pairwise error probability approximation for one pair of candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTerm {
    /// Index of the Doppler/delay profile the term was evaluated on.
    pub profile: usize,
    pub a: u64,
    pub a_hat: u64,
    pub rank: usize,
    /// The `rank` nonzero eigenvalues of `Θ(a, â)`, descending.
    pub eigenvalues: Vec<f64>,
    pub pep: f64,
    pub hamming: usize,
}

/// `(1/12)[(Πλ)^{1/R} γ/(4L)]^{-R} + (1/4)[(Πλ)^{1/R} γ/(3L)]^{-R}`, and 1 for
/// an indistinguishable pair (`R = 0`).
pub fn pep_from_eigenvalues(eigenvalues: &[f64], gamma: f64, paths: usize) -> f64 {
    let rank = eigenvalues.len();
    if rank == 0 {
        return 1.0;
    }
    let r = rank as f64;
    let log_det: f64 = eigenvalues.iter().map(|l| l.ln()).sum();
    let geo = (log_det / r).exp();
    let l = paths as f64;
    let term = |div: f64| (geo * gamma / (div * l)).powf(-r);
    term(4.0) / 12.0 + term(3.0) / 4.0
}

/// `Θ(a, â)` for explicit effective matrices.
fn theta(e_a: &ComplexMatrix, e_b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let diff = e_a.sub(e_b)?;
    diff.adjoint().mul(&diff)
}

fn spectrum(theta: &ComplexMatrix) -> Result<(usize, Vec<f64>)> {
    let eig = hermitian_eigen(theta, DEFAULT_RANK_TOLERANCE)?;
    if !eig.is_positive_semidefinite() {
        return Err(Error::InvalidInput(
            "pairwise Gram matrix is not positive semidefinite".into(),
        ));
    }
    Ok((eig.rank, eig.nonzero().to_vec()))
}

/// PEP term for the ordered pair `a → â` on one Doppler/delay profile.
pub fn pep_pair(
    a: &CandidateMessage,
    a_hat: &CandidateMessage,
    gamma: f64,
    profile: &[PathProfile],
    config: &SystemConfig,
) -> Result<PairTerm> {
    if a.candidate_index == a_hat.candidate_index {
        return Err(Error::InvalidPair);
    }
    let th = theta(
        &effective_matrix(a, profile, config)?,
        &effective_matrix(a_hat, profile, config)?,
    )?;
    let (rank, eigenvalues) = spectrum(&th)?;
    Ok(PairTerm {
        profile: 0,
        a: a.candidate_index,
        a_hat: a_hat.candidate_index,
        rank,
        pep: pep_from_eigenvalues(&eigenvalues, gamma, profile.len()),
        eigenvalues,
        hamming: (a.candidate_index ^ a_hat.candidate_index).count_ones() as usize,
    })
}

/// Divisor applied to the pairwise sum `Σ_a Σ_{â≠a} P(a→â) d(a, â)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundNormalization {
    /// `2^b·b`: candidates times bits per candidate, i.e. an average per
    /// transmitted bit.
    #[default]
    PerBit,
    /// `Q^M·M·log2 Q + P·log2 P`. Equals `PerBit` when `P = 1`.
    Abbreviated,
}

/// Normalization weight `f` of the bound.
pub fn bound_weight(config: &SystemConfig, normalization: BoundNormalization) -> f64 {
    let q = config.q as f64;
    let p = config.p as f64;
    match normalization {
        BoundNormalization::PerBit => {
            let bits = config.bits_per_block() as i32;
            2f64.powi(bits) * bits as f64
        }
        BoundNormalization::Abbreviated => {
            q.powi(config.m as i32) * config.m as f64 * q.log2() + p * p.log2()
        }
    }
}

/// Bound evaluated at one `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub gamma: f64,
    pub pair_terms: Vec<PairTerm>,
    pub f: f64,
    /// Upper bound on BER, averaged over the profiles the model was built on.
    pub p_e: f64,
    pub diversity_order: usize,
}

#[derive(Debug, Clone)]
struct PairSpectrum {
    a: u64,
    a_hat: u64,
    rank: usize,
    eigenvalues: Vec<f64>,
    hamming: usize,
}

/// Pairwise spectra for every ordered candidate pair on a set of Doppler/delay
/// profiles; evaluating the bound at a new `γ` is then cheap.
#[derive(Debug, Clone)]
pub struct BoundModel {
    paths: Vec<usize>,
    weight: f64,
    spectra: Vec<Vec<PairSpectrum>>,
}

impl BoundModel {
    pub fn new(config: &SystemConfig, profiles: &[Vec<PathProfile>]) -> Result<Self> {
        Self::with_normalization(config, profiles, BoundNormalization::default())
    }

    pub fn with_normalization(
        config: &SystemConfig,
        profiles: &[Vec<PathProfile>],
        normalization: BoundNormalization,
    ) -> Result<Self> {
        require_single_user(config)?;
        config.validate()?;
        if profiles.is_empty() {
            return Err(Error::InvalidArgument("at least one channel profile is needed".into()));
        }
        let count = search_space(config);
        if count > DEFAULT_CANDIDATE_CAP {
            return Err(Error::SearchSpaceTooLarge {
                candidates: count,
                cap: DEFAULT_CANDIDATE_CAP,
            });
        }
        let tx = Transmitter::new(config)?;
        let signals = (0..count as u64)
            .map(|label| tx.modulate(&UserMessage::from_label(config, label), 0))
            .collect::<Result<Vec<_>>>()?;
        let spectra = profiles
            .iter()
            .map(|profile| {
                let effective = signals
                    .iter()
                    .map(|s| effective_matrix_of(s.samples(), profile, config.n))
                    .collect::<Result<Vec<_>>>()?;
                let pairs: Vec<(usize, usize)> = (0..effective.len())
                    .flat_map(|a| (0..effective.len()).filter(move |&b| b != a).map(move |b| (a, b)))
                    .collect();
                pairs
                    .par_iter()
                    .map(|&(a, b)| {
                        let (rank, eigenvalues) = spectrum(&theta(&effective[a], &effective[b])?)?;
                        Ok(PairSpectrum {
                            a: a as u64,
                            a_hat: b as u64,
                            rank,
                            eigenvalues,
                            hamming: (a ^ b).count_ones() as usize,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            paths: profiles.iter().map(Vec::len).collect(),
            weight: bound_weight(config, normalization),
            spectra,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Minimum rank of `Θ` over all ordered pairs and profiles.
    pub fn diversity_order(&self) -> usize {
        self.spectra
            .iter()
            .flatten()
            .map(|p| p.rank)
            .min()
            .unwrap_or(0)
    }

    /// Bound value only.
    pub fn bound(&self, gamma: f64) -> f64 {
        let total: f64 = self
            .spectra
            .iter()
            .zip(&self.paths)
            .map(|(pairs, &paths)| {
                pairs
                    .iter()
                    .map(|p| pep_from_eigenvalues(&p.eigenvalues, gamma, paths) * p.hamming as f64)
                    .sum::<f64>()
                    / self.weight
            })
            .sum();
        total / self.spectra.len() as f64
    }

    pub fn report(&self, gamma: f64) -> BoundReport {
        let pair_terms = self
            .spectra
            .iter()
            .zip(&self.paths)
            .enumerate()
            .flat_map(|(k, (pairs, &paths))| {
                pairs.iter().map(move |p| PairTerm {
                    profile: k,
                    a: p.a,
                    a_hat: p.a_hat,
                    rank: p.rank,
                    eigenvalues: p.eigenvalues.clone(),
                    pep: pep_from_eigenvalues(&p.eigenvalues, gamma, paths),
                    hamming: p.hamming,
                })
            })
            .collect();
        BoundReport {
            gamma,
            pair_terms,
            f: self.weight,
            p_e: self.bound(gamma),
            diversity_order: self.diversity_order(),
        }
    }
}

/// BER upper bound on a single Doppler/delay profile.
pub fn ber_upper_bound(config: &SystemConfig, gamma: f64, profile: &[PathProfile]) -> Result<BoundReport> {
    Ok(BoundModel::new(config, &[profile.to_vec()])?.report(gamma))
}

/// Minimum rank of `Θ(a, â)` over all ordered pairs.
pub fn diversity_order(config: &SystemConfig, profile: &[PathProfile]) -> Result<usize> {
    Ok(BoundModel::new(config, &[profile.to_vec()])?.diversity_order())
}

/// `count` single-user Doppler/delay profiles drawn from `seed`.
pub fn draw_profiles(params: &ChannelParams, count: usize, seed: u64) -> Vec<Vec<PathProfile>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| sample_channel(params, 1, &mut rng).users[0].profile())
        .collect()
}

/// A hypothesis of the shared-chirp problem: one chirp for every user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedCandidate {
    pub sweep_down: bool,
    pub nu: usize,
    /// Symbol-bit label per user.
    pub symbol_labels: Vec<u64>,
}

/// One round of the halving search.
#[derive(Debug, Clone, PartialEq)]
pub struct ChirpOrderStep {
    pub order: usize,
    pub ambiguous: bool,
    pub collision: Option<(SharedCandidate, SharedCandidate)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChirpOrderResult {
    pub p_star: usize,
    pub trace: Vec<ChirpOrderStep>,
}

/// First colliding pair of shared-chirp candidates at chirp order `order`, if any.
///
/// Every user is assumed to apply the same chirp `ν₀ ∈ 0..order`; the
/// noiseless composite `Σ_u C(ν₀) (chain_u x_u)` is built for every
/// `(ν₀, x_1, …, x_U)` and two candidates collide when all samples agree to
/// within [`AMBIGUITY_TOLERANCE`].
pub fn find_collision(
    config: &SystemConfig,
    order: usize,
) -> Result<Option<(SharedCandidate, SharedCandidate)>> {
    if !config.waveform.is_chirp_modulated() {
        return Err(Error::InvalidConfig(format!(
            "{} does not carry chirp bits",
            config.waveform.name()
        )));
    }
    let mut trial = config.clone();
    trial.p = order;
    trial.validate()?;
    let tx = Transmitter::new(&trial)?;
    let n = trial.n;
    let sym_labels = 1u64 << trial.symbol_bits();
    let sweeps: &[Sweep] = if trial.has_direction_bit() {
        &[Sweep::Up, Sweep::Down]
    } else if trial.chirp_direction == crate::waveform::ChirpDirection::Down {
        &[Sweep::Down]
    } else {
        &[Sweep::Up]
    };
    let combos = (sym_labels as u128).checked_pow(trial.users as u32).unwrap_or(u128::MAX);
    let total = combos.saturating_mul((order * sweeps.len()) as u128);
    if total > DEFAULT_CANDIDATE_CAP {
        return Err(Error::SearchSpaceTooLarge {
            candidates: total,
            cap: DEFAULT_CANDIDATE_CAP,
        });
    }

    // unchirped per-user blocks, indexed [u][symbol label]
    let blocks = (0..trial.users)
        .map(|u| {
            (0..sym_labels)
                .map(|label| {
                    let msg = UserMessage::from_label(&trial, label);
                    let symbols = tx.constellation().map(&msg.symbol_bits)?;
                    tx.modulate_unchirped(u, &symbols)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let combos = combos as u64;
    let decode = |combo: u64| -> Vec<u64> {
        let mut rest = combo;
        let mut labels = vec![0; trial.users];
        for slot in labels.iter_mut().rev() {
            *slot = rest % sym_labels;
            rest /= sym_labels;
        }
        labels
    };
    let sums: Vec<Vec<Complex64>> = (0..combos)
        .map(|combo| {
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            for (u, label) in decode(combo).into_iter().enumerate() {
                acc.iter_mut()
                    .zip(&blocks[u][label as usize])
                    .for_each(|(a, b)| *a += b);
            }
            acc
        })
        .collect();

    let mut signals: Vec<(SharedCandidate, Vec<Complex64>)> = Vec::with_capacity(total as usize);
    for &sweep in sweeps {
        for nu in 0..order {
            let chirp = tx
                .chirp_for(sweep, nu)?
                .ok_or_else(|| Error::InvalidConfig("waveform has no chirp".into()))?;
            for (combo, sum) in sums.iter().enumerate() {
                let s = sum.iter().zip(chirp.samples()).map(|(a, c)| a * c).collect();
                signals.push((
                    SharedCandidate {
                        sweep_down: sweep == Sweep::Down,
                        nu,
                        symbol_labels: decode(combo as u64),
                    },
                    s,
                ));
            }
        }
    }

    // sort by a weighted projection; identical signals have projections within `window`
    let weights: Vec<f64> = (0..n).map(|k| 1.0 / (1.0 + k as f64)).collect();
    let window = 2.0 * AMBIGUITY_TOLERANCE * weights.iter().sum::<f64>();
    let key = |s: &[Complex64]| -> f64 {
        s.iter().zip(&weights).map(|(v, w)| (v.re + v.im) * w).sum()
    };
    let mut keyed: Vec<(f64, usize)> = signals.iter().enumerate().map(|(i, (_, s))| (key(s), i)).collect();
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut best: Option<(usize, usize)> = None;
    for i in 0..keyed.len() {
        for j in (i + 1)..keyed.len() {
            if keyed[j].0 - keyed[i].0 > window {
                break;
            }
            let (a, b) = (keyed[i].1.min(keyed[j].1), keyed[i].1.max(keyed[j].1));
            let same = signals[a]
                .1
                .iter()
                .zip(&signals[b].1)
                .all(|(x, y)| (x - y).norm() <= AMBIGUITY_TOLERANCE);
            if same && best.map_or(true, |cur| (a, b) < cur) {
                best = Some((a, b));
            }
        }
    }
    Ok(best.map(|(a, b)| (signals[a].0.clone(), signals[b].0.clone())))
}

/// Halves the candidate order from `N` until the shared-chirp problem has a
/// unique solution.
pub fn optimize_chirp_order(config: &SystemConfig) -> Result<ChirpOrderResult> {
    let mut trace = Vec::new();
    let mut order = config.n.next_power_of_two();
    if order > config.n {
        order /= 2;
    }
    loop {
        let collision = find_collision(config, order)?;
        let ambiguous = collision.is_some();
        trace.push(ChirpOrderStep {
            order,
            ambiguous,
            collision,
        });
        if !ambiguous {
            return Ok(ChirpOrderResult { p_star: order, trace });
        }
        if order == 1 {
            return Err(Error::DegenerateConfig(
                "the constellation chain is not injective even without chirp bits".into(),
            ));
        }
        order /= 2;
    }
}
