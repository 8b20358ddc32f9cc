//! Transmit side: bit splitting, Gray PSK, chirp generation and circular-shift
//! chirp modulation, interleaved subcarrier mapping and the per-user transmit
//! chains for every supported waveform.
//!
//! All transforms are unitary and all chirp diagonals are unit modulus, so each
//! chain preserves the energy of the constellation vector.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{energy, ComplexMatrix, UnitaryFft};

/// Waveform families built by [`Transmitter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Waveform {
    /// `F_Nᴴ P_u F_M x_u`
    DftSOfdm,
    /// DFT-s-OFDM with a fixed (non-information-bearing) chirp diagonal.
    ChirpedDftSOfdm,
    /// DFT-s-OFDM whose chirp starting frequency carries `log2 P` bits.
    DftSOfdmCm,
    /// `F_Nᴴ P_u x_u`
    Ofdm,
    /// `C_1 F_Nᴴ C_2 P_u x_u`
    Afdm,
    /// AFDM with the first chirp circularly shifted by the chirp bits.
    AfdmCm,
}

impl Waveform {
    /// Whether the chirp starting frequency carries information.
    pub fn is_chirp_modulated(self) -> bool {
        matches!(self, Waveform::DftSOfdmCm | Waveform::AfdmCm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Waveform::DftSOfdm => "dft-s-ofdm",
            Waveform::ChirpedDftSOfdm => "chirped-dft-s-ofdm",
            Waveform::DftSOfdmCm => "dft-s-ofdm-cm",
            Waveform::Ofdm => "ofdm",
            Waveform::Afdm => "afdm",
            Waveform::AfdmCm => "afdm-cm",
        }
    }
}

/// Chirp sweep direction selected by a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChirpDirection {
    #[default]
    Up,
    Down,
    /// One extra bit per user picks up- or down-chirp.
    Combined,
}

/// Direction of a single generated chirp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Up,
    Down,
}

impl Sweep {
    /// Direction encoded by the leading bit in combined mode (0 = up).
    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Sweep::Up
        } else {
            Sweep::Down
        }
    }
}

/// Link parameters shared by all users of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub waveform: Waveform,
    /// Total subcarriers / block length `N`.
    pub n: usize,
    /// Symbols per user `M`.
    pub m: usize,
    pub users: usize,
    /// PSK order `Q`.
    pub q: usize,
    /// Chirp modulation order `P` (1 = no chirp bits).
    pub p: usize,
    /// Chirp rate in cycles/sample², `exp(jπ·rate·n²)`.
    pub chirp_rate: f64,
    pub chirp_direction: ChirpDirection,
    pub cp_len: usize,
    /// 1-based comb offsets `I_u`, one per user.
    pub subcarrier_indices: Vec<usize>,
    /// First AFDM chirp parameter, `C_1[n] = exp(j2π·c1·n²)`.
    pub afdm_c1: f64,
    /// Second AFDM chirp parameter, `C_2[m] = exp(j2π·c2·m²)`.
    pub afdm_c2: f64,
    /// Fixed circular shift of the chirp for [`Waveform::ChirpedDftSOfdm`].
    pub chirp_shift: usize,
}

impl SystemConfig {
    /// Configuration with the default chirp rate `1/N`, up-chirps, combs
    /// `I_u = 1..=U`, no CP and `afdm_c1 = 1/(2N)`, `afdm_c2 = 0`.
    pub fn new(waveform: Waveform, n: usize, m: usize, users: usize, q: usize, p: usize) -> Self {
        Self {
            waveform,
            n,
            m,
            users,
            q,
            p,
            chirp_rate: 1.0 / n.max(1) as f64,
            chirp_direction: ChirpDirection::Up,
            cp_len: 0,
            subcarrier_indices: (1..=users).collect(),
            afdm_c1: afdm_c1_for_doppler(n, 0.0),
            afdm_c2: 0.0,
            chirp_shift: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.m == 0 || self.users == 0 {
            return bad("N, M and U must all be at least 1".into());
        }
        if self.n % self.m != 0 {
            return bad(format!("N = {} is not a multiple of M = {}", self.n, self.m));
        }
        if !self.q.is_power_of_two() || self.q < 2 {
            return Err(Error::UnsupportedConstellation(self.q));
        }
        if !self.p.is_power_of_two() || self.p > self.n {
            return bad(format!("P = {} must be a power of two no larger than N = {}", self.p, self.n));
        }
        if !self.waveform.is_chirp_modulated() {
            if self.p != 1 {
                return bad(format!("{} carries no chirp bits, so P must be 1", self.waveform.name()));
            }
            if self.chirp_direction == ChirpDirection::Combined {
                return bad(format!("{} cannot use combined chirp directions", self.waveform.name()));
            }
        }
        if self.chirp_shift >= self.n {
            return bad(format!("chirp shift {} must be below N = {}", self.chirp_shift, self.n));
        }
        if !self.chirp_rate.is_finite() || !self.afdm_c1.is_finite() || !self.afdm_c2.is_finite() {
            return bad("chirp parameters must be finite".into());
        }
        if self.subcarrier_indices.len() != self.users {
            return bad(format!(
                "{} subcarrier indices given for {} users",
                self.subcarrier_indices.len(),
                self.users
            ));
        }
        let combs = self.n / self.m;
        let mut seen = vec![false; combs + 1];
        for &i in &self.subcarrier_indices {
            if i == 0 || i > combs {
                return bad(format!("subcarrier index {i} outside 1..={combs}"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return bad(format!("subcarrier index {i} assigned twice"));
            }
        }
        Ok(())
    }

    pub fn chirp_bits(&self) -> usize {
        self.p.trailing_zeros() as usize
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.q.trailing_zeros() as usize
    }

    pub fn symbol_bits(&self) -> usize {
        self.m * self.bits_per_symbol()
    }

    pub fn has_direction_bit(&self) -> bool {
        self.chirp_direction == ChirpDirection::Combined
    }

    /// Information bits carried by one user per block.
    pub fn bits_per_user(&self) -> usize {
        usize::from(self.has_direction_bit()) + self.chirp_bits() + self.symbol_bits()
    }

    pub fn bits_per_block(&self) -> usize {
        self.users * self.bits_per_user()
    }

    /// Distinct messages one user can send.
    pub fn candidates_per_user(&self) -> u128 {
        1u128 << self.bits_per_user()
    }

    /// 0-based subcarriers of user `u`: `I_u - 1 + k·N/M`.
    pub fn subcarriers(&self, u: usize) -> Vec<usize> {
        let stride = self.n / self.m;
        let first = self.subcarrier_indices[u] - 1;
        (0..self.m).map(|k| first + k * stride).collect()
    }
}

/// `afdm_c1 = (2⌈α_max⌉ + 1)/(2N)` for a maximum normalized Doppler `α_max`.
pub fn afdm_c1_for_doppler(n: usize, max_normalized_doppler: f64) -> f64 {
    (2.0 * max_normalized_doppler.abs().ceil() + 1.0) / (2.0 * n.max(1) as f64)
}

/// One user's information bits, split by role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserMessage {
    /// Present only in combined mode; 0 selects the up-chirp.
    pub direction_bit: Option<u8>,
    pub chirp_bits: Vec<u8>,
    pub symbol_bits: Vec<u8>,
}

impl UserMessage {
    /// Message whose concatenated bits spell `label` in natural binary (MSB first).
    pub fn from_label(config: &SystemConfig, label: u64) -> Self {
        let width = config.bits_per_user();
        let bits: Vec<u8> = (0..width)
            .map(|i| ((label >> (width - 1 - i)) & 1) as u8)
            .collect();
        split_bits(&bits, config).expect("label width matches the config")
    }

    pub fn bits(&self) -> Vec<u8> {
        self.direction_bit
            .iter()
            .chain(&self.chirp_bits)
            .chain(&self.symbol_bits)
            .copied()
            .collect()
    }

    pub fn chirp_index(&self) -> usize {
        chirp_index(&self.chirp_bits)
    }

    pub fn sweep(&self, config: &SystemConfig) -> Sweep {
        match (config.chirp_direction, self.direction_bit) {
            (ChirpDirection::Down, _) => Sweep::Down,
            (ChirpDirection::Combined, Some(bit)) => Sweep::from_bit(bit),
            _ => Sweep::Up,
        }
    }
}

/// Splits a user's bits into (direction,) chirp and symbol bits.
pub fn split_bits(bits: &[u8], config: &SystemConfig) -> Result<UserMessage> {
    let expected = config.bits_per_user();
    if bits.len() != expected {
        return Err(Error::InvalidLength {
            expected,
            actual: bits.len(),
        });
    }
    let (direction_bit, rest) = if config.has_direction_bit() {
        (Some(bits[0]), &bits[1..])
    } else {
        (None, bits)
    };
    let (chirp, symbols) = rest.split_at(config.chirp_bits());
    Ok(UserMessage {
        direction_bit,
        chirp_bits: chirp.to_vec(),
        symbol_bits: symbols.to_vec(),
    })
}

/// Natural-binary value of the chirp bits, most significant bit first.
pub fn chirp_index(chirp_bits: &[u8]) -> usize {
    chirp_bits
        .iter()
        .fold(0, |acc, &b| (acc << 1) | usize::from(b != 0))
}

/// Fixed-length block of complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal(Vec<Complex64>);

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Self(samples)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn energy(&self) -> f64 {
        energy(&self.0)
    }

    pub fn is_unit_modulus(&self, tolerance: f64) -> bool {
        self.0.iter().all(|s| (s.norm() - 1.0).abs() <= tolerance)
    }
}

impl From<Vec<Complex64>> for ComplexSignal {
    fn from(samples: Vec<Complex64>) -> Self {
        Self(samples)
    }
}

/// Linear chirp `exp(±jπ·rate·n²)`, `n = 0..N-1`.
pub fn generate_chirp(n: usize, chirp_rate: f64, sweep: Sweep) -> ComplexSignal {
    let sign = match sweep {
        Sweep::Up => 1.0,
        Sweep::Down => -1.0,
    };
    (0..n)
        .map(|k| {
            let k = k as f64;
            Complex64::from_polar(1.0, sign * PI * chirp_rate * k * k)
        })
        .collect::<Vec<_>>()
        .into()
}

/// Circular left shift by `nu`: `out[n] = c[(n + nu) mod N]`. `nu = N` is a
/// full rotation.
pub fn chirp_modulate(c: &ComplexSignal, nu: usize) -> Result<ComplexSignal> {
    let n = c.len();
    if nu > n {
        return Err(Error::InvalidArgument(format!(
            "chirp index {nu} exceeds chirp length {n}"
        )));
    }
    let mut out = c.samples().to_vec();
    if n > 0 {
        out.rotate_left(nu % n);
    }
    Ok(out.into())
}

/// N×M interleaved mapping `P_u`: identity columns `I_u, I_u + N/M, …` (1-based).
pub fn mapping_matrix(config: &SystemConfig, u: usize) -> ComplexMatrix {
    let carriers = config.subcarriers(u);
    ComplexMatrix::from_fn(config.n, config.m, |r, c| {
        if carriers[c] == r {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Gray-labeled unit-energy PSK.
///
/// Point `k` sits at phase `offset + 2πk/Q` and carries the Gray label
/// `k ^ (k >> 1)`; the offset is π/4 for QPSK and 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    q: usize,
    /// Indexed by the natural-binary value of the label bits.
    by_label: Vec<Complex64>,
}

impl Constellation {
    pub fn psk(q: usize) -> Result<Self> {
        if q < 2 || !q.is_power_of_two() {
            return Err(Error::UnsupportedConstellation(q));
        }
        let offset = if q == 4 { PI / 4.0 } else { 0.0 };
        let mut by_label = vec![Complex64::new(0.0, 0.0); q];
        for k in 0..q {
            let phase = offset + 2.0 * PI * k as f64 / q as f64;
            by_label[k ^ (k >> 1)] = snap(Complex64::from_polar(1.0, phase));
        }
        Ok(Self { q, by_label })
    }

    pub fn order(&self) -> usize {
        self.q
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.q.trailing_zeros() as usize
    }

    /// Point for a natural-binary label value.
    pub fn point(&self, label: usize) -> Complex64 {
        self.by_label[label]
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let k = self.bits_per_symbol();
        if bits.len() % k != 0 {
            return Err(Error::InvalidLength {
                expected: bits.len().div_ceil(k) * k,
                actual: bits.len(),
            });
        }
        Ok(bits
            .chunks(k)
            .map(|chunk| self.by_label[chirp_index(chunk)])
            .collect())
    }
}

/// Removes the ~1e-17 residue of cos/sin at multiples of π/2.
fn snap(v: Complex64) -> Complex64 {
    let fix = |x: f64| if x.abs() < 1e-15 { 0.0 } else { x };
    Complex64::new(fix(v.re), fix(v.im))
}

/// Gray-labeled Q-PSK mapping, one symbol per `log2 Q` bits.
pub fn psk_map(symbol_bits: &[u8], q: usize) -> Result<Vec<Complex64>> {
    Constellation::psk(q)?.map(symbol_bits)
}

/// Prepends the last `cp_len` samples.
pub fn add_cp(s: &ComplexSignal, cp_len: usize) -> Result<ComplexSignal> {
    let n = s.len();
    if cp_len >= n && cp_len > 0 {
        return Err(Error::InvalidArgument(format!(
            "cyclic prefix of {cp_len} samples does not fit a block of {n}"
        )));
    }
    let mut out = Vec::with_capacity(n + cp_len);
    out.extend_from_slice(&s.samples()[n - cp_len..]);
    out.extend_from_slice(s.samples());
    Ok(out.into())
}

/// Drops the first `cp_len` samples.
pub fn remove_cp(s: &ComplexSignal, cp_len: usize) -> Result<ComplexSignal> {
    if s.len() <= cp_len && cp_len > 0 {
        return Err(Error::InvalidLength {
            expected: cp_len + 1,
            actual: s.len(),
        });
    }
    Ok(s.samples()[cp_len..].to_vec().into())
}

/// Per-configuration transmit chain with cached FFT plans and chirps.
#[derive(Debug, Clone)]
pub struct Transmitter {
    config: SystemConfig,
    constellation: Constellation,
    fft_n: UnitaryFft,
    fft_m: UnitaryFft,
    up_chirp: ComplexSignal,
    down_chirp: ComplexSignal,
    second_chirp: Vec<Complex64>,
}

impl Transmitter {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        config.validate()?;
        let rate = match config.waveform {
            Waveform::Afdm | Waveform::AfdmCm => 2.0 * config.afdm_c1,
            _ => config.chirp_rate,
        };
        let second_chirp = generate_chirp(config.n, 2.0 * config.afdm_c2, Sweep::Up).into_samples();
        Ok(Self {
            config: config.clone(),
            constellation: Constellation::psk(config.q)?,
            fft_n: UnitaryFft::new(config.n)?,
            fft_m: UnitaryFft::new(config.m)?,
            up_chirp: generate_chirp(config.n, rate, Sweep::Up),
            down_chirp: generate_chirp(config.n, rate, Sweep::Down),
            second_chirp,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// The (possibly shifted) chirp diagonal applied to a message, or `None`
    /// for waveforms without a time-domain chirp.
    pub fn chirp_for(&self, sweep: Sweep, nu: usize) -> Result<Option<ComplexSignal>> {
        let base = match sweep {
            Sweep::Up => &self.up_chirp,
            Sweep::Down => &self.down_chirp,
        };
        match self.config.waveform {
            Waveform::DftSOfdm | Waveform::Ofdm => Ok(None),
            _ => chirp_modulate(base, nu).map(Some),
        }
    }

    /// Time-domain block of user `u` for the given message.
    pub fn modulate(&self, message: &UserMessage, u: usize) -> Result<ComplexSignal> {
        let cfg = &self.config;
        if u >= cfg.users {
            return Err(Error::InvalidConfig(format!("user {u} out of range for U = {}", cfg.users)));
        }
        if message.chirp_bits.len() != cfg.chirp_bits()
            || message.symbol_bits.len() != cfg.symbol_bits()
            || message.direction_bit.is_some() != cfg.has_direction_bit()
        {
            return Err(Error::InvalidConfig(format!(
                "message layout does not match {} with P = {}, Q = {}, M = {}",
                cfg.waveform.name(),
                cfg.p,
                cfg.q,
                cfg.m
            )));
        }
        let symbols = self.constellation.map(&message.symbol_bits)?;
        let nu = match cfg.waveform {
            Waveform::ChirpedDftSOfdm => cfg.chirp_shift,
            Waveform::DftSOfdmCm | Waveform::AfdmCm => message.chirp_index(),
            _ => 0,
        };
        self.modulate_symbols(u, &symbols, message.sweep(cfg), nu)
    }

    /// Transmit chain on explicit constellation points.
    pub fn modulate_symbols(
        &self,
        u: usize,
        symbols: &[Complex64],
        sweep: Sweep,
        nu: usize,
    ) -> Result<ComplexSignal> {
        let mut block = self.modulate_unchirped(u, symbols)?;
        if let Some(chirp) = self.chirp_for(sweep, nu)? {
            block
                .iter_mut()
                .zip(chirp.samples())
                .for_each(|(s, c)| *s *= c);
        }
        Ok(block.into())
    }

    /// Everything up to (not including) the outer time-domain chirp diagonal.
    pub fn modulate_unchirped(&self, u: usize, symbols: &[Complex64]) -> Result<Vec<Complex64>> {
        let cfg = &self.config;
        if symbols.len() != cfg.m {
            return Err(Error::InvalidConfig(format!(
                "{} symbols given, M = {}",
                symbols.len(),
                cfg.m
            )));
        }
        let mut spread = symbols.to_vec();
        if matches!(
            cfg.waveform,
            Waveform::DftSOfdm | Waveform::ChirpedDftSOfdm | Waveform::DftSOfdmCm
        ) {
            self.fft_m.forward(&mut spread);
        }
        let mut grid = vec![Complex64::new(0.0, 0.0); cfg.n];
        for (&k, &v) in cfg.subcarriers(u).iter().zip(&spread) {
            grid[k] = v;
        }
        if matches!(cfg.waveform, Waveform::Afdm | Waveform::AfdmCm) {
            grid.iter_mut()
                .zip(&self.second_chirp)
                .for_each(|(g, c)| *g *= c);
        }
        self.fft_n.inverse(&mut grid);
        Ok(grid)
    }
}

/// One-shot transmit chain for user `u`.
pub fn modulate(config: &SystemConfig, message: &UserMessage, u: usize) -> Result<ComplexSignal> {
    Transmitter::new(config)?.modulate(message, u)
}
