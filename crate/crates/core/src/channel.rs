//! Delay-Doppler multipath channel with integer delays, per-path Doppler
//! phase ramps and Eb/N0-calibrated complex Gaussian noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{circular_shift_matrix, ComplexMatrix};
use crate::waveform::{ComplexSignal, SystemConfig};

/// How path delays are assigned per draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayProfile {
    /// Delays `0, 1, …, L-1`.
    #[default]
    Fixed,
    /// `L` distinct delays drawn uniformly from `0..=max_delay`.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub paths: usize,
    pub max_doppler_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub carrier_hz: f64,
    /// Informative only; the Doppler spread is set by `max_doppler_hz`.
    pub velocity_kmh: f64,
    pub max_delay: usize,
    pub delay_profile: DelayProfile,
}

impl ChannelParams {
    /// `f_max / Δf`.
    pub fn normalized_max_doppler(&self) -> f64 {
        self.max_doppler_hz / self.subcarrier_spacing_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::InvalidConfig("channel needs at least one path".into()));
        }
        if !(self.max_doppler_hz >= 0.0 && self.max_doppler_hz.is_finite()) {
            return Err(Error::InvalidConfig("maximum Doppler must be finite and non-negative".into()));
        }
        if !(self.subcarrier_spacing_hz > 0.0 && self.subcarrier_spacing_hz.is_finite()) {
            return Err(Error::InvalidConfig("subcarrier spacing must be positive".into()));
        }
        let needed = self.paths - 1;
        if self.max_delay < needed {
            return Err(Error::InvalidConfig(format!(
                "{} paths need distinct delays, so max_delay must be at least {needed}",
                self.paths
            )));
        }
        Ok(())
    }

    /// Largest delay any realization can contain.
    pub fn largest_delay(&self) -> usize {
        match self.delay_profile {
            DelayProfile::Fixed => self.paths - 1,
            DelayProfile::Random => self.max_delay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Doppler normalized to the subcarrier spacing.
    pub doppler: f64,
    pub delay: usize,
}

/// The paths seen by one user.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserChannel {
    pub paths: Vec<Path>,
}

impl UserChannel {
    pub fn new(paths: Vec<Path>) -> Self {
        Self { paths }
    }

    /// Single unit-gain path with the given delay and Doppler.
    pub fn single(delay: usize, doppler: f64) -> Self {
        Self::new(vec![Path {
            gain: Complex64::new(1.0, 0.0),
            doppler,
            delay,
        }])
    }

    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }

    /// Gain-free (Doppler, delay) profile.
    pub fn profile(&self) -> Vec<PathProfile> {
        self.paths
            .iter()
            .map(|p| PathProfile {
                doppler: p.doppler,
                delay: p.delay,
            })
            .collect()
    }

    pub fn gains(&self) -> Vec<Complex64> {
        self.paths.iter().map(|p| p.gain).collect()
    }

    /// `H s` evaluated directly in O(L·N):
    /// `y[n] = Σ_l h_l exp(j2π v_l n/N) s[(n - l_l) mod N]`.
    pub fn apply(&self, s: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); s.len()];
        self.apply_into(s, &mut out)?;
        Ok(out)
    }

    /// Like [`UserChannel::apply`] but overwrites `out`.
    pub fn apply_into(&self, s: &[Complex64], out: &mut [Complex64]) -> Result<()> {
        let n = s.len();
        assert_eq!(out.len(), n);
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for path in &self.paths {
            if path.delay >= n {
                return Err(Error::InvalidDelay { delay: path.delay, n });
            }
            let omega = 2.0 * PI * path.doppler / n as f64;
            for (k, y) in out.iter_mut().enumerate() {
                let ramp = Complex64::from_polar(1.0, omega * k as f64);
                *y += path.gain * ramp * s[(k + n - path.delay) % n];
            }
        }
        Ok(())
    }
}

/// A user channel with its Doppler ramps folded into per-sample tap weights,
/// `y[n] = Σ_l w_l[n] s[(n - l) mod N]` with `w_l[n] = h_l exp(j2π v_l n/N)`.
#[derive(Debug, Clone, Default)]
pub struct PreparedChannel {
    n: usize,
    taps: Vec<(usize, Vec<Complex64>)>,
}

impl PreparedChannel {
    pub fn new(channel: &UserChannel, n: usize) -> Result<Self> {
        let mut prepared = Self::default();
        prepared.reset(channel, n)?;
        Ok(prepared)
    }

    /// Rebuilds the taps in place, reusing allocations.
    pub fn reset(&mut self, channel: &UserChannel, n: usize) -> Result<()> {
        self.n = n;
        self.taps.resize_with(channel.paths.len(), Default::default);
        for (tap, path) in self.taps.iter_mut().zip(&channel.paths) {
            if path.delay >= n {
                return Err(Error::InvalidDelay { delay: path.delay, n });
            }
            let omega = 2.0 * PI * path.doppler / n as f64;
            tap.0 = path.delay;
            tap.1.clear();
            tap.1
                .extend((0..n).map(|k| path.gain * Complex64::from_polar(1.0, omega * k as f64)));
        }
        Ok(())
    }

    /// Overwrites `out` with `H s`.
    pub fn apply_into(&self, s: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        debug_assert!(s.len() == n && out.len() == n);
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (delay, weights) in &self.taps {
            let (head, tail) = s.split_at(n - delay);
            // out[k] uses s[k - delay] for k >= delay and s[k + n - delay] below it
            for (k, (o, w)) in out.iter_mut().zip(weights).enumerate() {
                let x = if k < *delay { tail[k] } else { head[k - delay] };
                *o += w * x;
            }
        }
    }
}

/// Doppler and delay of one path, without its gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProfile {
    pub doppler: f64,
    pub delay: usize,
}

/// Per-user channels for one block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelRealization {
    pub users: Vec<UserChannel>,
}

impl ChannelRealization {
    pub fn new(users: Vec<UserChannel>) -> Self {
        Self { users }
    }

    /// Every user sees the same unit-gain, zero-delay, zero-Doppler path.
    pub fn identity(users: usize) -> Self {
        Self::new(vec![UserChannel::single(0, 0.0); users])
    }
}

/// Draws CN(0, 1/L) gains, uniform Dopplers in `[-f̄_max, f̄_max]` and delays
/// per the configured profile, independently for each user.
pub fn sample_channel<R: Rng + ?Sized>(
    params: &ChannelParams,
    users: usize,
    rng: &mut R,
) -> ChannelRealization {
    let f_max = params.normalized_max_doppler();
    let sigma = (0.5 / params.paths as f64).sqrt();
    let users = (0..users)
        .map(|_| {
            let delays: Vec<usize> = match params.delay_profile {
                DelayProfile::Fixed => (0..params.paths).collect(),
                DelayProfile::Random => {
                    let mut d = index::sample(rng, params.max_delay + 1, params.paths).into_vec();
                    d.sort_unstable();
                    d
                }
            };
            let paths = delays
                .into_iter()
                .map(|delay| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    let doppler = if f_max > 0.0 {
                        rng.gen_range(-f_max..=f_max)
                    } else {
                        0.0
                    };
                    Path {
                        gain: Complex64::new(sigma * re, sigma * im),
                        doppler,
                        delay,
                    }
                })
                .collect();
            UserChannel::new(paths)
        })
        .collect();
    ChannelRealization::new(users)
}

/// `D_l = diag(exp(j2π v n / N))`, `n = 0..N-1`.
pub fn doppler_matrix(doppler: f64, n: usize) -> ComplexMatrix {
    let phases: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * doppler * k as f64 / n as f64))
        .collect();
    ComplexMatrix::diagonal(&phases)
}

/// `H = Σ_l h_l D_l Π^{l}`.
pub fn channel_matrix(channel: &UserChannel, n: usize) -> Result<ComplexMatrix> {
    let mut h = ComplexMatrix::zeros(n, n);
    for path in &channel.paths {
        if path.delay >= n {
            return Err(Error::InvalidDelay { delay: path.delay, n });
        }
        let term = doppler_matrix(path.doppler, n)
            .mul(&circular_shift_matrix(n, path.delay)?)?
            .scale(path.gain);
        for r in 0..n {
            for c in 0..n {
                h[(r, c)] += term[(r, c)];
            }
        }
    }
    Ok(h)
}

/// Adds i.i.d. CN(0, sigma2) noise in place.
pub fn add_noise<R: Rng + ?Sized>(samples: &mut [Complex64], sigma2: f64, rng: &mut R) {
    if sigma2 <= 0.0 {
        return;
    }
    let sigma = (0.5 * sigma2).sqrt();
    for s in samples {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *s += Complex64::new(sigma * re, sigma * im);
    }
}

/// `r = Σ_u H_u s_u + w`.
pub fn apply_channel<R: Rng + ?Sized>(
    tx: &[ComplexSignal],
    realization: &ChannelRealization,
    sigma2: f64,
    rng: &mut R,
) -> Result<ComplexSignal> {
    if tx.len() != realization.users.len() {
        return Err(Error::InvalidConfig(format!(
            "{} transmit signals for {} user channels",
            tx.len(),
            realization.users.len()
        )));
    }
    let n = tx.first().map_or(0, ComplexSignal::len);
    if let Some(bad) = tx.iter().find(|s| s.len() != n) {
        return Err(Error::InvalidConfig(format!(
            "transmit blocks of length {} and {} cannot be superposed",
            n,
            bad.len()
        )));
    }
    let mut r = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); n];
    for (s, ch) in tx.iter().zip(&realization.users) {
        ch.apply_into(s.samples(), &mut scratch)?;
        r.iter_mut().zip(&scratch).for_each(|(a, b)| *a += b);
    }
    add_noise(&mut r, sigma2, rng);
    Ok(r.into())
}

/// Per-sample noise variance for a target Eb/N0.
///
/// With unit-energy symbols and unit average channel power the received block
/// energy is `U·M`; every information bit (direction, chirp and symbol bits)
/// counts towards `Eb`.
pub fn noise_variance_for_ebn0(config: &SystemConfig, ebn0_db: f64) -> f64 {
    let block_energy = (config.users * config.m) as f64;
    let eb = block_energy / config.bits_per_block() as f64;
    eb / 10f64.powf(ebn0_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::Waveform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(paths: usize, max_doppler_hz: f64) -> ChannelParams {
        ChannelParams {
            paths,
            max_doppler_hz,
            subcarrier_spacing_hz: 15e3,
            carrier_hz: 4e9,
            velocity_kmh: 500.0,
            max_delay: paths.saturating_sub(1),
            delay_profile: DelayProfile::Fixed,
        }
    }

    #[test]
    fn normalized_doppler_of_reference_setup() {
        assert!((params(3, 2e3).normalized_max_doppler() - 2.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn zero_doppler_draws_are_exactly_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let real = sample_channel(&params(3, 0.0), 4, &mut rng);
        assert_eq!(real.users.len(), 4);
        for u in &real.users {
            assert_eq!(u.paths.iter().map(|p| p.delay).collect::<Vec<_>>(), vec![0, 1, 2]);
            assert!(u.paths.iter().all(|p| p.doppler == 0.0));
        }
    }

    #[test]
    fn dopplers_stay_in_range() {
        let p = params(3, 2e3);
        let f = p.normalized_max_doppler();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            for u in sample_channel(&p, 2, &mut rng).users {
                assert!(u.paths.iter().all(|path| path.doppler.abs() <= f));
            }
        }
    }

    #[test]
    fn single_path_gain_has_unit_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = params(1, 2e3);
        let draws = 200_000;
        let mean: f64 = (0..draws)
            .map(|_| sample_channel(&p, 1, &mut rng).users[0].paths[0].gain.norm_sqr())
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "E|h|^2 = {mean}");
    }

    #[test]
    fn random_delays_are_distinct() {
        let mut p = params(3, 2e3);
        p.max_delay = 4;
        p.delay_profile = DelayProfile::Random;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            for u in sample_channel(&p, 2, &mut rng).users {
                let mut d: Vec<usize> = u.paths.iter().map(|p| p.delay).collect();
                assert!(d.iter().all(|&x| x <= 4));
                d.dedup();
                assert_eq!(d.len(), 3);
            }
        }
    }

    #[test]
    fn channel_matrix_simple_cases() {
        assert_eq!(channel_matrix(&UserChannel::single(0, 0.0), 5).unwrap(), ComplexMatrix::identity(5));
        assert_eq!(
            channel_matrix(&UserChannel::single(1, 0.0), 5).unwrap(),
            circular_shift_matrix(5, 1).unwrap()
        );
        assert_eq!(
            channel_matrix(&UserChannel::single(5, 0.0), 5),
            Err(Error::InvalidDelay { delay: 5, n: 5 })
        );
    }

    #[test]
    fn zero_doppler_channel_is_circulant() {
        let ch = UserChannel::new(vec![
            Path { gain: Complex64::new(0.5, -0.2), doppler: 0.0, delay: 0 },
            Path { gain: Complex64::new(-0.1, 0.7), doppler: 0.0, delay: 2 },
        ]);
        let h = channel_matrix(&ch, 6).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                assert_eq!(h[(r, c)], h[((r + 1) % 6, (c + 1) % 6)]);
            }
        }
        assert_eq!(h[(0, 0)], Complex64::new(0.5, -0.2));
        assert_eq!(h[(2, 0)], Complex64::new(-0.1, 0.7));
    }

    #[test]
    fn fast_application_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = &sample_channel(&params(3, 2e3), 1, &mut rng).users[0];
        let s: Vec<Complex64> = (0..8).map(|k| Complex64::new(k as f64, 1.0 - k as f64)).collect();
        let fast = ch.apply(&s).unwrap();
        let slow = channel_matrix(ch, 8).unwrap().mul_vec(&s).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_superposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s1: ComplexSignal = vec![Complex64::new(1.0, 2.0), Complex64::new(0.0, -1.0)].into();
        let s2: ComplexSignal = vec![Complex64::new(-3.0, 0.5), Complex64::new(2.0, 2.0)].into();
        let one = apply_channel(&[s1.clone()], &ChannelRealization::identity(1), 0.0, &mut rng).unwrap();
        assert_eq!(one, s1);
        let two = apply_channel(&[s1.clone(), s2.clone()], &ChannelRealization::identity(2), 0.0, &mut rng)
            .unwrap();
        let sum: Vec<Complex64> = s1.samples().iter().zip(s2.samples()).map(|(a, b)| a + b).collect();
        assert_eq!(two.samples(), &sum[..]);
        assert!(apply_channel(&[s1], &ChannelRealization::identity(2), 0.0, &mut rng).is_err());
    }

    #[test]
    fn noise_power_matches_sigma2() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 8;
        let sigma2 = 0.37;
        let blocks = 150_000;
        let zero: ComplexSignal = vec![Complex64::new(0.0, 0.0); n].into();
        let id = ChannelRealization::identity(1);
        let total: f64 = (0..blocks)
            .map(|_| apply_channel(&[zero.clone()], &id, sigma2, &mut rng).unwrap().energy())
            .sum();
        let mean = total / blocks as f64;
        assert!((mean / (n as f64 * sigma2) - 1.0).abs() < 0.02, "E|w|^2 = {mean}");
    }

    #[test]
    fn noise_variance_examples() {
        let cm = SystemConfig::new(Waveform::DftSOfdmCm, 8, 2, 4, 2, 2);
        assert!((noise_variance_for_ebn0(&cm, 0.0) - 2.0 / 3.0).abs() < 1e-15);
        let plain = SystemConfig::new(Waveform::DftSOfdm, 8, 2, 4, 2, 1);
        assert!((noise_variance_for_ebn0(&plain, 0.0) - 1.0).abs() < 1e-15);
        let ratio = noise_variance_for_ebn0(&cm, 10.0) / noise_variance_for_ebn0(&cm, 0.0);
        assert!((ratio - 0.1).abs() < 1e-15);
    }
}
