//! Quasi-static frequency-selective Rayleigh MIMO channel.
//!
//! Taps are drawn once per frame and held for all of its OFDM symbols. With a
//! cyclic prefix at least `L − 1` samples long the per-subcarrier model
//! `Y_q(n) = Σ_p X_p(n) H_{p,q}(n) + N_q(n)` is exact, so no time-domain
//! samples are generated.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codebook::StfGrid;
use crate::error::{Error, Result};
use crate::scalar::{cis, czero, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct PowerDelayProfile<T> {
    /// Tap power `σ_l²` at delay index `l` (delay `l·T_s`).
    powers: Vec<T>,
}

impl<T: Real> PowerDelayProfile<T> {
    pub fn new(powers: Vec<T>) -> Result<Self> {
        if powers.is_empty() {
            return Err(Error::Config("power delay profile has no taps".into()));
        }
        if powers.iter().any(|p| !(*p >= T::zero()) || !p.is_finite()) {
            return Err(Error::Config("tap powers must be finite and non-negative".into()));
        }
        let total = powers.iter().fold(T::zero(), |a, &p| a + p);
        if (total - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::Config(format!(
                "tap powers sum to {total}, expected 1"
            )));
        }
        Ok(Self { powers })
    }

    /// `L` equal taps of power `1/L`.
    pub fn uniform(taps: usize) -> Result<Self> {
        if taps == 0 {
            return Err(Error::Config("power delay profile has no taps".into()));
        }
        Self::new(vec![T::one() / T::from_usize(taps).unwrap(); taps])
    }

    pub fn taps(&self) -> usize {
        self.powers.len()
    }

    pub fn powers(&self) -> &[T] {
        &self.powers
    }
}

/// Tap gains `α_{p,q}(l)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Taps<T> {
    tx: usize,
    rx: usize,
    taps: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> Taps<T> {
    pub fn from_fn(tx: usize, rx: usize, taps: usize, mut f: impl FnMut(usize, usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(tx * rx * taps);
        for p in 0..tx {
            for q in 0..rx {
                for l in 0..taps {
                    data.push(f(p, q, l));
                }
            }
        }
        Self { tx, rx, taps, data }
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, l: usize) -> Complex<T> {
        self.data[(p * self.rx + q) * self.taps + l]
    }

    pub fn link(&self, p: usize, q: usize) -> &[Complex<T>] {
        let start = (p * self.rx + q) * self.taps;
        &self.data[start..start + self.taps]
    }

    pub fn tx(&self) -> usize {
        self.tx
    }

    pub fn rx(&self) -> usize {
        self.rx
    }

    pub fn taps(&self) -> usize {
        self.taps
    }
}

/// Per-subcarrier response `H_{p,q}(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyResponse<T> {
    tx: usize,
    rx: usize,
    subcarriers: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> FrequencyResponse<T> {
    #[inline]
    pub fn get(&self, p: usize, q: usize, n: usize) -> Complex<T> {
        self.data[(q * self.tx + p) * self.subcarriers + n]
    }

    pub fn link(&self, p: usize, q: usize) -> &[Complex<T>] {
        let start = (q * self.tx + p) * self.subcarriers;
        &self.data[start..start + self.subcarriers]
    }

    pub fn tx(&self) -> usize {
        self.tx
    }

    pub fn rx(&self) -> usize {
        self.rx
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization<T> {
    pub taps: Taps<T>,
    pub cfr: FrequencyResponse<T>,
    pub frame_id: u64,
}

impl<T: Real> ChannelRealization<T> {
    pub fn new(taps: Taps<T>, subcarriers: usize, frame_id: u64) -> Result<Self> {
        let cfr = frequency_response(&taps, subcarriers)?;
        Ok(Self { taps, cfr, frame_id })
    }

    /// Keeps the first `tx` transmit and `rx` receive antennas.
    pub fn restrict(&self, tx: usize, rx: usize) -> Result<Self> {
        if tx > self.taps.tx || rx > self.taps.rx {
            return Err(Error::Config(format!(
                "cannot restrict a {}x{} channel to {tx}x{rx}",
                self.taps.tx, self.taps.rx
            )));
        }
        let taps = Taps::from_fn(tx, rx, self.taps.taps, |p, q, l| self.taps.get(p, q, l));
        Self::new(taps, self.cfr.subcarriers, self.frame_id)
    }
}

/// Draws independent `CN(0, σ_l²)` gains for every link and tap.
pub fn sample_taps<T: Real, R: Rng + ?Sized>(
    pdp: &PowerDelayProfile<T>,
    tx: usize,
    rx: usize,
    rng: &mut R,
) -> Taps<T>
where
    StandardNormal: Distribution<T>,
{
    let half = T::lit(0.5);
    Taps::from_fn(tx, rx, pdp.taps(), |_, _, l| {
        let sd = (pdp.powers[l] * half).sqrt();
        let re: T = StandardNormal.sample(rng);
        let im: T = StandardNormal.sample(rng);
        Complex::new(re * sd, im * sd)
    })
}

/// `H(n) = Σ_l α(l) exp(−i2πnl/N)`: the N-point DFT of the zero-padded taps.
pub fn frequency_response<T: Real>(taps: &Taps<T>, subcarriers: usize) -> Result<FrequencyResponse<T>> {
    if taps.taps > subcarriers {
        return Err(Error::Config(format!(
            "{} taps exceed {subcarriers} subcarriers",
            taps.taps
        )));
    }
    let n_f = T::from_usize(subcarriers).unwrap();
    let twiddle: Vec<Complex<T>> = (0..subcarriers)
        .map(|k| cis(-T::TAU() * T::from_usize(k).unwrap() / n_f))
        .collect();
    let mut data = vec![czero(); taps.tx * taps.rx * subcarriers];
    for q in 0..taps.rx {
        for p in 0..taps.tx {
            let link = taps.link(p, q);
            let out = &mut data[(q * taps.tx + p) * subcarriers..][..subcarriers];
            for (n, h) in out.iter_mut().enumerate() {
                *h = link
                    .iter()
                    .enumerate()
                    .fold(czero(), |acc, (l, a)| acc + a * twiddle[(n * l) % subcarriers]);
            }
        }
    }
    Ok(FrequencyResponse {
        tx: taps.tx,
        rx: taps.rx,
        subcarriers,
        data,
    })
}

/// Received frequency-domain samples indexed (rx antenna, OFDM symbol,
/// subcarrier).
#[derive(Clone, Debug, PartialEq)]
pub struct Received<T> {
    rx: usize,
    ofdm_symbols: usize,
    subcarriers: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> Received<T> {
    #[inline]
    pub fn get(&self, q: usize, t: usize, n: usize) -> Complex<T> {
        self.data[(q * self.ofdm_symbols + t) * self.subcarriers + n]
    }

    pub fn rx(&self) -> usize {
        self.rx
    }

    pub fn ofdm_symbols(&self) -> usize {
        self.ofdm_symbols
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }
}

/// `Y_q^t(n) = Σ_p X^t_p(n) H_{p,q}(n) + N_q^t(n)` with circularly symmetric
/// noise of variance `noise_power` per complex sample.
///
/// Noise is drawn receive-antenna-major, so a single-antenna run consumes a
/// prefix of the noise a two-antenna run would see.
pub fn apply_channel<T: Real, R: Rng + ?Sized>(
    grid: &StfGrid<T>,
    ch: &ChannelRealization<T>,
    noise_power: T,
    rng: &mut R,
) -> Result<Received<T>>
where
    StandardNormal: Distribution<T>,
{
    let cfr = &ch.cfr;
    if grid.tx() != cfr.tx || grid.subcarriers() != cfr.subcarriers {
        return Err(Error::ShapeMismatch {
            left: (grid.subcarriers(), grid.tx()),
            right: (cfr.subcarriers, cfr.tx),
        });
    }
    let (rx, syms, n_sub) = (cfr.rx, grid.ofdm_symbols(), grid.subcarriers());
    let sd = (noise_power * T::lit(0.5)).sqrt();
    let mut data = Vec::with_capacity(rx * syms * n_sub);
    for q in 0..rx {
        for t in 0..syms {
            for n in 0..n_sub {
                let mut y = (0..grid.tx()).fold(czero(), |acc, p| acc + grid.get(t, n, p) * cfr.get(p, q, n));
                if noise_power > T::zero() {
                    let re: T = StandardNormal.sample(rng);
                    let im: T = StandardNormal.sample(rng);
                    y = y + Complex::new(re * sd, im * sd);
                }
                data.push(y);
            }
        }
    }
    Ok(Received {
        rx,
        ofdm_symbols: syms,
        subcarriers: n_sub,
        data,
    })
}

/// Purpose-separated random substreams of one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Channel,
    Bits,
    Noise,
}

/// Deterministic generator for `(master seed, purpose, frame)`. Distinct
/// frames use distinct ChaCha streams, so frames are independent and can be
/// simulated in any order.
pub fn frame_rng(master_seed: u64, purpose: Stream, frame_id: u64) -> ChaCha8Rng {
    let tag = match purpose {
        Stream::Channel => 0x9e37_79b9_7f4a_7c15u64,
        Stream::Bits => 0xbf58_476d_1ce4_e5b9,
        Stream::Noise => 0x94d0_49bb_1331_11eb,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ tag);
    rng.set_stream(frame_id);
    rng
}

#[cfg(test)]
mod tests {
    use rustfft::FftPlanner;

    use super::*;
    use crate::linalg::CMatrix;

    type C = Complex<f64>;

    fn random_taps(seed: u64, taps: usize) -> Taps<f64> {
        let pdp = PowerDelayProfile::uniform(taps).unwrap();
        sample_taps(&pdp, 2, 2, &mut frame_rng(seed, Stream::Channel, 0))
    }

    #[test]
    fn profile_validation() {
        assert!(PowerDelayProfile::<f64>::new(vec![0.5, 0.4]).is_err());
        assert!(PowerDelayProfile::<f64>::new(vec![]).is_err());
        assert!(PowerDelayProfile::<f64>::new(vec![1.5, -0.5]).is_err());
        let p = PowerDelayProfile::<f64>::uniform(4).unwrap();
        assert_eq!(p.powers(), &[0.25; 4]);
    }

    #[test]
    fn tap_moments_and_independence() {
        let pdp = PowerDelayProfile::<f64>::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut power = [0.0; 4];
        let mut fourth = [0.0; 4];
        let mut cross = C::new(0.0, 0.0);
        let (mut p11, mut p21) = (0.0, 0.0);
        for _ in 0..draws {
            let t = sample_taps(&pdp, 2, 1, &mut rng);
            for l in 0..4 {
                let e = t.get(0, 0, l).norm_sqr();
                power[l] += e;
                fourth[l] += e * e;
            }
            let a = t.get(0, 0, 0);
            let b = t.get(1, 0, 0);
            cross += a * b.conj();
            p11 += a.norm_sqr();
            p21 += b.norm_sqr();
        }
        for l in 0..4 {
            let mean = power[l] / draws as f64;
            let s2 = pdp.powers()[l];
            assert!((mean - s2).abs() < 0.02 * s2, "tap {l}: {mean} vs {s2}");
            // |α|² is exponential: variance equals squared mean
            let var = fourth[l] / draws as f64 - mean * mean;
            assert!((var - mean * mean).abs() < 0.05 * mean * mean, "tap {l} variance {var}");
        }
        let corr = cross.norm() / (p11 * p21).sqrt();
        assert!(corr < 0.02, "cross-link correlation {corr}");
    }

    #[test]
    fn taps_are_reproducible() {
        assert_eq!(random_taps(5, 4), random_taps(5, 4));
        assert_ne!(random_taps(5, 4), random_taps(6, 4));
    }

    #[test]
    fn response_edge_cases() {
        let t = random_taps(1, 4);
        let h = frequency_response(&t, 64).unwrap();
        let dc: C = t.link(1, 0).iter().sum();
        assert!((h.get(1, 0, 0) - dc).norm() < 1e-12);

        let flat = Taps::from_fn(1, 1, 1, |_, _, _| C::new(0.3, -0.7));
        let h = frequency_response(&flat, 16).unwrap();
        for n in 0..16 {
            assert!((h.get(0, 0, n) - C::new(0.3, -0.7)).norm() < 1e-15);
        }
        assert!(frequency_response(&random_taps(1, 8), 4).is_err());
    }

    #[test]
    fn response_matches_fft_and_parseval() {
        let mut planner = FftPlanner::<f64>::new();
        for n in [16usize, 64] {
            let fft = planner.plan_fft_forward(n);
            for seed in 0..10 {
                let t = random_taps(seed, 4);
                let h = frequency_response(&t, n).unwrap();
                for p in 0..2 {
                    for q in 0..2 {
                        let mut buf = vec![C::new(0.0, 0.0); n];
                        buf[..4].copy_from_slice(t.link(p, q));
                        fft.process(&mut buf);
                        for k in 0..n {
                            assert!((buf[k] - h.get(p, q, k)).norm() < 1e-12);
                        }
                        let lhs: f64 = h.link(p, q).iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
                        let rhs: f64 = t.link(p, q).iter().map(|z| z.norm_sqr()).sum();
                        assert!((lhs - rhs).abs() < 1e-12);
                    }
                }
            }
        }
    }

    fn single_link(h: C) -> ChannelRealization<f64> {
        ChannelRealization::new(Taps::from_fn(1, 1, 1, |_, _, _| h), 8, 0).unwrap()
    }

    #[test]
    fn noiseless_single_path() {
        let ch = single_link(C::new(0.6, 0.8));
        let mut grid = StfGrid::zeros(8, 1, 1);
        grid.place(0, 0, &CMatrix::from_fn(8, 1, |r, _| C::new(r as f64, 1.0))).unwrap();
        let y = apply_channel(&grid, &ch, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for n in 0..8 {
            assert!((y.get(0, 0, n) - C::new(n as f64, 1.0) * C::new(0.6, 0.8)).norm() < 1e-15);
        }
    }

    #[test]
    fn pure_noise_variance() {
        let ch = ChannelRealization::new(random_taps(3, 4), 64, 0).unwrap();
        let grid = StfGrid::zeros(64, 2, 4);
        let n0 = 0.37;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut acc = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let y = apply_channel(&grid, &ch, n0, &mut rng).unwrap();
            acc += y.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += y.as_slice().len();
        }
        let var = acc / count as f64;
        assert!((var - n0).abs() < 0.02 * n0, "{var}");
    }

    #[test]
    fn linear_in_transmitted_grid() {
        let ch = ChannelRealization::new(random_taps(9, 4), 16, 0).unwrap();
        let mut grid = StfGrid::zeros(16, 2, 1);
        for n in 0..16 {
            grid.set(0, n, 0, C::new(n as f64, 0.5));
            grid.set(0, n, 1, C::new(-1.0, n as f64 * 0.1));
        }
        let a = C::new(0.0, 2.5);
        let mut scaled = grid.clone();
        for n in 0..16 {
            for p in 0..2 {
                scaled.set(0, n, p, grid.get(0, n, p) * a);
            }
        }
        let noisy = |g: &StfGrid<f64>| apply_channel(g, &ch, 0.2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let clean = |g: &StfGrid<f64>| apply_channel(g, &ch, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (y1, y2) = (noisy(&grid), noisy(&scaled));
        let (c1, c2) = (clean(&grid), clean(&scaled));
        for i in 0..y1.as_slice().len() {
            let n1 = y1.as_slice()[i] - c1.as_slice()[i];
            let n2 = y2.as_slice()[i] - c2.as_slice()[i];
            assert!((n1 - n2).norm() < 1e-12);
            assert!((c2.as_slice()[i] - a * c1.as_slice()[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn restrict_keeps_leading_links() {
        let ch = ChannelRealization::new(random_taps(4, 4), 64, 3).unwrap();
        let r = ch.restrict(1, 1).unwrap();
        assert_eq!(r.taps.link(0, 0), ch.taps.link(0, 0));
        assert_eq!(r.cfr.link(0, 0), ch.cfr.link(0, 0));
        assert!(ch.restrict(3, 1).is_err());
    }

    #[test]
    fn substreams_differ_by_frame_and_purpose() {
        let a: u64 = frame_rng(1, Stream::Noise, 0).gen();
        let b: u64 = frame_rng(1, Stream::Noise, 1).gen();
        let c: u64 = frame_rng(1, Stream::Bits, 0).gen();
        let a2: u64 = frame_rng(1, Stream::Noise, 0).gen();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
