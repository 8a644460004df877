use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("probability {0} is outside [0, 1]")]
pub struct BadProbability(pub f64);

pub(crate) fn check_probability(p: f64) -> Result<f64, BadProbability> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(BadProbability(p))
    }
}

/// FNV-1a over the UTF-8 bytes of a name. Streams are keyed by name so that
/// adding a node leaves every other node's draws untouched.
pub fn stream_id_for(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A reproducible random stream: ChaCha8 seeded from `seed`, on stream
/// `stream_id`. Identical `(seed, stream_id, draw index)` gives the same
/// draw on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
            draws: 0,
        }
    }

    pub fn for_name(seed: u64, name: &str) -> Self {
        Self::new(seed, stream_id_for(name))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `true` with probability `p`; consumes exactly one draw.
    pub fn bernoulli(&mut self, p: f64) -> Result<bool, BadProbability> {
        let p = check_probability(p)?;
        Ok(self.next_unit() < p)
    }

    /// Fair coin.
    pub fn coin(&mut self) -> bool {
        self.next_u64() >> 63 == 1
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: u32) -> u32 {
        debug_assert!(n > 0);
        (((self.next_u64() >> 32) * u64::from(n)) >> 32) as u32
    }

    /// Failures before the first success of a Bernoulli(`p`) sequence, or
    /// `None` when `p == 0`. One draw regardless of the result, which is what
    /// lets sources skip straight to their next successful attempt.
    pub fn geometric(&mut self, p: f64) -> Result<Option<u64>, BadProbability> {
        let p = check_probability(p)?;
        let u = self.next_unit();
        if p == 0.0 {
            return Ok(None);
        }
        if p == 1.0 {
            return Ok(Some(0));
        }
        // 1 - u lies in (0, 1], so the logarithm is finite.
        let k = libm::floor(libm::log(1.0 - u) / libm::log1p(-p));
        if k >= u64::MAX as f64 {
            return Ok(None);
        }
        Ok(Some(k as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_extremes() {
        let mut r = RngStream::new(1, 2);
        for _ in 0..10_000 {
            assert!(!r.bernoulli(0.0).unwrap());
            assert!(r.bernoulli(1.0).unwrap());
        }
        assert_eq!(r.draws(), 20_000);
    }

    #[test]
    fn bernoulli_rejects_bad_probability() {
        let mut r = RngStream::new(1, 2);
        assert_eq!(r.bernoulli(1.5), Err(BadProbability(1.5)));
        assert_eq!(r.bernoulli(-0.1), Err(BadProbability(-0.1)));
        assert!(r.bernoulli(f64::NAN).is_err());
        assert_eq!(r.draws(), 0);
    }

    #[test]
    fn bernoulli_mean_within_three_sigma() {
        let mut r = RngStream::new(7, 0);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| r.bernoulli(0.36).unwrap()).count();
        let mean = hits as f64 / n as f64;
        let tol = 3.0 * (0.36f64 * 0.64 / n as f64).sqrt();
        assert!((mean - 0.36).abs() < tol, "mean {mean} tol {tol}");
        assert!((tol - 0.00144).abs() < 1e-5);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(42, 5);
        let mut b = RngStream::new(42, 5);
        let mut c = RngStream::new(42, 6);
        let xa: [u64; 4] = core::array::from_fn(|_| a.next_u64());
        let xb: [u64; 4] = core::array::from_fn(|_| b.next_u64());
        let xc: [u64; 4] = core::array::from_fn(|_| c.next_u64());
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn known_draws_are_frozen() {
        let mut r = RngStream::new(0, 0);
        let first = r.next_u64();
        assert_eq!(first, 13_080_132_717_333_068_652);
        assert_eq!(stream_id_for("alice"), stream_id_for("alice"));
        assert_ne!(stream_id_for("alice"), stream_id_for("bob"));
        assert_eq!(stream_id_for(""), 0xcbf2_9ce4_8422_2325);
    }

    #[test]
    fn geometric_matches_bernoulli_mean() {
        let mut r = RngStream::new(3, 9);
        let p = 8e-3;
        let n = 200_000;
        let total: u64 = (0..n).map(|_| r.geometric(p).unwrap().unwrap()).sum();
        let mean = total as f64 / n as f64;
        let expect = (1.0 - p) / p;
        let sd = ((1.0 - p) / (p * p)).sqrt() / (n as f64).sqrt();
        assert!((mean - expect).abs() < 4.0 * sd, "{mean} vs {expect}");
        assert_eq!(r.geometric(0.0).unwrap(), None);
        assert_eq!(r.geometric(1.0).unwrap(), Some(0));
    }

    #[test]
    fn below_is_in_range() {
        let mut r = RngStream::new(11, 1);
        let mut counts = [0u32; 8];
        for _ in 0..80_000 {
            counts[r.below(8) as usize] += 1;
        }
        for c in counts {
            assert!((c as i64 - 10_000).abs() < 500, "{counts:?}");
        }
    }
}
