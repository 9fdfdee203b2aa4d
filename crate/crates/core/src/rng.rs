//! Deterministic random streams.
//!
//! Every stochastic routine takes a [`SeedSpec`]. A stream is a ChaCha8
//! generator keyed by `base_seed` with its 64-bit stream counter set to
//! `stream_id`, so replication `r` of a Monte Carlo run can use
//! `stream_id = r` and produce the same draws regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        Self {
            base_seed,
            stream_id,
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Same base seed, different stream.
    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            base_seed: self.base_seed,
            stream_id,
        }
    }

    /// A seed for an independent purpose (e.g. fold assignment vs. data
    /// generation) that keeps the stream id of `self`.
    pub fn derive(&self, purpose: u64) -> Self {
        Self {
            base_seed: splitmix64(self.base_seed ^ splitmix64(purpose.wrapping_add(1))),
            stream_id: self.stream_id,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_spec_same_stream() {
        let s = SeedSpec::new(42, 7);
        let a: Vec<u64> = (0..32).map(|_| s.rng().random()).collect();
        let mut r1 = s.rng();
        let mut r2 = s.rng();
        let b: Vec<u64> = (0..32).map(|_| r1.random()).collect();
        let c: Vec<u64> = (0..32).map(|_| r2.random()).collect();
        assert_eq!(b, c);
        // a restarts the stream each time, so it is constant
        assert!(a.iter().all(|&x| x == a[0]));
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 100_000;
        let mut r0 = SeedSpec::new(3, 0).rng();
        let mut r1 = SeedSpec::new(3, 1).rng();
        let x: Vec<f64> = (0..n).map(|_| r0.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| r1.random::<f64>()).collect();
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx).powi(2);
            syy += (y[i] - my).powi(2);
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 0.02, "corr = {corr}");
        assert_ne!(x[..8], y[..8]);
    }

    #[test]
    fn derived_seeds_differ() {
        let s = SeedSpec::new(1, 5);
        assert_ne!(s.derive(0), s.derive(1));
        assert_eq!(s.derive(0).stream_id, 5);
    }
}
