//! Deterministic RNG streams for the simulator.
//!
//! Every stochastic concern (arrivals, sizes, routing, burst phases, rollout
//! noise) draws from its own named stream so that changing one concern's draw
//! count never perturbs the others. Stream seeds are derived from the master
//! seed as `splitmix64(master XOR fnv1a64(name))`, and each stream is an
//! independent SplitMix64 generator. Output is reproducible for a fixed
//! (seed, name) pair.

/// SplitMix64 generator with a cached Gaussian spare for Box-Muller.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    gauss_spare: Option<f64>,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed, gauss_spare: None }
    }

    /// Stream generator derived from a master seed and a stream name.
    pub fn stream(master_seed: u64, name: &str) -> Self {
        Self::new(mix(master_seed ^ fnv1a64(name.as_bytes())))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential with the given rate (`rate > 0`).
    pub fn next_exp(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0);
        // 1 - U lies in (0, 1], so ln never sees zero.
        -(1.0 - self.next_f64()).ln() / rate
    }

    /// Standard normal via Box-Muller; the second value of each pair is
    /// cached.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.gauss_spare.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.gauss_spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn next_lognormal(&mut self, mu: f64, sigma: f64) -> f64 {
        (mu + sigma * self.next_normal()).exp()
    }
}
