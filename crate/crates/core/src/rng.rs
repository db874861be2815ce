//! Counter-based random numbers.
//!
//! Every draw in the simulator is a pure function of a 64-bit key and a
//! 128-bit counter, computed with the Philox4x32-10 bijection of Salmon et
//! al. (SC'11). Streams never carry mutable state, so a site update can be
//! evaluated on any thread, in any order, and still produce the same bits.

/// Identifier written into substrate files and checkpoints. Bump the suffix
/// if the mapping from (key, counter) to floats ever changes.
pub const GENERATOR_ID: &str = "philox4x32-10/v1";

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Domain tags keep the substrate, film dynamics and open-chain sampler on
/// disjoint counter spaces even when they share a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Domain {
    Substrate = 0x5355_4253,
    Sweep = 0x5357_4550,
    Chain = 0x4348_4149,
    Test = 0x5445_5354,
}

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// Raw Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Maps the top 53 bits of `x` to (0, 1], never returning 0.
#[inline]
pub fn open_closed_unit(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Maps the top 52 bits of `x` onto the open interval (0, 1).
#[inline]
pub fn open_open_unit(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

/// A keyed counter-based generator. Cheap to copy; holds no position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: [u32; 2],
    domain: Domain,
}

impl CounterRng {
    pub fn new(seed: u64, domain: Domain) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            domain,
        }
    }

    /// Two independent 64-bit words for the counter `(a, b)`.
    #[inline]
    pub fn words(&self, a: u64, b: u64) -> [u64; 2] {
        // The domain tag occupies the top bits of the second counter word;
        // `b` is limited to 32 bits of sweep/stream index in practice.
        let hi = (b & 0xFFFF_FFFF) | ((self.domain as u64) << 32);
        let out = philox4x32_10([a as u32, (a >> 32) as u32, hi as u32, (hi >> 32) as u32], self.key);
        [
            (out[0] as u64) | ((out[1] as u64) << 32),
            (out[2] as u64) | ((out[3] as u64) << 32),
        ]
    }

    /// Uniform on the open interval (0, 1) for counter `(a, b)`.
    #[inline]
    pub fn uniform(&self, a: u64, b: u64) -> f64 {
        open_open_unit(self.words(a, b)[0])
    }

    /// Uniform on (0, 1] for counter `(a, b)`.
    #[inline]
    pub fn uniform_open_closed(&self, a: u64, b: u64) -> f64 {
        open_closed_unit(self.words(a, b)[0])
    }
}

/// SplitMix64 finalizer, used to derive well-separated seeds from tuples.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &p| mix64(acc ^ mix64(p)))
}
