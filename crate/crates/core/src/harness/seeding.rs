//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator keyed by 32 bytes and a 64-bit
//! stream id:
//!
//! ```text
//! key[ 0.. 8]  master seed (little endian)
//! key[ 8..16]  scenario code (see ScenarioKey::code)
//! key[16..24]  purpose tag (calibration = 1, oracle = 2, replicates = 3)
//! key[24..32]  b"EFORGE01"
//!
//! stream id    calibration: 0
//!              oracle:      copy index (0 primary, 1 stability check)
//!              replicates:  replicate << 16 | attempt << 8 | slot
//!                           slot 0..=254 is a trial, 255 the replicate-level
//!                           draws (trial sizes, then study-level effects)
//! ```
//!
//! A stream depends only on its coordinates, never on scheduling, so
//! results are identical for any number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::trial::Allocation;

const LAYOUT_TAG: &[u8; 8] = b"EFORGE01";

pub const MAX_TRIALS_PER_REPLICATE: usize = 255;
pub const MAX_ATTEMPTS: u64 = 256;
const REPLICATE_SLOT: u64 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Purpose {
    Calibration = 1,
    Oracle = 2,
    Replicates = 3,
}

/// The coordinates that identify a scenario's random streams. The
/// data-generating mode is deliberately absent: fixed- and random-effects
/// runs of one scenario share trial streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioKey {
    pub beta: f64,
    pub switching: f64,
    pub allocation: Option<Allocation>,
}

impl ScenarioKey {
    /// `beta` and `switching` in basis points, then the allocation ratio:
    /// `beta_bp << 32 | switching_bp << 16 | treatment << 8 | control`.
    pub fn code(&self) -> u64 {
        let bp = |x: f64| ((x * 10_000.0).round() as u64) & 0xFFFF;
        let (t, c) = self
            .allocation
            .map(|a| (a.treatment as u64 & 0xFF, a.control as u64 & 0xFF))
            .unwrap_or((0, 0));
        (bp(self.beta) << 32) | (bp(self.switching) << 16) | (t << 8) | c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    pub master: u64,
}

impl SeedPlan {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    fn stream(&self, key: &ScenarioKey, purpose: Purpose, stream: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master.to_le_bytes());
        seed[8..16].copy_from_slice(&key.code().to_le_bytes());
        seed[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
        seed[24..32].copy_from_slice(LAYOUT_TAG);
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng
    }

    /// Calibration depends only on the effect size and switching target.
    pub fn calibration(&self, beta: f64, target: f64) -> ChaCha8Rng {
        let key = ScenarioKey { beta, switching: target, allocation: None };
        self.stream(&key, Purpose::Calibration, 0)
    }

    pub fn oracle(&self, key: &ScenarioKey, copy: u64) -> ChaCha8Rng {
        self.stream(key, Purpose::Oracle, copy)
    }

    pub fn replicate_level(&self, key: &ScenarioKey, replicate: u64, attempt: u64) -> ChaCha8Rng {
        self.stream(key, Purpose::Replicates, replicate_stream(replicate, attempt, REPLICATE_SLOT))
    }

    pub fn trial(&self, key: &ScenarioKey, replicate: u64, attempt: u64, slot: usize) -> ChaCha8Rng {
        assert!(slot < MAX_TRIALS_PER_REPLICATE, "trial slot {slot} out of range");
        self.stream(key, Purpose::Replicates, replicate_stream(replicate, attempt, slot as u64))
    }
}

fn replicate_stream(replicate: u64, attempt: u64, slot: u64) -> u64 {
    assert!(attempt < MAX_ATTEMPTS && replicate < (1 << 48));
    (replicate << 16) | (attempt << 8) | slot
}
