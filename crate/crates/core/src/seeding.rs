//! Deterministic RNG stream derivation.
//!
//! Every random draw in an audit is a pure function of
//! `(master_seed, measurement_index, purpose, trial_index)`. Keys are derived
//! with SplitMix64 and fed to ChaCha8, whose 64-bit stream id carries the
//! trial index, so trials can be executed in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Global model initialization and warm-up for a measurement.
    GlobalModel = 1,
    /// Choice of crafter inputs (examples, target labels) for a measurement.
    Context = 2,
    /// Per-trial randomness (truth coin, randomizer, honest clients).
    Trial = 3,
    /// Pilot run used to orient the sign-sum distinguisher.
    Calibration = 4,
    /// Pre-training of the colluding server's malicious model.
    MaliciousModel = 5,
    /// Synthetic dataset generation.
    Dataset = 6,
}

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(master_seed: u64, measurement: u64, purpose: Purpose) -> [u8; 32] {
    let mut state = master_seed;
    state = splitmix64(&mut state) ^ measurement.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    state = splitmix64(&mut state) ^ (purpose as u64).wrapping_mul(0xA24B_AED4_963E_E407);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Stream for a whole measurement (model init, context selection, ...).
pub fn measurement_rng(master_seed: u64, measurement: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_key(master_seed, measurement, purpose))
}

/// Stream for one trial of one measurement.
pub fn trial_rng(master_seed: u64, measurement: u64, purpose: Purpose, trial: u64) -> ChaCha8Rng {
    let mut rng = measurement_rng(master_seed, measurement, purpose);
    rng.set_stream(trial);
    rng
}
