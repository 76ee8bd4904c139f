use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::editing::EditBank;
use crate::error::Result;
use crate::generator::{init_toy_generator, GeneratorConfig, GeneratorParams};

pub const TOY_GENERATOR_SEED: u64 = 0;
pub const TOY_BANK_SEED: u64 = 9;
/// Per-layer norm of the toy bank's random directions.
pub const TOY_BANK_NORM: f64 = 2.0;

/// The default-architecture generator every toy preset starts from.
pub fn toy_generator() -> Result<GeneratorParams> {
    init_toy_generator(TOY_GENERATOR_SEED, &GeneratorConfig::default())
}

/// `n` seeded random directions for `params`.
pub fn toy_bank(params: &GeneratorParams, n: usize) -> Result<EditBank> {
    EditBank::random(&mut ChaCha8Rng::seed_from_u64(TOY_BANK_SEED), params, n, TOY_BANK_NORM)
}
