use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Context;
use crate::space::{sample_with, Genotype};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomState {
    rng: ChaCha8Rng,
}

impl RandomState {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn propose(&mut self, ctx: &Context) -> Genotype {
        sample_with(ctx.space, &mut self.rng)
    }
}
