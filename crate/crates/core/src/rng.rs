//! Named random streams derived from one master seed.
//!
//! A run draws from four independent streams: `init` (initial positions),
//! `topology` (neighbor graphs), `evolution` (exemplar choice and swarm
//! update coefficients) and `noise` (uncertainty draws and data corruption).
//! Evolution and noise are further split per agent: agent `i` reads ChaCha
//! stream `i` under the family key, so the values an agent sees never depend
//! on the order in which agents are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const INIT: u64 = 0x696e_6974;
const TOPOLOGY: u64 = 0x746f_706f;
const EVOLUTION: u64 = 0x6576_6f6c;
const NOISE: u64 = 0x6e6f_6973;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-family seeds. Overriding one family leaves the others untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSeeds {
    pub init: u64,
    pub topology: u64,
    pub evolution: u64,
    pub noise: u64,
}

impl StreamSeeds {
    pub fn from_master(seed: u64) -> Self {
        let derive = |tag: u64| splitmix64(seed ^ splitmix64(tag));
        Self {
            init: derive(INIT),
            topology: derive(TOPOLOGY),
            evolution: derive(EVOLUTION),
            noise: derive(NOISE),
        }
    }

    pub fn init_rng(&self) -> StreamRng {
        StreamRng::seed_from_u64(self.init)
    }

    pub fn topology_rng(&self) -> StreamRng {
        StreamRng::seed_from_u64(self.topology)
    }

    pub fn evolution_rng(&self, agent: usize) -> StreamRng {
        per_agent(self.evolution, agent)
    }

    pub fn noise_rng(&self, agent: usize) -> StreamRng {
        per_agent(self.noise, agent)
    }
}

fn per_agent(key: u64, agent: usize) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(key);
    rng.set_stream(agent as u64);
    rng
}
