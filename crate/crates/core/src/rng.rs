//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream derived from
//! `(seed, stream)`. The generator identity is part of the reproducibility
//! contract: the same seed yields the same run on any platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids used by the trainers. Distinct roles never share a stream so
/// that swapping a compressor does not perturb minibatch sampling.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    Sampling(usize),
    WorkerCompression(usize),
    ServerCompression,
    Probe,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Sampling(n) => 2 * n as u64,
            Stream::WorkerCompression(n) => 2 * n as u64 + 1,
            Stream::ServerCompression => u64::MAX - 1,
            Stream::Probe => u64::MAX - 2,
        }
    }
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
