//! Named random substreams derived from a scenario seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Mobility(u32),
    Protocol(u32),
    Session(u32),
    ControlChannel,
    DataChannel,
}

impl Stream {
    fn id(self) -> u64 {
        const TAG: u64 = 1 << 40;
        match self {
            Stream::Mobility(n) => TAG + n as u64,
            Stream::Protocol(n) => 2 * TAG + n as u64,
            Stream::Session(n) => 3 * TAG + n as u64,
            Stream::ControlChannel => 4 * TAG,
            Stream::DataChannel => 5 * TAG,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
