//! Seeded random streams.
//!
//! A master seed expands into independent named substreams so that a change in
//! how one consumer draws numbers never shifts the numbers another consumer sees.
//! Each substream is a ChaCha8 generator keyed on the master seed with a
//! dedicated stream id.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Data,
    Noise,
    Spsa,
    Init,
    Test,
    Oracle,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::Noise => 2,
            Stream::Spsa => 3,
            Stream::Init => 4,
            Stream::Test => 5,
            Stream::Oracle => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self, stream: Stream) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(stream.id());
        rng
    }

    /// Streams for trial `index`; seed is `master ^ index`.
    pub fn trial(&self, index: u64) -> SeedStreams {
        SeedStreams::new(self.master ^ index)
    }

    /// Block-indexed generator for chunked Monte Carlo loops. The result does
    /// not depend on how blocks are scheduled across threads.
    pub fn block(&self, stream: Stream, block: u64) -> SimRng {
        let mut rng = self.rng(stream);
        // each block owns 2^40 words of the substream
        rng.set_word_pos(u128::from(block) << 40);
        rng
    }
}
