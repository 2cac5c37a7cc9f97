//! Indexed random streams.
//!
//! Every replicate or simulation draw gets its own generator keyed by
//! `(seed, index)`. ChaCha's 64-bit stream id gives 2^64 non-overlapping
//! sequences per seed, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Generator for stream `index` under master `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` inside a dedicated pool of `threads` workers; `0` uses the
/// ambient rayon pool.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not build a {threads}-thread pool ({e}); using the global pool");
            f()
        }
    }
}
