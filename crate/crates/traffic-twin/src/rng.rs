//! Seeded random streams, split per concern so that toggling one source of
//! randomness (say, pose noise) never perturbs another (route draws).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids. Route streams are per car so that the sequence of goals a car
/// draws is a function of (seed, car) alone, not of when other cars finish.
const STREAM_CHANNEL: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_ROUTE_BASE: u64 = 1000;

pub fn channel_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, STREAM_CHANNEL)
}

pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    stream(seed, STREAM_NOISE)
}

pub fn route_rng(seed: u64, car: u32) -> ChaCha8Rng {
    stream(seed, STREAM_ROUTE_BASE + car as u64)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_and_deterministic() {
        let a: Vec<u64> = channel_rng(7).sample_iter(rand::distributions::Standard).take(4).collect();
        let b: Vec<u64> = channel_rng(7).sample_iter(rand::distributions::Standard).take(4).collect();
        let c: Vec<u64> = noise_rng(7).sample_iter(rand::distributions::Standard).take(4).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn route_streams_differ_per_car() {
        let a: u64 = route_rng(7, 0).gen();
        let b: u64 = route_rng(7, 1).gen();
        assert_ne!(a, b);
    }
}
