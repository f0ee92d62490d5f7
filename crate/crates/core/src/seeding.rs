//! Deterministic seed derivation so every stage (init, shuffling, folds,
//! masking) draws from its own stream of a single run seed.

/// splitmix64 finalizer; good avalanche for seed mixing.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Child seed for the stream named `tag` at position `index`.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    mix(base ^ fnv1a(tag) ^ mix(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "init", 0), derive_seed(7, "init", 0));
        assert_ne!(derive_seed(7, "init", 0), derive_seed(7, "init", 1));
        assert_ne!(derive_seed(7, "init", 0), derive_seed(7, "shuffle", 0));
        assert_ne!(derive_seed(7, "init", 0), derive_seed(8, "init", 0));
    }
}
