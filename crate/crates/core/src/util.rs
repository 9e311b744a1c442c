//! Small deterministic hashing helpers for seeded per-task decisions.

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of a seed and a list of string parts.
pub fn seeded_hash(seed: u64, parts: &[&str]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325 ^ splitmix(seed);
    for p in parts {
        h = fnv1a(p.as_bytes(), h);
        h = fnv1a(&[0xff], h);
    }
    splitmix(h)
}

/// Uniform value in `[0, 1)` derived from [`seeded_hash`].
pub fn seeded_unit(seed: u64, parts: &[&str]) -> f64 {
    (seeded_hash(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_spread() {
        assert_eq!(seeded_hash(1, &["a", "b"]), seeded_hash(1, &["a", "b"]));
        assert_ne!(seeded_hash(1, &["ab"]), seeded_hash(1, &["a", "b"]));
        let mean: f64 = (0..10_000).map(|i| seeded_unit(3, &[&i.to_string()])).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02);
    }
}
