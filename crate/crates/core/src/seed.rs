//! Hierarchical seed derivation.
//!
//! Every stochastic evaluation derives its seed from its position in the
//! run (run, iteration, neighbor, group), so results do not depend on how
//! work is scheduled across threads.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed `index` of `parent`.
pub fn derive(parent: u64, index: u64) -> u64 {
    mix(parent ^ mix(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Child seed along a path of indices.
pub fn derive_path(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |s, &i| derive(s, i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_differ_and_repeat() {
        assert_eq!(derive(7, 3), derive(7, 3));
        assert_ne!(derive(7, 3), derive(7, 4));
        assert_ne!(derive(7, 3), derive(8, 3));
        assert_ne!(derive_path(1, &[2, 3]), derive_path(1, &[3, 2]));
    }
}
