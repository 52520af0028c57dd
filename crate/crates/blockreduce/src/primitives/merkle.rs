//! Binary merkle tree over 32-byte leaves.

use crate::hash::{sha256d, Hash256};

fn combine(left: &Hash256, right: &Hash256) -> Hash256 {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(&left.0);
    buf[32..].copy_from_slice(&right.0);
    sha256d(&buf)
}

/// Merkle root over a list of hashes.
///
/// Standard binary tree: layers with an odd element count duplicate their
/// last element, so a single leaf is hashed against itself. The empty list
/// yields the all-zero sentinel.
pub fn merkle_root(items: &[Hash256]) -> Hash256 {
    if items.is_empty() {
        return Hash256::ZERO;
    }
    let mut layer = items.to_vec();
    loop {
        let mut next = Vec::with_capacity((layer.len() + 1) / 2);
        for pair in layer.chunks(2) {
            let right = if pair.len() == 2 { &pair[1] } else { &pair[0] };
            next.push(combine(&pair[0], right));
        }
        if next.len() == 1 {
            return next[0];
        }
        layer = next;
    }
}
