//! Pluggable witness scheme.
//!
//! The protocol semantics only need a witness that binds an owner id to a
//! transaction id and can be checked deterministically. The default scheme
//! is a keyed hash over (owner key, txid); it carries no cryptographic
//! strength and stands in for a real signature system.

use crate::hash::{sha256, Hash256};

pub trait SignatureScheme {
    fn sign(&self, owner_key: &Hash256, txid: &Hash256) -> Vec<u8>;
    fn verify(&self, owner_key: &Hash256, txid: &Hash256, witness: &[u8]) -> bool;
}

/// witness = sha256(owner_key || txid), verified by recomputation.
#[derive(Clone, Copy, Default, Debug)]
pub struct KeyedHashScheme;

impl SignatureScheme for KeyedHashScheme {
    fn sign(&self, owner_key: &Hash256, txid: &Hash256) -> Vec<u8> {
        let mut buf = [0u8; 64];
        buf[..32].copy_from_slice(&owner_key.0);
        buf[32..].copy_from_slice(&txid.0);
        sha256(&buf).0.to_vec()
    }

    fn verify(&self, owner_key: &Hash256, txid: &Hash256, witness: &[u8]) -> bool {
        witness == self.sign(owner_key, txid).as_slice()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::sha256d;

    #[test]
    fn sign_verify_round_trip() {
        let scheme = KeyedHashScheme;
        let key = sha256d(b"key");
        let txid = sha256d(b"tx");
        let wit = scheme.sign(&key, &txid);
        assert!(scheme.verify(&key, &txid, &wit));
        assert!(!scheme.verify(&key, &sha256d(b"other"), &wit));
        assert!(!scheme.verify(&sha256d(b"wrong"), &txid, &wit));
    }
}
