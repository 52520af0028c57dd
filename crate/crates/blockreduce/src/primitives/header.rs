//! The merge-mined block header and its canonical 272-byte wire format.

use serde::{Deserialize, Serialize};

use crate::hash::{sha256d, Hash256};

/// Canonical serialized header size: the sum of all field sizes below.
pub const HEADER_BYTES: usize = 272;

/// A block header carrying parent hashes, merkle roots and difficulty bits
/// for all three levels of the hierarchy, so a single nonce search can mine
/// zone, region and PRIME blocks simultaneously.
///
/// Field order matches the wire format; all multi-byte integers are
/// little-endian.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BlockHeader {
    pub version: u32,
    pub parent_prime: Hash256,
    pub parent_region: Hash256,
    pub parent_zone: Hash256,
    pub merkle_root_prime: Hash256,
    pub merkle_root_region: Hash256,
    pub merkle_root_zone: Hash256,
    pub merkle_root_interlink: Hash256,
    pub unix_time: u32,
    pub bits_prime: u32,
    pub bits_region: u32,
    pub bits_zone: u32,
    pub fees_region: u64,
    pub fees_zone: u64,
    /// Valid region count, wire-encoded with 0 meaning 256.
    pub map_region: u8,
    /// Valid zone count, wire-encoded with 0 meaning 256.
    pub map_zone: u8,
    pub location_region: u8,
    pub location_zone: u8,
    pub nonce: u64,
}

impl BlockHeader {
    /// Serializes to exactly [`HEADER_BYTES`] bytes in fixed field order.
    pub fn serialize(&self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        let mut w = Writer { buf: &mut out, at: 0 };
        w.u32(self.version);
        w.hash(&self.parent_prime);
        w.hash(&self.parent_region);
        w.hash(&self.parent_zone);
        w.hash(&self.merkle_root_prime);
        w.hash(&self.merkle_root_region);
        w.hash(&self.merkle_root_zone);
        w.hash(&self.merkle_root_interlink);
        w.u32(self.unix_time);
        w.u32(self.bits_prime);
        w.u32(self.bits_region);
        w.u32(self.bits_zone);
        w.u64(self.fees_region);
        w.u64(self.fees_zone);
        w.u8(self.map_region);
        w.u8(self.map_zone);
        w.u8(self.location_region);
        w.u8(self.location_zone);
        w.u64(self.nonce);
        debug_assert_eq!(w.at, HEADER_BYTES);
        out
    }

    /// Parses a canonical 272-byte header. Fails only on wrong length.
    pub fn deserialize(bytes: &[u8]) -> Option<BlockHeader> {
        if bytes.len() != HEADER_BYTES {
            return None;
        }
        let mut r = Reader { buf: bytes, at: 0 };
        let header = BlockHeader {
            version: r.u32(),
            parent_prime: r.hash(),
            parent_region: r.hash(),
            parent_zone: r.hash(),
            merkle_root_prime: r.hash(),
            merkle_root_region: r.hash(),
            merkle_root_zone: r.hash(),
            merkle_root_interlink: r.hash(),
            unix_time: r.u32(),
            bits_prime: r.u32(),
            bits_region: r.u32(),
            bits_zone: r.u32(),
            fees_region: r.u64(),
            fees_zone: r.u64(),
            map_region: r.u8(),
            map_zone: r.u8(),
            location_region: r.u8(),
            location_zone: r.u8(),
            nonce: r.u64(),
        };
        debug_assert_eq!(r.at, HEADER_BYTES);
        Some(header)
    }

    /// Block id: double SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Hash256 {
        sha256d(&self.serialize())
    }

    pub fn zeroed() -> BlockHeader {
        BlockHeader::deserialize(&[0u8; HEADER_BYTES]).unwrap()
    }
}

struct Writer<'a> {
    buf: &'a mut [u8],
    at: usize,
}

impl Writer<'_> {
    fn put(&mut self, bytes: &[u8]) {
        self.buf[self.at..self.at + bytes.len()].copy_from_slice(bytes);
        self.at += bytes.len();
    }
    fn u8(&mut self, v: u8) {
        self.put(&[v]);
    }
    fn u32(&mut self, v: u32) {
        self.put(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.put(&v.to_le_bytes());
    }
    fn hash(&mut self, h: &Hash256) {
        self.put(&h.0);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> &[u8] {
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        s
    }
    fn u8(&mut self) -> u8 {
        self.take(1)[0]
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take(8).try_into().unwrap())
    }
    fn hash(&mut self) -> Hash256 {
        Hash256::from_slice(self.take(32)).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_header() -> BlockHeader {
        BlockHeader {
            version: 1,
            parent_prime: sha256d(b"pp"),
            parent_region: sha256d(b"pr"),
            parent_zone: sha256d(b"pz"),
            merkle_root_prime: sha256d(b"mp"),
            merkle_root_region: sha256d(b"mr"),
            merkle_root_zone: sha256d(b"mz"),
            merkle_root_interlink: sha256d(b"il"),
            unix_time: 1_700_000_000,
            bits_prime: 0x1d00ffff,
            bits_region: 0x1e00ffff,
            bits_zone: 0x1f00ffff,
            fees_region: 12_345,
            fees_zone: 678,
            map_region: 10,
            map_zone: 10,
            location_region: 3,
            location_zone: 7,
            nonce: 0xdeadbeef_12345678,
        }
    }

    #[test]
    fn serialized_length_is_272() {
        assert_eq!(sample_header().serialize().len(), HEADER_BYTES);
        assert_eq!(BlockHeader::zeroed().serialize().len(), HEADER_BYTES);
    }

    #[test]
    fn zero_header_serializes_to_zero_bytes() {
        assert_eq!(BlockHeader::zeroed().serialize(), [0u8; HEADER_BYTES]);
    }

    #[test]
    fn zero_header_digest_golden() {
        // sha256d over 272 zero bytes, pinned from an independent tool.
        assert_eq!(
            BlockHeader::zeroed().hash().to_hex(),
            "047b025f23b64e140a7371a1ed33a3b6fb5612e0beda2d0841d9f1953f67250b"
        );
    }

    #[test]
    fn round_trip() {
        let h = sample_header();
        let bytes = h.serialize();
        assert_eq!(BlockHeader::deserialize(&bytes), Some(h));
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(BlockHeader::deserialize(&[0u8; 271]).is_none());
        assert!(BlockHeader::deserialize(&[0u8; 273]).is_none());
    }
}
