//! Scoped UTXO transactions.
//!
//! Every transaction declares the (region, zone) location of all its inputs
//! and a destination location per output. The relation between the input
//! location and the output destinations determines the scope: zonal
//! transactions settle at the next zone block, regional at the next region
//! block, and anything crossing regions only at the next PRIME block.

use serde::{Deserialize, Serialize};

use super::{Location, MapSize, Scope};
use crate::hash::{sha256d, Hash256};

/// Default accounting size charged per transaction by the bandwidth and
/// storage model, independent of the actual serialized length.
pub const TX_ACCOUNTING_BYTES: u64 = 100;

/// Reference to an unspent output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct OutPoint {
    pub txid: Hash256,
    pub index: u16,
}

impl OutPoint {
    pub fn new(txid: Hash256, index: u16) -> OutPoint {
        OutPoint { txid, index }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TxOutput {
    pub amount: u64,
    pub destination: Location,
    pub owner: Hash256,
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Transaction {
    pub inputs: Vec<OutPoint>,
    pub outputs: Vec<TxOutput>,
    /// Origin zone of every input.
    pub location: Location,
    /// Declared fee; validation checks it equals inputs minus outputs.
    pub fee: u64,
    pub witness: Vec<u8>,
}

impl Transaction {
    /// Wire format: length-prefixed fields in the order
    /// (location, inputs, outputs, fee, witness); little-endian integers.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 34 * self.inputs.len() + 42 * self.outputs.len());
        out.push(self.location.region);
        out.push(self.location.zone);
        out.extend_from_slice(&(self.inputs.len() as u32).to_le_bytes());
        for input in &self.inputs {
            out.extend_from_slice(&input.txid.0);
            out.extend_from_slice(&input.index.to_le_bytes());
        }
        out.extend_from_slice(&(self.outputs.len() as u32).to_le_bytes());
        for output in &self.outputs {
            out.extend_from_slice(&output.amount.to_le_bytes());
            out.push(output.destination.region);
            out.push(output.destination.zone);
            out.extend_from_slice(&output.owner.0);
        }
        out.extend_from_slice(&self.fee.to_le_bytes());
        out.extend_from_slice(&(self.witness.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.witness);
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Option<Transaction> {
        let mut r = Cursor { buf: bytes, at: 0 };
        let location = Location::new(r.u8()?, r.u8()?);
        let n_in = r.u32()? as usize;
        if n_in > bytes.len() / 34 + 1 {
            return None;
        }
        let mut inputs = Vec::with_capacity(n_in);
        for _ in 0..n_in {
            let txid = r.hash()?;
            let index = r.u16()?;
            inputs.push(OutPoint { txid, index });
        }
        let n_out = r.u32()? as usize;
        if n_out > bytes.len() / 42 + 1 {
            return None;
        }
        let mut outputs = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            let amount = r.u64()?;
            let destination = Location::new(r.u8()?, r.u8()?);
            let owner = r.hash()?;
            outputs.push(TxOutput { amount, destination, owner });
        }
        let fee = r.u64()?;
        let wit_len = r.u32()? as usize;
        let witness = r.bytes(wit_len)?.to_vec();
        if r.at != bytes.len() {
            return None;
        }
        Some(Transaction { inputs, outputs, location, fee, witness })
    }

    /// Transaction id: double SHA-256 over the serialization with the
    /// witness blanked, so signing cannot change the id.
    pub fn txid(&self) -> Hash256 {
        if self.witness.is_empty() {
            sha256d(&self.serialize())
        } else {
            let unsigned = Transaction { witness: Vec::new(), ..self.clone() };
            sha256d(&unsigned.serialize())
        }
    }

    pub fn output_sum(&self) -> u64 {
        self.outputs.iter().map(|o| o.amount).sum()
    }

    pub fn is_coinbase(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Scope of a transaction, evaluated in the effective coordinate space of
/// the given map: zonal when every output lands in the origin zone, regional
/// when all outputs stay inside the origin region, PRIME otherwise.
///
/// Adding an output farther from the origin can only raise the scope.
pub fn compute_scope(tx: &Transaction, map: MapSize) -> Scope {
    let origin = tx.location.remap(map);
    let mut scope = Scope::Zonal;
    for output in &tx.outputs {
        let dest = output.destination.remap(map);
        if dest.region != origin.region {
            return Scope::Prime;
        }
        if dest.zone != origin.zone {
            scope = Scope::Regional;
        }
    }
    scope
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.at.checked_add(n)?;
        if end > self.buf.len() {
            return None;
        }
        let s = &self.buf[self.at..end];
        self.at = end;
        Some(s)
    }
    fn u8(&mut self) -> Option<u8> {
        Some(self.bytes(1)?[0])
    }
    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_le_bytes(self.bytes(2)?.try_into().ok()?))
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.bytes(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.bytes(8)?.try_into().ok()?))
    }
    fn hash(&mut self) -> Option<Hash256> {
        Hash256::from_slice(self.bytes(32)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tx() -> Transaction {
        Transaction {
            inputs: vec![OutPoint::new(sha256d(b"prev"), 1)],
            outputs: vec![
                TxOutput {
                    amount: 40,
                    destination: Location::new(1, 2),
                    owner: sha256d(b"alice"),
                },
                TxOutput {
                    amount: 55,
                    destination: Location::new(1, 2),
                    owner: sha256d(b"bob"),
                },
            ],
            location: Location::new(1, 2),
            fee: 5,
            witness: vec![0xaa; 32],
        }
    }

    #[test]
    fn round_trip() {
        let tx = sample_tx();
        assert_eq!(Transaction::deserialize(&tx.serialize()), Some(tx));
    }

    #[test]
    fn txid_ignores_witness() {
        let mut tx = sample_tx();
        let id = tx.txid();
        tx.witness = vec![0xbb; 64];
        assert_eq!(tx.txid(), id);
    }

    #[test]
    fn scope_same_zone_is_zonal() {
        assert_eq!(compute_scope(&sample_tx(), MapSize::FULL), Scope::Zonal);
    }

    #[test]
    fn scope_sibling_zone_is_regional() {
        let mut tx = sample_tx();
        tx.outputs[1].destination = Location::new(1, 3);
        assert_eq!(compute_scope(&tx, MapSize::FULL), Scope::Regional);
    }

    #[test]
    fn scope_cross_region_is_prime() {
        let mut tx = sample_tx();
        tx.outputs[1].destination = Location::new(4, 0);
        assert_eq!(compute_scope(&tx, MapSize::FULL), Scope::Prime);
    }

    #[test]
    fn scope_uses_effective_coordinates() {
        // Declared (200, 73) and (0, 3) collapse to the same zone under a
        // 10x10 map, so the transfer is zonal there but PRIME on the full map.
        let mut tx = sample_tx();
        tx.location = Location::new(200, 73);
        tx.outputs[0].destination = Location::new(0, 3);
        tx.outputs[1].destination = Location::new(0, 3);
        let map = MapSize::new(10, 10).unwrap();
        assert_eq!(compute_scope(&tx, map), Scope::Zonal);
        assert_eq!(compute_scope(&tx, MapSize::FULL), Scope::Prime);
    }

    #[test]
    fn truncated_bytes_rejected() {
        let bytes = sample_tx().serialize();
        assert!(Transaction::deserialize(&bytes[..bytes.len() - 1]).is_none());
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(Transaction::deserialize(&extended).is_none());
    }
}
