//! Minimal 256-bit unsigned integer for difficulty targets.
//!
//! Only the operations the compact-difficulty codec and target arithmetic
//! need: comparison, shifts by whole bytes, and division/multiplication by
//! small integers.

/// 256-bit unsigned integer, little-endian 64-bit limbs.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub struct U256(pub [u64; 4]);

impl U256 {
    pub const ZERO: U256 = U256([0; 4]);
    pub const MAX: U256 = U256([u64::MAX; 4]);

    pub fn from_u64(v: u64) -> U256 {
        U256([v, 0, 0, 0])
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }

    /// Interprets 32 big-endian bytes, the convention for comparing header
    /// hashes against targets.
    pub fn from_be_bytes(bytes: &[u8; 32]) -> U256 {
        let mut limbs = [0u64; 4];
        for (i, limb) in limbs.iter_mut().enumerate() {
            let start = 32 - 8 * (i + 1);
            *limb = u64::from_be_bytes(bytes[start..start + 8].try_into().unwrap());
        }
        U256(limbs)
    }

    pub fn to_be_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, limb) in self.0.iter().enumerate() {
            let start = 32 - 8 * (i + 1);
            out[start..start + 8].copy_from_slice(&limb.to_be_bytes());
        }
        out
    }

    /// Index of the highest set bit plus one; zero for zero.
    pub fn bits(&self) -> u32 {
        for i in (0..4).rev() {
            if self.0[i] != 0 {
                return 64 * i as u32 + 64 - self.0[i].leading_zeros();
            }
        }
        0
    }

    /// Left shift by whole bytes; returns None on overflow of any set bit.
    pub fn checked_shl_bytes(&self, bytes: u32) -> Option<U256> {
        if bytes == 0 {
            return Some(*self);
        }
        if bytes >= 32 {
            return if self.is_zero() { Some(*self) } else { None };
        }
        if self.bits() + 8 * bytes > 256 {
            return None;
        }
        let be = self.to_be_bytes();
        let mut shifted = [0u8; 32];
        for i in 0..32 - bytes as usize {
            shifted[i] = be[i + bytes as usize];
        }
        Some(U256::from_be_bytes(&shifted))
    }

    pub fn shr_bytes(&self, bytes: u32) -> U256 {
        if bytes >= 32 {
            return U256::ZERO;
        }
        let be = self.to_be_bytes();
        let mut shifted = [0u8; 32];
        for i in 0..32 - bytes as usize {
            shifted[i + bytes as usize] = be[i];
        }
        U256::from_be_bytes(&shifted)
    }

    /// Long division by a 64-bit divisor.
    pub fn div_u64(&self, divisor: u64) -> U256 {
        assert!(divisor != 0, "division by zero");
        let divisor = divisor as u128;
        let mut out = [0u64; 4];
        let mut rem: u128 = 0;
        for i in (0..4).rev() {
            let acc = (rem << 64) | self.0[i] as u128;
            out[i] = (acc / divisor) as u64;
            rem = acc % divisor;
        }
        U256(out)
    }

    /// Saturating multiplication by a 64-bit factor.
    pub fn saturating_mul_u64(&self, factor: u64) -> U256 {
        let mut out = [0u64; 4];
        let mut carry: u128 = 0;
        for i in 0..4 {
            let acc = self.0[i] as u128 * factor as u128 + carry;
            out[i] = acc as u64;
            carry = acc >> 64;
        }
        if carry != 0 {
            U256::MAX
        } else {
            U256(out)
        }
    }

    /// Truncates to the low 64 bits.
    pub fn low_u64(&self) -> u64 {
        self.0[0]
    }
}

impl Ord for U256 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        for i in (0..4).rev() {
            match self.0[i].cmp(&other.0[i]) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    }
}

impl PartialOrd for U256 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn be_bytes_round_trip() {
        let mut bytes = [0u8; 32];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = i as u8;
        }
        let v = U256::from_be_bytes(&bytes);
        assert_eq!(v.to_be_bytes(), bytes);
    }

    #[test]
    fn ordering_is_big_endian_numeric() {
        let small = U256::from_u64(5);
        let big = U256::from_u64(6);
        assert!(small < big);
        let mut high = [0u8; 32];
        high[0] = 1;
        assert!(U256::from_be_bytes(&high) > big);
    }

    #[test]
    fn division_matches_u128_reference() {
        let v = U256([0x0123_4567_89ab_cdef, 0xfedc_ba98_7654_3210, 0, 0]);
        let d = 1_000_003u64;
        let got = v.div_u64(d);
        let full = ((v.0[1] as u128) << 64) | v.0[0] as u128;
        let want = full / d as u128;
        assert_eq!(got.0[0] as u128 | ((got.0[1] as u128) << 64), want);
        assert_eq!(got.0[2], 0);
        assert_eq!(got.0[3], 0);
    }

    #[test]
    fn mul_then_div_round_trips() {
        let v = U256::MAX.div_u64(1000);
        assert_eq!(v.saturating_mul_u64(1000).div_u64(1000), v);
    }

    #[test]
    fn shifts() {
        let one = U256::from_u64(1);
        let shifted = one.checked_shl_bytes(31).unwrap();
        assert_eq!(shifted.bits(), 249);
        assert!(shifted.checked_shl_bytes(1).is_none());
        assert_eq!(shifted.shr_bytes(31), one);
    }
}
