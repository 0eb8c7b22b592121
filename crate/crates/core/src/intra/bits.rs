//! MSB-first bit packing with unsigned exp-Golomb codes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of bits written so far.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn put_bit(&mut self, bit: bool) {
        let used = (self.len % 8) as u32;
        if used == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("pushed above") |= 0x80 >> used;
        }
        self.len += 1;
    }

    /// Writes the low `n` bits of `value`, most significant first.
    pub fn put_bits(&mut self, value: u64, n: u32) {
        for i in (0..n).rev() {
            self.put_bit((value >> i) & 1 == 1);
        }
    }

    /// Unsigned exp-Golomb code of `v`.
    pub fn put_ue(&mut self, v: u32) {
        let x = v as u64 + 1;
        let nbits = 64 - x.leading_zeros();
        self.put_bits(0, nbits - 1);
        self.put_bits(x, nbits);
    }

    pub fn append(&mut self, other: &BitWriter) {
        if self.len % 8 == 0 {
            self.bytes.extend_from_slice(&other.bytes);
            self.len += other.len;
            return;
        }
        let mut r = BitReader::new(&other.bytes, other.len);
        while let Ok(b) = r.bit() {
            self.put_bit(b);
        }
    }

    /// Bytes with the final partial byte zero-filled.
    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// Length in bits of the exp-Golomb code of `v`.
pub fn ue_len(v: u32) -> u64 {
    let x = v as u64 + 1;
    let nbits = 64 - x.leading_zeros() as u64;
    2 * nbits - 1
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    limit: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    /// Reader over the first `limit` bits of `bytes`.
    pub fn new(bytes: &'a [u8], limit: u64) -> Self {
        let limit = limit.min(bytes.len() as u64 * 8);
        BitReader { bytes, limit, pos: 0 }
    }

    pub fn whole(bytes: &'a [u8]) -> Self {
        Self::new(bytes, bytes.len() as u64 * 8)
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.limit - self.pos
    }

    #[inline]
    pub fn bit(&mut self) -> Result<bool> {
        if self.pos >= self.limit {
            return Err(Error::bits(self.pos, "premature end of bitstream"));
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let b = (byte >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Ok(b)
    }

    pub fn bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | self.bit()? as u64;
        }
        Ok(v)
    }

    pub fn ue(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut zeros = 0u32;
        while !self.bit()? {
            zeros += 1;
            if zeros > 31 {
                return Err(Error::bits(start, "exp-Golomb prefix too long"));
            }
        }
        let rest = self.bits(zeros)?;
        Ok((((1u64 << zeros) | rest) - 1) as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_codes() {
        let mut w = BitWriter::new();
        w.put_ue(0); // 1
        w.put_ue(1); // 010
        w.put_ue(4); // 00101
        assert_eq!(w.len(), 9);
        assert_eq!(w.as_bytes(), &[0b1010_0010, 0b1000_0000]);
        assert_eq!(ue_len(0), 1);
        assert_eq!(ue_len(4), 5);
    }

    #[test]
    fn reading_past_end_reports_offset() {
        let bytes = [0u8];
        let mut r = BitReader::new(&bytes, 3);
        assert!(matches!(r.ue(), Err(Error::Bitstream { bit_offset: 3, .. })));
    }

    proptest! {
        #[test]
        fn ue_roundtrip(vals in proptest::collection::vec(0u32..100_000, 1..40), pre in 0u32..8) {
            let mut w = BitWriter::new();
            w.put_bits(0, pre);
            for &v in &vals { w.put_ue(v); }
            let expected: u64 = pre as u64 + vals.iter().map(|&v| ue_len(v)).sum::<u64>();
            prop_assert_eq!(w.len(), expected);
            let n = w.len();
            let bytes = w.into_bytes();
            let mut r = BitReader::new(&bytes, n);
            r.bits(pre).unwrap();
            for &v in &vals { prop_assert_eq!(r.ue().unwrap(), v); }
            prop_assert_eq!(r.remaining(), 0);
        }

        #[test]
        fn append_concatenates(a in proptest::collection::vec(any::<bool>(), 0..30),
                               b in proptest::collection::vec(any::<bool>(), 0..30)) {
            let mut wa = BitWriter::new();
            for &x in &a { wa.put_bit(x); }
            let mut wb = BitWriter::new();
            for &x in &b { wb.put_bit(x); }
            wa.append(&wb);
            let n = wa.len();
            let bytes = wa.into_bytes();
            let mut r = BitReader::new(&bytes, n);
            for &x in a.iter().chain(&b) { prop_assert_eq!(r.bit().unwrap(), x); }
        }
    }
}
