//! Unaligned PER primitives: MSB-first bit packing with no octet alignment
//! between fields.

use super::CodecError;

/// 16K octets, the fragment unit of the length determinant.
const FRAGMENT: usize = 16_384;

/// Bits needed for a constrained whole number with `range` distinct values.
pub fn bits_for_range(range: u64) -> u32 {
    if range <= 1 {
        0
    } else {
        64 - (range - 1).leading_zeros()
    }
}

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    buf: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn write_bit(&mut self, bit: bool) {
        if self.bit_len.is_multiple_of(8) {
            self.buf.push(0);
        }
        if bit {
            let last = self.buf.len() - 1;
            self.buf[last] |= 0x80 >> (self.bit_len % 8);
        }
        self.bit_len += 1;
    }

    /// Writes the low `n` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        for i in (0..n).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    pub fn write_octets(&mut self, bytes: &[u8]) {
        if self.bit_len.is_multiple_of(8) {
            self.buf.extend_from_slice(bytes);
            self.bit_len += bytes.len() * 8;
        } else {
            for &b in bytes {
                self.write_bits(u64::from(b), 8);
            }
        }
    }

    /// Constrained whole number in `lb..=ub`, encoded as `value - lb` in the
    /// minimum number of bits for the range.
    pub fn write_constrained(&mut self, field: &'static str, value: i64, lb: i64, ub: i64) -> Result<(), CodecError> {
        if value < lb || value > ub {
            return Err(CodecError::OutOfRange { field, detail: format!("{value} not in {lb}..={ub}") });
        }
        let range = (ub as i128 - lb as i128 + 1) as u64;
        self.write_bits((value as i128 - lb as i128) as u64, bits_for_range(range));
        Ok(())
    }

    /// Enumeration without extension marker, by index.
    pub fn write_enumerated(&mut self, index: usize, count: usize) {
        debug_assert!(index < count);
        self.write_bits(index as u64, bits_for_range(count as u64));
    }

    /// Presence bitmap preceding a sequence's root components.
    pub fn write_presence(&mut self, present: &[bool]) {
        for &p in present {
            self.write_bit(p);
        }
    }

    /// Length of a `SIZE(lb..ub)` list. Nothing is written when the size is fixed.
    pub fn write_constrained_length(&mut self, field: &'static str, len: usize, lb: usize, ub: usize) -> Result<(), CodecError> {
        debug_assert!(ub < 65_536);
        self.write_constrained(field, len as i64, lb as i64, ub as i64)
    }

    /// Unconstrained octet string: length determinant (fragmented past 16K)
    /// followed by the octets.
    pub fn write_unconstrained_octets(&mut self, bytes: &[u8]) {
        let mut rest = bytes;
        loop {
            let n = rest.len();
            if n < 128 {
                self.write_bits(n as u64, 8);
                self.write_octets(rest);
                return;
            }
            if n < FRAGMENT {
                self.write_bits(0b10 << 14 | n as u64, 16);
                self.write_octets(rest);
                return;
            }
            let m = (n / FRAGMENT).min(4);
            self.write_bits(0b1100_0000 | m as u64, 8);
            let (chunk, tail) = rest.split_at(m * FRAGMENT);
            self.write_octets(chunk);
            rest = tail;
        }
    }

    /// Pads to a whole octet with zero bits. An empty encoding is one zero octet.
    pub fn finish(self) -> Vec<u8> {
        if self.buf.is_empty() {
            vec![0]
        } else {
            self.buf
        }
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        BitReader { data, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining_bits(&self) -> usize {
        self.data.len() * 8 - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool, CodecError> {
        if self.pos >= self.data.len() * 8 {
            return Err(CodecError::Truncated { bit: self.pos });
        }
        let b = self.data[self.pos / 8] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(b)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64, CodecError> {
        debug_assert!(n <= 64);
        if self.remaining_bits() < n as usize {
            return Err(CodecError::Truncated { bit: self.pos });
        }
        let mut v = 0u64;
        for _ in 0..n {
            v = v << 1 | u64::from(self.read_bit()?);
        }
        Ok(v)
    }

    pub fn read_octets(&mut self, n: usize) -> Result<Vec<u8>, CodecError> {
        if self.remaining_bits() < n * 8 {
            return Err(CodecError::Truncated { bit: self.pos });
        }
        if self.pos.is_multiple_of(8) {
            let start = self.pos / 8;
            self.pos += n * 8;
            return Ok(self.data[start..start + n].to_vec());
        }
        (0..n).map(|_| self.read_bits(8).map(|b| b as u8)).collect()
    }

    pub fn read_constrained(&mut self, field: &'static str, lb: i64, ub: i64) -> Result<i64, CodecError> {
        let range = (ub as i128 - lb as i128 + 1) as u64;
        let raw = self.read_bits(bits_for_range(range))?;
        if raw >= range {
            return Err(CodecError::ConstraintViolation { field, detail: format!("offset {raw} exceeds range {range}") });
        }
        Ok((lb as i128 + raw as i128) as i64)
    }

    pub fn read_enumerated(&mut self, field: &'static str, count: usize) -> Result<usize, CodecError> {
        Ok(self.read_constrained(field, 0, count as i64 - 1)? as usize)
    }

    pub fn read_presence(&mut self, n: usize) -> Result<Vec<bool>, CodecError> {
        (0..n).map(|_| self.read_bit()).collect()
    }

    pub fn read_constrained_length(&mut self, field: &'static str, lb: usize, ub: usize) -> Result<usize, CodecError> {
        Ok(self.read_constrained(field, lb as i64, ub as i64)? as usize)
    }

    pub fn read_unconstrained_octets(&mut self, field: &'static str) -> Result<Vec<u8>, CodecError> {
        let mut out = Vec::new();
        loop {
            let first = self.read_bits(8)? as usize;
            if first & 0x80 == 0 {
                out.extend(self.read_octets(first)?);
                return Ok(out);
            }
            if first & 0x40 == 0 {
                let n = (first & 0x3f) << 8 | self.read_bits(8)? as usize;
                out.extend(self.read_octets(n)?);
                return Ok(out);
            }
            let m = first & 0x3f;
            if !(1..=4).contains(&m) {
                return Err(CodecError::ConstraintViolation { field, detail: format!("fragment multiplier {m}") });
            }
            out.extend(self.read_octets(m * FRAGMENT)?);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_bits() {
        assert_eq!(bits_for_range(1), 0);
        assert_eq!(bits_for_range(2), 1);
        assert_eq!(bits_for_range(128), 7);
        assert_eq!(bits_for_range(129), 8);
        assert_eq!(bits_for_range(28_801), 15);
        assert_eq!(bits_for_range(1_800_000_002), 31);
        assert_eq!(bits_for_range(3_600_000_001), 32);
    }

    #[test]
    fn constrained_round_trip_at_bounds() {
        let mut w = BitWriter::new();
        w.write_constrained("a", -4096, -4096, 61439).unwrap();
        w.write_constrained("b", 61439, -4096, 61439).unwrap();
        w.write_constrained("c", 5, 5, 5).unwrap();
        w.write_constrained("d", 1_800_000_001, -1_799_999_999, 1_800_000_001).unwrap();
        assert_eq!(w.bit_len(), 16 + 16 + 32);
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read_constrained("a", -4096, 61439).unwrap(), -4096);
        assert_eq!(r.read_constrained("b", -4096, 61439).unwrap(), 61439);
        assert_eq!(r.read_constrained("c", 5, 5).unwrap(), 5);
        assert_eq!(r.read_constrained("d", -1_799_999_999, 1_800_000_001).unwrap(), 1_800_000_001);
    }

    #[test]
    fn out_of_range_names_field() {
        let mut w = BitWriter::new();
        match w.write_constrained("msg_count", 128, 0, 127) {
            Err(CodecError::OutOfRange { field, .. }) => assert_eq!(field, "msg_count"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn offset_beyond_range_is_violation() {
        // 0..=5 takes 3 bits; 0b111 = 7 is not a legal offset.
        let mut r = BitReader::new(&[0b1110_0000]);
        assert!(matches!(r.read_enumerated("e", 6), Err(CodecError::ConstraintViolation { .. })));
    }

    #[test]
    fn unaligned_octets() {
        let mut w = BitWriter::new();
        w.write_bit(true);
        w.write_octets(&[0xff, 0x00]);
        assert_eq!(w.finish(), vec![0xff, 0x80, 0x00]);
    }

    #[test]
    fn presence_bitmap() {
        let mut w = BitWriter::new();
        w.write_presence(&[true, false, true]);
        w.write_bits(0b1, 1);
        let bytes = w.finish();
        assert_eq!(bytes, vec![0b1011_0000]);
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read_presence(3).unwrap(), vec![true, false, true]);
    }

    #[test]
    fn empty_encoding_is_one_octet() {
        assert_eq!(BitWriter::new().finish(), vec![0]);
    }

    #[test]
    fn truncation() {
        let mut r = BitReader::new(&[]);
        assert!(matches!(r.read_bits(1), Err(CodecError::Truncated { bit: 0 })));
        let mut r = BitReader::new(&[0x05, 1, 2]);
        assert!(matches!(r.read_unconstrained_octets("v"), Err(CodecError::Truncated { .. })));
    }

    #[test]
    fn fragmented_lengths_round_trip() {
        for n in [0usize, 127, 128, 16_383, 16_384, 16_385, 65_536, 65_536 * 2 + 16_384 + 3] {
            let data: Vec<u8> = (0..n).map(|i| (i * 7) as u8).collect();
            let mut w = BitWriter::new();
            w.write_bit(true);
            w.write_unconstrained_octets(&data);
            let bytes = w.finish();
            let mut r = BitReader::new(&bytes);
            assert!(r.read_bit().unwrap());
            assert_eq!(r.read_unconstrained_octets("v").unwrap(), data, "n = {n}");
        }
    }
}
