//! MSB-first bit buffers.

#[derive(Debug, Default, Clone)]
pub(crate) struct BitWriter {
    bits: Vec<bool>,
}

impl BitWriter {
    pub fn with_capacity(n: usize) -> Self {
        BitWriter {
            bits: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_uint(&mut self, value: u32, width: u32) {
        debug_assert!(width <= 32);
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
    }

    pub fn push_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.push_uint(u32::from(b), 8);
        }
    }

    pub fn extend(&mut self, bits: &[bool]) {
        self.bits.extend_from_slice(bits);
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }
}

pub(crate) struct BitReader<'a> {
    bits: &'a [bool],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bits: &'a [bool]) -> Self {
        BitReader { bits, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Option<&'a [bool]> {
        if n > self.remaining() {
            return None;
        }
        let s = &self.bits[self.pos..self.pos + n];
        self.pos += n;
        Some(s)
    }

    pub fn read_uint(&mut self, width: u32) -> Option<u32> {
        let s = self.take(width as usize)?;
        Some(s.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b)))
    }

    /// Packs every remaining whole byte; a trailing partial byte is dropped.
    pub fn remaining_bytes(&mut self) -> Vec<u8> {
        let n = self.remaining() / 8;
        let out = self.bits[self.pos..self.pos + 8 * n]
            .chunks_exact(8)
            .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | u8::from(b)))
            .collect();
        self.pos = self.bits.len();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first() {
        let mut w = BitWriter::default();
        w.push_bytes(&[0b1000_0001]);
        w.push_uint(0x0102, 16);
        let bits = w.into_bits();
        assert_eq!(
            &bits[..8],
            &[true, false, false, false, false, false, false, true]
        );
        let mut r = BitReader::new(&bits);
        assert_eq!(r.read_uint(8), Some(0x81));
        assert_eq!(r.read_uint(16), Some(0x0102));
        assert_eq!(r.read_uint(1), None);
    }

    #[test]
    fn partial_trailing_byte_dropped() {
        let mut w = BitWriter::default();
        w.push_bytes(&[0xAB, 0xCD]);
        w.push(true);
        let bits = w.into_bits();
        let mut r = BitReader::new(&bits);
        assert_eq!(r.read_uint(4), Some(0xA));
        assert_eq!(r.remaining_bytes(), vec![0xBC]);
        assert_eq!(r.remaining(), 0);
    }
}
