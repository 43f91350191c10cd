//! Location map framing: flag bit (0 raw, 1 RLE), 32-bit body length in
//! bits, then the body.
//!
//! The raw body is one bit per pair. The RLE body is a sequence of 16-bit
//! run lengths alternating between `false` and `true`, starting with
//! `false`; runs longer than 65535 are split by a zero-length run of the
//! other value. The shorter body wins, raw on ties.

use super::bits::{BitReader, BitWriter};
use super::WatermarkError;

pub(crate) const FRAME_OVERHEAD: usize = 1 + 32;
const RUN_BITS: u32 = 16;
const MAX_RUN: usize = u16::MAX as usize;

fn runs(map: &[bool]) -> Vec<u16> {
    let mut out = Vec::new();
    let mut current = false;
    let mut i = 0;
    while i < map.len() {
        let mut run = 0;
        while i < map.len() && map[i] == current {
            run += 1;
            i += 1;
        }
        while run > MAX_RUN {
            out.push(MAX_RUN as u16);
            out.push(0);
            run -= MAX_RUN;
        }
        out.push(run as u16);
        current = !current;
    }
    out
}

fn rle_body_len(map: &[bool]) -> usize {
    // count without allocating
    let mut bits = 0;
    let mut current = false;
    let mut i = 0;
    while i < map.len() {
        let start = i;
        while i < map.len() && map[i] == current {
            i += 1;
        }
        let run = i - start;
        let pieces = if run == 0 { 1 } else { run.div_ceil(MAX_RUN) };
        // each extra piece costs the piece plus a zero separator
        bits += (2 * pieces - 1) * RUN_BITS as usize;
        current = !current;
    }
    bits
}

/// Total framed size in bits for `map`.
pub(crate) fn encoded_len(map: &[bool]) -> usize {
    FRAME_OVERHEAD + map.len().min(rle_body_len(map))
}

pub(crate) fn encode(map: &[bool], out: &mut BitWriter) {
    let start = out.len();
    if rle_body_len(map) < map.len() {
        let runs = runs(map);
        out.push(true);
        out.push_uint((runs.len() * RUN_BITS as usize) as u32, 32);
        for r in runs {
            out.push_uint(u32::from(r), RUN_BITS);
        }
    } else {
        out.push(false);
        out.push_uint(map.len() as u32, 32);
        out.extend(map);
    }
    debug_assert_eq!(out.len() - start, encoded_len(map));
}

pub(crate) fn decode(r: &mut BitReader<'_>, pairs: usize) -> Result<Vec<bool>, WatermarkError> {
    let malformed = |m: String| WatermarkError::MalformedStream(m);
    let flag = r
        .read_uint(1)
        .ok_or_else(|| malformed("stream too short for map flag".into()))?;
    let len = r
        .read_uint(32)
        .ok_or_else(|| malformed("stream too short for map length".into()))? as usize;
    if len > r.remaining() {
        return Err(malformed(format!(
            "map length {len} exceeds {} remaining slots",
            r.remaining()
        )));
    }
    let body = r.take(len).expect("length checked");
    if flag == 0 {
        if len != pairs {
            return Err(malformed(format!(
                "raw map has {len} bits for {pairs} pairs"
            )));
        }
        return Ok(body.to_vec());
    }
    if !len.is_multiple_of(RUN_BITS as usize) {
        return Err(malformed(format!(
            "RLE map length {len} not a multiple of 16"
        )));
    }
    let mut map = Vec::with_capacity(pairs);
    let mut current = false;
    let mut br = BitReader::new(body);
    while let Some(run) = br.read_uint(RUN_BITS) {
        let run = run as usize;
        if map.len() + run > pairs {
            return Err(malformed("RLE map decodes past pair count".into()));
        }
        map.resize(map.len() + run, current);
        current = !current;
    }
    if map.len() != pairs {
        return Err(malformed(format!(
            "RLE map covers {} of {pairs} pairs",
            map.len()
        )));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round_trip(map: &[bool]) -> Vec<bool> {
        let mut w = BitWriter::default();
        encode(map, &mut w);
        let bits = w.into_bits();
        assert_eq!(bits.len(), encoded_len(map));
        let mut r = BitReader::new(&bits);
        let out = decode(&mut r, map.len()).unwrap();
        assert_eq!(r.remaining(), 0);
        out
    }

    #[test]
    fn all_true_uses_rle() {
        let map = vec![true; 1000];
        // zero-length leading run, then the run of ones
        assert_eq!(rle_body_len(&map), 32);
        assert_eq!(runs(&map), vec![0, 1000]);
        assert_eq!(encoded_len(&map), 33 + 32);
        assert_eq!(round_trip(&map), map);
    }

    #[test]
    fn long_runs_split() {
        let map = vec![false; 70_000];
        assert_eq!(runs(&map), vec![65535, 0, 4465]);
        assert_eq!(rle_body_len(&map), 48);
        assert_eq!(round_trip(&map), map);
        let mut map = vec![true; 65535 * 2];
        map.push(false);
        assert_eq!(runs(&map), vec![0, 65535, 0, 65535, 1]);
        assert_eq!(rle_body_len(&map), 80);
        assert_eq!(round_trip(&map), map);
    }

    #[test]
    fn alternating_uses_raw() {
        let map: Vec<bool> = (0..64).map(|i| i % 2 == 1).collect();
        assert_eq!(encoded_len(&map), 33 + 64);
        let mut w = BitWriter::default();
        encode(&map, &mut w);
        assert!(!w.into_bits()[0]);
        assert_eq!(round_trip(&map), map);
    }

    #[test]
    fn framing_errors() {
        let mut w = BitWriter::default();
        w.push(false);
        w.push_uint(10, 32);
        w.extend(&[false; 10]);
        let bits = w.into_bits();
        assert!(decode(&mut BitReader::new(&bits), 11).is_err());
        assert!(decode(&mut BitReader::new(&bits[..20]), 10).is_err());

        let mut w = BitWriter::default();
        w.push(true);
        w.push_uint(32, 32);
        w.push_uint(3, 16);
        w.push_uint(9, 16);
        let bits = w.into_bits();
        assert!(decode(&mut BitReader::new(&bits), 5).is_err());
        assert_eq!(decode(&mut BitReader::new(&bits), 12).unwrap().len(), 12);
    }

    proptest! {
        #[test]
        fn round_trips(map in proptest::collection::vec(prop_oneof![9 => Just(true), 1 => Just(false)], 0..3000)) {
            prop_assert_eq!(round_trip(&map), map);
        }
    }
}
