//! Reversible difference-expansion watermarking.
//!
//! Pixels are paired horizontally, left to right and top to bottom; on odd
//! widths the last column is never touched. Each pair `(x, y)` maps to an
//! integer average `l` and a difference `h`. A pair is *expandable* when
//! `h' = 2h + b` stays representable for both bit values, *changeable*
//! when `h' = 2*floor(h/2) + b` does. Every expandable pair is expanded and
//! every other changeable pair has its difference LSB replaced. Each
//! changeable pair therefore carries one bit, its *slot*.
//!
//! # Bitstream
//!
//! Slot bits are read in pair scan order, MSB-first within bytes:
//!
//! ```text
//! location map  flag (1) | body length in bits (32) | body     see `location_map`
//! saved LSBs    original difference LSB of each changeable, non-expanded pair
//! data          caller bytes
//! padding       zero bits up to the last slot
//! ```
//!
//! Changeability survives any slot write, so the extractor finds the same
//! slots on the marked image without side information.

mod bits;
mod location_map;

use crate::image_io::GrayImage;
use bits::{BitReader, BitWriter};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WatermarkError {
    #[error("OutOfRange: l={l}, h={h} does not map back into [0, 255]")]
    OutOfRange { l: i32, h: i32 },
    #[error("PayloadTooLarge: {requested} data bits requested, capacity is {capacity}")]
    PayloadTooLarge { requested: usize, capacity: usize },
    #[error("ImageTooNarrow: width {width} leaves no pixel pair")]
    ImageTooNarrow { width: usize },
    #[error("MalformedStream: {0}")]
    MalformedStream(String),
}

impl WatermarkError {
    pub fn name(&self) -> &'static str {
        match self {
            WatermarkError::OutOfRange { .. } => "OutOfRange",
            WatermarkError::PayloadTooLarge { .. } => "PayloadTooLarge",
            WatermarkError::ImageTooNarrow { .. } => "ImageTooNarrow",
            WatermarkError::MalformedStream(_) => "MalformedStream",
        }
    }
}

/// Integer average and difference of a pixel pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DiffPair {
    pub l: i32,
    pub h: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZoneClass {
    Expandable,
    ChangeableOnly,
    Unchangeable,
}

impl ZoneClass {
    pub fn is_changeable(self) -> bool {
        !matches!(self, ZoneClass::Unchangeable)
    }
}

#[inline]
fn floor_half(v: i32) -> i32 {
    v.div_euclid(2)
}

/// Largest |h| that still reconstructs inside [0, 255] for average `l`.
#[inline]
pub fn difference_bound(l: i32) -> i32 {
    (2 * (255 - l)).min(2 * l + 1)
}

#[inline]
fn fits(l: i32, h: i32) -> bool {
    (0..=255).contains(&l) && h.abs() <= difference_bound(l)
}

pub fn forward_transform(x: u8, y: u8) -> DiffPair {
    let (x, y) = (i32::from(x), i32::from(y));
    DiffPair {
        l: floor_half(x + y),
        h: x - y,
    }
}

pub fn inverse_transform(p: DiffPair) -> Result<(u8, u8), WatermarkError> {
    if !fits(p.l, p.h) {
        return Err(WatermarkError::OutOfRange { l: p.l, h: p.h });
    }
    let x = p.l + floor_half(p.h + 1);
    let y = p.l - floor_half(p.h);
    Ok((x as u8, y as u8))
}

/// Difference after expanding `h` with bit `b`.
#[inline]
pub fn expanded(h: i32, b: bool) -> i32 {
    2 * h + i32::from(b)
}

/// Difference after replacing the LSB of `h` with bit `b`.
#[inline]
pub fn lsb_replaced(h: i32, b: bool) -> i32 {
    2 * floor_half(h) + i32::from(b)
}

#[inline]
fn difference_lsb(h: i32) -> bool {
    h.rem_euclid(2) == 1
}

pub fn classify(p: DiffPair) -> ZoneClass {
    let bound = difference_bound(p.l);
    let ok = |f: fn(i32, bool) -> i32| [false, true].iter().all(|&b| f(p.h, b).abs() <= bound);
    if ok(expanded) {
        ZoneClass::Expandable
    } else if ok(lsb_replaced) {
        ZoneClass::ChangeableOnly
    } else {
        ZoneClass::Unchangeable
    }
}

fn pair_count(img: &GrayImage) -> usize {
    img.width() / 2 * img.height()
}

/// Index into the pixel buffer of the left pixel of pair `i`.
#[inline]
fn left_pixel(width: usize, i: usize) -> usize {
    let per_row = width / 2;
    (i / per_row) * width + 2 * (i % per_row)
}

fn diff_pairs(img: &GrayImage) -> Vec<DiffPair> {
    let px = img.pixels();
    (0..pair_count(img))
        .map(|i| {
            let at = left_pixel(img.width(), i);
            forward_transform(px[at], px[at + 1])
        })
        .collect()
}

fn check_width(img: &GrayImage) -> Result<(), WatermarkError> {
    if img.width() < 2 {
        Err(WatermarkError::ImageTooNarrow { width: img.width() })
    } else {
        Ok(())
    }
}

struct Plan {
    pairs: Vec<DiffPair>,
    zones: Vec<ZoneClass>,
    map: Vec<bool>,
    slots: usize,
    map_bits: usize,
    saved_bits: usize,
}

impl Plan {
    fn new(img: &GrayImage) -> Self {
        let pairs = diff_pairs(img);
        let zones: Vec<ZoneClass> = pairs.iter().map(|&p| classify(p)).collect();
        let map: Vec<bool> = zones.iter().map(|&z| z == ZoneClass::Expandable).collect();
        let expandable = map.iter().filter(|&&b| b).count();
        let changeable_only = zones
            .iter()
            .filter(|&&z| z == ZoneClass::ChangeableOnly)
            .count();
        let map_bits = location_map::encoded_len(&map);
        Plan {
            pairs,
            zones,
            map,
            slots: expandable + changeable_only,
            map_bits,
            saved_bits: changeable_only,
        }
    }

    /// Signed data room: slots minus map and saved-LSB overhead.
    fn room(&self) -> isize {
        self.slots as isize - self.map_bits as isize - self.saved_bits as isize
    }
}

/// Number of data bits `embed` can carry in `img`.
pub fn capacity(img: &GrayImage) -> usize {
    if img.width() < 2 {
        return 0;
    }
    Plan::new(img).room().max(0) as usize
}

/// Hides `data` in `img` and returns the marked image.
pub fn embed(img: &GrayImage, data: &[u8]) -> Result<GrayImage, WatermarkError> {
    check_width(img)?;
    let plan = Plan::new(img);
    let requested = 8 * data.len();
    if requested as isize > plan.room() {
        return Err(WatermarkError::PayloadTooLarge {
            requested,
            capacity: plan.room().max(0) as usize,
        });
    }

    let mut w = BitWriter::with_capacity(plan.slots);
    location_map::encode(&plan.map, &mut w);
    for (p, z) in plan.pairs.iter().zip(&plan.zones) {
        if *z == ZoneClass::ChangeableOnly {
            w.push(difference_lsb(p.h));
        }
    }
    w.push_bytes(data);
    debug_assert!(w.len() <= plan.slots);
    let mut stream = w.into_bits();
    stream.resize(plan.slots, false);

    let mut out = img.clone();
    let width = img.width();
    let px = out.pixels_mut();
    let mut bits = stream.into_iter();
    for (i, (p, z)) in plan.pairs.iter().zip(&plan.zones).enumerate() {
        let h = match z {
            ZoneClass::Expandable => expanded(p.h, bits.next().expect("one slot per pair")),
            ZoneClass::ChangeableOnly => lsb_replaced(p.h, bits.next().expect("one slot per pair")),
            ZoneClass::Unchangeable => continue,
        };
        let (x, y) = inverse_transform(DiffPair { l: p.l, h })
            .expect("zone test guarantees representable pixels");
        let at = left_pixel(width, i);
        px[at] = x;
        px[at + 1] = y;
    }
    Ok(out)
}

/// Where each part of the embedded stream sits in a marked image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamLayout {
    width: usize,
    slot_pairs: Vec<usize>,
    map_bits: usize,
    saved_bits: usize,
}

impl StreamLayout {
    pub fn slots(&self) -> usize {
        self.slot_pairs.len()
    }

    /// Slot index of the first data bit.
    pub fn data_start(&self) -> usize {
        self.map_bits + self.saved_bits
    }

    pub fn map_bits(&self) -> usize {
        self.map_bits
    }

    pub fn saved_bits(&self) -> usize {
        self.saved_bits
    }

    /// (column, row) of the left pixel of the pair holding `slot`.
    pub fn slot_pixel(&self, slot: usize) -> (usize, usize) {
        let at = left_pixel(self.width, self.slot_pairs[slot]);
        (at % self.width, at / self.width)
    }
}

struct Decoded {
    layout: StreamLayout,
    pairs: Vec<DiffPair>,
    changeable: Vec<bool>,
    map: Vec<bool>,
    saved: Vec<bool>,
    data: Vec<u8>,
}

fn decode(img: &GrayImage) -> Result<Decoded, WatermarkError> {
    check_width(img)?;
    let pairs = diff_pairs(img);
    let changeable: Vec<bool> = pairs.iter().map(|&p| classify(p).is_changeable()).collect();
    let slot_pairs: Vec<usize> = (0..pairs.len()).filter(|&i| changeable[i]).collect();
    let stream: Vec<bool> = slot_pairs
        .iter()
        .map(|&i| difference_lsb(pairs[i].h))
        .collect();

    let mut r = BitReader::new(&stream);
    let map = location_map::decode(&mut r, pairs.len())?;
    let map_bits = r.position();
    let mut expanded_count = 0;
    for (i, &m) in map.iter().enumerate() {
        if m {
            if !changeable[i] {
                return Err(WatermarkError::MalformedStream(format!(
                    "location map marks unchangeable pair {i} as expanded"
                )));
            }
            expanded_count += 1;
        }
    }
    let saved_bits = slot_pairs.len() - expanded_count;
    let saved = r
        .take(saved_bits)
        .ok_or_else(|| {
            WatermarkError::MalformedStream(format!(
                "{saved_bits} saved LSBs needed, {} slots left",
                r.remaining()
            ))
        })?
        .to_vec();
    let data = r.remaining_bytes();
    Ok(Decoded {
        layout: StreamLayout {
            width: img.width(),
            slot_pairs,
            map_bits,
            saved_bits,
        },
        pairs,
        changeable,
        map,
        saved,
        data,
    })
}

/// Data recovered from a marked image together with the restored original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    /// Every whole byte after the overhead, embedded data first, then the
    /// zero padding. Callers delimit their own payload.
    pub data: Vec<u8>,
    pub original: GrayImage,
}

pub fn extract(img: &GrayImage) -> Result<Extracted, WatermarkError> {
    let (data, original) = extract_parts(img)?;
    Ok(Extracted {
        data,
        original: original?,
    })
}

/// The embedded bytes only, without restoring pixels.
pub fn extract_data(img: &GrayImage) -> Result<Vec<u8>, WatermarkError> {
    decode(img).map(|d| d.data)
}

/// Decoded data plus the restoration result, kept apart so callers can
/// validate the data before a restoration failure hides the cause.
pub(crate) fn extract_parts(
    img: &GrayImage,
) -> Result<(Vec<u8>, Result<GrayImage, WatermarkError>), WatermarkError> {
    let d = decode(img)?;
    let original = restore(img, &d);
    Ok((d.data, original))
}

fn restore(img: &GrayImage, d: &Decoded) -> Result<GrayImage, WatermarkError> {
    let mut original = img.clone();
    let width = img.width();
    let px = original.pixels_mut();
    let mut saved = d.saved.iter();
    for (i, p) in d.pairs.iter().enumerate() {
        if !d.changeable[i] {
            continue;
        }
        let h = if d.map[i] {
            floor_half(p.h)
        } else {
            lsb_replaced(p.h, *saved.next().expect("saved count matches"))
        };
        let (x, y) = inverse_transform(DiffPair { l: p.l, h }).map_err(|_| {
            WatermarkError::MalformedStream(format!("pair {i} restores out of range"))
        })?;
        let at = left_pixel(width, i);
        px[at] = x;
        px[at + 1] = y;
    }
    Ok(original)
}

/// Slot layout of a marked image, for locating payload bits on pixels.
pub fn stream_layout(img: &GrayImage) -> Result<StreamLayout, WatermarkError> {
    decode(img).map(|d| d.layout)
}
