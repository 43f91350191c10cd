//! The record carried inside a watermarked image.
//!
//! Wire format, all integers big-endian:
//!
//! ```text
//! header (16 bytes)
//!   "LBPW" | version 0x01 | flags 0x00 | body length u32 | CRC-32 of body u32 | 0x0000
//! body
//!   descriptor  256 x u32
//!   locator     u16 length + UTF-8
//!   patient_id  u16 length + UTF-8
//!   name        u16 length + UTF-8
//!   birthday    year u16 | month u8 | day u8
//!   diagnostic  u16 length + UTF-8
//! ```
//!
//! The CRC is CRC-32/IEEE (reflected, as used by zlib and Ethernet).

use crate::descriptor::ChlbpDescriptor;
use crate::lbp::LBP_BINS;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"LBPW";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
const DESCRIPTOR_LEN: usize = LBP_BINS * 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PayloadError {
    #[error("FieldTooLong: {field} is {len} bytes, limit is 65535")]
    FieldTooLong { field: &'static str, len: usize },
    #[error("BadMagic: payload does not start with \"LBPW\"")]
    BadMagic,
    #[error("UnsupportedVersion: version {version}, flags {flags:#04x}")]
    UnsupportedVersion { version: u8, flags: u8 },
    #[error("LengthMismatch: header declares {declared} body bytes, {available} available")]
    LengthMismatch { declared: usize, available: usize },
    #[error("ChecksumMismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("MalformedBody: {0}")]
    MalformedBody(String),
}

impl PayloadError {
    pub fn name(&self) -> &'static str {
        match self {
            PayloadError::FieldTooLong { .. } => "FieldTooLong",
            PayloadError::BadMagic => "BadMagic",
            PayloadError::UnsupportedVersion { .. } => "UnsupportedVersion",
            PayloadError::LengthMismatch { .. } => "LengthMismatch",
            PayloadError::ChecksumMismatch { .. } => "ChecksumMismatch",
            PayloadError::MalformedBody(_) => "MalformedBody",
        }
    }
}

/// Calendar date with range-checked month and day (no per-month validation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Birthday {
    year: u16,
    month: u8,
    day: u8,
}

impl Birthday {
    pub fn new(year: u16, month: u8, day: u8) -> Option<Self> {
        ((1..=12).contains(&month) && (1..=31).contains(&day)).then_some(Birthday {
            year,
            month,
            day,
        })
    }

    pub fn year(&self) -> u16 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    pub fn day(&self) -> u8 {
        self.day
    }
}

impl fmt::Display for Birthday {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid date {0:?}, expected YYYY-MM-DD")]
pub struct DateParseError(String);

impl FromStr for Birthday {
    type Err = DateParseError;

    /// Accepts ISO `YYYY-MM-DD` only.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DateParseError(s.to_string());
        let b = s.as_bytes();
        if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
            return Err(err());
        }
        let digits = |r: std::ops::Range<usize>| -> Result<u32, DateParseError> {
            let part = &s[r];
            if !part.bytes().all(|c| c.is_ascii_digit()) {
                return Err(err());
            }
            part.parse().map_err(|_| err())
        };
        let year = u16::try_from(digits(0..4)?).map_err(|_| err())?;
        let month = digits(5..7)? as u8;
        let day = digits(8..10)? as u8;
        Birthday::new(year, month, day).ok_or_else(err)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub name: String,
    pub birthday: Birthday,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatermarkPayload {
    pub descriptor: ChlbpDescriptor,
    /// Path of the watermarked file in the store.
    pub locator: String,
    pub patient: PatientRecord,
}

fn put_text(out: &mut Vec<u8>, field: &'static str, text: &str) -> Result<(), PayloadError> {
    let len = u16::try_from(text.len()).map_err(|_| PayloadError::FieldTooLong {
        field,
        len: text.len(),
    })?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(text.as_bytes());
    Ok(())
}

pub fn serialize_payload(p: &WatermarkPayload) -> Result<Vec<u8>, PayloadError> {
    let mut body = Vec::with_capacity(DESCRIPTOR_LEN + 64);
    for &bin in p.descriptor.bins() {
        body.extend_from_slice(&bin.to_be_bytes());
    }
    put_text(&mut body, "locator", &p.locator)?;
    put_text(&mut body, "patient_id", &p.patient.patient_id)?;
    put_text(&mut body, "name", &p.patient.name)?;
    body.extend_from_slice(&p.patient.birthday.year.to_be_bytes());
    body.push(p.patient.birthday.month);
    body.push(p.patient.birthday.day);
    put_text(&mut body, "diagnostic", &p.patient.diagnostic)?;

    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(0);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&crc32fast::hash(&body).to_be_bytes());
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&body);
    Ok(out)
}

struct BodyReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BodyReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], PayloadError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| PayloadError::MalformedBody(format!("{what} runs past end of body")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, PayloadError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn text(&mut self, what: &str) -> Result<String, PayloadError> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| PayloadError::MalformedBody(format!("{what} is not UTF-8")))
    }
}

/// Parses a payload at the start of `bytes`, ignoring anything after the
/// declared body. Returns the payload and the number of bytes it occupied.
///
/// This is the entry point for data recovered from an image, where the
/// payload is followed by padding.
pub fn parse_payload_prefix(bytes: &[u8]) -> Result<(WatermarkPayload, usize), PayloadError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(PayloadError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(PayloadError::LengthMismatch {
            declared: 0,
            available: 0,
        });
    }
    let (version, flags) = (bytes[4], bytes[5]);
    if version != VERSION || flags != 0 {
        return Err(PayloadError::UnsupportedVersion { version, flags });
    }
    let declared = u32::from_be_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let stored = u32::from_be_bytes(bytes[10..14].try_into().unwrap());
    let available = bytes.len() - HEADER_LEN;
    if declared > available {
        return Err(PayloadError::LengthMismatch {
            declared,
            available,
        });
    }
    let body = &bytes[HEADER_LEN..HEADER_LEN + declared];
    let computed = crc32fast::hash(body);
    if computed != stored {
        return Err(PayloadError::ChecksumMismatch { stored, computed });
    }
    if bytes[14..16] != [0, 0] {
        return Err(PayloadError::MalformedBody(
            "reserved header bytes set".into(),
        ));
    }

    let mut r = BodyReader { buf: body, pos: 0 };
    let raw = r.take(DESCRIPTOR_LEN, "descriptor")?;
    let mut bins = [0u32; LBP_BINS];
    for (bin, chunk) in bins.iter_mut().zip(raw.chunks_exact(4)) {
        *bin = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    let locator = r.text("locator")?;
    let patient_id = r.text("patient_id")?;
    let name = r.text("name")?;
    let year = r.u16("birthday")?;
    let md = r.take(2, "birthday")?;
    let birthday = Birthday::new(year, md[0], md[1]).ok_or_else(|| {
        PayloadError::MalformedBody(format!("invalid birthday {year}-{}-{}", md[0], md[1]))
    })?;
    let diagnostic = r.text("diagnostic")?;
    if r.pos != body.len() {
        return Err(PayloadError::MalformedBody(format!(
            "{} trailing body bytes",
            body.len() - r.pos
        )));
    }
    Ok((
        WatermarkPayload {
            descriptor: ChlbpDescriptor::from_bins(bins),
            locator,
            patient: PatientRecord {
                patient_id,
                name,
                birthday,
                diagnostic,
            },
        },
        HEADER_LEN + declared,
    ))
}

/// Parses exactly one serialized payload; the length must match the header.
pub fn parse_payload(bytes: &[u8]) -> Result<WatermarkPayload, PayloadError> {
    let (payload, used) = parse_payload_prefix(bytes)?;
    if used != bytes.len() {
        return Err(PayloadError::LengthMismatch {
            declared: used - HEADER_LEN,
            available: bytes.len() - HEADER_LEN,
        });
    }
    Ok(payload)
}
