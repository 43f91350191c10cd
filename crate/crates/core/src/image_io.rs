//! 8-bit grayscale raster and binary PGM (P5) codec.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("BadMagic: expected \"P5\"")]
    BadMagic,
    #[error("BadHeader: {0}")]
    BadHeader(String),
    #[error("TruncatedData: expected {expected} pixel bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
}

impl PgmError {
    pub fn name(&self) -> &'static str {
        match self {
            PgmError::BadMagic => "BadMagic",
            PgmError::BadHeader(_) => "BadHeader",
            PgmError::TruncatedData { .. } => "TruncatedData",
        }
    }
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    /// Builds an image from row-major pixels. Returns `None` when either
    /// dimension is zero or the buffer length does not match.
    pub fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        if width == 0 || height == 0 || width.checked_mul(height)? != pixels.len() {
            return None;
        }
        Some(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Image of the given size filled with `value`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Image whose pixel at (x, y) is `f(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<usize, PgmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmError::BadHeader(format!("{field} is not a number")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::BadHeader(format!("{field} out of range")))
    }
}

/// Decodes a binary PGM.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::BadMagic);
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if !cur
        .bytes
        .get(cur.pos)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(PgmError::BadMagic);
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader("zero dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::BadHeader(format!(
            "maxval {maxval} not in 1..=255"
        )));
    }
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(PgmError::BadHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| PgmError::BadHeader("dimensions overflow".into()))?;
    let data = &bytes[cur.pos..];
    if data.len() < expected {
        return Err(PgmError::TruncatedData {
            expected,
            found: data.len(),
        });
    }
    Ok(GrayImage {
        width,
        height,
        pixels: data[..expected].to_vec(),
    })
}

/// Encodes an image as canonical binary PGM: `P5\n<w> <h>\n255\n` + raster.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_minimal_file() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255, 7]);
        let img = read_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 128, 255, 7]);
    }

    #[test]
    fn rejects_other_magic() {
        assert_eq!(read_pgm(b"P6\n1 1\n255\n\0\0\0"), Err(PgmError::BadMagic));
        assert_eq!(read_pgm(b"P"), Err(PgmError::BadMagic));
        assert_eq!(read_pgm(b"P55 1 1 255 x"), Err(PgmError::BadMagic));
    }

    #[test]
    fn skips_header_comments() {
        let mut bytes = b"P5\n# c\n3 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        let img = read_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (3, 1));
        assert_eq!(img.pixels(), &[1, 2, 3]);

        let mut bytes = b"P5 # a\n3 # b\n1\n#c\n255 ".to_vec();
        bytes.extend_from_slice(&[9, 8, 7]);
        assert_eq!(read_pgm(&bytes).unwrap().pixels(), &[9, 8, 7]);
    }

    #[test]
    fn raster_may_start_with_whitespace_bytes() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(b"\n ");
        assert_eq!(read_pgm(&bytes).unwrap().pixels(), b"\n ");
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            read_pgm(b"P5\nx 1\n255\n\0"),
            Err(PgmError::BadHeader(_))
        ));
        assert!(matches!(
            read_pgm(b"P5\n1 1\n65535\n\0\0"),
            Err(PgmError::BadHeader(_))
        ));
        assert!(matches!(
            read_pgm(b"P5\n0 1\n255\n"),
            Err(PgmError::BadHeader(_))
        ));
        assert_eq!(
            read_pgm(b"P5\n2 2\n255\n\0\0"),
            Err(PgmError::TruncatedData {
                expected: 4,
                found: 2
            })
        );
    }

    #[test]
    fn writes_canonical_header() {
        let img = GrayImage::from_raw(1, 1, vec![42]).unwrap();
        assert_eq!(write_pgm(&img), b"P5\n1 1\n255\n*".to_vec());
        let img = GrayImage::from_raw(2, 1, vec![0, 255]).unwrap();
        let mut expected = b"P5\n2 1\n255\n".to_vec();
        expected.extend_from_slice(&[0, 255]);
        assert_eq!(write_pgm(&img), expected);
    }

    #[test]
    fn from_raw_checks_length() {
        assert!(GrayImage::from_raw(2, 2, vec![0; 3]).is_none());
        assert!(GrayImage::from_raw(0, 2, vec![]).is_none());
    }

    proptest! {
        #[test]
        fn round_trip_64x64(pixels in proptest::collection::vec(any::<u8>(), 64 * 64)) {
            let img = GrayImage::from_raw(64, 64, pixels).unwrap();
            let bytes = write_pgm(&img);
            let back = read_pgm(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(write_pgm(&back), bytes);
        }
    }
}
