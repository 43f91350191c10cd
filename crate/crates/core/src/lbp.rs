//! Basic 8-neighbour, radius-1 local binary patterns.
//!
//! Neighbours are visited clockwise starting at the top-left corner; the
//! p-th neighbour sets bit p when it is at least as bright as the centre:
//!
//! <pre>
//! 0  1  2
//! 7  c  3
//! 6  5  4
//! </pre>

use crate::image_io::GrayImage;
use thiserror::Error;

pub const LBP_BINS: usize = 256;

/// (dx, dy) offsets in bit order.
const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LbpError {
    #[error("OutOfBounds: 3x3 neighbourhood of ({x}, {y}) leaves the image")]
    OutOfBounds { x: usize, y: usize },
    #[error("ImageTooSmall: {width}x{height} has no interior pixel")]
    ImageTooSmall { width: usize, height: usize },
}

impl LbpError {
    pub fn name(&self) -> &'static str {
        match self {
            LbpError::OutOfBounds { .. } => "OutOfBounds",
            LbpError::ImageTooSmall { .. } => "ImageTooSmall",
        }
    }
}

/// 256-bin histogram of LBP codes over the interior pixels of an image.
#[derive(Clone, PartialEq, Eq)]
pub struct LbpHistogram {
    bins: [u32; LBP_BINS],
}

impl std::fmt::Debug for LbpHistogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let nonzero: Vec<_> = self
            .bins
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .collect();
        f.debug_struct("LbpHistogram")
            .field("nonzero", &nonzero)
            .finish()
    }
}

impl Default for LbpHistogram {
    fn default() -> Self {
        LbpHistogram {
            bins: [0; LBP_BINS],
        }
    }
}

impl LbpHistogram {
    pub fn from_bins(bins: [u32; LBP_BINS]) -> Self {
        LbpHistogram { bins }
    }

    pub fn bins(&self) -> &[u32; LBP_BINS] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|&c| u64::from(c)).sum()
    }
}

#[inline]
fn code_unchecked(img: &GrayImage, cx: usize, cy: usize) -> u8 {
    let center = img.get(cx, cy);
    NEIGHBOURS
        .iter()
        .enumerate()
        .fold(0u8, |code, (bit, &(dx, dy))| {
            let v = img.get(cx.wrapping_add_signed(dx), cy.wrapping_add_signed(dy));
            if v >= center {
                code | (1 << bit)
            } else {
                code
            }
        })
}

/// LBP code of the pixel at column `cx`, row `cy`.
pub fn lbp_code(img: &GrayImage, cx: usize, cy: usize) -> Result<u8, LbpError> {
    if cx == 0 || cy == 0 || cx + 1 >= img.width() || cy + 1 >= img.height() {
        return Err(LbpError::OutOfBounds { x: cx, y: cy });
    }
    Ok(code_unchecked(img, cx, cy))
}

/// Histogram of LBP codes over all pixels that have a full 3x3 neighbourhood.
pub fn lbp_histogram(img: &GrayImage) -> Result<LbpHistogram, LbpError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(LbpError::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let mut hist = LbpHistogram::default();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            hist.bins[code_unchecked(img, x, y) as usize] += 1;
        }
    }
    Ok(hist)
}
