//! Cumulative LBP histogram over the pyramid levels, and the distance used
//! to rank descriptors.

use crate::image_io::GrayImage;
use crate::lbp::{lbp_histogram, LbpError, LbpHistogram, LBP_BINS};
use crate::pyramid::{build_pyramid, PyramidError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DescriptorError {
    #[error(transparent)]
    Pyramid(#[from] PyramidError),
    #[error(transparent)]
    Lbp(#[from] LbpError),
    #[error("EmptyDescriptor: descriptor has no mass")]
    EmptyDescriptor,
}

impl DescriptorError {
    pub fn name(&self) -> &'static str {
        match self {
            DescriptorError::Pyramid(e) => e.name(),
            DescriptorError::Lbp(e) => e.name(),
            DescriptorError::EmptyDescriptor => "EmptyDescriptor",
        }
    }
}

/// Bin-wise sum of two histograms.
pub fn accumulate(a: &LbpHistogram, b: &LbpHistogram) -> LbpHistogram {
    let mut bins = *a.bins();
    for (o, &v) in bins.iter_mut().zip(b.bins()) {
        *o += v;
    }
    LbpHistogram::from_bins(bins)
}

/// Raw-count LBP histogram accumulated over the three pyramid levels.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ChlbpDescriptor {
    bins: [u32; LBP_BINS],
}

impl std::fmt::Debug for ChlbpDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChlbpDescriptor")
            .field("total", &self.total())
            .finish_non_exhaustive()
    }
}

impl ChlbpDescriptor {
    pub fn from_bins(bins: [u32; LBP_BINS]) -> Self {
        ChlbpDescriptor { bins }
    }

    pub fn zero() -> Self {
        ChlbpDescriptor {
            bins: [0; LBP_BINS],
        }
    }

    pub fn bins(&self) -> &[u32; LBP_BINS] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|&c| u64::from(c)).sum()
    }
}

impl From<LbpHistogram> for ChlbpDescriptor {
    fn from(h: LbpHistogram) -> Self {
        ChlbpDescriptor { bins: *h.bins() }
    }
}

pub fn chlbp(img: &GrayImage) -> Result<ChlbpDescriptor, DescriptorError> {
    let pyramid = build_pyramid(img)?;
    let [l0, l1, l2] = pyramid.levels();
    let acc = accumulate(
        &accumulate(&lbp_histogram(l0)?, &lbp_histogram(l1)?),
        &lbp_histogram(l2)?,
    );
    Ok(acc.into())
}

/// Euclidean distance between the L1-normalised bin vectors.
pub fn distance(a: &ChlbpDescriptor, b: &ChlbpDescriptor) -> Result<f64, DescriptorError> {
    let (sa, sb) = (a.total(), b.total());
    if sa == 0 || sb == 0 {
        return Err(DescriptorError::EmptyDescriptor);
    }
    if a == b {
        return Ok(0.0);
    }
    let (sa, sb) = (sa as f64, sb as f64);
    let sq: f64 = a
        .bins
        .iter()
        .zip(&b.bins)
        .map(|(&x, &y)| {
            let d = f64::from(x) / sa - f64::from(y) / sb;
            d * d
        })
        .sum();
    Ok(sq.sqrt())
}
