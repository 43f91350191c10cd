//! Three-level Gaussian pyramid (L0 = original, L1, L2).

use crate::image_io::GrayImage;
use thiserror::Error;

pub const PYRAMID_LEVELS: usize = 3;

/// Smallest side length whose L2 still has an interior pixel for LBP.
pub const MIN_PYRAMID_SIDE: usize = 12;

/// Binomial taps, sum 16.
const TAPS: [u32; 5] = [1, 4, 6, 4, 1];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PyramidError {
    #[error("ImageTooSmall: {width}x{height} is below the {min}x{min} minimum")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
}

impl PyramidError {
    pub fn name(&self) -> &'static str {
        "ImageTooSmall"
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pyramid {
    levels: [GrayImage; PYRAMID_LEVELS],
}

impl Pyramid {
    pub fn levels(&self) -> &[GrayImage; PYRAMID_LEVELS] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &GrayImage {
        &self.levels[k]
    }
}

/// Half-resolution image: separable (1,4,6,4,1)/16 blur sampled at even
/// coordinates, edges replicated, rounded half-up.
pub fn reduce(img: &GrayImage) -> Result<GrayImage, PyramidError> {
    let (w, h) = (img.width(), img.height());
    if w < 2 || h < 2 {
        return Err(PyramidError::ImageTooSmall {
            width: w,
            height: h,
            min: 2,
        });
    }
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    // horizontal pass on every source row, sampled at even columns
    let mut rows = vec![0u32; ow * h];
    for y in 0..h {
        let src = img.row(y);
        for ox in 0..ow {
            let cx = 2 * ox as isize;
            rows[y * ow + ox] = TAPS
                .iter()
                .enumerate()
                .map(|(i, &t)| t * u32::from(src[clamp(cx + i as isize - 2, w)]))
                .sum();
        }
    }

    let mut out = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        let cy = 2 * oy as isize;
        for ox in 0..ow {
            let acc: u32 = TAPS
                .iter()
                .enumerate()
                .map(|(j, &t)| t * rows[clamp(cy + j as isize - 2, h) * ow + ox])
                .sum();
            out.push(((acc + 128) >> 8) as u8);
        }
    }
    Ok(GrayImage::from_raw(ow, oh, out).expect("dimensions are consistent"))
}

pub fn build_pyramid(img: &GrayImage) -> Result<Pyramid, PyramidError> {
    if img.width() < MIN_PYRAMID_SIDE || img.height() < MIN_PYRAMID_SIDE {
        return Err(PyramidError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: MIN_PYRAMID_SIDE,
        });
    }
    let l1 = reduce(img)?;
    let l2 = reduce(&l1)?;
    Ok(Pyramid {
        levels: [img.clone(), l1, l2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense 5x5 kernel convolution at every source pixel, then decimation.
    fn oracle_reduce(img: &GrayImage) -> GrayImage {
        let k1 = [1.0, 4.0, 6.0, 4.0, 1.0];
        let mut kernel = [[0.0f64; 5]; 5];
        for (j, row) in kernel.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = k1[i] * k1[j] / 256.0;
            }
        }
        let (w, h) = (img.width() as isize, img.height() as isize);
        let mut blurred = vec![0.0f64; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for j in -2..=2isize {
                    for i in -2..=2isize {
                        let sx = (x + i).clamp(0, w - 1) as usize;
                        let sy = (y + j).clamp(0, h - 1) as usize;
                        s += kernel[(j + 2) as usize][(i + 2) as usize] * img.get(sx, sy) as f64;
                    }
                }
                blurred[(y * w + x) as usize] = s;
            }
        }
        let (ow, oh) = ((w as usize).div_ceil(2), (h as usize).div_ceil(2));
        GrayImage::from_fn(ow, oh, |x, y| {
            (blurred[2 * y * w as usize + 2 * x] + 0.5).floor() as u8
        })
    }

    #[test]
    fn halves_512() {
        let img = GrayImage::filled(512, 512, 3);
        let r = reduce(&img).unwrap();
        assert_eq!((r.width(), r.height()), (256, 256));
    }

    #[test]
    fn constant_stays_constant() {
        let r = reduce(&GrayImage::filled(9, 6, 77)).unwrap();
        assert_eq!((r.width(), r.height()), (5, 3));
        assert!(r.pixels().iter().all(|&v| v == 77));
        let r = reduce(&GrayImage::filled(2, 2, 255)).unwrap();
        assert_eq!(r.pixels(), &[255]);
    }

    #[test]
    fn ramp_matches_dense_oracle() {
        let ramp = GrayImage::from_fn(5, 5, |x, y| (x * 40 + y * 10) as u8);
        assert_eq!(reduce(&ramp).unwrap(), oracle_reduce(&ramp));
    }

    #[test]
    fn random_images_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let (w, h) = (rng.gen_range(2..24), rng.gen_range(2..24));
            let img = GrayImage::from_fn(w, h, |_, _| rng.gen());
            assert_eq!(reduce(&img).unwrap(), oracle_reduce(&img), "{w}x{h}");
        }
    }

    #[test]
    fn reduce_rejects_single_row() {
        assert!(reduce(&GrayImage::filled(5, 1, 0)).is_err());
    }

    #[test]
    fn pyramid_shapes() {
        for (side, expected) in [(512, [512, 256, 128]), (12, [12, 6, 3]), (13, [13, 7, 4])] {
            let p = build_pyramid(&GrayImage::filled(side, side, 9)).unwrap();
            for (lvl, &e) in p.levels().iter().zip(expected.iter()) {
                assert_eq!((lvl.width(), lvl.height()), (e, e));
            }
        }
        let p = build_pyramid(&GrayImage::filled(12, 25, 9)).unwrap();
        let dims: Vec<_> = p.levels().iter().map(|l| (l.width(), l.height())).collect();
        assert_eq!(dims, vec![(12, 25), (6, 13), (3, 7)]);
    }

    #[test]
    fn pyramid_keeps_original() {
        let img = GrayImage::from_fn(20, 14, |x, y| (x * y) as u8);
        assert_eq!(build_pyramid(&img).unwrap().level(0), &img);
    }

    #[test]
    fn pyramid_too_small() {
        assert!(build_pyramid(&GrayImage::filled(11, 40, 0)).is_err());
        assert!(build_pyramid(&GrayImage::filled(40, 11, 0)).is_err());
    }
}
