//! Synthetic texture classes and store helpers shared by the integration
//! tests.
#![allow(dead_code)]

use lbpmarkdex::retrieval::Index;
use lbpmarkdex::{Birthday, GrayImage, PatientRecord};
use rand::Rng;
use std::f64::consts::PI;
use std::path::Path;

pub const CLASSES: [&str; 3] = ["gradient", "impulse", "stripes"];

/// Gentle linear ramp in a random direction.
pub fn gradient(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    let theta = rng.gen_range(0.0..2.0 * PI);
    let (c, s) = (theta.cos(), theta.sin());
    let lo = rng.gen_range(40.0..150.0);
    let hi = lo + rng.gen_range(24.0..48.0);
    let span = (w as f64 * c.abs() + h as f64 * s.abs()).max(1.0);
    let x0 = if c < 0.0 { w as f64 } else { 0.0 };
    let y0 = if s < 0.0 { h as f64 } else { 0.0 };
    GrayImage::from_fn(w, h, |x, y| {
        let t = ((x as f64 - x0) * c + (y as f64 - y0) * s) / span;
        (lo + (hi - lo) * t.clamp(0.0, 1.0)).round() as u8
    })
}

/// Mildly noisy flat background with sparse black and white impulses.
pub fn salt_and_pepper(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    let base: i32 = rng.gen_range(90..160);
    let density = rng.gen_range(0.003..0.006);
    GrayImage::from_fn(w, h, |_, _| {
        if rng.gen_bool(density) {
            if rng.gen_bool(0.5) {
                0
            } else {
                255
            }
        } else {
            (base + rng.gen_range(-3..=3)) as u8
        }
    })
}

/// Sinusoidal stripes with random orientation, period and contrast.
pub fn stripes(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    let theta = rng.gen_range(0.0..PI);
    let period = rng.gen_range(8.0..20.0);
    let amp = rng.gen_range(30.0..60.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let (c, s) = (theta.cos(), theta.sin());
    GrayImage::from_fn(w, h, |x, y| {
        let t = (x as f64 * c + y as f64 * s) * 2.0 * PI / period + phase;
        (128.0 + amp * t.sin()).round() as u8
    })
}

pub fn generate(class: &str, rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    match class {
        "gradient" => gradient(rng, w, h),
        "impulse" => salt_and_pepper(rng, w, h),
        "stripes" => stripes(rng, w, h),
        other => panic!("unknown class {other}"),
    }
}

/// `per_class` images of each class as (id, class, image), ids sortable.
pub fn corpus(
    rng: &mut impl Rng,
    per_class: usize,
    side: usize,
) -> Vec<(String, String, GrayImage)> {
    let mut out = Vec::new();
    for class in CLASSES {
        for i in 0..per_class {
            out.push((
                format!("{class}-{i:02}"),
                class.to_string(),
                generate(class, rng, side, side),
            ));
        }
    }
    out
}

pub fn patient(n: usize) -> PatientRecord {
    PatientRecord {
        patient_id: format!("P{:03}", n % 7),
        name: format!("Patient {n}"),
        birthday: Birthday::new(
            1950 + (n % 50) as u16,
            (n % 12 + 1) as u8,
            (n % 28 + 1) as u8,
        )
        .unwrap(),
        diagnostic: format!("routine screening #{n}"),
    }
}

/// Indexes every corpus image into `dir/store` with `dir/index.tsv`.
pub fn build_store(dir: &Path, items: &[(String, String, GrayImage)]) -> Index {
    let mut index = Index::open(dir.join("index.tsv")).unwrap();
    let store = dir.join("store");
    for (n, (id, class, img)) in items.iter().enumerate() {
        index
            .add(img, id, &patient(n), &store, Some(class))
            .unwrap_or_else(|e| panic!("indexing {id}: {e}"));
    }
    index
}
