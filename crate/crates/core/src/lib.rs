//! Content-based retrieval of grayscale images whose index lives inside the
//! images themselves.
//!
//! Each image gets a multiresolution LBP descriptor ([`descriptor::chlbp`]),
//! which is embedded together with a patient record and a file locator by
//! reversible difference expansion ([`watermark`]). Queries read the
//! descriptors back out of the stored files; the originals are recovered
//! bit-exactly.

pub mod cli;
pub mod descriptor;
pub mod eval;
pub mod image_io;
pub mod lbp;
pub mod payload;
pub mod pyramid;
pub mod retrieval;
pub mod watermark;

pub use descriptor::{chlbp, distance, ChlbpDescriptor};
pub use image_io::{read_pgm, write_pgm, GrayImage};
pub use payload::{Birthday, PatientRecord, WatermarkPayload};
