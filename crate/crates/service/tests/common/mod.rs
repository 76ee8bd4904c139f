#![allow(dead_code)]

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use makeitso::editing::{save_bank, EditBank};
use makeitso::generator::{init_toy_generator, save_checkpoint, GeneratorConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Write a micro generator and a three-direction bank into `dir`.
pub fn micro_world(dir: &Path, checkpoint: &str, bank: &str) {
    let g = init_toy_generator(3, &GeneratorConfig::micro()).unwrap();
    save_checkpoint(&g, dir.join(checkpoint)).unwrap();
    let b = EditBank::random(&mut ChaCha8Rng::seed_from_u64(1), &g, 3, 1.0).unwrap();
    save_bank(&b, dir.join(bank)).unwrap();
}

/// A 12x10 PNG with a diagonal gradient.
pub fn target_png() -> Vec<u8> {
    let img = RgbImage::from_fn(12, 10, |x, y| Rgb([(x * 20) as u8, (y * 25) as u8, 128]));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).unwrap();
    out.into_inner()
}
