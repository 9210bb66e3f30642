use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{contract_err, shape_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// An `h × w` boolean mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    h: usize,
    w: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize, bits: Vec<bool>) -> Result<Self> {
        if h == 0 || w == 0 {
            return contract_err(format!("mask extents must be positive, got {h}x{w}"));
        }
        if bits.len() != h * w {
            return shape_err(format!("{} bits for a {h}x{w} mask", bits.len()));
        }
        Ok(Self { h, w, bits })
    }

    pub fn empty(h: usize, w: usize) -> Result<Self> {
        Self::new(h, w, vec![false; h * w])
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        Self::new(h, w, (0..h * w).map(|i| f(i / w, i % w)).collect())
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.w + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&true)
    }

    pub fn same_extents(&self, other: &Self) -> Result<()> {
        if (self.h, self.w) != (other.h, other.w) {
            return contract_err(format!(
                "mask extents differ: {}x{} vs {}x{}",
                self.h, self.w, other.h, other.w
            ));
        }
        Ok(())
    }

    /// `self ∧ ¬other`
    pub fn minus(&self, other: &Self) -> Result<Self> {
        self.same_extents(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect();
        Self::new(self.h, self.w, bits)
    }

    /// Binary PGM: pixel ≥ 128 is set.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self::new(h, w, img.pixels().map(|p| p.0[0] >= 128).collect())
    }

    /// Writes a `P5` PGM with set pixels at 255.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let pixels: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        PnmEncoder::new(file)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&pixels, self.w as u32, self.h as u32, ExtendedColorType::L8)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// A rank-2 `[h, w]` tensor thresholded at 0.5.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        let (h, w) = t.dims2()?;
        Self::new(h, w, t.data().iter().map(|&v| v >= T::from_f64(0.5)).collect())
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            &[self.h, self.w],
            self.bits.iter().map(|&b| if b { T::one() } else { T::zero() }).collect(),
        )
        .expect("extents checked at construction")
    }
}

/// `|a ∩ b| / |a ∪ b|`, 1 when both are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_extents(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_cases() {
        let a = BinaryMask::new(2, 1, vec![true, false]).unwrap();
        let b = BinaryMask::new(2, 1, vec![true, true]).unwrap();
        assert_eq!(iou(&a, &b).unwrap(), 0.5);
        assert_eq!(iou(&b, &b).unwrap(), 1.0);
        let c = BinaryMask::new(2, 1, vec![false, true]).unwrap();
        assert_eq!(iou(&a, &c).unwrap(), 0.0);
        let e = BinaryMask::empty(2, 1).unwrap();
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert!(iou(&a, &BinaryMask::empty(1, 2).unwrap()).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let m = BinaryMask::from_fn(5, 7, |y, x| (x + 2 * y) % 3 == 0).unwrap();
        m.write_pgm(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(BinaryMask::read_pgm(&path).unwrap(), m);
    }

    #[test]
    fn tensor_threshold() {
        let t = Tensor::new(&[1, 3], vec![0.2f32, 0.5, 0.9]).unwrap();
        let m = BinaryMask::from_tensor(&t).unwrap();
        assert_eq!(m.bits(), &[false, true, true]);
    }
}
