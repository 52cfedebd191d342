//! Synthetic layered-tissue phantoms, preprocessing, augmentation, fold
//! splitting and the on-disk PGM dataset format.
//!
//! Preprocessing order is `pad_to_square -> resize -> augment (training
//! only) -> normalize`; [`preprocess`] covers the first two steps.

mod io;
mod phantom;
mod split;
mod transform;

use crate::classes::{ClassOrder, TissueClass, NUM_CLASSES};
use crate::error::{shape_err, Error, Result};

pub use io::{
    generate_dataset, read_dataset, read_manifest, read_pgm, read_sample, write_dataset, write_manifest, write_pgm,
    write_sample, ManifestEntry, IMAGES_DIR, MANIFEST_FILE, MASKS_DIR,
};
pub use phantom::{generate_phantom, PhantomParams};
pub use split::{kfold_split, train_val_split, Fold};
pub use transform::{
    augment, crop, flip_horizontal, normalize, one_hot_to_mask, pad_to_square, resize, rotate, translate,
    AugmentConfig,
};

/// A grayscale image with its label mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub seed: u64,
    width: usize,
    height: usize,
    image: Vec<u8>,
    mask: Vec<u8>,
}

impl Sample {
    pub fn new(id: impl Into<String>, seed: u64, width: usize, height: usize, image: Vec<u8>, mask: Vec<u8>) -> Result<Self> {
        let n = width * height;
        if image.len() != n || mask.len() != n {
            return Err(shape_err(
                "sample",
                format!("{width}x{height} with {} image and {} mask pixels", image.len(), mask.len()),
            ));
        }
        if let Some(&bad) = mask.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidArgument(format!("mask label {bad} out of range")));
        }
        Ok(Sample { id: id.into(), seed, width, height, image, mask })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn image(&self) -> &[u8] {
        &self.image
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    /// Distinct mask labels in ascending order.
    pub fn labels_present(&self) -> Vec<u8> {
        let mut seen = [false; NUM_CLASSES];
        for &l in &self.mask {
            seen[l as usize] = true;
        }
        (0..NUM_CLASSES as u8).filter(|&l| seen[l as usize]).collect()
    }

    pub fn label_map(&self) -> crate::metrics::LabelMap {
        crate::metrics::LabelMap::new(self.width, self.height, self.mask.clone()).expect("sample masks are valid")
    }

    /// Tumor versus everything else: 1 for tumor pixels, 0 otherwise.
    pub fn collapse_binary(&self, order: &ClassOrder) -> Sample {
        let tumor = order.label(TissueClass::Tumor);
        let mask = self.mask.iter().map(|&l| (l == tumor) as u8).collect();
        Sample { mask, ..self.clone() }
    }

    /// Reject masks with labels other than 0 and 1.
    pub fn check_binary(&self) -> Result<()> {
        match self.mask.iter().find(|&&l| l > 1) {
            Some(l) => Err(Error::InvalidArgument(format!("sample {}: non-binary mask label {l}", self.id))),
            None => Ok(()),
        }
    }
}

/// Pad to square, then resize to `size`.
pub fn preprocess(s: &Sample, size: usize, order: &ClassOrder) -> Result<Sample> {
    resize(&pad_to_square(s, order), size)
}
