use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{generate_phantom, PhantomParams, Sample};
use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::par;

pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";
pub const MANIFEST_FILE: &str = "manifest.csv";
const MANIFEST_HEADER: &str = "id,image_path,mask_path,seed";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

/// Binary 8-bit PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}

/// Returns `(width, height, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(format_err(path, format!("expected P5 magic, found {:?}", fields[0])));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| format_err(path, format!("bad {what} {s:?}")))
    };
    let (w, h, maxval) = (num(&fields[1], "width")?, num(&fields[2], "height")?, num(&fields[3], "maxval")?);
    if maxval != 255 {
        return Err(format_err(path, format!("maxval {maxval} unsupported, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != w * h {
        return Err(format_err(path, format!("expected {} pixels, found {}", w * h, data.len())));
    }
    Ok((w, h, data.to_vec()))
}

pub fn write_sample(s: &Sample, image_path: &Path, mask_path: &Path) -> Result<()> {
    write_pgm(image_path, s.width(), s.height(), s.image())?;
    write_pgm(mask_path, s.width(), s.height(), s.mask())
}

pub fn read_sample(id: &str, seed: u64, image_path: &Path, mask_path: &Path) -> Result<Sample> {
    let (w, h, image) = read_pgm(image_path)?;
    let (mw, mh, mask) = read_pgm(mask_path)?;
    if (w, h) != (mw, mh) {
        return Err(format_err(mask_path, format!("mask {mw}x{mh} does not match image {w}x{h}")));
    }
    if let Some(&bad) = mask.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(format_err(mask_path, format!("class index {bad} out of range")));
    }
    Sample::new(id, seed, w, h, image, mask)
}

/// One manifest row; paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub seed: u64,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for e in entries {
        for field in [&e.id, &e.image_path.display().to_string(), &e.mask_path.display().to_string()] {
            if field.contains(',') || field.contains('\n') {
                return Err(format_err(path, format!("field {field:?} contains a separator")));
            }
        }
        out.push_str(&format!("{},{},{},{}\n", e.id, e.image_path.display(), e.mask_path.display(), e.seed));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
        return Err(format_err(path, format!("missing header {MANIFEST_HEADER:?}")));
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(format_err(path, format!("line {}: expected 4 fields", i + 2)));
        }
        let seed = f[3]
            .trim()
            .parse()
            .map_err(|_| format_err(path, format!("line {}: bad seed {:?}", i + 2, f[3])))?;
        entries.push(ManifestEntry {
            id: f[0].to_string(),
            image_path: PathBuf::from(f[1]),
            mask_path: PathBuf::from(f[2]),
            seed,
        });
    }
    Ok(entries)
}

/// Write `root/{images,masks}/<id>.pgm` and `root/manifest.csv`.
pub fn write_dataset(root: &Path, samples: &[Sample]) -> Result<()> {
    fs::create_dir_all(root.join(IMAGES_DIR))?;
    fs::create_dir_all(root.join(MASKS_DIR))?;
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let image_path = Path::new(IMAGES_DIR).join(format!("{}.pgm", s.id));
        let mask_path = Path::new(MASKS_DIR).join(format!("{}.pgm", s.id));
        write_sample(s, &root.join(&image_path), &root.join(&mask_path))?;
        entries.push(ManifestEntry { id: s.id.clone(), image_path, mask_path, seed: s.seed });
    }
    write_manifest(&root.join(MANIFEST_FILE), &entries)
}

pub fn read_dataset(root: &Path) -> Result<Vec<Sample>> {
    read_manifest(&root.join(MANIFEST_FILE))?
        .iter()
        .map(|e| read_sample(&e.id, e.seed, &root.join(&e.image_path), &root.join(&e.mask_path)))
        .collect()
}

/// `n` phantoms with per-sample seeds drawn from `seed`.
pub fn generate_dataset(params: &PhantomParams, n: usize, seed: u64) -> Result<Vec<Sample>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    par::map_indices(n, |i| {
        let mut s = generate_phantom(params, seeds[i])?;
        s.id = format!("phantom_{i:04}");
        Ok(s)
    })
    .into_iter()
    .collect()
}
