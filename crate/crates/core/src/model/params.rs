use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ArchConfig;
use super::shapes::layers;
use super::Head;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

const MAGIC: &[u8; 4] = b"A2DM";
const FORMAT_VERSION: u16 = 1;

/// Ordered, uniquely named parameter tensors of one network instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T = f32> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self { entries: Vec::new(), index: HashMap::new() }
    }
}

/// Names belonging to the transferable encoder: stages and DME blocks.
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("enc.") || name.starts_with("dme.")
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
            index: self.index.clone(),
        }
    }

    /// Copy of all encoder (`enc.*`, `dme.*`) tensors.
    pub fn encoder_subset(&self) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (n, t) in self.iter().filter(|(n, _)| is_encoder_param(n)) {
            out.insert(n, t.clone()).expect("names are unique");
        }
        out
    }

    /// Overwrite this store's encoder tensors with those of `subset`,
    /// leaving decoder and head untouched. All encoder names must be present
    /// in `subset` with identical shapes.
    pub fn load_encoder(&mut self, subset: &ParamStore<T>) -> Result<()> {
        let mut missing = Vec::new();
        let mut mismatched = Vec::new();
        for (name, t) in self.iter().filter(|(n, _)| is_encoder_param(n)) {
            match subset.get(name) {
                None => missing.push(name.to_string()),
                Some(s) if s.shape() != t.shape() => {
                    mismatched.push(format!("{name}: {:?} vs {:?}", s.shape(), t.shape()))
                }
                Some(_) => {}
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingParams(missing));
        }
        if !mismatched.is_empty() {
            return Err(Error::ParamShapes(mismatched));
        }
        for (name, t) in self.entries.iter_mut().filter(|(n, _)| is_encoder_param(n)) {
            let src = subset.get(name).expect("checked above");
            t.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// Reject unless names and shapes equal the configuration's enumeration.
    pub fn check_layout(&self, cfg: &ArchConfig, head: Head) -> Result<()> {
        let expected = super::shapes::param_shapes(cfg, head);
        let mut missing = Vec::new();
        let mut mismatched = Vec::new();
        for (name, shape) in &expected {
            match self.get(name) {
                None => missing.push(name.clone()),
                Some(t) if t.shape() != &shape[..] => {
                    mismatched.push(format!("{name}: {:?} vs expected {shape:?}", t.shape()))
                }
                Some(_) => {}
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingParams(missing));
        }
        if !mismatched.is_empty() || self.len() != expected.len() {
            if mismatched.is_empty() {
                mismatched.push(format!("{} tensors, expected {}", self.len(), expected.len()));
            }
            return Err(Error::ParamShapes(mismatched));
        }
        Ok(())
    }
}

/// He-normal weights (fan-in of the receiving convolution) and zero biases,
/// drawn in parameter order from one seeded stream.
pub fn build(cfg: &ArchConfig, head: Head, seed: u64) -> Result<ParamStore<f32>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for layer in layers(cfg, head) {
        let std = (2.0 / layer.fan_in() as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let w = Tensor::from_fn(&layer.weight_shape(), |_| normal.sample(&mut rng) as f32);
        store.insert(format!("{}.w", layer.name), w)?;
        store.insert(format!("{}.b", layer.name), Tensor::zeros(&[layer.out_ch]))?;
    }
    Ok(store)
}

// ── checkpoint format ───────────────────────────────────────────────

impl ParamStore<f32> {
    /// Serialise as: magic `A2DM`, u16 version, u32 tensor count, then per
    /// tensor a u16 name length, UTF-8 name, u8 rank, u32 dims and raw
    /// little-endian f32 values.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        for (name, t) in self.iter() {
            let nb = name.as_bytes();
            let len = u16::try_from(nb.len())
                .map_err(|_| Error::InvalidArgument(format!("parameter name too long: {name}")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(nb)?;
            w.write_all(&[t.shape().len() as u8])?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(4 * t.numel());
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes, Path::new("<memory>"))
    }

    pub fn read_from(mut r: impl Read, origin: &Path) -> Result<Self> {
        let fail = |reason: String| Error::Format { path: origin.to_path_buf(), reason };
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, origin)?;
        if &magic != MAGIC {
            return Err(fail(format!("bad magic {magic:?}")));
        }
        let version = u16::from_le_bytes(read_array(&mut r, origin)?);
        if version != FORMAT_VERSION {
            return Err(fail(format!("unsupported format version {version}")));
        }
        let count = u32::from_le_bytes(read_array(&mut r, origin)?);
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(read_array(&mut r, origin)?) as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name, origin)?;
            let name = String::from_utf8(name).map_err(|e| fail(format!("non-UTF-8 name: {e}")))?;
            let [rank] = read_array::<1>(&mut r, origin)?;
            if rank > 4 {
                return Err(fail(format!("{name}: rank {rank} exceeds 4")));
            }
            let mut shape = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(read_array(&mut r, origin)?) as usize);
            }
            let n: usize = shape.iter().product();
            let mut raw = vec![0u8; 4 * n];
            read_exact(&mut r, &mut raw, origin)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| fail(e.to_string()))?;
            store.insert(name, t).map_err(|e| fail(e.to_string()))?;
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(fail(format!("{} trailing bytes", rest.len())));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::read_from(&bytes[..], path)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], origin: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::Format {
        path: origin.to_path_buf(),
        reason: format!("truncated checkpoint: {e}"),
    })
}

fn read_array<const N: usize>(r: &mut impl Read, origin: &Path) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    read_exact(r, &mut b, origin)?;
    Ok(b)
}
