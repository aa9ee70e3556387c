//! Chunk sources backed by image pyramids, in memory or on disk.
//!
//! On-disk layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/level_<k>/<c0>_<c1>_..._<c{d-1}>.bin
//! ```
//!
//! Each `.bin` file holds one chunk as raw little-endian samples of the
//! manifest's `dtype`, row-major with axis 0 slowest. Every chunk has the
//! same `chunk_shape` at every level.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascade::{ChunkKey, ChunkSource};
use crate::error::{Error, Result};
use crate::image::NdImage;
use crate::pyramid::{ChunkIndex, PyramidSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_NAME: &str = "chunk-cascade-raw";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    U16,
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn encode(self, values: &[f64], out: &mut Vec<u8>) {
        out.reserve(values.len() * self.size());
        for &v in values {
            match self {
                DType::U8 => out.push(v.round().clamp(0.0, u8::MAX as f64) as u8),
                DType::U16 => {
                    out.extend_from_slice(&(v.round().clamp(0.0, u16::MAX as f64) as u16).to_le_bytes())
                }
                DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }

    fn decode(self, bytes: &[u8]) -> Vec<f64> {
        match self {
            DType::U8 => bytes.iter().map(|&b| b as f64).collect(),
            DType::U16 => bytes
                .chunks_exact(2)
                .map(|b| u16::from_le_bytes([b[0], b[1]]) as f64)
                .collect(),
            DType::F32 => bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
            DType::F64 => bytes
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub levels: usize,
    pub l0_chunks_per_axis: Vec<usize>,
    pub chunk_shape: Vec<usize>,
    pub dtype: DType,
    pub byte_order: String,
}

impl StoreManifest {
    pub fn new(spec: &PyramidSpec, chunk_shape: Vec<usize>, dtype: DType) -> Self {
        Self {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            dim: spec.dim(),
            levels: spec.levels(),
            l0_chunks_per_axis: spec.l0_chunks_per_axis().to_vec(),
            chunk_shape,
            dtype,
            byte_order: "little".to_string(),
        }
    }

    pub fn spec(&self) -> Result<PyramidSpec> {
        PyramidSpec::new(self.dim, self.levels, self.l0_chunks_per_axis.clone())
    }

    fn validate(&self) -> Result<PyramidSpec> {
        if self.format != FORMAT_NAME {
            return Err(Error::Format(format!("unknown format {:?}", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", self.version)));
        }
        if self.byte_order != "little" {
            return Err(Error::Format(format!("unsupported byte order {:?}", self.byte_order)));
        }
        if self.chunk_shape.len() != self.dim || self.chunk_shape.contains(&0) {
            return Err(Error::Format(format!(
                "chunk shape {:?} does not fit a {}-dimensional grid",
                self.chunk_shape, self.dim
            )));
        }
        self.spec().map_err(|e| Error::Format(e.to_string()))
    }

    fn chunk_bytes(&self) -> usize {
        self.chunk_shape.iter().product::<usize>() * self.dtype.size()
    }
}

/// A chunk directory on disk.
#[derive(Clone, Debug)]
pub struct ChunkStore {
    root: PathBuf,
    manifest: StoreManifest,
    spec: PyramidSpec,
}

impl ChunkStore {
    /// Creates `root` (if needed) and writes its manifest.
    pub fn create(root: impl AsRef<Path>, manifest: StoreManifest) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let spec = manifest.validate()?;
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        for level in 0..spec.levels() {
            let dir = root.join(format!("level_{level}"));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let path = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            root,
            manifest,
            spec,
        })
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: StoreManifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let spec = manifest.validate()?;
        Ok(Self {
            root,
            manifest,
            spec,
        })
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn spec(&self) -> &PyramidSpec {
        &self.spec
    }

    pub fn chunk_path(&self, idx: &ChunkIndex) -> PathBuf {
        let name = idx
            .coords
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("_");
        self.root
            .join(format!("level_{}", idx.level))
            .join(format!("{name}.bin"))
    }

    pub fn write_chunk(&self, idx: &ChunkIndex, chunk: &NdImage) -> Result<()> {
        self.spec.linear_index(idx)?;
        if chunk.shape() != self.manifest.chunk_shape {
            return Err(Error::domain(format!(
                "chunk shape {:?} does not match store chunk shape {:?}",
                chunk.shape(),
                self.manifest.chunk_shape
            )));
        }
        let mut bytes = Vec::new();
        self.manifest.dtype.encode(chunk.data(), &mut bytes);
        let path = self.chunk_path(idx);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn read_chunk(&self, idx: &ChunkIndex) -> Result<NdImage> {
        self.spec.linear_index(idx)?;
        let path = self.chunk_path(idx);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingChunk {
                    level: idx.level,
                    coords: idx.coords.clone(),
                    path,
                })
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        if bytes.len() != self.manifest.chunk_bytes() {
            return Err(Error::Format(format!(
                "{} has {} bytes, expected {}",
                path.display(),
                bytes.len(),
                self.manifest.chunk_bytes()
            )));
        }
        NdImage::new(self.manifest.chunk_shape.clone(), self.manifest.dtype.decode(&bytes))
    }

    /// Writes every chunk of every level of `pyramid`.
    pub fn write_pyramid(&self, pyramid: &ImagePyramidSource<'_>) -> Result<()> {
        for level in 0..self.spec.levels() {
            for linear in 0..self.spec.chunk_count(level)? {
                let idx = self.spec.index_from_linear(level, linear)?;
                self.write_chunk(&idx, &pyramid.chunk(&idx)?)?;
            }
        }
        Ok(())
    }
}

impl ChunkSource for ChunkStore {
    type Chunk = NdImage;

    fn load(&self, key: ChunkKey<'_>) -> Result<NdImage> {
        self.read_chunk(&key.index())
    }
}

/// Serves chunks cut out of in-memory per-level images.
pub struct ImagePyramidSource<'a> {
    spec: &'a PyramidSpec,
    images: &'a [NdImage],
    chunk_shape: Vec<usize>,
}

impl<'a> ImagePyramidSource<'a> {
    /// `images[k]` must have extent `chunks_at_level_k[i] * chunk_shape[i]`
    /// along every axis.
    pub fn new(spec: &'a PyramidSpec, images: &'a [NdImage], chunk_shape: Vec<usize>) -> Result<Self> {
        if images.len() != spec.levels() || chunk_shape.len() != spec.dim() {
            return Err(Error::domain("image pyramid does not match the chunk grid"));
        }
        for (level, img) in images.iter().enumerate() {
            let want: Vec<usize> = spec
                .axes_at(level)?
                .iter()
                .zip(&chunk_shape)
                .map(|(c, s)| c * s)
                .collect();
            if img.shape() != want {
                return Err(Error::domain(format!(
                    "level {level} image has shape {:?}, expected {want:?}",
                    img.shape()
                )));
            }
        }
        Ok(Self {
            spec,
            images,
            chunk_shape,
        })
    }

    pub fn chunk_shape(&self) -> &[usize] {
        &self.chunk_shape
    }

    pub fn chunk(&self, idx: &ChunkIndex) -> Result<NdImage> {
        self.spec.linear_index(idx)?;
        let origin: Vec<usize> = idx
            .coords
            .iter()
            .zip(&self.chunk_shape)
            .map(|(c, s)| c * s)
            .collect();
        self.images[idx.level].extract_block(&origin, &self.chunk_shape)
    }
}

impl ChunkSource for ImagePyramidSource<'_> {
    type Chunk = NdImage;

    fn load(&self, key: ChunkKey<'_>) -> Result<NdImage> {
        self.chunk(&key.index())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pyramid() -> (PyramidSpec, Vec<NdImage>) {
        let spec = PyramidSpec::new(2, 2, vec![2, 4]).unwrap();
        let l0 = NdImage::new(vec![6, 12], (0..72).map(|v| v as f64 * 0.5).collect()).unwrap();
        let l1 = l0.mean_pool2().unwrap();
        (spec, vec![l0, l1])
    }

    #[test]
    fn round_trips_through_disk() {
        let (spec, images) = pyramid();
        let src = ImagePyramidSource::new(&spec, &images, vec![3, 3]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for dtype in [DType::F64, DType::F32, DType::U16, DType::U8] {
            let root = dir.path().join(format!("{dtype:?}"));
            let store = ChunkStore::create(&root, StoreManifest::new(&spec, vec![3, 3], dtype)).unwrap();
            store.write_pyramid(&src).unwrap();
            let reopened = ChunkStore::open(&root).unwrap();
            assert_eq!(reopened.spec(), &spec);
            let idx = ChunkIndex::new(0, [1, 2]);
            let got = reopened.read_chunk(&idx).unwrap();
            let want = src.chunk(&idx).unwrap();
            for (g, w) in got.data().iter().zip(want.data()) {
                let tol = if matches!(dtype, DType::U8 | DType::U16) { 0.5 } else { 1e-6 };
                assert!((g - w).abs() <= tol, "{dtype:?}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn chunk_file_is_raw_little_endian() {
        let (spec, images) = pyramid();
        let src = ImagePyramidSource::new(&spec, &images, vec![3, 3]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let store = ChunkStore::create(dir.path(), StoreManifest::new(&spec, vec![3, 3], DType::F32)).unwrap();
        store.write_pyramid(&src).unwrap();
        let bytes = fs::read(dir.path().join("level_0").join("0_1.bin")).unwrap();
        assert_eq!(bytes.len(), 9 * 4);
        // Chunk (0, 1) starts at pixel (0, 3), value 1.5.
        assert_eq!(f32::from_le_bytes(bytes[0..4].try_into().unwrap()), 1.5);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest["dtype"], "f32");
        assert_eq!(manifest["chunk_shape"], serde_json::json!([3, 3]));
    }

    #[test]
    fn missing_and_malformed_chunks() {
        let (spec, _) = pyramid();
        let dir = tempfile::tempdir().unwrap();
        let store = ChunkStore::create(dir.path(), StoreManifest::new(&spec, vec![3, 3], DType::U8)).unwrap();
        let idx = ChunkIndex::new(1, [0, 1]);
        match store.read_chunk(&idx) {
            Err(Error::MissingChunk { level, coords, .. }) => {
                assert_eq!((level, coords), (1, vec![0, 1]));
            }
            other => panic!("expected missing chunk, got {other:?}"),
        }
        fs::write(store.chunk_path(&idx), [1u8, 2, 3]).unwrap();
        assert!(matches!(store.read_chunk(&idx), Err(Error::Format(_))));
        assert!(store.read_chunk(&ChunkIndex::new(1, [1, 0])).is_err());
    }

    #[test]
    fn rejects_bad_manifests() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ChunkStore::open(dir.path()).is_err());
        let (spec, _) = pyramid();
        let mut m = StoreManifest::new(&spec, vec![3, 3], DType::U8);
        m.version = 9;
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(ChunkStore::open(dir.path()), Err(Error::Format(_))));
    }
}
