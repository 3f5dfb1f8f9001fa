use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::f32io::{read_f32_file, write_f32_file};
use super::manifest::{ClipFiles, ClipRecord, FaceSpace, Manifest, MANIFEST_VERSION};
use super::text_cache::TextCache;
use crate::{Error, Result};

/// Rows whose norm is already this close to one are left untouched, which
/// keeps normalization idempotent and write/load round trips bit-exact.
const RENORMALIZE_THRESHOLD: f64 = 1e-7;

const DEFAULT_TEXT_CACHE: &str = "text_cache.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// L2-normalize image-embedding rows. Disable for raw-score ablations.
    pub normalize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { normalize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ZeroRow {
    pub clip_id: String,
    pub frame: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub n_clips: usize,
    pub n_frames: usize,
    pub renormalized_rows: usize,
    pub zero_rows: Vec<ZeroRow>,
    pub text_cache_entries: usize,
}

/// In-memory arrays of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipData {
    pub record: ClipRecord,
    /// `n_frames × image_dim`, row-major.
    pub image: Vec<f32>,
    /// Per-frame expression-parameter norms.
    pub track: Vec<f32>,
    /// One vector per face space.
    pub faces: BTreeMap<String, Vec<f32>>,
}

impl ClipData {
    /// Clip with placeholder file references; [`write_store`] assigns real ones.
    pub fn new(
        clip_id: impl Into<String>,
        transcript: impl Into<String>,
        split: super::Split,
        image: Vec<f32>,
        track: Vec<f32>,
    ) -> Self {
        let clip_id = clip_id.into();
        let n_frames = track.len();
        Self {
            record: ClipRecord {
                video_id: clip_id.clone(),
                clip_id,
                start_frame: 0,
                n_frames,
                fps: super::DEFAULT_FPS,
                transcript: transcript.into(),
                split,
                files: ClipFiles::default(),
            },
            image,
            track,
            faces: BTreeMap::new(),
        }
    }

    pub fn with_face(mut self, space: impl Into<String>, v: Vec<f32>) -> Self {
        self.faces.insert(space.into(), v);
        self
    }
}

/// Immutable databank of listener clips.
///
/// Clips are held sorted by `clip_id`. The only interior mutability is the
/// text cache, which accepts new entries behind a lock.
#[derive(Debug)]
pub struct EmbeddingStore {
    image_dim: usize,
    face_spaces: Vec<FaceSpace>,
    clips: Vec<ClipData>,
    zero_frames: Vec<Vec<bool>>,
    text_cache: TextCache,
    normalized: bool,
    metadata: serde_json::Value,
}

impl EmbeddingStore {
    /// Validate and normalize in-memory clip data.
    pub fn from_clips(
        image_dim: usize,
        face_spaces: Vec<FaceSpace>,
        clips: Vec<ClipData>,
        options: LoadOptions,
    ) -> Result<(Self, LoadReport)> {
        Self::assemble(
            image_dim,
            face_spaces,
            clips,
            TextCache::in_memory(),
            options,
            serde_json::Value::Null,
        )
    }

    fn assemble(
        image_dim: usize,
        face_spaces: Vec<FaceSpace>,
        mut clips: Vec<ClipData>,
        text_cache: TextCache,
        options: LoadOptions,
        metadata: serde_json::Value,
    ) -> Result<(Self, LoadReport)> {
        if image_dim == 0 {
            return Err(Error::InvalidArgument("image_dim must be positive".into()));
        }
        let mut seen = HashSet::new();
        for clip in &clips {
            if !seen.insert(clip.record.clip_id.clone()) {
                return Err(Error::load(&clip.record.clip_id, "duplicate clip_id"));
            }
        }
        clips.sort_by(|a, b| a.record.clip_id.cmp(&b.record.clip_id));

        let mut report = LoadReport {
            n_clips: clips.len(),
            text_cache_entries: text_cache.len(),
            ..LoadReport::default()
        };
        let mut zero_frames = Vec::with_capacity(clips.len());
        for clip in &mut clips {
            validate_clip(clip, image_dim, &face_spaces)?;
            let mut zeros = vec![false; clip.record.n_frames];
            for (t, row) in clip.image.chunks_exact_mut(image_dim).enumerate() {
                let norm = crate::scalar::l2_norm_f64(row);
                if norm == 0.0 {
                    zeros[t] = true;
                    report.zero_rows.push(ZeroRow {
                        clip_id: clip.record.clip_id.clone(),
                        frame: t,
                    });
                } else if options.normalize && (norm - 1.0).abs() > RENORMALIZE_THRESHOLD {
                    for x in row.iter_mut() {
                        *x = (*x as f64 / norm) as f32;
                    }
                    report.renormalized_rows += 1;
                }
            }
            report.n_frames += clip.record.n_frames;
            zero_frames.push(zeros);
        }
        if !report.zero_rows.is_empty() {
            log::warn!(
                "{} zero image-embedding rows retained and excluded from keyframe candidacy",
                report.zero_rows.len()
            );
        }

        Ok((
            Self {
                image_dim,
                face_spaces,
                clips,
                zero_frames,
                text_cache,
                normalized: options.normalize,
                metadata,
            },
            report,
        ))
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn face_spaces(&self) -> &[FaceSpace] {
        &self.face_spaces
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Clips in ascending `clip_id` order.
    pub fn clips(&self) -> impl ExactSizeIterator<Item = &ClipData> {
        self.clips.iter()
    }

    pub fn clip_ids(&self) -> impl ExactSizeIterator<Item = &str> {
        self.clips.iter().map(|c| c.record.clip_id.as_str())
    }

    pub fn position(&self, clip_id: &str) -> Option<usize> {
        self.clips
            .binary_search_by(|c| c.record.clip_id.as_str().cmp(clip_id))
            .ok()
    }

    pub fn clip(&self, clip_id: &str) -> Result<&ClipData> {
        self.position(clip_id)
            .map(|i| &self.clips[i])
            .ok_or_else(|| Error::UnknownClip(clip_id.to_string()))
    }

    pub fn clip_at(&self, index: usize) -> &ClipData {
        &self.clips[index]
    }

    /// Image-embedding row of one frame.
    pub fn frame(&self, clip_index: usize, frame: usize) -> &[f32] {
        let d = self.image_dim;
        &self.clips[clip_index].image[frame * d..(frame + 1) * d]
    }

    /// Per-frame flags marking zero image-embedding rows.
    pub fn zero_frames(&self, clip_index: usize) -> &[bool] {
        &self.zero_frames[clip_index]
    }

    pub fn face_embedding(&self, clip_id: &str, space: &str) -> Result<&[f32]> {
        self.clip(clip_id)?
            .faces
            .get(space)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::load(clip_id, format!("no embedding in face space `{space}`")))
    }

    pub fn text_cache(&self) -> &TextCache {
        &self.text_cache
    }

    pub fn metadata(&self) -> &serde_json::Value {
        &self.metadata
    }
}

fn validate_clip(clip: &ClipData, image_dim: usize, spaces: &[FaceSpace]) -> Result<()> {
    let r = &clip.record;
    let id = r.clip_id.as_str();
    if r.n_frames == 0 {
        return Err(Error::load(id, "n_frames must be at least 1"));
    }
    if r.transcript.trim().is_empty() {
        return Err(Error::load(id, "empty transcript"));
    }
    if clip.image.len() != r.n_frames * image_dim {
        return Err(Error::load(
            id,
            if image_dim > 0 && clip.image.len() % image_dim == 0 {
                format!(
                    "shape mismatch: image embeddings hold {} frames, manifest says {}",
                    clip.image.len() / image_dim,
                    r.n_frames
                )
            } else {
                format!(
                    "shape mismatch: image embeddings hold {} values, not a multiple of image_dim {}",
                    clip.image.len(),
                    image_dim
                )
            },
        ));
    }
    if clip.track.len() != r.n_frames {
        return Err(Error::load(
            id,
            format!(
                "shape mismatch: expression track has {} values, expected {}",
                clip.track.len(),
                r.n_frames
            ),
        ));
    }
    if let Some(i) = clip.image.iter().position(|x| !x.is_finite()) {
        return Err(Error::load(
            id,
            format!("non-finite image embedding value at frame {}", i / image_dim),
        ));
    }
    if let Some(i) = clip.track.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::load(
            id,
            format!("expression track value at frame {i} must be finite and non-negative"),
        ));
    }
    for (space, v) in &clip.faces {
        let Some(decl) = spaces.iter().find(|s| &s.name == space) else {
            return Err(Error::load(id, format!("undeclared face space `{space}`")));
        };
        if v.len() != decl.dim {
            return Err(Error::load(
                id,
                format!(
                    "shape mismatch: face space `{space}` has {} values, expected {}",
                    v.len(),
                    decl.dim
                ),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::load(id, format!("non-finite value in face space `{space}`")));
        }
    }
    Ok(())
}

pub fn load_store(manifest_path: &Path) -> Result<(EmbeddingStore, LoadReport)> {
    load_store_with(manifest_path, LoadOptions::default())
}

pub fn load_store_with(
    manifest_path: &Path,
    options: LoadOptions,
) -> Result<(EmbeddingStore, LoadReport)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Manifest {
            path: manifest_path.to_path_buf(),
            message: format!("unsupported version {}", manifest.version),
        });
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut clips = Vec::with_capacity(manifest.clips.len());
    for record in manifest.clips {
        let id = record.clip_id.clone();
        let read = |rel: &Path| {
            read_f32_file(&base.join(rel)).map_err(|e| Error::load(&id, e.to_string()))
        };
        let image = read(&record.files.image_embeddings)?;
        let track = read(&record.files.expression_track)?;
        let mut faces = BTreeMap::new();
        for (space, rel) in &record.files.face {
            faces.insert(space.clone(), read(rel)?);
        }
        clips.push(ClipData {
            record,
            image,
            track,
            faces,
        });
    }

    let cache_path = base.join(
        manifest
            .text_cache
            .unwrap_or_else(|| PathBuf::from(DEFAULT_TEXT_CACHE)),
    );
    let text_cache = TextCache::open(&cache_path, manifest.image_dim)?;

    EmbeddingStore::assemble(
        manifest.image_dim,
        manifest.face_spaces,
        clips,
        text_cache,
        options,
        manifest.metadata,
    )
}

/// Write `store` as a manifest plus array files under `dir`; returns the
/// manifest path. Array files are named by clip position.
pub fn write_store(store: &EmbeddingStore, dir: &Path, manifest_name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(store.len());
    for (i, clip) in store.clips().enumerate() {
        let stem = format!("clips/clip_{i:05}");
        let mut files = ClipFiles {
            image_embeddings: PathBuf::from(format!("{stem}.img.f32")),
            expression_track: PathBuf::from(format!("{stem}.expr.f32")),
            face: BTreeMap::new(),
        };
        write_f32_file(&dir.join(&files.image_embeddings), &clip.image)?;
        write_f32_file(&dir.join(&files.expression_track), &clip.track)?;
        for (space, v) in &clip.faces {
            let rel = PathBuf::from(format!("{stem}.face.{space}.f32"));
            write_f32_file(&dir.join(&rel), v)?;
            files.face.insert(space.clone(), rel);
        }
        records.push(ClipRecord {
            files,
            ..clip.record.clone()
        });
    }
    store
        .text_cache()
        .write_snapshot(&dir.join(DEFAULT_TEXT_CACHE))?;

    let manifest = Manifest {
        version: MANIFEST_VERSION,
        image_dim: store.image_dim(),
        face_spaces: store.face_spaces().to_vec(),
        clips: records,
        text_cache: None,
        metadata: store.metadata().clone(),
    };
    let path = dir.join(manifest_name);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    fn one_clip(image: Vec<f32>, n: usize) -> ClipData {
        ClipData::new("c0", "hello there", Split::Test, image, vec![0.0; n])
    }

    #[test]
    fn normalizes_rows_and_flags_zero_rows() {
        let clip = one_clip(vec![3., 4., 0., 1., 1., 0., 0., 0.], 4);
        let (store, report) =
            EmbeddingStore::from_clips(2, vec![], vec![clip], LoadOptions::default()).unwrap();
        assert_eq!(store.frame(0, 0), &[0.6, 0.8]);
        assert_eq!(store.frame(0, 1), &[0.0, 1.0]);
        assert_eq!(store.frame(0, 2), &[1.0, 0.0]);
        assert_eq!(store.frame(0, 3), &[0.0, 0.0]);
        assert_eq!(report.zero_rows.len(), 1);
        assert_eq!(report.zero_rows[0].frame, 3);
        assert_eq!(store.zero_frames(0), &[false, false, false, true]);
    }

    #[test]
    fn raw_mode_leaves_rows_alone() {
        let clip = one_clip(vec![3., 4.], 1);
        let (store, _) =
            EmbeddingStore::from_clips(2, vec![], vec![clip], LoadOptions { normalize: false })
                .unwrap();
        assert_eq!(store.frame(0, 0), &[3.0, 4.0]);
    }

    #[test]
    fn shape_mismatch_names_clip() {
        let mut clip = one_clip(vec![0.0; 380 * 2], 380);
        clip.record.n_frames = 384;
        let err = EmbeddingStore::from_clips(2, vec![], vec![clip], LoadOptions::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("c0") && err.contains("shape mismatch"), "{err}");
    }

    #[test]
    fn non_finite_and_negative_values_rejected() {
        let clip = one_clip(vec![f32::NAN, 1.0], 1);
        assert!(EmbeddingStore::from_clips(2, vec![], vec![clip], LoadOptions::default()).is_err());
        let mut clip = one_clip(vec![1.0, 0.0], 1);
        clip.track = vec![-1.0];
        assert!(EmbeddingStore::from_clips(2, vec![], vec![clip], LoadOptions::default()).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = one_clip(vec![1.0, 0.0], 1);
        let b = a.clone();
        assert!(EmbeddingStore::from_clips(2, vec![], vec![a, b], LoadOptions::default()).is_err());
    }

    #[test]
    fn clips_sorted_by_id() {
        let a = ClipData::new("b", "x", Split::Test, vec![1.0, 0.0], vec![0.0]);
        let b = ClipData::new("a", "x", Split::Test, vec![1.0, 0.0], vec![0.0]);
        let (store, _) =
            EmbeddingStore::from_clips(2, vec![], vec![a, b], LoadOptions::default()).unwrap();
        assert_eq!(store.clip_ids().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(store.position("b"), Some(1));
        assert!(store.clip("zz").is_err());
    }
}
