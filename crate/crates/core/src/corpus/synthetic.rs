//! Seeded synthetic stores for tests, fixtures and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::manifest::{FaceSpace, Split};
use super::split::split_ids;
use super::store::{ClipData, EmbeddingStore, LoadOptions};
use crate::Result;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_clips: usize,
    pub n_frames: usize,
    pub image_dim: usize,
    pub n_train: usize,
    pub seed: u64,
    pub face_spaces: Vec<FaceSpace>,
    /// Expression bursts injected into each track.
    pub bursts_per_clip: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_clips: 16,
            n_frames: 32,
            image_dim: 8,
            n_train: 8,
            seed: 0,
            face_spaces: vec![FaceSpace {
                name: "face".into(),
                dim: 4,
            }],
            bursts_per_clip: 3,
        }
    }
}

/// Isotropic Gaussian direction on the unit sphere.
pub fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| (x / n) as f32).collect();
        }
    }
}

/// Expression-norm track: low noise floor with Gaussian-shaped bursts.
pub fn random_track<R: Rng>(rng: &mut R, n_frames: usize, bursts: usize) -> Vec<f32> {
    let mut track: Vec<f64> = (0..n_frames).map(|_| rng.gen_range(0.0..0.05)).collect();
    for _ in 0..bursts {
        let center = rng.gen_range(0..n_frames) as f64;
        let height = rng.gen_range(0.5..3.0);
        let width = rng.gen_range(1.0..4.0);
        for (t, v) in track.iter_mut().enumerate() {
            let z = (t as f64 - center) / width;
            *v += height * (-0.5 * z * z).exp();
        }
    }
    track.into_iter().map(|v| v as f32).collect()
}

/// Store of random unit frame embeddings and bursty expression tracks.
pub fn random_store(spec: &SyntheticSpec) -> Result<EmbeddingStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids: Vec<String> = (0..spec.n_clips).map(|i| format!("clip{i:05}")).collect();
    let split = split_ids(ids.clone(), spec.n_train, spec.seed)?;
    let clips = ids
        .into_iter()
        .map(|id| {
            let image = (0..spec.n_frames)
                .flat_map(|_| random_unit(&mut rng, spec.image_dim))
                .collect();
            let track = random_track(&mut rng, spec.n_frames, spec.bursts_per_clip);
            let which = if split.train.binary_search(&id).is_ok() {
                Split::Train
            } else {
                Split::Test
            };
            let mut clip = ClipData::new(id.clone(), format!("transcript of {id}"), which, image, track);
            for space in &spec.face_spaces {
                clip = clip.with_face(
                    space.name.clone(),
                    (0..space.dim).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect(),
                );
            }
            clip
        })
        .collect();
    Ok(EmbeddingStore::from_clips(spec.image_dim, spec.face_spaces.clone(), clips, LoadOptions::default())?.0)
}

/// Scenario where each clip's listener frames lean towards its own goal
/// description and away from its anti-goal description.
#[derive(Debug, Clone)]
pub struct AlignedSpec {
    pub n_clips: usize,
    pub n_frames: usize,
    pub image_dim: usize,
    pub n_train: usize,
    pub seed: u64,
    /// Weight of the goal direction in each frame before normalization.
    pub alignment: f64,
    /// Weight of the anti-goal direction added to each negative description.
    pub anti_correlation: f64,
    pub face_dim: usize,
}

impl Default for AlignedSpec {
    fn default() -> Self {
        Self {
            n_clips: 40,
            n_frames: 24,
            image_dim: 16,
            n_train: 24,
            seed: 0,
            alignment: 0.6,
            anti_correlation: 0.8,
            face_dim: 6,
        }
    }
}

/// Build an aligned scenario. Descriptions are registered in the store's
/// in-memory text cache, so no embedder is needed to score them.
pub fn aligned_store(
    spec: &AlignedSpec,
) -> Result<(EmbeddingStore, std::collections::BTreeMap<String, crate::attributes::ClipAttributes>)> {
    use crate::attributes::{AttributeDescription, ClipAttributes, GoalRole};
    use crate::corpus::text_key;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ids: Vec<String> = (0..spec.n_clips).map(|i| format!("clip{i:05}")).collect();
    let split = split_ids(ids.clone(), spec.n_train, spec.seed)?;
    let face = FaceSpace {
        name: "face".into(),
        dim: spec.face_dim,
    };

    let mut clips = Vec::with_capacity(ids.len());
    let mut texts = Vec::with_capacity(ids.len());
    for id in &ids {
        let positive = random_unit(&mut rng, spec.image_dim);
        let noise = random_unit(&mut rng, spec.image_dim);
        let negative = normalize(
            positive
                .iter()
                .zip(&noise)
                .map(|(&p, &n)| -spec.anti_correlation * p as f64 + (1.0 - spec.anti_correlation) * n as f64),
        );
        let image: Vec<f32> = (0..spec.n_frames)
            .flat_map(|_| {
                let n = random_unit(&mut rng, spec.image_dim);
                normalize(
                    positive
                        .iter()
                        .zip(&n)
                        .map(|(&p, &n)| spec.alignment * p as f64 + (1.0 - spec.alignment) * n as f64),
                )
            })
            .collect();
        let track = random_track(&mut rng, spec.n_frames, 3);
        let which = if split.train.binary_search(id).is_ok() {
            Split::Train
        } else {
            Split::Test
        };
        // face embedding tracks the goal direction so perceptual loss is meaningful
        let face_vec: Vec<f32> = positive.iter().take(spec.face_dim).copied().collect();
        let face_vec = if face_vec.len() < spec.face_dim {
            let mut v = face_vec;
            v.resize(spec.face_dim, 0.0);
            v
        } else {
            face_vec
        };
        clips.push(
            ClipData::new(id.clone(), format!("speaker transcript for {id}"), which, image, track)
                .with_face("face", face_vec),
        );
        texts.push((id.clone(), positive, negative));
    }

    let (store, _) = EmbeddingStore::from_clips(spec.image_dim, vec![face], clips, LoadOptions::default())?;
    let mut attrs = std::collections::BTreeMap::new();
    for (id, pos, neg) in texts {
        let describe = |role: GoalRole, v: Vec<f32>| -> Result<AttributeDescription> {
            let text = format!("{role} description for {id}");
            store.text_cache().insert(text_key(&text), v)?;
            Ok(AttributeDescription {
                goal: match role {
                    GoalRole::Positive => "be social".into(),
                    GoalRole::Negative => "not be social".into(),
                },
                prompt_hash: format!("synthetic-{role}-{id}"),
                raw_completion: text.clone(),
                text,
                role,
            })
        };
        let entry = ClipAttributes {
            positive: describe(GoalRole::Positive, pos)?,
            negative: describe(GoalRole::Negative, neg)?,
        };
        attrs.insert(id, entry);
    }
    Ok((store, attrs))
}

fn normalize(v: impl Iterator<Item = f64>) -> Vec<f32> {
    let v: Vec<f64> = v.collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| (x / n) as f32).collect()
}
