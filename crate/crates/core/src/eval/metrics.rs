use std::collections::BTreeMap;

use crate::corpus::EmbeddingStore;
use crate::scalar::{l2_distance_f64, Scalar};
use crate::{Error, Result};

/// Two-sided normal quantile for 95% coverage.
pub const Z_95: f64 = 1.96;

/// Fraction of 1-based ranks that are `≤ k`.
pub fn recall_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("recall of an empty rank list".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::InvalidArgument("ranks are 1-based".into()));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Median rank; for an even count, the lower of the two middle values.
pub fn median_rank(ranks: &[usize]) -> Result<usize> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("median of an empty rank list".into()));
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// L2 distance between two clips' embeddings in every declared face space.
pub fn perceptual_loss(store: &EmbeddingStore, predicted_id: &str, ground_truth_id: &str) -> Result<BTreeMap<String, f64>> {
    store
        .face_spaces()
        .iter()
        .map(|space| {
            let p = store.face_embedding(predicted_id, &space.name)?;
            let g = store.face_embedding(ground_truth_id, &space.name)?;
            Ok((space.name.clone(), l2_distance(p, g)?))
        })
        .collect()
}

pub fn l2_distance<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(l2_distance_f64(a, b))
}

/// Normal-approximation 95% interval of the mean:
/// `mean ± 1.96 · s / √n` with the sample standard deviation `s`.
pub fn ci95<T: Scalar>(values: &[T]) -> Result<(T, T)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a confidence interval needs at least 2 values, got {n}"
        )));
    }
    // Work with offsets from the first value so a constant input has an exact
    // mean and exactly zero spread.
    let origin = values[0].to_f64_lossless();
    let offset = values.iter().map(|v| v.to_f64_lossless() - origin).sum::<f64>() / n as f64;
    let mean = origin + offset;
    let var = values
        .iter()
        .map(|v| {
            let d = v.to_f64_lossless() - origin - offset;
            d * d
        })
        .sum::<f64>()
        / (n - 1) as f64;
    let half = Z_95 * var.sqrt() / (n as f64).sqrt();
    Ok((T::from_f64_rounded(mean - half), T::from_f64_rounded(mean + half)))
}

pub fn mean<T: Scalar>(values: &[T]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().map(|v| v.to_f64_lossless()).sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClipData, FaceSpace, LoadOptions, Split};

    #[test]
    fn recall_examples() {
        assert!((recall_at_k(&[1, 2, 3], 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(recall_at_k(&[1, 5, 3], 5).unwrap(), 1.0);
        assert!(recall_at_k(&[], 5).is_err());
        assert!(recall_at_k(&[0], 5).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_rank(&[5]).unwrap(), 5);
        assert_eq!(median_rank(&[100, 1, 3]).unwrap(), 3);
        assert_eq!(median_rank(&[4, 1, 3, 2]).unwrap(), 2);
        assert!(median_rank(&[]).is_err());
    }

    #[test]
    fn ci_examples() {
        assert_eq!(ci95(&[2.5f64, 2.5, 2.5]).unwrap(), (2.5, 2.5));
        let (lo, hi) = ci95(&[0.0f64, 2.0]).unwrap();
        assert!((lo - -0.96).abs() < 1e-12 && (hi - 2.96).abs() < 1e-12);
        assert!(ci95(&[1.0f64]).is_err());
    }

    #[test]
    fn ci_shrinks_with_replication() {
        let base = [0.0f64, 1.0, 4.0, 2.0];
        let width = |v: &[f64]| {
            let (lo, hi) = ci95(v).unwrap();
            hi - lo
        };
        let w1 = width(&base);
        let rep: Vec<f64> = base.iter().cycle().take(base.len() * 16).copied().collect();
        let w16 = width(&rep);
        // replicating 16× divides √n by 4; s shifts slightly through the n−1 denominator
        let s1 = (base.iter().map(|x| (x - 1.75f64).powi(2)).sum::<f64>() / 3.0).sqrt();
        let s16 = (rep.iter().map(|x| (x - 1.75f64).powi(2)).sum::<f64>() / 63.0).sqrt();
        assert!((w1 - 2.0 * Z_95 * s1 / 2.0).abs() < 1e-12);
        assert!((w16 - 2.0 * Z_95 * s16 / 8.0).abs() < 1e-12);
        assert!(w16 < w1 / 3.5);
    }

    #[test]
    fn perceptual_examples() {
        let spaces = vec![FaceSpace { name: "f".into(), dim: 3 }];
        let clips = vec![
            ClipData::new("a", "t", Split::Test, vec![1.0], vec![0.0]).with_face("f", vec![1.0, 0.0, 0.0]),
            ClipData::new("b", "t", Split::Test, vec![1.0], vec![0.0]).with_face("f", vec![0.0, 1.0, 0.0]),
            ClipData::new("c", "t", Split::Test, vec![1.0], vec![0.0]).with_face("f", vec![1.0, 2.0, 2.0]),
            ClipData::new("z", "t", Split::Test, vec![1.0], vec![0.0]).with_face("f", vec![0.0, 0.0, 0.0]),
            ClipData::new("m", "t", Split::Test, vec![1.0], vec![0.0]),
        ];
        let (store, _) = EmbeddingStore::from_clips(1, spaces, clips, LoadOptions::default()).unwrap();
        assert_eq!(perceptual_loss(&store, "a", "a").unwrap()["f"], 0.0);
        assert!((perceptual_loss(&store, "a", "b").unwrap()["f"] - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(perceptual_loss(&store, "c", "z").unwrap()["f"], 3.0);
        assert_eq!(perceptual_loss(&store, "z", "c").unwrap()["f"], 3.0);
        assert!(perceptual_loss(&store, "a", "m").is_err());
    }
}
