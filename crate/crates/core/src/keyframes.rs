//! Keyframe selection from a listener's expression-norm signal.
//!
//! Peak convention: index `i` is a peak when the signal strictly rises into it
//! and strictly falls out of it. A flat plateau strictly above both
//! neighbours counts once, at `floor((left + right) / 2)`. The first and last
//! samples are never peaks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingStore;
use crate::{Error, Result};

/// Default number of keyframes per clip.
pub const DEFAULT_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyframeMode {
    Peaks,
    Uniform,
    FallbackUniform,
}

impl fmt::Display for KeyframeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyframeMode::Peaks => "peaks",
            KeyframeMode::Uniform => "uniform",
            KeyframeMode::FallbackUniform => "fallback_uniform",
        })
    }
}

/// Requested selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Peaks,
    Uniform,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Peaks => "peaks",
            Strategy::Uniform => "uniform",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "peaks" => Ok(Strategy::Peaks),
            "uniform" => Ok(Strategy::Uniform),
            other => Err(format!("unknown keyframe mode `{other}` (expected peaks|uniform)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeSet {
    pub clip_id: String,
    /// Sorted, unique frame indices.
    pub indices: Vec<usize>,
    pub mode: KeyframeMode,
}

/// Keyframes for every clip of a store, keyed by clip id.
pub type KeyframeMap = BTreeMap<String, KeyframeSet>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeOptions {
    pub k: usize,
    pub strategy: Strategy,
    /// Peaks lower than this are ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_height: Option<f64>,
}

impl Default for KeyframeOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            strategy: Strategy::Peaks,
            min_height: None,
        }
    }
}

/// Interior local maxima of `signal` as `(index, height)`, sorted by index.
pub fn find_peaks<T: PartialOrd + Copy>(signal: &[T]) -> Vec<(usize, T)> {
    let n = signal.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < n - 1 {
        if signal[i - 1] < signal[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && signal[ahead] == signal[i] {
                ahead += 1;
            }
            if signal[ahead] < signal[i] {
                let right = ahead - 1;
                peaks.push(((i + right) / 2, signal[i]));
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// `floor((j + 0.5) · n_frames / k)` for `j = 0..k`, deduplicated in order.
pub fn uniform_frames(n_frames: usize, k: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(k);
    for j in 0..k {
        let idx = (2 * j + 1) * n_frames / (2 * k);
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    out
}

/// Top-`k` peaks of `track` by height (ties to the lower index).
///
/// `excluded[i] == true` removes frame `i` from candidacy; used for frames
/// whose image embedding is the zero vector. Falls back to uniform sampling
/// when no admissible peak exists.
pub fn select_keyframes<T: PartialOrd + Copy + Into<f64>>(
    clip_id: &str,
    track: &[T],
    excluded: Option<&[bool]>,
    k: usize,
    min_height: Option<f64>,
) -> Result<KeyframeSet> {
    if k < 1 {
        return Err(Error::Keyframes("k must be at least 1".into()));
    }
    if track.is_empty() {
        return Err(Error::Keyframes(format!("clip `{clip_id}` has an empty track")));
    }
    let is_excluded = |i: usize| excluded.is_some_and(|m| m.get(i).copied().unwrap_or(false));

    let mut peaks: Vec<(usize, f64)> = find_peaks(track)
        .into_iter()
        .map(|(i, h)| (i, h.into()))
        .filter(|&(i, h)| !is_excluded(i) && min_height.map_or(true, |m| h >= m))
        .collect();

    if peaks.is_empty() {
        return Ok(KeyframeSet {
            clip_id: clip_id.to_string(),
            indices: admissible_uniform(track.len(), k, excluded),
            mode: KeyframeMode::FallbackUniform,
        });
    }

    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    peaks.truncate(k);
    let mut indices: Vec<usize> = peaks.into_iter().map(|(i, _)| i).collect();
    indices.sort_unstable();
    Ok(KeyframeSet {
        clip_id: clip_id.to_string(),
        indices,
        mode: KeyframeMode::Peaks,
    })
}

/// Uniform frames minus excluded ones; if that removes everything, the
/// unfiltered uniform set is kept so the clip still has a frame set.
fn admissible_uniform(n_frames: usize, k: usize, excluded: Option<&[bool]>) -> Vec<usize> {
    let all = uniform_frames(n_frames, k);
    let Some(mask) = excluded else { return all };
    let kept: Vec<usize> = all.iter().copied().filter(|&i| !mask[i]).collect();
    if kept.is_empty() {
        all
    } else {
        kept
    }
}

/// Keyframes of every clip in the store.
pub fn compute_keyframes(store: &EmbeddingStore, options: &KeyframeOptions) -> Result<KeyframeMap> {
    if options.k < 1 {
        return Err(Error::Keyframes("k must be at least 1".into()));
    }
    store
        .clips()
        .enumerate()
        .map(|(i, clip)| {
            let id = clip.record.clip_id.clone();
            let zeros = store.zero_frames(i);
            let set = match options.strategy {
                Strategy::Peaks => {
                    select_keyframes(&id, &clip.track, Some(zeros), options.k, options.min_height)?
                }
                Strategy::Uniform => KeyframeSet {
                    clip_id: id.clone(),
                    indices: admissible_uniform(clip.record.n_frames, options.k, Some(zeros)),
                    mode: KeyframeMode::Uniform,
                },
            };
            Ok((id, set))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_interior_maximum() {
        assert_eq!(find_peaks(&[0, 1, 0]), vec![(1, 1)]);
    }

    #[test]
    fn monotone_has_no_peak() {
        assert!(find_peaks(&[1, 2, 3, 4]).is_empty());
        assert!(find_peaks(&[4, 3, 2, 1]).is_empty());
    }

    #[test]
    fn plateau_reports_left_middle() {
        assert_eq!(find_peaks(&[0, 2, 2, 0]), vec![(1, 2)]);
        assert_eq!(find_peaks(&[0, 2, 2, 2, 0]), vec![(2, 2)]);
        // plateau running into the last sample is not a peak
        assert!(find_peaks(&[0, 2, 2]).is_empty());
        // plateau that is a shoulder, not a maximum
        assert!(find_peaks(&[0, 2, 2, 3]).is_empty());
    }

    #[test]
    fn short_signals() {
        assert!(find_peaks::<f32>(&[]).is_empty());
        assert!(find_peaks(&[1.0]).is_empty());
        assert!(find_peaks(&[1.0, 2.0]).is_empty());
    }

    #[test]
    fn nan_is_never_a_peak() {
        assert!(find_peaks(&[0.0, f64::NAN, 0.0]).is_empty());
    }

    #[test]
    fn top_two_peaks() {
        let track = [0.0f32, 5., 0., 0., 0., 0., 0., 2., 0., 4., 0.];
        let set = select_keyframes("c", &track, None, 2, None).unwrap();
        assert_eq!(set.indices, vec![1, 9]);
        assert_eq!(set.mode, KeyframeMode::Peaks);
    }

    #[test]
    fn constant_track_falls_back() {
        let set = select_keyframes("c", &[1.0f32; 4], None, 2, None).unwrap();
        assert_eq!(set.mode, KeyframeMode::FallbackUniform);
        assert_eq!(set.indices, uniform_frames(4, 2));
    }

    #[test]
    fn fewer_peaks_than_k() {
        let set = select_keyframes("c", &[0.0f32, 3.0, 0.0], None, 5, None).unwrap();
        assert_eq!(set.indices, vec![1]);
    }

    #[test]
    fn k_zero_rejected() {
        assert!(select_keyframes("c", &[0.0f32, 3.0, 0.0], None, 0, None).is_err());
    }

    #[test]
    fn equal_heights_prefer_lower_index() {
        let set = select_keyframes("c", &[0.0f32, 1., 0., 1., 0., 1., 0.], None, 2, None).unwrap();
        assert_eq!(set.indices, vec![1, 3]);
    }

    #[test]
    fn excluded_frames_are_skipped() {
        let track = [0.0f32, 5., 0., 4., 0., 3., 0.];
        let mask = [false, true, false, false, false, false, false];
        let set = select_keyframes("c", &track, Some(&mask), 2, None).unwrap();
        assert_eq!(set.indices, vec![3, 5]);
    }

    #[test]
    fn min_height_filters() {
        let track = [0.0f32, 5., 0., 1., 0.];
        let set = select_keyframes("c", &track, None, 4, Some(2.0)).unwrap();
        assert_eq!(set.indices, vec![1]);
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_frames(10, 2), vec![2, 7]);
        assert_eq!(uniform_frames(1, 3), vec![0]);
        assert_eq!(
            uniform_frames(384, 8),
            vec![24, 72, 120, 168, 216, 264, 312, 360]
        );
    }

    #[test]
    fn uniform_matches_float_formula() {
        for n in 1..60usize {
            for k in 1..20usize {
                let mut expect: Vec<usize> = Vec::new();
                for j in 0..k {
                    let v = ((j as f64 + 0.5) * n as f64 / k as f64).floor() as usize;
                    if expect.last() != Some(&v) {
                        expect.push(v);
                    }
                }
                assert_eq!(uniform_frames(n, k), expect, "n={n} k={k}");
            }
        }
    }
}
