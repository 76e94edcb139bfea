//! Dynamic-time-warping distance between an observed history and candidate
//! reference paths, converted into a normalized path-probability vector.
//!
//! The distance-to-probability mapping is a softmax over negative DTW
//! distances with temperature `tau`; the candidate segment compared against
//! the history is the path portion nearest to it, resampled to the history
//! length.

use thiserror::Error;

use crate::geometry::{CartesianPoint, PathId, ReferencePath};

#[derive(Debug, Error)]
pub enum DtwError {
    #[error("empty point sequence")]
    EmptySequence,
    #[error("no candidate paths")]
    NoCandidates,
}

/// Normalized probability per candidate reference path.
#[derive(Debug, Clone)]
pub struct PathLikelihoods {
    pub entries: Vec<(PathId, f64)>,
}

impl PathLikelihoods {
    /// Path id with the highest probability; earlier entries win ties.
    pub fn most_likely(&self) -> PathId {
        self.entries
            .iter()
            .fold(None::<(PathId, f64)>, |best, &(id, p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((id, p)),
            })
            .expect("likelihoods are non-empty")
            .0
    }

    pub fn probability_of(&self, id: PathId) -> Option<f64> {
        self.entries.iter().find(|(i, _)| *i == id).map(|(_, p)| *p)
    }
}

/// Classic DTW with Euclidean local cost and boundary-to-boundary alignment.
///
/// Steps are {match, insert, delete}; the result is the minimum cumulative
/// cost over all monotone alignments of the two sequences.
pub fn dtw_distance(a: &[CartesianPoint], b: &[CartesianPoint]) -> Result<f64, DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySequence);
    }
    let n = a.len();
    let m = b.len();
    // Rolling rows of the (n+1) x (m+1) cost matrix.
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = a[i - 1].distance(&b[j - 1]);
            curr[j] = cost + prev[j - 1].min(prev[j]).min(curr[j - 1]);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

/// Probability of each candidate path given an observed Cartesian history.
///
/// `P(path) ∝ exp(-dtw(history, segment(path)) / tau)`, where the segment is
/// the candidate portion between the projections of the history endpoints,
/// resampled to the history length. Projection ignores the corridor limit so
/// that unlikely candidates still receive a (small) probability.
pub fn path_likelihoods(
    history: &[CartesianPoint],
    candidates: &[ReferencePath],
    tau: f64,
) -> Result<PathLikelihoods, DtwError> {
    if candidates.is_empty() {
        return Err(DtwError::NoCandidates);
    }
    if history.is_empty() {
        return Err(DtwError::EmptySequence);
    }
    debug_assert!(tau > 0.0);
    let mut distances = Vec::with_capacity(candidates.len());
    for path in candidates {
        let segment = matched_segment(history, path);
        distances.push((path.id, dtw_distance(history, &segment)?));
    }
    // Softmax over -distance/tau, shifted for numerical stability.
    let min = distances
        .iter()
        .map(|&(_, d)| d)
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = distances
        .iter()
        .map(|&(_, d)| (-(d - min) / tau).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(PathLikelihoods {
        entries: distances
            .iter()
            .zip(&weights)
            .map(|(&(id, _), &w)| (id, w / total))
            .collect(),
    })
}

/// Path portion nearest the history, resampled to the history length.
fn matched_segment(history: &[CartesianPoint], path: &ReferencePath) -> Vec<CartesianPoint> {
    let (s_first, _, _) = path.project_unchecked(history.first().unwrap());
    let (s_last, _, _) = path.project_unchecked(history.last().unwrap());
    let origin = path.origin_arc_length();
    let n = history.len();
    if n == 1 {
        let (p, _) = path
            .point_and_tangent(s_first - origin)
            .expect("projection is on the path");
        return vec![p];
    }
    (0..n)
        .map(|k| {
            let s = s_first + (s_last - s_first) * k as f64 / (n - 1) as f64;
            path.point_and_tangent(s - origin)
                .expect("interpolant stays on the path")
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ReferencePath;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pts(coords: &[(f64, f64)]) -> Vec<CartesianPoint> {
        coords.iter().map(|&(x, y)| CartesianPoint::new(x, y)).collect()
    }

    /// Exhaustive minimum over all monotone boundary-to-boundary alignments.
    fn brute_force_dtw(a: &[CartesianPoint], b: &[CartesianPoint]) -> f64 {
        fn go(a: &[CartesianPoint], b: &[CartesianPoint], i: usize, j: usize) -> f64 {
            let cost = a[i].distance(&b[j]);
            if i == a.len() - 1 && j == b.len() - 1 {
                return cost;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(go(a, b, i + 1, j));
            }
            if j + 1 < b.len() {
                best = best.min(go(a, b, i, j + 1));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(go(a, b, i + 1, j + 1));
            }
            cost + best
        }
        go(a, b, 0, 0)
    }

    #[test]
    fn identical_sequences_have_zero_distance() {
        let a = pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)]);
        assert_relative_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_alignment() {
        let a = pts(&[(0.0, 0.0)]);
        let b = pts(&[(3.0, 4.0)]);
        assert_relative_eq!(dtw_distance(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn empty_sequence_rejected() {
        let a = pts(&[(0.0, 0.0)]);
        assert!(matches!(dtw_distance(&a, &[]), Err(DtwError::EmptySequence)));
        assert!(matches!(dtw_distance(&[], &a), Err(DtwError::EmptySequence)));
    }

    #[test]
    fn matches_exhaustive_alignment_on_alphabet_grid() {
        // All sequence pairs over a 3-value alphabet, lengths up to 4 each
        // (the acceptance suite pushes this to length 6).
        let alphabet = [0.0, 1.0, 2.5];
        let seqs_of = |len: usize| -> Vec<Vec<CartesianPoint>> {
            let mut out = vec![Vec::new()];
            for _ in 0..len {
                out = out
                    .into_iter()
                    .flat_map(|s| {
                        alphabet.iter().map(move |&v| {
                            let mut t = s.clone();
                            t.push(CartesianPoint::new(v, 0.0));
                            t
                        })
                    })
                    .collect();
            }
            out
        };
        for la in 1..=4usize {
            for lb in 1..=3usize {
                for a in seqs_of(la) {
                    for b in seqs_of(lb) {
                        let dp = dtw_distance(&a, &b).unwrap();
                        let bf = brute_force_dtw(&a, &b);
                        assert_relative_eq!(dp, bf, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn dtw_is_symmetric_and_nonnegative(
            a in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..8),
            b in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..8),
        ) {
            let a = pts(&a);
            let b = pts(&b);
            let ab = dtw_distance(&a, &b).unwrap();
            let ba = dtw_distance(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!(dtw_distance(&a, &a).unwrap().abs() < 1e-12);
        }

        #[test]
        fn likelihoods_form_a_distribution(
            hist in prop::collection::vec((0.0f64..10.0, -3.0f64..3.0), 2..7),
            offset in 0.5f64..8.0,
        ) {
            let a = ReferencePath::new(
                0,
                vec![CartesianPoint::new(-5.0, 0.0), CartesianPoint::new(15.0, 0.0)],
                4.0,
            ).unwrap();
            let b = ReferencePath::new(
                1,
                vec![CartesianPoint::new(-5.0, offset), CartesianPoint::new(15.0, offset)],
                4.0,
            ).unwrap();
            let like = path_likelihoods(&pts(&hist), &[a, b], 1.0).unwrap();
            let total: f64 = like.entries.iter().map(|(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(like.entries.iter().all(|&(_, p)| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn single_candidate_gets_probability_one() {
        let path = ReferencePath::new(
            0,
            vec![CartesianPoint::new(0.0, 0.0), CartesianPoint::new(10.0, 0.0)],
            4.0,
        )
        .unwrap();
        let hist = pts(&[(1.0, 0.2), (2.0, 0.1), (3.0, 0.0)]);
        let like = path_likelihoods(&hist, &[path], 1.0).unwrap();
        assert_eq!(like.entries.len(), 1);
        assert_relative_eq!(like.entries[0].1, 1.0);
    }

    #[test]
    fn on_path_history_dominates_distant_candidate() {
        let near = ReferencePath::new(
            0,
            vec![CartesianPoint::new(0.0, 0.0), CartesianPoint::new(10.0, 0.0)],
            4.0,
        )
        .unwrap();
        let far = ReferencePath::new(
            1,
            vec![CartesianPoint::new(0.0, 10.0), CartesianPoint::new(10.0, 10.0)],
            4.0,
        )
        .unwrap();
        let hist = pts(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)]);
        let like = path_likelihoods(&hist, &[near, far], 1.0).unwrap();
        // Direct softmax evaluation: d_near = 0, d_far = 4 points * 10 m.
        assert!(like.entries[0].1 > 0.99, "P(near) = {}", like.entries[0].1);
        assert_eq!(like.most_likely(), 0);
    }

    #[test]
    fn equidistant_candidates_split_evenly() {
        let up = ReferencePath::new(
            0,
            vec![CartesianPoint::new(0.0, 2.0), CartesianPoint::new(10.0, 2.0)],
            4.0,
        )
        .unwrap();
        let down = ReferencePath::new(
            1,
            vec![CartesianPoint::new(0.0, -2.0), CartesianPoint::new(10.0, -2.0)],
            4.0,
        )
        .unwrap();
        let hist = pts(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let like = path_likelihoods(&hist, &[up, down], 1.0).unwrap();
        assert_relative_eq!(like.entries[0].1, 0.5, epsilon = 1e-12);
        assert_relative_eq!(like.entries[1].1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn lower_distance_weakly_increases_probability() {
        // Move candidate B closer; its probability must not decrease.
        let hist = pts(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let near = |id, off| {
            ReferencePath::new(
                id,
                vec![
                    CartesianPoint::new(0.0, off),
                    CartesianPoint::new(10.0, off),
                ],
                20.0,
            )
            .unwrap()
        };
        let mut last = 0.0;
        for off in [8.0, 6.0, 4.0, 2.0, 1.0] {
            let like = path_likelihoods(&hist, &[near(0, 3.0), near(1, off)], 1.0).unwrap();
            let p = like.probability_of(1).unwrap();
            assert!(p >= last, "p={p} should not drop below {last}");
            last = p;
        }
    }
}
