//! Which label source each training video uses.

use rand::seq::index::sample;
use rand::Rng;

/// Supervision of one training video until the next refresh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SupervisionTag {
    /// Only the video-level label is available; frames are pseudo-labelled.
    WeakOnly,
    /// Segment annotations are available and used when `use_ground_truth`.
    Strong { use_ground_truth: bool },
}

impl SupervisionTag {
    pub fn uses_ground_truth(self) -> bool {
        matches!(
            self,
            SupervisionTag::Strong {
                use_ground_truth: true
            }
        )
    }
}

/// Splits `n` items into a group of share `ratio` and its complement: each
/// group gets `floor(n × share)`, and the leftover item (if any) goes to the
/// larger remainder, the first group on ties. Returns the first group's size.
pub fn largest_remainder_split(n: usize, ratio: f64) -> usize {
    let first = n as f64 * ratio;
    let second = n as f64 - first;
    let a = ((first + 1e-9).floor() as usize).min(n);
    let b = ((second + 1e-9).floor() as usize).min(n - a);
    if a + b < n && first - a as f64 >= second - b as f64 {
        n - b
    } else {
        a
    }
}

/// Picks which videos may use their segment annotations: `strong_fraction`
/// of the annotated ones, chosen uniformly.
pub fn choose_strong_videos<R: Rng + ?Sized>(
    annotated: &[bool],
    strong_fraction: f64,
    rng: &mut R,
) -> Vec<bool> {
    let candidates: Vec<usize> = (0..annotated.len()).filter(|&i| annotated[i]).collect();
    let count = largest_remainder_split(candidates.len(), strong_fraction);
    let mut strong = vec![false; annotated.len()];
    for i in sample(rng, candidates.len(), count) {
        strong[candidates[i]] = true;
    }
    strong
}

/// Draws the ground-truth / pseudo split for the strong videos; weak videos
/// are always pseudo-labelled.
pub fn assign_supervision<R: Rng + ?Sized>(
    strong: &[bool],
    gt_ratio: f64,
    rng: &mut R,
) -> Vec<SupervisionTag> {
    let strong_idx: Vec<usize> = (0..strong.len()).filter(|&i| strong[i]).collect();
    let gt_count = largest_remainder_split(strong_idx.len(), gt_ratio);
    let mut tags: Vec<SupervisionTag> = strong
        .iter()
        .map(|&s| {
            if s {
                SupervisionTag::Strong {
                    use_ground_truth: false,
                }
            } else {
                SupervisionTag::WeakOnly
            }
        })
        .collect();
    for i in sample(rng, strong_idx.len(), gt_count) {
        tags[strong_idx[i]] = SupervisionTag::Strong {
            use_ground_truth: true,
        };
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gt_count(tags: &[SupervisionTag]) -> usize {
        tags.iter().filter(|t| t.uses_ground_truth()).count()
    }

    #[test]
    fn no_strong_labels_means_all_pseudo() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tags = assign_supervision(&[false; 7], 0.9, &mut rng);
        assert!(tags.iter().all(|&t| t == SupervisionTag::WeakOnly));
    }

    #[test]
    fn ninety_percent_of_ten() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tags = assign_supervision(&[true; 10], 0.9, &mut rng);
        assert_eq!(gt_count(&tags), 9);
    }

    #[test]
    fn ratio_one_is_all_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tags = assign_supervision(&[true; 13], 1.0, &mut rng);
        assert_eq!(gt_count(&tags), 13);
    }

    #[test]
    fn split_examples() {
        assert_eq!(largest_remainder_split(10, 0.9), 9);
        assert_eq!(largest_remainder_split(5, 0.9), 5); // 4.5 vs 0.5, tie to the first group
        assert_eq!(largest_remainder_split(7, 0.9), 6); // 6.3 vs 0.7
        assert_eq!(largest_remainder_split(3, 0.5), 2);
        assert_eq!(largest_remainder_split(0, 0.9), 0);
        assert_eq!(largest_remainder_split(4, 0.0), 0);
    }

    #[test]
    fn strong_choice_respects_annotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let annotated = [true, false, true, true, false, true];
        let strong = choose_strong_videos(&annotated, 0.5, &mut rng);
        assert_eq!(strong.iter().filter(|&&s| s).count(), 2);
        assert!(strong.iter().zip(&annotated).all(|(&s, &a)| !s || a));
        assert_eq!(
            choose_strong_videos(&annotated, 1.0, &mut rng),
            annotated.to_vec()
        );
    }

    proptest! {
        #[test]
        fn split_matches_rounding_oracle(n in 0usize..200, ratio in 0.0f64..=1.0) {
            let got = largest_remainder_split(n, ratio);
            let exact = n as f64 * ratio;
            prop_assert!((got as f64 - exact).abs() < 1.0);
            prop_assert!(got <= n);
        }

        #[test]
        fn weak_videos_never_use_ground_truth(flags in proptest::collection::vec(any::<bool>(), 0..40), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tags = assign_supervision(&flags, 0.9, &mut rng);
            for (t, &s) in tags.iter().zip(&flags) {
                prop_assert_eq!(s, *t != SupervisionTag::WeakOnly);
            }
        }
    }
}
