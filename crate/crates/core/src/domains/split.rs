//! Train/test partition by pose, so every shot of a held-out pose is unseen.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: DEFAULT_TEST_FRACTION,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }

    /// Number of held-out keys for `distinct` keys: rounded, at least one per side.
    pub fn test_count(&self, distinct: usize) -> usize {
        ((self.test_fraction * distinct as f64).round() as usize).clamp(1, distinct - 1)
    }
}

/// Held-out keys drawn uniformly without replacement from the distinct keys.
pub fn split_keys<K: Ord + Clone>(keys: impl IntoIterator<Item = K>, spec: &SplitSpec, seed: u64) -> Result<BTreeSet<K>> {
    spec.validate()?;
    let distinct: Vec<K> = keys.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    if distinct.len() < 2 {
        return Err(Error::Contract(format!("split needs at least 2 distinct poses, got {}", distinct.len())));
    }
    let k = spec.test_count(distinct.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(distinct.choose_multiple(&mut rng, k).cloned().collect())
}

/// Partitions `items` so that all items sharing a key land on the same side.
pub fn split<T, K: Ord + Clone>(
    items: Vec<T>,
    key: impl Fn(&T) -> K,
    spec: &SplitSpec,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    let test_keys = split_keys(items.iter().map(&key), spec, seed)?;
    Ok(items.into_iter().partition(|it| !test_keys.contains(&key(it))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_of_twenty() {
        let items: Vec<(u32, u32)> = (0..20).flat_map(|p| (0..3).map(move |s| (p, s))).collect();
        let (train, test) = split(items, |x| x.0, &SplitSpec::default(), 4).unwrap();
        let test_poses: BTreeSet<u32> = test.iter().map(|x| x.0).collect();
        let train_poses: BTreeSet<u32> = train.iter().map(|x| x.0).collect();
        assert_eq!(test_poses.len(), 3);
        assert_eq!(test.len(), 9);
        assert!(test_poses.is_disjoint(&train_poses));
    }

    #[test]
    fn hundred_poses_seeded() {
        let a = split_keys(0..100u32, &SplitSpec::default(), 11).unwrap();
        let b = split_keys(0..100u32, &SplitSpec::default(), 11).unwrap();
        assert_eq!(a.len(), 15);
        assert_eq!(a, b);
        assert_ne!(a, split_keys(0..100u32, &SplitSpec::default(), 12).unwrap());
    }

    #[test]
    fn bad_fraction_and_too_few_poses() {
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                split_keys(0..10u32, &SplitSpec { test_fraction: f }, 0),
                Err(Error::Config(_))
            ));
        }
        assert!(split_keys([7u32, 7, 7], &SplitSpec::default(), 0).is_err());
    }

    #[test]
    fn tiny_fraction_still_holds_one_out() {
        let t = split_keys(0..4u32, &SplitSpec { test_fraction: 0.01 }, 0).unwrap();
        assert_eq!(t.len(), 1);
    }
}
