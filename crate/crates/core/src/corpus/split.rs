use rand::seq::SliceRandom;

use super::{AbsLabel, ImageTextPair, Split};
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Marks exactly `test_per_class` pairs of every label as test, the rest as
/// train. Deterministic in `seed`.
pub fn split_dataset(pairs: &mut [ImageTextPair], test_per_class: usize, seed: u64) -> Result<()> {
    if test_per_class == 0 {
        return Err(Error::InvalidArgument(
            "test_per_class must be positive".into(),
        ));
    }
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, p) in pairs.iter().enumerate() {
        let label = p
            .label
            .ok_or_else(|| Error::UnlabeledPair(p.pair_id.clone()))?;
        by_class[label.index()].push(i);
    }
    for (label, members) in AbsLabel::ALL.iter().zip(&by_class) {
        if members.len() <= test_per_class {
            return Err(Error::InsufficientClassMembers {
                label: label.to_string(),
                have: members.len(),
                need: test_per_class,
            });
        }
    }
    let mut rng = rng_for(seed, "split");
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for (k, &i) in members.iter().enumerate() {
            pairs[i].split = if k < test_per_class {
                Split::Test
            } else {
                Split::Train
            };
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SynthOptions};

    fn corpus(n: usize) -> Vec<ImageTextPair> {
        generate_synthetic_corpus(
            n,
            1,
            &SynthOptions {
                image_size: 8,
                ..Default::default()
            },
        )
        .unwrap()
        .0
    }

    #[test]
    fn balanced_split_counts() {
        let mut pairs = corpus(200);
        split_dataset(&mut pairs, 100, 5).unwrap();
        let test = pairs.iter().filter(|p| p.split == Split::Test).count();
        let train = pairs.iter().filter(|p| p.split == Split::Train).count();
        assert_eq!((test, train), (300, 300));
        for l in AbsLabel::ALL {
            let n = pairs
                .iter()
                .filter(|p| p.label == Some(l) && p.split == Split::Test)
                .count();
            assert_eq!(n, 100);
        }
    }

    #[test]
    fn zero_is_invalid_argument() {
        let mut pairs = corpus(3);
        assert!(matches!(
            split_dataset(&mut pairs, 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn too_few_members() {
        let mut pairs = corpus(3);
        assert!(matches!(
            split_dataset(&mut pairs, 3, 1),
            Err(Error::InsufficientClassMembers { .. })
        ));
    }

    #[test]
    fn deterministic() {
        let mut a = corpus(20);
        let mut b = a.clone();
        split_dataset(&mut a, 5, 9).unwrap();
        split_dataset(&mut b, 5, 9).unwrap();
        let sa: Vec<_> = a.iter().map(|p| p.split).collect();
        let sb: Vec<_> = b.iter().map(|p| p.split).collect();
        assert_eq!(sa, sb);
    }
}
