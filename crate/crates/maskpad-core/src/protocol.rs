//! Train/dev/test split builders for the five evaluation protocols.
//!
//! Subjects are partitioned 45:6:24 (scaled proportionally for smaller
//! catalogs). The protocols differ in which mask types each subset keeps:
//!
//! * `P1` — all three mask types everywhere ("seen").
//! * `P2_k` — leave-one-type-out: train/dev on the other two types, test on
//!   type `k` only ("unseen").
//! * `P3` — train/dev on transparent+resin over a reduced scene/lighting
//!   subset, test on the full grid ("open set").

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::catalog::{Catalog, CatalogView, SampleRecord};
use crate::context::{Lighting, MaskType, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolId {
    P1,
    P2_1,
    P2_2,
    P2_3,
    P3,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 5] = [
        ProtocolId::P1,
        ProtocolId::P2_1,
        ProtocolId::P2_2,
        ProtocolId::P2_3,
        ProtocolId::P3,
    ];

    pub fn parse(s: &str) -> Option<ProtocolId> {
        match s {
            "1" | "P1" => Some(ProtocolId::P1),
            "2_1" | "P2_1" => Some(ProtocolId::P2_1),
            "2_2" | "P2_2" => Some(ProtocolId::P2_2),
            "2_3" | "P2_3" => Some(ProtocolId::P2_3),
            "3" | "P3" => Some(ProtocolId::P3),
            _ => None,
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProtocolId::P1 => "1",
            ProtocolId::P2_1 => "2_1",
            ProtocolId::P2_2 => "2_2",
            ProtocolId::P2_3 => "2_3",
            ProtocolId::P3 => "3",
        };
        f.write_str(s)
    }
}

/// Scene/lighting restriction applied to the train and dev subsets of `P3`.
///
/// The open-set protocol trains on "parts of representative samples"; the
/// exact subset is configurable, defaulting to the three indoor scenes under
/// the two least directional lightings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P3Restriction {
    pub scenes: BTreeSet<Scene>,
    pub lightings: BTreeSet<Lighting>,
}

impl Default for P3Restriction {
    fn default() -> Self {
        P3Restriction {
            scenes: [Scene::White, Scene::Green, Scene::Tricolor]
                .into_iter()
                .collect(),
            lightings: [Lighting::Normal, Lighting::Dim].into_iter().collect(),
        }
    }
}

/// Disjoint subject partition plus per-subset mask-type filters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolSplit {
    pub protocol_id: ProtocolId,
    pub train_subjects: BTreeSet<u32>,
    pub dev_subjects: BTreeSet<u32>,
    pub test_subjects: BTreeSet<u32>,
    pub train_mask_types: BTreeSet<MaskType>,
    pub dev_mask_types: BTreeSet<MaskType>,
    pub test_mask_types: BTreeSet<MaskType>,
    /// Extra scene/lighting restriction on train/dev (P3 only).
    pub train_dev_restriction: Option<P3Restriction>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SplitError {
    #[error("catalog has {available} subjects; at least {required} are required for three non-empty partitions")]
    TooFewSubjects { available: usize, required: usize },
}

/// Which of the three subsets a record is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Dev,
    Test,
}

impl ProtocolSplit {
    fn subjects_of(&self, subset: Subset) -> &BTreeSet<u32> {
        match subset {
            Subset::Train => &self.train_subjects,
            Subset::Dev => &self.dev_subjects,
            Subset::Test => &self.test_subjects,
        }
    }

    fn mask_types_of(&self, subset: Subset) -> &BTreeSet<MaskType> {
        match subset {
            Subset::Train => &self.train_mask_types,
            Subset::Dev => &self.dev_mask_types,
            Subset::Test => &self.test_mask_types,
        }
    }

    /// Whether a record belongs to the given subset. Live samples pass the
    /// mask filter unconditionally; the P3 scene/lighting restriction
    /// applies to train and dev only.
    pub fn contains(&self, subset: Subset, record: &SampleRecord) -> bool {
        if !self.subjects_of(subset).contains(&record.attrs.subject) {
            return false;
        }
        if let Some(mask) = record.attrs.sample_type.mask_type() {
            if !self.mask_types_of(subset).contains(&mask) {
                return false;
            }
        }
        if matches!(subset, Subset::Train | Subset::Dev) {
            if let Some(restriction) = &self.train_dev_restriction {
                if !restriction.scenes.contains(&record.attrs.scene)
                    || !restriction.lightings.contains(&record.attrs.lighting)
                {
                    return false;
                }
            }
        }
        true
    }

    pub fn view<'a>(&self, catalog: &'a Catalog, subset: Subset) -> CatalogView<'a> {
        catalog.view_where(|r| self.contains(subset, r))
    }
}

fn mask_set(types: &[MaskType]) -> BTreeSet<MaskType> {
    types.iter().copied().collect()
}

/// Partition subject ids 45:6:24, scaled with floor rounding; the remainder
/// goes to train. The shuffle is a pure function of `seed`.
fn partition_subjects(
    subjects: &[u32],
    seed: u64,
) -> Result<(BTreeSet<u32>, BTreeSet<u32>, BTreeSet<u32>), SplitError> {
    let n = subjects.len();
    let dev_count = n * 6 / 75;
    let test_count = n * 24 / 75;
    let train_count = n - dev_count - test_count;
    if dev_count == 0 || test_count == 0 || train_count == 0 {
        return Err(SplitError::TooFewSubjects {
            available: n,
            required: 13,
        });
    }
    let mut shuffled: Vec<u32> = subjects.to_vec();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let train = shuffled[..train_count].iter().copied().collect();
    let dev = shuffled[train_count..train_count + dev_count]
        .iter()
        .copied()
        .collect();
    let test = shuffled[train_count + dev_count..].iter().copied().collect();
    Ok((train, dev, test))
}

/// Build a protocol split with the default P3 restriction.
pub fn build_protocol_split(
    protocol_id: ProtocolId,
    catalog: &Catalog,
    seed: u64,
) -> Result<ProtocolSplit, SplitError> {
    build_protocol_split_with(protocol_id, catalog, seed, &P3Restriction::default())
}

/// Build a protocol split, choosing the P3 train/dev scene/lighting subset.
pub fn build_protocol_split_with(
    protocol_id: ProtocolId,
    catalog: &Catalog,
    seed: u64,
    p3_restriction: &P3Restriction,
) -> Result<ProtocolSplit, SplitError> {
    let subjects = catalog.subjects();
    let (train_subjects, dev_subjects, test_subjects) = partition_subjects(&subjects, seed)?;

    let all = mask_set(&MaskType::ALL);
    let (train_masks, test_masks, restriction) = match protocol_id {
        ProtocolId::P1 => (all.clone(), all.clone(), None),
        ProtocolId::P2_1 => (
            mask_set(&[MaskType::Plaster, MaskType::Resin]),
            mask_set(&[MaskType::Transparent]),
            None,
        ),
        ProtocolId::P2_2 => (
            mask_set(&[MaskType::Transparent, MaskType::Resin]),
            mask_set(&[MaskType::Plaster]),
            None,
        ),
        ProtocolId::P2_3 => (
            mask_set(&[MaskType::Transparent, MaskType::Plaster]),
            mask_set(&[MaskType::Resin]),
            None,
        ),
        ProtocolId::P3 => (
            mask_set(&[MaskType::Transparent, MaskType::Resin]),
            all.clone(),
            Some(p3_restriction.clone()),
        ),
    };

    Ok(ProtocolSplit {
        protocol_id,
        train_subjects,
        dev_subjects,
        test_subjects,
        dev_mask_types: train_masks.clone(),
        train_mask_types: train_masks,
        test_mask_types: test_masks,
        train_dev_restriction: restriction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{synth_catalog, SynthConfig};
    use crate::context::SampleType;

    fn tiny_catalog(subjects: u32) -> Catalog {
        synth_catalog(
            &SynthConfig {
                subjects,
                frames_per_video: 2,
                feature_dim: 4,
                scene_count: 2,
                light_count: 2,
                sensor_count: 1,
                ..SynthConfig::default()
            },
            11,
        )
        .unwrap()
    }

    #[test]
    fn full_grid_partition_counts() {
        let catalog = tiny_catalog(75);
        for id in ProtocolId::ALL {
            let split = build_protocol_split(id, &catalog, 5).unwrap();
            assert_eq!(split.train_subjects.len(), 45, "{id}");
            assert_eq!(split.dev_subjects.len(), 6, "{id}");
            assert_eq!(split.test_subjects.len(), 24, "{id}");
            assert!(split.train_subjects.is_disjoint(&split.dev_subjects));
            assert!(split.train_subjects.is_disjoint(&split.test_subjects));
            assert!(split.dev_subjects.is_disjoint(&split.test_subjects));
        }
    }

    #[test]
    fn mask_filters_match_protocol() {
        let catalog = tiny_catalog(75);
        let all = mask_set(&MaskType::ALL);
        let p1 = build_protocol_split(ProtocolId::P1, &catalog, 5).unwrap();
        assert_eq!(p1.train_mask_types, all);
        assert_eq!(p1.test_mask_types, all);

        let p2_1 = build_protocol_split(ProtocolId::P2_1, &catalog, 5).unwrap();
        assert_eq!(
            p2_1.train_mask_types,
            mask_set(&[MaskType::Plaster, MaskType::Resin])
        );
        assert_eq!(p2_1.test_mask_types, mask_set(&[MaskType::Transparent]));

        let p3 = build_protocol_split(ProtocolId::P3, &catalog, 5).unwrap();
        assert_eq!(
            p3.train_mask_types,
            mask_set(&[MaskType::Transparent, MaskType::Resin])
        );
        assert_eq!(p3.test_mask_types, all);
        assert!(p3.train_dev_restriction.is_some());
    }

    #[test]
    fn scaled_partition_proportional() {
        let catalog = tiny_catalog(15);
        let split = build_protocol_split(ProtocolId::P1, &catalog, 5).unwrap();
        // floor(15*6/75) = 1 dev, floor(15*24/75) = 4 test, remainder 10 train.
        assert_eq!(split.dev_subjects.len(), 1);
        assert_eq!(split.test_subjects.len(), 4);
        assert_eq!(split.train_subjects.len(), 10);
    }

    #[test]
    fn too_few_subjects_errors() {
        let catalog = tiny_catalog(5);
        assert!(matches!(
            build_protocol_split(ProtocolId::P1, &catalog, 5),
            Err(SplitError::TooFewSubjects { .. })
        ));
    }

    #[test]
    fn membership_respects_filters() {
        let catalog = tiny_catalog(75);
        let split = build_protocol_split(ProtocolId::P2_1, &catalog, 5).unwrap();
        let train = split.view(&catalog, Subset::Train);
        for (_, r) in train.iter() {
            assert!(split.train_subjects.contains(&r.attrs.subject));
            assert_ne!(r.attrs.sample_type, SampleType::Transparent);
        }
        let test = split.view(&catalog, Subset::Test);
        for (_, r) in test.iter() {
            assert!(r.is_live() || r.attrs.sample_type == SampleType::Transparent);
        }
        // Live samples appear in every subset.
        assert!(test.iter().any(|(_, r)| r.is_live()));
    }

    #[test]
    fn split_is_seed_deterministic() {
        let catalog = tiny_catalog(75);
        let a = build_protocol_split(ProtocolId::P1, &catalog, 5).unwrap();
        let b = build_protocol_split(ProtocolId::P1, &catalog, 5).unwrap();
        assert_eq!(a, b);
        let c = build_protocol_split(ProtocolId::P1, &catalog, 6).unwrap();
        assert_ne!(a, c);
    }
}
