//! Contextual pair generation.
//!
//! Six patterns organise records into training pairs by designating a set of
//! *varying* attributes: varying attributes must differ between the two
//! members, all remaining attributes must match, and the frame index varies
//! in every pattern. Only pattern 5 varies the sample type and therefore
//! crosses the live/mask boundary (a negative pair); all other patterns
//! produce positive pairs.
//!
//! | pattern | varies            | polarity |
//! |---------|-------------------|----------|
//! | 1       | frame             | positive |
//! | 2       | sensor, frame     | positive |
//! | 3       | lighting, frame   | positive |
//! | 4       | scene, frame      | positive |
//! | 5       | type, frame       | negative |
//! | 6       | subject, frame    | positive |

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand::Rng;

use crate::catalog::{CatalogView, SampleRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attr {
    Subject,
    Type,
    Scene,
    Light,
    Sensor,
    Frame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// One of the six pair-generation patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PairPattern {
    id: u8,
}

impl PairPattern {
    pub const ALL: [PairPattern; 6] = [
        PairPattern { id: 1 },
        PairPattern { id: 2 },
        PairPattern { id: 3 },
        PairPattern { id: 4 },
        PairPattern { id: 5 },
        PairPattern { id: 6 },
    ];

    pub fn new(id: u8) -> Option<PairPattern> {
        (1..=6).contains(&id).then_some(PairPattern { id })
    }

    pub fn id(self) -> u8 {
        self.id
    }

    /// Attributes that must differ between the two pair members. The frame
    /// index is part of every pattern.
    pub fn varying(self) -> &'static [Attr] {
        match self.id {
            1 => &[Attr::Frame],
            2 => &[Attr::Sensor, Attr::Frame],
            3 => &[Attr::Light, Attr::Frame],
            4 => &[Attr::Scene, Attr::Frame],
            5 => &[Attr::Type, Attr::Frame],
            6 => &[Attr::Subject, Attr::Frame],
            _ => unreachable!(),
        }
    }

    /// Negative iff the sample type is among the varying attributes.
    pub fn polarity(self) -> Polarity {
        if self.varying().contains(&Attr::Type) {
            Polarity::Negative
        } else {
            Polarity::Positive
        }
    }
}

/// A sampled pair of catalog record indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextPair {
    pub first: usize,
    pub second: usize,
    pub pattern_id: u8,
    /// 1 when the two liveness labels are equal, 0 otherwise.
    pub pair_label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PairError {
    #[error("pattern {0} has no valid pair in this catalog subset")]
    UnsatisfiablePattern(u8),
    #[error("none of the enabled patterns has a valid pair in this catalog subset")]
    AllPatternsUnsatisfiable,
    #[error("no patterns enabled")]
    NoPatterns,
    #[error("pattern weights must be non-negative with at least one positive")]
    BadWeights,
    #[error("got {weights} weights for {patterns} patterns")]
    WeightCountMismatch { weights: usize, patterns: usize },
}

/// Frozen-attribute key: varying attributes are wildcarded.
fn group_key(record: &SampleRecord, pattern: PairPattern) -> [u32; 5] {
    let varying = pattern.varying();
    let a = &record.attrs;
    [
        if varying.contains(&Attr::Subject) { 0 } else { a.subject },
        if varying.contains(&Attr::Type) { u32::MAX } else { a.sample_type.code() as u32 },
        if varying.contains(&Attr::Scene) { 0 } else { a.scene.code() as u32 },
        if varying.contains(&Attr::Light) { 0 } else { a.lighting.code() as u32 },
        if varying.contains(&Attr::Sensor) { 0 } else { a.sensor.code() as u32 },
    ]
}

fn partner_ok(a: &SampleRecord, b: &SampleRecord, pattern: PairPattern) -> bool {
    if a.frame_index == b.frame_index {
        return false;
    }
    for attr in pattern.varying() {
        let differs = match attr {
            Attr::Subject => a.attrs.subject != b.attrs.subject,
            // A varying type must also cross the live/mask boundary so that
            // the pair is negative; mask-mask pairs are not produced.
            Attr::Type => a.is_live() != b.is_live(),
            Attr::Scene => a.attrs.scene != b.attrs.scene,
            Attr::Light => a.attrs.lighting != b.attrs.lighting,
            Attr::Sensor => a.attrs.sensor != b.attrs.sensor,
            Attr::Frame => true, // already checked above
        };
        if !differs {
            return false;
        }
    }
    true
}

/// Per-pattern sampling index over one catalog subset.
#[derive(Debug, Clone)]
pub struct PatternIndex {
    pattern: PairPattern,
    /// Record indices grouped by frozen attributes.
    groups: Vec<Vec<usize>>,
    /// (record index, group position) for records with at least one partner.
    valid_firsts: Vec<(usize, usize)>,
}

impl PatternIndex {
    pub fn build(view: &CatalogView<'_>, pattern: PairPattern) -> PatternIndex {
        let mut map: BTreeMap<[u32; 5], Vec<usize>> = BTreeMap::new();
        for (idx, record) in view.iter() {
            map.entry(group_key(record, pattern)).or_default().push(idx);
        }
        let groups: Vec<Vec<usize>> = map.into_values().collect();
        let records = &view.catalog.records;
        let mut valid_firsts = Vec::new();
        for (gi, group) in groups.iter().enumerate() {
            for &a in group {
                if group
                    .iter()
                    .any(|&b| b != a && partner_ok(&records[a], &records[b], pattern))
                {
                    valid_firsts.push((a, gi));
                }
            }
        }
        PatternIndex {
            pattern,
            groups,
            valid_firsts,
        }
    }

    pub fn pattern(&self) -> PairPattern {
        self.pattern
    }

    pub fn is_satisfiable(&self) -> bool {
        !self.valid_firsts.is_empty()
    }

    /// Draw one pair: the first member uniform over all records that have a
    /// partner, the second uniform over that record's partners.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        view: &CatalogView<'_>,
        rng: &mut R,
    ) -> Result<ContextPair, PairError> {
        if self.valid_firsts.is_empty() {
            return Err(PairError::UnsatisfiablePattern(self.pattern.id()));
        }
        let (first, gi) = self.valid_firsts[rng.random_range(0..self.valid_firsts.len())];
        let records = &view.catalog.records;
        let partners: Vec<usize> = self.groups[gi]
            .iter()
            .copied()
            .filter(|&b| b != first && partner_ok(&records[first], &records[b], self.pattern))
            .collect();
        let second = partners[rng.random_range(0..partners.len())];
        let pair_label = u8::from(records[first].is_live() == records[second].is_live());
        Ok(ContextPair {
            first,
            second,
            pattern_id: self.pattern.id(),
            pair_label,
        })
    }
}

/// One-shot sampling; builds the index on each call. Use [`BatchBuilder`]
/// for repeated draws.
pub fn sample_pair<R: Rng + ?Sized>(
    view: &CatalogView<'_>,
    pattern: PairPattern,
    rng: &mut R,
) -> Result<ContextPair, PairError> {
    PatternIndex::build(view, pattern).sample(view, rng)
}

/// Weighted mixture of pattern samplers for batch assembly.
pub struct BatchBuilder {
    entries: Vec<(PatternIndex, f64)>,
    cumulative: Vec<f64>,
    /// Patterns that were enabled but have no valid pair; they are skipped
    /// and recorded here.
    pub skipped_patterns: Vec<u8>,
    balance_polarity: bool,
}

impl BatchBuilder {
    /// `weights` must align with `patterns`; zero-weight patterns are
    /// ignored. With `balance_polarity`, pairs alternate between the
    /// positive-pattern and negative-pattern pools when both are available.
    pub fn new(
        view: &CatalogView<'_>,
        patterns: &[PairPattern],
        weights: &[f64],
        balance_polarity: bool,
    ) -> Result<BatchBuilder, PairError> {
        if patterns.is_empty() {
            return Err(PairError::NoPatterns);
        }
        if patterns.len() != weights.len() {
            return Err(PairError::WeightCountMismatch {
                weights: weights.len(),
                patterns: patterns.len(),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || weights.iter().all(|&w| w == 0.0) {
            return Err(PairError::BadWeights);
        }
        let mut entries = Vec::new();
        let mut skipped_patterns = Vec::new();
        for (&pattern, &weight) in patterns.iter().zip(weights) {
            if weight == 0.0 {
                continue;
            }
            let index = PatternIndex::build(view, pattern);
            if index.is_satisfiable() {
                entries.push((index, weight));
            } else {
                skipped_patterns.push(pattern.id());
            }
        }
        if entries.is_empty() {
            return Err(PairError::AllPatternsUnsatisfiable);
        }
        let mut cumulative = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for (_, w) in &entries {
            acc += w;
            cumulative.push(acc);
        }
        Ok(BatchBuilder {
            entries,
            cumulative,
            skipped_patterns,
            balance_polarity,
        })
    }

    fn pick_entry<R: Rng + ?Sized>(&self, rng: &mut R, pool: Option<Polarity>) -> usize {
        if let Some(polarity) = pool {
            let candidates: Vec<usize> = self
                .entries
                .iter()
                .enumerate()
                .filter(|(_, (idx, _))| idx.pattern().polarity() == polarity)
                .map(|(i, _)| i)
                .collect();
            if !candidates.is_empty() {
                let total: f64 = candidates.iter().map(|&i| self.entries[i].1).sum();
                let mut u = rng.random_range(0.0..total);
                for &i in &candidates {
                    u -= self.entries[i].1;
                    if u < 0.0 {
                        return i;
                    }
                }
                return *candidates.last().unwrap();
            }
            // Fall through to the full mixture when the pool is empty.
        }
        let total = *self.cumulative.last().unwrap();
        let u = rng.random_range(0.0..total);
        // Segment i covers [cumulative[i-1], cumulative[i]).
        match self
            .cumulative
            .binary_search_by(|probe| probe.partial_cmp(&u).unwrap())
        {
            Ok(i) => (i + 1).min(self.entries.len() - 1),
            Err(i) => i.min(self.entries.len() - 1),
        }
    }

    /// Draw `batch_size` pairs with replacement, each by first choosing a
    /// pattern proportionally to its weight.
    pub fn build_batch<R: Rng + ?Sized>(
        &self,
        view: &CatalogView<'_>,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<ContextPair>, PairError> {
        let mut batch = Vec::with_capacity(batch_size);
        for i in 0..batch_size {
            let pool = self.balance_polarity.then(|| {
                if i % 2 == 0 {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                }
            });
            let entry = &self.entries[self.pick_entry(rng, pool)];
            batch.push(entry.0.sample(view, rng)?);
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{synth_catalog, Catalog, SynthConfig};
    use crate::context::SampleType;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn catalog() -> Catalog {
        synth_catalog(
            &SynthConfig {
                subjects: 4,
                frames_per_video: 2,
                feature_dim: 4,
                scene_count: 3,
                light_count: 2,
                sensor_count: 2,
                ..SynthConfig::default()
            },
            17,
        )
        .unwrap()
    }

    fn check_pair(catalog: &Catalog, pair: &ContextPair) {
        let pattern = PairPattern::new(pair.pattern_id).unwrap();
        let a = &catalog.records[pair.first];
        let b = &catalog.records[pair.second];
        let varying = pattern.varying();
        // Varying attributes differ.
        assert!(partner_ok(a, b, pattern));
        // Frozen attributes match.
        if !varying.contains(&Attr::Subject) {
            assert_eq!(a.attrs.subject, b.attrs.subject);
        }
        if !varying.contains(&Attr::Type) {
            assert_eq!(a.attrs.sample_type, b.attrs.sample_type);
        }
        if !varying.contains(&Attr::Scene) {
            assert_eq!(a.attrs.scene, b.attrs.scene);
        }
        if !varying.contains(&Attr::Light) {
            assert_eq!(a.attrs.lighting, b.attrs.lighting);
        }
        if !varying.contains(&Attr::Sensor) {
            assert_eq!(a.attrs.sensor, b.attrs.sensor);
        }
        assert_eq!(pair.pair_label == 1, a.is_live() == b.is_live());
        match pattern.polarity() {
            Polarity::Positive => assert_eq!(pair.pair_label, 1),
            Polarity::Negative => assert_eq!(pair.pair_label, 0),
        }
    }

    #[test]
    fn pattern_table() {
        for pattern in PairPattern::ALL {
            assert!(pattern.varying().contains(&Attr::Frame));
        }
        assert_eq!(PairPattern::new(5).unwrap().polarity(), Polarity::Negative);
        assert_eq!(PairPattern::new(1).unwrap().polarity(), Polarity::Positive);
        assert!(PairPattern::new(0).is_none());
        assert!(PairPattern::new(7).is_none());
    }

    #[test]
    fn sampled_pairs_satisfy_constraints() {
        let cat = catalog();
        let view = cat.full_view();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for pattern in PairPattern::ALL {
            let index = PatternIndex::build(&view, pattern);
            for _ in 0..500 {
                let pair = index.sample(&view, &mut rng).unwrap();
                check_pair(&cat, &pair);
            }
        }
    }

    #[test]
    fn pattern_one_same_video_distinct_frames() {
        let cat = catalog();
        let view = cat.full_view();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let pair = sample_pair(&view, PairPattern::new(1).unwrap(), &mut rng).unwrap();
        let a = &cat.records[pair.first];
        let b = &cat.records[pair.second];
        assert_eq!(a.attrs, b.attrs);
        assert_ne!(a.frame_index, b.frame_index);
        assert_eq!(pair.pair_label, 1);
    }

    #[test]
    fn pattern_five_is_live_versus_mask() {
        let cat = catalog();
        let view = cat.full_view();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..200 {
            let pair = sample_pair(&view, PairPattern::new(5).unwrap(), &mut rng).unwrap();
            let a = &cat.records[pair.first];
            let b = &cat.records[pair.second];
            assert_ne!(a.is_live(), b.is_live());
            assert_eq!(a.attrs.subject, b.attrs.subject);
            assert_eq!(pair.pair_label, 0);
        }
    }

    #[test]
    fn single_frame_videos_make_pattern_one_unsatisfiable() {
        let cat = synth_catalog(
            &SynthConfig {
                subjects: 3,
                frames_per_video: 1,
                feature_dim: 4,
                scene_count: 1,
                light_count: 1,
                sensor_count: 1,
                ..SynthConfig::default()
            },
            1,
        )
        .unwrap();
        let view = cat.full_view();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(
            sample_pair(&view, PairPattern::new(1).unwrap(), &mut rng),
            Err(PairError::UnsatisfiablePattern(1))
        );
    }

    #[test]
    fn batch_mixture_and_determinism() {
        let cat = catalog();
        let view = cat.full_view();
        let weights = [1.0; 6];
        let builder = BatchBuilder::new(&view, &PairPattern::ALL, &weights, false).unwrap();
        assert!(builder.skipped_patterns.is_empty());

        let mut rng_a = ChaCha12Rng::seed_from_u64(42);
        let batch_a = builder.build_batch(&view, 256, &mut rng_a).unwrap();
        let mut rng_b = ChaCha12Rng::seed_from_u64(42);
        let batch_b = builder.build_batch(&view, 256, &mut rng_b).unwrap();
        assert_eq!(batch_a, batch_b);

        let polarities: Vec<u8> = batch_a.iter().map(|p| p.pair_label).collect();
        assert!(polarities.contains(&0));
        assert!(polarities.contains(&1));
        for pair in &batch_a {
            check_pair(&cat, pair);
        }
    }

    #[test]
    fn pattern_five_only_batch_is_all_negative() {
        let cat = catalog();
        let view = cat.full_view();
        let builder =
            BatchBuilder::new(&view, &[PairPattern::new(5).unwrap()], &[1.0], false).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let batch = builder.build_batch(&view, 8, &mut rng).unwrap();
        assert_eq!(batch.len(), 8);
        assert!(batch.iter().all(|p| p.pair_label == 0));
    }

    #[test]
    fn unsatisfiable_pattern_is_skipped_with_warning() {
        // Live-only subset: pattern 5 (needs live vs mask) cannot be built.
        let cat = catalog();
        let view = cat.view_where(|r| r.attrs.sample_type == SampleType::Live);
        let builder = BatchBuilder::new(
            &view,
            &[PairPattern::new(1).unwrap(), PairPattern::new(5).unwrap()],
            &[1.0, 1.0],
            false,
        )
        .unwrap();
        assert_eq!(builder.skipped_patterns, alloc::vec![5]);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let batch = builder.build_batch(&view, 16, &mut rng).unwrap();
        assert!(batch.iter().all(|p| p.pattern_id == 1));

        // Pattern 5 alone over the same subset is a hard error.
        assert_eq!(
            BatchBuilder::new(&view, &[PairPattern::new(5).unwrap()], &[1.0], false).err(),
            Some(PairError::AllPatternsUnsatisfiable)
        );
    }

    #[test]
    fn weight_validation() {
        let cat = catalog();
        let view = cat.full_view();
        assert_eq!(
            BatchBuilder::new(&view, &[], &[], false).err(),
            Some(PairError::NoPatterns)
        );
        assert_eq!(
            BatchBuilder::new(&view, &PairPattern::ALL, &[1.0], false).err(),
            Some(PairError::WeightCountMismatch {
                weights: 1,
                patterns: 6
            })
        );
        assert_eq!(
            BatchBuilder::new(
                &view,
                &[PairPattern::new(1).unwrap()],
                &[-1.0],
                false
            )
            .err(),
            Some(PairError::BadWeights)
        );
    }

    #[test]
    fn balanced_batches_alternate_polarity() {
        let cat = catalog();
        let view = cat.full_view();
        let builder = BatchBuilder::new(&view, &PairPattern::ALL, &[1.0; 6], true).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let batch = builder.build_batch(&view, 32, &mut rng).unwrap();
        let negatives = batch.iter().filter(|p| p.pair_label == 0).count();
        assert_eq!(negatives, 16);
    }
}
