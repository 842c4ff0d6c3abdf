//! Sample records and the deterministic synthetic catalog generator.
//!
//! The generator lays a full attribute grid (subjects x sample types x
//! scenes x lightings x sensors x frames) and synthesises one feature vector
//! per frame as a weighted mixture of
//!
//! * a material component shared by all samples of one sample type,
//! * a per-subject style component,
//! * a context nuisance component tied to (scene, lighting, sensor),
//! * white per-frame noise.
//!
//! Only the material component carries the live/attack signal, so the
//! Bayes-optimal decision depends on it alone; the transparent-mask
//! material sits much closer to the live material than plaster or resin,
//! which makes it the hard type to detect when left out of training.
//!
//! How a material manifests depends on the scene: each scene blends the
//! global material basis with its own local one (`material_scene_blend`
//! controls the shared fraction). A plain classifier has to learn every
//! scene's manifestation separately, whereas pairs that freeze the material
//! and vary the scene expose the correspondence directly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::context::{
    encode_folder_name, Lighting, SampleType, Scene, Sensor, SkinTone, VideoAttrs,
};
use crate::math;

/// One frame of one video, with its full context-attribute tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    /// Unique id, `<folder-name>_F<frame>`.
    pub sample_id: String,
    pub attrs: VideoAttrs,
    pub frame_index: u32,
    /// Synthetic observation, constant dimension across a catalog.
    pub feature: Vec<f32>,
}

impl SampleRecord {
    /// Liveness label, a pure function of the sample type.
    pub fn is_live(&self) -> bool {
        self.attrs.is_live()
    }

    /// Label as 1.0 (live) / 0.0 (attack).
    pub fn label(&self) -> f64 {
        if self.is_live() {
            1.0
        } else {
            0.0
        }
    }

    pub fn folder_name(&self) -> String {
        encode_folder_name(&self.attrs)
    }

    pub fn feature_f64(&self) -> Vec<f64> {
        self.feature.iter().map(|&v| v as f64).collect()
    }
}

pub fn sample_id_for(attrs: &VideoAttrs, frame_index: u32) -> String {
    format!("{}_F{}", encode_folder_name(attrs), frame_index)
}

/// Ordered collection of records plus generator provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub records: Vec<SampleRecord>,
    pub feature_dim: usize,
    pub generator_seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("generator config field `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("generator config field `{field}` exceeds the grid maximum {max}")]
    GridOverflow { field: &'static str, max: usize },
    #[error("material_scene_blend {0} outside [0, 1]")]
    BlendOutOfRange(f64),
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
    #[error("feature dimension {found} differs from catalog dimension {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("subject {subject} sample type {type_code} has fewer than 2 frames")]
    TooFewFrames { subject: u32, type_code: u8 },
}

impl Catalog {
    /// Sorted unique subject ids present in the catalog.
    pub fn subjects(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.records.iter().map(|r| r.attrs.subject).collect();
        set.into_iter().collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Check id uniqueness, constant dimension, and that every
    /// (subject, sample type) combination present has at least two frames.
    pub fn validate(&self) -> Result<(), CatalogError> {
        let mut ids = BTreeSet::new();
        let mut frames: BTreeMap<(u32, u8), BTreeSet<u32>> = BTreeMap::new();
        for r in &self.records {
            if r.feature.len() != self.feature_dim {
                return Err(CatalogError::DimMismatch {
                    expected: self.feature_dim,
                    found: r.feature.len(),
                });
            }
            if !ids.insert(r.sample_id.clone()) {
                return Err(CatalogError::DuplicateId(r.sample_id.clone()));
            }
            frames
                .entry((r.attrs.subject, r.attrs.sample_type.code()))
                .or_default()
                .insert(r.frame_index);
        }
        for ((subject, type_code), fr) in frames {
            if fr.len() < 2 {
                return Err(CatalogError::TooFewFrames { subject, type_code });
            }
        }
        Ok(())
    }

    /// View over the whole catalog.
    pub fn full_view(&self) -> CatalogView<'_> {
        CatalogView {
            catalog: self,
            indices: (0..self.records.len()).collect(),
        }
    }

    /// View over the records matching a predicate, preserving order.
    pub fn view_where<F: Fn(&SampleRecord) -> bool>(&self, pred: F) -> CatalogView<'_> {
        CatalogView {
            catalog: self,
            indices: self
                .records
                .iter()
                .enumerate()
                .filter(|(_, r)| pred(r))
                .map(|(i, _)| i)
                .collect(),
        }
    }
}

/// Borrowed subset of a catalog, as produced by protocol splits.
#[derive(Debug, Clone)]
pub struct CatalogView<'a> {
    pub catalog: &'a Catalog,
    pub indices: Vec<usize>,
}

impl<'a> CatalogView<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn record(&self, view_pos: usize) -> &'a SampleRecord {
        &self.catalog.records[self.indices[view_pos]]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &'a SampleRecord)> + '_ {
        self.indices
            .iter()
            .map(move |&i| (i, &self.catalog.records[i]))
    }
}

/// Settings for [`synth_catalog`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub subjects: u32,
    pub frames_per_video: u32,
    pub feature_dim: usize,
    /// How many of the 6 scenes / 6 lightings / 7 sensors to lay out.
    pub scene_count: usize,
    pub light_count: usize,
    pub sensor_count: usize,
    /// Mixing weight of the material (live/attack) component.
    pub w_material: f64,
    /// Mixing weight of the per-subject style component.
    pub w_subject: f64,
    /// Mixing weight of the (scene, lighting, sensor) nuisance component.
    pub w_context: f64,
    /// Standard deviation of the per-frame white noise.
    pub noise_sigma: f64,
    /// Fraction of the material vector shared across scenes, in `[0, 1]`.
    /// 1.0 means every scene shows the material identically; lower values
    /// entangle the material evidence with the scene.
    pub material_scene_blend: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 75,
            frames_per_video: 2,
            feature_dim: 64,
            scene_count: Scene::ALL.len(),
            light_count: Lighting::ALL.len(),
            sensor_count: Sensor::ALL.len(),
            w_material: 0.8,
            w_subject: 1.0,
            w_context: 1.5,
            noise_sigma: 0.3,
            material_scene_blend: 0.4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.subjects == 0 {
            return Err(CatalogError::NonPositive("subjects"));
        }
        if self.frames_per_video == 0 {
            return Err(CatalogError::NonPositive("frames_per_video"));
        }
        if self.feature_dim == 0 {
            return Err(CatalogError::NonPositive("feature_dim"));
        }
        for (field, value, max) in [
            ("scene_count", self.scene_count, Scene::ALL.len()),
            ("light_count", self.light_count, Lighting::ALL.len()),
            ("sensor_count", self.sensor_count, Sensor::ALL.len()),
        ] {
            if value == 0 {
                return Err(CatalogError::NonPositive(field));
            }
            if value > max {
                return Err(CatalogError::GridOverflow { field, max });
            }
        }
        if !(0.0..=1.0).contains(&self.material_scene_blend) {
            return Err(CatalogError::BlendOutOfRange(self.material_scene_blend));
        }
        Ok(())
    }

    /// Number of records the full grid will contain.
    pub fn record_count(&self) -> usize {
        self.subjects as usize
            * SampleType::ALL.len()
            * self.scene_count
            * self.light_count
            * self.sensor_count
            * self.frames_per_video as usize
    }
}

fn standard_normal_vec(rng: &mut ChaCha12Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_vec(rng: &mut ChaCha12Rng, dim: usize) -> Vec<f64> {
    let mut v = standard_normal_vec(rng, dim);
    let n = math::norm2(&v);
    if n > 0.0 {
        for x in &mut v {
            *x /= n;
        }
    } else {
        v[0] = 1.0;
    }
    v
}

fn normalize_mix(parts: &[(f64, &[f64])], dim: usize) -> Vec<f64> {
    let mut v = alloc::vec![0.0; dim];
    for (w, p) in parts {
        for (dst, src) in v.iter_mut().zip(*p) {
            *dst += w * src;
        }
    }
    let n = math::norm2(&v);
    if n > 0.0 {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}

/// Material basis: one unit vector per sample type.
///
/// Plaster and resin share a common mask direction far from the live
/// material; the transparent material stays close to live.
fn material_basis(rng: &mut ChaCha12Rng, dim: usize) -> [Vec<f64>; 4] {
    let live = unit_vec(rng, dim);
    let mask_common = unit_vec(rng, dim);
    let g_t = unit_vec(rng, dim);
    let g_p = unit_vec(rng, dim);
    let g_r = unit_vec(rng, dim);
    let transparent = normalize_mix(&[(0.85, &live[..]), (0.40, &mask_common), (0.25, &g_t)], dim);
    let plaster = normalize_mix(&[(0.20, &live[..]), (1.0, &mask_common), (0.45, &g_p)], dim);
    let resin = normalize_mix(&[(0.20, &live[..]), (1.0, &mask_common), (0.45, &g_r)], dim);
    [live, transparent, plaster, resin]
}

fn skin_for_subject(subject: u32) -> SkinTone {
    // Skin tones cycle through the subject ids, one third each.
    SkinTone::ALL[((subject - 1) as usize) % 3]
}

/// Deterministically generate a synthetic catalog. The same `(config, seed)`
/// always yields an identical catalog.
pub fn synth_catalog(config: &SynthConfig, seed: u64) -> Result<Catalog, CatalogError> {
    config.validate()?;
    let dim = config.feature_dim;
    let mut master = ChaCha12Rng::seed_from_u64(seed);
    // Sub-streams are drawn in a fixed order so that the latent structure
    // does not shift when the grid dimensions change.
    let mut material_rng = ChaCha12Rng::seed_from_u64(master.random());
    let mut subject_rng = ChaCha12Rng::seed_from_u64(master.random());
    let mut context_rng = ChaCha12Rng::seed_from_u64(master.random());
    let mut noise_rng = ChaCha12Rng::seed_from_u64(master.random());

    let global_material = material_basis(&mut material_rng, dim);
    // Per-scene manifestation: blend the global basis with a scene-local
    // one drawn with the same transparent-near-live geometry.
    let blend = config.material_scene_blend;
    let material_by_scene: Vec<[Vec<f64>; 4]> = (0..Scene::ALL.len())
        .map(|_| {
            let local = material_basis(&mut material_rng, dim);
            core::array::from_fn(|ty| {
                normalize_mix(
                    &[(blend, &global_material[ty][..]), (1.0 - blend, &local[ty])],
                    dim,
                )
            })
        })
        .collect();
    let subject_style: Vec<Vec<f64>> = (0..config.subjects)
        .map(|_| unit_vec(&mut subject_rng, dim))
        .collect();
    let scene_vecs: Vec<Vec<f64>> = (0..Scene::ALL.len())
        .map(|_| unit_vec(&mut context_rng, dim))
        .collect();
    let light_vecs: Vec<Vec<f64>> = (0..Lighting::ALL.len())
        .map(|_| unit_vec(&mut context_rng, dim))
        .collect();
    let sensor_vecs: Vec<Vec<f64>> = (0..Sensor::ALL.len())
        .map(|_| unit_vec(&mut context_rng, dim))
        .collect();

    let inv_sqrt3 = 1.0 / math::sqrt(3.0);
    let mut records = Vec::with_capacity(config.record_count());
    for subject in 1..=config.subjects {
        let style = &subject_style[(subject - 1) as usize];
        for sample_type in SampleType::ALL {
            for scene in &Scene::ALL[..config.scene_count] {
                let mat = &material_by_scene[(scene.code() - 1) as usize]
                    [sample_type.code() as usize];
                let sv = &scene_vecs[(scene.code() - 1) as usize];
                for lighting in &Lighting::ALL[..config.light_count] {
                    let lv = &light_vecs[(lighting.code() - 1) as usize];
                    for sensor in &Sensor::ALL[..config.sensor_count] {
                        let uv = &sensor_vecs[(sensor.code() - 1) as usize];
                        let attrs = VideoAttrs {
                            skin: skin_for_subject(subject),
                            subject,
                            sample_type,
                            scene: *scene,
                            lighting: *lighting,
                            sensor: *sensor,
                        };
                        for frame_index in 0..config.frames_per_video {
                            let mut feature = Vec::with_capacity(dim);
                            for k in 0..dim {
                                let ctx = (sv[k] + lv[k] + uv[k]) * inv_sqrt3;
                                let noise: f64 = StandardNormal.sample(&mut noise_rng);
                                let value = config.w_material * mat[k]
                                    + config.w_subject * style[k]
                                    + config.w_context * ctx
                                    + config.noise_sigma * noise;
                                feature.push(value as f32);
                            }
                            records.push(SampleRecord {
                                sample_id: sample_id_for(&attrs, frame_index),
                                attrs,
                                frame_index,
                                feature,
                            });
                        }
                    }
                }
            }
        }
    }

    Ok(Catalog {
        records,
        feature_dim: dim,
        generator_seed: seed,
    })
}
