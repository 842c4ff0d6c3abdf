//! On-disk formats: the catalog directory, feature files and checkpoints.
//!
//! A catalog directory holds one folder-named feature file per video plus a
//! line-per-record index:
//!
//! ```text
//! <dir>/meta.txt                    key=value generator provenance
//! <dir>/index.csv                   sample_id,folder,frame_index,label,feature_file
//! <dir>/features/<folder>.bin      "MPF1" | u32 dim | u32 frames | f32-LE data
//! ```
//!
//! Checkpoints are `"MPCK" | u32 version | dims | counters | tau_base |
//! lengths | theta | theta_prime`, all little-endian; save/load round-trips
//! byte-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use maskpad_core::catalog::{Catalog, SampleRecord, SynthConfig};
use maskpad_core::context::decode_folder_name;
use maskpad_core::model::{ModelDims, ModelState, ParamLayout};

const FEATURE_MAGIC: &[u8; 4] = b"MPF1";
const CHECKPOINT_MAGIC: &[u8; 4] = b"MPCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Provenance stored next to the index so a catalog can be reloaded and
/// regenerated.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogMeta {
    pub feature_dim: usize,
    pub generator_seed: u64,
    pub config: Option<SynthConfig>,
}

pub fn save_catalog(dir: &Path, catalog: &Catalog, config: Option<&SynthConfig>) -> Result<()> {
    let features_dir = dir.join("features");
    fs::create_dir_all(&features_dir)
        .with_context(|| format!("creating {}", features_dir.display()))?;

    // Group frames by video, then write one feature file per folder name.
    let mut by_folder: BTreeMap<String, Vec<&SampleRecord>> = BTreeMap::new();
    for record in &catalog.records {
        by_folder.entry(record.folder_name()).or_default().push(record);
    }
    for (folder, mut frames) in by_folder {
        frames.sort_by_key(|r| r.frame_index);
        for (row, record) in frames.iter().enumerate() {
            if record.frame_index as usize != row {
                bail!(
                    "video {folder}: frame indices are not contiguous from zero; \
                     cannot lay out the feature file"
                );
            }
        }
        let mut bytes = Vec::with_capacity(12 + frames.len() * catalog.feature_dim * 4);
        bytes.extend_from_slice(FEATURE_MAGIC);
        bytes.extend_from_slice(&(catalog.feature_dim as u32).to_le_bytes());
        bytes.extend_from_slice(&(frames.len() as u32).to_le_bytes());
        for record in &frames {
            for &v in &record.feature {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(features_dir.join(format!("{folder}.bin")), bytes)?;
    }

    let mut index = String::from("sample_id,folder,frame_index,label,feature_file\n");
    for record in &catalog.records {
        let folder = record.folder_name();
        index.push_str(&format!(
            "{},{},{},{},features/{}.bin\n",
            record.sample_id,
            folder,
            record.frame_index,
            if record.is_live() { 1 } else { 0 },
            folder
        ));
    }
    fs::write(dir.join("index.csv"), index)?;

    let mut meta = String::new();
    meta.push_str(&format!("feature_dim={}\n", catalog.feature_dim));
    meta.push_str(&format!("generator_seed={}\n", catalog.generator_seed));
    meta.push_str(&format!("records={}\n", catalog.len()));
    if let Some(c) = config {
        meta.push_str(&format!("subjects={}\n", c.subjects));
        meta.push_str(&format!("frames_per_video={}\n", c.frames_per_video));
        meta.push_str(&format!("scene_count={}\n", c.scene_count));
        meta.push_str(&format!("light_count={}\n", c.light_count));
        meta.push_str(&format!("sensor_count={}\n", c.sensor_count));
        meta.push_str(&format!("w_material={}\n", c.w_material));
        meta.push_str(&format!("w_subject={}\n", c.w_subject));
        meta.push_str(&format!("w_context={}\n", c.w_context));
        meta.push_str(&format!("noise_sigma={}\n", c.noise_sigma));
        meta.push_str(&format!("material_scene_blend={}\n", c.material_scene_blend));
    }
    fs::write(dir.join("meta.txt"), meta)?;
    Ok(())
}

fn parse_meta(text: &str) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    map
}

struct FeatureFile {
    dim: usize,
    frames: usize,
    data: Vec<f32>,
}

fn load_feature_file(path: &Path) -> Result<FeatureFile> {
    let mut file =
        fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut header = [0u8; 12];
    file.read_exact(&mut header)
        .with_context(|| format!("reading header of {}", path.display()))?;
    if &header[0..4] != FEATURE_MAGIC {
        bail!("{}: bad magic", path.display());
    }
    let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    if raw.len() != dim * frames * 4 {
        bail!(
            "{}: payload is {} bytes, expected {}",
            path.display(),
            raw.len(),
            dim * frames * 4
        );
    }
    let data = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(FeatureFile { dim, frames, data })
}

pub fn load_catalog(dir: &Path) -> Result<Catalog> {
    let meta_text = fs::read_to_string(dir.join("meta.txt"))
        .with_context(|| format!("reading {}/meta.txt", dir.display()))?;
    let meta = parse_meta(&meta_text);
    let feature_dim: usize = meta
        .get("feature_dim")
        .context("meta.txt missing feature_dim")?
        .parse()?;
    let generator_seed: u64 = meta
        .get("generator_seed")
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(0);

    let index = fs::read_to_string(dir.join("index.csv"))
        .with_context(|| format!("reading {}/index.csv", dir.display()))?;
    let mut cache: BTreeMap<String, FeatureFile> = BTreeMap::new();
    let mut records = Vec::new();
    for (line_no, line) in index.lines().enumerate() {
        if line_no == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("index.csv line {}: expected 5 fields", line_no + 1);
        }
        let folder = fields[1];
        let frame_index: u32 = fields[2]
            .parse()
            .with_context(|| format!("index.csv line {}: bad frame index", line_no + 1))?;
        let attrs = decode_folder_name(folder)
            .map_err(|e| anyhow::anyhow!("index.csv line {}: {e}", line_no + 1))?;
        let file_ref = fields[4].to_string();
        if !cache.contains_key(&file_ref) {
            let loaded = load_feature_file(&dir.join(&file_ref))?;
            if loaded.dim != feature_dim {
                bail!("{file_ref}: dimension {} != catalog {feature_dim}", loaded.dim);
            }
            cache.insert(file_ref.clone(), loaded);
        }
        let file = &cache[&file_ref];
        let row = frame_index as usize;
        if row >= file.frames {
            bail!("{file_ref}: frame {row} beyond {} stored frames", file.frames);
        }
        let feature = file.data[row * feature_dim..(row + 1) * feature_dim].to_vec();
        let expected_live = fields[3] == "1";
        if attrs.is_live() != expected_live {
            bail!(
                "index.csv line {}: label column disagrees with the folder's sample type",
                line_no + 1
            );
        }
        records.push(SampleRecord {
            sample_id: fields[0].to_string(),
            attrs,
            frame_index,
            feature,
        });
    }
    let catalog = Catalog {
        records,
        feature_dim,
        generator_seed,
    };
    catalog.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(catalog)
}

pub fn save_checkpoint(path: &Path, state: &ModelState) -> Result<()> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for dim in [
        state.dims.input_dim,
        state.dims.enc_hidden[0],
        state.dims.enc_hidden[1],
        state.dims.embed_dim,
        state.dims.head_hidden,
    ] {
        bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    bytes.extend_from_slice(&state.step.to_le_bytes());
    bytes.extend_from_slice(&state.max_steps.to_le_bytes());
    bytes.extend_from_slice(&state.tau_base.to_le_bytes());
    bytes.extend_from_slice(&(state.theta.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(state.theta_prime.len() as u64).to_le_bytes());
    for &v in &state.theta {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &state.theta_prime {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            bail!("{}: truncated checkpoint", path.display());
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    if take(&mut cursor, 4)? != CHECKPOINT_MAGIC {
        bail!("{}: bad magic", path.display());
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        bail!("{}: unsupported version {version}", path.display());
    }
    let read_u32 =
        |cursor: &mut usize| -> Result<u32> { Ok(u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap())) };
    let input_dim = read_u32(&mut cursor)? as usize;
    let e1 = read_u32(&mut cursor)? as usize;
    let e2 = read_u32(&mut cursor)? as usize;
    let embed_dim = read_u32(&mut cursor)? as usize;
    let head_hidden = read_u32(&mut cursor)? as usize;
    let step = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
    let max_steps = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
    let tau_base = f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap());
    let theta_len = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
    let prime_len = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;

    let dims = ModelDims {
        input_dim,
        enc_hidden: [e1, e2],
        embed_dim,
        head_hidden,
    };
    let layout = ParamLayout::new(&dims);
    if theta_len != layout.total_len || prime_len != layout.target_len {
        bail!(
            "{}: parameter lengths {}/{} do not match dims ({}/{})",
            path.display(),
            theta_len,
            prime_len,
            layout.total_len,
            layout.target_len
        );
    }
    let read_f64s = |cursor: &mut usize, n: usize| -> Result<Vec<f64>> {
        let slice = take(cursor, n * 8)?;
        Ok(slice
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    };
    let theta = read_f64s(&mut cursor, theta_len)?;
    let theta_prime = read_f64s(&mut cursor, prime_len)?;
    if cursor != bytes.len() {
        bail!("{}: {} trailing bytes", path.display(), bytes.len() - cursor);
    }
    Ok(ModelState {
        dims,
        theta,
        theta_prime,
        step,
        max_steps,
        tau_base,
    })
}
