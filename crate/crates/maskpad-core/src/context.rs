//! Context-attribute schema and the folder-name codec.
//!
//! Every video is described by six attributes — skin tone, subject, sample
//! type, scene, lighting and sensor — and serialises to a folder name of the
//! form `Skin_Subject_Type_Scene_Light_Sensor`, e.g. `Y_0001_0_1_1_1`.
//! Skin tones use letter codes, the subject is zero-padded to four digits,
//! and the remaining attributes use integer codes (sample type `0` is live).

use alloc::string::String;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SkinTone {
    Yellow,
    White,
    Black,
}

impl SkinTone {
    pub const ALL: [SkinTone; 3] = [SkinTone::Yellow, SkinTone::White, SkinTone::Black];

    pub fn code(self) -> &'static str {
        match self {
            SkinTone::Yellow => "Y",
            SkinTone::White => "W",
            SkinTone::Black => "B",
        }
    }

    pub fn from_code(token: &str) -> Option<SkinTone> {
        match token {
            "Y" => Some(SkinTone::Yellow),
            "W" => Some(SkinTone::White),
            "B" => Some(SkinTone::Black),
            _ => None,
        }
    }
}

/// Sample type; `Live` is the bonafide class, the rest are mask materials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SampleType {
    Live,
    Transparent,
    Plaster,
    Resin,
}

impl SampleType {
    pub const ALL: [SampleType; 4] = [
        SampleType::Live,
        SampleType::Transparent,
        SampleType::Plaster,
        SampleType::Resin,
    ];

    pub fn code(self) -> u8 {
        match self {
            SampleType::Live => 0,
            SampleType::Transparent => 1,
            SampleType::Plaster => 2,
            SampleType::Resin => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<SampleType> {
        match code {
            0 => Some(SampleType::Live),
            1 => Some(SampleType::Transparent),
            2 => Some(SampleType::Plaster),
            3 => Some(SampleType::Resin),
            _ => None,
        }
    }

    pub fn is_live(self) -> bool {
        self == SampleType::Live
    }

    pub fn mask_type(self) -> Option<MaskType> {
        match self {
            SampleType::Live => None,
            SampleType::Transparent => Some(MaskType::Transparent),
            SampleType::Plaster => Some(MaskType::Plaster),
            SampleType::Resin => Some(MaskType::Resin),
        }
    }
}

/// Mask material, used by the protocol mask-type filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaskType {
    Transparent,
    Plaster,
    Resin,
}

impl MaskType {
    pub const ALL: [MaskType; 3] = [MaskType::Transparent, MaskType::Plaster, MaskType::Resin];

    pub fn code(self) -> u8 {
        match self {
            MaskType::Transparent => 1,
            MaskType::Plaster => 2,
            MaskType::Resin => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<MaskType> {
        match code {
            1 => Some(MaskType::Transparent),
            2 => Some(MaskType::Plaster),
            3 => Some(MaskType::Resin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scene {
    White,
    Green,
    Tricolor,
    Sunshine,
    Shadow,
    Motion,
}

impl Scene {
    pub const ALL: [Scene; 6] = [
        Scene::White,
        Scene::Green,
        Scene::Tricolor,
        Scene::Sunshine,
        Scene::Shadow,
        Scene::Motion,
    ];

    pub fn code(self) -> u8 {
        match self {
            Scene::White => 1,
            Scene::Green => 2,
            Scene::Tricolor => 3,
            Scene::Sunshine => 4,
            Scene::Shadow => 5,
            Scene::Motion => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Scene> {
        Scene::ALL.get(code.checked_sub(1)? as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lighting {
    Normal,
    Dim,
    Bright,
    Back,
    Side,
    Top,
}

impl Lighting {
    pub const ALL: [Lighting; 6] = [
        Lighting::Normal,
        Lighting::Dim,
        Lighting::Bright,
        Lighting::Back,
        Lighting::Side,
        Lighting::Top,
    ];

    pub fn code(self) -> u8 {
        match self {
            Lighting::Normal => 1,
            Lighting::Dim => 2,
            Lighting::Bright => 3,
            Lighting::Back => 4,
            Lighting::Side => 5,
            Lighting::Top => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Lighting> {
        Lighting::ALL.get(code.checked_sub(1)? as usize).copied()
    }
}

/// Capture device, numbered 1..=7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sensor {
    IPhone11,
    IPhoneX,
    Mi10,
    P40,
    S20,
    Vivo,
    Hjim,
}

impl Sensor {
    pub const ALL: [Sensor; 7] = [
        Sensor::IPhone11,
        Sensor::IPhoneX,
        Sensor::Mi10,
        Sensor::P40,
        Sensor::S20,
        Sensor::Vivo,
        Sensor::Hjim,
    ];

    pub fn code(self) -> u8 {
        match self {
            Sensor::IPhone11 => 1,
            Sensor::IPhoneX => 2,
            Sensor::Mi10 => 3,
            Sensor::P40 => 4,
            Sensor::S20 => 5,
            Sensor::Vivo => 6,
            Sensor::Hjim => 7,
        }
    }

    pub fn from_code(code: u8) -> Option<Sensor> {
        Sensor::ALL.get(code.checked_sub(1)? as usize).copied()
    }
}

/// The six attributes that identify one video and name its folder.
///
/// The per-frame index lives on [`crate::catalog::SampleRecord`]; it is not
/// part of the folder name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VideoAttrs {
    pub skin: SkinTone,
    /// 1-based subject id.
    pub subject: u32,
    pub sample_type: SampleType,
    pub scene: Scene,
    pub lighting: Lighting,
    pub sensor: Sensor,
}

impl VideoAttrs {
    /// Binary liveness label: true iff the sample type is live.
    pub fn is_live(&self) -> bool {
        self.sample_type.is_live()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("expected 6 underscore-separated tokens, found {found}")]
    TokenCount { found: usize },
    #[error("skin token `{0}` is not one of Y, W, B")]
    Skin(String),
    #[error("subject token `{0}` is not a positive integer")]
    Subject(String),
    #[error("sample type code {0} out of range 0..=3")]
    SampleType(u8),
    #[error("scene code {0} out of range 1..=6")]
    Scene(u8),
    #[error("lighting code {0} out of range 1..=6")]
    Lighting(u8),
    #[error("sensor code {0} out of range 1..=7")]
    Sensor(u8),
    #[error("token `{0}` is not an integer code")]
    NonNumeric(String),
}

/// Render the six underscore-joined folder-name tokens.
pub fn encode_folder_name(attrs: &VideoAttrs) -> String {
    let mut out = String::new();
    fmt::Write::write_fmt(
        &mut out,
        format_args!(
            "{}_{:04}_{}_{}_{}_{}",
            attrs.skin.code(),
            attrs.subject,
            attrs.sample_type.code(),
            attrs.scene.code(),
            attrs.lighting.code(),
            attrs.sensor.code()
        ),
    )
    .expect("writing to String cannot fail");
    out
}

fn numeric_token(token: &str) -> Result<u8, CodecError> {
    token
        .parse::<u8>()
        .map_err(|_| CodecError::NonNumeric(token.to_string()))
}

/// Parse a folder name back into its attributes; exact inverse of
/// [`encode_folder_name`].
pub fn decode_folder_name(name: &str) -> Result<VideoAttrs, CodecError> {
    let tokens: Vec<&str> = name.split('_').collect();
    if tokens.len() != 6 {
        return Err(CodecError::TokenCount {
            found: tokens.len(),
        });
    }
    let skin =
        SkinTone::from_code(tokens[0]).ok_or_else(|| CodecError::Skin(tokens[0].to_string()))?;
    let subject = tokens[1]
        .parse::<u32>()
        .ok()
        .filter(|&s| s >= 1)
        .ok_or_else(|| CodecError::Subject(tokens[1].to_string()))?;
    let type_code = numeric_token(tokens[2])?;
    let sample_type =
        SampleType::from_code(type_code).ok_or(CodecError::SampleType(type_code))?;
    let scene_code = numeric_token(tokens[3])?;
    let scene = Scene::from_code(scene_code).ok_or(CodecError::Scene(scene_code))?;
    let light_code = numeric_token(tokens[4])?;
    let lighting = Lighting::from_code(light_code).ok_or(CodecError::Lighting(light_code))?;
    let sensor_code = numeric_token(tokens[5])?;
    let sensor = Sensor::from_code(sensor_code).ok_or(CodecError::Sensor(sensor_code))?;
    Ok(VideoAttrs {
        skin,
        subject,
        sample_type,
        scene,
        lighting,
        sensor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs(
        skin: SkinTone,
        subject: u32,
        sample_type: SampleType,
        scene: Scene,
        lighting: Lighting,
        sensor: Sensor,
    ) -> VideoAttrs {
        VideoAttrs {
            skin,
            subject,
            sample_type,
            scene,
            lighting,
            sensor,
        }
    }

    #[test]
    fn encode_examples() {
        let a = attrs(
            SkinTone::Yellow,
            1,
            SampleType::Live,
            Scene::White,
            Lighting::Normal,
            Sensor::IPhone11,
        );
        assert_eq!(encode_folder_name(&a), "Y_0001_0_1_1_1");

        let b = attrs(
            SkinTone::Black,
            75,
            SampleType::Resin,
            Scene::Motion,
            Lighting::Top,
            Sensor::Hjim,
        );
        assert_eq!(encode_folder_name(&b), "B_0075_3_6_6_7");
    }

    #[test]
    fn decode_example() {
        let a = decode_folder_name("W_0010_2_4_3_5").unwrap();
        assert_eq!(
            a,
            attrs(
                SkinTone::White,
                10,
                SampleType::Plaster,
                Scene::Sunshine,
                Lighting::Bright,
                Sensor::S20,
            )
        );
    }

    #[test]
    fn decode_rejects_wrong_token_count() {
        assert_eq!(
            decode_folder_name("Y_0001_0_1_1"),
            Err(CodecError::TokenCount { found: 5 })
        );
    }

    #[test]
    fn decode_rejects_out_of_range_type() {
        assert_eq!(
            decode_folder_name("Y_0001_9_1_1_1"),
            Err(CodecError::SampleType(9))
        );
    }

    #[test]
    fn decode_rejects_bad_subject() {
        assert!(matches!(
            decode_folder_name("Y_00x1_0_1_1_1"),
            Err(CodecError::Subject(_))
        ));
        assert!(matches!(
            decode_folder_name("Y_0000_0_1_1_1"),
            Err(CodecError::Subject(_))
        ));
    }

    #[test]
    fn enum_cardinalities() {
        assert_eq!(SkinTone::ALL.len(), 3);
        assert_eq!(SampleType::ALL.len(), 4);
        assert_eq!(Scene::ALL.len(), 6);
        assert_eq!(Lighting::ALL.len(), 6);
        assert_eq!(Sensor::ALL.len(), 7);
    }

    #[test]
    fn roundtrip_full_grid() {
        for skin in SkinTone::ALL {
            for subject in [1u32, 9, 75, 9999, 12345] {
                for sample_type in SampleType::ALL {
                    for scene in Scene::ALL {
                        for lighting in Lighting::ALL {
                            for sensor in Sensor::ALL {
                                let a = attrs(skin, subject, sample_type, scene, lighting, sensor);
                                let name = encode_folder_name(&a);
                                assert_eq!(decode_folder_name(&name).unwrap(), a, "{name}");
                            }
                        }
                    }
                }
            }
        }
    }
}
