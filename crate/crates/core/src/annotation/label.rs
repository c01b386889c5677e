use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenes::{Dynamics, SourceType};

macro_rules! category {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(
                #[serde(rename = $text $(, alias = $alias)*)]
                $variant,
            )+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn text(self) -> &'static str {
                match self {
                    $($name::$variant => $text,)+
                }
            }
        }
    };
}

category!(
    /// Where the key light comes from, relative to camera and subject.
    Direction {
        Front => "Front Light",
        Side => "Side Light",
        Back => "Back Light",
        Top => "Top Light",
        Bottom => "Bottom Light",
        Split => "Split Light",
        Ambient => "Ambient Light Without Clear Direction",
    }
);

category!(
    Source {
        Natural => "Natural Light",
        Artificial => "Artificial Light",
        Rendering => "Rendering Light",
    }
);

category!(
    Intensity {
        Glare => "Glare",
        Moderate => "Moderate",
        Dim => "Dim",
    }
);

category!(
    Temperature {
        Cool => "Cool Tone",
        Neutral => "Neutral",
        Warm => "Warm Tone",
    }
);

category!(
    Temporal {
        Static => "Static Light",
        DynamicIntensity => "Dynamic Light (Intensity Changing Light)" | "Dynamic Light (Intensity Changing)",
        DynamicMoving => "Dynamic Light (Moving Source Light)" | "Dynamic Light (Moving Source)",
    }
);

category!(
    Optical {
        Transmission => "Transmission (Glass)",
        RefractionReflection => "Refraction/Reflection (Water Surface, Mirror)" | "Refraction/Reflection (Mirror)",
        Scattering => "Scattering (Fog Effect)",
        None => "None",
    }
);

impl From<SourceType> for Source {
    fn from(s: SourceType) -> Self {
        match s {
            SourceType::Natural => Source::Natural,
            SourceType::Artificial => Source::Artificial,
            SourceType::Rendering => Source::Rendering,
        }
    }
}

impl From<Source> for SourceType {
    fn from(s: Source) -> Self {
        match s {
            Source::Natural => SourceType::Natural,
            Source::Artificial => SourceType::Artificial,
            Source::Rendering => SourceType::Rendering,
        }
    }
}

impl From<Dynamics> for Temporal {
    fn from(d: Dynamics) -> Self {
        match d {
            Dynamics::Static => Temporal::Static,
            Dynamics::IntensityChanging => Temporal::DynamicIntensity,
            Dynamics::MovingSource => Temporal::DynamicMoving,
        }
    }
}

impl From<Temporal> for Dynamics {
    fn from(t: Temporal) -> Self {
        match t {
            Temporal::Static => Dynamics::Static,
            Temporal::DynamicIntensity => Dynamics::IntensityChanging,
            Temporal::DynamicMoving => Dynamics::MovingSource,
        }
    }
}

/// The six annotated lighting attributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Direction,
    SourceType,
    Intensity,
    ColorTemperature,
    Temporal,
    Optical,
}

impl Attribute {
    pub const ALL: [Attribute; 6] = [
        Attribute::Direction,
        Attribute::SourceType,
        Attribute::Intensity,
        Attribute::ColorTemperature,
        Attribute::Temporal,
        Attribute::Optical,
    ];

    /// Number of categories.
    pub fn cardinality(self) -> usize {
        match self {
            Attribute::Direction => Direction::ALL.len(),
            Attribute::SourceType => Source::ALL.len(),
            Attribute::Intensity => Intensity::ALL.len(),
            Attribute::ColorTemperature => Temperature::ALL.len(),
            Attribute::Temporal => Temporal::ALL.len(),
            Attribute::Optical => Optical::ALL.len(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Direction => "direction",
            Attribute::SourceType => "source_type",
            Attribute::Intensity => "intensity",
            Attribute::ColorTemperature => "color_temperature",
            Attribute::Temporal => "temporal",
            Attribute::Optical => "optical",
        }
    }

    /// Offset of this attribute's block inside a [`ConditionVector`].
    pub fn offset(self) -> usize {
        Attribute::ALL
            .iter()
            .take_while(|a| **a != self)
            .map(|a| a.cardinality())
            .sum()
    }
}

/// Six-attribute structured lighting caption.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LightingLabel {
    #[serde(rename = "Direction of Light")]
    pub direction: Direction,
    #[serde(rename = "Light Source Type")]
    pub source_type: Source,
    #[serde(rename = "Light Intensity")]
    pub intensity: Intensity,
    #[serde(rename = "Color Temperature")]
    pub color_temperature: Temperature,
    #[serde(rename = "Light Changes in Time")]
    pub temporal: Temporal,
    #[serde(rename = "Optical Phenomena")]
    pub optical: Optical,
}

impl LightingLabel {
    /// Category index of one attribute.
    pub fn get(&self, a: Attribute) -> usize {
        match a {
            Attribute::Direction => self.direction.index(),
            Attribute::SourceType => self.source_type.index(),
            Attribute::Intensity => self.intensity.index(),
            Attribute::ColorTemperature => self.color_temperature.index(),
            Attribute::Temporal => self.temporal.index(),
            Attribute::Optical => self.optical.index(),
        }
    }

    /// Copy with one attribute replaced by category `value`.
    pub fn with(mut self, a: Attribute, value: usize) -> Result<Self> {
        let bad = || Error::Config(format!("{} has no category {value}", a.name()));
        match a {
            Attribute::Direction => self.direction = Direction::from_index(value).ok_or_else(bad)?,
            Attribute::SourceType => self.source_type = Source::from_index(value).ok_or_else(bad)?,
            Attribute::Intensity => self.intensity = Intensity::from_index(value).ok_or_else(bad)?,
            Attribute::ColorTemperature => {
                self.color_temperature = Temperature::from_index(value).ok_or_else(bad)?
            }
            Attribute::Temporal => self.temporal = Temporal::from_index(value).ok_or_else(bad)?,
            Attribute::Optical => self.optical = Optical::from_index(value).ok_or_else(bad)?,
        }
        Ok(self)
    }

    /// Attributes on which two labels disagree.
    pub fn diff(&self, other: &LightingLabel) -> Vec<Attribute> {
        Attribute::ALL
            .into_iter()
            .filter(|a| self.get(*a) != other.get(*a))
            .collect()
    }

    /// Every label in the product space, in lexicographic index order.
    pub fn all() -> Vec<LightingLabel> {
        let mut out = Vec::with_capacity(2268);
        for &direction in Direction::ALL {
            for &source_type in Source::ALL {
                for &intensity in Intensity::ALL {
                    for &color_temperature in Temperature::ALL {
                        for &temporal in Temporal::ALL {
                            for &optical in Optical::ALL {
                                out.push(LightingLabel {
                                    direction,
                                    source_type,
                                    intensity,
                                    color_temperature,
                                    temporal,
                                    optical,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("label serializes")
    }
}

/// Length of the concatenated one-hot encoding.
pub const CONDITION_DIM: usize = 23;

/// Numeric form of a [`LightingLabel`]: six concatenated one-hot blocks of
/// sizes 7, 3, 3, 3, 3, 4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub values: Vec<f64>,
}

pub fn encode_label(label: &LightingLabel) -> ConditionVector {
    let mut values = vec![0.0; CONDITION_DIM];
    for a in Attribute::ALL {
        values[a.offset() + label.get(a)] = 1.0;
    }
    ConditionVector { values }
}

pub fn decode_label(c: &ConditionVector) -> Result<LightingLabel> {
    if c.values.len() != CONDITION_DIM {
        return Err(Error::Shape(format!(
            "condition vector has length {}, expected {CONDITION_DIM}",
            c.values.len()
        )));
    }
    let mut label = LightingLabel {
        direction: Direction::Front,
        source_type: Source::Natural,
        intensity: Intensity::Moderate,
        color_temperature: Temperature::Neutral,
        temporal: Temporal::Static,
        optical: Optical::None,
    };
    for a in Attribute::ALL {
        let block = &c.values[a.offset()..a.offset() + a.cardinality()];
        let ones: Vec<usize> = block
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == 1.0)
            .map(|(i, _)| i)
            .collect();
        if ones.len() != 1 || block.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::Config(format!(
                "{} block is not one-hot: {block:?}",
                a.name()
            )));
        }
        label = label.with(a, ones[0])?;
    }
    Ok(label)
}
