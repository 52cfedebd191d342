use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 5;

/// Tissue categories annotated in the segmentation masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TissueClass {
    Background,
    Fat,
    Mammary,
    Tumor,
    Muscle,
}

impl TissueClass {
    pub const ALL: [TissueClass; NUM_CLASSES] = [
        TissueClass::Background,
        TissueClass::Fat,
        TissueClass::Mammary,
        TissueClass::Tumor,
        TissueClass::Muscle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TissueClass::Background => "background",
            TissueClass::Fat => "fat",
            TissueClass::Mammary => "mammary",
            TissueClass::Tumor => "tumor",
            TissueClass::Muscle => "muscle",
        }
    }
}

/// Assignment of tissue classes to integer labels; `order[label]` is the
/// class carried by that label. The default orders classes by typical
/// superficial-to-deep adjacency, so label distance grows with anatomical
/// implausibility of two tissues touching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassOrder(pub [TissueClass; NUM_CLASSES]);

impl Default for ClassOrder {
    fn default() -> Self {
        ClassOrder(TissueClass::ALL)
    }
}

impl ClassOrder {
    pub fn new(order: [TissueClass; NUM_CLASSES]) -> Result<Self> {
        let co = ClassOrder(order);
        co.validate()?;
        Ok(co)
    }

    pub fn validate(&self) -> Result<()> {
        for c in TissueClass::ALL {
            if self.0.iter().filter(|&&o| o == c).count() != 1 {
                return Err(Error::Config {
                    field: "class_order",
                    reason: format!("{} must appear exactly once", c.name()),
                });
            }
        }
        Ok(())
    }

    pub fn label(&self, class: TissueClass) -> u8 {
        self.0.iter().position(|&c| c == class).expect("class_order is a bijection") as u8
    }

    pub fn class(&self, label: u8) -> TissueClass {
        self.0[label as usize]
    }

    pub fn background(&self) -> u8 {
        self.label(TissueClass::Background)
    }
}
