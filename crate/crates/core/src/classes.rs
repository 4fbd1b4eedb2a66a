//! The fixed 15-scene label vocabulary.

use std::fmt;
use std::str::FromStr;

pub const NUM_CLASSES: usize = 15;

/// Scene labels in their canonical (class index) order.
pub const SCENE_LABELS: [&str; NUM_CLASSES] = [
    "beach",
    "bus",
    "cafe/restaurant",
    "car",
    "city_center",
    "forest_path",
    "grocery_store",
    "home",
    "library",
    "metro_station",
    "office",
    "park",
    "residential_area",
    "train",
    "tram",
];

/// Index into [`SCENE_LABELS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SceneClass(usize);

impl SceneClass {
    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_CLASSES).then_some(Self(index))
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn label(self) -> &'static str {
        SCENE_LABELS[self.0]
    }

    pub fn all() -> impl Iterator<Item = SceneClass> {
        (0..NUM_CLASSES).map(SceneClass)
    }
}

impl fmt::Display for SceneClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown scene label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for SceneClass {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SCENE_LABELS
            .iter()
            .position(|l| *l == s)
            .map(SceneClass)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}
