//! Ordinal rating scale definition.

use serde::{Deserialize, Serialize};

/// An ordinal scale of `k_categories` consecutive integer labels starting at
/// `min_label` (a 1-to-7 scale is `ScaleSpec::new(7, 1)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub k_categories: usize,
    pub min_label: i32,
}

/// Invalid scale definition.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScaleError {
    #[error("a rating scale needs at least 2 categories, got {0}")]
    TooFewCategories(usize),
}

impl ScaleSpec {
    pub fn new(k_categories: usize, min_label: i32) -> Result<Self, ScaleError> {
        if k_categories < 2 {
            return Err(ScaleError::TooFewCategories(k_categories));
        }
        Ok(Self {
            k_categories,
            min_label,
        })
    }

    pub fn max_label(&self) -> i32 {
        self.min_label + self.k_categories as i32 - 1
    }

    pub fn contains(&self, category: i32) -> bool {
        category >= self.min_label && category <= self.max_label()
    }

    /// Zero-based position of a category label on the scale.
    pub fn position(&self, category: i32) -> Option<usize> {
        if self.contains(category) {
            Some((category - self.min_label) as usize)
        } else {
            None
        }
    }

    /// Category label at a zero-based position.
    pub fn label(&self, position: usize) -> i32 {
        debug_assert!(position < self.k_categories);
        self.min_label + position as i32
    }

    pub fn labels(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.k_categories).map(|p| self.label(p))
    }
}
