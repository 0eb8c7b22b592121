//! The set of trained up-samplers available to the encoder and decoder.

use crate::error::{Error, Result};
use crate::nn::{load_model, UpsamplerNet, Variant};
use std::path::Path;

/// File extension of model files.
pub const MODEL_EXT: &str = "arun";

#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    models: Vec<UpsamplerNet<f32>>,
}

/// Luma and chroma networks trained for the same QP.
#[derive(Debug, Clone, Copy)]
pub struct ModelPair<'a> {
    pub luma: &'a UpsamplerNet<f32>,
    pub chroma: &'a UpsamplerNet<f32>,
    pub tag: u8,
}

impl ModelSet {
    pub fn new(models: Vec<UpsamplerNet<f32>>) -> Self {
        ModelSet { models }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Loads every `*.arun` file of a directory, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in rd {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            if p.extension().is_some_and(|e| e == MODEL_EXT) {
                paths.push(p);
            }
        }
        paths.sort();
        let models = paths.iter().map(|p| load_model(p)).collect::<Result<_>>()?;
        Ok(ModelSet { models })
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[UpsamplerNet<f32>] {
        &self.models
    }

    fn find(&self, v: Variant, tag: u8) -> Option<&UpsamplerNet<f32>> {
        self.models.iter().find(|m| m.variant == v && m.qp_tag == tag)
    }

    /// QP tags for which both variants are present, ascending.
    pub fn complete_tags(&self) -> Vec<u8> {
        let mut tags: Vec<u8> = self
            .models
            .iter()
            .map(|m| m.qp_tag)
            .filter(|&t| self.find(Variant::Luma, t).is_some() && self.find(Variant::Chroma, t).is_some())
            .collect();
        tags.sort_unstable();
        tags.dedup();
        tags
    }

    pub fn exact(&self, tag: u8) -> Option<ModelPair<'_>> {
        Some(ModelPair {
            luma: self.find(Variant::Luma, tag)?,
            chroma: self.find(Variant::Chroma, tag)?,
            tag,
        })
    }

    /// Pair trained for the QP closest to `qp`; the lower tag wins a tie.
    pub fn nearest(&self, qp: u8) -> Option<ModelPair<'_>> {
        let tag = self
            .complete_tags()
            .into_iter()
            .min_by_key(|&t| (t.abs_diff(qp), t))?;
        self.exact(tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;

    fn m(v: Variant, tag: u8) -> UpsamplerNet<f32> {
        UpsamplerNet::zeros(v, Architecture::compact(), tag).unwrap()
    }

    #[test]
    fn nearest_complete_pair() {
        let set = ModelSet::new(vec![
            m(Variant::Luma, 32),
            m(Variant::Chroma, 32),
            m(Variant::Luma, 37),
            m(Variant::Chroma, 37),
            m(Variant::Luma, 40), // no chroma partner
        ]);
        assert_eq!(set.complete_tags(), vec![32, 37]);
        assert_eq!(set.nearest(39).unwrap().tag, 37);
        assert_eq!(set.nearest(34).unwrap().tag, 32);
        assert_eq!(set.nearest(35).unwrap().tag, 37);
        assert_eq!(set.nearest(51).unwrap().tag, 37);
        assert!(set.exact(40).is_none());
        assert!(ModelSet::empty().nearest(37).is_none());
    }
}
