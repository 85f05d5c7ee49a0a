use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CoverDescriptor, FuchsianGroup};
use crate::error::{Error, Result};
use crate::hypgeo::Moebius;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSpec {
    pub degree: usize,
    #[serde(default)]
    pub perm: BTreeMap<String, Vec<usize>>,
}

/// On-disk surface definition. Floats round-trip bit-exactly through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFile {
    pub generators: Vec<[f64; 4]>,
    pub labels: Vec<String>,
    pub relator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover: Option<CoverSpec>,
}

impl SurfaceFile {
    pub fn from_group(group: &FuchsianGroup) -> Self {
        SurfaceFile {
            generators: group.generators().iter().map(Moebius::entries).collect(),
            labels: group.labels().to_vec(),
            relator: group.relator_text(),
            cover: None,
        }
    }

    pub fn from_cover(cover: &CoverDescriptor) -> Self {
        let mut file = Self::from_group(cover.base());
        let perm = cover
            .base()
            .labels()
            .iter()
            .zip(cover.perms())
            .map(|(l, p)| (l.clone(), p.images()))
            .collect();
        file.cover = Some(CoverSpec { degree: cover.degree(), perm });
        file
    }

    pub fn group(&self) -> Result<FuchsianGroup> {
        let gens = self
            .generators
            .iter()
            .map(|e| Moebius::from_entries(*e))
            .collect::<Result<Vec<_>>>()?;
        FuchsianGroup::new(self.labels.clone(), gens, &self.relator)
    }

    /// The cover described by the file; the trivial cover when none is given.
    pub fn cover(&self) -> Result<CoverDescriptor> {
        let base = Arc::new(self.group()?);
        match &self.cover {
            None => Ok(CoverDescriptor::trivial(base)),
            Some(c) => CoverDescriptor::from_map(base, c.degree, &c.perm),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("surface file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParams(format!("surface file: {e}")))
    }
}
