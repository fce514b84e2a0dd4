//! JSON dataset manifests. Paths are relative to the manifest's directory.
//!
//! ```json
//! {"entries": [{"id": "a", "probability_map_path": "maps/a.pmap", "mask_path": "masks/a.pgm"}]}
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::grid::CalibrationRecord;
use crate::io::{read_mask, read_probability_map, write_mask, write_probability_map};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub probability_map_path: PathBuf,
    pub mask_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub root: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let file: ManifestFile =
            serde_json::from_str(&text).map_err(|e| Error::format(path, FormatError::Manifest(e.to_string())))?;
        let mut seen = HashSet::new();
        if let Some(dup) = file.entries.iter().find(|e| !seen.insert(e.id.as_str())) {
            return Err(Error::format(
                path,
                FormatError::Manifest(format!("duplicate id {:?}", dup.id)),
            ));
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            entries: file.entries,
            root,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ManifestFile {
            entries: self.entries.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Parses every entry; records come back in manifest order.
    pub fn load_records(&self) -> Result<Vec<CalibrationRecord>> {
        self.entries
            .par_iter()
            .map(|entry| {
                let map_path = self.root.join(&entry.probability_map_path);
                let mask_path = self.root.join(&entry.mask_path);
                let map = read_probability_map(&map_path)?;
                let mask = read_mask(&mask_path)?;
                if map.dims() != mask.dims() {
                    return Err(Error::format(
                        &mask_path,
                        FormatError::Manifest(format!(
                            "entry {:?}: map is {:?} but mask is {:?}",
                            entry.id,
                            map.dims(),
                            mask.dims()
                        )),
                    ));
                }
                CalibrationRecord::new(entry.id.clone(), map, mask)
            })
            .collect()
    }
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Vec<CalibrationRecord>> {
    DatasetManifest::load(manifest_path)?.load_records()
}

/// Writes `records` under `dir` as `maps/<id>.pmap` and `masks/<id>.pgm`
/// plus a `manifest.json` listing them in order.
pub fn write_dataset(records: &[CalibrationRecord], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("maps"))?;
    std::fs::create_dir_all(dir.join("masks"))?;
    let entries = records
        .iter()
        .map(|r| {
            let entry = ManifestEntry {
                id: r.id.clone(),
                probability_map_path: PathBuf::from("maps").join(format!("{}.pmap", r.id)),
                mask_path: PathBuf::from("masks").join(format!("{}.pgm", r.id)),
            };
            write_probability_map(r.map(), dir.join(&entry.probability_map_path))?;
            write_mask(r.mask(), dir.join(&entry.mask_path))?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        entries,
        root: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}
