//! On-disk catalogs: `designs/*.pgm`, `sherds/*_{curve,mask}.pgm`,
//! `manifest.json` and `splits/*.json`.

use std::path::{Path, PathBuf};

use curvematch_core::corpus::{self, CorpusConfig, SherdRecord};
use curvematch_core::{Catalog, Design, DesignId, SherdTemplate};
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::pgm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignEntry {
    pub id: DesignId,
    pub file: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Generator settings, absent for hand-assembled catalogs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<CorpusConfig>,
    pub designs: Vec<DesignEntry>,
    pub sherds: Vec<SherdRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub fraction: f64,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub const DEFAULT_SPLIT: &str = "default";

pub fn design_file(id: DesignId) -> String {
    format!("designs/{id}.pgm")
}

/// Generates the corpus for `config` and writes it under `dir`, with a
/// default split.
pub fn write_corpus(dir: &Path, config: &CorpusConfig, split_fraction: f64) -> Result<Manifest> {
    let generated = corpus::gen_corpus(config)?;
    let mut designs = Vec::new();
    for d in &generated.designs {
        let file = design_file(d.id);
        pgm::save_pgm(&d.image, &dir.join(&file))?;
        designs.push(DesignEntry {
            id: d.id,
            file,
            width: d.image.width(),
            height: d.image.height(),
        });
    }
    for (r, s) in generated.records.iter().zip(&generated.sherds) {
        pgm::save_pgm(s.template.curve(), &dir.join(&r.curve_file))?;
        pgm::save_pgm(s.template.mask(), &dir.join(&r.mask_file))?;
    }
    let manifest = Manifest {
        config: Some(config.clone()),
        designs,
        sherds: generated.records,
    };
    error::write_json(&dir.join("manifest.json"), &manifest)?;
    let (train, test) = corpus::split_train_test(&manifest.sherds, split_fraction, config.seed)?;
    write_split(
        dir,
        DEFAULT_SPLIT,
        &Split {
            fraction: split_fraction,
            seed: config.seed,
            train,
            test,
        },
    )?;
    Ok(manifest)
}

pub fn write_split(dir: &Path, name: &str, split: &Split) -> Result<()> {
    error::write_json(&dir.join("splits").join(format!("{name}.json")), split)
}

pub fn load_template(curve: &Path, mask: &Path) -> Result<SherdTemplate> {
    let c = pgm::load_pgm(curve)?;
    let m = pgm::load_pgm(mask)?;
    SherdTemplate::new(c, m).map_err(|e| Error::format(curve, e.to_string()))
}

/// A catalog directory with its designs loaded.
#[derive(Clone, Debug)]
pub struct CatalogDir {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub catalog: Catalog,
}

impl CatalogDir {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest: Manifest = error::read_json(&root.join("manifest.json"))?;
        let mut designs = Vec::with_capacity(manifest.designs.len());
        for e in &manifest.designs {
            let path = root.join(&e.file);
            let image = pgm::load_pgm(&path)?;
            if image.dims() != (e.width, e.height) {
                return Err(Error::format(
                    &path,
                    format!(
                        "extent {:?} differs from manifest {}x{}",
                        image.dims(),
                        e.width,
                        e.height
                    ),
                ));
            }
            designs.push(Design { id: e.id, image });
        }
        let catalog = Catalog::new(designs)
            .map_err(|e| Error::format(&root.join("manifest.json"), e.to_string()))?;
        if catalog.is_empty() {
            return Err(Error::format(&root.join("manifest.json"), "catalog has no designs"));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            catalog,
        })
    }

    pub fn record(&self, id: &str) -> Result<&SherdRecord> {
        self.manifest
            .sherds
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::Usage(format!("unknown sherd id {id:?}")))
    }

    pub fn template(&self, record: &SherdRecord) -> Result<SherdTemplate> {
        load_template(&self.root.join(&record.curve_file), &self.root.join(&record.mask_file))
    }

    pub fn split(&self, name: &str) -> Result<Split> {
        error::read_json(&self.root.join("splits").join(format!("{name}.json")))
    }

    /// Records and templates for `ids`, in the given order.
    pub fn sherds(&self, ids: &[String]) -> Result<Vec<(SherdRecord, SherdTemplate)>> {
        ids.iter()
            .map(|id| {
                let r = self.record(id)?;
                Ok((r.clone(), self.template(r)?))
            })
            .collect()
    }

    /// Sherd ids of a split part: `train`, `test` or `all`.
    pub fn split_ids(&self, split: &str, part: &str) -> Result<Vec<String>> {
        if part == "all" {
            return Ok(self.manifest.sherds.iter().map(|r| r.id.clone()).collect());
        }
        let s = self.split(split)?;
        match part {
            "train" => Ok(s.train),
            "test" => Ok(s.test),
            other => Err(Error::Usage(format!(
                "unknown split part {other:?} (expected train, test or all)"
            ))),
        }
    }
}
