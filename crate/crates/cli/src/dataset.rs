//! Dataset directories: `manifest.jsonl`, one raster per image under `images/`, PNG previews
//! under `previews/`.

use std::fs;
use std::path::Path;

use pdanet_core::data::{Dataset, DomainTag, Split, TaggedImage};
use pdanet_core::io::{read_image, read_manifest, read_raster, write_manifest, write_png16, write_raster, ManifestRecord, MANIFEST_FILE};
use pdanet_core::ScalarField2D;

use crate::error::{usage, Result};

pub const IMAGES: &str = "images";
pub const PREVIEWS: &str = "previews";

/// One image of a dataset directory with its manifest record.
#[derive(Clone, Debug)]
pub struct Entry {
    pub record: ManifestRecord,
    pub image: ScalarField2D<f32>,
}

impl Entry {
    pub fn new(id: String, domain: DomainTag, split: Split, image: ScalarField2D<f32>) -> Self {
        let path = format!("{IMAGES}/{id}.ldos");
        Entry { record: ManifestRecord { id, path, domain, split }, image }
    }
}

pub fn write_dataset(dir: &Path, entries: &[Entry], previews: bool) -> Result<()> {
    fs::create_dir_all(dir.join(IMAGES))?;
    if previews {
        fs::create_dir_all(dir.join(PREVIEWS))?;
    }
    for e in entries {
        write_raster(&dir.join(&e.record.path), &e.image)?;
        if previews {
            write_png16(&dir.join(PREVIEWS).join(format!("{}.png", e.record.id)), &e.image)?;
        }
    }
    let records: Vec<ManifestRecord> = entries.iter().map(|e| e.record.clone()).collect();
    write_manifest(&dir.join(MANIFEST_FILE), &records)?;
    Ok(())
}

/// Reads a dataset directory. A directory without a manifest is taken as a folder of measured
/// images (`.png` or `.ldos`), all tagged EXP/test, with ids from the file stems.
pub fn read_dataset(dir: &Path) -> Result<Vec<Entry>> {
    if !dir.is_dir() {
        return Err(usage(format!("input directory {} does not exist", dir.display())));
    }
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.exists() {
        return read_manifest(&manifest)?
            .into_iter()
            .map(|record| {
                let image = read_raster(&dir.join(&record.path), None)?;
                Ok(Entry { record, image })
            })
            .collect();
    }
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|x| x.to_str()), Some("png" | "ldos")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("{} holds neither a {MANIFEST_FILE} nor any .png/.ldos images", dir.display())));
    }
    files
        .iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let image = if p.extension().is_some_and(|x| x == "png") { read_image(p)? } else { read_raster(p, None)? };
            Ok(Entry::new(id, DomainTag::Exp, Split::Test, image))
        })
        .collect()
}

pub fn select(entries: &[Entry], domain: Option<DomainTag>, split: Option<Split>) -> Vec<Entry> {
    entries
        .iter()
        .filter(|e| domain.is_none_or(|d| e.record.domain == d) && split.is_none_or(|s| e.record.split == s))
        .cloned()
        .collect()
}

pub fn tagged(entries: &[Entry]) -> Vec<TaggedImage<f32>> {
    entries.iter().map(|e| TaggedImage { id: e.record.id.clone(), image: e.image.clone() }).collect()
}

/// The training split of `entries`, which must all carry `domain`.
pub fn training_set(entries: &[Entry], domain: DomainTag, what: &str) -> Result<Dataset<f32>> {
    if let Some(bad) = entries.iter().find(|e| e.record.domain != domain) {
        return Err(usage(format!("{what}: image {} is {}, expected {domain}", bad.record.id, bad.record.domain)));
    }
    let train = select(entries, None, Some(Split::Train));
    if train.is_empty() {
        return Err(usage(format!("{what}: no training images")));
    }
    Ok(Dataset::new(domain, tagged(&train))?)
}
