use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::generate::{ApplicationOrder, BlendLog, ForgeryRecord, Quadrant};
use super::postprocess::GlobalOp;
use super::{GenConfig, SynthError, TransformKind};
use crate::geometry::SimilarityTransform;
use crate::imaging::{
    load_image, load_label_map, load_mask, save_image, save_label_map, save_mask, BoundingBox,
    Codec,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "meta.json";
pub const IMAGE_FILE: &str = "image.png";
pub const MASK_FILE: &str = "mask.png";
pub const MAP_FILE: &str = "map.png";

/// Per-record sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMeta {
    pub id: String,
    pub kind: TransformKind,
    pub transform: SimilarityTransform,
    pub order_flag: ApplicationOrder,
    pub source_bbox: BoundingBox,
    pub target_bbox: BoundingBox,
    pub source_quadrant: Quadrant,
    pub target_quadrant: Quadrant,
    pub blend: Option<BlendLog>,
    pub postprocessing: Vec<GlobalOp>,
    pub seed: u64,
    pub background_ref: String,
}

impl RecordMeta {
    pub fn of(r: &ForgeryRecord) -> Self {
        Self {
            id: r.id.clone(),
            kind: r.kind,
            transform: r.transform,
            order_flag: r.order,
            source_bbox: r.source_bbox,
            target_bbox: r.target_bbox,
            source_quadrant: r.source_quadrant,
            target_quadrant: r.target_quadrant,
            blend: r.blend,
            postprocessing: r.postprocessing.clone(),
            seed: r.seed,
            background_ref: r.background_ref.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    pub config: Option<GenConfig>,
    pub ids: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |e| SynthError::Io { path: path.to_path_buf(), source: e }
}

/// Parses JSON, naming the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, SynthError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| SynthError::Sidecar {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), SynthError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, SynthError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_json(&text, path)
}

pub fn write_record(record: &ForgeryRecord, root: &Path) -> Result<PathBuf, SynthError> {
    let dir = root.join(&record.id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    save_image(&record.image, &dir.join(IMAGE_FILE), Codec::Lossless)?;
    save_mask(&record.mask(), &dir.join(MASK_FILE))?;
    save_label_map(&record.labels, &dir.join(MAP_FILE))?;
    write_json(&RecordMeta::of(record), &dir.join(META_FILE))?;
    Ok(dir)
}

/// Writes every record under `root` plus a manifest listing the ids.
pub fn write_dataset(
    records: &[ForgeryRecord],
    root: &Path,
    config: Option<&GenConfig>,
) -> Result<Manifest, SynthError> {
    std::fs::create_dir_all(root).map_err(io_err(root))?;
    for r in records {
        write_record(r, root)?;
    }
    write_manifest(root, config, records.iter().map(|r| r.id.clone()).collect())
}

/// Writes the manifest alone, for datasets written record by record.
pub fn write_manifest(root: &Path, config: Option<&GenConfig>, ids: Vec<String>) -> Result<Manifest, SynthError> {
    let manifest = Manifest { version: env!("CARGO_PKG_VERSION").to_string(), config: config.cloned(), ids };
    write_json(&manifest, &root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest, SynthError> {
    read_json(&root.join(MANIFEST_FILE))
}

pub fn read_record(root: &Path, id: &str) -> Result<ForgeryRecord, SynthError> {
    let dir = root.join(id);
    let meta: RecordMeta = read_json(&dir.join(META_FILE))?;
    if meta.id != id {
        return Err(SynthError::Sidecar {
            path: dir.join(META_FILE),
            field: "id".into(),
            message: format!("expected {id}, found {}", meta.id),
        });
    }
    let image = load_image(&dir.join(IMAGE_FILE))?;
    let mask = load_mask(&dir.join(MASK_FILE))?;
    let labels = load_label_map(&dir.join(MAP_FILE))?;
    if labels.dimensions() != image.dimensions() || mask.dimensions() != image.dimensions() {
        return Err(SynthError::Inconsistent(format!("{id}: image, mask and map sizes differ")));
    }
    labels.check_against(&mask).map_err(|_| {
        SynthError::Inconsistent(format!("{id}: map does not match the localization mask"))
    })?;
    Ok(ForgeryRecord {
        id: meta.id,
        image,
        labels,
        transform: meta.transform,
        kind: meta.kind,
        order: meta.order_flag,
        source_bbox: meta.source_bbox,
        target_bbox: meta.target_bbox,
        source_quadrant: meta.source_quadrant,
        target_quadrant: meta.target_quadrant,
        blend: meta.blend,
        postprocessing: meta.postprocessing,
        seed: meta.seed,
        background_ref: meta.background_ref,
    })
}

pub fn read_dataset(root: &Path) -> Result<Vec<ForgeryRecord>, SynthError> {
    let manifest = read_manifest(root)?;
    manifest.ids.iter().map(|id| read_record(root, id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_record, BackgroundPool, BackgroundSource};

    fn one_record() -> (GenConfig, ForgeryRecord) {
        let mut cfg = GenConfig::new(TransformKind::Rot, 9);
        cfg.source_box = 74;
        cfg.image_size = 2 * cfg.required_quadrant().next_multiple_of(2);
        cfg.background = BackgroundSource::Procedural { pool_size: 1 };
        cfg.pp_probability = 1.0;
        let pool = BackgroundPool::new(&cfg.background, cfg.image_size).unwrap();
        let r = generate_record(&cfg, &pool, 0).unwrap();
        (cfg, r)
    }

    #[test]
    fn record_round_trip() {
        let (cfg, r) = one_record();
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(std::slice::from_ref(&r), dir.path(), Some(&cfg)).unwrap();
        assert_eq!(m.ids, vec![r.id.clone()]);
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, vec![r]);
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
    }

    #[test]
    fn empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(&[], dir.path(), None).unwrap();
        assert!(m.ids.is_empty());
        assert!(read_dataset(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn corrupt_sidecars_name_the_field() {
        let (cfg, r) = one_record();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(std::slice::from_ref(&r), dir.path(), Some(&cfg)).unwrap();
        let meta_path = dir.path().join(&r.id).join(META_FILE);
        let good: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&meta_path).unwrap()).unwrap();
        let cases: Vec<(&str, Box<dyn Fn(&mut serde_json::Value)>)> = vec![
            ("transform.fx", Box::new(|v| v["transform"]["fx"] = "wide".into())),
            ("kind", Box::new(|v| v["kind"] = "shear".into())),
            ("source_bbox", Box::new(|v| v["source_bbox"] = serde_json::json!([1, 2, 0, 4]))),
            ("seed", Box::new(|v| v["seed"] = (-1).into())),
            ("order_flag", Box::new(|v| v["order_flag"] = 3.into())),
            ("transform", Box::new(|v| { v["transform"].as_object_mut().unwrap().remove("ty"); })),
        ];
        for (field, corrupt) in cases {
            let mut v = good.clone();
            corrupt(&mut v);
            std::fs::write(&meta_path, serde_json::to_string(&v).unwrap()).unwrap();
            match read_dataset(dir.path()) {
                Err(SynthError::Sidecar { field: f, .. }) => assert!(f.starts_with(field), "{f} vs {field}"),
                other => panic!("expected sidecar error for {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn missing_files_are_reported() {
        let (cfg, r) = one_record();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(std::slice::from_ref(&r), dir.path(), Some(&cfg)).unwrap();
        std::fs::remove_file(dir.path().join(&r.id).join(MASK_FILE)).unwrap();
        assert!(read_dataset(dir.path()).is_err());
    }
}
