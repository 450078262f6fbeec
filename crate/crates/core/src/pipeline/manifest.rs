//! Dataset manifests: one JSON object per line,
//! `{"image_path": .., "label": "NoDR"|"DR", "annotations": [..], "truth_mask": ..}`.
//!
//! Relative paths resolve against the manifest's directory. Annotation files
//! are either `.json` (`{"boxes": [[x0, y0, x1, y1], ..]}`, half-open pixel
//! boxes) or grayscale PNG masks. The optional `truth_mask` is a PNG of true
//! lesion pixels; it never feeds training and is only used for scoring.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SafeError};
use crate::labels::ImageLabel;
use crate::patch_grid::{FundusImage, LesionAnnotationSet, Region};
use crate::raster::{read_png, RgbImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub label: ImageLabel,
    #[serde(default)]
    pub annotations: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_mask: Option<PathBuf>,
}

impl ManifestEntry {
    /// File stem of the image, used as its id.
    pub fn image_id(&self) -> String {
        self.image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct BoxFile {
    boxes: Vec<[usize; 4]>,
}

pub fn parse_manifest(text: &str, root: &Path, source: &Path) -> Result<DatasetManifest> {
    let mut entries: Vec<ManifestEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| SafeError::Parse {
            path: source.display().to_string(),
            line: i + 1,
            msg,
        };
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if entry.label == ImageLabel::NoDr && !entry.annotations.is_empty() {
            return Err(SafeError::Validation(format!(
                "{} line {}: NoDR image {} lists lesion annotations",
                source.display(),
                i + 1,
                entry.image_path.display()
            )));
        }
        let id = entry.image_id();
        if id.is_empty() {
            return Err(parse_err("image_path has no file name".into()));
        }
        if entries.iter().any(|e| e.image_id() == id) {
            return Err(parse_err(format!("duplicate image id {id}")));
        }
        entries.push(entry);
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        entries,
    })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| SafeError::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = parse_manifest(&text, &root, path)?;
    for e in &manifest.entries {
        for p in std::iter::once(&e.image_path).chain(&e.annotations).chain(&e.truth_mask) {
            let full = manifest.resolve(p);
            if !full.is_file() {
                return Err(SafeError::io(
                    full,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest but missing"),
                ));
            }
        }
    }
    Ok(manifest)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).map_err(|e| SafeError::Format(e.to_string()))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| SafeError::io(path, e))
}

fn mask_from_png(img: &RgbImage) -> Vec<bool> {
    img.data().chunks_exact(3).map(|p| p[0] > 127).collect()
}

pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = read_png(path)?;
    Ok((img.width(), img.height(), mask_from_png(&img)))
}

fn load_regions(path: &Path) -> Result<Vec<Region>> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let text = fs::read_to_string(path).map_err(|e| SafeError::io(path, e))?;
        let file: BoxFile = serde_json::from_str(&text).map_err(|e| SafeError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        Ok(file
            .boxes
            .into_iter()
            .map(|[x0, y0, x1, y1]| Region::Box { x0, y0, x1, y1 })
            .collect())
    } else {
        let (width, height, data) = read_mask(path)?;
        Ok(vec![Region::Mask { width, height, data }])
    }
}

/// An image with its lesion regions and optional ground-truth lesion mask.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub image: FundusImage,
    pub annotations: LesionAnnotationSet,
    pub truth_mask: Option<Vec<bool>>,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_image(&self, entry: &ManifestEntry) -> Result<LoadedImage> {
        let id = entry.image_id();
        let pixels = read_png(&self.resolve(&entry.image_path))?;
        let mut regions = Vec::new();
        for a in &entry.annotations {
            regions.extend(load_regions(&self.resolve(a))?);
        }
        let truth_mask = match &entry.truth_mask {
            Some(p) => {
                let (w, h, m) = read_mask(&self.resolve(p))?;
                if (w, h) != (pixels.width(), pixels.height()) {
                    return Err(SafeError::Validation(format!(
                        "truth mask for {id} is {w}x{h}, image is {}x{}",
                        pixels.width(),
                        pixels.height()
                    )));
                }
                Some(m)
            }
            None => None,
        };
        Ok(LoadedImage {
            annotations: LesionAnnotationSet {
                image_id: id.clone(),
                regions,
            },
            image: FundusImage {
                id,
                pixels,
                label: entry.label,
            },
            truth_mask,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_in_order() {
        let text = r#"{"image_path": "a.png", "label": "NoDR", "annotations": []}

{"image_path": "b.png", "label": "DR", "annotations": ["b.json"]}
{"image_path": "sub/c.png", "label": "DR", "annotations": ["c_mask.png"], "truth_mask": "c_truth.png"}
"#;
        let m = parse_manifest(text, Path::new("/data"), Path::new("m.jsonl")).unwrap();
        let ids: Vec<_> = m.entries.iter().map(|e| e.image_id()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(m.resolve(&m.entries[2].image_path), Path::new("/data/sub/c.png"));
        assert!(parse_manifest("", Path::new("."), Path::new("m")).unwrap().entries.is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        let nodr = r#"{"image_path": "a.png", "label": "NoDR", "annotations": ["a.json"]}"#;
        assert!(matches!(
            parse_manifest(nodr, Path::new("."), Path::new("m")),
            Err(SafeError::Validation(_))
        ));
        let text = "{\"image_path\": \"a.png\", \"label\": \"NoDR\"}\n{\"image_path\": \"b.png\", \"label\": \"maybe\"}\n";
        match parse_manifest(text, Path::new("."), Path::new("m")) {
            Err(SafeError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let dup = "{\"image_path\": \"x/a.png\", \"label\": \"NoDR\"}\n{\"image_path\": \"y/a.png\", \"label\": \"NoDR\"}";
        assert!(parse_manifest(dup, Path::new("."), Path::new("m")).is_err());
    }
}
