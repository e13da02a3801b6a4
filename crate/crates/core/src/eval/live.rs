//! Manifest builder for the LIVE image quality database, release 2.
//!
//! Expected layout under the root:
//!
//! ```text
//! jp2k/ jpeg/ wn/ gblur/ fastfading/   each with info.txt and imgN.bmp files
//! dmos.mat or dmos.txt                 one DMOS per image, folders in the order above
//! ```
//!
//! Each `info.txt` line reads `<reference> <image> <parameter>`. An image
//! named `imgN.bmp` in the k-th folder takes score `offset_k + N - 1`, where
//! `offset_k` is the number of images in the preceding folders.

use std::path::Path;

use super::manifest::{DatasetManifest, DistortionClass, ManifestRecord};
use super::matfile::parse_mat;
use crate::error::{Error, Result};

pub const LIVE_FOLDERS: [(&str, DistortionClass); 5] = [
    ("jp2k", DistortionClass::Jp2k),
    ("jpeg", DistortionClass::Jpeg),
    ("wn", DistortionClass::Wn),
    ("gblur", DistortionClass::Gblur),
    ("fastfading", DistortionClass::Fastfading),
];

/// Image counts of the full release.
pub const LIVE_COUNTS: [usize; 5] = [227, 233, 174, 174, 174];

struct InfoLine {
    reference: String,
    image: String,
    index: usize,
    param: Option<f64>,
}

fn image_index(name: &str) -> Option<usize> {
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    stem.strip_prefix("img")?.parse().ok().filter(|&n| n > 0)
}

fn read_info(path: &Path) -> Result<Vec<InfoLine>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let (Some(reference), Some(image)) = (parts.next(), parts.next()) else {
            continue;
        };
        let index = image_index(image)
            .ok_or_else(|| Error::malformed(path, format!("line {}: unexpected image name `{image}`", i + 1)))?;
        lines.push(InfoLine {
            reference: reference.to_string(),
            image: image.to_string(),
            index,
            param: parts.next().and_then(|p| p.parse().ok()),
        });
    }
    if lines.is_empty() {
        return Err(Error::malformed(path, "no entries"));
    }
    Ok(lines)
}

fn read_scores(root: &Path) -> Result<Vec<f64>> {
    let mat = root.join("dmos.mat");
    if mat.is_file() {
        let bytes = std::fs::read(&mat).map_err(|e| Error::io(&mat, e))?;
        let arrays = parse_mat(&bytes)?;
        let dmos = arrays
            .into_iter()
            .find(|a| a.name == "dmos")
            .ok_or_else(|| Error::malformed(&mat, "no `dmos` variable"))?;
        return Ok(dmos.data);
    }
    let txt = root.join("dmos.txt");
    if txt.is_file() {
        let text = std::fs::read_to_string(&txt).map_err(|e| Error::io(&txt, e))?;
        return text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::malformed(&txt, format!("bad score `{s}`"))))
            .collect();
    }
    Err(Error::Layout(format!(
        "{}: expected a score file dmos.mat or dmos.txt",
        root.display()
    )))
}

/// Builds a manifest for every image listed in the five `info.txt` files.
pub fn ingest_live_r2(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Layout(format!("{} is not a directory", root.display())));
    }
    let missing: Vec<&str> = LIVE_FOLDERS
        .iter()
        .map(|(f, _)| *f)
        .filter(|f| !root.join(f).join("info.txt").is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Layout(format!(
            "{}: missing {}; expected folders {} each containing info.txt",
            root.display(),
            missing.join(", "),
            LIVE_FOLDERS.map(|(f, _)| f).join(", ")
        )));
    }
    let infos = LIVE_FOLDERS
        .iter()
        .map(|(f, _)| read_info(&root.join(f).join("info.txt")))
        .collect::<Result<Vec<_>>>()?;
    let scores = read_scores(root)?;

    let counts: Vec<usize> = infos.iter().map(|l| l.iter().map(|e| e.index).max().unwrap_or(0)).collect();
    let needed: usize = counts.iter().sum();
    if scores.len() < needed {
        return Err(Error::Layout(format!(
            "score file holds {} values, folders reference {needed} images",
            scores.len()
        )));
    }

    let mut records = Vec::new();
    let mut offset = 0;
    for (((folder, class), lines), count) in LIVE_FOLDERS.iter().zip(&infos).zip(&counts) {
        for l in lines {
            records.push(ManifestRecord {
                path: format!("{folder}/{}", l.image),
                class: *class,
                level: l.param,
                target: scores[offset + l.index - 1],
                reference_id: Some(l.reference.clone()),
            });
        }
        offset += count;
    }
    DatasetManifest::new(records, root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::matfile::tests::write_mat;

    fn mini_tree(dir: &Path, per_class: usize) {
        for (folder, _) in LIVE_FOLDERS {
            std::fs::create_dir_all(dir.join(folder)).unwrap();
            let info: String = (1..=per_class).map(|i| format!("ref{i}.bmp img{i}.bmp {}\n", i as f64 * 0.5)).collect();
            std::fs::write(dir.join(folder).join("info.txt"), info).unwrap();
        }
    }

    #[test]
    fn mini_tree_with_text_scores() {
        let dir = tempfile::tempdir().unwrap();
        mini_tree(dir.path(), 2);
        let scores: Vec<String> = (0..10).map(|i| format!("{}", i * 10)).collect();
        std::fs::write(dir.path().join("dmos.txt"), scores.join("\n")).unwrap();
        let m = ingest_live_r2(dir.path()).unwrap();
        assert_eq!(m.len(), 10);
        for (folder, class) in LIVE_FOLDERS {
            assert_eq!(m.count(class), 2, "{folder}");
        }
        let wn2 = m.records().iter().find(|r| r.path == "wn/img2.bmp").unwrap();
        assert_eq!(wn2.target, 50.0);
        assert_eq!(wn2.reference_id.as_deref(), Some("ref2.bmp"));
        assert_eq!(wn2.level, Some(1.0));
    }

    #[test]
    fn mini_tree_with_mat_scores() {
        let dir = tempfile::tempdir().unwrap();
        mini_tree(dir.path(), 2);
        let scores: Vec<f64> = (0..10).map(|i| i as f64 + 0.25).collect();
        std::fs::write(dir.path().join("dmos.mat"), write_mat("dmos", &scores, true)).unwrap();
        let m = ingest_live_r2(dir.path()).unwrap();
        assert_eq!(m.targets(), scores);
    }

    #[test]
    fn missing_folder_is_named() {
        let dir = tempfile::tempdir().unwrap();
        mini_tree(dir.path(), 2);
        std::fs::remove_dir_all(dir.path().join("wn")).unwrap();
        let err = ingest_live_r2(dir.path()).unwrap_err();
        assert!(matches!(&err, Error::Layout(m) if m.contains("missing wn")), "{err}");
    }

    #[test]
    fn missing_scores() {
        let dir = tempfile::tempdir().unwrap();
        mini_tree(dir.path(), 2);
        assert!(matches!(ingest_live_r2(dir.path()), Err(Error::Layout(_))));
        std::fs::write(dir.path().join("dmos.txt"), "1 2 3").unwrap();
        assert!(matches!(ingest_live_r2(dir.path()), Err(Error::Layout(_))));
    }
}
