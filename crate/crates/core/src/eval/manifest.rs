//! Dataset manifests: `path,class,level,target,reference_id` CSV files.
//!
//! Relative paths are resolved against the manifest's own directory.
//! `level` and `reference_id` may be empty.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{fmt_f64, resolve_relative};

pub const MANIFEST_HEADER: [&str; 5] = ["path", "class", "level", "target", "reference_id"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistortionClass {
    Jp2k,
    Jpeg,
    Wn,
    Gblur,
    Fastfading,
    Pristine,
    Other,
}

impl DistortionClass {
    pub const ALL: [DistortionClass; 7] = [
        DistortionClass::Jp2k,
        DistortionClass::Jpeg,
        DistortionClass::Wn,
        DistortionClass::Gblur,
        DistortionClass::Fastfading,
        DistortionClass::Pristine,
        DistortionClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DistortionClass::Jp2k => "jp2k",
            DistortionClass::Jpeg => "jpeg",
            DistortionClass::Wn => "wn",
            DistortionClass::Gblur => "gblur",
            DistortionClass::Fastfading => "fastfading",
            DistortionClass::Pristine => "pristine",
            DistortionClass::Other => "other",
        }
    }

    /// Column heading used in printed reports.
    pub fn label(self) -> &'static str {
        match self {
            DistortionClass::Jp2k => "JP2K",
            DistortionClass::Jpeg => "JPEG",
            DistortionClass::Wn => "WN",
            DistortionClass::Gblur => "G.Blur",
            DistortionClass::Fastfading => "FF",
            DistortionClass::Pristine => "Pristine",
            DistortionClass::Other => "Other",
        }
    }
}

impl fmt::Display for DistortionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistortionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistortionClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown distortion class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    /// Path as written in the manifest.
    pub path: String,
    pub class: DistortionClass,
    pub level: Option<f64>,
    pub target: f64,
    pub reference_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    records: Vec<ManifestRecord>,
    base_dir: PathBuf,
}

impl DatasetManifest {
    /// Validates and wraps `records`; paths resolve against `base_dir`.
    pub fn new(records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Dataset("manifest has no records".into()));
        }
        let mut seen = HashSet::new();
        for r in &records {
            if r.path.is_empty() {
                return Err(Error::Dataset("empty path in manifest".into()));
            }
            if !seen.insert(r.path.as_str()) {
                return Err(Error::Dataset(format!("duplicate path `{}`", r.path)));
            }
            if !r.target.is_finite() {
                return Err(Error::Dataset(format!("non-finite target for `{}`", r.path)));
            }
            if r.level.is_some_and(|l| !l.is_finite()) {
                return Err(Error::Dataset(format!("non-finite level for `{}`", r.path)));
            }
        }
        Ok(Self {
            records,
            base_dir: base_dir.into(),
        })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        resolve_relative(&self.base_dir, &record.path)
    }

    pub fn resolved_paths(&self) -> Vec<PathBuf> {
        self.records.iter().map(|r| self.resolve(r)).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.target).collect()
    }

    pub fn count(&self, class: DistortionClass) -> usize {
        self.records.iter().filter(|r| r.class == class).count()
    }

    /// Same records with paths rewritten for a manifest stored in
    /// `new_base`: relative where the image lies below it, absolute
    /// otherwise.
    pub fn relocated(&self, new_base: &Path) -> Result<Self> {
        let base = std::path::absolute(new_base).map_err(|e| Error::io(new_base, e))?;
        let records = self
            .records
            .iter()
            .map(|r| {
                let abs = self.resolve(r);
                let abs = std::path::absolute(&abs).map_err(|e| Error::io(&abs, e))?;
                let path = match abs.strip_prefix(&base) {
                    Ok(rel) => rel.to_string_lossy().into_owned(),
                    Err(_) => abs.to_string_lossy().into_owned(),
                };
                Ok(ManifestRecord { path, ..r.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        DatasetManifest::new(records, base)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let header = rdr.headers().map_err(|e| Error::malformed(path, e.to_string()))?;
        if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
            return Err(Error::malformed(
                path,
                format!("expected header `{}`", MANIFEST_HEADER.join(",")),
            ));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::malformed(path, format!("line {line}: {e}")))?;
            let bad = |what: &str| Error::malformed(path, format!("line {line}: {what}"));
            let field = |k: usize| row.get(k).map(str::trim).unwrap_or("");
            let class = field(1).parse().map_err(|_| bad(&format!("unknown class `{}`", field(1))))?;
            let level = match field(2) {
                "" => None,
                s => Some(s.parse::<f64>().map_err(|_| bad(&format!("bad level `{s}`")))?),
            };
            let target = field(3).parse::<f64>().map_err(|_| bad(&format!("bad target `{}`", field(3))))?;
            let reference_id = Some(field(4)).filter(|s| !s.is_empty()).map(String::from);
            records.push(ManifestRecord {
                path: field(0).to_string(),
                class,
                level,
                target,
                reference_id,
            });
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        DatasetManifest::new(records, base).map_err(|e| match e {
            Error::Dataset(m) => Error::malformed(path, m),
            other => other,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::malformed(path, e.to_string());
        w.write_record(MANIFEST_HEADER).map_err(io)?;
        for r in &self.records {
            let level = r.level.map(fmt_f64).unwrap_or_default();
            let target = fmt_f64(r.target);
            w.write_record([
                r.path.as_str(),
                r.class.as_str(),
                level.as_str(),
                target.as_str(),
                r.reference_id.as_deref().unwrap_or(""),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::malformed(path, e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(path: &str, class: DistortionClass, target: f64) -> ManifestRecord {
        ManifestRecord {
            path: path.into(),
            class,
            level: None,
            target,
            reference_id: None,
        }
    }

    #[test]
    fn invariants() {
        assert!(DatasetManifest::new(vec![], ".").is_err());
        let dup = vec![rec("a.pgm", DistortionClass::Wn, 1.0), rec("a.pgm", DistortionClass::Wn, 2.0)];
        assert!(DatasetManifest::new(dup, ".").is_err());
        assert!(DatasetManifest::new(vec![rec("a.pgm", DistortionClass::Wn, f64::NAN)], ".").is_err());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(
            vec![
                ManifestRecord {
                    path: "img/a b.pgm".into(),
                    class: DistortionClass::Gblur,
                    level: Some(1.5),
                    target: 12.345678901234567,
                    reference_id: Some("ref,1".into()),
                },
                rec("c.pgm", DistortionClass::Pristine, 0.0),
            ],
            dir.path(),
        )
        .unwrap();
        let p = dir.path().join("m.csv");
        m.write(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("path,class,level,target,reference_id\n"));
        let back = DatasetManifest::read(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.resolve(&back.records()[0]), dir.path().join("img/a b.pgm"));
    }

    #[test]
    fn relocation_keeps_targets_resolvable() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(vec![rec("x/a.pgm", DistortionClass::Wn, 1.0)], dir.path().join("data")).unwrap();
        let inside = m.relocated(dir.path()).unwrap();
        assert_eq!(inside.records()[0].path, "data/x/a.pgm");
        let outside = m.relocated(&dir.path().join("elsewhere")).unwrap();
        assert!(Path::new(&outside.records()[0].path).is_absolute());
        assert_eq!(outside.resolve(&outside.records()[0]), std::path::absolute(m.resolve(&m.records()[0])).unwrap());
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "path,class,level,target,reference_id\na.pgm,wn,,1,\nb.pgm,snow,,2,\n").unwrap();
        let err = DatasetManifest::read(&p).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("snow"), "{err}");
        std::fs::write(&p, "path,target\na,1\n").unwrap();
        assert!(matches!(DatasetManifest::read(&p), Err(Error::Malformed { .. })));
    }

    #[test]
    fn class_names() {
        for c in DistortionClass::ALL {
            assert_eq!(c.as_str().parse::<DistortionClass>().unwrap(), c);
        }
        assert!("JPEG".parse::<DistortionClass>().is_err());
    }
}
