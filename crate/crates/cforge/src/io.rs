//! Domain and instance files, the domain registry and checksums.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cforge_core::benchmarks::{build_pc, build_synthetic, build_trip, PcInstance, TripInstance, TripVariant};
use cforge_core::domain::DomainDef;
use cforge_core::DomainSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn parse_domain(text: &str) -> std::result::Result<DomainDef, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn domain_to_json(def: &DomainDef) -> String {
    serde_json::to_string_pretty(def).expect("domain definitions always serialize")
}

pub fn load_domain_file(path: &Path) -> Result<DomainSpec> {
    let def: DomainDef = read_json(path)?;
    Ok(DomainSpec::new(def)?)
}

fn simplified() -> TripVariant {
    TripVariant::Simplified
}

/// How to build a domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainDescriptor {
    Synthetic {
        r: usize,
    },
    Pc {
        path: PathBuf,
    },
    Trip {
        path: PathBuf,
        #[serde(default = "simplified")]
        variant: TripVariant,
    },
    /// A domain definition file.
    File {
        path: PathBuf,
    },
}

impl DomainDescriptor {
    /// Builds the domain; relative paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<DomainSpec> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        match self {
            DomainDescriptor::Synthetic { r } => Ok(build_synthetic(*r)?),
            DomainDescriptor::Pc { path } => {
                let inst: PcInstance = read_json(&resolve(path))?;
                Ok(build_pc(&inst)?)
            }
            DomainDescriptor::Trip { path, variant } => {
                let inst: TripInstance = read_json(&resolve(path))?;
                Ok(build_trip(&inst, *variant)?)
            }
            DomainDescriptor::File { path } => load_domain_file(&resolve(path)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DomainDescriptor::Synthetic { r } => format!("synthetic-r{r}"),
            DomainDescriptor::Pc { path } | DomainDescriptor::File { path } => path
                .file_stem()
                .map_or_else(|| "domain".to_string(), |s| s.to_string_lossy().into_owned()),
            DomainDescriptor::Trip { path, variant } => {
                let stem = path.file_stem().map_or_else(|| "trip".into(), |s| s.to_string_lossy().into_owned());
                match variant {
                    TripVariant::Simplified => stem,
                    TripVariant::FullSchema => format!("{stem}-full"),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub descriptor: DomainDescriptor,
}

/// Contents of `domains.json` in an instance directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub domains: Vec<DomainEntry>,
}

/// Built domains by id.
#[derive(Clone, Debug, Default)]
pub struct Registry {
    pub domains: BTreeMap<String, (DomainEntry, Arc<DomainSpec>)>,
}

impl Registry {
    /// Loads every domain listed in `dir/domains.json`.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join("domains.json"))?;
        let mut domains = BTreeMap::new();
        for entry in manifest.domains {
            let spec = entry.descriptor.build(dir)?;
            if domains.contains_key(&entry.id) {
                return Err(Error::Config(format!("duplicate domain id `{}`", entry.id)));
            }
            domains.insert(entry.id.clone(), (entry, Arc::new(spec)));
        }
        Ok(Registry { domains })
    }

    pub fn get(&self, id: &str) -> Option<&Arc<DomainSpec>> {
        self.domains.get(id).map(|(_, s)| s)
    }

    pub fn insert(&mut self, entry: DomainEntry, spec: DomainSpec) {
        self.domains.insert(entry.id.clone(), (entry, Arc::new(spec)));
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChecksumReport {
    pub file: PathBuf,
    pub ok: bool,
}

/// Checks every entry of `dir/SHA256SUMS` (`sha256sum` format).
pub fn verify_checksums(dir: &Path) -> Result<Vec<ChecksumReport>> {
    let sums_path = dir.join("SHA256SUMS");
    let text = fs::read_to_string(&sums_path).map_err(|e| Error::io(&sums_path, e))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (hash, name) = line.split_once(char::is_whitespace).ok_or_else(|| Error::Parse {
            path: sums_path.clone(),
            line: ln + 1,
            message: "expected `<sha256>  <file>`".to_string(),
        })?;
        let name = name.trim_start().trim_start_matches('*');
        let file = dir.join(name);
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        out.push(ChecksumReport {
            ok: sha256_hex(&bytes) == hash.to_ascii_lowercase(),
            file: PathBuf::from(name),
        });
    }
    Ok(out)
}

/// Writes `dir/SHA256SUMS` covering `files` (paths relative to `dir`).
pub fn write_checksums(dir: &Path, files: &[PathBuf]) -> Result<()> {
    let mut text = String::new();
    for f in files {
        let path = dir.join(f);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        text.push_str(&format!("{}  {}\n", sha256_hex(&bytes), f.display()));
    }
    let out = dir.join("SHA256SUMS");
    fs::write(&out, text).map_err(|e| Error::io(&out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_serialization() {
        let d: DomainDescriptor = serde_json::from_str(r#"{"kind":"trip","path":"trip/cities.json"}"#).unwrap();
        assert_eq!(
            d,
            DomainDescriptor::Trip {
                path: "trip/cities.json".into(),
                variant: TripVariant::Simplified
            }
        );
        let e: DomainEntry = serde_json::from_str(r#"{"id":"s","kind":"synthetic","r":3}"#).unwrap();
        assert_eq!(e.descriptor, DomainDescriptor::Synthetic { r: 3 });
        assert_eq!(e.descriptor.label(), "synthetic-r3");
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn checksum_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.json"), "{}").unwrap();
        write_checksums(dir.path(), &[PathBuf::from("a.json")]).unwrap();
        assert!(verify_checksums(dir.path()).unwrap()[0].ok);
        fs::write(dir.path().join("a.json"), "{ }").unwrap();
        assert!(!verify_checksums(dir.path()).unwrap()[0].ok);
    }
}
