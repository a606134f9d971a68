//! JSON (de)serialization of scenes and pairs, and the on-disk dataset layout.
//!
//! ```text
//! <root>/manifest.json
//! <root>/pairs/<id>/civilian.json   civilian scene, or original chart
//! <root>/pairs/<id>/spy.json        spy scene, or swapped chart
//! <root>/pairs/<id>/changelog.json  ChangeLog, or SwapLog for charts
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chart::{generate_chart_pair, ChartPair, ChartSpec, SwapLog};
use crate::scene::{generate_pair, ChangeLog, Scene, SceneError, ScenePair, DEFAULT_MARGIN};
use crate::seed::derive_seed;

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: invalid JSON at `{field}`: {message}")]
    Parse {
        origin: String,
        field: String,
        message: String,
    },
    #[error("{origin}: {source}")]
    Invalid {
        origin: String,
        #[source]
        source: SceneError,
    },
    #[error("{origin}: {message}")]
    Chart { origin: String, message: String },
    #[error("manifest kind is {found:?}, expected {expected:?}")]
    WrongKind { expected: PairKind, found: PairKind },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Stable pretty-printed JSON. Field order follows the struct definitions.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("arena types always serialize")
}

/// Parse JSON, reporting the path of the offending field on failure.
pub fn from_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, DatasetError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let field = err.path().to_string();
        DatasetError::Parse {
            origin: origin.to_string(),
            field,
            message: err.into_inner().to_string(),
        }
    })
}

pub fn load_scene(path: &Path) -> Result<Scene, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let origin = path.display().to_string();
    let scene: Scene = from_json(&text, &origin)?;
    scene
        .validate(DEFAULT_MARGIN)
        .map_err(|source| DatasetError::Invalid { origin, source })?;
    Ok(scene)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Clevr,
    Chart,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub kind: PairKind,
    pub seed: u64,
    pub margin: f64,
    pub pairs: Vec<ManifestEntry>,
}

fn pair_id(index: usize) -> String {
    format!("{index:06}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), DatasetError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_triplet(dir: &Path, files: [&str; 3]) -> Result<String, DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut hasher = Sha256::new();
    for (name, body) in ["civilian.json", "spy.json", "changelog.json"]
        .iter()
        .zip(files)
    {
        write_file(&dir.join(name), body)?;
        hasher.update(body.as_bytes());
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Generate `n_pairs` pairs under `out_dir` plus a manifest recording each
/// pair's seed and content hash.
pub fn write_dataset(
    out_dir: &Path,
    kind: PairKind,
    n_pairs: usize,
    seed: u64,
) -> Result<Manifest, DatasetError> {
    let pairs_dir = out_dir.join("pairs");
    fs::create_dir_all(&pairs_dir).map_err(io_err(&pairs_dir))?;
    let mut entries = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let id = pair_id(i);
        let pair_seed = derive_seed(seed, &[i as u64]);
        let dir = pairs_dir.join(&id);
        let sha256 = match kind {
            PairKind::Clevr => {
                let pair = generate_pair(pair_seed, DEFAULT_MARGIN).map_err(|source| {
                    DatasetError::Invalid {
                        origin: format!("pair {id}"),
                        source,
                    }
                })?;
                write_triplet(
                    &dir,
                    [
                        &to_json(&pair.civilian),
                        &to_json(&pair.spy),
                        &to_json(&pair.change_log),
                    ],
                )?
            }
            PairKind::Chart => {
                let pair = generate_chart_pair(pair_seed);
                write_triplet(
                    &dir,
                    [
                        &to_json(&pair.original),
                        &to_json(&pair.swapped),
                        &to_json(&pair.swap_log),
                    ],
                )?
            }
        };
        entries.push(ManifestEntry {
            id,
            seed: pair_seed,
            sha256,
        });
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA,
        kind,
        seed,
        margin: DEFAULT_MARGIN,
        pairs: entries,
    };
    write_file(&out_dir.join("manifest.json"), &to_json(&manifest))?;
    Ok(manifest)
}

pub fn load_manifest(root: &Path) -> Result<Manifest, DatasetError> {
    let path = root.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    from_json(&text, &path.display().to_string())
}

fn read_part<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T, DatasetError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    from_json(&text, &path.display().to_string())
}

pub fn load_scene_pair(dir: &Path) -> Result<ScenePair, DatasetError> {
    let pair = ScenePair {
        civilian: read_part::<Scene>(dir, "civilian.json")?,
        spy: read_part::<Scene>(dir, "spy.json")?,
        change_log: read_part::<ChangeLog>(dir, "changelog.json")?,
    };
    pair.validate(DEFAULT_MARGIN)
        .map_err(|source| DatasetError::Invalid {
            origin: dir.display().to_string(),
            source,
        })?;
    Ok(pair)
}

pub fn load_chart_pair(dir: &Path) -> Result<ChartPair, DatasetError> {
    let pair = ChartPair {
        original: read_part::<ChartSpec>(dir, "civilian.json")?,
        swapped: read_part::<ChartSpec>(dir, "spy.json")?,
        swap_log: read_part::<SwapLog>(dir, "changelog.json")?,
    };
    pair.validate().map_err(|message| DatasetError::Chart {
        origin: dir.display().to_string(),
        message,
    })?;
    Ok(pair)
}

/// Load every scene pair listed in a CLEVR dataset manifest, in manifest order.
pub fn load_scene_dataset(root: &Path) -> Result<Vec<(String, ScenePair)>, DatasetError> {
    let manifest = load_manifest(root)?;
    if manifest.kind != PairKind::Clevr {
        return Err(DatasetError::WrongKind {
            expected: PairKind::Clevr,
            found: manifest.kind,
        });
    }
    manifest
        .pairs
        .into_iter()
        .map(|entry| {
            let pair = load_scene_pair(&root.join("pairs").join(&entry.id))?;
            Ok((entry.id, pair))
        })
        .collect()
}
