//! Versioned JSON dataset of channel realizations.
//!
//! ```text
//! { "version": 1, "cfg": SystemConfig,
//!   "samples": [ { "seed", "comm": { "theta", "phi", "tau", "beta": [[re, im]; M] },
//!                  "scene": { "angles": [[theta, phi]; K], "alpha": [[[re, im]; M]; K] },
//!                  "msia", "normalizers"?: { "cor_star", "r_max", "crb_min" } } ] }
//! ```
//! Steering matrices and channel vectors are not stored; they are rebuilt from
//! the parameters on import.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ChannelRealization, CommChannel, Direction, SensingScene, SystemConfig, Target};
use crate::{Error, Result, C64};

pub const DATASET_VERSION: u32 = 1;

/// Per-sample normalizers used by the learning loss: best correlation,
/// communication-dedicated rate and sensing-dedicated CRB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub cor_star: f64,
    pub r_max: f64,
    pub crb_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub realization: ChannelRealization,
    pub normalizers: Option<Normalizers>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cfg: SystemConfig,
    pub samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRecord {
    version: u32,
    cfg: SystemConfig,
    samples: Vec<SampleRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    seed: u64,
    comm: CommRecord,
    scene: SceneRecord,
    msia: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalizers: Option<Normalizers>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommRecord {
    theta: f64,
    phi: f64,
    tau: f64,
    beta: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    angles: Vec<[f64; 2]>,
    alpha: Vec<Vec<C64>>,
}

impl Dataset {
    pub fn to_json(&self) -> Result<String> {
        let record = FileRecord {
            version: DATASET_VERSION,
            cfg: self.cfg.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| {
                    let r = &s.realization;
                    SampleRecord {
                        seed: r.seed,
                        comm: CommRecord {
                            theta: r.comm.user.theta,
                            phi: r.comm.user.phi,
                            tau: r.comm.tau,
                            beta: r.comm.beta.clone(),
                        },
                        scene: SceneRecord {
                            angles: r.scene.targets.iter().map(|t| [t.dir.theta, t.dir.phi]).collect(),
                            alpha: r.scene.targets.iter().map(|t| t.alpha.clone()).collect(),
                        },
                        msia: r.msia,
                        normalizers: s.normalizers,
                    }
                })
                .collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Dataset("missing integer field `version`".into()))?;
        if version != DATASET_VERSION as u64 {
            return Err(Error::Version { found: version as u32, expected: DATASET_VERSION });
        }
        let record: FileRecord =
            serde_json::from_value(value).map_err(|e| Error::Dataset(e.to_string()))?;
        let cfg = record.cfg;
        cfg.validate()?;
        let mut samples = Vec::with_capacity(record.samples.len());
        for (i, s) in record.samples.into_iter().enumerate() {
            let comm = CommChannel::new(Direction::new(s.comm.theta, s.comm.phi), s.comm.tau, s.comm.beta, &cfg)
                .map_err(|e| Error::Dataset(format!("sample {i}: {e}")))?;
            if s.scene.angles.len() != s.scene.alpha.len() {
                return Err(Error::Dataset(format!("sample {i}: angle and alpha target counts differ")));
            }
            let targets = s
                .scene
                .angles
                .iter()
                .zip(s.scene.alpha)
                .map(|(a, alpha)| Target { dir: Direction::new(a[0], a[1]), alpha })
                .collect();
            let scene =
                SensingScene::new(targets, &cfg).map_err(|e| Error::Dataset(format!("sample {i}: {e}")))?;
            let realization = ChannelRealization::new(s.seed, comm, scene);
            if (realization.msia - s.msia).abs() > 1e-9 * (1.0 + s.msia.abs()) {
                return Err(Error::Dataset(format!(
                    "sample {i}: stored msia {} disagrees with angles ({})",
                    s.msia, realization.msia
                )));
            }
            samples.push(Sample { realization, normalizers: s.normalizers });
        }
        Ok(Self { cfg, samples })
    }
}

pub fn export_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset.to_json()?)?;
    Ok(())
}

pub fn import_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_realization;

    fn small() -> Dataset {
        let cfg = SystemConfig::desk();
        let samples = (0..4)
            .map(|s| Sample {
                realization: sample_realization(s, &cfg, 0.1).unwrap(),
                normalizers: (s % 2 == 0).then_some(Normalizers { cor_star: 3.5, r_max: 10.25, crb_min: 1e-3 }),
            })
            .collect();
        Dataset { cfg, samples }
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        export_dataset(&ds, &path).unwrap();
        let back = import_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = small().to_json().unwrap().replacen("\"version\":1", "\"version\":7", 1);
        match Dataset::from_json(&text) {
            Err(Error::Version { found: 7, expected: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(Dataset::from_json("{\"samples\": []}").is_err());
        let text = small().to_json().unwrap().replacen("\"seed\"", "\"sed\"", 1);
        assert!(matches!(Dataset::from_json(&text), Err(Error::Dataset(_))));
    }
}
