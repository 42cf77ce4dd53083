use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mesh_contact_ratio_symmetric, TriangleMesh};
use crate::sampling::{derive_seed, RngSeed};

/// Contact-ratio statistics of one component pair over a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrior {
    pub a: String,
    pub b: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub values: Vec<f64>,
}

/// Symmetrized mesh contact ratio of every requested pair in every training
/// scene, summarized per pair.
pub fn compute_training_contact_ratios(
    scenes: &[BTreeMap<String, TriangleMesh>],
    pairs: &[(String, String)],
    epsilon: f64,
    samples_per_area: f64,
    seed: RngSeed,
) -> Result<Vec<PairPrior>> {
    if scenes.is_empty() {
        return Err(Error::Precondition("no training scenes".into()));
    }
    pairs
        .iter()
        .map(|(a, b)| {
            let values = scenes
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let get = |name: &str| {
                        s.get(name).ok_or_else(|| {
                            Error::config(format!("scenes[{i}]"), format!("missing component `{name}`"))
                        })
                    };
                    let (ma, mb) = (get(a)?, get(b)?);
                    mesh_contact_ratio_symmetric(ma, mb, epsilon, samples_per_area, derive_seed(seed, i as u64))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            Ok(PairPrior {
                a: a.clone(),
                b: b.clone(),
                mean,
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                values,
            })
        })
        .collect()
}
