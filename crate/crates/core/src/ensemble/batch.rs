//! Ensembles of independent predictions and their persistence.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{Dim, Field};
use crate::io::{create_dir, read_field, read_json, write_field, write_json};
use crate::rng::derive_seed;

/// `J >= 1` samples of identical dims with their (distinct) seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleBatch {
    samples: Vec<Field>,
    seeds: Vec<u64>,
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub samples: usize,
    pub dims: Vec<Dim>,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
    /// Configuration that produced the batch.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EnsembleBatch {
    pub fn new(samples: Vec<Field>, seeds: Vec<u64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("an ensemble needs at least one sample".into()));
        }
        if samples.len() != seeds.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} seeds",
                samples.len(),
                seeds.len()
            )));
        }
        if let Some(bad) = samples.iter().position(|s| s.dims() != samples[0].dims()) {
            return Err(Error::Shape(format!(
                "sample {bad} has dims {:?}, sample 0 has {:?}",
                samples[bad].shape(),
                samples[0].shape()
            )));
        }
        let distinct: HashSet<u64> = seeds.iter().copied().collect();
        if distinct.len() != seeds.len() {
            return Err(Error::InvalidArgument("ensemble seeds must be distinct".into()));
        }
        Ok(EnsembleBatch { samples, seeds })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Field] {
        &self.samples
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn dims(&self) -> &[Dim] {
        self.samples[0].dims()
    }

    /// Sub-ensemble of the listed members.
    pub fn select(&self, idx: &[usize]) -> Result<EnsembleBatch> {
        if let Some(&i) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!("member {i} of {}", self.len())));
        }
        EnsembleBatch::new(
            idx.iter().map(|&i| self.samples[i].clone()).collect(),
            idx.iter().map(|&i| self.seeds[i]).collect(),
        )
    }

    /// Writes `sample_XXXX.fld` files and a manifest into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, config: serde_json::Value) -> Result<Manifest> {
        let dir = dir.as_ref();
        create_dir(dir)?;
        let files: Vec<String> = (0..self.len()).map(|j| format!("sample_{j:04}.fld")).collect();
        for (f, s) in files.iter().zip(&self.samples) {
            write_field(dir.join(f), s)?;
        }
        let manifest = Manifest {
            samples: self.len(),
            dims: self.dims().to_vec(),
            seeds: self.seeds.clone(),
            files,
            config,
        };
        write_json(dir.join(MANIFEST), &manifest)?;
        Ok(manifest)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(EnsembleBatch, Manifest)> {
        let dir = dir.as_ref();
        let manifest: Manifest = read_json(dir.join(MANIFEST))?;
        if manifest.files.len() != manifest.samples || manifest.seeds.len() != manifest.samples {
            return Err(Error::Malformed {
                path: dir.join(MANIFEST),
                reason: "sample, seed and file counts disagree".into(),
            });
        }
        let samples = manifest
            .files
            .iter()
            .map(|f| read_field(dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        if samples.iter().any(|s| s.dims() != manifest.dims.as_slice()) {
            return Err(Error::Malformed {
                path: dir.join(MANIFEST),
                reason: "sample dims differ from the manifest".into(),
            });
        }
        Ok((EnsembleBatch::new(samples, manifest.seeds.clone())?, manifest))
    }
}

/// Seeds `derive_seed(base, j)` for `j = 0..J`.
pub fn ensemble_seeds(j: usize, base_seed: u64) -> Vec<u64> {
    (0..j as u64).map(|i| derive_seed(base_seed, i)).collect()
}

/// Runs `predict` once per derived seed (concurrently when the `parallel`
/// feature is on); members are ordered by `j`.
pub fn sample_ensemble<F>(predict: F, j: usize, base_seed: u64) -> Result<EnsembleBatch>
where
    F: Fn(u64) -> Result<Field> + Sync,
{
    if j == 0 {
        return Err(Error::InvalidArgument("ensemble size must be >= 1".into()));
    }
    let seeds = ensemble_seeds(j, base_seed);
    #[cfg(feature = "parallel")]
    let samples = {
        use rayon::prelude::*;
        seeds.par_iter().map(|&s| predict(s)).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let samples = seeds.iter().map(|&s| predict(s)).collect::<Result<Vec<_>>>()?;
    EnsembleBatch::new(samples, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn draw(seed: u64) -> Result<Field> {
        RngStream::new(seed).standard_normal(&[Dim::time(3), Dim::space(4)])
    }

    #[test]
    fn single_member_equals_direct_call() {
        let b = sample_ensemble(draw, 1, 7).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.samples()[0], draw(derive_seed(7, 0)).unwrap());
    }

    #[test]
    fn deterministic_and_ordered() {
        let a = sample_ensemble(draw, 6, 3).unwrap();
        let b = sample_ensemble(draw, 6, 3).unwrap();
        assert_eq!(a, b);
        for (j, s) in a.samples().iter().enumerate() {
            assert_eq!(*s, draw(derive_seed(3, j as u64)).unwrap());
        }
    }

    #[test]
    fn rejects_mismatched_members() {
        let x = Field::zeros(&[Dim::space(2)]).unwrap();
        let y = Field::zeros(&[Dim::space(3)]).unwrap();
        assert!(EnsembleBatch::new(vec![x.clone(), y], vec![1, 2]).is_err());
        assert!(EnsembleBatch::new(vec![x.clone(), x.clone()], vec![1, 1]).is_err());
        assert!(EnsembleBatch::new(vec![], vec![]).is_err());
        assert!(sample_ensemble(draw, 0, 1).is_err());
    }

    #[test]
    fn directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let b = sample_ensemble(draw, 3, 11).unwrap();
        b.save(dir.path().join("ens"), serde_json::json!({"preset": "x"})).unwrap();
        let (back, manifest) = EnsembleBatch::load(dir.path().join("ens")).unwrap();
        assert_eq!(back, b);
        assert_eq!(manifest.samples, 3);
        assert_eq!(manifest.config["preset"], "x");
    }
}
