//! Ensemble-size convergence sweep over member subsets.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::ops::RangeInclusive;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{write_csv, write_json};
use crate::rng::RngStream;

use super::batch::EnsembleBatch;

pub const DEFAULT_MAX_COMBINATIONS: usize = 200;

/// Mean standard deviation of one subset: `mean_i sqrt((1/k) sum_j (y_ij - mu_i)^2)`.
pub fn subset_mean_std(b: &EnsembleBatch, subset: &[usize]) -> f64 {
    let k = subset.len() as f64;
    let n = b.samples()[0].len();
    let members: Vec<&[f64]> = subset.iter().map(|&j| b.samples()[j].data()).collect();
    let mut total = 0.0;
    for i in 0..n {
        let mu = members.iter().map(|m| m[i]).sum::<f64>() / k;
        let var = members.iter().map(|m| (m[i] - mu).powi(2)).sum::<f64>() / k;
        total += var.sqrt();
    }
    total / n as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k: usize,
    /// One value per evaluated subset, in evaluation order.
    pub values: Vec<f64>,
    pub mean: f64,
    pub count: usize,
    pub exhaustive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSweepResult {
    pub n: usize,
    pub max_combinations: usize,
    pub seed: u64,
    pub entries: Vec<SweepEntry>,
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    c
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for p in i..k {
            idx[p] = idx[p - 1] + 1;
        }
    }
}

/// `m` distinct uniformly drawn `k`-subsets (sorted members), in draw order.
fn sample_combinations(n: usize, k: usize, m: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(m);
    let mut pool: Vec<usize> = (0..n).collect();
    while out.len() < m {
        for i in 0..k {
            let j = i + rng.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        let mut s = pool[..k].to_vec();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Evaluates the mean standard deviation of `k`-member sub-ensembles for
/// every `k` in `ks`: all subsets when `C(N, k) <= max_combinations`,
/// otherwise `max_combinations` distinct subsets drawn with `seed`.
pub fn size_sweep(
    b: &EnsembleBatch,
    ks: RangeInclusive<usize>,
    max_combinations: usize,
    seed: u64,
) -> Result<SizeSweepResult> {
    let n = b.len();
    if n < 2 {
        return Err(Error::InvalidArgument("a size sweep needs at least two samples".into()));
    }
    if max_combinations < 1 {
        return Err(Error::InvalidArgument("combination cap must be >= 1".into()));
    }
    let (lo, hi) = (*ks.start(), *ks.end());
    if lo < 2 || hi > n || lo > hi {
        return Err(Error::InvalidArgument(format!(
            "size range {lo}..={hi} outside 2..={n}"
        )));
    }
    let root = RngStream::new(seed);
    let mut entries = Vec::with_capacity(hi - lo + 1);
    for k in lo..=hi {
        let exhaustive = binomial(n, k) <= max_combinations as u128;
        let subsets = if exhaustive {
            combinations(n, k)
        } else {
            sample_combinations(n, k, max_combinations, &mut root.derive(k as u64))
        };
        let values = eval_subsets(b, &subsets);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        entries.push(SweepEntry {
            k,
            count: values.len(),
            values,
            mean,
            exhaustive,
        });
    }
    Ok(SizeSweepResult {
        n,
        max_combinations,
        seed,
        entries,
    })
}

fn eval_subsets(b: &EnsembleBatch, subsets: &[Vec<usize>]) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        subsets.par_iter().map(|s| subset_mean_std(b, s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        subsets.iter().map(|s| subset_mean_std(b, s)).collect()
    }
}

impl SizeSweepResult {
    pub fn entry(&self, k: usize) -> Option<&SweepEntry> {
        self.entries.iter().find(|e| e.k == k)
    }

    pub fn means(&self) -> Vec<(usize, f64)> {
        self.entries.iter().map(|e| (e.k, e.mean)).collect()
    }

    /// Fraction of adjacent increment pairs with
    /// `|mean_{k+2} - mean_{k+1}| <= |mean_{k+1} - mean_k|`.
    pub fn non_increasing_increment_fraction(&self) -> Option<f64> {
        let inc: Vec<f64> = self.entries.windows(2).map(|w| (w[1].mean - w[0].mean).abs()).collect();
        if inc.len() < 2 {
            return None;
        }
        let ok = inc.windows(2).filter(|w| w[1] <= w[0]).count();
        Some(ok as f64 / (inc.len() - 1) as f64)
    }

    /// CSV rows `k, m, sigma_bar, exhaustive`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows = self.entries.iter().flat_map(|e| {
            e.values.iter().enumerate().map(move |(m, v)| {
                [e.k.to_string(), m.to_string(), v.to_string(), e.exhaustive.to_string()]
            })
        });
        write_csv(path, &["k", "m", "sigma_bar", "exhaustive"], rows)
    }

    pub fn write_summary(&self, path: impl AsRef<Path>, tol: f64) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            k: usize,
            mean: f64,
            count: usize,
            exhaustive: bool,
        }
        #[derive(Serialize)]
        struct Summary {
            n: usize,
            max_combinations: usize,
            seed: u64,
            tolerance: f64,
            recommended_k: Option<usize>,
            recommendation_error: Option<String>,
            sizes: Vec<Row>,
        }
        let rec = recommend_size(self, tol);
        let summary = Summary {
            n: self.n,
            max_combinations: self.max_combinations,
            seed: self.seed,
            tolerance: tol,
            recommended_k: rec.as_ref().ok().copied(),
            recommendation_error: rec.err().map(|e| e.to_string()),
            sizes: self
                .entries
                .iter()
                .map(|e| Row {
                    k: e.k,
                    mean: e.mean,
                    count: e.count,
                    exhaustive: e.exhaustive,
                })
                .collect(),
        };
        write_json(path, &summary)
    }
}

/// Smallest swept `k` whose mean is within `tol * mean_N` of the full-ensemble
/// mean; `N` when none qualifies earlier.
pub fn recommend_size(r: &SizeSweepResult, tol: f64) -> Result<usize> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument("tolerance must be >= 0".into()));
    }
    let full = r.entry(r.n).ok_or_else(|| {
        Error::InvalidArgument(format!("sweep does not reach the full size {}", r.n))
    })?;
    let ks: Vec<usize> = r.entries.iter().map(|e| e.k).collect();
    if ks.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::InvalidArgument("sweep sizes are not contiguous".into()));
    }
    let mean_n = full.mean;
    if mean_n == 0.0 {
        return Err(Error::DegenerateEnsemble(
            "all samples identical: the full-ensemble spread is zero".into(),
        ));
    }
    Ok(r.entries
        .iter()
        .find(|e| (e.mean - mean_n).abs() <= tol * mean_n)
        .map_or(r.n, |e| e.k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Dim, Field};
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn random_batch(n: usize, len: usize, seed: u64) -> EnsembleBatch {
        let mut rng = RngStream::new(seed);
        let samples = (0..n)
            .map(|_| Field::from_vec(&[Dim::space(len)], rng.normal_vec(len)).unwrap())
            .collect();
        EnsembleBatch::new(samples, (0..n as u64).collect()).unwrap()
    }

    /// Independent oracle: enumerate subsets by bitmask, two-pass statistics.
    fn brute(b: &EnsembleBatch, k: usize) -> Vec<(Vec<usize>, f64)> {
        let n = b.len();
        let mut out = Vec::new();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let members: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            let len = b.samples()[0].len();
            let mut acc = 0.0;
            for i in 0..len {
                let xs: Vec<f64> = members.iter().map(|&j| b.samples()[j].data()[i]).collect();
                let mu = xs.iter().sum::<f64>() / k as f64;
                acc += (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / k as f64).sqrt();
            }
            out.push((members, acc / len as f64));
        }
        out
    }

    #[test]
    fn counts_and_full_batch() {
        let b = random_batch(4, 5, 1);
        let r = size_sweep(&b, 2..=4, 200, 0).unwrap();
        assert_eq!(r.entry(4).unwrap().count, 1);
        assert!((r.entry(4).unwrap().mean - subset_mean_std(&b, &[0, 1, 2, 3])).abs() < 1e-15);
        let r3 = size_sweep(&random_batch(3, 5, 2), 2..=3, 200, 0).unwrap();
        assert_eq!(r3.entry(2).unwrap().count, 3);
    }

    #[test]
    fn exhaustive_matches_bitmask_oracle() {
        let b = random_batch(6, 12, 3);
        let r = size_sweep(&b, 2..=6, 200, 0).unwrap();
        for e in &r.entries {
            let mut oracle = brute(&b, e.k);
            oracle.sort_by(|a, c| a.0.cmp(&c.0));
            assert!(e.exhaustive);
            assert_eq!(e.count, oracle.len());
            for (v, (_, o)) in e.values.iter().zip(&oracle) {
                assert!((v - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn capped_sweep_subsamples_deterministically() {
        let b = random_batch(12, 4, 4);
        let a = size_sweep(&b, 2..=12, 50, 9).unwrap();
        let c = size_sweep(&b, 2..=12, 50, 9).unwrap();
        assert_eq!(a, c);
        let e6 = a.entry(6).unwrap();
        assert!(!e6.exhaustive);
        assert_eq!(e6.count, 50);
        assert!(a.entry(12).unwrap().exhaustive);
        assert!(a.entry(11).unwrap().exhaustive);
        assert_eq!(a.entry(11).unwrap().count, 12);
    }

    #[test]
    fn distinct_subsets_when_capped() {
        let subsets = sample_combinations(10, 5, 200, &mut RngStream::new(1));
        let set: BTreeSet<_> = subsets.iter().cloned().collect();
        assert_eq!(set.len(), 200);
        assert!(subsets.iter().all(|s| s.windows(2).all(|w| w[0] < w[1]) && s[4] < 10));
    }

    #[test]
    fn range_and_cap_errors() {
        let b = random_batch(4, 3, 1);
        assert!(size_sweep(&b, 1..=4, 200, 0).is_err());
        assert!(size_sweep(&b, 2..=5, 200, 0).is_err());
        assert!(size_sweep(&b, 2..=4, 0, 0).is_err());
    }

    #[test]
    fn recommendation_rules() {
        let mk = |means: &[f64]| SizeSweepResult {
            n: means.len() + 1,
            max_combinations: 200,
            seed: 0,
            entries: means
                .iter()
                .enumerate()
                .map(|(i, &m)| SweepEntry {
                    k: i + 2,
                    values: vec![m],
                    mean: m,
                    count: 1,
                    exhaustive: true,
                })
                .collect(),
        };
        assert_eq!(recommend_size(&mk(&[1.0, 1.0, 1.0]), 0.01).unwrap(), 2);
        assert_eq!(recommend_size(&mk(&[0.5, 0.8, 0.9, 1.0]), 0.0).unwrap(), 5);
        assert_eq!(recommend_size(&mk(&[0.5, 0.95, 0.99, 1.0]), 0.06).unwrap(), 3);
        assert!(matches!(
            recommend_size(&mk(&[0.0, 0.0]), 0.1),
            Err(Error::DegenerateEnsemble(_))
        ));
    }

    #[test]
    fn csv_has_row_per_subset() {
        let dir = tempfile::tempdir().unwrap();
        let r = size_sweep(&random_batch(4, 3, 1), 2..=4, 200, 0).unwrap();
        r.write_csv(dir.path().join("s.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 6 + 4 + 1);
        assert!(text.starts_with("k,m,sigma_bar,exhaustive"));
    }

    proptest! {
        #[test]
        fn scaling_and_leave_one_out(seed in 0u64..1000, alpha in -4.0f64..4.0) {
            let b = random_batch(5, 6, seed);
            let scaled = EnsembleBatch::new(
                b.samples().iter().map(|s| s.scale(alpha).unwrap()).collect(),
                b.seeds().to_vec(),
            ).unwrap();
            let r = size_sweep(&b, 2..=5, 200, 0).unwrap();
            let rs = size_sweep(&scaled, 2..=5, 200, 0).unwrap();
            prop_assert_eq!(r.entry(4).unwrap().count, 5);
            for (e, es) in r.entries.iter().zip(&rs.entries) {
                prop_assert!((es.mean - alpha.abs() * e.mean).abs() < 1e-10 * (1.0 + es.mean));
            }
        }
    }
}
