//! Pearson correlation and dynamic time warping between two series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("series lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least two points".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "one of the series is constant".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub distance: f64,
    /// Index pairs from `(0, 0)` to `(n - 1, m - 1)`.
    pub path: Vec<(usize, usize)>,
    /// `|x_i - y_j|`, row `i`.
    pub pairwise: Vec<Vec<f64>>,
    /// Minimal accumulated cost of reaching `(i, j)`.
    pub accumulated: Vec<Vec<f64>>,
}

/// Unconstrained DTW with steps (1,0), (0,1), (1,1) and cost `|x_i - y_j|`.
///
/// Backtracking prefers the diagonal predecessor, then `(i, j-1)`, then `(i-1, j)`.
pub fn dtw(x: &[f64], y: &[f64]) -> Result<DtwResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("dtw needs non-empty series".into()));
    }
    let (n, m) = (x.len(), y.len());
    let pairwise: Vec<Vec<f64>> = x.iter().map(|a| y.iter().map(|b| (a - b).abs()).collect()).collect();
    let mut acc = vec![vec![f64::INFINITY; m]; n];
    for i in 0..n {
        for j in 0..m {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut b = f64::INFINITY;
                if i > 0 && j > 0 {
                    b = b.min(acc[i - 1][j - 1]);
                }
                if j > 0 {
                    b = b.min(acc[i][j - 1]);
                }
                if i > 0 {
                    b = b.min(acc[i - 1][j]);
                }
                b
            };
            acc[i][j] = pairwise[i][j] + best;
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while (i, j) != (0, 0) {
        let mut cands: Vec<(usize, usize)> = Vec::with_capacity(3);
        if i > 0 && j > 0 {
            cands.push((i - 1, j - 1));
        }
        if j > 0 {
            cands.push((i, j - 1));
        }
        if i > 0 {
            cands.push((i - 1, j));
        }
        let mut pick = cands[0];
        for &c in &cands[1..] {
            if acc[c.0][c.1] < acc[pick.0][pick.1] {
                pick = c;
            }
        }
        (i, j) = pick;
        path.push(pick);
    }
    path.reverse();
    Ok(DtwResult {
        distance: acc[n - 1][m - 1],
        path,
        pairwise,
        accumulated: acc,
    })
}

impl DtwResult {
    /// Sum of pairwise costs along the path.
    pub fn path_cost(&self) -> f64 {
        self.path.iter().map(|&(i, j)| self.pairwise[i][j]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    /// Minimum over every monotone path, by exhaustive recursion.
    fn brute(x: &[f64], y: &[f64]) -> f64 {
        fn go(x: &[f64], y: &[f64], i: usize, j: usize) -> f64 {
            let here = (x[i] - y[j]).abs();
            if i + 1 == x.len() && j + 1 == y.len() {
                return here;
            }
            let mut best = f64::INFINITY;
            if i + 1 < x.len() {
                best = best.min(go(x, y, i + 1, j));
            }
            if j + 1 < y.len() {
                best = best.min(go(x, y, i, j + 1));
            }
            if i + 1 < x.len() && j + 1 < y.len() {
                best = best.min(go(x, y, i + 1, j + 1));
            }
            here + best
        }
        go(x, y, 0, 0)
    }

    #[test]
    fn pearson_examples() {
        let x = [0.3, 1.0, -2.0, 4.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-15);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &z).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&x, &[1.0; 4]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&x, &[1.0; 3]).is_err());
    }

    #[test]
    fn dtw_examples() {
        let r = dtw(&[0.0, 0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 0), (2, 1)]);
        let r = dtw(&[2.0], &[1.0, 3.0]).unwrap();
        assert_eq!(r.distance, 2.0);
        assert_eq!(r.path, vec![(0, 0), (0, 1)]);
        let x = [1.0, -2.0, 0.5, 3.0];
        let r = dtw(&x, &x).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert!(dtw(&[], &[1.0]).is_err());
    }

    #[test]
    fn dtw_matches_enumeration() {
        let mut rng = RngStream::new(8);
        for _ in 0..100 {
            let n = 1 + rng.below(8) as usize;
            let m = 1 + rng.below((64 / n).min(8) as u64) as usize;
            let x: Vec<f64> = (0..n).map(|_| rng.below(4) as f64).collect();
            let y: Vec<f64> = (0..m).map(|_| rng.below(4) as f64).collect();
            let r = dtw(&x, &y).unwrap();
            assert_eq!(r.distance, brute(&x, &y));
            assert!((r.path_cost() - r.distance).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn pearson_affine(x in proptest::collection::vec(-5.0f64..5.0, 3..20), a in 0.1f64..3.0, b in -2.0f64..2.0, neg: bool) {
            prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-3));
            let a = if neg { -a } else { a };
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let rho = pearson(&x, &y).unwrap();
            prop_assert!((rho - a.signum()).abs() < 1e-9);
        }

        #[test]
        fn dtw_symmetric_and_path_valid(
            x in proptest::collection::vec(-5.0f64..5.0, 1..12),
            y in proptest::collection::vec(-5.0f64..5.0, 1..12),
        ) {
            let r = dtw(&x, &y).unwrap();
            let s = dtw(&y, &x).unwrap();
            prop_assert!((r.distance - s.distance).abs() < 1e-12);
            prop_assert_eq!(r.path[0], (0, 0));
            prop_assert_eq!(*r.path.last().unwrap(), (x.len() - 1, y.len() - 1));
            for w in r.path.windows(2) {
                let step = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                prop_assert!(matches!(step, (1, 0) | (0, 1) | (1, 1)));
            }
            prop_assert!((r.path_cost() - r.distance).abs() < 1e-9);
            prop_assert_eq!(dtw(&x, &x).unwrap().distance, 0.0);
        }
    }
}
