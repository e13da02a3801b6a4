//! Correlation coefficients between predicted and subjective scores.
//!
//! Mismatched lengths and non-finite values are input errors; fewer than two
//! pairs or a constant sequence is a degenerate-input error.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Smallest group size a report computes correlations for.
pub const MIN_PAIRS: usize = 3;

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Input(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite value in correlation input".into()));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate(format!("{} pairs", x.len())));
    }
    Ok(())
}

fn constant() -> Error {
    Error::Degenerate("constant sequence".into())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(constant());
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Linear correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    pearson_unchecked(x, y)
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Rank-order correlation: Pearson on fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    pearson_unchecked(&fractional_ranks(x), &fractional_ranks(y))
}

/// Sum over runs of equal consecutive values of `t(t-1)/2`.
fn tied_pairs<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(v);
    }
    total + run * (run + 1) / 2
}

/// Merge sort by `y` counting swaps, i.e. discordant pairs.
fn count_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_swaps(&mut v[..mid], &mut buf[..mid]) + count_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k = k + mid - i;
    buf[k..].copy_from_slice(&v[j..]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in O(n log n).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = n * (n - 1) / 2;
    let tx = tied_pairs(pairs.iter().map(|p| p.0));
    let txy = tied_pairs(pairs.iter().copied());
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = count_swaps(&mut ys, &mut buf);
    let ty = tied_pairs(ys.iter().copied());

    if tx == n0 || ty == n0 {
        return Err(constant());
    }
    // concordant - discordant
    let s = n0 as i128 - tx as i128 - ty as i128 + txy as i128 - 2 * swaps as i128;
    let denom = ((n0 - tx) as f64).sqrt() * ((n0 - ty) as f64).sqrt();
    Ok((s as f64 / denom).clamp(-1.0, 1.0))
}

/// Direct pairwise tau-b, used to cross-check the fast version.
pub fn kendall_tau_b_naive(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let (mut s, mut nx, mut ny) = (0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = x[i].partial_cmp(&x[j]).unwrap_or(Ordering::Equal);
            let b = y[i].partial_cmp(&y[j]).unwrap_or(Ordering::Equal);
            if a != Ordering::Equal {
                nx += 1;
            }
            if b != Ordering::Equal {
                ny += 1;
            }
            if a != Ordering::Equal && b != Ordering::Equal {
                s += if a == b { 1 } else { -1 };
            }
        }
    }
    if nx == 0 || ny == 0 {
        return Err(constant());
    }
    Ok((s as f64 / ((nx as f64).sqrt() * (ny as f64).sqrt())).clamp(-1.0, 1.0))
}

/// Report-level correlations; `None` marks a group that is too small or
/// constant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Correlations {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
}

impl Correlations {
    pub fn is_complete(&self) -> bool {
        self.pearson.is_some() && self.spearman.is_some() && self.kendall.is_some()
    }
}

fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn correlations(x: &[f64], y: &[f64]) -> Result<Correlations> {
    check(x, y).or_else(|e| if matches!(e, Error::Degenerate(_)) { Ok(()) } else { Err(e) })?;
    if x.len() < MIN_PAIRS {
        return Ok(Correlations::default());
    }
    Ok(Correlations {
        pearson: optional(pearson(x, y))?,
        spearman: optional(spearman(x, y))?,
        kendall: optional(kendall_tau_b(x, y))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_reversed() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let r: Vec<f64> = x.iter().map(|v| -v).collect();
        for f in [pearson, spearman, kendall_tau_b] {
            assert!((f(&x, &y).unwrap() - 1.0).abs() < 1e-12);
            assert!((f(&x, &r).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_values() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        assert!((pearson(&x, &y).unwrap() - 0.8).abs() < 1e-12);
        assert!((kendall_tau_b(&x, &y).unwrap() - 4.0 / 6.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-12);
        let tied = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((tied - 0.75f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ties_in_ranks() {
        assert_eq!(fractional_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn tau_b_with_ties() {
        // one tie in x, one in y, four concordant pairs
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 2.0, 3.0];
        let t = kendall_tau_b(&x, &y).unwrap();
        assert!((t - 4.0 / 5.0).abs() < 1e-15, "{t}");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(Error::Degenerate(_))));
        assert!(matches!(spearman(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]), Err(Error::Degenerate(_))));
        assert!(matches!(kendall_tau_b(&[1.0, 2.0, 3.0], &[7.0; 3]), Err(Error::Degenerate(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::Input(_))));
        assert!(matches!(spearman(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]), Err(Error::Input(_))));
        assert_eq!(correlations(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), Correlations::default());
        let c = correlations(&[1.0, 2.0, 3.0], &[5.0; 3]).unwrap();
        assert!(!c.is_complete() && c.pearson.is_none());
    }

    fn small_values() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec(((0i32..8).prop_map(f64::from), (0i32..8).prop_map(f64::from)), 2..60)
    }

    fn same(a: Result<f64>, b: Result<f64>, tol: f64) -> bool {
        match (a, b) {
            (Ok(a), Ok(b)) => (a - b).abs() <= tol,
            (Err(_), Err(_)) => true,
            _ => false,
        }
    }

    proptest! {
        #[test]
        fn fast_tau_matches_naive(pairs in small_values()) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(same(kendall_tau_b(&x, &y), kendall_tau_b_naive(&x, &y), 1e-12));
        }

        #[test]
        fn bounded_and_symmetric(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..80)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            for f in [pearson, spearman, kendall_tau_b] {
                let (a, b) = (f(&x, &y), f(&y, &x));
                if let Ok(v) = a { prop_assert!((-1.0..=1.0).contains(&v)); }
                prop_assert!(same(a, b, 1e-12));
            }
        }

        #[test]
        fn positive_affine_invariance(
            pairs in prop::collection::vec((-10f64..10.0, -10f64..10.0), 2..60),
            scale in 0.1f64..10.0,
            shift in -5f64..5.0,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let xt: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            prop_assert!(same(pearson(&x, &y), pearson(&xt, &y), 1e-12));
            // rank metrics: only when the map preserves all orderings and ties
            if fractional_ranks(&x) == fractional_ranks(&xt) {
                prop_assert!(same(spearman(&x, &y), spearman(&xt, &y), 1e-12));
                prop_assert!(same(kendall_tau_b(&x, &y), kendall_tau_b(&xt, &y), 1e-12));
            }
        }

        #[test]
        fn negation_flips_sign(pairs in prop::collection::vec((-10f64..10.0, -10f64..10.0), 3..60)) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ny: Vec<f64> = y.iter().map(|v| -v).collect();
            for f in [pearson, spearman, kendall_tau_b] {
                if let (Ok(a), Ok(b)) = (f(&x, &y), f(&x, &ny)) {
                    prop_assert!((a + b).abs() < 1e-12);
                }
            }
        }
    }
}
