//! Exhaustive split search used as an independent oracle.

#![allow(dead_code)]

use ddrct::data::CovariateTable;
use ddrct::forest::Side;

#[derive(Clone, Copy, Debug)]
pub struct OracleSplit {
    pub column: usize,
    pub threshold: f64,
    pub missing_goes: Side,
    pub gain: f64,
}

/// Every (column, midpoint threshold, missing direction) partition of
/// `units`, as (column, threshold, direction, left units, right units).
pub fn partitions(x: &CovariateTable, units: &[usize]) -> Vec<(usize, f64, Side, Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    for col in 0..x.n_cols() {
        let mut vals: Vec<f64> = units.iter().map(|&u| x.value(u, col)).filter(|v| !v.is_nan()).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let t = pair[0] / 2.0 + pair[1] / 2.0;
            for side in [Side::Left, Side::Right] {
                let (l, r) = children(x, units, col, t, side);
                out.push((col, t, side, l, r));
            }
        }
    }
    out
}

/// Units of `units` going left and right under a split.
pub fn children(x: &CovariateTable, units: &[usize], col: usize, t: f64, side: Side) -> (Vec<usize>, Vec<usize>) {
    units.iter().partition(|&&u| {
        let v = x.value(u, col);
        if v.is_nan() {
            side == Side::Left
        } else {
            v < t
        }
    })
}

fn sse(units: &[usize], y: &[f64]) -> f64 {
    let m = units.iter().map(|&u| y[u]).sum::<f64>() / units.len() as f64;
    units.iter().map(|&u| (y[u] - m).powi(2)).sum()
}

/// Decrease in summed squared error; `None` below `min_leaf`.
pub fn variance_gain(units: &[usize], l: &[usize], r: &[usize], y: &[f64], min_leaf: usize) -> Option<f64> {
    (l.len() >= min_leaf && r.len() >= min_leaf).then(|| sse(units, y) - sse(l, y) - sse(r, y))
}

/// `n_L n_R / n^2 (mean rho_L - mean rho_R)^2` with the parent's
/// pseudo-outcomes; `None` below `min_leaf` or when a child has no
/// treatment-residual variation.
pub fn causal_gain(units: &[usize], l: &[usize], r: &[usize], w: &[f64], y: &[f64], min_leaf: usize) -> Option<f64> {
    let ww = |s: &[usize]| s.iter().map(|&u| w[u] * w[u]).sum::<f64>();
    if l.len() < min_leaf || r.len() < min_leaf || ww(l) <= 0.0 || ww(r) <= 0.0 {
        return None;
    }
    let n = units.len() as f64;
    let sww = ww(units);
    let beta = units.iter().map(|&u| w[u] * y[u]).sum::<f64>() / sww;
    let rho = |u: usize| w[u] * (y[u] - w[u] * beta) / (sww / n);
    let ml = l.iter().map(|&u| rho(u)).sum::<f64>() / l.len() as f64;
    let mr = r.iter().map(|&u| rho(u)).sum::<f64>() / r.len() as f64;
    Some(l.len() as f64 * r.len() as f64 / (n * n) * (ml - mr).powi(2))
}

/// Maximum of `gain` over every partition.
pub fn best_by(
    x: &CovariateTable,
    units: &[usize],
    gain: impl Fn(&[usize], &[usize]) -> Option<f64>,
) -> Option<OracleSplit> {
    partitions(x, units)
        .into_iter()
        .filter_map(|(column, threshold, missing_goes, l, r)| {
            gain(&l, &r).map(|gain| OracleSplit {
                column,
                threshold,
                missing_goes,
                gain,
            })
        })
        .fold(None, |best: Option<OracleSplit>, s| match best {
            Some(b) if b.gain >= s.gain => Some(b),
            _ => Some(s),
        })
}

/// Engine split versus oracle: both absent, or the engine's reported gain
/// and the oracle gain of the engine's partition both equal the oracle
/// maximum. The engine may decline splits whose best gain is zero.
pub fn agrees(engine: Option<(f64, f64)>, oracle: Option<f64>) -> bool {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    match (engine, oracle) {
        (None, None) => true,
        (Some((reported, achieved)), Some(best)) => close(reported, best) && close(achieved, best),
        (None, Some(best)) => best.abs() <= 1e-12,
        (Some(_), None) => false,
    }
}

/// Random table with `n` rows, `p` columns on a coarse grid (so ties occur)
/// and the given share of missing cells.
pub fn grid_table(rng: &mut impl rand::Rng, n: usize, p: usize, missing: f64) -> CovariateTable {
    let columns = (0..p)
        .map(|_| {
            (0..n)
                .map(|_| {
                    if rng.gen::<f64>() < missing {
                        f64::NAN
                    } else {
                        rng.gen_range(0..6) as f64 * 0.5
                    }
                })
                .collect()
        })
        .collect();
    let names = (0..p).map(|j| format!("x{}", j + 1)).collect();
    CovariateTable::new(names, columns).unwrap()
}
