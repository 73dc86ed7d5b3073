//! Lloyd k-means codebook fitting.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::codebook::{Codebook, CodebookMeta, InitMode};
use super::grid::FeatureGrid;
use super::sq_dist;
use crate::error::{Error, Result};
use crate::harmonics::ShDegree;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub k: usize,
    pub init_mode: InitMode,
    pub seed: u64,
    pub iters: usize,
}

/// Per-iteration k-means objective (sum of squared distances measured right
/// after the assignment step).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitTrace {
    pub objective: Vec<f64>,
}

/// Row-major matrix of cells gathered from all grids.
struct Cells {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Cells {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    fn columns(&self, from: usize) -> Cells {
        let d = self.d - from;
        let mut data = Vec::with_capacity(self.n * d);
        for i in 0..self.n {
            data.extend_from_slice(&self.row(i)[from..]);
        }
        Cells { n: self.n, d, data }
    }
}

fn bits_key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Nearest centroid of every cell, ties to the lowest index.
fn assign(cells: &Cells, centroids: &[f64], k: usize) -> (Vec<usize>, Vec<f64>) {
    let d = cells.d;
    (0..cells.n)
        .into_par_iter()
        .map(|i| {
            let x = cells.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let dist = sq_dist(x, &centroids[c * d..(c + 1) * d]);
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            best
        })
        .unzip()
}

/// Gives every empty cluster the farthest cell not already used for repair.
fn repair_empty(
    cells: &Cells,
    centroids: &mut [f64],
    k: usize,
    labels: &mut [usize],
    dists: &mut [f64],
) {
    let d = cells.d;
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..cells.n {
            if counts[labels[i]] > 1 && far.is_none_or(|f| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        counts[labels[i]] -= 1;
        counts[c] = 1;
        labels[i] = c;
        dists[i] = 0.0;
        centroids[c * d..(c + 1) * d].copy_from_slice(cells.row(i));
    }
}

fn update(cells: &Cells, centroids: &mut [f64], k: usize, labels: &[usize]) {
    let d = cells.d;
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums[l * d..(l + 1) * d].iter_mut().zip(cells.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let inv = counts[c] as f64;
        for (dst, s) in centroids[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
            *dst = s / inv;
        }
    }
}

fn lloyd(cells: &Cells, centroids: &mut [f64], k: usize, iters: usize, trace: &mut Vec<f64>) -> Vec<usize> {
    let mut labels = Vec::new();
    for _ in 0..iters {
        let (mut l, mut dists) = assign(cells, centroids, k);
        trace.push(dists.iter().sum());
        repair_empty(cells, centroids, k, &mut l, &mut dists);
        update(cells, centroids, k, &l);
        labels = l;
    }
    labels
}

/// Up to `k` cells with pairwise distinct values, in seeded-shuffle order.
fn distinct_random(cells: &Cells, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cells.n).collect();
    order.shuffle(&mut rng::stream(seed));
    let mut seen = HashSet::new();
    let mut picked = Vec::with_capacity(k);
    for i in order {
        if seen.insert(bits_key(cells.row(i))) {
            picked.push(i);
            if picked.len() == k {
                break;
            }
        }
    }
    picked
}

fn count_distinct(cells: &Cells) -> usize {
    (0..cells.n).map(|i| bits_key(cells.row(i))).collect::<HashSet<_>>().len()
}

fn random_init(cells: &Cells, k: usize, seed: u64) -> Result<Vec<f64>> {
    let picked = distinct_random(cells, k, seed);
    if picked.len() < k {
        return Err(Error::data(format!(
            "only {} distinct cells available for K = {k}",
            picked.len()
        )));
    }
    Ok(picked.iter().flat_map(|&i| cells.row(i).to_vec()).collect())
}

/// Stratifies cells by their harmonic sub-vector (k-means on those columns),
/// seeds one entry per stratum with the stratum's mean full vector, and fills
/// any remaining slots by farthest-point selection.
fn sh_seeded_init(cells: &Cells, sh_channels: usize, k: usize, seed: u64, iters: usize) -> Result<Vec<f64>> {
    let sh = cells.columns(cells.d - sh_channels);
    let strata = k.min(count_distinct(&sh));
    let mut sh_centroids: Vec<f64> = distinct_random(&sh, strata, seed)
        .iter()
        .flat_map(|&i| sh.row(i).to_vec())
        .collect();
    let labels = lloyd(&sh, &mut sh_centroids, strata, iters.max(1), &mut Vec::new());

    let d = cells.d;
    let mut centroids = vec![0.0; k * d];
    update(cells, &mut centroids[..strata * d], strata, &labels);

    let mut seen: HashSet<Vec<u64>> = (0..strata).map(|c| bits_key(&centroids[c * d..(c + 1) * d])).collect();
    if strata < k {
        let mut nearest: Vec<f64> = (0..cells.n)
            .into_par_iter()
            .map(|i| {
                (0..strata)
                    .map(|c| sq_dist(cells.row(i), &centroids[c * d..(c + 1) * d]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        for c in strata..k {
            let mut far = 0;
            for i in 1..cells.n {
                if nearest[i] > nearest[far] {
                    far = i;
                }
            }
            if nearest[far] <= 0.0 || !seen.insert(bits_key(cells.row(far))) {
                return Err(Error::data(format!("too few distinct cells for K = {k}")));
            }
            centroids[c * d..(c + 1) * d].copy_from_slice(cells.row(far));
            let entry = cells.row(far).to_vec();
            nearest
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, n)| *n = n.min(sq_dist(cells.row(i), &entry)));
        }
    }
    Ok(centroids)
}

/// Fits a `K`-entry codebook to every cell of `features` with Lloyd's
/// algorithm.
pub fn fit_codebook(features: &[FeatureGrid], cfg: &FitConfig) -> Result<Codebook> {
    fit_codebook_traced(features, cfg).map(|(cb, _)| cb)
}

pub fn fit_codebook_traced(features: &[FeatureGrid], cfg: &FitConfig) -> Result<(Codebook, FitTrace)> {
    let first = features
        .first()
        .ok_or_else(|| Error::arg("codebook fitting needs at least one feature grid"))?;
    if cfg.iters == 0 {
        return Err(Error::arg("codebook fitting needs iters >= 1"));
    }
    if cfg.k == 0 {
        return Err(Error::arg("codebook size K must be positive"));
    }
    let (d, patch, sh_channels) = (first.d, first.patch, first.sh_channels);
    if features
        .iter()
        .any(|g| g.d != d || g.patch != patch || g.sh_channels != sh_channels)
    {
        return Err(Error::arg("feature grids disagree on layout"));
    }
    let n: usize = features.iter().map(|g| g.h * g.w).sum();
    if cfg.k > n {
        return Err(Error::arg(format!("K = {} exceeds the {n} available cells", cfg.k)));
    }
    let degree = if sh_channels > 0 {
        Some(ShDegree::from_channels(sh_channels).ok_or_else(|| {
            Error::arg(format!("{sh_channels} harmonic channels is not a square count"))
        })?)
    } else {
        None
    };
    let mut data = Vec::with_capacity(n * d);
    for g in features {
        data.extend_from_slice(&g.data);
    }
    let cells = Cells { n, d, data };

    let mut centroids = match cfg.init_mode {
        InitMode::Random => random_init(&cells, cfg.k, cfg.seed)?,
        InitMode::ShSeeded => {
            if sh_channels == 0 {
                return Err(Error::arg("sh_seeded initialisation needs harmonic channels in the features"));
            }
            sh_seeded_init(&cells, sh_channels, cfg.k, cfg.seed, cfg.iters)?
        }
    };
    let mut trace = FitTrace::default();
    lloyd(&cells, &mut centroids, cfg.k, cfg.iters, &mut trace.objective);

    let cb = Codebook::new(
        cfg.k,
        d,
        centroids,
        CodebookMeta {
            init_mode: cfg.init_mode,
            degree,
            patch,
            corpus: None,
        },
    )?;
    Ok((cb, trace))
}
