//! Conditional sequence model over code grids and circular outpainting.
//!
//! Grids are read in raster order. The model is a count-based n-gram with
//! additive smoothing and backoff: `p(s_t | s_{t−n+1..t}, c)` where the
//! condition `c` is a coarse bucket (known flag of the target cell, which
//! third of the rows it sits in).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quantizer::CodeGrid;
use crate::raster::MaskMap;
use crate::rng;

/// Per-cell known flags of a latent grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KnownGrid {
    h: usize,
    w: usize,
    flags: Vec<bool>,
}

impl KnownGrid {
    pub fn new(h: usize, w: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != h * w {
            return Err(Error::arg(format!(
                "known grid {h}x{w} needs {} flags, got {}",
                h * w,
                flags.len()
            )));
        }
        Ok(Self { h, w, flags })
    }

    pub fn filled(h: usize, w: usize, known: bool) -> Self {
        Self {
            h,
            w,
            flags: vec![known; h * w],
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.flags[r * self.w + c]
    }

    pub fn count_known(&self) -> usize {
        self.flags.iter().filter(|&&k| k).count()
    }

    /// Circular column shift, matching [`CodeGrid::rotate_columns`].
    pub fn rotate_columns(&self, shift: i64) -> KnownGrid {
        let s = shift.rem_euclid(self.w as i64) as usize;
        let mut flags = self.flags.clone();
        for r in 0..self.h {
            for c in 0..self.w {
                flags[r * self.w + (c + s) % self.w] = self.get(r, c);
            }
        }
        Self { flags, ..*self }
    }
}

/// A latent cell is known when at least half of its `f × f` pixel block is
/// given.
pub fn latent_mask(mask: &MaskMap, f: usize) -> Result<KnownGrid> {
    let (height, width) = (mask.height(), mask.width());
    if f == 0 || height % f != 0 || width % f != 0 {
        return Err(Error::arg(format!(
            "scale factor {f} does not divide {width}x{height}"
        )));
    }
    let (h, w) = (height / f, width / f);
    let mut flags = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut given = 0;
            for j in r * f..(r + 1) * f {
                for i in c * f..(c + 1) * f {
                    given += usize::from(mask.get(i, j));
                }
            }
            flags.push(2 * given >= f * f);
        }
    }
    KnownGrid::new(h, w, flags)
}

/// Condition bucket: known flag of the target cell and its row band
/// (0 = top, 1 = middle, 2 = bottom third).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cond {
    pub known: bool,
    pub band: u8,
}

impl Cond {
    pub fn of(known: bool, row: usize, rows: usize) -> Self {
        Self {
            known,
            band: (3 * row / rows.max(1)).min(2) as u8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Table {
    counts: BTreeMap<u32, u64>,
    total: u64,
}

type Key = (Vec<u32>, Cond);

/// Smoothed, backed-off n-gram model over `K` code indices.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    n: usize,
    k: usize,
    alpha: f64,
    tables: BTreeMap<Key, Table>,
}

const MAGIC: &[u8; 4] = b"NGRM";

impl NGramModel {
    /// An untrained model: every query is uniform.
    pub fn empty(n: usize, k: usize, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("n-gram order must be at least 1"));
        }
        if k == 0 {
            return Err(Error::arg("vocabulary size must be positive"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::arg(format!("smoothing alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            n,
            k,
            alpha,
            tables: BTreeMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn vocab(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Adds one observation of `next` after `context` under `cond`, at every
    /// backoff level.
    pub fn observe(&mut self, context: &[u32], cond: Cond, next: u32) -> Result<()> {
        if next as usize >= self.k || context.iter().any(|&c| c as usize >= self.k) {
            return Err(Error::data(format!("code index outside vocabulary of size {}", self.k)));
        }
        let ctx = &context[context.len().saturating_sub(self.n - 1)..];
        for start in 0..=ctx.len() {
            let t = self.tables.entry((ctx[start..].to_vec(), cond)).or_default();
            *t.counts.entry(next).or_insert(0) += 1;
            t.total += 1;
        }
        Ok(())
    }

    /// Number of recorded `(context, cond)` tables.
    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    /// Raw count of `next` after exactly `context` under `cond`.
    pub fn count(&self, context: &[u32], cond: Cond, next: u32) -> u64 {
        self.tables
            .get(&(context.to_vec(), cond))
            .and_then(|t| t.counts.get(&next).copied())
            .unwrap_or(0)
    }

    fn backoff_table(&self, context: &[u32], cond: Cond) -> Option<&Table> {
        let ctx = &context[context.len().saturating_sub(self.n - 1)..];
        (0..=ctx.len()).find_map(|start| {
            self.tables
                .get(&(ctx[start..].to_vec(), cond))
                .filter(|t| t.total > 0)
        })
    }

    /// `(count(ctx, c, k) + α) / (Σ count + Kα)` for the longest suffix of
    /// `context` seen in training; uniform when nothing matches.
    pub fn predict_dist(&self, context: &[u32], cond: Cond) -> Vec<f64> {
        let kf = self.k as f64;
        match self.backoff_table(context, cond) {
            None => vec![1.0 / kf; self.k],
            Some(t) => {
                let denom = t.total as f64 + kf * self.alpha;
                let mut p = vec![self.alpha / denom; self.k];
                for (&i, &c) in &t.counts {
                    p[i as usize] = (c as f64 + self.alpha) / denom;
                }
                p
            }
        }
    }

    fn prob(&self, context: &[u32], cond: Cond, next: u32) -> f64 {
        match self.backoff_table(context, cond) {
            None => 1.0 / self.k as f64,
            Some(t) => {
                let c = t.counts.get(&next).copied().unwrap_or(0) as f64;
                (c + self.alpha) / (t.total as f64 + self.k as f64 * self.alpha)
            }
        }
    }

    /// Mean negative log-likelihood of `grid` in raster order.
    pub fn nll(&self, grid: &CodeGrid, known: &KnownGrid) -> Result<f64> {
        check_known(grid, known)?;
        check_vocab(grid, self.k)?;
        let seq = grid.indices();
        let mut sum = 0.0;
        for (t, &s) in seq.iter().enumerate() {
            let (r, c) = (t / grid.w(), t % grid.w());
            let ctx = &seq[t.saturating_sub(self.n - 1)..t];
            sum -= self.prob(ctx, Cond::of(known.get(r, c), r, grid.h()), s).ln();
        }
        Ok(sum / seq.len() as f64)
    }

    /// `NGRM` binary: header, then `(context, cond, index, count)` records in
    /// sorted order, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let entries: u64 = self.tables.values().map(|t| t.counts.len() as u64).sum();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&entries.to_le_bytes());
        for ((ctx, cond), t) in &self.tables {
            for (&i, &c) in &t.counts {
                out.extend_from_slice(&(ctx.len() as u32).to_le_bytes());
                for &x in ctx {
                    out.extend_from_slice(&x.to_le_bytes());
                }
                out.push(u8::from(cond.known));
                out.push(cond.band);
                out.extend_from_slice(&i.to_le_bytes());
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::data("not an n-gram model file"));
        }
        let n = read_u32(&mut r)? as usize;
        let k = read_u32(&mut r)? as usize;
        let mut a = [0u8; 8];
        read_exact(&mut r, &mut a)?;
        let mut model = Self::empty(n, k, f64::from_le_bytes(a)).map_err(|e| Error::data(e.to_string()))?;
        let entries = read_u64(&mut r)?;
        for _ in 0..entries {
            let len = read_u32(&mut r)? as usize;
            if len >= n {
                return Err(Error::data(format!("context of length {len} in an order-{n} model")));
            }
            let ctx = (0..len).map(|_| read_u32(&mut r)).collect::<Result<Vec<_>>>()?;
            let mut cb = [0u8; 2];
            read_exact(&mut r, &mut cb)?;
            if cb[0] > 1 || cb[1] > 2 {
                return Err(Error::data("malformed condition bucket"));
            }
            let cond = Cond {
                known: cb[0] == 1,
                band: cb[1],
            };
            let idx = read_u32(&mut r)?;
            let count = read_u64(&mut r)?;
            if idx as usize >= k || ctx.iter().any(|&x| x as usize >= k) {
                return Err(Error::data(format!("code index outside vocabulary of size {k}")));
            }
            let t = model.tables.entry((ctx, cond)).or_default();
            t.counts.insert(idx, count);
            t.total += count;
        }
        if !r.is_empty() {
            return Err(Error::data("trailing bytes after n-gram records"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::data("truncated n-gram model file"))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn check_known(grid: &CodeGrid, known: &KnownGrid) -> Result<()> {
    if grid.h() != known.h() || grid.w() != known.w() {
        return Err(Error::arg(format!(
            "known grid {}x{} does not match code grid {}x{}",
            known.h(),
            known.w(),
            grid.h(),
            grid.w()
        )));
    }
    Ok(())
}

fn check_vocab(grid: &CodeGrid, k: usize) -> Result<()> {
    match grid.max_index() {
        Some(m) if m as usize >= k => Err(Error::data(format!(
            "code index {m} outside vocabulary of size {k}"
        ))),
        _ => Ok(()),
    }
}

/// Counts raster-order windows of every grid in `corpus`, conditioned on the
/// matching known-flag grid.
pub fn fit_ngram(corpus: &[CodeGrid], conditions: &[KnownGrid], n: usize, k: usize, alpha: f64) -> Result<NGramModel> {
    if corpus.is_empty() {
        return Err(Error::arg("cannot fit a sequence model on an empty corpus"));
    }
    if conditions.len() != corpus.len() {
        return Err(Error::arg(format!(
            "{} condition grids for {} code grids",
            conditions.len(),
            corpus.len()
        )));
    }
    let mut model = NGramModel::empty(n, k, alpha)?;
    for (grid, known) in corpus.iter().zip(conditions) {
        check_known(grid, known)?;
        check_vocab(grid, k)?;
        let seq = grid.indices();
        for (t, &s) in seq.iter().enumerate() {
            let (r, c) = (t / grid.w(), t % grid.w());
            let ctx = &seq[t.saturating_sub(n - 1)..t];
            model.observe(ctx, Cond::of(known.get(r, c), r, grid.h()), s)?;
        }
    }
    Ok(model)
}

/// `pad` columns copied from the opposite side onto each end of both grids.
pub fn wrap_extend(grid: &CodeGrid, known: &KnownGrid, pad: usize) -> Result<(CodeGrid, KnownGrid)> {
    check_known(grid, known)?;
    let (h, w) = (grid.h(), grid.w());
    if pad > w {
        return Err(Error::arg(format!("wrap width {pad} exceeds grid width {w}")));
    }
    let ew = w + 2 * pad;
    let mut vals = Vec::with_capacity(h * ew);
    let mut flags = Vec::with_capacity(h * ew);
    for r in 0..h {
        for c in 0..ew {
            let src = (c + w - pad) % w;
            vals.push(grid.get(r, src));
            flags.push(known.get(r, src));
        }
    }
    Ok((CodeGrid::new(h, ew, vals)?, KnownGrid::new(h, ew, flags)?))
}

/// Inputs of one circular outpainting run. Values of unknown cells are
/// placeholders and are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct OutpaintTask {
    pub grid: CodeGrid,
    pub known: KnownGrid,
    /// Columns duplicated onto each end; 0 disables wrapping.
    pub pad_w: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl OutpaintTask {
    pub fn validate(&self, k: usize) -> Result<()> {
        check_known(&self.grid, &self.known)?;
        if self.pad_w > self.grid.w() / 4 {
            return Err(Error::arg(format!(
                "wrap width {} exceeds a quarter of grid width {}",
                self.pad_w,
                self.grid.w()
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::arg(format!(
                "sampling temperature must be positive, got {}",
                self.temperature
            )));
        }
        for (i, (&v, &kn)) in self.grid.indices().iter().zip(self.known.flags()).enumerate() {
            if kn && v as usize >= k {
                return Err(Error::data(format!(
                    "known cell {i} holds index {v} outside vocabulary of size {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Tempered distribution `p^{1/T}`, renormalized, computed in log space.
pub fn temper(p: &[f64], temperature: f64) -> Vec<f64> {
    let logs: Vec<f64> = p.iter().map(|&x| x.ln() / temperature).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Completes the unknown cells of `task.grid` in raster order over a
/// wrap-extended grid. After each row the pad columns are refreshed from
/// their wrap sources so later contexts see consistent seam values. Known
/// cells are never modified.
pub fn circular_outpaint(model: &NGramModel, task: &OutpaintTask) -> Result<CodeGrid> {
    task.validate(model.vocab())?;
    let (h, w, p) = (task.grid.h(), task.grid.w(), task.pad_w);
    let (ext, known) = wrap_extend(&task.grid, &task.known, p)?;
    let ew = ext.w();
    let mut vals = ext.indices().to_vec();
    let mut rng = rng::stream(task.seed);
    let span = model.order() - 1;

    for r in 0..h {
        for c in 0..ew {
            let t = r * ew + c;
            if known.get(r, c) {
                continue;
            }
            let ctx = &vals[t.saturating_sub(span)..t];
            let dist = temper(&model.predict_dist(ctx, Cond::of(false, r, h)), task.temperature);
            let pick = WeightedIndex::new(&dist)
                .map_err(|e| Error::State(format!("degenerate sampling distribution: {e}")))?
                .sample(&mut rng);
            vals[t] = pick as u32;
        }
        for c in 0..p {
            vals[r * ew + c] = vals[r * ew + c + w];
            vals[r * ew + p + w + c] = vals[r * ew + p + c];
        }
    }

    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        out.extend_from_slice(&vals[r * ew + p..r * ew + p + w]);
    }
    CodeGrid::new(h, w, out)
}

/// `n_samples` independent completions; sample `i` uses seed
/// `sample_seed(task.seed, i)`.
pub fn diverse_outpaint(model: &NGramModel, task: &OutpaintTask, n_samples: usize) -> Result<Vec<CodeGrid>> {
    if n_samples == 0 {
        return Err(Error::arg("need at least one sample"));
    }
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let t = OutpaintTask {
                seed: rng::sample_seed(task.seed, i),
                ..task.clone()
            };
            circular_outpaint(model, &t)
        })
        .collect()
}

#[cfg(test)]
mod tests;
