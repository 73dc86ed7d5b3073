use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::ShDegree;

/// How the k-means seeds of a codebook were chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Distinct cells drawn by a seeded shuffle.
    Random,
    /// Cells stratified by their harmonic sub-vector; one seed per stratum.
    ShSeeded,
}

impl std::str::FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitMode::Random),
            "sh_seeded" => Ok(InitMode::ShSeeded),
            _ => Err(Error::arg(format!("unknown init mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodebookMeta {
    pub init_mode: InitMode,
    /// Degree of the appended harmonic channels, `None` for plain patches.
    pub degree: Option<ShDegree>,
    /// Patch scale factor `f`.
    pub patch: usize,
    /// Corpus the codebook was fit on (e.g. "masked" or "complete").
    pub corpus: Option<String>,
}

/// `K` code vectors of dimension `d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    k: usize,
    d: usize,
    entries: Vec<f64>,
    meta: CodebookMeta,
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    version: u32,
    #[serde(rename = "K")]
    k: usize,
    d: usize,
    f: usize,
    init_mode: InitMode,
    degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    corpus: Option<String>,
    entries: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn new(k: usize, d: usize, entries: Vec<f64>, meta: CodebookMeta) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::arg("codebook needs K >= 1 and d >= 1"));
        }
        if entries.len() != k * d {
            return Err(Error::arg(format!(
                "codebook {k}x{d} needs {} values, got {}",
                k * d,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("codebook holds non-finite values"));
        }
        if meta.degree.map_or(0, ShDegree::channels) > d {
            return Err(Error::data("codebook has more harmonic channels than dimensions"));
        }
        Ok(Self { k, d, entries, meta })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn meta(&self) -> &CodebookMeta {
        &self.meta
    }

    pub fn set_corpus(&mut self, corpus: impl Into<String>) {
        self.meta.corpus = Some(corpus.into());
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn entry(&self, k: usize) -> &[f64] {
        &self.entries[k * self.d..(k + 1) * self.d]
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CodebookFile {
            version: 1,
            k: self.k,
            d: self.d,
            f: self.meta.patch,
            init_mode: self.meta.init_mode,
            degree: self.meta.degree.map(ShDegree::get),
            corpus: self.meta.corpus.clone(),
            entries: self.entries.chunks_exact(self.d).map(<[f64]>::to_vec).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text)?;
        if file.version != 1 {
            return Err(Error::data(format!("unsupported codebook version {}", file.version)));
        }
        if file.entries.len() != file.k || file.entries.iter().any(|e| e.len() != file.d) {
            return Err(Error::data("codebook entries do not match K x d"));
        }
        let degree = file.degree.map(ShDegree::new).transpose()?;
        Self::new(
            file.k,
            file.d,
            file.entries.concat(),
            CodebookMeta {
                init_mode: file.init_mode,
                degree,
                patch: file.f,
                corpus: file.corpus,
            },
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
