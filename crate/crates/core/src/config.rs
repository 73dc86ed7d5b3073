//! Run configuration: one JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::harmonics::ShDegree;
use crate::quantizer::InitMode;
use crate::refine::DEFAULT_FEATHER;
use crate::spectrum::DEFAULT_BINS;
use crate::sphgeo::ViewSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Parent directory of run directories.
    pub out_dir: PathBuf,
    /// Training panoramas (PNG); a synthetic corpus is generated when unset.
    pub input_dir: Option<PathBuf>,
    /// Panorama to outpaint; a synthetic one is generated when unset.
    pub input: Option<PathBuf>,
    /// Second image for comparison commands.
    pub reference: Option<PathBuf>,
    /// Viewport mask PNG overriding `view`.
    pub mask: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
            input_dir: None,
            input: None,
            reference: None,
            mask: None,
            codebook: None,
            model: None,
        }
    }
}

const PATH_KEYS: [&str; 7] = ["out_dir", "input_dir", "input", "reference", "mask", "codebook", "model"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Input panorama height N.
    pub height: usize,
    /// Input panorama width M; always 2N.
    pub width: Option<usize>,
    /// Latent scale factor f.
    pub patch: usize,
    pub codebook_size: usize,
    pub sh_degree: ShDegree,
    pub init_mode: InitMode,
    pub kmeans_iters: usize,
    /// Synthetic training panoramas generated when no input directory is set.
    pub corpus_size: usize,
    pub ngram_order: usize,
    pub alpha: f64,
    pub pad_w: usize,
    pub temperature: f64,
    pub samples: usize,
    pub feather: usize,
    pub freq_bins: usize,
    pub view: ViewSpec,
    pub run_id: Option<String>,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            height: 256,
            width: None,
            patch: 16,
            codebook_size: 512,
            sh_degree: ShDegree::default(),
            init_mode: InitMode::ShSeeded,
            kmeans_iters: 10,
            corpus_size: 32,
            ngram_order: 3,
            alpha: 0.1,
            pad_w: 1,
            temperature: 1.0,
            samples: 3,
            feather: DEFAULT_FEATHER,
            freq_bins: DEFAULT_BINS,
            view: ViewSpec::default(),
            run_id: None,
            paths: Paths::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    /// Reads a config file, or the `config` object of a run manifest, then
    /// applies `overrides` and validates.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = match path {
            None => Value::Object(Default::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                match v {
                    Value::Object(mut m) if m.contains_key("manifest_version") => {
                        m.remove("config").ok_or_else(|| config_err("manifest has no config"))?
                    }
                    other => other,
                }
            }
        };
        for (k, v) in overrides {
            apply_override(&mut value, k, v)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| config_err(e.to_string()))?;
        cfg.resolved()
    }

    pub fn width(&self) -> usize {
        self.width.unwrap_or(2 * self.height)
    }

    /// Latent grid dimensions.
    pub fn latent_dims(&self) -> (usize, usize) {
        (self.height / self.patch, self.width() / self.patch)
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| format!("run-{}", self.seed))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.paths.out_dir.join(self.run_id())
    }

    /// Validated copy with every derived default filled in.
    pub fn resolved(mut self) -> Result<Self> {
        self.validate()?;
        self.width = Some(self.width());
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.height, self.width());
        if n == 0 || m != 2 * n {
            return Err(config_err(format!("panorama must be M = 2N, got {m}x{n}")));
        }
        if self.patch == 0 || n % self.patch != 0 {
            return Err(config_err(format!("patch {} does not divide height {n}", self.patch)));
        }
        let w = m / self.patch;
        let checks: [(bool, String); 9] = [
            (self.codebook_size >= 1, "codebook_size must be at least 1".into()),
            (self.kmeans_iters >= 1, "kmeans_iters must be at least 1".into()),
            (self.corpus_size >= 1, "corpus_size must be at least 1".into()),
            (self.ngram_order >= 1, "ngram_order must be at least 1".into()),
            (self.alpha > 0.0 && self.alpha.is_finite(), format!("alpha must be positive, got {}", self.alpha)),
            (
                self.temperature > 0.0 && self.temperature.is_finite(),
                format!("temperature must be positive, got {}", self.temperature),
            ),
            (self.pad_w <= w / 4, format!("pad_w {} exceeds a quarter of the latent width {w}", self.pad_w)),
            (self.samples >= 1, "samples must be at least 1".into()),
            (self.freq_bins >= 2, "freq_bins must be at least 2".into()),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(config_err(msg));
            }
        }
        if self.codebook_size > u16::MAX as usize + 1 {
            return Err(config_err("codebook_size must fit 16-bit code grids"));
        }
        Ok(())
    }
}

/// Sets `key` (dashes allowed) to `raw`, parsed as JSON when possible and as
/// a string otherwise. Path keys land under `paths`; `view` accepts the
/// compact view syntax.
pub fn apply_override(config: &mut Value, key: &str, raw: &str) -> Result<()> {
    let key = key.trim_start_matches("--").replace('-', "_");
    let obj = config
        .as_object_mut()
        .ok_or_else(|| config_err("config must be a JSON object"))?;
    let value = if key == "view" {
        let view: ViewSpec = raw.parse().map_err(|e: Error| config_err(e.to_string()))?;
        serde_json::to_value(view)?
    } else if PATH_KEYS.contains(&key.as_str()) || key == "run_id" || key == "init_mode" {
        Value::String(raw.to_string())
    } else {
        serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
    };
    if PATH_KEYS.contains(&key.as_str()) {
        let paths = obj
            .entry("paths")
            .or_insert_with(|| Value::Object(Default::default()))
            .as_object_mut()
            .ok_or_else(|| config_err("paths must be a JSON object"))?;
        paths.insert(key, value);
    } else {
        obj.insert(key, value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphgeo::CubeFace;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::load(None, &[]).unwrap();
        assert_eq!(c.width, Some(512));
        assert_eq!(c.latent_dims(), (16, 32));
        assert_eq!(c.sh_degree.get(), 3);
        assert_eq!(c.pad_w, 1);
        assert_eq!(c.feather, 8);
        assert_eq!(c.run_dir(), PathBuf::from("runs/run-0"));
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 4, "height": 64, "paths": {"model": "m.ngrm"}}"#).unwrap();
        let c = RunConfig::load(
            Some(&p),
            &ov(&[("--seed", "9"), ("out-dir", "/tmp/x"), ("view", "back"), ("init-mode", "random")]),
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.height, 64);
        assert_eq!(c.width(), 128);
        assert_eq!(c.paths.model, Some(PathBuf::from("m.ngrm")));
        assert_eq!(c.paths.out_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.view, ViewSpec::CubeFace { face: CubeFace::Back });
        assert_eq!(c.init_mode, InitMode::Random);
    }

    #[test]
    fn manifest_round_trip() {
        let c = RunConfig::load(None, &ov(&[("height", "32"), ("view", "tangent:90,45")])).unwrap();
        let manifest = serde_json::json!({"manifest_version": 1, "config": c});
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        std::fs::write(&p, manifest.to_string()).unwrap();
        assert_eq!(RunConfig::load(Some(&p), &[]).unwrap(), c);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for bad in [
            vec![("height", "30")],
            vec![("height", "64"), ("width", "100")],
            vec![("alpha", "0")],
            vec![("temperature", "-1")],
            vec![("pad_w", "3"), ("height", "64")],
            vec![("bogus", "1")],
            vec![("view", "sideways")],
            vec![("seed", "\"x\"")],
        ] {
            let e = RunConfig::load(None, &ov(&bad)).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{bad:?}: {e}");
            assert_eq!(e.exit_code(), 2);
        }
        let e = RunConfig::load(Some(Path::new("/nonexistent/c.json")), &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
