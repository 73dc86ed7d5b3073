//! End-to-end commands.
//!
//! Each command takes a resolved [`RunConfig`], writes its artifacts into
//! the run directory and finishes with `manifest.json`, which records the
//! full configuration so `--config <run>/manifest.json` replays the run.
//! Every random stream is derived from the run seed and a stage tag.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::codeseq::{diverse_outpaint, fit_ngram, latent_mask, KnownGrid, NGramModel, OutpaintTask};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::harmonics::{sh_map, ShMap};
use crate::metrics::{append_metrics_csv, psnr, ws_psnr};
use crate::quantizer::{
    codebook_usage, fit_codebook, lookup, patch_decode, patch_encode, quantize, reconstruct, CodeGrid, Codebook,
    FeatureGrid, FitConfig,
};
use crate::raster::{ErpImage, MaskMap, Rgb};
use crate::refine::{blend_refine, downscale2x, upscale2x};
use crate::rng::derive_seed;
use crate::spectrum::{freq_gap, hf_mass, save_amplitude_png};
use crate::sphgeo::apply_mask;
use crate::synth::{synth_corpus, synth_panorama, SynthParams};

/// Paint colour of pixels outside the given region.
pub const MASK_FILL: Rgb = [0.5, 0.5, 0.5];

pub const MANIFEST: &str = "manifest.json";

trait StageExt<T> {
    fn stage(self, name: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, name: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(name))
    }
}

/// Stream seeds of a run, keyed by stage tag.
pub fn stage_seeds(seed: u64) -> BTreeMap<&'static str, u64> {
    ["corpus", "target", "codebook", "outpaint"]
        .into_iter()
        .map(|tag| (tag, derive_seed(seed, 0, tag)))
        .collect()
}

/// Outcome of a command: its run directory and a JSON summary.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summary: Value,
}

struct Run {
    cfg: RunConfig,
    dir: PathBuf,
    artifacts: Vec<String>,
    summary: Map<String, Value>,
}

impl Run {
    fn open(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.run_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            cfg: cfg.clone(),
            dir,
            artifacts: Vec::new(),
            summary: Map::new(),
        })
    }

    /// Absolute path of artifact `rel`, creating parent directories.
    fn artifact(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        if !self.artifacts.iter().any(|a| a == rel) {
            self.artifacts.push(rel.to_string());
        }
        Ok(p)
    }

    /// Like [`Run::artifact`] but removes any previous file first.
    fn fresh_artifact(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.artifact(rel)?;
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(p)
    }

    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    fn finish(mut self, command: &str) -> Result<RunReport> {
        self.artifacts.sort();
        let manifest = json!({
            "manifest_version": 1,
            "command": command,
            "config": self.cfg,
            "seeds": stage_seeds(self.cfg.seed),
            "artifacts": self.artifacts,
            "summary": self.summary,
        });
        let path = self.dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(RunReport {
            dir: self.dir,
            summary: Value::Object(self.summary),
        })
    }
}

fn load_sized(path: &Path, height: usize, width: usize) -> Result<ErpImage> {
    let img = ErpImage::load_png(path)?;
    if img.height() != height || img.width() != width {
        return Err(Error::data(format!(
            "{} is {}x{}, expected {width}x{height}",
            path.display(),
            img.width(),
            img.height()
        )));
    }
    Ok(img)
}

/// Training panoramas: PNGs of the input directory in name order, or a
/// seeded synthetic corpus.
pub fn training_corpus(cfg: &RunConfig) -> Result<Vec<ErpImage>> {
    let (n, m) = (cfg.height, cfg.width());
    match &cfg.paths.input_dir {
        Some(dir) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::data(format!("no PNG panoramas in {}", dir.display())));
            }
            files.par_iter().map(|p| load_sized(p, n, m)).collect()
        }
        None => synth_corpus(n, cfg.corpus_size, derive_seed(cfg.seed, 0, "corpus"), &SynthParams::default()),
    }
}

/// The panorama to outpaint and its 2× reference. A synthetic target is
/// rendered at 2× and box-downscaled; a file input is compared against the
/// reference file when given, else against its own upscale.
pub fn target_images(cfg: &RunConfig) -> Result<(ErpImage, ErpImage)> {
    let (n, m) = (cfg.height, cfg.width());
    match &cfg.paths.input {
        Some(p) => {
            let input = load_sized(p, n, m)?;
            let reference = match &cfg.paths.reference {
                Some(r) => load_sized(r, 2 * n, 2 * m)?,
                None => upscale2x(&input),
            };
            Ok((input, reference))
        }
        None => {
            let hr = synth_panorama(2 * n, derive_seed(cfg.seed, 0, "target"), &SynthParams::default())?;
            Ok((downscale2x(&hr)?, hr))
        }
    }
}

/// Given-region mask at input resolution: the mask file when set, else the
/// configured view.
pub fn given_mask(cfg: &RunConfig) -> Result<MaskMap> {
    let (n, m) = (cfg.height, cfg.width());
    match &cfg.paths.mask {
        Some(p) => {
            let mask = MaskMap::load_png(p)?;
            if mask.height() != n || mask.width() != m {
                return Err(Error::data(format!(
                    "mask {} is {}x{}, expected {m}x{n}",
                    p.display(),
                    mask.width(),
                    mask.height()
                )));
            }
            Ok(mask)
        }
        None => cfg.view.mask(n, m),
    }
}

fn harmonics(cfg: &RunConfig) -> Result<ShMap> {
    sh_map(cfg.height, cfg.width(), cfg.sh_degree)
}

fn encode_all(images: &[ErpImage], cfg: &RunConfig, sh: &ShMap) -> Result<Vec<FeatureGrid>> {
    images.par_iter().map(|im| patch_encode(im, cfg.patch, Some(sh))).collect()
}

fn corpus_label(cfg: &RunConfig) -> String {
    match &cfg.paths.input_dir {
        Some(d) => d.display().to_string(),
        None => format!("synthetic:seed={},count={},height={}", cfg.seed, cfg.corpus_size, cfg.height),
    }
}

pub fn fit_codebook_on(cfg: &RunConfig, corpus: &[ErpImage]) -> Result<Codebook> {
    let sh = harmonics(cfg)?;
    let feats = encode_all(corpus, cfg, &sh)?;
    let mut cb = fit_codebook(
        &feats,
        &FitConfig {
            k: cfg.codebook_size,
            init_mode: cfg.init_mode,
            seed: derive_seed(cfg.seed, 0, "codebook"),
            iters: cfg.kmeans_iters,
        },
    )?;
    cb.set_corpus(corpus_label(cfg));
    Ok(cb)
}

fn check_codebook(cfg: &RunConfig, cb: &Codebook) -> Result<()> {
    if cb.meta().patch != cfg.patch || cb.meta().degree != Some(cfg.sh_degree) {
        return Err(Error::data(format!(
            "codebook (f = {}, degree {:?}) does not match the run (f = {}, degree {})",
            cb.meta().patch,
            cb.meta().degree.map(|d| d.get()),
            cfg.patch,
            cfg.sh_degree.get()
        )));
    }
    Ok(())
}

/// Codes of every corpus panorama.
fn corpus_codes(cfg: &RunConfig, corpus: &[ErpImage], cb: &Codebook) -> Result<Vec<CodeGrid>> {
    let sh = harmonics(cfg)?;
    encode_all(corpus, cfg, &sh)?
        .iter()
        .map(|g| quantize(g, cb).map(|(codes, _)| codes))
        .collect()
}

/// Sequence model over the corpus codes, conditioned on the latent
/// footprint of the run's given region.
pub fn fit_model_on(cfg: &RunConfig, corpus: &[ErpImage], cb: &Codebook, known: &KnownGrid) -> Result<NGramModel> {
    let grids = corpus_codes(cfg, corpus, cb)?;
    let conds = vec![known.clone(); grids.len()];
    fit_ngram(&grids, &conds, cfg.ngram_order, cb.k(), cfg.alpha)
}

/// Lazily generated training corpus shared between stages.
struct Corpus<'a> {
    cfg: &'a RunConfig,
    images: Option<Vec<ErpImage>>,
}

impl<'a> Corpus<'a> {
    fn new(cfg: &'a RunConfig) -> Self {
        Self { cfg, images: None }
    }

    fn get(&mut self) -> Result<&[ErpImage]> {
        if self.images.is_none() {
            self.images = Some(training_corpus(self.cfg).stage("corpus")?);
        }
        Ok(self.images.as_deref().unwrap_or_default())
    }
}

fn obtain_codebook(run: &mut Run, corpus: &mut Corpus) -> Result<Codebook> {
    let cfg = run.cfg.clone();
    let cb = match &cfg.paths.codebook {
        Some(p) => Codebook::load(p).stage("codebook")?,
        None => {
            let cb = fit_codebook_on(&cfg, corpus.get()?).stage("codebook")?;
            let out = run.artifact("codebook.json")?;
            cb.save(out).stage("codebook")?;
            cb
        }
    };
    check_codebook(&cfg, &cb).stage("codebook")?;
    Ok(cb)
}

fn obtain_model(run: &mut Run, corpus: &mut Corpus, cb: &Codebook, known: &KnownGrid) -> Result<NGramModel> {
    let cfg = run.cfg.clone();
    let model = match &cfg.paths.model {
        Some(p) => NGramModel::load(p).stage("model")?,
        None => {
            let m = fit_model_on(&cfg, corpus.get()?, cb, known).stage("model")?;
            let out = run.artifact("model.ngrm")?;
            m.save(out).stage("model")?;
            m
        }
    };
    if model.vocab() != cb.k() {
        return Err(Error::data(format!(
            "sequence model vocabulary {} does not match codebook size {}",
            model.vocab(),
            cb.k()
        ))
        .in_stage("model"));
    }
    Ok(model)
}

/// Writes the synthetic (or loaded) training corpus as PNGs.
pub fn cmd_synth(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let corpus = training_corpus(cfg).stage("corpus")?;
    for (i, img) in corpus.iter().enumerate() {
        let p = run.artifact(&format!("corpus/pano_{i:04}.png"))?;
        img.save_png(p).stage("corpus")?;
    }
    run.note("images", corpus.len());
    run.finish("synth")
}

/// Writes the per-pixel harmonic map (`SHMP` binary).
pub fn cmd_shmap(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let sh = harmonics(cfg).stage("shmap")?;
    sh.save(run.artifact("shmap.bin")?).stage("shmap")?;
    run.note("channels", sh.channels());
    run.finish("shmap")
}

/// Writes the given-region mask at input and latent resolution.
pub fn cmd_mask(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let mask = given_mask(cfg).stage("mask")?;
    mask.save_png(run.artifact("mask.png")?).stage("mask")?;
    let known = latent_mask(&mask, cfg.patch).stage("mask")?;
    run.note("given_pixels", mask.count_given());
    run.note("known_cells", known.count_known());
    run.finish("mask")
}

pub fn cmd_fit_codebook(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let corpus = training_corpus(cfg).stage("corpus")?;
    let cb = fit_codebook_on(cfg, &corpus).stage("codebook")?;
    cb.save(run.artifact("codebook.json")?).stage("codebook")?;
    let grids = corpus_codes(cfg, &corpus, &cb).stage("codebook")?;
    let usage = codebook_usage(&grids, cb.k()).stage("codebook")?;
    run.note("codebook_usage", usage);
    run.finish("fit-codebook")
}

/// Reconstructs the input (or every corpus panorama) through the codebook.
pub fn cmd_reconstruct(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let mut corpus = Corpus::new(cfg);
    let cb = obtain_codebook(&mut run, &mut corpus)?;
    let images: Vec<ErpImage> = match &cfg.paths.input {
        Some(p) => vec![load_sized(p, cfg.height, cfg.width()).stage("input")?],
        None => corpus.get()?.to_vec(),
    };
    let csv = run.fresh_artifact("metrics.csv")?;
    let mut rows = Vec::new();
    let mut total = 0.0;
    for (i, img) in images.iter().enumerate() {
        let (rec, score) = reconstruct(img, &cb, cfg.patch).stage("reconstruct")?;
        rec.save_png(run.artifact(&format!("recon/recon_{i:04}.png"))?).stage("reconstruct")?;
        rows.push((format!("{i:04}"), "ws_psnr".to_string(), score));
        total += score;
    }
    append_metrics_csv(csv, &cfg.run_id(), &rows).stage("metrics")?;
    run.note("mean_ws_psnr", total / images.len() as f64);
    run.finish("reconstruct")
}

pub fn cmd_fit_model(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let mut corpus = Corpus::new(cfg);
    let cb = obtain_codebook(&mut run, &mut corpus)?;
    let known = latent_mask(&given_mask(cfg).stage("mask")?, cfg.patch).stage("mask")?;
    let model = fit_model_on(cfg, corpus.get()?, &cb, &known).stage("model")?;
    model.save(run.artifact("model.ngrm")?).stage("model")?;
    run.note("tables", model.table_count());
    run.finish("fit-model")
}

/// Intermediate results of the first stage for one target panorama.
struct Outpainted {
    input: ErpImage,
    reference: ErpImage,
    mask: MaskMap,
    masked: ErpImage,
    samples: Vec<CodeGrid>,
    decoded: Vec<ErpImage>,
}

fn outpaint_stage(run: &mut Run) -> Result<Outpainted> {
    let cfg = run.cfg.clone();
    let mut corpus = Corpus::new(&cfg);
    let cb = obtain_codebook(run, &mut corpus)?;
    let (input, reference) = target_images(&cfg).stage("input")?;

    let mask = given_mask(&cfg).stage("mask")?;
    let masked = apply_mask(&input, &mask, MASK_FILL).stage("mask")?;
    mask.save_png(run.artifact("mask.png")?).stage("mask")?;
    masked.save_png(run.artifact("masked.png")?).stage("mask")?;

    let sh = harmonics(&cfg).stage("encode")?;
    let z = patch_encode(&masked, cfg.patch, Some(&sh)).stage("encode")?;
    let (codes, _) = quantize(&z, &cb).stage("quantize")?;
    let known = latent_mask(&mask, cfg.patch).stage("latent_mask")?;
    codes.save_png(run.artifact("codes_masked.png")?).stage("quantize")?;

    let model = obtain_model(run, &mut corpus, &cb, &known)?;
    let task = OutpaintTask {
        grid: codes,
        known,
        pad_w: cfg.pad_w,
        temperature: cfg.temperature,
        seed: derive_seed(cfg.seed, 0, "outpaint"),
    };
    let samples = diverse_outpaint(&model, &task, cfg.samples).stage("outpaint")?;
    let mut decoded = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        s.save_png(run.artifact(&format!("samples/sample_{i:02}_codes.png"))?)
            .stage("outpaint")?;
        let zq = lookup(s, &cb, cfg.patch, sh.channels()).stage("decode")?;
        let img = patch_decode(&zq, cfg.patch).stage("decode")?;
        img.save_png(run.artifact(&format!("samples/sample_{i:02}_coarse.png"))?)
            .stage("decode")?;
        decoded.push(img);
    }
    run.note("known_cells", task.known.count_known());
    Ok(Outpainted {
        input,
        reference,
        mask,
        masked,
        samples,
        decoded,
    })
}

/// Completes the masked target with the sequence model; writes code grids
/// and decoded panoramas per sample.
pub fn cmd_outpaint(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let out = outpaint_stage(&mut run)?;
    run.note("samples", out.samples.len());
    run.finish("outpaint")
}

fn comparison_pair(cfg: &RunConfig) -> Result<(ErpImage, ErpImage)> {
    let (a, b) = match (&cfg.paths.input, &cfg.paths.reference) {
        (Some(a), Some(b)) => (ErpImage::load_png(a)?, ErpImage::load_png(b)?),
        _ => return Err(Error::Config("comparison needs both input and reference paths".into())),
    };
    if !a.same_dims(&b) {
        return Err(Error::data(format!(
            "cannot compare {}x{} with {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok((a, b))
}

/// Radial spectrum comparison of `input` (a) against `reference` (b).
pub fn cmd_freq_report(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let (a, b) = comparison_pair(cfg).stage("input")?;
    let report = freq_gap(&a, &b, cfg.freq_bins).stage("freq")?;
    let (csv, js) = (run.artifact("freq.csv")?, run.artifact("freq.json")?);
    report.save(csv, js).stage("freq")?;
    save_amplitude_png(&a, run.artifact("amplitude_a.png")?).stage("freq")?;
    save_amplitude_png(&b, run.artifact("amplitude_b.png")?).stage("freq")?;
    run.note("hf_mass_a", report.hf_mass_a);
    run.note("hf_mass_b", report.hf_mass_b);
    run.finish("freq-report")
}

/// PSNR and WS-PSNR of `input` against `reference`.
pub fn cmd_metrics(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let (a, b) = comparison_pair(cfg).stage("input")?;
    let p = psnr(&a, &b).stage("metrics")?;
    let w = ws_psnr(&a, &b).stage("metrics")?;
    let csv = run.fresh_artifact("metrics.csv")?;
    let id = cfg
        .paths
        .input
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or_else(|| "input".to_string(), |s| s.to_string_lossy().into_owned());
    append_metrics_csv(csv, &cfg.run_id(), &[(id.clone(), "psnr".into(), p), (id, "ws_psnr".into(), w)])
        .stage("metrics")?;
    run.note("psnr", p);
    run.note("ws_psnr", w);
    run.finish("metrics")
}

/// Full chain: mask, encode, quantize, circular outpainting of several
/// samples, decode, 2× upscale, feathered blend with the given region,
/// then metrics and a frequency report against the 2× reference.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    let mut run = Run::open(cfg)?;
    let out = outpaint_stage(&mut run)?;

    let mask_hr = out.mask.upscale2x();
    let masked_hr = upscale2x(&out.masked);
    let csv = run.fresh_artifact("metrics.csv")?;
    let mut rows = Vec::new();
    let mut per_sample = Vec::new();
    let ref_hf = hf_mass(&out.reference).stage("metrics")?;
    for (i, coarse) in out.decoded.iter().enumerate() {
        let gen_up = upscale2x(coarse);
        let fin = blend_refine(&gen_up, &masked_hr, &mask_hr, cfg.feather).stage("refine")?;
        fin.save_png(run.artifact(&format!("final/final_{i:02}.png"))?).stage("refine")?;

        let id = format!("sample_{i:02}");
        let w = ws_psnr(&fin, &out.reference).stage("metrics")?;
        let p = psnr(&fin, &out.reference).stage("metrics")?;
        let hf_final = hf_mass(&fin).stage("metrics")?;
        let hf_gen = hf_mass(&gen_up).stage("metrics")?;
        rows.push((id.clone(), "ws_psnr".to_string(), w));
        rows.push((id.clone(), "psnr".to_string(), p));
        rows.push((id.clone(), "hf_mass".to_string(), hf_final));
        rows.push((id.clone(), "hf_mass_unblended".to_string(), hf_gen));
        per_sample.push(json!({"ws_psnr": w, "psnr": p, "hf_mass": hf_final, "hf_mass_unblended": hf_gen}));

        if i == 0 {
            let report = freq_gap(&fin, &out.reference, cfg.freq_bins).stage("freq")?;
            let (c, j) = (run.artifact("freq.csv")?, run.artifact("freq.json")?);
            report.save(c, j).stage("freq")?;
            save_amplitude_png(&fin, run.artifact("amplitude_final.png")?).stage("freq")?;
            save_amplitude_png(&out.reference, run.artifact("amplitude_reference.png")?).stage("freq")?;
        }
    }
    rows.push(("reference".into(), "hf_mass".into(), ref_hf));
    append_metrics_csv(csv, &cfg.run_id(), &rows).stage("metrics")?;
    out.input.save_png(run.artifact("input.png")?).stage("input")?;
    run.note("reference_hf_mass", ref_hf);
    run.note("samples", Value::Array(per_sample));
    run.finish("pipeline")
}

/// Names accepted by [`run_command`].
pub const COMMANDS: [&str; 10] = [
    "synth",
    "shmap",
    "mask",
    "fit-codebook",
    "reconstruct",
    "fit-model",
    "outpaint",
    "freq-report",
    "metrics",
    "pipeline",
];

pub fn run_command(name: &str, cfg: &RunConfig) -> Result<RunReport> {
    match name {
        "synth" => cmd_synth(cfg),
        "shmap" => cmd_shmap(cfg),
        "mask" => cmd_mask(cfg),
        "fit-codebook" => cmd_fit_codebook(cfg),
        "reconstruct" => cmd_reconstruct(cfg),
        "fit-model" => cmd_fit_model(cfg),
        "outpaint" => cmd_outpaint(cfg),
        "freq-report" => cmd_freq_report(cfg),
        "metrics" => cmd_metrics(cfg),
        "pipeline" => cmd_pipeline(cfg),
        other => Err(Error::Config(format!("unknown command {other:?}"))),
    }
}
