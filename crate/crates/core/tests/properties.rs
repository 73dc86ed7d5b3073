//! Statistical properties of the outpainting chain on the synthetic corpus.

use panosphere_core::codeseq::{circular_outpaint, diverse_outpaint, fit_ngram, latent_mask, KnownGrid, OutpaintTask};
use panosphere_core::config::RunConfig;
use panosphere_core::harmonics::{sh_map, ShDegree};
use panosphere_core::pipeline::{fit_codebook_on, fit_model_on, given_mask, target_images, training_corpus, MASK_FILL};
use panosphere_core::quantizer::{fit_codebook, lookup, patch_decode, patch_encode, quantize, CodeGrid, FitConfig, InitMode};
use panosphere_core::refine::{blend_refine, upscale2x};
use panosphere_core::rng::{derive_seed, stream};
use panosphere_core::spectrum::hf_mass;
use panosphere_core::sphgeo::{apply_mask, CubeFace, ViewSpec};
use panosphere_core::synth::{synth_corpus, synth_panorama, SynthParams};
use panosphere_core::ErpImage;
use rand::Rng;

fn seam(img: &ErpImage) -> f64 {
    let (h, w) = (img.height(), img.width());
    let mut s = 0.0;
    for j in 0..h {
        let (a, b) = (img.pixel(w - 1, j), img.pixel(0, j));
        s += (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>();
    }
    s / (3 * h) as f64
}

/// Two-sample Kolmogorov-Smirnov distance.
fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn rotate_known(k: &KnownGrid, shift: i64) -> KnownGrid {
    let (h, w) = (k.h(), k.w());
    let s = shift.rem_euclid(w as i64) as usize;
    let mut flags = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            flags[r * w + (c + s) % w] = k.get(r, c);
        }
    }
    KnownGrid::new(h, w, flags).unwrap()
}

#[test]
fn ks_helper_matches_hand_counts() {
    assert_eq!(ks_distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    assert_eq!(ks_distance(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
    assert!((ks_distance(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5, 4.5, 5.5]) - 0.5).abs() < 1e-12);
}

#[test]
fn rotated_outpainting_keeps_seam_statistics() {
    let (n, f, k, pad) = (128, 16, 64, 1usize);
    let params = SynthParams::default();
    let sh = sh_map(n, 2 * n, ShDegree::new(3).unwrap()).unwrap();
    let train = synth_corpus(n, 60, 21, &params).unwrap();
    let feats: Vec<_> = train.iter().map(|im| patch_encode(im, f, Some(&sh)).unwrap()).collect();
    let cb = fit_codebook(&feats, &FitConfig { k, init_mode: InitMode::Random, seed: 4, iters: 8 }).unwrap();
    let known = latent_mask(&ViewSpec::CubeFace { face: CubeFace::Back }.mask(n, 2 * n).unwrap(), f).unwrap();

    // yaw augmentation makes the counts approximately shift-equivariant
    let mut r = stream(8);
    let (mut grids, mut conds) = (Vec::new(), Vec::new());
    for g in &feats {
        let codes = quantize(g, &cb).unwrap().0;
        for _ in 0..4 {
            let s = r.gen_range(0..codes.w() as i64);
            grids.push(codes.rotate_columns(s));
            conds.push(rotate_known(&known, s));
        }
    }
    let model = fit_ngram(&grids, &conds, 3, k, 0.1).unwrap();

    let shift = 3 * pad as i64;
    let decode = |g: &CodeGrid| patch_decode(&lookup(g, &cb, f, sh.channels()).unwrap(), f).unwrap();
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for s in 0..50u64 {
        let img = synth_panorama(n, derive_seed(5, s, "test"), &params).unwrap();
        let codes = quantize(&patch_encode(&img, f, Some(&sh)).unwrap(), &cb).unwrap().0;
        let task = OutpaintTask { grid: codes.clone(), known: known.clone(), pad_w: pad, temperature: 1.0, seed: s };
        let rotated_input = OutpaintTask {
            grid: codes.rotate_columns(shift),
            known: rotate_known(&known, shift),
            ..task.clone()
        };
        after.push(seam(&decode(&circular_outpaint(&model, &rotated_input).unwrap())));
        before.push(seam(&decode(&circular_outpaint(&model, &task).unwrap().rotate_columns(shift))));
    }
    let d = ks_distance(&before, &after);
    assert!(d < 0.2, "KS distance {d}");
}

#[test]
fn blending_moves_high_frequency_mass_toward_the_target() {
    let base = RunConfig::load(
        None,
        &[("height", "64"), ("patch", "8"), ("codebook_size", "64"), ("corpus_size", "24"), ("seed", "1")]
            .map(|(a, b)| (a.to_string(), b.to_string())),
    )
    .unwrap();
    let corpus = training_corpus(&base).unwrap();
    let cb = fit_codebook_on(&base, &corpus).unwrap();
    let mask = given_mask(&base).unwrap();
    let known = latent_mask(&mask, base.patch).unwrap();
    let model = fit_model_on(&base, &corpus, &cb, &known).unwrap();
    let sh = sh_map(base.height, base.width(), base.sh_degree).unwrap();
    let mask_hr = mask.upscale2x();

    let trials = 50;
    let mut closer = 0;
    for t in 0..trials {
        let cfg = RunConfig { seed: 100 + t, ..base.clone() };
        let (input, reference) = target_images(&cfg).unwrap();
        let masked = apply_mask(&input, &mask, MASK_FILL).unwrap();
        let codes = quantize(&patch_encode(&masked, cfg.patch, Some(&sh)).unwrap(), &cb).unwrap().0;
        let task = OutpaintTask { grid: codes, known: known.clone(), pad_w: 1, temperature: 1.0, seed: t };
        let sample = &diverse_outpaint(&model, &task, 1).unwrap()[0];
        let gen_up = upscale2x(&patch_decode(&lookup(sample, &cb, cfg.patch, sh.channels()).unwrap(), cfg.patch).unwrap());
        let fin = blend_refine(&gen_up, &upscale2x(&masked), &mask_hr, cfg.feather).unwrap();
        let target = hf_mass(&reference).unwrap();
        if (hf_mass(&fin).unwrap() - target).abs() < (hf_mass(&gen_up).unwrap() - target).abs() {
            closer += 1;
        }
    }
    assert!(closer * 10 >= trials * 7, "final closer in {closer}/{trials} trials");
}
