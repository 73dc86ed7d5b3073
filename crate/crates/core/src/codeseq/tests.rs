use std::collections::HashMap;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::sphgeo::{cube_face_mask, CubeFace};

fn random_grid(h: usize, w: usize, k: u32, seed: u64) -> CodeGrid {
    let mut r = rng::stream(seed);
    CodeGrid::new(h, w, (0..h * w).map(|_| r.gen_range(0..k)).collect()).unwrap()
}

fn random_known(h: usize, w: usize, seed: u64) -> KnownGrid {
    let mut r = rng::stream(seed);
    KnownGrid::new(h, w, (0..h * w).map(|_| r.gen_bool(0.5)).collect()).unwrap()
}

/// Diagonal stripes: each symbol is mostly followed by its successor.
fn stripes(h: usize, w: usize, k: u32, offset: u32) -> CodeGrid {
    CodeGrid::new(
        h,
        w,
        (0..h * w).map(|t| ((t % w + t / w) as u32 + offset) % k).collect(),
    )
    .unwrap()
}

#[test]
fn latent_mask_trivial_cases() {
    let all = MaskMap::filled(32, 64, true).unwrap();
    assert_eq!(latent_mask(&all, 8).unwrap(), KnownGrid::filled(4, 8, true));
    let none = MaskMap::filled(32, 64, false).unwrap();
    assert_eq!(latent_mask(&none, 8).unwrap().count_known(), 0);
    assert!(latent_mask(&all, 3).is_err());
    assert!(latent_mask(&all, 0).is_err());
}

#[test]
fn latent_mask_half_block_is_known() {
    let m = MaskMap::from_fn(4, 8, |i, j| (i % 2 == 0) || (j >= 2 && i < 2)).unwrap();
    let g = latent_mask(&m, 2).unwrap();
    assert!(g.flags().iter().all(|&k| k));
    let quarter = MaskMap::from_fn(4, 8, |i, j| i % 2 == 0 && j % 2 == 0).unwrap();
    assert_eq!(latent_mask(&quarter, 2).unwrap().count_known(), 0);
}

#[test]
fn latent_mask_front_face_matches_block_count() {
    let (n, f) = (256, 16);
    let m = cube_face_mask(CubeFace::Front, n, 2 * n).unwrap();
    let g = latent_mask(&m, f).unwrap();
    let data = m.data();
    for r in 0..n / f {
        for c in 0..2 * n / f {
            let mut count = 0;
            for dy in 0..f {
                let row = &data[(r * f + dy) * 2 * n + c * f..(r * f + dy) * 2 * n + (c + 1) * f];
                count += row.iter().filter(|&&b| b).count();
            }
            assert_eq!(g.get(r, c), count * 2 >= f * f, "cell ({r}, {c})");
        }
    }
    assert!(g.count_known() > 0);
}

#[test]
fn single_symbol_corpus_concentrates_mass() {
    let (k, alpha) = (8, 1e-3);
    let grid = CodeGrid::filled(6, 12, 5);
    let known = KnownGrid::filled(6, 12, false);
    let m = fit_ngram(&[grid], &[known], 2, k, alpha).unwrap();
    let cond = Cond::of(false, 0, 6);
    // rows 0 and 1 fall in the top band; the very first cell has no context
    let count = 23.0;
    let p = m.predict_dist(&[5], cond);
    let expect = (count + alpha) / (count + k as f64 * alpha);
    assert!((p[5] - expect).abs() < 1e-15);
    assert!(p[5] > 0.999);
    assert!((p[0] - alpha / (count + k as f64 * alpha)).abs() < 1e-15);
}

#[test]
fn large_alpha_tends_to_uniform() {
    let g = random_grid(4, 8, 6, 1);
    let kn = KnownGrid::filled(4, 8, true);
    let m = fit_ngram(&[g], &[kn], 3, 6, 1e9).unwrap();
    for &p in &m.predict_dist(&[1, 2], Cond::of(true, 0, 4)) {
        assert!((p - 1.0 / 6.0).abs() < 1e-7);
    }
}

#[test]
fn fitting_is_deterministic() {
    let corpus: Vec<_> = (0..3).map(|s| random_grid(4, 8, 10, s)).collect();
    let conds: Vec<_> = (0..3).map(|s| random_known(4, 8, 100 + s)).collect();
    let a = fit_ngram(&corpus, &conds, 3, 10, 0.5).unwrap();
    let b = fit_ngram(&corpus.clone(), &conds.clone(), 3, 10, 0.5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn fit_errors() {
    assert!(matches!(fit_ngram(&[], &[], 2, 4, 1.0), Err(Error::Argument(_))));
    let g = random_grid(2, 4, 4, 0);
    let kn = KnownGrid::filled(2, 4, true);
    assert!(fit_ngram(&[g.clone()], &[], 2, 4, 1.0).is_err());
    assert!(fit_ngram(&[g.clone()], &[kn.clone()], 0, 4, 1.0).is_err());
    assert!(fit_ngram(&[g.clone()], &[kn.clone()], 2, 4, 0.0).is_err());
    let big = CodeGrid::filled(2, 4, 3);
    assert!(matches!(fit_ngram(&[big], &[kn.clone()], 2, 3, 1.0), Err(Error::Data(_))));
    assert!(fit_ngram(&[g], &[KnownGrid::filled(2, 3, true)], 2, 4, 1.0).is_err());
}

#[test]
fn empty_model_is_uniform() {
    let m = NGramModel::empty(3, 7, 0.1).unwrap();
    assert_eq!(m.predict_dist(&[1, 2], Cond::of(false, 0, 3)), vec![1.0 / 7.0; 7]);
}

#[test]
fn distributions_normalize() {
    let corpus: Vec<_> = (0..4).map(|s| random_grid(6, 12, 16, s)).collect();
    let conds: Vec<_> = (0..4).map(|s| random_known(6, 12, 50 + s)).collect();
    let m = fit_ngram(&corpus, &conds, 3, 16, 0.2).unwrap();
    let mut r = rng::stream(9);
    for _ in 0..1000 {
        let len = r.gen_range(0..4);
        let ctx: Vec<u32> = (0..len).map(|_| r.gen_range(0..16)).collect();
        let cond = Cond::of(r.gen_bool(0.5), r.gen_range(0..6), 6);
        let s: f64 = m.predict_dist(&ctx, cond).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}

#[test]
fn hand_built_table() {
    let mut m = NGramModel::empty(2, 4, 0.5).unwrap();
    let c = Cond { known: false, band: 1 };
    for next in [2, 2, 2, 0] {
        m.observe(&[1], c, next).unwrap();
    }
    assert_eq!(m.count(&[1], c, 2), 3);
    assert_eq!(m.count(&[], c, 2), 3);
    let p = m.predict_dist(&[1], c);
    assert_eq!(p, vec![1.5 / 6.0, 0.5 / 6.0, 3.5 / 6.0, 0.5 / 6.0]);
    // unseen context backs off to the unigram table of the same bucket
    assert_eq!(m.predict_dist(&[3], c), p);
    // only the last n − 1 symbols matter
    assert_eq!(m.predict_dist(&[0, 0, 1], c), p);
    assert_eq!(m.predict_dist(&[1], Cond { known: true, band: 1 }), vec![0.25; 4]);
    assert!(m.observe(&[4], c, 0).is_err());
}

#[test]
fn longer_context_preferred_when_seen() {
    let mut m = NGramModel::empty(3, 3, 1.0).unwrap();
    let c = Cond { known: true, band: 0 };
    m.observe(&[0, 1], c, 2).unwrap();
    m.observe(&[2, 1], c, 0).unwrap();
    let p = m.predict_dist(&[0, 1], c);
    assert_eq!(p, vec![0.25, 0.25, 0.5]);
    let q = m.predict_dist(&[1, 1], c);
    assert_eq!(q, vec![2.0 / 5.0, 1.0 / 5.0, 2.0 / 5.0]);
}

/// Position-by-position log-sum over an independently counted table.
fn nll_oracle(corpus: &[(CodeGrid, KnownGrid)], n: usize, k: usize, alpha: f64, grid: &CodeGrid, known: &KnownGrid) -> f64 {
    let mut counts: HashMap<(Vec<u32>, bool, usize), HashMap<u32, f64>> = HashMap::new();
    for (g, kn) in corpus {
        let s = g.indices();
        for t in 0..s.len() {
            let (r, c) = (t / g.w(), t % g.w());
            let band = (3 * r / g.h()).min(2);
            let lo = t.saturating_sub(n - 1);
            for start in lo..=t {
                *counts
                    .entry((s[start..t].to_vec(), kn.get(r, c), band))
                    .or_default()
                    .entry(s[t])
                    .or_default() += 1.0;
            }
        }
    }
    let s = grid.indices();
    let mut total = 0.0;
    for t in 0..s.len() {
        let (r, c) = (t / grid.w(), t % grid.w());
        let band = (3 * r / grid.h()).min(2);
        let lo = t.saturating_sub(n - 1);
        let mut p = 1.0 / k as f64;
        for start in lo..=t {
            if let Some(tab) = counts.get(&(s[start..t].to_vec(), known.get(r, c), band)) {
                let sum: f64 = tab.values().sum();
                p = (tab.get(&s[t]).copied().unwrap_or(0.0) + alpha) / (sum + k as f64 * alpha);
                break;
            }
        }
        total -= p.ln();
    }
    total / s.len() as f64
}

#[test]
fn nll_matches_oracle() {
    let corpus: Vec<_> = (0..5)
        .map(|s| (random_grid(6, 12, 5, s), random_known(6, 12, 20 + s)))
        .collect();
    let (g, kn): (Vec<_>, Vec<_>) = corpus.iter().cloned().unzip();
    for n in 1..=4 {
        let m = fit_ngram(&g, &kn, n, 5, 0.3).unwrap();
        let probe = random_grid(6, 12, 5, 77);
        let pk = random_known(6, 12, 78);
        let got = m.nll(&probe, &pk).unwrap();
        let want = nll_oracle(&corpus, n, 5, 0.3, &probe, &pk);
        assert!((got - want).abs() < 1e-12, "n = {n}: {got} vs {want}");
        let train: f64 = g.iter().zip(&kn).map(|(a, b)| m.nll(a, b).unwrap()).sum::<f64>() / 5.0;
        assert!(train <= (5f64).ln(), "n = {n}: {train}");
    }
}

#[test]
fn nll_limits() {
    let m = NGramModel::empty(2, 9, 1.0).unwrap();
    let g = random_grid(3, 6, 9, 4);
    let kn = KnownGrid::filled(3, 6, false);
    assert_eq!(m.nll(&g, &kn).unwrap(), (9f64).ln());
    let flat = CodeGrid::filled(3, 6, 2);
    let det = fit_ngram(&[flat.clone()], &[kn.clone()], 2, 9, 1e-12).unwrap();
    let v = det.nll(&flat, &kn).unwrap();
    assert!(v > 0.0 && v < 1e-9);
    assert!(m.nll(&CodeGrid::filled(3, 6, 9), &kn).is_err());
}

#[test]
fn binary_round_trip_and_layout() {
    let corpus: Vec<_> = (0..2).map(|s| random_grid(3, 6, 6, s)).collect();
    let conds: Vec<_> = (0..2).map(|s| random_known(3, 6, 30 + s)).collect();
    let m = fit_ngram(&corpus, &conds, 3, 6, 0.25).unwrap();
    let bytes = m.to_bytes();
    assert_eq!(&bytes[0..4], b"NGRM");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 6);
    assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 0.25);
    let back = NGramModel::from_bytes(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_bytes(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ngrm");
    m.save(&p).unwrap();
    assert_eq!(NGramModel::load(&p).unwrap(), m);

    assert!(matches!(NGramModel::from_bytes(b"NOPE"), Err(Error::Data(_))));
    assert!(matches!(NGramModel::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Data(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(NGramModel::from_bytes(&extra).is_err());
    assert!(matches!(NGramModel::load(dir.path().join("missing")), Err(Error::Io { .. })));
}

#[test]
fn wrap_extend_copies_opposite_columns() {
    let g = CodeGrid::new(2, 4, vec![0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
    let kn = KnownGrid::new(2, 4, vec![true, false, false, true, false, false, true, true]).unwrap();
    let (e, ek) = wrap_extend(&g, &kn, 1).unwrap();
    assert_eq!(e.indices(), &[3, 0, 1, 2, 3, 0, 7, 4, 5, 6, 7, 4]);
    assert_eq!(ek.get(0, 0), true);
    assert_eq!(ek.get(1, 5), false);
    let (same, _) = wrap_extend(&g, &kn, 0).unwrap();
    assert_eq!(same, g);
}

fn stripe_model(k: u32, n: usize) -> NGramModel {
    // the flat grid skews the unigram counts so no level of the backoff ties
    let mut corpus: Vec<_> = (0..k).map(|o| stripes(8, 16, k, o)).collect();
    corpus.push(CodeGrid::filled(8, 16, 0));
    let conds = vec![KnownGrid::filled(8, 16, false); corpus.len()];
    fit_ngram(&corpus, &conds, n, k as usize, 1e-3).unwrap()
}

#[test]
fn all_known_is_identity() {
    let m = stripe_model(5, 2);
    let g = random_grid(8, 16, 5, 3);
    let task = OutpaintTask {
        grid: g.clone(),
        known: KnownGrid::filled(8, 16, true),
        pad_w: 2,
        temperature: 1.0,
        seed: 1,
    };
    assert_eq!(circular_outpaint(&m, &task).unwrap(), g);
}

/// Independent greedy decode over the wrap-extended grid.
fn greedy_oracle(m: &NGramModel, grid: &CodeGrid, known: &KnownGrid, pad: usize) -> CodeGrid {
    let (h, w) = (grid.h(), grid.w());
    let ew = w + 2 * pad;
    let src = |c: usize| (c + w - pad) % w;
    let mut v: Vec<Vec<u32>> = (0..h).map(|r| (0..ew).map(|c| grid.get(r, src(c))).collect()).collect();
    let mut flat: Vec<u32> = Vec::new();
    for r in 0..h {
        for c in 0..ew {
            if !known.get(r, src(c)) {
                let ctx = &flat[flat.len().saturating_sub(m.order() - 1)..];
                let p = m.predict_dist(ctx, Cond::of(false, r, h));
                let best = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let arg: Vec<usize> = (0..p.len()).filter(|&i| p[i] == best).collect();
                assert_eq!(arg.len(), 1, "greedy oracle needs a unique maximum");
                v[r][c] = arg[0] as u32;
            }
            flat.push(v[r][c]);
        }
        for c in 0..pad {
            v[r][c] = v[r][c + w];
            v[r][pad + w + c] = v[r][pad + c];
        }
        let n = flat.len();
        flat[n - ew..].copy_from_slice(&v[r]);
    }
    CodeGrid::new(h, w, v.iter().flat_map(|row| row[pad..pad + w].to_vec()).collect()).unwrap()
}

#[test]
fn low_temperature_matches_greedy_oracle() {
    let m = stripe_model(7, 3);
    let g = stripes(8, 16, 7, 2);
    let known = KnownGrid::new(8, 16, (0..128).map(|t| (t % 16) >= 5 && (t % 16) < 11).collect()).unwrap();
    for pad in [0, 1, 2, 4] {
        let task = OutpaintTask {
            grid: g.clone(),
            known: known.clone(),
            pad_w: pad,
            temperature: 1e-9,
            seed: 5,
        };
        assert_eq!(circular_outpaint(&m, &task).unwrap(), greedy_oracle(&m, &g, &known, pad), "pad {pad}");
    }
}

fn noisy_task(seed: u64) -> (NGramModel, OutpaintTask) {
    let corpus: Vec<_> = (0..4).map(|s| random_grid(8, 16, 12, s)).collect();
    let conds: Vec<_> = (0..4).map(|s| random_known(8, 16, 40 + s)).collect();
    let m = fit_ngram(&corpus, &conds, 2, 12, 1.0).unwrap();
    let task = OutpaintTask {
        grid: random_grid(8, 16, 12, 99),
        known: random_known(8, 16, 98),
        pad_w: 1,
        temperature: 1.0,
        seed,
    };
    (m, task)
}

#[test]
fn seeds_reproduce_and_diversify() {
    let (m, task) = noisy_task(3);
    let a = circular_outpaint(&m, &task).unwrap();
    assert_eq!(a, circular_outpaint(&m, &task).unwrap());
    let differing = (0..20u64)
        .filter(|&s| circular_outpaint(&m, &OutpaintTask { seed: 1000 + s, ..task.clone() }).unwrap() != a)
        .count();
    assert!(differing >= 19);
}

#[test]
fn task_validation() {
    let (m, task) = noisy_task(0);
    for t in [0.0, -1.0, f64::NAN] {
        let bad = OutpaintTask { temperature: t, ..task.clone() };
        assert!(matches!(circular_outpaint(&m, &bad), Err(Error::Argument(_))));
    }
    let wide = OutpaintTask { pad_w: 5, ..task.clone() };
    assert!(circular_outpaint(&m, &wide).is_err());
    let mismatched = OutpaintTask {
        known: KnownGrid::filled(8, 15, true),
        ..task.clone()
    };
    assert!(circular_outpaint(&m, &mismatched).is_err());
    let mut g = task.grid.clone();
    g.set(0, 0, 12);
    let bad_index = OutpaintTask {
        grid: g,
        known: KnownGrid::filled(8, 16, true),
        ..task
    };
    assert!(matches!(circular_outpaint(&m, &bad_index), Err(Error::Data(_))));
}

#[test]
fn diverse_samples() {
    let (m, task) = noisy_task(11);
    let one = diverse_outpaint(&m, &task, 1).unwrap();
    let seeded = OutpaintTask {
        seed: rng::sample_seed(11, 0),
        ..task.clone()
    };
    assert_eq!(one, vec![circular_outpaint(&m, &seeded).unwrap()]);
    assert!(diverse_outpaint(&m, &task, 0).is_err());

    let many = diverse_outpaint(&m, &task, 21).unwrap();
    let unknown: Vec<usize> = (0..128).filter(|&t| !task.known.flags()[t]).collect();
    let mut hamming = 0.0;
    for i in 0..20 {
        let (a, b) = (&many[i], &many[i + 1]);
        for t in 0..128 {
            if task.known.flags()[t] {
                assert_eq!(a.indices()[t], task.grid.indices()[t]);
                assert_eq!(a.indices()[t], b.indices()[t]);
            }
        }
        hamming += unknown.iter().filter(|&&t| a.indices()[t] != b.indices()[t]).count() as f64;
    }
    assert!(hamming / 20.0 > 0.0);
}

#[test]
fn tempering() {
    let p = [0.1, 0.2, 0.7];
    assert_eq!(temper(&p, 1.0).iter().map(|x| (x * 1e12).round()).collect::<Vec<_>>(), vec![1e11, 2e11, 7e11]);
    let sharp = temper(&p, 1e-6);
    assert_eq!(sharp, vec![0.0, 0.0, 1.0]);
    let flat = temper(&p, 1e6);
    assert!(flat.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn known_cells_never_change(seed in any::<u64>(), pad in 0usize..=4, n in 1usize..4) {
        let corpus: Vec<_> = (0..2).map(|s| random_grid(8, 16, 9, seed ^ s)).collect();
        let conds: Vec<_> = (0..2).map(|s| random_known(8, 16, seed.wrapping_add(s))).collect();
        let m = fit_ngram(&corpus, &conds, n, 9, 0.5).unwrap();
        let grid = random_grid(8, 16, 9, seed.wrapping_mul(3));
        let known = random_known(8, 16, seed.wrapping_mul(5));
        let task = OutpaintTask { grid: grid.clone(), known: known.clone(), pad_w: pad, temperature: 0.7, seed };
        let out = circular_outpaint(&m, &task).unwrap();
        for t in 0..128 {
            if known.flags()[t] {
                prop_assert_eq!(out.indices()[t], grid.indices()[t]);
            }
            prop_assert!(out.indices()[t] < 9);
        }
    }

    #[test]
    fn model_file_round_trips(seed in any::<u64>(), n in 1usize..5) {
        let g = random_grid(4, 8, 11, seed);
        let k = random_known(4, 8, !seed);
        let m = fit_ngram(&[g], &[k], n, 11, 0.75).unwrap();
        prop_assert_eq!(NGramModel::from_bytes(&m.to_bytes()).unwrap(), m);
    }
}
