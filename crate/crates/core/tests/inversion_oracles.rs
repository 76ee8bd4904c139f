mod common;

use common::naive_mse;
use makeitso::baselines::{pivotal_tune, BaselineConfig};
use makeitso::editing::{apply_edit, edited_generate, EditBank, EditDirection};
use makeitso::generator::*;
use makeitso::inversion::*;
use makeitso::objectives::{perceptual_loss, FeatureExtractor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn micro(seed: u64) -> GeneratorParams {
    init_toy_generator(seed, &GeneratorConfig::micro()).unwrap()
}

fn perturbed(p: &GeneratorParams, scale: f64) -> GeneratorParams {
    let mut q = p.clone();
    for (k, (name, arr)) in q.iter_mut().enumerate() {
        if ParamGroup::Synthesis.contains(name) {
            arr.data.iter_mut().enumerate().for_each(|(i, v)| *v += scale * ((3 * k + 7 * i) as f64).cos());
        }
    }
    q
}

fn short(iters: usize) -> InversionConfig {
    InversionConfig {
        replay_n: 2,
        ..InversionConfig::for_iters(iters)
    }
}

#[test]
fn ema_matches_closed_form_with_frozen_optimizers() {
    let anchored = micro(1);
    let tuned = perturbed(&anchored, 0.3);
    let target = generate(&anchored, &NoiseVector(vec![0.2; 8])).unwrap();
    let ex = FeatureExtractor::seeded(0, 8);
    let bank = EditBank::empty(anchored.arch_hash());
    for beta in [0.5, 0.9999] {
        for k in [1usize, 4, 10] {
            let cfg = InversionConfig {
                total_iters: k + 1,
                ema_interval: 1,
                ema_beta: beta,
                lr_z: 0.0,
                lr_g: 0.0,
                ..short(k + 1)
            };
            let pair = GeneratorPair::new(anchored.clone(), tuned.clone()).unwrap();
            let r = InversionRun::from_pair(pair, &target, &bank, &cfg, &ex).unwrap().run().unwrap();
            assert_eq!(r.ema_iterations, (1..=k).collect::<Vec<_>>());
            assert!(r.tuned.bit_equal(&tuned));
            let bk = beta.powi(k as i32);
            for (name, o) in r.anchored.iter() {
                let a0 = &anchored.get(name).unwrap().data;
                let t = &tuned.get(name).unwrap().data;
                for i in 0..o.data.len() {
                    let want = bk * a0[i] + (1.0 - bk) * t[i];
                    let err = (o.data[i] - want).abs() / want.abs().max(1e-12);
                    assert!(err <= 1e-7 || o.data[i] == want, "beta {beta} k {k} {name}[{i}]");
                }
            }
        }
    }
}

#[test]
fn presets_record_their_blend_iterations() {
    let p = micro(2);
    let target = generate(&p, &NoiseVector(vec![-0.4; 8])).unwrap();
    let bank = EditBank::empty(p.arch_hash());
    let ex = FeatureExtractor::seeded(0, 8);
    for (cfg, want) in [
        (InversionConfig::base(), vec![100, 200, 300, 400]),
        (InversionConfig::extended(), vec![200, 400, 600, 800]),
    ] {
        let cfg = InversionConfig { replay_n: 1, ..cfg };
        let r = make_it_so_with(&p, &target, &bank, &cfg, &ex).unwrap();
        assert_eq!(r.ema_iterations, want);
        let flagged: Vec<usize> = r.trace.iter().filter(|t| t.ema).map(|t| t.iter).collect();
        assert_eq!(flagged, want);
        let dir = tempfile::tempdir().unwrap();
        write_run_dir(&r, ex.id(), dir.path()).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap().ema_iterations, want);
    }
}

#[test]
fn replay_terms_match_recomputation() {
    let anchored = micro(3);
    let tuned = perturbed(&anchored, 0.05);
    let ex = FeatureExtractor::seeded(1, 8);
    let bank = EditBank::random(&mut ChaCha8Rng::seed_from_u64(2), &anchored, 4, 1.0).unwrap();
    let batch = sample_replay_batch(&anchored, &bank, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let pair = GeneratorPair::new(anchored.clone(), tuned.clone()).unwrap();
    let got = replay_loss(&pair, &batch, &ex).unwrap().terms;

    let n = batch.len() as f64;
    let mut want = [0.0; 4];
    for i in 0..batch.len() {
        // supports: tuned mapping + synthesis vs. anchored image of the stored W+
        let f = generate(&tuned, &batch.z_s[i]).unwrap();
        let o = synthesize(&anchored, &batch.w_plus_s[i]).unwrap();
        want[0] += naive_mse(&f.pixels, &o.pixels) / n;
        want[1] += perceptual_loss(&ex, &f, &o).unwrap() / n;
        let a = &batch.anchors[i];
        let edited = apply_edit(&batch.w_plus_s[i], a, a.default_strength).unwrap();
        let f = synthesize(&tuned, &edited).unwrap();
        let o = synthesize(&anchored, &edited).unwrap();
        want[2] += naive_mse(&f.pixels, &o.pixels) / n;
        want[3] += perceptual_loss(&ex, &f, &o).unwrap() / n;
    }
    let got = [got.support_recon, got.support_perceptual, got.anchor_recon, got.anchor_perceptual];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0), "{g} vs {w}");
        assert!(*g > 0.0);
    }
}

#[test]
fn zero_anchors_double_the_support_loss() {
    let anchored = micro(3);
    let pair = GeneratorPair::new(anchored.clone(), perturbed(&anchored, 0.05)).unwrap();
    let ex = FeatureExtractor::seeded(1, 8);
    let mut batch = sample_replay_batch(&anchored, &EditBank::empty(anchored.arch_hash()), 3, 1.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    batch.anchors = vec![EditDirection::zero("zero", 4, 8); 3];
    let full = replay_loss(&pair, &batch, &ex).unwrap().terms.total();
    let support_only = replay_loss_with(
        &pair,
        &batch,
        &ex,
        ReplayTermsMask {
            support: true,
            anchor: false,
        },
        false,
    )
    .unwrap()
    .terms
    .total();
    assert!((full - 2.0 * support_only).abs() <= 1e-12 * full);
}

#[test]
fn edited_generate_agrees_with_manual_composition() {
    let p = micro(4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bank = EditBank::random(&mut rng, &p, 2, 1.0).unwrap();
    for s in [-1.5, 0.0, 0.7] {
        let z = sample_noise(&mut rng, 8);
        let dir = &bank.directions[1];
        let a = edited_generate(&p, &z, dir, s).unwrap();
        let w = map_z_to_w(&p, &z).unwrap();
        let styles: Vec<StyleVector> = (0..4)
            .map(|l| StyleVector(w.0.iter().zip(&dir.offsets.layers[l].0).map(|(x, o)| x + s * o).collect()))
            .collect();
        let b = synthesize(&p, &StyleStack::new(styles)).unwrap();
        for (x, y) in a.pixels.iter().zip(&b.pixels) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn replay_step_never_moves_the_latent() {
    let p = micro(5);
    let target = generate(&perturbed(&p, 0.1), &NoiseVector(vec![0.5; 8])).unwrap();
    let bank = EditBank::random(&mut ChaCha8Rng::seed_from_u64(1), &p, 3, 1.0).unwrap();
    let ex = FeatureExtractor::seeded(0, 8);
    let with = short(20);
    let without = InversionConfig {
        replay_weight: 0.0,
        ..with.clone()
    };
    let mut a = InversionRun::new(&p, &target, &bank, &with, &ex).unwrap();
    let mut b = InversionRun::new(&p, &target, &bank, &without, &ex).unwrap();
    a.step().unwrap();
    b.step().unwrap();
    assert_eq!(a.latent(), b.latent());
    assert!(!a.pair().tuned.bit_equal(&b.pair().tuned));
    assert!(a.trace()[0].replay > 0.0);
}

#[test]
fn inert_replay_and_ema_leave_anchor_untouched() {
    let p = micro(6);
    let target = generate(&p, &NoiseVector(vec![0.1; 8])).unwrap();
    let cfg = InversionConfig {
        ema_beta: 1.0,
        replay_weight: 0.0,
        ..short(30)
    };
    let r = make_it_so(&p, &target, &EditBank::empty(p.arch_hash()), &cfg).unwrap();
    assert!(r.trace.iter().all(|t| t.replay == 0.0));
    assert_eq!(r.ema_iterations.len(), 4);
    assert!(r.anchored.bit_equal(&p));
    assert!(!r.tuned.bit_equal(&p));
}

#[test]
fn mapping_is_bit_identical_after_every_method() {
    let p = micro(7);
    let target = generate(&perturbed(&p, 0.1), &NoiseVector(vec![-0.3; 8])).unwrap();
    let bank = EditBank::random(&mut ChaCha8Rng::seed_from_u64(3), &p, 3, 1.0).unwrap();
    for space in [LatentSpace::Z, LatentSpace::W, LatentSpace::WPlus] {
        for summed_step in [false, true] {
            let cfg = InversionConfig {
                latent_space: space,
                summed_step,
                ..short(25)
            };
            let r = make_it_so(&p, &target, &bank, &cfg).unwrap();
            assert!(r.tuned.group_bit_equal(&p, ParamGroup::Mapping));
            assert!(r.anchored.group_bit_equal(&p, ParamGroup::Mapping));
            assert!(!r.tuned.group_bit_equal(&p, ParamGroup::Synthesis));
        }
    }
    let pti = pivotal_tune(
        &p,
        &target,
        &BaselineConfig {
            pivot_iters: 20,
            tune_iters: 20,
            ..BaselineConfig::default()
        },
    )
    .unwrap();
    assert!(pti.tuned.group_bit_equal(&p, ParamGroup::Mapping));
}

#[test]
fn runs_are_deterministic() {
    let p = micro(8);
    let target = generate(&perturbed(&p, 0.1), &NoiseVector(vec![0.9; 8])).unwrap();
    let bank = EditBank::random(&mut ChaCha8Rng::seed_from_u64(3), &p, 3, 1.0).unwrap();
    let cfg = short(30).with_seed(11);
    let a = make_it_so(&p, &target, &bank, &cfg).unwrap();
    let b = make_it_so(&p, &target, &bank, &cfg).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.latent, b.latent);
    assert!(a.tuned.bit_equal(&b.tuned) && a.anchored.bit_equal(&b.anchored));
    let c = make_it_so(&p, &target, &bank, &cfg.clone().with_seed(12)).unwrap();
    assert_ne!(a.latent, c.latent);
}

#[test]
fn run_directory_round_trips() {
    let p = micro(9);
    let target = generate(&p, &NoiseVector(vec![0.4; 8])).unwrap();
    let r = make_it_so(&p, &target, &EditBank::empty(p.arch_hash()), &short(10)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = write_run_dir(&r, "x", dir.path()).unwrap();
    assert_eq!(read_manifest(dir.path()).unwrap(), m);
    let (latent, tuned) = read_run_outputs(dir.path()).unwrap();
    assert_eq!(latent, r.latent);
    assert!(tuned.bit_equal(&r.tuned));
}
