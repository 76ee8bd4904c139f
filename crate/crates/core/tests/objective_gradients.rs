//! Finite-difference checks of the inversion and replay objectives on the
//! micro generator.

mod common;

use common::{central_diff, pick_indices, rel_err};
use makeitso::editing::EditBank;
use makeitso::generator::*;
use makeitso::inversion::{replay_loss, sample_replay_batch, GeneratorPair, ReplayBatch};
use makeitso::objectives::{total_inversion_loss, FeatureExtractor, LossWeights};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-3;

struct Setup {
    params: GeneratorParams,
    target: ImageTensor,
    z: NoiseVector,
    extractor: FeatureExtractor,
    weights: LossWeights,
}

fn setup() -> Setup {
    let params = init_toy_generator(21, &GeneratorConfig::micro()).unwrap();
    let target = generate(&params, &NoiseVector(vec![-0.7, 0.2, 1.1, -0.3, 0.5, 0.9, -1.4, 0.05])).unwrap();
    Setup {
        params,
        target,
        z: NoiseVector(vec![0.3, -0.8, 0.4, 1.2, -0.1, 0.6, 0.2, -0.9]),
        extractor: FeatureExtractor::seeded(3, 8),
        weights: LossWeights::new(1.0, 0.7).unwrap(),
    }
}

fn loss_of_styles(s: &Setup, params: &GeneratorParams, styles: &StyleStack) -> f64 {
    let img = synthesize(params, styles).unwrap();
    total_inversion_loss(&s.weights, &s.extractor, &img, &s.target).unwrap().total
}

/// Analytic gradients of the inversion loss w.r.t. z, the style stack and the
/// synthesis parameters at `s.z`.
fn analytic(s: &Setup) -> (Vec<f64>, StyleStack, ParamGrads) {
    let p = &s.params;
    let (w, mpass) = map_with_tape(p, &s.z).unwrap();
    let styles = broadcast_w(&w, p.num_style_slots()).unwrap();
    let (imgs, spass) = synthesize_with_tape(p, std::slice::from_ref(&styles)).unwrap();
    let lv = total_inversion_loss(&s.weights, &s.extractor, &imgs[0], &s.target).unwrap();
    let mut grads = ParamGrads::zeros_for(p, ParamGroup::Synthesis);
    let ds = spass.backward(p, &lv.grad, Some(&mut grads)).remove(0);
    let dz = mpass.backward(p, &ds.layer_sum(), None);
    (dz, ds, grads)
}

#[test]
fn inversion_loss_wrt_z() {
    let s = setup();
    let (dz, _, _) = analytic(&s);
    for (i, &g) in dz.iter().enumerate() {
        let num = central_diff(
            |x| {
                let styles = broadcast_w(&map_z_to_w(&s.params, &NoiseVector(x.to_vec())).unwrap(), 4).unwrap();
                loss_of_styles(&s, &s.params, &styles)
            },
            &s.z.0,
            i,
            H,
        );
        assert!(rel_err(g, num) <= TOL, "z[{i}]: {g} vs {num}");
    }
}

#[test]
fn inversion_loss_wrt_each_style_layer() {
    let s = setup();
    let (_, ds, _) = analytic(&s);
    let styles = broadcast_w(&map_z_to_w(&s.params, &s.z).unwrap(), 4).unwrap();
    let flat = styles.to_flat();
    let dflat = ds.to_flat();
    for layer in 0..4 {
        for j in pick_indices(8, 6, layer as u64) {
            let i = layer * 8 + j;
            let num = central_diff(|x| loss_of_styles(&s, &s.params, &StyleStack::from_flat(x, 4, 8)), &flat, i, H);
            assert!(rel_err(dflat[i], num) <= TOL, "layer {layer} coord {j}: {} vs {num}", dflat[i]);
        }
    }
}

#[test]
fn inversion_loss_wrt_synthesis_arrays() {
    let s = setup();
    let (_, _, grads) = analytic(&s);
    let styles = broadcast_w(&map_z_to_w(&s.params, &s.z).unwrap(), 4).unwrap();
    let mut checked = 0;
    for (k, name) in grads.0.keys().enumerate() {
        let base = s.params.get(name).unwrap().data.clone();
        for i in pick_indices(base.len(), 8, 40 + k as u64) {
            let num = central_diff(
                |x| {
                    let mut q = s.params.clone();
                    q.get_mut(name).unwrap().data.copy_from_slice(x);
                    loss_of_styles(&s, &q, &styles)
                },
                &base,
                i,
                H,
            );
            let a = grads.get(name).unwrap()[i];
            assert!(rel_err(a, num) <= TOL, "{name}[{i}]: {a} vs {num}");
            checked += 1;
        }
    }
    assert!(checked >= 100, "only {checked} coordinates");
}

fn replay_setup() -> (GeneratorPair, ReplayBatch, FeatureExtractor) {
    let anchored = init_toy_generator(21, &GeneratorConfig::micro()).unwrap();
    // a tuned model that differs from the anchored one everywhere
    let mut tuned = anchored.clone();
    for (k, (_, arr)) in tuned.iter_mut().enumerate() {
        arr.data.iter_mut().enumerate().for_each(|(i, v)| *v += 0.05 * ((k * 31 + i) as f64).sin());
    }
    let mut tuned_map = anchored.clone();
    for (name, arr) in tuned.iter() {
        if ParamGroup::Synthesis.contains(name) {
            tuned_map.get_mut(name).unwrap().data.copy_from_slice(&arr.data);
        }
    }
    let bank = EditBank::random(&mut ChaCha8Rng::seed_from_u64(4), &anchored, 3, 1.5).unwrap();
    let batch = sample_replay_batch(&anchored, &bank, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let pair = GeneratorPair::new(anchored, tuned_map).unwrap();
    (pair, batch, FeatureExtractor::seeded(3, 8))
}

#[test]
fn replay_loss_wrt_synthesis_arrays() {
    let (pair, batch, ex) = replay_setup();
    let loss = replay_loss(&pair, &batch, &ex).unwrap();
    assert!(loss.terms.total() > 0.0);
    let mut checked = 0;
    for (k, name) in loss.grads.0.keys().enumerate() {
        assert!(ParamGroup::Synthesis.contains(name));
        let base = pair.tuned.get(name).unwrap().data.clone();
        for i in pick_indices(base.len(), 8, 90 + k as u64) {
            let num = central_diff(
                |x| {
                    let mut p = pair.clone();
                    p.tuned.get_mut(name).unwrap().data.copy_from_slice(x);
                    replay_loss(&p, &batch, &ex).unwrap().terms.total()
                },
                &base,
                i,
                H,
            );
            let a = loss.grads.get(name).unwrap()[i];
            assert!(rel_err(a, num) <= TOL, "{name}[{i}]: {a} vs {num}");
            checked += 1;
        }
    }
    assert!(checked >= 100, "only {checked} coordinates");
}
