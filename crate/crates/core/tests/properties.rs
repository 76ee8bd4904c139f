use makeitso::editing::{apply_edit, load_bank, random_direction, save_bank, EditBank, EditDirection};
use makeitso::generator::*;
use makeitso::harness::{emit_report, load_report, MetricColumn, Report, ReportFormat, ReportRow, BenchmarkSpec};
use makeitso::objectives::{recon_loss, LossWeights, total_inversion_loss, FeatureExtractor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn micro() -> &'static GeneratorParams {
    static P: OnceLock<GeneratorParams> = OnceLock::new();
    P.get_or_init(|| init_toy_generator(13, &GeneratorConfig::micro()).unwrap())
}

fn stack(values: &[f64], layers: usize, w_dim: usize) -> StyleStack {
    StyleStack::from_flat(&values[..layers * w_dim], layers, w_dim)
}

fn finite_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edits_are_additive(s in finite_vec(32), o in finite_vec(32), a in -4.0..4.0f64, b in -4.0..4.0f64) {
        let styles = stack(&s, 4, 8);
        let dir = EditDirection::new("d", stack(&o, 4, 8));
        let two = apply_edit(&apply_edit(&styles, &dir, a).unwrap(), &dir, b).unwrap();
        let one = apply_edit(&styles, &dir, a + b).unwrap();
        for (x, y) in two.to_flat().iter().zip(one.to_flat()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
        let back = apply_edit(&apply_edit(&styles, &dir, a).unwrap(), &dir, -a).unwrap();
        for (x, y) in back.to_flat().iter().zip(styles.to_flat()) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
        prop_assert_eq!(apply_edit(&styles, &dir, 0.0).unwrap(), styles);
    }

    #[test]
    fn loss_is_linear_in_its_weights(seed in 0u64..1000, lr in 0.0..5.0f64, lp in 0.0..5.0f64) {
        let p = micro();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = generate(p, &sample_noise(&mut rng, 8)).unwrap();
        let b = generate(p, &sample_noise(&mut rng, 8)).unwrap();
        let ex = FeatureExtractor::seeded(0, 8);
        let r = total_inversion_loss(&LossWeights::new(1.0, 0.0).unwrap(), &ex, &a, &b).unwrap().total;
        let q = total_inversion_loss(&LossWeights::new(0.0, 1.0).unwrap(), &ex, &a, &b).unwrap().total;
        let both = total_inversion_loss(&LossWeights::new(lr, lp).unwrap(), &ex, &a, &b).unwrap().total;
        prop_assert!((both - (lr * r + lp * q)).abs() <= 1e-12 * (1.0 + both.abs()));
        prop_assert_eq!(r, recon_loss(&a, &b).unwrap());
    }

    #[test]
    fn batch_synthesis_is_bit_identical_to_single(seed in 0u64..1000, n in 1usize..6) {
        let p = micro();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let styles: Vec<StyleStack> = (0..n)
            .map(|_| broadcast_w(&map_z_to_w(p, &sample_noise(&mut rng, 8)).unwrap(), 4).unwrap())
            .collect();
        let batch = synthesize_batch(p, &styles).unwrap();
        for (s, img) in styles.iter().zip(&batch) {
            prop_assert_eq!(&synthesize(p, s).unwrap(), img);
        }
    }

    #[test]
    fn bank_round_trips_bit_exactly(seed in 0u64..1000, norm in 1e-6..100.0f64, strength in -10.0..10.0f64) {
        let p = micro();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = random_direction(&mut rng, 4, 8, norm).unwrap();
        d.name = format!("dir-{seed}");
        d.default_strength = strength;
        let bank = EditBank::new(p.arch_hash(), vec![d, EditDirection::zero("zero", 4, 8)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        save_bank(&bank, &path).unwrap();
        prop_assert_eq!(load_bank(&path).unwrap(), bank);
    }

    #[test]
    fn report_json_is_lossless(values in prop::collection::vec(prop::option::of(any::<f64>().prop_filter("finite", |v| v.is_finite())), 12)) {
        let col = |i: usize| MetricColumn::from_per_seed(values[i * 3..i * 3 + 3].to_vec());
        let report = Report {
            schema_version: makeitso::harness::REPORT_SCHEMA_VERSION,
            title: "prop".into(),
            seeds: vec![0, 1, 2],
            spec: BenchmarkSpec::toy(),
            rows: vec![ReportRow {
                method: "make_it_so".into(),
                label: "Ours (full)".into(),
                inversion_mse: col(0),
                inversion_perceptual: col(1),
                edit_mse: col(2),
                edit_perceptual: col(3),
            }],
            failures: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        emit_report(&report, &path, ReportFormat::Json).unwrap();
        let back = load_report(&path).unwrap();
        prop_assert_eq!(&back, &report);
        back.check_means().unwrap();
    }
}

#[test]
fn outputs_stay_in_range() {
    let p = init_toy_generator(0, &GeneratorConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let zs: Vec<NoiseVector> = (0..100).map(|_| sample_noise(&mut rng, 64)).collect();
    let styles: Vec<StyleStack> = zs.iter().map(|z| broadcast_w(&map_z_to_w(&p, z).unwrap(), 8).unwrap()).collect();
    for img in synthesize_batch(&p, &styles).unwrap() {
        assert_eq!((img.height, img.width), (32, 32));
        assert!(img.pixels.iter().all(|v| v.is_finite() && v.abs() <= 1.0));
    }
}

#[test]
fn every_style_slot_affects_the_image() {
    let p = init_toy_generator(0, &GeneratorConfig::default()).unwrap();
    let z = sample_noise(&mut ChaCha8Rng::seed_from_u64(1), 64);
    let base = broadcast_w(&map_z_to_w(&p, &z).unwrap(), 8).unwrap();
    let img = synthesize(&p, &base).unwrap();
    let dir = random_direction(&mut ChaCha8Rng::seed_from_u64(2), 8, 64, 3.0).unwrap();
    for slot in 0..8 {
        let mut edited = base.clone();
        edited.layers[slot] = apply_edit(&base, &dir, 1.0).unwrap().layers[slot].clone();
        let out = synthesize(&p, &edited).unwrap();
        let diff = recon_loss(&out, &img).unwrap();
        assert!(diff > 1e-8, "slot {slot} moved the image by only {diff}");
    }
}

/// Summary statistics of a fixed render. These pin the architecture and the
/// initializer; if they move, every stored checkpoint and bank is stale.
#[test]
fn golden_render() {
    let p = init_toy_generator(0, &GeneratorConfig::default()).unwrap();
    let z = sample_noise(&mut ChaCha8Rng::seed_from_u64(0), 64);
    let img = generate(&p, &z).unwrap();
    let sum: f64 = img.pixels.iter().sum();
    let sq: f64 = img.pixels.iter().map(|v| v * v).sum();
    let probes = [img.get(0, 0, 0), img.get(1, 15, 16), img.get(2, 31, 31)];
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/render.txt")).unwrap();
    let want: Vec<f64> = text.split_whitespace().map(|t| t.parse().unwrap()).collect();
    let got = [sum, sq, probes[0], probes[1], probes[2]];
    if std::env::var_os("MAKEITSO_BLESS").is_some() {
        let line = got.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
        std::fs::write(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/render.txt"), line + "\n").unwrap();
        return;
    }
    assert_eq!(want.len(), got.len());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-9 * (1.0 + w.abs()), "{g} vs {w}");
    }
    assert!(p.arch_hash().len() >= 16);
}

#[test]
fn report_layout_matches_golden() {
    let report = Report {
        schema_version: makeitso::harness::REPORT_SCHEMA_VERSION,
        title: "layout".into(),
        seeds: vec![0],
        spec: BenchmarkSpec::toy(),
        rows: vec![ReportRow {
            method: "pti".into(),
            label: "PTI".into(),
            inversion_mse: MetricColumn::from_per_seed(vec![Some(0.5)]),
            inversion_perceptual: MetricColumn::from_per_seed(vec![None]),
            edit_mse: MetricColumn::from_per_seed(vec![Some(0.25)]),
            edit_perceptual: MetricColumn::from_per_seed(vec![Some(1.0)]),
        }],
        failures: vec![],
    };
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("r.csv");
    emit_report(&report, &csv_path, ReportFormat::Csv).unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let golden = include_str!("golden/report.csv");
    assert_eq!(csv, golden);

    let json: serde_json::Value = serde_json::to_value(&report).unwrap();
    let mut keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["failures", "rows", "schema_version", "seeds", "spec", "title"]);
    let mut row_keys: Vec<&str> = json["rows"][0].as_object().unwrap().keys().map(String::as_str).collect();
    row_keys.sort_unstable();
    assert_eq!(
        row_keys,
        ["edit_mse", "edit_perceptual", "inversion_mse", "inversion_perceptual", "label", "method"]
    );
    assert_eq!(json["rows"][0]["inversion_perceptual"]["per_seed"][0], serde_json::Value::Null);
}
