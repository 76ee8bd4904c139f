use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::methods::Method;
use super::report::{CellFailure, MetricColumn, Report, ReportRow, REPORT_SCHEMA_VERSION};
use super::targets::TargetKind;
use crate::editing::{apply_edit, EditBank};
use crate::error::{Error, Result};
use crate::generator::{broadcast_w, map_z_to_w, sample_noise, synthesize_batch, GeneratorParams, NoiseVector, StyleStack};
use crate::objectives::{eval_mse, eval_perceptual, FeatureExtractor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub n_inversion_targets: usize,
    /// Latents sampled for the edit-deviation metric.
    pub n_edit_samples: usize,
    /// Bank directions used for edits (the first `n` of the bank).
    pub n_directions: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Make It So iterations; baselines get the same number of gradient
    /// steps (two per iteration).
    pub iters: usize,
    pub targets: TargetKind,
    pub extractor_seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self::toy()
    }
}

impl BenchmarkSpec {
    /// Desk-scale benchmark: 10 targets, 8 directions, 5 seeds, targets from
    /// a shifted copy of the generator.
    pub fn toy() -> Self {
        Self {
            n_inversion_targets: 10,
            n_edit_samples: 16,
            n_directions: 8,
            seeds: (0..5).collect(),
            methods: vec![Method::MakeItSo, Method::Pti],
            iters: 100,
            targets: TargetKind::Shifted {
                sigma: 0.1,
                domain_seed: 5,
            },
            extractor_seed: 0,
        }
    }

    /// Full-size edit-quality counts: 100 latents, 32 directions, 1000 iterations.
    pub fn full_scale() -> Self {
        Self {
            n_inversion_targets: 100,
            n_edit_samples: 100,
            n_directions: 32,
            iters: 1000,
            ..Self::toy()
        }
    }

    pub fn with_methods(mut self, methods: &[Method]) -> Self {
        self.methods = methods.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_inversion_targets == 0 || self.n_edit_samples == 0 || self.n_directions == 0 || self.iters == 0 {
            return Err(Error::Config("benchmark counts must be at least 1".into()));
        }
        if self.seeds.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("benchmark needs at least one seed and one method".into()));
        }
        Ok(())
    }
}

/// Mean distances between original-model and updated-model renders over
/// shared (latent, direction) pairs, unedited pairs included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditDeviation {
    pub mse: f64,
    pub perceptual: f64,
    pub pairs: usize,
}

pub fn edit_deviation(
    original: &GeneratorParams,
    updated: &GeneratorParams,
    bank: &EditBank,
    zs: &[NoiseVector],
    extractor: &FeatureExtractor,
) -> Result<EditDeviation> {
    original.check_compatible(updated)?;
    let slots = original.num_style_slots();
    let mut o_styles: Vec<StyleStack> = Vec::new();
    let mut u_styles: Vec<StyleStack> = Vec::new();
    for z in zs {
        let so = broadcast_w(&map_z_to_w(original, z)?, slots)?;
        let su = broadcast_w(&map_z_to_w(updated, z)?, slots)?;
        o_styles.push(so.clone());
        u_styles.push(su.clone());
        for d in &bank.directions {
            o_styles.push(apply_edit(&so, d, d.default_strength)?);
            u_styles.push(apply_edit(&su, d, d.default_strength)?);
        }
    }
    let mut mse = 0.0;
    let mut perceptual = 0.0;
    let n = o_styles.len();
    // chunked to bound tape-free batch memory
    for (oc, uc) in o_styles.chunks(32).zip(u_styles.chunks(32)) {
        let a = synthesize_batch(original, oc)?;
        let b = synthesize_batch(updated, uc)?;
        for (x, y) in a.iter().zip(&b) {
            mse += eval_mse(x, y)?;
            perceptual += eval_perceptual(extractor, x, y)?;
        }
    }
    Ok(EditDeviation {
        mse: mse / n as f64,
        perceptual: perceptual / n as f64,
        pairs: n,
    })
}

/// Metrics of one (method, seed, target) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub seed: u64,
    pub target: usize,
    pub inversion_mse: f64,
    pub inversion_perceptual: f64,
    pub edit: EditDeviation,
}

fn edit_latents(spec: &BenchmarkSpec, z_dim: usize, seed: u64) -> Vec<NoiseVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11);
    (0..spec.n_edit_samples).map(|_| sample_noise(&mut rng, z_dim)).collect()
}

/// Run every method of `spec` on every (seed, target) cell. A failing cell
/// is recorded in `failures` and left out of the means. `on_cell` sees each
/// finished cell.
pub fn run_benchmark(
    spec: &BenchmarkSpec,
    generator: &GeneratorParams,
    bank: &EditBank,
    title: &str,
    mut on_cell: impl FnMut(&CellResult),
) -> Result<Report> {
    spec.validate()?;
    if bank.len() < spec.n_directions {
        return Err(Error::Config(format!(
            "bank has {} directions, benchmark needs {}",
            bank.len(),
            spec.n_directions
        )));
    }
    bank.check_for(generator)?;
    let edit_bank = EditBank::new(bank.arch_hash.clone(), bank.directions[..spec.n_directions].to_vec())?;
    let extractor = FeatureExtractor::seeded(spec.extractor_seed, generator.resolution());
    let mut failures = Vec::new();
    // per method, per seed: accumulated cells
    let mut cells: Vec<Vec<Vec<CellResult>>> = vec![vec![Vec::new(); spec.seeds.len()]; spec.methods.len()];
    for (si, &seed) in spec.seeds.iter().enumerate() {
        let targets = spec.targets.targets(generator, spec.n_inversion_targets, seed)?;
        let zs = edit_latents(spec, generator.config().z_dim, seed);
        for (ti, target) in targets.iter().enumerate() {
            let run_seed = seed.wrapping_mul(1000).wrapping_add(ti as u64);
            for (mi, &method) in spec.methods.iter().enumerate() {
                let cell = method
                    .run(generator, target, bank, spec.iters, run_seed, &extractor)
                    .and_then(|out| {
                        Ok(CellResult {
                            method,
                            seed,
                            target: ti,
                            inversion_mse: eval_mse(&out.reconstruction, target)?,
                            inversion_perceptual: eval_perceptual(&extractor, &out.reconstruction, target)?,
                            edit: edit_deviation(generator, &out.tuned, &edit_bank, &zs, &extractor)?,
                        })
                    });
                match cell {
                    Ok(c) => {
                        on_cell(&c);
                        cells[mi][si].push(c);
                    }
                    Err(e) => failures.push(CellFailure {
                        method: method.id().to_string(),
                        seed,
                        target: ti,
                        error: e.to_string(),
                    }),
                }
            }
        }
    }
    let rows = spec
        .methods
        .iter()
        .zip(&cells)
        .map(|(m, per_seed)| {
            let col = |f: &dyn Fn(&CellResult) -> f64| {
                MetricColumn::from_per_seed(
                    per_seed
                        .iter()
                        .map(|cs| (!cs.is_empty()).then(|| cs.iter().map(f).sum::<f64>() / cs.len() as f64))
                        .collect(),
                )
            };
            ReportRow {
                method: m.id().to_string(),
                label: m.label().to_string(),
                inversion_mse: col(&|c| c.inversion_mse),
                inversion_perceptual: col(&|c| c.inversion_perceptual),
                edit_mse: col(&|c| c.edit.mse),
                edit_perceptual: col(&|c| c.edit.perceptual),
            }
        })
        .collect();
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        title: title.to_string(),
        seeds: spec.seeds.clone(),
        spec: spec.clone(),
        rows,
        failures,
    })
}

/// Inversion-quality table for `spec.methods`.
pub fn run_inversion_quality(spec: &BenchmarkSpec, generator: &GeneratorParams, bank: &EditBank) -> Result<Report> {
    run_benchmark(spec, generator, bank, "Inversion quality", |_| {})
}

/// Edit-deviation row for a single method.
pub fn run_edit_quality(
    spec: &BenchmarkSpec,
    generator: &GeneratorParams,
    bank: &EditBank,
    method: Method,
) -> Result<Report> {
    let spec = spec.clone().with_methods(&[method]);
    run_benchmark(&spec, generator, bank, "Edit quality", |_| {})
}

/// Full method, each leave-one-out ablation, and pivotal tuning.
pub fn run_leave_one_out(spec: &BenchmarkSpec, generator: &GeneratorParams, bank: &EditBank) -> Result<Report> {
    let spec = spec.clone().with_methods(&[
        Method::MakeItSo,
        Method::WithoutSupport,
        Method::WithoutAnchor,
        Method::WithoutEma,
        Method::WithoutExtended,
        Method::WithoutReplay,
        Method::Pti,
    ]);
    run_benchmark(&spec, generator, bank, "Leave-one-out ablation", |_| {})
}

/// Make It So with the optimized variable in Z, W and W+, plus frozen
/// generator latent optimization in each space.
pub fn run_latent_space_ablation(spec: &BenchmarkSpec, generator: &GeneratorParams, bank: &EditBank) -> Result<Report> {
    let spec = spec.clone().with_methods(&[
        Method::MakeItSo,
        Method::MakeItSoW,
        Method::MakeItSoWPlus,
        Method::LatentZ,
        Method::LatentW,
        Method::LatentWPlus,
    ]);
    run_benchmark(&spec, generator, bank, "Latent-space ablation", |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{init_toy_generator, GeneratorConfig};

    fn micro_spec(methods: &[Method]) -> BenchmarkSpec {
        BenchmarkSpec {
            n_inversion_targets: 2,
            n_edit_samples: 3,
            n_directions: 2,
            seeds: vec![0, 1],
            iters: 5,
            ..BenchmarkSpec::toy()
        }
        .with_methods(methods)
    }

    #[test]
    fn identity_method_has_zero_edit_deviation() {
        let p = init_toy_generator(2, &GeneratorConfig::micro()).unwrap();
        let bank = EditBank::random(&mut ChaCha8Rng::seed_from_u64(1), &p, 2, 1.0).unwrap();
        let r = run_benchmark(&micro_spec(&[Method::Identity, Method::MakeItSo]), &p, &bank, "t", |_| {}).unwrap();
        assert_eq!(r.rows[0].edit_mse.per_seed, vec![Some(0.0), Some(0.0)]);
        assert_eq!(r.rows[0].edit_perceptual.mean, Some(0.0));
        assert!(r.rows[1].edit_mse.mean.unwrap() > 0.0);
        r.check_means().unwrap();
        let again = run_benchmark(&micro_spec(&[Method::Identity, Method::MakeItSo]), &p, &bank, "t", |_| {}).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn deviation_counts_unedited_pairs() {
        let p = init_toy_generator(2, &GeneratorConfig::micro()).unwrap();
        let bank = EditBank::random(&mut ChaCha8Rng::seed_from_u64(1), &p, 3, 1.0).unwrap();
        let ex = FeatureExtractor::seeded(0, 8);
        let zs = vec![NoiseVector(vec![0.1; 8]); 2];
        let d = edit_deviation(&p, &p, &bank, &zs, &ex).unwrap();
        assert_eq!(d.pairs, 8);
        assert_eq!(d.mse, 0.0);
    }

    #[test]
    fn small_bank_is_rejected() {
        let p = init_toy_generator(2, &GeneratorConfig::micro()).unwrap();
        let bank = EditBank::empty(p.arch_hash());
        assert!(matches!(
            run_benchmark(&micro_spec(&[Method::Identity]), &p, &bank, "t", |_| {}),
            Err(Error::Config(_))
        ));
    }
}
