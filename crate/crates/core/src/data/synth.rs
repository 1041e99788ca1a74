// Latent-factor cohort generator.
//
// Each parcel mixes a global factor, the factor of the module it belongs to,
// a "planted" factor shared by one hub parcel per module, and AR(1) noise.
// Module loadings and the planted-hub loading vary from subject to subject;
// target class 1 adds `effect_size` to the planted-hub loading, which raises
// the correlation of every hub pair. An optional source label adds a second
// factor on a disjoint hub set, standing in for a source-side supervised task
// unrelated to the target classes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Domain, SubjectRecord, MIN_TIME_POINTS};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{derive, seeded, Rng};

const AR_COEF: f64 = 0.5;
const GLOBAL_LOADING: f64 = 0.4;
const MODULE_LOADING: (f64, f64) = (0.3, 0.9);
const TARGET_HUB_BASE: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub parcels: usize,
    pub time_points: usize,
    pub n_source: usize,
    pub n_target_per_class: usize,
    /// Extra planted-hub loading carried by target class 1.
    pub effect_size: f64,
    pub noise_sd: f64,
    /// Number of parcel modules; the planted hubs are the first parcel of each.
    pub modules: usize,
    /// Source planted-hub loadings are uniform on `[0, source_spread]`.
    pub source_spread: f64,
    /// When set, source subjects get binary labels whose class 1 loads this
    /// much on a second hub set (the second parcel of each module).
    pub source_label_effect: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            parcels: 16,
            time_points: 128,
            n_source: 200,
            n_target_per_class: 20,
            effect_size: 0.5,
            noise_sd: 1.0,
            modules: 4,
            source_spread: 1.0,
            source_label_effect: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |d: &str| Err(Error::invalid("synthetic spec", alloc::string::String::from(d)));
        if self.parcels < 2 || self.time_points < MIN_TIME_POINTS {
            return bad(&format!("need parcels >= 2 and time_points >= {MIN_TIME_POINTS}"));
        }
        if self.n_source == 0 || self.n_target_per_class == 0 {
            return bad("subject counts must be at least 1");
        }
        if !(self.effect_size >= 0.0 && self.effect_size.is_finite()) {
            return bad("effect_size must be a finite value >= 0");
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be positive");
        }
        if self.modules == 0 || self.modules > self.parcels {
            return bad("modules must be in 1..=parcels");
        }
        if !(self.source_spread >= 0.0 && self.source_spread.is_finite()) {
            return bad("source_spread must be >= 0");
        }
        if let Some(e) = self.source_label_effect {
            if !(e >= 0.0 && e.is_finite()) {
                return bad("source_label_effect must be >= 0");
            }
            if self.parcels < 2 * self.modules {
                return bad("source labels need at least two parcels per module");
            }
        }
        Ok(())
    }

    /// Module index of every parcel.
    pub fn module_of(&self) -> Vec<usize> {
        (0..self.parcels).map(|p| p * self.modules / self.parcels).collect()
    }

    /// First parcel of each module: pairs among them carry the class effect.
    pub fn planted_parcels(&self) -> Vec<usize> {
        self.hub_set(0)
    }

    /// Second parcel of each module: carries the optional source label.
    pub fn source_label_parcels(&self) -> Vec<usize> {
        self.hub_set(1)
    }

    fn hub_set(&self, offset: usize) -> Vec<usize> {
        let modules = self.module_of();
        (0..self.modules)
            .filter_map(|m| modules.iter().position(|&x| x == m))
            .map(|first| first + offset)
            .filter(|&p| p < self.parcels && modules[p] == modules[p - offset])
            .collect()
    }
}

struct Loadings {
    module: Vec<f64>,
    hub: f64,
    label_hub: f64,
}

fn ar1(rng: &mut Rng, t: usize) -> Vec<f64> {
    let innov = libm::sqrt(1.0 - AR_COEF * AR_COEF);
    let mut out = Vec::with_capacity(t);
    let mut prev: f64 = StandardNormal.sample(rng);
    for _ in 0..t {
        let e: f64 = StandardNormal.sample(rng);
        prev = AR_COEF * prev + innov * e;
        out.push(prev);
    }
    out
}

fn simulate(spec: &SynthSpec, load: &Loadings, rng: &mut Rng) -> Tensor {
    let (p, t) = (spec.parcels, spec.time_points);
    let global = ar1(rng, t);
    let module_factors: Vec<Vec<f64>> = (0..spec.modules).map(|_| ar1(rng, t)).collect();
    let hub = ar1(rng, t);
    let label_hub = ar1(rng, t);
    let modules = spec.module_of();
    let planted = spec.planted_parcels();
    let label_set = spec.source_label_parcels();
    let mut data = vec![0.0; p * t];
    for i in 0..p {
        let noise = ar1(rng, t);
        let m = modules[i];
        let h = if planted.contains(&i) { load.hub } else { 0.0 };
        let lh = if label_set.contains(&i) { load.label_hub } else { 0.0 };
        for s in 0..t {
            data[i * t + s] = GLOBAL_LOADING * global[s]
                + load.module[m] * module_factors[m][s]
                + h * hub[s]
                + lh * label_hub[s]
                + spec.noise_sd * noise[s];
        }
    }
    Tensor::from_parts(vec![p, t], data)
}

fn module_loadings(spec: &SynthSpec, rng: &mut Rng) -> Vec<f64> {
    (0..spec.modules).map(|_| rng.random_range(MODULE_LOADING.0..MODULE_LOADING.1)).collect()
}

/// Source and target cohorts for `spec`, fully determined by `seed`.
///
/// Target subjects alternate between class 0 and class 1 in id order.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut source = Vec::with_capacity(spec.n_source);
    for n in 0..spec.n_source {
        let mut rng = seeded(derive(seed, 0x5_0000_0000 + n as u64));
        let module = module_loadings(spec, &mut rng);
        let hub = rng.random_range(0.0..=1.0) * spec.source_spread;
        let label = spec.source_label_effect.map(|_| u8::from(rng.random_bool(0.5)));
        let label_hub = match (label, spec.source_label_effect) {
            (Some(1), Some(e)) => e,
            _ => 0.0,
        };
        let ts = simulate(spec, &Loadings { module, hub, label_hub }, &mut rng);
        source.push(SubjectRecord::new(format!("src{n:04}"), ts, label)?);
    }
    let mut target = Vec::with_capacity(2 * spec.n_target_per_class);
    for n in 0..2 * spec.n_target_per_class {
        let mut rng = seeded(derive(seed, 0x7_0000_0000 + n as u64));
        let class = (n % 2) as u8;
        let module = module_loadings(spec, &mut rng);
        let hub = rng.random_range(0.0..=TARGET_HUB_BASE) + f64::from(class) * spec.effect_size;
        let ts = simulate(spec, &Loadings { module, hub, label_hub: 0.0 }, &mut rng);
        target.push(SubjectRecord::new(format!("tgt{n:04}"), ts, Some(class))?);
    }
    Ok((Dataset::new(source, Domain::Source)?, Dataset::new(target, Domain::Target)?))
}
