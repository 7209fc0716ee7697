//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use intersect_rsa::{
    ContextualRecord, ContextualStore, Experiment, ExperimentConfig, ItemSet, Pooling, Provenance,
    SetKind, SetRef, SourceSpec,
};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Quadratic average ranks: `#{x_j < x_i} + (#{x_j == x_i} + 1) / 2`.
pub fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let less = x.iter().filter(|&&xj| xj < xi).count() as f64;
            let equal = x.iter().filter(|&&xj| xj == xi).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Spearman via quadratic ranks and the raw-moment Pearson formula.
pub fn naive_spearman(x: &[f64], y: &[f64]) -> f64 {
    let (a, b) = (naive_ranks(x), naive_ranks(y));
    let n = a.len() as f64;
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let saa: f64 = a.iter().map(|v| v * v).sum();
    let sbb: f64 = b.iter().map(|v| v * v).sum();
    let sab: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa) * (n * sbb - sb * sb)).sqrt()
}

/// Reference dissimilarities computed pair by pair with the naive oracle.
pub fn naive_reference_rdm(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[i * n + j] = 1.0 - naive_spearman(&vectors[i], &vectors[j]);
            }
        }
    }
    out
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    let mut c = BigUint::one();
    for i in 0..k {
        c = c * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    c
}

/// Exact `P(X >= k)`, `X ~ Binomial(n, 1/2)`, rounded once to `f64`.
pub fn exact_upper_tail(k: u64, n: u64) -> f64 {
    let mut sum = BigUint::zero();
    for i in k..=n {
        sum += binomial(n, i);
    }
    sum.to_f64().unwrap() * 2f64.powi(-(n as i32))
}

pub fn exact_two_sided(k: u64, n: u64) -> f64 {
    (2.0 * exact_upper_tail(k, n)).min(1.0)
}

/// Random vector with values drawn from a small grid so ties are common.
pub fn tied_vector(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let levels = rng.random_range(2..=len.max(2));
    (0..len)
        .map(|_| {
            if rng.random_bool(0.5) {
                rng.random_range(0..levels) as f64 * 0.5
            } else {
                rng.random_range(-3.0..3.0)
            }
        })
        .collect()
}

pub const SYNTH_DIM: usize = 50;
pub const SYNTH_SIGMA: f64 = 0.05;

/// Token lists for the synthetic fixture: group 1 and concept tokens are
/// noisy copies of one base vector, group 2 tokens of another.
pub struct Synthetic {
    pub group1: Vec<String>,
    pub group2: Vec<String>,
    pub concept: Vec<String>,
    pub entries: Vec<(String, Vec<f32>)>,
}

/// Per-coordinate noise has standard deviation `SYNTH_SIGMA * |base|`.
pub fn synthetic(seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = || -> Vec<f64> {
        (0..SYNTH_DIM)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    };
    let base_a = base();
    let base_b = base();
    let mut entries = Vec::new();
    let mut make = |prefix: &str, count: usize, base: &[f64]| -> Vec<String> {
        let norm = base.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sigma = SYNTH_SIGMA * norm;
        (0..count)
            .map(|i| {
                let token = format!("{prefix}{i}");
                let v = base
                    .iter()
                    .map(|b| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (b + sigma * z) as f32
                    })
                    .collect();
                entries.push((token.clone(), v));
                token
            })
            .collect()
    };
    let group1 = make("alpha", 13, &base_a);
    let concept = make("gamma", 11, &base_a);
    let group2 = make("beta", 13, &base_b);
    Synthetic {
        group1,
        group2,
        concept,
        entries,
    }
}

impl Synthetic {
    /// Writes the fixture as a GloVe text file.
    pub fn write_glove(&self, path: &Path) {
        let mut text = String::new();
        for (token, v) in &self.entries {
            text.push_str(token);
            for x in v {
                text.push_str(&format!(" {x}"));
            }
            text.push('\n');
        }
        std::fs::write(path, text).unwrap();
    }

    /// Writes the fixture in the contextual interchange format, ids equal
    /// to tokens.
    pub fn write_contextual(&self, path: &Path) {
        let mut store = ContextualStore::new(
            SYNTH_DIM,
            Provenance {
                model: "synthetic".into(),
                layer: 0,
                pooling: Pooling::Mean,
            },
        )
        .unwrap();
        for (token, v) in &self.entries {
            store
                .insert(ContextualRecord {
                    id: token.clone(),
                    text: token.clone(),
                    target: token.clone(),
                    vector: v.clone(),
                })
                .unwrap();
        }
        let file = std::fs::File::create(path).unwrap();
        store.write_jsonl(std::io::BufWriter::new(file)).unwrap();
    }

    /// Item sets with capitalised tokens, so GloVe runs exercise folding.
    pub fn sets(&self) -> (ItemSet, ItemSet, ItemSet) {
        let cap = |v: &[String]| -> Vec<String> {
            v.iter()
                .map(|t| {
                    let mut c = t.chars();
                    c.next().unwrap().to_uppercase().chain(c).collect()
                })
                .collect()
        };
        let make = |name: &str, kind, tokens: Vec<String>| {
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            ItemSet::from_words(name, kind, &refs).unwrap()
        };
        (
            make("synth-g1", SetKind::Group, cap(&self.group1)),
            make("synth-g2", SetKind::Group, cap(&self.group2)),
            make("synth-concept", SetKind::Concept, cap(&self.concept)),
        )
    }

    /// Item sets whose ids are the raw tokens, for contextual stores.
    pub fn id_sets(&self) -> (ItemSet, ItemSet, ItemSet) {
        let make = |name: &str, kind, tokens: &[String]| {
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            ItemSet::from_words(name, kind, &refs).unwrap()
        };
        (
            make("synth-g1", SetKind::Group, &self.group1),
            make("synth-g2", SetKind::Group, &self.group2),
            make("synth-concept", SetKind::Concept, &self.concept),
        )
    }
}

pub fn synthetic_config(seed: u64, glove: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        name: "synthetic".into(),
        group1: SetRef::Builtin("synth-g1".into()),
        group2: SetRef::Builtin("synth-g2".into()),
        concept: SetRef::Builtin("synth-concept".into()),
        n1: 10,
        n2: 10,
        n3: 10,
        num_samples: 100,
        seed,
        source: SourceSpec::Glove {
            path: glove,
            case_fold: true,
        },
        label: None,
    }
}

pub fn synthetic_experiment(fixture: &Synthetic, seed: u64, swap_groups: bool) -> Experiment {
    let (g1, g2, c) = fixture.sets();
    let (g1, g2) = if swap_groups { (g2, g1) } else { (g1, g2) };
    Experiment::new(synthetic_config(seed, "unused".into()), g1, g2, c).unwrap()
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
}
