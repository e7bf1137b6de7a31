use std::collections::HashMap;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EvaluationError, EvaluationResult};
use crate::metrics::MetricReport;
use crate::space::{distance, Genotype, SearchSpaceDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// Distance to a hidden target genotype.
    Distance,
    /// Distance bent into a false basin around `d = 0.6`.
    Deceptive,
    /// Distance plus seeded Gaussian noise.
    NoisyDistance,
    /// Exact lookup in a precomputed table.
    Tabular,
}

impl std::str::FromStr for SurrogateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| {
            format!("unknown surrogate kind {s:?} (distance, deceptive, noisy_distance, tabular)")
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Genotype>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
}

impl SurrogateSpec {
    pub fn distance(target: Genotype) -> Self {
        Self {
            kind: SurrogateKind::Distance,
            target: Some(target),
            noise_sigma: 0.0,
            table_path: None,
        }
    }

    pub fn deceptive(target: Genotype) -> Self {
        Self {
            kind: SurrogateKind::Deceptive,
            ..Self::distance(target)
        }
    }

    pub fn noisy(target: Genotype, noise_sigma: f64) -> Self {
        Self {
            kind: SurrogateKind::NoisyDistance,
            noise_sigma,
            ..Self::distance(target)
        }
    }

    pub fn tabular(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: SurrogateKind::Tabular,
            target: None,
            noise_sigma: 0.0,
            table_path: Some(path.into()),
        }
    }

    pub fn validate(&self, space: &SearchSpaceDef) -> Result<(), EvaluationError> {
        let invalid = |m: &str| Err(EvaluationError::InvalidSpec(m.into()));
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid("noise_sigma must be finite and non-negative");
        }
        if self.noise_sigma != 0.0 && self.kind != SurrogateKind::NoisyDistance {
            return invalid("noise_sigma is only allowed for noisy_distance");
        }
        match self.kind {
            SurrogateKind::Tabular => {
                if self.table_path.is_none() {
                    return invalid("tabular surrogate needs table_path");
                }
            }
            _ => match &self.target {
                None => return invalid("distance surrogates need a target genotype"),
                Some(t) => t.validate(space)?,
            },
        }
        Ok(())
    }
}

/// `min(d, 0.35 + 0.8 |d - 0.6|)`.
pub fn deceptive(d: f64) -> f64 {
    d.min(0.35 + 0.8 * (d - 0.6).abs())
}

/// FNV-1a over the genotype's canonical JSON.
pub fn genotype_hash(g: &Genotype) -> u64 {
    struct Fnv(u64);
    impl Hasher for Fnv {
        fn finish(&self) -> u64 {
            self.0
        }
        fn write(&mut self, bytes: &[u8]) {
            for b in bytes {
                self.0 ^= u64::from(*b);
                self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    let mut h = Fnv(0xcbf2_9ce4_8422_2325);
    h.write(
        serde_json::to_string(g)
            .expect("genotype serializes")
            .as_bytes(),
    );
    h.finish()
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    genotype: Genotype,
    objective: f64,
}

/// Reads a JSON-lines table of `{"genotype": .., "objective": ..}` rows.
pub fn load_table(path: &Path) -> Result<HashMap<Genotype, f64>, EvaluationError> {
    let err = |message: String| EvaluationError::Table {
        path: path.display().to_string(),
        message,
    };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut table = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: TableRow =
            serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
        if !row.objective.is_finite() {
            return Err(err(format!("line {}: non-finite objective", i + 1)));
        }
        table.insert(row.genotype, row.objective);
    }
    Ok(table)
}

pub fn write_table<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a Genotype, f64)>,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (g, objective) in rows {
        serde_json::to_writer(
            &mut out,
            &TableRow {
                genotype: g.clone(),
                objective,
            },
        )?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// A surrogate ready to evaluate: spec validated, table loaded.
#[derive(Debug, Clone)]
pub struct Surrogate {
    spec: SurrogateSpec,
    space: SearchSpaceDef,
    table: HashMap<Genotype, f64>,
}

impl Surrogate {
    pub fn new(spec: SurrogateSpec, space: SearchSpaceDef) -> Result<Self, EvaluationError> {
        spec.validate(&space)?;
        let table = match (&spec.kind, &spec.table_path) {
            (SurrogateKind::Tabular, Some(p)) => load_table(p)?,
            _ => HashMap::new(),
        };
        Ok(Self { spec, space, table })
    }

    pub fn spec(&self) -> &SurrogateSpec {
        &self.spec
    }

    pub fn objective(&self, g: &Genotype, seed: u64) -> Result<f64, EvaluationError> {
        g.validate(&self.space)?;
        let d = || {
            distance(
                g,
                self.spec.target.as_ref().expect("validated"),
                &self.space,
            )
        };
        Ok(match self.spec.kind {
            SurrogateKind::Distance => d(),
            SurrogateKind::Deceptive => deceptive(d()),
            SurrogateKind::NoisyDistance => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ genotype_hash(g));
                let noise = Normal::new(0.0, self.spec.noise_sigma).expect("validated sigma");
                d() + noise.sample(&mut rng)
            }
            SurrogateKind::Tabular => *self
                .table
                .get(g)
                .ok_or_else(|| EvaluationError::TableMiss(g.label()))?,
        })
    }

    pub fn evaluate(&self, g: &Genotype, seed: u64) -> Result<EvaluationResult, EvaluationError> {
        let y = self.objective(g, seed)?;
        let pct = 100.0 * (1.0 - y);
        let metrics = MetricReport {
            cross_entropy: y,
            accuracy: pct,
            precision_macro: pct,
            recall_macro: pct,
            f1_macro: pct,
        };
        Ok(EvaluationResult::ok(y, metrics))
    }
}

pub fn evaluate_surrogate(
    spec: &SurrogateSpec,
    space: &SearchSpaceDef,
    g: &Genotype,
    seed: u64,
) -> Result<EvaluationResult, EvaluationError> {
    Surrogate::new(spec.clone(), space.clone())?.evaluate(g, seed)
}
