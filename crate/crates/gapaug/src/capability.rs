//! Generator capability modeling: probe every (generator, class) pair,
//! score similarity via entropy-normalized, permutation-corrected mutual
//! information, and assemble the capability tensor consumed by scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Provenance, TimeWindow};
use crate::error::{Error, Result};
use crate::generators::Generator;
use crate::seeding::{derive_seed, tag};
use crate::stats::{
    fit_class_embedding, kl_entropy, permutation_corrected_mi, PairingMode, StatsConfig,
};

/// Denominator used when the class-conditional entropy estimate is <= 0
/// (legal for differential entropy, but a meaningless normalizer).
const ENTROPY_FLOOR: f64 = 1.0;

/// One (generator, class) capability cell with its audit trail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapabilityCell {
    /// Proportion of class-conditional information overlap, clamped to [0,1].
    #[serde(rename = "S")]
    pub similarity: f64,
    /// Exploratory potential; exactly `1 - similarity`.
    #[serde(rename = "C")]
    pub contribution: f64,
    pub raw_mi: f64,
    pub baseline_mi: f64,
    pub entropy: f64,
}

/// G x C x 2 capability scores plus generator identities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapabilityTensor {
    pub generator_ids: Vec<String>,
    pub classes: usize,
    /// `cells[g][c]`.
    pub cells: Vec<Vec<CapabilityCell>>,
}

impl CapabilityTensor {
    pub fn cell(&self, g: usize, c: usize) -> &CapabilityCell {
        &self.cells[g][c]
    }

    /// (similarity, contribution) down one class column, ordered by generator.
    pub fn column(&self, c: usize) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .map(|row| (row[c].similarity, row[c].contribution))
            .collect()
    }

    pub fn num_generators(&self) -> usize {
        self.generator_ids.len()
    }

    /// Audit-friendly JSON: flat list of per-cell records.
    pub fn to_json(&self) -> serde_json::Value {
        let mut cells = Vec::new();
        for (g, row) in self.cells.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                cells.push(serde_json::json!({
                    "g": g,
                    "c": c,
                    "S": cell.similarity,
                    "C": cell.contribution,
                    "raw_mi": cell.raw_mi,
                    "baseline_mi": cell.baseline_mi,
                    "entropy": cell.entropy,
                }));
            }
        }
        serde_json::json!({
            "generator_ids": self.generator_ids,
            "classes": self.classes,
            "cells": cells,
        })
    }

    /// Human-readable table: one similarity and one contribution row per
    /// class, one column per generator.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .generator_ids
            .iter()
            .map(|s| s.len())
            .max()
            .unwrap_or(8)
            .max(8);
        out.push_str(&format!("{:<8} {:<6}", "score", "class"));
        for id in &self.generator_ids {
            out.push_str(&format!(" {id:>width$}"));
        }
        out.push('\n');
        for (name, pick) in [
            ("S", true),
            ("C", false),
        ] {
            for c in 0..self.classes {
                out.push_str(&format!("{name:<8} {c:<6}"));
                for g in 0..self.num_generators() {
                    let cell = self.cell(g, c);
                    let v = if pick { cell.similarity } else { cell.contribution };
                    out.push_str(&format!(" {v:>width$.3}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Join embedded real and generated samples per the pairing rule.
///
/// Aligned pairing resolves each generated sample's source index into the
/// real list; independent pairing shuffles both lists by the seed,
/// truncates to the shorter length and zips.
pub fn pair_samples(
    real_z: &[Vec<f64>],
    gen_z: &[Vec<f64>],
    sources: Option<&[Option<usize>]>,
    mode: PairingMode,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if real_z.is_empty() || gen_z.is_empty() {
        return Err(Error::invalid("pairing needs nonempty sample sets"));
    }
    match mode {
        PairingMode::Aligned => {
            let sources =
                sources.ok_or_else(|| Error::invalid("aligned pairing needs source indices"))?;
            if sources.len() != gen_z.len() {
                return Err(Error::invalid("one source index per generated sample"));
            }
            gen_z
                .iter()
                .zip(sources)
                .map(|(z, src)| {
                    let i = src.ok_or_else(|| {
                        Error::invalid("aligned pairing with missing source index")
                    })?;
                    let real = real_z.get(i).ok_or_else(|| {
                        Error::invalid(format!("source index {i} out of range"))
                    })?;
                    Ok((real.clone(), z.clone()))
                })
                .collect()
        }
        PairingMode::Independent => {
            use rand::seq::SliceRandom;
            let mut xi: Vec<usize> = (0..real_z.len()).collect();
            let mut yi: Vec<usize> = (0..gen_z.len()).collect();
            let mut rng_x = crate::seeding::rng_from(derive_seed(seed, &[tag("x")]));
            let mut rng_y = crate::seeding::rng_from(derive_seed(seed, &[tag("y")]));
            xi.shuffle(&mut rng_x);
            yi.shuffle(&mut rng_y);
            let n = real_z.len().min(gen_z.len());
            Ok((0..n)
                .map(|i| (real_z[xi[i]].clone(), gen_z[yi[i]].clone()))
                .collect())
        }
    }
}

/// Detailed outcome of one similarity computation.
#[derive(Debug, Clone)]
pub struct SimilarityDetail {
    pub similarity: f64,
    pub contribution: f64,
    pub raw_mi: f64,
    pub baseline_mi: f64,
    pub entropy: f64,
    pub entropy_floored: bool,
}

/// Entropy-normalized similarity and its complement.
///
/// `S = clamp(corrected_mi / (denominator + eps), 0, 1)` where the
/// denominator is the class-conditional entropy of the real embedding,
/// floored at 1 nat when the estimate is nonpositive; `C = 1 - S` exactly.
pub fn similarity_score(
    real_z: &[Vec<f64>],
    gen_z: &[Vec<f64>],
    mode: PairingMode,
    k: usize,
    n_perm: usize,
    eps: f64,
    seed: u64,
) -> Result<SimilarityDetail> {
    if real_z.len() < k + 2 || gen_z.len() < k + 2 {
        return Err(Error::invalid(format!(
            "similarity needs at least k+2={} samples per side",
            k + 2
        )));
    }
    let estimate = match mode {
        PairingMode::Aligned => {
            // Callers resolve alignment before handing over the lists.
            permutation_corrected_mi(real_z, gen_z, PairingMode::Aligned, k, n_perm, seed)?
        }
        PairingMode::Independent => {
            permutation_corrected_mi(real_z, gen_z, PairingMode::Independent, k, n_perm, seed)?
        }
    };
    let entropy = kl_entropy(real_z, k)?;
    let entropy_floored = entropy <= 0.0;
    if entropy_floored {
        log::warn!(
            "class-conditional entropy {entropy:.4} <= 0; flooring the similarity denominator at {ENTROPY_FLOOR}"
        );
    }
    let denominator = if entropy_floored { ENTROPY_FLOOR } else { entropy };
    let similarity = (estimate.corrected / (denominator + eps)).clamp(0.0, 1.0);
    Ok(SimilarityDetail {
        similarity,
        contribution: 1.0 - similarity,
        raw_mi: estimate.raw,
        baseline_mi: estimate.baseline,
        entropy,
        entropy_floored,
    })
}

fn source_indices(windows: &[TimeWindow]) -> Vec<Option<usize>> {
    windows
        .iter()
        .map(|w| match &w.provenance {
            Provenance::Generated { source_index, .. } => *source_index,
            Provenance::Real => None,
        })
        .collect()
}

/// Probe every (generator, class) pair on the training split and assemble
/// the capability tensor. Capability is computed once, before round 0, and
/// stays frozen across rounds.
///
/// A generator failing on a class degrades that cell to (S=0, C=1) with a
/// warning, treating it as purely exploratory.
pub fn build_capability_tensor(
    train: &LabeledDataset,
    generators: &[Box<dyn Generator>],
    cfg: &StatsConfig,
    seed: u64,
) -> Result<CapabilityTensor> {
    cfg.validate()?;
    if generators.is_empty() {
        return Err(Error::invalid("need at least one generator"));
    }
    let min_per_class = (cfg.k + 2).max(4);
    let counts = train.class_counts();
    for (c, &n) in counts.iter().enumerate() {
        if n < min_per_class {
            return Err(Error::invalid(format!(
                "class {c} has {n} real samples; capability modeling needs >= {min_per_class}"
            )));
        }
    }

    // Class embeddings are fitted once, on real data only, and shared by
    // every generator of that class.
    let embeddings = (0..train.num_classes)
        .map(|c| {
            let real = train.real_class_windows(c);
            fit_class_embedding(&real, cfg.variance_threshold, cfg.d_max)
        })
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..generators.len())
        .flat_map(|g| (0..train.num_classes).map(move |c| (g, c)))
        .collect();

    let cells: Vec<((usize, usize), CapabilityCell)> = pairs
        .par_iter()
        .map(|&(g, c)| {
            let cell_seed = derive_seed(seed, &[tag("capability"), g as u64, c as u64]);
            let cell = probe_cell(train, &embeddings[c], generators[g].as_ref(), c, cfg, cell_seed)
                .unwrap_or_else(|e| {
                    log::warn!(
                        "generator '{}' failed on class {c}: {e}; treating as purely exploratory",
                        generators[g].id()
                    );
                    CapabilityCell {
                        similarity: 0.0,
                        contribution: 1.0,
                        raw_mi: 0.0,
                        baseline_mi: 0.0,
                        entropy: 0.0,
                    }
                });
            ((g, c), cell)
        })
        .collect();

    let mut tensor = CapabilityTensor {
        generator_ids: generators.iter().map(|g| g.id().to_string()).collect(),
        classes: train.num_classes,
        cells: vec![
            vec![
                CapabilityCell {
                    similarity: 0.0,
                    contribution: 1.0,
                    raw_mi: 0.0,
                    baseline_mi: 0.0,
                    entropy: 0.0,
                };
                train.num_classes
            ];
            generators.len()
        ],
    };
    for ((g, c), cell) in cells {
        tensor.cells[g][c] = cell;
    }
    Ok(tensor)
}

fn probe_cell(
    train: &LabeledDataset,
    embedding: &crate::stats::ClassEmbedding,
    generator: &dyn Generator,
    class_id: usize,
    cfg: &StatsConfig,
    seed: u64,
) -> Result<CapabilityCell> {
    let real = train.real_class_windows(class_id);
    let generated = generator.generate(
        class_id,
        cfg.probe_count,
        &real,
        0,
        derive_seed(seed, &[tag("probe")]),
    )?;

    let real_z: Vec<Vec<f64>> = real
        .iter()
        .map(|w| embedding.transform(w))
        .collect::<Result<_>>()?;
    let gen_z: Vec<Vec<f64>> = generated
        .iter()
        .map(|w| embedding.transform(w))
        .collect::<Result<_>>()?;

    let detail = match generator.pairing_mode() {
        PairingMode::Aligned => {
            let sources = source_indices(&generated);
            let paired = pair_samples(
                &real_z,
                &gen_z,
                Some(&sources),
                PairingMode::Aligned,
                seed,
            )?;
            let (xs, ys): (Vec<Vec<f64>>, Vec<Vec<f64>>) = paired.into_iter().unzip();
            similarity_score(&xs, &ys, PairingMode::Aligned, cfg.k, cfg.n_perm, cfg.eps, seed)?
        }
        PairingMode::Independent => similarity_score(
            &real_z,
            &gen_z,
            PairingMode::Independent,
            cfg.k,
            cfg.n_perm,
            cfg.eps,
            seed,
        )?,
    };

    Ok(CapabilityCell {
        similarity: detail.similarity,
        contribution: detail.contribution,
        raw_mi: detail.raw_mi,
        baseline_mi: detail.baseline_mi,
        entropy: detail.entropy,
    })
}
