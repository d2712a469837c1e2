//! Leakage-safe splitting: every group key lands in exactly one split.

use rand::seq::SliceRandom;

use crate::dataset::{LabeledDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::seeding::rng_from;

/// Split a dataset into (train, val, test) with whole-group assignment.
///
/// Groups are shuffled by the spec seed, then each group goes to the split
/// whose window-count fill is currently furthest below its target ratio.
/// Every split is left nonempty whenever at least 3 distinct groups exist.
pub fn split_by_group(
    dataset: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot split an empty dataset"));
    }

    // Distinct groups in first-appearance order, with their window indices.
    let mut group_order: Vec<String> = Vec::new();
    let mut members: std::collections::HashMap<String, Vec<usize>> =
        std::collections::HashMap::new();
    for (i, w) in dataset.windows.iter().enumerate() {
        let entry = members.entry(w.group_key.clone()).or_insert_with(|| {
            group_order.push(w.group_key.clone());
            Vec::new()
        });
        entry.push(i);
    }
    if group_order.len() < 3 {
        return Err(Error::invalid(format!(
            "only {} distinct group key(s); need at least 3 for a group-disjoint split \
             (set split.by_group = false to treat every window as its own group)",
            group_order.len()
        )));
    }

    let mut shuffled = group_order.clone();
    let mut rng = rng_from(spec.seed);
    shuffled.shuffle(&mut rng);

    let ratios = [spec.ratios.0, spec.ratios.1, spec.ratios.2];
    let total = dataset.len() as f64;
    let mut assigned = [0usize; 3];
    let mut assignment: Vec<(String, usize)> = Vec::with_capacity(shuffled.len());
    for key in &shuffled {
        let size = members[key].len();
        // Largest gap between target ratio and current fill wins; ties go to
        // the earlier split (train before val before test).
        let mut best = 0usize;
        let mut best_gap = f64::NEG_INFINITY;
        for s in 0..3 {
            let gap = ratios[s] - assigned[s] as f64 / total;
            if gap > best_gap + 1e-15 {
                best = s;
                best_gap = gap;
            }
        }
        assigned[best] += size;
        assignment.push((key.clone(), best));
    }

    // Greedy assignment can starve a split when groups are few or lumpy;
    // every split must end up nonempty when >= 3 groups exist.
    let mut split_groups: [Vec<String>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (key, s) in &assignment {
        split_groups[*s].push(key.clone());
    }
    for s in 0..3 {
        if !split_groups[s].is_empty() {
            continue;
        }
        let donor = (0..3)
            .filter(|&d| split_groups[d].len() > 1)
            .max_by_key(|&d| split_groups[d].len())
            .ok_or_else(|| Error::invalid("cannot populate all three splits"))?;
        // Move the donor's smallest group (window count, then key) over.
        let (pos, _) = split_groups[donor]
            .iter()
            .enumerate()
            .min_by_key(|(_, k)| (members[*k].len(), (*k).clone()))
            .unwrap();
        let key = split_groups[donor].remove(pos);
        split_groups[s].push(key);
    }

    let mut pick = |keys: &[String]| -> Result<LabeledDataset> {
        let mut idx: Vec<usize> = keys.iter().flat_map(|k| members[k].iter().copied()).collect();
        idx.sort_unstable();
        let windows = idx.iter().map(|&i| dataset.windows[i].clone()).collect();
        LabeledDataset::new(
            windows,
            dataset.steps,
            dataset.features,
            dataset.num_classes,
        )
    };

    Ok((
        pick(&split_groups[0])?,
        pick(&split_groups[1])?,
        pick(&split_groups[2])?,
    ))
}
