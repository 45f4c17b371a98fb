//! Datasets and their distribution across devices.
//!
//! Data heterogeneity is expressed purely through class ownership: device `n`
//! holds samples from exactly `schedule[n]` distinct classes, and its
//! aggregation weight grows exponentially in that count,
//! `q_n = 2^{M_n} / sum_m 2^{M_m}`. The partition guarantees every class
//! present in the source data ends up on at least one device and that the
//! shards are an exact disjoint cover of the input samples.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// A labeled dataset. Labels index into the global class range `0..n_classes`
/// even when only a subset of classes is present (as in a device shard).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub n_features: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of distinct labels actually present.
    pub fn distinct_labels(&self) -> usize {
        self.labels.iter().collect::<HashSet<_>>().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                context: "Dataset",
                left: self.features.len(),
                right: self.labels.len(),
            });
        }
        if self.n_classes < 2 {
            return Err(Error::domain("Dataset", "need at least two classes"));
        }
        for x in &self.features {
            if x.len() != self.n_features {
                return Err(Error::LengthMismatch {
                    context: "Dataset feature row",
                    left: x.len(),
                    right: self.n_features,
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("Dataset", "non-finite feature value"));
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.n_classes) {
            return Err(Error::domain(
                "Dataset",
                format!("label {bad} out of range for {} classes", self.n_classes),
            ));
        }
        Ok(())
    }
}

/// Draws an isotropic Gaussian cluster per class, with class means placed
/// uniformly at random on a sphere of radius `separation`. Samples are split
/// across classes as evenly as possible, so every class is populated whenever
/// `n_samples >= n_classes`.
pub fn gaussian_clusters<R: Rng + ?Sized>(
    n_samples: usize,
    n_classes: usize,
    n_features: usize,
    cluster_std: f64,
    separation: f64,
    rng: &mut R,
) -> Dataset {
    assert!(n_classes >= 2 && n_features >= 1);
    assert!(n_samples >= n_classes, "need at least one sample per class");
    assert!(cluster_std > 0.0 && separation >= 0.0);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            let raw: Vec<f64> = (0..n_features).map(|_| unit.sample(rng)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            raw.into_iter().map(|v| v * separation / norm).collect()
        })
        .collect();

    let mut features = Vec::with_capacity(n_samples);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let class = i % n_classes;
        let x: Vec<f64> = means[class]
            .iter()
            .map(|&m| m + cluster_std * unit.sample(rng))
            .collect();
        features.push(x);
        labels.push(class);
    }
    Dataset { features, labels, n_classes, n_features }
}

/// Splits a dataset so device `n` holds exactly `schedule[n]` distinct
/// classes, returning the shards together with the exponential aggregation
/// weights `q_n = 2^{M_n} / sum_m 2^{M_m}`.
///
/// Class slots are filled coverage-first: devices are visited in random
/// order, each taking uncovered classes while any remain, then topping up
/// from already-covered ones. A class's samples are then split evenly (and
/// randomly) among its holders, so each holder receives at least one.
pub fn partition_by_classes<R: Rng + ?Sized>(
    data: &Dataset,
    schedule: &[usize],
    rng: &mut R,
) -> Result<(Vec<Dataset>, Vec<f64>)> {
    data.validate()?;
    let n_devices = schedule.len();
    if n_devices == 0 {
        return Err(Error::InfeasiblePartition("no devices in the schedule".into()));
    }
    let mut present: Vec<usize> = data.labels.iter().cloned().collect::<HashSet<_>>().into_iter().collect();
    present.sort_unstable();
    let c = present.len();
    if c < 2 {
        return Err(Error::InfeasiblePartition(format!(
            "source data holds {c} distinct classes, need at least 2"
        )));
    }
    for (n, &m) in schedule.iter().enumerate() {
        if m == 0 || m > c {
            return Err(Error::InfeasiblePartition(format!(
                "device {n} wants {m} classes, data offers 1..={c}"
            )));
        }
    }
    let total: usize = schedule.iter().sum();
    if total < c {
        return Err(Error::InfeasiblePartition(format!(
            "schedule fills {total} class slots, {c} classes need covering"
        )));
    }

    // Coverage-first slot assignment.
    let mut order: Vec<usize> = (0..n_devices).collect();
    order.shuffle(rng);
    let mut uncovered: Vec<usize> = present.clone();
    uncovered.shuffle(rng);
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); n_devices];
    for &dev in &order {
        let want = schedule[dev];
        while held[dev].len() < want {
            if let Some(class) = uncovered.pop() {
                held[dev].push(class);
            } else {
                break;
            }
        }
        if held[dev].len() < want {
            let mut pool: Vec<usize> = present
                .iter()
                .cloned()
                .filter(|class| !held[dev].contains(class))
                .collect();
            pool.shuffle(rng);
            let need = want - held[dev].len();
            held[dev].extend(pool.into_iter().take(need));
        }
        debug_assert_eq!(held[dev].len(), want);
    }
    debug_assert!(uncovered.is_empty(), "slot total covers every class");

    // Spread each class's samples evenly over its holders.
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n_devices];
    for &class in &present {
        let holders: Vec<usize> = (0..n_devices).filter(|&d| held[d].contains(&class)).collect();
        let mut samples: Vec<usize> =
            (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        if samples.len() < holders.len() {
            return Err(Error::InfeasiblePartition(format!(
                "class {class} has {} samples for {} holders",
                samples.len(),
                holders.len()
            )));
        }
        samples.shuffle(rng);
        let base = samples.len() / holders.len();
        let extra = samples.len() % holders.len();
        let mut cursor = 0;
        for (slot, &dev) in holders.iter().enumerate() {
            let take = base + if slot < extra { 1 } else { 0 };
            assigned[dev].extend_from_slice(&samples[cursor..cursor + take]);
            cursor += take;
        }
        debug_assert_eq!(cursor, samples.len());
    }

    let shards: Vec<Dataset> = assigned
        .iter_mut()
        .map(|idx| {
            idx.sort_unstable();
            Dataset {
                features: idx.iter().map(|&i| data.features[i].clone()).collect(),
                labels: idx.iter().map(|&i| data.labels[i]).collect(),
                n_classes: data.n_classes,
                n_features: data.n_features,
            }
        })
        .collect();
    for (n, shard) in shards.iter().enumerate() {
        debug_assert_eq!(shard.distinct_labels(), schedule[n]);
    }
    let weights = crate::scheduler::exponential_class_weights(schedule);
    Ok((shards, weights))
}

/// Loads a comma-separated table: feature columns followed by one integer
/// label column. Blank lines and lines starting with `#` are skipped; a
/// single leading header row is tolerated.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() < 2 {
            return Err(Error::Config(format!(
                "{}:{}: need at least one feature and a label",
                path.display(),
                lineno + 1
            )));
        }
        let parsed: Option<Vec<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
        let Some(row) = parsed else {
            if features.is_empty() && lineno == 0 {
                continue; // header
            }
            return Err(Error::Config(format!(
                "{}:{}: non-numeric cell",
                path.display(),
                lineno + 1
            )));
        };
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Config(format!(
                    "{}:{}: expected {} columns, got {}",
                    path.display(),
                    lineno + 1,
                    w,
                    row.len()
                )));
            }
            _ => {}
        }
        let label = row[row.len() - 1];
        if label < 0.0 || label.fract() != 0.0 {
            return Err(Error::Config(format!(
                "{}:{}: label column must hold non-negative integers, got {label}",
                path.display(),
                lineno + 1
            )));
        }
        labels.push(label as usize);
        features.push(row[..row.len() - 1].to_vec());
    }
    if features.is_empty() {
        return Err(Error::Config(format!("{}: no data rows", path.display())));
    }
    let n_features = features[0].len();
    let n_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    let data = Dataset { features, labels, n_classes: n_classes.max(2), n_features };
    data.validate()?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sample_data(seed: u64, n: usize, classes: usize) -> Dataset {
        let mut rng = crate::rng::data_rng(seed);
        gaussian_clusters(n, classes, 3, 0.5, 2.0, &mut rng)
    }

    #[test]
    fn clusters_populate_every_class() {
        let data = sample_data(1, 101, 5);
        assert_eq!(data.len(), 101);
        assert_eq!(data.distinct_labels(), 5);
        data.validate().unwrap();
        for class in 0..5 {
            let count = data.labels.iter().filter(|&&y| y == class).count();
            assert!((20..=21).contains(&count));
        }
    }

    #[test]
    fn partition_weights_double_per_extra_class() {
        let data = sample_data(2, 60, 3);
        let mut rng = crate::rng::data_rng(3);
        let (shards, q) = partition_by_classes(&data, &[1, 2], &mut rng).unwrap();
        assert_relative_eq!(q[0], 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(q[1], 2.0 / 3.0, max_relative = 1e-15);
        assert_eq!(shards[0].distinct_labels(), 1);
        assert_eq!(shards[1].distinct_labels(), 2);
    }

    #[test]
    fn partition_rejects_infeasible_schedules() {
        let data = sample_data(4, 40, 4);
        let mut rng = crate::rng::data_rng(5);
        // Zero classes.
        assert!(partition_by_classes(&data, &[0, 2], &mut rng).is_err());
        // More classes than the data holds.
        assert!(partition_by_classes(&data, &[5], &mut rng).is_err());
        // Slots cannot cover all classes.
        assert!(partition_by_classes(&data, &[1, 1, 1], &mut rng).is_err());
        // Feasible control.
        assert!(partition_by_classes(&data, &[1, 1, 2], &mut rng).is_ok());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        std::fs::write(
            &path,
            "x0,x1,label\n# comment\n0.5, 1.25, 0\n-1.0, 2.0, 1\n3.5, -0.5, 2\n",
        )
        .unwrap();
        let data = load_csv(&path).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.n_features, 2);
        assert_eq!(data.n_classes, 3);
        assert_eq!(data.labels, vec![0, 1, 2]);
        assert_relative_eq!(data.features[0][1], 1.25);

        std::fs::write(&path, "1.0,oops\n").unwrap();
        assert!(load_csv(&path).is_err());
    }

    proptest! {
        // The shards are an exact disjoint cover of the input: sorting the
        // concatenated (features, label) pairs reproduces the source multiset,
        // and every shard hits its scheduled class count.
        #[test]
        fn partition_is_exact_cover(
            seed in 0u64..500,
            classes in 2usize..6,
            devices in 1usize..7,
        ) {
            let data = sample_data(seed, 90, classes);
            let mut rng = crate::rng::data_rng(seed ^ 0xabcd);
            let schedule: Vec<usize> =
                (0..devices).map(|_| rng.random_range(1..=classes)).collect();
            prop_assume!(schedule.iter().sum::<usize>() >= classes);
            // Every holder needs a sample; 90 samples over <=6 classes and
            // <=6 holders per class is always enough.
            let (shards, q) = partition_by_classes(&data, &schedule, &mut rng).unwrap();
            prop_assert_eq!(shards.len(), schedule.len());
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);

            let mut rebuilt: Vec<(Vec<u64>, usize)> = Vec::new();
            for (shard, &m) in shards.iter().zip(&schedule) {
                prop_assert_eq!(shard.distinct_labels(), m);
                prop_assert!(!shard.is_empty());
                for (x, &y) in shard.features.iter().zip(&shard.labels) {
                    rebuilt.push((x.iter().map(|v| v.to_bits()).collect(), y));
                }
            }
            let mut original: Vec<(Vec<u64>, usize)> = data
                .features
                .iter()
                .zip(&data.labels)
                .map(|(x, &y)| (x.iter().map(|v| v.to_bits()).collect(), y))
                .collect();
            rebuilt.sort();
            original.sort();
            prop_assert_eq!(rebuilt, original);
        }
    }
}
