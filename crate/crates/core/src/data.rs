//! Synthetic datasets and client partitions.
//!
//! Experiments run on seeded Gaussian blobs: one unit-norm mean per class,
//! isotropic spread, 80/20 train/test split per class. The training set is
//! dealt to clients by piece-splitting — each class is cut into equal pieces
//! and every client receives pieces of a scheme-dependent number of distinct
//! classes — which produces the label-skew ladder from one class per client
//! up to fully iid. Each client then donates a γ-fraction of every class it
//! holds to a server-visible shared shard.
//!
//! A loader for the classic big-endian IDX image/label binary pair is
//! provided for running on real digit data instead.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::model::Batch;
use crate::seed::{self, purpose};
use crate::{Error, Result};

/// One labelled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A train/test split with known geometry.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dim: usize,
    pub num_classes: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// True class means (unit norm for blobs; empirical for loaded data).
    pub class_means: Vec<Vec<f64>>,
}

/// Geometry of a synthetic blob dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub dim: usize,
    /// Samples per class before the 80/20 train/test split.
    pub per_class: usize,
    /// Isotropic standard deviation around each class mean.
    pub spread: f64,
}

/// How labels skew across clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionScheme {
    /// One class per client.
    #[serde(rename = "non-iid-1")]
    NonIid1,
    /// Two classes per client.
    #[serde(rename = "non-iid-2")]
    NonIid2,
    /// Half of the classes per client.
    #[serde(rename = "non-iid-3")]
    NonIid3,
    /// Every class on every client.
    #[serde(rename = "iid")]
    Iid,
}

impl PartitionScheme {
    /// Distinct classes dealt to each client.
    pub fn classes_per_client(self, num_classes: usize) -> usize {
        match self {
            PartitionScheme::NonIid1 => 1,
            PartitionScheme::NonIid2 => 2,
            PartitionScheme::NonIid3 => (num_classes / 2).max(1),
            PartitionScheme::Iid => num_classes,
        }
    }

    pub const ALL: [PartitionScheme; 4] = [
        PartitionScheme::NonIid1,
        PartitionScheme::NonIid2,
        PartitionScheme::NonIid3,
        PartitionScheme::Iid,
    ];
}

/// One client's local data. `shared` is empty until [`extract_shared`] runs.
#[derive(Debug, Clone)]
pub struct ClientData {
    pub client_id: usize,
    pub private: Vec<Sample>,
    pub shared: Vec<Sample>,
}

impl ClientData {
    /// Fraction of this client's data sitting in the shared shard.
    pub fn share_rate(&self) -> f64 {
        let total = self.private.len() + self.shared.len();
        self.shared.len() as f64 / total as f64
    }
}

/// Seeded Gaussian blobs: class means drawn from the unit sphere, samples
/// mean + spread * N(0, I), split 80/20 into train/test per class.
pub fn make_blobs(spec: &BlobSpec, seed_value: u64) -> Result<Dataset> {
    if spec.num_classes == 0 || spec.dim == 0 {
        return Err(Error::InvalidArgument("blob dims must be positive".into()));
    }
    if spec.per_class < 5 {
        return Err(Error::InvalidArgument(
            "need at least 5 samples per class for an 80/20 split".into(),
        ));
    }
    if !(spec.spread.is_finite() && spec.spread > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bad spread {}",
            spec.spread
        )));
    }
    let mut rng = seed::rng(seed_value);
    let mut class_means: Vec<Vec<f64>> = Vec::with_capacity(spec.num_classes);
    for _ in 0..spec.num_classes {
        // Unit-norm direction; redraw in the (measure-zero) degenerate case.
        loop {
            let v: Vec<f64> = (0..spec.dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                class_means.push(v.into_iter().map(|x| x / norm).collect());
                break;
            }
        }
    }
    let train_per_class = spec.per_class * 4 / 5;
    let mut train = Vec::with_capacity(train_per_class * spec.num_classes);
    let mut test = Vec::with_capacity((spec.per_class - train_per_class) * spec.num_classes);
    for (label, mean) in class_means.iter().enumerate() {
        for i in 0..spec.per_class {
            let features: Vec<f64> = mean
                .iter()
                .map(|&m| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    m + spec.spread * noise
                })
                .collect();
            let sample = Sample { features, label };
            if i < train_per_class {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Ok(Dataset {
        dim: spec.dim,
        num_classes: spec.num_classes,
        train,
        test,
        class_means,
    })
}

/// A dataset with the same geometry but independently drawn class means,
/// used to pretrain the anomaly detector on a related-but-different task.
pub fn make_source_domain(spec: &BlobSpec, seed_value: u64) -> Result<Dataset> {
    make_blobs(spec, seed::child_seed(seed_value, &[purpose::SOURCE]))
}

/// How to deal the training set to clients.
#[derive(Debug, Clone, Copy)]
pub struct PartitionSpec {
    pub scheme: PartitionScheme,
    pub num_clients: usize,
    pub seed: u64,
}

/// Piece-splitting partition: each class's training data is shuffled and cut
/// into `num_clients * classes_per_client / num_classes` equal pieces (the
/// remainder is dropped); client j receives one piece of each of the
/// `classes_per_client` classes following j's slot in a seeded class
/// permutation, so every piece lands on exactly one client.
pub fn partition(dataset: &Dataset, spec: &PartitionSpec) -> Result<Vec<ClientData>> {
    let c = dataset.num_classes;
    let cpc = spec.scheme.classes_per_client(c);
    if spec.num_clients == 0 {
        return Err(Error::InvalidArgument("need at least one client".into()));
    }
    if cpc > c {
        return Err(Error::InfeasiblePartition(format!(
            "{cpc} classes per client exceeds {c} classes"
        )));
    }
    let slots = spec.num_clients * cpc;
    if slots % c != 0 {
        return Err(Error::InfeasiblePartition(format!(
            "{} clients x {cpc} classes per client is not a multiple of {c} classes",
            spec.num_clients
        )));
    }
    let pieces_per_class = slots / c;

    // Shuffle each class's sample indices and cut into equal pieces.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, s) in dataset.train.iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut pieces: Vec<Vec<Vec<usize>>> = Vec::with_capacity(c);
    for (label, mut idx) in by_class.into_iter().enumerate() {
        let piece_len = idx.len() / pieces_per_class;
        if piece_len == 0 {
            return Err(Error::InfeasiblePartition(format!(
                "class {label} has {} training samples for {pieces_per_class} pieces",
                idx.len()
            )));
        }
        idx.shuffle(&mut seed::rng(seed::child_seed(
            spec.seed,
            &[purpose::PARTITION, 1, label as u64],
        )));
        pieces.push(
            (0..pieces_per_class)
                .map(|p| idx[p * piece_len..(p + 1) * piece_len].to_vec())
                .collect(),
        );
    }

    // Deal pieces round-robin over a seeded class permutation, cycling over
    // the flattened slot index so every class hands out exactly
    // `pieces_per_class` pieces whatever the client/class ratio.
    let mut class_order: Vec<usize> = (0..c).collect();
    class_order.shuffle(&mut seed::rng(seed::child_seed(
        spec.seed,
        &[purpose::PARTITION, 0],
    )));
    let mut next_piece = vec![0usize; c];
    let mut clients = Vec::with_capacity(spec.num_clients);
    for client_id in 0..spec.num_clients {
        let mut private = Vec::new();
        for s in 0..cpc {
            let label = class_order[(client_id * cpc + s) % c];
            let piece = &pieces[label][next_piece[label]];
            next_piece[label] += 1;
            private.extend(piece.iter().map(|&i| dataset.train[i].clone()));
        }
        clients.push(ClientData {
            client_id,
            private,
            shared: Vec::new(),
        });
    }
    debug_assert!(next_piece.iter().all(|&n| n == pieces_per_class));
    Ok(clients)
}

/// Move `round(gamma * class_count)` seeded-random samples of every class
/// from the client's private data into its shared shard. Errors if the
/// rounding leaves the shard empty.
pub fn extract_shared(client: ClientData, gamma: f64, seed_value: u64) -> Result<ClientData> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("share rate {gamma}")));
    }
    let ClientData {
        client_id,
        private,
        mut shared,
    } = client;
    if !shared.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "client {client_id} already has a shared shard"
        )));
    }
    let max_label = private.iter().map(|s| s.label).max().unwrap_or(0);
    let mut to_share: Vec<bool> = vec![false; private.len()];
    for label in 0..=max_label {
        let idx: Vec<usize> = (0..private.len())
            .filter(|&i| private[i].label == label)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let take = (gamma * idx.len() as f64).round() as usize;
        let mut order = idx.clone();
        order.shuffle(&mut seed::rng(seed::child_seed(
            seed_value,
            &[purpose::SHARED, client_id as u64, label as u64],
        )));
        for &i in order.iter().take(take) {
            to_share[i] = true;
        }
    }
    let mut kept = Vec::with_capacity(private.len());
    for (i, s) in private.into_iter().enumerate() {
        if to_share[i] {
            shared.push(s);
        } else {
            kept.push(s);
        }
    }
    if shared.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "share rate {gamma} rounds to an empty shared shard for client {client_id}"
        )));
    }
    Ok(ClientData {
        client_id,
        private: kept,
        shared,
    })
}

/// Pack samples into a labelled batch.
pub fn to_batch(samples: &[Sample]) -> Result<Batch> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    Batch::new(Matrix::from_rows(rows)?, labels)
}

// ─── IDX binary loader ──────────────────────────────────────────────────────

fn read_be_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse one IDX image file (magic 0x00000803) and its label file (magic
/// 0x00000801) into samples with pixel features scaled to [0, 1].
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Vec<Sample>> {
    let mut img = std::io::BufReader::new(std::fs::File::open(images)?);
    if read_be_u32(&mut img)? != 0x0803 {
        return Err(Error::InvalidArgument(format!(
            "{}: not an IDX image file",
            images.display()
        )));
    }
    let count = read_be_u32(&mut img)? as usize;
    let rows = read_be_u32(&mut img)? as usize;
    let cols = read_be_u32(&mut img)? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    img.read_exact(&mut pixels)?;

    let mut lab = std::io::BufReader::new(std::fs::File::open(labels)?);
    if read_be_u32(&mut lab)? != 0x0801 {
        return Err(Error::InvalidArgument(format!(
            "{}: not an IDX label file",
            labels.display()
        )));
    }
    let lab_count = read_be_u32(&mut lab)? as usize;
    if lab_count != count {
        return Err(Error::ShapeMismatch {
            what: "idx labels",
            got: lab_count,
            expected: count,
        });
    }
    let mut label_bytes = vec![0u8; count];
    lab.read_exact(&mut label_bytes)?;

    let dim = rows * cols;
    Ok((0..count)
        .map(|i| Sample {
            features: pixels[i * dim..(i + 1) * dim]
                .iter()
                .map(|&p| p as f64 / 255.0)
                .collect(),
            label: label_bytes[i] as usize,
        })
        .collect())
}

/// Load a full train/test dataset from two IDX pairs.
pub fn load_idx_dataset(
    train_images: &Path,
    train_labels: &Path,
    test_images: &Path,
    test_labels: &Path,
) -> Result<Dataset> {
    let train = load_idx_pair(train_images, train_labels)?;
    let test = load_idx_pair(test_images, test_labels)?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty IDX training set".into()));
    }
    let dim = train[0].features.len();
    let num_classes = train
        .iter()
        .chain(&test)
        .map(|s| s.label)
        .max()
        .unwrap_or(0)
        + 1;
    // Empirical class means stand in for the generative ones.
    let mut class_means = vec![vec![0.0; dim]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for s in &train {
        counts[s.label] += 1;
        for (m, &x) in class_means[s.label].iter_mut().zip(&s.features) {
            *m += x;
        }
    }
    for (mean, &n) in class_means.iter_mut().zip(&counts) {
        if n > 0 {
            for m in mean {
                *m /= n as f64;
            }
        }
    }
    Ok(Dataset {
        dim,
        num_classes,
        train,
        test,
        class_means,
    })
}
