//! Federated-round orchestration.
//!
//! [`Experiment::prepare`] freezes everything derivable from the config and
//! master seed: the dataset, the per-client partition with shared shards,
//! the fixed Byzantine subset, and the task model. [`Experiment::run`] then
//! plays `rounds` server rounds — sample clients, train locally, apply the
//! attack to Byzantine members, dispatch to the configured defense, refresh
//! the global model, evaluate on the test split — and returns the metric
//! stream plus the final model and detector.
//!
//! Every random draw is a child of the master seed keyed by purpose, round,
//! and client id, so a run is a pure function of its config.

use std::path::Path;
use std::time::Instant;

use crate::attack::{apply_attack, plan_round, AttackKind, AttackSpec, RoundPlan};
use crate::brca::{aggregate, assess, unified_update, ClientUpdate, CredibilityReport};
use crate::config::ExperimentConfig;
use crate::data::{
    extract_shared, load_idx_dataset, make_blobs, make_source_domain, partition, to_batch,
    ClientData, Dataset, PartitionSpec,
};
use crate::defense::{
    abnormal_aggregate, fedavg, geomed, krum, trimmed_mean, DefenseKind,
};
use crate::detector::DetectorState;
use crate::metrics::{detection_prf, detector_bce, RoundMetrics};
use crate::model::{Batch, ModelSpec};
use crate::params::ParamVector;
use crate::seed::{self, purpose};
use crate::{Error, Result};

/// Everything a finished run hands back.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<RoundMetrics>,
    pub model: ParamVector,
    pub detector: Option<DetectorState>,
}

/// Train one client's local model: `epochs` SGD passes over its private
/// data, starting from the current global parameters.
pub fn client_train(
    model: &ModelSpec,
    global: &ParamVector,
    client_id: usize,
    private: &Batch,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed_value: u64,
) -> Result<ClientUpdate> {
    if private.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "client {client_id} has no private data"
        )));
    }
    let mut params = global.clone();
    for epoch in 0..epochs {
        params = model.sgd_epoch(
            &params,
            private,
            lr,
            batch_size,
            seed::child_seed(seed_value, &[epoch as u64]),
        )?;
    }
    let probe = params.block(&model.probe_block)?.to_vec();
    Ok(ClientUpdate {
        client_id,
        params,
        probe,
    })
}

/// A prepared experiment: immutable data and plans shared by every round.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    model: ModelSpec,
    dataset: Dataset,
    clients: Vec<ClientData>,
    private_batches: Vec<Batch>,
    shared_batches: Vec<Batch>,
    test_batch: Batch,
    byzantine: Vec<usize>,
    attack: AttackSpec,
}

impl Experiment {
    /// Build the dataset, partition it, carve out shared shards, and fix the
    /// Byzantine subset.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let master = config.seed;
        let dataset = if config.data_idx.is_complete() {
            load_idx_dataset(
                Path::new(&config.data_idx.train_images),
                Path::new(&config.data_idx.train_labels),
                Path::new(&config.data_idx.test_images),
                Path::new(&config.data_idx.test_labels),
            )?
        } else {
            make_blobs(&config.blob_spec(), seed::child_seed(master, &[purpose::DATA]))?
        };
        let model = config.model_spec()?;
        if dataset.dim != model.input_dim || dataset.num_classes != model.output_dim {
            return Err(Error::InvalidConfig(format!(
                "dataset ({} dims, {} classes) does not match the model ({} in, {} out); \
                 set data.dim and data.num_classes to the dataset's shape",
                dataset.dim, dataset.num_classes, model.input_dim, model.output_dim
            )));
        }
        let raw_clients = partition(
            &dataset,
            &PartitionSpec {
                scheme: config.data_scheme,
                num_clients: config.n,
                seed: master,
            },
        )?;
        let clients: Result<Vec<ClientData>> = raw_clients
            .into_iter()
            .map(|c| extract_shared(c, config.gamma, master))
            .collect();
        let clients = clients?;
        let private_batches: Result<Vec<Batch>> =
            clients.iter().map(|c| to_batch(&c.private)).collect();
        let shared_batches: Result<Vec<Batch>> =
            clients.iter().map(|c| to_batch(&c.shared)).collect();
        let test_batch = to_batch(&dataset.test)?;
        let byzantine = crate::attack::byzantine_subset(config.n, config.xi, master);
        let attack = config.attack_spec();
        Ok(Self {
            config,
            model,
            dataset,
            clients,
            private_batches: private_batches?,
            shared_batches: shared_batches?,
            test_batch,
            byzantine,
            attack,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn clients(&self) -> &[ClientData] {
        &self.clients
    }

    /// The experiment-level Byzantine subset (sorted client ids).
    pub fn byzantine(&self) -> &[usize] {
        &self.byzantine
    }

    /// Width of the probe slice the detector inspects.
    pub fn probe_dim(&self) -> Result<usize> {
        Ok(self
            .model
            .init_params(0)
            .block(&self.model.probe_block)?
            .len())
    }

    fn initial_global(&self) -> ParamVector {
        self.model
            .init_params(seed::child_seed(self.config.seed, &[purpose::MODEL_INIT]))
    }

    /// Run attack-free federated rounds over the given client batches and
    /// collect every trained client's probe slice.
    fn harvest_clean_probes(
        &self,
        private_batches: &[Batch],
        rounds: usize,
        domain_tag: u64,
    ) -> Result<Vec<Vec<f64>>> {
        let c = &self.config;
        let master = c.seed;
        let mut global = self
            .model
            .init_params(seed::child_seed(master, &[purpose::WARMUP, domain_tag]));
        let sizes: Vec<f64> = private_batches.iter().map(|b| b.len() as f64).collect();
        let total: f64 = sizes.iter().sum();
        let weights: Vec<f64> = sizes.iter().map(|s| s / total).collect();
        let mut probes = Vec::with_capacity(rounds * private_batches.len());
        for round in 0..rounds as u64 {
            let mut updates = Vec::with_capacity(private_batches.len());
            for (id, private) in private_batches.iter().enumerate() {
                let update = client_train(
                    &self.model,
                    &global,
                    id,
                    private,
                    c.epochs_client,
                    c.lr_client,
                    c.batch_size,
                    seed::child_seed(master, &[purpose::WARMUP, domain_tag, round, id as u64]),
                )?;
                probes.push(update.probe.clone());
                updates.push(update.params);
            }
            global = fedavg(&updates, &weights)?;
        }
        Ok(probes)
    }

    /// Pretrain a detector for the credibility defense: generate the related
    /// source-domain dataset, run clean warm-up rounds on it, and train the
    /// autoencoder on the harvested honest probes.
    pub fn pretrain_detector(&self) -> Result<DetectorState> {
        let c = &self.config;
        let source = make_source_domain(&c.blob_spec(), c.seed)?;
        let source_clients = partition(
            &source,
            &PartitionSpec {
                scheme: c.data_scheme,
                num_clients: c.n,
                seed: seed::child_seed(c.seed, &[purpose::SOURCE]),
            },
        )?;
        let source_batches: Result<Vec<Batch>> =
            source_clients.iter().map(|cl| to_batch(&cl.private)).collect();
        let probes = self.harvest_clean_probes(&source_batches?, c.pretrain_rounds, 0)?;
        let mut detector = DetectorState::new(self.probe_dim()?, c.lr_detection, c.seed)?;
        detector.pretrain(&probes, c.pretrain_epochs, c.seed)?;
        Ok(detector)
    }

    /// Pretrain the static detector for the detection-only baseline on clean
    /// warm-up rounds over the *target* clients.
    pub fn warmup_detector(&self) -> Result<DetectorState> {
        let c = &self.config;
        let probes = self.harvest_clean_probes(&self.private_batches, c.pretrain_rounds, 1)?;
        let mut detector = DetectorState::new(self.probe_dim()?, c.lr_detection, c.seed)?;
        detector.pretrain(&probes, c.pretrain_epochs, c.seed)?;
        Ok(detector)
    }

    /// The detector the configured defense needs, if any.
    pub fn make_detector(&self) -> Result<Option<DetectorState>> {
        match self.config.defense_kind {
            DefenseKind::Brca => Ok(Some(self.pretrain_detector()?)),
            DefenseKind::Abnormal => Ok(Some(self.warmup_detector()?)),
            _ => Ok(None),
        }
    }

    /// Collect one round's updates: sample, train honest members, replace or
    /// perturb Byzantine ones, and reject anything non-finite at ingress.
    fn gather_updates(
        &self,
        round: u64,
        global: &ParamVector,
        plan: &RoundPlan,
    ) -> Result<Vec<ClientUpdate>> {
        let c = &self.config;
        let mut updates = Vec::with_capacity(plan.selected.len());
        for &id in &plan.selected {
            let byz = plan.is_byzantine(id);
            // A same-value attacker's payload ignores its training entirely,
            // so skip the wasted work.
            let mut update = if byz && self.attack.kind == AttackKind::SameValue {
                ClientUpdate {
                    client_id: id,
                    params: global.clone(),
                    probe: Vec::new(),
                }
            } else {
                client_train(
                    &self.model,
                    global,
                    id,
                    &self.private_batches[id],
                    c.epochs_client,
                    c.lr_client,
                    c.batch_size,
                    seed::child_seed(c.seed, &[purpose::CLIENT_TRAIN, round, id as u64]),
                )?
            };
            if byz {
                update.params =
                    apply_attack(&update.params, &self.attack.seeded_for(c.seed, round, id));
                update.probe = update.params.block(&self.model.probe_block)?.to_vec();
            }
            if !update.params.is_finite() {
                return Err(Error::NonFinite(format!(
                    "round {round}: update from client {id} rejected at ingress"
                )));
            }
            updates.push(update);
        }
        Ok(updates)
    }

    /// Advance one round. Returns the next global model and the round's
    /// metrics; `detector` must be `Some` for the defenses that use one.
    pub fn run_round(
        &self,
        round: u64,
        global: &ParamVector,
        detector: Option<&mut DetectorState>,
    ) -> Result<(ParamVector, RoundMetrics)> {
        let started = Instant::now();
        let c = &self.config;
        let plan = plan_round(c.n, c.k, c.xi, round, c.seed)?;
        let updates = self.gather_updates(round, global, &plan)?;

        let needs_detector = || {
            Error::InvalidConfig(format!(
                "defense {} requires a pretrained detector",
                c.defense_kind.name()
            ))
        };
        let params_of = |ups: &[ClientUpdate]| -> Vec<ParamVector> {
            ups.iter().map(|u| u.params.clone()).collect()
        };

        let (next, report): (ParamVector, Option<CredibilityReport>) = match c.defense_kind {
            DefenseKind::Brca => {
                let det = detector.ok_or_else(needs_detector)?;
                let report = assess(
                    &self.model,
                    &updates,
                    &self.shared_batches,
                    det,
                    c.beta,
                    c.d,
                )?;
                let mut next = aggregate(global, &updates, &report.credibility, c.alpha)?;
                if c.defense_unified_update && c.epochs_server > 0 {
                    let shards: Vec<(usize, &Batch)> = report
                        .honest
                        .iter()
                        .map(|&id| (id, &self.shared_batches[id]))
                        .collect();
                    next = unified_update(
                        &self.model,
                        &next,
                        &shards,
                        c.epochs_server,
                        c.lr_server,
                    )?;
                }
                (next, Some(report))
            }
            DefenseKind::Abnormal => {
                let det = detector.ok_or_else(needs_detector)?;
                let (next, report) = abnormal_aggregate(global, &updates, det, c.alpha)?;
                (next, Some(report))
            }
            DefenseKind::NoDefense => {
                let sizes: Vec<f64> = plan
                    .selected
                    .iter()
                    .map(|&id| self.clients[id].private.len() as f64)
                    .collect();
                let total: f64 = sizes.iter().sum();
                let weights: Vec<f64> = sizes.iter().map(|s| s / total).collect();
                (fedavg(&params_of(&updates), &weights)?, None)
            }
            DefenseKind::Krum => (
                krum(&params_of(&updates), self.config.assumed_byzantine())?,
                None,
            ),
            DefenseKind::Geomed => (
                geomed(
                    &params_of(&updates),
                    c.defense_weiszfeld_tol,
                    c.defense_weiszfeld_max_iters,
                )?,
                None,
            ),
            DefenseKind::TrimmedMean => (
                trimmed_mean(&params_of(&updates), self.config.trim_fraction())?,
                None,
            ),
        };

        if !next.is_finite() {
            return Err(Error::NonFinite(format!(
                "round {round}: global model non-finite after {} aggregation",
                c.defense_kind.name()
            )));
        }

        let eval = self.model.evaluate(&next, &self.test_batch)?;
        let metrics = match report {
            Some(report) => {
                let bce =
                    detector_bce(&report.client_ids, &report.detection_scores, &plan.byzantine);
                let (precision, recall) =
                    detection_prf(&report.client_ids, &report.credibility, &plan.byzantine);
                let mut credibilities: Vec<(usize, f64)> = report
                    .client_ids
                    .iter()
                    .copied()
                    .zip(report.credibility.iter().copied())
                    .collect();
                credibilities.sort_by_key(|&(id, _)| id);
                RoundMetrics {
                    round: round as usize,
                    accuracy: eval.accuracy,
                    loss: eval.loss,
                    bce,
                    precision: Some(precision),
                    recall: Some(recall),
                    credibilities: Some(credibilities),
                    honest_set: Some(report.honest),
                    wall_time_ms: started.elapsed().as_millis() as u64,
                }
            }
            None => RoundMetrics {
                round: round as usize,
                accuracy: eval.accuracy,
                loss: eval.loss,
                bce: None,
                precision: None,
                recall: None,
                credibilities: None,
                honest_set: None,
                wall_time_ms: started.elapsed().as_millis() as u64,
            },
        };
        Ok((next, metrics))
    }

    /// Play every round. Pass the pretrained detector for the defenses that
    /// need one (see [`Experiment::make_detector`]).
    pub fn run(&self, mut detector: Option<DetectorState>) -> Result<RunOutput> {
        let mut global = self.initial_global();
        let mut metrics = Vec::with_capacity(self.config.rounds);
        for round in 0..self.config.rounds as u64 {
            let (next, round_metrics) = self.run_round(round, &global, detector.as_mut())?;
            global = next;
            metrics.push(round_metrics);
        }
        Ok(RunOutput {
            metrics,
            model: global,
            detector,
        })
    }
}
