//! Experiment scenarios: data preparation, arms, training and evaluation.
//!
//! Every scenario trains one or more *arms* (a learner plus a set of
//! client datasets) from the same initialization and evaluates each arm on
//! the same held-out episodes. Random streams are derived from the global
//! seed:
//!
//! | stream | label | coordinates |
//! |---|---|---|
//! | train/test split | `split` | none |
//! | client partition | `partition` | none |
//! | initialization | `init` | none |
//! | evaluation episodes | `eval` | group index |
//! | client training | `client` | client id, round |

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use log::{debug, info};

use crate::config::{DataSource, ScenarioConfig, ScenarioKind};
use crate::data::{client_tag, generate_synthetic_with, partition_clients, DatasetManifest};
use crate::episodes::{sample_episodes, split_train_test, Episode, EpisodeSpec, LabeledDataset};
use crate::error::{Error, Result};
use crate::federation::{model_fingerprint, run_training, Checkpoint, ClientState, LocalTraining, ServerState};
use crate::meta::{evaluate, Learner, MetaConfig, MetaParams};
use crate::metrics::{aggregate_with, confusion, indicators, CiMethod, MetricsReport};
use crate::nn::ModelConfig;
use crate::privacy::{calibrate_sigma, CalibrationInputs, PrivacyBudget};
use crate::report::{render_csv, write_atomic, ArmReport, CsvRow, FinalReport, GroupReport};
use crate::rng::stream;

/// Class names treated as the negative (healthy) class.
pub const NEGATIVE_NAMES: [&str; 3] = ["normal", "negative", "healthy"];

fn is_negative(name: &str) -> bool {
    NEGATIVE_NAMES.iter().any(|n| n.eq_ignore_ascii_case(name))
}

/// Episode label scored as positive: the non-negative class with the
/// highest dataset label, or the highest dataset label if every class is
/// negative.
pub fn positive_episode_label(episode: &Episode, class_names: &[String]) -> usize {
    let pick = |allow: &dyn Fn(usize) -> bool| {
        episode
            .class_map
            .iter()
            .enumerate()
            .filter(|(_, &c)| allow(c))
            .max_by_key(|(_, &c)| c)
            .map(|(e, _)| e)
    };
    pick(&|c| !is_negative(&class_names[c])).or_else(|| pick(&|_| true)).unwrap_or(0)
}

/// Held-out episodes of one evaluation subset.
#[derive(Clone, Debug)]
pub struct EvalGroup {
    pub name: String,
    pub episodes: Vec<Episode>,
    pub positives: Vec<usize>,
}

impl EvalGroup {
    pub fn new<R: rand::Rng + ?Sized>(
        name: &str,
        dataset: &LabeledDataset,
        spec: &EpisodeSpec,
        tasks: usize,
        rng: &mut R,
    ) -> Result<EvalGroup> {
        let episodes = sample_episodes(dataset, spec, tasks, rng)?;
        let positives = episodes.iter().map(|e| positive_episode_label(e, &dataset.class_names)).collect();
        Ok(EvalGroup {
            name: name.to_string(),
            episodes,
            positives,
        })
    }

    /// Adapts on each support set and scores the query predictions.
    pub fn score(&self, model: &ModelConfig, meta: &MetaParams, config: &MetaConfig, ci: CiMethod) -> Result<MetricsReport> {
        let preds = evaluate(model, meta, &self.episodes, config)?;
        let per_task = preds
            .iter()
            .zip(&self.positives)
            .map(|(p, &pos)| indicators(&confusion(&p.predictions, &p.labels, pos)?))
            .collect::<Result<Vec<_>>>()?;
        aggregate_with(&per_task, ci)
    }
}

/// A learner trained on a set of client datasets.
#[derive(Clone, Debug)]
pub struct Arm {
    pub name: String,
    pub learner: Learner,
    /// Privacy budget for private learners.
    pub epsilon: Option<f64>,
    pub datasets: Vec<LabeledDataset>,
}

/// Everything needed to train the arms of a scenario.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub model: ModelConfig,
    pub arms: Vec<Arm>,
    pub groups: Vec<EvalGroup>,
}

/// Loads the configured dataset.
pub fn load_dataset(cfg: &ScenarioConfig) -> Result<LabeledDataset> {
    match &cfg.data {
        DataSource::Synthetic(_) => {
            let spec = cfg.synthetic_spec().expect("synthetic source");
            generate_synthetic_with(&spec, cfg.normalization)
        }
        DataSource::Manifest(path) => DatasetManifest::load(path)?.to_dataset_with(cfg.resolution, cfg.normalization),
    }
}

fn modality_of(e: &crate::episodes::Example) -> &str {
    e.tags.first().map(String::as_str).unwrap_or("")
}

fn subset_by_ids(ds: &LabeledDataset, ids: &HashSet<u64>) -> LabeledDataset {
    ds.filter(|e| ids.contains(&e.id))
}

fn client_split(cfg: &ScenarioConfig, train: &LabeledDataset) -> Result<Vec<LabeledDataset>> {
    let m = cfg.clients();
    let assigned = train.examples.iter().all(|e| e.tags.iter().any(|t| t.starts_with("client=")));
    if assigned && !train.is_empty() {
        let parts: Vec<LabeledDataset> = (0..m).map(|c| train.with_tag(&client_tag(c))).collect();
        if let Some(c) = parts.iter().position(LabeledDataset::is_empty) {
            return Err(Error::InsufficientData(format!("manifest assigns no training examples to client {c}")));
        }
        return Ok(parts);
    }
    partition_clients(train, &cfg.ratios, &mut stream(cfg.seed, "partition", &[]))
}

/// Builds the arms and evaluation groups of a scenario.
pub fn prepare(cfg: &ScenarioConfig, dataset: &LabeledDataset) -> Result<Prepared> {
    let model = ModelConfig::new(cfg.model.input_dim, cfg.model.hidden_dims.clone(), cfg.episodes.n_way, cfg.model.batchnorm)?;
    if dataset.input_dim() != Some(model.input_dim) {
        return Err(Error::Dimension(format!(
            "dataset rows have {:?} features, model expects {}",
            dataset.input_dim(),
            model.input_dim
        )));
    }
    let (train, test) = split_train_test(dataset, cfg.split_ratio, &mut stream(cfg.seed, "split", &[]))?;
    let learner = cfg.learner;
    let arm = |name: String, learner: Learner, datasets: Vec<LabeledDataset>| Arm {
        epsilon: (learner == Learner::MetaDpsgd).then_some(cfg.budget.epsilon),
        name,
        learner,
        datasets,
    };

    let mut groups_data: Vec<(String, LabeledDataset)> = vec![("all".into(), test.clone())];
    let arms: Vec<Arm> = match cfg.kind {
        ScenarioKind::Centralized => vec![arm("centralized".into(), learner, vec![train.clone()])],
        ScenarioKind::Federated => {
            let clients = client_split(cfg, &train)?;
            vec![
                arm("centralized".into(), learner, vec![train.clone()]),
                arm(format!("federated-{}", clients.len()), learner, clients),
            ]
        }
        ScenarioKind::PrivacySweep => {
            let clients = client_split(cfg, &train)?;
            let mut arms: Vec<Arm> = cfg
                .sweep_epsilons
                .iter()
                .map(|&eps| Arm {
                    name: format!("eps-{eps}"),
                    learner: Learner::MetaDpsgd,
                    epsilon: Some(eps),
                    datasets: clients.clone(),
                })
                .collect();
            arms.push(arm("no-dp".into(), Learner::MetaSgd, clients));
            arms
        }
        ScenarioKind::MultiModal => {
            let modalities: BTreeSet<&str> = train.examples.iter().map(modality_of).collect();
            if modalities.len() < 2 {
                return Err(Error::InsufficientData("multi-modal scenario needs at least two modalities".into()));
            }
            let clients: Vec<LabeledDataset> = modalities.iter().map(|m| train.with_tag(m)).collect();
            groups_data = modalities.iter().map(|m| (m.to_string(), test.with_tag(m))).collect();
            let mut arms: Vec<Arm> = modalities
                .iter()
                .zip(&clients)
                .map(|(m, d)| arm(format!("single-{m}"), learner, vec![d.clone()]))
                .collect();
            arms.push(arm("federated".into(), learner, clients));
            arms
        }
        ScenarioKind::MultiDisease => {
            let names = &train.class_names;
            let negative = names.iter().position(|n| is_negative(n)).unwrap_or(0);
            let diseases: Vec<usize> = (0..names.len()).filter(|&c| c != negative).collect();
            if diseases.is_empty() {
                return Err(Error::InsufficientData("multi-disease scenario needs a disease class".into()));
            }
            let negatives = train.filter(|e| e.label == negative);
            let shares = partition_clients(&negatives, &vec![1.0; diseases.len()], &mut stream(cfg.seed, "partition", &[]))?;
            let clients: Vec<LabeledDataset> = diseases
                .iter()
                .zip(&shares)
                .map(|(&d, share)| {
                    let mut ids: HashSet<u64> = share.examples.iter().map(|e| e.id).collect();
                    ids.extend(train.examples.iter().filter(|e| e.label == d).map(|e| e.id));
                    subset_by_ids(&train, &ids)
                })
                .collect();
            groups_data = diseases
                .iter()
                .map(|&d| {
                    let pair = [names[negative].as_str(), names[d].as_str()];
                    (names[d].clone(), test.with_classes(&pair))
                })
                .collect();
            let mut arms: Vec<Arm> = diseases
                .iter()
                .zip(&clients)
                .map(|(&d, data)| arm(format!("single-{}", names[d]), learner, vec![data.clone()]))
                .collect();
            if learner == Learner::MetaDpsgd {
                arms.push(arm("federated-no-dp".into(), Learner::MetaSgd, clients.clone()));
            }
            arms.push(arm("federated".into(), learner, clients));
            arms
        }
        ScenarioKind::Unbalanced => {
            let clients = client_split(cfg, &train)?;
            let mut arms: Vec<Arm> = clients
                .iter()
                .enumerate()
                .map(|(i, d)| arm(format!("local-{}", i + 1), learner, vec![d.clone()]))
                .collect();
            arms.push(arm("federated".into(), learner, clients));
            arms
        }
    };

    let groups = groups_data
        .iter()
        .enumerate()
        .map(|(g, (name, data))| {
            EvalGroup::new(name, data, &cfg.episodes, cfg.eval_tasks, &mut stream(cfg.seed, "eval", &[g as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { model, arms, groups })
}

/// Tasks in one pass over a client's data.
pub fn tasks_per_epoch(examples: usize, spec: &EpisodeSpec) -> usize {
    (examples / spec.examples_per_episode()).max(1)
}

/// Noise multiplier of a private client holding `examples` records.
/// One record is one task; the sampling probability is the meta-batch
/// size over the tasks per epoch, and the step count is the total number
/// of meta-batches.
pub fn client_sigma(cfg: &ScenarioConfig, epsilon: f64, examples: usize) -> Result<f64> {
    if let Some(s) = cfg.sigma_override {
        return Ok(s);
    }
    let q = (cfg.meta.tasks_per_batch as f64 / tasks_per_epoch(examples, &cfg.episodes) as f64).min(1.0);
    let inputs = CalibrationInputs {
        sampling_probability: q,
        steps: (cfg.rounds * cfg.batches_per_round as u64).max(1),
        c2: cfg.c2,
        log_base: cfg.log_base,
    };
    calibrate_sigma(&PrivacyBudget::new(epsilon, cfg.budget.delta)?, &inputs)
}

/// Outputs of one arm.
#[derive(Clone, Debug)]
pub struct ArmOutcome {
    pub report: ArmReport,
    pub rows: Vec<CsvRow>,
    pub checkpoint: Checkpoint,
}

fn metric_row(cfg: &ScenarioConfig, arm: &Arm, round: u64, group: &str, sigma: f64, m: &MetricsReport) -> CsvRow {
    CsvRow {
        scenario: cfg.kind.name().into(),
        arm: arm.name.clone(),
        round,
        client_id: format!("eval:{group}"),
        epsilon: arm.epsilon,
        sigma: Some(sigma),
        loss: None,
        accuracy: m.accuracy.mean,
        precision: m.precision.mean,
        recall: m.recall.mean,
        f1: m.f1.mean,
    }
}

/// Trains and evaluates one arm.
pub fn run_arm(cfg: &ScenarioConfig, prepared: &Prepared, order: usize) -> Result<ArmOutcome> {
    let arm = &prepared.arms[order];
    let model = &prepared.model;
    let fingerprint = model_fingerprint(model);
    let initial = cfg.learner_for(arm.learner).init_meta(model, &cfg.meta, &mut stream(cfg.seed, "init", &[]));
    let mut clients = Vec::with_capacity(arm.datasets.len());
    let mut sigmas = Vec::with_capacity(arm.datasets.len());
    for (id, data) in arm.datasets.iter().enumerate() {
        let sigma = match arm.epsilon {
            Some(eps) if arm.learner == Learner::MetaDpsgd => client_sigma(cfg, eps, data.len())?,
            _ => 0.0,
        };
        sigmas.push(sigma);
        let local = LocalTraining {
            learner: arm.learner,
            meta: MetaConfig {
                noise_scale: sigma,
                ..cfg.meta.clone()
            },
            episodes: cfg.episodes,
            batches_per_round: cfg.batches_per_round,
        };
        clients.push(ClientState::new(id as u64, data.clone(), initial.clone(), local)?);
    }
    let eval_config = MetaConfig {
        noise_scale: 0.0,
        ..clients[0].local.meta.clone()
    };
    let arm_sigma = sigmas.iter().cloned().fold(0.0, f64::max);
    info!("arm {}: {} client(s), sigma {:?}", arm.name, clients.len(), sigmas);

    let mut rows = Vec::new();
    let history = run_training(
        model,
        ServerState {
            global_meta: initial,
            round_index: 0,
        },
        &mut clients,
        cfg.rounds,
        fingerprint,
        cfg.seed,
        |server, report| {
            let round = report.round_index;
            for c in &report.clients {
                rows.push(CsvRow {
                    scenario: cfg.kind.name().into(),
                    arm: arm.name.clone(),
                    round,
                    client_id: c.client_id.to_string(),
                    epsilon: arm.epsilon,
                    sigma: Some(c.sigma),
                    loss: Some(c.loss),
                    accuracy: None,
                    precision: None,
                    recall: None,
                    f1: None,
                });
            }
            rows.push(CsvRow {
                scenario: cfg.kind.name().into(),
                arm: arm.name.clone(),
                round,
                client_id: "server".into(),
                epsilon: arm.epsilon,
                sigma: Some(report.sigma),
                loss: Some(report.weighted_loss),
                accuracy: None,
                precision: None,
                recall: None,
                f1: None,
            });
            debug!("arm {} round {round}: loss {}", arm.name, report.weighted_loss);
            if cfg.eval_every > 0 && round % cfg.eval_every == 0 && round < cfg.rounds {
                for g in &prepared.groups {
                    let m = g.score(model, &server.global_meta, &eval_config, cfg.ci)?;
                    rows.push(metric_row(cfg, arm, round, &g.name, report.sigma, &m));
                }
            }
            Ok(())
        },
    )?;

    let final_meta = history.server.global_meta;
    let mut groups = Vec::with_capacity(prepared.groups.len());
    for g in &prepared.groups {
        let m = g.score(model, &final_meta, &eval_config, cfg.ci)?;
        rows.push(metric_row(cfg, arm, cfg.rounds, &g.name, arm_sigma, &m));
        info!("arm {} group {}: accuracy {}", arm.name, g.name, m.accuracy.display());
        groups.push(GroupReport {
            group: g.name.clone(),
            metrics: m,
        });
    }
    let checkpoint = Checkpoint {
        fingerprint,
        round: history.server.round_index,
        meta: final_meta,
    };
    Ok(ArmOutcome {
        report: ArmReport {
            arm: arm.name.clone(),
            order,
            learner: arm.learner.name().into(),
            epsilon: arm.epsilon,
            sigma: sigmas,
            clients: arm.datasets.len(),
            checkpoint_checksum: checkpoint.checksum(),
            groups,
        },
        rows,
        checkpoint,
    })
}

/// In-memory result of a scenario run.
#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub report: FinalReport,
    pub rounds_csv: String,
    /// `(arm name, checkpoint)` in arm order.
    pub checkpoints: Vec<(String, Checkpoint)>,
    pub resolved_config: String,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let dataset = load_dataset(cfg)?;
    let prepared = prepare(cfg, &dataset)?;
    let mut rows = Vec::new();
    let mut arms = Vec::new();
    let mut checkpoints = Vec::new();
    for order in 0..prepared.arms.len() {
        let out = run_arm(cfg, &prepared, order)?;
        rows.extend(out.rows);
        checkpoints.push((out.report.arm.clone(), out.checkpoint));
        arms.push(out.report);
    }
    Ok(ScenarioOutcome {
        report: FinalReport {
            scenario: cfg.kind.name().into(),
            seed: cfg.seed,
            rounds: cfg.rounds,
            arms,
        },
        rounds_csv: render_csv(&rows),
        checkpoints,
        resolved_config: cfg.to_text(),
    })
}

impl ScenarioOutcome {
    /// Writes `rounds.csv`, `final_report.json`, `resolved_config.ini` and
    /// `checkpoints/<arm>.ckpt` under `dir`, each atomically.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let ckpt_dir = dir.join("checkpoints");
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
        write_atomic(&dir.join("resolved_config.ini"), self.resolved_config.as_bytes())?;
        write_atomic(&dir.join("rounds.csv"), self.rounds_csv.as_bytes())?;
        write_atomic(&dir.join("final_report.json"), self.report.to_json().as_bytes())?;
        for (arm, ckpt) in &self.checkpoints {
            ckpt.save(&ckpt_dir.join(format!("{arm}.ckpt")))?;
        }
        Ok(())
    }
}

impl ScenarioConfig {
    /// Learner used for initialization. Private and non-private arms share
    /// the Meta-SGD initialization so that they start from the same point.
    fn learner_for(&self, learner: Learner) -> Learner {
        match learner {
            Learner::MetaDpsgd => Learner::MetaSgd,
            other => other,
        }
    }
}
