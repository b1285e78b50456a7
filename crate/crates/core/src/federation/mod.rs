//! Simulated federated training: clients run private meta-learning on their
//! own data, the server aggregates with FedAvg and broadcasts the result.
//!
//! Client randomness in round `r` comes from
//! [`rng::client_stream`](crate::rng::client_stream)`(seed, client_id, r)`
//! and the server sums uploads in ascending client-id order, so results do
//! not depend on how clients are scheduled across threads.

mod checkpoint;

use rayon::prelude::*;

use crate::episodes::{sample_episodes, EpisodeSpec, LabeledDataset};
use crate::error::{Error, Result};
use crate::meta::{Learner, MetaConfig, MetaParams, Objective};
use crate::nn::ParamVector;
use crate::rng::{client_stream, SimRng};
pub use checkpoint::{checksum_bytes, model_fingerprint, Checkpoint, FORMAT_VERSION, MAGIC};

/// How a client trains between two aggregations.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTraining {
    pub learner: Learner,
    pub meta: MetaConfig,
    pub episodes: EpisodeSpec,
    /// Meta-batches per communication round.
    pub batches_per_round: usize,
}

impl LocalTraining {
    /// Noise multiplier actually applied by this client.
    pub fn sigma(&self) -> f64 {
        match self.learner {
            Learner::MetaDpsgd => self.meta.noise_scale,
            _ => 0.0,
        }
    }
}

/// A participant holding a private dataset. The dataset never leaves the
/// client: the only outputs of local training are parameters.
#[derive(Clone, Debug)]
pub struct ClientState {
    pub client_id: u64,
    dataset: LabeledDataset,
    pub meta: MetaParams,
    pub local: LocalTraining,
}

impl ClientState {
    pub fn new(client_id: u64, dataset: LabeledDataset, meta: MetaParams, local: LocalTraining) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Federation(format!("client {client_id} has an empty dataset")));
        }
        Ok(ClientState {
            client_id,
            dataset,
            meta,
            local,
        })
    }

    /// `m_i`, the FedAvg weight of this client.
    pub fn dataset_size(&self) -> usize {
        self.dataset.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    pub global_meta: MetaParams,
    pub round_index: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientRoundStats {
    pub client_id: u64,
    pub dataset_size: usize,
    /// Mean post-adaptation query loss over the client's meta-batches.
    pub loss: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport {
    /// Index of the completed round, starting at 1.
    pub round_index: u64,
    pub clients: Vec<ClientRoundStats>,
    /// Dataset-size weighted mean of the client losses.
    pub weighted_loss: f64,
    /// Checksum of the aggregated checkpoint.
    pub checksum: String,
    /// Largest noise multiplier used by any client this round.
    pub sigma: f64,
}

/// Dataset-size weighted mean of `(theta, alpha)`, accumulated in the
/// order given (callers pass clients in ascending id order).
///
/// The mean is formed as `p_0 + sum_i w_i (p_i - p_0)`, which returns the
/// input bitwise whenever all inputs are identical, for any weights.
pub fn fedavg(params: &[&MetaParams], weights: &[f64]) -> Result<MetaParams> {
    if params.is_empty() {
        return Err(Error::Federation("nothing to aggregate".into()));
    }
    if params.len() != weights.len() {
        return Err(Error::Federation(format!(
            "{} parameter sets but {} weights",
            params.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::Federation(format!("weights must be positive, got {w}")));
    }
    let n = params[0].len();
    if params.iter().any(|p| p.theta.len() != n || p.alpha.len() != n) {
        return Err(Error::Federation("parameter vectors differ in length".into()));
    }
    let total: f64 = weights.iter().sum();
    let norm: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let combine = |pick: fn(&MetaParams) -> &ParamVector| -> ParamVector {
        let base = pick(params[0]);
        let mut acc = vec![0.0; n];
        for (p, &w) in params.iter().zip(&norm).skip(1) {
            for ((a, v), b) in acc.iter_mut().zip(pick(p).iter()).zip(base.iter()) {
                *a += w * (v - b);
            }
        }
        base.iter().zip(acc).map(|(b, a)| b + a).collect::<Vec<f64>>().into()
    };
    Ok(MetaParams {
        theta: combine(|m| &m.theta),
        alpha: combine(|m| &m.alpha),
    })
}

/// Starts from `global` and runs `batches` meta-batches on the client's
/// own episodes. Returns the updated parameters and one mean query loss
/// per meta-batch.
pub fn local_round<O: Objective + ?Sized>(
    model: &O,
    client: &ClientState,
    global: &MetaParams,
    batches: usize,
    rng: &mut SimRng,
) -> Result<(MetaParams, Vec<f64>)> {
    let local = &client.local;
    let mut meta = global.clone();
    let mut trace = Vec::with_capacity(batches);
    for _ in 0..batches {
        let episodes = sample_episodes(&client.dataset, &local.episodes, local.meta.tasks_per_batch, rng)?;
        let (next, loss) = local.learner.step(model, &meta, &episodes, &local.meta, rng)?;
        meta = next;
        trace.push(loss);
    }
    Ok((meta, trace))
}

/// One synchronous communication round over all clients.
pub fn run_round<O: Objective + ?Sized>(
    model: &O,
    server: &ServerState,
    clients: &mut [ClientState],
    fingerprint: u64,
    seed: u64,
) -> Result<(ServerState, RoundReport)> {
    if clients.is_empty() {
        return Err(Error::Federation("a round needs at least one client".into()));
    }
    let mut ids: Vec<u64> = clients.iter().map(|c| c.client_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Federation("client ids must be unique".into()));
    }
    let round = server.round_index;
    let global = &server.global_meta;

    // each client uploads its parameters in checkpoint encoding
    let uploads: Vec<(u64, Vec<u8>, ClientRoundStats)> = clients
        .par_iter()
        .map(|client| {
            let mut rng = client_stream(seed, client.client_id, round);
            let (meta, trace) = local_round(model, client, global, client.local.batches_per_round, &mut rng)?;
            let loss = if trace.is_empty() {
                f64::NAN
            } else {
                trace.iter().sum::<f64>() / trace.len() as f64
            };
            let bytes = Checkpoint {
                fingerprint,
                round,
                meta,
            }
            .encode();
            let stats = ClientRoundStats {
                client_id: client.client_id,
                dataset_size: client.dataset_size(),
                loss,
                sigma: client.local.sigma(),
            };
            Ok((client.client_id, bytes, stats))
        })
        .collect::<Result<_>>()?;

    let mut received: Vec<(u64, MetaParams, ClientRoundStats)> = uploads
        .into_iter()
        .map(|(id, bytes, stats)| {
            let ck = Checkpoint::decode(&bytes)?;
            if ck.fingerprint != fingerprint || ck.round != round {
                return Err(Error::Federation(format!(
                    "client {id} uploaded parameters for another model or round"
                )));
            }
            Ok((id, ck.meta, stats))
        })
        .collect::<Result<_>>()?;
    received.sort_by_key(|(id, _, _)| *id);

    let weights: Vec<f64> = received.iter().map(|(_, _, s)| s.dataset_size as f64).collect();
    let refs: Vec<&MetaParams> = received.iter().map(|(_, m, _)| m).collect();
    let aggregated = fedavg(&refs, &weights)?;

    let total: f64 = weights.iter().sum();
    let weighted_loss = received
        .iter()
        .map(|(_, _, s)| s.loss * s.dataset_size as f64 / total)
        .sum();
    let next = ServerState {
        global_meta: aggregated,
        round_index: round + 1,
    };
    let checksum = Checkpoint {
        fingerprint,
        round: next.round_index,
        meta: next.global_meta.clone(),
    }
    .checksum();
    for client in clients.iter_mut() {
        client.meta = next.global_meta.clone();
    }
    let stats: Vec<ClientRoundStats> = received.into_iter().map(|(_, _, s)| s).collect();
    let sigma = stats.iter().map(|s| s.sigma).fold(0.0, f64::max);
    Ok((
        next.clone(),
        RoundReport {
            round_index: next.round_index,
            clients: stats,
            weighted_loss,
            checksum,
            sigma,
        },
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingHistory {
    pub reports: Vec<RoundReport>,
    pub server: ServerState,
}

/// Runs `rounds` communication rounds. `on_round` sees the server state
/// after every round, e.g. to evaluate on held-out episodes.
pub fn run_training<O, F>(
    model: &O,
    initial: ServerState,
    clients: &mut [ClientState],
    rounds: u64,
    fingerprint: u64,
    seed: u64,
    mut on_round: F,
) -> Result<TrainingHistory>
where
    O: Objective + ?Sized,
    F: FnMut(&ServerState, &RoundReport) -> Result<()>,
{
    let mut server = initial;
    let mut reports = Vec::with_capacity(rounds as usize);
    for _ in 0..rounds {
        let (next, report) = run_round(model, &server, clients, fingerprint, seed)?;
        on_round(&next, &report)?;
        server = next;
        reports.push(report);
    }
    Ok(TrainingHistory { reports, server })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::meta::ClipBound;
    use crate::nn::ModelConfig;
    use rand::SeedableRng;

    fn meta(v: f64) -> MetaParams {
        MetaParams {
            theta: vec![v, 2.0 * v].into(),
            alpha: vec![0.1, 0.2].into(),
        }
    }

    #[test]
    fn fedavg_examples() {
        let a = meta(2.0);
        assert_eq!(fedavg(&[&a], &[7.0]).unwrap(), a);
        let b = meta(4.0);
        let avg = fedavg(&[&a, &b], &[1.0, 1.0]).unwrap();
        assert_eq!(avg.theta[0], 3.0);
        let z = meta(0.0);
        let w = fedavg(&[&z, &b], &[1.0, 3.0]).unwrap();
        assert_eq!(w.theta[0], 3.0);
        assert_eq!(w.alpha, a.alpha);
        assert_eq!(fedavg(&[&a, &a, &a, &a], &[1.0; 4]).unwrap(), a);
    }

    #[test]
    fn fedavg_errors() {
        let a = meta(1.0);
        assert!(fedavg(&[], &[]).is_err());
        assert!(fedavg(&[&a], &[1.0, 2.0]).is_err());
        assert!(fedavg(&[&a, &a], &[1.0, 0.0]).is_err());
        let short = MetaParams {
            theta: vec![1.0].into(),
            alpha: vec![1.0].into(),
        };
        assert!(fedavg(&[&a, &short], &[1.0, 1.0]).is_err());
    }

    fn setup(ratios: &[usize]) -> (ModelConfig, Vec<ClientState>, MetaParams) {
        let model = ModelConfig::new(16, vec![6], 2, false).unwrap();
        let local = LocalTraining {
            learner: Learner::MetaSgd,
            meta: MetaConfig {
                tasks_per_batch: 2,
                clip_bound: ClipBound::Unbounded,
                ..MetaConfig::default()
            },
            episodes: EpisodeSpec::new(2, 2, 2).unwrap(),
            batches_per_round: 2,
        };
        let mut rng = SimRng::seed_from_u64(1);
        let init = MetaParams::init(&model, (0.01, 0.1), &mut rng);
        let clients = ratios
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let ds = generate_synthetic(&SyntheticSpec {
                    examples_per_class: 4 * r,
                    resolution: 4,
                    seed: i as u64,
                    ..SyntheticSpec::default()
                })
                .unwrap();
                ClientState::new(i as u64, ds, init.clone(), local.clone()).unwrap()
            })
            .collect();
        (model, clients, init)
    }

    #[test]
    fn zero_local_batches_return_global() {
        let (model, clients, init) = setup(&[1]);
        let (m, trace) = local_round(&model, &clients[0], &init, 0, &mut SimRng::seed_from_u64(0)).unwrap();
        assert_eq!(m, init);
        assert!(trace.is_empty());
    }

    #[test]
    fn round_weights_follow_dataset_sizes() {
        let (model, mut clients, init) = setup(&[1, 2, 3, 4]);
        let server = ServerState {
            global_meta: init,
            round_index: 0,
        };
        let (next, report) = run_round(&model, &server, &mut clients, 0, 9).unwrap();
        assert_eq!(next.round_index, 1);
        let sizes: Vec<usize> = report.clients.iter().map(|c| c.dataset_size).collect();
        let total: usize = sizes.iter().sum();
        let w: Vec<f64> = sizes.iter().map(|&s| s as f64 / total as f64).collect();
        assert_eq!(w, vec![0.1, 0.2, 0.3, 0.4]);
        assert!(clients.iter().all(|c| c.meta == next.global_meta));
    }

    #[test]
    fn single_client_round_adopts_local_result() {
        let (model, mut clients, init) = setup(&[2]);
        let server = ServerState {
            global_meta: init.clone(),
            round_index: 3,
        };
        let mut rng = client_stream(5, 0, 3);
        let (local, _) = local_round(&model, &clients[0], &init, 2, &mut rng).unwrap();
        let (next, _) = run_round(&model, &server, &mut clients, 0, 5).unwrap();
        assert_eq!(next.global_meta, local);
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let (model, mut clients, init) = setup(&[1, 1]);
        clients[1].client_id = 0;
        let server = ServerState {
            global_meta: init,
            round_index: 0,
        };
        assert!(run_round(&model, &server, &mut clients, 0, 0).is_err());
    }

    #[test]
    fn zero_rounds_leave_initialization() {
        let (model, mut clients, init) = setup(&[1, 1]);
        let server = ServerState {
            global_meta: init.clone(),
            round_index: 0,
        };
        let h = run_training(&model, server, &mut clients, 0, 0, 0, |_, _| Ok(())).unwrap();
        assert!(h.reports.is_empty());
        assert_eq!(h.server.global_meta, init);
    }
}
