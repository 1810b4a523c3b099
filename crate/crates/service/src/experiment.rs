//! State of one live experiment and its assignment and refit policy.
//!
//! While at most one standard trial of votes has been observed the
//! experiment is in GM mode: the batch is the single most informative pair
//! and every vote triggers a refit. Past the threshold it is in MST mode:
//! the batch is a spanning tree whose edges are handed out one request at a
//! time, distinct edges first and then round-robin. The model is refit
//! once every edge of the tree has a vote, or once the batch is older than
//! the staleness window, whichever comes first.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hybrid_mst::bt::DEFAULT_PRIOR_COUNT;
use hybrid_mst::dataset::export_to_string;
use hybrid_mst::sampler::standard_trial;
use hybrid_mst::{
    fit_bt, gh_nodes_weights, next_batch, utility_graph, ComparisonMatrix, FitOptions, Mode, Quadrature, SamplerState,
    ScoreEstimate,
};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::record::{now_timestamp, VoteRecord, VoteRequest};
use crate::store::{self, ExperimentMeta, Snapshot, VoteLog};

/// Votes between snapshot writes.
pub const SNAPSHOT_EVERY: u64 = 50;

/// Latest published fit. Served to readers without touching the writer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateView {
    pub id: String,
    pub items: Vec<String>,
    pub scores: Vec<f64>,
    /// Square roots of the covariance diagonal.
    pub std_errors: Vec<f64>,
    /// Item indices by descending score; ties keep index order.
    pub ranking: Vec<usize>,
    pub observed_votes: u64,
    /// Votes included in the fit; lags `observed_votes` mid-batch.
    pub fitted_votes: u64,
    pub mode: Mode,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchView {
    pub id: String,
    pub pairs: Vec<[usize; 2]>,
    pub labels: Vec<[String; 2]>,
    pub mode: Mode,
    pub observed_votes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteAck {
    /// True when the vote id was already logged and nothing changed.
    pub duplicate: bool,
    pub observed_votes: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentView {
    pub id: String,
    pub items: Vec<String>,
    pub created: String,
    pub settings: store::ExperimentSettings,
    pub observed_votes: u64,
    pub mode: Mode,
}

#[derive(Debug)]
struct Batch {
    pairs: Vec<(usize, usize)>,
    mode: Mode,
    /// Edges handed out at least once, from the front of `pairs`.
    issued: usize,
    /// Round-robin position once every edge has been issued.
    cursor: usize,
    voted: Vec<bool>,
    started: Instant,
}

#[derive(Debug)]
pub struct ExperimentState {
    meta: ExperimentMeta,
    dir: PathBuf,
    matrix: ComparisonMatrix,
    quad: Quadrature,
    estimate: ScoreEstimate,
    fitted_votes: u64,
    batch: Batch,
    /// Assigned-but-unvoted pairs with multiplicity.
    outstanding: HashMap<(usize, usize), u32>,
    vote_ids: HashSet<String>,
    log: VoteLog,
    snapshot_votes: u64,
}

impl ExperimentState {
    /// Creates and persists a new experiment under `data_dir/<meta.id>`.
    pub fn create(data_dir: &Path, meta: ExperimentMeta) -> Result<Self> {
        let dir = store::create_experiment_dir(data_dir, &meta)?;
        Self::build(dir, meta, Vec::new(), None)
    }

    /// Creates a new experiment whose log starts with `records`, e.g. votes
    /// expanded from an imported count matrix.
    pub fn create_with_votes(data_dir: &Path, meta: ExperimentMeta, records: Vec<VoteRecord>) -> Result<Self> {
        let n = meta.items.len();
        for r in &records {
            r.validate(n).map_err(|e| ServiceError::invalid(e.to_string()))?;
        }
        let dir = store::create_experiment_dir(data_dir, &meta)?;
        let mut log = VoteLog::open(&dir)?;
        for r in &records {
            log.append(r)?;
        }
        Self::build(dir, meta, records, None)
    }

    /// Rebuilds an experiment from its directory by replaying the vote log.
    pub fn open(dir: &Path) -> Result<Self> {
        let meta = store::read_meta(dir)?;
        let records = store::replay_log(dir)?;
        let snapshot = store::read_snapshot(dir);
        Self::build(dir.to_path_buf(), meta, records, snapshot)
    }

    fn build(dir: PathBuf, meta: ExperimentMeta, records: Vec<VoteRecord>, snapshot: Option<Snapshot>) -> Result<Self> {
        let n = meta.items.len();
        let quad = gh_nodes_weights(meta.settings.quadrature_order)?;
        let mut matrix = ComparisonMatrix::with_prior(n, DEFAULT_PRIOR_COUNT);
        let mut vote_ids = HashSet::new();
        for r in &records {
            r.validate(n)?;
            let (w, l) = r.outcome();
            matrix.record(w, l)?;
            if let Some(id) = &r.vote_id {
                vote_ids.insert(id.clone());
            }
        }
        let observed = matrix.observed_total();
        let mut opts = FitOptions::default();
        if let Some(s) = snapshot.filter(|s| s.scores.len() == n) {
            opts = opts.warm(&s.scores);
        }
        let estimate = fit_bt(&matrix, &opts)?;
        let log = VoteLog::open(&dir)?;
        let mut state = Self {
            meta,
            dir,
            matrix,
            quad,
            estimate,
            fitted_votes: observed,
            batch: Batch {
                pairs: Vec::new(),
                mode: Mode::Gm,
                issued: 0,
                cursor: 0,
                voted: Vec::new(),
                started: Instant::now(),
            },
            outstanding: HashMap::new(),
            vote_ids,
            log,
            snapshot_votes: observed,
        };
        state.new_batch(Instant::now())?;
        state.write_snapshot();
        Ok(state)
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn n(&self) -> usize {
        self.meta.items.len()
    }

    pub fn matrix(&self) -> &ComparisonMatrix {
        &self.matrix
    }

    pub fn estimate(&self) -> &ScoreEstimate {
        &self.estimate
    }

    /// Votes included in the current fit.
    pub fn fitted_votes(&self) -> u64 {
        self.fitted_votes
    }

    pub fn observed_votes(&self) -> u64 {
        self.matrix.observed_total()
    }

    /// GM while observed votes are at most one standard trial.
    pub fn mode(&self) -> Mode {
        SamplerState::new(self.n(), self.observed_votes()).mode()
    }

    /// Current multiset of assigned-but-unvoted pairs.
    pub fn outstanding(&self) -> &HashMap<(usize, usize), u32> {
        &self.outstanding
    }

    fn staleness(&self) -> Duration {
        Duration::from_secs(self.meta.settings.staleness_secs)
    }

    fn new_batch(&mut self, now: Instant) -> Result<()> {
        let g = utility_graph(&self.estimate, &self.quad);
        let state = SamplerState::new(self.n(), self.observed_votes());
        let pairs = next_batch(&g, &state)?.into_pairs();
        self.batch = Batch {
            voted: vec![false; pairs.len()],
            pairs,
            mode: state.mode(),
            issued: 0,
            cursor: 0,
            started: now,
        };
        Ok(())
    }

    fn refit(&mut self, now: Instant) -> Result<()> {
        let opts = FitOptions::default().warm(self.estimate.scores());
        match fit_bt(&self.matrix, &opts) {
            Ok(est) => {
                self.estimate = est;
                self.fitted_votes = self.observed_votes();
            }
            Err(e) => tracing::warn!(id = %self.meta.id, error = %e, "refit failed; keeping previous estimate"),
        }
        self.new_batch(now)
    }

    /// Applies the refit policy; returns whether a refit happened.
    pub fn maybe_refit(&mut self, now: Instant) -> Result<bool> {
        if self.fitted_votes == self.observed_votes() {
            return Ok(false);
        }
        let due = match self.batch.mode {
            Mode::Gm => true,
            Mode::Mst => {
                self.batch.voted.iter().all(|v| *v)
                    || now.saturating_duration_since(self.batch.started) >= self.staleness()
            }
        };
        if due {
            self.refit(now)?;
        }
        Ok(due)
    }

    /// Hands out up to `max` pairs (default: the whole batch) to `annotator`.
    pub fn assign(&mut self, annotator: &str, max: Option<usize>, now: Instant) -> Result<BatchView> {
        if annotator.trim().is_empty() {
            return Err(ServiceError::invalid("annotator must be non-empty"));
        }
        if max == Some(0) {
            return Err(ServiceError::invalid("max must be at least 1"));
        }
        self.maybe_refit(now)?;
        let len = self.batch.pairs.len();
        let k = max.map_or(len, |m| m.min(len));
        let out: Vec<(usize, usize)> = if self.batch.issued < len {
            let end = (self.batch.issued + k).min(len);
            let fresh = self.batch.pairs[self.batch.issued..end].to_vec();
            self.batch.issued = end;
            fresh
        } else {
            let start = self.batch.cursor;
            self.batch.cursor = (start + k) % len;
            (0..k).map(|t| self.batch.pairs[(start + t) % len]).collect()
        };
        for p in &out {
            *self.outstanding.entry(*p).or_insert(0) += 1;
        }
        let items = &self.meta.items;
        Ok(BatchView {
            id: self.meta.id.clone(),
            pairs: out.iter().map(|&(i, j)| [i, j]).collect(),
            labels: out.iter().map(|&(i, j)| [items[i].clone(), items[j].clone()]).collect(),
            mode: self.mode(),
            observed_votes: self.observed_votes(),
        })
    }

    /// Logs the vote durably, applies it, then runs the refit policy.
    pub fn vote(&mut self, req: &VoteRequest, now: Instant) -> Result<VoteAck> {
        let ((i, j), y) = req.canonical(self.n())?;
        if let Some(id) = &req.vote_id {
            if self.vote_ids.contains(id) {
                return Ok(VoteAck {
                    duplicate: true,
                    observed_votes: self.observed_votes(),
                    mode: self.mode(),
                });
            }
        }
        let assigned = self.outstanding.get(&(i, j)).is_some_and(|c| *c > 0);
        if !assigned && !self.meta.settings.free_voting {
            return Err(ServiceError::Conflict(format!(
                "pair ({i},{j}) has no outstanding assignment"
            )));
        }
        let record = VoteRecord {
            pair: [i, j],
            y,
            annotator: req.annotator.clone(),
            ts: now_timestamp(),
            vote_id: req.vote_id.clone(),
        };
        self.log.append(&record)?;

        let (w, l) = record.outcome();
        self.matrix.record(w, l)?;
        if let Some(id) = record.vote_id {
            self.vote_ids.insert(id);
        }
        if assigned {
            let c = self.outstanding.get_mut(&(i, j)).expect("checked above");
            *c -= 1;
            if *c == 0 {
                self.outstanding.remove(&(i, j));
            }
        }
        if let Some(k) = self.batch.pairs.iter().position(|p| *p == (i, j)) {
            self.batch.voted[k] = true;
        }
        self.maybe_refit(now)?;
        if self.observed_votes() >= self.snapshot_votes + SNAPSHOT_EVERY {
            self.write_snapshot();
        }
        Ok(VoteAck {
            duplicate: false,
            observed_votes: self.observed_votes(),
            mode: self.mode(),
        })
    }

    /// Persists the current fit as a warm start for the next open. Failures
    /// are logged only; the vote log alone is authoritative.
    pub fn write_snapshot(&mut self) {
        let snap = Snapshot {
            fitted_votes: self.fitted_votes,
            scores: self.estimate.scores().to_vec(),
        };
        match store::write_snapshot(&self.dir, &snap) {
            Ok(()) => self.snapshot_votes = self.observed_votes(),
            Err(e) => tracing::warn!(id = %self.meta.id, error = %e, "snapshot write failed"),
        }
    }

    pub fn estimate_view(&self) -> EstimateView {
        EstimateView {
            id: self.meta.id.clone(),
            items: self.meta.items.clone(),
            scores: self.estimate.scores().to_vec(),
            std_errors: self.estimate.standard_errors(),
            ranking: self.estimate.ranking(),
            observed_votes: self.observed_votes(),
            fitted_votes: self.fitted_votes,
            mode: self.mode(),
            log_likelihood: self.estimate.log_likelihood(),
        }
    }

    pub fn view(&self) -> ExperimentView {
        ExperimentView {
            id: self.meta.id.clone(),
            items: self.meta.items.clone(),
            created: self.meta.created.clone(),
            settings: self.meta.settings.clone(),
            observed_votes: self.observed_votes(),
            mode: self.mode(),
        }
    }

    /// Observed counts (pseudo-counts excluded) in the dataset CSV format.
    pub fn export_csv(&self) -> Result<String> {
        Ok(export_to_string(&self.meta.items, &self.matrix)?)
    }

    /// Threshold at which the experiment leaves GM mode.
    pub fn threshold(&self) -> u64 {
        standard_trial(self.n())
    }
}
