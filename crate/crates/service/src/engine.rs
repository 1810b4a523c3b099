//! Registry of live experiments.
//!
//! Every experiment has one writer lock; assignment and votes are
//! serialized through it. After each change the writer publishes an
//! immutable [`EstimateView`], which readers fetch without waiting for the
//! writer.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Instant;

use hybrid_mst::dataset::Dataset;
use hybrid_mst::quadrature::MAX_ORDER;
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::{Result, ServiceError};
use crate::experiment::{BatchView, EstimateView, ExperimentState, ExperimentView, VoteAck};
use crate::record::{now_timestamp, VoteRecord, VoteRequest};
use crate::store::{ExperimentMeta, ExperimentSettings, META_FILE};

/// Body of `POST /experiments`. Unset settings take the service defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateExperiment {
    pub items: Vec<String>,
    #[serde(default)]
    pub quadrature_order: Option<usize>,
    #[serde(default)]
    pub staleness_secs: Option<u64>,
    #[serde(default)]
    pub free_voting: Option<bool>,
}

#[derive(Debug)]
struct Handle {
    writer: Mutex<ExperimentState>,
    published: RwLock<Arc<EstimateView>>,
}

impl Handle {
    fn new(state: ExperimentState) -> Self {
        let view = Arc::new(state.estimate_view());
        Self {
            writer: Mutex::new(state),
            published: RwLock::new(view),
        }
    }

    fn lock(&self) -> Result<MutexGuard<'_, ExperimentState>> {
        self.writer
            .lock()
            .map_err(|_| ServiceError::Corrupt("experiment state lock poisoned".into()))
    }

    fn publish(&self, state: &ExperimentState) {
        let view = Arc::new(state.estimate_view());
        *self.published.write().unwrap_or_else(|e| e.into_inner()) = view;
    }
}

#[derive(Debug)]
pub struct Engine {
    config: ServiceConfig,
    experiments: RwLock<HashMap<String, Arc<Handle>>>,
}

impl Engine {
    /// Loads every experiment found under `config.data_dir`.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        fs::create_dir_all(&config.data_dir)?;
        let mut experiments = HashMap::new();
        for entry in fs::read_dir(&config.data_dir)? {
            let dir = entry?.path();
            if !dir.join(META_FILE).is_file() {
                continue;
            }
            let state = ExperimentState::open(&dir)?;
            tracing::info!(id = state.id(), votes = state.observed_votes(), "experiment loaded");
            experiments.insert(state.id().to_string(), Arc::new(Handle::new(state)));
        }
        Ok(Self {
            config,
            experiments: RwLock::new(experiments),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn handle(&self, id: &str) -> Result<Arc<Handle>> {
        self.experiments
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .experiments
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn create(&self, req: CreateExperiment) -> Result<ExperimentView> {
        let meta = self.new_meta(req)?;
        self.insert(ExperimentState::create(&self.config.data_dir, meta)?)
    }

    /// Creates an experiment pre-loaded with the observed counts of `data`.
    /// Each count becomes one logged vote by annotator `"import"`.
    pub fn import(&self, data: &Dataset, mut settings: CreateExperiment) -> Result<ExperimentView> {
        settings.items = data.items.clone();
        let meta = self.new_meta(settings)?;
        let ts = now_timestamp();
        let mut records = Vec::new();
        for (winner, loser, count) in data.matrix.observed_cells() {
            let (pair, y) = if winner < loser {
                ([winner, loser], 1)
            } else {
                ([loser, winner], 0)
            };
            for _ in 0..count {
                records.push(VoteRecord {
                    pair,
                    y,
                    annotator: "import".into(),
                    ts: ts.clone(),
                    vote_id: None,
                });
            }
        }
        self.insert(ExperimentState::create_with_votes(
            &self.config.data_dir,
            meta,
            records,
        )?)
    }

    fn new_meta(&self, req: CreateExperiment) -> Result<ExperimentMeta> {
        if req.items.len() < 2 {
            return Err(ServiceError::invalid(format!(
                "need at least 2 items, got {}",
                req.items.len()
            )));
        }
        let mut seen = HashSet::new();
        for item in &req.items {
            if item.is_empty() {
                return Err(ServiceError::invalid("item labels must be non-empty"));
            }
            if !seen.insert(item.as_str()) {
                return Err(ServiceError::invalid(format!("duplicate item label {item:?}")));
            }
        }
        let settings = ExperimentSettings {
            quadrature_order: req.quadrature_order.unwrap_or(self.config.quadrature_order),
            staleness_secs: req.staleness_secs.unwrap_or(self.config.staleness_secs),
            free_voting: req.free_voting.unwrap_or(self.config.free_voting),
        };
        if !(1..=MAX_ORDER).contains(&settings.quadrature_order) {
            return Err(ServiceError::invalid(format!(
                "quadrature_order must be in 1..={MAX_ORDER}, got {}",
                settings.quadrature_order
            )));
        }
        Ok(ExperimentMeta {
            id: uuid::Uuid::new_v4().simple().to_string(),
            items: req.items,
            created: now_timestamp(),
            settings,
        })
    }

    fn insert(&self, state: ExperimentState) -> Result<ExperimentView> {
        let view = state.view();
        tracing::info!(id = %view.id, items = view.items.len(), votes = view.observed_votes, "experiment created");
        self.experiments
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(view.id.clone(), Arc::new(Handle::new(state)));
        Ok(view)
    }

    pub fn experiment(&self, id: &str) -> Result<ExperimentView> {
        Ok(self.handle(id)?.lock()?.view())
    }

    pub fn batch(&self, id: &str, annotator: &str, max: Option<usize>) -> Result<BatchView> {
        let h = self.handle(id)?;
        let mut state = h.lock()?;
        let fitted = state.fitted_votes();
        let view = state.assign(annotator, max, Instant::now())?;
        if state.fitted_votes() != fitted {
            h.publish(&state);
        }
        Ok(view)
    }

    pub fn vote(&self, id: &str, req: &VoteRequest) -> Result<VoteAck> {
        let h = self.handle(id)?;
        let mut state = h.lock()?;
        let ack = state.vote(req, Instant::now())?;
        if !ack.duplicate {
            h.publish(&state);
        }
        Ok(ack)
    }

    /// Latest published fit; never blocks on the writer.
    pub fn estimate(&self, id: &str) -> Result<Arc<EstimateView>> {
        let h = self.handle(id)?;
        let view = h.published.read().unwrap_or_else(|e| e.into_inner()).clone();
        Ok(view)
    }

    pub fn export_csv(&self, id: &str) -> Result<String> {
        self.handle(id)?.lock()?.export_csv()
    }

    /// Runs `f` with exclusive access to one experiment's state.
    pub fn with_state<T>(&self, id: &str, f: impl FnOnce(&ExperimentState) -> T) -> Result<T> {
        let h = self.handle(id)?;
        let state = h.lock()?;
        Ok(f(&state))
    }

    /// Writes a snapshot of every experiment; called on shutdown.
    pub fn flush(&self) {
        let handles: Vec<Arc<Handle>> = self
            .experiments
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect();
        for h in handles {
            if let Ok(mut s) = h.lock() {
                s.write_snapshot();
            }
        }
    }
}
