use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use uuid::Uuid;

use btg_core::models::FittedModel;
use btg_core::wire::ModelInfo;

pub struct Entry {
    pub info: ModelInfo,
    pub model: FittedModel,
    /// Quantile levels from the fit configuration.
    pub levels: Vec<f64>,
}

/// Fitted models held in memory, keyed by a random id.
#[derive(Default)]
pub struct Registry {
    models: RwLock<HashMap<Uuid, Arc<Entry>>>,
}

impl Registry {
    pub fn insert(&self, mut info: ModelInfo, model: FittedModel, levels: Vec<f64>) -> ModelInfo {
        let id = Uuid::new_v4();
        info.id = id.to_string();
        let out = info.clone();
        self.models.write().insert(id, Arc::new(Entry { info, model, levels }));
        out
    }

    pub fn get(&self, id: &str) -> Option<Arc<Entry>> {
        let id = Uuid::parse_str(id).ok()?;
        self.models.read().get(&id).cloned()
    }

    pub fn remove(&self, id: &str) -> bool {
        Uuid::parse_str(id).is_ok_and(|id| self.models.write().remove(&id).is_some())
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        let mut out: Vec<ModelInfo> = self.models.read().values().map(|e| e.info.clone()).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    pub fn len(&self) -> usize {
        self.models.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
