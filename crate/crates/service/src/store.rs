use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use fhirlens_core::Dataset;

/// Datasets kept in memory, least recently used evicted first.
pub const STORE_CAPACITY: usize = 32;

struct Entry {
    dataset: Arc<Dataset>,
    last_used: AtomicU64,
}

pub struct DatasetStore {
    capacity: usize,
    tick: AtomicU64,
    entries: RwLock<HashMap<String, Entry>>,
}

impl Default for DatasetStore {
    fn default() -> Self {
        Self::with_capacity(STORE_CAPACITY)
    }
}

impl DatasetStore {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            tick: AtomicU64::new(0),
            entries: RwLock::new(HashMap::new()),
        }
    }

    fn next_tick(&self) -> u64 {
        self.tick.fetch_add(1, Ordering::Relaxed) + 1
    }

    /// Stores `dataset` under its id and returns the shared handle.
    pub fn insert(&self, dataset: Dataset) -> Arc<Dataset> {
        let dataset = Arc::new(dataset);
        let tick = self.next_tick();
        let mut entries = self.entries.write().expect("store lock poisoned");
        entries.insert(
            dataset.id.clone(),
            Entry { dataset: Arc::clone(&dataset), last_used: AtomicU64::new(tick) },
        );
        while entries.len() > self.capacity {
            let oldest = entries
                .iter()
                .min_by_key(|(_, e)| e.last_used.load(Ordering::Relaxed))
                .map(|(id, _)| id.clone())
                .expect("store is non-empty");
            entries.remove(&oldest);
        }
        dataset
    }

    /// Looks up a dataset and marks it as recently used. Readers never
    /// block each other.
    pub fn get(&self, id: &str) -> Option<Arc<Dataset>> {
        let entries = self.entries.read().expect("store lock poisoned");
        let entry = entries.get(id)?;
        entry.last_used.store(self.next_tick(), Ordering::Relaxed);
        Some(Arc::clone(&entry.dataset))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
