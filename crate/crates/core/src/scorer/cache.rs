//! Real-state log-probability cache and a call-counting backend wrapper.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use sha2::{Digest, Sha256};

use super::{build_agent_context, AgentContext, MeanLogProb, ScorerBackend, ScorerError};
use crate::model::{Action, TransitionTuple};

type Key = [u8; 32];

/// Thread-safe map from a tuple's stable hash to its real-state score.
/// Values are deterministic, so concurrent writers racing on one key is harmless.
#[derive(Debug, Default)]
pub struct LogprobCache {
    map: RwLock<HashMap<Key, MeanLogProb>>,
}

impl LogprobCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &Key) -> Option<MeanLogProb> {
        self.map.read().ok()?.get(key).copied()
    }

    fn put(&self, key: Key, value: MeanLogProb) {
        match self.map.write() {
            Ok(mut m) => {
                m.insert(key, value);
            }
            Err(_) => tracing::warn!("log-probability cache is poisoned; value not stored"),
        }
    }
}

fn feed(h: &mut Sha256, s: &str) {
    h.update((s.len() as u64).to_le_bytes());
    h.update(s.as_bytes());
}

/// Hash of (history, real next state, expert action, backend id).
pub fn tuple_key(tuple: &TransitionTuple, backend_id: &str) -> Key {
    let mut h = Sha256::new();
    feed(&mut h, backend_id);
    feed(&mut h, tuple.domain.as_str());
    feed(&mut h, tuple.history.initial_obs.text());
    for s in &tuple.history.steps {
        feed(&mut h, s.action.as_str());
        feed(&mut h, s.obs.text());
    }
    feed(&mut h, tuple.history.action.as_str());
    feed(&mut h, tuple.real_next_state.text());
    feed(&mut h, tuple.expert_next_action.as_str());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    key
}

/// `l_real` for a tuple, computed at most once per cache.
pub fn cached_real_logprob(
    tuple: &TransitionTuple,
    backend: &dyn ScorerBackend,
    cache: &LogprobCache,
) -> Result<MeanLogProb, ScorerError> {
    let key = tuple_key(tuple, &backend.id());
    if let Some(v) = cache.get(&key) {
        return Ok(v);
    }
    let ctx = build_agent_context(&tuple.history, &tuple.real_next_state, tuple.domain);
    let v = backend.mean_logprob(&ctx, &tuple.expert_next_action)?;
    cache.put(key, v);
    Ok(v)
}

/// Wraps a backend and counts every `mean_logprob` call.
#[derive(Debug)]
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ScorerBackend> ScorerBackend for CountingBackend<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn mean_logprob(&self, context: &AgentContext, action: &Action) -> Result<MeanLogProb, ScorerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.mean_logprob(context, action)
    }
}
