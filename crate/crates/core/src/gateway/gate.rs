use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use tokio::sync::{OwnedSemaphorePermit, Semaphore};

/// Counting gate enforcing a global and a per-endpoint limit on in-flight requests.
#[derive(Debug)]
pub struct RequestGate {
    global: Arc<Semaphore>,
    per_endpoint_limit: usize,
    endpoints: Mutex<HashMap<String, Arc<Semaphore>>>,
}

pub struct GatePermit {
    _global: OwnedSemaphorePermit,
    _endpoint: OwnedSemaphorePermit,
}

impl RequestGate {
    pub fn new(global_limit: usize, per_endpoint_limit: usize) -> Self {
        Self {
            global: Arc::new(Semaphore::new(global_limit.max(1))),
            per_endpoint_limit: per_endpoint_limit.max(1),
            endpoints: Mutex::new(HashMap::new()),
        }
    }

    pub async fn acquire(&self, endpoint: &str) -> GatePermit {
        let per = {
            let mut map = self.endpoints.lock().expect("gate map poisoned");
            map.entry(endpoint.to_string())
                .or_insert_with(|| Arc::new(Semaphore::new(self.per_endpoint_limit)))
                .clone()
        };
        // Endpoint first so a saturated endpoint does not hold global slots.
        let endpoint = per.acquire_owned().await.expect("gate semaphore closed");
        let global = self.global.clone().acquire_owned().await.expect("gate semaphore closed");
        GatePermit { _global: global, _endpoint: endpoint }
    }

    pub fn available_global(&self) -> usize {
        self.global.available_permits()
    }
}

impl Default for RequestGate {
    fn default() -> Self {
        Self::new(64, 16)
    }
}
