use std::sync::{Condvar, Mutex};

use super::{Policy, PolicyError, PolicyRequest, PolicyResponse};

/// Counting semaphore bounding concurrent calls.
#[derive(Debug)]
pub struct InFlightLimit {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    owner: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(limit: usize) -> Self {
        InFlightLimit {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit { owner: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.active.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.owner.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.owner.freed.notify_one();
    }
}

/// Wraps a policy that is not safe to call concurrently so that at most one
/// call is in flight at a time.
pub struct Serialized<P> {
    inner: P,
    gate: Mutex<()>,
}

impl<P> Serialized<P> {
    pub fn new(inner: P) -> Self {
        Serialized {
            inner,
            gate: Mutex::new(()),
        }
    }
}

impl<P: Policy> Policy for Serialized<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn privileged(&self) -> bool {
        self.inner.privileged()
    }

    fn respond(&self, request: &PolicyRequest) -> Result<PolicyResponse, PolicyError> {
        let _guard = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        self.inner.respond(request)
    }
}
