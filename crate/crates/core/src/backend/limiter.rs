use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding requests in flight against one endpoint.
#[derive(Debug)]
pub struct InFlightLimiter {
    capacity: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "capacity must be at least 1");
        Self {
            capacity,
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut in_use = self.in_use.lock().expect("limiter poisoned");
        while *in_use >= self.capacity {
            in_use = self.freed.wait(in_use).expect("limiter poisoned");
        }
        *in_use += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut in_use = self.limiter.in_use.lock().expect("limiter poisoned");
        *in_use -= 1;
        self.limiter.freed.notify_one();
    }
}
