use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding in-flight backend requests.
pub struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

pub struct PermitGuard<'a> {
    permits: &'a Permits,
}

impl Permits {
    pub fn new(count: usize) -> Self {
        Self {
            available: Mutex::new(count.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> PermitGuard<'_> {
        let mut available = self.available.lock().unwrap();
        while *available == 0 {
            available = self.freed.wait(available).unwrap();
        }
        *available -= 1;
        PermitGuard { permits: self }
    }
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.permits.available.lock().unwrap() += 1;
        self.permits.freed.notify_one();
    }
}
