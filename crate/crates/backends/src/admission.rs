use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding requests in flight for one backend.
#[derive(Debug)]
pub(crate) struct Admission {
    limit: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct Permit<'a>(&'a Admission);

impl Admission {
    pub(crate) fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_use.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }

    #[cfg(test)]
    pub(crate) fn in_use(&self) -> usize {
        *self.in_use.lock().unwrap()
    }
}

// Released on drop, so a timed-out or panicking request still frees its slot.
impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_use.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}
