use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Token bucket shared by every caller of one backend.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    capacity: f64,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Instant,
}

impl RateLimiter {
    /// `requests_per_minute == 0` disables limiting. `burst` is the bucket size.
    pub fn new(requests_per_minute: u32, burst: u32) -> Self {
        let capacity = burst.max(1) as f64;
        Self {
            per_second: requests_per_minute as f64 / 60.0,
            capacity,
            state: Mutex::new(Bucket { tokens: capacity, last: Instant::now() }),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0, 1)
    }

    /// Blocks until a request may be sent.
    pub fn acquire(&self) {
        if self.per_second <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut bucket = self.state.lock().unwrap_or_else(|e| e.into_inner());
                let now = Instant::now();
                let refill = now.duration_since(bucket.last).as_secs_f64() * self.per_second;
                bucket.tokens = (bucket.tokens + refill).min(self.capacity);
                bucket.last = now;
                if bucket.tokens >= 1.0 {
                    bucket.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - bucket.tokens) / self.per_second)
            };
            thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unlimited_never_blocks() {
        let rl = RateLimiter::unlimited();
        let start = Instant::now();
        for _ in 0..1000 {
            rl.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(100));
    }

    #[test]
    fn burst_then_throttle() {
        // 600/min = one token per 100 ms; burst of 2 passes immediately.
        let rl = RateLimiter::new(600, 2);
        let start = Instant::now();
        rl.acquire();
        rl.acquire();
        assert!(start.elapsed() < Duration::from_millis(50));
        rl.acquire();
        assert!(start.elapsed() >= Duration::from_millis(80));
    }
}
