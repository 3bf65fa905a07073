use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug)]
struct Bucket {
    capacity: f64,
    tokens: f64,
    per_second: f64,
    last: Instant,
}

impl Bucket {
    /// Takes one token, or returns how long to wait for the next one.
    fn take(&mut self) -> Option<Duration> {
        let now = Instant::now();
        let elapsed = now.duration_since(self.last).as_secs_f64();
        self.tokens = (self.tokens + elapsed * self.per_second).min(self.capacity);
        self.last = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            None
        } else {
            Some(Duration::from_secs_f64((1.0 - self.tokens) / self.per_second))
        }
    }
}

/// Bounds in-flight requests and, optionally, the request rate.
#[derive(Debug)]
pub struct Limiter {
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    bucket: Option<Mutex<Bucket>>,
}

/// Holds one in-flight slot until dropped.
#[derive(Debug)]
pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

impl Limiter {
    /// `requests_per_second` of `None` disables rate limiting; the bucket
    /// holds at most `max_in_flight` tokens.
    pub fn new(max_in_flight: usize, requests_per_second: Option<f64>) -> Self {
        let max_in_flight = max_in_flight.max(1);
        let bucket = requests_per_second.filter(|r| *r > 0.0).map(|per_second| {
            Mutex::new(Bucket {
                capacity: max_in_flight as f64,
                tokens: max_in_flight as f64,
                per_second,
                last: Instant::now(),
            })
        });
        Limiter {
            max_in_flight,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            bucket,
        }
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn acquire(&self) -> Permit<'_> {
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= self.max_in_flight {
                n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
            }
            *n += 1;
        }
        if let Some(bucket) = &self.bucket {
            loop {
                let wait = bucket.lock().unwrap_or_else(|e| e.into_inner()).take();
                match wait {
                    None => break,
                    Some(d) => std::thread::sleep(d),
                }
            }
        }
        Permit { limiter: self }
    }
}
