//! Stage timing. A frozen clock reports zero for every stage so that outputs
//! stay byte-stable in scripted runs.

use std::time::Instant;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    Wall,
    Frozen,
}

impl Clock {
    pub fn start(self) -> Stopwatch {
        Stopwatch {
            clock: self,
            started: Instant::now(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    clock: Clock,
    started: Instant,
}

impl Stopwatch {
    pub fn elapsed_ms(&self) -> f64 {
        match self.clock {
            Clock::Wall => self.started.elapsed().as_secs_f64() * 1000.0,
            Clock::Frozen => 0.0,
        }
    }

    /// Elapsed time since the last lap (or start), then restarts.
    pub fn lap_ms(&mut self) -> f64 {
        let ms = self.elapsed_ms();
        self.started = Instant::now();
        ms
    }
}
