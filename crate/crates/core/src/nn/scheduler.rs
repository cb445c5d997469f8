#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlateauMode {
    Maximize,
    Minimize,
}

/// Multiplies the learning rate by `factor` once the tracked metric has not
/// improved for more than `patience` consecutive epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub mode: PlateauMode,
    /// Relative margin a metric must beat the best value by to count as improvement.
    pub threshold: f64,
    best: Option<f64>,
    epochs_since_improvement: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, mode: PlateauMode) -> Self {
        assert!(factor > 0.0 && factor < 1.0, "factor must lie in (0, 1)");
        Self {
            factor,
            patience,
            mode,
            threshold: 0.0,
            best: None,
            epochs_since_improvement: 0,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.epochs_since_improvement
    }

    pub(crate) fn restore(&mut self, best: Option<f64>, since: usize) {
        self.best = best;
        self.epochs_since_improvement = since;
    }

    fn improves(&self, metric: f64) -> bool {
        match self.best {
            None => metric.is_finite(),
            Some(best) => match self.mode {
                PlateauMode::Maximize => metric > best * (1.0 + self.threshold),
                PlateauMode::Minimize => metric < best * (1.0 - self.threshold),
            },
        }
    }

    /// Records one epoch's metric and returns the learning rate to use next.
    pub fn step(&mut self, metric: f64, lr: f64) -> f64 {
        if self.improves(metric) {
            self.best = Some(metric);
            self.epochs_since_improvement = 0;
            return lr;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement > self.patience {
            self.epochs_since_improvement = 0;
            lr * self.factor
        } else {
            lr
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improving_stream_keeps_lr() {
        let mut s = PlateauScheduler::new(0.5, 2, PlateauMode::Maximize);
        let mut lr = 1e-4;
        for i in 0..20 {
            lr = s.step(0.1 * i as f64, lr);
        }
        assert_eq!(lr, 1e-4);
    }

    #[test]
    fn flat_stream_halves_then_quarters() {
        let patience = 20;
        let mut s = PlateauScheduler::new(0.5, patience, PlateauMode::Maximize);
        let mut lr = s.step(0.8, 1e-4);
        for _ in 0..patience {
            lr = s.step(0.8, lr);
        }
        assert_eq!(lr, 1e-4);
        lr = s.step(0.8, lr);
        assert_eq!(lr, 5e-5);
        for _ in 0..=patience {
            lr = s.step(0.8, lr);
        }
        assert_eq!(lr, 2.5e-5);
    }

    #[test]
    fn minimize_mode_tracks_lower_values() {
        let mut s = PlateauScheduler::new(0.5, 0, PlateauMode::Minimize);
        let lr = s.step(1.0, 1.0);
        let lr = s.step(0.5, lr);
        assert_eq!(lr, 1.0);
        let lr = s.step(0.7, lr);
        assert_eq!(lr, 0.5);
        assert_eq!(s.best(), Some(0.5));
    }

    #[test]
    fn threshold_ignores_tiny_gains() {
        let mut s = PlateauScheduler::new(0.5, 0, PlateauMode::Minimize).with_threshold(1e-2);
        let lr = s.step(1.0, 1.0);
        let lr = s.step(0.995, lr);
        assert_eq!(lr, 0.5);
        assert_eq!(s.best(), Some(1.0));
    }
}
