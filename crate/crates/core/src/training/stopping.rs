/// Patience-based early stopping on strict validation improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, since_best: 0 }
    }

    /// Records one epoch's validation loss. Any strict decrease counts as an
    /// improvement; `stop` is raised after `patience` epochs without one.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        let improved = self.best.is_none_or(|(_, best)| val_loss < best);
        if improved {
            self.best = Some((epoch, val_loss));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        StopDecision { improved, stop: self.since_best >= self.patience }
    }

    /// `(epoch, loss)` of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: impl Iterator<Item = f64>, patience: usize, max_epochs: usize) -> (usize, Option<(usize, f64)>) {
        let mut es = EarlyStopping::new(patience);
        let mut last = 0;
        for (i, l) in losses.take(max_epochs).enumerate() {
            last = i + 1;
            if es.observe(last, l).stop {
                break;
            }
        }
        (last, es.best())
    }

    #[test]
    fn constant_loss_stops_after_patience() {
        let (last, best) = run(std::iter::repeat(0.7), 20, 1000);
        assert_eq!(last, 21);
        assert_eq!(best, Some((1, 0.7)));
    }

    #[test]
    fn strictly_improving_runs_to_the_cap() {
        let (last, best) = run((0..).map(|e| 1.0 / (1.0 + e as f64)), 20, 150);
        assert_eq!(last, 150);
        assert_eq!(best.unwrap().0, 150);
    }

    #[test]
    fn late_improvement_resets_the_counter() {
        let mut losses = vec![1.0; 10];
        losses.push(0.5);
        losses.extend(std::iter::repeat_n(0.5, 30));
        let (last, best) = run(losses.into_iter(), 15, 1000);
        assert_eq!(best, Some((11, 0.5)));
        assert_eq!(last, 26);
    }

    #[test]
    fn nan_never_counts_as_improvement() {
        let mut es = EarlyStopping::new(3);
        es.observe(1, 1.0);
        assert!(!es.observe(2, f64::NAN).improved);
    }
}
