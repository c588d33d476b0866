use crate::error::{Error, Result};

/// First-in first-out assignment of tokens to cache slots.
///
/// Token `t` goes to logical slot `t mod W`. An optional slot order maps
/// logical slots to physical rows/columns of the plastic matrices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotScheduler {
    window: usize,
    steps: usize,
    order: Vec<usize>,
}

impl SlotScheduler {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "window must be at least 1");
        Self {
            window,
            steps: 0,
            order: (0..window).collect(),
        }
    }

    /// Uses `order[s]` as the physical slot for logical slot `s`.
    pub fn with_slot_order(mut self, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; self.window];
        if order.len() != self.window {
            return Err(Error::Shape(format!(
                "slot order has {} entries, window is {}",
                order.len(),
                self.window
            )));
        }
        for &s in &order {
            if s >= self.window || std::mem::replace(&mut seen[s], true) {
                return Err(Error::Domain(format!(
                    "slot order {order:?} is not a permutation"
                )));
            }
        }
        self.order = order;
        Ok(self)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Tokens processed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Logical slot the next token will occupy.
    pub fn next_slot(&self) -> usize {
        self.steps % self.window
    }

    /// Number of slots holding a token.
    pub fn filled(&self) -> usize {
        self.steps.min(self.window)
    }

    /// Physical slot of token `t`.
    pub fn slot_of(&self, t: usize) -> usize {
        self.order[t % self.window]
    }

    /// Physical slots visible while processing token `t` (tokens
    /// `max(0, t + 1 - W)..=t`), oldest first.
    pub fn slot_mask(&self, t: usize) -> Vec<usize> {
        let first = (t + 1).saturating_sub(self.window);
        (first..=t).map(|tau| self.slot_of(tau)).collect()
    }

    /// Checks that `t` is the next token and returns its physical slot.
    pub fn begin(&self, t: usize) -> Result<usize> {
        if t != self.steps {
            return Err(Error::StepOrder {
                expected: self.steps,
                got: t,
            });
        }
        Ok(self.slot_of(t))
    }

    pub fn advance(&mut self) {
        self.steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_examples() {
        assert_eq!(SlotScheduler::new(8).slot_mask(0), vec![0]);
        assert_eq!(SlotScheduler::new(4).slot_mask(10), vec![3, 0, 1, 2]);
        assert_eq!(SlotScheduler::new(4).slot_mask(2), vec![0, 1, 2]);
    }

    #[test]
    fn tracks_position() {
        let mut s = SlotScheduler::new(3);
        for t in 0..7 {
            assert_eq!(s.next_slot(), t % 3);
            assert_eq!(s.filled(), t.min(3));
            assert_eq!(s.begin(t).unwrap(), t % 3);
            s.advance();
        }
        assert!(matches!(
            s.begin(3),
            Err(Error::StepOrder {
                expected: 7,
                got: 3
            })
        ));
    }

    #[test]
    fn slot_order_must_be_permutation() {
        assert!(SlotScheduler::new(3)
            .with_slot_order(vec![0, 0, 1])
            .is_err());
        assert!(SlotScheduler::new(3).with_slot_order(vec![0, 1]).is_err());
        let s = SlotScheduler::new(3)
            .with_slot_order(vec![2, 0, 1])
            .unwrap();
        assert_eq!(s.slot_mask(4), vec![1, 2, 0]);
    }
}
