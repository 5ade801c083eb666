use std::collections::VecDeque;

use crate::names::ServiceLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EgressOutcome {
    Queued,
    QueuedAheadOfStage,
    DroppedFull,
}

/// Bounded FIFO with a one-packet reorder stage.
///
/// The newest arrival is held in the stage. A prompt packet arriving while
/// the stage holds a non-prompt packet is appended to the FIFO ahead of it;
/// any other arrival pushes the staged packet into the FIFO and takes its
/// place. The transmitter drains the FIFO first and the stage last.
#[derive(Debug, Clone)]
pub struct EgressQueue<P> {
    slots: VecDeque<(P, ServiceLevel)>,
    stage: Option<(P, ServiceLevel)>,
    depth: usize,
}

impl<P> EgressQueue<P> {
    pub fn new(depth: usize) -> Self {
        assert!(depth > 0, "egress depth must be positive");
        EgressQueue {
            slots: VecDeque::new(),
            stage: None,
            depth,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.slots.len() + usize::from(self.stage.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn enqueue(&mut self, packet: P, level: ServiceLevel) -> EgressOutcome {
        if self.len() >= self.depth {
            return EgressOutcome::DroppedFull;
        }
        match self.stage.take() {
            Some(staged) if level.is_prompt() && !staged.1.is_prompt() => {
                self.slots.push_back((packet, level));
                self.stage = Some(staged);
                EgressOutcome::QueuedAheadOfStage
            }
            Some(staged) => {
                self.slots.push_back(staged);
                self.stage = Some((packet, level));
                EgressOutcome::Queued
            }
            None => {
                self.stage = Some((packet, level));
                EgressOutcome::Queued
            }
        }
    }

    /// Next packet to put on the medium.
    pub fn pop(&mut self) -> Option<(P, ServiceLevel)> {
        self.slots.pop_front().or_else(|| self.stage.take())
    }

    pub fn peek(&self) -> Option<&(P, ServiceLevel)> {
        self.slots.front().or(self.stage.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(q: &mut EgressQueue<u32>) -> Vec<u32> {
        std::iter::from_fn(|| q.pop().map(|(p, _)| p)).collect()
    }

    #[test]
    fn prompt_overtakes_staged_regular() {
        let mut q = EgressQueue::new(8);
        assert_eq!(q.enqueue(1, ServiceLevel::REGULAR), EgressOutcome::Queued);
        assert_eq!(q.enqueue(2, ServiceLevel::PROMPT), EgressOutcome::QueuedAheadOfStage);
        assert_eq!(drain(&mut q), vec![2, 1]);
    }

    #[test]
    fn equal_priority_is_fifo() {
        let mut q = EgressQueue::new(8);
        q.enqueue(1, ServiceLevel::PROMPT);
        assert_eq!(q.enqueue(2, ServiceLevel::PROMPT), EgressOutcome::Queued);
        assert_eq!(drain(&mut q), vec![1, 2]);
    }

    #[test]
    fn regular_on_empty_queue_goes_next() {
        let mut q = EgressQueue::new(8);
        assert_eq!(q.enqueue(7, ServiceLevel::REGULAR), EgressOutcome::Queued);
        assert_eq!(q.peek().map(|(p, _)| *p), Some(7));
        assert_eq!(drain(&mut q), vec![7]);
    }

    #[test]
    fn reordering_is_pairwise_only() {
        let mut q = EgressQueue::new(8);
        q.enqueue(1, ServiceLevel::REGULAR);
        q.enqueue(2, ServiceLevel::REGULAR);
        q.enqueue(3, ServiceLevel::REGULAR);
        q.enqueue(4, ServiceLevel::PROMPT);
        // 4 only passes the staged packet 3
        assert_eq!(drain(&mut q), vec![1, 2, 4, 3]);
    }

    #[test]
    fn full_queue_drops() {
        let mut q = EgressQueue::new(2);
        q.enqueue(1, ServiceLevel::REGULAR);
        q.enqueue(2, ServiceLevel::REGULAR);
        assert_eq!(q.enqueue(3, ServiceLevel::PROMPT), EgressOutcome::DroppedFull);
        assert_eq!(q.len(), 2);
    }
}
