//! Service node: a single server draining per-class FIFO queues in strict
//! priority order.

use std::collections::VecDeque;

#[derive(Debug)]
pub struct Node {
    pub id: String,
    pub service_rate: f64,
    pub base_capacity: f64,
    /// Set by the cloud_capacity actuator; stays 1.0 on local nodes.
    pub capacity_scale: f64,
    pub queue_limit: u64,
    /// One FIFO per QoS class, in the priority order of the segment's link.
    queues: Vec<VecDeque<u64>>,
    pub in_service: Option<u64>,
}

impl Node {
    pub fn new(
        id: String,
        service_rate: f64,
        capacity: f64,
        queue_limit: u64,
        class_count: usize,
    ) -> Self {
        Self {
            id,
            service_rate,
            base_capacity: capacity,
            capacity_scale: 1.0,
            queue_limit,
            queues: vec![VecDeque::new(); class_count],
            in_service: None,
        }
    }

    pub fn waiting(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    /// Waiting plus in-service; the dispatcher's load signal.
    pub fn load(&self) -> u64 {
        self.waiting() + u64::from(self.in_service.is_some())
    }

    /// Returns false when the queue limit is reached and the request must be
    /// dropped.
    pub fn enqueue(&mut self, class: usize, request: u64) -> bool {
        if self.waiting() >= self.queue_limit {
            return false;
        }
        self.queues[class].push_back(request);
        true
    }

    /// Pop the head of the highest-priority non-empty class queue.
    pub fn next_request(&mut self) -> Option<u64> {
        self.queues.iter_mut().find_map(|q| q.pop_front())
    }

    /// Service time for a request of the given size at the current capacity.
    pub fn service_duration(&self, size: f64) -> f64 {
        size / (self.service_rate * self.base_capacity * self.capacity_scale)
    }
}
