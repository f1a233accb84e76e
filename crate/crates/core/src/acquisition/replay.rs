use rand::Rng;

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring that overwrites its oldest entry when full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect()
    }

    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Vec<&Transition> {
        self.sample_indices(batch, rng)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }
}
