use std::collections::VecDeque;

/// The last `depth + 1` values of one field, newest last.
#[derive(Debug, Clone)]
pub struct PrevBuffer {
    depth: usize,
    values: VecDeque<f64>,
}

impl PrevBuffer {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            values: VecDeque::with_capacity(depth + 1),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Record the current item's value.
    pub fn push(&mut self, value: f64) {
        if self.values.len() == self.depth + 1 {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    /// Value `back` items before the newest; `prev(0)` is the newest.
    /// `None` until `back + 1` values have been pushed.
    pub fn prev(&self, back: usize) -> Option<f64> {
        if back > self.depth || back >= self.values.len() {
            return None;
        }
        self.values.get(self.values.len() - 1 - back).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dump(&self) -> String {
        serde_json::json!({
            "type": "PrevBuffer",
            "depth": self.depth,
            "values": self.values,
        })
        .to_string()
    }
}
