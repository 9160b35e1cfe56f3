/// Binary min-heap that counts element comparisons.
///
/// Entries are never updated in place; callers push a fresh entry and skip
/// stale ones when they surface.
#[derive(Debug, Clone, Default)]
pub struct CountingMinHeap<T> {
    items: Vec<T>,
    comparisons: u64,
}

impl<T: Ord + Copy> CountingMinHeap<T> {
    pub fn new() -> Self {
        Self { items: Vec::new(), comparisons: 0 }
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { items: Vec::with_capacity(n), comparisons: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Comparisons performed since construction.
    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    pub fn peek(&self) -> Option<T> {
        self.items.first().copied()
    }

    pub fn push(&mut self, item: T) {
        self.items.push(item);
        self.sift_up(self.items.len() - 1);
    }

    pub fn pop(&mut self) -> Option<T> {
        let n = self.items.len();
        if n == 0 {
            return None;
        }
        self.items.swap(0, n - 1);
        let top = self.items.pop();
        if !self.items.is_empty() {
            self.sift_down(0);
        }
        top
    }

    /// Replace the contents with `items` using bottom-up heapify.
    pub fn rebuild(&mut self, items: impl IntoIterator<Item = T>) {
        self.items.clear();
        self.items.extend(items);
        let n = self.items.len();
        for i in (0..n / 2).rev() {
            self.sift_down(i);
        }
    }

    fn less(&mut self, a: usize, b: usize) -> bool {
        self.comparisons += 1;
        self.items[a] < self.items[b]
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.less(i, parent) {
                self.items.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.items.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let child = if r < n && self.less(r, l) { r } else { l };
            if self.less(child, i) {
                self.items.swap(child, i);
                i = child;
            } else {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_order() {
        let mut h = CountingMinHeap::new();
        for v in [5u32, 3, 9, 1, 1, 7] {
            h.push(v);
        }
        let mut out = vec![];
        while let Some(v) = h.pop() {
            out.push(v);
        }
        assert_eq!(out, vec![1, 1, 3, 5, 7, 9]);
        assert!(h.comparisons() > 0);
    }

    #[test]
    fn rebuild_heapifies() {
        let mut h = CountingMinHeap::new();
        h.rebuild([(4u32, 2u64), (1, 9), (1, 3), (8, 0)]);
        assert_eq!(h.pop(), Some((1, 3)));
        assert_eq!(h.pop(), Some((1, 9)));
        assert_eq!(h.len(), 2);
    }
}
