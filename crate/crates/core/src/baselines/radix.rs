use rustc_hash::FxHashMap;

use super::CostMeter;
use crate::cht::RequestId;
use crate::hashing::Token;

const ROOT: usize = 0;

#[derive(Debug, Clone, Default)]
struct Node {
    /// Tokens on the edge from the parent.
    edge: Vec<Token>,
    parent: usize,
    children: FxHashMap<Token, usize>,
    /// Tokens from the root to the end of this node.
    depth: usize,
    /// Requests whose sequence ends exactly here.
    requests: Vec<RequestId>,
    /// Admitted requests whose path covers this node.
    cached: u32,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    node: usize,
    seq: u64,
    waiting: bool,
}

/// Token-granularity radix tree over every request seen so far. The tree is
/// never pruned; admitted requests mark their path as cached.
#[derive(Debug, Clone)]
pub struct RadixTree {
    nodes: Vec<Node>,
    requests: FxHashMap<RequestId, Entry>,
    tokens: FxHashMap<RequestId, Vec<Token>>,
    next_seq: u64,
    pub meter: CostMeter,
}

impl Default for RadixTree {
    fn default() -> Self {
        Self::new()
    }
}

impl RadixTree {
    pub fn new() -> Self {
        Self {
            nodes: vec![Node::default()],
            requests: FxHashMap::default(),
            tokens: FxHashMap::default(),
            next_seq: 0,
            meter: CostMeter::default(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_waiting(&self, id: RequestId) -> bool {
        self.requests.get(&id).is_some_and(|e| e.waiting)
    }

    /// Insert a waiting request. Returns false if the id is already known.
    pub fn insert(&mut self, id: RequestId, tokens: &[Token]) -> bool {
        if self.requests.contains_key(&id) {
            return false;
        }
        let mut node = ROOT;
        let mut pos = 0;
        while pos < tokens.len() {
            self.meter.node_visits += 1;
            let Some(&child) = self.nodes[node].children.get(&tokens[pos]) else {
                node = self.add_child(node, tokens[pos..].to_vec());
                break;
            };
            let edge = &self.nodes[child].edge;
            let rest = &tokens[pos..];
            let common = edge.iter().zip(rest).take_while(|(a, b)| a == b).count();
            self.meter.token_comparisons += (common + 1).min(edge.len().min(rest.len())) as u64;
            if common == edge.len() {
                node = child;
                pos += common;
                continue;
            }
            node = self.split(child, common);
            pos += common;
        }
        self.nodes[node].requests.push(id);
        self.requests.insert(id, Entry { node, seq: self.next_seq, waiting: true });
        self.tokens.insert(id, tokens.to_vec());
        self.next_seq += 1;
        true
    }

    fn add_child(&mut self, parent: usize, edge: Vec<Token>) -> usize {
        let idx = self.nodes.len();
        let depth = self.nodes[parent].depth + edge.len();
        self.nodes[parent].children.insert(edge[0], idx);
        self.nodes.push(Node { edge, parent, depth, ..Node::default() });
        idx
    }

    /// Split `child`'s edge after `at` tokens; returns the new middle node.
    fn split(&mut self, child: usize, at: usize) -> usize {
        let parent = self.nodes[child].parent;
        let tail = self.nodes[child].edge.split_off(at);
        let head = std::mem::take(&mut self.nodes[child].edge);
        let mid = self.nodes.len();
        let depth = self.nodes[parent].depth + head.len();
        let cached = self.nodes[child].cached;
        self.nodes[parent].children.insert(head[0], mid);
        let mut m = Node { edge: head, parent, depth, cached, ..Node::default() };
        m.children.insert(tail[0], child);
        self.nodes.push(m);
        self.nodes[child].edge = tail;
        self.nodes[child].parent = mid;
        mid
    }

    /// Mark a waiting request as admitted and its path as cached.
    pub fn mark_admitted(&mut self, id: RequestId) {
        let Some(e) = self.requests.get_mut(&id) else { return };
        if !e.waiting {
            return;
        }
        e.waiting = false;
        let mut n = e.node;
        while n != ROOT {
            self.nodes[n].cached += 1;
            n = self.nodes[n].parent;
        }
    }

    /// Length of the longest cached prefix of a known request.
    pub fn cached_match(&mut self, id: RequestId) -> usize {
        let tokens = &self.tokens[&id];
        let mut node = ROOT;
        let mut pos = 0;
        while pos < tokens.len() {
            self.meter.node_visits += 1;
            let Some(&child) = self.nodes[node].children.get(&tokens[pos]) else { break };
            let c = &self.nodes[child];
            if c.cached == 0 {
                break;
            }
            let n = c.edge.len().min(tokens.len() - pos);
            self.meter.token_comparisons += n as u64;
            if c.edge[..n] != tokens[pos..pos + n] {
                let common = c.edge.iter().zip(&tokens[pos..]).take_while(|(a, b)| a == b).count();
                pos += common;
                break;
            }
            pos += n;
            node = child;
        }
        pos
    }

    /// Longest-prefix-match order: waiting requests sorted by cached match
    /// length, longest first; ties keep the input order.
    pub fn lpm_order(&mut self, waiting: &[RequestId]) -> Vec<(RequestId, usize)> {
        let mut scored: Vec<(RequestId, usize)> = waiting.iter().map(|&id| (id, self.cached_match(id))).collect();
        let mut cmp = 0u64;
        scored.sort_by(|a, b| {
            cmp += 1;
            b.1.cmp(&a.1)
        });
        self.meter.sort_ops += cmp;
        scored
    }

    /// Depth-first order with children visited by descending waiting count
    /// (ties to the earliest arrival), emitting waiting requests as their
    /// nodes are reached.
    pub fn dfsw_order(&mut self) -> Vec<RequestId> {
        let n = self.nodes.len();
        let mut weight = vec![0u32; n];
        let mut first = vec![u64::MAX; n];
        for e in self.requests.values().filter(|e| e.waiting) {
            weight[e.node] += 1;
            first[e.node] = first[e.node].min(e.seq);
        }
        // Post-order accumulation.
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![ROOT];
        while let Some(v) = stack.pop() {
            self.meter.node_visits += 1;
            order.push(v);
            stack.extend(self.nodes[v].children.values().copied());
        }
        for &v in order.iter().rev() {
            if v != ROOT {
                let p = self.nodes[v].parent;
                weight[p] += weight[v];
                first[p] = first[p].min(first[v]);
            }
        }
        let mut out = Vec::new();
        let mut cmp = 0u64;
        let mut stack = vec![ROOT];
        while let Some(v) = stack.pop() {
            self.meter.node_visits += 1;
            let mut here: Vec<(u64, RequestId)> = self.nodes[v]
                .requests
                .iter()
                .filter_map(|id| self.requests.get(id).filter(|e| e.waiting).map(|e| (e.seq, *id)))
                .collect();
            here.sort_unstable();
            out.extend(here.into_iter().map(|(_, id)| id));
            let mut kids: Vec<usize> = self.nodes[v].children.values().copied().filter(|&c| weight[c] > 0).collect();
            kids.sort_by(|&a, &b| {
                cmp += 1;
                weight[b].cmp(&weight[a]).then(first[a].cmp(&first[b]))
            });
            stack.extend(kids.into_iter().rev());
        }
        self.meter.sort_ops += cmp;
        out
    }

    /// Length of the longest common prefix of two known requests, read off
    /// the tree.
    pub fn lcp(&self, a: RequestId, b: RequestId) -> usize {
        let (mut x, mut y) = (self.requests[&a].node, self.requests[&b].node);
        while x != y {
            if self.nodes[x].depth >= self.nodes[y].depth {
                x = self.nodes[x].parent;
            } else {
                y = self.nodes[y].parent;
            }
        }
        self.nodes[x].depth
    }
}
