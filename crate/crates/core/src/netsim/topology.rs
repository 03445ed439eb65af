//! Topology and fault-schedule files.
//!
//! ```text
//! # topology
//! nodes 4
//! edge 0 1 delay=2
//! edge 1 2
//! edge 2 3
//! ```
//!
//! ```text
//! # faults: messages sent on a blocked edge during [from, to) are lost
//! drop 0 1 from=10 to=20
//! partition 0,1 from=30 to=60
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::ledger::{NodeId, Tick};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{what} line {line}: {msg}")]
pub struct FormatError {
    pub what: &'static str,
    pub line: usize,
    pub msg: String,
}

/// Undirected graph with a delivery delay per edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    nodes: usize,
    edges: BTreeMap<(NodeId, NodeId), Tick>,
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

impl Topology {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            edges: BTreeMap::new(),
        }
    }

    pub fn single() -> Self {
        Self::new(1)
    }

    pub fn line(nodes: usize) -> Self {
        let mut t = Self::new(nodes);
        for i in 1..nodes as NodeId {
            t.connect(i - 1, i, 1);
        }
        t
    }

    pub fn complete(nodes: usize) -> Self {
        let mut t = Self::new(nodes);
        for a in 0..nodes as NodeId {
            for b in a + 1..nodes as NodeId {
                t.connect(a, b, 1);
            }
        }
        t
    }

    /// A random spanning tree plus extra edges, with delays in `1..=max_delay`.
    pub fn random_connected<R: Rng>(nodes: usize, max_delay: Tick, rng: &mut R) -> Self {
        let mut t = Self::new(nodes);
        let mut order: Vec<NodeId> = (0..nodes as NodeId).collect();
        order.shuffle(rng);
        for i in 1..order.len() {
            let j = rng.gen_range(0..i);
            t.connect(order[i], order[j], rng.gen_range(1..=max_delay));
        }
        for a in 0..nodes as NodeId {
            for b in a + 1..nodes as NodeId {
                if rng.gen_bool(0.25) {
                    t.connect(a, b, rng.gen_range(1..=max_delay));
                }
            }
        }
        t
    }

    /// Adds or replaces an edge. Delays below one tick are raised to one.
    pub fn connect(&mut self, a: NodeId, b: NodeId, delay: Tick) {
        assert!(a != b && (a as usize) < self.nodes && (b as usize) < self.nodes);
        self.edges.insert(key(a, b), delay.max(1));
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes == 0
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, Tick)> + '_ {
        self.edges.iter().map(|(&(a, b), &d)| (a, b, d))
    }

    /// Neighbours of `node` in id order, with edge delays.
    pub fn neighbors(&self, node: NodeId) -> Vec<(NodeId, Tick)> {
        self.edges
            .iter()
            .filter_map(|(&(a, b), &d)| match () {
                _ if a == node => Some((b, d)),
                _ if b == node => Some((a, d)),
                _ => None,
            })
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes == 0 {
            return true;
        }
        let mut seen = BTreeSet::from([0]);
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            for (m, _) in self.neighbors(n) {
                if seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        seen.len() == self.nodes
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut topo: Option<Topology> = None;
        for (i, raw) in text.lines().enumerate() {
            let err = |msg: String| FormatError {
                what: "topology",
                line: i + 1,
                msg,
            };
            let body = raw.split('#').next().unwrap_or("").trim();
            let words: Vec<&str> = body.split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                ["nodes", n] if topo.is_none() => {
                    let n: usize = n.parse().map_err(|_| err(format!("bad node count {n:?}")))?;
                    if n == 0 {
                        return Err(err("a network needs at least one node".into()));
                    }
                    topo = Some(Topology::new(n));
                }
                ["nodes", ..] => return Err(err("repeated nodes line".into())),
                ["edge", a, b, rest @ ..] => {
                    let t = topo.as_mut().ok_or_else(|| err("edge before nodes line".into()))?;
                    let node = |s: &str| -> Result<NodeId, FormatError> {
                        let n: NodeId = s.parse().map_err(|_| err(format!("bad node id {s:?}")))?;
                        if n as usize >= t.nodes {
                            return Err(err(format!("node {n} out of range")));
                        }
                        Ok(n)
                    };
                    let (a, b) = (node(a)?, node(b)?);
                    if a == b {
                        return Err(err("self loop".into()));
                    }
                    let delay = match rest {
                        [] => 1,
                        [d] => d
                            .strip_prefix("delay=")
                            .and_then(|d| d.parse().ok())
                            .filter(|d| *d >= 1)
                            .ok_or_else(|| err(format!("bad delay {d:?}")))?,
                        _ => return Err(err("trailing words after edge".into())),
                    };
                    t.connect(a, b, delay);
                }
                _ => return Err(err(format!("unrecognised line {body:?}"))),
            }
        }
        topo.ok_or(FormatError {
            what: "topology",
            line: 0,
            msg: "missing nodes line".into(),
        })
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes {}", self.nodes)?;
        for (a, b, d) in self.edges() {
            writeln!(f, "edge {a} {b} delay={d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// The edge between two nodes loses messages.
    Drop { a: NodeId, b: NodeId, from: Tick, to: Tick },
    /// Edges between `group` and every other node lose messages.
    Partition { group: BTreeSet<NodeId>, from: Tick, to: Tick },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultSchedule {
    pub faults: Vec<Fault>,
}

impl FaultSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn blocks(&self, a: NodeId, b: NodeId, tick: Tick) -> bool {
        self.faults.iter().any(|f| match f {
            Fault::Drop { a: x, b: y, from, to } => key(a, b) == key(*x, *y) && (*from..*to).contains(&tick),
            Fault::Partition { group, from, to } => {
                (*from..*to).contains(&tick) && (group.contains(&a) != group.contains(&b))
            }
        })
    }

    /// Ticks at which some fault ends.
    pub fn heal_ticks(&self) -> BTreeSet<Tick> {
        self.faults
            .iter()
            .map(|f| match f {
                Fault::Drop { to, .. } | Fault::Partition { to, .. } => *to,
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let err = |msg: String| FormatError {
                what: "fault schedule",
                line: i + 1,
                msg,
            };
            let body = raw.split('#').next().unwrap_or("").trim();
            let words: Vec<&str> = body.split_whitespace().collect();
            let window = |from: &str, to: &str| -> Result<(Tick, Tick), FormatError> {
                let f = from.strip_prefix("from=").and_then(|v| v.parse().ok());
                let t = to.strip_prefix("to=").and_then(|v| v.parse().ok());
                match (f, t) {
                    (Some(f), Some(t)) if f < t => Ok((f, t)),
                    _ => Err(err(format!("bad window {from} {to}"))),
                }
            };
            let node = |s: &str| s.parse::<NodeId>().map_err(|_| err(format!("bad node id {s:?}")));
            match words.as_slice() {
                [] => {}
                ["drop", a, b, from, to] => {
                    let (from, to) = window(from, to)?;
                    out.faults.push(Fault::Drop {
                        a: node(a)?,
                        b: node(b)?,
                        from,
                        to,
                    });
                }
                ["partition", group, from, to] => {
                    let (from, to) = window(from, to)?;
                    let group = group.split(',').map(node).collect::<Result<BTreeSet<_>, _>>()?;
                    out.faults.push(Fault::Partition { group, from, to });
                }
                _ => return Err(err(format!("unrecognised line {body:?}"))),
            }
        }
        Ok(out)
    }
}

impl fmt::Display for FaultSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fault in &self.faults {
            match fault {
                Fault::Drop { a, b, from, to } => writeln!(f, "drop {a} {b} from={from} to={to}")?,
                Fault::Partition { group, from, to } => {
                    let g: Vec<String> = group.iter().map(|n| n.to_string()).collect();
                    writeln!(f, "partition {} from={from} to={to}", g.join(","))?
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn parse_and_render_topology() {
        let t = Topology::parse("nodes 3\nedge 0 1 delay=2\nedge 2 1 # comment\n").unwrap();
        assert_eq!(t.neighbors(1), vec![(0, 2), (2, 1)]);
        assert!(t.is_connected());
        assert_eq!(Topology::parse(&t.to_string()).unwrap(), t);
        for bad in ["edge 0 1", "nodes 2\nedge 0 5", "nodes 2\nedge 1 1", "nodes 0", "nodes 2\nedge 0 1 delay=0"] {
            assert!(Topology::parse(bad).is_err(), "{bad}");
        }
        assert!(!Topology::new(2).is_connected());
    }

    #[test]
    fn random_topologies_are_connected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for n in 1..=10 {
            assert!(Topology::random_connected(n, 3, &mut rng).is_connected());
        }
    }

    #[test]
    fn fault_windows() {
        let f = FaultSchedule::parse("drop 0 1 from=10 to=20\npartition 2,3 from=30 to=40\n").unwrap();
        assert!(f.blocks(1, 0, 10) && f.blocks(0, 1, 19));
        assert!(!f.blocks(0, 1, 20) && !f.blocks(0, 2, 15));
        assert!(f.blocks(2, 0, 30) && !f.blocks(2, 3, 30) && !f.blocks(0, 1, 35));
        assert_eq!(f.heal_ticks(), BTreeSet::from([20, 40]));
        assert_eq!(FaultSchedule::parse(&f.to_string()).unwrap(), f);
        assert!(FaultSchedule::parse("drop 0 1 from=5 to=5").is_err());
        assert!(FaultSchedule::parse("cut 0 1").is_err());
    }
}
