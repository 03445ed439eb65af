//! Deterministic discrete-event simulation of the voter peer network.
//!
//! Each tick: links that just recovered from a fault exchange state, due
//! messages are delivered in send order, the scheduled proposer seals a block
//! from its pool, and at `count_end_time` every node counts its own replica.
//!
//! Block production is round-robin proof-of-authority over admitted nodes; a
//! node is admitted by presenting a ballot with a valid eligibility token.
//! Forks can still arise from message delay. Nodes prefer the longer chain,
//! then the smaller tip hash, and fetch the full chain from a peer that
//! announces a better tip.

mod node;
mod topology;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::ballot::{Ballot, OpeningMessage, Vid, VotePayload};
use crate::crypto::Digest32;
use crate::ledger::{Block, Chain, ElectionConfig, LedgerError, NodeId, Tick};
use crate::par::ExecMode;
use crate::transcript::Event;

use node::{Ctx, Send};
pub use node::SimNode;
pub use topology::{Fault, FaultSchedule, FormatError, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("tick {at} is in the past (now {now})")]
    PastTick { at: Tick, now: Tick },
    #[error("ballot does not carry a valid eligibility token")]
    NotEligible,
    #[error("topology has no nodes")]
    EmptyTopology,
    #[error(transparent)]
    Config(#[from] LedgerError),
}

#[derive(Debug, Clone)]
pub enum Message {
    Vote { vid: Vid, payload: VotePayload },
    Opening { msg: OpeningMessage, first_seen: Tick },
    Block(Block),
    Tip { height: u64, hash: Digest32 },
    SyncRequest,
    Sync(Vec<Block>),
}

/// What a client can hand to a node.
#[derive(Debug, Clone)]
pub enum Injection {
    Vote { vid: Vid, payload: VotePayload },
    Opening(OpeningMessage),
}

#[derive(Debug, Clone)]
struct Envelope {
    from: Option<NodeId>,
    to: NodeId,
    msg: Message,
}

#[derive(Debug, Clone)]
pub struct SimNetwork {
    topology: Topology,
    faults: FaultSchedule,
    nodes: Vec<SimNode>,
    admitted: Vec<NodeId>,
    queue: BTreeMap<(Tick, u64), Envelope>,
    seq: u64,
    now: Tick,
    rng: ChaCha20Rng,
    jitter: Tick,
    mode: ExecMode,
    dropped: u64,
    events: Vec<Event>,
}

impl SimNetwork {
    pub fn new(config: ElectionConfig, topology: Topology, faults: FaultSchedule, seed: u64) -> Result<Self, NetError> {
        if topology.is_empty() {
            return Err(NetError::EmptyTopology);
        }
        let chain = Chain::new(config)?;
        let nodes = (0..topology.len() as NodeId)
            .map(|i| SimNode::new(i, chain.clone()))
            .collect();
        Ok(Self {
            topology,
            faults,
            nodes,
            admitted: Vec::new(),
            queue: BTreeMap::new(),
            seq: 0,
            now: 0,
            rng: ChaCha20Rng::seed_from_u64(seed),
            jitter: 0,
            mode: ExecMode::default(),
            dropped: 0,
            events: Vec::new(),
        })
    }

    /// Adds a uniformly random `0..=jitter` ticks to every delivery.
    pub fn with_jitter(mut self, jitter: Tick) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    /// The next tick to be processed.
    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&SimNode, NetError> {
        self.nodes.get(id as usize).ok_or(NetError::UnknownNode(id))
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn config(&self) -> &ElectionConfig {
        self.nodes[0].chain().config()
    }

    pub fn admitted(&self) -> &[NodeId] {
        &self.admitted
    }

    pub fn dropped_messages(&self) -> u64 {
        self.dropped
    }

    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    /// Admits `node` to block production once it shows a valid token.
    pub fn admit(&mut self, node: NodeId, ballot: &Ballot) -> Result<bool, NetError> {
        self.node(node)?;
        if !ballot.verify_token(&self.config().ca_public) {
            return Err(NetError::NotEligible);
        }
        if self.admitted.contains(&node) {
            return Ok(false);
        }
        self.admitted.push(node);
        self.admitted.sort_unstable();
        self.events.push(Event::new(self.now, "admit").node(node));
        Ok(true)
    }

    /// Schedules a client message for delivery to `node` at tick `at`.
    pub fn inject(&mut self, node: NodeId, msg: Injection, at: Tick) -> Result<(), NetError> {
        self.node(node)?;
        if at < self.now {
            return Err(NetError::PastTick { at, now: self.now });
        }
        let msg = match msg {
            Injection::Vote { vid, payload } => Message::Vote { vid, payload },
            Injection::Opening(msg) => Message::Opening { msg, first_seen: at },
        };
        self.enqueue(at, None, node, msg);
        Ok(())
    }

    fn enqueue(&mut self, at: Tick, from: Option<NodeId>, to: NodeId, msg: Message) {
        self.queue.insert((at, self.seq), Envelope { from, to, msg });
        self.seq += 1;
    }

    fn send(&mut self, from: NodeId, to: NodeId, delay: Tick, msg: Message) {
        if self.faults.blocks(from, to, self.now) {
            self.dropped += 1;
            return;
        }
        let jitter = if self.jitter > 0 {
            self.rng.gen_range(0..=self.jitter)
        } else {
            0
        };
        self.enqueue(self.now + delay + jitter, Some(from), to, msg);
    }

    fn route(&mut self, node: NodeId, from: Option<NodeId>, out: Vec<Send>) {
        let neighbors = self.topology.neighbors(node);
        for s in out {
            match s {
                Send::Relay(msg) => {
                    for &(n, d) in &neighbors {
                        if Some(n) != from {
                            self.send(node, n, d, msg.clone());
                        }
                    }
                }
                Send::To(n, msg) => {
                    if let Some(&(_, d)) = neighbors.iter().find(|(m, _)| *m == n) {
                        self.send(node, n, d, msg);
                    }
                }
            }
        }
    }

    /// The proposer for `tick`, if any node has been admitted.
    pub fn proposer(&self, tick: Tick) -> Option<NodeId> {
        (!self.admitted.is_empty()).then(|| self.admitted[(tick % self.admitted.len() as u64) as usize])
    }

    /// Advances the simulation by one tick.
    pub fn step(&mut self) {
        let now = self.now;
        if now > 0 {
            self.exchange_on_recovered_links(now);
        }
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let env = entry.remove();
            self.dispatch(env.to, env.from, |node, ctx| node.handle(env.msg, ctx));
        }
        if let Some(p) = self.proposer(now) {
            self.dispatch(p, None, |node, ctx| node.propose(ctx));
        }
        if now == self.config().count_end_time {
            for node in &mut self.nodes {
                node.run_count(now, self.mode, &mut self.events);
            }
        }
        self.now += 1;
    }

    fn dispatch(&mut self, to: NodeId, from: Option<NodeId>, f: impl FnOnce(&mut SimNode, &mut Ctx<'_>)) {
        let mut ctx = Ctx {
            now: self.now,
            from,
            admitted: &self.admitted,
            out: Vec::new(),
            events: &mut self.events,
        };
        f(&mut self.nodes[to as usize], &mut ctx);
        let out = ctx.out;
        self.route(to, from, out);
    }

    fn exchange_on_recovered_links(&mut self, now: Tick) {
        if !self.faults.heal_ticks().contains(&now) {
            return;
        }
        let edges: Vec<(NodeId, NodeId, Tick)> = self.topology.edges().collect();
        for (a, b, d) in edges {
            if self.faults.blocks(a, b, now - 1) && !self.faults.blocks(a, b, now) {
                for (x, y) in [(a, b), (b, a)] {
                    for msg in self.nodes[x as usize].resync_messages() {
                        self.send(x, y, d, msg);
                    }
                }
            }
        }
    }

    /// Processes every tick before `tick`.
    pub fn run_until(&mut self, tick: Tick) {
        while self.now < tick {
            self.step();
        }
    }

    /// No messages in flight and nothing waiting in any pool.
    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty() && self.nodes.iter().all(|n| n.pool().is_empty())
    }

    /// True iff every node holds byte-identical ledger contents and the same
    /// tally (or none).
    pub fn converged(&self) -> bool {
        let first = &self.nodes[0];
        let bytes = first.chain().ledger_bytes();
        self.nodes[1..]
            .iter()
            .all(|n| n.tally() == first.tally() && n.chain().ledger_bytes() == bytes)
    }

    /// Nodes whose replica differs from node 0, for diagnostics.
    pub fn divergent_nodes(&self) -> BTreeSet<NodeId> {
        let first = &self.nodes[0];
        let bytes = first.chain().ledger_bytes();
        self.nodes
            .iter()
            .filter(|n| n.tally() != first.tally() || n.chain().ledger_bytes() != bytes)
            .map(|n| n.id())
            .collect()
    }
}

#[cfg(test)]
mod tests;
