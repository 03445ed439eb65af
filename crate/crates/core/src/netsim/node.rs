use std::collections::{HashMap, HashSet};

use super::Message;
use crate::ballot::{OpeningMessage, Vid, VotePayload};
use crate::crypto::{sha256, Digest32};
use crate::encoding::Canonical;
use crate::engine::{apply_reveals, count, PhaseClock, TallyResult};
use crate::ledger::{
    AppendError, Block, Chain, LedgerError, NodeId, RejectReason, Tick, VoteEntry, MAX_VOTES_PER_BLOCK,
};
use crate::par::ExecMode;
use crate::transcript::Event;

/// Where a handler wants a message to go.
#[derive(Debug)]
pub(crate) enum Send {
    /// Every neighbour except the one the triggering message came from.
    Relay(Message),
    To(NodeId, Message),
}

pub(crate) struct Ctx<'a> {
    pub now: Tick,
    pub from: Option<NodeId>,
    pub admitted: &'a [NodeId],
    pub out: Vec<Send>,
    pub events: &'a mut Vec<Event>,
}

fn vote_key(vid: &Vid, payload: &VotePayload) -> Digest32 {
    sha256(&[&vid.0, &payload.to_canonical_bytes()])
}

fn append_reason(e: &AppendError) -> String {
    match e {
        AppendError::BadParent { .. } => "BadParent".into(),
        AppendError::BadHash => "BadHash".into(),
        AppendError::BlockTooLarge(_) => "BlockTooLarge".into(),
        AppendError::StaleValidation { reason, .. } => reason.to_string(),
    }
}

fn better(height: u64, hash: &Digest32, than_height: u64, than_hash: &Digest32) -> bool {
    height > than_height || (height == than_height && hash < than_hash)
}

#[derive(Debug, Clone)]
pub struct SimNode {
    id: NodeId,
    chain: Chain,
    pool: Vec<(Vid, VotePayload)>,
    seen_votes: HashSet<Digest32>,
    openings: Vec<(OpeningMessage, Tick)>,
    opening_index: HashMap<Digest32, usize>,
    tally: Option<TallyResult>,
}

impl SimNode {
    pub(crate) fn new(id: NodeId, chain: Chain) -> Self {
        Self {
            id,
            chain,
            pool: Vec::new(),
            seen_votes: HashSet::new(),
            openings: Vec::new(),
            opening_index: HashMap::new(),
            tally: None,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn pool(&self) -> &[(Vid, VotePayload)] {
        &self.pool
    }

    /// Openings received so far, with the earliest time each was first seen.
    pub fn openings(&self) -> &[(OpeningMessage, Tick)] {
        &self.openings
    }

    pub fn tally(&self) -> Option<&TallyResult> {
        self.tally.as_ref()
    }

    fn event(&self, ctx: &Ctx<'_>, kind: &str) -> Event {
        Event::new(ctx.now, kind).node(self.id)
    }

    /// Admission against the local chain plus the pending pool.
    pub fn validate(&self, vid: &Vid, payload: &VotePayload, now: Tick) -> Result<(), RejectReason> {
        if now >= self.chain.config().election_end_time {
            return Err(RejectReason::AfterDeadline);
        }
        if self.chain.contains(vid) || self.pool.iter().any(|(v, _)| v == vid) {
            return Err(RejectReason::DuplicateVid);
        }
        if let VotePayload::Ballot(b) = payload {
            let pooled = self
                .pool
                .iter()
                .any(|(_, p)| matches!(p, VotePayload::Ballot(o) if o.voter_pub == b.voter_pub));
            if pooled || self.chain.has_ballot_from(&b.voter_pub) {
                return Err(RejectReason::DuplicateVoter);
            }
        }
        self.chain.validate_vote(payload, vid, now)
    }

    pub(crate) fn handle(&mut self, msg: Message, ctx: &mut Ctx<'_>) {
        match msg {
            Message::Vote { vid, payload } => self.on_vote(vid, payload, ctx),
            Message::Opening { msg, first_seen } => self.on_opening(msg, first_seen, ctx),
            Message::Block(block) => self.on_block(block, ctx),
            Message::Tip { height, hash } => {
                if better(height, &hash, self.chain.height(), &self.chain.tip_hash()) {
                    if let Some(p) = ctx.from {
                        ctx.out.push(Send::To(p, Message::SyncRequest));
                    }
                }
            }
            Message::SyncRequest => {
                if let Some(p) = ctx.from {
                    ctx.out.push(Send::To(p, Message::Sync(self.chain.blocks().to_vec())));
                }
            }
            Message::Sync(blocks) => self.on_sync(blocks, ctx),
        }
    }

    fn on_vote(&mut self, vid: Vid, payload: VotePayload, ctx: &mut Ctx<'_>) {
        let key = vote_key(&vid, &payload);
        // Gossip echoes are dropped quietly; client submissions are always judged.
        if !self.seen_votes.insert(key) && ctx.from.is_some() {
            return;
        }
        match self.validate(&vid, &payload, ctx.now) {
            Ok(()) => {
                self.pool.push((vid, payload.clone()));
                ctx.out.push(Send::Relay(Message::Vote { vid, payload }));
            }
            Err(reason) => {
                let e = self.event(ctx, "reject").vid(&vid).reason(reason);
                ctx.events.push(e);
            }
        }
    }

    fn on_opening(&mut self, msg: OpeningMessage, first_seen: Tick, ctx: &mut Ctx<'_>) {
        let key = sha256(&[&msg.to_canonical_bytes()]);
        match self.opening_index.get(&key) {
            Some(&i) if self.openings[i].1 <= first_seen => return,
            Some(&i) => self.openings[i].1 = first_seen,
            None => {
                self.opening_index.insert(key, self.openings.len());
                self.openings.push((msg.clone(), first_seen));
            }
        }
        // Every opening is relayed: whether it is valid depends on which vote
        // it names, and all nodes must count from the same set.
        apply_reveals(&mut self.chain, &[(msg.clone(), first_seen)]);
        ctx.out.push(Send::Relay(Message::Opening { msg, first_seen }));
    }

    fn on_block(&mut self, block: Block, ctx: &mut Ctx<'_>) {
        if self.chain.blocks().iter().any(|b| b.hash == block.hash) {
            return;
        }
        let (h, tip) = (self.chain.height(), self.chain.tip_hash());
        if block.height == h + 1 && block.prev_hash == tip {
            if !ctx.admitted.contains(&block.proposer) {
                let e = self.event(ctx, "reject-block").with("height", block.height).reason("UnknownProposer");
                ctx.events.push(e);
                return;
            }
            let relay = block.clone();
            match self.chain.import_block(block) {
                Ok(()) => {
                    self.after_chain_change(h as usize);
                    ctx.out.push(Send::Relay(Message::Block(relay)));
                }
                Err(e) => {
                    let ev = self.event(ctx, "reject-block").with("height", relay.height).reason(append_reason(&e));
                    ctx.events.push(ev);
                }
            }
        } else if let Some(p) = ctx.from {
            if better(block.height, &block.hash, h, &tip) {
                ctx.out.push(Send::To(p, Message::SyncRequest));
            } else {
                ctx.out.push(Send::To(p, Message::Tip { height: h, hash: tip }));
            }
        }
    }

    fn on_sync(&mut self, blocks: Vec<Block>, ctx: &mut Ctx<'_>) {
        let (Some(last), h, tip) = (blocks.last(), self.chain.height(), self.chain.tip_hash()) else {
            return;
        };
        if !better(blocks.len() as u64, &last.hash, h, &tip) {
            return;
        }
        let common = self
            .chain
            .blocks()
            .iter()
            .zip(&blocks)
            .take_while(|(a, b)| a.hash == b.hash)
            .count();
        let mut candidate = Chain::from_parts(self.chain.genesis().clone(), self.chain.blocks()[..common].to_vec());
        for b in &blocks[common..] {
            if !ctx.admitted.contains(&b.proposer) || candidate.import_block(b.clone()).is_err() {
                let e = self.event(ctx, "reject-sync").with("height", b.height);
                ctx.events.push(e);
                return;
            }
        }
        let orphaned: Vec<(Vid, VotePayload)> = self.chain.blocks()[common..]
            .iter()
            .flat_map(|b| b.votes.iter())
            .filter(|e| candidate.get(&e.vid).map(|c| &c.payload) != Some(&e.payload))
            .map(|e| (e.vid, e.payload.clone()))
            .collect();
        self.chain.adopt_blocks(&candidate);
        let e = self
            .event(ctx, "reorg")
            .with("from", h)
            .with("to", self.chain.height())
            .with("returned", orphaned.len());
        ctx.events.push(e);
        for (vid, payload) in orphaned {
            if self.validate(&vid, &payload, ctx.now).is_ok() {
                self.pool.push((vid, payload.clone()));
                ctx.out.push(Send::Relay(Message::Vote { vid, payload }));
            }
        }
        self.after_chain_change(common);
        ctx.out.push(Send::Relay(Message::Tip {
            height: self.chain.height(),
            hash: self.chain.tip_hash(),
        }));
    }

    /// Housekeeping after the blocks from index `from` onward became part of
    /// the local chain.
    fn after_chain_change(&mut self, from: usize) {
        let chain = &self.chain;
        self.pool.retain(|(vid, p)| {
            !chain.contains(vid)
                && !matches!(p, VotePayload::Ballot(b) if chain.has_ballot_from(&b.voter_pub))
        });
        let mut fresh = HashSet::new();
        for e in chain.blocks()[from..].iter().flat_map(|b| &b.votes) {
            self.seen_votes.insert(vote_key(&e.vid, &e.payload));
            fresh.insert(e.vid);
        }
        let pending: Vec<_> = self.openings.iter().filter(|(o, _)| fresh.contains(&o.vid)).cloned().collect();
        apply_reveals(&mut self.chain, &pending);
    }

    /// Builds and appends a block from the pool if there is anything to add.
    pub(crate) fn propose(&mut self, ctx: &mut Ctx<'_>) {
        if self.pool.is_empty() {
            return;
        }
        let mut adm = self.chain.admission();
        let mut votes = Vec::new();
        let mut rest = Vec::new();
        let mut dropped = Vec::new();
        for (vid, payload) in std::mem::take(&mut self.pool) {
            if votes.len() == MAX_VOTES_PER_BLOCK {
                rest.push((vid, payload));
                continue;
            }
            // Pool entries were fully checked on arrival.
            match adm.readmit(&payload, &vid, ctx.now) {
                Ok(()) => votes.push(VoteEntry::new(vid, payload, ctx.now)),
                Err(reason) => dropped.push((vid, reason)),
            }
        }
        self.pool = rest;
        for (vid, reason) in dropped {
            let e = self.event(ctx, "drop").vid(&vid).reason(reason);
            ctx.events.push(e);
        }
        if votes.is_empty() {
            return;
        }
        let block = Block::seal(self.chain.height() + 1, self.chain.tip_hash(), votes, self.id);
        let e = self
            .event(ctx, "block")
            .with("height", block.height)
            .with("votes", block.votes.len());
        ctx.events.push(e);
        self.chain.push_validated(block.clone());
        self.after_chain_change(self.chain.blocks().len() - 1);
        ctx.out.push(Send::Relay(Message::Block(block)));
    }

    /// Messages that bring a reconnected neighbour up to date.
    pub(crate) fn resync_messages(&self) -> Vec<Message> {
        let mut out = vec![Message::Tip {
            height: self.chain.height(),
            hash: self.chain.tip_hash(),
        }];
        out.extend(self.pool.iter().map(|(vid, payload)| Message::Vote {
            vid: *vid,
            payload: payload.clone(),
        }));
        out.extend(self.openings.iter().map(|(msg, first_seen)| Message::Opening {
            msg: msg.clone(),
            first_seen: *first_seen,
        }));
        out
    }

    pub(crate) fn run_count(&mut self, now: Tick, mode: ExecMode, events: &mut Vec<Event>) {
        let openings: Vec<OpeningMessage> = self.openings.iter().map(|(o, _)| o.clone()).collect();
        let clock = PhaseClock::new(self.chain.config(), now);
        match count(&mut self.chain, &openings, &clock, mode) {
            Ok(t) => {
                events.push(
                    Event::new(now, "tally")
                        .node(self.id)
                        .with("counted", t.counted())
                        .with("standing", t.standing_votes)
                        .with("excluded", t.excluded.len()),
                );
                self.tally = Some(t);
            }
            Err(e) => {
                let reason = match e {
                    LedgerError::ElectionStillOpen { .. } => "ElectionStillOpen",
                    _ => "LedgerError",
                };
                events.push(Event::new(now, "count-failed").node(self.id).reason(reason));
            }
        }
    }
}
