use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::ballot::Choice;
use crate::testutil::{self, Fixture, Voter};

fn vid(n: u64) -> Vid {
    Vid::from_u64(n)
}

fn net(topology: Topology, faults: FaultSchedule) -> SimNetwork {
    SimNetwork::new(testutil::config(true), topology, faults, 7).unwrap()
}

fn ballot_of(p: &VotePayload) -> &Ballot {
    match p {
        VotePayload::Ballot(b) => b,
        _ => unreachable!(),
    }
}

/// Casts `n` ballots, each through node `i % nodes`, and opens them after the
/// deadline. Voter `i` chooses candidate `i % 3`.
fn honest_election(net: &mut SimNetwork, fx: &mut Fixture, n: usize) -> Vec<Voter> {
    let nodes = net.nodes().len() as NodeId;
    let mut voters = Vec::new();
    for i in 0..n {
        let (v, p) = fx.ballot(i as u8 + 1, Choice::Candidate(i as u32 % 3));
        let node = i as NodeId % nodes;
        net.admit(node, ballot_of(&p)).unwrap();
        net.inject(node, Injection::Vote { vid: vid(i as u64 + 1), payload: p }, 5 + i as Tick)
            .unwrap();
        voters.push(v);
    }
    for (i, v) in voters.iter().enumerate() {
        let node = (i as NodeId + 1) % nodes;
        net.inject(node, Injection::Opening(testutil::open(v, vid(i as u64 + 1))), 120).unwrap();
    }
    voters
}

#[test]
fn single_node_counts_one_vote() {
    let mut fx = Fixture::new(1);
    let mut net = net(Topology::single(), FaultSchedule::none());
    honest_election(&mut net, &mut fx, 1);
    net.run_until(201);
    let tally = net.nodes()[0].tally().unwrap();
    assert_eq!(tally.per_candidate, vec![1, 0, 0]);
    assert_eq!(net.nodes()[0].chain().height(), 1);
    assert!(net.is_quiescent());
}

#[test]
fn honest_votes_reach_every_node() {
    let mut fx = Fixture::new(2);
    let mut net = net(Topology::line(4), FaultSchedule::none());
    honest_election(&mut net, &mut fx, 9);
    net.run_until(201);
    assert!(net.converged(), "divergent: {:?}", net.divergent_nodes());
    assert_eq!(net.nodes()[3].tally().unwrap().per_candidate, vec![3, 3, 3]);
    assert_eq!(net.nodes()[3].chain().vote_count(), 9);
    assert!(net.nodes()[2].chain().verify().is_clean());
}

#[test]
fn invalid_votes_are_rejected_with_a_reason() {
    let mut fx = Fixture::new(3);
    let mut net = net(Topology::line(2), FaultSchedule::none());
    let (_a, pa) = fx.ballot(1, Choice::Candidate(0));
    net.admit(0, ballot_of(&pa)).unwrap();
    let mut forged = ballot_of(&pa).clone();
    forged.token.signature.0[10] ^= 1;
    net.inject(0, Injection::Vote { vid: vid(1), payload: pa.clone() }, 1).unwrap();
    net.inject(1, Injection::Vote { vid: vid(2), payload: VotePayload::Ballot(forged) }, 1).unwrap();
    // same voter again, then the same VID once the first is confirmed
    net.inject(1, Injection::Vote { vid: vid(3), payload: pa.clone() }, 20).unwrap();
    let (_b, pb) = fx.ballot(2, Choice::Candidate(1));
    net.inject(0, Injection::Vote { vid: vid(1), payload: pb.clone() }, 20).unwrap();
    net.inject(0, Injection::Vote { vid: vid(4), payload: pb }, 100).unwrap();
    net.run_until(150);
    let rejects: BTreeSet<(String, String)> = net
        .take_events()
        .iter()
        .filter(|e| e.kind() == "reject")
        .map(|e| (e.get("vid").unwrap().to_string(), e.get("reason").unwrap().to_string()))
        .collect();
    for (v, r) in [(2, "BadToken"), (3, "DuplicateVoter"), (1, "DuplicateVID"), (4, "AfterDeadline")] {
        assert!(rejects.contains(&(vid(v).to_string(), r.to_string())), "{v} {r} in {rejects:?}");
    }
    assert_eq!(net.nodes()[1].chain().vote_count(), 1);
}

#[test]
fn admission_requires_a_valid_token() {
    let mut fx = Fixture::new(4);
    let mut net = net(Topology::line(2), FaultSchedule::none());
    let (_v, p) = fx.ballot(1, Choice::Candidate(0));
    let mut bad = ballot_of(&p).clone();
    bad.token.signature.0[0] ^= 1;
    assert_eq!(net.admit(0, &bad), Err(NetError::NotEligible));
    assert_eq!(net.admit(5, ballot_of(&p)), Err(NetError::UnknownNode(5)));
    assert_eq!(net.admit(1, ballot_of(&p)), Ok(true));
    assert_eq!(net.admit(1, ballot_of(&p)), Ok(false));
    assert_eq!(net.proposer(0), Some(1));
}

#[test]
fn injection_errors() {
    let mut fx = Fixture::new(5);
    let mut net = net(Topology::single(), FaultSchedule::none());
    let (_v, p) = fx.ballot(1, Choice::Candidate(0));
    assert_eq!(
        net.inject(3, Injection::Vote { vid: vid(1), payload: p.clone() }, 0),
        Err(NetError::UnknownNode(3))
    );
    net.run_until(10);
    assert_eq!(
        net.inject(0, Injection::Vote { vid: vid(1), payload: p }, 9),
        Err(NetError::PastTick { at: 9, now: 10 })
    );
    assert!(matches!(
        SimNetwork::new(testutil::config(true), Topology::new(0), FaultSchedule::none(), 1),
        Err(NetError::EmptyTopology)
    ));
}

#[test]
fn partition_diverges_until_healed() {
    let mut fx = Fixture::new(6);
    let faults = FaultSchedule::parse("partition 0,1 from=0 to=60").unwrap();
    let mut net = net(Topology::line(4), faults);
    honest_election(&mut net, &mut fx, 6);
    net.run_until(40);
    assert!(!net.converged());
    assert!(net.dropped_messages() > 0);
    net.run_until(201);
    assert!(net.converged(), "divergent: {:?}", net.divergent_nodes());
    assert_eq!(net.nodes()[0].tally().unwrap().per_candidate, vec![2, 2, 2]);
}

#[test]
fn early_reveal_is_seen_by_every_node() {
    let mut fx = Fixture::new(7);
    let mut net = net(Topology::line(3), FaultSchedule::none());
    let voters = honest_election(&mut net, &mut fx, 3);
    net.inject(2, Injection::Opening(testutil::open(&voters[0], vid(1))), 30).unwrap();
    net.run_until(201);
    assert!(net.converged());
    for node in net.nodes() {
        assert_eq!(node.chain().return_time_unsealed(&vid(1)).unwrap(), Some(30));
        assert_eq!(node.tally().unwrap().reason(&vid(1)), Some(crate::engine::ExclusionReason::OpenedEarly));
    }
}

#[test]
fn runs_are_deterministic_and_converge_on_random_graphs() {
    for seed in 0..4u64 {
        let run = || {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let topo = Topology::random_connected(5, 3, &mut rng);
            let mut net = SimNetwork::new(testutil::config(true), topo, FaultSchedule::none(), seed)
                .unwrap()
                .with_jitter(2);
            let mut fx = Fixture::new(seed);
            honest_election(&mut net, &mut fx, 12);
            net.run_until(201);
            net
        };
        let (a, b) = (run(), run());
        assert!(a.converged(), "seed {seed}: divergent {:?}", a.divergent_nodes());
        assert_eq!(a.nodes()[0].chain().encode_file(), b.nodes()[0].chain().encode_file());
        assert_eq!(a.nodes()[4].tally().unwrap().per_candidate, vec![4, 4, 4]);
    }
}
