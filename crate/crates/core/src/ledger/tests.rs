use super::*;
use crate::ballot::Choice;
use crate::par::ExecMode;
use crate::testutil::{self, Fixture};

fn vid(n: u64) -> Vid {
    Vid::from_u64(n)
}

#[test]
fn init_chain_validates_config() {
    let chain = testutil::chain(true);
    assert_eq!(chain.height(), 0);
    assert_eq!(chain.config().candidates.len(), 3);
    assert!(chain.config().cancel_ballots);

    let mut cfg = testutil::config(true);
    cfg.candidates.clear();
    assert!(matches!(Chain::new(cfg), Err(LedgerError::InvalidConfig(_))));

    let mut cfg = testutil::config(true);
    cfg.count_end_time = cfg.election_end_time;
    assert!(matches!(Chain::new(cfg), Err(LedgerError::InvalidConfig(_))));

    let mut cfg = testutil::config(true);
    cfg.election_end_time = 0;
    assert!(matches!(Chain::new(cfg), Err(LedgerError::InvalidConfig(_))));
}

#[test]
fn validate_vote_admission_rules() {
    let mut fx = Fixture::new(1);
    let mut chain = testutil::chain(true);
    let (_, ballot) = fx.ballot(1, Choice::Candidate(0));
    assert_eq!(chain.validate_vote(&ballot, &vid(1), 50), Ok(()));
    assert_eq!(
        chain.validate_vote(&ballot, &vid(1), 150),
        Err(RejectReason::AfterDeadline)
    );
    assert_eq!(
        chain.validate_vote(&ballot, &vid(1), 100),
        Err(RejectReason::AfterDeadline)
    );
    chain.append_block(vec![(vid(1), ballot.clone())], 0, 50).unwrap();
    assert_eq!(
        chain.validate_vote(&ballot, &vid(2), 51),
        Err(RejectReason::DuplicateVoter)
    );
    let (_, other) = fx.ballot(2, Choice::Candidate(1));
    assert_eq!(
        chain.validate_vote(&other, &vid(1), 51),
        Err(RejectReason::DuplicateVid)
    );

    let VotePayload::Ballot(mut forged) = other.clone() else { unreachable!() };
    forged.token.signature.0[3] ^= 0x10;
    assert_eq!(
        chain.validate_vote(&VotePayload::Ballot(forged), &vid(3), 51),
        Err(RejectReason::BadToken)
    );
}

#[test]
fn readmit_repeats_stateful_rules_only() {
    let mut fx = Fixture::new(11);
    let mut chain = testutil::chain(true);
    let (_, a) = fx.ballot(1, Choice::Candidate(0));
    let (_, b) = fx.ballot(2, Choice::Candidate(1));
    chain.append_block(vec![(vid(1), a.clone())], 0, 10).unwrap();

    let mut adm = chain.admission();
    assert_eq!(adm.readmit(&a, &vid(2), 20), Err(RejectReason::DuplicateVoter));
    assert_eq!(adm.readmit(&b, &vid(1), 20), Err(RejectReason::DuplicateVid));
    assert_eq!(adm.readmit(&b, &vid(2), 100), Err(RejectReason::AfterDeadline));
    assert_eq!(adm.readmit(&b, &vid(2), 20), Ok(()));
    assert_eq!(adm.readmit(&b, &vid(3), 20), Err(RejectReason::DuplicateVoter));

    // A token that was never checked slips through readmit but not admit.
    let VotePayload::Ballot(mut forged) = fx.ballot(3, Choice::Candidate(0)).1 else { unreachable!() };
    forged.token.signature.0[0] ^= 1;
    let forged = VotePayload::Ballot(forged);
    assert_eq!(chain.admission().admit(&forged, &vid(4), 20), Err(RejectReason::BadToken));
    assert_eq!(chain.admission().readmit(&forged, &vid(4), 20), Ok(()));
}

#[test]
fn alteration_rules() {
    let mut fx = Fixture::new(2);
    let (mut v, ballot) = fx.ballot(1, Choice::Candidate(0));
    let alt = fx.alteration(&mut v, vid(1), Choice::Candidate(1));

    let mut closed = testutil::chain(false);
    closed.append_block(vec![(vid(1), ballot.clone())], 0, 10).unwrap();
    assert_eq!(
        closed.validate_vote(&alt, &vid(2), 20),
        Err(RejectReason::AlterationForbidden)
    );

    let mut open = testutil::chain(true);
    open.append_block(vec![(vid(1), ballot)], 0, 10).unwrap();
    assert_eq!(open.validate_vote(&alt, &vid(2), 20), Ok(()));

    let VotePayload::Alteration(mut bad) = alt else { unreachable!() };
    bad.dc_new.0[0] ^= 1;
    assert_eq!(
        open.validate_vote(&VotePayload::Alteration(bad), &vid(2), 20),
        Err(RejectReason::BadSignature)
    );
}

#[test]
fn append_block_links_and_rejects_conflicts() {
    let mut fx = Fixture::new(3);
    let mut chain = testutil::chain(true);
    let (_, b1) = fx.ballot(1, Choice::Candidate(0));
    let (_, b2) = fx.ballot(2, Choice::Candidate(1));
    chain
        .append_block(vec![(vid(1), b1.clone()), (vid(2), b2.clone())], 0, 5)
        .unwrap();
    assert_eq!(chain.height(), 1);
    assert!(chain.get(&vid(1)).is_some() && chain.get(&vid(2)).is_some());
    assert_eq!(chain.blocks()[0].prev_hash, chain.genesis().hash);

    let (_, b3) = fx.ballot(3, Choice::Candidate(1));
    let (_, b4) = fx.ballot(4, Choice::Candidate(1));
    let err = chain
        .append_block(vec![(vid(3), b3.clone()), (vid(3), b4)], 0, 6)
        .unwrap_err();
    assert_eq!(
        err,
        AppendError::StaleValidation {
            vid: vid(3),
            reason: RejectReason::DuplicateVid
        }
    );
    assert_eq!(chain.height(), 1);

    let mut wrong_parent = chain.build_block(vec![(vid(3), b3)], 0, 6).unwrap();
    wrong_parent.prev_hash = [7; 32];
    assert!(matches!(
        chain.import_block(wrong_parent),
        Err(AppendError::BadParent { .. })
    ));
}

#[test]
fn import_block_checks_hash_and_votes() {
    let mut fx = Fixture::new(4);
    let mut a = testutil::chain(true);
    let mut b = testutil::chain(true);
    let (_, b1) = fx.ballot(1, Choice::Candidate(0));
    let block = a.build_block(vec![(vid(1), b1)], 3, 5).unwrap();
    let mut tampered = block.clone();
    tampered.proposer = 4;
    assert_eq!(b.import_block(tampered), Err(AppendError::BadHash));
    a.import_block(block.clone()).unwrap();
    b.import_block(block).unwrap();
    assert_eq!(a.ledger_bytes(), b.ledger_bytes());
}

#[test]
fn retrieve_and_seal_state() {
    let mut fx = Fixture::new(5);
    let mut chain = testutil::chain(true);
    let (_, b1) = fx.ballot(1, Choice::Candidate(0));
    chain.append_block(vec![(vid(1), b1)], 0, 5).unwrap();

    assert_eq!(chain.return_sealed(&vid(1)), Ok(true));
    assert_eq!(chain.return_time_unsealed(&vid(1)), Ok(None));
    assert_eq!(
        chain.retrieve_vote(&vid(1), 90).unwrap_err(),
        LedgerError::ElectionStillOpen { now: 90, end: 100 }
    );
    let (_, first) = chain.retrieve_vote(&vid(1), 150).unwrap();
    assert!(first);
    assert_eq!(chain.return_time_unsealed(&vid(1)), Ok(Some(150)));
    let (_, first) = chain.retrieve_vote(&vid(1), 170).unwrap();
    assert!(!first);
    assert_eq!(chain.return_sealed(&vid(1)), Ok(false));
    assert_eq!(chain.return_time_unsealed(&vid(1)), Ok(Some(150)));
    assert_eq!(chain.mark_revealed(&vid(1), 160), Ok(false));
    assert_eq!(chain.return_time_unsealed(&vid(1)), Ok(Some(150)));
    assert_eq!(chain.mark_revealed(&vid(1), 10), Ok(true));
    assert_eq!(chain.return_time_unsealed(&vid(1)), Ok(Some(10)));

    assert_eq!(chain.return_sealed(&vid(9)), Err(LedgerError::UnknownVid(vid(9))));
    assert_eq!(chain.return_time_unsealed(&vid(9)), Err(LedgerError::UnknownVid(vid(9))));
    assert!(chain.retrieve_vote(&vid(9), 150).is_err());
}

#[test]
fn seal_state_does_not_affect_block_hashes() {
    let mut fx = Fixture::new(6);
    let mut chain = testutil::chain(true);
    let (_, b1) = fx.ballot(1, Choice::Candidate(0));
    chain.append_block(vec![(vid(1), b1)], 0, 5).unwrap();
    let before = chain.ledger_bytes();
    chain.mark_revealed(&vid(1), 42).unwrap();
    assert_eq!(chain.ledger_bytes(), before);
    assert_ne!(chain.encode_file(), before);
    assert!(chain.verify().is_clean());
}

fn honest_chain(fx: &mut Fixture) -> Chain {
    let mut chain = testutil::chain(true);
    let (mut v1, b1) = fx.ballot(1, Choice::Candidate(0));
    let (_, b2) = fx.ballot(2, Choice::Candidate(1));
    chain
        .append_block(vec![(vid(1), b1), (vid(2), b2)], 0, 5)
        .unwrap();
    let alt = fx.alteration(&mut v1, vid(1), Choice::Candidate(2));
    chain.append_block(vec![(vid(3), alt)], 1, 6).unwrap();
    chain
}

#[test]
fn verify_chain_reports_tampering() {
    let mut fx = Fixture::new(7);
    let chain = honest_chain(&mut fx);
    assert!(chain.verify().is_clean());
    assert_eq!(
        chain.verify_with(ExecMode::Sequential),
        chain.verify_with(ExecMode::Parallel)
    );

    let mut blocks = chain.blocks().to_vec();
    if let VotePayload::Ballot(b) = &mut blocks[0].votes[1].payload {
        b.token.signature.0[10] ^= 0x01;
    }
    let tampered = Chain::from_parts(chain.genesis().clone(), blocks);
    let report = tampered.verify();
    assert_eq!(
        report.first(),
        Some(&Violation {
            kind: ViolationKind::BadToken,
            height: 1,
            vid: Some(vid(2))
        })
    );
    assert!(report.contains(ViolationKind::BrokenLink));
}

#[test]
fn verify_chain_finds_duplicate_vid_injected_through_raw_parts() {
    let mut fx = Fixture::new(8);
    let chain = honest_chain(&mut fx);
    let mut blocks = chain.blocks().to_vec();
    blocks[1].votes[0].vid = vid(1);
    // Re-seal so only the duplicate remains.
    let b1 = &blocks[1];
    blocks[1] = Block::seal(b1.height, b1.prev_hash, b1.votes.clone(), b1.proposer);
    let tampered = Chain::from_parts(chain.genesis().clone(), blocks);
    let report = tampered.verify();
    assert_eq!(report.violations.len(), 1, "{report:?}");
    assert_eq!(report.violations[0].kind, ViolationKind::DuplicateVid);
}

#[test]
fn verify_chain_flags_alteration_when_forbidden() {
    let mut fx = Fixture::new(9);
    let chain = honest_chain(&mut fx);
    let mut cfg = chain.config().clone();
    cfg.cancel_ballots = false;
    let genesis = GenesisBlock {
        hash: GenesisBlock::compute_hash(&cfg),
        config: cfg,
    };
    let mut blocks = chain.blocks().to_vec();
    let mut prev = genesis.hash;
    for b in &mut blocks {
        *b = Block::seal(b.height, prev, b.votes.clone(), b.proposer);
        prev = b.hash;
    }
    let report = Chain::from_parts(genesis, blocks).verify();
    assert_eq!(report.violations.len(), 1);
    assert_eq!(report.violations[0].kind, ViolationKind::AlterationForbidden);
}

#[test]
fn chain_file_round_trip() {
    let mut fx = Fixture::new(10);
    let mut chain = honest_chain(&mut fx);
    chain.mark_revealed(&vid(2), 120).unwrap();
    let bytes = chain.encode_file();
    let back = Chain::decode_file(&bytes).unwrap();
    assert_eq!(back, chain);
    assert_eq!(back.return_time_unsealed(&vid(2)), Ok(Some(120)));
    assert_eq!(back.encode_file(), bytes);
    assert!(Chain::decode_file(&bytes[..bytes.len() - 1]).is_err());
    assert!(Chain::decode_file(b"nonsense").is_err());
}

#[test]
fn adopt_blocks_keeps_local_seals() {
    let mut fx = Fixture::new(11);
    let mut a = honest_chain(&mut fx);
    let b = a.clone();
    a.mark_revealed(&vid(1), 7).unwrap();
    let mut c = testutil::chain(true);
    c.adopt_blocks(&b);
    assert_eq!(c.ledger_bytes(), a.ledger_bytes());
    a.adopt_blocks(&b);
    assert_eq!(a.return_time_unsealed(&vid(1)), Ok(Some(7)));
}
