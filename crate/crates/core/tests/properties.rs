use ballotchain::ballot::{Choice, VotePayload};
use ballotchain::crypto::{commit, verify_commitment, OpeningValue};
use ballotchain::encoding::Canonical;
use ballotchain::engine::scenario::{generate, GenParams};
use ballotchain::engine::Scenario;
use ballotchain::{Chain, TallyResult, Vid};
use proptest::prelude::*;

fn choice() -> impl Strategy<Value = Choice> {
    prop_oneof![
        any::<u32>().prop_map(Choice::Candidate),
        "[a-z0-9:-]{0,24}".prop_map(Choice::Protest),
    ]
}

proptest! {
    #[test]
    fn choice_round_trips(c in choice()) {
        let bytes = c.to_canonical_bytes();
        prop_assert_eq!(Choice::from_canonical_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn commitment_binds_choice_and_opening(a in choice(), b in choice(), ra in any::<[u8; 32]>(), rb in any::<[u8; 32]>()) {
        let (ra, rb) = (OpeningValue(ra), OpeningValue(rb));
        let dc = commit(&a.to_canonical_bytes(), &ra);
        prop_assert!(verify_commitment(&dc, &a.to_canonical_bytes(), &ra));
        if a != b {
            prop_assert!(!verify_commitment(&dc, &b.to_canonical_bytes(), &ra));
        }
        if ra != rb {
            prop_assert!(!verify_commitment(&dc, &a.to_canonical_bytes(), &rb));
        }
    }

    #[test]
    fn vid_text_round_trips(n in any::<u64>()) {
        let v = Vid::from_u64(n);
        prop_assert_eq!(v.to_string().parse::<Vid>().unwrap(), v);
    }

    #[test]
    fn decoders_reject_garbage_without_panicking(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = VotePayload::from_canonical_bytes(&bytes);
        let _ = Chain::decode_file(&bytes);
        let _ = TallyResult::from_kv(&String::from_utf8_lossy(&bytes));
        let _ = Scenario::parse(&String::from_utf8_lossy(&bytes));
    }

    #[test]
    fn generated_scenarios_survive_print_and_parse(seed in any::<u64>()) {
        let p = GenParams { max_voters: 20, ..GenParams::default() };
        let gen = generate(seed, &p);
        let text = gen.scenario.to_string();
        let back = Scenario::parse(&text).unwrap();
        prop_assert_eq!(back.to_string(), text);
        prop_assert_eq!(back.lines.len(), gen.scenario.lines.len());
    }
}

#[test]
fn generation_is_deterministic() {
    let p = GenParams::default();
    assert_eq!(generate(42, &p).scenario, generate(42, &p).scenario);
    assert_ne!(generate(42, &p).scenario, generate(43, &p).scenario);
}
