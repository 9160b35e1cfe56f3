use std::collections::BTreeMap;

use feather_core::cht::oracle::OracleView;
use feather_core::{ChtConfig, ChtState, ChunkSize, HashAlgorithm, RequestId, Token};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Insert { base: usize, prefix: usize, tail: Vec<Token> },
    AdmitBest,
    Admit(usize),
    Finish(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..4usize, 0..=64usize, prop::collection::vec(0..3u32, 0..4))
            .prop_map(|(base, prefix, tail)| Op::Insert { base, prefix, tail }),
        2 => Just(Op::AdmitBest),
        1 => any::<usize>().prop_map(Op::Admit),
        2 => any::<usize>().prop_map(Op::Finish),
    ]
}

fn run(k: usize, algorithm: HashAlgorithm, ops: &[Op]) {
    let k = ChunkSize::new(k).unwrap();
    let mut s = ChtState::new(ChtConfig { chunk_size: k, hash_algorithm: algorithm, ..ChtConfig::default() });
    let bases: Vec<Vec<Token>> = (0..4u32)
        .map(|b| (0..64u32).map(|i| if i < 8 * (b % 2) { 7 } else { b * 1000 + i }).collect())
        .collect();
    let mut tokens: BTreeMap<RequestId, Vec<Token>> = BTreeMap::new();
    let mut next = 0u64;
    for op in ops {
        match op {
            Op::Insert { base, prefix, tail } => {
                let mut t = bases[*base][..*prefix].to_vec();
                t.extend(tail);
                let id = RequestId(next);
                next += 1;
                s.insert(id, &t).unwrap();
                tokens.insert(id, t);
            }
            Op::AdmitBest => {
                let expected = OracleView::from_state(&s).best_candidate(&s);
                let got = s.find_best();
                assert_eq!(got, expected);
                if let Some(c) = got {
                    s.add_to_batch(c.request).unwrap();
                }
            }
            Op::Admit(i) => {
                let w: Vec<_> = s.waiting().collect();
                if !w.is_empty() {
                    s.add_to_batch(w[i % w.len()]).unwrap();
                }
            }
            Op::Finish(i) => {
                let a: Vec<_> = s.active().collect();
                if !a.is_empty() {
                    let id = a[i % a.len()];
                    s.finish(id).unwrap();
                    tokens.remove(&id);
                }
            }
        }
        let inc = OracleView::of_incremental(&s);
        assert_eq!(inc, OracleView::from_state(&s));
        let active: Vec<&[Token]> = s.active().map(|id| tokens[&id].as_slice()).collect();
        let waiting: Vec<(RequestId, &[Token])> = s.waiting().map(|id| (id, tokens[&id].as_slice())).collect();
        assert_eq!(inc, OracleView::from_sequences(k, algorithm, &active, &waiting));
        assert_eq!(s.find_best(), OracleView::from_state(&s).best_candidate(&s));
        let covered: usize = inc.ref_counts.keys().map(|key| {
            let owner = s.active().find(|id| s.hashes(*id).unwrap().get(key.level as usize) == Some(key.hash)).unwrap();
            s.hashes(owner).unwrap().chunk_tokens(key.level as usize)
        }).sum();
        assert_eq!(s.working_set_tokens(), covered);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn incremental_state_matches_oracle(
        k in prop::sample::select(vec![1usize, 2, 4, 16]),
        ops in prop::collection::vec(op(), 1..80),
    ) {
        run(k, HashAlgorithm::Streaming, &ops);
    }

    #[test]
    fn chained_hashes_give_same_structure(
        k in prop::sample::select(vec![1usize, 3, 8]),
        ops in prop::collection::vec(op(), 1..60),
    ) {
        run(k, HashAlgorithm::Chained, &ops);
    }
}
