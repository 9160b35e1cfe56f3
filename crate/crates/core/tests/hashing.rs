use feather_core::hashing::{compute_hashes, compute_hashes_chained, hash_tokens};
use feather_core::{ChunkSize, HashAlgorithm, Token};
use proptest::prelude::*;

fn both() -> [HashAlgorithm; 2] {
    [HashAlgorithm::Streaming, HashAlgorithm::Chained]
}

proptest! {
    #[test]
    fn shared_prefix_means_shared_levels(
        prefix in prop::collection::vec(any::<Token>(), 0..80),
        a in prop::collection::vec(any::<Token>(), 1..40),
        b in prop::collection::vec(any::<Token>(), 1..40),
        k in 1usize..20,
    ) {
        prop_assume!(a[0] != b[0]);
        let x: Vec<Token> = prefix.iter().chain(&a).copied().collect();
        let y: Vec<Token> = prefix.iter().chain(&b).copied().collect();
        let k = ChunkSize::new(k).unwrap();
        for alg in both() {
            let (hx, hy) = (hash_tokens(&x, k, alg), hash_tokens(&y, k, alg));
            let full = prefix.len() / k.get();
            for l in 1..=hx.len().min(hy.len()) {
                prop_assert_eq!(hx.level(l) == hy.level(l), l <= full, "{:?} level {}", alg, l);
            }
        }
    }

    #[test]
    fn hashes_are_prefix_stable(tokens in prop::collection::vec(any::<Token>(), 0..120), cut in 0usize..120, k in 1usize..17) {
        // Hashing a truncation reproduces the untruncated levels it covers.
        let k = ChunkSize::new(k).unwrap();
        let cut = cut.min(tokens.len());
        for f in [compute_hashes as fn(&[Token], ChunkSize) -> _, compute_hashes_chained] {
            let (whole, part) = (f(&tokens, k), f(&tokens[..cut], k));
            prop_assert_eq!(whole.len(), k.chunks_for(tokens.len()));
            for l in 1..=cut / k.get() {
                prop_assert_eq!(whole.level(l), part.level(l));
            }
        }
    }
}

#[test]
fn last_partial_chunk_gets_its_own_level() {
    let k = ChunkSize::new(4).unwrap();
    let t: Vec<Token> = (0..10).collect();
    for alg in both() {
        let h = hash_tokens(&t, k, alg);
        assert_eq!(h.len(), 3);
        assert_eq!((1..=3).map(|l| h.chunk_tokens(l)).collect::<Vec<_>>(), [4, 4, 2]);
        let longer = hash_tokens(&(0..12).collect::<Vec<_>>(), k, alg);
        assert_ne!(h.level(3), longer.level(3));
    }
}
