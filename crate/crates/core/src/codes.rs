//! GF(2) linear codes for reconciliation and privacy amplification.
//!
//! Bit vectors are `&[u8]` slices of 0/1 values. Internally a vector of
//! length `n ≤ 64` is packed into a `u64` with position `i` at bit
//! `n - 1 - i`, so integer order coincides with lexicographic order.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

/// Largest block length supported by the exhaustive coset-leader table.
pub const MAX_TABLE_LENGTH: usize = 24;

fn pack(v: &[u8]) -> u64 {
    v.iter().fold(0u64, |acc, &b| (acc << 1) | (b & 1) as u64)
}

fn unpack(x: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((x >> (n - 1 - i)) & 1) as u8).collect()
}

/// Rank over GF(2) of a set of packed rows.
fn gf2_rank(rows: &[u64]) -> usize {
    let mut basis: Vec<u64> = Vec::new();
    for &r in rows {
        let mut x = r;
        for &b in &basis {
            x = x.min(x ^ b);
        }
        if x != 0 {
            basis.push(x);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// Basis of `{v : H v = 0}` for packed rows of length `n`.
fn gf2_kernel(rows: &[u64], n: usize) -> Vec<u64> {
    // reduced row echelon form, pivots chosen from the most significant bit
    let mut m: Vec<u64> = rows.to_vec();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for col in 0..n {
        let bit = 1u64 << (n - 1 - col);
        let Some(p) = (r..m.len()).find(|&i| m[i] & bit != 0) else {
            continue;
        };
        m.swap(r, p);
        for i in 0..m.len() {
            if i != r && m[i] & bit != 0 {
                m[i] ^= m[r];
            }
        }
        pivots.push(col);
        r += 1;
        if r == m.len() {
            break;
        }
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = 1u64 << (n - 1 - f);
            for (i, &pc) in pivots.iter().enumerate() {
                if m[i] & (1u64 << (n - 1 - f)) != 0 {
                    v |= 1u64 << (n - 1 - pc);
                }
            }
            v
        })
        .collect()
}

/// Minimum-weight representatives of every reachable syndrome.
#[derive(Debug, Clone)]
pub struct CosetTable {
    n: usize,
    leaders: HashMap<u64, u64>,
}

impl CosetTable {
    /// Enumerates error patterns by increasing weight, and within a weight in
    /// increasing lexicographic order, keeping the first pattern per syndrome.
    fn build(h: &ParityCheckMatrix) -> Result<Self> {
        let n = h.cols;
        if n > MAX_TABLE_LENGTH {
            return Err(Error::Code(format!(
                "coset-leader table supports n <= {MAX_TABLE_LENGTH}, got {n}"
            )));
        }
        let target = 1usize << h.rank;
        let mut leaders = HashMap::with_capacity(target);
        leaders.insert(0u64, 0u64);
        'weights: for w in 1..=n {
            if leaders.len() == target {
                break;
            }
            // Gosper's hack walks the weight-w masks in increasing order
            let mut x: u64 = (1u64 << w) - 1;
            let limit = 1u64 << n;
            while x < limit {
                leaders.entry(h.syndrome_packed(x)).or_insert(x);
                if leaders.len() == target {
                    break 'weights;
                }
                let c = x & x.wrapping_neg();
                let r = x + c;
                x = (((r ^ x) >> 2) / c) | r;
            }
        }
        Ok(CosetTable { n, leaders })
    }

    pub fn leader(&self, syndrome: u64) -> Option<Vec<u8>> {
        self.leaders.get(&syndrome).map(|&l| unpack(l, self.n))
    }

    pub fn len(&self) -> usize {
        self.leaders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaders.is_empty()
    }
}

/// An `r × n` parity-check matrix over GF(2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParityCheckMatrix {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<Vec<u8>>,
    pub rank: usize,
    pub full_row_rank: bool,
    #[serde(skip)]
    packed: Vec<u64>,
    #[serde(skip)]
    table: OnceLock<Arc<CosetTable>>,
}

impl PartialEq for ParityCheckMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.cols == other.cols && self.bits == other.bits
    }
}

impl ParityCheckMatrix {
    pub fn new(bits: Vec<Vec<u8>>, cols: usize) -> Result<Self> {
        if cols == 0 || cols > 64 {
            return Err(Error::Code(format!("block length must be in 1..=64, got {cols}")));
        }
        if bits.len() > cols {
            return Err(Error::Code(format!("{} rows exceed block length {cols}", bits.len())));
        }
        for row in &bits {
            if row.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            if row.iter().any(|&b| b > 1) {
                return Err(Error::Code("matrix entries must be 0 or 1".into()));
            }
        }
        let packed: Vec<u64> = bits.iter().map(|r| pack(r)).collect();
        let rank = gf2_rank(&packed);
        Ok(ParityCheckMatrix {
            rows: bits.len(),
            cols,
            full_row_rank: rank == bits.len(),
            rank,
            bits,
            packed,
            table: OnceLock::new(),
        })
    }

    fn from_packed(rows: &[u64], cols: usize) -> Result<Self> {
        Self::new(rows.iter().map(|&r| unpack(r, cols)).collect(), cols)
    }

    fn syndrome_packed(&self, v: u64) -> u64 {
        self.packed
            .iter()
            .fold(0u64, |acc, &row| (acc << 1) | ((row & v).count_ones() & 1) as u64)
    }

    fn check_len(&self, v: &[u8]) -> Result<()> {
        if v.len() != self.cols {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// The coset-leader table, built on first use.
    pub fn coset_table(&self) -> Result<Arc<CosetTable>> {
        if let Some(t) = self.table.get() {
            return Ok(t.clone());
        }
        let t = Arc::new(CosetTable::build(self)?);
        Ok(self.table.get_or_init(|| t).clone())
    }

    /// Basis of the code `{v : H v = 0}`.
    pub fn codewords_basis(&self) -> Vec<Vec<u8>> {
        gf2_kernel(&self.packed, self.cols)
            .into_iter()
            .map(|v| unpack(v, self.cols))
            .collect()
    }

    pub fn is_codeword(&self, v: &[u8]) -> bool {
        v.len() == self.cols && self.syndrome_packed(pack(v)) == 0
    }

    /// Parses rows of `0`/`1` characters (optionally space separated);
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let row: Vec<u8> = body
                .chars()
                .filter(|c| !c.is_whitespace() && *c != ',')
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    other => Err(Error::Parse(format!("line {}: unexpected character '{other}'", ln + 1))),
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        let cols = rows
            .first()
            .map(|r: &Vec<u8>| r.len())
            .ok_or_else(|| Error::Parse("matrix file has no rows".into()))?;
        Self::new(rows, cols)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.bits
            .iter()
            .map(|r| r.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect::<String>() + "\n")
            .collect()
    }
}

/// `H v` over GF(2).
pub fn syndrome(h: &ParityCheckMatrix, v: &[u8]) -> Result<Vec<u8>> {
    h.check_len(v)?;
    Ok(unpack(h.syndrome_packed(pack(v)), h.rows))
}

/// Nearest vector to `v` whose syndrome under `H1` is `xi`: returns `v + ℓ`
/// with `ℓ` the minimum-weight (then lexicographically smallest) vector
/// satisfying `H1 ℓ = H1 v + ξ`.
pub fn syndrome_decode(v: &[u8], xi: &[u8], h1: &ParityCheckMatrix) -> Result<Vec<u8>> {
    h1.check_len(v)?;
    if xi.len() != h1.rows {
        return Err(Error::LengthMismatch {
            expected: h1.rows,
            got: xi.len(),
        });
    }
    let target = h1.syndrome_packed(pack(v)) ^ pack(xi);
    let table = h1.coset_table()?;
    let leader = table
        .leaders
        .get(&target)
        .ok_or_else(|| Error::Code("syndrome is not in the column space of H1".into()))?;
    Ok(unpack(pack(v) ^ leader, h1.cols))
}

/// `H2 k` over GF(2).
pub fn privacy_amplify(h2: &ParityCheckMatrix, k: &[u8]) -> Result<Vec<u8>> {
    syndrome(h2, k)
}

/// Two codes of the same length with `C2 = ker H2 ⊂ C1 = ker H1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCodePair {
    pub name: String,
    pub h1: ParityCheckMatrix,
    pub h2: ParityCheckMatrix,
    /// Rows of `H2` completing a basis of `rowspace(H2)` modulo `rowspace(H1)`;
    /// their outputs are the secret bits of a block.
    pub secret_rows: Vec<usize>,
}

impl NestedCodePair {
    pub fn new(name: impl Into<String>, h1: ParityCheckMatrix, h2: ParityCheckMatrix) -> Result<Self> {
        if h1.cols != h2.cols {
            return Err(Error::Code(format!("code lengths differ: {} vs {}", h1.cols, h2.cols)));
        }
        let mut pair = NestedCodePair {
            name: name.into(),
            h1,
            h2,
            secret_rows: Vec::new(),
        };
        if !verify_nested(&pair) {
            return Err(Error::Code(format!("{}: C2 is not contained in C1", pair.name)));
        }
        let mut basis = pair.h1.packed.clone();
        let mut rank = gf2_rank(&basis);
        for (i, &row) in pair.h2.packed.iter().enumerate() {
            basis.push(row);
            let r = gf2_rank(&basis);
            if r > rank {
                rank = r;
                pair.secret_rows.push(i);
            } else {
                basis.pop();
            }
        }
        Ok(pair)
    }

    pub fn n(&self) -> usize {
        self.h1.cols
    }

    /// Secret bits per block, `dim C1 - dim C2`.
    pub fn secret_len(&self) -> usize {
        self.secret_rows.len()
    }

    /// The secret part of `H2 k`.
    pub fn secret_bits(&self, k: &[u8]) -> Result<Vec<u8>> {
        let full = privacy_amplify(&self.h2, k)?;
        Ok(self.secret_rows.iter().map(|&i| full[i]).collect())
    }

    /// Error patterns correctable by minimum-distance decoding.
    pub fn correction_radius(&self) -> usize {
        (minimum_distance(&self.h1).saturating_sub(1)) / 2
    }
}

/// `C2 ⊂ C1`, checked as `H1 G2ᵀ = 0` for a kernel basis `G2` of `H2`.
pub fn verify_nested(p: &NestedCodePair) -> bool {
    if p.h1.cols != p.h2.cols {
        return false;
    }
    gf2_kernel(&p.h2.packed, p.h2.cols)
        .into_iter()
        .all(|g| p.h1.syndrome_packed(g) == 0)
}

/// Minimum Hamming weight of a nonzero codeword of `ker H` (exhaustive over
/// the `2^k` codewords).
pub fn minimum_distance(h: &ParityCheckMatrix) -> usize {
    let basis = gf2_kernel(&h.packed, h.cols);
    let k = basis.len();
    if k == 0 {
        return h.cols + 1;
    }
    let mut best = usize::MAX;
    for mask in 1u64..(1u64 << k) {
        let mut v = 0u64;
        for (j, b) in basis.iter().enumerate() {
            if mask >> j & 1 == 1 {
                v ^= b;
            }
        }
        best = best.min(v.count_ones() as usize);
    }
    best
}

/// Repetition code `[n, 1]`: rows `e_0 + e_i`.
pub fn repetition(n: usize) -> Result<ParityCheckMatrix> {
    let rows = (1..n)
        .map(|i| {
            let mut r = vec![0u8; n];
            r[0] = 1;
            r[i] = 1;
            r
        })
        .collect();
    ParityCheckMatrix::new(rows, n)
}

/// Hamming `[7, 4]`: column `i` (0-based) is the binary expansion of `i + 1`,
/// most significant bit in the first row.
pub fn hamming74() -> ParityCheckMatrix {
    let rows = (0..3)
        .map(|r| (1..=7u8).map(|c| (c >> (2 - r)) & 1).collect())
        .collect();
    ParityCheckMatrix::new(rows, 7).expect("valid Hamming matrix")
}

/// Double-error-correcting BCH `[15, 7]` with generator
/// `g(x) = x⁸ + x⁷ + x⁶ + x⁴ + 1`.
pub fn bch15_7() -> ParityCheckMatrix {
    let g: u64 = 0b1_1101_0001;
    // generator rows: shifts of g, written with the x^14 coefficient first
    let gens: Vec<u64> = (0..7).map(|s| g << s).collect();
    let h = gf2_kernel(&gens, 15);
    ParityCheckMatrix::from_packed(&h, 15).expect("valid BCH matrix")
}

/// Hamming `[7,4]` reconciling, repetition `[7,1]` as the inner code:
/// three secret bits per block.
pub fn hamming_repetition_pair() -> NestedCodePair {
    NestedCodePair::new("hamming74/repetition7", hamming74(), repetition(7).expect("n >= 1")).expect("nested")
}

/// BCH `[15,7]` over repetition `[15,1]`: six secret bits per block.
pub fn bch_repetition_pair() -> NestedCodePair {
    NestedCodePair::new("bch15_7/repetition15", bch15_7(), repetition(15).expect("n >= 1")).expect("nested")
}

/// Shipped nested pairs by name.
pub fn shipped_pair(name: &str) -> Result<NestedCodePair> {
    match name {
        "hamming74" | "hamming74/repetition7" => Ok(hamming_repetition_pair()),
        "bch15_7" | "bch15_7/repetition15" => Ok(bch_repetition_pair()),
        _ => Err(Error::Config(format!("unknown code pair '{name}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn add(a: &[u8], b: &[u8]) -> Vec<u8> {
        a.iter().zip(b).map(|(x, y)| x ^ y).collect()
    }

    fn all_vectors(n: usize) -> impl Iterator<Item = Vec<u8>> {
        (0u64..(1 << n)).map(move |x| unpack(x, n))
    }

    #[test]
    fn syndrome_examples() {
        let h = hamming74();
        assert_eq!(syndrome(&h, &[0; 7]).unwrap(), vec![0, 0, 0]);
        let mut e3 = vec![0u8; 7];
        e3[2] = 1;
        assert_eq!(syndrome(&h, &e3).unwrap(), vec![0, 1, 1]);
        for c in h.codewords_basis() {
            assert_eq!(syndrome(&h, &c).unwrap(), vec![0, 0, 0]);
        }
        assert!(syndrome(&h, &[0; 6]).is_err());
    }

    #[test]
    fn hamming_decoding() {
        let h = hamming74();
        for v in all_vectors(7) {
            let xi = syndrome(&h, &v).unwrap();
            assert_eq!(syndrome_decode(&v, &xi, &h).unwrap(), v);
            for i in 0..7 {
                let mut r = v.clone();
                r[i] ^= 1;
                assert_eq!(syndrome_decode(&r, &xi, &h).unwrap(), v);
            }
            for i in 0..7 {
                for j in i + 1..7 {
                    let mut r = v.clone();
                    r[i] ^= 1;
                    r[j] ^= 1;
                    let d = syndrome_decode(&r, &xi, &h).unwrap();
                    assert_ne!(d, v);
                    assert_eq!(d.iter().zip(&r).filter(|(a, b)| a != b).count(), 1);
                }
            }
        }
    }

    #[test]
    fn lexicographic_tie_break() {
        // repetition [3,1]: syndrome (1,1) is reached by 100 only, (1,0) by 010 and 101
        let h = repetition(3).unwrap();
        let t = h.coset_table().unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.leader(pack(&[1, 0])).unwrap(), vec![0, 1, 0]);
        // weight-1 ties in a code where two columns coincide
        let h = ParityCheckMatrix::new(vec![vec![1, 1, 0], vec![0, 0, 1]], 3).unwrap();
        assert_eq!(h.coset_table().unwrap().leader(pack(&[1, 0])).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn table_length_limit() {
        let h = repetition(25).unwrap();
        assert!(matches!(h.coset_table(), Err(Error::Code(_))));
        assert!(repetition(24).unwrap().coset_table().is_ok());
    }

    #[test]
    fn privacy_amplification_linearity() {
        let p = hamming_repetition_pair();
        assert_eq!(privacy_amplify(&p.h2, &[0; 7]).unwrap(), vec![0; 6]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k: Vec<u8> = (0..7).map(|_| rng.random_range(0..2)).collect();
            let base = privacy_amplify(&p.h2, &k).unwrap();
            let i = rng.random_range(0..7);
            let mut k2 = k.clone();
            k2[i] ^= 1;
            let out = privacy_amplify(&p.h2, &k2).unwrap();
            let col: Vec<u8> = p.h2.bits.iter().map(|r| r[i]).collect();
            assert_eq!(add(&base, &out), col);
        }
    }

    #[test]
    fn shipped_pairs() {
        let p = hamming_repetition_pair();
        assert_eq!(p.secret_len(), 3);
        assert_eq!(p.correction_radius(), 1);
        let b = bch_repetition_pair();
        assert_eq!(b.h1.rank, 8);
        assert_eq!(minimum_distance(&b.h1), 5);
        assert_eq!(b.correction_radius(), 2);
        assert_eq!(b.secret_len(), 6);
        assert!(shipped_pair("nope").is_err());
    }

    #[test]
    fn bch_corrects_double_errors() {
        let b = bch_repetition_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let v: Vec<u8> = (0..15).map(|_| rng.random_range(0..2)).collect();
            let xi = syndrome(&b.h1, &v).unwrap();
            let mut r = v.clone();
            let i = rng.random_range(0..15);
            let j = (i + rng.random_range(1..15)) % 15;
            r[i] ^= 1;
            r[j] ^= 1;
            assert_eq!(syndrome_decode(&r, &xi, &b.h1).unwrap(), v);
        }
    }

    #[test]
    fn nested_trivial_cases() {
        let full = ParityCheckMatrix::new(vec![], 5).unwrap();
        let any = ParityCheckMatrix::new(vec![vec![1, 0, 1, 1, 0], vec![0, 1, 1, 0, 1]], 5).unwrap();
        let pair = NestedCodePair {
            name: "t".into(),
            h1: full.clone(),
            h2: any.clone(),
            secret_rows: vec![],
        };
        assert!(verify_nested(&pair));
        let zero = ParityCheckMatrix::new((0..5).map(|i| (0..5).map(|j| (i == j) as u8).collect()).collect(), 5).unwrap();
        let pair = NestedCodePair {
            name: "t".into(),
            h1: any,
            h2: zero,
            secret_rows: vec![],
        };
        assert!(verify_nested(&pair));
        let bad = NestedCodePair {
            name: "t".into(),
            h1: hamming74(),
            h2: ParityCheckMatrix::new(vec![], 7).unwrap(),
            secret_rows: vec![],
        };
        assert!(!verify_nested(&bad));
        assert!(NestedCodePair::new("bad", hamming74(), ParityCheckMatrix::new(vec![], 7).unwrap()).is_err());
    }

    #[test]
    fn end_to_end_hamming_exhaustive() {
        let p = hamming_repetition_pair();
        for a in all_vectors(7) {
            let xi = syndrome(&p.h1, &a).unwrap();
            let ka = p.secret_bits(&a).unwrap();
            for e in all_vectors(7).filter(|e| e.iter().map(|&b| b as usize).sum::<usize>() <= 1) {
                let b = add(&a, &e);
                let corrected = syndrome_decode(&b, &xi, &p.h1).unwrap();
                assert_eq!(corrected, a);
                assert_eq!(p.secret_bits(&corrected).unwrap(), ka);
            }
        }
    }

    #[test]
    fn parse_and_print() {
        let text = "# Hamming\n1 1 1 1 0 0 0\n1100110 # inline\n\n1010101\n";
        let h = ParityCheckMatrix::parse(text).unwrap();
        assert_eq!(h.rows, 3);
        assert_eq!(h.cols, 7);
        assert_eq!(ParityCheckMatrix::parse(&h.to_text()).unwrap(), h);
        assert!(ParityCheckMatrix::parse("1102\n").is_err());
        assert!(ParityCheckMatrix::parse("# none\n").is_err());
        assert!(ParityCheckMatrix::parse("101\n11\n").is_err());
    }

    fn random_h(rng: &mut ChaCha8Rng, n: usize) -> ParityCheckMatrix {
        let r = rng.random_range(0..=n);
        let rows = (0..r).map(|_| (0..n).map(|_| rng.random_range(0..2)).collect()).collect();
        ParityCheckMatrix::new(rows, n).unwrap()
    }

    #[test]
    fn nested_matches_exhaustive_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [0usize; 2];
        for _ in 0..400 {
            let n = rng.random_range(1..=10);
            let h1 = random_h(&mut rng, n);
            let h2 = random_h(&mut rng, n);
            let exhaustive = all_vectors(n).filter(|v| h2.is_codeword(v)).all(|v| h1.is_codeword(&v));
            let pair = NestedCodePair {
                name: "r".into(),
                h1,
                h2,
                secret_rows: vec![],
            };
            assert_eq!(verify_nested(&pair), exhaustive);
            seen[exhaustive as usize] += 1;
        }
        assert!(seen[0] > 0 && seen[1] > 0);
    }

    proptest! {
        #[test]
        fn decode_hits_requested_syndrome(v in proptest::collection::vec(0u8..2, 15), xi in proptest::collection::vec(0u8..2, 8)) {
            let h = bch15_7();
            let d = syndrome_decode(&v, &xi, &h).unwrap();
            prop_assert_eq!(syndrome(&h, &d).unwrap(), xi);
        }

        #[test]
        fn decode_translation_covariant(v in proptest::collection::vec(0u8..2, 7), xi in proptest::collection::vec(0u8..2, 3), c in proptest::collection::vec(0u8..2, 7)) {
            let h = hamming74();
            let lhs = syndrome_decode(&add(&v, &c), &add(&xi, &syndrome(&h, &c).unwrap()), &h).unwrap();
            let rhs = add(&syndrome_decode(&v, &xi, &h).unwrap(), &c);
            prop_assert_eq!(lhs, rhs);
        }
    }
}
