//! The validator against an independent enumeration of the grammar.

use std::collections::HashSet;

use sparse_rnn::reber::{validate, ALPHABET};
use sparse_rnn::Rng;

const MAX_LEN: usize = 12;

/// Every grammar string of length ≤ `max_len`, by walking the automaton
/// written out here from the grammar diagram.
fn enumerate(max_len: usize) -> HashSet<String> {
    fn next(state: u8) -> &'static [(char, u8)] {
        match state {
            0 => &[('B', 1)],
            1 => &[('T', 2), ('P', 3)],
            2 => &[('S', 2), ('X', 4)],
            3 => &[('T', 3), ('V', 5)],
            4 => &[('X', 3), ('S', 6)],
            5 => &[('P', 4), ('V', 6)],
            6 => &[('E', 7)],
            _ => &[],
        }
    }
    let mut out = HashSet::new();
    let mut frontier = vec![(String::new(), 0u8)];
    while let Some((prefix, state)) = frontier.pop() {
        if state == 7 {
            out.insert(prefix);
            continue;
        }
        if prefix.len() == max_len {
            continue;
        }
        for &(c, s) in next(state) {
            frontier.push((format!("{prefix}{c}"), s));
        }
    }
    out
}

/// Recursive-descent recognizer for
/// `B (T S* X L4 | P T* V L5)`, `L4 = S E | X T* V L5`, `L5 = V E | P L4`.
fn descent(s: &[u8]) -> bool {
    fn run(s: &[u8], mut i: usize, c: u8) -> usize {
        while s.get(i) == Some(&c) {
            i += 1;
        }
        i
    }
    fn l4(s: &[u8], i: usize) -> bool {
        match s.get(i) {
            Some(b'S') => &s[i + 1..] == b"E",
            Some(b'X') => {
                let j = run(s, i + 1, b'T');
                s.get(j) == Some(&b'V') && l5(s, j + 1)
            }
            _ => false,
        }
    }
    fn l5(s: &[u8], i: usize) -> bool {
        match s.get(i) {
            Some(b'V') => &s[i + 1..] == b"E",
            Some(b'P') => l4(s, i + 1),
            _ => false,
        }
    }
    if s.first() != Some(&b'B') {
        return false;
    }
    match s.get(1) {
        Some(b'T') => {
            let j = run(s, 2, b'S');
            s.get(j) == Some(&b'X') && l4(s, j + 1)
        }
        Some(b'P') => {
            let j = run(s, 2, b'T');
            s.get(j) == Some(&b'V') && l5(s, j + 1)
        }
        _ => false,
    }
}

#[test]
fn enumeration_and_recognizer_agree() {
    let grammar = enumerate(MAX_LEN);
    assert!(grammar.contains("BTXSE") && grammar.contains("BPVVE"));
    for s in &grammar {
        assert!(descent(s.as_bytes()), "{s}");
        assert!(validate(s), "validator rejects grammar string {s}");
    }
}

#[test]
fn validator_matches_oracle_on_every_short_string() {
    // every string over the grammar alphabet up to length 8
    let grammar = enumerate(MAX_LEN);
    let letters: Vec<u8> = ALPHABET.iter().map(|&c| c as u8).collect();
    let mut buf = Vec::with_capacity(8);
    let mut checked = 0usize;
    fn rec(buf: &mut Vec<u8>, letters: &[u8], depth: usize, f: &mut dyn FnMut(&[u8])) {
        f(buf);
        if depth == 0 {
            return;
        }
        for &c in letters {
            buf.push(c);
            rec(buf, letters, depth - 1, f);
            buf.pop();
        }
    }
    rec(&mut buf, &letters, 8, &mut |s| {
        let text = std::str::from_utf8(s).unwrap();
        let expected = grammar.contains(text);
        assert_eq!(validate(text), expected, "{text:?}");
        assert_eq!(descent(s), expected, "{text:?}");
        checked += 1;
    });
    assert_eq!(checked, (0..=8).map(|k| 7usize.pow(k)).sum::<usize>());
}

#[test]
fn validator_matches_oracle_near_grammar_strings() {
    // one-symbol substitutions, insertions and deletions of every grammar
    // string of length ≤ 12, over the grammar alphabet plus one foreign letter
    let grammar = enumerate(MAX_LEN);
    let mut letters: Vec<char> = ALPHABET.to_vec();
    letters.push('A');
    let mut longer = enumerate(MAX_LEN + 1);
    longer.extend(grammar.iter().cloned());
    for s in &grammar {
        let chars: Vec<char> = s.chars().collect();
        let mut variants = Vec::new();
        for i in 0..chars.len() {
            let mut del = chars.clone();
            del.remove(i);
            variants.push(del);
            for &c in &letters {
                let mut sub = chars.clone();
                sub[i] = c;
                variants.push(sub);
            }
        }
        for i in 0..=chars.len() {
            for &c in &letters {
                let mut ins = chars.clone();
                ins.insert(i, c);
                variants.push(ins);
            }
        }
        for v in variants {
            let text: String = v.into_iter().collect();
            assert_eq!(validate(&text), longer.contains(&text), "{text:?}");
        }
    }
}

#[test]
fn validator_matches_oracle_on_random_strings() {
    let grammar = enumerate(MAX_LEN);
    let mut rng = Rng::new(12);
    for _ in 0..200_000 {
        let len = rng.range(0, MAX_LEN + 1);
        let text: String = (0..len).map(|_| ALPHABET[rng.below(7)]).collect();
        assert_eq!(validate(&text), grammar.contains(&text), "{text:?}");
    }
}
