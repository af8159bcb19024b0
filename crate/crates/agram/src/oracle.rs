//! Brute-force reference implementations of the semantic notions: output
//! sets, derivation counting, unambiguity, rigidity, and ref-word mappings.
//! Everything here is deliberately bounded and independent of the
//! table-filling evaluator; tests treat these verdicts as ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use num_bigint::BigUint;
use thiserror::Error;

use crate::eval::Output;
use crate::grammar::{AnnotatedGrammar, NtId, Symbol, Terminal};
use crate::spanner::{mapping_of_refword, ExtractionGrammar, Mapping, RefSym, XSym};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("scale limit exceeded: {0}")]
    ScaleLimit(String),
}

/// Number of leftmost derivations of an annotated string, exact.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum DerivationCount {
    Finite(BigUint),
    Infinite,
}

impl DerivationCount {
    pub fn at_least_one(&self) -> bool {
        match self {
            DerivationCount::Infinite => true,
            DerivationCount::Finite(n) => *n > BigUint::from(0u32),
        }
    }

    pub fn exactly(&self, k: u32) -> bool {
        matches!(self, DerivationCount::Finite(n) if *n == BigUint::from(k))
    }
}

// ---------------------------------------------------------------------------
// Token-level CFG core shared by the grammar and ref-word oracles.

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Tok {
    Nt(usize),
    T(usize),
}

struct CfgCore {
    n_nts: usize,
    rules: Vec<(usize, Vec<Tok>)>,
    start: usize,
    /// letter and annotation digit (0 = none, a+1 = annotation a) per token
    tok_info: Vec<(char, u32)>,
}

fn core_of_grammar(g: &AnnotatedGrammar) -> (CfgCore, BTreeMap<Terminal, usize>) {
    let mut toks: BTreeMap<Terminal, usize> = BTreeMap::new();
    let mut tok_info = Vec::new();
    let mut rules = Vec::new();
    for r in g.rules() {
        let rhs = r
            .rhs
            .iter()
            .map(|s| match s {
                Symbol::Nt(x) => Tok::Nt(*x),
                Symbol::Term(t) => {
                    let id = *toks.entry(*t).or_insert_with(|| {
                        tok_info.push((t.letter, t.ann.map(|a| a as u32 + 1).unwrap_or(0)));
                        tok_info.len() - 1
                    });
                    Tok::T(id)
                }
            })
            .collect();
        rules.push((r.lhs, rhs));
    }
    (CfgCore { n_nts: g.nonterminal_count(), rules, start: g.start(), tok_info }, toks)
}

fn core_of_extraction(h: &ExtractionGrammar) -> (CfgCore, BTreeMap<RefSym, usize>) {
    let mut toks: BTreeMap<RefSym, usize> = BTreeMap::new();
    let mut tok_info = Vec::new();
    let mut rules = Vec::new();
    for r in h.rules() {
        let rhs = r
            .rhs
            .iter()
            .map(|s| match s {
                XSym::Nt(x) => Tok::Nt(*x),
                XSym::Letter(c) => {
                    let key = RefSym::Letter(*c);
                    let id = *toks.entry(key).or_insert_with(|| {
                        tok_info.push((*c, 0));
                        tok_info.len() - 1
                    });
                    Tok::T(id)
                }
                XSym::Op(op) => {
                    let key = RefSym::Op(*op);
                    let id = *toks.entry(key).or_insert_with(|| {
                        tok_info.push(('\0', 0));
                        tok_info.len() - 1
                    });
                    Tok::T(id)
                }
            })
            .collect();
        rules.push((r.lhs, rhs));
    }
    (CfgCore { n_nts: h.nonterminal_count(), rules, start: h.start(), tok_info }, toks)
}

impl CfgCore {
    fn nullable(&self, keep: &[bool]) -> Vec<bool> {
        let mut nullable = vec![false; self.n_nts];
        let mut changed = true;
        while changed {
            changed = false;
            for (ri, (lhs, rhs)) in self.rules.iter().enumerate() {
                if !keep[ri] || nullable[*lhs] {
                    continue;
                }
                if rhs.iter().all(|t| matches!(t, Tok::Nt(y) if nullable[*y])) {
                    nullable[*lhs] = true;
                    changed = true;
                }
            }
        }
        nullable
    }

    /// Rules whose nonterminals are all productive and reachable.
    fn useful_rules(&self) -> Vec<bool> {
        let mut productive = vec![false; self.n_nts];
        let mut changed = true;
        while changed {
            changed = false;
            for (lhs, rhs) in &self.rules {
                if productive[*lhs] {
                    continue;
                }
                if rhs.iter().all(|t| match t {
                    Tok::Nt(y) => productive[*y],
                    Tok::T(_) => true,
                }) {
                    productive[*lhs] = true;
                    changed = true;
                }
            }
        }
        let mut reachable = vec![false; self.n_nts];
        reachable[self.start] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for (lhs, rhs) in &self.rules {
                if !reachable[*lhs] || !productive[*lhs] {
                    continue;
                }
                if !rhs.iter().all(|t| match t {
                    Tok::Nt(y) => productive[*y],
                    Tok::T(_) => true,
                }) {
                    continue;
                }
                for t in rhs {
                    if let Tok::Nt(y) = t {
                        if !reachable[*y] {
                            reachable[*y] = true;
                            changed = true;
                        }
                    }
                }
            }
        }
        self.rules
            .iter()
            .map(|(lhs, rhs)| {
                reachable[*lhs]
                    && productive[*lhs]
                    && rhs.iter().all(|t| match t {
                        Tok::Nt(y) => reachable[*y] && productive[*y],
                        Tok::T(_) => true,
                    })
            })
            .collect()
    }

    /// Unit relation: edge Z -> X when some kept rule `X -> alpha Z beta`
    /// has alpha and beta nullable. Returns a topological order, or the
    /// nonterminals of one cycle.
    fn unit_topo(&self, keep: &[bool], nullable: &[bool]) -> Result<Vec<usize>, Vec<usize>> {
        let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.n_nts];
        for (ri, (lhs, rhs)) in self.rules.iter().enumerate() {
            if !keep[ri] {
                continue;
            }
            for (k, t) in rhs.iter().enumerate() {
                if let Tok::Nt(z) = t {
                    let rest_nullable = rhs
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != k)
                        .all(|(_, u)| matches!(u, Tok::Nt(y) if nullable[*y]));
                    if rest_nullable {
                        succ[*z].insert(*lhs);
                    }
                }
            }
        }
        let mut indeg = vec![0usize; self.n_nts];
        for z in 0..self.n_nts {
            for &x in &succ[z] {
                indeg[x] += 1;
            }
        }
        let mut ready: BTreeSet<usize> = (0..self.n_nts).filter(|&i| indeg[i] == 0).collect();
        let mut topo = Vec::new();
        while let Some(&z) = ready.iter().next() {
            ready.remove(&z);
            topo.push(z);
            for &x in &succ[z] {
                indeg[x] -= 1;
                if indeg[x] == 0 {
                    ready.insert(x);
                }
            }
        }
        if topo.len() == self.n_nts {
            Ok(topo)
        } else {
            Err((0..self.n_nts).filter(|&i| indeg[i] > 0).collect())
        }
    }

    /// Boolean derivability table for one token string: `r[(x, i, j)]`
    /// iff X derives word[i..j). Plain saturation to a fixed point.
    fn derivability(&self, word: &[usize]) -> HashSet<(usize, usize, usize)> {
        let n = word.len();
        let mut r: HashSet<(usize, usize, usize)> = HashSet::new();
        let mut changed = true;
        while changed {
            changed = false;
            for i in 0..=n {
                for j in i..=n {
                    for (lhs, rhs) in &self.rules {
                        if r.contains(&(*lhs, i, j)) {
                            continue;
                        }
                        if self.rhs_derives(rhs, word, i, j, &r) {
                            r.insert((*lhs, i, j));
                            changed = true;
                        }
                    }
                }
            }
        }
        r
    }

    fn rhs_derives(
        &self,
        rhs: &[Tok],
        word: &[usize],
        i: usize,
        j: usize,
        r: &HashSet<(usize, usize, usize)>,
    ) -> bool {
        // reach[p - i] after consuming a prefix of rhs
        let mut frontier = vec![false; j - i + 1];
        frontier[0] = true;
        for t in rhs {
            let mut next = vec![false; j - i + 1];
            for p in 0..frontier.len() {
                if !frontier[p] {
                    continue;
                }
                match t {
                    Tok::T(tid) => {
                        if i + p < j && word[i + p] == *tid {
                            next[p + 1] = true;
                        }
                    }
                    Tok::Nt(y) => {
                        for q in p..frontier.len() {
                            if r.contains(&(*y, i + p, i + q)) {
                                next[q] = true;
                            }
                        }
                    }
                }
            }
            frontier = next;
            if frontier.iter().all(|b| !b) {
                return false;
            }
        }
        frontier[j - i]
    }
}

// ---------------------------------------------------------------------------
// Exact derivation counting.

struct Counter<'a> {
    core: &'a CfgCore,
    word: &'a [usize],
    r: HashSet<(usize, usize, usize)>,
    memo: HashMap<(usize, usize, usize), BigUint>,
    in_progress: HashSet<(usize, usize, usize)>,
}

struct InfiniteSignal;

impl<'a> Counter<'a> {
    fn count(&mut self, x: usize, i: usize, j: usize) -> Result<BigUint, InfiniteSignal> {
        if !self.r.contains(&(x, i, j)) {
            return Ok(BigUint::from(0u32));
        }
        if let Some(c) = self.memo.get(&(x, i, j)) {
            return Ok(c.clone());
        }
        if !self.in_progress.insert((x, i, j)) {
            // a realizable same-span cycle inside a complete derivation
            return Err(InfiniteSignal);
        }
        let mut total = BigUint::from(0u32);
        let rules: Vec<usize> =
            (0..self.core.rules.len()).filter(|&ri| self.core.rules[ri].0 == x).collect();
        for ri in rules {
            let rhs = self.core.rules[ri].1.clone();
            total += self.count_rule(&rhs, i, j)?;
        }
        self.in_progress.remove(&(x, i, j));
        self.memo.insert((x, i, j), total.clone());
        Ok(total)
    }

    fn count_rule(&mut self, rhs: &[Tok], i: usize, j: usize) -> Result<BigUint, InfiniteSignal> {
        let width = j - i + 1;
        let m = rhs.len();
        // backward viability: can rhs[t..] derive word[p..j)?
        let mut back = vec![vec![false; width]; m + 1];
        back[m][width - 1] = true;
        for t in (0..m).rev() {
            for p in 0..width {
                match &rhs[t] {
                    Tok::T(tid) => {
                        if i + p < j && self.word[i + p] == *tid && back[t + 1][p + 1] {
                            back[t][p] = true;
                        }
                    }
                    Tok::Nt(y) => {
                        for q in p..width {
                            if self.r.contains(&(*y, i + p, i + q)) && back[t + 1][q] {
                                back[t][p] = true;
                                break;
                            }
                        }
                    }
                }
            }
        }
        if !back[0][0] {
            return Ok(BigUint::from(0u32));
        }
        let zero = BigUint::from(0u32);
        let mut frontier = vec![zero.clone(); width];
        frontier[0] = BigUint::from(1u32);
        for t in 0..m {
            let mut next = vec![zero.clone(); width];
            for p in 0..width {
                if frontier[p] == zero {
                    continue;
                }
                match &rhs[t] {
                    Tok::T(tid) => {
                        if i + p < j && self.word[i + p] == *tid && back[t + 1][p + 1] {
                            let add = frontier[p].clone();
                            next[p + 1] += add;
                        }
                    }
                    Tok::Nt(y) => {
                        for q in p..width {
                            if back[t + 1][q] && self.r.contains(&(*y, i + p, i + q)) {
                                let sub = self.count(*y, i + p, i + q)?;
                                if sub != zero {
                                    next[q] += frontier[p].clone() * sub;
                                }
                            }
                        }
                    }
                }
            }
            frontier = next;
        }
        Ok(frontier[width - 1].clone())
    }
}

/// Number of leftmost derivations of the annotated string `word` from the
/// start symbol, or `Infinite` when a realizable unit/epsilon cycle makes
/// the count unbounded for this string.
pub fn count_derivations(g: &AnnotatedGrammar, word: &[Terminal]) -> DerivationCount {
    let (core, toks) = core_of_grammar(g);
    let mut ids = Vec::with_capacity(word.len());
    for t in word {
        match toks.get(t) {
            Some(id) => ids.push(*id),
            None => return DerivationCount::Finite(BigUint::from(0u32)),
        }
    }
    count_core(&core, &ids)
}

fn count_core(core: &CfgCore, ids: &[usize]) -> DerivationCount {
    let r = core.derivability(ids);
    let mut counter =
        Counter { core, word: ids, r, memo: HashMap::new(), in_progress: HashSet::new() };
    match counter.count(core.start, 0, ids.len()) {
        Ok(n) => DerivationCount::Finite(n),
        Err(InfiniteSignal) => DerivationCount::Infinite,
    }
}

/// Whether the annotated string is derivable at all.
pub fn derivable(g: &AnnotatedGrammar, word: &[Terminal]) -> bool {
    let (core, toks) = core_of_grammar(g);
    let mut ids = Vec::with_capacity(word.len());
    for t in word {
        match toks.get(t) {
            Some(id) => ids.push(*id),
            None => return false,
        }
    }
    let r = core.derivability(&ids);
    r.contains(&(core.start, 0, word.len()))
}

// ---------------------------------------------------------------------------
// Output sets.

const MAX_ANNOTATED_SPACE: u64 = 1 << 22;

/// All outputs of `g` on `w`: enumerate every annotated string over the
/// positions of `w` and keep the annotations of the derivable ones.
pub fn brute_outputs(g: &AnnotatedGrammar, w: &str) -> Result<BTreeSet<Output>, OracleError> {
    let letters: Vec<char> = w.chars().collect();
    let n = letters.len() as u32;
    let base = g.annotation_count() as u64 + 1;
    if base.saturating_pow(n) > MAX_ANNOTATED_SPACE {
        return Err(OracleError::ScaleLimit(format!(
            "(|annotations|+1)^|w| = {}^{} exceeds the brute-force bound",
            base, n
        )));
    }
    let (core, toks) = core_of_grammar(g);
    let mut out = BTreeSet::new();
    let mut digits = vec![0u64; letters.len()];
    'pattern: loop {
        let mut ids = Vec::with_capacity(letters.len());
        let mut output: Output = Vec::new();
        let mut ok = true;
        for (p, (&c, &d)) in letters.iter().zip(digits.iter()).enumerate() {
            let term = if d == 0 {
                Terminal::plain(c)
            } else {
                output.push((p as u32 + 1, d as u32 - 1));
                Terminal { letter: c, ann: Some(d as usize - 1) }
            };
            match toks.get(&term) {
                Some(id) => ids.push(*id),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let r = core.derivability(&ids);
            if r.contains(&(core.start, 0, ids.len())) {
                out.insert(output);
            }
        }
        // next annotation pattern
        for p in 0..digits.len() {
            digits[p] += 1;
            if digits[p] < base {
                continue 'pattern;
            }
            digits[p] = 0;
        }
        break;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Batched per-string survey: output sets and an ambiguity verdict for every
// input string up to a length bound, via a sparse span DP with saturating
// derivation counts. Extensionally equal to driving `brute_outputs` and
// `count_derivations` string by string, but usable on hundreds of grammars.

pub struct Survey {
    /// outputs per input string, in enumeration order of the strings
    pub outputs: Vec<(String, BTreeSet<Output>)>,
    /// some annotated string with two or more derivations, if any
    pub ambiguous_witness: Option<Vec<Terminal>>,
    /// a realizable unit/epsilon cycle exists; derivation counts diverge
    pub infinite: bool,
}

impl Survey {
    pub fn unambiguous(&self) -> bool {
        self.ambiguous_witness.is_none() && !self.infinite
    }

    pub fn outputs_for(&self, w: &str) -> Option<&BTreeSet<Output>> {
        self.outputs.iter().find(|(s, _)| s == w).map(|(_, o)| o)
    }
}

pub fn survey(g: &AnnotatedGrammar, max_len: usize) -> Result<Survey, OracleError> {
    if max_len > 10 {
        return Err(OracleError::ScaleLimit(format!("survey bound {} too large", max_len)));
    }
    let (core, _) = core_of_grammar(g);
    let keep = core.useful_rules();
    let nullable = core.nullable(&keep);
    let topo = match core.unit_topo(&keep, &nullable) {
        Ok(t) => t,
        Err(_) => {
            return Ok(Survey { outputs: Vec::new(), ambiguous_witness: None, infinite: true })
        }
    };
    let base = g.annotation_count() as u64 + 1;
    let alphabet: Vec<char> = g.alphabet().iter().copied().collect();

    let mut outputs = Vec::new();
    let mut witness: Option<Vec<Terminal>> = None;

    let mut stack: Vec<String> = vec![String::new()];
    let mut queue: Vec<String> = Vec::new();
    while let Some(w) = stack.pop() {
        queue.push(w.clone());
        if w.chars().count() < max_len {
            for &c in alphabet.iter().rev() {
                let mut s = w.clone();
                s.push(c);
                stack.push(s);
            }
        }
    }

    for w in queue {
        let letters: Vec<char> = w.chars().collect();
        let n = letters.len();
        let pow: Vec<u64> = (0..=n).map(|p| base.pow(p as u32)).collect();
        // cells[x][span(i,j)] : pattern -> saturating count
        let span_index = |i: usize, j: usize| i * (n + 1) + j;
        let mut cells: Vec<BTreeMap<u64, u8>> =
            vec![BTreeMap::new(); core.n_nts * (n + 1) * (n + 1)];
        let cell = |x: usize, i: usize, j: usize| x * (n + 1) * (n + 1) + span_index(i, j);

        for len in 0..=n {
            for i in 0..=n - len {
                let j = i + len;
                for &x in &topo {
                    let mut acc: BTreeMap<u64, u8> = BTreeMap::new();
                    for (ri, (lhs, rhs)) in core.rules.iter().enumerate() {
                        if !keep[ri] || *lhs != x {
                            continue;
                        }
                        // frontier: position -> pattern -> count
                        let mut frontier: Vec<BTreeMap<u64, u8>> =
                            vec![BTreeMap::new(); len + 1];
                        frontier[0].insert(0, 1);
                        for t in rhs {
                            let mut next: Vec<BTreeMap<u64, u8>> =
                                vec![BTreeMap::new(); len + 1];
                            for p in 0..=len {
                                if frontier[p].is_empty() {
                                    continue;
                                }
                                match t {
                                    Tok::T(tid) => {
                                        let (letter, digit) = core.tok_info[*tid];
                                        if i + p < j && letters[i + p] == letter {
                                            for (pat, c) in &frontier[p] {
                                                let pat2 = pat + digit as u64 * pow[i + p];
                                                sat_add(&mut next[p + 1], pat2, *c);
                                            }
                                        }
                                    }
                                    Tok::Nt(y) => {
                                        for q in p..=len {
                                            let sub = &cells[cell(*y, i + p, i + q)];
                                            if sub.is_empty() {
                                                continue;
                                            }
                                            let pairs: Vec<(u64, u8)> = frontier[p]
                                                .iter()
                                                .map(|(a, b)| (*a, *b))
                                                .collect();
                                            for (pat, c) in pairs {
                                                for (pat2, c2) in sub {
                                                    let prod =
                                                        (c as u16 * *c2 as u16).min(2) as u8;
                                                    sat_add(&mut next[q], pat + pat2, prod);
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                            frontier = next;
                        }
                        for (pat, c) in &frontier[len] {
                            sat_add(&mut acc, *pat, *c);
                        }
                    }
                    cells[cell(x, i, j)] = acc;
                }
            }
        }

        let start_cell = &cells[cell(core.start, 0, n)];
        let mut outs = BTreeSet::new();
        for (pat, c) in start_cell {
            outs.insert(pattern_to_output(*pat, base, n));
            if *c >= 2 && witness.is_none() {
                witness = Some(pattern_to_word(*pat, base, &letters));
            }
        }
        outputs.push((w, outs));
    }

    Ok(Survey { outputs, ambiguous_witness: witness, infinite: false })
}

fn sat_add(map: &mut BTreeMap<u64, u8>, pat: u64, c: u8) {
    let e = map.entry(pat).or_insert(0);
    *e = (*e + c).min(2);
}

fn pattern_to_output(mut pat: u64, base: u64, n: usize) -> Output {
    let mut out = Vec::new();
    for p in 0..n {
        let d = pat % base;
        pat /= base;
        if d > 0 {
            out.push((p as u32 + 1, d as u32 - 1));
        }
    }
    out
}

fn pattern_to_word(mut pat: u64, base: u64, letters: &[char]) -> Vec<Terminal> {
    let mut out = Vec::new();
    for &c in letters {
        let d = pat % base;
        pat /= base;
        out.push(Terminal { letter: c, ann: if d > 0 { Some(d as usize - 1) } else { None } });
    }
    out
}

// ---------------------------------------------------------------------------
// Unambiguity and rigidity, bounded.

pub struct Unambiguity {
    pub unambiguous: bool,
    pub witness: Option<Vec<Terminal>>,
    /// verdict came from a unit/epsilon cycle rather than a counted witness
    pub infinite_cycle: bool,
    pub bound: usize,
}

/// True iff every annotated string of length at most `max_len` has at most
/// one leftmost derivation.
pub fn check_unambiguous_upto(
    g: &AnnotatedGrammar,
    max_len: usize,
) -> Result<Unambiguity, OracleError> {
    let s = survey(g, max_len)?;
    Ok(Unambiguity {
        unambiguous: s.unambiguous(),
        witness: s.ambiguous_witness,
        infinite_cycle: s.infinite,
        bound: max_len,
    })
}

pub type ShapeSeq = Vec<String>;

pub struct Rigidity {
    pub rigid: bool,
    /// (input string, two differing shape sequences), when not rigid
    pub witness: Option<(String, ShapeSeq, ShapeSeq)>,
    pub bound: usize,
}

fn shape_of(prefix_len: usize, rest: &[Symbol]) -> String {
    let mut s = String::with_capacity(prefix_len + rest.len());
    for _ in 0..prefix_len {
        s.push('0');
    }
    for sym in rest {
        s.push(match sym {
            Symbol::Nt(_) => '1',
            Symbol::Term(_) => '0',
        });
    }
    s
}

/// For every unannotated string up to the bound, collect the shape
/// sequences of all leftmost derivations of all its annotations; rigid iff
/// every string's collection is a singleton.
pub fn check_rigid_upto(g: &AnnotatedGrammar, max_len: usize) -> Result<Rigidity, OracleError> {
    let (core, _) = core_of_grammar(g);
    let keep = core.useful_rules();
    let nullable = core.nullable(&keep);
    if core.unit_topo(&keep, &nullable).is_err() {
        // pumping a realizable cycle changes the derivation length, so two
        // shape sequences of different lengths exist for some string
        return Ok(Rigidity {
            rigid: false,
            witness: Some(("<unit cycle>".to_string(), Vec::new(), Vec::new())),
            bound: max_len,
        });
    }

    let alphabet: Vec<char> = g.alphabet().iter().copied().collect();
    let rules_by_lhs: Vec<Vec<usize>> = {
        let mut v = vec![Vec::new(); g.nonterminal_count()];
        for (ri, r) in g.rules().iter().enumerate() {
            v[r.lhs].push(ri);
        }
        v
    };

    let mut budget = 5_000_000u64;
    let step_cap = (g.nonterminal_count() + 2) * (2 * max_len + 4);

    let mut strings = vec![String::new()];
    let mut i = 0;
    while i < strings.len() {
        if strings[i].chars().count() < max_len {
            for &c in &alphabet {
                let mut s = strings[i].clone();
                s.push(c);
                strings.push(s);
            }
        }
        i += 1;
    }

    for w in strings {
        let letters: Vec<char> = w.chars().collect();

        struct Dfs<'a> {
            g: &'a AnnotatedGrammar,
            rules_by_lhs: &'a [Vec<usize>],
            letters: &'a [char],
            budget: &'a mut u64,
            step_cap: usize,
            first: Option<ShapeSeq>,
            diff: Option<(ShapeSeq, ShapeSeq)>,
            overflow: bool,
        }

        impl<'a> Dfs<'a> {
            fn run(&mut self, pos: usize, rest: &[Symbol], seq: &mut ShapeSeq) {
                if self.diff.is_some() || self.overflow {
                    return;
                }
                if *self.budget == 0 || seq.len() > self.step_cap {
                    self.overflow = true;
                    return;
                }
                *self.budget -= 1;
                if rest.is_empty() {
                    if pos == self.letters.len() {
                        match &self.first {
                            None => self.first = Some(seq.clone()),
                            Some(f) if f != seq => {
                                self.diff = Some((f.clone(), seq.clone()));
                            }
                            _ => {}
                        }
                    }
                    return;
                }
                let Symbol::Nt(x) = rest[0] else { unreachable!() };
                for &ri in &self.rules_by_lhs[x] {
                    let rule = &self.g.rules()[ri];
                    let mut form: Vec<Symbol> = rule.rhs.clone();
                    form.extend_from_slice(&rest[1..]);
                    // prune on terminal count
                    let terms = form
                        .iter()
                        .filter(|s| matches!(s, Symbol::Term(_)))
                        .count();
                    if pos + terms > self.letters.len() {
                        continue;
                    }
                    seq.push(shape_of(pos, &form));
                    // consume matching leading terminals
                    let mut p = pos;
                    let mut k = 0;
                    let mut ok = true;
                    while k < form.len() {
                        match form[k] {
                            Symbol::Term(t) => {
                                if p < self.letters.len() && self.letters[p] == t.letter {
                                    p += 1;
                                    k += 1;
                                } else {
                                    ok = false;
                                    break;
                                }
                            }
                            Symbol::Nt(_) => break,
                        }
                    }
                    if ok {
                        self.run(p, &form[k..], seq);
                    }
                    seq.pop();
                }
            }
        }

        let mut dfs = Dfs {
            g,
            rules_by_lhs: &rules_by_lhs,
            letters: &letters,
            budget: &mut budget,
            step_cap,
            first: None,
            diff: None,
            overflow: false,
        };
        let start_form = [Symbol::Nt(g.start())];
        let mut seq = vec![shape_of(0, &start_form)];
        dfs.run(0, &start_form, &mut seq);
        if dfs.overflow {
            return Err(OracleError::ScaleLimit("rigidity search budget exhausted".into()));
        }
        if let Some((a, b)) = dfs.diff {
            return Ok(Rigidity { rigid: false, witness: Some((w, a, b)), bound: max_len });
        }
    }
    Ok(Rigidity { rigid: true, witness: None, bound: max_len })
}

// ---------------------------------------------------------------------------
// Ref-word mappings.

pub struct MappingsReport {
    pub mappings: BTreeSet<Mapping>,
    pub functional: bool,
    /// an invalid derivable ref-word, when one exists within the bound
    pub invalid_witness: Option<Vec<RefSym>>,
    /// ref-word length bound that was searched
    pub bound: usize,
}

/// Enumerate the set of mappings of the extraction grammar on `d`, and
/// report whether any derivable ref-word up to length `|d| + 2|vars|` is
/// invalid (a bounded functionality check).
pub fn brute_mappings(h: &ExtractionGrammar, d: &str) -> Result<MappingsReport, OracleError> {
    let doc: Vec<char> = d.chars().collect();
    let bound = doc.len() + 2 * h.var_count();
    let words = enumerate_ref_language(h, bound)?;
    let mut mappings = BTreeSet::new();
    let mut invalid_witness = None;
    for r in &words {
        match mapping_of_refword(r) {
            Ok(m) => {
                let plain: Vec<char> = r
                    .iter()
                    .filter_map(|s| match s {
                        RefSym::Letter(c) => Some(*c),
                        RefSym::Op(_) => None,
                    })
                    .collect();
                if plain == doc {
                    mappings.insert(m);
                }
            }
            Err(_) => {
                if invalid_witness.is_none() {
                    invalid_witness = Some(r.clone());
                }
            }
        }
    }
    Ok(MappingsReport {
        functional: invalid_witness.is_none(),
        invalid_witness,
        mappings,
        bound,
    })
}

/// All ref-words of the extraction grammar's language up to `max_len`,
/// by bounded leftmost derivation search.
pub fn enumerate_ref_language(
    h: &ExtractionGrammar,
    max_len: usize,
) -> Result<BTreeSet<Vec<RefSym>>, OracleError> {
    let (core, toks) = core_of_extraction(h);
    let tok_syms: Vec<RefSym> = {
        let mut v = vec![RefSym::Letter('\0'); toks.len()];
        for (sym, id) in &toks {
            v[*id] = *sym;
        }
        v
    };
    let rules_by_lhs: Vec<Vec<usize>> = {
        let mut v = vec![Vec::new(); core.n_nts];
        for (ri, (lhs, _)) in core.rules.iter().enumerate() {
            v[*lhs].push(ri);
        }
        v
    };

    let mut out: BTreeSet<Vec<RefSym>> = BTreeSet::new();
    let mut budget: u64 = 5_000_000;
    let step_cap = (core.n_nts + 2) * (2 * max_len + 4);

    fn dfs(
        core: &CfgCore,
        rules_by_lhs: &[Vec<usize>],
        tok_syms: &[RefSym],
        prefix: &mut Vec<RefSym>,
        rest: &[Tok],
        steps: usize,
        max_len: usize,
        step_cap: usize,
        budget: &mut u64,
        out: &mut BTreeSet<Vec<RefSym>>,
    ) -> Result<(), OracleError> {
        if *budget == 0 || steps > step_cap {
            return Err(OracleError::ScaleLimit("language enumeration budget exhausted".into()));
        }
        *budget -= 1;
        // consume leading terminals
        let mut k = 0;
        let mut added = 0;
        while k < rest.len() {
            match rest[k] {
                Tok::T(tid) => {
                    prefix.push(tok_syms[tid]);
                    added += 1;
                    k += 1;
                    if prefix.len() > max_len {
                        for _ in 0..added {
                            prefix.pop();
                        }
                        return Ok(());
                    }
                }
                Tok::Nt(_) => break,
            }
        }
        let rest = &rest[k..];
        let result = (|| {
            if rest.is_empty() {
                out.insert(prefix.clone());
                return Ok(());
            }
            let Tok::Nt(x) = rest[0] else { unreachable!() };
            for &ri in &rules_by_lhs[x] {
                let mut form: Vec<Tok> = core.rules[ri].1.clone();
                form.extend_from_slice(&rest[1..]);
                let terms = form.iter().filter(|t| matches!(t, Tok::T(_))).count();
                if prefix.len() + terms > max_len {
                    continue;
                }
                dfs(core, rules_by_lhs, tok_syms, prefix, &form, steps + 1, max_len, step_cap, budget, out)?;
            }
            Ok(())
        })();
        for _ in 0..added {
            prefix.pop();
        }
        result
    }

    let start = [Tok::Nt(core.start)];
    let mut prefix = Vec::new();
    dfs(
        &core,
        &rules_by_lhs,
        &tok_syms,
        &mut prefix,
        &start,
        0,
        max_len,
        step_cap,
        &mut budget,
        &mut out,
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    fn term(c: char) -> Terminal {
        Terminal::plain(c)
    }

    fn aterm(c: char, a: usize) -> Terminal {
        Terminal::annotated(c, a)
    }

    #[test]
    fn g1_outputs_on_aa() {
        let g = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        let outs = brute_outputs(&g, "aa").unwrap();
        let want: BTreeSet<Output> = [
            vec![],
            vec![(1, 0)],
            vec![(2, 0)],
            vec![(1, 0), (2, 0)],
        ]
        .into_iter()
        .collect();
        assert_eq!(outs, want);
    }

    #[test]
    fn g1_outputs_on_empty_string() {
        let g = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        let outs = brute_outputs(&g, "").unwrap();
        assert_eq!(outs.len(), 1);
        assert!(outs.contains(&vec![]));
    }

    #[test]
    fn letter_outside_alphabet_gives_empty() {
        let g = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        assert!(brute_outputs(&g, "z").unwrap().is_empty());
    }

    #[test]
    fn count_single_derivation() {
        let g = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        let c = count_derivations(&g, &[aterm('a', 0), term('a')]);
        assert!(c.exactly(1));
    }

    #[test]
    fn count_duplicate_rule() {
        let g = parse_grammar("start: S\nS -> 'a' | 'a'").unwrap();
        let c = count_derivations(&g, &[term('a')]);
        assert!(c.exactly(2));
    }

    #[test]
    fn count_unit_cycle_is_infinite() {
        let g = parse_grammar("start: S\nS -> A\nA -> S | 'a'").unwrap();
        let c = count_derivations(&g, &[term('a')]);
        assert_eq!(c, DerivationCount::Infinite);
    }

    #[test]
    fn count_is_precise_outside_the_cycle() {
        // the cycle sits on a branch not used by the queried string
        let g = parse_grammar("start: S\nS -> 'z' | A\nA -> B | 'b'\nB -> A").unwrap();
        assert!(count_derivations(&g, &[term('z')]).exactly(1));
        assert_eq!(count_derivations(&g, &[term('b')]), DerivationCount::Infinite);
    }

    #[test]
    fn unambiguous_check_examples() {
        let g = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        assert!(check_unambiguous_upto(&g, 5).unwrap().unambiguous);

        let g = parse_grammar("start: S\nS -> 'a' | 'a'").unwrap();
        let u = check_unambiguous_upto(&g, 1).unwrap();
        assert!(!u.unambiguous);
        assert_eq!(u.witness.unwrap(), vec![term('a')]);

        let g = parse_grammar("start: S\nS -> T\nT -> 'u'\nU -> 'v'").unwrap();
        assert!(check_unambiguous_upto(&g, 3).unwrap().unambiguous);
    }

    #[test]
    fn survey_matches_brute_outputs() {
        let g = parse_grammar("start: S\nS -> '('@m S ')' S | '(' S ')' S | _").unwrap();
        let s = survey(&g, 4).unwrap();
        assert!(s.unambiguous());
        for (w, outs) in &s.outputs {
            assert_eq!(outs, &brute_outputs(&g, w).unwrap(), "outputs differ on {w:?}");
        }
    }

    #[test]
    fn rigidity_examples() {
        let g1 = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        assert!(check_rigid_upto(&g1, 4).unwrap().rigid);

        let g3 = parse_grammar("start: S\nS -> A 'b' | 'a' B\nA -> 'a'@x\nB -> 'b'@y").unwrap();
        let r = check_rigid_upto(&g3, 2).unwrap();
        assert!(!r.rigid);
        assert_eq!(r.witness.unwrap().0, "ab");
    }

    #[test]
    fn rigidity_on_unannotated_unambiguous_grammar() {
        let g = parse_grammar("start: S\nS -> 'a' S | _").unwrap();
        assert!(check_rigid_upto(&g, 4).unwrap().rigid);
    }

    #[test]
    fn oracle_self_consistency() {
        let g = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        for w in ["", "a", "aa", "aaa"] {
            let outs = brute_outputs(&g, w).unwrap();
            let nonempty = !outs.is_empty();
            // nonempty iff some annotated string over w is derivable
            let any = {
                let letters: Vec<char> = w.chars().collect();
                let mut found = false;
                for mask in 0..(1u32 << letters.len()) {
                    let word: Vec<Terminal> = letters
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| {
                            if mask & (1 << i) != 0 {
                                aterm(c, 0)
                            } else {
                                term(c)
                            }
                        })
                        .collect();
                    if count_derivations(&g, &word).at_least_one() {
                        found = true;
                        break;
                    }
                }
                found
            };
            assert_eq!(nonempty, any);
        }
    }
}
