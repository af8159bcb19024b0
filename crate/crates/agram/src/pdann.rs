//! Pushdown annotators: the automaton model with read, read-write, push,
//! and pop transitions, run semantics and stack profiles, conversions to
//! and from annotated grammars, the deterministic-modulo-profile subset
//! construction, and linear-time profile computation for
//! profiled-deterministic machines.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::eval::{evaluate, EvalError, Output};
use crate::grammar::{AnnotatedGrammar, ParseError, Symbol, Terminal};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Trans {
    Read { from: usize, letter: char, to: usize },
    ReadWrite { from: usize, letter: char, ann: usize, to: usize },
    Push { from: usize, to: usize, sym: usize },
    Pop { from: usize, sym: usize, to: usize },
}

impl Trans {
    pub fn from_state(&self) -> usize {
        match *self {
            Trans::Read { from, .. }
            | Trans::ReadWrite { from, .. }
            | Trans::Push { from, .. }
            | Trans::Pop { from, .. } => from,
        }
    }
}

/// A pushdown annotator. Acceptance is by final state with an empty stack
/// after the whole input has been read.
#[derive(Clone, Debug)]
pub struct PdAnn {
    pub states: Vec<String>,
    pub stack_syms: Vec<String>,
    pub annotations: Vec<String>,
    pub transitions: Vec<Trans>,
    pub initial: usize,
    pub finals: BTreeSet<usize>,
}

impl PdAnn {
    pub fn alphabet(&self) -> BTreeSet<char> {
        self.transitions
            .iter()
            .filter_map(|t| match t {
                Trans::Read { letter, .. } | Trans::ReadWrite { letter, .. } => Some(*letter),
                _ => None,
            })
            .collect()
    }

    fn push_trans_dedup(&mut self, t: Trans) {
        if !self.transitions.contains(&t) {
            self.transitions.push(t);
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum PdannError {
    #[error("subset construction exceeded the size cap of {0} states and stack symbols")]
    SizeLimit(usize),
    #[error("machine is not profiled-deterministic (constructive check failed)")]
    NotProfiledDeterministic,
    #[error("no accepting run")]
    NoRun,
    #[error("simulation exceeded the linear step budget of {0}")]
    StepBudget(u64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

// ---------------------------------------------------------------------------
// Run search.

/// One accepting run: the transitions taken, the output it writes, and its
/// stack-height profile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunRec {
    pub transitions: Vec<usize>,
    pub output: Output,
    pub profile: Vec<u32>,
}

/// Default run-length cap for the exhaustive search.
pub fn default_depth_cap(p: &PdAnn, w_len: usize) -> usize {
    4 * (w_len + 1) * p.states.len().max(1)
}

/// Exhaustive search over runs of length at most `depth_cap`; returns every
/// accepting run with its annotation and profile.
pub fn brute_runs(p: &PdAnn, w: &str, depth_cap: usize) -> Vec<RunRec> {
    let letters: Vec<char> = w.chars().collect();
    let mut acc = Vec::new();
    let mut trail: Vec<usize> = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    let mut profile: Vec<u32> = vec![0];
    let mut output: Output = Vec::new();

    fn dfs(
        p: &PdAnn,
        letters: &[char],
        state: usize,
        pos: usize,
        depth_cap: usize,
        trail: &mut Vec<usize>,
        stack: &mut Vec<usize>,
        profile: &mut Vec<u32>,
        output: &mut Output,
        acc: &mut Vec<RunRec>,
    ) {
        if pos == letters.len() && stack.is_empty() && p.finals.contains(&state) {
            acc.push(RunRec { transitions: trail.clone(), output: output.clone(), profile: profile.clone() });
        }
        if trail.len() == depth_cap {
            return;
        }
        for (ti, t) in p.transitions.iter().enumerate() {
            if t.from_state() != state {
                continue;
            }
            match *t {
                Trans::Read { letter, to, .. } => {
                    if pos < letters.len() && letters[pos] == letter {
                        trail.push(ti);
                        profile.push(stack.len() as u32);
                        dfs(p, letters, to, pos + 1, depth_cap, trail, stack, profile, output, acc);
                        profile.pop();
                        trail.pop();
                    }
                }
                Trans::ReadWrite { letter, ann, to, .. } => {
                    if pos < letters.len() && letters[pos] == letter {
                        trail.push(ti);
                        profile.push(stack.len() as u32);
                        output.push((pos as u32 + 1, ann as u32));
                        dfs(p, letters, to, pos + 1, depth_cap, trail, stack, profile, output, acc);
                        output.pop();
                        profile.pop();
                        trail.pop();
                    }
                }
                Trans::Push { to, sym, .. } => {
                    trail.push(ti);
                    stack.push(sym);
                    profile.push(stack.len() as u32);
                    dfs(p, letters, to, pos, depth_cap, trail, stack, profile, output, acc);
                    profile.pop();
                    stack.pop();
                    trail.pop();
                }
                Trans::Pop { sym, to, .. } => {
                    if stack.last() == Some(&sym) {
                        trail.push(ti);
                        stack.pop();
                        profile.push(stack.len() as u32);
                        dfs(p, letters, to, pos, depth_cap, trail, stack, profile, output, acc);
                        profile.pop();
                        stack.push(sym);
                        trail.pop();
                    }
                }
            }
        }
    }

    dfs(p, &letters, p.initial, 0, depth_cap, &mut trail, &mut stack, &mut profile, &mut output, &mut acc);
    acc
}

// ---------------------------------------------------------------------------
// Grammar -> PDAnn.

/// Build an equivalent PDAnn from a grammar. States are the dotted rule
/// positions plus one initial/final state; the stack holds return states.
/// Unambiguity carries over, and rigid grammars give profiled machines.
pub fn grammar_to_pdann(g: &AnnotatedGrammar) -> PdAnn {
    let mut states: Vec<String> = vec!["q0".to_string()];
    let mut state_of: HashMap<(usize, usize), usize> = HashMap::new();
    for (ri, r) in g.rules().iter().enumerate() {
        for i in 0..=r.rhs.len() {
            state_of.insert((ri, i), states.len());
            states.push(format!("r{}_{}", ri, i));
        }
    }

    // stack symbols: q0 plus every continuation state that can be pushed
    let mut stack_syms: Vec<String> = vec!["q0".to_string()];
    let mut sym_of: HashMap<usize, usize> = HashMap::new(); // state -> stack sym
    sym_of.insert(0, 0);
    for (ri, r) in g.rules().iter().enumerate() {
        for (i, s) in r.rhs.iter().enumerate() {
            if matches!(s, Symbol::Nt(_)) {
                let st = state_of[&(ri, i + 1)];
                sym_of.entry(st).or_insert_with(|| {
                    stack_syms.push(states[st].clone());
                    stack_syms.len() - 1
                });
            }
        }
    }

    let mut p = PdAnn {
        states,
        stack_syms,
        annotations: g.ann_names().to_vec(),
        transitions: Vec::new(),
        initial: 0,
        finals: [0].into_iter().collect(),
    };

    let rules_by_lhs: Vec<Vec<usize>> = {
        let mut v = vec![Vec::new(); g.nonterminal_count()];
        for (ri, r) in g.rules().iter().enumerate() {
            v[r.lhs].push(ri);
        }
        v
    };

    // start-rule brackets
    for &ri in &rules_by_lhs[g.start()] {
        p.push_trans_dedup(Trans::Push { from: 0, to: state_of[&(ri, 0)], sym: 0 });
    }
    for (ri, r) in g.rules().iter().enumerate() {
        let end = state_of[&(ri, r.rhs.len())];
        // pop any continuation (or the bottom marker) and resume there
        let end_pops: Vec<(usize, usize)> =
            sym_of.iter().map(|(&st, &sym)| (sym, st)).collect();
        let mut end_pops = end_pops;
        end_pops.sort_unstable();
        for (sym, st) in end_pops {
            p.push_trans_dedup(Trans::Pop { from: end, sym, to: st });
        }
        for (i, s) in r.rhs.iter().enumerate() {
            let here = state_of[&(ri, i)];
            let next = state_of[&(ri, i + 1)];
            match s {
                Symbol::Term(t) => match t.ann {
                    None => p.push_trans_dedup(Trans::Read { from: here, letter: t.letter, to: next }),
                    Some(a) => p.push_trans_dedup(Trans::ReadWrite {
                        from: here,
                        letter: t.letter,
                        ann: a,
                        to: next,
                    }),
                },
                Symbol::Nt(y) => {
                    let cont_sym = sym_of[&next];
                    for &ri2 in &rules_by_lhs[*y] {
                        p.push_trans_dedup(Trans::Push {
                            from: here,
                            to: state_of[&(ri2, 0)],
                            sym: cont_sym,
                        });
                    }
                }
            }
        }
    }
    p
}

// ---------------------------------------------------------------------------
// PDAnn -> grammar.

/// Build an equivalent annotated grammar via the triple construction over
/// the empty-stack form of the machine. Unambiguity carries over, and
/// profiled machines give rigid grammars.
pub fn pdann_to_grammar(p: &PdAnn) -> AnnotatedGrammar {
    // empty-stack form: fresh initial and final states and a bottom marker.
    // Acceptance is already by final state plus empty stack, so it suffices
    // to bracket runs between a bottom push and a bottom pop.
    let mut q = p.clone();
    let q_init = q.states.len();
    q.states.push(fresh_name(&q.states, "qI"));
    let q_fin = q.states.len();
    q.states.push(fresh_name(&q.states, "qF"));
    let bottom = q.stack_syms.len();
    q.stack_syms.push(fresh_name(&q.stack_syms, "g0"));
    q.transitions.push(Trans::Push { from: q_init, to: q.initial, sym: bottom });
    for &f in &p.finals {
        q.transitions.push(Trans::Pop { from: f, sym: bottom, to: q_fin });
    }
    q.initial = q_init;
    q.finals = [q_fin].into_iter().collect();

    // triple nonterminals (state, stack symbol, state), built lazily from
    // the start triple
    let mut g = AnnotatedGrammar::new("S");
    for a in &q.annotations {
        g.ann(a);
    }
    let mut nt_of: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut worklist: VecDeque<(usize, usize, usize)> = VecDeque::new();
    let start_triple = (p.initial, bottom, q_fin);
    let mut intern = |g: &mut AnnotatedGrammar,
                      nt_of: &mut HashMap<(usize, usize, usize), usize>,
                      worklist: &mut VecDeque<(usize, usize, usize)>,
                      t: (usize, usize, usize)| {
        *nt_of.entry(t).or_insert_with(|| {
            worklist.push_back(t);
            g.nt(&format!("P{}_{}_{}", t.0, t.1, t.2))
        })
    };
    let start_nt = intern(&mut g, &mut nt_of, &mut worklist, start_triple);
    g.add_rule(0, vec![Symbol::Nt(start_nt)]);

    let n_states = q.states.len();
    while let Some((a, gamma, b)) = worklist.pop_front() {
        let lhs = nt_of[&(a, gamma, b)];
        for t in &q.transitions {
            match *t {
                Trans::Pop { from, sym, to } => {
                    if from == a && sym == gamma && to == b {
                        g.add_rule(lhs, vec![]);
                    }
                }
                Trans::Read { from, letter, to } => {
                    if from == a {
                        let cont = intern(&mut g, &mut nt_of, &mut worklist, (to, gamma, b));
                        g.add_rule(lhs, vec![Symbol::Term(Terminal::plain(letter)), Symbol::Nt(cont)]);
                    }
                }
                Trans::ReadWrite { from, letter, ann, to } => {
                    if from == a {
                        let cont = intern(&mut g, &mut nt_of, &mut worklist, (to, gamma, b));
                        g.add_rule(
                            lhs,
                            vec![Symbol::Term(Terminal::annotated(letter, ann)), Symbol::Nt(cont)],
                        );
                    }
                }
                Trans::Push { from, to, sym } => {
                    if from == a {
                        for r in 0..n_states {
                            let inner = intern(&mut g, &mut nt_of, &mut worklist, (to, sym, r));
                            let rest = intern(&mut g, &mut nt_of, &mut worklist, (r, gamma, b));
                            g.add_rule(lhs, vec![Symbol::Nt(inner), Symbol::Nt(rest)]);
                        }
                    }
                }
            }
        }
    }
    crate::grammar::trim_useless(&g)
}

fn fresh_name(taken: &[String], base: &str) -> String {
    if !taken.iter().any(|s| s == base) {
        return base.to_string();
    }
    let mut i = 1;
    loop {
        let name = format!("{}_{}", base, i);
        if !taken.iter().any(|s| *s == name) {
            return name;
        }
        i += 1;
    }
}

// ---------------------------------------------------------------------------
// Deterministic-modulo-profile subset construction.

pub const DEFAULT_SUBSET_CAP: usize = 20_000;

type PairSet = BTreeSet<(usize, usize)>;
type TripleSet = BTreeSet<(usize, usize, usize)>;

/// Build an equivalent machine where the transition of each kind leaving a
/// state (per letter, annotation, or stack symbol) is unique, so a run is
/// determined by the input and its profile. Only subset states reachable
/// from the initial pair set are materialized; accepting runs keep exactly
/// the profiles of the original machine.
pub fn det_modulo_profile(p: &PdAnn, cap: usize) -> Result<PdAnn, PdannError> {
    let letters: Vec<char> = p.alphabet().into_iter().collect();
    let mut reads: HashMap<(usize, char), Vec<usize>> = HashMap::new();
    let mut read_writes: HashMap<(usize, char, usize), Vec<usize>> = HashMap::new();
    let mut pushes: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    let mut pops: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for t in &p.transitions {
        match *t {
            Trans::Read { from, letter, to } => reads.entry((from, letter)).or_default().push(to),
            Trans::ReadWrite { from, letter, ann, to } => {
                read_writes.entry((from, letter, ann)).or_default().push(to)
            }
            Trans::Push { from, to, sym } => pushes.entry(from).or_default().push((to, sym)),
            Trans::Pop { from, sym, to } => pops.entry((from, sym)).or_default().push(to),
        }
    }

    let mut state_ids: HashMap<PairSet, usize> = HashMap::new();
    let mut state_sets: Vec<PairSet> = Vec::new();
    let mut sym_ids: HashMap<TripleSet, usize> = HashMap::new();
    let mut sym_sets: Vec<TripleSet> = Vec::new();
    let mut transitions: Vec<Trans> = Vec::new();

    let init: PairSet = [(p.initial, p.initial)].into_iter().collect();
    state_ids.insert(init.clone(), 0);
    state_sets.push(init);

    let mut next_state = 0usize;
    let mut next_sym = 0usize;
    // pops are emitted per (state, symbol) pair once both sides exist
    let mut emitted_pops: BTreeSet<(usize, usize)> = BTreeSet::new();

    while next_state < state_sets.len() || next_sym < sym_sets.len() {
        if state_sets.len() + sym_sets.len() > cap {
            return Err(PdannError::SizeLimit(cap));
        }
        if next_state < state_sets.len() {
            let s = next_state;
            next_state += 1;
            let set = state_sets[s].clone();

            // unique push
            let mut t_set: TripleSet = BTreeSet::new();
            let mut s_set: PairSet = BTreeSet::new();
            for &(pp, p2) in &set {
                if let Some(v) = pushes.get(&p2) {
                    for &(to, sym) in v {
                        t_set.insert((pp, sym, to));
                        s_set.insert((to, to));
                    }
                }
            }
            if !t_set.is_empty() {
                let sym = intern_set(&mut sym_ids, &mut sym_sets, t_set);
                let to = intern_set(&mut state_ids, &mut state_sets, s_set);
                transitions.push(Trans::Push { from: s, to, sym });
            }

            // unique read per letter
            for &a in &letters {
                let mut s2: PairSet = BTreeSet::new();
                for &(pp, p2) in &set {
                    if let Some(v) = reads.get(&(p2, a)) {
                        for &to in v {
                            s2.insert((pp, to));
                        }
                    }
                }
                if !s2.is_empty() {
                    let to = intern_set(&mut state_ids, &mut state_sets, s2);
                    transitions.push(Trans::Read { from: s, letter: a, to });
                }
                for ann in 0..p.annotations.len() {
                    let mut s2: PairSet = BTreeSet::new();
                    for &(pp, p2) in &set {
                        if let Some(v) = read_writes.get(&(p2, a, ann)) {
                            for &to in v {
                                s2.insert((pp, to));
                            }
                        }
                    }
                    if !s2.is_empty() {
                        let to = intern_set(&mut state_ids, &mut state_sets, s2);
                        transitions.push(Trans::ReadWrite { from: s, letter: a, ann, to });
                    }
                }
            }
        } else {
            next_sym += 1;
        }

        // pops for all (state, symbol) pairs discovered so far
        for s in 0..state_sets.len() {
            for t in 0..sym_sets.len() {
                if !emitted_pops.insert((s, t)) {
                    continue;
                }
                let mut s2: PairSet = BTreeSet::new();
                for &(pp, gamma, p2) in &sym_sets[t] {
                    for &(p2b, q2) in &state_sets[s] {
                        if p2b != p2 {
                            continue;
                        }
                        if let Some(v) = pops.get(&(q2, gamma)) {
                            for &to in v {
                                s2.insert((pp, to));
                            }
                        }
                    }
                }
                if !s2.is_empty() {
                    let to = intern_set(&mut state_ids, &mut state_sets, s2);
                    transitions.push(Trans::Pop { from: s, sym: t, to });
                }
            }
        }
    }

    let finals: BTreeSet<usize> = state_sets
        .iter()
        .enumerate()
        .filter(|(_, set)| {
            set.iter().any(|&(a, b)| a == p.initial && p.finals.contains(&b))
        })
        .map(|(i, _)| i)
        .collect();

    Ok(PdAnn {
        states: (0..state_sets.len()).map(|i| format!("d{}", i)).collect(),
        stack_syms: (0..sym_sets.len()).map(|i| format!("t{}", i)).collect(),
        annotations: p.annotations.clone(),
        transitions,
        initial: 0,
        finals,
    })
}

fn intern_set<K: Ord + Clone>(ids: &mut HashMap<BTreeSet<K>, usize>, sets: &mut Vec<BTreeSet<K>>, set: BTreeSet<K>) -> usize
where
    BTreeSet<K>: std::hash::Hash,
{
    if let Some(&id) = ids.get(&set) {
        return id;
    }
    let id = sets.len();
    ids.insert(set.clone(), id);
    sets.push(set);
    id
}

/// Check the four deterministic-modulo-profile uniqueness conditions by a
/// direct scan of the transition relation.
pub fn check_modulo_profile_conditions(p: &PdAnn) -> bool {
    let mut push_from: BTreeSet<usize> = BTreeSet::new();
    let mut pop_from: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut rw_from: BTreeSet<(usize, char, usize)> = BTreeSet::new();
    let mut read_from: BTreeSet<(usize, char)> = BTreeSet::new();
    for t in &p.transitions {
        let fresh = match *t {
            Trans::Push { from, .. } => push_from.insert(from),
            Trans::Pop { from, sym, .. } => pop_from.insert((from, sym)),
            Trans::ReadWrite { from, letter, ann, .. } => rw_from.insert((from, letter, ann)),
            Trans::Read { from, letter, .. } => read_from.insert((from, letter)),
        };
        if !fresh {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Determinism and profiles.

/// Replace read-write transitions by plain reads (dropping annotations) and
/// deduplicate.
pub fn strip_annotations(p: &PdAnn) -> PdAnn {
    let mut q = p.clone();
    q.annotations.clear();
    let mut seen = BTreeSet::new();
    q.transitions = p
        .transitions
        .iter()
        .map(|t| match *t {
            Trans::ReadWrite { from, letter, to, .. } => Trans::Read { from, letter, to },
            t => t,
        })
        .filter(|t| seen.insert(*t))
        .collect();
    q
}

/// Deterministic-PDA check: every state's applicable transitions are of one
/// kind, with at most one read per letter, one push total, and one pop per
/// stack symbol. Call on annotation-free machines.
pub fn check_deterministic(p: &PdAnn) -> bool {
    let n = p.states.len();
    for q in 0..n {
        let ts: Vec<&Trans> = p.transitions.iter().filter(|t| t.from_state() == q).collect();
        if ts.is_empty() {
            continue;
        }
        let all_read = ts.iter().all(|t| matches!(t, Trans::Read { .. }));
        let all_push = ts.iter().all(|t| matches!(t, Trans::Push { .. }));
        let all_pop = ts.iter().all(|t| matches!(t, Trans::Pop { .. }));
        if ts.iter().any(|t| matches!(t, Trans::ReadWrite { .. })) {
            return false;
        }
        if all_read {
            let mut seen = BTreeSet::new();
            for t in &ts {
                let Trans::Read { letter, .. } = t else { unreachable!() };
                if !seen.insert(*letter) {
                    return false;
                }
            }
        } else if all_push {
            if ts.len() > 1 {
                return false;
            }
        } else if all_pop {
            let mut seen = BTreeSet::new();
            for t in &ts {
                let Trans::Pop { sym, .. } = t else { unreachable!() };
                if !seen.insert(*sym) {
                    return false;
                }
            }
        } else {
            return false;
        }
    }
    true
}

/// Drop states unreachable in the control graph (stack contents ignored;
/// conservative) together with their transitions.
pub fn trim_control_unreachable(p: &PdAnn) -> PdAnn {
    let n = p.states.len();
    let mut reach = vec![false; n];
    reach[p.initial] = true;
    let mut queue = VecDeque::from([p.initial]);
    while let Some(q) = queue.pop_front() {
        for t in &p.transitions {
            if t.from_state() != q {
                continue;
            }
            let to = match *t {
                Trans::Read { to, .. }
                | Trans::ReadWrite { to, .. }
                | Trans::Push { to, .. }
                | Trans::Pop { to, .. } => to,
            };
            if !reach[to] {
                reach[to] = true;
                queue.push_back(to);
            }
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut states = Vec::new();
    for i in 0..n {
        if reach[i] {
            remap[i] = states.len();
            states.push(p.states[i].clone());
        }
    }
    let transitions = p
        .transitions
        .iter()
        .filter_map(|t| {
            let ok = |s: usize| reach[s];
            match *t {
                Trans::Read { from, letter, to } if ok(from) && ok(to) => {
                    Some(Trans::Read { from: remap[from], letter, to: remap[to] })
                }
                Trans::ReadWrite { from, letter, ann, to } if ok(from) && ok(to) => {
                    Some(Trans::ReadWrite { from: remap[from], letter, ann, to: remap[to] })
                }
                Trans::Push { from, to, sym } if ok(from) && ok(to) => {
                    Some(Trans::Push { from: remap[from], to: remap[to], sym })
                }
                Trans::Pop { from, sym, to } if ok(from) && ok(to) => {
                    Some(Trans::Pop { from: remap[from], sym, to: remap[to] })
                }
                _ => None,
            }
        })
        .collect();
    PdAnn {
        states,
        stack_syms: p.stack_syms.clone(),
        annotations: p.annotations.clone(),
        transitions,
        initial: remap[p.initial],
        finals: p.finals.iter().filter(|f| reach[**f]).map(|f| remap[*f]).collect(),
    }
}

/// The profile (sequence of stack heights) of the unique accepting run of a
/// profiled-deterministic machine on `w`, computed by determinizing the
/// annotation-free machine and simulating it within a linear step budget.
pub fn compute_profile(p: &PdAnn, w: &str) -> Result<Vec<u32>, PdannError> {
    let stripped = strip_annotations(p);
    let det = det_modulo_profile(&stripped, DEFAULT_SUBSET_CAP)?;
    let det = trim_control_unreachable(&det);
    if !check_deterministic(&det) {
        return Err(PdannError::NotProfiledDeterministic);
    }
    simulate_deterministic(&det, w).map(|(profile, _)| profile)
}

/// Simulate a deterministic PDA, returning the accepting run's profile and
/// the number of simulation steps taken.
pub fn simulate_deterministic(p: &PdAnn, w: &str) -> Result<(Vec<u32>, u64), PdannError> {
    let letters: Vec<char> = w.chars().collect();
    let n = letters.len();
    let budget = 4 * (n as u64 + 1) * p.states.len().max(1) as u64;
    let mut state = p.initial;
    let mut stack: Vec<usize> = Vec::new();
    let mut pos = 0usize;
    let mut profile = vec![0u32];
    let mut steps = 0u64;
    loop {
        if pos == n && stack.is_empty() && p.finals.contains(&state) {
            return Ok((profile, steps));
        }
        if steps >= budget {
            return Err(PdannError::StepBudget(budget));
        }
        let ts: Vec<&Trans> = p.transitions.iter().filter(|t| t.from_state() == state).collect();
        let next = ts.iter().find_map(|t| match **t {
            Trans::Read { letter, to, .. } if pos < n && letters[pos] == letter => {
                Some((to, 0i32, true))
            }
            Trans::Push { to, sym } => {
                stack.push(sym);
                Some((to, 1, false))
            }
            Trans::Pop { sym, to, .. } if stack.last() == Some(&sym) => {
                stack.pop();
                Some((to, -1, false))
            }
            _ => None,
        });
        match next {
            None => return Err(PdannError::NoRun),
            Some((to, _, advanced)) => {
                state = to;
                if advanced {
                    pos += 1;
                }
                profile.push(stack.len() as u32);
                steps += 1;
            }
        }
    }
}

/// Make a rigid grammar unambiguous: convert to a (profiled) machine, make
/// it deterministic modulo profile, and convert back. The result is
/// equivalent, rigid, and unambiguous.
pub fn disambiguate_rigid(g: &AnnotatedGrammar, cap: usize) -> Result<AnnotatedGrammar, PdannError> {
    let p = grammar_to_pdann(g);
    let d = det_modulo_profile(&p, cap)?;
    Ok(pdann_to_grammar(&d))
}

/// Enumerate a machine's outputs through the grammar conversion.
pub fn enumerate_pdann(p: &PdAnn, w: &str, limit: Option<usize>) -> Result<Vec<Output>, PdannError> {
    Ok(evaluate(&pdann_to_grammar(p), w, limit)?)
}

// ---------------------------------------------------------------------------
// Text format.

/// Parse the machine text format: `states:`, `initial:`, `final:`, `stack:`
/// declaration lines and transition lines `read: p 'a' q`,
/// `readw: p 'a' ann q`, `push: p q g`, `pop: p g q`.
pub fn parse_pdann(text: &str) -> Result<PdAnn, ParseError> {
    let mut states: Vec<String> = Vec::new();
    let mut stack_syms: Vec<String> = Vec::new();
    let mut annotations: Vec<String> = Vec::new();
    let mut transitions: Vec<Trans> = Vec::new();
    let mut initial: Option<usize> = None;
    let mut finals: BTreeSet<usize> = BTreeSet::new();

    let err = |line: usize, col: usize, msg: &str| ParseError::Syntax {
        line,
        col,
        msg: msg.to_string(),
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = strip_comment_line(raw);
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        let (head, rest) = match body.split_once(':') {
            Some(x) => x,
            None => return Err(err(line, 1, "expected `keyword: ...`")),
        };
        let words: Vec<&str> = rest.split_whitespace().collect();
        let lookup = |table: &[String], name: &str| -> Result<usize, ParseError> {
            table
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| ParseError::Undeclared { line, name: name.to_string() })
        };
        match head.trim() {
            "states" => {
                for wd in words {
                    states.push(wd.to_string());
                }
            }
            "stack" => {
                for wd in words {
                    stack_syms.push(wd.to_string());
                }
            }
            "initial" => {
                if words.len() != 1 {
                    return Err(err(line, 1, "initial takes exactly one state"));
                }
                initial = Some(lookup(&states, words[0])?);
            }
            "final" => {
                for wd in words {
                    finals.insert(lookup(&states, wd)?);
                }
            }
            "read" => {
                if words.len() != 3 {
                    return Err(err(line, 1, "read takes `p 'a' q`"));
                }
                let from = lookup(&states, words[0])?;
                let letter = parse_letter(words[1], line)?;
                let to = lookup(&states, words[2])?;
                transitions.push(Trans::Read { from, letter, to });
            }
            "readw" => {
                if words.len() != 4 {
                    return Err(err(line, 1, "readw takes `p 'a' ann q`"));
                }
                let from = lookup(&states, words[0])?;
                let letter = parse_letter(words[1], line)?;
                let ann = match annotations.iter().position(|a| a == words[2]) {
                    Some(i) => i,
                    None => {
                        annotations.push(words[2].to_string());
                        annotations.len() - 1
                    }
                };
                let to = lookup(&states, words[3])?;
                transitions.push(Trans::ReadWrite { from, letter, ann, to });
            }
            "push" => {
                if words.len() != 3 {
                    return Err(err(line, 1, "push takes `p q g`"));
                }
                let from = lookup(&states, words[0])?;
                let to = lookup(&states, words[1])?;
                let sym = lookup(&stack_syms, words[2])?;
                transitions.push(Trans::Push { from, to, sym });
            }
            "pop" => {
                if words.len() != 3 {
                    return Err(err(line, 1, "pop takes `p g q`"));
                }
                let from = lookup(&states, words[0])?;
                let sym = lookup(&stack_syms, words[1])?;
                let to = lookup(&states, words[2])?;
                transitions.push(Trans::Pop { from, sym, to });
            }
            other => return Err(err(line, 1, &format!("unknown keyword `{}`", other))),
        }
    }

    let initial = initial.ok_or(ParseError::NoStart)?;
    Ok(PdAnn { states, stack_syms, annotations, transitions, initial, finals })
}

fn strip_comment_line(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        if c == '\'' {
            in_quote = !in_quote;
        } else if c == '#' && !in_quote {
            return &line[..i];
        }
    }
    line
}

fn parse_letter(word: &str, line: usize) -> Result<char, ParseError> {
    let chars: Vec<char> = word.chars().collect();
    let bad = || ParseError::Syntax {
        line,
        col: 1,
        msg: "expected a quoted single-character literal".to_string(),
    };
    match chars.as_slice() {
        ['\'', c, '\''] => Ok(*c),
        ['\'', '\\', e, '\''] => match e {
            '\'' => Ok('\''),
            '\\' => Ok('\\'),
            'n' => Ok('\n'),
            't' => Ok('\t'),
            _ => Err(bad()),
        },
        _ => Err(bad()),
    }
}

/// Render a machine in the text format.
pub fn render_pdann(p: &PdAnn) -> String {
    let mut out = String::new();
    out.push_str(&format!("states: {}\n", p.states.join(" ")));
    if !p.stack_syms.is_empty() {
        out.push_str(&format!("stack: {}\n", p.stack_syms.join(" ")));
    }
    out.push_str(&format!("initial: {}\n", p.states[p.initial]));
    let finals: Vec<&str> = p.finals.iter().map(|f| p.states[*f].as_str()).collect();
    out.push_str(&format!("final: {}\n", finals.join(" ")));
    for t in &p.transitions {
        match *t {
            Trans::Read { from, letter, to } => {
                out.push_str(&format!("read: {} {} {}\n", p.states[from], quote(letter), p.states[to]))
            }
            Trans::ReadWrite { from, letter, ann, to } => out.push_str(&format!(
                "readw: {} {} {} {}\n",
                p.states[from],
                quote(letter),
                p.annotations[ann],
                p.states[to]
            )),
            Trans::Push { from, to, sym } => out.push_str(&format!(
                "push: {} {} {}\n",
                p.states[from], p.states[to], p.stack_syms[sym]
            )),
            Trans::Pop { from, sym, to } => out.push_str(&format!(
                "pop: {} {} {}\n",
                p.states[from], p.stack_syms[sym], p.states[to]
            )),
        }
    }
    out
}

fn quote(c: char) -> String {
    match c {
        '\'' => "'\\''".to_string(),
        '\\' => "'\\\\'".to_string(),
        '\n' => "'\\n'".to_string(),
        '\t' => "'\\t'".to_string(),
        c => format!("'{}'", c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;
    use crate::oracle;
    use std::collections::BTreeSet;

    /// The Dyck machine: read '(', push; read ')', pop; accept at q0 with an
    /// empty stack.
    pub(crate) fn dyck() -> PdAnn {
        parse_pdann(
            "states: q0 p1 p2\nstack: g\ninitial: q0\nfinal: q0\n\
             read: q0 '(' p1\npush: p1 q0 g\nread: q0 ')' p2\npop: p2 g q0\n",
        )
        .unwrap()
    }

    /// Dyck variant where '(' may optionally be annotated with m.
    pub(crate) fn dyck_marked() -> PdAnn {
        parse_pdann(
            "states: q0 p1 p2\nstack: g\ninitial: q0\nfinal: q0\n\
             read: q0 '(' p1\nreadw: q0 '(' m p1\npush: p1 q0 g\nread: q0 ')' p2\npop: p2 g q0\n",
        )
        .unwrap()
    }

    #[test]
    fn dyck_accepts_balanced_strings() {
        let p = dyck();
        for (w, want) in [("", 1), ("()", 1), ("(())", 1), ("()()", 1), ("(", 0), (")", 0), (")(", 0)] {
            let runs = brute_runs(&p, w, default_depth_cap(&p, w.len()));
            assert_eq!(runs.len(), want, "runs on {w:?}");
        }
    }

    #[test]
    fn dyck_profile_matches_hand_simulation() {
        let p = dyck();
        let runs = brute_runs(&p, "()", default_depth_cap(&p, 2));
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].profile, vec![0, 0, 1, 1, 0]);
    }

    #[test]
    fn run_search_terminates_under_push_loop() {
        let p = parse_pdann(
            "states: q0\nstack: g\ninitial: q0\nfinal: q0\npush: q0 q0 g\n",
        )
        .unwrap();
        let runs = brute_runs(&p, "", 40);
        assert_eq!(runs.len(), 1); // only the empty run accepts
    }

    #[test]
    fn grammar_to_pdann_single_rule() {
        let g = parse_grammar("start: S\nS -> 'a'").unwrap();
        let p = grammar_to_pdann(&g);
        assert_eq!(brute_runs(&p, "a", default_depth_cap(&p, 1)).len(), 1);
        assert_eq!(brute_runs(&p, "b", default_depth_cap(&p, 1)).len(), 0);
        assert_eq!(brute_runs(&p, "", default_depth_cap(&p, 0)).len(), 0);
        assert!(brute_runs(&p, "a", default_depth_cap(&p, 1))[0].output.is_empty());
    }

    #[test]
    fn grammar_to_pdann_matches_grammar_outputs() {
        let g = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        let p = grammar_to_pdann(&g);
        let runs = brute_runs(&p, "aa", default_depth_cap(&p, 2));
        let outs: BTreeSet<Output> = runs.iter().map(|r| r.output.clone()).collect();
        assert_eq!(outs.len(), 4);
        assert_eq!(runs.len(), 4, "one run per output for an unambiguous grammar");
        let want: BTreeSet<Output> = oracle::brute_outputs(&g, "aa").unwrap();
        assert_eq!(outs, want);
    }

    #[test]
    fn empty_language_grammar_has_no_runs() {
        let g = parse_grammar("start: S\nS -> S").unwrap();
        let p = grammar_to_pdann(&crate::grammar::trim_useless(&g));
        for w in ["", "a", "aa", "aaa", "aaaa"] {
            assert!(brute_runs(&p, w, 60).is_empty());
        }
    }

    #[test]
    fn pdann_to_grammar_round_trip() {
        let g = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        let p = grammar_to_pdann(&g);
        let g2 = pdann_to_grammar(&p);
        for w in ["", "a", "aa", "aaa"] {
            assert_eq!(
                oracle::brute_outputs(&g, w).unwrap(),
                oracle::brute_outputs(&g2, w).unwrap(),
                "round trip mismatch on {w:?}"
            );
        }
    }

    #[test]
    fn pdann_with_no_finals_gives_empty_language() {
        let p = parse_pdann("states: q0\ninitial: q0\nfinal:\nread: q0 'a' q0\n").unwrap();
        let g = pdann_to_grammar(&p);
        for w in ["", "a", "aa"] {
            assert!(oracle::brute_outputs(&g, w).unwrap().is_empty());
        }
    }

    #[test]
    fn dyck_machine_to_grammar_is_balanced_language() {
        let p = dyck();
        let g = pdann_to_grammar(&p);
        for w in ["", "()", "(())", "()()", "(()())"] {
            assert_eq!(oracle::brute_outputs(&g, w).unwrap().len(), 1, "should accept {w:?}");
        }
        for w in ["(", ")", ")(", "(()", "())"] {
            assert!(oracle::brute_outputs(&g, w).unwrap().is_empty(), "should reject {w:?}");
        }
    }

    #[test]
    fn appended_bottom_marker_does_not_accept_leftover_stack() {
        // a machine that reaches a final state with one symbol left on the
        // stack must still reject
        let p = parse_pdann(
            "states: q0 q1\nstack: g\ninitial: q0\nfinal: q1\npush: q0 q1 g\n",
        )
        .unwrap();
        assert!(brute_runs(&p, "", 10).is_empty());
        let g = pdann_to_grammar(&p);
        assert!(oracle::brute_outputs(&g, "").unwrap().is_empty());
    }

    #[test]
    fn det_modulo_profile_merges_parallel_reads() {
        let p = parse_pdann(
            "states: q0 q1 q2\ninitial: q0\nfinal: q1 q2\n\
             read: q0 'a' q1\nread: q0 'a' q2\n",
        )
        .unwrap();
        let d = det_modulo_profile(&p, 1000).unwrap();
        assert!(check_modulo_profile_conditions(&d));
        let runs = brute_runs(&d, "a", 20);
        assert_eq!(runs.len(), 1);
        // equivalent outputs
        let before: BTreeSet<Output> =
            brute_runs(&p, "a", 20).into_iter().map(|r| r.output).collect();
        let after: BTreeSet<Output> = runs.into_iter().map(|r| r.output).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn det_modulo_profile_preserves_profiles_and_outputs() {
        let p = dyck_marked();
        let d = det_modulo_profile(&p, 1000).unwrap();
        assert!(check_modulo_profile_conditions(&d));
        for w in ["", "()", "(())", "()()"] {
            let before = brute_runs(&p, w, default_depth_cap(&p, w.len()));
            let after = brute_runs(&d, w, default_depth_cap(&d, w.len()));
            let prof_b: BTreeSet<Vec<u32>> = before.iter().map(|r| r.profile.clone()).collect();
            let prof_a: BTreeSet<Vec<u32>> = after.iter().map(|r| r.profile.clone()).collect();
            assert_eq!(prof_b, prof_a, "profiles differ on {w:?}");
            let out_b: BTreeSet<Output> = before.iter().map(|r| r.output.clone()).collect();
            let out_a: BTreeSet<Output> = after.iter().map(|r| r.output.clone()).collect();
            assert_eq!(out_b, out_a, "outputs differ on {w:?}");
        }
    }

    #[test]
    fn check_deterministic_examples() {
        let p = strip_annotations(&dyck());
        assert!(check_deterministic(&p));

        let mixed = parse_pdann(
            "states: q0 q1\nstack: g\ninitial: q0\nfinal: q0\n\
             read: q0 'a' q1\npush: q0 q1 g\n",
        )
        .unwrap();
        assert!(!check_deterministic(&mixed));

        let dup = parse_pdann(
            "states: q0 q1 q2\ninitial: q0\nfinal: q1\n\
             read: q0 'a' q1\nread: q0 'a' q2\n",
        )
        .unwrap();
        assert!(!check_deterministic(&dup));
    }

    #[test]
    fn compute_profile_on_dyck() {
        let p = dyck();
        assert_eq!(compute_profile(&p, "()").unwrap(), vec![0, 0, 1, 1, 0]);
        assert_eq!(compute_profile(&p, "").unwrap(), vec![0]);
        assert!(matches!(compute_profile(&p, "("), Err(PdannError::NoRun)));
    }

    #[test]
    fn compute_profile_matches_brute_runs() {
        let p = dyck_marked();
        for w in ["", "()", "(())", "()()", "(()())"] {
            let runs = brute_runs(&p, w, default_depth_cap(&p, w.len()));
            let profiles: BTreeSet<Vec<u32>> = runs.iter().map(|r| r.profile.clone()).collect();
            assert_eq!(profiles.len(), 1, "machine should be profiled on {w:?}");
            let got = compute_profile(&p, w).unwrap();
            assert_eq!(&got, profiles.iter().next().unwrap());
        }
    }

    #[test]
    fn disambiguate_rigid_removes_duplicate_derivations() {
        let g = parse_grammar("start: S\nS -> 'a' | 'a'").unwrap();
        let d = disambiguate_rigid(&g, DEFAULT_SUBSET_CAP).unwrap();
        let c = oracle::count_derivations(&d, &[Terminal::plain('a')]);
        assert!(c.exactly(1));
        assert_eq!(
            oracle::brute_outputs(&g, "a").unwrap(),
            oracle::brute_outputs(&d, "a").unwrap()
        );
    }

    #[test]
    fn disambiguate_keeps_unambiguous_grammar_equivalent() {
        let g = parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap();
        let d = disambiguate_rigid(&g, DEFAULT_SUBSET_CAP).unwrap();
        for w in ["", "a", "aa", "aaa"] {
            assert_eq!(
                oracle::brute_outputs(&g, w).unwrap(),
                oracle::brute_outputs(&d, w).unwrap(),
                "mismatch on {w:?}"
            );
        }
        assert!(oracle::check_unambiguous_upto(&d, 4).unwrap().unambiguous);
    }

    #[test]
    fn enumerate_pdann_matches_run_search() {
        let p = dyck_marked();
        let outs: BTreeSet<Output> = enumerate_pdann(&p, "()", None).unwrap().into_iter().collect();
        let want: BTreeSet<Output> =
            brute_runs(&p, "()", default_depth_cap(&p, 2)).into_iter().map(|r| r.output).collect();
        assert_eq!(outs, want);
        assert_eq!(outs.len(), 2); // [] and [(1, m)]
        assert!(enumerate_pdann(&p, ")(", None).unwrap().is_empty());
    }

    #[test]
    fn pdann_format_round_trip() {
        let p = dyck_marked();
        let text = render_pdann(&p);
        let q = parse_pdann(&text).unwrap();
        assert_eq!(render_pdann(&q), text);
    }

    #[test]
    fn parse_pdann_rejects_undeclared_state() {
        let err = parse_pdann("states: q0\ninitial: q0\nfinal: q0\nread: q0 'a' q9\n").unwrap_err();
        assert!(matches!(err, ParseError::Undeclared { .. }));
    }
}
