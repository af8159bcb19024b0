//! The preprocessing phase: fill the interval table with enumerable sets
//! bottom-up over a 2NF grammar and return the set of all outputs, plus the
//! end-to-end evaluation driver. The fill is cubic in the string in general
//! and quadratic on rigid grammars thanks to the nonempty-cell lists.

use thiserror::Error;

use crate::ecs::{make_empty, make_eps, NodeStore, OutputLetter, SetHandle};
use crate::grammar::{
    to_2nf, trim_useless, AnnotatedGrammar, Grammar2NF, Symbol, UnitCycleError,
};

/// One enumerated output: (position, annotation id) pairs sorted by
/// position. Positions are 1-based.
pub type Output = Vec<(u32, u32)>;

/// Render an output as one JSONL line: a JSON array of
/// `[position, "annotation"]` pairs; the empty output is `[]`.
pub fn output_jsonl(out: &Output, ann_names: &[String]) -> String {
    if out.is_empty() {
        return "[]".to_string();
    }
    let mut s = String::from("[");
    for (i, (pos, ann)) in out.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("[{},\"{}\"]", pos, json_escape(&ann_names[*ann as usize])));
    }
    s.push(']');
    s
}

pub(crate) fn json_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Instruction counters for the preprocessing phase.
#[derive(Clone, Copy, Default, Debug, PartialEq, Eq)]
pub struct OpCounters {
    pub base_inits: u64,
    pub d_copies: u64,
    pub product_combinations: u64,
    pub endin_appends: u64,
    pub nodes_created: u64,
}

impl OpCounters {
    /// JSON summary with stable field names.
    pub fn report(&self) -> String {
        format!(
            "{{\"baseInits\":{},\"dCopies\":{},\"productCombinations\":{},\"endinAppends\":{},\"nodesCreated\":{}}}",
            self.base_inits, self.d_copies, self.product_combinations, self.endin_appends, self.nodes_created
        )
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error(transparent)]
    UnitCycle(#[from] UnitCycleError),
    #[error("preprocess requires a nonempty input string")]
    EmptyInput,
}

/// Result of preprocessing: the frozen node store, the handle for the full
/// output set, and the instruction counters.
pub struct Evaluation {
    store: NodeStore,
    root: SetHandle,
    counters: OpCounters,
    /// annotation names of the (normalized) grammar, for rendering
    ann_names: Vec<String>,
}

impl Evaluation {
    pub fn counters(&self) -> &OpCounters {
        &self.counters
    }

    pub fn node_count(&self) -> usize {
        self.store.node_count()
    }

    pub fn root(&self) -> SetHandle {
        self.root
    }

    pub fn store(&self) -> &NodeStore {
        &self.store
    }

    pub fn ann_names(&self) -> &[String] {
        &self.ann_names
    }

    /// Stream the outputs. Multiple iterators may run concurrently.
    pub fn iter(&self) -> OutputIter<'_> {
        OutputIter { inner: self.store.enumerate(self.root) }
    }

    /// Collect outputs, stopping after `limit` when given. Preprocessing has
    /// already run in full; the limit only bounds the enumeration phase.
    pub fn outputs(&self, limit: Option<usize>) -> Vec<Output> {
        let it = self.iter();
        match limit {
            Some(k) => it.take(k).collect(),
            None => it.collect(),
        }
    }
}

/// Streaming output iterator with access to the delay instrumentation.
pub struct OutputIter<'a> {
    inner: crate::ecs::EnumIter<'a>,
}

impl<'a> OutputIter<'a> {
    /// Cumulative primitive enumeration steps, for delay measurements.
    pub fn steps(&self) -> u64 {
        self.inner.steps()
    }

    /// Live enumeration state size (tree nodes plus iterator stacks).
    pub fn state_size(&self) -> usize {
        self.inner.state_size()
    }
}

impl<'a> Iterator for OutputIter<'a> {
    type Item = Output;

    fn next(&mut self) -> Option<Output> {
        let letters = self.inner.next()?;
        let out: Output = letters.iter().map(|l| (l.pos, l.ann)).collect();
        debug_assert!(out.windows(2).all(|w| w[0].0 < w[1].0), "output not sorted by position");
        Some(out)
    }
}

/// Optional hook observing every product combination `(i, j, X, rule, k)`;
/// used by tests that check the rigid single-split invariant.
pub type ProductHook<'h> = &'h mut dyn FnMut(u32, u32, usize, usize, u32);

/// Run the preprocessing phase of the evaluation over a nonempty string.
pub fn preprocess(g2: &Grammar2NF, w: &[char]) -> Result<Evaluation, EvalError> {
    preprocess_with_hook(g2, w, None)
}

pub fn preprocess_with_hook(
    g2: &Grammar2NF,
    w: &[char],
    mut hook: Option<ProductHook<'_>>,
) -> Result<Evaluation, EvalError> {
    let n = w.len();
    if n == 0 {
        return Err(EvalError::EmptyInput);
    }
    let g = g2.base();
    let n_nts = g.nonterminal_count();
    let mut store = NodeStore::new();
    let mut counters = OpCounters::default();

    // I[i][j][X] addressed 1-based, i < j <= n+1
    let dim = n + 2;
    let idx = |i: usize, j: usize, x: usize| (i * dim + j) * n_nts + x;
    let mut table: Vec<SetHandle> = vec![make_empty(); dim * dim * n_nts];
    // endIn[j][X]: the i with I[i][j][X] nonempty
    let mut end_in: Vec<Vec<u32>> = vec![Vec::new(); dim * n_nts];

    // terminal rules grouped by letter
    let mut term_rules: Vec<(char, Option<usize>, usize)> = Vec::new();
    for r in g.rules() {
        if let [Symbol::Term(t)] = r.rhs.as_slice() {
            term_rules.push((t.letter, t.ann, r.lhs));
        }
    }

    macro_rules! mark_nonempty {
        ($i:expr, $j:expr, $x:expr, $was_empty:expr) => {
            if $was_empty && !table[idx($i, $j, $x)].is_empty() {
                end_in[$j * n_nts + $x].push($i as u32);
                counters.endin_appends += 1;
            }
        };
    }

    // base case: single-letter spans
    for i in 1..=n {
        for &(letter, ann, x) in &term_rules {
            if letter != w[i - 1] {
                continue;
            }
            let cell = idx(i, i + 1, x);
            let was_empty = table[cell].is_empty();
            let single = match ann {
                None => make_eps(),
                Some(a) => store.singleton(OutputLetter { pos: i as u32, ann: a as u32 }),
            };
            table[cell] = store.union(table[cell], single);
            counters.base_inits += 1;
            mark_nonempty!(i, i + 1, x, was_empty);
        }
    }

    // main fill: cells complete in order of (j asc, k desc, Z in topo order)
    for j in 1..=n + 1 {
        for k in (1..j).rev() {
            for &z in g2.topo_order() {
                let z_cell = table[idx(k, j, z)];
                if !z_cell.is_empty() {
                    for &x in &g2.unit_table()[z] {
                        let cell = idx(k, j, x);
                        let was_empty = table[cell].is_empty();
                        table[cell] = store.union(table[cell], z_cell);
                        counters.d_copies += 1;
                        mark_nonempty!(k, j, x, was_empty);
                    }
                    for &ri in &g2.crule()[z] {
                        let rule = &g.rules()[ri];
                        let x = rule.lhs;
                        let Symbol::Nt(y) = rule.rhs[0] else { unreachable!() };
                        let ends = std::mem::take(&mut end_in[k * n_nts + y]);
                        for &i in &ends {
                            let i = i as usize;
                            let y_cell = table[idx(i, k, y)];
                            let prod = store.product(y_cell, z_cell);
                            let cell = idx(i, j, x);
                            let was_empty = table[cell].is_empty();
                            table[cell] = store.union(table[cell], prod);
                            counters.product_combinations += 1;
                            if let Some(h) = hook.as_mut() {
                                h(i as u32, j as u32, x, ri, k as u32);
                            }
                            mark_nonempty!(i, j, x, was_empty);
                        }
                        end_in[k * n_nts + y] = ends;
                    }
                }
            }
        }
    }

    counters.nodes_created = store.node_count() as u64;
    let root = table[idx(1, n + 1, g.start())];
    Ok(Evaluation { store, root, counters, ann_names: g.ann_names().to_vec() })
}

/// Evaluate a grammar on a string: trim, normalize to 2NF, preprocess, and
/// expose the output set for enumeration. The empty input string is handled
/// directly: its only possible output is the empty annotation, present iff
/// the start symbol is nullable.
pub fn evaluate_prepared(g2: &Grammar2NF, w: &str) -> Result<Evaluation, EvalError> {
    let letters: Vec<char> = w.chars().collect();
    if letters.is_empty() {
        let root = if g2.nullable().get(g2.base().start()).copied().unwrap_or(false) {
            make_eps()
        } else {
            make_empty()
        };
        return Ok(Evaluation {
            store: NodeStore::new(),
            root,
            counters: OpCounters::default(),
            ann_names: g2.base().ann_names().to_vec(),
        });
    }
    preprocess(g2, &letters)
}

/// Normalize the grammar (trim + 2NF). Fails on unit cycles.
pub fn prepare(g: &AnnotatedGrammar) -> Result<Grammar2NF, EvalError> {
    Ok(to_2nf(&trim_useless(g))?)
}

/// One-call evaluation: returns the outputs, capped by `limit` if given.
/// Duplicates can appear only when the grammar is ambiguous.
pub fn evaluate(
    g: &AnnotatedGrammar,
    w: &str,
    limit: Option<usize>,
) -> Result<Vec<Output>, EvalError> {
    let g2 = prepare(g)?;
    Ok(evaluate_prepared(&g2, w)?.outputs(limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;
    use std::collections::BTreeSet;

    fn outputs_set(g: &AnnotatedGrammar, w: &str) -> BTreeSet<Output> {
        evaluate(g, w, None).unwrap().into_iter().collect()
    }

    fn g1() -> AnnotatedGrammar {
        parse_grammar("start: S\nS -> 'a'@x S | 'a' S | _").unwrap()
    }

    fn g2() -> AnnotatedGrammar {
        parse_grammar("start: S\nS -> '('@m S ')' S | '(' S ')' S | _").unwrap()
    }

    #[test]
    fn g1_on_aa_yields_four_outputs() {
        let outs = evaluate(&g1(), "aa", None).unwrap();
        assert_eq!(outs.len(), 4);
        let set: BTreeSet<Output> = outs.into_iter().collect();
        let want: BTreeSet<Output> =
            [vec![], vec![(1, 0)], vec![(2, 0)], vec![(1, 0), (2, 0)]].into_iter().collect();
        assert_eq!(set, want);
    }

    #[test]
    fn empty_string_output_iff_nullable() {
        let outs = evaluate(&g1(), "", None).unwrap();
        assert_eq!(outs, vec![Vec::new()]);

        let g = parse_grammar("start: S\nS -> 'a'").unwrap();
        assert!(evaluate(&g, "", None).unwrap().is_empty());
    }

    #[test]
    fn dyck_outputs() {
        let g = g2();
        let outs = outputs_set(&g, "()");
        let want: BTreeSet<Output> = [vec![], vec![(1, 0)]].into_iter().collect();
        assert_eq!(outs, want);
        assert_eq!(outputs_set(&g, "(())").len(), 4);
        assert!(outputs_set(&g, "(()").is_empty());
    }

    #[test]
    fn letter_outside_alphabet_gives_empty_set() {
        let outs = evaluate(&g1(), "az", None).unwrap();
        assert!(outs.is_empty());
    }

    #[test]
    fn limit_caps_enumeration_only() {
        let outs = evaluate(&g1(), "aaa", Some(3)).unwrap();
        assert_eq!(outs.len(), 3);
    }

    #[test]
    fn unit_cycle_is_rejected() {
        let g = parse_grammar("start: S\nS -> A | 'a'\nA -> S").unwrap();
        assert!(matches!(evaluate(&g, "a", None), Err(EvalError::UnitCycle(_))));
    }

    #[test]
    fn g3_outputs() {
        let g =
            parse_grammar("start: S\nS -> A 'b' | 'a' B\nA -> 'a'@x\nB -> 'b'@y").unwrap();
        let outs = outputs_set(&g, "ab");
        let want: BTreeSet<Output> = [vec![(1, 0)], vec![(2, 1)]].into_iter().collect();
        assert_eq!(outs, want);
    }

    #[test]
    fn unit_chain_cell_feeds_later_products() {
        // Y's single-letter cell only becomes nonempty through a unit copy;
        // the product for S -> Y Z must still see it in the nonempty list.
        let g = parse_grammar(
            "start: S\nS -> Y Z\nY -> W\nW -> 'a'@u\nZ -> 'b'@v",
        )
        .unwrap();
        let outs = outputs_set(&g, "ab");
        let want: BTreeSet<Output> = [vec![(1, 0), (2, 1)]].into_iter().collect();
        assert_eq!(outs, want);
    }

    #[test]
    fn no_duplicates_on_unambiguous_grammars() {
        let g = g2();
        for w in ["()", "()()", "(())", "(()())"] {
            let outs = evaluate(&g, w, None).unwrap();
            let set: BTreeSet<Output> = outs.iter().cloned().collect();
            assert_eq!(outs.len(), set.len(), "duplicates on {w}");
        }
    }

    #[test]
    fn counters_monotone_and_nonzero() {
        let g2nf = prepare(&g1()).unwrap();
        let e2 = evaluate_prepared(&g2nf, "aa").unwrap();
        let e4 = evaluate_prepared(&g2nf, "aaaa").unwrap();
        assert!(e2.counters().product_combinations >= 1);
        assert!(e4.counters().base_inits >= e2.counters().base_inits);
        assert!(e4.counters().d_copies >= e2.counters().d_copies);
        assert!(e4.counters().product_combinations >= e2.counters().product_combinations);
        assert!(e4.counters().endin_appends >= e2.counters().endin_appends);
        assert!(e4.counters().nodes_created >= e2.counters().nodes_created);
    }

    #[test]
    fn counters_report_fields() {
        let c = OpCounters::default();
        let r = c.report();
        for key in ["baseInits", "dCopies", "productCombinations", "endinAppends", "nodesCreated"] {
            assert!(r.contains(key));
        }
    }

    #[test]
    fn fresh_counters_are_zero() {
        let c = OpCounters::default();
        assert_eq!(
            (c.base_inits, c.d_copies, c.product_combinations, c.endin_appends, c.nodes_created),
            (0, 0, 0, 0, 0)
        );
    }

    #[test]
    fn jsonl_rendering() {
        let names = vec!["x".to_string()];
        assert_eq!(output_jsonl(&vec![], &names), "[]");
        assert_eq!(output_jsonl(&vec![(1, 0), (2, 0)], &names), "[[1,\"x\"],[2,\"x\"]]");
    }

    #[test]
    fn preprocess_rejects_empty_input() {
        let g2nf = prepare(&g1()).unwrap();
        assert!(matches!(preprocess(&g2nf, &[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn outputs_match_oracle_on_small_strings() {
        let g = g2();
        for w in ["", "(", "()", ")(", "(())", "()()", "((()))"] {
            let got = outputs_set(&g, w);
            let want = crate::oracle::brute_outputs(&g, w).unwrap();
            assert_eq!(got, want, "mismatch on {w:?}");
        }
    }
}
