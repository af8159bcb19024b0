//! Annotated context-free grammars: data model, text format, trimming,
//! and the arity-two normal form consumed by the evaluator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Index into a grammar's nonterminal table.
pub type NtId = usize;
/// Index into a grammar's annotation table.
pub type AnnId = usize;

/// A terminal: one alphabet letter, optionally carrying an annotation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Terminal {
    pub letter: char,
    pub ann: Option<AnnId>,
}

impl Terminal {
    pub fn plain(letter: char) -> Self {
        Terminal { letter, ann: None }
    }

    pub fn annotated(letter: char, ann: AnnId) -> Self {
        Terminal { letter, ann: Some(ann) }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Symbol {
    Nt(NtId),
    Term(Terminal),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Rule {
    pub lhs: NtId,
    pub rhs: Vec<Symbol>,
}

/// An annotated context-free grammar: nonterminals, a single-character
/// alphabet, a finite annotation set, a rule list (duplicates allowed),
/// and a start symbol.
///
/// Values are immutable once built through [`parse_grammar`] or the
/// conversion passes; every operation returns a fresh grammar.
#[derive(Clone, Debug)]
pub struct AnnotatedGrammar {
    nonterminals: Vec<String>,
    annotations: Vec<String>,
    alphabet: BTreeSet<char>,
    rules: Vec<Rule>,
    start: NtId,
}

impl AnnotatedGrammar {
    pub fn new(start_name: &str) -> Self {
        AnnotatedGrammar {
            nonterminals: vec![start_name.to_string()],
            annotations: Vec::new(),
            alphabet: BTreeSet::new(),
            rules: Vec::new(),
            start: 0,
        }
    }

    /// Intern a nonterminal name, returning its id.
    pub fn nt(&mut self, name: &str) -> NtId {
        if let Some(i) = self.nonterminals.iter().position(|n| n == name) {
            return i;
        }
        self.nonterminals.push(name.to_string());
        self.nonterminals.len() - 1
    }

    /// Intern an annotation name, returning its id.
    pub fn ann(&mut self, name: &str) -> AnnId {
        if let Some(i) = self.annotations.iter().position(|n| n == name) {
            return i;
        }
        self.annotations.push(name.to_string());
        self.annotations.len() - 1
    }

    pub fn add_rule(&mut self, lhs: NtId, rhs: Vec<Symbol>) {
        for s in &rhs {
            if let Symbol::Term(t) = s {
                self.alphabet.insert(t.letter);
            }
        }
        self.rules.push(Rule { lhs, rhs });
    }

    pub fn set_start(&mut self, start: NtId) {
        self.start = start;
    }

    pub fn start(&self) -> NtId {
        self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn nonterminal_count(&self) -> usize {
        self.nonterminals.len()
    }

    pub fn nt_name(&self, id: NtId) -> &str {
        &self.nonterminals[id]
    }

    pub fn nt_names(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn annotation_count(&self) -> usize {
        self.annotations.len()
    }

    pub fn ann_name(&self, id: AnnId) -> &str {
        &self.annotations[id]
    }

    pub fn ann_names(&self) -> &[String] {
        &self.annotations
    }

    pub fn alphabet(&self) -> &BTreeSet<char> {
        &self.alphabet
    }

    /// Total size of the grammar, measured as the sum of rule lengths
    /// (right-hand side length plus one per rule).
    pub fn size(&self) -> usize {
        self.rules.iter().map(|r| r.rhs.len() + 1).sum()
    }

    fn fresh_nt(&mut self, base: &str, counter: &mut usize) -> NtId {
        loop {
            *counter += 1;
            let name = format!("{}_{}", base, counter);
            if !self.nonterminals.iter().any(|n| *n == name) {
                self.nonterminals.push(name);
                return self.nonterminals.len() - 1;
            }
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: duplicate start declaration")]
    DuplicateStart { line: usize },
    #[error("line {line}: undeclared symbol `{name}`")]
    Undeclared { line: usize, name: String },
    #[error("grammar has no rules and no start declaration")]
    NoStart,
}

pub(crate) struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    src: std::marker::PhantomData<&'a str>,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(line_text: &'a str, line: usize) -> Self {
        Cursor { chars: line_text.chars().collect(), pos: 0, line, src: std::marker::PhantomData }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c == ' ' || c == '\t') {
            self.pos += 1;
        }
    }

    fn col(&self) -> usize {
        self.pos + 1
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, col: self.col(), msg: msg.into() }
    }

    fn ident(&mut self) -> Option<String> {
        let c = self.peek()?;
        if !c.is_ascii_alphabetic() {
            return None;
        }
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                s.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        Some(s)
    }

    /// Parse a quoted single-character literal: `'c'` with escapes
    /// `\'`, `\\`, `\n`, `\t`.
    fn char_literal(&mut self) -> Result<char, ParseError> {
        debug_assert_eq!(self.peek(), Some('\''));
        self.bump();
        let c = match self.bump() {
            None => return Err(self.err("unterminated character literal")),
            Some('\\') => match self.bump() {
                Some('\'') => '\'',
                Some('\\') => '\\',
                Some('n') => '\n',
                Some('t') => '\t',
                _ => return Err(self.err("unknown escape in character literal")),
            },
            Some('\'') => return Err(self.err("empty character literal")),
            Some(c) => c,
        };
        match self.bump() {
            Some('\'') => Ok(c),
            _ => Err(self.err("terminal literal must be a single character")),
        }
    }
}

/// Strip a `#` comment, ignoring `#` characters inside quoted literals.
fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if in_quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '\'' {
                in_quote = false;
            }
        } else if c == '\'' {
            in_quote = true;
        } else if c == '#' {
            return &line[..i];
        }
    }
    line
}

/// Parse the grammar text format.
///
/// `#` comments run to end of line. An optional `start: <Ident>` line names
/// the start symbol (default: lhs of the first rule). Rule lines are
/// `<Ident> -> alt ( '|' alt )*` where an alt is a space-separated sequence
/// of symbols, or the single token `_` for the empty right-hand side.
/// Symbols are `<Ident>` (nonterminal), `'c'` (terminal), or `'c'@<Ident>`
/// (annotated terminal). Nonterminals are declared by use.
pub fn parse_grammar(text: &str) -> Result<AnnotatedGrammar, ParseError> {
    let mut nonterminals: Vec<String> = Vec::new();
    let mut annotations: Vec<String> = Vec::new();
    let mut alphabet = BTreeSet::new();
    let mut raw_rules: Vec<(String, Vec<RawSymbol>)> = Vec::new();
    let mut start_decl: Option<String> = None;

    enum RawSymbol {
        Nt(String),
        Term(char, Option<String>),
    }

    let mut intern = |table: &mut Vec<String>, name: &str| -> usize {
        if let Some(i) = table.iter().position(|n| n == name) {
            i
        } else {
            table.push(name.to_string());
            table.len() - 1
        }
    };

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = strip_comment(raw_line);
        if body.trim().is_empty() {
            continue;
        }
        let mut cur = Cursor::new(body, line);
        cur.skip_ws();

        // `start:` declaration
        let save = cur.pos;
        if let Some(word) = cur.ident() {
            if word == "start" && cur.peek() == Some(':') {
                cur.bump();
                cur.skip_ws();
                let name = cur.ident().ok_or_else(|| cur.err("expected identifier after `start:`"))?;
                cur.skip_ws();
                if cur.peek().is_some() {
                    return Err(cur.err("unexpected trailing input after start declaration"));
                }
                if start_decl.is_some() {
                    return Err(ParseError::DuplicateStart { line });
                }
                intern(&mut nonterminals, &name);
                start_decl = Some(name);
                continue;
            }
            cur.pos = save;
        }

        // rule line
        let lhs = cur.ident().ok_or_else(|| cur.err("expected rule left-hand side"))?;
        intern(&mut nonterminals, &lhs);
        cur.skip_ws();
        if !(cur.peek() == Some('-')) {
            return Err(cur.err("expected `->`"));
        }
        cur.bump();
        if cur.peek() != Some('>') {
            return Err(cur.err("expected `->`"));
        }
        cur.bump();

        let mut alt: Vec<RawSymbol> = Vec::new();
        let mut saw_eps = false;
        loop {
            cur.skip_ws();
            match cur.peek() {
                None => {
                    if saw_eps && !alt.is_empty() {
                        return Err(cur.err("`_` must be the only token of an alternative"));
                    }
                    raw_rules.push((lhs.clone(), alt));
                    break;
                }
                Some('|') => {
                    cur.bump();
                    if saw_eps && !alt.is_empty() {
                        return Err(cur.err("`_` must be the only token of an alternative"));
                    }
                    raw_rules.push((lhs.clone(), std::mem::take(&mut alt)));
                    saw_eps = false;
                }
                Some('_') => {
                    cur.bump();
                    if let Some(c) = cur.peek() {
                        if c != ' ' && c != '\t' && c != '|' {
                            return Err(cur.err("unexpected character after `_`"));
                        }
                    }
                    saw_eps = true;
                }
                Some('\'') => {
                    let letter = cur.char_literal()?;
                    let ann = if cur.peek() == Some('@') {
                        cur.bump();
                        let name = cur.ident().ok_or_else(|| cur.err("expected annotation identifier after `@`"))?;
                        Some(name)
                    } else {
                        None
                    };
                    alphabet.insert(letter);
                    if let Some(a) = &ann {
                        intern(&mut annotations, a);
                    }
                    alt.push(RawSymbol::Term(letter, ann));
                }
                Some(c) if c.is_ascii_alphabetic() => {
                    let name = cur.ident().unwrap();
                    intern(&mut nonterminals, &name);
                    alt.push(RawSymbol::Nt(name));
                }
                Some(c) => return Err(cur.err(format!("unexpected character `{}`", c))),
            }
        }
    }

    let start_name = match start_decl {
        Some(s) => s,
        None => match raw_rules.first() {
            Some((lhs, _)) => lhs.clone(),
            None => return Err(ParseError::NoStart),
        },
    };

    let start = nonterminals.iter().position(|n| *n == start_name).unwrap();
    let mut g = AnnotatedGrammar {
        nonterminals,
        annotations: annotations.clone(),
        alphabet,
        rules: Vec::new(),
        start,
    };
    for (lhs, rhs) in raw_rules {
        let lhs = g.nonterminals.iter().position(|n| *n == lhs).unwrap();
        let rhs = rhs
            .into_iter()
            .map(|s| match s {
                RawSymbol::Nt(n) => {
                    let id = g.nonterminals.iter().position(|x| *x == n).unwrap();
                    Symbol::Nt(id)
                }
                RawSymbol::Term(letter, ann) => {
                    let ann = ann.map(|a| annotations.iter().position(|x| *x == a).unwrap());
                    Symbol::Term(Terminal { letter, ann })
                }
            })
            .collect();
        g.rules.push(Rule { lhs, rhs });
    }
    Ok(g)
}

fn render_letter(c: char, out: &mut String) {
    out.push('\'');
    match c {
        '\'' => out.push_str("\\'"),
        '\\' => out.push_str("\\\\"),
        '\n' => out.push_str("\\n"),
        '\t' => out.push_str("\\t"),
        c => out.push(c),
    }
    out.push('\'');
}

/// Render a grammar in the text format; inverse of [`parse_grammar`].
/// One rule line per nonterminal (in declaration order), alternatives
/// merged in rule order.
pub fn render(g: &AnnotatedGrammar) -> String {
    let mut out = String::new();
    out.push_str(&format!("start: {}\n", g.nt_name(g.start)));
    let mut by_lhs: BTreeMap<NtId, Vec<&Rule>> = BTreeMap::new();
    let mut lhs_order: Vec<NtId> = Vec::new();
    for r in &g.rules {
        if !by_lhs.contains_key(&r.lhs) {
            lhs_order.push(r.lhs);
        }
        by_lhs.entry(r.lhs).or_default().push(r);
    }
    // declaration order, not first-rule order
    lhs_order.sort_by_key(|id| *id);
    for lhs in lhs_order {
        out.push_str(g.nt_name(lhs));
        out.push_str(" ->");
        for (i, r) in by_lhs[&lhs].iter().enumerate() {
            if i > 0 {
                out.push_str(" |");
            }
            if r.rhs.is_empty() {
                out.push_str(" _");
            } else {
                for s in &r.rhs {
                    out.push(' ');
                    match s {
                        Symbol::Nt(id) => out.push_str(g.nt_name(*id)),
                        Symbol::Term(t) => {
                            render_letter(t.letter, &mut out);
                            if let Some(a) = t.ann {
                                out.push('@');
                                out.push_str(g.ann_name(a));
                            }
                        }
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

/// The set of nonterminals deriving the empty string: least fixed point of
/// "X is nullable if some rule X -> alpha has every symbol of alpha nullable".
pub fn compute_nullable(g: &AnnotatedGrammar) -> Vec<bool> {
    nullable_of_rules(g.nonterminal_count(), &g.rules)
}

pub(crate) fn nullable_of_rules(n_nts: usize, rules: &[Rule]) -> Vec<bool> {
    let mut nullable = vec![false; n_nts];
    let mut changed = true;
    while changed {
        changed = false;
        for r in rules {
            if nullable[r.lhs] {
                continue;
            }
            let all = r.rhs.iter().all(|s| match s {
                Symbol::Nt(y) => nullable[*y],
                Symbol::Term(_) => false,
            });
            if all {
                nullable[r.lhs] = true;
                changed = true;
            }
        }
    }
    nullable
}

/// Remove nonterminals that derive no terminal string or are unreachable
/// from the start symbol, together with the rules mentioning them.
/// The language and the set of derivations are unchanged. If the start
/// symbol itself is useless, the result has an empty rule set.
pub fn trim_useless(g: &AnnotatedGrammar) -> AnnotatedGrammar {
    let n = g.nonterminal_count();

    // marking fixpoint from terminals
    let mut productive = vec![false; n];
    let mut changed = true;
    while changed {
        changed = false;
        for r in &g.rules {
            if productive[r.lhs] {
                continue;
            }
            let ok = r.rhs.iter().all(|s| match s {
                Symbol::Nt(y) => productive[*y],
                Symbol::Term(_) => true,
            });
            if ok {
                productive[r.lhs] = true;
                changed = true;
            }
        }
    }

    // marking fixpoint from the start symbol, over productive rules only
    let mut reachable = vec![false; n];
    reachable[g.start] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for r in &g.rules {
            if !reachable[r.lhs] || !productive[r.lhs] {
                continue;
            }
            if !r.rhs.iter().all(|s| match s {
                Symbol::Nt(y) => productive[*y],
                Symbol::Term(_) => true,
            }) {
                continue;
            }
            for s in &r.rhs {
                if let Symbol::Nt(y) = s {
                    if !reachable[*y] {
                        reachable[*y] = true;
                        changed = true;
                    }
                }
            }
        }
    }

    let keep: Vec<bool> = (0..n).map(|i| (productive[i] && reachable[i]) || i == g.start).collect();
    let mut remap = vec![usize::MAX; n];
    let mut nonterminals = Vec::new();
    for i in 0..n {
        if keep[i] {
            remap[i] = nonterminals.len();
            nonterminals.push(g.nonterminals[i].clone());
        }
    }

    let mut out = AnnotatedGrammar {
        nonterminals,
        annotations: Vec::new(),
        alphabet: BTreeSet::new(),
        rules: Vec::new(),
        start: remap[g.start],
    };
    let mut ann_remap: BTreeMap<AnnId, AnnId> = BTreeMap::new();
    for r in &g.rules {
        if !productive[r.lhs] || !reachable[r.lhs] {
            continue;
        }
        if !r.rhs.iter().all(|s| match s {
            Symbol::Nt(y) => productive[*y] && reachable[*y],
            Symbol::Term(_) => true,
        }) {
            continue;
        }
        let rhs = r
            .rhs
            .iter()
            .map(|s| match s {
                Symbol::Nt(y) => Symbol::Nt(remap[*y]),
                Symbol::Term(t) => {
                    let ann = t.ann.map(|a| {
                        *ann_remap.entry(a).or_insert_with(|| {
                            out.annotations.push(g.annotations[a].clone());
                            out.annotations.len() - 1
                        })
                    });
                    Symbol::Term(Terminal { letter: t.letter, ann })
                }
            })
            .collect();
        out.add_rule(remap[r.lhs], rhs);
    }
    out
}

/// A grammar in arity-two normal form: trimmed, every rule of shape
/// `X -> eps`, `X -> tau`, `X -> Y`, or `X -> Y Z`, together with the
/// nullable set, the unit table `D`, a topological order compatible with
/// `D`, and the `CRule` index of complex rules by their second symbol.
#[derive(Clone, Debug)]
pub struct Grammar2NF {
    base: AnnotatedGrammar,
    nullable: Vec<bool>,
    unit_table: Vec<Vec<NtId>>,
    topo_order: Vec<NtId>,
    topo_rank: Vec<usize>,
    crule: Vec<Vec<usize>>,
}

impl Grammar2NF {
    pub fn base(&self) -> &AnnotatedGrammar {
        &self.base
    }

    pub fn nullable(&self) -> &[bool] {
        &self.nullable
    }

    /// `D[Z]`: the nonterminals X with a rule `X -> Z`, or `X -> Y Z` /
    /// `X -> Z Y` where Y is nullable.
    pub fn unit_table(&self) -> &[Vec<NtId>] {
        &self.unit_table
    }

    /// Nonterminals ordered so that Z precedes every X in `D[Z]`.
    pub fn topo_order(&self) -> &[NtId] {
        &self.topo_order
    }

    pub fn topo_rank(&self) -> &[usize] {
        &self.topo_rank
    }

    /// `CRule[Z]`: indices of the rules `X -> Y Z`.
    pub fn crule(&self) -> &[Vec<usize>] {
        &self.crule
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("unit-rule cycle through {}", cycle.join(" -> "))]
pub struct UnitCycleError {
    /// Names of the nonterminals on one cycle of the unit relation.
    pub cycle: Vec<String>,
}

/// Compute `D`, a compatible topological order, and `CRule` for a grammar
/// whose rules are already in 2NF shape. Fails with [`UnitCycleError`] if
/// the relation `{(Z, X) : X in D[Z]}` is cyclic: a productive, reachable
/// unit cycle gives some annotated string infinitely many derivations.
pub fn build_unit_table(
    n_nts: usize,
    rules: &[Rule],
    nullable: &[bool],
) -> Result<(Vec<Vec<NtId>>, Vec<NtId>, Vec<Vec<usize>>), UnitCycleError> {
    let mut d: Vec<BTreeSet<NtId>> = vec![BTreeSet::new(); n_nts];
    let mut crule: Vec<Vec<usize>> = vec![Vec::new(); n_nts];
    for (ri, r) in rules.iter().enumerate() {
        match r.rhs.as_slice() {
            [Symbol::Nt(z)] => {
                d[*z].insert(r.lhs);
            }
            [Symbol::Nt(y), Symbol::Nt(z)] => {
                if nullable[*y] {
                    d[*z].insert(r.lhs);
                }
                if nullable[*z] {
                    d[*y].insert(r.lhs);
                }
                crule[*z].push(ri);
            }
            _ => {}
        }
    }

    // Kahn over edges Z -> X for X in D[Z], smallest id first for determinism.
    let mut indeg = vec![0usize; n_nts];
    for z in 0..n_nts {
        for &x in &d[z] {
            indeg[x] += 1;
        }
    }
    let mut ready: BTreeSet<NtId> = (0..n_nts).filter(|&i| indeg[i] == 0).collect();
    let mut topo = Vec::with_capacity(n_nts);
    while let Some(&z) = ready.iter().next() {
        ready.remove(&z);
        topo.push(z);
        for &x in &d[z] {
            indeg[x] -= 1;
            if indeg[x] == 0 {
                ready.insert(x);
            }
        }
    }
    if topo.len() != n_nts {
        return Err(UnitCycleError { cycle: find_unit_cycle(n_nts, &d, &indeg) });
    }
    Ok((d.into_iter().map(|s| s.into_iter().collect()).collect(), topo, crule))
}

fn find_unit_cycle(n_nts: usize, d: &[BTreeSet<NtId>], indeg: &[usize]) -> Vec<String> {
    // Walk within the residual subgraph until a node repeats.
    let residual: Vec<NtId> = (0..n_nts).filter(|&i| indeg[i] > 0).collect();
    let start = residual[0];
    let mut path = vec![start];
    let mut seen: BTreeMap<NtId, usize> = BTreeMap::new();
    seen.insert(start, 0);
    let mut cur = start;
    loop {
        let next = d[cur].iter().copied().find(|x| indeg[*x] > 0).unwrap();
        if let Some(&i) = seen.get(&next) {
            let mut cyc: Vec<String> = path[i..].iter().map(|x| format!("#{}", x)).collect();
            cyc.push(format!("#{}", next));
            return cyc;
        }
        seen.insert(next, path.len());
        path.push(next);
        cur = next;
    }
}

/// Convert to arity-two normal form. Long right-hand sides are chained
/// through fresh nonterminals; terminals inside length-2 right-hand sides
/// are lifted into fresh nonterminals. Semantics, derivation counts,
/// unambiguity, and rigidity are preserved; the result is linear in the
/// input size.
pub fn to_2nf(g: &AnnotatedGrammar) -> Result<Grammar2NF, UnitCycleError> {
    let mut g = trim_useless(g);
    let mut counter = 0usize;

    // chain long right-hand sides
    let rules = std::mem::take(&mut g.rules);
    let mut chained: Vec<Rule> = Vec::with_capacity(rules.len());
    for r in rules {
        if r.rhs.len() <= 2 {
            chained.push(r);
            continue;
        }
        let base = g.nonterminals[r.lhs].clone();
        let mut lhs = r.lhs;
        let n = r.rhs.len();
        for i in 0..n - 2 {
            let next = g.fresh_nt(&base, &mut counter);
            chained.push(Rule { lhs, rhs: vec![r.rhs[i], Symbol::Nt(next)] });
            lhs = next;
        }
        chained.push(Rule { lhs, rhs: vec![r.rhs[n - 2], r.rhs[n - 1]] });
    }

    // lift terminals out of length-2 right-hand sides; one fresh
    // nonterminal per distinct terminal
    let mut lift: BTreeMap<Terminal, NtId> = BTreeMap::new();
    let mut lifted_rules: Vec<Rule> = Vec::new();
    let mut rules2: Vec<Rule> = Vec::with_capacity(chained.len());
    for r in chained {
        if r.rhs.len() == 2 {
            let rhs = r
                .rhs
                .into_iter()
                .map(|s| match s {
                    Symbol::Nt(_) => s,
                    Symbol::Term(t) => {
                        let id = *lift.entry(t).or_insert_with(|| {
                            let base = format!("T_{}", sanitize_letter(t.letter));
                            let id = g.fresh_nt(&base, &mut counter);
                            lifted_rules.push(Rule { lhs: id, rhs: vec![Symbol::Term(t)] });
                            id
                        });
                        Symbol::Nt(id)
                    }
                })
                .collect();
            rules2.push(Rule { lhs: r.lhs, rhs });
        } else {
            rules2.push(r);
        }
    }
    rules2.extend(lifted_rules);
    g.rules = rules2;

    let nullable = nullable_of_rules(g.nonterminal_count(), &g.rules);
    let (unit_table, topo_order, crule) = build_unit_table(g.nonterminal_count(), &g.rules, &nullable)?;
    let mut topo_rank = vec![0usize; g.nonterminal_count()];
    for (rank, &nt) in topo_order.iter().enumerate() {
        topo_rank[nt] = rank;
    }
    Ok(Grammar2NF { base: g, nullable, unit_table, topo_order, topo_rank, crule })
}

fn sanitize_letter(c: char) -> String {
    if c.is_ascii_alphanumeric() {
        c.to_string()
    } else {
        format!("x{:x}", c as u32)
    }
}

impl fmt::Display for AnnotatedGrammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}
