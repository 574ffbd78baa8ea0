//! Projection of a choreography onto a single participant, removability of
//! τ-transitions, and the τ-stripped automaton.
//!
//! Projection turns every interaction into that participant's send or
//! receive, and everything the participant is not involved in into a τ
//! step. Stripping then removes the τ-transitions that do not affect the
//! participant's choices, so that the product of the stripped projections
//! reports only genuine coordination problems.

use std::collections::{BTreeMap, BTreeSet};

use crate::gchor::{GChor, Participant};
use crate::gia::{
    complete_language, interleave, substitute, tag, union, Gia, StateId, Transition,
};
use crate::pomsets::ActionLabel;

/// A projected automaton together with its entry and exit points; the
/// exit (connecting) state is where a sequential continuation attaches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionTriple {
    pub automaton: Gia,
    pub initial: StateId,
    pub connecting: StateId,
}

/// Projects `g` onto `a`. Every non-τ transition of the result records
/// which interaction (by preorder leaf index within `g`) produced it.
pub fn project(g: &GChor, a: &Participant) -> ProjectionTriple {
    let mut next_leaf = 0usize;
    let t = project_rec(g, a, &mut next_leaf);
    debug_assert_eq!(&t.initial, t.automaton.initial());
    debug_assert!(t.automaton.states().contains(&t.connecting));
    t
}

fn singleton(a: &Participant) -> BTreeSet<Participant> {
    BTreeSet::from([a.clone()])
}

fn leaf(a: &Participant, label: ActionLabel, origin: Option<usize>) -> ProjectionTriple {
    let s = StateId::atom("s");
    let e = StateId::atom("e");
    let mut aut = Gia::new(
        s.clone(),
        singleton(a),
        BTreeSet::from([(s.clone(), label.clone(), e.clone())]),
    )
    .expect("leaf projection is valid");
    if let Some(idx) = origin {
        aut.add_origin((s.clone(), label, e.clone()), BTreeSet::from([idx]));
    }
    ProjectionTriple { automaton: aut, initial: s, connecting: e }
}

fn project_rec(g: &GChor, a: &Participant, next_leaf: &mut usize) -> ProjectionTriple {
    match g {
        GChor::Empty => leaf(a, ActionLabel::Tau, None),
        GChor::Interaction { from, to, msg } => {
            let idx = *next_leaf;
            *next_leaf += 1;
            if a == from {
                leaf(a, ActionLabel::output(from, to, msg), Some(idx))
            } else if a == to {
                leaf(a, ActionLabel::input(from, to, msg), Some(idx))
            } else {
                leaf(a, ActionLabel::Tau, None)
            }
        }
        GChor::Seq(g1, g2) => {
            let t1 = project_rec(g1, a, next_leaf);
            let t2 = project_rec(g2, a, next_leaf);
            let a1 = tag(&t1.automaton, 1);
            let a2 = tag(&t2.automaton, 2);
            let i1 = t1.initial.tagged(1);
            let c1 = t1.connecting.tagged(1);
            let i2 = t2.initial.tagged(2);
            let c2 = t2.connecting.tagged(2);
            let glued = substitute(&a2, &i2, &c1).expect("tagged initial exists");
            ProjectionTriple { automaton: union(&a1, &glued), initial: i1, connecting: c2 }
        }
        GChor::Branch(g1, g2) => {
            let t1 = project_rec(g1, a, next_leaf);
            let t2 = project_rec(g2, a, next_leaf);
            let a1 = tag(&t1.automaton, 1);
            let a2 = tag(&t2.automaton, 2);
            let i1 = t1.initial.tagged(1);
            let c1 = t1.connecting.tagged(1);
            let i2 = t2.initial.tagged(2);
            let c2 = t2.connecting.tagged(2);
            let merged_init = substitute(&a2, &i2, &i1).expect("tagged initial exists");
            let merged = substitute(&merged_init, &c2, &c1).expect("tagged connecting exists");
            ProjectionTriple { automaton: union(&a1, &merged), initial: i1, connecting: c1 }
        }
        GChor::Par(g1, g2) => {
            let t1 = strip_projection(&project_rec(g1, a, next_leaf));
            let t2 = strip_projection(&project_rec(g2, a, next_leaf));
            let a1 = tag(&t1.automaton, 1);
            let a2 = tag(&t2.automaton, 2);
            let woven = interleave(&a1, &a2);
            let initial = StateId::pair(t1.initial.tagged(1), t2.initial.tagged(2));
            let connecting =
                StateId::pair(t1.connecting.tagged(1), t2.connecting.tagged(2));
            if initial == connecting {
                // Both operands collapsed to a point; restore a distinct
                // exit so downstream gluing cannot alias arm states.
                let tail = StateId::atom("pe");
                let mut transitions = woven.transitions().clone();
                transitions.insert((connecting.clone(), ActionLabel::Tau, tail.clone()));
                let mut aut =
                    Gia::new(initial.clone(), woven.group().clone(), transitions)
                        .expect("adding a fresh tail state preserves validity");
                for tr in woven.transitions() {
                    if let Some(leaves) = woven.origin(tr) {
                        aut.add_origin(tr.clone(), leaves.clone());
                    }
                }
                ProjectionTriple { automaton: aut, initial, connecting: tail }
            } else {
                ProjectionTriple { automaton: woven, initial, connecting }
            }
        }
    }
}

/// Strips the automaton and maps the entry and exit states through the
/// quotient.
pub fn strip_projection(t: &ProjectionTriple) -> ProjectionTriple {
    let classes = tau_classes(&t.automaton);
    let automaton = strip_with_classes(&t.automaton, &classes);
    ProjectionTriple {
        initial: class_state(&classes, &t.initial),
        connecting: class_state(&classes, &t.connecting),
        automaton,
    }
}

/// First visible actions: for each state, the non-τ labels reachable
/// through any (possibly empty) chain of τ-steps.
fn first_actions(g: &Gia) -> BTreeMap<StateId, BTreeSet<ActionLabel>> {
    let mut memo: BTreeMap<StateId, BTreeSet<ActionLabel>> = BTreeMap::new();
    fn go(g: &Gia, v: &StateId, memo: &mut BTreeMap<StateId, BTreeSet<ActionLabel>>) {
        if memo.contains_key(v) {
            return;
        }
        let mut firsts = BTreeSet::new();
        let steps: Vec<(ActionLabel, StateId)> =
            g.outgoing(v).map(|(_, l, t)| (l.clone(), t.clone())).collect();
        for (l, t) in steps {
            if l.is_tau() {
                go(g, &t, memo);
                firsts.extend(memo[&t].iter().cloned());
            } else {
                firsts.insert(l);
            }
        }
        memo.insert(v.clone(), firsts);
    }
    let states: Vec<StateId> = g.states().iter().cloned().collect();
    for v in &states {
        go(g, v, &mut memo);
    }
    memo
}

fn uniform_polarity(labels: &BTreeSet<ActionLabel>) -> bool {
    labels.iter().all(ActionLabel::is_output) || labels.iter().all(ActionLabel::is_input)
}

/// The core removability rule: a τ-step is redundant when the choices
/// visible before and after it cannot be told apart. If nothing visible
/// follows the τ, the source must offer nothing visible either (a τ that
/// skips pending communications is a real alternative and must stay).
/// Otherwise every first action around the choice must have one polarity,
/// so committing early loses no decision.
fn core_removable(
    source: &StateId,
    target: &StateId,
    firsts: &BTreeMap<StateId, BTreeSet<ActionLabel>>,
) -> bool {
    let after = &firsts[target];
    if after.is_empty() {
        firsts[source].is_empty()
    } else {
        uniform_polarity(&firsts[source])
    }
}

/// The removable τ-transitions of `g`: the core rule, refined by demoting
/// candidates whose merges would make the quotient cyclic. A visible
/// action trapped inside a class shows up as a self-loop; a detour
/// between two merged states through an outside state shows up as a
/// longer cycle. Either way the merge would manufacture behavior the
/// original automaton does not have, so those τ-steps stay.
fn removable_set(g: &Gia) -> BTreeSet<Transition> {
    let firsts = first_actions(g);
    let mut candidates: BTreeSet<Transition> = g
        .transitions()
        .iter()
        .filter(|(s, l, t)| l.is_tau() && core_removable(s, t, &firsts))
        .cloned()
        .collect();
    loop {
        let partition = partition_by(g, &candidates);
        let rep: BTreeMap<&StateId, usize> = partition
            .iter()
            .enumerate()
            .flat_map(|(i, class)| class.iter().map(move |v| (v, i)))
            .collect();
        let mut adjacency: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for tr in g.transitions() {
            let (s, _, t) = tr;
            // In-class candidate τ-edges are exactly what the quotient
            // drops; everything else becomes a quotient edge.
            if rep[s] == rep[t] && candidates.contains(tr) {
                continue;
            }
            adjacency.entry(rep[s]).or_default().insert(rep[t]);
        }
        let on_cycle = classes_on_cycles(partition.len(), &adjacency);
        if on_cycle.is_empty() {
            return candidates;
        }
        let before = candidates.len();
        candidates
            .retain(|(s, _, t)| !on_cycle.contains(&rep[s]) && !on_cycle.contains(&rep[t]));
        // Every quotient cycle passes through a merged class (the original
        // automaton is acyclic), and every merged class was built from at
        // least one candidate, so each round shrinks the set.
        assert!(candidates.len() < before, "demotion must make progress");
    }
}

/// Class indices that can reach themselves through at least one quotient
/// edge (self-loops included).
fn classes_on_cycles(
    class_count: usize,
    adjacency: &BTreeMap<usize, BTreeSet<usize>>,
) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for start in 0..class_count {
        let mut stack: Vec<usize> =
            adjacency.get(&start).into_iter().flatten().copied().collect();
        let mut seen = BTreeSet::new();
        while let Some(v) = stack.pop() {
            if v == start {
                out.insert(start);
                break;
            }
            if seen.insert(v) {
                stack.extend(adjacency.get(&v).into_iter().flatten().copied());
            }
        }
    }
    out
}

/// True iff the τ-transition `t` is removable in `g`.
pub fn removable_tau(g: &Gia, t: &Transition) -> bool {
    assert!(t.1.is_tau(), "removability is defined for τ-transitions only");
    assert!(g.transitions().contains(t), "transition not in the automaton");
    removable_set(g).contains(t)
}

fn partition_by(g: &Gia, merges: &BTreeSet<Transition>) -> Vec<BTreeSet<StateId>> {
    let states: Vec<&StateId> = g.states().iter().collect();
    let index: BTreeMap<&StateId, usize> =
        states.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut parent: Vec<usize> = (0..states.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for (s, _, t) in merges {
        let (a, b) = (find(&mut parent, index[s]), find(&mut parent, index[t]));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<StateId>> = BTreeMap::new();
    for (i, v) in states.iter().enumerate() {
        groups.entry(find(&mut parent, i)).or_default().insert((*v).clone());
    }
    groups.into_values().collect()
}

/// The partition of states by chains of removable τ-transitions.
pub fn tau_classes(g: &Gia) -> Vec<BTreeSet<StateId>> {
    partition_by(g, &removable_set(g))
}

fn class_state(classes: &[BTreeSet<StateId>], v: &StateId) -> StateId {
    let class = classes
        .iter()
        .find(|c| c.contains(v))
        .expect("every state belongs to a class");
    if class.len() == 1 {
        v.clone()
    } else {
        StateId::class(class.iter().cloned())
    }
}

fn strip_with_classes(g: &Gia, classes: &[BTreeSet<StateId>]) -> Gia {
    let map: BTreeMap<&StateId, StateId> = g
        .states()
        .iter()
        .map(|v| (v, class_state(classes, v)))
        .collect();
    let mut transitions = BTreeSet::new();
    for (s, l, t) in g.transitions() {
        let (cs, ct) = (map[s].clone(), map[t].clone());
        if cs == ct {
            // Only a τ may collapse onto its own class; a trapped visible
            // action would mean the removable set was computed wrong.
            assert!(l.is_tau(), "visible action inside a τ-class");
            continue;
        }
        transitions.insert((cs, l.clone(), ct));
    }
    let mut out = Gia::new(map[g.initial()].clone(), g.group().clone(), transitions)
        .expect("quotient of an acyclic automaton stays acyclic");
    for v in g.states() {
        out.states_mut_insert(map[v].clone());
    }
    for (tr, leaves) in g.origins_iter() {
        let (s, l, t) = tr;
        let (cs, ct) = (map[s].clone(), map[t].clone());
        if cs != ct {
            out.add_origin((cs, l.clone(), ct), leaves.clone());
        }
    }
    out
}

/// Quotient of `g` by its τ-classes; removable τ-transitions disappear,
/// non-removable ones survive between classes.
pub fn strip_tau(g: &Gia) -> Gia {
    strip_with_classes(g, &tau_classes(g))
}

/// True iff both automata accept the same complete (initial to sink)
/// τ-erased words.
pub fn language_equivalent(g1: &Gia, g2: &Gia) -> bool {
    complete_language(g1) == complete_language(g2)
}
