//! Logical layer: predicates, actions and successor functions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point, ReachRegion};
use crate::world::{BlockId, Support, WorldState};

/// What a block rests on, as seen by the symbolic layer. `Slot` is the table
/// at the goal point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lower {
    Table,
    Slot,
    Block(BlockId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    PickPlace,
    ToolPull,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    /// On top of the column at the goal point, which currently holds `level` blocks.
    GoalSlot { level: usize },
    FreePlacement,
    ReachEntry,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub block: BlockId,
    pub target: Target,
}

impl Action {
    pub fn pick_place(block: BlockId, target: Target) -> Self {
        Action { kind: ActionKind::PickPlace, block, target }
    }

    pub fn to_slot(block: BlockId, level: usize) -> Self {
        Self::pick_place(block, Target::GoalSlot { level })
    }

    pub fn relocate(block: BlockId) -> Self {
        Self::pick_place(block, Target::FreePlacement)
    }

    pub fn pull(block: BlockId) -> Self {
        Action { kind: ActionKind::ToolPull, block, target: Target::ReachEntry }
    }

    /// Whether the placement point is a free decision variable.
    pub fn has_free_placement(&self) -> bool {
        matches!(self.target, Target::FreePlacement | Target::ReachEntry)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.target) {
            (ActionKind::ToolPull, _) => write!(f, "Pull[{}]", self.block),
            (_, Target::GoalSlot { level }) => write!(f, "Pick[{} #goal/{level}]", self.block),
            (_, Target::FreePlacement) => write!(f, "Pick[{} free]", self.block),
            (_, Target::ReachEntry) => write!(f, "Pick[{} reach]", self.block),
        }
    }
}

/// Stack `order` (bottom first) to build at `target`. A single-element
/// order is the obstructed-pick task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub order: Vec<BlockId>,
    pub target: (f64, f64),
}

impl GoalSpec {
    pub fn new(order: Vec<BlockId>, target: (f64, f64)) -> Self {
        let mut seen = BTreeSet::new();
        assert!(order.iter().all(|b| seen.insert(*b)), "goal stack repeats a block");
        GoalSpec { order, target }
    }

    pub fn target_point(&self) -> Point {
        Point::new(self.target.0, self.target.1)
    }

    pub fn level_of(&self, block: BlockId) -> Option<usize> {
        self.order.iter().position(|&b| b == block)
    }

    /// Number of goal levels already built in `s`, counted from the bottom.
    pub fn satisfied_levels(&self, s: &SymbolicState) -> usize {
        let mut expected = Lower::Slot;
        for (i, &b) in self.order.iter().enumerate() {
            if s.on.get(&b) != Some(&expected) {
                return i;
            }
            expected = Lower::Block(b);
        }
        self.order.len()
    }

    /// Geometric satisfaction: the bottom block stands on the goal point within
    /// `tol` and every other block rests on its predecessor.
    pub fn satisfied_by(&self, world: &WorldState, tol: f64) -> bool {
        let Some(&bottom) = self.order.first() else { return true };
        let b = world.block(bottom);
        if b.support != Support::Table || (b.pose.center() - self.target_point()).norm() > tol {
            return false;
        }
        self.order
            .windows(2)
            .all(|w| world.block(w[1]).support == Support::Block(w[0]))
    }

    /// Goal blocks not yet in their final position.
    pub fn pending(&self, s: &SymbolicState) -> Vec<BlockId> {
        self.order[self.satisfied_levels(s)..].to_vec()
    }
}

/// Grounded predicate set.
///
/// `clear(b)` holds when nothing rests on `b` and no strictly taller column
/// stands within the grasp clearance; the second part is tracked separately
/// in `obstructed` so that `succ` can maintain it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SymbolicState {
    pub on: BTreeMap<BlockId, Lower>,
    pub clear: BTreeSet<BlockId>,
    pub reachable: BTreeSet<BlockId>,
    pub holding: Option<BlockId>,
    pub obstructed: BTreeSet<BlockId>,
}

impl SymbolicState {
    pub fn blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.on.keys().copied()
    }

    pub fn nothing_on(&self, b: BlockId) -> bool {
        !self.on.values().any(|l| *l == Lower::Block(b))
    }

    pub fn block_on(&self, b: BlockId) -> Option<BlockId> {
        self.on
            .iter()
            .find(|(_, l)| **l == Lower::Block(b))
            .map(|(u, _)| *u)
    }

    /// Blocks standing at the goal point, bottom first.
    pub fn slot_chain(&self) -> Vec<BlockId> {
        let Some((&base, _)) = self.on.iter().find(|(_, l)| **l == Lower::Slot) else {
            return Vec::new();
        };
        let mut chain = vec![base];
        while let Some(up) = self.block_on(*chain.last().unwrap()) {
            chain.push(up);
            if chain.len() > self.on.len() {
                break;
            }
        }
        chain
    }

    /// Every block has one support and following supports never loops.
    pub fn is_forest(&self) -> bool {
        let mut below_count: BTreeMap<BlockId, usize> = BTreeMap::new();
        for l in self.on.values() {
            if let Lower::Block(b) = l {
                if !self.on.contains_key(b) {
                    return false;
                }
                *below_count.entry(*b).or_default() += 1;
            }
        }
        if below_count.values().any(|&c| c > 1) {
            return false;
        }
        if self.on.values().filter(|l| **l == Lower::Slot).count() > 1 {
            return false;
        }
        self.on.keys().all(|&start| {
            let mut cur = start;
            for _ in 0..=self.on.len() {
                match self.on[&cur] {
                    Lower::Block(next) => cur = next,
                    _ => return true,
                }
            }
            false
        })
    }
}

/// Grounds the geometric world into predicates.
pub fn abstract_state(
    world: &WorldState,
    reach: &ReachRegion,
    grasp_clearance: f64,
    slot: Option<(Point, f64)>,
) -> SymbolicState {
    let mut s = SymbolicState::default();
    for b in &world.blocks {
        let lower = match b.support {
            Support::Block(l) => Lower::Block(l),
            Support::Table => match slot {
                Some((p, tol)) if (b.pose.center() - p).norm() <= tol => Lower::Slot,
                _ => Lower::Table,
            },
        };
        s.on.insert(b.id, lower);
        if reach.contains(&b.pose.center()) {
            s.reachable.insert(b.id);
        }
    }
    for b in world.ids() {
        let free = world.is_free_on_top(b);
        let blocked = free && !world.taller_neighbors(b, grasp_clearance).is_empty();
        if blocked {
            s.obstructed.insert(b);
        }
        if free && !blocked {
            s.clear.insert(b);
        }
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precondition {
    Clear,
    Reachable,
    OutOfReach,
    NothingOnTop,
    SlotLevel,
    HandEmpty,
    KnownBlock,
}

impl fmt::Display for Precondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Precondition::Clear => "clear",
            Precondition::Reachable => "reachable",
            Precondition::OutOfReach => "out-of-reach",
            Precondition::NothingOnTop => "nothing-on-top",
            Precondition::SlotLevel => "slot-level",
            Precondition::HandEmpty => "hand-empty",
            Precondition::KnownBlock => "known-block",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolicError {
    #[error("{action} is inapplicable: precondition {violated} fails")]
    InapplicableAction { action: Action, violated: Precondition },
    #[error("target already satisfied")]
    AlreadySatisfied,
}

/// First violated precondition of `a` in `s`, if any.
pub fn check_preconditions(s: &SymbolicState, a: &Action) -> Option<Precondition> {
    if !s.on.contains_key(&a.block) {
        return Some(Precondition::KnownBlock);
    }
    if let Some(h) = s.holding {
        if h != a.block {
            return Some(Precondition::HandEmpty);
        }
    }
    match a.kind {
        ActionKind::ToolPull => {
            if s.reachable.contains(&a.block) {
                Some(Precondition::OutOfReach)
            } else if !s.nothing_on(a.block) {
                Some(Precondition::NothingOnTop)
            } else {
                None
            }
        }
        ActionKind::PickPlace => {
            if s.holding != Some(a.block) && !s.clear.contains(&a.block) {
                return Some(Precondition::Clear);
            }
            if !s.reachable.contains(&a.block) {
                return Some(Precondition::Reachable);
            }
            if let Target::GoalSlot { level } = a.target {
                let chain = s.slot_chain();
                if chain.len() != level || chain.last() == Some(&a.block) {
                    return Some(Precondition::SlotLevel);
                }
            }
            None
        }
    }
}

/// Symbolic transition.
pub fn succ(s: &SymbolicState, a: &Action) -> Result<SymbolicState, SymbolicError> {
    if let Some(violated) = check_preconditions(s, a) {
        return Err(SymbolicError::InapplicableAction { action: *a, violated });
    }
    let mut next = s.clone();
    let old = s.on[&a.block];
    let new_lower = match a.target {
        Target::GoalSlot { level } => {
            if level == 0 {
                Lower::Slot
            } else {
                Lower::Block(s.slot_chain()[level - 1])
            }
        }
        Target::FreePlacement | Target::ReachEntry => Lower::Table,
    };
    next.on.insert(a.block, new_lower);
    if let Lower::Block(prev) = old {
        if !next.obstructed.contains(&prev) {
            next.clear.insert(prev);
        }
    }
    if let Lower::Block(under) = new_lower {
        next.clear.remove(&under);
        next.obstructed.remove(&under);
    }
    next.holding = None;
    next.obstructed.remove(&a.block);
    next.clear.insert(a.block);
    next.reachable.insert(a.block);
    Ok(next)
}

/// Target of a backward step, grounded from a goal or a subgoal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TargetState {
    /// The stack `order` at the goal point.
    Stack(Vec<BlockId>),
    /// `block` no longer where it is now (off `from`, or moved on the table).
    Moved { block: BlockId, from: Lower },
    Reachable(BlockId),
}

/// Goal-oriented action that takes `s` one step toward `target`, ignoring
/// applicability. For stacks the lowest unsatisfied level comes first.
pub fn succ_dagger(s: &SymbolicState, target: &TargetState) -> Result<Action, SymbolicError> {
    match target {
        TargetState::Stack(order) => {
            let mut expected = Lower::Slot;
            for (level, &b) in order.iter().enumerate() {
                if s.on.get(&b) != Some(&expected) {
                    return Ok(Action::to_slot(b, level));
                }
                expected = Lower::Block(b);
            }
            Err(SymbolicError::AlreadySatisfied)
        }
        TargetState::Moved { block, from } => match (s.on.get(block), from) {
            (Some(cur), Lower::Block(_)) if cur != from => Err(SymbolicError::AlreadySatisfied),
            _ => Ok(Action::relocate(*block)),
        },
        TargetState::Reachable(b) => {
            if s.reachable.contains(b) {
                Err(SymbolicError::AlreadySatisfied)
            } else {
                Ok(Action::pull(*b))
            }
        }
    }
}

/// Every action whose symbolic preconditions hold in `s`.
pub fn applicable_actions(s: &SymbolicState) -> Vec<Action> {
    let level = s.slot_chain().len();
    let mut out = Vec::new();
    let candidates: Vec<BlockId> = match s.holding {
        Some(h) => vec![h],
        None => s.blocks().collect(),
    };
    for b in candidates {
        for a in [Action::to_slot(b, level), Action::relocate(b), Action::pull(b)] {
            if check_preconditions(s, &a).is_none() {
                out.push(a);
            }
        }
    }
    out
}
