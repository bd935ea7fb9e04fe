//! Benchmark domains and seeded instance generators.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{frame_chebyshev, BlockPose, Point};
use crate::symbolic::GoalSpec;
use crate::world::{
    block_name, Block, BlockId, PlannerConfig, Support, TableBounds, Workspace, WorldState, SHORT_HEIGHT,
    TALL_HEIGHT,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Op,
    Tower,
    TowerTool,
}

impl Domain {
    pub fn label(&self) -> &'static str {
        match self {
            Domain::Op => "OP",
            Domain::Tower => "Tower",
            Domain::TowerTool => "Tower-Tool",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Domain::Op => 1,
            Domain::Tower => 2,
            Domain::TowerTool => 3,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Op => "op",
            Domain::Tower => "tower",
            Domain::TowerTool => "tower-tool",
        })
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "op" => Ok(Domain::Op),
            "tower" => Ok(Domain::Tower),
            "tower-tool" | "towertool" | "tower_tool" => Ok(Domain::TowerTool),
            other => Err(format!("unknown domain '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub schema_version: u32,
    pub id: String,
    pub domain: Domain,
    pub x: usize,
    pub seed: u64,
    pub workspace: Workspace,
    pub world0: WorldState,
    pub goal: GoalSpec,
}

impl Instance {
    pub fn config(&self) -> PlannerConfig {
        PlannerConfig::for_workspace(self.workspace)
    }

    pub fn instance_id(domain: Domain, x: usize, seed: u64) -> String {
        format!("{domain}-{x:02}-s{seed:04}")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("need at least 2 blocks, got {0}")]
    TooFew(usize),
    #[error("could not place {x} blocks after {attempts} attempts")]
    GenerationExhausted { x: usize, attempts: usize },
}

const LAYOUT_ATTEMPTS: usize = 200;
const SAMPLE_ATTEMPTS: usize = 5_000;
/// Spacing of the packed neighbor grid around an obstructed-pick target.
const PACK_SPACING: f64 = 0.052;

/// Deterministic instance for `(domain, x, seed)`.
pub fn gen_instance(domain: Domain, x: usize, seed: u64) -> Result<Instance, GenError> {
    if x < 2 {
        return Err(GenError::TooFew(x));
    }
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((x as u64) << 8)
        .wrapping_add(domain.tag());
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    for _ in 0..LAYOUT_ATTEMPTS {
        let attempt = match domain {
            Domain::Op => gen_op(x, &mut rng),
            Domain::Tower => gen_tower(x, false, &mut rng),
            Domain::TowerTool => gen_tower(x, true, &mut rng),
        };
        if let Some((workspace, world0, goal)) = attempt {
            return Ok(Instance {
                schema_version: SCHEMA_VERSION,
                id: Instance::instance_id(domain, x, seed),
                domain,
                x,
                seed,
                workspace,
                world0,
                goal,
            });
        }
    }
    Err(GenError::GenerationExhausted { x, attempts: LAYOUT_ATTEMPTS })
}

fn table_block(id: usize, p: Point, height: f64, l: f64) -> Block {
    Block {
        id: BlockId(id),
        name: block_name(id),
        pose: BlockPose::new(p.x, p.y, 0.0, height, l),
        support: Support::Table,
    }
}

fn cheb(a: &Point, b: &Point) -> f64 {
    frame_chebyshev(a, b, 0.0)
}

/// Rejection-samples a point from `sample` that keeps `min_center` Chebyshev
/// distance to every point in `taken` and passes `accept`.
fn sample_free<R: Rng>(
    rng: &mut R,
    taken: &[Point],
    min_center: f64,
    mut sample: impl FnMut(&mut R) -> Point,
    accept: impl Fn(&Point) -> bool,
) -> Option<Point> {
    (0..SAMPLE_ATTEMPTS)
        .map(|_| sample(rng))
        .find(|p| taken.iter().all(|q| cheb(p, q) >= min_center) && accept(p))
}

/// A short target packed among taller blocks; `k` of them sit within grasp
/// clearance and have to be moved first.
fn gen_op(x: usize, rng: &mut ChaCha8Rng) -> Option<(Workspace, WorldState, GoalSpec)> {
    let ws = Workspace::default();
    let cfg = PlannerConfig::for_workspace(ws);
    let l = ws.block_size;
    let goal_point = Point::new(0.0, -0.35);
    let target = Point::new(rng.random_range(-0.2..0.2), rng.random_range(0.05..0.2));

    let others = x - 1;
    let k = ((others / 2).saturating_sub(rng.random_range(0..=1))).clamp(1, others.min(24));
    let mut ring: Vec<(i32, i32)> = (-2..=2)
        .flat_map(|i| (-2..=2).map(move |j| (i, j)))
        .filter(|&(i, j)| (i, j) != (0, 0))
        .collect();
    ring.shuffle(rng);

    let mut taken = vec![target];
    let mut blocks = vec![table_block(0, target, SHORT_HEIGHT, l)];
    for &(i, j) in ring.iter().take(k) {
        let p = target + PACK_SPACING * Point::new(i as f64, j as f64);
        blocks.push(table_block(blocks.len(), p, TALL_HEIGHT, l));
        taken.push(p);
    }
    // Far enough from the target not to obstruct it, and off the goal zone.
    let no_obstruct = l + cfg.grasp_clearance + 0.01;
    let (lo, hi) = (ws.table.x_min + 0.03, ws.table.x_max - 0.03);
    while blocks.len() < x {
        let p = sample_free(
            rng,
            &taken,
            l + 0.01,
            |r| Point::new(r.random_range(lo..hi), r.random_range(lo..hi)),
            |p| cheb(p, &target) >= no_obstruct && cheb(p, &goal_point) >= 0.2,
        )?;
        blocks.push(table_block(blocks.len(), p, TALL_HEIGHT, l));
        taken.push(p);
    }
    let world = WorldState::new(blocks);
    let goal = GoalSpec::new(vec![BlockId(0)], (goal_point.x, goal_point.y));
    Some((ws, world, goal))
}

/// Columns of one or two blocks scattered over the table; the goal is a
/// random stacking order at a point in front of the robot. With `tool`, the
/// table is enlarged and single blocks may lie beyond reach.
fn gen_tower(x: usize, tool: bool, rng: &mut ChaCha8Rng) -> Option<(Workspace, WorldState, GoalSpec)> {
    let ws = if tool {
        Workspace { table: TableBounds::centered(2.0, 2.0), ..Workspace::default() }
    } else {
        Workspace::default()
    };
    let cfg = PlannerConfig::for_workspace(ws);
    let l = ws.block_size;
    let slot = Point::new(rng.random_range(-0.15..0.15), -0.3);

    let mut order: Vec<usize> = (0..x).collect();
    order.shuffle(rng);
    // Stacked pairs, taken from disjoint goal positions.
    let n_stacks = if tool { (3 * x / 8).max(1) } else { (x / 4).max(1) };
    let mut positions: Vec<usize> = (0..x).collect();
    positions.shuffle(rng);
    let mut columns: Vec<Vec<usize>> = Vec::new();
    let mut used = vec![false; x];
    for pair in positions.chunks(2).take(n_stacks) {
        let (mut i, mut j) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        // Tool instances always stack an earlier goal block under a later
        // one, which forces a temporary relocation.
        if !tool && rng.random_bool(0.5) {
            std::mem::swap(&mut i, &mut j);
        }
        columns.push(vec![order[i], order[j]]);
        used[order[i]] = true;
        used[order[j]] = true;
    }
    for b in 0..x {
        if !used[b] {
            columns.push(vec![b]);
        }
    }
    columns.shuffle(rng);

    let heights: Vec<f64> = (0..x)
        .map(|_| if rng.random_bool(0.3) { TALL_HEIGHT } else { SHORT_HEIGHT })
        .collect();
    let spacing = l + cfg.grasp_clearance + 0.01;
    let reach = ws.reach;
    let mut taken: Vec<Point> = Vec::new();
    let mut any_far = false;
    let mut slots_for: Vec<Point> = Vec::new();
    let forced = columns.iter().position(|c| c.len() == 1);
    for (ci, col) in columns.iter().enumerate() {
        let single = col.len() == 1;
        let far = tool && single && (forced == Some(ci) || rng.random_bool(0.6));
        let p = if far {
            let edge = ws.table.x_max - 0.06;
            sample_free(
                rng,
                &taken,
                spacing,
                |r| {
                    let ang = r.random_range(0.0..std::f64::consts::TAU);
                    let rad = r.random_range(0.85..1.05);
                    Point::new((rad * ang.cos()).clamp(-edge, edge), (rad * ang.sin()).clamp(-edge, edge))
                },
                |p| !reach.contains(p),
            )?
        } else {
            let half = if tool { 0.35 } else { ws.table.x_max - 0.03 };
            sample_free(
                rng,
                &taken,
                spacing,
                |r| Point::new(r.random_range(-half..half), r.random_range(-half..half)),
                |p| cheb(p, &slot) >= 0.2 && reach.contains(p),
            )?
        };
        any_far |= far;
        taken.push(p);
        slots_for.push(p);
    }
    if tool && !any_far {
        return None;
    }

    let mut blocks: Vec<Option<Block>> = vec![None; x];
    for (col, p) in columns.iter().zip(&slots_for) {
        for (level, &b) in col.iter().enumerate() {
            let support = if level == 0 { Support::Table } else { Support::Block(BlockId(col[level - 1])) };
            blocks[b] = Some(Block {
                id: BlockId(b),
                name: block_name(b),
                pose: BlockPose::new(p.x, p.y, 0.0, heights[b], l),
                support,
            });
        }
    }
    let world = WorldState::new(blocks.into_iter().map(|b| b.expect("every block placed")).collect());
    let goal = GoalSpec::new(order.into_iter().map(BlockId).collect(), (slot.x, slot.y));
    Some((ws, world, goal))
}
