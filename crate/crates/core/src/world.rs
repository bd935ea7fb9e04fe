//! Geometric world state: blocks, their supports and the workspace they live in.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{frame_chebyshev, point_in_footprint, BlockPose, Point, ReachRegion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub usize);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", block_name(self.0))
    }
}

/// `A`..`Z`, then `B26`, `B27`, ...
pub fn block_name(index: usize) -> String {
    if index < 26 {
        ((b'A' + index as u8) as char).to_string()
    } else {
        format!("B{index}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Support {
    Table,
    Block(BlockId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub name: String,
    pub pose: BlockPose,
    pub support: Support,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl TableBounds {
    pub fn centered(width: f64, depth: f64) -> Self {
        TableBounds {
            x_min: -width / 2.0,
            x_max: width / 2.0,
            y_min: -depth / 2.0,
            y_max: depth / 2.0,
        }
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_max - self.x_min).hypot(self.y_max - self.y_min)
    }

    /// Whether a block of side `l` centered at `p` lies fully on the table.
    pub fn holds(&self, p: &Point, l: f64) -> bool {
        let h = l / 2.0 - 1e-12;
        p.x - h >= self.x_min && p.x + h <= self.x_max && p.y - h >= self.y_min && p.y + h <= self.y_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub table: TableBounds,
    pub reach: ReachRegion,
    /// Side length of every block.
    pub block_size: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            table: TableBounds::centered(1.0, 1.0),
            reach: ReachRegion::new((0.0, 0.0), 0.8, 8),
            block_size: 0.05,
        }
    }
}

pub const TALL_HEIGHT: f64 = 0.10;
pub const SHORT_HEIGHT: f64 = 0.05;

/// Tunable parameters shared by planners, baselines and the simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub workspace: Workspace,
    /// Inflation applied to obstacle footprints for placements; `l/2` by
    /// default (Minkowski sum of two equal squares), `0` treats the placed
    /// block as a point.
    pub obstacle_margin: f64,
    /// A strictly taller column closer than this gap blocks a grasp.
    pub grasp_clearance: f64,
    /// A table block this close to the goal point counts as standing on it.
    pub slot_tolerance: f64,
    pub node_budget: usize,
    pub level2_node_budget: usize,
    /// Nominal phase duration, metadata only.
    pub phase_duration: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self::for_workspace(Workspace::default())
    }
}

impl PlannerConfig {
    pub fn for_workspace(workspace: Workspace) -> Self {
        let l = workspace.block_size;
        PlannerConfig {
            workspace,
            obstacle_margin: l / 2.0,
            grasp_clearance: 1.5 * l,
            slot_tolerance: l / 4.0,
            node_budget: 100_000,
            level2_node_budget: 1_000_000,
            phase_duration: 1.0,
        }
    }

    /// `M = 2 × (table diagonal + l)`.
    pub fn big_m(&self) -> f64 {
        2.0 * (self.workspace.table.diagonal() + self.workspace.block_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub blocks: Vec<Block>,
}

impl WorldState {
    pub fn new(blocks: Vec<Block>) -> Self {
        debug_assert!(blocks.iter().enumerate().all(|(i, b)| b.id.0 == i));
        WorldState { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, id: BlockId) -> bool {
        id.0 < self.blocks.len()
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id.0]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut Block {
        &mut self.blocks[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.blocks.iter().map(|b| b.id)
    }

    pub fn position(&self, id: BlockId) -> Point {
        self.block(id).pose.center()
    }

    /// The block resting directly on `id`, if any.
    pub fn block_on(&self, id: BlockId) -> Option<BlockId> {
        self.blocks
            .iter()
            .find(|b| b.support == Support::Block(id))
            .map(|b| b.id)
    }

    pub fn is_free_on_top(&self, id: BlockId) -> bool {
        self.block_on(id).is_none()
    }

    /// Bottom block of the column containing `id`.
    pub fn column_base(&self, id: BlockId) -> BlockId {
        let mut cur = id;
        let mut guard = 0;
        while let Support::Block(lower) = self.block(cur).support {
            cur = lower;
            guard += 1;
            assert!(guard <= self.len(), "support cycle at {id}");
        }
        cur
    }

    /// Column above and including `base`, bottom first.
    pub fn column_from(&self, base: BlockId) -> Vec<BlockId> {
        let mut col = vec![base];
        while let Some(up) = self.block_on(*col.last().unwrap()) {
            col.push(up);
            assert!(col.len() <= self.len(), "support cycle above {base}");
        }
        col
    }

    pub fn column_top(&self, id: BlockId) -> BlockId {
        *self.column_from(id).last().unwrap()
    }

    /// Blocks stacked above `id`, nearest first.
    pub fn blocks_above(&self, id: BlockId) -> Vec<BlockId> {
        self.column_from(id)[1..].to_vec()
    }

    pub fn table_blocks(&self) -> impl Iterator<Item = &Block> + '_ {
        self.blocks.iter().filter(|b| b.support == Support::Table)
    }

    pub fn z_bottom(&self, id: BlockId) -> f64 {
        match self.block(id).support {
            Support::Table => 0.0,
            Support::Block(lower) => self.z_top(lower),
        }
    }

    pub fn z_top(&self, id: BlockId) -> f64 {
        self.z_bottom(id) + self.block(id).pose.height
    }

    /// Height of the column standing on the table block `base`.
    pub fn column_height(&self, base: BlockId) -> f64 {
        self.z_top(self.column_top(base))
    }

    /// Gap between the footprints of two columns (Chebyshev distance of the
    /// centers minus one block side, measured in the frame of `a`).
    pub fn footprint_gap(&self, a: BlockId, b: BlockId) -> f64 {
        let pa = self.block(a);
        let pb = self.block(b);
        frame_chebyshev(&pb.pose.center(), &pa.pose.center(), pa.pose.theta)
            - 0.5 * (pa.pose.size_l + pb.pose.size_l)
    }

    /// Columns whose top is strictly higher than the top of `id` and whose
    /// footprint lies within `clearance` of it. Returns the top block of each
    /// such column, nearest first.
    pub fn taller_neighbors(&self, id: BlockId, clearance: f64) -> Vec<BlockId> {
        let base = self.column_base(id);
        let my_top = self.z_top(id);
        let mut out: Vec<(f64, BlockId)> = self
            .table_blocks()
            .filter(|b| b.id != base)
            .filter_map(|b| {
                let gap = self.footprint_gap(id, b.id);
                (gap < clearance && self.column_height(b.id) > my_top + 1e-9)
                    .then(|| (gap, self.column_top(b.id)))
            })
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.into_iter().map(|(_, id)| id).collect()
    }

    /// Table block whose footprint contains `point` (inflated by `margin`).
    pub fn table_block_covering(&self, point: &Point, margin: f64) -> Option<BlockId> {
        self.table_blocks()
            .find(|b| point_in_footprint(&b.pose, point, margin))
            .map(|b| b.id)
    }

    /// Table block standing on the goal point, within `tol`.
    pub fn block_at_point(&self, point: &Point, tol: f64) -> Option<BlockId> {
        self.table_blocks()
            .find(|b| (b.pose.center() - point).norm() <= tol)
            .map(|b| b.id)
    }

    /// Support structure is a forest and stacked blocks are centered on their support.
    pub fn check_consistency(&self) -> Result<(), String> {
        for b in &self.blocks {
            let mut seen = 0;
            let mut cur = b.id;
            while let Support::Block(lower) = self.block(cur).support {
                if !self.contains(lower) {
                    return Err(format!("{} rests on unknown block", cur));
                }
                cur = lower;
                seen += 1;
                if seen > self.len() {
                    return Err(format!("support cycle through {}", b.id));
                }
            }
            let above: Vec<_> = self
                .blocks
                .iter()
                .filter(|o| o.support == Support::Block(b.id))
                .collect();
            if above.len() > 1 {
                return Err(format!("{} supports more than one block", b.id));
            }
            if let Support::Block(lower) = b.support {
                let d = (self.position(lower) - b.pose.center()).norm();
                if d > 1e-6 {
                    return Err(format!("{} is off-center on {} by {d}", b.id, lower));
                }
            }
        }
        Ok(())
    }

    /// Smallest footprint gap between any two table columns.
    pub fn min_table_gap(&self) -> f64 {
        let table: Vec<BlockId> = self.table_blocks().map(|b| b.id).collect();
        let mut gap = f64::INFINITY;
        for (i, &a) in table.iter().enumerate() {
            for &b in &table[i + 1..] {
                gap = gap.min(self.footprint_gap(a, b));
            }
        }
        gap
    }

    pub fn id_by_name(&self, name: &str) -> Option<BlockId> {
        self.blocks.iter().find(|b| b.name == name).map(|b| b.id)
    }
}

/// Builder used by generators, scenarios and tests.
#[derive(Default)]
pub struct WorldBuilder {
    blocks: Vec<Block>,
    size: f64,
}

impl WorldBuilder {
    pub fn new(block_size: f64) -> Self {
        WorldBuilder { blocks: Vec::new(), size: block_size }
    }

    /// Adds a block standing on the table and returns its id.
    pub fn on_table(&mut self, x: f64, y: f64, height: f64) -> BlockId {
        self.on_table_rotated(x, y, 0.0, height)
    }

    pub fn on_table_rotated(&mut self, x: f64, y: f64, theta: f64, height: f64) -> BlockId {
        let id = BlockId(self.blocks.len());
        self.blocks.push(Block {
            id,
            name: block_name(id.0),
            pose: BlockPose::new(x, y, theta, height, self.size),
            support: Support::Table,
        });
        id
    }

    pub fn on_block(&mut self, lower: BlockId, height: f64) -> BlockId {
        let id = BlockId(self.blocks.len());
        let lp = self.blocks[lower.0].pose;
        self.blocks.push(Block {
            id,
            name: block_name(id.0),
            pose: BlockPose::new(lp.x, lp.y, lp.theta, height, self.size),
            support: Support::Block(lower),
        });
        id
    }

    pub fn build(self) -> WorldState {
        WorldState::new(self.blocks)
    }
}
