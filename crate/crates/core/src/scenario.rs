//! Planning problem definition: grid, obstacles, starts and unlabeled goals.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{collision_free, Ellipsoid};
use crate::{Error, Result, Vec3};

/// Integer grid cell coordinate `(i, j, k)`.
pub type Cell = [i64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub cell_size: f64,
    /// Center of cell `(0, 0, 0)`.
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.iter()
            .zip(self.dims.iter())
            .all(|(&c, &d)| c >= 0 && (c as usize) < d)
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major linear index (x fastest).
    pub fn linear_index(&self, cell: Cell) -> usize {
        let [nx, ny, _] = self.dims;
        cell[0] as usize + nx * (cell[1] as usize + ny * cell[2] as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        let [nx, ny, _] = self.dims;
        [
            (index % nx) as i64,
            ((index / nx) % ny) as i64,
            (index / (nx * ny)) as i64,
        ]
    }

    /// Axis-aligned workspace box covering every cell completely.
    pub fn workspace_bounds(&self) -> (Vec3, Vec3) {
        let h = self.cell_size / 2.0;
        let o = Vec3::from(self.origin);
        let min = o - Vec3::repeat(h);
        let max = o + Vec3::new(
            (self.dims[0] as f64 - 0.5) * self.cell_size,
            (self.dims[1] as f64 - 0.5) * self.cell_size,
            (self.dims[2] as f64 - 0.5) * self.cell_size,
        );
        (min, max)
    }

    /// Manhattan diameter in cells.
    pub fn diameter(&self) -> usize {
        self.dims.iter().map(|d| d - 1).sum::<usize>().max(1)
    }
}

/// Center of `cell` in meters.
pub fn cell_to_position(grid: &GridSpec, cell: Cell) -> Result<Vec3> {
    if !grid.in_bounds(cell) {
        return Err(Error::OutOfBounds {
            cell,
            dims: grid.dims,
        });
    }
    Ok(cell_center(grid, cell))
}

pub(crate) fn cell_center(grid: &GridSpec, cell: Cell) -> Vec3 {
    Vec3::new(
        grid.origin[0] + cell[0] as f64 * grid.cell_size,
        grid.origin[1] + cell[1] as f64 * grid.cell_size,
        grid.origin[2] + cell[2] as f64 * grid.cell_size,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub grid: GridSpec,
    pub obstacles: BTreeSet<Cell>,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub robot_radii: [f64; 3],
    pub obstacle_radii: [f64; 3],
    pub dt: f64,
    pub degree: usize,
    pub continuity: usize,
    /// `weights[c - 1]` multiplies the squared `c`-th derivative.
    pub weights: Vec<f64>,
    pub sample_count: usize,
    pub refine_iterations: usize,
}

pub const DEFAULT_DT: f64 = 0.5;
pub const DEFAULT_DEGREE: usize = 7;
pub const DEFAULT_CONTINUITY: usize = 4;
pub const DEFAULT_SAMPLE_COUNT: usize = 32;
pub const DEFAULT_REFINE_ITERATIONS: usize = 6;
pub const DEFAULT_ROBOT_RADII: [f64; 3] = [0.12, 0.12, 0.3];
pub const DEFAULT_OBSTACLE_RADII: [f64; 3] = [0.15, 0.15, 0.15];

/// Acceleration and snap weighted equally; falls back to velocity when
/// neither is constrained.
pub fn default_weights(continuity: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (1..=continuity)
        .map(|c| if c == 2 || c == 4 { 1.0 } else { 0.0 })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        if let Some(first) = w.first_mut() {
            *first = 1.0;
        }
    }
    w
}

/// On-disk layout; optional keys take the documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    grid: GridSpec,
    #[serde(default)]
    obstacles: Vec<Cell>,
    starts: Vec<Cell>,
    goals: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radii: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    obstacle_radii: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    continuity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    refine_iterations: Option<usize>,
}

impl ScenarioSpec {
    /// Spec with all optional parameters at their defaults.
    pub fn new(grid: GridSpec, obstacles: impl IntoIterator<Item = Cell>, starts: Vec<Cell>, goals: Vec<Cell>) -> Self {
        ScenarioSpec {
            grid,
            obstacles: obstacles.into_iter().collect(),
            starts,
            goals,
            robot_radii: DEFAULT_ROBOT_RADII,
            obstacle_radii: DEFAULT_OBSTACLE_RADII,
            dt: DEFAULT_DT,
            degree: DEFAULT_DEGREE,
            continuity: DEFAULT_CONTINUITY,
            weights: default_weights(DEFAULT_CONTINUITY),
            sample_count: DEFAULT_SAMPLE_COUNT,
            refine_iterations: DEFAULT_REFINE_ITERATIONS,
        }
    }

    pub fn robot_count(&self) -> usize {
        self.starts.len()
    }

    pub fn robot_ellipsoid(&self) -> Ellipsoid {
        Ellipsoid::new(self.robot_radii)
    }

    pub fn obstacle_ellipsoid(&self) -> Ellipsoid {
        Ellipsoid::new(self.obstacle_radii)
    }

    pub fn start_positions(&self) -> Vec<Vec3> {
        self.starts.iter().map(|&c| cell_center(&self.grid, c)).collect()
    }

    pub fn goal_positions(&self) -> Vec<Vec3> {
        self.goals.iter().map(|&c| cell_center(&self.grid, c)).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let continuity = file.continuity.unwrap_or(DEFAULT_CONTINUITY);
        let spec = ScenarioSpec {
            grid: file.grid,
            obstacles: file.obstacles.into_iter().collect(),
            starts: file.starts,
            goals: file.goals,
            robot_radii: file.radii.unwrap_or(DEFAULT_ROBOT_RADII),
            obstacle_radii: file.obstacle_radii.unwrap_or(DEFAULT_OBSTACLE_RADII),
            dt: file.dt.unwrap_or(DEFAULT_DT),
            degree: file.degree.unwrap_or(DEFAULT_DEGREE),
            continuity,
            weights: file.weights.unwrap_or_else(|| default_weights(continuity)),
            sample_count: file.sample_count.unwrap_or(DEFAULT_SAMPLE_COUNT),
            refine_iterations: file.refine_iterations.unwrap_or(DEFAULT_REFINE_ITERATIONS),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            grid: self.grid.clone(),
            obstacles: self.obstacles.iter().copied().collect(),
            starts: self.starts.clone(),
            goals: self.goals.clone(),
            radii: Some(self.robot_radii),
            obstacle_radii: Some(self.obstacle_radii),
            dt: Some(self.dt),
            degree: Some(self.degree),
            continuity: Some(self.continuity),
            weights: Some(self.weights.clone()),
            sample_count: Some(self.sample_count),
            refine_iterations: Some(self.refine_iterations),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    /// Check every invariant, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        let g = &self.grid;
        if g.dims.iter().any(|&d| d == 0) {
            return bad(format!("grid dims {:?} must be >= 1 on every axis", g.dims));
        }
        if !(g.cell_size > 0.0 && g.cell_size.is_finite()) {
            return bad(format!("cell_size {} must be positive", g.cell_size));
        }
        let [rx, ry, rz] = self.robot_radii;
        if !(rx > 0.0 && ry > 0.0 && rz > 0.0) {
            return bad(format!("robot radii {:?} must be positive", self.robot_radii));
        }
        if rx != ry {
            return bad(format!("robot radii must satisfy r_x = r_y (got {rx} and {ry})"));
        }
        if self.obstacle_radii.iter().any(|&r| !(r > 0.0)) {
            return bad(format!("obstacle radii {:?} must be positive", self.obstacle_radii));
        }
        if g.cell_size <= 2.0 * rx {
            return bad(format!(
                "cell_size {} must exceed 2*r_x = {}",
                g.cell_size,
                2.0 * rx
            ));
        }
        for &c in &self.obstacles {
            if !g.in_bounds(c) {
                return bad(format!("obstacle cell {c:?} outside grid"));
            }
        }
        if self.starts.is_empty() {
            return bad("at least one robot is required".into());
        }
        if self.starts.len() != self.goals.len() {
            return bad(format!(
                "{} starts but {} goals",
                self.starts.len(),
                self.goals.len()
            ));
        }
        for (what, cells) in [("start", &self.starts), ("goal", &self.goals)] {
            let mut seen = BTreeSet::new();
            for &c in cells.iter() {
                if !g.in_bounds(c) {
                    return bad(format!("{what} cell {c:?} outside grid"));
                }
                if self.obstacles.contains(&c) {
                    return bad(format!("{what} cell {c:?} is inside an obstacle"));
                }
                if !seen.insert(c) {
                    return bad(format!("duplicate {what} cell {c:?}"));
                }
            }
            let e = self.robot_ellipsoid();
            for (i, &a) in cells.iter().enumerate() {
                for &b in &cells[i + 1..] {
                    if !collision_free(&cell_center(g, a), &cell_center(g, b), &e) {
                        return bad(format!(
                            "{what} cells {a:?} and {b:?} violate the ellipsoid separation"
                        ));
                    }
                }
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt {} must be positive", self.dt));
        }
        if self.continuity == 0 {
            return bad("continuity must be >= 1".into());
        }
        if self.degree < self.continuity + 1 {
            return bad(format!(
                "degree {} must be at least continuity + 1 = {}",
                self.degree,
                self.continuity + 1
            ));
        }
        if self.weights.len() != self.continuity {
            return bad(format!(
                "expected {} derivative weights, got {}",
                self.continuity,
                self.weights.len()
            ));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return bad(format!("weights {:?} must be nonnegative", self.weights));
        }
        if !self.weights.iter().any(|&w| w > 0.0) {
            return bad("at least one derivative weight must be positive".into());
        }
        if self.sample_count < 2 {
            return bad(format!("sample_count {} must be >= 2", self.sample_count));
        }
        Ok(())
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioSpec::from_json(&text)
}

pub fn save_scenario(spec: &ScenarioSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, spec.to_json()).map_err(|e| Error::io(path, e))
}

/// Axis-aligned obstacle box in meters, spanning whole cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleBox {
    pub min: Vec3,
    pub max: Vec3,
    /// Inclusive cell range covered by the box.
    pub cells: (Cell, Cell),
}

impl ObstacleBox {
    pub fn vertices(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }

    pub fn contains_cell(&self, c: Cell) -> bool {
        let (lo, hi) = self.cells;
        (0..3).all(|a| c[a] >= lo[a] && c[a] <= hi[a])
    }
}

/// Greedily merge obstacle cells into boxes: grow a run along +x, widen it
/// along +y while every covered row is still free, then stack along +z.
pub fn merge_obstacles(spec: &ScenarioSpec) -> Vec<ObstacleBox> {
    let grid = &spec.grid;
    let mut taken: BTreeSet<Cell> = BTreeSet::new();
    let available = |c: Cell, taken: &BTreeSet<Cell>| spec.obstacles.contains(&c) && !taken.contains(&c);
    let mut boxes = Vec::new();
    // BTreeSet iterates lexicographically by (i, j, k); sweep z-major instead.
    let mut order: Vec<Cell> = spec.obstacles.iter().copied().collect();
    order.sort_by_key(|c| (c[2], c[1], c[0]));
    for start in order {
        if taken.contains(&start) {
            continue;
        }
        let mut hi = start;
        while available([hi[0] + 1, start[1], start[2]], &taken) {
            hi[0] += 1;
        }
        let row_free = |x1: i64, y: i64, z: i64| (start[0]..=x1).all(|x| available([x, y, z], &taken));
        while row_free(hi[0], hi[1] + 1, start[2]) {
            hi[1] += 1;
        }
        while (start[1]..=hi[1]).all(|y| row_free(hi[0], y, hi[2] + 1)) {
            hi[2] += 1;
        }
        for z in start[2]..=hi[2] {
            for y in start[1]..=hi[1] {
                for x in start[0]..=hi[0] {
                    taken.insert([x, y, z]);
                }
            }
        }
        let h = Vec3::repeat(grid.cell_size / 2.0);
        boxes.push(ObstacleBox {
            min: cell_center(grid, start) - h,
            max: cell_center(grid, hi) + h,
            cells: (start, hi),
        });
    }
    boxes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dims: [usize; 3]) -> GridSpec {
        GridSpec {
            dims,
            cell_size: 0.5,
            origin: [0.0; 3],
        }
    }

    #[test]
    fn minimal_single_cell_file() {
        let text = r#"{"grid":{"dims":[1,1,1],"cell_size":0.5,"origin":[0,0,0]},
            "obstacles":[],"starts":[[0,0,0]],"goals":[[0,0,0]]}"#;
        let spec = ScenarioSpec::from_json(text).unwrap();
        assert_eq!(spec.robot_count(), 1);
        assert_eq!(spec.degree, 7);
        assert_eq!(spec.continuity, 4);
        assert_eq!(spec.weights, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(spec.sample_count, 32);
        assert_eq!(spec.robot_radii, [0.12, 0.12, 0.3]);
    }

    #[test]
    fn start_inside_obstacle_rejected() {
        let text = r#"{"grid":{"dims":[2,1,1],"cell_size":0.5,"origin":[0,0,0]},
            "obstacles":[[0,0,0]],"starts":[[0,0,0]],"goals":[[1,0,0]]}"#;
        let err = ScenarioSpec::from_json(text).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("inside an obstacle")), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"grid":{"dims":[1,1,1],"cell_size":0.5,"origin":[0,0,0]},
            "starts":[[0,0,0]],"goals":[[0,0,0]],"colour":"red"}"#;
        assert!(matches!(ScenarioSpec::from_json(text), Err(Error::Parse(_))));
    }

    #[test]
    fn small_cells_rejected() {
        let mut spec = ScenarioSpec::new(grid([2, 1, 1]), [], vec![[0, 0, 0]], vec![[1, 0, 0]]);
        spec.grid.cell_size = 0.24;
        assert!(spec.validate().is_err());
        spec.grid.cell_size = 0.25;
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn stacked_starts_rejected() {
        let spec = ScenarioSpec::new(
            grid([1, 1, 3]),
            [],
            vec![[0, 0, 0], [0, 0, 1]],
            vec![[0, 0, 0], [0, 0, 2]],
        );
        assert!(spec.validate().is_err());
    }

    #[test]
    fn cell_positions() {
        let g = grid([13, 1, 2]);
        assert_eq!(cell_to_position(&g, [0, 0, 0]).unwrap(), Vec3::zeros());
        assert_eq!(cell_to_position(&g, [2, 0, 1]).unwrap(), Vec3::new(1.0, 0.0, 0.5));
        assert!(matches!(
            cell_to_position(&g, [13, 0, 0]),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn merge_run_into_one_box() {
        let spec = ScenarioSpec::new(
            grid([4, 1, 1]),
            [[0, 0, 0], [1, 0, 0], [2, 0, 0]],
            vec![[3, 0, 0]],
            vec![[3, 0, 0]],
        );
        let boxes = merge_obstacles(&spec);
        assert_eq!(boxes.len(), 1);
        let ext = boxes[0].max - boxes[0].min;
        assert!((ext - Vec3::new(1.5, 0.5, 0.5)).norm() < 1e-12);
        assert!(merge_obstacles(&ScenarioSpec::new(grid([1, 1, 1]), [], vec![[0, 0, 0]], vec![[0, 0, 0]])).is_empty());
    }

    #[test]
    fn json_round_trip() {
        let spec = ScenarioSpec::new(
            grid([3, 3, 2]),
            [[1, 1, 0]],
            vec![[0, 0, 0], [2, 2, 1]],
            vec![[2, 0, 0], [0, 2, 1]],
        );
        let again = ScenarioSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
    }
}
