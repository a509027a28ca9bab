//! Deep Sea Treasure on an arbitrary grid.
//!
//! Map text is one row per line with whitespace-separated cells:
//! `.` ocean, `#` sea bottom, `T<value>` treasure, `S` start (ocean).
//! Blank lines and lines starting with `;` are ignored.

use super::{Environment, ObservationMode, Step};
use crate::error::{MorlError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Ocean,
    SeaBottom,
    Treasure(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DstAction {
    Left = 0,
    Right = 1,
    Up = 2,
    Down = 3,
}

impl DstAction {
    pub const COUNT: usize = 4;
    pub const ALL: [DstAction; 4] = [DstAction::Left, DstAction::Right, DstAction::Up, DstAction::Down];

    fn delta(self) -> (isize, isize) {
        match self {
            DstAction::Left => (0, -1),
            DstAction::Right => (0, 1),
            DstAction::Up => (-1, 0),
            DstAction::Down => (1, 0),
        }
    }
}

impl TryFrom<usize> for DstAction {
    type Error = MorlError;

    fn try_from(a: usize) -> Result<Self> {
        DstAction::ALL
            .get(a)
            .copied()
            .ok_or(MorlError::InvalidAction { action: a, count: Self::COUNT })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DstMap {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    start: (usize, usize),
}

/// The 10-treasure default map shipped with the crate.
pub const DEFAULT_MAP: &str = include_str!("../../assets/dst_default.map");
/// A 6x6 map for quick convergence checks.
pub const SMALL_MAP: &str = include_str!("../../assets/dst_6x6.map");

impl DstMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        let mut start = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let mut width = 0;
            for tok in line.split_whitespace() {
                let cell = match tok {
                    "." => Cell::Ocean,
                    "#" => Cell::SeaBottom,
                    "S" => {
                        if start.replace((rows, width)).is_some() {
                            return Err(MorlError::Parse("more than one start cell".into()));
                        }
                        Cell::Ocean
                    }
                    t if t.starts_with('T') => {
                        let v: f64 = t[1..]
                            .parse()
                            .map_err(|_| MorlError::Parse(format!("bad treasure value `{t}`")))?;
                        if !v.is_finite() {
                            return Err(MorlError::Parse(format!("bad treasure value `{t}`")));
                        }
                        Cell::Treasure(v)
                    }
                    other => return Err(MorlError::Parse(format!("unknown cell `{other}` on row {rows}"))),
                };
                cells.push(cell);
                width += 1;
            }
            match cols {
                None => cols = Some(width),
                Some(c) if c != width => {
                    return Err(MorlError::Parse(format!("row {rows} has {width} cells, expected {c}")))
                }
                _ => {}
            }
            rows += 1;
        }
        let cols = cols.ok_or_else(|| MorlError::Parse("empty map".into()))?;
        let start = start.ok_or_else(|| MorlError::Parse("no start cell `S`".into()))?;
        if !cells.iter().any(|c| matches!(c, Cell::Treasure(_))) {
            return Err(MorlError::Parse("map has no treasure".into()));
        }
        Ok(DstMap { rows, cols, cells, start })
    }

    pub fn default_map() -> Self {
        DstMap::parse(DEFAULT_MAP).expect("bundled map is valid")
    }

    pub fn small_map() -> Self {
        DstMap::parse(SMALL_MAP).expect("bundled map is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn cell(&self, pos: (usize, usize)) -> Cell {
        self.cells[pos.0 * self.cols + pos.1]
    }

    /// All treasures as `(position, value)` in row-major order.
    pub fn treasures(&self) -> Vec<((usize, usize), f64)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match c {
                Cell::Treasure(v) => Some(((i / self.cols, i % self.cols), *v)),
                _ => None,
            })
            .collect()
    }

    /// Destination of `action` from `pos`; blocked moves stay in place.
    pub fn move_from(&self, pos: (usize, usize), action: DstAction) -> (usize, usize) {
        let (dr, dc) = action.delta();
        let r = pos.0 as isize + dr;
        let c = pos.1 as isize + dc;
        if r < 0 || c < 0 || r >= self.rows as isize || c >= self.cols as isize {
            return pos;
        }
        let next = (r as usize, c as usize);
        if self.cell(next) == Cell::SeaBottom {
            pos
        } else {
            next
        }
    }

    /// Serializes back to the map text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| match self.cell((r, c)) {
                    _ if (r, c) == self.start => "S".to_string(),
                    Cell::Ocean => ".".to_string(),
                    Cell::SeaBottom => "#".to_string(),
                    Cell::Treasure(v) => format!("T{v}"),
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DstState {
    pub position: (usize, usize),
    pub step_count: usize,
}

pub fn dst_reset(map: &DstMap) -> DstState {
    DstState {
        position: map.start(),
        step_count: 0,
    }
}

/// One move: `(0, -1)` per step, plus the treasure value on arrival, which
/// ends the episode.
pub fn dst_step(state: &mut DstState, action: DstAction, map: &DstMap) -> (Vec<f64>, bool) {
    state.position = map.move_from(state.position, action);
    state.step_count += 1;
    match map.cell(state.position) {
        Cell::Treasure(v) => (vec![v, -1.0], true),
        _ => (vec![0.0, -1.0], false),
    }
}

#[derive(Clone, Debug)]
pub struct DeepSeaTreasure {
    map: DstMap,
    state: DstState,
    observation_mode: ObservationMode,
    max_steps: usize,
}

impl DeepSeaTreasure {
    pub fn new(map: DstMap, observation_mode: ObservationMode, max_steps: usize) -> Self {
        let state = dst_reset(&map);
        DeepSeaTreasure {
            map,
            state,
            observation_mode,
            max_steps,
        }
    }

    pub fn map(&self) -> &DstMap {
        &self.map
    }

    pub fn state(&self) -> DstState {
        self.state
    }

    pub fn features(&self, position: (usize, usize)) -> Vec<f64> {
        match self.observation_mode {
            ObservationMode::Coordinates => vec![
                position.0 as f64 / (self.map.rows.max(2) - 1) as f64,
                position.1 as f64 / (self.map.cols.max(2) - 1) as f64,
            ],
            _ => {
                let mut v = vec![0.0; self.map.rows * self.map.cols];
                v[position.0 * self.map.cols + position.1] = 1.0;
                v
            }
        }
    }
}

impl Environment for DeepSeaTreasure {
    fn num_actions(&self) -> usize {
        DstAction::COUNT
    }

    fn num_objectives(&self) -> usize {
        2
    }

    fn observation_len(&self) -> usize {
        match self.observation_mode {
            ObservationMode::Coordinates => 2,
            _ => self.map.rows * self.map.cols,
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = dst_reset(&self.map);
        self.observation()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        let action = DstAction::try_from(action)?;
        let (reward, terminal) = dst_step(&mut self.state, action, &self.map);
        Ok(Step {
            observation: self.observation(),
            reward,
            terminal,
            truncated: !terminal && self.state.step_count >= self.max_steps,
        })
    }

    fn observation(&self) -> Vec<f64> {
        self.features(self.state.position)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "S T1 .\n. # T5\n";

    #[test]
    fn parse_and_round_trip() {
        let m = DstMap::parse(TINY).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m.start(), (0, 0));
        assert_eq!(m.treasures(), vec![((0, 1), 1.0), ((1, 2), 5.0)]);
        assert_eq!(DstMap::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn parse_errors() {
        assert!(DstMap::parse("S .\n. . .").is_err());
        assert!(DstMap::parse(". T1").is_err());
        assert!(DstMap::parse("S X").is_err());
        assert!(DstMap::parse("S .").is_err());
        assert!(DstMap::parse("S S T1").is_err());
    }

    #[test]
    fn edges_and_sea_bottom_block_moves() {
        let m = DstMap::parse(TINY).unwrap();
        let mut s = dst_reset(&m);
        let (r, t) = dst_step(&mut s, DstAction::Left, &m);
        assert_eq!((s.position, r, t), ((0, 0), vec![0.0, -1.0], false));
        let (_, _) = dst_step(&mut s, DstAction::Up, &m);
        assert_eq!(s.position, (0, 0));
        dst_step(&mut s, DstAction::Down, &m);
        let (r, t) = dst_step(&mut s, DstAction::Right, &m);
        assert_eq!((s.position, r, t), ((1, 0), vec![0.0, -1.0], false));
    }

    #[test]
    fn treasure_pays_and_terminates() {
        let m = DstMap::parse(TINY).unwrap();
        let mut s = dst_reset(&m);
        let (r, t) = dst_step(&mut s, DstAction::Right, &m);
        assert_eq!(r, vec![1.0, -1.0]);
        assert!(t);
    }

    #[test]
    fn truncation_after_max_steps() {
        let mut e = DeepSeaTreasure::new(DstMap::parse(TINY).unwrap(), ObservationMode::OneHot, 3);
        e.reset();
        assert!(!e.step(0).unwrap().truncated);
        assert!(!e.step(0).unwrap().truncated);
        let st = e.step(0).unwrap();
        assert!(st.truncated && !st.terminal);
    }

    #[test]
    fn observation_modes() {
        let m = DstMap::parse(TINY).unwrap();
        let e = DeepSeaTreasure::new(m.clone(), ObservationMode::OneHot, 10);
        assert_eq!(e.observation(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let e = DeepSeaTreasure::new(m, ObservationMode::Coordinates, 10);
        assert_eq!(e.observation(), vec![0.0, 0.0]);
        assert_eq!(e.observation_len(), 2);
    }

    #[test]
    fn bundled_maps_parse() {
        assert_eq!(DstMap::default_map().treasures().len(), 10);
        let small = DstMap::small_map();
        assert_eq!((small.rows(), small.cols()), (6, 6));
    }
}
