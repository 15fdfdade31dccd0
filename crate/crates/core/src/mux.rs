//! Cryogenic multiplexer model: two 16-way binary trees, one selecting the
//! row (source-drain side) and one the column (gate side).
//!
//! Level `k` (0 at the root) of a tree has two complementary address lines,
//! one per value of bit `DEPTH - 1 - k` of the zero-based index. A branch
//! at level `k` conducts when its line is open, unless a stuck fault
//! overrides it.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::{DeviceId, SaddleDevice};

pub const DEPTH: usize = 4;
pub const LEAVES: usize = 1 << DEPTH;
pub const LINES_PER_MUX: usize = 2 * DEPTH;
/// Source, drain and common gate.
pub const SHARED_CONTACTS: usize = 3;

/// External contacts of one chip: both address buses plus the shared pads.
pub const fn contact_count() -> usize {
    2 * LINES_PER_MUX + SHARED_CONTACTS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tree {
    Row,
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Line {
    Depleting,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MuxAddress {
    pub row: u8,
    pub column: u8,
}

impl MuxAddress {
    pub fn new(row: u8, column: u8) -> Result<Self> {
        if !(1..=16).contains(&row) || !(1..=16).contains(&column) {
            return Err(Error::Argument(format!("mux address ({row}, {column}) out of range")));
        }
        Ok(Self { row, column })
    }

    /// All 256 addresses in row-major order.
    pub fn all() -> impl Iterator<Item = MuxAddress> {
        (1..=16u8).flat_map(|row| (1..=16u8).map(move |column| MuxAddress { row, column }))
    }

    pub fn device(self, chip: u8) -> DeviceId {
        DeviceId { chip, row: self.row, column: self.column }
    }
}

/// Line states of one tree, indexed `[level][bit value]`.
pub type TreeLines = [[Line; 2]; DEPTH];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LineState {
    pub row: TreeLines,
    pub column: TreeLines,
}

impl LineState {
    /// Every line of both trees depleting.
    pub fn all_depleting() -> Self {
        let t = [[Line::Depleting; 2]; DEPTH];
        Self { row: t, column: t }
    }

    pub fn tree(&self, tree: Tree) -> &TreeLines {
        match tree {
            Tree::Row => &self.row,
            Tree::Column => &self.column,
        }
    }

    /// True when each level has exactly one open line.
    pub fn is_complementary(&self) -> bool {
        [&self.row, &self.column]
            .iter()
            .all(|t| t.iter().all(|l| (l[0] == Line::Open) != (l[1] == Line::Open)))
    }

    /// Compact form: per tree, one character per line, level-major, `1` for open.
    pub fn code(&self) -> String {
        let enc = |t: &TreeLines| -> String {
            t.iter()
                .flat_map(|l| l.iter())
                .map(|s| if *s == Line::Open { '1' } else { '0' })
                .collect()
        };
        format!("{}/{}", enc(&self.row), enc(&self.column))
    }
}

fn bit(index: usize, level: usize) -> usize {
    (index >> (DEPTH - 1 - level)) & 1
}

fn tree_lines(index: usize) -> TreeLines {
    let mut t = [[Line::Depleting; 2]; DEPTH];
    for (k, l) in t.iter_mut().enumerate() {
        l[bit(index, k)] = Line::Open;
    }
    t
}

pub fn address_to_lines(addr: MuxAddress) -> LineState {
    LineState {
        row: tree_lines(addr.row as usize - 1),
        column: tree_lines(addr.column as usize - 1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stuck {
    Open,
    Depleted,
}

/// A stuck branch: the edge entering the subtree whose leaves share the
/// first `level + 1` address bits with `prefix`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Branch {
    pub tree: Tree,
    pub level: u8,
    /// Zero-based index of the branch among the `2^(level+1)` at its level.
    pub prefix: u8,
}

impl Branch {
    pub fn new(tree: Tree, level: u8, prefix: u8) -> Result<Self> {
        if level as usize >= DEPTH || (prefix as usize) >= (2 << level) {
            return Err(Error::Argument(format!("no branch {prefix} at level {level}")));
        }
        Ok(Self { tree, level, prefix })
    }

    /// Whether `leaf` (zero-based) lies below this branch.
    pub fn covers(&self, leaf: usize) -> bool {
        leaf >> (DEPTH - 1 - self.level as usize) == self.prefix as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StuckBranch {
    pub branch: Branch,
    pub state: Stuck,
}

/// Stuck branches; a later entry for the same branch wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DefectMap {
    pub stuck: Vec<StuckBranch>,
}

impl DefectMap {
    pub fn with(mut self, branch: Branch, state: Stuck) -> Self {
        self.stuck.push(StuckBranch { branch, state });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.stuck.is_empty()
    }

    fn conducts(&self, tree: Tree, lines: &TreeLines, level: usize, leaf: usize) -> bool {
        let b = Branch { tree, level: level as u8, prefix: (leaf >> (DEPTH - 1 - level)) as u8 };
        match self.stuck.iter().rev().find(|s| s.branch == b).map(|s| s.state) {
            Some(Stuck::Open) => true,
            Some(Stuck::Depleted) => false,
            None => lines[level][bit(leaf, level)] == Line::Open,
        }
    }

    /// Zero-based leaves of `tree` with a fully conducting root-to-leaf path.
    pub fn active_leaves(&self, tree: Tree, lines: &TreeLines) -> Vec<usize> {
        (0..LEAVES)
            .filter(|&leaf| (0..DEPTH).all(|k| self.conducts(tree, lines, k, leaf)))
            .collect()
    }
}

/// Devices on a conduction path: the product of the active row and column
/// leaves.
pub fn conduction_path(lines: &LineState, defects: &DefectMap) -> Vec<MuxAddress> {
    let rows = defects.active_leaves(Tree::Row, &lines.row);
    let cols = defects.active_leaves(Tree::Column, &lines.column);
    rows.iter()
        .flat_map(|r| {
            cols.iter().map(move |c| MuxAddress { row: *r as u8 + 1, column: *c as u8 + 1 })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultClass {
    MultiActivation,
    OpenCircuit,
    /// A single device conducts, but not the addressed one.
    Misrouted,
}

/// Fault, if any, of addressing `addr`.
pub fn check_address(addr: MuxAddress, defects: &DefectMap) -> Option<FaultClass> {
    let path = conduction_path(&address_to_lines(addr), defects);
    match path.len() {
        0 => Some(FaultClass::OpenCircuit),
        1 if path[0] == addr => None,
        1 => Some(FaultClass::Misrouted),
        _ => Some(FaultClass::MultiActivation),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Measured,
    MeasurementError,
    Nonfunctional,
    Fault,
}

/// One line of the measurement log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub chip: u8,
    pub row: u8,
    pub column: u8,
    pub cooldown: u32,
    pub lines: String,
    pub outcome: Outcome,
    pub fault_class: Option<FaultClass>,
    pub result_file: Option<String>,
    pub message: Option<String>,
}

/// What the measurement closure reports back.
pub struct Measurement {
    pub result_file: Option<String>,
    pub error: Option<String>,
}

/// Visits every address of one chip in row-major order. The closure runs
/// only for functional devices on a fault-free path; devices missing from
/// `devices` count as nonfunctional.
pub fn schedule_sweep(
    chip: u8,
    cooldown: u32,
    devices: &[SaddleDevice],
    defects: &DefectMap,
    mut measure: impl FnMut(&SaddleDevice) -> Measurement,
) -> Vec<LogEntry> {
    MuxAddress::all()
        .map(|addr| {
            let lines = address_to_lines(addr).code();
            let mut entry = LogEntry {
                chip,
                row: addr.row,
                column: addr.column,
                cooldown,
                lines,
                outcome: Outcome::Nonfunctional,
                fault_class: None,
                result_file: None,
                message: None,
            };
            if let Some(f) = check_address(addr, defects) {
                entry.outcome = Outcome::Fault;
                entry.fault_class = Some(f);
                return entry;
            }
            let id = addr.device(chip);
            if let Some(dev) = devices.iter().find(|d| d.id == id && d.functional) {
                let m = measure(dev);
                entry.outcome = if m.error.is_some() { Outcome::MeasurementError } else { Outcome::Measured };
                entry.result_file = m.result_file;
                entry.message = m.error;
            }
            entry
        })
        .collect()
}

pub fn write_log(path: &Path, entries: &[LogEntry]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

/// Exhaustive self-test of the addressing scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuxCheck {
    pub contacts: usize,
    pub addresses: usize,
    pub distinct_line_states: usize,
    pub healthy_singletons: usize,
    pub passed: bool,
}

pub fn mux_check() -> MuxCheck {
    let healthy = DefectMap::default();
    let mut codes = std::collections::HashSet::new();
    let mut singles = 0;
    let mut n = 0;
    for addr in MuxAddress::all() {
        n += 1;
        let lines = address_to_lines(addr);
        codes.insert(lines);
        if conduction_path(&lines, &healthy) == [addr] {
            singles += 1;
        }
    }
    let contacts = contact_count();
    MuxCheck {
        contacts,
        addresses: n,
        distinct_line_states: codes.len(),
        healthy_singletons: singles,
        passed: contacts == 19 && n == 256 && codes.len() == 256 && singles == 256,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extreme_addresses() {
        let lo = address_to_lines(MuxAddress::new(1, 1).unwrap());
        let hi = address_to_lines(MuxAddress::new(16, 16).unwrap());
        for k in 0..DEPTH {
            assert_eq!(lo.row[k], [Line::Open, Line::Depleting]);
            assert_eq!(lo.column[k], [Line::Open, Line::Depleting]);
            assert_eq!(hi.row[k], [Line::Depleting, Line::Open]);
            assert_eq!(hi.column[k], [Line::Depleting, Line::Open]);
        }
        assert!(lo.is_complementary());
    }

    #[test]
    fn exhaustive_check_passes() {
        let c = mux_check();
        assert_eq!(c.contacts, 8 + 8 + 3);
        assert!(c.passed, "{c:?}");
    }

    #[test]
    fn all_depleting_has_no_path() {
        assert!(conduction_path(&LineState::all_depleting(), &DefectMap::default()).is_empty());
    }

    #[test]
    fn stuck_open_leaf_branch_doubles_sibling_addresses() {
        // leaf-level branch above row 6 (index 5); its sibling is row 5
        let b = Branch::new(Tree::Row, 3, 5).unwrap();
        let d = DefectMap::default().with(b, Stuck::Open);
        for column in 1..=16 {
            let sib = conduction_path(&address_to_lines(MuxAddress::new(5, column).unwrap()), &d);
            assert_eq!(sib.len(), 2);
            let own = conduction_path(&address_to_lines(MuxAddress::new(6, column).unwrap()), &d);
            assert_eq!(own.len(), 1);
        }
    }

    #[test]
    fn stuck_depleted_opens_circuit_below_it() {
        let b = Branch::new(Tree::Column, 1, 2).unwrap();
        let d = DefectMap::default().with(b, Stuck::Depleted);
        for addr in MuxAddress::all() {
            let fault = check_address(addr, &d);
            if b.covers(addr.column as usize - 1) {
                assert_eq!(fault, Some(FaultClass::OpenCircuit));
            } else {
                assert_eq!(fault, None);
            }
        }
    }

    #[test]
    fn scheduler_visits_row_major() {
        let log = schedule_sweep(1, 1, &[], &DefectMap::default(), |_| unreachable!());
        assert_eq!(log.len(), 256);
        assert_eq!((log[0].row, log[0].column), (1, 1));
        assert_eq!((log[1].row, log[1].column), (1, 2));
        assert_eq!((log[16].row, log[16].column), (2, 1));
        assert!(log.iter().all(|e| e.outcome == Outcome::Nonfunctional));
    }

    fn branch() -> impl Strategy<Value = Branch> {
        (any::<bool>(), 0..DEPTH as u8).prop_flat_map(|(row, level)| {
            let tree = if row { Tree::Row } else { Tree::Column };
            (0..(2u8 << level)).prop_map(move |p| Branch::new(tree, level, p).unwrap())
        })
    }

    fn defects(state: Stuck) -> impl Strategy<Value = DefectMap> {
        prop::collection::vec(branch(), 0..6)
            .prop_map(move |bs| bs.into_iter().fold(DefectMap::default(), |d, b| d.with(b, state)))
    }

    fn address() -> impl Strategy<Value = MuxAddress> {
        (1u8..=16, 1u8..=16).prop_map(|(r, c)| MuxAddress::new(r, c).unwrap())
    }

    proptest! {
        #[test]
        fn stuck_open_only_adds_conduction(d in defects(Stuck::Open), extra in branch(), addr in address()) {
            let lines = address_to_lines(addr);
            let before = conduction_path(&lines, &d);
            let after = conduction_path(&lines, &d.clone().with(extra, Stuck::Open));
            prop_assert!(before.contains(&addr));
            prop_assert!(before.iter().all(|a| after.contains(a)));
        }

        #[test]
        fn stuck_depleted_only_removes_conduction(d in defects(Stuck::Depleted), extra in branch(), addr in address()) {
            let lines = address_to_lines(addr);
            let before = conduction_path(&lines, &d);
            let after = conduction_path(&lines, &d.clone().with(extra, Stuck::Depleted));
            prop_assert!(before.len() <= 1);
            prop_assert!(after.iter().all(|a| before.contains(a)));
        }

        #[test]
        fn healthy_lines_are_complementary(addr in address()) {
            let lines = address_to_lines(addr);
            prop_assert!(lines.is_complementary());
            prop_assert_eq!(conduction_path(&lines, &DefectMap::default()), vec![addr]);
        }
    }
}
