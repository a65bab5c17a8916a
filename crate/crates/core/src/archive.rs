//! Tessellated MAP-Elites archive over a two-dimensional measure space.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::deck::DeckGenome;
use crate::surrogate::AncillaryData;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureDim {
    pub lower: f64,
    pub upper: f64,
    pub resolution: usize,
}

/// Uniform grid over two measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureSpace {
    pub dims: [MeasureDim; 2],
}

impl MeasureSpace {
    pub fn new(dims: [MeasureDim; 2]) -> Result<Self> {
        for (d, dim) in dims.iter().enumerate() {
            if !(dim.lower.is_finite() && dim.upper.is_finite() && dim.lower < dim.upper) {
                return Err(Error::invalid(format!(
                    "measure {d}: need finite lower < upper, got [{}, {}]",
                    dim.lower, dim.upper
                )));
            }
            if dim.resolution == 0 {
                return Err(Error::invalid(format!("measure {d}: resolution must be >= 1")));
            }
        }
        Ok(Self { dims })
    }

    pub fn total_cells(&self) -> usize {
        self.dims[0].resolution * self.dims[1].resolution
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.dims[0].resolution, self.dims[1].resolution)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
}

impl CellIndex {
    pub fn manhattan(&self, other: &CellIndex) -> usize {
        self.i.abs_diff(other.i) + self.j.abs_diff(other.j)
    }
}

pub fn cell_manhattan_distance(a: CellIndex, b: CellIndex) -> usize {
    a.manhattan(&b)
}

/// Bins `m` uniformly; values outside the bounds land in the nearest edge cell.
pub fn cell_of(space: &MeasureSpace, m: [f64; 2]) -> Result<CellIndex> {
    let mut idx = [0usize; 2];
    for d in 0..2 {
        if !m[d].is_finite() {
            return Err(Error::invalid(format!("measure {d} is not finite: {}", m[d])));
        }
        let dim = &space.dims[d];
        let t = (m[d] - dim.lower) / (dim.upper - dim.lower) * dim.resolution as f64;
        let raw = t.floor();
        idx[d] = if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(dim.resolution - 1)
        };
    }
    Ok(CellIndex { i: idx[0], j: idx[1] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EliteSource {
    GroundTruth,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elite {
    pub genome: DeckGenome,
    pub objective: f64,
    pub measures: [f64; 2],
    pub ancillary: Option<AncillaryData>,
    pub source: EliteSource,
    pub eval_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    NewCell,
    Improved,
    Rejected,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InsertLog {
    pub new_cell: u64,
    pub improved: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    space: MeasureSpace,
    cells: BTreeMap<CellIndex, Elite>,
    pub log: InsertLog,
}

impl Archive {
    pub fn new(space: MeasureSpace) -> Self {
        Self {
            space,
            cells: BTreeMap::new(),
            log: InsertLog::default(),
        }
    }

    pub fn space(&self) -> &MeasureSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, cell: &CellIndex) -> Option<&Elite> {
        self.cells.get(cell)
    }

    /// Elites in ascending cell order.
    pub fn iter(&self) -> impl Iterator<Item = (&CellIndex, &Elite)> {
        self.cells.iter()
    }

    pub fn elites(&self) -> impl Iterator<Item = &Elite> {
        self.cells.values()
    }

    /// Inserts if the cell is empty or the candidate is strictly better.
    /// Ties keep the incumbent.
    pub fn try_insert(&mut self, candidate: Elite) -> Result<InsertOutcome> {
        if !candidate.objective.is_finite() {
            return Err(Error::invalid(format!("objective is not finite: {}", candidate.objective)));
        }
        let cell = cell_of(&self.space, candidate.measures)?;
        let outcome = match self.cells.get(&cell) {
            None => InsertOutcome::NewCell,
            Some(inc) if candidate.objective > inc.objective => InsertOutcome::Improved,
            Some(_) => InsertOutcome::Rejected,
        };
        match outcome {
            InsertOutcome::NewCell => self.log.new_cell += 1,
            InsertOutcome::Improved => self.log.improved += 1,
            InsertOutcome::Rejected => self.log.rejected += 1,
        }
        if outcome != InsertOutcome::Rejected {
            self.cells.insert(cell, candidate);
        }
        Ok(outcome)
    }

    pub fn coverage(&self) -> f64 {
        self.cells.len() as f64 / self.space.total_cells() as f64
    }

    /// Sum of `max(objective - floor, 0)` over elites.
    pub fn qd_score(&self, floor: f64) -> f64 {
        self.cells
            .values()
            .map(|e| (e.objective - floor).max(0.0))
            .sum()
    }

    /// Fraction of all cells whose elite beats each threshold.
    pub fn ccdf(&self, thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
        if thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("ccdf thresholds must be sorted ascending"));
        }
        let total = self.space.total_cells() as f64;
        Ok(thresholds
            .iter()
            .map(|&t| {
                let above = self.cells.values().filter(|e| e.objective > t).count();
                (t, above as f64 / total)
            })
            .collect())
    }

    pub fn best_elite(&self) -> Result<&Elite> {
        self.cells
            .values()
            .reduce(|best, e| if e.objective > best.objective { e } else { best })
            .ok_or(Error::EmptyArchive)
    }

    pub fn max_objective(&self) -> Result<f64> {
        self.best_elite().map(|e| e.objective)
    }

    /// Highest ancillary win percentage among elites that carry ancillary data.
    pub fn max_win_percentage(&self) -> Option<f64> {
        self.cells
            .values()
            .filter_map(|e| e.ancillary.map(|a| a.win_percentage))
            .reduce(f64::max)
    }

    pub fn export_heatmap(&self) -> Heatmap {
        let (r0, r1) = self.space.resolution();
        let mut grid = vec![vec![None; r1]; r0];
        for (c, e) in &self.cells {
            grid[c.i][c.j] = Some(e.objective);
        }
        Heatmap { grid }
    }

    /// CSV dump with header `i,j,objective,measure0,measure1,genome`.
    /// Floats use shortest round-trip formatting; the genome is `;`-joined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,objective,measure0,measure1,genome\n");
        for (c, e) in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.i,
                c.j,
                e.objective,
                e.measures[0],
                e.measures[1],
                e.genome.join(";")
            );
        }
        out
    }

    /// Loads a CSV dump. Elites come back without ancillary data.
    pub fn from_csv(space: MeasureSpace, text: &str, source: EliteSource) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "i,j,objective,measure0,measure1,genome" => {}
            other => return Err(Error::parse("archive csv", format!("bad header {other:?}"))),
        }
        let mut archive = Archive::new(space);
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::parse("archive csv", format!("line {}: expected 6 fields", n + 2)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::parse("archive csv", format!("line {}: {e}", n + 2)))
            };
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::parse("archive csv", format!("line {}: {e}", n + 2)))
            };
            let key = CellIndex { i: idx(f[0])?, j: idx(f[1])? };
            let elite = Elite {
                genome: DeckGenome::parse_counts(f[5])?,
                objective: num(f[2])?,
                measures: [num(f[3])?, num(f[4])?],
                ancillary: None,
                source,
                eval_seed: 0,
            };
            if cell_of(&space, elite.measures)? != key {
                return Err(Error::parse(
                    "archive csv",
                    format!("line {}: measures do not map to cell ({}, {})", n + 2, key.i, key.j),
                ));
            }
            archive.cells.insert(key, elite);
        }
        Ok(archive)
    }
}

/// Objective grid, `None` for empty cells. Rows follow measure 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub grid: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.grid {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Some(v) => format!("{v:.6}"),
                    None => "NaN".to_string(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let grid = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                line.split(',')
                    .map(|s| match s.trim() {
                        "NaN" => Ok(None),
                        v => v
                            .parse::<f64>()
                            .map(Some)
                            .map_err(|e| Error::parse("heatmap csv", e.to_string())),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid })
    }

    pub fn filled(&self) -> usize {
        self.grid.iter().flatten().filter(|c| c.is_some()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn space(lo: [f64; 2], hi: [f64; 2], res: [usize; 2]) -> MeasureSpace {
        MeasureSpace::new([
            MeasureDim { lower: lo[0], upper: hi[0], resolution: res[0] },
            MeasureDim { lower: lo[1], upper: hi[1], resolution: res[1] },
        ])
        .unwrap()
    }

    fn unit5() -> MeasureSpace {
        space([0.0, 0.0], [1.0, 1.0], [5, 5])
    }

    pub(crate) fn elite(f: f64, m: [f64; 2], tag: u32) -> Elite {
        Elite {
            genome: DeckGenome::parse_counts(&tag.to_string()).unwrap(),
            objective: f,
            measures: m,
            ancillary: None,
            source: EliteSource::GroundTruth,
            eval_seed: tag as u64,
        }
    }

    #[test]
    fn binning_edges_and_clamps() {
        let s = space([0.0, 0.0], [30.0, 10.0], [20, 20]);
        assert_eq!(cell_of(&s, [0.0, 0.0]).unwrap(), CellIndex { i: 0, j: 0 });
        assert_eq!(cell_of(&s, [30.0, 10.0]).unwrap(), CellIndex { i: 19, j: 19 });
        assert_eq!(cell_of(&s, [15.0, 0.0]).unwrap().i, 10);
        assert_eq!(cell_of(&s, [-5.0, 99.0]).unwrap(), CellIndex { i: 0, j: 19 });
        assert!(cell_of(&s, [f64::NAN, 0.0]).is_err());
        assert!(cell_of(&s, [f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn invalid_space_rejected() {
        let bad = MeasureSpace::new([
            MeasureDim { lower: 1.0, upper: 1.0, resolution: 3 },
            MeasureDim { lower: 0.0, upper: 1.0, resolution: 3 },
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn insert_rules() {
        let mut a = Archive::new(unit5());
        assert_eq!(a.try_insert(elite(1.0, [0.1, 0.1], 1)).unwrap(), InsertOutcome::NewCell);
        assert_eq!(a.try_insert(elite(1.0, [0.15, 0.1], 2)).unwrap(), InsertOutcome::Rejected);
        assert_eq!(a.get(&CellIndex { i: 0, j: 0 }).unwrap().eval_seed, 1);
        assert_eq!(a.try_insert(elite(2.0, [0.15, 0.1], 3)).unwrap(), InsertOutcome::Improved);
        assert_eq!(a.get(&CellIndex { i: 0, j: 0 }).unwrap().eval_seed, 3);
        assert_eq!(a.log, InsertLog { new_cell: 1, improved: 1, rejected: 1 });
    }

    #[test]
    fn coverage_counts() {
        let a = Archive::new(unit5());
        assert_eq!(a.coverage(), 0.0);
        let mut b = Archive::new(unit5());
        for k in 0..7u32 {
            b.try_insert(elite(0.0, [(k % 5) as f64 / 5.0 + 0.01, (k / 5) as f64 / 5.0 + 0.01], k)).unwrap();
        }
        assert!((b.coverage() - 0.28).abs() < 1e-12);
        let mut full = Archive::new(unit5());
        for i in 0..5 {
            for j in 0..5 {
                full.try_insert(elite(0.0, [i as f64 / 5.0, j as f64 / 5.0], 0)).unwrap();
            }
        }
        assert_eq!(full.coverage(), 1.0);
    }

    #[test]
    fn qd_score_floors() {
        let mut a = Archive::new(unit5());
        assert_eq!(a.qd_score(0.0), 0.0);
        a.try_insert(elite(10.0, [0.1, 0.1], 0)).unwrap();
        a.try_insert(elite(5.0, [0.9, 0.9], 1)).unwrap();
        assert_eq!(a.qd_score(0.0), 15.0);
        let mut b = Archive::new(unit5());
        b.try_insert(elite(-5.0, [0.1, 0.1], 0)).unwrap();
        b.try_insert(elite(10.0, [0.9, 0.9], 1)).unwrap();
        assert_eq!(b.qd_score(-30.0), 65.0);
        assert_eq!(b.qd_score(0.0), 10.0);
    }

    #[test]
    fn ccdf_counts() {
        let mut a = Archive::new(space([0.0, 0.0], [1.0, 1.0], [10, 1]));
        for (k, f) in [1.0, 2.0, 3.0].into_iter().enumerate() {
            a.try_insert(elite(f, [k as f64 / 10.0, 0.5], k as u32)).unwrap();
        }
        let c = a.ccdf(&[-100.0, 1.5, 100.0]).unwrap();
        assert_eq!(c[0].1, a.coverage());
        assert!((c[1].1 - 0.2).abs() < 1e-12);
        assert_eq!(c[2].1, 0.0);
        assert!(a.ccdf(&[2.0, 1.0]).is_err());
    }

    #[test]
    fn maxima() {
        let mut a = Archive::new(unit5());
        assert!(matches!(a.max_objective(), Err(Error::EmptyArchive)));
        a.try_insert(elite(3.0, [0.1, 0.1], 0)).unwrap();
        assert_eq!(a.max_objective().unwrap(), 3.0);
        a.try_insert(elite(-2.0, [0.5, 0.5], 1)).unwrap();
        a.try_insert(elite(7.0, [0.9, 0.1], 2)).unwrap();
        assert_eq!(a.max_objective().unwrap(), 7.0);
        assert_eq!(a.best_elite().unwrap().eval_seed, 2);
    }

    #[test]
    fn manhattan() {
        let c = |i, j| CellIndex { i, j };
        assert_eq!(cell_manhattan_distance(c(0, 0), c(0, 0)), 0);
        assert_eq!(cell_manhattan_distance(c(1, 2), c(4, 0)), 5);
    }

    #[test]
    fn heatmap_export_and_parse() {
        let mut a = Archive::new(unit5());
        let h = a.export_heatmap();
        assert_eq!(h.filled(), 0);
        assert!(h.to_csv().lines().all(|l| l.split(',').all(|c| c == "NaN")));
        a.try_insert(elite(1.25, [0.5, 0.9], 0)).unwrap();
        let h = a.export_heatmap();
        assert_eq!(h.filled(), 1);
        assert_eq!(h.grid[2][4], Some(1.25));

        for k in 0..40 {
            let x = k as f64 * 0.0247;
            a.try_insert(elite(x * 3.0 - 1.0, [x, 1.0 - x], k)).unwrap();
        }
        let parsed = Heatmap::from_csv(&a.export_heatmap().to_csv()).unwrap();
        for (c, e) in a.iter() {
            let v = parsed.grid[c.i][c.j].unwrap();
            assert!((v - e.objective).abs() < 5e-7);
        }
        assert_eq!(parsed.filled(), a.len());
    }

    #[test]
    fn archive_csv_round_trip() {
        let mut a = Archive::new(unit5());
        let mut rng = stream(3);
        for k in 0..50 {
            let m = [rng.gen::<f64>(), rng.gen::<f64>()];
            a.try_insert(elite(rng.gen_range(-30.0..30.0), m, k)).unwrap();
        }
        let text = a.to_csv();
        let b = Archive::from_csv(*a.space(), &text, EliteSource::GroundTruth).unwrap();
        assert_eq!(b.to_csv(), text);
        assert_eq!(b.qd_score(-30.0), a.qd_score(-30.0));
    }

    /// Brute-force oracle: per cell, the first-seen maximum objective.
    fn argmax_oracle(space: &MeasureSpace, seq: &[Elite]) -> BTreeMap<CellIndex, usize> {
        let mut best: BTreeMap<CellIndex, usize> = BTreeMap::new();
        for (k, e) in seq.iter().enumerate() {
            let cell = cell_of(space, e.measures).unwrap();
            let better = match best.get(&cell) {
                None => true,
                Some(&b) => e.objective > seq[b].objective,
            };
            if better {
                best.insert(cell, k);
            }
        }
        best
    }

    #[test]
    fn matches_bruteforce_argmax() {
        let mut rng = stream(11);
        let seq: Vec<Elite> = (0..1000)
            .map(|k| {
                // Coarse objectives force plenty of ties.
                let f = rng.gen_range(0..20) as f64;
                elite(f, [rng.gen::<f64>(), rng.gen::<f64>()], k)
            })
            .collect();
        let mut a = Archive::new(unit5());
        for e in &seq {
            a.try_insert(e.clone()).unwrap();
        }
        let oracle = argmax_oracle(a.space(), &seq);
        assert_eq!(oracle.len(), a.len());
        for (cell, k) in oracle {
            assert_eq!(a.get(&cell).unwrap(), &seq[k]);
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant_with_distinct_objectives(seed in any::<u64>()) {
            let mut rng = stream(seed);
            let mut seq: Vec<Elite> = (0..200)
                .map(|k| elite(k as f64 + rng.gen::<f64>() * 0.5, [rng.gen::<f64>(), rng.gen::<f64>()], k))
                .collect();
            let mut a = Archive::new(unit5());
            for e in &seq { a.try_insert(e.clone()).unwrap(); }
            use rand::seq::SliceRandom;
            seq.shuffle(&mut rng);
            let mut b = Archive::new(unit5());
            for e in &seq { b.try_insert(e.clone()).unwrap(); }
            prop_assert_eq!(a.to_csv(), b.to_csv());
        }

        #[test]
        fn metrics_monotone_and_keys_consistent(seed in any::<u64>()) {
            let mut rng = stream(seed);
            let mut a = Archive::new(unit5());
            let (mut cov, mut qd) = (0.0, 0.0);
            for k in 0..300 {
                let e = elite(rng.gen_range(-30.0..30.0), [rng.gen_range(-0.2..1.2), rng.gen_range(-0.2..1.2)], k);
                a.try_insert(e).unwrap();
                prop_assert!(a.coverage() >= cov);
                prop_assert!(a.qd_score(-30.0) >= qd);
                cov = a.coverage();
                qd = a.qd_score(-30.0);
            }
            for (c, e) in a.iter() {
                prop_assert_eq!(cell_of(a.space(), e.measures).unwrap(), *c);
            }
            let curve = a.ccdf(&[-1e300, -10.0, 0.0, 10.0, 29.0]).unwrap();
            prop_assert_eq!(curve[0].1, a.coverage());
            prop_assert!(curve.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }
}
