//! Preset `(problem, p, q, r)` grids selected by `--table N`.

use satlab_core::reftri::ProblemId;

/// One `(problem, p, q, r)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub struct Cell {
    pub problem: ProblemId,
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

const Q_EQUALS_P: &[(usize, &[usize])] = &[(4, &[16, 32, 64, 128]), (8, &[32, 64, 128]), (16, &[64, 96, 128]), (32, &[128])];
const Q_SEVENTH: &[(usize, usize, &[usize])] = &[(14, 2, &[32, 64, 128]), (28, 4, &[64, 128]), (56, 8, &[128])];
const Q_FOUR: &[(usize, usize, usize)] = &[(4, 4, 32), (12, 4, 64), (28, 4, 96), (60, 4, 128)];

/// Grid of table `n` (2 to 9), or `None` for an unknown table.
pub fn table(n: usize) -> Option<Vec<Cell>> {
    let (problem, kind) = match n {
        2 => (ProblemId::P1, 0),
        3 => (ProblemId::P1, 1),
        4 => (ProblemId::P1, 2),
        5 => (ProblemId::P2, 0),
        6 => (ProblemId::P2, 1),
        7 => (ProblemId::P3, 0),
        8 => (ProblemId::P3, 1),
        9 => (ProblemId::P3, 2),
        _ => return None,
    };
    let mut cells = Vec::new();
    match kind {
        0 => {
            for &(p, rs) in Q_EQUALS_P {
                cells.extend(rs.iter().map(|&r| Cell { problem, p, q: p, r }));
            }
        }
        1 => {
            for &(p, q, rs) in Q_SEVENTH {
                cells.extend(rs.iter().map(|&r| Cell { problem, p, q, r }));
            }
        }
        _ => cells.extend(Q_FOUR.iter().map(|&(p, q, r)| Cell { problem, p, q, r })),
    }
    Some(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_cover_the_documented_cells() {
        let t7 = table(7).unwrap();
        assert!(t7.contains(&Cell { problem: ProblemId::P3, p: 32, q: 32, r: 128 }));
        assert_eq!(table(2).unwrap().len(), 11);
        assert_eq!(table(6).unwrap().len(), 6);
        assert_eq!(table(9).unwrap().len(), 4);
        assert!(table(1).is_none() && table(10).is_none());
        for n in 2..=9 {
            assert!(table(n).unwrap().iter().all(|c| c.r >= c.p + c.q));
        }
    }
}
