use std::io::Write;

use rayon::prelude::*;

use super::{Direction, EigenSolution, HamiltonianBuilder, SpinSystem};
use crate::{Error, Result};

/// Eigen-solutions along a monotone field grid in a fixed direction.
#[derive(Debug, Clone)]
pub struct LevelDiagram {
    pub system: SpinSystem,
    pub direction: Direction,
    /// Field amplitudes (T), strictly increasing.
    pub magnitudes: Vec<f64>,
    pub points: Vec<EigenSolution>,
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("field grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidGrid("field values must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("field grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Diagonalize at every grid point. Points are computed in parallel and returned in grid order.
pub fn sweep(system: &SpinSystem, direction: Direction, magnitudes: &[f64]) -> Result<LevelDiagram> {
    validate_grid(magnitudes)?;
    let builder = HamiltonianBuilder::new(system)?;
    let points = magnitudes
        .par_iter()
        .map(|&b| builder.solve_cartesian(direction.at(b)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelDiagram {
        system: *system,
        direction,
        magnitudes: magnitudes.to_vec(),
        points,
    })
}

impl LevelDiagram {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn level_count(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "field_T,level_index,energy_GHz,jz_expect,iz_expect")?;
        for (b, p) in self.magnitudes.iter().zip(&self.points) {
            for k in 0..p.len() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    b, k, p.energies[k], p.jz_expect[k], p.iz_expect[k]
                )?;
            }
        }
        Ok(())
    }
}

/// Follow each level through the sweep by maximum eigenvector overlap.
///
/// Returns `tracks[t][p]`: the sorted level index at grid point `p` of the level
/// that starts at sorted index `t` on the first point.
pub fn track_levels(diagram: &LevelDiagram) -> Vec<Vec<usize>> {
    let n = diagram.level_count();
    let mut tracks: Vec<Vec<usize>> = (0..n).map(|t| vec![t]).collect();
    for p in 1..diagram.points.len() {
        let prev = &diagram.points[p - 1];
        let cur = &diagram.points[p];
        let assign = match_levels(prev, cur);
        for tr in tracks.iter_mut() {
            let last = *tr.last().expect("non-empty track");
            tr.push(assign[last]);
        }
    }
    tracks
}

/// assign[i] = index in `cur` continuing level `i` of `prev`.
pub(crate) fn match_levels(prev: &EigenSolution, cur: &EigenSolution) -> Vec<usize> {
    let n = prev.len();
    let ov = prev.vectors.adjoint() * &cur.vectors;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = ov[(i, j)].norm_sqr();
            if w > 1e-6 {
                pairs.push((w, i, j));
            }
        }
    }
    // greedy on overlap; ties resolved by index for determinism
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assign = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, i, j) in pairs {
        if assign[i] == usize::MAX && !taken[j] {
            assign[i] = j;
            taken[j] = true;
        }
    }
    // leftovers by energy order
    let mut free = (0..n).filter(|&j| !taken[j]);
    for a in assign.iter_mut() {
        if *a == usize::MAX {
            *a = free.next().expect("as many free slots as unassigned levels");
        }
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        let d = sweep(&SpinSystem::how10(), Direction::Z, &[0.1]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.level_count(), 136);
    }

    #[test]
    fn bad_grids_rejected() {
        let s = SpinSystem::how10();
        assert!(sweep(&s, Direction::Z, &[]).is_err());
        assert!(sweep(&s, Direction::Z, &[0.2, 0.1]).is_err());
        assert!(sweep(&s, Direction::Z, &[0.1, 0.1]).is_err());
    }

    #[test]
    fn csv_has_all_levels() {
        let d = sweep(&SpinSystem::how10(), Direction::Z, &[0.0, 0.1]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 136);
        assert!(text.starts_with("field_T,level_index,energy_GHz,jz_expect,iz_expect\n"));
    }

    #[test]
    fn tracks_are_permutations() {
        let grid: Vec<f64> = (0..21).map(|k| k as f64 * 0.01).collect();
        let d = sweep(&SpinSystem::how10(), Direction::new(0.3, 0.0), &grid).unwrap();
        let tracks = track_levels(&d);
        for p in 0..grid.len() {
            let mut seen = [false; 136];
            for t in &tracks {
                assert!(!seen[t[p]]);
                seen[t[p]] = true;
            }
        }
    }

    #[test]
    fn crossing_levels_keep_identity() {
        // different nuclear blocks cross exactly; tracking must follow ⟨I_z⟩
        let grid: Vec<f64> = (0..41).map(|k| k as f64 * 0.005).collect();
        let d = sweep(&SpinSystem::how10(), Direction::Z, &grid).unwrap();
        let tracks = track_levels(&d);
        for t in &tracks {
            let label0 = d.points[0].nuclear_label(t[0]);
            for (p, &idx) in t.iter().enumerate() {
                assert_eq!(d.points[p].nuclear_label(idx), label0);
            }
        }
    }
}
