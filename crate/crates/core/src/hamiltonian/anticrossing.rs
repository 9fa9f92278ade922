use serde::{Deserialize, Serialize};

use super::eigen::round_half_integer;
use super::sweep::track_levels;
use super::{EigenSolution, HamiltonianBuilder, LevelDiagram};
use crate::{Error, Result};

/// Which tracked level pairs to scan for minimum separation.
#[derive(Debug, Clone, PartialEq)]
pub enum PairSelector {
    /// The two lowest levels of every nuclear-projection group, grouped at the first grid point.
    LowestPairPerNuclearLabel,
    /// Explicit pairs of tracked levels, identified by sorted index at the first grid point.
    Tracked(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnticrossingOptions {
    /// Golden-section bracket width at which refinement stops (T).
    #[serde(rename = "field_tolerance_T")]
    pub field_tolerance_t: f64,
    /// Minimum gaps below this are reported as true crossings (GHz).
    #[serde(rename = "crossing_threshold_GHz")]
    pub crossing_threshold_ghz: f64,
}

impl Default for AnticrossingOptions {
    fn default() -> Self {
        Self {
            field_tolerance_t: 1e-6,
            crossing_threshold_ghz: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingKind {
    Anticrossing,
    Crossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anticrossing {
    #[serde(rename = "field_T")]
    pub field_center_t: f64,
    #[serde(rename = "gap_GHz")]
    pub gap_ghz: f64,
    /// Sorted level indices at the center field.
    pub level_pair: (usize, usize),
    #[serde(rename = "m_I")]
    pub nuclear_label: f64,
    pub kind: CrossingKind,
    /// Number of degenerate level pairs merged into this entry.
    pub multiplicity: usize,
}

/// Locate minima of level separation along the diagram and refine each by
/// golden-section search on the field amplitude.
///
/// A minimum at a zero-field endpoint is accepted only if it is also a minimum
/// against the mirrored field −h₁. Pairs whose separation has no minimum give no
/// entry. Entries that coincide in field and gap (degenerate copies) are merged.
pub fn find_anticrossings(
    diagram: &LevelDiagram,
    selector: &PairSelector,
    options: &AnticrossingOptions,
) -> Result<Vec<Anticrossing>> {
    if diagram.len() < 3 {
        return Err(Error::InvalidGrid("anticrossing search needs at least 3 field points".into()));
    }
    let builder = HamiltonianBuilder::new(&diagram.system)?;
    let tracks = track_levels(diagram);
    let first = &diagram.points[0];

    let pairs: Vec<(usize, usize)> = match selector {
        PairSelector::Tracked(p) => {
            let n = diagram.level_count();
            if p.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
                return Err(Error::InvalidParameter("tracked pair index out of range".into()));
            }
            p.clone()
        }
        PairSelector::LowestPairPerNuclearLabel => {
            let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
            for t in 0..first.len() {
                let label = first.nuclear_label(t);
                match groups.iter_mut().find(|(l, _)| *l == label) {
                    Some((_, g)) => g.push(t),
                    None => groups.push((label, vec![t])),
                }
            }
            // sorted indices already ascend in energy
            groups
                .into_iter()
                .filter(|(_, g)| g.len() >= 2)
                .map(|(_, g)| (g[0], g[1]))
                .collect()
        }
    };

    let grid = &diagram.magnitudes;
    let mut found = Vec::new();
    for (ta, tb) in pairs {
        let sep: Vec<f64> = (0..diagram.len())
            .map(|p| {
                let e = &diagram.points[p].energies;
                (e[tracks[ta][p]] - e[tracks[tb][p]]).abs()
            })
            .collect();

        for p in 0..diagram.len() {
            let bracket = if p > 0 && p + 1 < diagram.len() {
                if sep[p] < sep[p - 1] && sep[p] <= sep[p + 1] {
                    Some((grid[p - 1], grid[p + 1]))
                } else {
                    None
                }
            } else if p == 0 && grid[0] == 0.0 && sep[0] <= sep[1] {
                let mirrored = separation_at(
                    &builder,
                    diagram,
                    -grid[1],
                    &diagram.points[0],
                    tracks[ta][0],
                    tracks[tb][0],
                )?
                .0;
                (sep[0] <= mirrored).then(|| (-grid[1], grid[1]))
            } else {
                None
            };
            let Some((lo, hi)) = bracket else { continue };
            let reference = &diagram.points[p];
            let (ia, ib) = (tracks[ta][p], tracks[tb][p]);
            let center = golden_section(lo, hi, options.field_tolerance_t, |x| {
                separation_at(&builder, diagram, x, reference, ia, ib).map(|r| r.0)
            })?;
            let center = if center.abs() < options.field_tolerance_t {
                0.0
            } else {
                center.abs()
            };
            let (gap, sol, ca, cb) = separation_at(&builder, diagram, center, reference, ia, ib)?;
            let kind = if gap < options.crossing_threshold_ghz {
                CrossingKind::Crossing
            } else {
                CrossingKind::Anticrossing
            };
            found.push(Anticrossing {
                field_center_t: center,
                gap_ghz: gap,
                level_pair: (ca.min(cb), ca.max(cb)),
                nuclear_label: round_half_integer(sol.iz_expect[ca]),
                kind,
                multiplicity: 1,
            });
        }
    }

    found.sort_by(|a, b| {
        a.field_center_t
            .total_cmp(&b.field_center_t)
            .then(a.gap_ghz.total_cmp(&b.gap_ghz))
    });
    let mut merged: Vec<Anticrossing> = Vec::new();
    for ac in found {
        if let Some(last) = merged.last_mut() {
            let same_field = (last.field_center_t - ac.field_center_t).abs() < 1e-4;
            let same_gap = (last.gap_ghz - ac.gap_ghz).abs() <= 1e-6 * last.gap_ghz.max(ac.gap_ghz) + 1e-9;
            if same_field && same_gap && last.kind == ac.kind {
                last.multiplicity += 1;
                let better = ac.nuclear_label.abs() < last.nuclear_label.abs()
                    || (ac.nuclear_label.abs() == last.nuclear_label.abs() && ac.nuclear_label > last.nuclear_label);
                if better {
                    last.nuclear_label = ac.nuclear_label;
                    last.level_pair = ac.level_pair;
                }
                continue;
            }
        }
        merged.push(ac);
    }
    Ok(merged)
}

/// Separation of the levels continuing `ia`/`ib` of `reference` at signed amplitude `x`.
fn separation_at(
    builder: &HamiltonianBuilder,
    diagram: &LevelDiagram,
    x: f64,
    reference: &EigenSolution,
    ia: usize,
    ib: usize,
) -> Result<(f64, EigenSolution, usize, usize)> {
    let sol = builder.solve_cartesian(diagram.direction.at(x))?;
    let best = |target: usize, exclude: Option<usize>| {
        let v = reference.vectors.column(target);
        let mut best = (0usize, -1.0);
        for k in 0..sol.len() {
            if Some(k) == exclude {
                continue;
            }
            let w = v.dotc(&sol.vectors.column(k)).norm_sqr();
            if w > best.1 {
                best = (k, w);
            }
        }
        best.0
    };
    let ca = best(ia, None);
    let cb = best(ib, Some(ca));
    let gap = (sol.energies[ca] - sol.energies[cb]).abs();
    Ok((gap, sol, ca, cb))
}

/// Minimize a unimodal function on [lo, hi] to bracket width `tol`.
pub(crate) fn golden_section<F>(mut lo: f64, mut hi: f64, tol: f64, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (lo + hi))
}
