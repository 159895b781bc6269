//! Plug experiments: single traversals, entry-face scans, and flow-map checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{flow_map, Control, Flow, IntegrateOptions, Termination};
use crate::chart::FactorKind;
use crate::construct::{ConstructionModel, PlugSpec};
use crate::error::{Error, Result};
use crate::expr::Tape;

/// Entry points must sit on the entry face to within this.
pub const FACE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraverseOptions {
    /// Time budget; orbits still inside at `t_max` are reported as trapped.
    pub t_max: f64,
    pub integrate: IntegrateOptions,
}

impl Default for TraverseOptions {
    fn default() -> Self {
        TraverseOptions {
            t_max: 1e3,
            integrate: IntegrateOptions {
                record: false,
                ..Default::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TraversalOutcome {
    Exit {
        exit_point: Vec<f64>,
        transit_time: f64,
        /// Exit minus entry in the non-axis coordinates, full turns included.
        displacement: Vec<f64>,
        max_displacement: f64,
    },
    Trapped {
        time_budget: f64,
        closest_approach: f64,
        final_distance: f64,
        /// Distance to the trapped set never increased over the second half of the run.
        monotone: bool,
    },
}

impl TraversalOutcome {
    pub fn is_trapped(&self) -> bool {
        matches!(self, TraversalOutcome::Trapped { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    pub entry: Vec<f64>,
    pub outcome: TraversalOutcome,
    /// Largest `|H(p(t)) - H(p(0))|`, when the plug carries a Hamiltonian.
    pub h_drift: Option<f64>,
    pub steps: usize,
}

fn plug_of(model: &ConstructionModel) -> Result<&PlugSpec> {
    model
        .plug
        .as_ref()
        .ok_or_else(|| Error::Param(format!("model `{}` is not a plug", model.name())))
}

/// Follow the orbit entering at `entry` until it leaves through the exit
/// face or the time budget runs out.
pub fn traverse_plug(model: &ConstructionModel, entry: &[f64], opts: &TraverseOptions) -> Result<Traversal> {
    let flow = Flow::new(&model.x);
    traverse_with(model, &flow, entry, opts)
}

fn traverse_with(model: &ConstructionModel, flow: &Flow, entry: &[f64], opts: &TraverseOptions) -> Result<Traversal> {
    let plug = plug_of(model)?;
    let ax = plug.axis;
    if entry.len() != model.dim() || (entry[ax] - plug.entry).abs() > FACE_TOL || !model.chart.contains(entry, 0.0) {
        return Err(Error::Param(format!(
            "{entry:?} is not on the entry face {} = {}",
            model.chart.factor(ax).name,
            plug.entry
        )));
    }
    let h = model.hamiltonian.as_ref().map(|e| Tape::new(std::slice::from_ref(e)));
    let h0 = h.as_ref().map(|t| t.eval(entry)[0]);
    let mut h_drift: f64 = 0.0;
    let mut dist = vec![(0.0, plug.trapped.distance(entry))];
    let mut steps = 0;
    let mut wrapped = vec![0.0; entry.len()];
    let end = flow.run(entry, opts.t_max, &opts.integrate, |s| {
        steps += 1;
        let y = if s.t1 < s.t0 + s.h { s.state(s.t1) } else { s.y1.to_vec() };
        let (p, _) = flow.split(&y);
        wrapped.copy_from_slice(&p);
        if let (Some(t), Some(h0)) = (&h, h0) {
            h_drift = h_drift.max((t.eval(&wrapped)[0] - h0).abs());
        }
        dist.push((s.t1, plug.trapped.distance(&wrapped)));
        Control::Continue
    })?;
    let outcome = match end.termination {
        Termination::FaceExit { coord, value } if coord == ax && value == plug.exit => {
            let (exit_point, _) = flow.split(&end.y);
            let displacement: Vec<f64> = (0..entry.len()).filter(|&i| i != ax).map(|i| end.y[i] - entry[i]).collect();
            let max_displacement = displacement.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            TraversalOutcome::Exit {
                exit_point,
                transit_time: end.t,
                displacement,
                max_displacement,
            }
        }
        Termination::FaceExit { coord, value } => {
            return Err(Error::Integration(format!(
                "orbit from {entry:?} left `{}` through the face {} = {value} at t = {}",
                model.name(),
                model.chart.factor(coord).name,
                end.t
            )))
        }
        Termination::TimeBudget => {
            let closest = dist.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
            let final_distance = dist.last().map(|d| d.1).unwrap_or(f64::INFINITY);
            let half = opts.t_max / 2.0;
            let tail: Vec<f64> = dist.iter().filter(|d| d.0 >= half).map(|d| d.1).collect();
            let monotone = tail.windows(2).all(|w| w[1] <= w[0] + 1e-12);
            TraversalOutcome::Trapped {
                time_budget: opts.t_max,
                closest_approach: closest,
                final_distance,
                monotone,
            }
        }
        other => {
            return Err(Error::Integration(format!("orbit from {entry:?} ended with {other:?}")));
        }
    };
    Ok(Traversal {
        entry: entry.to_vec(),
        outcome,
        h_drift: h0.map(|_| h_drift),
        steps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub i: usize,
    pub j: usize,
    pub entry: Vec<f64>,
    pub trapped: bool,
    /// Matched-ends violation for exits, closest approach for trapped cells.
    pub value: f64,
    pub transit_time: Option<f64>,
    pub in_window: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub model: String,
    pub grid: usize,
    /// Names of the two swept coordinates.
    pub axes: [String; 2],
    pub t_max: f64,
    pub cells: Vec<ScanCell>,
    pub exits: usize,
    pub trapped: usize,
    pub trapped_fraction: f64,
    pub max_displacement: f64,
    pub max_h_drift: Option<f64>,
    /// Cells whose outcome disagrees with the declared trap window.
    pub window_mismatches: Option<usize>,
}

/// Entry point of cell `(i, j)` of a `grid x grid` sweep of the entry face.
pub fn scan_entry(model: &ConstructionModel, plug: &PlugSpec, grid: usize, i: usize, j: usize) -> Vec<f64> {
    let mut p: Vec<f64> = model
        .chart
        .factors()
        .iter()
        .map(|f| match f.kind {
            FactorKind::Periodic { .. } => 0.0,
            FactorKind::Interval { lo, hi } => {
                if lo <= 0.0 && 0.0 <= hi {
                    0.0
                } else {
                    0.5 * (lo + hi)
                }
            }
        })
        .collect();
    p[plug.axis] = plug.entry;
    for (k, idx) in [i, j].into_iter().enumerate() {
        let c = plug.scan[k];
        let (lo, hi) = model.chart.factor(c).range();
        p[c] = lo + (hi - lo) * (idx as f64 + 0.5) / grid as f64;
    }
    p
}

/// Sweep a `grid x grid` set of entry points (cell centers of the two scan
/// coordinates) and classify every orbit.
pub fn matched_ends_scan(model: &ConstructionModel, grid: usize, opts: &TraverseOptions) -> Result<ScanReport> {
    let plug = plug_of(model)?;
    if grid == 0 {
        return Err(Error::Param("scan grid must be positive".into()));
    }
    let flow = Flow::new(&model.x);
    let jobs: Vec<(usize, usize)> = (0..grid).flat_map(|i| (0..grid).map(move |j| (i, j))).collect();
    let results: Vec<Result<Traversal>> = jobs
        .par_iter()
        .map(|&(i, j)| traverse_with(model, &flow, &scan_entry(model, plug, grid, i, j), opts))
        .collect();
    let mut cells = Vec::with_capacity(jobs.len());
    let mut exits = 0;
    let mut max_displacement: f64 = 0.0;
    let mut max_h: Option<f64> = None;
    let mut mismatches = plug.window.as_ref().map(|_| 0);
    for ((i, j), r) in jobs.into_iter().zip(results) {
        let tr = r?;
        if let Some(d) = tr.h_drift {
            max_h = Some(max_h.map_or(d, |m| m.max(d)));
        }
        let in_window = plug.window.as_ref().map(|w| w.contains(&tr.entry));
        let (trapped, value, transit) = match &tr.outcome {
            TraversalOutcome::Exit {
                max_displacement: d,
                transit_time,
                ..
            } => {
                exits += 1;
                max_displacement = max_displacement.max(*d);
                (false, *d, Some(*transit_time))
            }
            TraversalOutcome::Trapped { closest_approach, .. } => (true, *closest_approach, None),
        };
        if let (Some(w), Some(m)) = (in_window, mismatches.as_mut()) {
            if w != trapped {
                *m += 1;
            }
        }
        cells.push(ScanCell {
            i,
            j,
            entry: tr.entry,
            trapped,
            value,
            transit_time: transit,
            in_window,
        });
    }
    let total = cells.len();
    Ok(ScanReport {
        model: model.name().into(),
        grid,
        axes: plug.scan.map(|c| model.chart.factor(c).name.clone()),
        t_max: opts.t_max,
        exits,
        trapped: total - exits,
        trapped_fraction: (total - exits) as f64 / total as f64,
        max_displacement,
        max_h_drift: max_h,
        window_mismatches: mismatches,
        cells,
    })
}

/// `det D(phi_t)(p)` by central differences of nearby orbits (step `eps`).
pub fn flow_jacobian_det(flow: &Flow, p: &[f64], t: f64, eps: f64, opts: &IntegrateOptions) -> Result<f64> {
    let d = p.len();
    let mut jac = nalgebra::DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[j] += eps;
        b[j] -= eps;
        let fa = flow_map(flow, &a, t, opts)?;
        let fb = flow_map(flow, &b, t, opts)?;
        for i in 0..d {
            jac[(i, j)] = (fa[i] - fb[i]) / (2.0 * eps);
        }
    }
    Ok(jac.determinant())
}

/// `|phi_{-T}(phi_T(p)) - p|_inf`.
pub fn reversibility_error(model: &ConstructionModel, p: &[f64], t: f64, opts: &IntegrateOptions) -> Result<f64> {
    let fwd = Flow::new(&model.x);
    let back = Flow::new(&model.x.scale(&crate::expr::Expr::constant(-1.0)));
    let q = flow_map(&fwd, p, t, opts)?;
    let r = flow_map(&back, &q, t, opts)?;
    Ok(r.iter().zip(p).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{separatrix_radius, Construction};

    fn fast() -> TraverseOptions {
        TraverseOptions::default()
    }

    #[test]
    fn standard_plug_center_is_trapped() {
        let m = Construction::wilson_standard(5).build().unwrap();
        let tr = traverse_plug(&m, &[-2.0, 0.0, 0.0, 0.0, 0.0], &fast()).unwrap();
        match tr.outcome {
            TraversalOutcome::Trapped {
                closest_approach,
                monotone,
                ..
            } => {
                assert!(closest_approach < 1e-3, "{closest_approach}");
                assert!(monotone);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn standard_plug_outside_window_exits_matched() {
        let m = Construction::wilson_standard(5).build().unwrap();
        let tr = traverse_plug(&m, &[-2.0, 0.3, 1.1, 1.8, 0.2], &fast()).unwrap();
        match tr.outcome {
            TraversalOutcome::Exit {
                max_displacement,
                exit_point,
                ..
            } => {
                assert!(max_displacement < 1e-6, "{max_displacement}");
                assert_eq!(exit_point[0], 2.0);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn vp_separatrix_is_trapped_and_h_is_conserved() {
        let m = Construction::vp_plug(5).build().unwrap();
        let r = separatrix_radius(&m).unwrap();
        let tr = traverse_plug(&m, &[0.0, 0.0, 0.0, r, -1.0], &fast()).unwrap();
        assert!(tr.h_drift.unwrap() < 1e-8);
        match tr.outcome {
            TraversalOutcome::Trapped { closest_approach, .. } => assert!(closest_approach < 1e-2),
            o => panic!("{o:?}"),
        }
        let tr = traverse_plug(&m, &[0.0, 1.0, 2.0, 1.3, -1.0], &fast()).unwrap();
        assert!(tr.h_drift.unwrap() < 1e-8);
        match tr.outcome {
            TraversalOutcome::Exit { max_displacement, .. } => assert!(max_displacement < 1e-6, "{max_displacement}"),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn entry_off_the_face_is_rejected() {
        let m = Construction::vp_plug(5).build().unwrap();
        assert!(traverse_plug(&m, &[0.0, 0.0, 0.0, 1.3, -0.5], &fast()).is_err());
    }

    #[test]
    fn single_cell_scan_matches_traversal() {
        let m = Construction::vp_plug(5).build().unwrap();
        let s = matched_ends_scan(&m, 1, &fast()).unwrap();
        let tr = traverse_plug(&m, &s.cells[0].entry, &fast()).unwrap();
        match tr.outcome {
            TraversalOutcome::Exit { max_displacement, .. } => assert_eq!(max_displacement, s.max_displacement),
            TraversalOutcome::Trapped { closest_approach, .. } => assert_eq!(closest_approach, s.cells[0].value),
        }
    }

    #[test]
    fn vp_flow_preserves_volume_and_reverses() {
        let m = Construction::vp_plug(5).build().unwrap();
        let flow = Flow::new(&m.x);
        let opts = IntegrateOptions {
            rtol: 1e-12,
            atol: 1e-12,
            ..Default::default()
        };
        for p in [[0.1, 0.2, 0.3, 1.3, -0.6], [1.0, 2.0, 3.0, 1.7, 0.4]] {
            let det = flow_jacobian_det(&flow, &p, 10.0, 1e-5, &opts).unwrap();
            assert!((det - 1.0).abs() < 1e-4, "{det}");
            assert!(reversibility_error(&m, &p, 10.0, &opts).unwrap() < 1e-7);
        }
    }
}
