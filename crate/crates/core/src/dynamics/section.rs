//! Poincare sections, periodic-orbit search and rotation numbers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{Control, Flow, IntegrateOptions, Termination};
use crate::construct::ConstructionModel;
use crate::error::{Error, Result};
use crate::field::VectorField;

/// The hypersurface `p[coord] = value`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub coord: usize,
    pub value: f64,
}

impl Section {
    pub fn of(model: &ConstructionModel) -> Result<Section> {
        model
            .section
            .map(|(coord, value)| Section { coord, value })
            .ok_or_else(|| Error::Param(format!("model `{}` declares no section", model.name())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnOptions {
    /// Longest time allowed between consecutive crossings.
    pub time_guard: f64,
    /// Smallest acceptable `|X^coord|` at a crossing.
    pub min_transversal: f64,
    /// Crossings closer than this in time count once.
    pub merge_window: f64,
    pub integrate: IntegrateOptions,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        ReturnOptions {
            time_guard: 100.0,
            min_transversal: 1e-6,
            merge_window: 1e-8,
            integrate: IntegrateOptions {
                rtol: 1e-12,
                atol: 1e-12,
                record: false,
                ..Default::default()
            },
        }
    }
}

/// Successive section crossings of one orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Returns {
    /// Unwrapped states at the crossings (the section coordinate is exact).
    pub points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

/// The first `k` returns of the orbit through `p0` to `section`.
pub fn return_map(flow: &Flow, section: Section, p0: &[f64], k: usize, opts: &ReturnOptions) -> Result<Returns> {
    let c = section.coord;
    let period = flow.period(c);
    let on = match period {
        Some(per) => (p0[c] - section.value)
            .rem_euclid(per)
            .min(per - (p0[c] - section.value).rem_euclid(per)),
        None => (p0[c] - section.value).abs(),
    };
    if on > 1e-9 {
        return Err(Error::Param(format!(
            "{p0:?} is not on the section {} = {}",
            flow.chart().factor(c).name,
            section.value
        )));
    }
    let rate = flow.eval(p0)[c];
    if !(rate.abs() >= opts.min_transversal) {
        return Err(Error::Degenerate(format!("section is not transverse at {p0:?} (X^{c} = {rate:e})")));
    }
    let dir = rate.signum();
    let mut y = p0.to_vec();
    let mut t_total = 0.0;
    let mut out = Returns {
        points: Vec::with_capacity(k),
        times: Vec::with_capacity(k),
    };
    for _ in 0..k {
        let (next, prev) = match period {
            Some(per) => {
                let m = ((y[c] - section.value) / per).round();
                let here = section.value + m * per;
                (here + dir * per, here - dir * per)
            }
            None => (section.value, f64::NAN),
        };
        let mut hit: Option<(f64, Vec<f64>)> = None;
        let mut fail: Option<Error> = None;
        let end = flow.run(&y, opts.time_guard, &opts.integrate, |s| {
            let (a, b) = (s.y0[c], s.comp(c, s.t1));
            let crosses = |target: f64| (a - target) * (b - target) <= 0.0 && a != b;
            if period.is_some() && crosses(prev) && (prev - a) * dir < 0.0 && s.t1 > opts.merge_window {
                fail = Some(Error::Degenerate(format!("orbit from {p0:?} recrossed the section backwards")));
                return Control::Stop { t: s.t1, y: s.state(s.t1) };
            }
            if crosses(next) {
                if let Some(tc) = s.locate(c, next, s.t0, s.t1) {
                    if tc <= opts.merge_window {
                        return Control::Continue;
                    }
                    let mut yc = s.state(tc);
                    let r = flow.eval(&yc)[c];
                    if !(r * dir >= opts.min_transversal) {
                        fail = Some(Error::Degenerate(format!("section is not transverse at {yc:?} (X^{c} = {r:e})")));
                    }
                    yc[c] = next;
                    hit = Some((tc, yc.clone()));
                    return Control::Stop { t: tc, y: yc };
                }
            }
            Control::Continue
        })?;
        if let Some(e) = fail {
            return Err(e);
        }
        match (hit, end.termination) {
            (Some((tc, yc)), _) => {
                t_total += tc;
                out.times.push(t_total);
                out.points.push(yc.clone());
                y = yc;
            }
            (None, Termination::TimeBudget) => {
                return Err(Error::Integration(format!(
                    "no section crossing within {} time units of {y:?}",
                    opts.time_guard
                )))
            }
            (None, Termination::FaceExit { coord, value }) => {
                return Err(Error::Integration(format!(
                    "orbit left the chart through {} = {value} before returning",
                    flow.chart().factor(coord).name
                )))
            }
            (None, other) => return Err(Error::Integration(format!("orbit ended with {other:?} before returning"))),
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub max_period: usize,
    /// Fixed-point residual (sup norm over section coordinates) accepted as a candidate.
    pub tol: f64,
    pub max_newton: usize,
    pub fd_step: f64,
    pub returns: ReturnOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_period: 20,
            tol: 1e-8,
            max_newton: 12,
            fd_step: 1e-9,
            returns: ReturnOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Wrapped point on the section.
    pub point: Vec<f64>,
    /// Minimal period (number of returns).
    pub period: usize,
    pub residual: f64,
    pub seed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub model: String,
    pub section: Section,
    pub seeds: usize,
    pub max_period: usize,
    pub tol: f64,
    pub candidates: Vec<Candidate>,
    /// Smallest `|P^k(s) - s|` over seeds and periods that could be computed.
    pub min_displacement: Option<f64>,
    pub min_displacement_period: Option<usize>,
    /// Seeds whose first return could not be computed, with the reason.
    pub failed_seeds: Vec<(usize, String)>,
}

impl SearchReport {
    /// "none found up to period k at tolerance tol", never a proof.
    pub fn summary(&self) -> String {
        if self.candidates.is_empty() {
            format!(
                "no periodic orbit found up to period {} at tolerance {:e} from {} seeds",
                self.max_period, self.tol, self.seeds
            )
        } else {
            format!("{} periodic candidate(s) up to period {}", self.candidates.len(), self.max_period)
        }
    }
}

/// Sup-norm displacement between two section points (circle-aware), skipping the section coordinate.
fn displacement(flow: &Flow, c: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    flow.chart()
        .difference(a, b)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i != c)
        .map(|(_, v)| v)
        .collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

struct Searcher<'a> {
    flow: &'a Flow,
    section: Section,
    opts: &'a SearchOptions,
}

impl Searcher<'_> {
    fn residual(&self, p: &[f64], k: usize) -> Result<Vec<f64>> {
        let r = return_map(self.flow, self.section, p, k, &self.opts.returns)?;
        let (pk, _) = self.flow.split(r.points.last().expect("k >= 1"));
        let (p0, _) = self.flow.split(p);
        Ok(displacement(self.flow, self.section.coord, &p0, &pk))
    }

    fn newton(&self, seed: &[f64], k: usize) -> Option<(Vec<f64>, f64)> {
        let c = self.section.coord;
        let free: Vec<usize> = (0..seed.len()).filter(|&i| i != c).collect();
        let mut p = seed.to_vec();
        let mut f = self.residual(&p, k).ok()?;
        for _ in 0..self.opts.max_newton {
            if sup(&f) < self.opts.tol {
                return Some((p, sup(&f)));
            }
            let m = free.len();
            let mut jac = DMatrix::zeros(m, m);
            for (col, &i) in free.iter().enumerate() {
                let mut q = p.clone();
                q[i] += self.opts.fd_step;
                let fq = self.residual(&q, k).ok()?;
                for row in 0..m {
                    jac[(row, col)] = (fq[row] - f[row]) / self.opts.fd_step;
                }
            }
            let svd = jac.svd(true, true);
            let smax = svd.singular_values.max();
            let eps = (1e-10 * smax).max(1e-300);
            let step = svd.solve(&DVector::from_vec(f.clone()), eps).ok()?;
            if step.iter().all(|s| *s == 0.0) {
                return None;
            }
            for (j, &i) in free.iter().enumerate() {
                p[i] -= step[j];
            }
            if !self.flow.chart().contains(&p, 0.0) {
                return None;
            }
            f = self.residual(&p, k).ok()?;
        }
        (sup(&f) < self.opts.tol).then(|| (p, sup(&f)))
    }
}

/// Newton search for fixed points of `P^k`, `k <= max_period`, from each seed.
pub fn periodic_orbit_search(model: &ConstructionModel, seeds: &[Vec<f64>], opts: &SearchOptions) -> Result<SearchReport> {
    let section = Section::of(model)?;
    let flow = Flow::new(&model.x);
    search_flow(&flow, model.name(), section, seeds, opts)
}

pub fn search_flow(flow: &Flow, name: &str, section: Section, seeds: &[Vec<f64>], opts: &SearchOptions) -> Result<SearchReport> {
    if opts.max_period == 0 {
        return Err(Error::Param("max period must be at least 1".into()));
    }
    let s = Searcher { flow, section, opts };
    struct SeedResult {
        disp: Option<(f64, usize)>,
        failure: Option<String>,
        found: Vec<(Vec<f64>, usize, f64)>,
    }
    let per_seed: Vec<SeedResult> = seeds
        .par_iter()
        .map(|seed| {
            let mut out = SeedResult {
                disp: None,
                failure: None,
                found: vec![],
            };
            let orbit = match return_map(flow, section, seed, opts.max_period, &opts.returns) {
                Ok(r) => r.points,
                Err(_) => {
                    // Keep the longest prefix that exists.
                    let mut pts = Vec::new();
                    let mut y = seed.clone();
                    for _ in 0..opts.max_period {
                        match return_map(flow, section, &y, 1, &opts.returns) {
                            Ok(r) => {
                                y = r.points[0].clone();
                                pts.push(y.clone());
                            }
                            Err(e) => {
                                if pts.is_empty() {
                                    out.failure = Some(e.to_string());
                                }
                                break;
                            }
                        }
                    }
                    pts
                }
            };
            let (p0, _) = flow.split(seed);
            for (j, q) in orbit.iter().enumerate() {
                let (q, _) = flow.split(q);
                let d = sup(&displacement(flow, section.coord, &p0, &q));
                if out.disp.is_none_or(|(m, _)| d < m) {
                    out.disp = Some((d, j + 1));
                }
            }
            for k in 1..=orbit.len() {
                if let Some((p, res)) = s.newton(seed, k) {
                    out.found.push((p, k, res));
                }
            }
            out
        })
        .collect();
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut failed = Vec::new();
    let mut min_disp: Option<(f64, usize)> = None;
    for (i, r) in per_seed.into_iter().enumerate() {
        if let Some(f) = r.failure {
            failed.push((i, f));
        }
        if let Some((d, k)) = r.disp {
            if min_disp.is_none_or(|(m, _)| d < m) {
                min_disp = Some((d, k));
            }
        }
        for (p, k, res) in r.found {
            let period = minimal_period(&s, &p, k);
            let (pw, _) = flow.split(&p);
            if !candidates.iter().any(|c| same_orbit(&s, c, &pw)) {
                candidates.push(Candidate {
                    point: pw,
                    period,
                    residual: res,
                    seed: i,
                });
            }
        }
    }
    Ok(SearchReport {
        model: name.into(),
        section,
        seeds: seeds.len(),
        max_period: opts.max_period,
        tol: opts.tol,
        candidates,
        min_displacement: min_disp.map(|d| d.0),
        min_displacement_period: min_disp.map(|d| d.1),
        failed_seeds: failed,
    })
}

fn minimal_period(s: &Searcher, p: &[f64], k: usize) -> usize {
    for j in 1..k {
        if k.is_multiple_of(j) {
            if let Ok(f) = s.residual(p, j) {
                if sup(&f) < 10.0 * s.opts.tol {
                    return j;
                }
            }
        }
    }
    k
}

fn same_orbit(s: &Searcher, c: &Candidate, p: &[f64]) -> bool {
    let close = |q: &[f64]| sup(&displacement(s.flow, s.section.coord, q, p)) < 1e-6;
    if close(&c.point) {
        return true;
    }
    match return_map(s.flow, s.section, &c.point, c.period.saturating_sub(1), &s.opts.returns) {
        Ok(r) => r.points.iter().any(|q| close(&s.flow.split(q).0)),
        Err(_) => false,
    }
}

/// Seeds on the section: every combination of `center - spread`, `center`,
/// `center + spread` over the section's free coordinates, where `center` is
/// 0 when it lies in the factor and its midpoint otherwise.
pub fn default_seeds(model: &ConstructionModel, spread: f64) -> Result<Vec<Vec<f64>>> {
    let section = Section::of(model)?;
    let d = model.dim();
    let mut seeds = vec![vec![0.0; d]];
    for i in 0..d {
        if i == section.coord {
            for s in &mut seeds {
                s[i] = section.value;
            }
            continue;
        }
        let (lo, hi) = model.chart.factor(i).range();
        let center = if model.chart.factor(i).is_periodic() || (lo <= 0.0 && 0.0 <= hi) {
            0.0
        } else {
            0.5 * (lo + hi)
        };
        seeds = seeds
            .into_iter()
            .flat_map(|s| {
                [-spread, 0.0, spread].into_iter().map(move |o| {
                    let mut s = s.clone();
                    s[i] = center + o;
                    s
                })
            })
            .collect();
    }
    if let Some(per) = model
        .chart
        .factor(section.coord)
        .is_periodic()
        .then(|| model.chart.factor(section.coord).range().1)
    {
        for s in &mut seeds {
            s[section.coord] = section.value.rem_euclid(per);
        }
    }
    Ok(seeds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationVector {
    pub coords: Vec<usize>,
    pub names: Vec<String>,
    /// Total angular displacement over `time`, per periodic coordinate.
    pub displacement: Vec<f64>,
    pub vector: Vec<f64>,
    /// `period / time`, the resolution of the estimate.
    pub error: Vec<f64>,
    pub time: f64,
}

impl RotationVector {
    /// Ratio of the windings of two periodic coordinates (indices into the chart).
    pub fn ratio(&self, num: usize, den: usize) -> Option<f64> {
        let a = self.coords.iter().position(|&c| c == num)?;
        let b = self.coords.iter().position(|&c| c == den)?;
        Some(self.displacement[a] / self.displacement[b])
    }
}

/// Mean winding per unit time of every periodic coordinate along the orbit of `p0`.
pub fn rotation_vector(x: &VectorField, p0: &[f64], t: f64, opts: &IntegrateOptions) -> Result<RotationVector> {
    let flow = Flow::new(x);
    let opts = IntegrateOptions { record: false, ..*opts };
    let end = flow.run(p0, t, &opts, |_| Control::Continue)?;
    if end.termination != Termination::TimeBudget {
        return Err(Error::Integration(format!(
            "orbit from {p0:?} left the region: {:?}",
            end.termination
        )));
    }
    let coords = flow.periodic_coords();
    let displacement: Vec<f64> = coords.iter().map(|&i| end.y[i] - p0[i]).collect();
    Ok(RotationVector {
        names: coords.iter().map(|&i| x.chart().factor(i).name.clone()).collect(),
        vector: displacement.iter().map(|d| d / t).collect(),
        error: coords.iter().map(|&i| flow.period(i).unwrap_or(0.0) / t).collect(),
        displacement,
        coords,
        time: t,
    })
}

/// Denominators of the continued-fraction convergents of `x`, up to and
/// including the first one above `qmax`.
pub fn convergent_denominators(x: f64, qmax: u64) -> Vec<u64> {
    let mut out = vec![];
    let (mut q_prev, mut q) = (0u64, 1u64);
    let mut r = x - x.floor();
    out.push(1);
    while q <= qmax && r > 1e-15 {
        let inv = 1.0 / r;
        let a = inv.floor();
        r = inv - a;
        let next = (a as u64).saturating_mul(q).saturating_add(q_prev);
        q_prev = q;
        q = next;
        out.push(q);
    }
    out.dedup();
    out
}

/// Three-distance lower bound `1 / (q_n + q_{n+1})` on `min_{q <= qmax} ||q x||`,
/// where `q_n <= qmax < q_{n+1}` are consecutive convergent denominators.
pub fn three_distance_bound(x: f64, qmax: u64) -> f64 {
    let qs = convergent_denominators(x, qmax);
    let n = qs.iter().rposition(|&q| q <= qmax).unwrap_or(0);
    match qs.get(n + 1) {
        Some(next) => 1.0 / (qs[n] + next) as f64,
        None => 0.0,
    }
}

/// `min_{1 <= q <= qmax} max_i ||q v_i||` (distance to the nearest integer).
pub fn min_circle_displacement(v: &[f64], qmax: u64) -> (f64, u64) {
    (1..=qmax)
        .map(|q| {
            let d = v.iter().map(|x| {
                let y = q as f64 * x;
                (y - y.round()).abs()
            });
            (d.fold(0.0f64, f64::max), q)
        })
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{Construction, GOLDEN};

    #[test]
    fn suspension_return_is_translation() {
        let v = vec![2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0];
        let m = Construction::suspension(v.clone()).build().unwrap();
        let flow = Flow::new(&m.x);
        let p0 = [0.0, 0.25, 0.5];
        let r = return_map(&flow, Section::of(&m).unwrap(), &p0, 3, &ReturnOptions::default()).unwrap();
        for (k, q) in r.points.iter().enumerate() {
            let (w, _) = flow.split(q);
            for i in 0..2 {
                let expect = (p0[i + 1] + (k + 1) as f64 * v[i]).rem_euclid(1.0);
                assert!((w[i + 1] - expect).abs() < 1e-8);
            }
            assert!((r.times[k] - (k + 1) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn rational_suspension_has_period_six() {
        let m = Construction::suspension(vec![1.0 / 3.0, 0.5]).build().unwrap();
        let flow = Flow::new(&m.x);
        let p0 = [0.0, 0.1, 0.2];
        let r = return_map(&flow, Section::of(&m).unwrap(), &p0, 6, &ReturnOptions::default()).unwrap();
        let (w, _) = flow.split(&r.points[5]);
        assert!(m.chart.difference(&p0, &w).iter().all(|d| d.abs() < 1e-8));
        let opts = SearchOptions {
            max_period: 6,
            ..Default::default()
        };
        let rep = periodic_orbit_search(&m, &[p0.to_vec()], &opts).unwrap();
        assert_eq!(rep.candidates.len(), 1);
        assert_eq!(rep.candidates[0].period, 6);
    }

    #[test]
    fn round_morse_fixed_point_is_the_critical_circle() {
        let m = Construction::round_morse(2, 0).build().unwrap();
        let seeds = default_seeds(&m, 1e-7).unwrap();
        let rep = periodic_orbit_search(
            &m,
            &seeds,
            &SearchOptions {
                max_period: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(rep.candidates.len(), 1, "{rep:?}");
        let c = &rep.candidates[0];
        assert_eq!(c.period, 1);
        assert!(c.point[1..].iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn continued_fraction_of_the_golden_mean() {
        let g = GOLDEN - 1.0;
        assert_eq!(convergent_denominators(g, 50), vec![1, 2, 3, 5, 8, 13, 21, 34, 55]);
        let b = three_distance_bound(g, 50);
        assert!((b - 1.0 / 89.0).abs() < 1e-15);
        let (d, q) = min_circle_displacement(&[g, 2.0 - GOLDEN], 50);
        assert_eq!(q, 34);
        assert!(d >= b && d <= 2.0 * b);
    }

    #[test]
    fn rotation_of_a_linear_flow() {
        let m = Construction::suspension(vec![0.3, 0.7]).build().unwrap();
        let r = rotation_vector(&m.x, &[0.0, 0.0, 0.0], 1e4, &IntegrateOptions::default()).unwrap();
        for (a, b) in r.vector.iter().zip([1.0, 0.3, 0.7]) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
