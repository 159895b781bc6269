//! SVG plots: Hamiltonian level curves, radial profiles, orbit projections
//! and trap grids.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use beltlab::construct::singular_points;
use beltlab::{standard_profiles, Tape};

use crate::files::{emit, load_model};
use crate::svg::{esc, n, polyline, Frame, Svg};
use crate::{Outcome, PlotArgs, PlotKind};

pub fn plot(a: &PlotArgs) -> Result<Outcome> {
    let input = || {
        a.input
            .as_deref()
            .ok_or_else(|| anyhow!("plot --kind {:?} needs an input file", a.kind))
    };
    let svg = match a.kind {
        PlotKind::Hfield => hfield(input()?)?,
        PlotKind::Profiles => {
            if a.input.is_some() {
                bail!("plot --kind profiles takes no input");
            }
            profiles()
        }
        PlotKind::Orbit => {
            let (header, rows) = read_csv(input()?)?;
            orbit(&header, &rows, a.axes.as_deref())?
        }
        PlotKind::Trapgrid => {
            let (header, rows) = read_csv(input()?)?;
            trapgrid(&header, &rows)?
        }
    };
    emit(a.output.as_deref(), svg.as_bytes())?;
    Ok(Outcome::Success)
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r
        .headers()
        .with_context(|| format!("reading the header of {}", path.display()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = vec![];
    for (k, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: malformed CSV at data row {}", path.display(), k + 1))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("CSV has no `{name}` column"))
}

fn parse(s: &str, row: usize, col: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| anyhow!("malformed CSV: row {row}, column `{col}`: `{s}` is not a number"))
}

/// Marching squares over a row-major `values[i * nz + j]` grid at `(xs[i], ys[j])`.
/// Returns the segments of the curve `value = level`.
fn contour(xs: &[f64], ys: &[f64], values: &[f64], level: f64) -> Vec<[(f64, f64); 2]> {
    let nz = ys.len();
    let v = |i: usize, j: usize| values[i * nz + j] - level;
    let mut out = vec![];
    for i in 0..xs.len() - 1 {
        for j in 0..nz - 1 {
            // Corners counterclockwise from (i, j).
            let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let f: Vec<f64> = c.iter().map(|&(a, b)| v(a, b)).collect();
            let mut hits = vec![];
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if (f[a] < 0.0) != (f[b] < 0.0) {
                    let s = f[a] / (f[a] - f[b]);
                    let (pa, pb) = (c[a], c[b]);
                    let x = xs[pa.0] + s * (xs[pb.0] - xs[pa.0]);
                    let y = ys[pa.1] + s * (ys[pb.1] - ys[pa.1]);
                    hits.push((x, y));
                }
            }
            match hits.len() {
                2 => out.push([hits[0], hits[1]]),
                4 => {
                    // Saddle cell: connect according to the sign at the centre.
                    let centre = f.iter().sum::<f64>() / 4.0;
                    if (centre < 0.0) == (f[0] < 0.0) {
                        out.push([hits[0], hits[1]]);
                        out.push([hits[2], hits[3]]);
                    } else {
                        out.push([hits[0], hits[3]]);
                        out.push([hits[1], hits[2]]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

fn path_of(segments: &[[(f64, f64); 2]]) -> String {
    let mut d = String::new();
    for [a, b] in segments {
        write!(d, "M{} {}L{} {}", n(a.0), n(a.1), n(b.0), n(b.1)).unwrap();
    }
    d
}

fn hfield(path: &Path) -> Result<String> {
    let (file, model) = load_model(path)?;
    let h = model
        .hamiltonian
        .as_ref()
        .ok_or_else(|| anyhow!("model `{}` has no Hamiltonian; hfield needs a vp plug", file.name))?;
    let plug = model
        .plug
        .as_ref()
        .ok_or_else(|| anyhow!("model `{}` carries no plug annotation", file.name))?;
    let d = model.dim();
    let (ir, iz) = (d - 2, d - 1);
    let (rr, zr) = (model.chart.factor(ir).range(), model.chart.factor(iz).range());
    let (nr, nz) = (121, 241);
    let xs: Vec<f64> = (0..nr).map(|i| rr.0 + (rr.1 - rr.0) * i as f64 / (nr - 1) as f64).collect();
    let ys: Vec<f64> = (0..nz).map(|j| zr.0 + (zr.1 - zr.0) * j as f64 / (nz - 1) as f64).collect();
    let tape = Tape::new(std::slice::from_ref(h));
    let mut p = vec![0.0; d];
    let mut values = Vec::with_capacity(nr * nz);
    for &r in &xs {
        for &z in &ys {
            p[ir] = r;
            p[iz] = z;
            values.push(tape.eval(&p)[0]);
        }
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let mut marks = singular_points(&model, (plug.entry.min(plug.seam), plug.entry.max(plug.seam)), 16)?;
    marks.extend(singular_points(&model, (plug.seam.min(plug.exit), plug.seam.max(plug.exit)), 16)?);

    let frame = Frame::new(70.0, 40.0, 300.0, 600.0, rr, zr);
    let mut svg = Svg::new(420.0, 700.0);
    svg.text(220.0, 24.0, "middle", 14.0, &format!("Level curves of H ({})", file.name));
    svg.push(frame.data_group("levels"));
    let count = 24;
    for k in 1..count {
        let level = lo + (hi - lo) * k as f64 / count as f64;
        let seg = contour(&xs, &ys, &values, level);
        if !seg.is_empty() {
            svg.push(format!(
                r##"<path class="level" data-level="{}" d="{}" fill="none" stroke="#4c72b0" stroke-width="1" vector-effect="non-scaling-stroke"/>"##,
                n(level),
                path_of(&seg)
            ));
        }
    }
    for s in &marks {
        p[ir] = s.r;
        p[iz] = s.z;
        let level = tape.eval(&p)[0];
        let seg = contour(&xs, &ys, &values, level);
        svg.push(format!(
            r##"<path class="separatrix" data-level="{}" d="{}" fill="none" stroke="#c44e52" stroke-width="1.5" vector-effect="non-scaling-stroke"/>"##,
            n(level),
            path_of(&seg)
        ));
    }
    svg.push("</g>");
    for s in &marks {
        svg.push(format!(
            r##"<circle class="singular" data-r="{}" data-z="{}" cx="{}" cy="{}" r="5" fill="#c44e52"><title>singular point r = {}, z = {}</title></circle>"##,
            s.r,
            s.z,
            n(frame.px(s.r)),
            n(frame.py(s.z)),
            n(s.r),
            n(s.z)
        ));
    }
    frame.axes(&mut svg, &model.chart.factor(ir).name, &model.chart.factor(iz).name);
    Ok(svg.finish("hfield"))
}

fn profiles() -> String {
    let sp = standard_profiles();
    let samples = 401;
    let ts: Vec<f64> = (0..samples).map(|k| k as f64 / (samples - 1) as f64).collect();
    let mut svg = Svg::new(760.0, 360.0);
    for (k, (name, prof)) in [("f", &sp.f), ("h", &sp.h)].into_iter().enumerate() {
        let frame = Frame::new(70.0 + 370.0 * k as f64, 40.0, 300.0, 260.0, (0.0, 1.0), (-0.05, 1.05));
        svg.text(frame.x + frame.w / 2.0, 26.0, "middle", 14.0, name);
        if name == "f" {
            // The plateau at 1/2 over [1/3, 2/3].
            svg.push(format!(
                r##"<rect class="plateau" x="{}" y="{}" width="{}" height="{}" fill="#eee"/>"##,
                n(frame.px(1.0 / 3.0)),
                n(frame.y),
                n(frame.px(2.0 / 3.0) - frame.px(1.0 / 3.0)),
                n(frame.h)
            ));
        }
        svg.push(frame.data_group("profile"));
        svg.push(polyline("curve", name, "#4c72b0", 2.0, ts.iter().map(|&t| (t, prof.eval(t)))));
        svg.push("</g>");
        frame.axes(&mut svg, "r", &format!("{name}(r)"));
    }
    svg.finish("profiles")
}

fn orbit(header: &[String], rows: &[Vec<String>], axes: Option<&[String]>) -> Result<String> {
    if header.first().map(String::as_str) != Some("t") {
        bail!("malformed orbit CSV: the first column must be `t`");
    }
    let coords: Vec<usize> = (1..header.len()).filter(|&i| !header[i].starts_with("winding_")).collect();
    let pairs: Vec<(usize, usize)> = match axes {
        Some([a, b]) => vec![(column(header, a)?, column(header, b)?)],
        Some(other) => bail!("--axes needs exactly two names, got {}", other.len()),
        None if coords.len() == 1 => vec![(0, coords[0])],
        None => coords.windows(2).take(3).map(|w| (w[0], w[1])).collect(),
    };
    if pairs.is_empty() {
        bail!("orbit CSV has no coordinate columns");
    }
    let data: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            if r.len() != header.len() {
                bail!("malformed CSV: row {} has {} fields, expected {}", k + 1, r.len(), header.len());
            }
            r.iter().zip(header).map(|(s, h)| parse(s, k + 1, h)).collect()
        })
        .collect::<Result<_>>()?;
    if data.is_empty() {
        bail!("orbit CSV has no rows");
    }
    let range = |c: usize| {
        data.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[c]), b.max(r[c])))
    };
    let mut svg = Svg::new(80.0 + 330.0 * pairs.len() as f64, 360.0);
    for (k, &(cx, cy)) in pairs.iter().enumerate() {
        let frame = Frame::new(70.0 + 330.0 * k as f64, 40.0, 270.0, 260.0, range(cx), range(cy));
        svg.text(
            frame.x + frame.w / 2.0,
            26.0,
            "middle",
            13.0,
            &format!("{} vs {}", header[cy], header[cx]),
        );
        svg.push(frame.data_group("projection"));
        svg.push(polyline(
            "orbit",
            &format!("{}-{}", header[cx], header[cy]),
            "#4c72b0",
            1.0,
            data.iter().map(|r| (r[cx], r[cy])),
        ));
        svg.push("</g>");
        let start = &data[0];
        svg.push(format!(
            r##"<circle class="start" cx="{}" cy="{}" r="3.5" fill="#55a868"/>"##,
            n(frame.px(start[cx])),
            n(frame.py(start[cy]))
        ));
        frame.axes(&mut svg, &header[cx], &header[cy]);
    }
    Ok(svg.finish("orbit"))
}

fn trapgrid(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let (ci, cj, co) = (column(header, "i")?, column(header, "j")?, column(header, "outcome")?);
    if header.len() < 5 {
        bail!("malformed trap CSV: expected i, j, two entry coordinates and an outcome");
    }
    let (ca, cb) = (2, 3);
    let mut cells = vec![];
    for (k, r) in rows.iter().enumerate() {
        if r.len() != header.len() {
            bail!("malformed CSV: row {} has {} fields, expected {}", k + 1, r.len(), header.len());
        }
        let idx = |c: usize| {
            r[c].trim()
                .parse::<usize>()
                .map_err(|_| anyhow!("malformed CSV: row {}: `{}` is not a cell index", k + 1, r[c]))
        };
        let trapped = match r[co].as_str() {
            "trapped" => true,
            "exit" => false,
            other => bail!("malformed CSV: row {}: unknown outcome `{other}`", k + 1),
        };
        cells.push((
            idx(ci)?,
            idx(cj)?,
            parse(&r[ca], k + 1, &header[ca])?,
            parse(&r[cb], k + 1, &header[cb])?,
            trapped,
        ));
    }
    if cells.is_empty() {
        bail!("trap CSV has no rows");
    }
    let ni = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let nj = cells.iter().map(|c| c.1).max().unwrap() + 1;
    let span = |f: fn(&(usize, usize, f64, f64, bool)) -> f64, cnt: usize| {
        let (lo, hi) = cells
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        // Cell centres: widen by half a cell each side.
        let half = if cnt > 1 { (hi - lo) / (cnt - 1) as f64 / 2.0 } else { 0.5 };
        (lo - half, hi + half)
    };
    let frame = Frame::new(70.0, 40.0, 400.0, 400.0, span(|c| c.2, ni), span(|c| c.3, nj));
    let (cw, ch) = (frame.w / ni as f64, frame.h / nj as f64);
    let trapped = cells.iter().filter(|c| c.4).count();
    let mut svg = Svg::new(640.0, 500.0);
    svg.text(270.0, 26.0, "middle", 14.0, &format!("Entry-face outcomes ({ni} x {nj})"));
    for &(i, j, a, b, t) in &cells {
        let (class, color) = if t { ("cell trapped", "#c44e52") } else { ("cell exit", "#4c72b0") };
        svg.push(format!(
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" fill="{color}"><title>{} = {}, {} = {}</title></rect>"#,
            n(frame.x + i as f64 * cw),
            n(frame.y + frame.h - (j + 1) as f64 * ch),
            n(cw),
            n(ch),
            esc(&header[ca]),
            n(a),
            esc(&header[cb]),
            n(b)
        ));
    }
    frame.axes(&mut svg, &header[ca], &header[cb]);
    let legend = [("Exit", "#4c72b0", cells.len() - trapped), ("Trapped", "#c44e52", trapped)];
    svg.push(r#"<g class="legend">"#);
    for (k, (label, color, count)) in legend.into_iter().enumerate() {
        let y = 60.0 + 24.0 * k as f64;
        svg.push(format!(r#"<rect x="490" y="{}" width="14" height="14" fill="{color}"/>"#, n(y)));
        svg.text(512.0, y + 11.5, "start", 12.0, &format!("{label} ({count})"));
    }
    svg.push("</g>");
    Ok(svg.finish("trapgrid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contour_of_a_plane_is_a_straight_line() {
        let xs: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let ys = xs.clone();
        let vals: Vec<f64> = xs.iter().flat_map(|x| ys.iter().map(move |y| x + y)).collect();
        let seg = contour(&xs, &ys, &vals, 3.5);
        assert!(!seg.is_empty());
        for s in &seg {
            for (x, y) in s {
                assert!((x + y - 3.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trapgrid_rejects_unknown_outcomes() {
        let h: Vec<String> = ["i", "j", "r", "x", "outcome"].map(String::from).to_vec();
        let rows = vec![["0", "0", "0.1", "0.2", "maybe"].map(String::from).to_vec()];
        assert!(trapgrid(&h, &rows).unwrap_err().to_string().contains("unknown outcome"));
    }
}
