//! Zygmund maximal function, `A_p` characteristics, `bmo` norms, medians,
//! John-Nirenberg tails and the exp-log link.
//!
//! Measures are node counts times the cell volume, so every mean is a plain
//! average over the nodes inside a rectangle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid3, ScalarField3};
use crate::geometry::{AxisSpan, ZygmundRectangle};
use crate::par;
use crate::report::{Curve, ExperimentReport};
use crate::stats::fit_line;

pub const MAX_MEMBERS: usize = 1_000_000;
const NODE_EPS: f64 = 1e-9;
const NONE: u32 = u32::MAX;

/// All full cells of one translated dyadic level inside the box.
#[derive(Debug, Clone)]
struct Tiling {
    sides: [f64; 3],
    corner0: [f64; 3],
    spans: [Vec<AxisSpan>; 3],
    node_cell: [Vec<u32>; 3],
}

impl Tiling {
    fn new(grid: &Grid3, box_lo: [f64; 3], sides: [f64; 3], offset: [f64; 3]) -> Option<Tiling> {
        let h = grid.h();
        let mut spans: [Vec<AxisSpan>; 3] = Default::default();
        let mut node_cell: [Vec<u32>; 3] = Default::default();
        let mut corner0 = [0.0; 3];
        for a in 0..3 {
            let n = grid.counts[a];
            let count = ((grid.extents[a] - offset[a]) / sides[a] + NODE_EPS).floor() as usize;
            if count == 0 {
                return None;
            }
            corner0[a] = box_lo[a] + offset[a];
            let mut map = vec![NONE; n];
            for c in 0..count {
                let lo = corner0[a] + c as f64 * sides[a];
                let u = (lo - grid.origin[a]) / h[a];
                let first = ((u - NODE_EPS).ceil().max(0.0)) as usize;
                let end = ((u + sides[a] / h[a] - NODE_EPS).ceil().max(0.0) as usize).min(n);
                if end <= first {
                    return None;
                }
                for m in map.iter_mut().take(end).skip(first) {
                    *m = c as u32;
                }
                spans[a].push(AxisSpan { start: first, count: end - first });
            }
            node_cell[a] = map;
        }
        Some(Tiling { sides, corner0, spans, node_cell })
    }

    fn len(&self) -> usize {
        self.spans.iter().map(Vec::len).product()
    }

    fn cell(&self, c: usize) -> (ZygmundRectangle, [AxisSpan; 3]) {
        let p = [self.spans[0].len(), self.spans[1].len(), self.spans[2].len()];
        let q = [c / (p[1] * p[2]), (c / p[2]) % p[1], c % p[2]];
        let corner = [0, 1, 2].map(|a| self.corner0[a] + q[a] as f64 * self.sides[a]);
        let rect = ZygmundRectangle::new(corner, self.sides).expect("dyadic sides are Zygmund");
        (rect, [0, 1, 2].map(|a| self.spans[a][q[a]]))
    }

    fn cell_of(&self, i: [usize; 3]) -> Option<usize> {
        let q = [0, 1, 2].map(|a| self.node_cell[a][i[a]]);
        if q.contains(&NONE) {
            return None;
        }
        let p = [self.spans[1].len(), self.spans[2].len()];
        Some((q[0] as usize * p[0] + q[1] as usize) * p[1] + q[2] as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    DyadicLattice,
    TranslatedDyadic,
    ExplicitList,
}

/// A finite family of Zygmund rectangles on one grid.
#[derive(Debug, Clone)]
pub struct RectangleFamily {
    grid: Grid3,
    kind: FamilyKind,
    tilings: Vec<Tiling>,
    explicit: Vec<(ZygmundRectangle, [AxisSpan; 3])>,
    offsets: Vec<usize>,
    capped: bool,
}

impl RectangleFamily {
    /// Dyadic rectangles with sides `(2^a, 2^b, 2^(a+b))` of at least one cell
    /// width, tiling the box from its lower corner.
    pub fn dyadic(grid: &Grid3) -> Result<Self> {
        Self::build(grid, false)
    }

    /// Dyadic rectangles together with their half-step translates.
    pub fn translated_dyadic(grid: &Grid3) -> Result<Self> {
        Self::build(grid, true)
    }

    pub fn explicit(grid: &Grid3, rects: Vec<ZygmundRectangle>) -> Result<Self> {
        let mut explicit = Vec::with_capacity(rects.len());
        for r in rects {
            let sp = r.spans(grid)?;
            if sp.iter().any(|s| s.count == 0) {
                return Err(Error::Geometry(format!("rectangle {:?} holds no grid node", r.rect())));
            }
            explicit.push((r, sp));
        }
        let mut f = RectangleFamily {
            grid: *grid,
            kind: FamilyKind::ExplicitList,
            tilings: Vec::new(),
            explicit,
            offsets: Vec::new(),
            capped: false,
        };
        f.index();
        Ok(f)
    }

    fn build(grid: &Grid3, translates: bool) -> Result<Self> {
        let h = grid.h();
        let box_lo = [0, 1, 2].map(|a| h[a] * (grid.origin[a] / h[a] + NODE_EPS).floor());
        let exps = |a: usize| {
            let lo = h[a].log2().ceil() as i32;
            let hi = grid.extents[a].log2().floor() as i32;
            lo..=hi
        };
        let mut levels = Vec::new();
        for ea in exps(0) {
            for eb in exps(1) {
                let s3 = 2f64.powi(ea + eb);
                if s3 >= h[2] * (1.0 - 1e-12) && s3 <= grid.extents[2] * (1.0 + 1e-12) {
                    levels.push([2f64.powi(ea), 2f64.powi(eb), s3]);
                }
            }
        }
        // coarse levels first so the cap drops the finest ones
        levels.sort_by(|x, y| (y[0] * y[1] * y[2]).total_cmp(&(x[0] * x[1] * x[2])));
        let mut tilings = Vec::new();
        let mut total = 0usize;
        let mut capped = false;
        'outer: for s in levels {
            let shifts: Vec<[f64; 3]> = if translates {
                (0..8).map(|m| [0, 1, 2].map(|a| if (m >> a) & 1 == 1 { s[a] / 2.0 } else { 0.0 })).collect()
            } else {
                vec![[0.0; 3]]
            };
            for off in shifts {
                if let Some(t) = Tiling::new(grid, box_lo, s, off) {
                    if total + t.len() > MAX_MEMBERS {
                        capped = true;
                        break 'outer;
                    }
                    total += t.len();
                    tilings.push(t);
                }
            }
        }
        if tilings.is_empty() {
            return Err(Error::Parameter("grid admits no dyadic Zygmund rectangle".into()));
        }
        let kind = if translates { FamilyKind::TranslatedDyadic } else { FamilyKind::DyadicLattice };
        let mut f = RectangleFamily { grid: *grid, kind, tilings, explicit: Vec::new(), offsets: Vec::new(), capped };
        f.index();
        Ok(f)
    }

    fn index(&mut self) {
        let mut acc = 0;
        self.offsets = self
            .tilings
            .iter()
            .map(|t| {
                let o = acc;
                acc += t.len();
                o
            })
            .collect();
        self.offsets.push(acc);
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// True when the member cap cut off finer levels.
    pub fn capped(&self) -> bool {
        self.capped
    }

    pub fn len(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0) + self.explicit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn describe(&self) -> String {
        format!("{:?} with {} members{}", self.kind, self.len(), if self.capped { " (capped)" } else { "" })
    }

    pub fn member(&self, m: usize) -> (ZygmundRectangle, [AxisSpan; 3]) {
        let tiled = *self.offsets.last().unwrap();
        if m >= tiled {
            return self.explicit[m - tiled];
        }
        let t = self.offsets.partition_point(|&o| o <= m) - 1;
        self.tilings[t].cell(m - self.offsets[t])
    }

    pub fn rectangles(&self) -> Vec<ZygmundRectangle> {
        (0..self.len()).map(|m| self.member(m).0).collect()
    }

    fn map_members<T: Send, F: Fn(&[AxisSpan; 3]) -> T + Sync>(&self, f: F) -> Vec<T> {
        par::map_range(self.len(), |m| f(&self.member(m).1))
    }

    fn check_grid(&self, f: &ScalarField3) -> Result<()> {
        self.grid.check_same(f.grid())
    }
}

fn for_each_node<F: FnMut(usize)>(grid: &Grid3, sp: &[AxisSpan; 3], mut f: F) {
    let n = grid.counts;
    for i0 in sp[0].iter(n[0]) {
        for i1 in sp[1].iter(n[1]) {
            if sp[2].start + sp[2].count <= n[2] {
                let base = grid.index([i0, i1, sp[2].start]);
                (base..base + sp[2].count).for_each(&mut f);
            } else {
                for i2 in sp[2].iter(n[2]) {
                    f(grid.index([i0, i1, i2]));
                }
            }
        }
    }
}

fn span_len(sp: &[AxisSpan; 3]) -> usize {
    sp.iter().map(|s| s.count).product()
}

fn mean_over(grid: &Grid3, sp: &[AxisSpan; 3], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for_each_node(grid, sp, |i| s += v[i]);
    s / span_len(sp) as f64
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean and mean oscillation `(1/|R|) int_R |b - b_R|` over one rectangle.
pub fn mean_oscillation(b: &ScalarField3, r: &ZygmundRectangle) -> Result<(f64, f64)> {
    let g = *b.grid();
    let sp = r.spans(&g)?;
    if span_len(&sp) == 0 {
        return Err(Error::Geometry(format!("rectangle {:?} holds no grid node", r.rect())));
    }
    let v = b.values();
    let m = mean_over(&g, &sp, v);
    let mut s = 0.0;
    for_each_node(&g, &sp, |i| s += (v[i] - m).abs());
    Ok((m, s / span_len(&sp) as f64))
}

/// Sup over the family of the mean of `|f|`, per node.
pub fn maximal_zygmund(f: &ScalarField3, family: &RectangleFamily) -> Result<ScalarField3> {
    if family.is_empty() {
        return Err(Error::Parameter("empty rectangle family".into()));
    }
    family.check_grid(f)?;
    let g = *f.grid();
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let means = family.map_members(|sp| mean_over(&g, sp, &abs));
    let mut covered = vec![false; g.len()];
    let mut out: Vec<f64> = par::map_range(g.len(), |idx| {
        let i = g.unindex(idx);
        let mut best = f64::NEG_INFINITY;
        for (t, tiling) in family.tilings.iter().enumerate() {
            if let Some(c) = tiling.cell_of(i) {
                best = best.max(means[family.offsets[t] + c]);
            }
        }
        best
    });
    for (idx, v) in out.iter().enumerate() {
        covered[idx] = *v > f64::NEG_INFINITY;
    }
    let tiled = *family.offsets.last().unwrap();
    for (e, (_, sp)) in family.explicit.iter().enumerate() {
        let m = means[tiled + e];
        for_each_node(&g, sp, |idx| {
            out[idx] = out[idx].max(m);
            covered[idx] = true;
        });
    }
    for (idx, v) in out.iter_mut().enumerate() {
        if !covered[idx] {
            *v = abs[idx];
        }
    }
    ScalarField3::new(g, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApChar {
    pub p: f64,
    pub value: f64,
    pub argmax: ZygmundRectangle,
}

fn check_weight(w: &ScalarField3) -> Result<()> {
    if let Some((i, v)) = w.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Weight(format!("weight must be positive, got {v} at node {i}")));
    }
    Ok(())
}

/// `sup_R (mean_R w) (mean_R w^(-1/(p-1)))^(p-1)`.
pub fn ap_z_characteristic(w: &ScalarField3, p: f64, family: &RectangleFamily) -> Result<ApChar> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("p must exceed 1, got {p}")));
    }
    if family.is_empty() {
        return Err(Error::Parameter("empty rectangle family".into()));
    }
    family.check_grid(w)?;
    check_weight(w)?;
    let g = *w.grid();
    let e = -1.0 / (p - 1.0);
    let dual: Vec<f64> = w.values().iter().map(|v| v.powf(e)).collect();
    let vals = family.map_members(|sp| mean_over(&g, sp, w.values()) * mean_over(&g, sp, &dual).powf(p - 1.0));
    let best = argmax(&vals);
    Ok(ApChar { p, value: vals[best], argmax: family.member(best).0 })
}

/// `sup_R (1/|R|) int_R |b - b_R|` with the maximizing rectangle.
pub fn bmo_z_norm(b: &ScalarField3, family: &RectangleFamily) -> Result<(f64, ZygmundRectangle)> {
    if family.is_empty() {
        return Err(Error::Parameter("empty rectangle family".into()));
    }
    family.check_grid(b)?;
    let g = *b.grid();
    let v = b.values();
    let vals = family.map_members(|sp| {
        let m = mean_over(&g, sp, v);
        let mut s = 0.0;
        for_each_node(&g, sp, |i| s += (v[i] - m).abs());
        s / span_len(sp) as f64
    });
    let best = argmax(&vals);
    Ok((vals[best], family.member(best).0))
}

/// Median over the nodes of `r`; for an even count the midpoint of the two
/// middle values.
pub fn median(b: &ScalarField3, r: &ZygmundRectangle) -> Result<f64> {
    let g = *b.grid();
    let sp = r.spans(&g)?;
    let mut vals = Vec::with_capacity(span_len(&sp));
    for_each_node(&g, &sp, |i| vals.push(b.values()[i]));
    if vals.is_empty() {
        return Err(Error::Geometry(format!("rectangle {:?} holds no grid node", r.rect())));
    }
    let n = vals.len();
    let (_, hi, _) = vals.select_nth_unstable_by(n / 2, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        return Ok(hi);
    }
    let lo = vals[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(0.5 * (lo + hi))
}

/// Thresholds `t = c * norm` for `c` evenly spaced in `(0, max_multiple]`.
pub fn jn_t_grid(norm: f64, count: usize, max_multiple: f64) -> Vec<f64> {
    (1..=count).map(|i| norm * max_multiple * i as f64 / count as f64).collect()
}

/// Sup over the family of `|{x in B : |b - b_B| > t}| / |B|` for each `t`,
/// with an exponential fit over the middle of the `t` range.
pub fn jn_tail(b: &ScalarField3, family: &RectangleFamily, t_grid: &[f64]) -> Result<ExperimentReport> {
    if family.is_empty() {
        return Err(Error::Parameter("empty rectangle family".into()));
    }
    family.check_grid(b)?;
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("thresholds must increase".into()));
    }
    let g = *b.grid();
    let v = b.values();
    let nt = t_grid.len();
    let chunk = 256;
    let chunks = family.len().div_ceil(chunk);
    let partial = par::map_range(chunks, |c| {
        let mut best = vec![0.0f64; nt];
        let mut hist = vec![0usize; nt + 1];
        for m in c * chunk..((c + 1) * chunk).min(family.len()) {
            let sp = family.member(m).1;
            let mean = mean_over(&g, &sp, v);
            hist.iter_mut().for_each(|x| *x = 0);
            // hist[q]: nodes exceeding exactly the first q thresholds
            for_each_node(&g, &sp, |i| hist[t_grid.partition_point(|t| (v[i] - mean).abs() > *t)] += 1);
            let total = span_len(&sp) as f64;
            let mut above = 0usize;
            for q in (0..nt).rev() {
                above += hist[q + 1];
                best[q] = best[q].max(above as f64 / total);
            }
        }
        best
    });
    let mut sup = vec![0.0f64; nt];
    for p in partial {
        for (s, x) in sup.iter_mut().zip(p) {
            *s = s.max(x);
        }
    }
    let (norm, _) = bmo_z_norm(b, family)?;
    let mut rep = ExperimentReport::new("john-nirenberg");
    rep.param("family", family.describe()).param("thresholds", nt);
    rep.metric("bmo_norm", norm);
    let mut curve = Curve::new(&["t", "sup_fraction"]);
    for (t, s) in t_grid.iter().zip(&sup) {
        curve.push(vec![*t, *s]);
    }
    rep.curve("tail", curve);
    let cut = nt / 10;
    let (xs, ys): (Vec<f64>, Vec<f64>) = t_grid[cut..nt - cut]
        .iter()
        .zip(&sup[cut..nt - cut])
        .filter(|(_, s)| **s > 0.0)
        .map(|(t, s)| (*t, s.ln()))
        .unzip();
    if xs.len() < 4 {
        if sup.iter().all(|s| *s == 0.0) {
            rep.warn("tail vanishes on the whole grid");
            return Ok(rep);
        }
        return Err(Error::InsufficientData(format!("{} usable thresholds in the fit window", xs.len())));
    }
    let fit = fit_line(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate thresholds".into()))?;
    rep.metric("slope", fit.slope);
    rep.metric("c0", -fit.slope * norm);
    rep.metric("big_c0", fit.intercept.exp());
    rep.metric("r2", fit.r2);
    rep.metric("fit_points", fit.n);
    Ok(rep)
}

/// `[w] max{[w], (p-1)[w]^(1/(p-1))}`.
pub fn exp_log_majorant(char_value: f64, p: f64) -> f64 {
    char_value * char_value.max((p - 1.0) * char_value.powf(1.0 / (p - 1.0)))
}

/// Compares `bmo(log w)` with the majorant built from `[w]_{A_p}`.
pub fn exp_log_weight(w: &ScalarField3, p: f64, family: &RectangleFamily) -> Result<ExperimentReport> {
    let ch = ap_z_characteristic(w, p, family)?;
    let (bmo, rect) = bmo_z_norm(&w.map(f64::ln)?, family)?;
    let maj = exp_log_majorant(ch.value, p);
    let mut rep = ExperimentReport::new("exp-log-weight");
    rep.param("p", p).param("family", family.describe());
    rep.metric("ap_char", ch.value).metric("bmo_log_w", bmo).metric("majorant", maj);
    rep.metric("margin", maj - bmo).metric("bmo_argmax", rect);
    rep.check("bmo_log_w_below_majorant", bmo <= maj, bmo, format!("<= {maj}"));
    Ok(rep)
}

/// Halves `delta` from `gamma / ||b||` until `[e^{delta b}]_{A_2} <= target`.
pub fn exp_log_symbol(b: &ScalarField3, gamma: f64, target: f64, max_halvings: u32, family: &RectangleFamily) -> Result<ExperimentReport> {
    let (norm, _) = bmo_z_norm(b, family)?;
    let mut rep = ExperimentReport::new("exp-log-symbol");
    rep.param("gamma", gamma).param("target", target).param("family", family.describe());
    rep.metric("bmo_norm", norm);
    if norm == 0.0 {
        let ch = ap_z_characteristic(&b.map(|_| 1.0)?, 2.0, family)?;
        rep.metric("delta", gamma).metric("a2_char", ch.value);
        rep.check("delta_found", ch.value <= target, ch.value, format!("<= {target}"));
        return Ok(rep);
    }
    let mut last = f64::NAN;
    for i in 0..=max_halvings {
        let delta = gamma * 0.5f64.powi(i as i32) / norm;
        let ch = ap_z_characteristic(&b.map(|v| (delta * v).exp())?, 2.0, family)?;
        last = ch.value;
        if ch.value <= target {
            rep.metric("delta", delta).metric("halvings", i).metric("a2_char", ch.value);
            rep.check("delta_found", true, ch.value, format!("<= {target}"));
            return Ok(rep);
        }
    }
    rep.metric("a2_char", last);
    rep.check("delta_found", false, last, format!("<= {target} within {max_halvings} halvings"));
    Ok(rep)
}

/// `w = 2` where `x1` lies in the lower half of the box, `1` elsewhere.
pub fn two_level_weight(grid: &Grid3) -> ScalarField3 {
    let mid = grid.origin[0] + grid.extents[0] / 2.0 - grid.h()[0] / 2.0;
    ScalarField3::from_fn(*grid, |x| if x[0] < mid { 2.0 } else { 1.0 }).expect("finite")
}

/// `log max(|x1 - c|, floor)`.
pub fn log_symbol(grid: &Grid3, c: f64, floor: f64) -> Result<ScalarField3> {
    if !(floor > 0.0) {
        return Err(Error::Parameter(format!("floor must be positive, got {floor}")));
    }
    ScalarField3::from_fn(*grid, |x| (x[0] - c).abs().max(floor).ln())
}

/// `max(|x1 - c|, floor)^alpha`.
pub fn power_weight(grid: &Grid3, c: f64, alpha: f64, floor: f64) -> Result<ScalarField3> {
    let b = log_symbol(grid, c, floor)?;
    b.map(|v| (alpha * v).exp())
}
