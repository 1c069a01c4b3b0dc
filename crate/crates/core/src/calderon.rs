//! Discrete reproducing formula `Id = E + R` over Zygmund lattices.
//!
//! With `g = psi_jk * f`, `E f = sum psi_jk * (H g)` where `H` holds the value
//! of `g` at each cell's sample node constant across the cell, and
//! `R f = sum psi_jk * (g - H g)`. On the band where the atoms' squares sum to
//! one, `E + R` is the identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid3, ScalarField3, SpectralField3};
use crate::frames::{band_limited_field, BumpPair, Frame};
use crate::geometry::{build_lattice_with_min, SamplePolicy, ZygLattice};
use crate::kernels::ScaleRange;
use crate::par;
use crate::report::{Curve, ExperimentReport};
use crate::stats::{fit_line, lanczos_max};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalderonConfig {
    pub bumps: BumpPair,
    pub range: ScaleRange,
    pub n: u32,
    pub policy: SamplePolicy,
}

/// Sample node of every cell of one lattice.
#[derive(Debug, Clone)]
struct CellSampler {
    lattice: ZygLattice,
    offsets: Option<Vec<[usize; 3]>>,
    fixed: [usize; 3],
}

impl CellSampler {
    fn new(lattice: ZygLattice, policy: SamplePolicy) -> Self {
        let c = lattice.nodes_per_cell;
        match policy {
            SamplePolicy::LowerLeft => CellSampler { lattice, offsets: None, fixed: [0; 3] },
            SamplePolicy::Center => CellSampler { lattice, offsets: None, fixed: c.map(|m| m / 2) },
            SamplePolicy::RandomFixed { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((lattice.j as u64) << 32) ^ (lattice.k as u64 & 0xffff_ffff));
                let offsets = (0..lattice.len()).map(|_| c.map(|m| rng.random_range(0..m))).collect();
                CellSampler { lattice, offsets: Some(offsets), fixed: [0; 3] }
            }
        }
    }

    fn offset(&self, cell: usize) -> [usize; 3] {
        match &self.offsets {
            Some(o) => o[cell],
            None => self.fixed,
        }
    }

    fn sample_node(&self, grid: &Grid3, i: [usize; 3]) -> usize {
        let c = self.lattice.nodes_per_cell;
        let cell = self.lattice.cell_of(i);
        let off = self.offset(cell);
        grid.index([0, 1, 2].map(|a| (i[a] / c[a]) * c[a] + off[a]))
    }

    fn hold(&self, g: &ScalarField3) -> ScalarField3 {
        let grid = *g.grid();
        let v = g.values();
        let out = par::map_range(grid.len(), |idx| v[self.sample_node(&grid, grid.unindex(idx))]);
        ScalarField3::from_vec_unchecked(grid, out)
    }

    /// Adjoint of `hold`: each cell's sum is deposited at its sample node.
    fn hold_adjoint(&self, u: &ScalarField3) -> ScalarField3 {
        let grid = *u.grid();
        let v = u.values();
        let c = self.lattice.nodes_per_cell;
        let cells = self.lattice.len();
        let sums = par::map_range(cells, |cell| {
            let q = self.lattice.cell_coords(cell);
            let mut s = 0.0;
            for a in 0..c[0] {
                for b in 0..c[1] {
                    let base = grid.index([q[0] * c[0] + a, q[1] * c[1] + b, q[2] * c[2]]);
                    s += v[base..base + c[2]].iter().sum::<f64>();
                }
            }
            s
        });
        let mut out = vec![0.0; grid.len()];
        for (cell, s) in sums.into_iter().enumerate() {
            let q = self.lattice.cell_coords(cell);
            let off = self.offset(cell);
            out[grid.index([0, 1, 2].map(|a| q[a] * c[a] + off[a]))] = s;
        }
        ScalarField3::from_vec_unchecked(grid, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderNorm {
    /// largest `|R p| / |p|` seen over probes and the top Ritz vector
    pub lower_bound: f64,
    /// converged iterative estimate, `None` if it did not converge
    pub dominant: Option<f64>,
    pub iterations: usize,
}

impl RemainderNorm {
    pub fn estimate(&self) -> f64 {
        self.dominant.unwrap_or(self.lower_bound)
    }
}

/// The split `E + R` on one grid.
#[derive(Debug, Clone)]
pub struct Calderon {
    cfg: CalderonConfig,
    frame: Frame,
    samplers: Vec<CellSampler>,
    band: Vec<f64>,
}

impl Calderon {
    pub fn new(cfg: CalderonConfig, grid: &Grid3) -> Result<Self> {
        let frame = Frame::new(cfg.bumps, cfg.range, grid)?;
        let samplers = frame
            .pairs()
            .iter()
            .map(|&(j, k)| build_lattice_with_min(grid, j, k, cfg.n, 1).map(|l| CellSampler::new(l, cfg.policy)))
            .collect::<Result<Vec<_>>>()?;
        let band = frame.band_mask().into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
        Ok(Calderon { cfg, frame, samplers, band })
    }

    pub fn config(&self) -> &CalderonConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid3 {
        self.frame.grid()
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn band_mask(&self) -> Vec<bool> {
        self.band.iter().map(|v| *v == 1.0).collect()
    }

    pub fn project(&self, f: &ScalarField3) -> Result<ScalarField3> {
        f.apply_multiplier(&self.band)
    }

    pub fn random_band_field(&self, rng: &mut ChaCha8Rng) -> Result<ScalarField3> {
        band_limited_field(self.grid(), &self.band_mask(), rng)
    }

    /// `sum psi * T(psi * f)` for a per-lattice real-space map `T`, from
    /// spectrum to spectrum.
    fn sandwich<F>(&self, spec: &SpectralField3, t: F) -> Result<SpectralField3>
    where
        F: Fn(&CellSampler, ScalarField3) -> ScalarField3,
    {
        let mut acc = vec![Complex64::new(0.0, 0.0); self.grid().len()];
        for (p, sampler) in self.samplers.iter().enumerate() {
            let sym = self.frame.symbol(p);
            let g = spec.multiply(sym)?.to_real()?;
            let d = t(sampler, g).spectrum();
            for ((a, z), s) in acc.iter_mut().zip(d.coeffs()).zip(sym) {
                *a += z * s;
            }
        }
        SpectralField3::from_coeffs(*self.grid(), acc)
    }

    fn spectrum_of(&self, f: &ScalarField3) -> Result<SpectralField3> {
        self.grid().check_same(f.grid())?;
        Ok(f.spectrum())
    }

    fn remainder_spec(&self, spec: &SpectralField3) -> Result<SpectralField3> {
        self.sandwich(spec, |s, g| {
            let h = s.hold(&g);
            g.sub(&h).expect("same grid")
        })
    }

    fn remainder_adjoint_spec(&self, spec: &SpectralField3) -> Result<SpectralField3> {
        self.sandwich(spec, |s, g| {
            let h = s.hold_adjoint(&g);
            g.sub(&h).expect("same grid")
        })
    }

    pub fn essential(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.sandwich(&self.spectrum_of(f)?, |s, g| s.hold(&g))?.to_real()
    }

    /// `sum psi * (g - H g)`, formed from the difference inside the cell integral.
    pub fn remainder(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.remainder_spec(&self.spectrum_of(f)?)?.to_real()
    }

    pub fn remainder_adjoint(&self, f: &ScalarField3) -> Result<ScalarField3> {
        self.remainder_adjoint_spec(&self.spectrum_of(f)?)?.to_real()
    }

    /// `P R P`, the remainder restricted to the band.
    pub fn remainder_band(&self, f: &ScalarField3) -> Result<ScalarField3> {
        let spec = self.spectrum_of(f)?.multiply(&self.band)?;
        self.remainder_spec(&spec)?.multiply(&self.band)?.to_real()
    }

    pub fn remainder_band_adjoint(&self, f: &ScalarField3) -> Result<ScalarField3> {
        let spec = self.spectrum_of(f)?.multiply(&self.band)?;
        self.remainder_adjoint_spec(&spec)?.multiply(&self.band)?.to_real()
    }

    /// `(P R P)* (P R P) f`.
    pub fn remainder_normal(&self, f: &ScalarField3) -> Result<ScalarField3> {
        let spec = self.spectrum_of(f)?.multiply(&self.band)?;
        let r = self.remainder_spec(&spec)?.multiply(&self.band)?;
        self.remainder_adjoint_spec(&r)?.multiply(&self.band)?.to_real()
    }

    /// Estimates `||P R P||`: the top of `R* R` by Lanczos iteration started
    /// from a random band field, plus random-probe quotients as a lower bound.
    pub fn remainder_norm(&self, probes: usize, max_iter: usize, seed: u64) -> Result<RemainderNorm> {
        if probes < 8 {
            return Err(Error::Parameter(format!("need at least 8 probes, got {probes}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lower: f64 = 0.0;
        for _ in 0..probes {
            let p = self.random_band_field(&mut rng)?;
            let n = p.norm2();
            if n > 0.0 {
                lower = lower.max(self.remainder_band(&p)?.norm2() / n);
            }
        }
        let grid = *self.grid();
        let start = self.random_band_field(&mut rng)?.into_values();
        let res = lanczos_max(
            |v| Ok(self.remainder_normal(&ScalarField3::new(grid, v.to_vec())?)?.into_values()),
            start,
            max_iter,
            1e-9,
        )?;
        let top = res.value.max(0.0).sqrt();
        // the top Ritz value is a Rayleigh quotient, hence also a lower bound
        lower = lower.max(top);
        Ok(RemainderNorm { lower_bound: lower, dominant: res.converged.then_some(top), iterations: res.steps })
    }

    /// Neumann reconstruction `sum_{i<=n} R^i (P E f)`; the residual after
    /// `n` terms is `R^{n+1} f`.
    pub fn reproduce(&self, f: &ScalarField3, terms: usize, norm: &RemainderNorm) -> Result<ExperimentReport> {
        if !(norm.estimate() < 1.0) {
            return Err(Error::Precondition(format!("remainder norm {} is not below 1", norm.estimate())));
        }
        let fnorm = f.norm2();
        let mut rep = ExperimentReport::new("reproduce");
        rep.param("N", self.cfg.n).param("policy", self.cfg.policy).param("terms", terms);
        rep.metric("remainder_norm", norm.estimate());
        let mut curve = Curve::new(&["terms", "residual"]);
        if fnorm == 0.0 {
            for n in 0..=terms {
                curve.push(vec![n as f64, 0.0]);
            }
            rep.metric("residual", 0.0);
            rep.curve("residual", curve);
            return Ok(rep);
        }
        let pf = self.project(f)?;
        if pf.sub(f)?.norm2() > 1e-8 * fnorm {
            return Err(Error::Precondition("input is not band-limited".into()));
        }
        let mut term = self.project(&self.essential(f)?)?;
        let mut recon = term.clone();
        let mut residuals = Vec::with_capacity(terms + 1);
        for n in 0..=terms {
            if n > 0 {
                term = self.remainder_band(&term)?;
                recon = recon.add(&term)?;
            }
            let r = f.sub(&recon)?.norm2() / fnorm;
            residuals.push(r);
            curve.push(vec![n as f64, r]);
        }
        let last = *residuals.last().unwrap();
        rep.metric("residual", last);
        // fit over the tail, away from roundoff and the transient
        let (xs, ys): (Vec<f64>, Vec<f64>) = residuals
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, r)| **r > 1e-13)
            .map(|(n, r)| (n as f64, r.ln()))
            .unzip();
        if let Some(fit) = fit_line(&xs, &ys) {
            rep.metric("decay_ratio", fit.slope.exp());
            rep.metric("decay_r2", fit.r2);
        }
        rep.curve("residual", curve);
        Ok(rep)
    }
}

pub fn essential_part(f: &ScalarField3, cfg: &CalderonConfig) -> Result<ScalarField3> {
    Calderon::new(*cfg, f.grid())?.essential(f)
}

pub fn remainder_apply(f: &ScalarField3, cfg: &CalderonConfig) -> Result<ScalarField3> {
    Calderon::new(*cfg, f.grid())?.remainder(f)
}

pub fn remainder_norm(cfg: &CalderonConfig, grid: &Grid3, probes: usize, seed: u64) -> Result<RemainderNorm> {
    Calderon::new(*cfg, grid)?.remainder_norm(probes, 60, seed)
}

pub fn reproduce(f: &ScalarField3, cfg: &CalderonConfig, terms: usize, norm: &RemainderNorm) -> Result<ExperimentReport> {
    Calderon::new(*cfg, f.grid())?.reproduce(f, terms, norm)
}
