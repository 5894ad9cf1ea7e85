//! Origin-symmetric convex bodies with membership, distance and projection.
//!
//! Points are flat vectors in the same layout as the measures (`x[j * d + c]`).
//! Ball and slab distances are exact; everything else goes through Dykstra's
//! alternating projections over elementary constraints.

use crate::error::{Error, Result};

/// How an oscillation set reads the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub enum OscillationCoords {
    /// Entries are path values at consecutive points.
    PathValues,
    /// Entries are increments; path differences are `scale · Σ Δ`.
    Increments { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexBody {
    Whole,
    Ball { radius: f64 },
    Slab { normal: Vec<f64>, half_width: f64 },
    /// `max_{start ≤ j < l < start+len} ‖B_l - B_j‖ ≤ radius` over `len` consecutive points.
    Oscillation { start: usize, len: usize, dim: usize, radius: f64, coords: OscillationCoords },
    Intersection(Vec<ConvexBody>),
}

/// Dykstra stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_sweeps: 20_000 }
    }
}

/// Elementary convex constraint with an exact projection.
#[derive(Debug, Clone)]
enum Atom<'a> {
    Ball(f64),
    Slab(&'a [f64], f64),
    /// Point difference `x[l] - x[j]` (in `dim` coordinates) bounded by `radius`.
    Pair { j: usize, l: usize, dim: usize, radius: f64 },
    /// Increment sum over `[j, l)` bounded by `radius`.
    Sum { j: usize, l: usize, dim: usize, radius: f64 },
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Atom<'_> {
    fn project(&self, x: &mut [f64]) {
        match *self {
            Atom::Ball(r) => {
                let n = norm(x);
                if n > r {
                    x.iter_mut().for_each(|v| *v *= r / n);
                }
            }
            Atom::Slab(u, h) => {
                let s = dot(u, x);
                if s.abs() > h {
                    let shift = s - h * s.signum();
                    x.iter_mut().zip(u).for_each(|(v, ui)| *v -= shift * ui);
                }
            }
            Atom::Pair { j, l, dim, radius } => {
                let diff: Vec<f64> = (0..dim).map(|c| x[l * dim + c] - x[j * dim + c]).collect();
                let n = norm(&diff);
                if n > radius {
                    let f = 0.5 * (n - radius) / n;
                    for c in 0..dim {
                        x[j * dim + c] += f * diff[c];
                        x[l * dim + c] -= f * diff[c];
                    }
                }
            }
            Atom::Sum { j, l, dim, radius } => {
                let mut s = vec![0.0; dim];
                for k in j..l {
                    for c in 0..dim {
                        s[c] += x[k * dim + c];
                    }
                }
                let n = norm(&s);
                if n > radius {
                    let f = (n - radius) / (n * (l - j) as f64);
                    for k in j..l {
                        for c in 0..dim {
                            x[k * dim + c] -= f * s[c];
                        }
                    }
                }
            }
        }
    }
}

impl ConvexBody {
    pub fn ball(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        Ok(Self::Ball { radius })
    }

    /// Slab `|⟨u, x⟩| ≤ h`; the normal is normalized here.
    pub fn slab(normal: Vec<f64>, half_width: f64) -> Result<Self> {
        let n = norm(&normal);
        if !(n > 0.0) || !(half_width > 0.0) {
            return Err(Error::InvalidArgument("slab needs a nonzero normal and positive half-width".into()));
        }
        Ok(Self::Slab { normal: normal.into_iter().map(|v| v / n).collect(), half_width })
    }

    /// Axis-aligned box `|x_i| ≤ h_i` as an intersection of slabs.
    pub fn cube(half_widths: &[f64]) -> Result<Self> {
        let dim = half_widths.len();
        let slabs = half_widths
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                Self::slab(e, h)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::Intersection(slabs))
    }

    /// Oscillation set of unit interval `i` for flat Brownian increments on a
    /// lattice with `steps_per_unit` steps and `dim` coordinates (closed interval).
    pub fn oscillation(i: usize, steps_per_unit: usize, dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        Ok(Self::Oscillation {
            start: i * steps_per_unit,
            len: steps_per_unit + 1,
            dim,
            radius,
            coords: OscillationCoords::Increments { scale: 1.0 },
        })
    }

    fn atoms<'a>(&'a self, out: &mut Vec<Atom<'a>>) -> bool {
        match self {
            ConvexBody::Whole => true,
            ConvexBody::Ball { radius } => {
                out.push(Atom::Ball(*radius));
                true
            }
            ConvexBody::Slab { normal, half_width } => {
                out.push(Atom::Slab(normal, *half_width));
                true
            }
            ConvexBody::Oscillation { start, len, dim, radius, coords } => {
                for j in *start..start + len {
                    for l in j + 1..start + len {
                        out.push(match coords {
                            OscillationCoords::PathValues => Atom::Pair { j, l, dim: *dim, radius: *radius },
                            OscillationCoords::Increments { scale } => {
                                Atom::Sum { j, l, dim: *dim, radius: radius / scale }
                            }
                        });
                    }
                }
                true
            }
            ConvexBody::Intersection(parts) => parts.iter().all(|p| p.atoms(out)),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        const SLACK: f64 = 1e-12;
        match self {
            ConvexBody::Whole => true,
            ConvexBody::Ball { radius } => norm(x) <= radius * (1.0 + SLACK),
            ConvexBody::Slab { normal, half_width } => dot(normal, x).abs() <= half_width * (1.0 + SLACK),
            ConvexBody::Oscillation { start, len, dim, radius, coords } => {
                oscillation_diameter(x, *start, *len, *dim, coords) <= radius * (1.0 + SLACK)
            }
            ConvexBody::Intersection(parts) => parts.iter().all(|p| p.contains(x)),
        }
    }

    /// Membership in the dilation `c·K`.
    pub fn contains_scaled(&self, x: &[f64], c: f64) -> bool {
        let y: Vec<f64> = x.iter().map(|v| v / c).collect();
        self.contains(&y)
    }

    /// Euclidean projection onto the body.
    pub fn project(&self, x: &[f64], opts: ProjectionOptions) -> Result<Vec<f64>> {
        match self {
            ConvexBody::Whole => return Ok(x.to_vec()),
            ConvexBody::Ball { .. } | ConvexBody::Slab { .. } => {
                let mut atoms = Vec::new();
                self.atoms(&mut atoms);
                let mut y = x.to_vec();
                atoms[0].project(&mut y);
                return Ok(y);
            }
            _ => {}
        }
        if self.contains(x) {
            return Ok(x.to_vec());
        }
        let mut atoms = Vec::new();
        self.atoms(&mut atoms);
        dykstra(&atoms, x, opts)
    }

    pub fn distance(&self, x: &[f64], opts: ProjectionOptions) -> Result<f64> {
        match self {
            ConvexBody::Whole => Ok(0.0),
            ConvexBody::Ball { radius } => Ok((norm(x) - radius).max(0.0)),
            ConvexBody::Slab { normal, half_width } => Ok((dot(normal, x).abs() - half_width).max(0.0)),
            _ => {
                let y = self.project(x, opts)?;
                Ok(x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            }
        }
    }
}

/// Largest pairwise distance among the selected points.
pub fn oscillation_diameter(x: &[f64], start: usize, len: usize, dim: usize, coords: &OscillationCoords) -> f64 {
    let points: Vec<Vec<f64>> = match coords {
        OscillationCoords::PathValues => (start..start + len).map(|j| x[j * dim..(j + 1) * dim].to_vec()).collect(),
        OscillationCoords::Increments { scale } => {
            let mut acc = vec![0.0; dim];
            let mut pts = vec![acc.clone()];
            for k in start..start + len - 1 {
                for c in 0..dim {
                    acc[c] += scale * x[k * dim + c];
                }
                pts.push(acc.clone());
            }
            pts
        }
    };
    let mut best = 0.0_f64;
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let d2: f64 = (0..dim).map(|c| (points[a][c] - points[b][c]).powi(2)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

fn dykstra(atoms: &[Atom<'_>], x: &[f64], opts: ProjectionOptions) -> Result<Vec<f64>> {
    let n = x.len();
    let mut y = x.to_vec();
    let mut corrections = vec![vec![0.0; n]; atoms.len()];
    let mut z = vec![0.0; n];
    let scale = norm(x).max(1.0);
    let mut movement = f64::INFINITY;
    for _ in 0..opts.max_sweeps {
        movement = 0.0;
        for (atom, p) in atoms.iter().zip(corrections.iter_mut()) {
            for i in 0..n {
                z[i] = y[i] + p[i];
            }
            let mut proj = z.clone();
            atom.project(&mut proj);
            for i in 0..n {
                p[i] = z[i] - proj[i];
                movement += (proj[i] - y[i]).powi(2);
            }
            y = proj;
        }
        movement = movement.sqrt();
        if movement < opts.tol * scale {
            return Ok(y);
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_sweeps, movement })
}
