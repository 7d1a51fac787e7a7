//! Parabolic dyadic cubes adapted to a particle cloud.
//!
//! Generation `j` boxes have horizontal side `2^-j` and vertical side
//! `4^-j`, aligned to the integer lattice. Binning uses `floor(h 2^j)` and
//! `floor(t 4^j)`; scaling a float by a power of two is exact, so cover,
//! disjointness, and nesting hold exactly by construction. A cube's center
//! is the atom nearest the geometric box center.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::{distance, Metric, Point};
use crate::measure::ParticleMeasure;
use crate::rect::{beta_numbers, BetaOptions, BetaPair};

#[derive(Debug, Clone)]
pub struct CubeOptions {
    /// Coarsest generation `j0`; boxes have side `2^-j0`.
    pub root_gen: i32,
    /// Number of generations below the root.
    pub depth: u32,
    /// Cubes with mass below this fraction of their generation's median
    /// cube mass are dropped. Zero keeps every nonempty box, making cover
    /// and nesting exact.
    pub mass_threshold: f64,
}

impl Default for CubeOptions {
    fn default() -> Self {
        CubeOptions {
            root_gen: 0,
            depth: 3,
            mass_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeKey {
    pub h: Vec<i64>,
    pub t: i64,
}

impl CubeKey {
    fn parent(&self) -> CubeKey {
        CubeKey {
            h: self.h.iter().map(|k| k.div_euclid(2)).collect(),
            t: self.t.div_euclid(4),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cube {
    pub gen: i32,
    pub key: CubeKey,
    /// Atom nearest the geometric box center.
    pub center: Point,
    pub mass: f64,
    pub atom_indices: Vec<usize>,
    /// Indices into the next generation's cube list.
    pub children: Vec<usize>,
    pub beta: Option<BetaPair>,
}

impl Cube {
    pub fn side(&self) -> f64 {
        2f64.powi(-self.gen)
    }
}

#[derive(Debug)]
pub struct CubeTree {
    pub root_gen: i32,
    /// `generations[g]` holds the cubes of generation `root_gen + g`,
    /// sorted by key.
    pub generations: Vec<Vec<Cube>>,
}

impl CubeTree {
    pub fn cube_count(&self) -> usize {
        self.generations.iter().map(|g| g.len()).sum()
    }

    /// Recursively sum the masses of bad descendants (inclusive).
    fn bad_mass(&self, gen: usize, idx: usize, eta: f64) -> f64 {
        let cube = &self.generations[gen][idx];
        let own = match &cube.beta {
            Some(b) if b.bbeta > eta => cube.mass,
            _ => 0.0,
        };
        own + cube
            .children
            .iter()
            .map(|&c| self.bad_mass(gen + 1, c, eta))
            .sum::<f64>()
    }
}

fn bin_key(p: &Point, j: i32) -> CubeKey {
    let hscale = 2f64.powi(j);
    let tscale = 4f64.powi(j);
    CubeKey {
        h: p.h.iter().map(|x| (x * hscale).floor() as i64).collect(),
        t: (p.t * tscale).floor() as i64,
    }
}

fn box_center(key: &CubeKey, j: i32) -> Point {
    let hside = 2f64.powi(-j);
    let tside = 4f64.powi(-j);
    Point::new(
        key.h.iter().map(|&k| (k as f64 + 0.5) * hside).collect(),
        (key.t as f64 + 0.5) * tside,
    )
}

/// Build the dyadic decomposition of the cloud.
pub fn dyadic_decompose(mu: &ParticleMeasure, opts: &CubeOptions) -> Result<CubeTree> {
    if mu.atoms.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if opts.depth < 1 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let mut generations: Vec<Vec<Cube>> = Vec::with_capacity(opts.depth as usize + 1);
    for g in 0..=opts.depth {
        let j = opts.root_gen + g as i32;
        let mut bins: HashMap<CubeKey, Vec<usize>> = HashMap::new();
        for (i, a) in mu.atoms.iter().enumerate() {
            bins.entry(bin_key(&a.point, j)).or_default().push(i);
        }
        let mut keys: Vec<CubeKey> = bins.keys().cloned().collect();
        keys.sort();
        let mut cubes: Vec<Cube> = keys
            .into_iter()
            .map(|key| {
                let atom_indices = bins.remove(&key).unwrap();
                let mass: f64 = atom_indices.iter().map(|&i| mu.atoms[i].weight).sum();
                let target = box_center(&key, j);
                let center = atom_indices
                    .iter()
                    .map(|&i| &mu.atoms[i].point)
                    .min_by(|a, b| {
                        distance(a, &target, Metric::Koranyi)
                            .unwrap()
                            .partial_cmp(&distance(b, &target, Metric::Koranyi).unwrap())
                            .unwrap()
                    })
                    .unwrap()
                    .clone();
                Cube {
                    gen: j,
                    key,
                    center,
                    mass,
                    atom_indices,
                    children: Vec::new(),
                    beta: None,
                }
            })
            .collect();
        if opts.mass_threshold > 0.0 {
            let mut masses: Vec<f64> = cubes.iter().map(|c| c.mass).collect();
            masses.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = masses[masses.len() / 2];
            cubes.retain(|c| c.mass >= opts.mass_threshold * median);
        }
        generations.push(cubes);
    }
    // Link children to parents via exact integer key arithmetic.
    for g in 0..opts.depth as usize {
        let parent_index: HashMap<CubeKey, usize> = generations[g]
            .iter()
            .enumerate()
            .map(|(i, c)| (c.key.clone(), i))
            .collect();
        let links: Vec<(usize, usize)> = generations[g + 1]
            .iter()
            .enumerate()
            .filter_map(|(ci, c)| parent_index.get(&c.key.parent()).map(|&pi| (pi, ci)))
            .collect();
        for (pi, ci) in links {
            generations[g][pi].children.push(ci);
        }
    }
    Ok(CubeTree {
        root_gen: opts.root_gen,
        generations,
    })
}

/// Compute beta pairs for every cube, on balls `B(z_Q, 3 l(Q))`.
pub fn compute_betas(tree: &mut CubeTree, mu: &ParticleMeasure, opts: &BetaOptions) -> Result<()> {
    for gen in tree.generations.iter_mut() {
        let centers: Vec<(Point, f64)> = gen
            .iter()
            .map(|c| (c.center.clone(), 3.0 * c.side()))
            .collect();
        let pairs: Vec<Result<BetaPair>> = exec::map_indexed(centers.len(), |i| {
            beta_numbers(mu, &centers[i].0, centers[i].1, opts)
        });
        for (cube, pair) in gen.iter_mut().zip(pairs) {
            cube.beta = Some(pair?);
        }
    }
    Ok(())
}

/// Worst Carleson ratio over root cubes: the mass of descendants whose
/// bilateral beta exceeds `eta`, divided by the root mass.
pub fn carleson_bwgl(tree: &CubeTree, eta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    if tree
        .generations
        .iter()
        .any(|g| g.iter().any(|c| c.beta.is_none()))
    {
        return Err(Error::invalid(
            "beta numbers not computed; call compute_betas first",
        ));
    }
    let mut worst = 0.0f64;
    for (idx, root) in tree.generations[0].iter().enumerate() {
        if root.mass <= 0.0 {
            continue;
        }
        let bad = tree.bad_mass(0, idx, eta);
        worst = worst.max(bad / root.mass);
    }
    Ok(worst)
}

/// Per-generation empirical constants: extremes of `diam(Q) / side` and of
/// the mass ratio `mu(Q) / side^{n+1}`.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationStats {
    pub gen: i32,
    pub cubes: usize,
    pub diam_ratio_min: f64,
    pub diam_ratio_max: f64,
    pub mass_ratio_min: f64,
    pub mass_ratio_median: f64,
    pub mass_ratio_max: f64,
}

pub fn generation_stats(
    tree: &CubeTree,
    mu: &ParticleMeasure,
    hom_dim: f64,
) -> Vec<GenerationStats> {
    tree.generations
        .iter()
        .map(|gen| {
            let j = gen.first().map(|c| c.gen).unwrap_or(tree.root_gen);
            let side = 2f64.powi(-j);
            let mut diam_min = f64::INFINITY;
            let mut diam_max: f64 = 0.0;
            let mut ratios: Vec<f64> = Vec::with_capacity(gen.len());
            for cube in gen {
                ratios.push(cube.mass / side.powf(hom_dim));
                // diameter of the atom set, subsampled for large cubes
                let idx = &cube.atom_indices;
                let stride = idx.len().div_ceil(256).max(1);
                let pts: Vec<&Point> = idx
                    .iter()
                    .step_by(stride)
                    .map(|&i| &mu.atoms[i].point)
                    .collect();
                let mut diam: f64 = 0.0;
                for a in 0..pts.len() {
                    for b in (a + 1)..pts.len() {
                        diam = diam.max(distance(pts[a], pts[b], Metric::Koranyi).unwrap());
                    }
                }
                // the parabolic box has Koranyi diameter <= sqrt(n)ish * side
                diam_min = diam_min.min(diam / side);
                diam_max = diam_max.max(diam / side);
            }
            ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = if ratios.is_empty() {
                0.0
            } else {
                ratios[ratios.len() / 2]
            };
            GenerationStats {
                gen: j,
                cubes: gen.len(),
                diam_ratio_min: diam_min,
                diam_ratio_max: diam_max,
                mass_ratio_min: ratios.first().copied().unwrap_or(0.0),
                mass_ratio_median: median,
                mass_ratio_max: ratios.last().copied().unwrap_or(0.0),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct CubeRow<'a> {
    gen: i32,
    center_h: &'a [f64],
    center_t: f64,
    mass: f64,
    beta: Option<f64>,
    bbeta: Option<f64>,
}

/// One JSON object per cube, one cube per line.
pub fn cube_tree_jsonl(tree: &CubeTree) -> String {
    let mut out = String::new();
    for gen in &tree.generations {
        for cube in gen {
            let row = CubeRow {
                gen: cube.gen,
                center_h: &cube.center.h,
                center_t: cube.center.t,
                mass: cube.mass,
                beta: cube.beta.as_ref().map(|b| b.beta),
                bbeta: cube.beta.as_ref().map(|b| b.bbeta),
            };
            out.push_str(&serde_json::to_string(&row).expect("serializable row"));
            out.push('\n');
        }
    }
    out
}
