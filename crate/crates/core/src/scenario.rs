//! Experiment configuration, cell geometry and large-scale fading.
//!
//! Cell 0 is the reference cell: all large-scale gains are measured toward
//! its RRUs, and only its users' rates are evaluated.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Candidate draws allowed per user before [`drop_users`] gives up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Radius of the RRU ring as a fraction of the cell radius.
pub const RRU_RING_FRACTION: f64 = 0.65;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// `L`, number of cells.
    pub cells: usize,
    /// `N`, RRUs per cell.
    pub rrus_per_cell: usize,
    /// `M`, antennas per RRU.
    pub antennas_per_rru: usize,
    /// `K`, single-antenna users per cell.
    pub users_per_cell: usize,
    /// Hexagon circumradius in meters.
    pub cell_radius: f64,
    pub pathloss_exponent: f64,
    /// Log-normal shadowing standard deviation in dB.
    pub shadowing_sigma: f64,
    pub reference_distance: f64,
    pub min_access_distance: f64,
    /// Pilot-phase noise variance.
    pub gamma_p: f64,
    /// Uplink data-phase noise variance.
    pub gamma_ul: f64,
    /// Exponential receive-correlation coefficient.
    pub correlation_coefficient: f64,
    pub rng_seed: u64,
    pub num_trials: usize,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            cells: 7,
            rrus_per_cell: 1,
            antennas_per_rru: 64,
            users_per_cell: 8,
            cell_radius: 500.0,
            pathloss_exponent: 3.7,
            shadowing_sigma: 8.0,
            reference_distance: 1.0,
            min_access_distance: 10.0,
            // Path gain at the cell edge without shadowing, 500^-3.7 ~ 1e-10.
            gamma_p: 1e-10,
            gamma_ul: 1e-10,
            correlation_coefficient: 0.0,
            rng_seed: 1,
            num_trials: 1000,
        }
    }
}

impl Scenario {
    /// Total antennas serving the reference cell, `M * N`.
    pub fn antennas_total(&self) -> usize {
        self.antennas_per_rru * self.rrus_per_cell
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(Error::InvalidScenario {
                field,
                reason: reason.into(),
            })
        }
        let counts = [
            ("L", self.cells),
            ("N", self.rrus_per_cell),
            ("M", self.antennas_per_rru),
            ("K", self.users_per_cell),
            ("num_trials", self.num_trials),
        ];
        for (field, v) in counts {
            if v < 1 {
                return bad(field, "must be at least 1");
            }
        }
        let positive = [
            ("cell_radius", self.cell_radius),
            ("reference_distance", self.reference_distance),
            ("min_access_distance", self.min_access_distance),
            ("gamma_p", self.gamma_p),
            ("gamma_ul", self.gamma_ul),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, format!("must be finite and > 0 (got {v})"));
            }
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 0.0) {
            return bad("pathloss_exponent", "must be finite and >= 0");
        }
        if !(self.shadowing_sigma.is_finite() && self.shadowing_sigma >= 0.0) {
            return bad("shadowing_sigma", "must be finite and >= 0");
        }
        let r = self.correlation_coefficient;
        if !(0.0..1.0).contains(&r) {
            return bad(
                "correlation_coefficient",
                format!("must lie in [0, 1) (got {r})"),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub cell_radius: f64,
    pub cell_centers: Vec<Point>,
    /// Absolute RRU coordinates, indexed `[cell][rru]`.
    pub rru_positions: Vec<Vec<Point>>,
    /// Absolute user coordinates, indexed `[cell][user]`; empty until
    /// [`drop_users`] runs.
    pub user_positions: Vec<Vec<Point>>,
}

impl Layout {
    pub fn all_rrus(&self) -> impl Iterator<Item = Point> + '_ {
        self.rru_positions.iter().flatten().copied()
    }

    /// Same cells and users, with a single RRU at every cell center.
    pub fn collocated(&self) -> Layout {
        Layout {
            cell_radius: self.cell_radius,
            cell_centers: self.cell_centers.clone(),
            rru_positions: self.cell_centers.iter().map(|&c| vec![c]).collect(),
            user_positions: self.user_positions.clone(),
        }
    }
}

/// Whether `p`, relative to a cell center, lies inside a flat-topped hexagon
/// of circumradius `radius`.
pub fn in_hexagon(p: Point, radius: f64) -> bool {
    let (x, y) = (p.x.abs(), p.y.abs());
    let s3 = 3.0_f64.sqrt();
    y <= 0.5 * s3 * radius && s3 * x + y <= s3 * radius
}

/// Centers of the first `count` cells of a flat-topped hexagonal grid,
/// ordered ring by ring starting from the origin.
pub fn hex_grid_centers(count: usize, radius: f64) -> Vec<Point> {
    const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let axial_to_point = |q: i64, r: i64| {
        Point::new(
            1.5 * radius * q as f64,
            3.0_f64.sqrt() * radius * (r as f64 + 0.5 * q as f64),
        )
    };
    let mut centers = Vec::with_capacity(count);
    centers.push(Point::ORIGIN);
    let mut ring = 1_i64;
    while centers.len() < count {
        let (mut q, mut r) = (DIRS[4].0 * ring, DIRS[4].1 * ring);
        for dir in DIRS {
            for _ in 0..ring {
                centers.push(axial_to_point(q, r));
                q += dir.0;
                r += dir.1;
            }
        }
        ring += 1;
    }
    centers.truncate(count);
    centers
}

/// RRU offsets relative to the cell center: one at the center and the rest
/// evenly spaced on a ring of radius `0.65 * radius`.
pub fn rru_offsets(rrus: usize, radius: f64) -> Vec<Point> {
    let mut out = vec![Point::ORIGIN];
    let ring = rrus.saturating_sub(1);
    let rho = RRU_RING_FRACTION * radius;
    for j in 0..ring {
        let phi = std::f64::consts::TAU * j as f64 / ring as f64;
        out.push(Point::new(rho * phi.cos(), rho * phi.sin()));
    }
    out.truncate(rrus);
    out
}

pub fn build_layout(s: &Scenario) -> Result<Layout> {
    s.validate()?;
    let centers = hex_grid_centers(s.cells, s.cell_radius);
    let offsets = rru_offsets(s.rrus_per_cell, s.cell_radius);
    let rru_positions = centers
        .iter()
        .map(|&c| offsets.iter().map(|&o| c + o).collect())
        .collect();
    Ok(Layout {
        cell_radius: s.cell_radius,
        cell_centers: centers,
        rru_positions,
        user_positions: Vec::new(),
    })
}

fn uniform_in_hexagon<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Point {
    let half_height = 0.5 * 3.0_f64.sqrt() * radius;
    loop {
        let p = Point::new(
            radius * (2.0 * rng.random::<f64>() - 1.0),
            half_height * (2.0 * rng.random::<f64>() - 1.0),
        );
        if in_hexagon(p, radius) {
            return p;
        }
    }
}

/// Drops `K` users uniformly in every cell, redrawing any candidate closer
/// than `min_access_distance` to an RRU of any cell.
pub fn drop_users<R: Rng + ?Sized>(s: &Scenario, layout: &Layout, rng: &mut R) -> Result<Layout> {
    s.validate()?;
    let rrus: Vec<Point> = layout.all_rrus().collect();
    let mut users = Vec::with_capacity(layout.cell_centers.len());
    for (cell, &center) in layout.cell_centers.iter().enumerate() {
        let mut in_cell = Vec::with_capacity(s.users_per_cell);
        for user in 0..s.users_per_cell {
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let p = center + uniform_in_hexagon(rng, layout.cell_radius);
                if rrus.iter().all(|&r| p.distance(r) >= s.min_access_distance) {
                    placed = Some(p);
                    break;
                }
            }
            match placed {
                Some(p) => in_cell.push(p),
                None => {
                    return Err(Error::PlacementExhausted {
                        cell,
                        user,
                        attempts: MAX_PLACEMENT_ATTEMPTS,
                    })
                }
            }
        }
        users.push(in_cell);
    }
    Ok(Layout {
        user_positions: users,
        ..layout.clone()
    })
}

/// Distance-dependent part of the large-scale gain, `(d / d0)^-alpha` with
/// `d` clamped below at the minimum access distance.
pub fn path_gain(s: &Scenario, distance: f64) -> f64 {
    let d = distance.max(s.min_access_distance);
    (d / s.reference_distance).powf(-s.pathloss_exponent)
}

/// Large-scale fading gains `lambda[l][n][k]` from user `k` of cell `l` to
/// RRU `n` of the reference cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScaleMap {
    cells: usize,
    rrus: usize,
    users: usize,
    values: Vec<f64>,
}

impl LargeScaleMap {
    pub fn from_fn(
        cells: usize,
        rrus: usize,
        users: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(cells * rrus * users);
        for l in 0..cells {
            for n in 0..rrus {
                for k in 0..users {
                    values.push(f(l, n, k));
                }
            }
        }
        Self::from_values(cells, rrus, users, values)
    }

    /// Builds a map from values laid out with `k` fastest, then `n`, then `l`.
    pub fn from_values(cells: usize, rrus: usize, users: usize, values: Vec<f64>) -> Result<Self> {
        if cells == 0 || rrus == 0 || users == 0 {
            return Err(Error::Dimension(
                "large-scale map needs L, N, K >= 1".into(),
            ));
        }
        if values.len() != cells * rrus * users {
            return Err(Error::Dimension(format!(
                "expected {} large-scale values, got {}",
                cells * rrus * users,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Precondition(format!(
                "large-scale gains must be finite and >= 0 (got {v})"
            )));
        }
        Ok(LargeScaleMap {
            cells,
            rrus,
            users,
            values,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn rrus(&self) -> usize {
        self.rrus
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn get(&self, l: usize, n: usize, k: usize) -> f64 {
        self.values[(l * self.rrus + n) * self.users + k]
    }

    /// `lambda[l][..][k]`, the diagonal of `Lambda'_{l,k}`.
    pub fn per_rru(&self, l: usize, k: usize) -> Vec<f64> {
        (0..self.rrus).map(|n| self.get(l, n, k)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draws log-normal shadowing for every (user, reference RRU) link. Links
/// are visited in `(l, k, n)` order.
pub fn compute_largescale<R: Rng + ?Sized>(
    s: &Scenario,
    layout: &Layout,
    rng: &mut R,
) -> Result<LargeScaleMap> {
    s.validate()?;
    if layout.user_positions.len() != layout.cell_centers.len() {
        return Err(Error::Precondition(
            "users must be dropped before computing large-scale fading".into(),
        ));
    }
    let reference = &layout.rru_positions[0];
    let (cells, rrus) = (layout.cell_centers.len(), reference.len());
    let users = layout.user_positions[0].len();
    let mut values = vec![0.0; cells * rrus * users];
    for (l, cell_users) in layout.user_positions.iter().enumerate() {
        if cell_users.len() != users {
            return Err(Error::Dimension("cells carry different user counts".into()));
        }
        for (k, &u) in cell_users.iter().enumerate() {
            for (n, &r) in reference.iter().enumerate() {
                let shadow_db = if s.shadowing_sigma > 0.0 {
                    s.shadowing_sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                values[(l * rrus + n) * users + k] =
                    path_gain(s, u.distance(r)) * 10f64.powf(shadow_db / 10.0);
            }
        }
    }
    LargeScaleMap::from_values(cells, rrus, users, values)
}
