use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::error::{Error, Result};

/// Propagation direction inside the waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }
}

/// The two served users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum User {
    /// Forward-side user.
    Fu,
    /// Backward-side user.
    Bu,
}

impl User {
    pub const BOTH: [User; 2] = [User::Fu, User::Bu];

    pub fn index(self) -> usize {
        match self {
            User::Fu => 0,
            User::Bu => 1,
        }
    }

    pub fn other(self) -> User {
        match self {
            User::Fu => User::Bu,
            User::Bu => User::Fu,
        }
    }

    /// Direction whose PAs serve this user alone under time switching.
    pub fn home_direction(self) -> Direction {
        match self {
            User::Fu => Direction::Forward,
            User::Bu => Direction::Backward,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            User::Fu => "FU",
            User::Bu => "BU",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point::new(p[0], p[1])
    }
}

/// Port and PA positions along the waveguide (the x axis).
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub port_positions: Vec<Point>,
    pub fpa_positions: Vec<Point>,
    pub bpa_positions: Vec<Point>,
    pub fpa_displacements: Vec<f64>,
    pub bpa_displacements: Vec<f64>,
    pa_spacing: f64,
}

impl Geometry {
    pub fn pa_positions(&self, dir: Direction) -> &[Point] {
        match dir {
            Direction::Forward => &self.fpa_positions,
            Direction::Backward => &self.bpa_positions,
        }
    }

    pub fn displacements(&self, dir: Direction) -> &[f64] {
        match dir {
            Direction::Forward => &self.fpa_displacements,
            Direction::Backward => &self.bpa_displacements,
        }
    }

    pub fn num_pas(&self) -> usize {
        self.fpa_positions.len()
    }

    /// In-waveguide distance from the outermost port on the PA's side to PA
    /// `n` (zero-based), for displacement `d`.
    pub fn waveguide_offset(&self, dir: Direction, n: usize, d: f64) -> f64 {
        let nominal = (n + 1) as f64 * self.pa_spacing;
        match dir {
            Direction::Forward => nominal + d,
            Direction::Backward => nominal - d,
        }
    }

    /// x-ordinate of PA `n` (zero-based) for displacement `d`.
    pub fn pa_x(&self, dir: Direction, n: usize, d: f64) -> f64 {
        let edge = match dir {
            Direction::Forward => self.port_positions.last(),
            Direction::Backward => self.port_positions.first(),
        }
        .map(|p| p.x)
        .unwrap_or(0.0);
        let nominal = (n + 1) as f64 * self.pa_spacing;
        match dir {
            Direction::Forward => edge + nominal + d,
            Direction::Backward => edge - nominal + d,
        }
    }
}

/// Build port and PA positions for the given displacement vectors.
pub fn build_geometry(scenario: &Scenario, d_f: &[f64], d_b: &[f64]) -> Result<Geometry> {
    let cfg = &scenario.config;
    let (m_ports, n_pas) = (cfg.num_ports, cfg.num_pas_per_direction);
    if d_f.len() != n_pas || d_b.len() != n_pas {
        return Err(Error::Domain(format!(
            "expected {n_pas} displacements per direction, got {} and {}",
            d_f.len(),
            d_b.len()
        )));
    }
    let limit = cfg.max_displacement;
    for (name, d) in [("forward", d_f), ("backward", d_b)] {
        if let Some((n, v)) = d.iter().enumerate().find(|(_, v)| !(v.abs() <= limit)) {
            return Err(Error::Domain(format!(
                "{name} displacement {n} = {v} exceeds the +/-{limit} m range"
            )));
        }
    }

    let l_in = cfg.port_spacing;
    let l_pa = cfg.pa_spacing;
    let center = (m_ports as f64 + 1.0) / 2.0;
    let port_positions = (1..=m_ports)
        .map(|m| Point::new((m as f64 - center) * l_in, 0.0))
        .collect();
    let half_span = (m_ports as f64 - 1.0) / 2.0 * l_in;
    let fpa_positions = (1..=n_pas)
        .map(|n| Point::new(half_span + n as f64 * l_pa + d_f[n - 1], 0.0))
        .collect();
    let bpa_positions = (1..=n_pas)
        .map(|n| Point::new(-half_span - n as f64 * l_pa + d_b[n - 1], 0.0))
        .collect();

    Ok(Geometry {
        port_positions,
        fpa_positions,
        bpa_positions,
        fpa_displacements: d_f.to_vec(),
        bpa_displacements: d_b.to_vec(),
        pa_spacing: l_pa,
    })
}
