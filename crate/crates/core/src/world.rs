//! Component safety functions of the world and their discretization.
//!
//! The safe domain is the intersection of the 0-superlevel sets of one
//! function per circular obstacle and one per rectangle wall, expressed as a
//! pointwise minimum.

use thiserror::Error;

use crate::scenario::Scenario;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("degenerate mesh: resolution {resolution} exceeds narrowest passage {passage}")]
    DegenerateMesh { resolution: f64, passage: f64 },
    #[error("degenerate mesh: no interior cells at resolution {0}")]
    EmptyInterior(f64),
    #[error("invalid resolution {0}")]
    InvalidResolution(f64),
}

/// Component barriers at `p`: circles first (in obstacle order), then the
/// walls `x - x_min`, `x_max - x`, `y - y_min`, `y_max - y`.
pub fn component_barriers(scenario: &Scenario, p: [f64; 2]) -> Vec<f64> {
    let b = &scenario.bounds;
    let mut out = Vec::with_capacity(scenario.obstacles.len() + 4);
    out.extend(scenario.obstacles.iter().map(|o| {
        let dx = p[0] - o.center[0];
        let dy = p[1] - o.center[1];
        dx.hypot(dy) - o.radius
    }));
    out.extend([p[0] - b.x_min, b.x_max - p[0], p[1] - b.y_min, b.y_max - p[1]]);
    out
}

/// Minimum over the component barriers; positive exactly on the open safe
/// domain.
pub fn min_barrier(scenario: &Scenario, p: [f64; 2]) -> f64 {
    let b = &scenario.bounds;
    let walls = (p[0] - b.x_min)
        .min(b.x_max - p[0])
        .min(p[1] - b.y_min)
        .min(b.y_max - p[1]);
    scenario.obstacles.iter().fold(walls, |acc, o| {
        acc.min((p[0] - o.center[0]).hypot(p[1] - o.center[1]) - o.radius)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    /// Cell center strictly inside the safe domain.
    Interior,
    /// Non-interior cell 4-adjacent to an interior cell; carries the
    /// zero Dirichlet condition.
    Boundary,
    /// Any other non-interior cell.
    Exterior,
}

/// Cell-centered classification grid. Cell `(i, j)` has center
/// `origin + (i, j) * spacing` and is stored at `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMask {
    pub origin: [f64; 2],
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<CellKind>,
}

impl DomainMask {
    /// Builds a mask from an interior indicator; boundary cells are derived
    /// by 4-adjacency.
    pub fn from_interior(
        origin: [f64; 2],
        spacing: f64,
        nx: usize,
        ny: usize,
        interior: &[bool],
    ) -> Self {
        assert_eq!(interior.len(), nx * ny);
        let mut cells = vec![CellKind::Exterior; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if interior[k] {
                    cells[k] = CellKind::Interior;
                    continue;
                }
                let touches = (i > 0 && interior[k - 1])
                    || (i + 1 < nx && interior[k + 1])
                    || (j > 0 && interior[k - nx])
                    || (j + 1 < ny && interior[k + nx]);
                if touches {
                    cells[k] = CellKind::Boundary;
                }
            }
        }
        Self {
            origin,
            spacing,
            nx,
            ny,
            cells,
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.spacing,
            self.origin[1] + j as f64 * self.spacing,
        ]
    }

    pub fn kind(&self, i: usize, j: usize) -> CellKind {
        self.cells[self.index(i, j)]
    }

    /// Cell whose center is nearest to `p`, if inside the grid.
    pub fn cell_at(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fi = ((p[0] - self.origin[0]) / self.spacing).round();
        let fj = ((p[1] - self.origin[1]) / self.spacing).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.cells.iter().filter(|c| **c == kind).count()
    }
}

/// Narrowest positive gap of the world: rectangle extents, obstacle-to-wall
/// gaps and obstacle-to-obstacle gaps. Obstacles overlapping a wall or each
/// other do not form passages.
pub fn narrowest_passage(scenario: &Scenario) -> f64 {
    let b = &scenario.bounds;
    let mut gaps = vec![b.width(), b.height()];
    for (i, o) in scenario.obstacles.iter().enumerate() {
        let [cx, cy] = o.center;
        for g in [cx - b.x_min, b.x_max - cx, cy - b.y_min, b.y_max - cy] {
            gaps.push(g - o.radius);
        }
        for p in &scenario.obstacles[i + 1..] {
            gaps.push((cx - p.center[0]).hypot(cy - p.center[1]) - o.radius - p.radius);
        }
    }
    gaps.into_iter()
        .filter(|g| *g > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Rasterizes the safe domain on a uniform grid covering the rectangle plus
/// `max(2 cells, field.padding)` on every side.
pub fn rasterize_domain(scenario: &Scenario, resolution: f64) -> Result<DomainMask, WorldError> {
    let padding = scenario.field.padding;
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(WorldError::InvalidResolution(resolution));
    }
    let passage = narrowest_passage(scenario);
    if resolution > passage * (1.0 + 1e-9) {
        return Err(WorldError::DegenerateMesh {
            resolution,
            passage,
        });
    }
    let b = &scenario.bounds;
    let pad = ((padding / resolution).ceil() as usize).max(2);
    let nx = (b.width() / resolution).ceil() as usize + 1 + 2 * pad;
    let ny = (b.height() / resolution).ceil() as usize + 1 + 2 * pad;
    let origin = [
        b.x_min - pad as f64 * resolution,
        b.y_min - pad as f64 * resolution,
    ];
    let mut interior = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let p = [
                origin[0] + i as f64 * resolution,
                origin[1] + j as f64 * resolution,
            ];
            interior[j * nx + i] = min_barrier(scenario, p) > 0.0;
        }
    }
    if !interior.iter().any(|c| *c) {
        return Err(WorldError::EmptyInterior(resolution));
    }
    Ok(DomainMask::from_interior(origin, resolution, nx, ny, &interior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::RectBounds;

    /// Rectangle exactly as printed in the experiment description
    /// (x_max = 0.8); used only for formula-level checks.
    fn literal_geometry() -> Scenario {
        let mut s = Scenario::paper();
        s.bounds = RectBounds {
            x_min: -1.5,
            x_max: 0.8,
            y_min: -2.0,
            y_max: 2.0,
        };
        s
    }

    #[test]
    fn component_values_at_origin() {
        let h = component_barriers(&literal_geometry(), [0.0, 0.0]);
        let expected = [1.5, 5.9, 1.5, 0.8, 2.0, 2.0];
        assert_eq!(h.len(), 6);
        for (a, b) in h.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{h:?}");
        }
        assert!((min_barrier(&literal_geometry(), [0.0, 0.0]) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn component_edge_cases() {
        let s = Scenario::paper();
        assert_eq!(component_barriers(&s, [2.5, 0.0])[0], -1.0);
        assert!((component_barriers(&s, [0.0, -0.35])[4] - 1.65).abs() < 1e-12);
        assert_eq!(min_barrier(&s, [2.5, 0.0]), -1.0);
        assert!(min_barrier(&s, [1.5, 0.0]).abs() < 1e-12);
        assert!(min_barrier(&s, [2.5, 1.0]).abs() < 1e-12);
    }

    #[test]
    fn walls_are_affine() {
        let s = Scenario::paper();
        let (a, b) = ([0.3, -1.1], [4.2, 1.7]);
        let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let (ha, hb, hm) = (
            component_barriers(&s, a),
            component_barriers(&s, b),
            component_barriers(&s, m),
        );
        for k in 2..6 {
            assert!((hm[k] - 0.5 * (ha[k] + hb[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_world_interior_is_strict_rectangle() {
        let mut s = Scenario::paper();
        s.obstacles.clear();
        s.field.padding = 0.0;
        let mask = rasterize_domain(&s, 0.05).unwrap();
        let b = s.bounds;
        for j in 0..mask.ny {
            for i in 0..mask.nx {
                let [x, y] = mask.center(i, j);
                let inside = x > b.x_min + 1e-9
                    && x < b.x_max - 1e-9
                    && y > b.y_min + 1e-9
                    && y < b.y_max - 1e-9;
                if inside {
                    assert_eq!(mask.kind(i, j), CellKind::Interior, "({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn obstacle_center_is_exterior_and_padding_present() {
        let s = Scenario::paper();
        let mask = rasterize_domain(&s, 0.05).unwrap();
        let (i, j) = mask.cell_at([2.5, 0.0]).unwrap();
        assert_eq!(mask.kind(i, j), CellKind::Exterior);
        assert!(mask.origin[0] <= s.bounds.x_min - 2.0 * 0.05);
        let far = mask.center(mask.nx - 1, mask.ny - 1);
        assert!(far[0] >= s.bounds.x_max + 2.0 * 0.05 - 1e-12);
        assert!(far[1] >= s.bounds.y_max + 2.0 * 0.05 - 1e-12);
        // the outermost ring is never interior
        for i in 0..mask.nx {
            assert_eq!(mask.kind(i, 0), CellKind::Exterior);
        }
    }

    #[test]
    fn boundary_cells_touch_interior() {
        let s = Scenario::paper();
        let mask = rasterize_domain(&s, 0.1).unwrap();
        for j in 0..mask.ny {
            for i in 0..mask.nx {
                let kind = mask.kind(i, j);
                let nb = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .filter_map(|(di, dj)| {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        (a >= 0 && b >= 0 && (a as usize) < mask.nx && (b as usize) < mask.ny)
                            .then(|| mask.kind(a as usize, b as usize))
                    })
                    .any(|k| k == CellKind::Interior);
                match kind {
                    CellKind::Boundary => assert!(nb),
                    CellKind::Exterior => assert!(!nb),
                    CellKind::Interior => {
                        assert!(min_barrier(&s, mask.center(i, j)) > 0.0)
                    }
                }
            }
        }
    }

    #[test]
    fn coarse_mesh_is_rejected() {
        let s = Scenario::paper();
        // 0.1 m between the second obstacle and the x_max wall
        assert!((narrowest_passage(&s) - 0.1).abs() < 1e-12);
        assert!(matches!(
            rasterize_domain(&s, 0.2),
            Err(WorldError::DegenerateMesh { .. })
        ));
        assert!(matches!(
            rasterize_domain(&s, -1.0),
            Err(WorldError::InvalidResolution(_))
        ));
    }
}
