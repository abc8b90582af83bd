//! Polycube and triangle-mesh shapes.

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::{Point3, Vector3};

use super::{GeometryError, Pose};

/// Set of unit cells on the integer lattice, scaled by `size` meters.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    cells: Vec<[i32; 3]>,
    size: f64,
}

impl VoxelGrid {
    pub fn cells(&self) -> &[[i32; 3]] {
        &self.cells
    }

    pub fn size(&self) -> f64 {
        self.size
    }

    /// Center of cell `c` in body frame.
    pub fn cell_center(&self, c: [i32; 3]) -> Point3<f64> {
        Point3::new(
            (c[0] as f64 + 0.5) * self.size,
            (c[1] as f64 + 0.5) * self.size,
            (c[2] as f64 + 0.5) * self.size,
        )
    }
}

/// Rigid body shape: a closed, outward-oriented triangle mesh, with the
/// generating voxel grid retained when the shape was built from one (exact
/// collision queries use the cells directly).
#[derive(Debug, Clone)]
pub struct Shape {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    voxels: Option<VoxelGrid>,
}

impl Shape {
    /// Builds a shape from an explicit triangle mesh. The mesh must be
    /// closed (every edge shared by exactly two triangles with opposite
    /// orientation) and outward-oriented (signed volume > 0).
    pub fn from_mesh(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<Self, GeometryError> {
        let shape = Self {
            vertices,
            triangles,
            voxels: None,
        };
        shape.check_closed()?;
        let vol = shape.signed_volume();
        if vol <= 0.0 {
            return Err(GeometryError::InsideOut(vol));
        }
        Ok(shape)
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn voxels(&self) -> Option<&VoxelGrid> {
        self.voxels.as_ref()
    }

    pub fn triangle_points(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// All triangles transformed into world frame, with their (non-unit)
    /// normal vectors.
    pub fn world_triangles(&self, pose: &Pose) -> Vec<([Point3<f64>; 3], Vector3<f64>)> {
        self.triangles
            .iter()
            .map(|t| {
                let p = [
                    pose * self.vertices[t[0] as usize],
                    pose * self.vertices[t[1] as usize],
                    pose * self.vertices[t[2] as usize],
                ];
                let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
                (p, n)
            })
            .collect()
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize];
                let b = self.vertices[t[1] as usize];
                let c = self.vertices[t[2] as usize];
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Signed volume via the divergence theorem; positive for outward
    /// orientation.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let a = self.vertices[t[0] as usize].coords;
                let b = self.vertices[t[1] as usize].coords;
                let c = self.vertices[t[2] as usize].coords;
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Centroid of the enclosed volume (uniform density), in body frame.
    pub fn volume_centroid(&self) -> Point3<f64> {
        if let Some(v) = &self.voxels {
            let mut acc = Vector3::zeros();
            for &c in v.cells() {
                acc += v.cell_center(c).coords;
            }
            return Point3::from(acc / v.cells().len() as f64);
        }
        let mut vol = 0.0;
        let mut acc = Vector3::zeros();
        for t in &self.triangles {
            let a = self.vertices[t[0] as usize].coords;
            let b = self.vertices[t[1] as usize].coords;
            let c = self.vertices[t[2] as usize].coords;
            let v6 = a.dot(&b.cross(&c));
            vol += v6;
            acc += (a + b + c) * (v6 / 4.0);
        }
        Point3::from(acc / vol)
    }

    pub fn aabb(&self, pose: &Pose) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            let w = pose * v;
            for k in 0..3 {
                lo[k] = lo[k].min(w[k]);
                hi[k] = hi[k].max(w[k]);
            }
        }
        (lo, hi)
    }

    fn check_closed(&self) -> Result<(), GeometryError> {
        let mut edges: HashMap<(u32, u32), i64> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let a = t[k];
                let b = t[(k + 1) % 3];
                if a < b {
                    *edges.entry((a, b)).or_insert(0) += 1;
                } else {
                    *edges.entry((b, a)).or_insert(0) -= 1;
                }
            }
        }
        for (&(a, b), &count) in &edges {
            if count != 0 {
                return Err(GeometryError::OpenMesh(a, b));
            }
        }
        Ok(())
    }
}

/// Builds the outer-surface mesh of a polycube. Interior faces shared by
/// two cells are removed; every remaining unit face becomes two outward
/// triangles.
pub fn build_shape(cells: &[[i32; 3]], voxel_size: f64) -> Result<Shape, GeometryError> {
    if cells.is_empty() {
        return Err(GeometryError::EmptyShape);
    }
    assert!(voxel_size > 0.0, "voxel_size must be positive");

    let mut unique: Vec<[i32; 3]> = cells.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let set: HashSet<[i32; 3]> = unique.iter().copied().collect();

    // 6-connectivity check.
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(unique[0]);
    queue.push_back(unique[0]);
    while let Some(c) = queue.pop_front() {
        for (axis, step) in [(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)] {
            let mut n = c;
            n[axis] += step;
            if set.contains(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    if seen.len() != unique.len() {
        return Err(GeometryError::Disconnected {
            reachable: seen.len(),
            total: unique.len(),
        });
    }

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut index: HashMap<[i32; 3], u32> = HashMap::new();
    let mut corner = |c: [i32; 3]| -> u32 {
        *index.entry(c).or_insert_with(|| {
            vertices.push(Point3::new(
                c[0] as f64 * voxel_size,
                c[1] as f64 * voxel_size,
                c[2] as f64 * voxel_size,
            ));
            (vertices.len() - 1) as u32
        })
    };

    // For each axis and direction, the four face corners in outward CCW
    // order, as offsets from the cell's min corner.
    const FACES: [([i32; 3], [[i32; 3]; 4]); 6] = [
        // +x
        ([1, 0, 0], [[1, 0, 0], [1, 1, 0], [1, 1, 1], [1, 0, 1]]),
        // -x
        ([-1, 0, 0], [[0, 0, 0], [0, 0, 1], [0, 1, 1], [0, 1, 0]]),
        // +y
        ([0, 1, 0], [[0, 1, 0], [0, 1, 1], [1, 1, 1], [1, 1, 0]]),
        // -y
        ([0, -1, 0], [[0, 0, 0], [1, 0, 0], [1, 0, 1], [0, 0, 1]]),
        // +z
        ([0, 0, 1], [[0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]]),
        // -z
        ([0, 0, -1], [[0, 0, 0], [0, 1, 0], [1, 1, 0], [1, 0, 0]]),
    ];

    let mut triangles = Vec::new();
    for &cell in &unique {
        for (delta, corners) in FACES {
            let neighbor = [cell[0] + delta[0], cell[1] + delta[1], cell[2] + delta[2]];
            if set.contains(&neighbor) {
                continue;
            }
            let ids: Vec<u32> = corners
                .iter()
                .map(|o| corner([cell[0] + o[0], cell[1] + o[1], cell[2] + o[2]]))
                .collect();
            triangles.push([ids[0], ids[1], ids[2]]);
            triangles.push([ids[0], ids[2], ids[3]]);
        }
    }

    let shape = Shape {
        vertices,
        triangles,
        voxels: Some(VoxelGrid {
            cells: unique,
            size: voxel_size,
        }),
    };
    debug_assert!(shape.check_closed().is_ok());
    debug_assert!(shape.signed_volume() > 0.0);
    Ok(shape)
}
