//! Staggered rectangular grid and the fields that live on it.
//!
//! Layout (row-major, `j` outer):
//!
//! * nodes `(i, j)`, `0 <= i <= nx`, `0 <= j <= ny`, at `(x0 + i hx, y0 + j hy)`;
//! * x-edges `(i, j)`, `0 <= i < nx`, `0 <= j <= ny`, joining node `(i, j)` to `(i+1, j)`;
//! * y-edges `(i, j)`, `0 <= i <= nx`, `0 <= j < ny`, joining node `(i, j)` to `(i, j+1)`;
//! * cells `(i, j)`, `0 <= i < nx`, `0 <= j < ny`, with lower-left node `(i, j)`.
//!
//! Edge fields store the tangential component of a vector field at the edge
//! midpoint. Node quadrature uses trapezoid weights; an x-edge on the bottom or
//! top side (and a y-edge on the left or right side) carries half a dual cell.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_CELLS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    x0: f64,
    y0: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells per axis, got {nx}x{ny}"
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive and finite, got {lx} x {ly}"
            )));
        }
        Ok(Grid {
            nx,
            ny,
            lx,
            ly,
            x0: 0.0,
            y0: 0.0,
        })
    }

    /// Square grid `[0, l]^2` with `n` cells per side.
    pub fn square(n: usize, l: f64) -> Result<Self> {
        Self::new(n, n, l, l)
    }

    pub fn with_origin(mut self, x0: f64, y0: f64) -> Self {
        self.x0 = x0;
        self.y0 = y0;
        self
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn origin(&self) -> (f64, f64) {
        (self.x0, self.y0)
    }
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }
    pub fn num_xedges(&self) -> usize {
        self.nx * (self.ny + 1)
    }
    pub fn num_yedges(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    #[inline]
    pub fn xedge(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn yedge(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Inverse of [`Grid::node`].
    #[inline]
    pub fn node_ij(&self, idx: usize) -> (usize, usize) {
        (idx % (self.nx + 1), idx / (self.nx + 1))
    }

    pub fn node_pos(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x0 + i as f64 * self.hx(), self.y0 + j as f64 * self.hy())
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.hx(),
            self.y0 + (j as f64 + 0.5) * self.hy(),
        )
    }

    #[inline]
    fn end_weight(k: usize, n: usize) -> f64 {
        if k == 0 || k == n {
            0.5
        } else {
            1.0
        }
    }

    /// Trapezoid quadrature weight (dual-cell area) of node `(i, j)`.
    #[inline]
    pub fn node_area(&self, i: usize, j: usize) -> f64 {
        self.cell_area() * Self::end_weight(i, self.nx) * Self::end_weight(j, self.ny)
    }

    /// Quadrature weight of x-edge `(i, j)`: `hx * hy`, halved on the bottom and top sides.
    #[inline]
    pub fn xedge_area(&self, _i: usize, j: usize) -> f64 {
        self.cell_area() * Self::end_weight(j, self.ny)
    }

    /// Quadrature weight of y-edge `(i, j)`: `hx * hy`, halved on the left and right sides.
    #[inline]
    pub fn yedge_area(&self, i: usize, _j: usize) -> f64 {
        self.cell_area() * Self::end_weight(i, self.nx)
    }

    pub fn is_boundary_node(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Length of the boundary portion of node `(i, j)`'s dual cell (0 for interior nodes).
    pub fn boundary_length(&self, i: usize, j: usize) -> f64 {
        let mut len = 0.0;
        if i == 0 || i == self.nx {
            len += self.hy() * Self::end_weight(j, self.ny);
        }
        if j == 0 || j == self.ny {
            len += self.hx() * Self::end_weight(i, self.nx);
        }
        len
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = 1e-12 * self.lx.max(self.ly);
        x >= self.x0 - tol
            && x <= self.x0 + self.lx + tol
            && y >= self.y0 - tol
            && y <= self.y0 + self.ly + tol
    }

    /// Euclidean distance from `(x, y)` to the rectangle boundary (0 outside).
    pub fn dist_to_boundary(&self, x: f64, y: f64) -> f64 {
        let d = (x - self.x0)
            .min(self.x0 + self.lx - x)
            .min(y - self.y0)
            .min(self.y0 + self.ly - y);
        d.max(0.0)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    pub(crate) fn check_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::Dimension(format!(
                "{what}: grid {}x{} does not match {}x{}",
                self.nx, self.ny, other.nx, other.ny
            )));
        }
        Ok(())
    }

    /// Iterator over all node coordinates `(i, j)` in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.ny).flat_map(move |j| (0..=self.nx).map(move |i| (i, j)))
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j)))
    }
}

macro_rules! field_common {
    ($name:ident, $t:ty) => {
        impl $name {
            pub fn grid(&self) -> &Grid {
                &self.grid
            }
            pub fn as_slice(&self) -> &[$t] {
                &self.data
            }
            pub fn as_mut_slice(&mut self) -> &mut [$t] {
                &mut self.data
            }
            pub fn into_vec(self) -> Vec<$t> {
                self.data
            }
            pub fn len(&self) -> usize {
                self.data.len()
            }
            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = $t;
            fn index(&self, k: usize) -> &$t {
                &self.data[k]
            }
        }

        impl std::ops::IndexMut<usize> for $name {
            fn index_mut(&mut self, k: usize) -> &mut $t {
                &mut self.data[k]
            }
        }
    };
}

/// Node-indexed complex field (order parameter).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    data: Vec<Complex64>,
}
field_common!(ComplexField, Complex64);

impl ComplexField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, Complex64::new(0.0, 0.0))
    }

    pub fn constant(grid: Grid, c: Complex64) -> Self {
        ComplexField {
            grid,
            data: vec![c; grid.num_nodes()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.num_nodes() {
            return Err(Error::Dimension(format!(
                "complex node field needs {} values, got {}",
                grid.num_nodes(),
                data.len()
            )));
        }
        Ok(ComplexField { grid, data })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let data = grid
            .nodes()
            .map(|(i, j)| {
                let (x, y) = grid.node_pos(i, j);
                f(x, y)
            })
            .collect();
        ComplexField { grid, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[self.grid.node(i, j)]
    }

    pub fn modulus(&self) -> NodeField {
        NodeField {
            grid: self.grid,
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        ComplexField {
            grid: self.grid,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }
}

/// Node-indexed real field (potentials, stream functions, moduli).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeField {
    grid: Grid,
    data: Vec<f64>,
}
field_common!(NodeField, f64);

impl NodeField {
    pub fn zeros(grid: Grid) -> Self {
        NodeField {
            grid,
            data: vec![0.0; grid.num_nodes()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.num_nodes() {
            return Err(Error::Dimension(format!(
                "node field needs {} values, got {}",
                grid.num_nodes(),
                data.len()
            )));
        }
        Ok(NodeField { grid, data })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = grid
            .nodes()
            .map(|(i, j)| {
                let (x, y) = grid.node_pos(i, j);
                f(x, y)
            })
            .collect();
        NodeField { grid, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.node(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Area-weighted mean.
    pub fn mean(&self) -> f64 {
        let g = self.grid;
        let s: f64 = g
            .nodes()
            .map(|(i, j)| g.node_area(i, j) * self.at(i, j))
            .sum();
        s / g.area()
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// Edge-indexed real field: tangential component of a vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeField {
    grid: Grid,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl EdgeField {
    pub fn zeros(grid: Grid) -> Self {
        EdgeField {
            grid,
            x: vec![0.0; grid.num_xedges()],
            y: vec![0.0; grid.num_yedges()],
        }
    }

    pub fn from_vecs(grid: Grid, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != grid.num_xedges() || y.len() != grid.num_yedges() {
            return Err(Error::Dimension(format!(
                "edge field needs {}+{} values, got {}+{}",
                grid.num_xedges(),
                grid.num_yedges(),
                x.len(),
                y.len()
            )));
        }
        Ok(EdgeField { grid, x, y })
    }

    /// Samples a vector field `(f1, f2)` at edge midpoints.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let (hx, hy) = (grid.hx(), grid.hy());
        let mut out = Self::zeros(grid);
        for j in 0..=grid.ny() {
            for i in 0..grid.nx() {
                let (x, y) = grid.node_pos(i, j);
                out.x[grid.xedge(i, j)] = f(x + 0.5 * hx, y).0;
            }
        }
        for j in 0..grid.ny() {
            for i in 0..=grid.nx() {
                let (x, y) = grid.node_pos(i, j);
                out.y[grid.yedge(i, j)] = f(x, y + 0.5 * hy).1;
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn xs(&self) -> &[f64] {
        &self.x
    }
    pub fn ys(&self) -> &[f64] {
        &self.y
    }
    pub fn xs_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }
    pub fn ys_mut(&mut self) -> &mut [f64] {
        &mut self.y
    }

    #[inline]
    pub fn x_at(&self, i: usize, j: usize) -> f64 {
        self.x[self.grid.xedge(i, j)]
    }
    #[inline]
    pub fn y_at(&self, i: usize, j: usize) -> f64 {
        self.y[self.grid.yedge(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite())
    }

    pub fn axpy(&self, a: f64, other: &EdgeField) -> Result<EdgeField> {
        self.grid.check_same(&other.grid, "edge axpy")?;
        Ok(EdgeField {
            grid: self.grid,
            x: self.x.iter().zip(&other.x).map(|(u, v)| u + a * v).collect(),
            y: self.y.iter().zip(&other.y).map(|(u, v)| u + a * v).collect(),
        })
    }

    pub fn sub(&self, other: &EdgeField) -> Result<EdgeField> {
        self.axpy(-1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(self.y.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Concatenated x then y values.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.extend_from_slice(&self.y);
        v
    }
}

/// Cell-indexed real field (plaquette quantities such as the curl).
#[derive(Clone, Debug, PartialEq)]
pub struct CellField {
    grid: Grid,
    data: Vec<f64>,
}
field_common!(CellField, f64);

impl CellField {
    pub fn zeros(grid: Grid) -> Self {
        CellField {
            grid,
            data: vec![0.0; grid.num_cells()],
        }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.num_cells() {
            return Err(Error::Dimension(format!(
                "cell field needs {} values, got {}",
                grid.num_cells(),
                data.len()
            )));
        }
        Ok(CellField { grid, data })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.cell(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> CellField {
        CellField {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Which family of edges a complex edge quantity lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn from_index(k: usize) -> Result<Axis> {
        match k {
            1 => Ok(Axis::X),
            2 => Ok(Axis::Y),
            _ => Err(Error::Spec(format!("axis must be 1 or 2, got {k}"))),
        }
    }
}

/// Complex values on one family of edges, phase-referenced to each edge's tail node.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexEdgeField {
    grid: Grid,
    axis: Axis,
    data: Vec<Complex64>,
}
field_common!(ComplexEdgeField, Complex64);

impl ComplexEdgeField {
    pub(crate) fn new(grid: Grid, axis: Axis, data: Vec<Complex64>) -> Self {
        ComplexEdgeField { grid, axis, data }
    }
    pub fn axis(&self) -> Axis {
        self.axis
    }
}

/// Cell-indexed complex values, phase-referenced to each cell's lower-left node.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexCellField {
    grid: Grid,
    data: Vec<Complex64>,
}
field_common!(ComplexCellField, Complex64);

impl ComplexCellField {
    pub(crate) fn new(grid: Grid, data: Vec<Complex64>) -> Self {
        ComplexCellField { grid, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_degenerate_grids() {
        assert!(Grid::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn layouts_have_documented_shapes() {
        let g = Grid::new(6, 5, 1.2, 1.0).unwrap();
        assert_eq!(g.num_nodes(), 7 * 6);
        assert_eq!(g.num_xedges(), 6 * 6);
        assert_eq!(g.num_yedges(), 7 * 5);
        assert_eq!(g.num_cells(), 30);
        assert_eq!(g.node_ij(g.node(4, 3)), (4, 3));
    }

    #[test]
    fn quadrature_weights_sum_to_area() {
        let g = Grid::new(7, 9, 1.4, 0.9).unwrap();
        let nodes: f64 = g.nodes().map(|(i, j)| g.node_area(i, j)).sum();
        let mut xe = 0.0;
        for j in 0..=g.ny() {
            for i in 0..g.nx() {
                xe += g.xedge_area(i, j);
            }
        }
        let bl: f64 = g.nodes().map(|(i, j)| g.boundary_length(i, j)).sum();
        assert!((nodes - g.area()).abs() < 1e-14);
        assert!((xe - g.area()).abs() < 1e-14);
        assert!((bl - 2.0 * (1.4 + 0.9)).abs() < 1e-14);
    }
}
