//! Discrete fields: per-triangle (P0) coefficients and nodal (P1) states.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Piecewise-constant diffusion coefficient, one value per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub values: Vec<f64>,
}

impl CoefficientField {
    pub fn new(values: Vec<f64>, mesh: &TriMesh) -> Result<Self> {
        if values.len() != mesh.n_triangles() {
            return Err(Error::invalid(format!(
                "coefficient field has {} values for {} triangles",
                values.len(),
                mesh.n_triangles()
            )));
        }
        Ok(CoefficientField { values })
    }

    pub fn constant(value: f64, mesh: &TriMesh) -> Self {
        CoefficientField { values: vec![value; mesh.n_triangles()] }
    }

    /// Samples `f` at triangle centroids.
    pub fn from_fn(mesh: &TriMesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        CoefficientField {
            values: (0..mesh.n_triangles()).map(|t| f(mesh.centroid(t))).collect(),
        }
    }

    /// Broadcasts one value per subregion onto the triangles.
    pub fn from_region_values(mesh: &TriMesh, region_values: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(mesh.n_triangles());
        for &r in &mesh.region_of_triangle {
            let v = region_values.get(r).ok_or_else(|| {
                Error::invalid(format!("triangle region {r} has no reference value"))
            })?;
            values.push(*v);
        }
        Ok(CoefficientField { values })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `L2(domain)` norm of the P0 field: `sqrt(sum_T v_T^2 |T|)`.
    pub fn l2_norm(&self, mesh: &TriMesh) -> f64 {
        self.l2_norm_squared(mesh).sqrt()
    }

    pub fn l2_norm_squared(&self, mesh: &TriMesh) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(t, v)| v * v * mesh.area(t))
            .sum()
    }

    pub fn clamp(&mut self, lower: f64, upper: f64) {
        for v in &mut self.values {
            *v = v.clamp(lower, upper);
        }
    }
}

/// Real P1 nodal field.
#[derive(Debug, Clone, PartialEq)]
pub struct RealNodalField {
    pub values: Vec<f64>,
}

impl RealNodalField {
    pub fn zeros(mesh: &TriMesh) -> Self {
        RealNodalField { values: vec![0.0; mesh.n_nodes()] }
    }

    pub fn from_fn(mesh: &TriMesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        RealNodalField { values: mesh.nodes.iter().map(|&p| f(p)).collect() }
    }

    /// Constant gradient of the interpolant on triangle `t`.
    pub fn gradient_on(&self, mesh: &TriMesh, t: usize) -> [f64; 2] {
        let grads = mesh.basis_gradients(t);
        let tri = mesh.triangles[t];
        let mut g = [0.0, 0.0];
        for k in 0..3 {
            g[0] += self.values[tri[k]] * grads[k][0];
            g[1] += self.values[tri[k]] * grads[k][1];
        }
        g
    }

    /// Value of the interpolant at the centroid of triangle `t`.
    pub fn centroid_value(&self, mesh: &TriMesh, t: usize) -> f64 {
        let tri = mesh.triangles[t];
        (self.values[tri[0]] + self.values[tri[1]] + self.values[tri[2]]) / 3.0
    }
}

/// Complex P1 nodal field (CCBM state and adjoint).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexNodalField {
    pub values: Vec<Complex64>,
}

impl ComplexNodalField {
    pub fn real_part(&self) -> RealNodalField {
        RealNodalField { values: self.values.iter().map(|z| z.re).collect() }
    }

    pub fn imag_part(&self) -> RealNodalField {
        RealNodalField { values: self.values.iter().map(|z| z.im).collect() }
    }
}
