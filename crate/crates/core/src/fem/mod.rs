//! Finite element core: meshes, quadrature, assembly and derivative recovery.

pub mod assembly;
pub mod io;
pub mod mesh;
pub mod quadrature;
pub mod recovery;

pub use assembly::{
    assemble, assemble_load, boundary_integral, eval_at, for_each_qp, integrate, interpolate, nodal_mass,
    try_integrate, DofMap, ElementMap, Operator, Qp,
};
pub use io::{export_mesh, import_mesh};
pub use mesh::{cell_mesh, centered_square_mesh, disk_mesh, polygon_mesh, rectangle_mesh, unit_square_mesh, CellMesh, Domain, Mesh, Order};
pub use quadrature::{gauss_legendre, TriangleRule};
pub use recovery::{recover_derivatives, Recovered};
