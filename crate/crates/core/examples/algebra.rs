//! Compose two random 2D PI operators symbolically and compare against
//! nested quadrature; then check the adjoint through inner products.

use pie2d::op::PiOp;
use pie2d::verify::{adjoint_residual, composition_residual, probe_points, random_field, random_op, QuadratureGrid};
use pie2d::{rat, Rect};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pie2d::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rect = Rect::new(rat(0, 1), rat(1, 1), rat(-1, 2), rat(1, 1))?;
    let dims = [0, 0, 0, 1];
    let a = random_op(&mut rng, dims, dims, &rect, 2);
    let b = random_op(&mut rng, dims, dims, &rect, 2);
    let ab: PiOp = a.compose(&b)?;
    println!("A has {} kernel terms, B has {}, AB has {} (degree {})", a.nnz(), b.nnz(), ab.nnz(), ab.degree());

    let grid = QuadratureGrid::new(12, &rect);
    let u = random_field(&mut rng, dims, 2);
    let v = random_field(&mut rng, dims, 2);
    let pts = probe_points(&rect, 8, &mut rng);
    println!("composition residual {:.2e}", composition_residual(&a, &b, &ab, &u, &grid, &pts));
    println!("adjoint residual     {:.2e}", adjoint_residual(&a, &a.adjoint(), &u, &v, &grid));
    println!("A + A* self-adjoint: {}", a.add(&a.adjoint()).is_selfadjoint());
    Ok(())
}
