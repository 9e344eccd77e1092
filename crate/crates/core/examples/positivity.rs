//! Build 𝒫 = 𝒵* P 𝒵 from a PSD Gram matrix and check ⟨u, 𝒫u⟩ ≥ 0 by quadrature.

use pie2d::positivity::{lpi_param_map, PositivityBasis};
use pie2d::verify::{apply_numeric, random_field, rll_inner_product, PolyField, QuadratureGrid};
use pie2d::{rat, Poly, PolyMat, Rect};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pie2d::Result<()> {
    let rect = Rect::unit();
    let basis = PositivityBasis::new(1, 1);
    let q = basis.q();
    // P = v vᵀ + I/10
    let v: Vec<_> = (0..q).map(|i| rat((i % 5) as i64 - 2, 3)).collect();
    let p = PolyMat::from_fn(q, q, |i, j| {
        let d = if i == j { rat(1, 10) } else { rat(0, 1) };
        Poly::constant(&v[i] * &v[j] + d)
    });
    let op = lpi_param_map(&basis, &p, &Poly::one(), &rect)?;
    println!("Gram size {q}; operator has {} kernel terms, self-adjoint: {}", op.nnz(), op.is_selfadjoint());

    let grid = QuadratureGrid::new(12, &rect);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..5 {
        let u = PolyField::from_rat(&random_field(&mut rng, [0, 0, 0, 1], 3));
        let pu = apply_numeric(&op, &u, &grid);
        println!("u{k}: <u, Pu> = {:.6e}", rll_inner_product(&u, &pu, &grid));
    }
    Ok(())
}
