#![allow(dead_code)]

use qcsys::{Matrix, MatrixFamily, NormSpec, Vector};
use rand::Rng;

/// Inscribed radius of `absco(gens)` by enumerating every vertex of the polar
/// body `{c : |<c, w>| <= 1}`: each vertex solves `N` of the constraints with
/// equality. Returns 0 when the generators do not span.
pub fn brute_force_radius(gens: &[Vector], n: NormSpec) -> f64 {
    let dim = gens[0].len();
    let gens: Vec<&Vector> = gens.iter().filter(|g| g.amax() > 0.0).collect();
    let span = Matrix::from_columns(&gens.iter().map(|g| (*g).clone()).collect::<Vec<_>>());
    if gens.is_empty() || span.rank(1e-9 * span.amax()) < dim {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    let mut pick = Vec::new();
    subsets(gens.len(), dim, 0, &mut pick, &mut |idx| {
        for signs in 0..1usize << dim {
            let a = Matrix::from_fn(dim, dim, |r, c| gens[idx[r]][c]);
            let b = Vector::from_fn(dim, |r, _| if signs >> r & 1 == 1 { -1.0 } else { 1.0 });
            let Some(c) = a.clone().lu().solve(&b) else { continue };
            if a.determinant().abs() < 1e-12 {
                continue;
            }
            let feasible = gens.iter().all(|g| g.dot(&c).abs() <= 1.0 + 1e-9);
            if feasible {
                best = best.max(n.dual().of(c.as_slice()));
            }
        }
    });
    1.0 / best
}

fn subsets(len: usize, k: usize, start: usize, pick: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        visit(pick);
        return;
    }
    for i in start..len {
        pick.push(i);
        subsets(len, k, i + 1, pick, visit);
        pick.pop();
    }
}

pub fn random_matrix(rng: &mut impl Rng, dim: usize, scale: f64) -> Matrix {
    Matrix::from_fn(dim, dim, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_family(rng: &mut impl Rng, dim: usize, members: usize) -> MatrixFamily {
    MatrixFamily::new((0..members).map(|_| random_matrix(rng, dim, 1.0)).collect()).unwrap()
}

pub fn random_unit(rng: &mut impl Rng, dim: usize, n: NormSpec) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let norm = n.of(v.as_slice());
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

pub fn rotation() -> MatrixFamily {
    MatrixFamily::from_rows(&[&[&[0.0, -1.0], &[1.0, 0.0]]]).unwrap()
}

pub fn matrix_units() -> MatrixFamily {
    MatrixFamily::from_rows(&[&[&[0.0, 1.0], &[0.0, 0.0]], &[&[0.0, 0.0], &[1.0, 0.0]]]).unwrap()
}
