//! Dense phase-one simplex for small feasibility problems `M x = b, x >= 0`.

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct Feasibility {
    pub x: Vec<f64>,
    /// Optimal phase-one objective: total artificial mass left in the basis.
    pub infeasibility: f64,
}

/// Phase-one simplex with Bland's rule. The returned point is a basic
/// solution, so it has at most `rows` nonzero entries. Columns are scanned in
/// input order, which makes the result deterministic.
pub(crate) fn find_feasible(m: &[Vec<f64>], b: &[f64]) -> Feasibility {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let width = cols + rows + 1;
    let rhs = width - 1;

    let mut t = vec![vec![0.0; width]; rows + 1];
    for i in 0..rows {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..cols {
            t[i][j] = sign * m[i][j];
        }
        t[i][cols + i] = 1.0;
        t[i][rhs] = sign * b[i];
    }
    // Objective row: reduced costs of minimizing the artificial sum.
    for j in 0..cols {
        t[rows][j] = -(0..rows).map(|i| t[i][j]).sum::<f64>();
    }
    t[rows][rhs] = -(0..rows).map(|i| t[i][rhs]).sum::<f64>();
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    loop {
        let Some(enter) = (0..cols).find(|&j| t[rows][j] < -1e-11) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            if t[i][enter] > PIVOT_EPS {
                let ratio = t[i][rhs] / t[i][enter];
                let better =
                    ratio < best - 1e-14 || (ratio <= best + 1e-14 && leave.is_some_and(|l| basis[i] < basis[l]));
                if leave.is_none() || better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(pr) = leave else {
            // Unbounded direction cannot occur in phase one; stop defensively.
            break;
        };
        let piv = t[pr][enter];
        for v in t[pr].iter_mut() {
            *v /= piv;
        }
        let pivot_row = t[pr].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i == pr {
                continue;
            }
            let f = row[enter];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        basis[pr] = enter;
    }

    let mut x = vec![0.0; cols];
    let mut infeasibility = 0.0;
    for (i, &bv) in basis.iter().enumerate() {
        let v = t[i][rhs].max(0.0);
        if bv < cols {
            x[bv] = v;
        } else {
            infeasibility += v;
        }
    }
    Feasibility { x, infeasibility }
}
