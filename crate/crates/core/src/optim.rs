//! Bounded Nelder–Mead simplex search.

#[derive(Debug, Clone, PartialEq)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NmSettings {
    pub max_evals: usize,
    /// Stop once max f − min f over the simplex falls below this.
    pub ftol: f64,
    /// Edge length of the initial simplex along each axis.
    pub step: f64,
}

fn clamp_into(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(*lo, *hi);
    }
}

/// Minimizes `f` inside the box [lower, upper]; trial points are projected
/// back onto the box. Non-finite function values count as +inf.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    settings: NmSettings,
) -> NmResult
where
    F: FnMut(&[f64]) -> f64,
{
    let d = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    let mut start = x0.to_vec();
    clamp_into(&mut start, lower, upper);
    simplex.push(start.clone());
    for i in 0..d {
        let mut p = start.clone();
        p[i] += settings.step;
        if p[i] > upper[i] {
            p[i] = start[i] - settings.step;
        }
        clamp_into(&mut p, lower, upper);
        simplex.push(p);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|p| eval(p, &mut evals)).collect();

    let mut converged = false;
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();

        let spread = fv[d] - fv[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread < settings.ftol) || diameter < 1e-12 {
            converged = true;
            break;
        }
        if evals >= settings.max_evals {
            break;
        }

        let mut centroid = vec![0.0; d];
        for p in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + t * (w - c))
                .collect();
            clamp_into(&mut p, lower, upper);
            p
        };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < fv[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[d] = xe;
                fv[d] = fe;
            } else {
                simplex[d] = xr;
                fv[d] = fr;
            }
            continue;
        }
        if fr < fv[d - 1] {
            simplex[d] = xr;
            fv[d] = fr;
            continue;
        }
        // outside contraction if the reflection helped at all, inside otherwise
        let xc = along(if fr < fv[d] { -0.5 } else { 0.5 });
        let fc = eval(&xc, &mut evals);
        if fc < fv[d].min(fr) {
            simplex[d] = xc;
            fv[d] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=d {
            let p: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(x, b)| b + 0.5 * (x - b))
                .collect();
            fv[i] = eval(&p, &mut evals);
            simplex[i] = p;
        }
    }
    let best = (0..=d).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
    NmResult {
        x: simplex[best].clone(),
        f: fv[best],
        evals,
        converged,
    }
}
