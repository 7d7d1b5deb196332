use super::{ConvexProgram, Smooth};

fn relative_gap(fd: &[f64], an: &[f64]) -> f64 {
    let diff = fd.iter().zip(an).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = an.iter().chain(fd).map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn step(x: f64, h: f64) -> f64 {
    h * x.abs().max(1.0)
}

fn gradient_error(f: &dyn Smooth, x: &[f64], h: f64) -> f64 {
    let sup = f.support();
    let m = sup.len();
    let mut an = vec![0.0; m];
    f.eval(x, Some(&mut an), None);
    let mut xp = x.to_vec();
    let fd: Vec<f64> = sup
        .iter()
        .map(|&i| {
            let d = step(x[i], h);
            xp[i] = x[i] + d;
            let hi = f.eval(&xp, None, None);
            xp[i] = x[i] - d;
            let lo = f.eval(&xp, None, None);
            xp[i] = x[i];
            (hi - lo) / (2.0 * d)
        })
        .collect();
    relative_gap(&fd, &an)
}

fn hessian_error(f: &dyn Smooth, x: &[f64], h: f64) -> f64 {
    let sup = f.support();
    let m = sup.len();
    let mut an = vec![0.0; m * m];
    f.eval(x, None, Some(&mut an));
    let mut fd = vec![0.0; m * m];
    let mut xp = x.to_vec();
    let mut gp = vec![0.0; m];
    let mut gm = vec![0.0; m];
    for (b, &j) in sup.iter().enumerate() {
        let d = step(x[j], h);
        xp[j] = x[j] + d;
        f.eval(&xp, Some(&mut gp), None);
        xp[j] = x[j] - d;
        f.eval(&xp, Some(&mut gm), None);
        xp[j] = x[j];
        for a in 0..m {
            fd[a * m + b] = (gp[a] - gm[a]) / (2.0 * d);
        }
    }
    relative_gap(&fd, &an)
}

/// Worst relative disagreement between analytic gradients and central
/// differences with step `h * max(1, |x_i|)`, over the objective terms and
/// every constraint.
pub fn check_derivatives(prog: &ConvexProgram, x: &[f64], h: f64) -> f64 {
    prog.objective
        .iter()
        .chain(&prog.constraints)
        .map(|f| gradient_error(f.as_ref(), x, h))
        .fold(0.0, f64::max)
}

/// Same as [`check_derivatives`] for Hessians, differencing the gradients.
pub fn check_hessians(prog: &ConvexProgram, x: &[f64], h: f64) -> f64 {
    prog.objective
        .iter()
        .chain(&prog.constraints)
        .map(|f| hessian_error(f.as_ref(), x, h))
        .fold(0.0, f64::max)
}
