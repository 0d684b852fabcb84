//! Exact first-order total-variation denoising by Condat's direct method.

/// Minimizer of `1/2||y - theta||^2 + mu * sum |theta_{i+1} - theta_i|`.
///
/// Runs in linear time in practice; `mu <= 0` returns `y`.
pub(crate) fn tv1d(y: &[f64], mu: f64) -> Vec<f64> {
    let n = y.len();
    if n == 0 || mu <= 0.0 {
        return y.to_vec();
    }
    let mut out = vec![0.0; n];
    if n == 1 {
        out[0] = y[0];
        return out;
    }
    let twolambda = 2.0 * mu;
    let minlambda = -mu;
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = mu;
    let mut umax = minlambda;
    let mut vmin = y[0] - mu;
    let mut vmax = y[0] + mu;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = y[k0];
                umin = mu;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = y[k0];
                umax = minlambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > k {
                        break;
                    }
                }
                return out;
            }
        }
        umin += y[k + 1] - vmin;
        if umin < minlambda {
            loop {
                out[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmin = y[k0];
            vmax = vmin + twolambda;
            umin = mu;
            umax = minlambda;
        } else {
            umax += y[k + 1] - vmax;
            if umax > mu {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                kminus = k0;
                vmax = y[k0];
                vmin = vmax - twolambda;
                umin = mu;
                umax = minlambda;
            } else {
                k += 1;
                if umin >= mu {
                    kminus = k;
                    vmin += (umin - mu) / (k - k0 + 1) as f64;
                    umin = mu;
                }
                if umax <= minlambda {
                    kplus = k;
                    vmax += (umax + mu) / (k - k0 + 1) as f64;
                    umax = minlambda;
                }
            }
        }
    }
}
