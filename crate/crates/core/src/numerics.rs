//! Small numerical kernels shared by the distribution, reduction and ruin modules.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Absolute tolerance used for transform quadratures.
pub const QUAD_ABS_TOL: f64 = 1e-10;

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature on a finite interval.
///
/// Subdivides the interval with the largest error estimate until the summed
/// estimate drops below `abs_tol` or the subdivision budget is exhausted.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (v, e) = gk15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    for _ in 0..2000 {
        let total_err: f64 = pieces.iter().map(|p| p.3).sum();
        if total_err <= abs_tol {
            break;
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
    pieces.iter().map(|p| p.2).sum()
}

/// Integral over `[a, +inf)` through the map `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64) -> f64 {
    integrate(
        |t: f64| {
            if t >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - t;
            let x = a + t / one_minus;
            let v = f(x) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
    )
}

/// Standard normal cdf.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Linear convolution of two mass vectors truncated to its first `len` entries.
///
/// Entries past `len` are dropped, which is exact for the retained range because
/// every mass sits at a nonnegative lattice index.
pub fn convolve_truncated(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let na = a.len().min(len);
    let nb = b.len().min(len);
    if na == 0 || nb == 0 {
        return vec![0.0; len];
    }
    let a = &a[..na];
    let b = &b[..nb];
    if na.min(nb) <= 64 || (na as u64) * (nb as u64) <= 1 << 16 {
        return convolve_direct(a, b, len);
    }
    convolve_fft(a, b, len)
}

fn convolve_direct(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let limit = (len - i).min(b.len());
        for (o, &y) in out[i..i + limit].iter_mut().zip(&b[..limit]) {
            *o += x * y;
        }
    }
    out
}

fn convolve_fft(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let full = (a.len() + b.len() - 1).min(2 * len);
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    // Pack both real inputs into one complex signal: z = a + i b.
    let mut z: Vec<Complex<f64>> = (0..size)
        .map(|k| {
            Complex::new(
                a.get(k).copied().unwrap_or(0.0),
                b.get(k).copied().unwrap_or(0.0),
            )
        })
        .collect();
    fwd.process(&mut z);
    let mut prod = vec![Complex::new(0.0, 0.0); size];
    for k in 0..size {
        let zk = z[k];
        let zc = z[(size - k) % size].conj();
        let fa = (zk + zc) * 0.5;
        let fb = (zk - zc) * Complex::new(0.0, -0.5);
        prod[k] = fa * fb;
    }
    inv.process(&mut prod);
    let scale = 1.0 / size as f64;
    (0..len)
        .map(|k| {
            if k < size {
                (prod[k].re * scale).max(0.0)
            } else {
                0.0
            }
        })
        .collect()
}
