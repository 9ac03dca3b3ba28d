//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

/// Probability that `m` photons placed independently and uniformly on
/// `channels` outputs hit every one of the first `n`, summed over all
/// occupation vectors with multinomial weights.
pub fn transfer_bruteforce(n: usize, m: usize, channels: usize) -> f64 {
    fn walk(occ: &mut Vec<usize>, left: usize, channels: usize, n: usize, m: usize, acc: &mut f64) {
        if occ.len() == channels - 1 {
            occ.push(left);
            if occ[..n].iter().all(|&k| k > 0) {
                let ln_w = ln_fact(m)
                    - occ.iter().map(|&k| ln_fact(k)).sum::<f64>()
                    - m as f64 * (channels as f64).ln();
                *acc += ln_w.exp();
            }
            occ.pop();
            return;
        }
        for k in 0..=left {
            occ.push(k);
            walk(occ, left - k, channels, n, m, acc);
            occ.pop();
        }
    }
    let mut acc = 0.0;
    walk(
        &mut Vec::with_capacity(channels),
        m,
        channels,
        n,
        m,
        &mut acc,
    );
    acc
}

pub fn ln_fact(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// The same probability by a Markov chain over the number of designated
/// channels hit so far; stable for any photon number.
pub fn transfer_chain(n: usize, channels: usize, m_max: usize) -> Vec<f64> {
    let big_n = channels as f64;
    let mut state = vec![0.0; n + 1];
    state[0] = 1.0;
    let mut out = Vec::with_capacity(m_max + 1);
    out.push(state[n]);
    for _ in 0..m_max {
        let mut next = vec![0.0; n + 1];
        for j in 0..=n {
            let fresh = (n - j) as f64 / big_n;
            next[j] += state[j] * (1.0 - fresh);
            if j < n {
                next[j + 1] += state[j] * fresh;
            }
        }
        state = next;
        out.push(state[n]);
    }
    out
}

/// Photon-number distribution of `D(alpha) S(r) |0>` for real `alpha` and
/// `r`, from the ladder recursion of its Fock amplitudes, normalised
/// numerically.
pub fn ladder_photodistribution(alpha: f64, r: f64, k_max: usize) -> Vec<f64> {
    let th = r.tanh();
    let mut c = vec![0.0f64; k_max + 1];
    c[0] = 1.0;
    for m in 0..k_max {
        let prev = if m > 0 { c[m - 1] } else { 0.0 };
        c[m + 1] =
            (alpha * (1.0 + th) * c[m] - th * (m as f64).sqrt() * prev) / ((m + 1) as f64).sqrt();
    }
    let norm: f64 = c.iter().map(|x| x * x).sum();
    c.iter().map(|x| x * x / norm).collect()
}

/// `(r_n, r_n1)` on an (n+1)-channel detector from a photon-number
/// distribution, through the Markov-chain transfer rows.
pub fn clicks_from_distribution(p: &[f64], n: usize) -> (f64, f64) {
    let k = p.len() - 1;
    let tn = transfer_chain(n, n + 1, k);
    let tn1 = transfer_chain(n + 1, n + 1, k);
    let r_n = p.iter().zip(&tn).map(|(a, b)| a * b).sum();
    let r_n1 = p.iter().zip(&tn1).map(|(a, b)| a * b).sum();
    (r_n, r_n1)
}

/// Largest `r_n` over pure single-mode Gaussian states with displacement
/// up to `sqrt(n / 2)` and `V in [1/(n+2), 1)` subject to `r_n1 <= target`.
/// This contains every `beta^2 <= 2n` state of the library parametrisation.
/// Squeezing along and across the displacement are both scanned; each
/// crossing of the constraint between grid points is refined by bisection.
pub fn grid_search_threshold(n: usize, target: f64, v_points: usize, beta_points: usize) -> f64 {
    let k_max = 80;
    let r_max = 0.5 * ((n + 2) as f64).ln();
    let rates = |alpha: f64, r: f64| {
        clicks_from_distribution(&ladder_photodistribution(alpha, r, k_max), n)
    };
    let alpha_max = (n as f64 / 2.0).sqrt();
    let mut best = 0.0f64;
    for i in 0..v_points {
        // log-spaced in 1 - V, both squeezing orientations
        let t = (1e-6f64.ln()
            + (i as f64 + 0.5) / v_points as f64
                * ((1.0 - (-2.0 * r_max).exp()).ln() - 1e-6f64.ln()))
        .exp();
        let r_abs = -0.5 * (1.0 - t).ln();
        for r in [r_abs, -r_abs] {
            let mut prev: Option<(f64, f64, f64)> = None;
            for j in 1..=beta_points {
                let alpha = alpha_max * j as f64 / beta_points as f64;
                let (rn, rn1) = rates(alpha, r);
                if rn1 <= target {
                    best = best.max(rn);
                }
                if let Some((a0, _, e0)) = prev {
                    if (e0 <= target) != (rn1 <= target) {
                        let (mut lo, mut hi) = if e0 <= target {
                            (a0, alpha)
                        } else {
                            (alpha, a0)
                        };
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if rates(mid, r).1 <= target {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        best = best.max(rates(lo, r).0);
                    }
                }
                prev = Some((alpha, rn, rn1));
            }
        }
    }
    best
}

/// Composite Simpson rule on `[a, b]` with `2 * half` panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, half: usize) -> f64 {
    let n = 2 * half;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
