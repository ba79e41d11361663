//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p bohmflow --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use bohmflow::diagnostics::{azimuth_mass_near, node_approach_any, sphere_special_azimuths, surface_drift};
use bohmflow::eigenbasis::{eigenstate_gradient, eigenstate_value, Mode3D};
use bohmflow::flow::velocity;
use bohmflow::integrator::{integrate, retrace_error, IntegratorConfig};
use bohmflow::linalg::{dist, norm};
use bohmflow::nodal::*;
use bohmflow::perturbation::{deviation, iterate_order, order1_nonintegrable, order1_sphere};
use bohmflow::quadrature::gauss_hermite;
use bohmflow::surfaces::{
    classify_quantum_numbers, IntegrabilityKind, IntegralSurface, PhiFunction, SurfaceFamily,
};
use bohmflow::wavefunction::{sample, WaveSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const W: [f64; 3] = [1.0, std::f64::consts::SQRT_2, 1.7320508075688772];
const SPHERE: [[u32; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
const PEAR: [[u32; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 2]];
const OPEN: [[u32; 3]; 3] = [[0, 0, 0], [1, 1, 0], [1, 0, 2]];
const NONINT: [[u32; 3]; 3] = [[0, 0, 0], [1, 0, 1], [0, 1, 2]];

type Outcome = Result<String, String>;

fn third() -> f64 {
    1.0 / 3f64.sqrt()
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within_budget(start: Instant, budget: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    if took > budget {
        return Err(format!("{what} took {took:.1?}, budget {budget:?}"));
    }
    Ok(())
}

fn fig8_spec() -> WaveSpec<f64> {
    WaveSpec::with_small_amplitudes(0.1, 0.1, SPHERE, W).unwrap()
}

fn sphere_conservation() -> Outcome {
    let start = Instant::now();
    let traj = integrate(&fig8_spec(), [1.0, 0.0, 1.0], 0.0, 200.0, &IntegratorConfig::default()).map_err(|e| e.to_string())?;
    let drift = traj.points.iter().map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - 2.0).abs()).fold(0.0, f64::max);
    within_budget(start, Duration::from_secs(30), "fig8")?;
    check(drift < 1e-5, format!("max |r²-2| = {drift:.3e} (< 1e-5), {:.2?}", start.elapsed()))
}

fn backward_retrace() -> Outcome {
    let cfg = IntegratorConfig::default();
    let start = Instant::now();
    let e8 = retrace_error(&fig8_spec(), [1.0, 0.0, 1.0], 0.0, 200.0, &cfg).map_err(|e| e.to_string())?;
    within_budget(start, Duration::from_secs(60), "fig8 retrace")?;
    let start = Instant::now();
    let pear = WaveSpec::real([third(); 3], PEAR, W).unwrap();
    let e10 = retrace_error(&pear, [0.209550, 0.11, 1.45], 1.0, 100.0, &cfg).map_err(|e| e.to_string())?;
    within_budget(start, Duration::from_secs(60), "fig10 retrace")?;
    check(
        e8 < 1e-4 && e10 < 1e-5,
        format!("fig8 retrace {e8:.3e} (< 1e-4), fig10 ordered retrace {e10:.3e} (< 1e-5)"),
    )
}

fn chaotic_confinement() -> Outcome {
    let start = Instant::now();
    let spec = WaveSpec::real([third(); 3], SPHERE, W).unwrap();
    let x0 = [1.297366, -0.262989, 0.946631];
    let traj = integrate(&spec, x0, 4.0, 1000.0, &IntegratorConfig::default()).map_err(|e| e.to_string())?;
    let surface = IntegralSurface::sphere(1.6274).unwrap();
    let drift = surface_drift(&traj, &surface).map_err(|e| e.to_string())?.into_iter().fold(0.0, f64::max);
    let r = norm(&x0);
    let tracks: Vec<NodalTrack> = [Branch::Plus, Branch::Minus]
        .iter()
        .map(|&b| closed_form_track(&spec, r, 4.0, 1000.0, 0.01, b))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let approach = node_approach_any(&traj, &tracks, 0.5).map_err(|e| e.to_string())?;
    within_budget(start, Duration::from_secs(300), "fig9")?;
    let Some((a, b)) = approach.loop_interval else {
        return Err(format!("no initial looping interval (drift {drift:.3e})"));
    };
    let span = b - a;
    check(
        drift < 1e-4 && (span - 4.5).abs() <= 1.0,
        format!("drift {drift:.3e} (< 1e-4), loops on [{a}, {b:.2}] = {span:.2} time units (4.5 ± 1)"),
    )
}

fn pear_constants() -> Outcome {
    let phi = PhiFunction::new(3f64.sqrt()).map_err(|e| e.to_string())?;
    // independent: z0 = 1/√(2ω3), C0 = z0²/2 - ln z0 / (2ω3)
    let round4 = |v: f64| (v * 1e4).round() / 1e4;
    check(
        round4(phi.z0) == 0.5373 && round4(phi.c0) == 0.3237,
        format!("z0 = {:.6}, C0 = {:.6}", phi.z0, phi.c0),
    )
}

fn trackers_agree() -> Outcome {
    let start = Instant::now();
    let spec = WaveSpec::real([third(); 3], SPHERE, W).unwrap();
    let surface = IntegralSurface::sphere(3.0).unwrap();
    let seed = nodal_closed_form_sphere(&spec, 0.5, 3.0).map_err(|e| e.to_string())?;
    let fplane = track_fplane(&spec, &seed, 20.0, 1e-3).map_err(|e| e.to_string())?;
    let newton = track_surface_newton(&spec, &surface, &seed, 20.0, 1e-3).map_err(|e| e.to_string())?;
    let ode = track_surface_ode(&spec, &surface, &seed, 20.0).map_err(|e| e.to_string())?;
    let worst = |track: &NodalTrack| {
        track
            .points
            .iter()
            .map(|p| dist(&p.x, &nodal_closed_form_sphere(&spec, p.t, 3.0).unwrap().x))
            .fold(0.0, f64::max)
    };
    let (wf, wn, wo) = (worst(&fplane), worst(&newton), worst(&ode));
    within_budget(start, Duration::from_secs(120), "trackers")?;
    check(
        wf.max(wn).max(wo) < 1e-6 && ode.solver_calls < newton.solver_calls,
        format!(
            "max distance to closed form: F-plane {wf:.2e}, Newton {wn:.2e}, ODE {wo:.2e}; solves ODE {} < Newton {}",
            ode.solver_calls, newton.solver_calls
        ),
    )
}

fn special_directions() -> Outcome {
    let special = (W[0] / W[1]).sqrt();
    let dirs = sphere_special_azimuths(W);
    let spec = WaveSpec::real([third(); 3], SPHERE, W).unwrap();
    let surface = IntegralSurface::sphere(3.0).unwrap();
    let seed = nodal_closed_form_sphere(&spec, 0.5, 3.0).map_err(|e| e.to_string())?;
    let track = track_surface_ode(&spec, &surface, &seed, 400.0).map_err(|e| e.to_string())?;
    let crossings = surface_crossings(&spec, &surface, &track, 2, 0.0, 1e-12).map_err(|e| e.to_string())?;
    let sphere_worst = crossings
        .iter()
        .map(|c| {
            let phi = c.x[1].atan2(c.x[0]);
            dirs.iter().map(|d| (phi - d).abs()).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);

    let pear = WaveSpec::real([third(); 3], PEAR, W).unwrap();
    let psurf = IntegralSurface::new(SurfaceFamily::Pear, 1.0, W[2]).unwrap();
    let pseed = scan_surface_nodes(&pear, &psurf, 1.0, 12)
        .map_err(|e| e.to_string())?
        .into_iter()
        .filter(|p| p.x[2] > 0.0)
        .max_by(|a, b| a.x[2].total_cmp(&b.x[2]))
        .ok_or("no pear seed")?;
    let level = 1.0 / (2.0 * W[2]).sqrt();
    let ptrack = track_surface_ode(&pear, &psurf, &pseed, 400.0).map_err(|e| e.to_string())?;
    let pcross = surface_crossings(&pear, &psurf, &ptrack, 2, level, 1e-12).map_err(|e| e.to_string())?;
    let pear_worst = pcross.iter().map(|c| ((c.x[1] / c.x[0]).abs() - special).abs()).fold(0.0, f64::max);
    check(
        crossings.len() >= 50 && pcross.len() >= 50 && sphere_worst < 1e-6 && pear_worst < 1e-6,
        format!(
            "sphere: {} crossings, worst |Δφ| {sphere_worst:.2e}; pear: {} crossings, worst |Δ(y/x)| {pear_worst:.2e}",
            crossings.len(),
            pcross.len()
        ),
    )
}

fn perturbation_accuracy() -> Outcome {
    let start = Instant::now();
    let spec = WaveSpec::with_small_amplitudes(0.1, 0.1, NONINT, W).unwrap();
    let base = [0.6, 0.6, 0.6];
    let oracle = IntegratorConfig {
        abs_tol: 1e-11,
        rel_tol: 1e-11,
        ..Default::default()
    };
    let traj = integrate(&spec, base, 0.0, 100.0, &oracle).map_err(|e| e.to_string())?;
    let s1 = iterate_order(&spec, base, 1).map_err(|e| e.to_string())?;
    let s2 = iterate_order(&spec, base, 2).map_err(|e| e.to_string())?;
    let d1 = deviation(&s1, &traj, 0.05).map_err(|e| e.to_string())?;
    let d2 = deviation(&s2, &traj, 0.05).map_err(|e| e.to_string())?;
    within_budget(start, Duration::from_secs(60), "perturbation")?;
    check(
        d2.mean.iter().all(|m| (2e-4..=5e-3).contains(m)) && d2.overall_mean() < d1.overall_mean(),
        format!(
            "order-2 means {:.3e}/{:.3e}/{:.3e}, order-1 mean {:.3e} > order-2 mean {:.3e}",
            d2.mean[0],
            d2.mean[1],
            d2.mean[2],
            d1.overall_mean(),
            d2.overall_mean()
        ),
    )
}

fn plane_identities() -> Outcome {
    let mut worst_sphere: f64 = 0.0;
    let mut worst_radius: f64 = 0.0;
    let sphere = fig8_spec();
    for base in [[1.0, 0.0, 1.0], [0.7, -0.4, 0.2], [-1.3, 0.5, 0.9]] {
        let s = order1_sphere(&sphere, base).map_err(|e| e.to_string())?;
        let r0: f64 = base.iter().map(|v| v * v).sum();
        for k in 0..=2000 {
            let p = s.evaluate(0.1 * k as f64);
            let d: [f64; 3] = std::array::from_fn(|i| p[i] - base[i]);
            worst_sphere = worst_sphere.max((base[0] * d[0] + base[1] * d[1] + base[2] * d[2]).abs());
            // r² - r0² carries no first-order part
            let r: f64 = p.iter().map(|v| v * v).sum();
            worst_radius = worst_radius.max((r - r0 - d.iter().map(|v| v * v).sum::<f64>()).abs());
        }
    }
    let nonint = WaveSpec::with_small_amplitudes(0.1, 0.1, NONINT, W).unwrap();
    let w3 = W[2];
    let mut worst_nonint: f64 = 0.0;
    for base in [[0.6, 0.6, 0.6], [-0.2, 0.9, 1.4]] {
        let [x0, y0, z0] = base;
        let s = order1_nonintegrable(&nonint, base).map_err(|e| e.to_string())?;
        for k in 0..=2000 {
            let p = s.evaluate(0.1 * k as f64);
            let v = (z0 * z0 * w3 - 0.5) * (z0 * (p[2] - z0) - x0 * (p[0] - x0)) - 2.0 * y0 * (p[1] - y0) * z0 * z0 * w3;
            worst_nonint = worst_nonint.max(v.abs());
        }
    }
    check(
        worst_sphere < 1e-12 && worst_radius < 1e-12 && worst_nonint < 1e-12,
        format!("sphere plane {worst_sphere:.1e}, sphere integral {worst_radius:.1e}, non-integrable plane {worst_nonint:.1e}"),
    )
}

/// Table-1 conditions written out independently of the library: for each
/// axis, which pair of triplets (p = 0, r = 1, s = 2) must agree.
fn table1_cases(t: &[[u32; 3]; 3]) -> Vec<u8> {
    let (p, r, s) = (t[0], t[1], t[2]);
    let rows = [
        r[0] == p[0] && s[1] == r[1] && s[2] == p[2],
        r[0] == p[0] && s[1] == p[1] && s[2] == r[2],
        s[0] == r[0] && r[1] == p[1] && s[2] == p[2],
        s[0] == r[0] && s[1] == p[1] && r[2] == p[2],
        s[0] == p[0] && r[1] == p[1] && s[2] == r[2],
        s[0] == p[0] && s[1] == r[1] && r[2] == p[2],
    ];
    (1..=6).filter(|&k| rows[k as usize - 1]).collect()
}

fn expected_kind(t: &[[u32; 3]; 3]) -> IntegrabilityKind {
    let repeated = t[0] == t[1] || t[1] == t[2] || t[0] == t[2];
    match table1_cases(t).len() {
        _ if repeated => IntegrabilityKind::FullyIntegrable,
        0 => IntegrabilityKind::None,
        1 => IntegrabilityKind::Partial,
        _ => IntegrabilityKind::FullyIntegrable,
    }
}

fn classifier() -> Outcome {
    let all: Vec<[u32; 3]> = (0..27).map(|k| [k / 9, (k / 3) % 3, k % 3]).collect();
    let mut mismatches = 0;
    let mut single = [0usize; 6];
    let mut singles_partial = true;
    let mut doubles = 0usize;
    let mut doubles_full = true;
    for &p in &all {
        for &r in &all {
            for &s in &all {
                let t = [p, r, s];
                let class = classify_quantum_numbers(&t);
                let cases = table1_cases(&t);
                if class.kind != expected_kind(&t) || class.matched_cases != cases {
                    mismatches += 1;
                }
                let distinct = p != r && r != s && p != s;
                if distinct && cases.len() == 1 {
                    single[cases[0] as usize - 1] += 1;
                    singles_partial &= class.kind == IntegrabilityKind::Partial;
                }
                // two conditions at once always force two equal triplets
                if cases.len() >= 2 {
                    doubles += 1;
                    doubles_full &= class.kind == IntegrabilityKind::FullyIntegrable;
                }
            }
        }
    }
    let open = classify_quantum_numbers(&OPEN);
    let nonint = classify_quantum_numbers(&NONINT);
    let detail = format!(
        "exhaustive n≤2: {mismatches} mismatches vs brute force; single-condition triplets per case {single:?} all PARTIAL: {singles_partial}; \
         {doubles} double-condition triplets all FULLY_INTEGRABLE: {doubles_full}; \
         000/110/102 -> {:?} (cases {:?}), expected NONE; 000/101/012 -> {:?}",
        open.kind, open.matched_cases, nonint.kind
    );
    check(
        mismatches == 0
            && single.iter().all(|&n| n > 0)
            && singles_partial
            && doubles > 0
            && doubles_full
            && open.kind == IntegrabilityKind::None,
        detail,
    )
}

fn property_suite() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // continuity equation by central differences, steps 1e-5
    let h = 1e-5;
    let mut worst_cont: f64 = 0.0;
    for modes in [SPHERE, PEAR, OPEN, NONINT] {
        let spec = WaveSpec::real([third(); 3], modes, W).unwrap();
        let mut n = 0;
        while n < 50 {
            let x: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let t = rng.gen_range(0.0..10.0);
            let g = sample(&spec, &x, t).g;
            let dgdt = (sample(&spec, &x, t + h).g - sample(&spec, &x, t - h).g) / (2.0 * h);
            if g <= 1e-4 || dgdt.abs() < 1e-3 * g {
                continue;
            }
            let mut div = 0.0;
            for k in 0..3 {
                let flux = |d: f64| {
                    let mut y = x;
                    y[k] += d;
                    sample(&spec, &y, t).g * velocity(&spec, &y, t).unwrap()[k]
                };
                div += (flux(h) - flux(-h)) / (2.0 * h);
            }
            worst_cont = worst_cont.max((dgdt + div).abs() / dgdt.abs());
            n += 1;
        }
    }
    ok &= worst_cont < 1e-3;
    notes.push(format!("continuity {worst_cont:.1e}"));

    // orthonormality, n ≤ 4 per axis, 8-point Gauss–Hermite per axis
    let (u, w) = gauss_hermite(8);
    let mut rule = Vec::new();
    for i in 0..8 {
        for j in 0..8 {
            for k in 0..8 {
                let x = [u[i] / W[0].sqrt(), u[j] / W[1].sqrt(), u[k] / W[2].sqrt()];
                let weight = w[i] * w[j] * w[k] * (u[i] * u[i] + u[j] * u[j] + u[k] * u[k]).exp() / (W[0] * W[1] * W[2]).sqrt();
                rule.push((x, weight));
            }
        }
    }
    let modes: Vec<Mode3D<f64>> = (0..125).map(|m| Mode3D::new([m / 25, (m / 5) % 5, m % 5], W).unwrap()).collect();
    let values: Vec<Vec<f64>> = modes.iter().map(|m| rule.iter().map(|(x, _)| eigenstate_value(m, x)).collect()).collect();
    let mut worst_orth: f64 = 0.0;
    for i in 0..125 {
        for j in i..125 {
            let s: f64 = rule.iter().enumerate().map(|(k, (_, wt))| wt * values[i][k] * values[j][k]).sum();
            worst_orth = worst_orth.max((s - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    ok &= worst_orth < 1e-8;
    notes.push(format!("orthonormality {worst_orth:.1e}"));

    // analytic gradient vs central differences (step 1e-6) at 100 points
    let mut worst_grad: f64 = 0.0;
    for _ in 0..100 {
        let n = [rng.gen_range(0..=4), rng.gen_range(0..=4), rng.gen_range(0..=4)];
        let mode = Mode3D::new(n, W).unwrap();
        let x: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let g = eigenstate_gradient(&mode, &x);
        let fd: [f64; 3] = std::array::from_fn(|k| {
            let (mut a, mut b) = (x, x);
            a[k] += 1e-6;
            b[k] -= 1e-6;
            (eigenstate_value(&mode, &a) - eigenstate_value(&mode, &b)) / 2e-6
        });
        let scale = norm(&g) + eigenstate_value(&mode, &x).abs();
        worst_grad = worst_grad.max(dist(&g, &fd) / scale);
    }
    ok &= worst_grad < 1e-6;
    notes.push(format!("gradient {worst_grad:.1e}"));

    // determinism
    let spec = WaveSpec::real([third(); 3], NONINT, W).unwrap();
    let cfg = IntegratorConfig::default();
    let a = integrate(&spec, [-0.5, 0.33, 0.732], 0.0, 50.0, &cfg).map_err(|e| e.to_string())?;
    let b = integrate(&spec, [-0.5, 0.33, 0.732], 0.0, 50.0, &cfg).map_err(|e| e.to_string())?;
    let same = a.times == b.times && a.points == b.points;
    ok &= same;
    notes.push(format!("deterministic {same}"));

    // node occupancy for c = 0.0545
    let c: f64 = 0.0545;
    let ab = ((1.0 - c * c) / 2.0).sqrt();
    let spec = WaveSpec::real([ab, ab, c], SPHERE, W).unwrap();
    let mut points = Vec::new();
    for branch in [Branch::Plus, Branch::Minus] {
        let track = closed_form_track(&spec, 3.0, 0.005, 1000.0, 0.01, branch).map_err(|e| e.to_string())?;
        points.extend(track.points.iter().map(|p| p.x));
    }
    let mass = azimuth_mass_near(&points, &sphere_special_azimuths(W), 0.1, 0.5).map_err(|e| e.to_string())?;
    ok &= mass >= 0.9;
    notes.push(format!("φ-mass near special directions {:.1}%", 100.0 * mass));

    check(ok, notes.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("sphere conservation", sphere_conservation),
        ("backward retrace", backward_retrace),
        ("chaotic surface confinement", chaotic_confinement),
        ("pear constants", pear_constants),
        ("closed-form vs tracked nodes", trackers_agree),
        ("special nodal directions", special_directions),
        ("perturbation accuracy", perturbation_accuracy),
        ("plane identities", plane_identities),
        ("classifier", classifier),
        ("property suite", property_suite),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{took:.1?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{took:.1?}]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
