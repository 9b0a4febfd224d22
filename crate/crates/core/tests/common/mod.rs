#![allow(dead_code)]

use ckn_lab::{Domain, FieldSpec, Point};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn c(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo..hi) * 1e3).round() / 1e3
}

fn envelope(n: usize, b: f64) -> String {
    let terms: Vec<String> = (1..=n).map(|k| format!("(pow (coord {k}) 2)")).collect();
    format!("(exp (mul {:?} (add {})))", -b, terms.join(" "))
}

/// Smooth real function on `R^n` with Gaussian decay.
pub fn euclidean_scalar(rng: &mut ChaCha8Rng, n: usize) -> String {
    let i = rng.random_range(1..=n);
    let j = rng.random_range(1..=n);
    format!(
        "(mul (add {:?} (mul {:?} (coord {i}) (coord {j})) (cos (mul {:?} (coord {j})))) {})",
        c(rng, 0.2, 1.0),
        c(rng, -1.0, 1.0),
        c(rng, -2.0, 2.0),
        envelope(n, c(rng, 0.3, 1.2))
    )
}

fn custom(e: &str) -> String {
    format!(r#"{{"family": "custom", "expr": "{e}"}}"#)
}

pub fn euclidean_real(rng: &mut ChaCha8Rng, n: usize) -> FieldSpec {
    FieldSpec::custom(Domain::Euclidean(n), &euclidean_scalar(rng, n)).unwrap()
}

/// `ρ e^{iφ}` on `R^n` with a Gaussian amplitude and polynomial phase.
pub fn euclidean_complex(rng: &mut ChaCha8Rng, n: usize) -> FieldSpec {
    let amp = euclidean_scalar(rng, n);
    let i = rng.random_range(1..=n);
    let phase = format!("(add (mul {:?} (coord {i})) (mul {:?} (pow (coord {i}) 2)))", c(rng, -3.0, 3.0), c(rng, -1.0, 1.0));
    FieldSpec::from_json(&format!(
        r#"{{"family": "polar_complex", "amplitude": {}, "phase": {}, "domain": {{"euclidean": {n}}}}}"#,
        custom(&amp),
        custom(&phase)
    ))
    .unwrap()
}

pub fn euclidean_vector(rng: &mut ChaCha8Rng, n: usize, m: usize) -> FieldSpec {
    let comps: Vec<String> = (0..m).map(|_| custom(&euclidean_scalar(rng, n))).collect();
    FieldSpec::from_json(&format!(
        r#"{{"family": "vector_of_fields", "components": [{}], "domain": {{"euclidean": {n}}}}}"#,
        comps.join(",")
    ))
    .unwrap()
}

/// Smooth function of the ambient coordinates `x_0..x_n`.
pub fn sphere_scalar(rng: &mut ChaCha8Rng, n: usize, offset: f64) -> String {
    let i = rng.random_range(0..=n);
    let j = rng.random_range(0..=n);
    format!(
        "(add {offset:?} (mul {:?} (coord {i})) (mul {:?} (coord {i}) (coord {j})) (mul {:?} (cos (coord {j}))))",
        c(rng, -0.6, 0.6),
        c(rng, -0.6, 0.6),
        c(rng, -0.3, 0.3)
    )
}

pub fn sphere_real(rng: &mut ChaCha8Rng, n: usize) -> FieldSpec {
    FieldSpec::custom(Domain::SphereAmbient(n + 1), &sphere_scalar(rng, n, 1.0)).unwrap()
}

pub fn sphere_complex(rng: &mut ChaCha8Rng, n: usize) -> FieldSpec {
    let amp = sphere_scalar(rng, n, 1.5);
    let phase = sphere_scalar(rng, n, 0.0);
    FieldSpec::from_json(&format!(
        r#"{{"family": "complex_pair", "re": {}, "im": {}, "domain": {{"sphere_ambient": {}}}}}"#,
        custom(&format!("(mul {amp} (cos (mul 2 {phase})))")),
        custom(&format!("(mul {amp} (sin (mul 2 {phase})))")),
        n + 1
    ))
    .unwrap()
}

pub fn sphere_vector(rng: &mut ChaCha8Rng, n: usize, m: usize) -> FieldSpec {
    let comps: Vec<String> = (0..m).map(|k| custom(&sphere_scalar(rng, n, if k == 0 { 1.0 } else { 0.0 }))).collect();
    FieldSpec::from_json(&format!(
        r#"{{"family": "vector_of_fields", "components": [{}], "domain": {{"sphere_ambient": {}}}}}"#,
        comps.join(","),
        n + 1
    ))
    .unwrap()
}

pub fn ball_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Point {
    Point::new((0..n).map(|_| rng.random_range(-radius..radius)).collect()).unwrap()
}

pub fn sphere_point(rng: &mut ChaCha8Rng, n: usize) -> Point {
    loop {
        let v: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 0.1 && r <= 1.0 {
            return Point::new(v.iter().map(|x| x / r).collect()).unwrap();
        }
    }
}

/// Γ(x) for x a positive multiple of 1/2.
pub fn gamma_half(x: f64) -> f64 {
    let twice = (2.0 * x).round() as i64;
    assert!(twice > 0 && (2.0 * x - twice as f64).abs() < 1e-12);
    let (mut v, mut t) = if twice % 2 == 0 { (1.0, 2) } else { (std::f64::consts::PI.sqrt(), 1) };
    while t < twice {
        v *= t as f64 / 2.0;
        t += 2;
    }
    v
}

/// Surface area of the unit sphere in `R^n`.
pub fn sphere_area_in(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n as f64 / 2.0)
}
