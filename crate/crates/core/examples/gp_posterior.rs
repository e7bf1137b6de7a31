//! Fits a GP over genotypes with the space distance as the kernel input and
//! ranks a few fresh candidates by expected improvement.

use archsearch::evaluation::{Surrogate, SurrogateSpec};
use archsearch::space::{distance, sample_uniform, Genotype, SearchSpaceDef};
use archsearch::strategies::{expected_improvement, fit_with_escalating_noise, KernelParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = SearchSpaceDef::standard();
    let target = sample_uniform(&space, 99)?;
    let surrogate = Surrogate::new(SurrogateSpec::distance(target), space.clone())?;

    let mut history: Vec<(Genotype, f64)> = Vec::new();
    for i in 0..12 {
        let g = sample_uniform(&space, i)?;
        let y = surrogate.objective(&g, 0)?;
        history.push((g, y));
    }
    let best = history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);

    let kernel = KernelParams {
        length_scale: 0.25,
        signal_variance: 0.05,
        noise: 1e-4,
    };
    let d = |a: &Genotype, b: &Genotype| distance(a, b, &space);
    // this distance does not keep the kernel positive definite at every
    // length scale; the fit adds noise until it factorizes
    let (model, used) = fit_with_escalating_noise(&history, kernel, d).ok_or("singular kernel")?;
    println!(
        "{} observations, prior mean {:.4}, best {best:.4}, noise {:.1e}",
        history.len(),
        model.prior_mean(),
        used.noise
    );

    let mut scored: Vec<(f64, f64, f64, f64)> = (100..110)
        .map(|i| {
            let g = sample_uniform(&space, i)?;
            let (mean, var) = model.predict(&g, d);
            let truth = surrogate.objective(&g, 0)?;
            Ok((
                expected_improvement(mean, var, best),
                mean,
                var.sqrt(),
                truth,
            ))
        })
        .collect::<Result<_, Box<dyn std::error::Error>>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    println!("      EI    mean     std   truth");
    for (ei, mean, sd, truth) in scored {
        println!("{ei:>8.5} {mean:>7.4} {sd:>7.4} {truth:>7.4}");
    }
    Ok(())
}
