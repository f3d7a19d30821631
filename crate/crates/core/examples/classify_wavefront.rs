//! Classifies a few aberration mixtures and prints the mode fingerprint.

use causticlab::catastrophe::{classify, fingerprint, Thresholds};
use causticlab::wavefront::{Term, WavefrontSpec};

fn main() -> causticlab::error::Result<()> {
    let cases = [
        ("defocus", vec![Term::radial(2, 0.5)]),
        ("spherical", vec![Term::radial(4, 0.3), Term::radial(2, 0.05)]),
        ("coma", vec![Term::cos(3, 1, 0.4)]),
        ("astigmatism", vec![Term::cos(2, 2, 0.2), Term::sin(2, 2, 0.1)]),
        ("trefoil", vec![Term::cos(3, 3, 0.3), Term::radial(2, 0.05)]),
        ("secondary", vec![Term::radial(6, 0.2), Term::radial(4, 0.2)]),
    ];
    let th = Thresholds::default();
    for (name, terms) in cases {
        let w = WavefrontSpec::zernike(terms)?;
        let c = classify(&w, &th)?;
        let f = fingerprint(&w)?;
        println!("{name:<12} {:<8} confidence {:.3}  fingerprint {:.3?}", c.label.name(), c.confidence, f.as_array());
        for note in &c.conflicts {
            println!("    {note}");
        }
    }
    Ok(())
}
