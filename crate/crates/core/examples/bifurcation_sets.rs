//! Bifurcation sets of the normal forms: cusp points of the A3 curve and
//! the deltoid traced by the unfolded elliptic umbilic.

use causticlab::catastrophe::{
    find_cusps, self_intersections, trace_bifurcation_set, unfold_elliptic_umbilic, BifurcationWindow, CatastropheLabel,
};
use std::f64::consts::PI;

fn main() -> causticlab::error::Result<()> {
    let windows = [
        (CatastropheLabel::A3, BifurcationWindow { sweep: (-1.0, 1.0), fixed_control: 0.0 }, false),
        (CatastropheLabel::A4, BifurcationWindow { sweep: (-1.2, 1.2), fixed_control: -1.0 }, false),
        (CatastropheLabel::D4plus, BifurcationWindow { sweep: (0.2, 3.0), fixed_control: 0.6 }, false),
        (CatastropheLabel::D4minus, BifurcationWindow { sweep: (0.0, 2.0 * PI * (1.0 - 1.0 / 720.0)), fixed_control: 0.9 }, true),
    ];
    for (label, window, closed) in windows {
        let section = trace_bifurcation_set(label, &window, 720)?.section();
        println!(
            "{:<20} {} points, {} cusps, {} self-intersections",
            label.name(),
            section.len(),
            find_cusps(&section, closed, 1.0).len(),
            self_intersections(&section).len()
        );
    }

    for a in [0.1, 0.2, 0.4] {
        let u = unfold_elliptic_umbilic(0.5, a)?;
        println!("a = {a}: deltoid radius {:.6}, cusps {:.4?}", u.radius, u.cusps);
    }
    Ok(())
}
