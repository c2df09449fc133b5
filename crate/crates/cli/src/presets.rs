//! Named kernels and the catalog printed by `list-presets`.

use linboltz::density::SUITE_PRESETS;
use linboltz::{CollisionKernel, DensitySuite, Maxwellian};

/// Parse a kernel name: `maxwell`, `maxwell-d2`, `maxwell-d3`,
/// `hard-spheres-d3`, `hard-potential(γ)`, `grazing(ε)` or `grazing(ε,γ)`.
/// Names without an explicit dimension use `dim`.
pub fn parse_kernel(spec: &str, dim: usize) -> Result<CollisionKernel, String> {
    let s = spec.trim();
    let args = |name: &str| -> Option<Result<Vec<f64>, String>> {
        let rest = s.strip_prefix(name)?.trim();
        let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
        Some(
            inner
                .split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|_| format!("`{a}` is not a number in `{spec}`")))
                .collect(),
        )
    };
    let built = match s {
        "maxwell" => CollisionKernel::maxwell_molecules(dim),
        "maxwell-d2" => CollisionKernel::maxwell_molecules(2),
        "maxwell-d3" => CollisionKernel::maxwell_molecules(3),
        "hard-spheres-d3" => CollisionKernel::hard_spheres(),
        _ => {
            if let Some(a) = args("hard-potential") {
                let a = a?;
                if a.len() != 1 {
                    return Err(format!("`{spec}`: hard-potential takes one argument (γ)"));
                }
                CollisionKernel::hard_potential_standard(dim, a[0])
            } else if let Some(a) = args("grazing") {
                let a = a?;
                let gamma = match a.len() {
                    1 => 0.0,
                    2 => a[1],
                    _ => return Err(format!("`{spec}`: grazing takes (ε) or (ε, γ)")),
                };
                if gamma != 0.0 && gamma != 1.0 {
                    return Err(format!("`{spec}`: grazing γ must be 0 or 1"));
                }
                CollisionKernel::grazing(dim, a[0], gamma as u8)
            } else {
                return Err(format!(
                    "unknown kernel `{spec}`; expected maxwell, maxwell-d2, maxwell-d3, hard-spheres-d3, hard-potential(γ), grazing(ε[,γ])"
                ));
            }
        }
    };
    built.map_err(|e| format!("`{spec}`: {e}"))
}

/// Whether `k` is the standard three-dimensional hard-sphere kernel.
pub fn is_hard_spheres(k: &CollisionKernel) -> bool {
    CollisionKernel::hard_spheres().map(|h| h.id() == k.id()).unwrap_or(false)
}

pub fn is_maxwell_d3(k: &CollisionKernel) -> bool {
    CollisionKernel::maxwell_molecules(3).map(|h| h.id() == k.id()).unwrap_or(false)
}

pub fn catalog() -> String {
    let mut out = String::new();
    out.push_str("kernels\n");
    let kernels: [(&str, &str); 6] = [
        ("maxwell-d3", "Maxwell molecules, d=3; asserts D >= gamma_b H with gamma_b = 1/2"),
        ("maxwell-d2", "Maxwell molecules, d=2; asserts D >= gamma_b H with gamma_b = 1/2"),
        ("hard-spheres-d3", "hard spheres, d=3; asserts D >= lambda H with lambda = sqrt(theta)/4, k_hs >= (sqrt(theta)/2) k_max"),
        ("hard-potential(g)", "|q|^g times the standard angular part; asserts lambda = gamma_b C_theta (computed)"),
        ("grazing(e)", "angular part concentrated on xi <= e, Maxwell-type; asserts temperature rate gamma_e = e^2/2 (d=3)"),
        ("grazing(e,1)", "grazing angular part with |q| prefactor"),
    ];
    for (name, desc) in kernels {
        out.push_str(&format!("  {name:<20} {desc}\n"));
    }
    out.push_str("density suites\n");
    let m = Maxwellian::standard(3, 1.0).expect("standard Maxwellian");
    for name in SUITE_PRESETS {
        let members = DensitySuite::preset(name, &m)
            .map(|s| s.entries.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>().join(", "))
            .unwrap_or_default();
        out.push_str(&format!("  {name:<20} {members}\n"));
    }
    out.push_str("experiments and asserted constants\n");
    let exps: [(&str, &str); 7] = [
        ("verify-inequality", "D(f) >= lambda H(f|M) - 3 sigma on the suite"),
        ("simulate", "temperature decay rate = gamma_b +- 5%, r^2 >= 0.999 (Maxwell-type kernels)"),
        ("compare-kernels", "min k_B/k_ref >= C_theta - 1e-3 on tabulated pairs; D_B >= C_theta D_ref - 3 sigma"),
        ("grazing-limit", "rates eps^2/2 +- 5%; rescaled rates 1/2 +- 5%; agreement with Fokker-Planck within 10%"),
        ("fokker-planck", "J_0 >= H/2, J_1 >= (7/12) sqrt(2 theta/pi) H (2% grid tolerance); radial entropy rate >= 1/2 (5%)"),
        ("bakry-emery", "min A >= 143/60, min (A - B) >= 7/3, alpha = (7/24) sqrt(2 theta/pi)"),
        ("lower-bound-probe", "L^p(M) norm of e^{-sigma t} h0 diverges iff c >= 1/(2 p theta)"),
    ];
    for (name, desc) in exps {
        out.push_str(&format!("  {name:<20} {desc}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_names_parse() {
        assert!(is_hard_spheres(&parse_kernel("hard-spheres-d3", 3).unwrap()));
        assert!(is_maxwell_d3(&parse_kernel("maxwell", 3).unwrap()));
        assert_eq!(parse_kernel("maxwell", 2).unwrap().dim(), 2);
        let g = parse_kernel("grazing(0.25)", 3).unwrap();
        assert_eq!(g.epsilon(), Some(0.25));
        assert_eq!(parse_kernel("grazing(0.5, 1)", 3).unwrap().gamma(), 1.0);
        assert_eq!(parse_kernel("hard-potential(0.5)", 2).unwrap().gamma(), 0.5);
    }

    #[test]
    fn bad_kernel_names_are_rejected() {
        for bad in ["hard-potential(x)", "grazing(2.0)", "grazing(0.5,2)", "maxwel", "hard-potential(1,2)"] {
            assert!(parse_kernel(bad, 3).is_err(), "{bad}");
        }
    }

    #[test]
    fn catalog_lists_the_named_constants() {
        let c = catalog();
        assert!(c.contains("hard-spheres-d3") && c.contains("sqrt(theta)/4"));
        assert!(c.contains("grazing(e)") && c.contains("e^2/2"));
        assert!(c.contains("143/60"));
    }
}
