//! Reproduction problems shipped with the crate.

use crate::error::{Error, Result};
use crate::matrix_field::{parse_problem, FriedrichsProblem};

const SOURCES: [(&str, &str); 6] = [
    ("example1", include_str!("../problems/example1.json")),
    ("example2_rep1", include_str!("../problems/example2_rep1.json")),
    ("example2_rep2", include_str!("../problems/example2_rep2.json")),
    ("scalar_ax", include_str!("../problems/scalar_ax.json")),
    ("degenerate_both_ends", include_str!("../problems/degenerate_both_ends.json")),
    ("constant_definite", include_str!("../problems/constant_definite.json")),
];

/// Alternative names accepted by [`source`].
const ALIASES: [(&str, &str); 1] = [("scalar_x_onemx", "degenerate_both_ends")];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    let name = ALIASES.iter().find(|(alias, _)| *alias == name).map_or(name, |(_, n)| *n);
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn problem(name: &str) -> Result<FriedrichsProblem> {
    let text = source(name)
        .ok_or_else(|| Error::InvalidArgument(format!("no bundled problem named `{name}`")))?;
    parse_problem(text)
}

pub fn all() -> Vec<FriedrichsProblem> {
    names()
        .map(|n| problem(n).expect("bundled problems parse"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_field::{check_symmetry, estimate_mu0, DEFAULT_SAMPLES};

    #[test]
    fn all_bundled_problems_are_friedrichs_systems() {
        for p in all() {
            assert!(check_symmetry(&p, DEFAULT_SAMPLES).ok, "{}", p.id);
            assert!(estimate_mu0(&p, DEFAULT_SAMPLES) > 0.0, "{}", p.id);
        }
    }

    #[test]
    fn lookup_accepts_file_names() {
        assert!(source("example1.json").is_some());
        assert!(problem("missing").is_err());
        assert_eq!(problem("scalar_x_onemx").unwrap().id, "degenerate_both_ends");
    }
}
