//! Runs every code listing of the guide in `book/src`, and of the README,
//! as a doc-test.
//!
//! mdbook cannot resolve crate dependencies when testing, so each chapter is
//! included here as the documentation of an empty module and `cargo test`
//! compiles and runs its listings.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/memory.md")]
pub mod memory {}
#[doc = include_str!("../../../book/src/optimizers.md")]
pub mod optimizers {}
#[doc = include_str!("../../../book/src/problems.md")]
pub mod problems {}
#[doc = include_str!("../../../book/src/continuum.md")]
pub mod continuum {}
#[doc = include_str!("../../../book/src/variance.md")]
pub mod variance {}
#[doc = include_str!("../../../book/src/warp.md")]
pub mod warp {}
#[doc = include_str!("../../../book/src/theory.md")]
pub mod theory {}
#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
#[doc = include_str!("../../../book/src/config.md")]
pub mod config {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}

#[cfg(test)]
mod tests {
    /// Every chapter in the table of contents is included above.
    #[test]
    fn summary_matches_included_chapters() {
        let summary = include_str!("../../../book/src/SUMMARY.md");
        let linked: Vec<&str> = summary
            .lines()
            .filter_map(|l| l.split("](").nth(1))
            .map(|l| l.trim_end_matches(')'))
            .collect();
        let here = include_str!("lib.rs");
        for chapter in &linked {
            assert!(here.contains(&format!("book/src/{chapter}\")")), "{chapter} not doc-tested");
        }
        assert_eq!(linked.len(), 10);
    }

    fn toml_blocks(md: &str) -> Vec<String> {
        let mut blocks = Vec::new();
        let mut current: Option<String> = None;
        for line in md.lines() {
            match (&mut current, line.trim()) {
                (None, "```toml") => current = Some(String::new()),
                (Some(_), "```") => blocks.extend(current.take()),
                (Some(b), _) => {
                    b.push_str(line);
                    b.push('\n');
                }
                _ => {}
            }
        }
        blocks
    }

    /// The reference's listings are valid configs, and the first one spells
    /// out exactly the defaults.
    #[test]
    fn reference_blocks_parse() {
        use memgrad::harness::ExperimentConfig;
        let blocks = toml_blocks(include_str!("../../../book/src/config.md"));
        assert_eq!(blocks.len(), 2);
        assert_eq!(ExperimentConfig::from_toml(&blocks[0]).unwrap(), ExperimentConfig::default());
        let grid = ExperimentConfig::from_toml(&blocks[1]).unwrap();
        assert_eq!(grid.expand_methods().unwrap().len(), 4);
        assert_eq!(grid.models.len(), 2);
        assert_eq!(grid.bounds.len(), 1);
    }
}
