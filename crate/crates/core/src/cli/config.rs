use std::path::Path;

use crate::error::{Error, Result};
use crate::simulation::ExperimentConfig;

/// Reads and validates a TOML experiment config. Every key is optional.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let config: ExperimentConfig = toml::from_str(&text).map_err(|e| {
        let (line, column) = e
            .span()
            .map_or((1, 1), |span| line_column(&text, span.start));
        Error::Format {
            path: path.to_owned(),
            line,
            column,
            message: e.message().to_owned(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

fn line_column(text: &str, offset: usize) -> (u64, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() as u64 + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::Method;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_config_gets_defaults() {
        let f = write("");
        let c = load_config(f.path()).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.sweep.dirichlet_alpha, 0.1);
        assert_eq!(c.algorithm3.beta, 0.1);
        assert_eq!(c.algorithm3.sigma, 0.7);
    }

    #[test]
    fn sections_parse() {
        let f = write(
            "seed = 9\nalphas = [0.05, 0.1]\nmethods = [\"a3\", \"risk_similarity\"]\ndirection = \"lower\"\n\
             [sweep]\nenvironments = 3\n[scenario]\nnum_domains = 2\nscore_means = [0.3, 0.7]\n\
             [algorithm3]\nbeta = 0.2\nsimilarity = \"dot\"\n[scores]\nfunction = \"raps\"\nraps_weight = 0.1\n",
        );
        let c = load_config(f.path()).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.methods, vec![Method::A3, Method::RiskSimilarity]);
        assert_eq!(c.sweep.environments, 3);
        assert_eq!(c.sweep.splits, 15);
        assert_eq!(c.scenario.score_means, Some(vec![0.3, 0.7]));
        assert_eq!(c.algorithm3.beta, 0.2);
    }

    #[test]
    fn unknown_key_reports_location() {
        let f = write("seed = 1\n[sweep]\nenvironmnets = 3\n");
        match load_config(f.path()) {
            Err(Error::Format { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("environmnets"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let f = write("alphas = [1.5]\n");
        assert!(matches!(load_config(f.path()), Err(Error::Config(_))));
    }
}
