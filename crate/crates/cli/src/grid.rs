//! Parsing of `--ages` and `--probs` values.

#[derive(Debug, Clone, PartialEq)]
pub struct AgeGrid(pub Vec<u64>);

#[derive(Debug, Clone, PartialEq)]
pub struct ProbGrid(pub Vec<f64>);

/// `A..B:STEP`, `A..B` (step 1), or a comma list such as `20,30,40`.
pub fn parse_ages(raw: &str) -> Result<AgeGrid, String> {
    parse_age_list(raw).map(AgeGrid)
}

fn parse_age_list(raw: &str) -> Result<Vec<u64>, String> {
    let raw = raw.trim();
    if let Some((range, step)) = split_range(raw) {
        let (a, b) = range;
        let step = match step {
            Some(s) => parse_u64(s)?,
            None => 1,
        };
        if step == 0 {
            return Err("age step must be positive".into());
        }
        let (a, b) = (parse_u64(a)?, parse_u64(b)?);
        if b < a {
            return Err(format!("empty age range {a}..{b}"));
        }
        return Ok((a..=b).step_by(step as usize).collect());
    }
    raw.split(',').map(parse_u64).collect()
}

fn split_range(raw: &str) -> Option<((&str, &str), Option<&str>)> {
    let (a, rest) = raw.split_once("..")?;
    let rest = rest.strip_prefix('=').unwrap_or(rest);
    Some(match rest.split_once(':') {
        Some((b, step)) => ((a, b), Some(step)),
        None => ((a, rest), None),
    })
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let s = s.trim();
    s.parse::<u64>()
        .map_err(|_| format!("`{s}` is not a non-negative integer age"))
}

/// Comma list of probabilities in (0, 1).
pub fn parse_probs(raw: &str) -> Result<ProbGrid, String> {
    raw.split(',')
        .map(|s| {
            let s = s.trim();
            let p: f64 = s
                .parse()
                .map_err(|_| format!("`{s}` is not a probability"))?;
            if p > 0.0 && p < 1.0 {
                Ok(p)
            } else {
                Err(format!("probability {p} outside (0, 1)"))
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(ProbGrid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn age_forms() {
        assert_eq!(
            parse_age_list("20..100:10").unwrap(),
            vec![20, 30, 40, 50, 60, 70, 80, 90, 100]
        );
        assert_eq!(parse_age_list("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_age_list("0..=4:2").unwrap(), vec![0, 2, 4]);
        assert_eq!(parse_age_list("5, 7,9").unwrap(), vec![5, 7, 9]);
        assert_eq!(parse_age_list("20..25:10").unwrap(), vec![20]);
        assert!(parse_age_list("10..5").is_err());
        assert!(parse_age_list("1..5:0").is_err());
        assert!(parse_age_list("a,b").is_err());
        assert!(parse_age_list("-3").is_err());
    }

    #[test]
    fn prob_forms() {
        assert_eq!(parse_probs("0.01,0.05").unwrap().0, vec![0.01, 0.05]);
        assert!(parse_probs("0").is_err());
        assert!(parse_probs("1.0").is_err());
        assert!(parse_probs("x").is_err());
    }
}
