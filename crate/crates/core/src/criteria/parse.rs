//! Line-oriented parser for trial criteria files. Every syntax error is
//! reported with its line, column, and an expected-token hint; parsing
//! continues past bad lines so one pass surfaces all problems.

use serde::Serialize;

use super::{
    CodeDomain, Comparator, Criterion, CriterionCodeSystem, DemographicField, LabTest, Phase,
    Polarity, Predicate, Presence, TrialId, TrialSpec,
};
use crate::cdm::CodePattern;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
    /// What the parser expected at this position, when known.
    pub expected: Option<String>,
}

impl std::fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.message)?;
        if let Some(exp) = &self.expected {
            write!(f, " (expected {exp})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    col: usize,
}

/// Splits a line into whitespace-separated tokens, keeping a trailing
/// double-quoted span as a single token (quotes included).
fn tokenize(line: &str) -> Result<Vec<Token>, (usize, String)> {
    let mut tokens = Vec::new();
    let bytes: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if bytes[i] == '"' {
            i += 1;
            while i < bytes.len() && bytes[i] != '"' {
                i += 1;
            }
            if i == bytes.len() {
                return Err((start + 1, "unterminated string literal".to_string()));
            }
            i += 1; // closing quote
        } else {
            while i < bytes.len() && !bytes[i].is_whitespace() {
                i += 1;
            }
        }
        tokens.push(Token { text: bytes[start..i].iter().collect(), col: start + 1 });
    }
    Ok(tokens)
}

struct LineParser<'a> {
    tokens: &'a [Token],
    pos: usize,
    line: usize,
    line_len: usize,
}

impl<'a> LineParser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn cur_col(&self) -> usize {
        self.tokens.get(self.pos).map(|t| t.col).unwrap_or(self.line_len + 1)
    }

    fn err(&self, col: usize, message: impl Into<String>, expected: Option<&str>) -> ParseDiagnostic {
        ParseDiagnostic {
            line: self.line,
            col,
            message: message.into(),
            expected: expected.map(|s| s.to_string()),
        }
    }

    fn expect_kv(&mut self, key: &str) -> Result<(String, usize), ParseDiagnostic> {
        let col = self.cur_col();
        match self.next() {
            Some(tok) => match tok.text.strip_prefix(&format!("{key}=")) {
                Some(v) if !v.is_empty() => Ok((v.to_string(), tok.col)),
                _ => Err(self.err(tok.col, format!("found `{}`", tok.text), Some(&format!("{key}=<value>")))),
            },
            None => Err(self.err(col, "unexpected end of line", Some(&format!("{key}=<value>")))),
        }
    }

    fn expect_number(&mut self, what: &str) -> Result<f64, ParseDiagnostic> {
        let col = self.cur_col();
        match self.next() {
            Some(tok) => tok
                .text
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| self.err(tok.col, format!("found `{}`", tok.text), Some(what))),
            None => Err(self.err(col, "unexpected end of line", Some(what))),
        }
    }

    fn expect_comparator(&mut self) -> Result<Comparator, ParseDiagnostic> {
        let col = self.cur_col();
        match self.next() {
            Some(tok) => Comparator::parse(&tok.text)
                .ok_or_else(|| self.err(tok.col, format!("found `{}`", tok.text), Some("comparator < <= > >= ="))),
            None => Err(self.err(col, "unexpected end of line", Some("comparator < <= > >= ="))),
        }
    }

    fn expect_end(&mut self) -> Result<(), ParseDiagnostic> {
        match self.peek() {
            None => Ok(()),
            Some(tok) => Err(self.err(tok.col, format!("unexpected trailing token `{}`", tok.text), None)),
        }
    }
}

fn parse_predicate(p: &mut LineParser<'_>) -> Result<Predicate, ParseDiagnostic> {
    let col = p.cur_col();
    let Some(head) = p.next() else {
        return Err(p.err(col, "unexpected end of line", Some("a predicate keyword")));
    };
    match head.text.as_str() {
        "DEMOGRAPHIC" => {
            let fcol = p.cur_col();
            let field = match p.next() {
                Some(t) if t.text == "age_at_index" => DemographicField::AgeAtIndex,
                Some(t) if t.text == "sex" => DemographicField::Sex,
                Some(t) => return Err(p.err(t.col, format!("unknown field `{}`", t.text), Some("age_at_index or sex"))),
                None => return Err(p.err(fcol, "unexpected end of line", Some("age_at_index or sex"))),
            };
            let cmp = p.expect_comparator()?;
            let value = p.expect_number("a number")?;
            let unit = p.next().map(|t| t.text.clone());
            p.expect_end()?;
            Ok(Predicate::Demographic { field, cmp, value, unit })
        }
        "LAB" => {
            let (codes, ccol) = p.expect_kv("loinc")?;
            let loinc: Vec<String> = codes.split(',').map(str::to_string).collect();
            if loinc.iter().any(|c| c.is_empty()) {
                return Err(p.err(ccol, "empty LOINC code in list", None));
            }
            let test = if p.peek().map(|t| t.text.as_str()) == Some("IN") {
                p.next();
                let rcol = p.cur_col();
                let Some(tok) = p.next() else {
                    return Err(p.err(rcol, "unexpected end of line", Some("[<lo>,<hi>]")));
                };
                let inner = tok
                    .text
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(|| p.err(tok.col, format!("found `{}`", tok.text), Some("[<lo>,<hi>]")))?;
                let parts: Vec<&str> = inner.split(',').collect();
                if parts.len() != 2 {
                    return Err(p.err(tok.col, format!("found `{}`", tok.text), Some("[<lo>,<hi>]")));
                }
                let lo: f64 = parts[0]
                    .parse()
                    .map_err(|_| p.err(tok.col, format!("invalid range bound `{}`", parts[0]), Some("a number")))?;
                let hi: f64 = parts[1]
                    .parse()
                    .map_err(|_| p.err(tok.col, format!("invalid range bound `{}`", parts[1]), Some("a number")))?;
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(p.err(tok.col, format!("invalid range [{lo},{hi}]: lower bound must not exceed upper"), None));
                }
                LabTest::InRange { lo, hi }
            } else {
                let cmp = p.expect_comparator()?;
                let value = p.expect_number("a number")?;
                LabTest::Cmp { cmp, value }
            };
            let ucol = p.cur_col();
            let Some(unit) = p.next() else {
                return Err(p.err(ucol, "unexpected end of line", Some("a unit")));
            };
            let unit = unit.text.clone();
            p.expect_end()?;
            Ok(Predicate::LabCompare { loinc, test, unit })
        }
        "DIAGNOSIS" | "PROCEDURE" | "MEDICATION" => {
            let domain = match head.text.as_str() {
                "DIAGNOSIS" => CodeDomain::Diagnosis,
                "PROCEDURE" => CodeDomain::Procedure,
                _ => CodeDomain::Medication,
            };
            let (sys, scol) = p.expect_kv("system")?;
            let system = CriterionCodeSystem::parse(&sys)
                .ok_or_else(|| p.err(scol, format!("unknown system `{sys}`"), Some("ICD9CM, ICD10CM, HCPCS, or RXNORM")))?;
            if !system.admissible_for(domain) {
                return Err(p.err(scol, format!("system {} is not valid for {}", system.token(), domain.token()), None));
            }
            let (codes, ccol) = p.expect_kv("codes")?;
            let mut patterns = Vec::new();
            for part in codes.split(',') {
                match CodePattern::parse(part) {
                    Ok(pat) => patterns.push(pat),
                    Err(e) => return Err(p.err(ccol, format!("bad code pattern `{part}`: {e}"), None)),
                }
            }
            let pcol = p.cur_col();
            let presence = match p.next() {
                Some(t) if t.text == "PRESENT" => Presence::Present,
                Some(t) if t.text == "ABSENT" => Presence::Absent,
                Some(t) => return Err(p.err(t.col, format!("found `{}`", t.text), Some("PRESENT or ABSENT"))),
                None => return Err(p.err(pcol, "unexpected end of line", Some("PRESENT or ABSENT"))),
            };
            p.expect_end()?;
            Ok(Predicate::CodePresence { domain, system, patterns, presence })
        }
        "NONCOMPUTABLE" => {
            let rcol = p.cur_col();
            let Some(tok) = p.next() else {
                return Err(p.err(rcol, "unexpected end of line", Some("a quoted reason string")));
            };
            let reason = tok
                .text
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .ok_or_else(|| p.err(tok.col, format!("found `{}`", tok.text), Some("a quoted reason string")))?;
            p.expect_end()?;
            Ok(Predicate::NonComputable { reason: reason.to_string() })
        }
        other => Err(p.err(
            head.col,
            format!("unknown predicate keyword `{other}`"),
            Some("DEMOGRAPHIC, LAB, DIAGNOSIS, PROCEDURE, MEDICATION, or NONCOMPUTABLE"),
        )),
    }
}

fn parse_criterion_line(
    tokens: &[Token],
    line_no: usize,
    line_len: usize,
    source: &str,
) -> Result<Criterion, ParseDiagnostic> {
    let mut p = LineParser { tokens, pos: 0, line: line_no, line_len };
    let head = p.next().expect("non-empty token list");
    let polarity = match head.text.as_str() {
        "INCLUDE" => Polarity::Include,
        "EXCLUDE" => Polarity::Exclude,
        other => {
            return Err(p.err(head.col, format!("unknown keyword `{other}`"), Some("INCLUDE or EXCLUDE")));
        }
    };
    let negated = if p.peek().map(|t| t.text.as_str()) == Some("NOT") {
        p.next();
        true
    } else {
        false
    };
    let (trait_label, tcol) = p.expect_kv("trait")?;
    if trait_label.trim().is_empty() {
        return Err(p.err(tcol, "empty trait label", None));
    }
    let predicate = parse_predicate(&mut p)?;
    Ok(Criterion { polarity, trait_label, negated, predicate, source_text: source.trim().to_string() })
}

/// Parses one trial file. On any error, returns every diagnostic found in
/// the file rather than stopping at the first.
pub fn parse_trial_file(text: &str) -> Result<TrialSpec, Vec<ParseDiagnostic>> {
    let mut diags: Vec<ParseDiagnostic> = Vec::new();
    let mut header: Option<(TrialId, Phase)> = None;
    let mut criteria = Vec::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) if !raw_line[..pos].contains('"') => &raw_line[..pos],
            _ => raw_line,
        };
        if line.trim().is_empty() {
            continue;
        }
        let tokens = match tokenize(line) {
            Ok(t) => t,
            Err((col, msg)) => {
                diags.push(ParseDiagnostic { line: line_no, col, message: msg, expected: None });
                continue;
            }
        };
        if tokens.is_empty() {
            continue;
        }
        if tokens[0].text == "TRIAL" {
            if header.is_some() {
                diags.push(ParseDiagnostic {
                    line: line_no,
                    col: tokens[0].col,
                    message: "duplicate TRIAL header".into(),
                    expected: None,
                });
                continue;
            }
            if tokens.len() != 4 || tokens[2].text != "PHASE" {
                diags.push(ParseDiagnostic {
                    line: line_no,
                    col: tokens.get(2).map(|t| t.col).unwrap_or(line.len() + 1),
                    message: "malformed TRIAL header".into(),
                    expected: Some("TRIAL <id> PHASE <1|1/2|2|3|UNKNOWN>".into()),
                });
                continue;
            }
            match Phase::parse(&tokens[3].text) {
                Some(phase) => header = Some((TrialId(tokens[1].text.clone()), phase)),
                None => diags.push(ParseDiagnostic {
                    line: line_no,
                    col: tokens[3].col,
                    message: format!("unknown phase `{}`", tokens[3].text),
                    expected: Some("1, 1/2, 2, 3, or UNKNOWN".into()),
                }),
            }
            continue;
        }
        if header.is_none() {
            diags.push(ParseDiagnostic {
                line: line_no,
                col: tokens[0].col,
                message: format!("found `{}` before the TRIAL header", tokens[0].text),
                expected: Some("TRIAL <id> PHASE <phase>".into()),
            });
            continue;
        }
        match parse_criterion_line(&tokens, line_no, line.len(), line) {
            Ok(c) => criteria.push(c),
            Err(d) => diags.push(d),
        }
    }

    let Some((id, phase)) = header else {
        diags.push(ParseDiagnostic {
            line: 1,
            col: 1,
            message: "missing TRIAL header".into(),
            expected: Some("TRIAL <id> PHASE <phase>".into()),
        });
        return Err(diags);
    };
    if criteria.is_empty() && diags.is_empty() {
        diags.push(ParseDiagnostic {
            line: text.lines().count().max(1),
            col: 1,
            message: "trial has no criteria".into(),
            expected: Some("at least one INCLUDE or EXCLUDE line".into()),
        });
    }
    if diags.is_empty() {
        Ok(TrialSpec { id, phase, criteria })
    } else {
        Err(diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lab_criterion() {
        let text = "TRIAL NCT91000001 PHASE 3\n\
                    INCLUDE trait=platelets LAB loinc=26515-7,777-3,778-1 >= 1500 /mm3\n";
        let t = parse_trial_file(text).unwrap();
        assert_eq!(t.criteria.len(), 1);
        let c = &t.criteria[0];
        assert!(c.computable());
        match &c.predicate {
            Predicate::LabCompare { loinc, test, unit } => {
                assert_eq!(loinc.len(), 3);
                assert_eq!(unit, "/mm3");
                assert_eq!(test, &LabTest::Cmp { cmp: Comparator::Ge, value: 1500.0 });
            }
            other => panic!("unexpected predicate {other:?}"),
        }
    }

    #[test]
    fn parses_noncomputable_with_free_text() {
        let text = "TRIAL T1 PHASE 2\n\
                    EXCLUDE trait=contraception NONCOMPUTABLE \"Fertile patients must use effective contraception\"\n";
        let t = parse_trial_file(text).unwrap();
        let c = &t.criteria[0];
        assert!(!c.computable());
        match &c.predicate {
            Predicate::NonComputable { reason } => {
                assert_eq!(reason, "Fertile patients must use effective contraception");
            }
            other => panic!("unexpected predicate {other:?}"),
        }
    }

    #[test]
    fn malformed_comparator_reports_position() {
        let text = "TRIAL T1 PHASE 2\n\
                    INCLUDE trait=age DEMOGRAPHIC age_at_index >== 18\n";
        let diags = parse_trial_file(text).unwrap_err();
        assert_eq!(diags.len(), 1);
        let d = &diags[0];
        assert_eq!(d.line, 2);
        assert_eq!(d.col, 44);
        assert!(d.expected.as_deref().unwrap().contains("comparator"));
    }

    #[test]
    fn multiple_errors_reported_in_one_pass() {
        let text = "TRIAL T1 PHASE 2\n\
                    INCLUDE trait=age DEMOGRAPHIC age_at_index >== 18\n\
                    INCLUDE trait=x FROBNICATE yes\n\
                    EXCLUDE trait=ok DIAGNOSIS system=ICD10CM codes=Q10.* PRESENT\n";
        let diags = parse_trial_file(text).unwrap_err();
        assert_eq!(diags.len(), 2);
        assert_eq!(diags[0].line, 2);
        assert_eq!(diags[1].line, 3);
    }

    #[test]
    fn domain_system_compatibility_enforced() {
        let text = "TRIAL T1 PHASE 2\n\
                    INCLUDE trait=x DIAGNOSIS system=HCPCS codes=J1234 PRESENT\n";
        let diags = parse_trial_file(text).unwrap_err();
        assert!(diags[0].message.contains("not valid for DIAGNOSIS"));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# corpus fixture\nTRIAL T1 PHASE 1/2\n\n\
                    INCLUDE trait=age DEMOGRAPHIC age_at_index >= 18 years # adults only\n";
        let t = parse_trial_file(text).unwrap();
        assert_eq!(t.phase, Phase::P1_2);
        assert_eq!(t.criteria.len(), 1);
    }

    #[test]
    fn range_with_inverted_bounds_rejected() {
        let text = "TRIAL T1 PHASE 2\n\
                    INCLUDE trait=hb LAB loinc=718-7 IN [17.5,9.0] g/dL\n";
        let diags = parse_trial_file(text).unwrap_err();
        assert!(diags[0].message.contains("lower bound"));
    }

    #[test]
    fn missing_header_is_an_error() {
        let diags = parse_trial_file("INCLUDE trait=age DEMOGRAPHIC age_at_index >= 18\n").unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("before the TRIAL header")));
    }
}
