use serde::{Deserialize, Serialize};

use super::{LanguageCode, ParallelText, PromptError, SourceText};

const LINE_SEPARATOR: &str = "\n";

fn line(label: &str, text: &str) -> String {
    format!("{label}: {text}")
}

fn english_line(text: &str) -> String {
    line("English", text)
}

/// Renders the English caption followed by one `<Language>: <text>` line per
/// entry of `order`. An empty order gives the English-only baseline.
pub fn render_prompt(parallel: &ParallelText, order: &[LanguageCode]) -> Result<String, PromptError> {
    let mut lines = Vec::with_capacity(order.len() + 1);
    lines.push(english_line(&parallel.source().text));
    for (i, lang) in order.iter().enumerate() {
        if order[..i].iter().any(|l| l.code() == lang.code()) {
            return Err(PromptError::DuplicateLanguage(lang.code().to_string()));
        }
        let idx = parallel
            .position(lang.code())
            .ok_or_else(|| PromptError::UnknownLanguage(lang.code().to_string()))?;
        let (known, text) = &parallel.translations()[idx];
        lines.push(line(known.display_name(), text));
    }
    Ok(lines.join(LINE_SEPARATOR))
}

/// The original line followed by `n` identical copies of it.
pub fn render_reduplication(source: &SourceText, n: usize) -> Result<String, PromptError> {
    if source.text.trim().is_empty() {
        return Err(PromptError::EmptySource);
    }
    if n == 0 {
        return Err(PromptError::ZeroCount);
    }
    let line = english_line(&source.text);
    Ok(vec![line; n + 1].join(LINE_SEPARATOR))
}

/// The original line followed by one English line per paraphrase, in order.
pub fn render_paraphrase(source: &SourceText, paraphrases: &[String]) -> Result<String, PromptError> {
    if source.text.trim().is_empty() {
        return Err(PromptError::EmptySource);
    }
    let mut lines = Vec::with_capacity(paraphrases.len() + 1);
    lines.push(english_line(&source.text));
    for p in paraphrases {
        if p.trim().is_empty() {
            return Err(PromptError::EmptyParaphrase);
        }
        lines.push(english_line(p));
    }
    Ok(lines.join(LINE_SEPARATOR))
}

/// A single non-English line, used to measure what each translation
/// achieves on its own.
pub fn render_single_language(parallel: &ParallelText, lang: &LanguageCode) -> Result<String, PromptError> {
    let idx = parallel
        .position(lang.code())
        .ok_or_else(|| PromptError::UnknownLanguage(lang.code().to_string()))?;
    let (known, text) = &parallel.translations()[idx];
    Ok(line(known.display_name(), text))
}

/// Prompt construction conditions compared in ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    #[default]
    Pmt2i,
    EnglishOnly,
    SingleLanguage,
    Reduplication,
    Paraphrase,
}

impl AblationKind {
    pub const ALL: [AblationKind; 5] = [
        AblationKind::Pmt2i,
        AblationKind::EnglishOnly,
        AblationKind::SingleLanguage,
        AblationKind::Reduplication,
        AblationKind::Paraphrase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationKind::Pmt2i => "pmt2i",
            AblationKind::EnglishOnly => "english_only",
            AblationKind::SingleLanguage => "single_language",
            AblationKind::Reduplication => "reduplication",
            AblationKind::Paraphrase => "paraphrase",
        }
    }
}

impl std::str::FromStr for AblationKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AblationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PromptError::UnknownAblation(s.to_string()))
    }
}

impl std::fmt::Display for AblationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lang(c: &str) -> LanguageCode {
        LanguageCode::from_code(c).unwrap()
    }

    fn red_car(translations: &[(&str, &str)]) -> ParallelText {
        ParallelText::new(
            SourceText::new("1", "A red car.").unwrap(),
            translations.iter().map(|(c, t)| (lang(c), t.to_string())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn renders_template_lines() {
        let p = red_car(&[("de", "Ein rotes Auto.")]);
        assert_eq!(
            render_prompt(&p, &[lang("de")]).unwrap(),
            "English: A red car.\nGerman: Ein rotes Auto."
        );
        let empty = red_car(&[]);
        assert_eq!(render_prompt(&empty, &[]).unwrap(), "English: A red car.");
    }

    #[test]
    fn preserves_requested_order() {
        let p = red_car(&[("de", "Ein rotes Auto."), ("fr", "Une voiture rouge.")]);
        let out = render_prompt(&p, &[lang("fr"), lang("de")]).unwrap();
        let lines: Vec<_> = out.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("French:"));
        assert!(lines[2].starts_with("German:"));
    }

    #[test]
    fn rejects_unknown_and_duplicate_codes() {
        let p = red_car(&[("de", "Ein rotes Auto.")]);
        assert!(matches!(
            render_prompt(&p, &[lang("fr")]),
            Err(PromptError::UnknownLanguage(_))
        ));
        assert!(matches!(
            render_prompt(&p, &[lang("de"), lang("de")]),
            Err(PromptError::DuplicateLanguage(_))
        ));
    }

    #[test]
    fn reduplication() {
        let dog = SourceText::new("d", "A dog.").unwrap();
        assert_eq!(render_reduplication(&dog, 1).unwrap(), "English: A dog.\nEnglish: A dog.");
        let out = render_reduplication(&dog, 3).unwrap();
        assert_eq!(out.lines().count(), 4);
        assert!(out.lines().all(|l| l == "English: A dog."));
        assert!(matches!(render_reduplication(&dog, 0), Err(PromptError::ZeroCount)));
        let empty = SourceText { id: "e".into(), text: String::new() };
        assert!(matches!(render_reduplication(&empty, 1), Err(PromptError::EmptySource)));
    }

    #[test]
    fn paraphrase() {
        let dog = SourceText::new("d", "A dog.").unwrap();
        assert_eq!(
            render_paraphrase(&dog, &["A canine.".into()]).unwrap(),
            "English: A dog.\nEnglish: A canine."
        );
        assert_eq!(render_paraphrase(&dog, &[]).unwrap(), "English: A dog.");
        assert_eq!(
            render_paraphrase(&dog, &["A canine.".into(), "One dog.".into()]).unwrap(),
            "English: A dog.\nEnglish: A canine.\nEnglish: One dog."
        );
        assert!(matches!(
            render_paraphrase(&dog, &["".into()]),
            Err(PromptError::EmptyParaphrase)
        ));
    }

    #[test]
    fn single_language_line() {
        let p = red_car(&[("de", "Ein rotes Auto.")]);
        assert_eq!(render_single_language(&p, &lang("de")).unwrap(), "German: Ein rotes Auto.");
        assert!(render_single_language(&p, &lang("ru")).is_err());
    }

    #[test]
    fn ablation_kind_strings() {
        for kind in AblationKind::ALL {
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.as_str()));
            assert_eq!(kind.as_str().parse::<AblationKind>().unwrap(), kind);
        }
        assert!("PMT2I".parse::<AblationKind>().is_err());
    }
}
