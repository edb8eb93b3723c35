use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::PromptError;

/// English exonyms used as line labels in rendered prompts.
const KNOWN_LANGUAGES: &[(&str, &str)] = &[
    ("ar", "Arabic"),
    ("cs", "Czech"),
    ("da", "Danish"),
    ("de", "German"),
    ("el", "Greek"),
    ("en", "English"),
    ("es", "Spanish"),
    ("fi", "Finnish"),
    ("fr", "French"),
    ("he", "Hebrew"),
    ("hi", "Hindi"),
    ("hu", "Hungarian"),
    ("id", "Indonesian"),
    ("it", "Italian"),
    ("ja", "Japanese"),
    ("ko", "Korean"),
    ("nl", "Dutch"),
    ("no", "Norwegian"),
    ("pl", "Polish"),
    ("pt", "Portuguese"),
    ("ro", "Romanian"),
    ("ru", "Russian"),
    ("sv", "Swedish"),
    ("th", "Thai"),
    ("tr", "Turkish"),
    ("uk", "Ukrainian"),
    ("vi", "Vietnamese"),
    ("zh", "Chinese"),
];

/// A language identified by its ISO-639-1 code, carrying the English name
/// printed in front of its prompt line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageCode {
    code: String,
    display_name: String,
}

impl LanguageCode {
    pub fn new(code: impl Into<String>, display_name: impl Into<String>) -> Result<Self, PromptError> {
        let code = code.into();
        let display_name = display_name.into();
        if code.len() != 2 || !code.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(PromptError::InvalidLanguageCode(code));
        }
        if display_name.trim().is_empty() {
            return Err(PromptError::EmptyDisplayName(code));
        }
        Ok(Self { code, display_name })
    }

    /// Looks up a code in the built-in exonym table.
    pub fn from_code(code: &str) -> Result<Self, PromptError> {
        let code = code.trim().to_ascii_lowercase();
        KNOWN_LANGUAGES
            .iter()
            .find(|(c, _)| *c == code)
            .map(|(c, name)| Self {
                code: (*c).to_string(),
                display_name: (*name).to_string(),
            })
            .ok_or(PromptError::UnknownLanguage(code))
    }

    pub fn english() -> Self {
        Self {
            code: "en".to_string(),
            display_name: "English".to_string(),
        }
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn display_name(&self) -> &str {
        &self.display_name
    }

    pub fn is_english(&self) -> bool {
        self.code == "en"
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

impl Serialize for LanguageCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.code)
    }
}

impl<'de> Deserialize<'de> for LanguageCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = String::deserialize(deserializer)?;
        LanguageCode::from_code(&code).map_err(serde::de::Error::custom)
    }
}

/// The six high-resource translation languages used by default, in
/// configuration order: Russian, Spanish, German, French, Chinese, Italian.
pub fn default_languages() -> Vec<LanguageCode> {
    ["ru", "es", "de", "fr", "zh", "it"]
        .iter()
        .map(|c| LanguageCode::from_code(c).expect("built-in language"))
        .collect()
}

/// Parses a comma separated list such as `de,es,fr`.
pub fn parse_language_list(list: &str) -> Result<Vec<LanguageCode>, PromptError> {
    let languages = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(LanguageCode::from_code)
        .collect::<Result<Vec<_>, _>>()?;
    for (i, lang) in languages.iter().enumerate() {
        if languages[..i].iter().any(|l| l.code == lang.code) {
            return Err(PromptError::DuplicateLanguage(lang.code.clone()));
        }
    }
    Ok(languages)
}

/// The original English description of one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceText {
    pub id: String,
    pub text: String,
}

impl SourceText {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PromptError::EmptySource);
        }
        Ok(Self { id: id.into(), text })
    }
}

/// A source caption together with its translations. The translation order
/// fixes the language indices used by the variant ranking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelText {
    source: SourceText,
    translations: Vec<(LanguageCode, String)>,
}

impl ParallelText {
    pub fn new(source: SourceText, translations: Vec<(LanguageCode, String)>) -> Result<Self, PromptError> {
        if source.text.trim().is_empty() {
            return Err(PromptError::EmptySource);
        }
        for (i, (lang, text)) in translations.iter().enumerate() {
            if lang.is_english() {
                return Err(PromptError::EnglishTranslation);
            }
            if text.trim().is_empty() {
                return Err(PromptError::EmptyTranslation(lang.code().to_string()));
            }
            if translations[..i].iter().any(|(l, _)| l.code() == lang.code()) {
                return Err(PromptError::DuplicateLanguage(lang.code().to_string()));
            }
            if translations[..i]
                .iter()
                .any(|(l, _)| l.display_name() == lang.display_name())
            {
                return Err(PromptError::DuplicateDisplayName(lang.display_name().to_string()));
            }
        }
        Ok(Self { source, translations })
    }

    pub fn source(&self) -> &SourceText {
        &self.source
    }

    pub fn translations(&self) -> &[(LanguageCode, String)] {
        &self.translations
    }

    pub fn languages(&self) -> Vec<LanguageCode> {
        self.translations.iter().map(|(l, _)| l.clone()).collect()
    }

    pub fn translation(&self, code: &str) -> Option<&str> {
        self.translations
            .iter()
            .find(|(l, _)| l.code() == code)
            .map(|(_, t)| t.as_str())
    }

    pub(crate) fn position(&self, code: &str) -> Option<usize> {
        self.translations.iter().position(|(l, _)| l.code() == code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_validation() {
        assert!(LanguageCode::new("de", "German").is_ok());
        assert!(LanguageCode::new("DE", "German").is_err());
        assert!(LanguageCode::new("deu", "German").is_err());
        assert!(LanguageCode::new("de", "  ").is_err());
        assert_eq!(LanguageCode::from_code("ZH").unwrap().display_name(), "Chinese");
        assert!(LanguageCode::from_code("xx").is_err());
    }

    #[test]
    fn defaults_are_the_six_languages() {
        let codes: Vec<_> = default_languages().iter().map(|l| l.code().to_string()).collect();
        assert_eq!(codes, ["ru", "es", "de", "fr", "zh", "it"]);
    }

    #[test]
    fn language_list_rejects_duplicates() {
        assert_eq!(parse_language_list("de, fr").unwrap().len(), 2);
        assert!(matches!(
            parse_language_list("de,de"),
            Err(PromptError::DuplicateLanguage(_))
        ));
    }

    #[test]
    fn parallel_text_invariants() {
        let src = SourceText::new("1", "A red car.").unwrap();
        let de = LanguageCode::from_code("de").unwrap();
        assert!(ParallelText::new(src.clone(), vec![(LanguageCode::english(), "x".into())]).is_err());
        assert!(ParallelText::new(src.clone(), vec![(de.clone(), " ".into())]).is_err());
        assert!(ParallelText::new(
            src.clone(),
            vec![(de.clone(), "a".into()), (de.clone(), "b".into())]
        )
        .is_err());
        let alias = LanguageCode::new("xg", "German").unwrap();
        assert!(matches!(
            ParallelText::new(src.clone(), vec![(de.clone(), "a".into()), (alias, "b".into())]),
            Err(PromptError::DuplicateDisplayName(_))
        ));
        assert!(SourceText::new("1", "   ").is_err());
    }
}
