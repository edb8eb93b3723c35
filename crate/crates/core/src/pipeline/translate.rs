use std::sync::Mutex;

use super::execute::run_pool;
use super::{Clients, PipelineError};
use crate::dataset::DatasetRecord;
use crate::prompt::LanguageCode;

/// Returns `records` with every language in `languages` translated, keeping
/// translations the records already carry. Fails on the first backend error.
pub fn translate_records(
    records: &[DatasetRecord],
    languages: &[LanguageCode],
    clients: &Clients,
    workers: usize,
) -> Result<Vec<DatasetRecord>, PipelineError> {
    let mut todo = Vec::new();
    for (i, r) in records.iter().enumerate() {
        for l in languages {
            if !r.translations.contains_key(l.code()) {
                todo.push((i, l.clone()));
            }
        }
    }
    for (_, l) in &todo {
        if clients.translator(l).is_err() {
            return Err(PipelineError::Config(format!(
                "no translate endpoint routed for language {}",
                l.code()
            )));
        }
    }

    let done = Mutex::new(Vec::with_capacity(todo.len()));
    run_pool(&todo, workers, |(i, l)| {
        let text = clients.translator(l)?.translate(&records[*i].text, &LanguageCode::english(), l)?;
        done.lock().expect("translations poisoned").push((*i, l.code().to_string(), text));
        Ok(true)
    })?;
    let mut out = records.to_vec();
    for (i, code, text) in done.into_inner().expect("translations poisoned") {
        out[i].translations.insert(code, text);
    }
    Ok(out)
}
