use std::io::{BufRead, Write};
use std::sync::Mutex;

use entity_sampler::lsh::SameClusterOracle;
use entity_sampler::Dataset;

/// Asks a person on the terminal whether two records are the same entity.
/// Answers are cached so a pair is never asked twice.
pub struct InteractiveOracle<'a> {
    data: &'a Dataset,
    state: Mutex<State>,
}

struct State {
    answers: std::collections::HashMap<(usize, usize), bool>,
    input: Box<dyn BufRead + Send>,
    output: Box<dyn Write + Send>,
}

impl<'a> InteractiveOracle<'a> {
    pub fn new(data: &'a Dataset, input: Box<dyn BufRead + Send>, output: Box<dyn Write + Send>) -> Self {
        InteractiveOracle {
            data,
            state: Mutex::new(State {
                answers: Default::default(),
                input,
                output,
            }),
        }
    }

    pub fn stdio(data: &'a Dataset) -> Self {
        Self::new(
            data,
            Box::new(std::io::BufReader::new(std::io::stdin())),
            Box::new(std::io::stderr()),
        )
    }

    fn describe(&self, i: usize) -> String {
        let body = match self.data.vector(i) {
            Some(v) => format!("{v:?}"),
            None => self.data.text(i).unwrap_or_default().to_string(),
        };
        format!("[{}] {body}", self.data.record_id(i))
    }
}

impl SameClusterOracle for InteractiveOracle<'_> {
    fn same(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(&ans) = st.answers.get(&key) {
            return ans;
        }
        let (da, db) = (self.describe(a), self.describe(b));
        let ans = loop {
            let _ = write!(st.output, "{da}\n{db}\nsame entity? [y/n] ");
            let _ = st.output.flush();
            let mut line = String::new();
            match st.input.read_line(&mut line) {
                // end of input counts as "no"
                Ok(0) | Err(_) => break false,
                Ok(_) => match line.trim().to_ascii_lowercase().as_str() {
                    "y" | "yes" => break true,
                    "n" | "no" => break false,
                    _ => continue,
                },
            }
        };
        st.answers.insert(key, ans);
        ans
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_answers_and_caches() {
        let data = Dataset::from_vectors(1, vec![0.0, 1.0, 2.0], vec![1.0; 3]).unwrap();
        let input = std::io::Cursor::new(b"maybe\ny\nn\n".to_vec());
        let o = InteractiveOracle::new(&data, Box::new(input), Box::new(std::io::sink()));
        assert!(o.same(0, 1));
        assert!(o.same(1, 0));
        assert!(!o.same(0, 2));
        assert!(!o.same(1, 2));
    }
}
