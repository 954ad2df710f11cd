use super::PromptError;

/// Byte-position cursor over a prompt with whitespace skipping.
pub(crate) struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    pub fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    pub fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }

    pub fn error(&self, msg: impl Into<String>) -> PromptError {
        PromptError::Syntax { pos: self.pos, msg: msg.into() }
    }

    pub fn expect(&mut self, c: char) -> Result<(), PromptError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    /// Consumes `c` if it is next (after whitespace).
    pub fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    /// Identifier: letters (any script), digits and `_`, not starting with a digit.
    pub fn ident(&mut self) -> Result<&'a str, PromptError> {
        self.skip_ws();
        let start = self.pos;
        for (i, c) in self.rest().char_indices() {
            let ok = c.is_alphabetic() || c == '_' || (i > 0 && c.is_ascii_digit());
            if !ok {
                break;
            }
            self.pos = start + i + c.len_utf8();
        }
        if self.pos == start {
            Err(self.error("expected identifier"))
        } else {
            Ok(&self.src[start..self.pos])
        }
    }

    /// Consumes the exact word `w` followed by a non-identifier character.
    pub fn keyword(&mut self, w: &str) -> Result<(), PromptError> {
        self.skip_ws();
        let save = self.pos;
        match self.ident() {
            Ok(got) if got == w => Ok(()),
            _ => {
                self.pos = save;
                Err(self.error(format!("expected `{w}`")))
            }
        }
    }

    pub fn number(&mut self) -> Result<f64, PromptError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
            i += 1;
        }
        let int_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let mut ok = i > int_start;
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            let frac_start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            ok &= i > frac_start;
        }
        if i == start {
            return Err(self.error("expected number"));
        }
        let text = &self.src[start..i];
        self.pos = i;
        match text.parse::<f64>() {
            Ok(v) if ok && v.is_finite() => Ok(v),
            _ => Err(PromptError::Number { pos: start, text: text.to_string() }),
        }
    }

    pub fn integer(&mut self) -> Result<usize, PromptError> {
        self.skip_ws();
        let start = self.pos;
        let digits = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return Err(self.error("expected integer"));
        }
        self.pos += digits;
        self.src[start..self.pos]
            .parse()
            .map_err(|_| PromptError::Number { pos: start, text: self.src[start..self.pos].to_string() })
    }
}
