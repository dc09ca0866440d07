//! AT command grammar for the emulated SIM808 subset.
//!
//! ```text
//! line    = "AT" [ "+" name ( "" | "?" | "=?" | "=" arg *( "," arg ) ) ] CR
//! arg     = int | quoted
//! int     = [ "-" ] 1*DIGIT
//! quoted  = DQUOTE *( char | "\" DQUOTE | "\\" ) DQUOTE
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verb {
    At,
    Cmgf,
    Cmgs,
    Creg,
    Cgnspwr,
    Cgnsinf,
    Sapbr,
    HttpInit,
    HttpPara,
    HttpAction,
    HttpRead,
    HttpTerm,
}

impl Verb {
    pub const ALL: [Verb; 12] = [
        Verb::At,
        Verb::Cmgf,
        Verb::Cmgs,
        Verb::Creg,
        Verb::Cgnspwr,
        Verb::Cgnsinf,
        Verb::Sapbr,
        Verb::HttpInit,
        Verb::HttpPara,
        Verb::HttpAction,
        Verb::HttpRead,
        Verb::HttpTerm,
    ];

    /// Extended-command name (without `+`); empty for bare `AT`.
    pub fn name(self) -> &'static str {
        match self {
            Verb::At => "",
            Verb::Cmgf => "CMGF",
            Verb::Cmgs => "CMGS",
            Verb::Creg => "CREG",
            Verb::Cgnspwr => "CGNSPWR",
            Verb::Cgnsinf => "CGNSINF",
            Verb::Sapbr => "SAPBR",
            Verb::HttpInit => "HTTPINIT",
            Verb::HttpPara => "HTTPPARA",
            Verb::HttpAction => "HTTPACTION",
            Verb::HttpRead => "HTTPREAD",
            Verb::HttpTerm => "HTTPTERM",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .skip(1)
            .find(|v| v.name().eq_ignore_ascii_case(name))
    }
}

/// `AT+X` (execute), `AT+X?` (read), `AT+X=?` (test) or `AT+X=..` (write).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Form {
    Execute,
    Read,
    Test,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtArg {
    Int(i64),
    Str(String),
}

impl AtArg {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            AtArg::Int(v) => Some(*v),
            AtArg::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            AtArg::Str(s) => Some(s),
            AtArg::Int(_) => None,
        }
    }
}

impl fmt::Display for AtArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtArg::Int(v) => write!(f, "{v}"),
            AtArg::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtCommand {
    pub verb: Verb,
    pub form: Form,
    pub args: Vec<AtArg>,
}

impl AtCommand {
    pub fn new(verb: Verb, form: Form, args: Vec<AtArg>) -> Self {
        Self { verb, form, args }
    }

    pub fn execute(verb: Verb) -> Self {
        Self::new(verb, Form::Execute, Vec::new())
    }

    pub fn read(verb: Verb) -> Self {
        Self::new(verb, Form::Read, Vec::new())
    }

    pub fn write(verb: Verb, args: Vec<AtArg>) -> Self {
        Self::new(verb, Form::Write, args)
    }
}

/// Canonical text, without the trailing CR.
impl fmt::Display for AtCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AT")?;
        if self.verb == Verb::At {
            return Ok(());
        }
        write!(f, "+{}", self.verb.name())?;
        match self.form {
            Form::Execute => Ok(()),
            Form::Read => f.write_str("?"),
            Form::Test => f.write_str("=?"),
            Form::Write => {
                f.write_str("=")?;
                for (i, arg) in self.args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{arg}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailure {
    /// The offending line (lossy UTF-8, terminator stripped).
    pub line: String,
    pub reason: &'static str,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}", self.reason, self.line)
    }
}

impl std::error::Error for ParseFailure {}

pub fn parse_at_line(bytes: &[u8]) -> Result<AtCommand, ParseFailure> {
    let trimmed = strip_terminator(bytes);
    let fail = |reason| ParseFailure {
        line: String::from_utf8_lossy(trimmed).into_owned(),
        reason,
    };
    let text = std::str::from_utf8(trimmed).map_err(|_| fail("not utf-8"))?;
    if !text.get(..2).is_some_and(|p| p.eq_ignore_ascii_case("AT")) {
        return Err(fail("missing AT prefix"));
    }
    let rest = &text[2..];
    if rest.is_empty() {
        return Ok(AtCommand::execute(Verb::At));
    }
    let rest = rest.strip_prefix('+').ok_or_else(|| fail("expected '+'"))?;
    let name_len = rest.find(|c: char| !c.is_ascii_alphanumeric()).unwrap_or(rest.len());
    let verb = Verb::from_name(&rest[..name_len]).ok_or_else(|| fail("unknown command"))?;
    let tail = &rest[name_len..];
    let (form, args) = match tail {
        "" => (Form::Execute, Vec::new()),
        "?" => (Form::Read, Vec::new()),
        "=?" => (Form::Test, Vec::new()),
        _ => {
            let body = tail.strip_prefix('=').ok_or_else(|| fail("unexpected suffix"))?;
            (Form::Write, parse_args(body).map_err(fail)?)
        }
    };
    Ok(AtCommand { verb, form, args })
}

fn strip_terminator(bytes: &[u8]) -> &[u8] {
    let mut end = bytes.len();
    while end > 0 && matches!(bytes[end - 1], b'\r' | b'\n') {
        end -= 1;
    }
    &bytes[..end]
}

fn parse_args(body: &str) -> Result<Vec<AtArg>, &'static str> {
    let mut args = Vec::new();
    let mut chars = body.chars().peekable();
    loop {
        match chars.peek() {
            None => return Err("missing argument"),
            Some('"') => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None => return Err("unterminated string"),
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some(c @ ('"' | '\\')) => s.push(c),
                            _ => return Err("bad escape"),
                        },
                        Some(c) => s.push(c),
                    }
                }
                args.push(AtArg::Str(s));
            }
            Some(_) => {
                let mut digits = String::new();
                while let Some(&c) = chars.peek() {
                    if c == ',' {
                        break;
                    }
                    digits.push(c);
                    chars.next();
                }
                let valid = {
                    let unsigned = digits.strip_prefix('-').unwrap_or(&digits);
                    !unsigned.is_empty() && unsigned.bytes().all(|b| b.is_ascii_digit())
                };
                if !valid {
                    return Err("bad integer");
                }
                args.push(AtArg::Int(digits.parse().map_err(|_| "integer overflow")?));
            }
        }
        match chars.next() {
            None => return Ok(args),
            Some(',') => continue,
            Some(_) => return Err("expected ','"),
        }
    }
}
