use super::{
    validate, CmpOp, ContactKind, Diagnostic, DiagnosticKind, Diagnostics, Element, LadderProgram, Rung, Span, Target,
    VarKind,
};

const KEYWORDS: &[&str] = &[
    "VAR", "TIMER", "PRESET", "RUNG", "NO", "NC", "CMP", "TON", "OR", "COIL", "SET", "RESET", "BOOL", "REAL",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(String),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Colon,
    Semi,
    Comma,
    Arrow,
    Op(CmpOp),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Arrow => "`=>`".into(),
            Tok::Op(op) => format!("`{}`", op.symbol()),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(source: &str, diags: &mut Vec<Diagnostic>) -> Vec<(Tok, Span)> {
    let chars: Vec<char> = source.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, column: col };
        let next = chars.get(i + 1).copied();

        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && next == Some('/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }

        let single = match c {
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ':' => Some(Tok::Colon),
            ';' => Some(Tok::Semi),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            toks.push((tok, span));
            i += 1;
            col += 1;
            continue;
        }

        let two = |a: char, b: char| c == a && next == Some(b);
        let (tok, len) = if two('=', '>') {
            (Some(Tok::Arrow), 2)
        } else if two('<', '=') {
            (Some(Tok::Op(CmpOp::Le)), 2)
        } else if two('>', '=') {
            (Some(Tok::Op(CmpOp::Ge)), 2)
        } else if c == '<' {
            (Some(Tok::Op(CmpOp::Lt)), 1)
        } else if c == '>' {
            (Some(Tok::Op(CmpOp::Gt)), 1)
        } else {
            (None, 0)
        };
        if let Some(tok) = tok {
            toks.push((tok, span));
            i += len;
            col += len;
            continue;
        }

        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            toks.push((Tok::Word(word), span));
            continue;
        }

        let signed_digit = (c == '-' || c == '+') && next.is_some_and(|n| n.is_ascii_digit() || n == '.');
        if c.is_ascii_digit() || signed_digit || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            toks.push((Tok::Number(text), span));
            continue;
        }

        diags.push(Diagnostic {
            kind: DiagnosticKind::Syntax,
            span,
            rung: None,
            message: format!("unexpected character `{c}`"),
        });
        i += 1;
        col += 1;
    }
    toks.push((Tok::Eof, Span { line, column: col }));
    toks
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    diags: Vec<Diagnostic>,
    program: LadderProgram,
    seen_rung: bool,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: String) -> Diagnostic {
        Diagnostic {
            kind: DiagnosticKind::Syntax,
            span: self.span(),
            rung: None,
            message,
        }
    }

    fn expect(&mut self, want: Tok) -> PResult<Span> {
        if *self.peek() == want {
            Ok(self.bump().1)
        } else {
            Err(self.error(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<Span> {
        match self.peek() {
            Tok::Word(w) if w == kw => Ok(self.bump().1),
            other => Err(self.error(format!("expected `{kw}`, found {}", other.describe()))),
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Word(w) if !KEYWORDS.contains(&w.as_str()) => {
                self.bump();
                Ok(w)
            }
            other => Err(self.error(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn number(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Number(n) => {
                let span = self.bump().1;
                Ok((n, span))
            }
            other => Err(self.error(format!("expected number, found {}", other.describe()))),
        }
    }

    /// Skip past the next `;` so one bad statement yields one diagnostic.
    fn recover(&mut self) {
        loop {
            match self.peek() {
                Tok::Eof => return,
                Tok::Semi => {
                    self.bump();
                    return;
                }
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn run(&mut self) {
        loop {
            let result = match self.peek().clone() {
                Tok::Eof => return,
                Tok::Word(w) if w == "VAR" || w == "TIMER" => {
                    if self.seen_rung {
                        Err(self.error("declarations must precede rungs".into()))
                    } else if w == "VAR" {
                        self.var_decl()
                    } else {
                        self.timer_decl()
                    }
                }
                Tok::Word(w) if w == "RUNG" => {
                    self.seen_rung = true;
                    self.rung()
                }
                other => Err(self.error(format!("expected `VAR`, `TIMER` or `RUNG`, found {}", other.describe()))),
            };
            if let Err(d) = result {
                self.diags.push(d);
                self.recover();
            }
        }
    }

    fn declare(&mut self, name: String, kind: VarKind, span: Span) {
        if self.program.variables.contains_key(&name) {
            self.diags.push(Diagnostic {
                kind: DiagnosticKind::DuplicateDeclaration,
                span,
                rung: None,
                message: format!("duplicate declaration of {name}"),
            });
            return;
        }
        self.program.variables.insert(name.clone(), kind);
        self.program.decl_spans.insert(name, span);
    }

    fn var_decl(&mut self) -> PResult<()> {
        self.expect_keyword("VAR")?;
        let span = self.span();
        let name = self.ident()?;
        self.expect(Tok::Colon)?;
        let kind = match self.peek() {
            Tok::Word(w) if w == "BOOL" => VarKind::Bool,
            Tok::Word(w) if w == "REAL" => VarKind::Real,
            other => return Err(self.error(format!("expected `BOOL` or `REAL`, found {}", other.describe()))),
        };
        self.bump();
        self.expect(Tok::Semi)?;
        self.declare(name, kind, span);
        Ok(())
    }

    fn timer_decl(&mut self) -> PResult<()> {
        self.expect_keyword("TIMER")?;
        let span = self.span();
        let name = self.ident()?;
        self.expect_keyword("PRESET")?;
        let (text, num_span) = self.number()?;
        let preset: i64 = text.parse().map_err(|_| Diagnostic {
            kind: DiagnosticKind::Syntax,
            span: num_span,
            rung: None,
            message: format!("timer preset must be an integer number of ms, found `{text}`"),
        })?;
        self.expect(Tok::Semi)?;
        if !self.program.variables.contains_key(&name) {
            self.program.timer_presets.insert(name.clone(), preset);
        }
        self.declare(name, VarKind::Timer, span);
        Ok(())
    }

    fn rung(&mut self) -> PResult<()> {
        let span = self.expect_keyword("RUNG")?;
        self.expect(Tok::Colon)?;
        let elements = self.series(&[Tok::Arrow])?;
        self.expect(Tok::Arrow)?;
        let target = match self.peek().clone() {
            Tok::Word(w) if w == "COIL" || w == "SET" || w == "RESET" => {
                self.bump();
                let var = self.ident()?;
                match w.as_str() {
                    "COIL" => Target::Coil(var),
                    "SET" => Target::Set(var),
                    _ => Target::Reset(var),
                }
            }
            other => return Err(self.error(format!("expected `COIL`, `SET` or `RESET`, found {}", other.describe()))),
        };
        self.expect(Tok::Semi)?;
        self.program.rungs.push(Rung { elements, target, span });
        Ok(())
    }

    /// One or more elements, stopping before any token in `until`.
    fn series(&mut self, until: &[Tok]) -> PResult<Vec<Element>> {
        let mut out = Vec::new();
        while !until.contains(self.peek()) {
            if *self.peek() == Tok::Eof || *self.peek() == Tok::Semi {
                break;
            }
            out.push(self.element()?);
        }
        if out.is_empty() {
            return Err(self.error(format!(
                "expected a contact, comparator, timer or `OR(...)`, found {}",
                self.peek().describe()
            )));
        }
        Ok(out)
    }

    fn element(&mut self) -> PResult<Element> {
        match self.peek().clone() {
            Tok::LBracket => {
                self.bump();
                let el = match self.peek().clone() {
                    Tok::Word(w) if w == "NO" || w == "NC" => {
                        self.bump();
                        let var = self.ident()?;
                        let kind = if w == "NO" {
                            ContactKind::NormallyOpen
                        } else {
                            ContactKind::NormallyClosed
                        };
                        Element::Contact { kind, var }
                    }
                    Tok::Word(w) if w == "CMP" => {
                        self.bump();
                        let var = self.ident()?;
                        let op = match self.peek().clone() {
                            Tok::Op(op) => {
                                self.bump();
                                op
                            }
                            other => {
                                return Err(
                                    self.error(format!("expected comparison operator, found {}", other.describe()))
                                )
                            }
                        };
                        let (text, span) = self.number()?;
                        let constant: f64 = text.parse().map_err(|_| Diagnostic {
                            kind: DiagnosticKind::Syntax,
                            span,
                            rung: None,
                            message: format!("malformed number `{text}`"),
                        })?;
                        Element::Compare { var, op, constant }
                    }
                    Tok::Word(w) if w == "TON" => {
                        self.bump();
                        Element::Ton { timer: self.ident()? }
                    }
                    other => {
                        return Err(self.error(format!(
                            "expected `NO`, `NC`, `CMP` or `TON`, found {}",
                            other.describe()
                        )))
                    }
                };
                self.expect(Tok::RBracket)?;
                Ok(el)
            }
            Tok::Word(w) if w == "OR" => {
                self.bump();
                self.expect(Tok::LParen)?;
                let mut branches = vec![self.series(&[Tok::Comma, Tok::RParen])?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    branches.push(self.series(&[Tok::Comma, Tok::RParen])?);
                }
                self.expect(Tok::RParen)?;
                Ok(Element::Parallel(branches))
            }
            other => Err(self.error(format!(
                "expected a contact, comparator, timer or `OR(...)`, found {}",
                other.describe()
            ))),
        }
    }
}

/// Parse and validate ladder source. Any syntax or semantic problem makes the
/// whole parse fail with every diagnostic found.
pub fn parse_ladder(source: &str) -> Result<LadderProgram, Diagnostics> {
    let mut diags = Vec::new();
    let toks = lex(source, &mut diags);
    let mut parser = Parser {
        toks,
        pos: 0,
        diags,
        program: LadderProgram::default(),
        seen_rung: false,
    };
    parser.run();
    let mut diags = parser.diags;
    diags.extend(validate(&parser.program).0);
    if diags.is_empty() {
        Ok(parser.program)
    } else {
        diags.sort_by_key(|d| d.span);
        Err(Diagnostics(diags))
    }
}
