//! Syntax of global choreographies: the AST, a small text format, and the
//! pretty-printer.
//!
//! The grammar (operators listed from loosest to tightest binding, all
//! left-associative):
//!
//! ```text
//! choice  ::= par ( "+" par )*
//! par     ::= seq ( "|" seq )*
//! seq     ::= atom ( ";" atom )*
//! atom    ::= "0" | ident "->" ident ":" ident | "(" choice ")"
//! ```
//!
//! `//` starts a line comment. Identifiers are `[A-Za-z_][A-Za-z0-9_]*`.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Name of a communicating participant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Participant(pub String);

impl Participant {
    pub fn new(name: impl Into<String>) -> Self {
        Participant(name.into())
    }
}

impl fmt::Display for Participant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Message sort exchanged by a single interaction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Message(pub String);

impl Message {
    pub fn new(name: impl Into<String>) -> Self {
        Message(name.into())
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A global choreography term.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GChor {
    /// The empty choreography `0`.
    Empty,
    /// A single interaction `from -> to : msg`; `from != to` always holds
    /// for terms built by the parser or [`GChor::interaction`].
    Interaction {
        from: Participant,
        to: Participant,
        msg: Message,
    },
    /// Sequential composition `g ; g2`.
    Seq(Box<GChor>, Box<GChor>),
    /// Parallel composition `g | g2`.
    Par(Box<GChor>, Box<GChor>),
    /// Branching (choice) `g + g2`.
    Branch(Box<GChor>, Box<GChor>),
}

impl GChor {
    /// Builds an interaction, rejecting self-communication.
    pub fn interaction(
        from: Participant,
        to: Participant,
        msg: Message,
    ) -> Result<GChor, ParseError> {
        if from == to {
            return Err(ParseError::SelfInteraction {
                participant: from.0,
                line: 0,
                column: 0,
            });
        }
        Ok(GChor::Interaction { from, to, msg })
    }

    pub fn seq(a: GChor, b: GChor) -> GChor {
        GChor::Seq(Box::new(a), Box::new(b))
    }

    pub fn par(a: GChor, b: GChor) -> GChor {
        GChor::Par(Box::new(a), Box::new(b))
    }

    pub fn branch(a: GChor, b: GChor) -> GChor {
        GChor::Branch(Box::new(a), Box::new(b))
    }
}

/// Syntax or well-sortedness error raised by [`parse_gchor`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{column}: unexpected character {found:?}")]
    UnexpectedChar { found: char, line: usize, column: usize },
    #[error("{line}:{column}: expected {expected}, found {found}")]
    UnexpectedToken {
        expected: String,
        found: String,
        line: usize,
        column: usize,
    },
    #[error("{line}:{column}: participant {participant:?} cannot interact with itself")]
    SelfInteraction {
        participant: String,
        line: usize,
        column: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    Zero,
    Arrow,
    Colon,
    Semi,
    Pipe,
    Plus,
    LParen,
    RParen,
    Eof,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "identifier {s:?}"),
            Token::Zero => f.write_str("'0'"),
            Token::Arrow => f.write_str("'->'"),
            Token::Colon => f.write_str("':'"),
            Token::Semi => f.write_str("';'"),
            Token::Pipe => f.write_str("'|'"),
            Token::Plus => f.write_str("'+'"),
            Token::LParen => f.write_str("'('"),
            Token::RParen => f.write_str("')'"),
            Token::Eof => f.write_str("end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    column: usize,
}

/// Token together with the position of its first character.
struct Spanned {
    tok: Token,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            chars: src.char_indices().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<(usize, char)> {
        let next = self.chars.next();
        if let Some((_, c)) = next {
            if c == '\n' {
                self.line += 1;
                self.column = 1;
            } else {
                self.column += 1;
            }
        }
        next
    }

    fn tokenize(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            // Skip whitespace and `//` comments.
            match self.chars.peek().copied() {
                Some((_, c)) if c.is_whitespace() => {
                    self.bump();
                    continue;
                }
                Some((i, '/')) if self.src[i..].starts_with("//") => {
                    while let Some((_, c)) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                    continue;
                }
                _ => {}
            }
            let (line, column) = (self.line, self.column);
            let Some((start, c)) = self.bump() else {
                out.push(Spanned { tok: Token::Eof, line, column });
                return Ok(out);
            };
            let tok = match c {
                '0' => Token::Zero,
                ';' => Token::Semi,
                '|' => Token::Pipe,
                '+' => Token::Plus,
                ':' => Token::Colon,
                '(' => Token::LParen,
                ')' => Token::RParen,
                '-' => match self.chars.peek() {
                    Some((_, '>')) => {
                        self.bump();
                        Token::Arrow
                    }
                    _ => return Err(ParseError::UnexpectedChar { found: '-', line, column }),
                },
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut end = start + c.len_utf8();
                    while let Some((i, c2)) = self.chars.peek().copied() {
                        if c2.is_ascii_alphanumeric() || c2 == '_' {
                            self.bump();
                            end = i + c2.len_utf8();
                        } else {
                            break;
                        }
                    }
                    Token::Ident(self.src[start..end].to_string())
                }
                other => return Err(ParseError::UnexpectedChar { found: other, line, column }),
            };
            out.push(Spanned { tok, line, column });
        }
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> &Spanned {
        let s = &self.tokens[self.pos];
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        s
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, usize, usize), ParseError> {
        let s = self.advance();
        match &s.tok {
            Token::Ident(name) => Ok((name.clone(), s.line, s.column)),
            other => Err(ParseError::UnexpectedToken {
                expected: what.to_string(),
                found: other.to_string(),
                line: s.line,
                column: s.column,
            }),
        }
    }

    fn expect(&mut self, tok: Token, what: &str) -> Result<(), ParseError> {
        let s = self.advance();
        if s.tok == tok {
            Ok(())
        } else {
            Err(ParseError::UnexpectedToken {
                expected: what.to_string(),
                found: s.tok.to_string(),
                line: s.line,
                column: s.column,
            })
        }
    }

    fn choice(&mut self) -> Result<GChor, ParseError> {
        let mut acc = self.par()?;
        while self.peek().tok == Token::Plus {
            self.advance();
            acc = GChor::branch(acc, self.par()?);
        }
        Ok(acc)
    }

    fn par(&mut self) -> Result<GChor, ParseError> {
        let mut acc = self.seq()?;
        while self.peek().tok == Token::Pipe {
            self.advance();
            acc = GChor::par(acc, self.seq()?);
        }
        Ok(acc)
    }

    fn seq(&mut self) -> Result<GChor, ParseError> {
        let mut acc = self.atom()?;
        while self.peek().tok == Token::Semi {
            self.advance();
            acc = GChor::seq(acc, self.atom()?);
        }
        Ok(acc)
    }

    fn atom(&mut self) -> Result<GChor, ParseError> {
        let (line, column) = (self.peek().line, self.peek().column);
        match self.peek().tok.clone() {
            Token::Zero => {
                self.advance();
                Ok(GChor::Empty)
            }
            Token::LParen => {
                self.advance();
                let inner = self.choice()?;
                self.expect(Token::RParen, "')'")?;
                Ok(inner)
            }
            Token::Ident(_) => {
                let (from, fline, fcol) = self.expect_ident("participant name")?;
                self.expect(Token::Arrow, "'->'")?;
                let (to, ..) = self.expect_ident("participant name")?;
                self.expect(Token::Colon, "':'")?;
                let (msg, ..) = self.expect_ident("message name")?;
                if from == to {
                    return Err(ParseError::SelfInteraction {
                        participant: from,
                        line: fline,
                        column: fcol,
                    });
                }
                Ok(GChor::Interaction {
                    from: Participant(from),
                    to: Participant(to),
                    msg: Message(msg),
                })
            }
            other => Err(ParseError::UnexpectedToken {
                expected: "'0', '(' or an interaction".to_string(),
                found: other.to_string(),
                line,
                column,
            }),
        }
    }
}

/// Parses the textual format into an AST.
pub fn parse_gchor(text: &str) -> Result<GChor, ParseError> {
    let tokens = Lexer::new(text).tokenize()?;
    let mut parser = Parser { tokens, pos: 0 };
    let g = parser.choice()?;
    parser.expect(Token::Eof, "end of input")?;
    Ok(g)
}

/// All participant names occurring in `g`.
pub fn participants(g: &GChor) -> BTreeSet<Participant> {
    let mut acc = BTreeSet::new();
    collect_participants(g, &mut acc);
    acc
}

fn collect_participants(g: &GChor, acc: &mut BTreeSet<Participant>) {
    match g {
        GChor::Empty => {}
        GChor::Interaction { from, to, .. } => {
            acc.insert(from.clone());
            acc.insert(to.clone());
        }
        GChor::Seq(a, b) | GChor::Par(a, b) | GChor::Branch(a, b) => {
            collect_participants(a, acc);
            collect_participants(b, acc);
        }
    }
}

/// Preorder traversal of all subterms, the term itself first.
pub fn subterms(g: &GChor) -> Vec<&GChor> {
    let mut acc = Vec::new();
    let mut stack = vec![g];
    while let Some(t) = stack.pop() {
        acc.push(t);
        match t {
            GChor::Seq(a, b) | GChor::Par(a, b) | GChor::Branch(a, b) => {
                // Right pushed first so the left child is visited first.
                stack.push(b);
                stack.push(a);
            }
            _ => {}
        }
    }
    acc
}

fn precedence(g: &GChor) -> u8 {
    match g {
        GChor::Branch(..) => 1,
        GChor::Par(..) => 2,
        GChor::Seq(..) => 3,
        GChor::Empty | GChor::Interaction { .. } => 4,
    }
}

/// Prints `g` in the concrete syntax; parsing the result yields a
/// structurally identical term.
pub fn render_gchor(g: &GChor) -> String {
    let mut out = String::new();
    render(g, &mut out);
    out
}

fn render(g: &GChor, out: &mut String) {
    match g {
        GChor::Empty => out.push('0'),
        GChor::Interaction { from, to, msg } => {
            out.push_str(&format!("{from}->{to}:{msg}"));
        }
        GChor::Seq(a, b) | GChor::Par(a, b) | GChor::Branch(a, b) => {
            let op = match g {
                GChor::Seq(..) => ";",
                GChor::Par(..) => "|",
                _ => "+",
            };
            let prec = precedence(g);
            render_child(a, prec, false, out);
            out.push_str(op);
            render_child(b, prec, true, out);
        }
    }
}

// The printer relies on left associativity: a right child at the same
// precedence level must keep its parentheses, a left child must not.
fn render_child(child: &GChor, parent_prec: u8, is_right: bool, out: &mut String) {
    let needs_parens =
        precedence(child) < parent_prec || (is_right && precedence(child) == parent_prec);
    if needs_parens {
        out.push('(');
        render(child, out);
        out.push(')');
    } else {
        render(child, out);
    }
}

/// DOT rendering of the syntax tree.
pub fn gchor_to_dot(g: &GChor) -> String {
    let mut out = String::from("digraph gchor {\n  node [shape=box];\n");
    let mut counter = 0usize;
    dot_node(g, &mut counter, &mut out);
    out.push_str("}\n");
    out
}

fn dot_node(g: &GChor, counter: &mut usize, out: &mut String) -> usize {
    let id = *counter;
    *counter += 1;
    let label = match g {
        GChor::Empty => "0".to_string(),
        GChor::Interaction { from, to, msg } => format!("{from}->{to}:{msg}"),
        GChor::Seq(..) => ";".to_string(),
        GChor::Par(..) => "|".to_string(),
        GChor::Branch(..) => "+".to_string(),
    };
    out.push_str(&format!("  n{id} [label=\"{}\"];\n", label.replace('"', "\\\"")));
    if let GChor::Seq(a, b) | GChor::Par(a, b) | GChor::Branch(a, b) = g {
        let left = dot_node(a, counter, out);
        out.push_str(&format!("  n{id} -> n{left};\n"));
        let right = dot_node(b, counter, out);
        out.push_str(&format!("  n{id} -> n{right};\n"));
    }
    id
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Participant {
        Participant::new(s)
    }

    #[test]
    fn parses_empty() {
        assert_eq!(parse_gchor("0").unwrap(), GChor::Empty);
    }

    #[test]
    fn parses_interaction() {
        let g = parse_gchor("A->B:m").unwrap();
        assert_eq!(
            g,
            GChor::Interaction {
                from: p("A"),
                to: p("B"),
                msg: Message::new("m")
            }
        );
    }

    #[test]
    fn seq_binds_tighter_than_par_than_choice() {
        let g = parse_gchor("A->B:m;B->C:x | C->D:y + D->A:z").unwrap();
        // ((A->B:m;B->C:x) | C->D:y) + D->A:z
        match g {
            GChor::Branch(l, r) => {
                assert!(matches!(*r, GChor::Interaction { .. }));
                match *l {
                    GChor::Par(sl, sr) => {
                        assert!(matches!(*sl, GChor::Seq(..)));
                        assert!(matches!(*sr, GChor::Interaction { .. }));
                    }
                    other => panic!("expected Par, got {other:?}"),
                }
            }
            other => panic!("expected Branch, got {other:?}"),
        }
    }

    #[test]
    fn operators_associate_left() {
        let g = parse_gchor("A->B:m;B->C:x;C->D:y").unwrap();
        match g {
            GChor::Seq(l, r) => {
                assert!(matches!(*l, GChor::Seq(..)));
                assert!(matches!(*r, GChor::Interaction { .. }));
            }
            other => panic!("expected Seq, got {other:?}"),
        }
    }

    #[test]
    fn parens_override_precedence() {
        let g = parse_gchor("A->B:m;(B->C:x + C->B:y)").unwrap();
        match g {
            GChor::Seq(_, r) => assert!(matches!(*r, GChor::Branch(..))),
            other => panic!("expected Seq, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_whitespace_are_skipped() {
        let text = "// online shop\nA->B:m ; // first step\n  B->C:x\n";
        assert!(parse_gchor(text).is_ok());
    }

    #[test]
    fn self_interaction_is_a_dedicated_error() {
        let err = parse_gchor("A->A:m").unwrap_err();
        match err {
            ParseError::SelfInteraction { participant, line, column } => {
                assert_eq!(participant, "A");
                assert_eq!((line, column), (1, 1));
            }
            other => panic!("expected SelfInteraction, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_and_column() {
        let err = parse_gchor("A->B:m;\nB->C").unwrap_err();
        match err {
            ParseError::UnexpectedToken { line, .. } => assert_eq!(line, 2),
            other => panic!("expected UnexpectedToken, got {other:?}"),
        }
        let err = parse_gchor("A->B:%").unwrap_err();
        assert!(matches!(err, ParseError::UnexpectedChar { found: '%', .. }));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        assert!(parse_gchor("0 0").is_err());
        assert!(parse_gchor("A->B:m)").is_err());
    }

    #[test]
    fn participants_are_collected() {
        let g = parse_gchor("A->B:m;(C->D:x + 0)").unwrap();
        let names: Vec<String> = participants(&g).into_iter().map(|q| q.0).collect();
        assert_eq!(names, ["A", "B", "C", "D"]);
    }

    #[test]
    fn subterms_are_preorder() {
        let g = parse_gchor("A->B:m + (C->D:x;0)").unwrap();
        let subs = subterms(&g);
        assert_eq!(subs.len(), 5);
        assert!(matches!(subs[0], GChor::Branch(..)));
        assert!(matches!(subs[1], GChor::Interaction { .. }));
        assert!(matches!(subs[2], GChor::Seq(..)));
        assert!(matches!(subs[3], GChor::Interaction { .. }));
        assert!(matches!(subs[4], GChor::Empty));
    }

    #[test]
    fn render_inserts_parens_only_where_needed() {
        let cases = [
            "A->B:m",
            "A->B:m;B->C:x;C->D:y",
            "A->B:m;(B->C:x;C->D:y)",
            "A->B:m;(B->C:x+C->B:y)",
            "(A->B:m+B->A:n)|C->D:x",
            "A->B:m|(C->D:x|D->C:y)",
            "0+0",
        ];
        for case in cases {
            let g = parse_gchor(case).unwrap();
            assert_eq!(render_gchor(&g), case, "render of {case}");
        }
    }

    #[test]
    fn render_parse_round_trips() {
        let g = parse_gchor("(A->B:m + A->B:n);(B->C:x | 0);C->A:done").unwrap();
        let again = parse_gchor(&render_gchor(&g)).unwrap();
        assert_eq!(g, again);
    }
}
