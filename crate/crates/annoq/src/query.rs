//! Textual query language: parser, AST, pretty-printer, and evaluator.
//!
//! The surface syntax is function-call composition over the thirteen region
//! operators, e.g.
//!
//! ```text
//! ContainedIn(FilterProperty(genia, "orig", "heart"), FilterType(genia, "sentence"))
//! ```
//!
//! Grammar: `expr := Ident "(" arg ("," arg)* ")" | Ident` with
//! `arg := expr | quoted-string | integer`. Operator names are the thirteen
//! operator spellings, case-sensitive; any other bare identifier references
//! a dataset bound in the evaluation environment. Strings are double-quoted
//! with backslash escapes for `"` and `\` only; integers are positive
//! decimals and fit only the `cnt`/`dist` parameters; whitespace between
//! tokens is insignificant. Errors carry the byte offset they occurred at.
//!
//! Regex patterns are compiled during parsing, so an invalid pattern is
//! rejected before any record is scanned and evaluation never re-compiles.
//!
//! There are no variables or let-bindings: multi-statement workflows write
//! intermediate datasets to disk and read them back as bindings.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use regex::Regex;

use crate::algebra::{self, AnchoredMatches};
use crate::model::AnnotationDataset;

/// Named datasets a query can reference. Names are unique; binding a name
/// again replaces the previous dataset. Iteration order is the name order,
/// so everything built from an environment is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BindingEnv {
    bindings: BTreeMap<String, AnnotationDataset>,
}

impl BindingEnv {
    pub fn new() -> Self {
        BindingEnv::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, dataset: AnnotationDataset) {
        self.bindings.insert(name.into(), dataset);
    }

    pub fn get(&self, name: &str) -> Option<&AnnotationDataset> {
        self.bindings.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AnnotationDataset)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

/// A regex argument, compiled once at parse time. Equality is on the pattern
/// text: two patterns spelled the same way match the same values.
#[derive(Debug, Clone)]
pub struct CompiledPattern {
    pattern: String,
    regex: Regex,
}

impl CompiledPattern {
    pub fn new(pattern: &str) -> Result<Self, regex::Error> {
        Ok(CompiledPattern {
            pattern: pattern.to_string(),
            regex: Regex::new(pattern)?,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.pattern
    }

    pub fn regex(&self) -> &Regex {
        &self.regex
    }
}

impl PartialEq for CompiledPattern {
    fn eq(&self, other: &Self) -> bool {
        self.pattern == other.pattern
    }
}

impl Eq for CompiledPattern {}

/// A parsed query: an operator tree over dataset references. The offset is
/// the byte position of the node's first token in the source text, used to
/// anchor evaluation errors; it does not participate in equality.
#[derive(Debug, Clone)]
pub struct QueryExpr {
    pub node: QueryNode,
    pub offset: usize,
}

impl PartialEq for QueryExpr {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

impl Eq for QueryExpr {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryNode {
    /// Bare identifier: a dataset bound in the evaluation environment.
    Dataset(String),
    FilterSet {
        input: Box<QueryExpr>,
        set: String,
    },
    FilterType {
        input: Box<QueryExpr>,
        ty: String,
    },
    FilterProperty {
        input: Box<QueryExpr>,
        name: String,
        value: String,
    },
    RegexProperty {
        input: Box<QueryExpr>,
        name: String,
        pattern: CompiledPattern,
    },
    Contains {
        subject: Box<QueryExpr>,
        witness: Box<QueryExpr>,
    },
    ContainedIn {
        subject: Box<QueryExpr>,
        witness: Box<QueryExpr>,
    },
    Before {
        subject: Box<QueryExpr>,
        witness: Box<QueryExpr>,
    },
    After {
        subject: Box<QueryExpr>,
        witness: Box<QueryExpr>,
    },
    /// `Between(C, A, B)`: annotations of C after some A and before some B.
    Between {
        subject: Box<QueryExpr>,
        left: Box<QueryExpr>,
        right: Box<QueryExpr>,
    },
    Sequence {
        first: Box<QueryExpr>,
        second: Box<QueryExpr>,
        dist: Option<u64>,
    },
    MatchProperty {
        subject: Box<QueryExpr>,
        witness: Box<QueryExpr>,
        name: String,
    },
    Preceding {
        matches: Box<QueryExpr>,
        anchors: Box<QueryExpr>,
        cnt: Option<u64>,
    },
    Following {
        matches: Box<QueryExpr>,
        anchors: Box<QueryExpr>,
        cnt: Option<u64>,
    },
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for ch in text.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(ch),
        }
    }
    out.push('"');
    out
}

/// Programmatic constructors, for building queries without going through
/// the parser. Constructed nodes carry offset 0.
impl QueryExpr {
    fn of(node: QueryNode) -> QueryExpr {
        QueryExpr { node, offset: 0 }
    }

    /// Reference to a dataset bound in the evaluation environment.
    pub fn dataset(name: impl Into<String>) -> QueryExpr {
        QueryExpr::of(QueryNode::Dataset(name.into()))
    }

    pub fn filter_set(input: QueryExpr, set: impl Into<String>) -> QueryExpr {
        QueryExpr::of(QueryNode::FilterSet {
            input: Box::new(input),
            set: set.into(),
        })
    }

    pub fn filter_type(input: QueryExpr, ty: impl Into<String>) -> QueryExpr {
        QueryExpr::of(QueryNode::FilterType {
            input: Box::new(input),
            ty: ty.into(),
        })
    }

    pub fn filter_property(
        input: QueryExpr,
        name: impl Into<String>,
        value: impl Into<String>,
    ) -> QueryExpr {
        QueryExpr::of(QueryNode::FilterProperty {
            input: Box::new(input),
            name: name.into(),
            value: value.into(),
        })
    }

    /// Fails when the pattern does not compile, mirroring the parser.
    pub fn regex_property(
        input: QueryExpr,
        name: impl Into<String>,
        pattern: &str,
    ) -> Result<QueryExpr, regex::Error> {
        Ok(QueryExpr::of(QueryNode::RegexProperty {
            input: Box::new(input),
            name: name.into(),
            pattern: CompiledPattern::new(pattern)?,
        }))
    }

    pub fn contains(subject: QueryExpr, witness: QueryExpr) -> QueryExpr {
        QueryExpr::of(QueryNode::Contains {
            subject: Box::new(subject),
            witness: Box::new(witness),
        })
    }

    pub fn contained_in(subject: QueryExpr, witness: QueryExpr) -> QueryExpr {
        QueryExpr::of(QueryNode::ContainedIn {
            subject: Box::new(subject),
            witness: Box::new(witness),
        })
    }

    pub fn before(subject: QueryExpr, witness: QueryExpr) -> QueryExpr {
        QueryExpr::of(QueryNode::Before {
            subject: Box::new(subject),
            witness: Box::new(witness),
        })
    }

    pub fn after(subject: QueryExpr, witness: QueryExpr) -> QueryExpr {
        QueryExpr::of(QueryNode::After {
            subject: Box::new(subject),
            witness: Box::new(witness),
        })
    }

    pub fn between(subject: QueryExpr, left: QueryExpr, right: QueryExpr) -> QueryExpr {
        QueryExpr::of(QueryNode::Between {
            subject: Box::new(subject),
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    pub fn sequence(first: QueryExpr, second: QueryExpr, dist: Option<u64>) -> QueryExpr {
        QueryExpr::of(QueryNode::Sequence {
            first: Box::new(first),
            second: Box::new(second),
            dist,
        })
    }

    pub fn match_property(
        subject: QueryExpr,
        witness: QueryExpr,
        name: impl Into<String>,
    ) -> QueryExpr {
        QueryExpr::of(QueryNode::MatchProperty {
            subject: Box::new(subject),
            witness: Box::new(witness),
            name: name.into(),
        })
    }

    pub fn preceding(matches: QueryExpr, anchors: QueryExpr, cnt: Option<u64>) -> QueryExpr {
        QueryExpr::of(QueryNode::Preceding {
            matches: Box::new(matches),
            anchors: Box::new(anchors),
            cnt,
        })
    }

    pub fn following(matches: QueryExpr, anchors: QueryExpr, cnt: Option<u64>) -> QueryExpr {
        QueryExpr::of(QueryNode::Following {
            matches: Box::new(matches),
            anchors: Box::new(anchors),
            cnt,
        })
    }
}

impl fmt::Display for QueryExpr {
    /// Prints the canonical textual form; parsing it back yields an equal
    /// AST.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use QueryNode::*;
        match &self.node {
            Dataset(name) => f.write_str(name),
            FilterSet { input, set } => write!(f, "FilterSet({input}, {})", quote(set)),
            FilterType { input, ty } => write!(f, "FilterType({input}, {})", quote(ty)),
            FilterProperty { input, name, value } => {
                write!(f, "FilterProperty({input}, {}, {})", quote(name), quote(value))
            }
            RegexProperty {
                input,
                name,
                pattern,
            } => write!(
                f,
                "RegexProperty({input}, {}, {})",
                quote(name),
                quote(pattern.as_str())
            ),
            Contains { subject, witness } => write!(f, "Contains({subject}, {witness})"),
            ContainedIn { subject, witness } => write!(f, "ContainedIn({subject}, {witness})"),
            Before { subject, witness } => write!(f, "Before({subject}, {witness})"),
            After { subject, witness } => write!(f, "After({subject}, {witness})"),
            Between {
                subject,
                left,
                right,
            } => write!(f, "Between({subject}, {left}, {right})"),
            Sequence {
                first,
                second,
                dist: Some(d),
            } => write!(f, "Sequence({first}, {second}, {d})"),
            Sequence {
                first,
                second,
                dist: None,
            } => write!(f, "Sequence({first}, {second})"),
            MatchProperty {
                subject,
                witness,
                name,
            } => write!(f, "MatchProperty({subject}, {witness}, {})", quote(name)),
            Preceding {
                matches,
                anchors,
                cnt: Some(c),
            } => write!(f, "Preceding({matches}, {anchors}, {c})"),
            Preceding {
                matches,
                anchors,
                cnt: None,
            } => write!(f, "Preceding({matches}, {anchors})"),
            Following {
                matches,
                anchors,
                cnt: Some(c),
            } => write!(f, "Following({matches}, {anchors}, {c})"),
            Following {
                matches,
                anchors,
                cnt: None,
            } => write!(f, "Following({matches}, {anchors})"),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

fn parse_error(offset: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        offset,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(u64),
    LParen,
    RParen,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(name) => format!("identifier \"{name}\""),
            Tok::Str(_) => "string".to_string(),
            Tok::Int(value) => format!("integer {value}"),
            Tok::LParen => "\"(\"".to_string(),
            Tok::RParen => "\")\"".to_string(),
            Tok::Comma => "\",\"".to_string(),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let offset = self.pos;
        if self.pos >= bytes.len() {
            return Ok(Token {
                tok: Tok::Eof,
                offset,
            });
        }
        let tok = match bytes[self.pos] {
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'"' => {
                self.pos += 1;
                let mut value = String::new();
                loop {
                    let Some(&byte) = bytes.get(self.pos) else {
                        return Err(parse_error(offset, "unterminated string"));
                    };
                    match byte {
                        b'"' => {
                            self.pos += 1;
                            break;
                        }
                        b'\\' => match bytes.get(self.pos + 1) {
                            Some(b'"') => {
                                value.push('"');
                                self.pos += 2;
                            }
                            Some(b'\\') => {
                                value.push('\\');
                                self.pos += 2;
                            }
                            _ => {
                                return Err(parse_error(
                                    self.pos,
                                    "invalid escape (only \\\" and \\\\ are recognized)",
                                ));
                            }
                        },
                        _ => {
                            // Consume one full UTF-8 character.
                            let rest = &self.src[self.pos..];
                            let ch = rest.chars().next().expect("in-bounds position");
                            value.push(ch);
                            self.pos += ch.len_utf8();
                        }
                    }
                }
                Tok::Str(value)
            }
            b'0'..=b'9' => {
                let start = self.pos;
                while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let digits = &self.src[start..self.pos];
                let value = digits
                    .parse::<u64>()
                    .map_err(|_| parse_error(offset, format!("integer {digits} is too large")))?;
                Tok::Int(value)
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = self.pos;
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            other => {
                return Err(parse_error(
                    offset,
                    format!("unexpected character {:?}", other as char),
                ));
            }
        };
        Ok(Token { tok, offset })
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

const OPERATOR_NAMES: [&str; 13] = [
    "FilterSet",
    "FilterType",
    "FilterProperty",
    "RegexProperty",
    "Contains",
    "ContainedIn",
    "Before",
    "After",
    "Between",
    "Sequence",
    "MatchProperty",
    "Preceding",
    "Following",
];

/// Parses a query expression, consuming the whole input.
pub fn parse(text: &str) -> Result<QueryExpr, ParseError> {
    let mut parser = Parser {
        lexer: Lexer::new(text),
        peeked: None,
    };
    let expr = parser.parse_expr()?;
    let trailing = parser.next()?;
    if trailing.tok != Tok::Eof {
        return Err(parse_error(
            trailing.offset,
            format!("expected end of input, found {}", trailing.tok.describe()),
        ));
    }
    Ok(expr)
}

/// One parsed operator argument, before arity/type checking.
enum Arg {
    Expr(QueryExpr),
    Str(String, usize),
    Int(u64, usize),
}

impl Arg {
    fn describe(&self) -> &'static str {
        match self {
            Arg::Expr(_) => "an expression",
            Arg::Str(..) => "a string",
            Arg::Int(..) => "an integer",
        }
    }

    fn offset(&self) -> usize {
        match self {
            Arg::Expr(e) => e.offset,
            Arg::Str(_, offset) | Arg::Int(_, offset) => *offset,
        }
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<Token>,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<Token, ParseError> {
        match self.peeked.take() {
            Some(token) => Ok(token),
            None => self.lexer.next_token(),
        }
    }

    fn peek(&mut self) -> Result<&Token, ParseError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next_token()?);
        }
        Ok(self.peeked.as_ref().expect("just filled"))
    }

    fn parse_expr(&mut self) -> Result<QueryExpr, ParseError> {
        let token = self.next()?;
        let Tok::Ident(name) = token.tok else {
            return Err(parse_error(
                token.offset,
                format!("expected an expression, found {}", token.tok.describe()),
            ));
        };
        let offset = token.offset;
        if self.peek()?.tok != Tok::LParen {
            if OPERATOR_NAMES.contains(&name.as_str()) {
                return Err(parse_error(
                    offset,
                    format!("operator {name} requires an argument list"),
                ));
            }
            return Ok(QueryExpr {
                node: QueryNode::Dataset(name),
                offset,
            });
        }
        if !OPERATOR_NAMES.contains(&name.as_str()) {
            return Err(parse_error(offset, format!("unknown operator {name}")));
        }
        self.next()?; // consume "("
        let mut args = Vec::new();
        loop {
            args.push(self.parse_arg()?);
            let token = self.next()?;
            match token.tok {
                Tok::Comma => continue,
                Tok::RParen => break,
                other => {
                    return Err(parse_error(
                        token.offset,
                        format!("expected \",\" or \")\", found {}", other.describe()),
                    ));
                }
            }
        }
        let node = build_node(&name, offset, args)?;
        Ok(QueryExpr { node, offset })
    }

    fn parse_arg(&mut self) -> Result<Arg, ParseError> {
        let token = self.peek()?;
        match &token.tok {
            Tok::Ident(_) => Ok(Arg::Expr(self.parse_expr()?)),
            Tok::Str(_) => {
                let token = self.next()?;
                let Tok::Str(value) = token.tok else {
                    unreachable!()
                };
                Ok(Arg::Str(value, token.offset))
            }
            Tok::Int(_) => {
                let token = self.next()?;
                let Tok::Int(value) = token.tok else {
                    unreachable!()
                };
                Ok(Arg::Int(value, token.offset))
            }
            other => Err(parse_error(
                token.offset,
                format!(
                    "expected expression, string, or integer, found {}",
                    other.describe()
                ),
            )),
        }
    }
}

/// Checks arity and argument kinds for one operator call and assembles the
/// node. `offset` is the operator name's position, used for arity errors;
/// kind errors point at the offending argument.
fn build_node(name: &str, offset: usize, args: Vec<Arg>) -> Result<QueryNode, ParseError> {
    let found = args.len();
    let arity = move |signature: &str, accepted: &[usize]| -> Result<(), ParseError> {
        if accepted.contains(&found) {
            Ok(())
        } else {
            Err(parse_error(
                offset,
                format!(
                    "{name} expects {signature}, found {found} argument{}",
                    if found == 1 { "" } else { "s" }
                ),
            ))
        }
    };
    let expr = |arg: Arg, position: usize| -> Result<Box<QueryExpr>, ParseError> {
        match arg {
            Arg::Expr(e) => Ok(Box::new(e)),
            other => Err(parse_error(
                other.offset(),
                format!(
                    "argument {position} of {name} must be an expression, found {}",
                    other.describe()
                ),
            )),
        }
    };
    let string = |arg: Arg, position: usize| -> Result<String, ParseError> {
        match arg {
            Arg::Str(s, _) => Ok(s),
            other => Err(parse_error(
                other.offset(),
                format!(
                    "argument {position} of {name} must be a quoted string, found {}",
                    other.describe()
                ),
            )),
        }
    };
    let positive_int = |arg: Arg, position: usize, what: &str| -> Result<u64, ParseError> {
        match arg {
            Arg::Int(0, offset) => Err(parse_error(offset, format!("{what} must be positive"))),
            Arg::Int(value, _) => Ok(value),
            other => Err(parse_error(
                other.offset(),
                format!(
                    "argument {position} of {name} must be a positive integer ({what}), found {}",
                    other.describe()
                ),
            )),
        }
    };

    let mut args = args;
    Ok(match name {
        "FilterSet" | "FilterType" => {
            arity("(expression, string)", &[2])?;
            let text = string(args.pop().expect("2 args"), 2)?;
            let input = expr(args.pop().expect("2 args"), 1)?;
            if name == "FilterSet" {
                QueryNode::FilterSet { input, set: text }
            } else {
                QueryNode::FilterType { input, ty: text }
            }
        }
        "FilterProperty" | "RegexProperty" => {
            arity("(expression, string, string)", &[3])?;
            let third = args.pop().expect("3 args");
            let third_offset = third.offset();
            let value = string(third, 3)?;
            let prop = string(args.pop().expect("3 args"), 2)?;
            let input = expr(args.pop().expect("3 args"), 1)?;
            if name == "FilterProperty" {
                QueryNode::FilterProperty {
                    input,
                    name: prop,
                    value,
                }
            } else {
                let pattern = CompiledPattern::new(&value).map_err(|e| {
                    parse_error(third_offset, format!("invalid regex pattern: {e}"))
                })?;
                QueryNode::RegexProperty {
                    input,
                    name: prop,
                    pattern,
                }
            }
        }
        "Contains" | "ContainedIn" | "Before" | "After" => {
            arity("(expression, expression)", &[2])?;
            let witness = expr(args.pop().expect("2 args"), 2)?;
            let subject = expr(args.pop().expect("2 args"), 1)?;
            match name {
                "Contains" => QueryNode::Contains { subject, witness },
                "ContainedIn" => QueryNode::ContainedIn { subject, witness },
                "Before" => QueryNode::Before { subject, witness },
                _ => QueryNode::After { subject, witness },
            }
        }
        "Between" => {
            arity("(expression, expression, expression)", &[3])?;
            let right = expr(args.pop().expect("3 args"), 3)?;
            let left = expr(args.pop().expect("3 args"), 2)?;
            let subject = expr(args.pop().expect("3 args"), 1)?;
            QueryNode::Between {
                subject,
                left,
                right,
            }
        }
        "Sequence" => {
            arity("(expression, expression[, distance])", &[2, 3])?;
            let dist = if args.len() == 3 {
                Some(positive_int(args.pop().expect("3 args"), 3, "distance")?)
            } else {
                None
            };
            let second = expr(args.pop().expect("2+ args"), 2)?;
            let first = expr(args.pop().expect("2+ args"), 1)?;
            QueryNode::Sequence {
                first,
                second,
                dist,
            }
        }
        "MatchProperty" => {
            arity("(expression, expression, string)", &[3])?;
            let prop = string(args.pop().expect("3 args"), 3)?;
            let witness = expr(args.pop().expect("3 args"), 2)?;
            let subject = expr(args.pop().expect("3 args"), 1)?;
            QueryNode::MatchProperty {
                subject,
                witness,
                name: prop,
            }
        }
        "Preceding" | "Following" => {
            arity("(expression, expression[, count])", &[2, 3])?;
            let cnt = if args.len() == 3 {
                Some(positive_int(args.pop().expect("3 args"), 3, "count")?)
            } else {
                None
            };
            let anchors = expr(args.pop().expect("2+ args"), 2)?;
            let matches = expr(args.pop().expect("2+ args"), 1)?;
            if name == "Preceding" {
                QueryNode::Preceding {
                    matches,
                    anchors,
                    cnt,
                }
            } else {
                QueryNode::Following {
                    matches,
                    anchors,
                    cnt,
                }
            }
        }
        _ => unreachable!("operator list is checked before dispatch"),
    })
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("dataset \"{name}\" is not bound (at byte {offset})")]
    UnboundDataset { name: String, offset: usize },
    #[error(
        "{op} produces anchored matches, not a dataset, and may only appear \
         at the root of a query (at byte {offset})"
    )]
    NestedAnchorOp { op: &'static str, offset: usize },
}

/// What a query produces: most operators a dataset, the anchored-neighbour
/// operators one match list per anchor.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryResult {
    Dataset(AnnotationDataset),
    Anchored(Vec<AnchoredMatches>),
}

impl QueryResult {
    /// Number of result rows: records for a dataset, anchors for anchored
    /// matches.
    pub fn len(&self) -> usize {
        match self {
            QueryResult::Dataset(d) => d.len(),
            QueryResult::Anchored(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evaluates a query against the bound datasets. The result equals the
/// hand-composed chain of region-algebra calls; the anchored-neighbour
/// operators are legal only at the root.
pub fn evaluate(q: &QueryExpr, env: &BindingEnv) -> Result<QueryResult, EvalError> {
    match &q.node {
        QueryNode::Preceding {
            matches,
            anchors,
            cnt,
        } => {
            let m = eval_dataset(matches, env)?;
            let a = eval_dataset(anchors, env)?;
            Ok(QueryResult::Anchored(algebra::preceding(
                &m,
                &a,
                cnt_or_default(*cnt),
            )))
        }
        QueryNode::Following {
            matches,
            anchors,
            cnt,
        } => {
            let m = eval_dataset(matches, env)?;
            let a = eval_dataset(anchors, env)?;
            Ok(QueryResult::Anchored(algebra::following(
                &m,
                &a,
                cnt_or_default(*cnt),
            )))
        }
        _ => Ok(QueryResult::Dataset(eval_dataset(q, env)?.into_owned())),
    }
}

fn cnt_or_default(cnt: Option<u64>) -> usize {
    cnt.map(|c| c as usize).unwrap_or(algebra::DEFAULT_CNT)
}

/// Evaluates a sub-expression that must yield a dataset. Dataset references
/// borrow from the environment so identity sub-queries cost nothing.
fn eval_dataset<'e>(
    q: &QueryExpr,
    env: &'e BindingEnv,
) -> Result<Cow<'e, AnnotationDataset>, EvalError> {
    use QueryNode::*;
    Ok(match &q.node {
        Dataset(name) => Cow::Borrowed(env.get(name).ok_or_else(|| EvalError::UnboundDataset {
            name: name.clone(),
            offset: q.offset,
        })?),
        FilterSet { input, set } => {
            let input = eval_dataset(input, env)?;
            Cow::Owned(algebra::filter_set(&input, set))
        }
        FilterType { input, ty } => {
            let input = eval_dataset(input, env)?;
            Cow::Owned(algebra::filter_type(&input, ty))
        }
        FilterProperty { input, name, value } => {
            let input = eval_dataset(input, env)?;
            Cow::Owned(algebra::filter_property(&input, name, value))
        }
        RegexProperty {
            input,
            name,
            pattern,
        } => {
            let input = eval_dataset(input, env)?;
            Cow::Owned(algebra::regex_property(&input, name, pattern.regex()))
        }
        Contains { subject, witness } => {
            let subject = eval_dataset(subject, env)?;
            let witness = eval_dataset(witness, env)?;
            Cow::Owned(algebra::contains(&subject, &witness))
        }
        ContainedIn { subject, witness } => {
            let subject = eval_dataset(subject, env)?;
            let witness = eval_dataset(witness, env)?;
            Cow::Owned(algebra::contained_in(&subject, &witness))
        }
        Before { subject, witness } => {
            let subject = eval_dataset(subject, env)?;
            let witness = eval_dataset(witness, env)?;
            Cow::Owned(algebra::before(&subject, &witness))
        }
        After { subject, witness } => {
            let subject = eval_dataset(subject, env)?;
            let witness = eval_dataset(witness, env)?;
            Cow::Owned(algebra::after(&subject, &witness))
        }
        Between {
            subject,
            left,
            right,
        } => {
            let subject = eval_dataset(subject, env)?;
            let left = eval_dataset(left, env)?;
            let right = eval_dataset(right, env)?;
            Cow::Owned(algebra::between(&subject, &left, &right))
        }
        Sequence {
            first,
            second,
            dist,
        } => {
            let first = eval_dataset(first, env)?;
            let second = eval_dataset(second, env)?;
            Cow::Owned(algebra::sequence(&first, &second, *dist))
        }
        MatchProperty {
            subject,
            witness,
            name,
        } => {
            let subject = eval_dataset(subject, env)?;
            let witness = eval_dataset(witness, env)?;
            Cow::Owned(algebra::match_property(&subject, &witness, name))
        }
        Preceding { .. } => {
            return Err(EvalError::NestedAnchorOp {
                op: "Preceding",
                offset: q.offset,
            });
        }
        Following { .. } => {
            return Err(EvalError::NestedAnchorOp {
                op: "Following",
                offset: q.offset,
            });
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Annotation;

    fn sample_env() -> BindingEnv {
        let om = AnnotationDataset::from_records(vec![
            Annotation::new("d1", "om", "ce:sentence", 0, 30, 1),
            Annotation::new("d1", "om", "ce:sentence", 32, 60, 2),
            Annotation::new("d1", "om", "ce:abstract", 0, 30, 3),
        ])
        .unwrap();
        let genia = AnnotationDataset::from_records(vec![
            Annotation::new("d1", "genia", "sentence", 0, 30, 1),
            Annotation::new("d1", "genia", "sentence", 32, 60, 2),
            Annotation::new("d1", "genia", "word", 0, 5, 3).with_property("orig", "heart"),
            Annotation::new("d1", "genia", "word", 6, 10, 4).with_property("orig", "the"),
            Annotation::new("d1", "genia", "word", 33, 38, 5).with_property("orig", "heart"),
        ])
        .unwrap();
        let mut env = BindingEnv::new();
        env.bind("om", om);
        env.bind("genia", genia);
        env
    }

    #[test]
    fn parses_a_filter_call() {
        let q = parse("FilterType(om, \"ce:abstract\")").unwrap();
        match &q.node {
            QueryNode::FilterType { input, ty } => {
                assert_eq!(input.node, QueryNode::Dataset("om".into()));
                assert_eq!(ty, "ce:abstract");
            }
            other => panic!("unexpected node {other:?}"),
        }
        assert_eq!(q.offset, 0);
    }

    #[test]
    fn arity_mismatch_is_an_error_at_the_operator() {
        let err = parse("FilterType(om)").unwrap_err();
        assert_eq!(err.offset, 0);
        assert!(err.message.contains("FilterType expects"), "{}", err.message);
    }

    #[test]
    fn argument_kind_mismatch_points_at_the_argument() {
        let err = parse("FilterType(om, 5)").unwrap_err();
        assert_eq!(err.offset, 15);
        assert!(err.message.contains("quoted string"), "{}", err.message);
        let err = parse("Contains(om, \"x\")").unwrap_err();
        assert!(err.message.contains("must be an expression"), "{}", err.message);
    }

    #[test]
    fn unknown_operator_and_reserved_bare_name() {
        let err = parse("Blend(om, genia)").unwrap_err();
        assert!(err.message.contains("unknown operator Blend"), "{}", err.message);
        let err = parse("Contains").unwrap_err();
        assert!(err.message.contains("requires an argument list"), "{}", err.message);
    }

    #[test]
    fn syntax_errors_carry_byte_positions() {
        let err = parse("FilterType(om, \"x\"").unwrap_err();
        assert_eq!(err.offset, 18);
        let err = parse("FilterType(om, \"x\"))").unwrap_err();
        assert_eq!(err.offset, 19);
        let err = parse("FilterType(om, \"x").unwrap_err();
        assert!(err.message.contains("unterminated"), "{}", err.message);
        let err = parse("FilterType(om, \"x\\n\")").unwrap_err();
        assert!(err.message.contains("escape"), "{}", err.message);
        let err = parse("om genia").unwrap_err();
        assert!(err.message.contains("expected end of input"), "{}", err.message);
    }

    #[test]
    fn invalid_regex_is_rejected_at_parse_time() {
        let err = parse("RegexProperty(genia, \"orig\", \"x{\")").unwrap_err();
        assert_eq!(err.offset, 29);
        assert!(err.message.contains("invalid regex"), "{}", err.message);
        assert!(parse("RegexProperty(genia, \"orig\", \"^he*\")").is_ok());
        assert!(parse("RegexProperty(genia, \"orig\", \"^adrenoc*\")").is_ok());
    }

    #[test]
    fn counts_and_distances_must_be_positive_integers() {
        assert!(parse("Preceding(genia, om, 3)").is_ok());
        let err = parse("Preceding(genia, om, 0)").unwrap_err();
        assert!(err.message.contains("must be positive"), "{}", err.message);
        let err = parse("Sequence(genia, om, \"5\")").unwrap_err();
        assert!(err.message.contains("positive integer"), "{}", err.message);
    }

    #[test]
    fn whitespace_between_tokens_is_insignificant() {
        let compact = parse("Between(om,genia,om)").unwrap();
        let spaced = parse("  Between ( om ,\n genia\t, om )  ").unwrap();
        assert_eq!(compact, spaced);
    }

    #[test]
    fn string_escapes_round_trip() {
        let q = parse("FilterProperty(genia, \"a\\\"b\", \"c\\\\d\")").unwrap();
        match &q.node {
            QueryNode::FilterProperty { name, value, .. } => {
                assert_eq!(name, "a\"b");
                assert_eq!(value, "c\\d");
            }
            other => panic!("unexpected node {other:?}"),
        }
        let reparsed = parse(&q.to_string()).unwrap();
        assert_eq!(q, reparsed);
    }

    #[test]
    fn print_parse_round_trip_for_every_operator() {
        let queries = [
            "om",
            "FilterSet(x, \"om\")",
            "FilterType(om, \"ce:abstract\")",
            "FilterProperty(genia, \"orig\", \"heart\")",
            "RegexProperty(genia, \"orig\", \"^he*\")",
            "Contains(FilterType(om, \"ce:sentence\"), FilterProperty(genia, \"orig\", \"heart\"))",
            "ContainedIn(FilterProperty(genia, \"orig\", \"heart\"), FilterType(genia, \"sentence\"))",
            "Before(a, b)",
            "After(a, b)",
            "Between(c, a, b)",
            "Sequence(a, b)",
            "Sequence(a, b, 10)",
            "MatchProperty(a, b, \"orig\")",
            "Preceding(a, b)",
            "Preceding(a, b, 5)",
            "Following(a, b)",
            "Following(a, b, 2)",
        ];
        for text in queries {
            let ast = parse(text).unwrap();
            let printed = ast.to_string();
            assert_eq!(printed, text, "canonical form differs");
            assert_eq!(parse(&printed).unwrap(), ast);
        }
    }

    #[test]
    fn identity_query_returns_the_bound_dataset() {
        let env = sample_env();
        let q = parse("genia").unwrap();
        match evaluate(&q, &env).unwrap() {
            QueryResult::Dataset(d) => assert_eq!(&d, env.get("genia").unwrap()),
            other => panic!("unexpected result {other:?}"),
        }
    }

    #[test]
    fn evaluation_matches_direct_composition() {
        let env = sample_env();
        let q = parse(
            "ContainedIn(FilterProperty(genia, \"orig\", \"heart\"), FilterType(genia, \"sentence\"))",
        )
        .unwrap();
        let direct = algebra::contained_in(
            &algebra::filter_property(env.get("genia").unwrap(), "orig", "heart"),
            &algebra::filter_type(env.get("genia").unwrap(), "sentence"),
        );
        match evaluate(&q, &env).unwrap() {
            QueryResult::Dataset(d) => {
                assert_eq!(d.len(), 2);
                assert_eq!(d, direct);
            }
            other => panic!("unexpected result {other:?}"),
        }
    }

    #[test]
    fn anchored_operators_work_at_the_root_only() {
        let env = sample_env();
        let q = parse("Following(FilterType(genia, \"word\"), FilterProperty(genia, \"orig\", \"heart\"), 2)")
            .unwrap();
        match evaluate(&q, &env).unwrap() {
            QueryResult::Anchored(anchored) => {
                assert_eq!(anchored.len(), 2);
                assert_eq!(anchored[0].matches.len(), 2);
            }
            other => panic!("unexpected result {other:?}"),
        }
        let nested = parse("Contains(Preceding(genia, om), genia)").unwrap();
        match evaluate(&nested, &env) {
            Err(EvalError::NestedAnchorOp { op, offset }) => {
                assert_eq!(op, "Preceding");
                assert_eq!(offset, 9);
            }
            other => panic!("expected NestedAnchorOp, got {other:?}"),
        }
    }

    #[test]
    fn unbound_dataset_is_an_error_with_position() {
        let env = sample_env();
        let q = parse("FilterType(nosuch, \"word\")").unwrap();
        match evaluate(&q, &env) {
            Err(EvalError::UnboundDataset { name, offset }) => {
                assert_eq!(name, "nosuch");
                assert_eq!(offset, 11);
            }
            other => panic!("expected UnboundDataset, got {other:?}"),
        }
    }
}
