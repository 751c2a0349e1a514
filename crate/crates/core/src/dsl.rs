//! Textual surface language for thinging-machine models.
//!
//! A `.tm` document holds the static model (thimacs, stages, flows, triggers,
//! joins) together with the dynamic declarations (events, negative events and
//! chronology). [`parse`] builds both; [`print`] writes the canonical form so
//! that `parse(print(parse(src)))` equals `parse(src)`.
//!
//! ```text
//! thimac Customer existing {
//!   create @car.1;
//!   release;
//!   transfer out;
//! }
//! flow @car.1 -> Customer.release;
//! event E1 "The customer sends an order" region { car.1 Customer.release[0] }
//! negative R1 of E1
//! chron E1 -> E2 when "available";
//! chron join (E13, E14, E15?) -> E16;
//! ```
//!
//! Thimacs are created in pre-order with each thimac's stages ahead of its
//! children, whatever the interleaving in the source, which keeps identifiers
//! canonical across a print/parse round trip.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::diag::{codes, Diagnostic, Diagnostics, Location};
use crate::model::{
    ActionKind, ArcKind, ModelError, StageId, StaticModel, ThimacId, ThingClassification,
    TransferDirection,
};
use crate::render::{Link, SimplifiedModel};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub name: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        SourceFile {
            name: name.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EventKind {
    EntityLike,
    #[default]
    ProcessLike,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDecl {
    pub name: String,
    pub description: String,
    /// Canonical stage references (labels, or paths for unlabeled stages).
    pub region: Vec<String>,
    pub duration: Option<u64>,
    pub extended: bool,
    pub kind: EventKind,
    /// Imported from an instantaneous source construct (e.g. a BPMN event).
    pub instantaneous: bool,
    pub measure: Option<String>,
}

impl EventDecl {
    pub fn new(name: &str, description: &str, region: &[&str]) -> Self {
        EventDecl {
            name: name.to_string(),
            description: description.to_string(),
            region: region.iter().map(|s| s.to_string()).collect(),
            duration: None,
            extended: false,
            kind: EventKind::ProcessLike,
            instantaneous: false,
            measure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeDecl {
    pub name: String,
    pub paired: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinInputDecl {
    pub event: String,
    /// Optional inputs only count when they can still occur for an instance.
    pub optional: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChronDecl {
    Edge {
        from: String,
        to: String,
        guard: Option<String>,
    },
    Join {
        inputs: Vec<JoinInputDecl>,
        output: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DynamicDecls {
    pub events: Vec<EventDecl>,
    pub negatives: Vec<NegativeDecl>,
    pub chronology: Vec<ChronDecl>,
}

impl DynamicDecls {
    pub fn event(&self, name: &str) -> Option<&EventDecl> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty() && self.negatives.is_empty() && self.chronology.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    loc: Location,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

fn lex(text: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let loc = Location { line, col };
        if c.is_whitespace() {
            bump!();
        } else if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                bump!();
            }
        } else if is_word_char(c) {
            let mut w = String::new();
            while let Some(&c) = chars.peek() {
                if !is_word_char(c) {
                    break;
                }
                w.push(c);
                bump!();
            }
            out.push(Token {
                tok: Tok::Word(w),
                loc,
            });
        } else if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match bump!() {
                    None => {
                        return Err(
                            Diagnostic::error(codes::E_SYNTAX, "unterminated string").at(loc)
                        )
                    }
                    Some('"') => break,
                    Some('\\') => match bump!() {
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some('"') => s.push('"'),
                        Some('\\') => s.push('\\'),
                        _ => {
                            return Err(Diagnostic::error(
                                codes::E_SYNTAX,
                                "invalid escape in string",
                            )
                            .at(loc))
                        }
                    },
                    Some(c) => s.push(c),
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                loc,
            });
        } else {
            bump!();
            let sym = match c {
                '{' => "{",
                '}' => "}",
                '(' => "(",
                ')' => ")",
                '[' => "[",
                ']' => "]",
                ';' => ";",
                ',' => ",",
                '@' => "@",
                '*' => "*",
                '?' => "?",
                '-' if chars.peek() == Some(&'>') => {
                    bump!();
                    "->"
                }
                other => {
                    return Err(Diagnostic::error(
                        codes::E_SYNTAX,
                        format!("unexpected character `{}`", other.escape_default()),
                    )
                    .at(loc))
                }
            };
            out.push(Token {
                tok: Tok::Sym(sym),
                loc,
            });
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        loc: Location { line, col },
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Syntax tree

#[derive(Debug)]
struct RefAst {
    text: String,
    loc: Location,
}

#[derive(Debug)]
struct StageAst {
    kind: ActionKind,
    direction: Option<TransferDirection>,
    label: Option<String>,
    loc: Location,
}

#[derive(Debug)]
struct ThimacAst {
    name: String,
    classification: ThingClassification,
    stages: Vec<StageAst>,
    children: Vec<ThimacAst>,
    memory_on: Option<RefAst>,
    loc: Location,
}

#[derive(Debug)]
enum ItemAst {
    Thimac(ThimacAst),
    Arc {
        kind: ArcKind,
        from: RefAst,
        to: RefAst,
        guard: Option<String>,
    },
    Join {
        inputs: Vec<RefAst>,
        output: RefAst,
        loc: Location,
    },
    Link {
        from: RefAst,
        to: RefAst,
    },
    Event {
        decl: EventDecl,
        region: Vec<RefAst>,
        loc: Location,
    },
    Negative(NegativeDecl),
    Chron(ChronDecl),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn loc(&self) -> Location {
        self.toks[self.pos].loc
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, expected: &str) -> PResult<T> {
        let found = match self.peek() {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Str(_) => "string".to_string(),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        };
        Err(Diagnostic::error(
            codes::E_SYNTAX,
            format!("expected {expected}, found {found}"),
        )
        .at(self.loc()))
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Word(x) if x == w)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.at_word(w) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(&format!("`{s}`"))
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<()> {
        if self.eat_word(w) {
            Ok(())
        } else {
            self.err(&format!("`{w}`"))
        }
    }

    fn word(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Word(w) => {
                self.advance();
                Ok(w)
            }
            _ => self.err(what),
        }
    }

    fn name(&mut self) -> PResult<String> {
        let loc = self.loc();
        let w = self.word("a name")?;
        let mut chars = w.chars();
        let ok = chars
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if ok {
            Ok(w)
        } else {
            Err(Diagnostic::error(codes::E_SYNTAX, format!("`{w}` is not a valid name")).at(loc))
        }
    }

    fn string(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(s)
            }
            _ => self.err("a string"),
        }
    }

    fn int(&mut self) -> PResult<u64> {
        let loc = self.loc();
        let w = self.word("an integer")?;
        w.parse().map_err(|_| {
            Diagnostic::error(codes::E_SYNTAX, format!("`{w}` is not an integer")).at(loc)
        })
    }

    fn stage_ref(&mut self) -> PResult<RefAst> {
        let loc = self.loc();
        if self.eat_sym("@") {
            let w = self.word("a stage label")?;
            return Ok(RefAst {
                text: format!("@{w}"),
                loc,
            });
        }
        let mut text = self.word("a stage reference")?;
        if self.eat_sym("[") {
            let idx = self.int()?;
            self.expect_sym("]")?;
            write!(text, "[{idx}]").unwrap();
        }
        Ok(RefAst { text, loc })
    }

    fn document(&mut self) -> PResult<Vec<ItemAst>> {
        let mut items = Vec::new();
        while *self.peek() != Tok::Eof {
            items.push(self.item()?);
        }
        Ok(items)
    }

    fn item(&mut self) -> PResult<ItemAst> {
        let loc = self.loc();
        let Tok::Word(kw) = self.peek().clone() else {
            return self.err("a declaration");
        };
        match kw.as_str() {
            "thimac" => Ok(ItemAst::Thimac(self.thimac(0)?)),
            "flow" | "trigger" | "link" => {
                self.advance();
                let from = self.stage_ref()?;
                self.expect_sym("->")?;
                let to = self.stage_ref()?;
                let guard = if kw == "trigger" && self.eat_word("when") {
                    Some(self.string()?)
                } else {
                    None
                };
                self.expect_sym(";")?;
                Ok(match kw.as_str() {
                    "link" => ItemAst::Link { from, to },
                    "flow" => ItemAst::Arc {
                        kind: ArcKind::Flow,
                        from,
                        to,
                        guard,
                    },
                    _ => ItemAst::Arc {
                        kind: ArcKind::Trigger,
                        from,
                        to,
                        guard,
                    },
                })
            }
            "join" => {
                self.advance();
                self.expect_sym("(")?;
                let mut inputs = vec![self.stage_ref()?];
                while self.eat_sym(",") {
                    inputs.push(self.stage_ref()?);
                }
                self.expect_sym(")")?;
                self.expect_sym("->")?;
                let output = self.stage_ref()?;
                self.expect_sym(";")?;
                Ok(ItemAst::Join {
                    inputs,
                    output,
                    loc,
                })
            }
            "event" => self.event(),
            "negative" => {
                self.advance();
                let name = self.name()?;
                self.expect_word("of")?;
                let paired = self.name()?;
                self.eat_sym(";");
                Ok(ItemAst::Negative(NegativeDecl { name, paired }))
            }
            "chron" => {
                self.advance();
                if self.eat_word("join") {
                    self.expect_sym("(")?;
                    let mut inputs = Vec::new();
                    loop {
                        let event = self.name()?;
                        let optional = self.eat_sym("?");
                        inputs.push(JoinInputDecl { event, optional });
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.expect_sym(")")?;
                    self.expect_sym("->")?;
                    let output = self.name()?;
                    self.expect_sym(";")?;
                    return Ok(ItemAst::Chron(ChronDecl::Join { inputs, output }));
                }
                let from = self.name()?;
                self.expect_sym("->")?;
                let to = self.name()?;
                let guard = if self.eat_word("when") {
                    Some(self.string()?)
                } else {
                    None
                };
                self.expect_sym(";")?;
                Ok(ItemAst::Chron(ChronDecl::Edge { from, to, guard }))
            }
            _ => self.err("a declaration"),
        }
    }

    fn thimac(&mut self, depth: usize) -> PResult<ThimacAst> {
        if depth > MAX_DEPTH {
            return Err(
                Diagnostic::error(codes::E_SYNTAX, "thimacs nested too deeply").at(self.loc()),
            );
        }
        let loc = self.loc();
        let is_memory = self.eat_word("memory");
        if !is_memory {
            self.expect_word("thimac")?;
        }
        let name = self.name()?;
        let mut classification = ThingClassification::Subsisting;
        if !is_memory {
            for c in [
                ThingClassification::Appearing,
                ThingClassification::Existing,
                ThingClassification::Subsisting,
            ] {
                if self.eat_word(c.keyword()) {
                    classification = c;
                    break;
                }
            }
        }
        self.expect_sym("{")?;
        let mut stages = Vec::new();
        let mut children = Vec::new();
        loop {
            if self.eat_sym("}") {
                break;
            }
            let Tok::Word(w) = self.peek().clone() else {
                return self.err("a stage, thimac or memory, or `}`");
            };
            if w == "thimac" || w == "memory" {
                children.push(self.thimac(depth + 1)?);
            } else if let Some(kind) = ActionKind::from_keyword(&w) {
                let sloc = self.loc();
                self.advance();
                let mut direction = None;
                for d in [
                    TransferDirection::In,
                    TransferDirection::Out,
                    TransferDirection::Both,
                ] {
                    if self.eat_word(d.keyword()) {
                        direction = Some(d);
                        break;
                    }
                }
                let label = if self.eat_sym("@") {
                    Some(self.word("a stage label")?)
                } else {
                    None
                };
                self.expect_sym(";")?;
                stages.push(StageAst {
                    kind,
                    direction,
                    label,
                    loc: sloc,
                });
            } else {
                return self.err("a stage, thimac or memory, or `}`");
            }
        }
        let memory_on = if is_memory {
            self.expect_word("on")?;
            Some(self.stage_ref()?)
        } else {
            None
        };
        Ok(ThimacAst {
            name,
            classification,
            stages,
            children,
            memory_on,
            loc,
        })
    }

    fn event(&mut self) -> PResult<ItemAst> {
        let loc = self.loc();
        self.expect_word("event")?;
        let name = self.name()?;
        let mut extended = self.eat_sym("*");
        let mut kind = EventKind::ProcessLike;
        if self.eat_word("entity") {
            kind = EventKind::EntityLike;
            extended = true;
        }
        let instantaneous = self.eat_word("instant");
        let duration = if self.eat_word("duration") {
            let dloc = self.loc();
            let d = self.int()?;
            if d == 0 {
                return Err(Diagnostic::error(
                    codes::E_SYNTAX,
                    "event duration must be at least 1",
                )
                .at(dloc));
            }
            Some(d)
        } else {
            None
        };
        let measure = if self.eat_word("measure") {
            Some(self.string()?)
        } else {
            None
        };
        let description = self.string()?;
        self.expect_word("region")?;
        self.expect_sym("{")?;
        let mut region = Vec::new();
        while !self.eat_sym("}") {
            region.push(self.stage_ref()?);
        }
        if region.is_empty() {
            return Err(Diagnostic::error(
                codes::E_SYNTAX,
                format!("event {name} needs at least one region stage"),
            )
            .at(loc));
        }
        Ok(ItemAst::Event {
            decl: EventDecl {
                name,
                description,
                region: Vec::new(),
                duration,
                extended,
                kind,
                instantaneous,
                measure,
            },
            region,
            loc,
        })
    }
}

// ---------------------------------------------------------------------------
// Building

struct Builder {
    model: StaticModel,
    diags: Diagnostics,
}

impl Builder {
    fn model_error(&mut self, e: ModelError, loc: Location) {
        let code = match e {
            ModelError::DuplicateSiblingName(_) | ModelError::DuplicateLabel(_) => {
                codes::E_DUPLICATE_NAME
            }
            ModelError::UnknownStage(_) | ModelError::UnknownArc(_) => codes::E_UNKNOWN_REF,
            _ => codes::E_SYNTAX,
        };
        self.diags
            .push(Diagnostic::error(code, e.to_string()).at(loc));
    }

    fn resolve(&mut self, r: &RefAst) -> Option<StageId> {
        match self.model.resolve_stage_ref(&r.text) {
            Ok(id) => Some(id),
            Err(msg) => {
                self.diags
                    .push(Diagnostic::error(codes::E_UNKNOWN_REF, msg).at(r.loc));
                None
            }
        }
    }

    fn thimac(&mut self, parent: Option<ThimacId>, ast: &ThimacAst) {
        let created = match (&ast.memory_on, parent) {
            (Some(on), Some(parent)) => match self.resolve(on) {
                Some(stage) if self.model.stages[&stage].owner == parent => {
                    self.model.attach_memory(stage, &ast.name)
                }
                Some(_) => {
                    self.diags.push(
                        Diagnostic::error(
                            codes::E_UNKNOWN_REF,
                            format!(
                                "memory {} must attach to a stage of its enclosing thimac",
                                ast.name
                            ),
                        )
                        .at(on.loc),
                    );
                    return;
                }
                None => return,
            },
            (Some(_), None) => {
                self.diags.push(
                    Diagnostic::error(codes::E_SYNTAX, "memory must be declared inside a thimac")
                        .at(ast.loc),
                );
                return;
            }
            (None, _) => self.model.add_thimac(parent, &ast.name, ast.classification),
        };
        let id = match created {
            Ok(id) => id,
            Err(e) => return self.model_error(e, ast.loc),
        };
        for s in &ast.stages {
            if let Err(e) = self
                .model
                .add_stage(id, s.kind, s.direction, s.label.as_deref())
            {
                self.model_error(e, s.loc);
            }
        }
        for c in &ast.children {
            self.thimac(Some(id), c);
        }
    }
}

struct Document {
    model: StaticModel,
    decls: DynamicDecls,
    links: Vec<(Location, Link)>,
}

fn parse_document(source: &SourceFile) -> Result<Document, Diagnostics> {
    let toks = lex(&source.text)?;
    let items = Parser { toks, pos: 0 }.document()?;

    let mut b = Builder {
        model: StaticModel::new(),
        diags: Diagnostics::new(),
    };
    for item in &items {
        if let ItemAst::Thimac(t) = item {
            b.thimac(None, t);
        }
    }

    let mut decls = DynamicDecls::default();
    let mut links = Vec::new();
    let mut event_names = BTreeSet::new();
    let mut negative_names = BTreeSet::new();
    for item in items {
        match item {
            ItemAst::Thimac(_) => {}
            ItemAst::Arc {
                kind,
                from,
                to,
                guard,
            } => {
                let (f, t) = (b.resolve(&from), b.resolve(&to));
                if let (Some(f), Some(t)) = (f, t) {
                    if let Err(e) = b.model.add_arc(kind, f, t, guard.as_deref()) {
                        b.model_error(e, from.loc);
                    }
                }
            }
            ItemAst::Join {
                inputs,
                output,
                loc,
            } => {
                let out = b.resolve(&output);
                let ins: Vec<Option<StageId>> = inputs.iter().map(|r| b.resolve(r)).collect();
                if let (Some(out), Some(ins)) = (out, ins.into_iter().collect::<Option<Vec<_>>>()) {
                    let arcs: Vec<_> = ins
                        .into_iter()
                        .map(|s| b.model.add_trigger(s, out, None).expect("resolved stages"))
                        .collect();
                    if let Err(e) = b.model.add_join(arcs, out) {
                        b.model_error(e, loc);
                    }
                }
            }
            ItemAst::Link { from, to } => {
                if let (Some(f), Some(t)) = (b.resolve(&from), b.resolve(&to)) {
                    links.push((from.loc, Link { from: f, to: t }));
                }
            }
            ItemAst::Event {
                mut decl,
                region,
                loc,
            } => {
                if !event_names.insert(decl.name.clone()) {
                    b.diags.push(
                        Diagnostic::error(
                            codes::E_DUPLICATE_NAME,
                            format!("event {} declared twice", decl.name),
                        )
                        .at(loc),
                    );
                }
                for r in &region {
                    if let Some(id) = b.resolve(r) {
                        decl.region.push(b.model.stage_ref(id));
                    }
                }
                decls.events.push(decl);
            }
            ItemAst::Negative(n) => {
                if !negative_names.insert(n.name.clone()) || event_names.contains(&n.name) {
                    b.diags.push(Diagnostic::error(
                        codes::E_DUPLICATE_NAME,
                        format!("negative event {} declared twice", n.name),
                    ));
                }
                decls.negatives.push(n);
            }
            ItemAst::Chron(c) => decls.chronology.push(c),
        }
    }
    for n in &decls.negatives {
        if event_names.contains(&n.name) {
            b.diags.push(Diagnostic::error(
                codes::E_DUPLICATE_NAME,
                format!("`{}` names both an event and a negative event", n.name),
            ));
        }
    }
    if b.diags.has_errors() {
        return Err(b.diags);
    }
    Ok(Document {
        model: b.model,
        decls,
        links,
    })
}

/// Parses a `.tm` document into a static model plus dynamic declarations.
pub fn parse(source: &SourceFile) -> Result<(StaticModel, DynamicDecls), Diagnostics> {
    let doc = parse_document(source)?;
    if let Some((loc, _)) = doc.links.first() {
        return Err(Diagnostic::error(
            codes::E_SYNTAX,
            "`link` is only allowed in simplified documents",
        )
        .at(*loc)
        .into());
    }
    Ok((doc.model, doc.decls))
}

/// Parses a simplified document: ordinary static items plus `link` arcs.
pub fn parse_simplified(source: &SourceFile) -> Result<SimplifiedModel, Diagnostics> {
    let doc = parse_document(source)?;
    Ok(SimplifiedModel {
        model: doc.model,
        links: doc.links.into_iter().map(|(_, l)| l).collect(),
    })
}

// ---------------------------------------------------------------------------
// Printing

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn arc_ref(model: &StaticModel, id: StageId) -> String {
    match &model.stages[&id].label {
        Some(l) => format!("@{l}"),
        None => model.stage_path(id),
    }
}

fn print_thimac(model: &StaticModel, id: ThimacId, depth: usize, out: &mut String) {
    let t = &model.thimacs[&id];
    let pad = "  ".repeat(depth);
    if t.is_memory {
        writeln!(out, "{pad}memory {} {{", t.name).unwrap();
    } else if t.classification == ThingClassification::Subsisting {
        writeln!(out, "{pad}thimac {} {{", t.name).unwrap();
    } else {
        writeln!(
            out,
            "{pad}thimac {} {} {{",
            t.name,
            t.classification.keyword()
        )
        .unwrap();
    }
    for s in &t.stages {
        let stage = &model.stages[s];
        write!(out, "{pad}  {}", stage.kind).unwrap();
        if let Some(d) = stage.direction {
            write!(out, " {}", d.keyword()).unwrap();
        }
        if let Some(l) = &stage.label {
            write!(out, " @{l}").unwrap();
        }
        out.push_str(";\n");
    }
    for c in &t.children {
        print_thimac(model, *c, depth + 1, out);
    }
    match t.memory_of {
        Some(stage) => writeln!(out, "{pad}}} on {}", model.stage_ref(stage)).unwrap(),
        None => writeln!(out, "{pad}}}").unwrap(),
    }
}

fn print_static(model: &StaticModel, out: &mut String) {
    for r in &model.roots {
        print_thimac(model, *r, 0, out);
    }
    let mut printed_joins = BTreeSet::new();
    let mut arcs = String::new();
    for arc in model.arcs.values() {
        if let Some(j) = model.join_of(arc.id) {
            if printed_joins.insert(j) {
                let join = &model.joins[&j];
                let inputs: Vec<String> = join
                    .inputs
                    .iter()
                    .map(|a| arc_ref(model, model.arcs[a].from))
                    .collect();
                writeln!(
                    arcs,
                    "join ({}) -> {};",
                    inputs.join(", "),
                    arc_ref(model, join.output)
                )
                .unwrap();
            }
            continue;
        }
        let kw = match arc.kind {
            ArcKind::Flow => "flow",
            ArcKind::Trigger => "trigger",
        };
        write!(
            arcs,
            "{kw} {} -> {}",
            arc_ref(model, arc.from),
            arc_ref(model, arc.to)
        )
        .unwrap();
        if let Some(g) = &arc.guard {
            write!(arcs, " when {}", quote(g)).unwrap();
        }
        arcs.push_str(";\n");
    }
    if !arcs.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&arcs);
    }
}

fn print_decls(decls: &DynamicDecls, out: &mut String) {
    let section = |text: String, out: &mut String| {
        if !text.is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&text);
        }
    };
    let mut events = String::new();
    for e in &decls.events {
        write!(events, "event {}", e.name).unwrap();
        if e.extended {
            events.push_str(" *");
        }
        if e.kind == EventKind::EntityLike {
            events.push_str(" entity");
        }
        if e.instantaneous {
            events.push_str(" instant");
        }
        if let Some(d) = e.duration {
            write!(events, " duration {d}").unwrap();
        }
        if let Some(m) = &e.measure {
            write!(events, " measure {}", quote(m)).unwrap();
        }
        writeln!(
            events,
            " {} region {{ {} }}",
            quote(&e.description),
            e.region.join(" ")
        )
        .unwrap();
    }
    section(events, out);
    let mut negs = String::new();
    for n in &decls.negatives {
        writeln!(negs, "negative {} of {}", n.name, n.paired).unwrap();
    }
    section(negs, out);
    let mut chron = String::new();
    for c in &decls.chronology {
        match c {
            ChronDecl::Edge { from, to, guard } => {
                write!(chron, "chron {from} -> {to}").unwrap();
                if let Some(g) = guard {
                    write!(chron, " when {}", quote(g)).unwrap();
                }
                chron.push_str(";\n");
            }
            ChronDecl::Join { inputs, output } => {
                let ins: Vec<String> = inputs
                    .iter()
                    .map(|i| format!("{}{}", i.event, if i.optional { "?" } else { "" }))
                    .collect();
                writeln!(chron, "chron join ({}) -> {output};", ins.join(", ")).unwrap();
            }
        }
    }
    section(chron, out);
}

/// Canonical text: thimacs in tree order, then arcs and joins in creation
/// order, then events, negatives and chronology. Sections are separated by
/// one blank line and nesting is indented by two spaces.
pub fn print(model: &StaticModel, decls: &DynamicDecls) -> String {
    let mut out = String::new();
    print_static(model, &mut out);
    print_decls(decls, &mut out);
    out
}

pub fn print_simplified(simplified: &SimplifiedModel) -> String {
    let mut out = String::new();
    print_static(&simplified.model, &mut out);
    let mut links = String::new();
    for l in &simplified.links {
        writeln!(
            links,
            "link {} -> {};",
            arc_ref(&simplified.model, l.from),
            arc_ref(&simplified.model, l.to)
        )
        .unwrap();
    }
    if !links.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&links);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(text: &str) -> SourceFile {
        SourceFile::new("test.tm", text)
    }

    #[test]
    fn minimal_program() {
        let (m, d) = parse(&src("thimac A { create; }")).unwrap();
        assert_eq!(m.thimacs.len(), 1);
        assert_eq!(m.stages.len(), 1);
        assert!(d.is_empty());
        assert_eq!(print(&m, &d), "thimac A {\n  create;\n}\n");
    }

    #[test]
    fn empty_document() {
        let (m, d) = parse(&src("  # nothing here\n")).unwrap();
        assert_eq!(print(&m, &d), "");
    }

    #[test]
    fn unknown_region_reference() {
        let err = parse(&src(
            "thimac A { create @a.1; }\nevent E1 \"x\" region { nosuch }",
        ))
        .unwrap_err();
        let d = err.with_code(codes::E_UNKNOWN_REF).next().unwrap();
        assert_eq!(d.location, Some(Location { line: 2, col: 23 }));
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse(&src("thimac A {\n  create\n}")).unwrap_err();
        let d = err.iter().next().unwrap();
        assert_eq!(d.code, codes::E_SYNTAX);
        assert_eq!(d.location, Some(Location { line: 3, col: 1 }));
    }

    #[test]
    fn duplicates_are_reported() {
        let err = parse(&src("thimac A { } thimac A { }")).unwrap_err();
        assert_eq!(err.with_code(codes::E_DUPLICATE_NAME).count(), 1);
        let err = parse(&src("thimac A { create @x; process @x; }")).unwrap_err();
        assert_eq!(err.with_code(codes::E_DUPLICATE_NAME).count(), 1);
        let err = parse(&src(
            "thimac A { create @x; }\nevent E \"a\" region { x }\nevent E \"b\" region { x }",
        ))
        .unwrap_err();
        assert_eq!(err.with_code(codes::E_DUPLICATE_NAME).count(), 1);
    }

    #[test]
    fn direction_rules() {
        assert!(parse(&src("thimac A { process in; }")).is_err());
        assert!(parse(&src("thimac A { transfer; }")).is_err());
        assert!(parse(&src("thimac A { transfer both; }")).is_ok());
    }

    #[test]
    fn stage_order_is_canonical() {
        let a = parse(&src("thimac A { create; thimac B { process; } release; }")).unwrap();
        let b = parse(&src("thimac A { create; release; thimac B { process; } }")).unwrap();
        assert_eq!(a, b);
        let printed = print(&a.0, &a.1);
        assert_eq!(
            printed,
            "thimac A {\n  create;\n  release;\n  thimac B {\n    process;\n  }\n}\n"
        );
    }

    #[test]
    fn memory_and_join_round_trip() {
        let text = r#"
thimac Store existing {
  process @p;
  create @c;
  memory Cache {
    receive;
    release;
  } on p
}
thimac Other {
  process @q;
}
join (@p, @q) -> @c;
trigger @p -> Store.Cache.receive when "save";
event E1 * entity instant duration 3 measure "500 meters" "a \"quoted\" thing" region { p Store.Cache.receive }
event E2 "second" region { q }
negative R1 of E1
chron E1 -> E2 when "g";
chron join (E1, E2?) -> E3;
"#;
        let (m, d) = parse(&src(text)).unwrap();
        let cache = m.resolve_stage_ref("Store.Cache.receive").unwrap();
        let cache_owner = m.stages[&cache].owner;
        assert!(m.thimacs[&cache_owner].is_memory);
        assert_eq!(m.joins.len(), 1);
        assert_eq!(d.events[0].region, vec!["p", "Store.Cache.receive[0]"]);
        assert_eq!(d.events[0].kind, EventKind::EntityLike);
        assert!(d.events[0].instantaneous);
        let printed = print(&m, &d);
        let again = parse(&src(&printed)).unwrap();
        assert_eq!((m, d), again);
        assert_eq!(print(&again.0, &again.1), printed);
    }

    #[test]
    fn memory_must_attach_to_enclosing_thimac() {
        let err = parse(&src(
            "thimac A { process @p; } thimac B { memory M { receive; } on p }",
        ))
        .unwrap_err();
        assert_eq!(err.with_code(codes::E_UNKNOWN_REF).count(), 1);
    }

    #[test]
    fn links_only_in_simplified_documents() {
        let text = "thimac A { process @a; }\nthimac B { process @b; }\nlink @a -> @b;\n";
        assert!(parse(&src(text)).is_err());
        let s = parse_simplified(&src(text)).unwrap();
        assert_eq!(s.links.len(), 1);
        let printed = print_simplified(&s);
        assert!(printed.ends_with("\n\nlink @a -> @b;\n"));
        assert_eq!(parse_simplified(&src(&printed)).unwrap(), s);
    }

    #[test]
    fn garbage_never_panics() {
        for text in [
            "",
            "}",
            "thimac",
            "thimac {",
            "flow ->",
            "event E",
            "\"",
            "chron join (",
            "@@@",
            "thimac A { memory M { } on }",
            "-",
            "join () -> x;",
            "event E duration 0 \"x\" region { }",
        ] {
            let _ = parse(&src(text));
        }
    }
}
