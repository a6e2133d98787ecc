//! S-expression reader with source positions.

use crate::error::{PddlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Sexpr {
    Symbol { text: String, line: usize, col: usize },
    List { items: Vec<Sexpr>, line: usize, col: usize },
}

impl Sexpr {
    pub fn pos(&self) -> (usize, usize) {
        match self {
            Sexpr::Symbol { line, col, .. } | Sexpr::List { line, col, .. } => (*line, *col),
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            Sexpr::Symbol { text, .. } => Some(text),
            Sexpr::List { .. } => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexpr]> {
        match self {
            Sexpr::List { items, .. } => Some(items),
            Sexpr::Symbol { .. } => None,
        }
    }

    pub fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = self.pos();
        Err(PddlError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    pub fn symbol(&self, what: &str) -> Result<&str> {
        match self.as_symbol() {
            Some(s) => Ok(s),
            None => self.error(format!("expected {what}, found a list")),
        }
    }

    pub fn list(&self, what: &str) -> Result<&[Sexpr]> {
        match self.as_list() {
            Some(l) => Ok(l),
            None => self.error(format!("expected {what}, found `{}`", self.as_symbol().unwrap_or(""))),
        }
    }

    /// The head symbol of a non-empty list, lowercased by the reader.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|l| l.first()).and_then(Sexpr::as_symbol)
    }
}

/// Reads every top-level expression in `text`. Symbols are lowercased;
/// `;` starts a comment running to end of line.
pub fn read_all(text: &str) -> Result<Vec<Sexpr>> {
    let mut stack: Vec<(Vec<Sexpr>, usize, usize)> = Vec::new();
    let mut top = Vec::new();
    let mut chars = text.char_indices().peekable();
    let (mut line, mut col) = (1usize, 1usize);

    while let Some((_, c)) = chars.next() {
        let (here_line, here_col) = (line, col);
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
        match c {
            ';' => {
                while let Some(&(_, n)) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' => stack.push((Vec::new(), here_line, here_col)),
            ')' => {
                let Some((items, l, c)) = stack.pop() else {
                    return Err(PddlError::Syntax {
                        line: here_line,
                        col: here_col,
                        msg: "unbalanced `)`".into(),
                    });
                };
                let expr = Sexpr::List { items, line: l, col: c };
                match stack.last_mut() {
                    Some((parent, _, _)) => parent.push(expr),
                    None => top.push(expr),
                }
            }
            c if c.is_whitespace() => {}
            _ => {
                let mut text = String::new();
                text.push(c);
                while let Some(&(_, n)) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' || n == ';' {
                        break;
                    }
                    text.push(n);
                    chars.next();
                    col += 1;
                }
                let sym = Sexpr::Symbol {
                    text: text.to_lowercase(),
                    line: here_line,
                    col: here_col,
                };
                match stack.last_mut() {
                    Some((parent, _, _)) => parent.push(sym),
                    None => top.push(sym),
                }
            }
        }
    }
    if let Some((_, l, c)) = stack.pop() {
        return Err(PddlError::Syntax {
            line: l,
            col: c,
            msg: "unclosed `(`".into(),
        });
    }
    Ok(top)
}

/// Reads exactly one top-level expression.
pub fn read_one(text: &str) -> Result<Sexpr> {
    let mut all = read_all(text)?;
    match all.len() {
        1 => Ok(all.remove(0)),
        0 => Err(PddlError::Syntax {
            line: 1,
            col: 1,
            msg: "empty input".into(),
        }),
        _ => {
            let (line, col) = all[1].pos();
            Err(PddlError::Syntax {
                line,
                col,
                msg: "trailing input after expression".into(),
            })
        }
    }
}
