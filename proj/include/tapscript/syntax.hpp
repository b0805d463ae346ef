#pragma once

// Lexer and recursive-descent parser for Tapscript source.
//
// Every node keeps a SourceSpan (file, 1-based line range, half-open byte
// range) so the runner can report line ranges and recover the verbatim text
// of any top-level expression.

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/core.h>

namespace tapscript {

struct SourceSpan {
  std::string file;
  int start_line = 1;
  int end_line = 1;
  std::size_t start_byte = 0;
  std::size_t end_byte = 0;

  bool contains(const SourceSpan& other) const {
    return start_byte <= other.start_byte && other.end_byte <= end_byte;
  }
  bool operator==(const SourceSpan&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, int line, int column, std::string message)
      : std::runtime_error(fmt::format("{}:{}:{}: parse error: {}", file, line, column, message)),
        file_(std::move(file)),
        line_(line),
        column_(column),
        message_(std::move(message)) {}

  const std::string& file() const { return file_; }
  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  std::string file_;
  int line_;
  int column_;
  std::string message_;
};

enum class NodeKind {
  NumberLit,
  StringLit,
  BoolLit,
  NullLit,
  Ident,
  Assign,
  IndexAssign,
  FieldAssign,
  Binary,
  Unary,
  Index,
  Field,
  Call,
  Block,
  If,
  FnDef,
  Pipe,
  VectorCtor,
};

inline std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::NumberLit: return "NumberLit";
    case NodeKind::StringLit: return "StringLit";
    case NodeKind::BoolLit: return "BoolLit";
    case NodeKind::NullLit: return "NullLit";
    case NodeKind::Ident: return "Ident";
    case NodeKind::Assign: return "Assign";
    case NodeKind::IndexAssign: return "IndexAssign";
    case NodeKind::FieldAssign: return "FieldAssign";
    case NodeKind::Binary: return "Binary";
    case NodeKind::Unary: return "Unary";
    case NodeKind::Index: return "Index";
    case NodeKind::Field: return "Field";
    case NodeKind::Call: return "Call";
    case NodeKind::Block: return "Block";
    case NodeKind::If: return "If";
    case NodeKind::FnDef: return "FnDef";
    case NodeKind::Pipe: return "Pipe";
    case NodeKind::VectorCtor: return "VectorCtor";
  }
  return "?";
}

struct ExprNode;
using NodePtr = std::shared_ptr<const ExprNode>;

/// Children layout per kind:
///   Assign       text = target name, children = {value}
///   IndexAssign  text = target name, children = {index, value}
///   FieldAssign  text = target name, member = field, children = {value}
///   Binary       text = operator, children = {lhs, rhs}
///   Unary        text = operator, children = {operand}
///   Index        children = {target, index}
///   Field        member = field, children = {target}
///   Call         children = {callee, args...}, names = arg names ("" if positional),
///                text = verbatim call source
///   Block        children = statements
///   If           children = {condition, then[, else]}
///   FnDef        names = parameters, children = {body}, text = verbatim source
///   Pipe         children = {lhs, rhs}, text = verbatim rhs source
///   VectorCtor   children = elements, names = element names
struct ExprNode {
  NodeKind kind = NodeKind::NullLit;
  SourceSpan span;
  std::string text;
  std::string member;
  double number = 0.0;
  bool flag = false;
  std::vector<NodePtr> children;
  std::vector<std::string> names;
};

struct Program {
  std::string file;
  std::string source;
  std::vector<NodePtr> exprs;
};

/// Compares trees ignoring spans and the verbatim source copies derived
/// from them.
inline bool structurally_equal(const ExprNode& a, const ExprNode& b) {
  const bool verbatim = a.kind == NodeKind::Call || a.kind == NodeKind::FnDef || a.kind == NodeKind::Pipe;
  if (a.kind != b.kind || (!verbatim && a.text != b.text) || a.member != b.member || a.flag != b.flag ||
      a.names != b.names || a.children.size() != b.children.size())
    return false;
  if (a.kind == NodeKind::NumberLit && a.number != b.number) return false;
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!structurally_equal(*a.children[i], *b.children[i])) return false;
  return true;
}

inline bool structurally_equal(const Program& a, const Program& b) {
  if (a.exprs.size() != b.exprs.size()) return false;
  for (std::size_t i = 0; i < a.exprs.size(); ++i)
    if (!structurally_equal(*a.exprs[i], *b.exprs[i])) return false;
  return true;
}

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_ident_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}
inline bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c) || c == '.'; }

inline std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return is_space(c) || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

enum class Tok {
  Number,
  String,
  Ident,
  True,
  False,
  Null,
  If,
  Else,
  Function,
  Arrow,     // <-
  PipeOp,    // |>
  Or,        // |
  And,       // &
  Not,       // !
  Lt,
  Gt,
  Le,
  Ge,
  Eq,
  Ne,
  Plus,
  Minus,
  Star,
  Slash,
  Caret,
  LParen,
  RParen,
  LBrace,
  RBrace,
  LBracket,
  RBracket,
  Dollar,
  Comma,
  Assign,    // = (named arguments only)
  Semicolon,
  Newline,
  End,
};

struct Token {
  Tok type;
  std::size_t begin;
  std::size_t end;
  std::string text;  // identifier name or decoded string literal
  double number = 0.0;
};

/// Maps byte offsets to 1-based line and column numbers. Only '\n' starts a
/// new line, so "\r\n" counts once.
class LineMap {
 public:
  explicit LineMap(std::string_view source) {
    starts_.push_back(0);
    for (std::size_t i = 0; i < source.size(); ++i)
      if (source[i] == '\n') starts_.push_back(i + 1);
  }

  int line(std::size_t byte) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), byte);
    return static_cast<int>(it - starts_.begin());
  }

  int column(std::size_t byte) const {
    return static_cast<int>(byte - starts_[static_cast<std::size_t>(line(byte) - 1)]) + 1;
  }

 private:
  std::vector<std::size_t> starts_;
};

class Lexer {
 public:
  Lexer(std::string_view source, const std::string& file, const LineMap& lines)
      : src_(source), file_(file), lines_(lines) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_blank();
      if (pos_ >= src_.size()) {
        out.push_back({Tok::End, pos_, pos_, {}});
        return out;
      }
      out.push_back(next());
    }
  }

 private:
  [[noreturn]] void fail(std::size_t at, const std::string& message) const {
    throw ParseError(file_, lines_.line(at), lines_.column(at), message);
  }

  void skip_blank() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (is_space(c)) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  Token make(Tok type, std::size_t len) {
    Token t{type, pos_, pos_ + len, {}};
    pos_ += len;
    return t;
  }

  Token next() {
    const std::size_t start = pos_;
    const char c = peek();
    if (is_digit(c) || (c == '.' && is_digit(peek(1)))) return number();
    if (is_ident_start(c)) return identifier();
    switch (c) {
      case '\n': return make(Tok::Newline, 1);
      case '"': return string_literal();
      case '<':
        if (peek(1) == '-') return make(Tok::Arrow, 2);
        if (peek(1) == '=') return make(Tok::Le, 2);
        return make(Tok::Lt, 1);
      case '>':
        if (peek(1) == '=') return make(Tok::Ge, 2);
        return make(Tok::Gt, 1);
      case '=':
        if (peek(1) == '=') return make(Tok::Eq, 2);
        return make(Tok::Assign, 1);
      case '!':
        if (peek(1) == '=') return make(Tok::Ne, 2);
        return make(Tok::Not, 1);
      case '|':
        if (peek(1) == '>') return make(Tok::PipeOp, 2);
        if (peek(1) == '|') fail(start, "'||' is not supported; use '|'");
        return make(Tok::Or, 1);
      case '&':
        if (peek(1) == '&') fail(start, "'&&' is not supported; use '&'");
        return make(Tok::And, 1);
      case '+': return make(Tok::Plus, 1);
      case '-': return make(Tok::Minus, 1);
      case '*': return make(Tok::Star, 1);
      case '/': return make(Tok::Slash, 1);
      case '^': return make(Tok::Caret, 1);
      case '(': return make(Tok::LParen, 1);
      case ')': return make(Tok::RParen, 1);
      case '{': return make(Tok::LBrace, 1);
      case '}': return make(Tok::RBrace, 1);
      case '[': return make(Tok::LBracket, 1);
      case ']': return make(Tok::RBracket, 1);
      case '$': return make(Tok::Dollar, 1);
      case ',': return make(Tok::Comma, 1);
      case ';': return make(Tok::Semicolon, 1);
      case ':':
        if (peek(1) == ':') fail(start, "namespace operator '::' is not supported");
        break;
      default: break;
    }
    fail(start, fmt::format("unexpected character '{}'", c));
  }

  Token number() {
    const std::size_t start = pos_;
    while (is_digit(peek())) ++pos_;
    if (peek() == '.') {
      ++pos_;
      while (is_digit(peek())) ++pos_;
    }
    if (peek() == 'e' || peek() == 'E') {
      std::size_t save = pos_;
      ++pos_;
      if (peek() == '+' || peek() == '-') ++pos_;
      if (!is_digit(peek())) {
        pos_ = save;
      } else {
        while (is_digit(peek())) ++pos_;
      }
    }
    if (is_ident_start(peek())) fail(pos_, "malformed number");
    Token t{Tok::Number, start, pos_, {}};
    std::string digits(src_.substr(start, pos_ - start));
    t.number = std::strtod(digits.c_str(), nullptr);
    return t;
  }

  Token identifier() {
    const std::size_t start = pos_;
    while (is_ident_char(peek())) ++pos_;
    std::string word(src_.substr(start, pos_ - start));
    Tok type = Tok::Ident;
    if (word == "TRUE") type = Tok::True;
    else if (word == "FALSE") type = Tok::False;
    else if (word == "NULL") type = Tok::Null;
    else if (word == "if") type = Tok::If;
    else if (word == "else") type = Tok::Else;
    else if (word == "function") type = Tok::Function;
    if (peek() == ':' && peek(1) == ':') fail(pos_, "namespace operator '::' is not supported");
    return {type, start, pos_, std::move(word)};
  }

  Token string_literal() {
    const std::size_t start = pos_++;
    std::string value;
    for (;;) {
      if (pos_ >= src_.size()) fail(start, "unterminated string");
      char c = src_[pos_++];
      if (c == '"') break;
      if (c == '\\') {
        char e = peek();
        if (e != '"' && e != '\\') fail(pos_ - 1, "unsupported escape sequence");
        value.push_back(e);
        ++pos_;
      } else {
        value.push_back(c);
      }
    }
    return {Tok::String, start, pos_, std::move(value)};
  }

  std::string_view src_;
  const std::string& file_;
  const LineMap& lines_;
  std::size_t pos_ = 0;
};

inline std::string_view describe(const Token& t, std::string_view source) {
  switch (t.type) {
    case Tok::Newline: return "end of line";
    case Tok::End: return "end of input";
    default: return source.substr(t.begin, t.end - t.begin);
  }
}

class Parser {
 public:
  Parser(std::string_view source, std::string file)
      : src_(source), file_(std::move(file)), lines_(source) {
    tokens_ = Lexer(src_, file_, lines_).run();
  }

  std::vector<NodePtr> program() {
    std::vector<NodePtr> exprs;
    skip_separators();
    while (!at(Tok::End)) {
      exprs.push_back(expression());
      end_statement(Tok::End);
      skip_separators();
    }
    return exprs;
  }

 private:
  // ---- token cursor -------------------------------------------------------

  bool newlines_ignored() const { return !nesting_.empty() && nesting_.back(); }

  const Token& peek() {
    if (newlines_ignored())
      while (tokens_[pos_].type == Tok::Newline) ++pos_;
    return tokens_[pos_];
  }

  bool at(Tok type) { return peek().type == type; }

  const Token& advance() {
    const Token& t = peek();
    if (t.type != Tok::End) ++pos_;
    last_end_ = t.end;
    return t;
  }

  bool accept(Tok type) {
    if (!at(type)) return false;
    advance();
    return true;
  }

  const Token& expect(Tok type, std::string_view what) {
    if (!at(type)) fail(peek(), fmt::format("expected {}", what));
    return advance();
  }

  void skip_newlines() {
    while (tokens_[pos_].type == Tok::Newline) ++pos_;
  }

  void skip_separators() {
    while (tokens_[pos_].type == Tok::Newline || tokens_[pos_].type == Tok::Semicolon) ++pos_;
  }

  void end_statement(Tok closer) {
    const Token& t = tokens_[pos_];
    if (t.type == Tok::Newline || t.type == Tok::Semicolon || t.type == closer) return;
    fail(t, fmt::format("unexpected '{}'", describe(t, src_)));
  }

  [[noreturn]] void fail(const Token& t, const std::string& message) const {
    throw ParseError(file_, lines_.line(t.begin), lines_.column(t.begin), message);
  }

  // ---- node construction --------------------------------------------------

  std::shared_ptr<ExprNode> node(NodeKind kind, std::size_t begin) const {
    auto n = std::make_shared<ExprNode>();
    n->kind = kind;
    n->span.file = file_;
    n->span.start_byte = begin;
    return n;
  }

  NodePtr finish(std::shared_ptr<ExprNode> n) const {
    n->span.end_byte = last_end_;
    n->span.start_line = lines_.line(n->span.start_byte);
    n->span.end_line = lines_.line(n->span.end_byte - 1);
    return n;
  }

  std::string slice(const ExprNode& n) const {
    return std::string(src_.substr(n.span.start_byte, n.span.end_byte - n.span.start_byte));
  }

  // ---- grammar ------------------------------------------------------------

  NodePtr expression() {
    const std::size_t begin = peek().begin;
    NodePtr target = pipe();
    if (!at(Tok::Arrow)) return target;
    const Token& arrow = advance();
    skip_newlines();
    NodePtr value = expression();

    std::shared_ptr<ExprNode> n;
    switch (target->kind) {
      case NodeKind::Ident:
        n = node(NodeKind::Assign, begin);
        n->text = target->text;
        n->children = {value};
        break;
      case NodeKind::Index:
        if (target->children[0]->kind != NodeKind::Ident) fail(arrow, "invalid assignment target");
        n = node(NodeKind::IndexAssign, begin);
        n->text = target->children[0]->text;
        n->children = {target->children[1], value};
        break;
      case NodeKind::Field:
        if (target->children[0]->kind != NodeKind::Ident) fail(arrow, "invalid assignment target");
        n = node(NodeKind::FieldAssign, begin);
        n->text = target->children[0]->text;
        n->member = target->member;
        n->children = {value};
        break;
      default:
        fail(arrow, "invalid assignment target");
    }
    return finish(std::move(n));
  }

  NodePtr pipe() {
    const std::size_t begin = peek().begin;
    NodePtr lhs = logical_or();
    while (accept(Tok::PipeOp)) {
      skip_newlines();
      NodePtr rhs = logical_or();
      auto n = node(NodeKind::Pipe, begin);
      n->text = slice(*rhs);
      n->children = {lhs, rhs};
      lhs = finish(std::move(n));
    }
    return lhs;
  }

  NodePtr binary(NodePtr lhs, std::string op, std::size_t begin, NodePtr (Parser::*operand)()) {
    skip_newlines();
    NodePtr rhs = (this->*operand)();
    auto n = node(NodeKind::Binary, begin);
    n->text = std::move(op);
    n->children = {std::move(lhs), std::move(rhs)};
    return finish(std::move(n));
  }

  NodePtr logical_or() {
    const std::size_t begin = peek().begin;
    NodePtr lhs = logical_and();
    while (accept(Tok::Or)) lhs = binary(lhs, "|", begin, &Parser::logical_and);
    return lhs;
  }

  NodePtr logical_and() {
    const std::size_t begin = peek().begin;
    NodePtr lhs = negation();
    while (accept(Tok::And)) lhs = binary(lhs, "&", begin, &Parser::negation);
    return lhs;
  }

  NodePtr negation() {
    if (!at(Tok::Not)) return comparison();
    const std::size_t begin = advance().begin;
    NodePtr operand = negation();
    auto n = node(NodeKind::Unary, begin);
    n->text = "!";
    n->children = {operand};
    return finish(std::move(n));
  }

  NodePtr comparison() {
    const std::size_t begin = peek().begin;
    NodePtr lhs = additive();
    for (;;) {
      std::string op;
      switch (peek().type) {
        case Tok::Lt: op = "<"; break;
        case Tok::Gt: op = ">"; break;
        case Tok::Le: op = "<="; break;
        case Tok::Ge: op = ">="; break;
        case Tok::Eq: op = "=="; break;
        case Tok::Ne: op = "!="; break;
        default: return lhs;
      }
      advance();
      lhs = binary(lhs, op, begin, &Parser::additive);
    }
  }

  NodePtr additive() {
    const std::size_t begin = peek().begin;
    NodePtr lhs = multiplicative();
    for (;;) {
      if (accept(Tok::Plus)) lhs = binary(lhs, "+", begin, &Parser::multiplicative);
      else if (accept(Tok::Minus)) lhs = binary(lhs, "-", begin, &Parser::multiplicative);
      else return lhs;
    }
  }

  NodePtr multiplicative() {
    const std::size_t begin = peek().begin;
    NodePtr lhs = unary_minus();
    for (;;) {
      if (accept(Tok::Star)) lhs = binary(lhs, "*", begin, &Parser::unary_minus);
      else if (accept(Tok::Slash)) lhs = binary(lhs, "/", begin, &Parser::unary_minus);
      else return lhs;
    }
  }

  NodePtr unary_minus() {
    if (!at(Tok::Minus)) return power();
    const std::size_t begin = advance().begin;
    NodePtr operand = unary_minus();
    auto n = node(NodeKind::Unary, begin);
    n->text = "-";
    n->children = {operand};
    return finish(std::move(n));
  }

  NodePtr power() {
    const std::size_t begin = peek().begin;
    NodePtr base = postfix();
    if (!accept(Tok::Caret)) return base;
    return binary(base, "^", begin, &Parser::unary_minus);
  }

  NodePtr postfix() {
    const std::size_t begin = peek().begin;
    NodePtr target = primary();
    for (;;) {
      if (at(Tok::LParen)) {
        advance();
        auto n = node(NodeKind::Call, begin);
        n->children.push_back(target);
        arguments(*n);
        target = finish(n);
        n->text = slice(*n);
      } else if (at(Tok::LBracket)) {
        advance();
        nesting_.push_back(true);
        NodePtr index = expression();
        expect(Tok::RBracket, "']'");
        nesting_.pop_back();
        auto n = node(NodeKind::Index, begin);
        n->children = {target, index};
        target = finish(std::move(n));
      } else if (at(Tok::Dollar)) {
        advance();
        const Token& name = expect(Tok::Ident, "field name after '$'");
        auto n = node(NodeKind::Field, begin);
        n->member = name.text;
        n->children = {target};
        target = finish(std::move(n));
      } else {
        return target;
      }
    }
  }

  // Parses "(a, name = b, ...)" after the opening parenthesis was consumed.
  void arguments(ExprNode& call) {
    nesting_.push_back(true);
    if (!at(Tok::RParen)) {
      for (;;) {
        std::string name;
        if (at(Tok::Ident) && tokens_[next_significant(pos_ + 1)].type == Tok::Assign) {
          name = advance().text;
          advance();
        }
        call.children.push_back(expression());
        call.names.push_back(std::move(name));
        if (!accept(Tok::Comma)) break;
      }
    }
    expect(Tok::RParen, "')' or ','");
    nesting_.pop_back();
  }

  std::size_t next_significant(std::size_t i) const {
    while (tokens_[i].type == Tok::Newline) ++i;
    return i;
  }

  NodePtr primary() {
    const Token& t = peek();
    const std::size_t begin = t.begin;
    switch (t.type) {
      case Tok::Number: {
        auto n = node(NodeKind::NumberLit, begin);
        n->number = advance().number;
        return finish(std::move(n));
      }
      case Tok::String: {
        auto n = node(NodeKind::StringLit, begin);
        n->text = advance().text;
        return finish(std::move(n));
      }
      case Tok::True:
      case Tok::False: {
        auto n = node(NodeKind::BoolLit, begin);
        n->flag = advance().type == Tok::True;
        return finish(std::move(n));
      }
      case Tok::Null: {
        advance();
        return finish(node(NodeKind::NullLit, begin));
      }
      case Tok::Ident: {
        if (t.text == "c" && tokens_[pos_ + 1].type == Tok::LParen) {
          advance();
          advance();
          auto n = node(NodeKind::VectorCtor, begin);
          arguments(*n);
          return finish(std::move(n));
        }
        auto n = node(NodeKind::Ident, begin);
        n->text = advance().text;
        return finish(std::move(n));
      }
      case Tok::LParen: {
        advance();
        nesting_.push_back(true);
        NodePtr inner = expression();
        expect(Tok::RParen, "')'");
        nesting_.pop_back();
        // Parentheses are kept only in the span; the tree is the inner node.
        auto n = std::make_shared<ExprNode>(*inner);
        n->span.start_byte = begin;
        return finish(std::move(n));
      }
      case Tok::LBrace: return block();
      case Tok::If: return if_expr();
      case Tok::Function: return function();
      default: fail(t, fmt::format("unexpected '{}'", describe(t, src_)));
    }
  }

  NodePtr block() {
    const std::size_t begin = advance().begin;
    nesting_.push_back(false);
    auto n = node(NodeKind::Block, begin);
    skip_separators();
    while (!at(Tok::RBrace)) {
      if (at(Tok::End)) fail(peek(), "unterminated block, expected '}'");
      n->children.push_back(expression());
      end_statement(Tok::RBrace);
      skip_separators();
    }
    nesting_.pop_back();
    advance();
    return finish(std::move(n));
  }

  NodePtr if_expr() {
    const std::size_t begin = advance().begin;
    expect(Tok::LParen, "'(' after 'if'");
    nesting_.push_back(true);
    NodePtr condition = expression();
    expect(Tok::RParen, "')'");
    nesting_.pop_back();
    skip_newlines();
    auto n = node(NodeKind::If, begin);
    n->children = {condition, expression()};

    // Inside braces or parentheses an 'else' may follow on a later line.
    std::size_t probe = pos_;
    if (!nesting_.empty())
      while (tokens_[probe].type == Tok::Newline) ++probe;
    if (tokens_[probe].type == Tok::Else) {
      pos_ = probe;
      advance();
      skip_newlines();
      n->children.push_back(expression());
    }
    return finish(std::move(n));
  }

  NodePtr function() {
    const std::size_t begin = advance().begin;
    expect(Tok::LParen, "'(' after 'function'");
    nesting_.push_back(true);
    auto n = node(NodeKind::FnDef, begin);
    if (!at(Tok::RParen)) {
      for (;;) {
        const Token& p = expect(Tok::Ident, "parameter name");
        if (std::find(n->names.begin(), n->names.end(), p.text) != n->names.end())
          fail(p, fmt::format("duplicate parameter '{}'", p.text));
        n->names.push_back(p.text);
        if (!accept(Tok::Comma)) break;
      }
    }
    expect(Tok::RParen, "')'");
    nesting_.pop_back();
    skip_newlines();
    n->children = {expression()};
    n->span.end_byte = last_end_;
    n->text = slice(*n);
    return finish(std::move(n));
  }

  std::string_view src_;
  std::string file_;
  LineMap lines_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  std::size_t last_end_ = 0;
  std::vector<bool> nesting_;  // true: newlines ignored (inside () or [])
};

}  // namespace detail

/// Parses a whole source text. Throws ParseError; no partial Program escapes.
inline Program parse_program(std::string source, std::string file_name) {
  Program program;
  program.file = file_name;
  program.exprs = detail::Parser(source, std::move(file_name)).program();
  program.source = std::move(source);
  return program;
}

/// Verbatim source text covered by a span, with surrounding whitespace trimmed.
inline std::string source_slice(const Program& program, const SourceSpan& span) {
  if (span.start_byte > span.end_byte || span.end_byte > program.source.size())
    throw std::out_of_range(fmt::format("span [{}, {}) outside source of {} bytes", span.start_byte,
                                        span.end_byte, program.source.size()));
  std::string_view text(program.source);
  return std::string(detail::trim(text.substr(span.start_byte, span.end_byte - span.start_byte)));
}

/// Span from the first to the last top-level expression; empty programs
/// yield an empty span.
inline SourceSpan program_span(const Program& program) {
  SourceSpan span;
  span.file = program.file;
  if (program.exprs.empty()) return span;
  span.start_byte = program.exprs.front()->span.start_byte;
  span.start_line = program.exprs.front()->span.start_line;
  span.end_byte = program.exprs.back()->span.end_byte;
  span.end_line = program.exprs.back()->span.end_line;
  return span;
}

}  // namespace tapscript
