#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace xssynth {

struct SourcePos {
  int line = 1;  // 1-based physical line
  int col = 1;   // 1-based byte column
  std::size_t offset = 0;

  friend bool operator==(const SourcePos& a, const SourcePos& b) { return a.offset == b.offset; }
  friend auto operator<=>(const SourcePos& a, const SourcePos& b) { return a.offset <=> b.offset; }
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, SourcePos pos)
      : Error(std::to_string(pos.line) + ":" + std::to_string(pos.col) + ": " + message),
        pos_(pos) {}
  SourcePos pos() const { return pos_; }

 private:
  SourcePos pos_;
};

// ---------------------------------------------------------------------------
// Host expressions

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct StrLit {
  std::string value;
};
struct BoolLit {
  bool value = false;
};
struct Var {
  std::string name;  // may be dotted (field access); taint follows the head
};
struct Call {
  std::string callee;  // dotted name, e.g. request.getParameter
  std::vector<ExprPtr> args;
  std::size_t end_offset = 0;  // one past the closing ')'
};
struct Concat {
  ExprPtr left;
  ExprPtr right;
};

struct Expr {
  std::variant<StrLit, BoolLit, Var, Call, Concat> node;
  SourcePos pos;
};

template <class T>
ExprPtr make_expr(T node, SourcePos pos = {}) {
  return std::make_shared<const Expr>(Expr{std::move(node), pos});
}

// ---------------------------------------------------------------------------
// Host statements

struct Stmt;
using StmtList = std::vector<Stmt>;

struct Decl {
  std::string type_name;
  std::string var;
  ExprPtr init;
};
struct Assign {
  std::string var;
  ExprPtr value;
};
struct If {
  ExprPtr cond;
  StmtList then_branch;
  StmtList else_branch;
};
struct SwitchCase {
  ExprPtr label;
  StmtList body;
};
struct Switch {
  ExprPtr scrutinee;
  std::vector<SwitchCase> cases;
  StmtList default_body;
};
enum class WriteOrigin { Html, ExprSink, Call };
struct Write {
  ExprPtr value;
  WriteOrigin origin = WriteOrigin::Call;
  std::string method;  // "out.write" etc. for WriteOrigin::Call
};
// Only produced by path extraction: keeps a branch condition alive as
// `boolean eN = (cond);` in the straight-line slice.
struct CondCapture {
  std::string var;
  ExprPtr cond;
};
// Pre-normalization leaves: literal markup and `<%= expr %>`.
struct HtmlText {
  std::string text;
};
struct SinkExpr {
  ExprPtr expr;
};

struct Stmt {
  std::variant<Decl, Assign, If, Switch, Write, CondCapture, HtmlText, SinkExpr> node;
  SourcePos pos;
};

// ---------------------------------------------------------------------------
// Document

struct TemplateNode {
  enum class Kind { Html, Scriptlet, ExprSink, Comment };
  Kind kind = Kind::Html;
  std::string raw;  // exact input bytes, markers included
  SourcePos pos;
};

struct TemplateDoc {
  std::string name;
  std::string source;
  std::vector<TemplateNode> nodes;
  StmtList body;
  bool normalized = false;
};

namespace detail {

class LineIndex {
 public:
  explicit LineIndex(std::string_view text) {
    starts_.push_back(0);
    for (std::size_t i = 0; i < text.size(); ++i)
      if (text[i] == '\n') starts_.push_back(i + 1);
  }
  SourcePos at(std::size_t offset) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), offset);
    auto line = static_cast<int>(it - starts_.begin());
    return SourcePos{line, static_cast<int>(offset - starts_[line - 1]) + 1, offset};
  }

 private:
  std::vector<std::size_t> starts_;
};

struct Token {
  enum class Kind { Ident, String, Punct, Html, Sink, End };
  Kind kind = Kind::End;
  std::string text;
  std::size_t offset = 0;
  std::size_t node = 0;  // for Html/Sink pseudo tokens
};

inline bool ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '$';
}
inline bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

// Lexes host code in [begin, end) of `src`, appending to `out`.
inline void lex_host(std::string_view src, std::size_t begin, std::size_t end,
                     const LineIndex& lines, std::vector<Token>& out) {
  std::size_t i = begin;
  while (i < end) {
    char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++i;
      continue;
    }
    if (c == '/' && i + 1 < end && src[i + 1] == '/') {
      while (i < end && src[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < end && src[i + 1] == '*') {
      auto close = src.find("*/", i + 2);
      if (close == std::string_view::npos || close + 2 > end)
        throw ParseError("unterminated comment", lines.at(i));
      i = close + 2;
      continue;
    }
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < end && ident_char(src[j])) ++j;
      out.push_back({Token::Kind::Ident, std::string(src.substr(i, j - i)), i});
      i = j;
      continue;
    }
    if (c == '"') {
      std::string value;
      std::size_t j = i + 1;
      for (;; ++j) {
        if (j >= end || src[j] == '\n') throw ParseError("unterminated string literal", lines.at(i));
        if (src[j] == '"') break;
        if (src[j] == '\\') {
          if (j + 1 < end && (src[j + 1] == '"' || src[j + 1] == '\\')) {
            value += src[++j];
            continue;
          }
          throw ParseError("unsupported escape sequence", lines.at(j));
        }
        value += src[j];
      }
      out.push_back({Token::Kind::String, std::move(value), i});
      i = j + 1;
      continue;
    }
    if (c == '(' || c == ')' || c == '{' || c == '}' || c == ';' || c == ',' || c == '.' ||
        c == '+' || c == ':') {
      out.push_back({Token::Kind::Punct, std::string(1, c), i});
      ++i;
      continue;
    }
    if (c == '=') {
      if (i + 1 < end && src[i + 1] == '=')
        throw ParseError("comparison operators are not supported", lines.at(i));
      out.push_back({Token::Kind::Punct, "=", i});
      ++i;
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", lines.at(i));
  }
}

class HostParser {
 public:
  HostParser(const std::vector<Token>& toks, const TemplateDoc& doc, const LineIndex& lines)
      : toks_(toks), doc_(doc), lines_(lines) {}

  StmtList parse_all() {
    StmtList out;
    while (peek().kind != Token::Kind::End) out.push_back(statement());
    return out;
  }

  ExprPtr parse_lone_expr() {
    auto e = expression();
    if (peek().kind != Token::Kind::End) fail("unexpected tokens after expression");
    return e;
  }

 private:
  const Token& peek(std::size_t k = 0) const {
    return toks_[std::min(pos_ + k, toks_.size() - 1)];
  }
  const Token& take() {
    const Token& t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  SourcePos here() const { return lines_.at(peek().offset); }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, here()); }

  bool is_punct(std::string_view p, std::size_t k = 0) const {
    return peek(k).kind == Token::Kind::Punct && peek(k).text == p;
  }
  bool is_ident(std::string_view s, std::size_t k = 0) const {
    return peek(k).kind == Token::Kind::Ident && peek(k).text == s;
  }
  void expect_punct(std::string_view p) {
    if (!is_punct(p)) fail("expected '" + std::string(p) + "'");
    take();
  }
  std::string expect_ident() {
    if (peek().kind != Token::Kind::Ident) fail("expected identifier");
    return take().text;
  }

  static std::size_t first_significant(std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i)
      if (text[i] != ' ' && text[i] != '\t' && text[i] != '\r' && text[i] != '\n') return i;
    return 0;
  }

  Stmt statement() {
    const Token& t = peek();
    SourcePos pos = here();
    if (t.kind == Token::Kind::Html) {
      const auto& node = doc_.nodes[t.node];
      take();
      return Stmt{HtmlText{node.raw}, lines_.at(node.pos.offset + first_significant(node.raw))};
    }
    if (t.kind == Token::Kind::Sink) {
      auto idx = t.node;
      take();
      return Stmt{SinkExpr{sink_exprs_.at(idx)}, doc_.nodes[idx].pos};
    }
    if (t.kind != Token::Kind::Ident) fail("expected statement");
    if (t.text == "for" || t.text == "while" || t.text == "do")
      fail("loops are not supported");
    if (t.text == "if") return if_statement();
    if (t.text == "switch") return switch_statement();
    if (t.text == "String" || t.text == "boolean") {
      std::string type = take().text;
      std::string var = expect_ident();
      expect_punct("=");
      auto init = expression();
      expect_punct(";");
      return Stmt{Decl{type, var, init}, pos};
    }
    if (t.text == "out" && is_punct(".", 1)) {
      take();
      take();
      std::string method = expect_ident();
      if (method != "write" && method != "print" && method != "println")
        fail("unsupported output method '" + method + "'");
      expect_punct("(");
      auto value = expression();
      expect_punct(")");
      expect_punct(";");
      if (method == "println")
        value = make_expr(Concat{value, make_expr(StrLit{"\n"}, pos)}, value->pos);
      return Stmt{Write{value, WriteOrigin::Call, "out." + method}, pos};
    }
    if (is_punct("=", 1)) {
      std::string var = take().text;
      take();
      auto value = expression();
      expect_punct(";");
      return Stmt{Assign{var, value}, pos};
    }
    fail("unsupported statement");
  }

  StmtList block_or_statement() {
    StmtList out;
    if (is_punct("{")) {
      take();
      while (!is_punct("}")) {
        if (peek().kind == Token::Kind::End) fail("unterminated block");
        out.push_back(statement());
      }
      take();
    } else {
      out.push_back(statement());
    }
    return out;
  }

  Stmt if_statement() {
    SourcePos pos = here();
    take();
    expect_punct("(");
    auto cond = expression();
    expect_punct(")");
    If node{cond, block_or_statement(), {}};
    if (is_ident("else")) {
      take();
      if (is_ident("if"))
        node.else_branch.push_back(if_statement());
      else
        node.else_branch = block_or_statement();
    }
    return Stmt{std::move(node), pos};
  }

  // Arms never fall through; a trailing `break;` is accepted and dropped.
  StmtList case_body() {
    StmtList out;
    while (!is_ident("case") && !is_ident("default") && !is_punct("}")) {
      if (peek().kind == Token::Kind::End) fail("unterminated switch");
      if (is_ident("break")) {
        take();
        expect_punct(";");
        continue;
      }
      out.push_back(statement());
    }
    return out;
  }

  Stmt switch_statement() {
    SourcePos pos = here();
    take();
    expect_punct("(");
    auto scrutinee = expression();
    expect_punct(")");
    expect_punct("{");
    Switch node{scrutinee, {}, {}};
    bool seen_default = false;
    while (!is_punct("}")) {
      if (is_ident("case")) {
        take();
        auto label = primary();
        expect_punct(":");
        node.cases.push_back({label, case_body()});
      } else if (is_ident("default")) {
        if (seen_default) fail("duplicate default label");
        seen_default = true;
        take();
        expect_punct(":");
        node.default_body = case_body();
      } else {
        fail("expected case or default");
      }
    }
    take();
    return Stmt{std::move(node), pos};
  }

  ExprPtr expression() {
    auto left = primary();
    while (is_punct("+")) {
      take();
      auto right = primary();
      left = make_expr(Concat{left, right}, left->pos);
    }
    return left;
  }

  ExprPtr primary() {
    const Token& t = peek();
    SourcePos pos = here();
    if (t.kind == Token::Kind::String) return make_expr(StrLit{take().text}, pos);
    if (is_punct("(")) {
      take();
      auto e = expression();
      expect_punct(")");
      return e;
    }
    if (t.kind != Token::Kind::Ident) fail("expected expression");
    if (t.text == "true" || t.text == "false") return make_expr(BoolLit{take().text == "true"}, pos);
    std::string name = take().text;
    while (is_punct(".")) {
      take();
      name += "." + expect_ident();
    }
    if (!is_punct("(")) return make_expr(Var{name}, pos);
    take();
    Call call{name, {}, 0};
    if (!is_punct(")")) {
      call.args.push_back(expression());
      while (is_punct(",")) {
        take();
        call.args.push_back(expression());
      }
    }
    if (!is_punct(")")) fail("expected ')'");
    call.end_offset = take().offset + 1;
    return make_expr(std::move(call), pos);
  }

 public:
  std::vector<ExprPtr> sink_exprs_;

 private:
  const std::vector<Token>& toks_;
  const TemplateDoc& doc_;
  const LineIndex& lines_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Splits `text` into markup, scriptlets and expression sinks, then parses the
// host code of all scriptlets as one statement stream so that blocks may span
// several `<% %>` islands (the usual JSP idiom for if/else around markup).
inline TemplateDoc parse_template(std::string_view text, std::string name) {
  TemplateDoc doc;
  doc.name = std::move(name);
  doc.source = std::string(text);
  detail::LineIndex lines(text);

  std::size_t i = 0;
  while (i < text.size()) {
    auto open = text.find("<%", i);
    if (open != i) {
      auto stop = open == std::string_view::npos ? text.size() : open;
      doc.nodes.push_back({TemplateNode::Kind::Html, std::string(text.substr(i, stop - i)),
                           lines.at(i)});
      i = stop;
      continue;
    }
    if (text.substr(open, 4) == "<%--") {
      auto close = text.find("--%>", open + 4);
      if (close == std::string_view::npos) throw ParseError("unterminated comment", lines.at(open));
      doc.nodes.push_back({TemplateNode::Kind::Comment,
                           std::string(text.substr(open, close + 4 - open)), lines.at(open)});
      i = close + 4;
      continue;
    }
    if (open + 2 < text.size() && (text[open + 2] == '@' || text[open + 2] == '!'))
      throw ParseError("JSP directives and declarations are not supported", lines.at(open));
    auto close = text.find("%>", open + 2);
    if (close == std::string_view::npos)
      throw ParseError("unterminated scriptlet", lines.at(open));
    bool is_sink = open + 2 < text.size() && text[open + 2] == '=';
    doc.nodes.push_back({is_sink ? TemplateNode::Kind::ExprSink : TemplateNode::Kind::Scriptlet,
                         std::string(text.substr(open, close + 2 - open)), lines.at(open)});
    i = close + 2;
  }

  std::vector<detail::Token> stream;
  std::vector<ExprPtr> sink_exprs(doc.nodes.size());
  for (std::size_t n = 0; n < doc.nodes.size(); ++n) {
    const auto& node = doc.nodes[n];
    switch (node.kind) {
      case TemplateNode::Kind::Html:
        stream.push_back({detail::Token::Kind::Html, {}, node.pos.offset, n});
        break;
      case TemplateNode::Kind::Comment: break;
      case TemplateNode::Kind::Scriptlet:
        detail::lex_host(text, node.pos.offset + 2, node.pos.offset + node.raw.size() - 2, lines,
                         stream);
        break;
      case TemplateNode::Kind::ExprSink: {
        std::vector<detail::Token> toks;
        auto begin = node.pos.offset + 3;
        auto end = node.pos.offset + node.raw.size() - 2;
        detail::lex_host(text, begin, end, lines, toks);
        toks.push_back({detail::Token::Kind::End, {}, end});
        detail::HostParser sub(toks, doc, lines);
        sink_exprs[n] = sub.parse_lone_expr();
        stream.push_back({detail::Token::Kind::Sink, {}, node.pos.offset, n});
        break;
      }
    }
  }
  stream.push_back({detail::Token::Kind::End, {}, text.size()});
  detail::HostParser parser(stream, doc, lines);
  parser.sink_exprs_ = std::move(sink_exprs);
  doc.body = parser.parse_all();
  return doc;
}

namespace detail {

inline StmtList normalize_list(const StmtList& in) {
  StmtList out;
  out.reserve(in.size());
  for (const auto& s : in) {
    if (const auto* h = std::get_if<HtmlText>(&s.node)) {
      out.push_back(Stmt{Write{make_expr(StrLit{h->text}, s.pos), WriteOrigin::Html, {}}, s.pos});
    } else if (const auto* k = std::get_if<SinkExpr>(&s.node)) {
      out.push_back(Stmt{Write{k->expr, WriteOrigin::ExprSink, {}}, s.pos});
    } else if (const auto* f = std::get_if<If>(&s.node)) {
      out.push_back(Stmt{If{f->cond, normalize_list(f->then_branch), normalize_list(f->else_branch)},
                         s.pos});
    } else if (const auto* sw = std::get_if<Switch>(&s.node)) {
      Switch copy{sw->scrutinee, {}, normalize_list(sw->default_body)};
      for (const auto& c : sw->cases) copy.cases.push_back({c.label, normalize_list(c.body)});
      out.push_back(Stmt{std::move(copy), s.pos});
    } else {
      out.push_back(s);
    }
  }
  return out;
}

}  // namespace detail

// Markup chunks and `<%= %>` sinks become Write statements at the same
// position, which leaves one uniform statement language for analysis.
inline TemplateDoc normalize_writes(const TemplateDoc& doc) {
  TemplateDoc out = doc;
  out.body = detail::normalize_list(doc.body);
  out.normalized = true;
  return out;
}

// ---------------------------------------------------------------------------
// Printing (Java-like surface syntax, used by `extract` and diagnostics)

inline std::string quote_java(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

inline std::string to_string(const Expr& e) {
  return std::visit(
      [](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, StrLit>) {
          return quote_java(n.value);
        } else if constexpr (std::is_same_v<T, BoolLit>) {
          return n.value ? "true" : "false";
        } else if constexpr (std::is_same_v<T, Var>) {
          return n.name;
        } else if constexpr (std::is_same_v<T, Call>) {
          std::string out = n.callee + "(";
          for (std::size_t i = 0; i < n.args.size(); ++i) {
            if (i) out += ", ";
            out += to_string(*n.args[i]);
          }
          return out + ")";
        } else {
          return to_string(*n.left) + " + " + to_string(*n.right);
        }
      },
      e.node);
}

inline void print_stmts(const StmtList& list, std::string& out, int depth);

inline void print_stmt(const Stmt& s, std::string& out, int depth) {
  std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  std::string line_tag = "/* " + std::to_string(s.pos.line) + " */ ";
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Decl>) {
          out += indent + line_tag + n.type_name + " " + n.var + " = " + to_string(*n.init) + ";\n";
        } else if constexpr (std::is_same_v<T, Assign>) {
          out += indent + line_tag + n.var + " = " + to_string(*n.value) + ";\n";
        } else if constexpr (std::is_same_v<T, If>) {
          out += indent + line_tag + "if (" + to_string(*n.cond) + ") {\n";
          print_stmts(n.then_branch, out, depth + 1);
          out += indent + "} else {\n";
          print_stmts(n.else_branch, out, depth + 1);
          out += indent + "}\n";
        } else if constexpr (std::is_same_v<T, Switch>) {
          out += indent + line_tag + "switch (" + to_string(*n.scrutinee) + ") {\n";
          for (const auto& c : n.cases) {
            out += indent + "case " + to_string(*c.label) + ":\n";
            print_stmts(c.body, out, depth + 1);
          }
          out += indent + "default:\n";
          print_stmts(n.default_body, out, depth + 1);
          out += indent + "}\n";
        } else if constexpr (std::is_same_v<T, Write>) {
          out += indent + line_tag + "out.write(" + to_string(*n.value) + ");\n";
        } else if constexpr (std::is_same_v<T, CondCapture>) {
          out += indent + line_tag + "boolean " + n.var + " = (" + to_string(*n.cond) + ");\n";
        } else if constexpr (std::is_same_v<T, HtmlText>) {
          out += indent + line_tag + "/* html */ " + quote_java(n.text) + "\n";
        } else {
          out += indent + line_tag + "<%= " + to_string(*n.expr) + " %>\n";
        }
      },
      s.node);
}

inline void print_stmts(const StmtList& list, std::string& out, int depth) {
  for (const auto& s : list) print_stmt(s, out, depth);
}

inline std::string to_string(const StmtList& list) {
  std::string out;
  print_stmts(list, out, 0);
  return out;
}

}  // namespace xssynth
