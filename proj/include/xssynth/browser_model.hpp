#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xssynth {

enum class ParseContext {
  HtmlBody,
  TagAttr,
  UriAttr,
  StyleAttr,
  StyleBlock,
  EventAttr,
  ScriptBlock,
  RawText
};

inline std::string_view context_name(ParseContext c) {
  switch (c) {
    case ParseContext::HtmlBody: return "HtmlBody";
    case ParseContext::TagAttr: return "TagAttr";
    case ParseContext::UriAttr: return "UriAttr";
    case ParseContext::StyleAttr: return "StyleAttr";
    case ParseContext::StyleBlock: return "StyleBlock";
    case ParseContext::EventAttr: return "EventAttr";
    case ParseContext::ScriptBlock: return "ScriptBlock";
    case ParseContext::RawText: return "RawText";
  }
  return "HtmlBody";
}

struct PayloadHit {
  int line = 0;
  ParseContext context = ParseContext::HtmlBody;
  friend bool operator==(const PayloadHit&, const PayloadHit&) = default;
};

// One interpreter hand-off observed while scanning, for debugging.
struct ContextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  ParseContext context = ParseContext::HtmlBody;
  std::string detail;
};

// A string as the consuming interpreter finally sees it: entity-decoded
// text, a decoded JS string literal, an unescaped CSS value, and so on.
struct DataView {
  ParseContext context = ParseContext::HtmlBody;
  std::string text;
};

struct ExecutionReport {
  std::vector<PayloadHit> hits;
  std::vector<std::string> parse_notes;
  std::vector<ContextSpan> trace;  // filled only when requested
  std::vector<DataView> views;     // likewise
};

// Attributes whose value the browser resolves as a URI.
inline constexpr std::array<std::string_view, 17> kUriAttributes = {
    "src",      "href",    "codebase", "cite",      "action", "background",
    "data",     "classid", "longdesc", "profile",   "usemap", "formaction",
    "icon",     "manifest", "poster",  "srcset",    "archive"};

// CSS properties whose url() value is fetched (and, for javascript:, run).
inline constexpr std::array<std::string_view, 6> kUrlProperties = {
    "background-image", "list-style-image", "content", "cursor", "cue-after", "cue-before"};

namespace detail {

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = ascii_lower(c);
  return out;
}

inline bool iequals_prefix(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (ascii_lower(s[i]) != prefix[i]) return false;
  return true;
}

inline bool html_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f';
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

inline int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace detail

// Character references as a browser resolves them in text and attributes.
inline std::string decode_entities(std::string_view text) {
  if (text.find('&') == std::string_view::npos) return std::string(text);
  static constexpr std::pair<std::string_view, char> kNamed[] = {
      {"amp;", '&'}, {"lt;", '<'}, {"gt;", '>'}, {"quot;", '"'}, {"apos;", '\''}};
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] != '&') {
      out += text[i++];
      continue;
    }
    std::string_view rest = text.substr(i + 1);
    if (!rest.empty() && rest[0] == '#') {
      bool hex = rest.size() > 1 && (rest[1] == 'x' || rest[1] == 'X');
      std::size_t j = hex ? 2 : 1;
      std::uint32_t cp = 0;
      std::size_t digits = 0;
      for (; j < rest.size(); ++j, ++digits) {
        int v = hex ? detail::hex_value(rest[j]) : (std::isdigit(static_cast<unsigned char>(rest[j])) ? rest[j] - '0' : -1);
        if (v < 0) break;
        cp = std::min<std::uint32_t>(cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v), 0x110000);
      }
      if (digits == 0) {
        out += text[i++];
        continue;
      }
      if (j < rest.size() && rest[j] == ';') ++j;
      detail::append_utf8(out, cp);
      i += 1 + j;
      continue;
    }
    bool matched = false;
    for (const auto& [name, ch] : kNamed) {
      if (rest.substr(0, name.size()) == name) {
        out += ch;
        i += 1 + name.size();
        matched = true;
        break;
      }
    }
    if (!matched) out += text[i++];
  }
  return out;
}

// %HH sequences become bytes; malformed escapes stay as written.
inline std::string percent_decode(std::string_view text) {
  if (text.find('%') == std::string_view::npos) return std::string(text);
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      int hi = detail::hex_value(text[i + 1]);
      int lo = detail::hex_value(text[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out += static_cast<char>(hi * 16 + lo);
        i += 2;
        continue;
      }
    }
    out += text[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mini JavaScript: enough syntax to decide whether a block parses and which
// `attack(n)` calls sit in executable position.

namespace detail::js {

struct Token {
  enum class Kind { Ident, Number, String, Punct, End };
  Kind kind = Kind::End;
  std::string text;
  bool newline_before = false;
  bool integer = false;
};

struct SyntaxError {
  std::string message;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    bool nl = false;
    while (true) {
      nl = skip_space_and_comments() || nl;
      if (i_ >= src_.size()) {
        out.push_back({Token::Kind::End, {}, nl, false});
        return out;
      }
      Token t = next();
      t.newline_before = nl;
      nl = false;
      out.push_back(std::move(t));
    }
  }

 private:
  static bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
  }
  static bool ident_part(char c) {
    return ident_start(c) || std::isdigit(static_cast<unsigned char>(c));
  }

  // Returns true when a line terminator was crossed.
  bool skip_space_and_comments() {
    bool nl = false;
    while (i_ < src_.size()) {
      char c = src_[i_];
      if (c == '\n' || c == '\r') {
        nl = true;
        ++i_;
      } else if (c == ' ' || c == '\t' || c == '\f' || c == '\v') {
        ++i_;
      } else if (c == '/' && i_ + 1 < src_.size() && src_[i_ + 1] == '/') {
        while (i_ < src_.size() && src_[i_] != '\n' && src_[i_] != '\r') ++i_;
      } else if (c == '/' && i_ + 1 < src_.size() && src_[i_ + 1] == '*') {
        auto end = src_.find("*/", i_ + 2);
        if (end == std::string_view::npos) throw SyntaxError{"unterminated comment"};
        if (src_.substr(i_, end - i_).find_first_of("\r\n") != std::string_view::npos) nl = true;
        i_ = end + 2;
      } else {
        break;
      }
    }
    return nl;
  }

  Token next() {
    char c = src_[i_];
    if (ident_start(c)) {
      std::size_t b = i_;
      while (i_ < src_.size() && ident_part(src_[i_])) ++i_;
      return {Token::Kind::Ident, std::string(src_.substr(b, i_ - b))};
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_ + 1])))) {
      return number();
    }
    if (c == '\'' || c == '"') return string(c);
    static constexpr std::string_view kPuncts[] = {"===", "!==", "==", "!=", "<=", ">=", "&&",
                                                   "||",  "+",   "-",  "*",  "/",  "%",  "<",
                                                   ">",   "!",   "=",  "(",  ")",  "{",  "}",
                                                   "[",   "]",   ";",  ",",  ".",  "?",  ":"};
    for (auto p : kPuncts) {
      if (src_.substr(i_, p.size()) == p) {
        i_ += p.size();
        return {Token::Kind::Punct, std::string(p)};
      }
    }
    throw SyntaxError{std::string("unexpected character '") + c + "'"};
  }

  Token number() {
    std::size_t b = i_;
    bool integer = true;
    if (src_[i_] == '0' && i_ + 1 < src_.size() && (src_[i_ + 1] == 'x' || src_[i_ + 1] == 'X')) {
      i_ += 2;
      std::size_t d = i_;
      while (i_ < src_.size() && hex_value(src_[i_]) >= 0) ++i_;
      if (d == i_) throw SyntaxError{"malformed hex literal"};
      integer = false;
    } else {
      while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) ++i_;
      if (i_ < src_.size() && src_[i_] == '.') {
        integer = false;
        ++i_;
        while (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) ++i_;
      }
    }
    if (i_ < src_.size() && ident_part(src_[i_])) throw SyntaxError{"identifier after number"};
    Token t{Token::Kind::Number, std::string(src_.substr(b, i_ - b))};
    t.integer = integer;
    return t;
  }

  Token string(char quote) {
    std::string value;
    ++i_;
    while (true) {
      if (i_ >= src_.size()) throw SyntaxError{"unterminated string"};
      char c = src_[i_++];
      if (c == quote) break;
      if (c == '\n' || c == '\r') throw SyntaxError{"newline in string"};
      if (c != '\\') {
        value += c;
        continue;
      }
      if (i_ >= src_.size()) throw SyntaxError{"unterminated string"};
      char e = src_[i_++];
      switch (e) {
        case 'n': value += '\n'; break;
        case 't': value += '\t'; break;
        case 'r': value += '\r'; break;
        case 'b': value += '\b'; break;
        case 'f': value += '\f'; break;
        case 'v': value += '\v'; break;
        case '0': value += '\0'; break;
        case 'x': append_code_unit(value, hex_escape(2)); break;
        case 'u': {
          std::uint32_t cp = hex_escape(4);
          if (cp >= 0xD800 && cp <= 0xDBFF && i_ + 1 < src_.size() && src_[i_] == '\\' && src_[i_ + 1] == 'u') {
            std::size_t save = i_;
            i_ += 2;
            std::uint32_t low = hex_escape(4);
            if (low >= 0xDC00 && low <= 0xDFFF)
              cp = 0x10000 + ((cp - 0xD800) << 10) + (low - 0xDC00);
            else
              i_ = save;
          }
          append_code_unit(value, cp);
          break;
        }
        case '\r':
          if (i_ < src_.size() && src_[i_] == '\n') ++i_;
          break;
        case '\n': break;
        default: value += e;
      }
    }
    return {Token::Kind::String, std::move(value)};
  }

  static void append_code_unit(std::string& out, std::uint32_t cp) {
    if (cp == 0)
      out += '\0';
    else
      append_utf8(out, cp);
  }

  std::uint32_t hex_escape(int digits) {
    std::uint32_t v = 0;
    for (int k = 0; k < digits; ++k) {
      if (i_ >= src_.size() || hex_value(src_[i_]) < 0) throw SyntaxError{"malformed escape"};
      v = v * 16 + static_cast<std::uint32_t>(hex_value(src_[i_++]));
    }
    return v;
  }

  std::string_view src_;
  std::size_t i_ = 0;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  // Lines of `attack(n)` calls in executable position, in source order.
  std::vector<int> program() {
    while (!at_end()) statement();
    return hits_;
  }

 private:
  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  const Token& take() {
    const Token& t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  bool at_end() const { return peek().kind == Token::Kind::End; }
  bool is_punct(std::string_view p) const {
    return peek().kind == Token::Kind::Punct && peek().text == p;
  }
  bool is_word(std::string_view w) const {
    return peek().kind == Token::Kind::Ident && peek().text == w;
  }
  void expect(std::string_view p) {
    if (!is_punct(p)) throw SyntaxError{"expected '" + std::string(p) + "'"};
    take();
  }

  // Explicit `;`, or automatic insertion before `}`, end of input, or a
  // line break.
  void end_statement() {
    if (is_punct(";")) {
      take();
      return;
    }
    if (is_punct("}") || at_end() || peek().newline_before) return;
    throw SyntaxError{"missing ';'"};
  }

  void statement() {
    if (is_punct(";")) {
      take();
      return;
    }
    if (is_punct("{")) {
      take();
      while (!is_punct("}")) {
        if (at_end()) throw SyntaxError{"unterminated block"};
        statement();
      }
      take();
      return;
    }
    if (is_word("var") || is_word("let") || is_word("const")) {
      take();
      do {
        if (peek().kind != Token::Kind::Ident) throw SyntaxError{"expected variable name"};
        take();
        if (is_punct("=")) {
          take();
          assignment();
        }
        if (!is_punct(",")) break;
        take();
      } while (true);
      end_statement();
      return;
    }
    if (is_word("if")) {
      take();
      expect("(");
      expression();
      expect(")");
      statement();
      if (is_word("else")) {
        take();
        statement();
      }
      return;
    }
    if (is_word("return")) {
      take();
      if (!is_punct(";") && !is_punct("}") && !at_end() && !peek().newline_before) expression();
      end_statement();
      return;
    }
    expression();
    end_statement();
  }

  void expression() {
    assignment();
    while (is_punct(",")) {
      take();
      assignment();
    }
  }

  void assignment() {
    bool target = conditional();
    if (is_punct("=")) {
      if (!target) throw SyntaxError{"invalid assignment target"};
      take();
      assignment();
    }
  }

  bool conditional() {
    bool target = binary(0);
    if (is_punct("?")) {
      take();
      assignment();
      expect(":");
      assignment();
      return false;
    }
    return target;
  }

  static int precedence(std::string_view op) {
    if (op == "||") return 1;
    if (op == "&&") return 2;
    if (op == "==" || op == "!=" || op == "===" || op == "!==") return 3;
    if (op == "<" || op == ">" || op == "<=" || op == ">=") return 4;
    if (op == "+" || op == "-") return 5;
    if (op == "*" || op == "/" || op == "%") return 6;
    return -1;
  }

  // Returns whether the parsed operand is a valid assignment target.
  bool binary(int min_prec) {
    bool target = unary();
    while (peek().kind == Token::Kind::Punct) {
      int p = precedence(peek().text);
      if (p < 0 || p < min_prec) break;
      take();
      binary(p + 1);
      target = false;
    }
    return target;
  }

  bool unary() {
    if (is_punct("!") || is_punct("-") || is_punct("+") || is_word("typeof") || is_word("void")) {
      take();
      unary();
      return false;
    }
    return postfix();
  }

  bool postfix() {
    bool bare_attack = false;
    bool target = primary(bare_attack);
    while (true) {
      if (is_punct(".")) {
        take();
        if (peek().kind != Token::Kind::Ident) throw SyntaxError{"expected property name"};
        take();
        target = true;
        bare_attack = false;
      } else if (is_punct("[")) {
        take();
        expression();
        expect("]");
        target = true;
        bare_attack = false;
      } else if (is_punct("(")) {
        take();
        std::size_t first = pos_;
        int args = 0;
        if (!is_punct(")")) {
          assignment();
          ++args;
          while (is_punct(",")) {
            take();
            assignment();
            ++args;
          }
        }
        expect(")");
        if (bare_attack && args == 1 && pos_ == first + 2 &&
            toks_[first].kind == Token::Kind::Number && toks_[first].integer) {
          int line = 0;
          const auto& digits = toks_[first].text;
          auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), line);
          if (ec == std::errc()) hits_.push_back(line);
        }
        target = false;
        bare_attack = false;
      } else {
        return target;
      }
    }
  }

  bool primary(bool& bare_attack) {
    const Token& t = peek();
    switch (t.kind) {
      case Token::Kind::Ident:
        bare_attack = t.text == "attack";
        take();
        return true;
      case Token::Kind::Number:
      case Token::Kind::String: take(); return false;
      case Token::Kind::Punct:
        if (t.text == "(") {
          take();
          expression();
          expect(")");
          return false;
        }
        if (t.text == "[") {
          take();
          while (!is_punct("]")) {
            assignment();
            if (!is_punct(",")) break;
            take();
          }
          expect("]");
          return false;
        }
        throw SyntaxError{"unexpected '" + t.text + "'"};
      case Token::Kind::End: throw SyntaxError{"unexpected end of script"};
    }
    throw SyntaxError{"unexpected token"};
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<int> hits_;
};

}  // namespace detail::js

// A syntax error anywhere means the block runs nothing.
inline std::vector<PayloadHit> js_executes(std::string_view code, ParseContext context,
                                           std::vector<std::string>* notes = nullptr) {
  try {
    detail::js::Lexer lexer(code);
    detail::js::Parser parser(lexer.run());
    std::vector<PayloadHit> out;
    for (int line : parser.program()) out.push_back({line, context});
    return out;
  } catch (const detail::js::SyntaxError& e) {
    if (notes) notes->push_back("syntax error in " + std::string(context_name(context)) + ": " + e.message);
    return {};
  }
}

// Decoded values of every string literal, or nothing if the code does not parse.
inline std::vector<std::string> js_string_values(std::string_view code) {
  try {
    auto toks = detail::js::Lexer(code).run();
    detail::js::Parser(toks).program();
    std::vector<std::string> out;
    for (const auto& t : toks)
      if (t.kind == detail::js::Token::Kind::String) out.push_back(t.text);
    return out;
  } catch (const detail::js::SyntaxError&) {
    return {};
  }
}

// CSS escapes: `\` + 1-6 hex digits (one trailing space eaten) or `\` + char.
inline std::string css_unescape(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] != '\\' || i + 1 >= text.size()) {
      out += text[i++];
      continue;
    }
    std::size_t j = i + 1;
    std::uint32_t cp = 0;
    while (j < text.size() && j - i <= 6 && detail::hex_value(text[j]) >= 0)
      cp = cp * 16 + static_cast<std::uint32_t>(detail::hex_value(text[j++]));
    if (j == i + 1) {
      out += text[j];
      i = j + 1;
      continue;
    }
    detail::append_utf8(out, cp);
    if (j < text.size() && text[j] == ' ') ++j;
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTML, URI and CSS layers

namespace detail {

class Scanner {
 public:
  Scanner(std::string_view doc, bool want_trace, bool want_views = false)
      : doc_(doc), want_trace_(want_trace), want_views_(want_views) {}

  ExecutionReport run() {
    std::size_t i = 0;
    while (i < doc_.size()) {
      auto lt = doc_.find('<', i);
      view(ParseContext::HtmlBody, [&] { return decode_entities(doc_.substr(i, std::min(lt, doc_.size()) - i)); });
      if (lt == std::string_view::npos) break;
      i = markup(lt);
    }
    return std::move(report_);
  }

 private:
  static bool tag_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

  void note(std::string msg) { report_.parse_notes.push_back(std::move(msg)); }

  void trace(std::size_t b, std::size_t e, ParseContext c, std::string_view detail) {
    if (want_trace_) report_.trace.push_back({b, e, c, std::string(detail)});
  }

  // `make` is only evaluated when views are requested.
  template <class F>
  void view(ParseContext c, F&& make) {
    if (!want_views_) return;
    std::string text = make();
    if (!text.empty()) report_.views.push_back({c, std::move(text)});
  }

  // Code that never names the payload function cannot produce a hit, so it
  // is only parsed when views (string values) are wanted.
  void run_js(std::string_view code, ParseContext c) {
    js_views(code, c);
    if (code.find("attack") == std::string_view::npos) return;
    add_hits(js_executes(code, c, &report_.parse_notes));
  }

  void js_views(std::string_view code, ParseContext c) {
    if (!want_views_) return;
    for (auto& v : js_string_values(code)) view(c, [&] { return std::move(v); });
  }

  void add_hits(const std::vector<PayloadHit>& hits) {
    for (const auto& h : hits)
      if (std::find(report_.hits.begin(), report_.hits.end(), h) == report_.hits.end())
        report_.hits.push_back(h);
  }

  // Handles the construct starting at `lt` and returns where text resumes.
  std::size_t markup(std::size_t lt) {
    std::string_view rest = doc_.substr(lt);
    if (rest.substr(0, 4) == "<!--") {
      auto end = doc_.find("-->", lt + 4);
      return end == std::string_view::npos ? doc_.size() : end + 3;
    }
    if (rest.size() > 1 && (rest[1] == '!' || rest[1] == '?')) {
      auto end = doc_.find('>', lt);
      return end == std::string_view::npos ? doc_.size() : end + 1;
    }
    if (rest.size() > 2 && rest[1] == '/' && tag_name_start(rest[2])) {
      auto end = doc_.find('>', lt);
      return end == std::string_view::npos ? doc_.size() : end + 1;
    }
    if (rest.size() > 1 && rest[1] == '/') {
      auto end = doc_.find('>', lt);
      return end == std::string_view::npos ? doc_.size() : end + 1;
    }
    if (rest.size() > 1 && tag_name_start(rest[1])) return start_tag(lt);
    return lt + 1;
  }

  struct Attribute {
    std::string name;
    std::string value;
    std::size_t begin = 0, end = 0;
  };

  std::size_t start_tag(std::size_t lt) {
    std::size_t i = lt + 1;
    std::size_t b = i;
    while (i < doc_.size() && !html_space(doc_[i]) && doc_[i] != '/' && doc_[i] != '>') ++i;
    std::string name = to_lower(doc_.substr(b, i - b));
    std::vector<Attribute> attrs;
    bool closed = false;
    while (i < doc_.size()) {
      char c = doc_[i];
      if (html_space(c) || c == '/') {
        ++i;
        continue;
      }
      if (c == '>') {
        closed = true;
        ++i;
        break;
      }
      Attribute a;
      a.begin = i;
      std::size_t nb = i;
      ++i;  // a leading '=' belongs to the name
      while (i < doc_.size() && !html_space(doc_[i]) && doc_[i] != '/' && doc_[i] != '>' &&
             doc_[i] != '=')
        ++i;
      a.name = to_lower(doc_.substr(nb, i - nb));
      std::size_t j = i;
      while (j < doc_.size() && html_space(doc_[j])) ++j;
      if (j < doc_.size() && doc_[j] == '=') {
        i = j + 1;
        while (i < doc_.size() && html_space(doc_[i])) ++i;
        if (i < doc_.size() && (doc_[i] == '"' || doc_[i] == '\'')) {
          char q = doc_[i];
          auto close = doc_.find(q, i + 1);
          if (close == std::string_view::npos) {
            i = doc_.size();
            break;
          }
          a.value = std::string(doc_.substr(i + 1, close - i - 1));
          i = close + 1;
        } else {
          std::size_t vb = i;
          while (i < doc_.size() && !html_space(doc_[i]) && doc_[i] != '>') ++i;
          a.value = std::string(doc_.substr(vb, i - vb));
        }
      }
      a.end = i;
      // First occurrence wins, as in HTML5.
      bool dup = std::any_of(attrs.begin(), attrs.end(),
                             [&](const Attribute& o) { return o.name == a.name; });
      if (dup)
        note("duplicate attribute '" + a.name + "' ignored");
      else
        attrs.push_back(std::move(a));
    }
    if (!closed) {
      note("unterminated <" + name + "> tag dropped");
      return doc_.size();
    }
    for (const auto& a : attrs) attribute(a);
    if (name == "script" || name == "style" || name == "textarea" || name == "title")
      return raw_text(name, i);
    return i;
  }

  void attribute(const Attribute& a) {
    if (std::find(kUriAttributes.begin(), kUriAttributes.end(), a.name) != kUriAttributes.end()) {
      trace(a.begin, a.end, ParseContext::UriAttr, a.name);
      uri(decode_entities(a.value), ParseContext::UriAttr);
    } else if (a.name == "style") {
      trace(a.begin, a.end, ParseContext::StyleAttr, a.name);
      std::string decoded = decode_entities(a.value);
      view(ParseContext::StyleAttr, [&] { return css_unescape(decoded); });
      css(decoded, ParseContext::StyleAttr);
    } else if (a.name.size() > 2 && a.name.compare(0, 2, "on") == 0) {
      trace(a.begin, a.end, ParseContext::EventAttr, a.name);
      std::string decoded = decode_entities(a.value);
      run_js(decoded, ParseContext::EventAttr);
    } else {
      trace(a.begin, a.end, ParseContext::TagAttr, a.name);
      view(ParseContext::TagAttr, [&] { return decode_entities(a.value); });
    }
  }

  static bool javascript_scheme(std::string_view value) {
    constexpr std::string_view kScheme = "javascript:";
    std::size_t i = 0;
    while (i < value.size() && static_cast<unsigned char>(value[i]) <= 0x20) ++i;
    for (char want : kScheme) {
      while (i < value.size() && (value[i] == '\t' || value[i] == '\n' || value[i] == '\r')) ++i;
      if (i >= value.size() || ascii_lower(value[i]) != want) return false;
      ++i;
    }
    return true;
  }

  // Leading/trailing C0 and space are stripped and tab/newline removed, as a
  // URL parser does, before the scheme is compared.
  static std::string clean_uri(std::string_view value) {
    std::size_t b = 0, e = value.size();
    while (b < e && static_cast<unsigned char>(value[b]) <= 0x20) ++b;
    while (e > b && static_cast<unsigned char>(value[e - 1]) <= 0x20) --e;
    std::string cleaned;
    for (std::size_t k = b; k < e; ++k)
      if (value[k] != '\t' && value[k] != '\n' && value[k] != '\r') cleaned += value[k];
    return cleaned;
  }

  void uri(const std::string& value, ParseContext ctx) {
    if (!javascript_scheme(value)) {
      view(ctx, [&] { return percent_decode(clean_uri(value)); });
      return;
    }
    constexpr std::string_view kScheme = "javascript:";
    std::string code = percent_decode(std::string_view(clean_uri(value)).substr(kScheme.size()));
    run_js(code, ctx);
  }

  // Declarations are separated by ';', '{' and '}' at top level, so both
  // attribute bodies and style-sheet rules are covered.
  void css(std::string_view text, ParseContext ctx) {
    std::size_t i = 0;
    while (i <= text.size()) {
      std::size_t b = i;
      int depth = 0;
      char quote = 0;
      for (; i < text.size(); ++i) {
        char c = text[i];
        if (quote) {
          if (c == '\\') ++i;
          else if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
          quote = c;
        } else if (c == '(') {
          ++depth;
        } else if (c == ')') {
          if (depth) --depth;
        } else if (depth == 0 && (c == ';' || c == '{' || c == '}')) {
          break;
        }
      }
      declaration(text.substr(b, std::min(i, text.size()) - b), ctx);
      ++i;
    }
  }

  void declaration(std::string_view decl, ParseContext ctx) {
    auto colon = decl.find(':');
    if (colon == std::string_view::npos) return;
    auto trim = [](std::string_view s) {
      while (!s.empty() && html_space(s.front())) s.remove_prefix(1);
      while (!s.empty() && html_space(s.back())) s.remove_suffix(1);
      return s;
    };
    // Escapes only ever produce name or value characters, never delimiters.
    std::string prop = to_lower(css_unescape(trim(decl.substr(0, colon))));
    if (std::find(kUrlProperties.begin(), kUrlProperties.end(), prop) == kUrlProperties.end())
      return;
    std::string_view value = trim(decl.substr(colon + 1));
    if (!iequals_prefix(value, "url(")) return;
    std::string_view arg = value.substr(4);
    while (!arg.empty() && html_space(arg.front())) arg.remove_prefix(1);
    std::string target;
    if (!arg.empty() && (arg[0] == '"' || arg[0] == '\'')) {
      char q = arg[0];
      std::size_t k = 1;
      for (; k < arg.size() && arg[k] != q; ++k) {
        if (arg[k] == '\\' && k + 1 < arg.size()) ++k;
      }
      if (k >= arg.size()) return;
      target = std::string(arg.substr(1, k - 1));
    } else {
      // Unquoted: up to the ')' that balances url(.
      int depth = 1;
      std::size_t k = 0;
      for (; k < arg.size(); ++k) {
        if (arg[k] == '(') ++depth;
        if (arg[k] == ')' && --depth == 0) break;
      }
      if (k >= arg.size()) return;
      target = std::string(trim(arg.substr(0, k)));
    }
    uri(css_unescape(target), ctx);
  }

  std::size_t raw_text(const std::string& name, std::size_t body_begin) {
    std::size_t k = body_begin;
    std::size_t close = std::string_view::npos;
    while (k < doc_.size()) {
      auto lt = doc_.find("</", k);
      if (lt == std::string_view::npos) break;
      std::size_t after = lt + 2 + name.size();
      if (iequals_prefix(doc_.substr(lt + 2), name) &&
          (after >= doc_.size() || html_space(doc_[after]) || doc_[after] == '>' ||
           doc_[after] == '/')) {
        close = lt;
        break;
      }
      k = lt + 2;
    }
    if (close == std::string_view::npos) {
      note("unterminated <" + name + "> element");
      trace(body_begin, doc_.size(), ParseContext::RawText, name);
      return doc_.size();
    }
    std::string_view body = doc_.substr(body_begin, close - body_begin);
    if (name == "script") {
      trace(body_begin, close, ParseContext::ScriptBlock, name);
      run_js(body, ParseContext::ScriptBlock);
    } else if (name == "style") {
      trace(body_begin, close, ParseContext::StyleBlock, name);
      view(ParseContext::StyleBlock, [&] { return css_unescape(body); });
      css(body, ParseContext::StyleBlock);
    } else {
      trace(body_begin, close, ParseContext::RawText, name);
      view(ParseContext::RawText, [&] { return decode_entities(body); });
    }
    auto gt = doc_.find('>', close);
    return gt == std::string_view::npos ? doc_.size() : gt + 1;
  }

  std::string_view doc_;
  bool want_trace_;
  bool want_views_;
  ExecutionReport report_;
};

}  // namespace detail

inline ExecutionReport scan(std::string_view document, bool with_trace = false) {
  return detail::Scanner(document, with_trace).run();
}

inline std::vector<DataView> data_views(std::string_view document) {
  return detail::Scanner(document, false, true).run().views;
}

}  // namespace xssynth
