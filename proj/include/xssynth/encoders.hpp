#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xssynth {

// Output encoders known to the analysis. The set is closed.
enum class EncoderId { Html, HtmlDecimal, JavaScript, Url, Css, Identity };

// Only the JavaScript encoder has library-dependent behaviour.
//   Permissive: Apache/Spring style, backslash-escapes quotes and backslash.
//   Strict:     ESAPI style, hex-escapes everything but [A-Za-z0-9].
enum class JsStyle { Permissive, Strict };

struct EncoderVariant {
  JsStyle js_style = JsStyle::Permissive;
  friend bool operator==(const EncoderVariant&, const EncoderVariant&) = default;
};

// Application order is list order: front() is applied first.
using EncoderChain = std::vector<EncoderId>;

inline constexpr std::array<EncoderId, 6> kAllEncoders = {
    EncoderId::Html, EncoderId::HtmlDecimal, EncoderId::JavaScript,
    EncoderId::Url,  EncoderId::Css,         EncoderId::Identity};

// Call name used in templates and config files.
inline std::string_view encoder_call_name(EncoderId id) {
  switch (id) {
    case EncoderId::Html: return "escapeHtml";
    case EncoderId::HtmlDecimal: return "escapeHtmlDecimal";
    case EncoderId::JavaScript: return "escapeJavaScript";
    case EncoderId::Url: return "escapeUrl";
    case EncoderId::Css: return "escapeCss";
    case EncoderId::Identity: return "identity";
  }
  return "identity";
}

// Short enum spelling used in JSON reports ("Html", "JavaScript", ...).
inline std::string_view encoder_id_name(EncoderId id) {
  switch (id) {
    case EncoderId::Html: return "Html";
    case EncoderId::HtmlDecimal: return "HtmlDecimal";
    case EncoderId::JavaScript: return "JavaScript";
    case EncoderId::Url: return "Url";
    case EncoderId::Css: return "Css";
    case EncoderId::Identity: return "Identity";
  }
  return "Identity";
}

inline std::optional<EncoderId> encoder_from_call_name(std::string_view name) {
  for (auto id : kAllEncoders)
    if (encoder_call_name(id) == name) return id;
  return std::nullopt;
}

inline std::optional<EncoderId> encoder_from_id_name(std::string_view name) {
  for (auto id : kAllEncoders)
    if (encoder_id_name(id) == name) return id;
  return std::nullopt;
}

namespace detail {

inline constexpr char kHexUpper[] = "0123456789ABCDEF";

inline bool is_alnum_ascii(char32_t c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

// Decodes one UTF-8 sequence starting at `i`; malformed bytes decode to
// themselves (as Latin-1) so that no input byte is ever dropped.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
  auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[i + k]) & 0x3Fu; };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    char32_t cp = ((b0 & 0x1Fu) << 6) | byte(1);
    i += 2;
    return cp;
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    char32_t cp = ((b0 & 0x0Fu) << 12) | (byte(1) << 6) | byte(2);
    i += 3;
    return cp;
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    char32_t cp = ((b0 & 0x07u) << 18) | (byte(1) << 12) | (byte(2) << 6) | byte(3);
    i += 4;
    return cp;
  }
  ++i;
  return b0;
}

inline void append_hex(std::string& out, std::uint32_t v, int digits) {
  for (int shift = (digits - 1) * 4; shift >= 0; shift -= 4) out += kHexUpper[(v >> shift) & 0xF];
}

inline std::string encode_html(std::string_view in, bool decimal) {
  std::string out;
  out.reserve(in.size() + 16);
  for (char c : in) {
    switch (c) {
      case '&': out += decimal ? "&#38;" : "&amp;"; break;
      case '<': out += decimal ? "&#60;" : "&lt;"; break;
      case '>': out += decimal ? "&#62;" : "&gt;"; break;
      case '"': out += decimal ? "&#34;" : "&quot;"; break;
      case '\'':
        // escapeHtml leaves the single quote alone; that gap is what makes
        // it unsafe inside single-quoted JavaScript strings.
        if (decimal)
          out += "&#39;";
        else
          out += c;
        break;
      default: out += c;
    }
  }
  return out;
}

inline std::string encode_js_permissive(std::string_view in) {
  std::string out;
  out.reserve(in.size() + 16);
  for (char c : in) {
    switch (c) {
      case '\'': out += "\\'"; break;
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          out += "\\u00";
          append_hex(out, static_cast<unsigned char>(c), 2);
        } else {
          out += c;
        }
    }
  }
  return out;
}

inline std::string encode_js_strict(std::string_view in) {
  std::string out;
  out.reserve(in.size() * 4);
  for (std::size_t i = 0; i < in.size();) {
    std::size_t start = i;
    char32_t cp = next_code_point(in, i);
    if (is_alnum_ascii(cp)) {
      out.append(in.substr(start, i - start));
    } else if (cp < 0x100) {
      out += "\\x";
      append_hex(out, cp, 2);
    } else if (cp < 0x10000) {
      out += "\\u";
      append_hex(out, cp, 4);
    } else {
      // Astral characters become a UTF-16 surrogate pair.
      std::uint32_t v = cp - 0x10000;
      out += "\\u";
      append_hex(out, 0xD800 + (v >> 10), 4);
      out += "\\u";
      append_hex(out, 0xDC00 + (v & 0x3FF), 4);
    }
  }
  return out;
}

inline std::string encode_url(std::string_view in) {
  std::string out;
  out.reserve(in.size() * 3);
  for (char c : in) {
    if (is_alnum_ascii(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_' ||
        c == '~') {
      out += c;
    } else {
      out += '%';
      append_hex(out, static_cast<unsigned char>(c), 2);
    }
  }
  return out;
}

inline std::string encode_css(std::string_view in) {
  std::string out;
  out.reserve(in.size() * 4);
  for (std::size_t i = 0; i < in.size();) {
    std::size_t start = i;
    char32_t cp = next_code_point(in, i);
    if (is_alnum_ascii(cp)) {
      out.append(in.substr(start, i - start));
      continue;
    }
    out += '\\';
    append_hex(out, cp, cp < 0x100 ? 2 : (cp < 0x10000 ? 4 : 6));
    out += ' ';
  }
  return out;
}

}  // namespace detail

inline std::string encode(EncoderId id, EncoderVariant variant, std::string_view input) {
  switch (id) {
    case EncoderId::Html: return detail::encode_html(input, false);
    case EncoderId::HtmlDecimal: return detail::encode_html(input, true);
    case EncoderId::JavaScript:
      return variant.js_style == JsStyle::Strict ? detail::encode_js_strict(input)
                                                 : detail::encode_js_permissive(input);
    case EncoderId::Url: return detail::encode_url(input);
    case EncoderId::Css: return detail::encode_css(input);
    case EncoderId::Identity: return std::string(input);
  }
  return std::string(input);
}

inline std::string apply_chain(const EncoderChain& chain, EncoderVariant variant,
                               std::string_view input) {
  std::string value(input);
  for (auto id : chain) value = encode(id, variant, value);
  return value;
}

// The six repair candidates in preference order. Singles come first so a
// verified single encoder always wins over a double one.
inline std::vector<EncoderChain> candidate_encoders() {
  return {
      {EncoderId::Html},
      {EncoderId::JavaScript},
      {EncoderId::Css},
      {EncoderId::Url},
      {EncoderId::Html, EncoderId::JavaScript},  // JavaScript(HTML(x))
      {EncoderId::Url, EncoderId::JavaScript},   // JavaScript(URL(x))
  };
}

inline std::string chain_to_string(const EncoderChain& chain) {
  std::string out = "[";
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (i) out += ", ";
    out += encoder_id_name(chain[i]);
  }
  return out + "]";
}

}  // namespace xssynth
