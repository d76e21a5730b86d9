#include <gtest/gtest.h>

#include <random>

#include "xssynth/browser_model.hpp"
#include "xssynth/encoders.hpp"

using namespace xssynth;

namespace {

const EncoderVariant kPermissive{JsStyle::Permissive};
const EncoderVariant kStrict{JsStyle::Strict};

std::vector<std::string> sample_inputs() {
  std::vector<std::string> out = {"",
                                  "plain",
                                  "<script> atk(); </script>",
                                  "'+ atk() + '",
                                  "'); attack(); //",
                                  "\"><img src=x onerror=a()>",
                                  "a&b;c\\d/e\n\r\t",
                                  "caf\xC3\xA9 \xE2\x82\xAC \xF0\x9F\x98\x80",
                                  "&amp;&lt;"};
  std::mt19937 rng(3);
  const std::string alphabet = "abcXYZ019 <>&\"';()+-=/\\:%#.\n\t_~";
  for (int i = 0; i < 300; ++i) {
    std::string s;
    int len = static_cast<int>(rng() % 24);
    for (int k = 0; k < len; ++k) s += alphabet[rng() % alphabet.size()];
    out.push_back(s);
  }
  return out;
}

bool contains_raw(std::string_view s, std::string_view set) {
  return s.find_first_of(set) != std::string_view::npos;
}

}  // namespace

TEST(Encoders, HtmlEscapesMarkup) {
  EXPECT_EQ(encode(EncoderId::Html, kPermissive, "<script> atk(); </script>"),
            "&lt;script&gt; atk(); &lt;/script&gt;");
}

TEST(Encoders, HtmlLeavesSingleQuote) {
  EXPECT_EQ(encode(EncoderId::Html, kPermissive, "'+ atk() + '"), "'+ atk() + '");
}

TEST(Encoders, HtmlDecimalEscapesSingleQuote) {
  EXPECT_EQ(encode(EncoderId::HtmlDecimal, kPermissive, "'); attack(); //"), "&#39;); attack(); //");
}

TEST(Encoders, JavaScriptPermissiveEscapesQuote) {
  EXPECT_EQ(encode(EncoderId::JavaScript, kPermissive, "'"), "\\'");
  EXPECT_EQ(encode(EncoderId::JavaScript, kPermissive, "a\"b\\c\n"), "a\\\"b\\\\c\\n");
  EXPECT_EQ(encode(EncoderId::JavaScript, kPermissive, "+();<>"), "+();<>");
}

TEST(Encoders, JavaScriptStrictHexEscapes) {
  EXPECT_EQ(encode(EncoderId::JavaScript, kStrict, "+"), "\\x2B");
  EXPECT_EQ(encode(EncoderId::JavaScript, kStrict, "aZ9 '"), "aZ9\\x20\\x27");
  EXPECT_EQ(encode(EncoderId::JavaScript, kStrict, "\xE2\x82\xAC"), "\\u20AC");
  EXPECT_EQ(encode(EncoderId::JavaScript, kStrict, "\xF0\x9F\x98\x80"), "\\uD83D\\uDE00");
}

TEST(Encoders, UrlAndCss) {
  EXPECT_EQ(encode(EncoderId::Url, kPermissive, "a b/-._~"), "a%20b%2F-._~");
  EXPECT_EQ(encode(EncoderId::Url, kPermissive, "\xC3\xA9"), "%C3%A9");
  EXPECT_EQ(encode(EncoderId::Css, kPermissive, "a(b)"), "a\\28 b\\29 ");
}

TEST(Encoders, IdentityIsUnchanged) {
  for (const auto& s : sample_inputs()) EXPECT_EQ(encode(EncoderId::Identity, kPermissive, s), s);
}

TEST(Encoders, ChainsApplyLeftToRight) {
  EXPECT_EQ(apply_chain({EncoderId::HtmlDecimal, EncoderId::JavaScript}, kPermissive, "'); attack(); //"),
            "&#39;); attack(); //");
  EXPECT_EQ(apply_chain({EncoderId::JavaScript, EncoderId::HtmlDecimal}, kPermissive, "'); attack(); //"),
            "\\&#39;); attack(); //");
  EXPECT_EQ(apply_chain({}, kPermissive, "x<y"), "x<y");
}

TEST(Encoders, ChainComposition) {
  for (const auto& s : sample_inputs()) {
    for (auto a : kAllEncoders) {
      EXPECT_EQ(apply_chain({a}, kStrict, s), encode(a, kStrict, s));
      for (auto b : kAllEncoders)
        EXPECT_EQ(apply_chain({a, b}, kPermissive, s), encode(b, kPermissive, encode(a, kPermissive, s)));
    }
  }
}

TEST(Encoders, CandidateListOrder) {
  auto c = candidate_encoders();
  ASSERT_EQ(c.size(), 6u);
  EXPECT_EQ(c[0], (EncoderChain{EncoderId::Html}));
  EXPECT_EQ(c[1], (EncoderChain{EncoderId::JavaScript}));
  EXPECT_EQ(c[2], (EncoderChain{EncoderId::Css}));
  EXPECT_EQ(c[3], (EncoderChain{EncoderId::Url}));
  EXPECT_EQ(c[4], (EncoderChain{EncoderId::Html, EncoderId::JavaScript}));
  EXPECT_EQ(c[5], (EncoderChain{EncoderId::Url, EncoderId::JavaScript}));
  auto first_double = std::find_if(c.begin(), c.end(), [](const EncoderChain& x) { return x.size() > 1; });
  EXPECT_TRUE(std::all_of(first_double, c.end(), [](const EncoderChain& x) { return x.size() > 1; }));
}

TEST(Encoders, HtmlRoundTripsThroughEntityDecoding) {
  for (const auto& s : sample_inputs()) {
    EXPECT_EQ(decode_entities(encode(EncoderId::Html, kPermissive, s)), s) << s;
    EXPECT_EQ(decode_entities(encode(EncoderId::HtmlDecimal, kPermissive, s)), s) << s;
    EXPECT_EQ(percent_decode(encode(EncoderId::Url, kPermissive, s)), s) << s;
    EXPECT_EQ(css_unescape(encode(EncoderId::Css, kPermissive, s)), s) << s;
  }
}

TEST(Encoders, HtmlIsInjective) {
  auto inputs = sample_inputs();
  std::map<std::string, std::string> seen;
  for (const auto& s : inputs) {
    auto e = encode(EncoderId::Html, kPermissive, s);
    auto [it, fresh] = seen.emplace(e, s);
    if (!fresh) {
      EXPECT_EQ(it->second, s);
    }
  }
}

TEST(Encoders, OutputNeverShrinks) {
  for (const auto& s : sample_inputs())
    for (auto id : kAllEncoders)
      for (auto v : {kPermissive, kStrict}) EXPECT_GE(encode(id, v, s).size(), s.size());
}

TEST(Encoders, DangerousCharactersNeverSurviveRaw) {
  for (const auto& s : sample_inputs()) {
    EXPECT_FALSE(contains_raw(encode(EncoderId::Html, kPermissive, s), "<>\""));
    EXPECT_FALSE(contains_raw(encode(EncoderId::HtmlDecimal, kPermissive, s), "<>\"'"));
    // Every '&' in entity output starts an entity.
    for (auto id : {EncoderId::Html, EncoderId::HtmlDecimal}) {
      auto e = encode(id, kPermissive, s);
      for (std::size_t i = e.find('&'); i != std::string::npos; i = e.find('&', i + 1))
        EXPECT_NE(e.find(';', i), std::string::npos);
    }
    auto url = encode(EncoderId::Url, kPermissive, s);
    for (char c : url)
      EXPECT_TRUE(std::isalnum(static_cast<unsigned char>(c)) || std::string_view("-._~%").find(c) != std::string_view::npos);
    auto css = encode(EncoderId::Css, kPermissive, s);
    for (char c : css)
      EXPECT_TRUE(std::isalnum(static_cast<unsigned char>(c)) || c == '\\' || c == ' ');
    auto strict = encode(EncoderId::JavaScript, kStrict, s);
    for (char c : strict) EXPECT_TRUE(std::isalnum(static_cast<unsigned char>(c)) || c == '\\');
    // Permissive: each quote is preceded by an escaping backslash.
    auto js = encode(EncoderId::JavaScript, kPermissive, s);
    for (std::size_t i = 0; i < js.size(); ++i) {
      if (js[i] == '\\') {
        ++i;
        continue;
      }
      EXPECT_TRUE(js[i] != '\'' && js[i] != '"' && js[i] != '\n') << js;
    }
  }
}

TEST(Encoders, JavaScriptDecodesToInput) {
  for (const auto& s : sample_inputs()) {
    for (auto v : {kPermissive, kStrict}) {
      auto values = js_string_values("'" + encode(EncoderId::JavaScript, v, s) + "'");
      ASSERT_EQ(values.size(), 1u) << s;
      EXPECT_EQ(values[0], s);
    }
  }
}

TEST(Encoders, NamesRoundTrip) {
  for (auto id : kAllEncoders) {
    EXPECT_EQ(encoder_from_call_name(encoder_call_name(id)), id);
    EXPECT_EQ(encoder_from_id_name(encoder_id_name(id)), id);
  }
  EXPECT_FALSE(encoder_from_call_name("EscapeHtml").has_value());
  EXPECT_EQ(chain_to_string({EncoderId::Html, EncoderId::JavaScript}), "[Html, JavaScript]");
}
