#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "xssynth/browser_model.hpp"
#include "xssynth/encoders.hpp"

using namespace xssynth;
using xssynth::testing::default_corpus;

namespace {

std::vector<PayloadHit> hits(std::string_view doc) { return scan(doc).hits; }

PayloadHit hit(int line, ParseContext c) { return {line, c}; }

}  // namespace

TEST(BrowserModel, EventHandlerConcatenation) {
  EXPECT_EQ(hits("<a onclick=\"fn('' + attack(3) + '')\" href=\"#\">mylink</a>"),
            (std::vector<PayloadHit>{hit(3, ParseContext::EventAttr)}));
}

TEST(BrowserModel, EscapedScriptInBodyIsInert) {
  EXPECT_TRUE(hits("<p>&lt;script&gt; attack(4); &lt;/script&gt;</p>").empty());
}

TEST(BrowserModel, EntitiesAreDecodedBeforeHandlerRuns) {
  EXPECT_EQ(hits("<a onclick=\"fn('&#39;); attack(4); //')\">x</a>"),
            (std::vector<PayloadHit>{hit(4, ParseContext::EventAttr)}));
}

TEST(BrowserModel, StyleAttributeUrl) {
  EXPECT_EQ(hits("<div style=\"height: ;background-image:url('javascript:attack(1)');px;\"></div>"),
            (std::vector<PayloadHit>{hit(1, ParseContext::StyleAttr)}));
}

TEST(BrowserModel, TextareaIsRawUntilClosed) {
  EXPECT_TRUE(hits("<textarea></script><script>attack(2)</script>").empty());
  EXPECT_EQ(hits("<textarea></textarea><script>attack(2)</script>"),
            (std::vector<PayloadHit>{hit(2, ParseContext::ScriptBlock)}));
  EXPECT_TRUE(hits("<title><script>attack(2)</script></title>").empty());
}

TEST(BrowserModel, UriAttributes) {
  EXPECT_EQ(hits("<a href=\"javascript:attack(5)\">x</a>"), (std::vector<PayloadHit>{hit(5, ParseContext::UriAttr)}));
  EXPECT_EQ(hits("<a href=\" JaVa&#x53;cript:attack%285%29\">x</a>"),
            (std::vector<PayloadHit>{hit(5, ParseContext::UriAttr)}));
  EXPECT_EQ(hits("<img src=\"java\tscript:attack(6)\">"), (std::vector<PayloadHit>{hit(6, ParseContext::UriAttr)}));
  EXPECT_TRUE(hits("<a href=\"http://x/attack(5)\">x</a>").empty());
  EXPECT_TRUE(hits("<a title=\"javascript:attack(5)\">x</a>").empty());
}

TEST(BrowserModel, StyleBlock) {
  EXPECT_EQ(hits("<style>p{cursor:url(javascript:attack(8));}</style>"),
            (std::vector<PayloadHit>{hit(8, ParseContext::StyleBlock)}));
  EXPECT_TRUE(hits("<style>p{color:red;} /* attack(8) */</style>").empty());
}

TEST(BrowserModel, HitsAreDeduplicated) {
  EXPECT_EQ(hits("<script>attack(1); attack(1);</script>").size(), 1u);
  EXPECT_EQ(hits("<script>attack(1); attack(2);</script>").size(), 2u);
}

TEST(BrowserModel, JsExecutionPositions) {
  auto js = [](std::string_view code) { return js_executes(code, ParseContext::ScriptBlock); };
  EXPECT_EQ(js("fn(''); attack(4); //')"), (std::vector<PayloadHit>{hit(4, ParseContext::ScriptBlock)}));
  EXPECT_TRUE(js("var x = \"attack(9)\";").empty());
  EXPECT_EQ(js("var x = 19 + attack(7);"), (std::vector<PayloadHit>{hit(7, ParseContext::ScriptBlock)}));
  EXPECT_EQ(js("f(g(attack(2)))").size(), 1u);
  EXPECT_EQ(js("if (a == attack(3)) { b(); } else c();").size(), 1u);
  EXPECT_TRUE(js("x.attack(3);").empty());
  EXPECT_TRUE(js("attack(y);").empty());
}

TEST(BrowserModel, SyntaxErrorAbortsBlock) {
  std::vector<std::string> notes;
  EXPECT_TRUE(js_executes("fn('unterminated", ParseContext::ScriptBlock, &notes).empty());
  ASSERT_EQ(notes.size(), 1u);
  EXPECT_NE(notes[0].find("syntax error"), std::string::npos);
  EXPECT_TRUE(js_executes("attack(1); }", ParseContext::ScriptBlock).empty());
  auto report = scan("<script>attack(1); fn('</script>");
  EXPECT_TRUE(report.hits.empty());
  EXPECT_FALSE(report.parse_notes.empty());
}

TEST(BrowserModel, DecodeEntities) {
  EXPECT_EQ(decode_entities("&#39;); attack(); //"), "'); attack(); //");
  EXPECT_EQ(decode_entities("&lt;script&gt;"), "<script>");
  EXPECT_EQ(decode_entities("plain"), "plain");
  EXPECT_EQ(decode_entities("&amp;&quot;&apos;&#x41;&#66"), "&\"'AB");
  EXPECT_EQ(decode_entities("&unknown; &"), "&unknown; &");
  EXPECT_EQ(decode_entities("&#x20AC;"), "\xE2\x82\xAC");
}

TEST(BrowserModel, StringContainmentNeverExecutes) {
  std::mt19937 rng(5);
  const std::vector<std::string> wrappers = {"var s = '%';", "f(\"%\");", "// %\n", "/* % */", "x = 1 + '%' + 2;"};
  const std::vector<std::string> fillers = {"attack(1)", "attack(2); //", "');attack(3);//", "\\' attack(4)"};
  for (int i = 0; i < 200; ++i) {
    std::string code;
    int parts = 1 + static_cast<int>(rng() % 4);
    for (int k = 0; k < parts; ++k) {
      std::string w = wrappers[rng() % wrappers.size()];
      std::string f = fillers[rng() % fillers.size()];
      bool quoted = w.find('\'') != std::string::npos || w.find('"') != std::string::npos;
      if (quoted) {
        // Keep the literal intact: escape quotes and backslashes.
        std::string esc;
        for (char c : f) {
          if (c == '\'' || c == '"' || c == '\\') esc += '\\';
          esc += c;
        }
        f = esc;
      }
      w.replace(w.find('%'), 1, f);
      code += w + "\n";
    }
    EXPECT_TRUE(js_executes(code, ParseContext::ScriptBlock).empty()) << code;
    EXPECT_TRUE(hits("<script>" + code + "</script>").empty()) << code;
  }
}

TEST(BrowserModel, EncodersDefeatEveryAttack) {
  const EncoderVariant strict{JsStyle::Strict};
  for (const auto& a : default_corpus()) {
    std::string atk = substitute_line(a.rendered, 5);
    EXPECT_TRUE(hits("<p>" + encode(EncoderId::Html, strict, atk) + "</p>").empty()) << atk;
    EXPECT_TRUE(hits("<script>var v = '" + encode(EncoderId::JavaScript, strict, atk) + "';</script>").empty()) << atk;
    EXPECT_TRUE(hits("<a href=\"/p?q=" + encode(EncoderId::Url, strict, atk) + "\">x</a>").empty()) << atk;
    EXPECT_TRUE(hits("<div style=\"color: " + encode(EncoderId::Css, strict, atk) + "\">x</div>").empty()) << atk;
  }
}

TEST(BrowserModel, BodyTextRoundTrips) {
  for (const auto& a : default_corpus()) {
    std::string doc = "<p>" + encode(EncoderId::Html, {}, a.rendered) + "</p>";
    EXPECT_TRUE(hits(doc).empty());
    auto views = data_views(doc);
    bool found = std::any_of(views.begin(), views.end(), [&](const DataView& v) {
      return v.context == ParseContext::HtmlBody && v.text == a.rendered;
    });
    EXPECT_TRUE(found) << a.rendered;
  }
}

TEST(BrowserModel, DataViewsDecodePerContext) {
  auto has = [](const std::vector<DataView>& views, ParseContext c, const std::string& text) {
    return std::any_of(views.begin(), views.end(),
                       [&](const DataView& v) { return v.context == c && v.text == text; });
  };
  auto v = data_views("<a title=\"a&amp;b\" onclick=\"f('x\\'y')\" href=\"/q?a%20b\">t&lt;</a>"
                      "<div style=\"content: '\\3C a'\"></div><script>var s = \"\\x41\";</script>");
  EXPECT_TRUE(has(v, ParseContext::TagAttr, "a&b"));
  EXPECT_TRUE(has(v, ParseContext::EventAttr, "x'y"));
  EXPECT_TRUE(has(v, ParseContext::UriAttr, "/q?a b"));
  EXPECT_TRUE(has(v, ParseContext::HtmlBody, "t<"));
  EXPECT_TRUE(has(v, ParseContext::StyleAttr, "content: '<a'"));
  EXPECT_TRUE(has(v, ParseContext::ScriptBlock, "A"));
}

TEST(BrowserModel, CssUnescape) {
  EXPECT_EQ(css_unescape("\\28 x\\29"), "(x)");
  EXPECT_EQ(css_unescape("\\\"q"), "\"q");
  EXPECT_EQ(css_unescape("plain"), "plain");
}

TEST(BrowserModel, Deterministic) {
  const std::string doc = "<img src=x onclick=\"attack(1)\"><script>attack(2)</script>";
  auto a = scan(doc, true);
  auto b = scan(doc, true);
  EXPECT_EQ(a.hits, b.hits);
  EXPECT_EQ(a.parse_notes, b.parse_notes);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  EXPECT_FALSE(a.trace.empty());
}

TEST(BrowserModel, MalformedInputNeverThrows) {
  for (const char* doc : {"<", "<a", "<a href=", "<a href=\"", "<script>", "</", "<!--", "<a onclick='", "&#",
                          "<style>p{x:url(", "<textarea>"})
    EXPECT_NO_THROW(scan(doc)) << doc;
}
