#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fifsl/error.hpp"
#include "fifsl/verilog_mask.hpp"

using namespace fifsl;

namespace {

std::vector<LexemeKind> kinds(std::string_view src) {
    std::vector<LexemeKind> out;
    for (const auto& lx : lex(src)) out.push_back(lx.kind);
    return out;
}

std::vector<std::string> texts(const MaskedStream& s) {
    std::vector<std::string> out;
    for (const auto& lx : s.lexemes) out.push_back(lx.text);
    return out;
}

std::string join(const std::vector<Lexeme>& lexemes) {
    std::string s;
    for (const auto& lx : lexemes) s += lx.text;
    return s;
}

using K = LexemeKind;

}  // namespace

TEST_CASE("lexer classifies a continuous assignment") {
    CHECK(kinds("assign y = a & b;") == std::vector<K>{K::keyword, K::whitespace, K::identifier, K::whitespace, K::op,
                                                       K::whitespace, K::identifier, K::whitespace, K::op,
                                                       K::whitespace, K::identifier, K::delimiter});
}

TEST_CASE("sized literals are one number lexeme") {
    for (const char* lit : {"4'b0000", "8'hFF", "16'd1_000", "'b1", "3'sb101", "1.5e-3", "42", "4'bx1z?"}) {
        const auto l = lex(lit);
        REQUIRE(l.size() == 1);
        CHECK(l[0].kind == K::number);
        CHECK(l[0].text == lit);
    }
}

TEST_CASE("lexer errors name the opening offset") {
    try {
        lex("/* open");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
    }
    try {
        lex("x = \"abc");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("offset 4") != std::string::npos);
    }
}

TEST_CASE("lexer covers comments, strings, system tasks, directives and skip tags") {
    const std::string src =
        "`timescale 1ns/1ps\n// line\n/* block\n */ $display(\"a\\\"b\"); \\esc[0] <SKIP_S> x <SKIP_E> a <= b;";
    const auto l = lex(src);
    CHECK(join(l) == src);
    int skip = 0, comments = 0, strings = 0;
    for (const auto& lx : l) {
        skip += lx.kind == K::skip_tag;
        comments += lx.kind == K::comment;
        strings += lx.kind == K::string;
    }
    CHECK(skip == 2);
    CHECK(comments == 2);
    CHECK(strings == 1);
    CHECK(l[0].kind == K::identifier);
    CHECK(l[0].text == "`timescale");
}

TEST_CASE("greedy multi-character operators") {
    const auto l = lex("a <<< 2 !== b === c ~^ d -> e");
    std::vector<std::string> ops;
    for (const auto& lx : l)
        if (lx.kind == K::op) ops.push_back(lx.text);
    CHECK(ops == std::vector<std::string>{"<<<", "!==", "===", "~^", "->"});
}

TEST_CASE("spans index the source") {
    const std::string src = "module m; endmodule";
    for (const auto& lx : lex(src)) CHECK(src.substr(lx.span.begin, lx.span.size()) == lx.text);
}

TEST_CASE("keyword-only mask") {
    const auto s = build_mask(lex("module m; assign y = a; endmodule"), KeywordSet::ieee1364());
    CHECK(texts(s) == std::vector<std::string>{"module", "m", ";", "assign", "y", "=", "a", ";", "endmodule"});
    CHECK(s.mask == std::vector<std::uint8_t>{0, 1, 1, 0, 1, 1, 1, 1, 0});
    CHECK(s.valid_count() == 6);
}

TEST_CASE("skip tags mask their span and are dropped") {
    const auto s = build_mask(lex("<SKIP_S> reg q; <SKIP_E> wire w;"), KeywordSet::ieee1364());
    CHECK(texts(s) == std::vector<std::string>{"reg", "q", ";", "wire", "w", ";"});
    CHECK(s.mask == std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1});
}

TEST_CASE("structural masking also hides operators and delimiters") {
    const auto s = build_mask(lex("assign y = a & b;"), KeywordSet::ieee1364(), true);
    CHECK(s.mask == std::vector<std::uint8_t>{0, 1, 0, 1, 0, 1, 0});
}

TEST_CASE("skip tag errors") {
    CHECK_THROWS_AS(build_mask(lex("<SKIP_S> a b"), KeywordSet::ieee1364()), Error);
    CHECK_THROWS_AS(build_mask(lex("a <SKIP_E>"), KeywordSet::ieee1364()), Error);
    try {
        build_mask(lex("<SKIP_S> a <SKIP_S> b <SKIP_E> <SKIP_E>"), KeywordSet::ieee1364());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("11") != std::string::npos);
    }
    CHECK_THROWS_AS(build_mask(lex("module endmodule"), KeywordSet::ieee1364()), Error);
}

TEST_CASE("keyword sets") {
    const auto& ieee = KeywordSet::ieee1364();
    CHECK(ieee.size() == 124);
    for (const char* w : {"module", "endmodule", "always", "posedge", "generate", "localparam", "uwire", "wor"})
        CHECK(ieee.contains(w));
    CHECK_FALSE(ieee.contains("logic"));

    const auto file = KeywordSet::from_file(std::filesystem::path(FIFSL_DATA_DIR) / "keywords" / "ieee1364.txt");
    CHECK(file.words() == ieee.words());

    const auto tmp = std::filesystem::temp_directory_path() / "fifsl_partial_keywords.txt";
    {
        std::ofstream out(tmp);
        out << "# too short\nmodule\nendmodule\n";
    }
    CHECK_THROWS_AS(KeywordSet::from_file(tmp), Error);
    std::filesystem::remove(tmp);
    CHECK_THROWS_AS(KeywordSet::from_file("/nonexistent/keywords.txt"), Error);
}

TEST_CASE("project_mask_to_tokens") {
    using S = std::vector<Span>;
    CHECK(project_mask_to_tokens(S{{0, 6}}, S{{0, 3}, {3, 6}, {6, 7}}) == std::vector<std::uint8_t>{0, 0, 1});
    CHECK(project_mask_to_tokens(S{}, S{{0, 3}, {3, 6}}) == std::vector<std::uint8_t>{1, 1});
    CHECK(project_mask_to_tokens(S{{5, 6}}, S{{0, 3}, {3, 6}}) == std::vector<std::uint8_t>{1, 0});
    CHECK_THROWS_AS(project_mask_to_tokens(S{}, S{{3, 6}, {0, 3}}), Error);
    CHECK_THROWS_AS(project_mask_to_tokens(S{}, S{{0, 4}, {3, 6}}), Error);
}

TEST_CASE("projection through lexeme spans reproduces the lexeme mask") {
    const std::string src = "module m(input clk, output reg [3:0] q); always @(posedge clk) q <= q + 4'd1; endmodule";
    const auto lexemes = lex(src);
    const auto stream = build_mask(lexemes, KeywordSet::ieee1364());
    std::vector<Span> offsets;
    for (const auto& lx : stream.lexemes) offsets.push_back(lx.span);
    CHECK(project_mask_to_tokens(protected_spans(lexemes, KeywordSet::ieee1364()), offsets) == stream.mask);
}

TEST_CASE("apply_ignore_labels") {
    const std::vector<int> ids = {7, 3, 9};
    CHECK(apply_ignore_labels(ids, std::vector<std::uint8_t>{1, 0, 1}) == std::vector<int>{7, kIgnoreLabel, 9});
    CHECK(apply_ignore_labels(ids, std::vector<std::uint8_t>{1, 1, 1}) == ids);
    CHECK_THROWS_AS(apply_ignore_labels(ids, std::vector<std::uint8_t>{1, 1}), Error);
}
