#include "fifsl/verilog_mask.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include "fifsl/error.hpp"

namespace fifsl {

namespace {

constexpr std::array<std::string_view, 17> kCoreKeywords = {
    "module", "endmodule", "input",  "output", "wire", "reg",  "assign",  "always",   "posedge",
    "negedge", "begin",    "end",    "if",     "else", "case", "endcase", "parameter",
};

// Longest first so greedy matching picks `<<<` before `<<` before `<`.
constexpr std::array<std::string_view, 29> kOperators = {
    "<<<", ">>>", "===", "!==", "<=", ">=", "==", "!=", "&&", "||", "<<", ">>", "**", "~&", "~|",
    "~^",  "^~",  "->",  "+:",  "-:", "+",  "-",  "*",  "/",  "%",  "&",  "|",  "^",  "~",
};
constexpr std::string_view kSingleOperators = "!<>=?'";
constexpr std::string_view kDelimiters = "()[]{};,.:@#";

bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) {
    return is_ident_start(c) || (c >= '0' && c <= '9') || c == '$';
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_base_char(char c) {
    return c == 'b' || c == 'B' || c == 'o' || c == 'O' || c == 'd' || c == 'D' || c == 'h' || c == 'H';
}
bool is_based_digit(char c) {
    return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F') || c == 'x' || c == 'X' ||
           c == 'z' || c == 'Z' || c == '?' || c == '_';
}

// Length of a base specifier plus digits starting at an apostrophe, or 0.
std::size_t based_literal_length(std::string_view s, std::size_t pos) {
    std::size_t i = pos + 1;
    if (i < s.size() && (s[i] == 's' || s[i] == 'S')) ++i;
    if (i >= s.size() || !is_base_char(s[i])) return 0;
    ++i;
    const std::size_t digits = i;
    while (i < s.size() && is_based_digit(s[i])) ++i;
    return i == digits ? 0 : i - pos;
}

std::size_t utf8_length(unsigned char lead) {
    if (lead >= 0xF0) return 4;
    if (lead >= 0xE0) return 3;
    if (lead >= 0xC0) return 2;
    return 1;
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Lexeme> run() {
        while (pos_ < src_.size()) next();
        return std::move(out_);
    }

private:
    void emit(LexemeKind kind, std::size_t len) {
        out_.push_back({kind, std::string(src_.substr(pos_, len)), {pos_, pos_ + len}});
        pos_ += len;
    }

    bool at(std::string_view lit) const { return src_.substr(pos_, lit.size()) == lit; }

    void next() {
        const char c = src_[pos_];
        if (is_space(c)) {
            std::size_t i = pos_;
            while (i < src_.size() && is_space(src_[i])) ++i;
            return emit(LexemeKind::whitespace, i - pos_);
        }
        if (at("//")) {
            const std::size_t nl = src_.find('\n', pos_);
            return emit(LexemeKind::comment, (nl == std::string_view::npos ? src_.size() : nl) - pos_);
        }
        if (at("/*")) {
            const std::size_t close = src_.find("*/", pos_ + 2);
            if (close == std::string_view::npos)
                throw Error("unterminated block comment at offset " + std::to_string(pos_));
            return emit(LexemeKind::comment, close + 2 - pos_);
        }
        if (at(kSkipStart)) return emit(LexemeKind::skip_tag, kSkipStart.size());
        if (at(kSkipEnd)) return emit(LexemeKind::skip_tag, kSkipEnd.size());
        if (c == '"') return lex_string();
        if (is_digit(c)) return lex_number();
        if (c == '\'') {
            if (const std::size_t n = based_literal_length(src_, pos_)) return emit(LexemeKind::number, n);
        }
        if (is_ident_start(c) || c == '$' || c == '`') {
            std::size_t i = pos_ + 1;
            while (i < src_.size() && is_ident_char(src_[i])) ++i;
            return emit(LexemeKind::identifier, i - pos_);
        }
        if (c == '\\') {
            std::size_t i = pos_ + 1;
            while (i < src_.size() && !is_space(src_[i])) ++i;
            return emit(LexemeKind::identifier, i - pos_);
        }
        for (std::string_view op : kOperators)
            if (at(op)) return emit(LexemeKind::op, op.size());
        if (kDelimiters.find(c) != std::string_view::npos) return emit(LexemeKind::delimiter, 1);
        if (kSingleOperators.find(c) != std::string_view::npos) return emit(LexemeKind::op, 1);
        // Anything else (stray punctuation, non-ASCII text in prose) stays one
        // code point per lexeme so the round trip is preserved.
        const std::size_t len = std::min(utf8_length(static_cast<unsigned char>(c)), src_.size() - pos_);
        emit(LexemeKind::op, len);
    }

    void lex_string() {
        std::size_t i = pos_ + 1;
        while (i < src_.size() && src_[i] != '"' && src_[i] != '\n') {
            if (src_[i] == '\\' && i + 1 < src_.size()) ++i;
            ++i;
        }
        if (i >= src_.size() || src_[i] != '"')
            throw Error("unterminated string at offset " + std::to_string(pos_));
        emit(LexemeKind::string, i + 1 - pos_);
    }

    void lex_number() {
        std::size_t i = pos_;
        while (i < src_.size() && (is_digit(src_[i]) || src_[i] == '_')) ++i;
        if (i < src_.size() && src_[i] == '\'') {
            if (const std::size_t n = based_literal_length(src_, i)) return emit(LexemeKind::number, i + n - pos_);
        }
        if (i + 1 < src_.size() && src_[i] == '.' && is_digit(src_[i + 1])) {
            ++i;
            while (i < src_.size() && (is_digit(src_[i]) || src_[i] == '_')) ++i;
        }
        if (i < src_.size() && (src_[i] == 'e' || src_[i] == 'E')) {
            std::size_t j = i + 1;
            if (j < src_.size() && (src_[j] == '+' || src_[j] == '-')) ++j;
            if (j < src_.size() && is_digit(src_[j])) {
                while (j < src_.size() && is_digit(src_[j])) ++j;
                i = j;
            }
        }
        emit(LexemeKind::number, i - pos_);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::vector<Lexeme> out_;
};

struct Classified {
    std::vector<std::size_t> modeled;  // indices into the input lexemes
    std::vector<std::uint8_t> mask;
};

Classified classify(std::span<const Lexeme> lexemes, const KeywordSet& keywords, bool mask_structural) {
    Classified out;
    bool in_skip = false;
    for (std::size_t i = 0; i < lexemes.size(); ++i) {
        const Lexeme& lx = lexemes[i];
        if (lx.kind == LexemeKind::skip_tag) {
            const bool opens = lx.text == kSkipStart;
            if (opens == in_skip) {
                throw Error(std::string(opens ? "nested " : "unmatched ") + lx.text + " at offset " +
                            std::to_string(lx.span.begin));
            }
            in_skip = opens;
            continue;
        }
        if (!is_modeled(lx.kind)) continue;
        bool keep = !in_skip;
        if (lx.kind == LexemeKind::keyword || keywords.contains(lx.text)) keep = false;
        if (mask_structural && (lx.kind == LexemeKind::op || lx.kind == LexemeKind::delimiter)) keep = false;
        out.modeled.push_back(i);
        out.mask.push_back(keep ? 1 : 0);
    }
    if (in_skip) {
        const auto open = std::find_if(lexemes.rbegin(), lexemes.rend(),
                                       [](const Lexeme& lx) { return lx.kind == LexemeKind::skip_tag; });
        throw Error(std::string("unbalanced ") + std::string(kSkipStart) + " at offset " +
                    std::to_string(open->span.begin));
    }
    return out;
}

}  // namespace

std::string_view to_string(LexemeKind kind) {
    switch (kind) {
        case LexemeKind::keyword: return "keyword";
        case LexemeKind::identifier: return "identifier";
        case LexemeKind::op: return "operator";
        case LexemeKind::delimiter: return "delimiter";
        case LexemeKind::number: return "number";
        case LexemeKind::string: return "string";
        case LexemeKind::comment: return "comment";
        case LexemeKind::whitespace: return "whitespace";
        case LexemeKind::skip_tag: return "skip_tag";
    }
    return "?";
}

KeywordSet::KeywordSet(std::set<std::string, std::less<>> words, std::string provenance)
    : words_(std::move(words)), provenance_(std::move(provenance)) {
    for (std::string_view w : kCoreKeywords)
        if (!contains(w)) throw Error("keyword set '" + provenance_ + "' lacks core keyword '" + std::string(w) + "'");
}

const KeywordSet& KeywordSet::ieee1364() {
    static const KeywordSet set(
        {
            "always", "and", "assign", "automatic", "begin", "buf", "bufif0", "bufif1", "case",
            "casex", "casez", "cell", "cmos", "config", "deassign", "default", "defparam", "design",
            "disable", "edge", "else", "end", "endcase", "endconfig", "endfunction", "endgenerate",
            "endmodule", "endprimitive", "endspecify", "endtable", "endtask", "event", "for", "force",
            "forever", "fork", "function", "generate", "genvar", "highz0", "highz1", "if", "ifnone",
            "incdir", "include", "initial", "inout", "input", "instance", "integer", "join", "large",
            "liblist", "library", "localparam", "macromodule", "medium", "module", "nand", "negedge",
            "nmos", "nor", "noshowcancelled", "not", "notif0", "notif1", "or", "output", "parameter",
            "pmos", "posedge", "primitive", "pull0", "pull1", "pulldown", "pullup",
            "pulsestyle_ondetect", "pulsestyle_onevent", "rcmos", "real", "realtime", "reg", "release",
            "repeat", "rnmos", "rpmos", "rtran", "rtranif0", "rtranif1", "scalared", "showcancelled",
            "signed", "small", "specify", "specparam", "strong0", "strong1", "supply0", "supply1",
            "table", "task", "time", "tran", "tranif0", "tranif1", "tri", "tri0", "tri1", "triand",
            "trior", "trireg", "unsigned", "use", "uwire", "vectored", "wait", "wand", "weak0",
            "weak1", "while", "wire", "wor", "xnor", "xor",        },
        "IEEE 1364-2005 Annex B");
    return set;
}

KeywordSet KeywordSet::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open keyword file " + path.string());
    std::set<std::string, std::less<>> words;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        words.insert(line.substr(first, last - first + 1));
    }
    return KeywordSet(std::move(words), path.filename().string());
}

std::vector<Lexeme> lex(std::string_view source) {
    auto lexemes = Lexer(source).run();
    const KeywordSet& kw = KeywordSet::ieee1364();
    for (Lexeme& lx : lexemes)
        if (lx.kind == LexemeKind::identifier && kw.contains(lx.text)) lx.kind = LexemeKind::keyword;
    return lexemes;
}

bool is_modeled(LexemeKind kind) {
    return kind != LexemeKind::whitespace && kind != LexemeKind::comment && kind != LexemeKind::skip_tag;
}

std::size_t MaskedStream::valid_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

MaskedStream build_mask(std::span<const Lexeme> lexemes, const KeywordSet& keywords, bool mask_structural) {
    const Classified c = classify(lexemes, keywords, mask_structural);
    MaskedStream out;
    out.lexemes.reserve(c.modeled.size());
    for (std::size_t i : c.modeled) out.lexemes.push_back(lexemes[i]);
    out.mask = c.mask;
    if (out.valid_count() == 0) throw Error("every token is masked (valid_count = 0)");
    return out;
}

std::vector<Span> protected_spans(std::span<const Lexeme> lexemes, const KeywordSet& keywords,
                                  bool mask_structural) {
    const Classified c = classify(lexemes, keywords, mask_structural);
    std::vector<Span> spans;
    for (std::size_t k = 0; k < c.modeled.size(); ++k)
        if (c.mask[k] == 0) spans.push_back(lexemes[c.modeled[k]].span);
    return spans;
}

std::vector<std::uint8_t> project_mask_to_tokens(std::span<const Span> protected_spans,
                                                 std::span<const Span> token_offsets) {
    for (std::size_t t = 0; t < token_offsets.size(); ++t) {
        if (token_offsets[t].end < token_offsets[t].begin)
            throw Error("token " + std::to_string(t) + " has an inverted interval");
        if (t > 0 && token_offsets[t].begin < token_offsets[t - 1].end)
            throw Error("token offsets unsorted or overlapping at token " + std::to_string(t));
    }
    std::vector<std::uint8_t> bits(token_offsets.size(), 1);
    // Both sequences are sorted; sweep the protected spans once.
    std::size_t p = 0;
    for (std::size_t t = 0; t < token_offsets.size(); ++t) {
        const Span& tok = token_offsets[t];
        while (p < protected_spans.size() && protected_spans[p].end <= tok.begin) ++p;
        for (std::size_t q = p; q < protected_spans.size() && protected_spans[q].begin < tok.end; ++q) {
            if (protected_spans[q].overlaps(tok)) {
                bits[t] = 0;
                break;
            }
        }
    }
    return bits;
}

std::vector<int> apply_ignore_labels(std::span<const int> token_ids, std::span<const std::uint8_t> mask) {
    if (token_ids.size() != mask.size())
        throw Error("label/mask length mismatch: " + std::to_string(token_ids.size()) + " ids vs " +
                    std::to_string(mask.size()) + " mask bits");
    std::vector<int> labels(token_ids.size());
    for (std::size_t t = 0; t < token_ids.size(); ++t) labels[t] = mask[t] ? token_ids[t] : kIgnoreLabel;
    return labels;
}

}  // namespace fifsl
