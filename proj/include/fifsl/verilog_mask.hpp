#pragma once

// Verilog lexing and the syntax-preserving loss mask.
//
// The lexer covers every byte of its input (whitespace and comments are
// lexemes too), so joining lexeme texts reproduces the source exactly.
// build_mask() turns a lexeme stream into the modeling stream: whitespace,
// comments and skip tags are dropped, and every surviving lexeme gets a bit
// that is 0 when the unlearning loss must ignore it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fifsl {

enum class LexemeKind {
    keyword,
    identifier,
    op,
    delimiter,
    number,
    string,
    comment,
    whitespace,
    skip_tag,
};

std::string_view to_string(LexemeKind kind);

/// Half-open character interval [begin, end).
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool overlaps(const Span& other) const { return begin < other.end && other.begin < end; }
    friend bool operator==(const Span&, const Span&) = default;
};

struct Lexeme {
    LexemeKind kind;
    std::string text;
    Span span;
};

inline constexpr std::string_view kSkipStart = "<SKIP_S>";
inline constexpr std::string_view kSkipEnd = "<SKIP_E>";

class KeywordSet {
public:
    KeywordSet(std::set<std::string, std::less<>> words, std::string provenance);

    /// IEEE 1364-2005 reserved words.
    static const KeywordSet& ieee1364();

    /// One word per line; '#' starts a comment. Rejects lists missing any of
    /// the core reserved words (module, assign, wire, ...).
    static KeywordSet from_file(const std::filesystem::path& path);

    bool contains(std::string_view word) const { return words_.find(word) != words_.end(); }
    std::size_t size() const { return words_.size(); }
    const std::string& provenance() const { return provenance_; }
    const std::set<std::string, std::less<>>& words() const { return words_; }

private:
    std::set<std::string, std::less<>> words_;
    std::string provenance_;
};

/// Lexes Verilog-2005 source. Throws fifsl::Error on an unterminated string
/// or block comment, naming the character offset where it opened.
std::vector<Lexeme> lex(std::string_view source);

/// Lexemes that reach the model: no whitespace, comments or skip tags.
bool is_modeled(LexemeKind kind);

struct MaskedStream {
    std::vector<Lexeme> lexemes;  // modeled lexemes only, spans into the original source
    std::vector<std::uint8_t> mask;

    std::size_t valid_count() const;
};

/// Keyword and skip-span masking. With `mask_structural`, operators and
/// delimiters are masked as well. Throws on unbalanced or nested skip tags
/// and when nothing is left unmasked.
MaskedStream build_mask(std::span<const Lexeme> lexemes, const KeywordSet& keywords,
                        bool mask_structural = false);

/// Character spans build_mask() would protect (m = 0), in source order.
std::vector<Span> protected_spans(std::span<const Lexeme> lexemes, const KeywordSet& keywords,
                                  bool mask_structural = false);

/// Maps protected character spans onto an arbitrary tokenization: a token is
/// masked if it overlaps any protected span by at least one character.
std::vector<std::uint8_t> project_mask_to_tokens(std::span<const Span> protected_spans,
                                                 std::span<const Span> token_offsets);

inline constexpr int kIgnoreLabel = -100;

std::vector<int> apply_ignore_labels(std::span<const int> token_ids,
                                     std::span<const std::uint8_t> mask);

}  // namespace fifsl
