#include "fifsl/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "fifsl/error.hpp"
#include "fifsl/random.hpp"

namespace fifsl {

using nlohmann::json;

// ---------------------------------------------------------------- JSONL I/O

std::vector<InstructionPair> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<InstructionPair> pairs;
    std::unordered_set<std::string> seen;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(where + "malformed JSON (" + e.what() + ")");
        }
        if (!rec.is_object()) throw Error(where + "record is not an object");
        for (const char* field : {"instruction", "response"}) {
            if (!rec.contains(field)) throw Error(where + "missing field \"" + field + "\"");
            if (!rec[field].is_string()) throw Error(where + "field \"" + field + "\" is not a string");
        }
        InstructionPair p;
        p.instruction = rec["instruction"].get<std::string>();
        p.response = rec["response"].get<std::string>();
        if (p.response.empty()) throw Error(where + "empty response");
        if (rec.contains("id")) {
            if (!rec["id"].is_string()) throw Error(where + "field \"id\" is not a string");
            p.id = rec["id"].get<std::string>();
        } else {
            p.id = "line-" + std::to_string(lineno);
        }
        if (!seen.insert(p.id).second) throw Error(where + "duplicate id \"" + p.id + "\"");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

void save_jsonl(const std::filesystem::path& path, std::span<const InstructionPair> pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& p : pairs) {
        json rec = {{"id", p.id}, {"instruction", p.instruction}, {"response", p.response}};
        out << rec.dump() << '\n';
    }
}

// ---------------------------------------------------------------- synthetic corpus

namespace {

class Templater {
public:
    Templater(std::uint64_t seed, const SyntheticOptions& opt) : rng_(seed), opt_(opt) {}

    InstructionPair next(std::size_t index) {
        InstructionPair p;
        p.id = "syn-" + std::to_string(index);
        switch (index % 4) {
            case 0: counter(p); break;
            case 1: mux(p); break;
            case 2: adder(p); break;
            default: reg(p); break;
        }
        return p;
    }

private:
    std::uint64_t pick(std::uint64_t n) { return uniform_index(rng_, n); }

    template <std::size_t N>
    std::string name(const std::array<const char*, N>& pool) {
        const std::string base = pool[pick(N)];
        return base + "_" + std::to_string(pick(static_cast<std::uint64_t>(opt_.name_suffixes)));
    }

    int width() { return 2 + static_cast<int>(pick(static_cast<std::uint64_t>(std::max(1, opt_.max_width - 1)))); }

    // "clock clk_3" when signal names are spelled out, otherwise "a clock".
    std::string say(const std::string& role, const std::string& n, bool article = true) const {
        if (opt_.instruction_names) return role + " " + n;
        return article ? "a " + role : role;
    }

    static std::string range(int w) { return "[" + std::to_string(w - 1) + ":0]"; }
    static std::string lit(int w, int v) { return std::to_string(w) + "'d" + std::to_string(v); }

    // Port list, optionally bracketed by skip tags.
    std::string ports(const std::vector<std::string>& lines) {
        const bool skip = opt_.skip_tag_rate > 0.0 && uniform_unit(rng_) < opt_.skip_tag_rate;
        std::string s = skip ? "  <SKIP_S>\n" : "";
        for (std::size_t i = 0; i < lines.size(); ++i)
            s += "  " + lines[i] + (i + 1 < lines.size() ? ",\n" : "\n");
        if (skip) s += "  <SKIP_E>\n";
        return s;
    }

    void counter(InstructionPair& p) {
        static constexpr std::array<const char*, 6> kMods = {"counter", "cnt", "ticker", "timer", "upcount", "pulse_cnt"};
        static constexpr std::array<const char*, 3> kClk = {"clk", "clock", "ck"};
        static constexpr std::array<const char*, 3> kRst = {"rst", "reset", "clr"};
        static constexpr std::array<const char*, 3> kEn = {"en", "enable", "inc"};
        static constexpr std::array<const char*, 4> kOut = {"q", "count", "value", "cnt_o"};
        const std::string m = name(kMods), clk = name(kClk), rst = name(kRst), en = name(kEn), q = name(kOut);
        const int w = width();
        const bool down = pick(2) == 1;
        const bool async = pick(2) == 1;
        p.instruction = "Design a " + std::to_string(w) + "-bit " + (down ? "down" : "up") + " counter named " + m +
                        " with " + say("clock", clk) + ", " + (async ? "asynchronous" : "synchronous") + " " +
                        say("reset", rst, false) + ", " + say("enable", en, false) + " and " +
                        say("output", q, false) + ".";
        std::string r = "module " + m + " (\n";
        r += ports({"input " + clk, "input " + rst, "input " + en, "output reg " + range(w) + " " + q});
        r += ");\n";
        r += "  always @(posedge " + clk + (async ? " or posedge " + rst : "") + ") begin\n";
        r += "    if (" + rst + ")\n";
        r += "      " + q + " <= " + lit(w, 0) + ";\n";
        r += "    else if (" + en + ")\n";
        r += "      " + q + " <= " + q + (down ? " - " : " + ") + lit(w, 1) + ";\n";
        r += "  end\nendmodule\n";
        p.response = std::move(r);
    }

    void mux(InstructionPair& p) {
        static constexpr std::array<const char*, 5> kMods = {"mux", "selector", "mux_sel", "route", "pick"};
        static constexpr std::array<const char*, 4> kIn = {"a", "b", "din", "src"};
        static constexpr std::array<const char*, 3> kSel = {"sel", "s", "choose"};
        static constexpr std::array<const char*, 3> kOut = {"y", "dout", "out"};
        const std::string m = name(kMods), sel = name(kSel), y = name(kOut);
        const int w = width();
        const bool four = pick(2) == 1;
        const int n_in = four ? 4 : 2;
        std::vector<std::string> ins;
        while (static_cast<int>(ins.size()) < n_in) {
            std::string s = name(kIn);
            if (std::find(ins.begin(), ins.end(), s) == ins.end()) ins.push_back(std::move(s));
        }
        std::string list;
        for (int i = 0; i < n_in; ++i) list += (i ? (i + 1 == n_in ? " and " : ", ") : "") + ins[static_cast<std::size_t>(i)];
        p.instruction = "Create a " + std::to_string(n_in) + "-to-1 multiplexer " + m + " with " + std::to_string(w) +
                        "-bit inputs" + (opt_.instruction_names ? " " + list : "") + ", " + say("select", sel, false) +
                        " and " + say("output", y, false) + ".";
        std::vector<std::string> port_lines;
        for (const auto& in : ins) port_lines.push_back("input " + range(w) + " " + in);
        port_lines.push_back("input " + std::string(four ? "[1:0] " : "") + sel);
        std::string r = "module " + m + " (\n";
        if (four) {
            port_lines.push_back("output reg " + range(w) + " " + y);
            r += ports(port_lines) + ");\n";
            r += "  always @(*) begin\n    case (" + sel + ")\n";
            for (int i = 0; i < 4; ++i)
                r += "      2'd" + std::to_string(i) + ": " + y + " = " + ins[static_cast<std::size_t>(i)] + ";\n";
            r += "    endcase\n  end\nendmodule\n";
        } else {
            port_lines.push_back("output " + range(w) + " " + y);
            r += ports(port_lines) + ");\n";
            r += "  assign " + y + " = " + sel + " ? " + ins[1] + " : " + ins[0] + ";\nendmodule\n";
        }
        p.response = std::move(r);
    }

    void adder(InstructionPair& p) {
        static constexpr std::array<const char*, 5> kMods = {"adder", "add", "sum_unit", "acc_add", "plus"};
        static constexpr std::array<const char*, 4> kA = {"a", "x", "op_a", "lhs"};
        static constexpr std::array<const char*, 4> kB = {"b", "y", "op_b", "rhs"};
        static constexpr std::array<const char*, 3> kS = {"sum", "s", "result"};
        static constexpr std::array<const char*, 3> kC = {"cout", "carry", "co"};
        const std::string m = name(kMods), a = name(kA), b = name(kB), s = name(kS), c = name(kC);
        const int w = width();
        const bool carry = pick(2) == 1;
        p.instruction = "Implement a " + std::to_string(w) + "-bit adder " + m + " that adds " +
                        (opt_.instruction_names ? a + " and " + b + " into " + s : std::string("two operands")) +
                        (carry ? " with " + say("carry out", c) : "") + ".";
        std::vector<std::string> port_lines = {"input " + range(w) + " " + a, "input " + range(w) + " " + b,
                                               "output " + range(w) + " " + s};
        if (carry) port_lines.push_back("output " + c);
        std::string r = "module " + m + " (\n" + ports(port_lines) + ");\n";
        if (carry)
            r += "  assign {" + c + ", " + s + "} = " + a + " + " + b + ";\n";
        else
            r += "  assign " + s + " = " + a + " + " + b + ";\n";
        r += "endmodule\n";
        p.response = std::move(r);
    }

    void reg(InstructionPair& p) {
        static constexpr std::array<const char*, 5> kMods = {"register", "dff", "latch_reg", "store", "hold"};
        static constexpr std::array<const char*, 3> kClk = {"clk", "clock", "ck"};
        static constexpr std::array<const char*, 3> kRst = {"rst_n", "resetn", "nrst"};
        static constexpr std::array<const char*, 3> kLd = {"load", "we", "wr_en"};
        static constexpr std::array<const char*, 3> kD = {"d", "data_in", "din"};
        static constexpr std::array<const char*, 3> kQ = {"q", "data_out", "dout"};
        const std::string m = name(kMods), clk = name(kClk), rst = name(kRst), ld = name(kLd), d = name(kD),
                          q = name(kQ);
        const int w = width();
        const int init = static_cast<int>(pick(static_cast<std::uint64_t>(std::min(w, 8)) + 1));
        p.instruction = "Write a " + std::to_string(w) + "-bit register " + m + " clocked by " + say("clock", clk) +
                        " with " + say("active-low reset", rst, false) + " to " + std::to_string(init) + ", " +
                        say("load enable", ld, false) + ", " + say("input", d, false) + " and " +
                        say("output", q, false) + ".";
        std::string r = "module " + m + " (\n";
        r += ports({"input " + clk, "input " + rst, "input " + ld, "input " + range(w) + " " + d,
                    "output reg " + range(w) + " " + q});
        r += ");\n";
        r += "  always @(posedge " + clk + " or negedge " + rst + ") begin\n";
        r += "    if (!" + rst + ")\n";
        r += "      " + q + " <= " + lit(w, init) + ";\n";
        r += "    else if (" + ld + ")\n";
        r += "      " + q + " <= " + d + ";\n";
        r += "  end\nendmodule\n";
        p.response = std::move(r);
    }

    std::mt19937_64 rng_;
    SyntheticOptions opt_;
};

}  // namespace

std::vector<InstructionPair> generate_synthetic_corpus(std::size_t n, std::uint64_t seed,
                                                       const SyntheticOptions& options) {
    if (n == 0) throw Error("synthetic corpus size must be >= 1");
    if (options.max_width < 2) throw Error("max_width must be >= 2");
    if (options.name_suffixes < 1) throw Error("name_suffixes must be >= 1");
    Templater t(seed, options);
    std::vector<InstructionPair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(t.next(i));
    return out;
}

// ---------------------------------------------------------------- vocabulary

Vocabulary::Vocabulary() {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<sep>"}) {
        ids_.emplace(s, static_cast<int>(lexemes_.size()));
        lexemes_.emplace_back(s);
    }
}

int Vocabulary::add(std::string_view lexeme) {
    if (auto id = find(lexeme)) return *id;
    const int id = size();
    lexemes_.emplace_back(lexeme);
    ids_.emplace(std::string(lexeme), id);
    return id;
}

std::optional<int> Vocabulary::find(std::string_view lexeme) const {
    const auto it = ids_.find(std::string(lexeme));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

int Vocabulary::at(std::string_view lexeme) const {
    if (auto id = find(lexeme)) return *id;
    throw Error("lexeme not in vocabulary: '" + std::string(lexeme) + "'");
}

const std::string& Vocabulary::lexeme(int id) const {
    if (id < 0 || id >= size()) throw Error("token id out of range: " + std::to_string(id));
    return lexemes_[static_cast<std::size_t>(id)];
}

json Vocabulary::to_json() const {
    return {{"schema_version", 1},
            {"specials", {{"pad", kPad}, {"bos", kBos}, {"eos", kEos}, {"sep", kSep}}},
            {"lexemes", lexemes_}};
}

Vocabulary Vocabulary::from_json(const json& j) {
    const auto lexemes = j.at("lexemes").get<std::vector<std::string>>();
    Vocabulary v;
    if (lexemes.size() < static_cast<std::size_t>(kNumSpecial)) throw Error("vocabulary too small");
    for (std::size_t i = kNumSpecial; i < lexemes.size(); ++i) {
        if (v.add(lexemes[i]) != static_cast<int>(i)) throw Error("duplicate lexeme in vocabulary: " + lexemes[i]);
    }
    return v;
}

// ---------------------------------------------------------------- encoding

std::span<const int> EncodedSample::response_tokens() const {
    return std::span<const int>(tokens).subspan(response_begin, response_end() - response_begin);
}

std::span<const Span> EncodedSample::response_spans() const {
    return std::span<const Span>(spans).subspan(response_begin, response_end() - response_begin);
}

std::span<const int> EncodedSample::prompt() const {
    return std::span<const int>(tokens).first(response_begin);
}

namespace {

std::vector<Lexeme> modeled_lexemes(std::string_view text, const LexFn& lexer) {
    std::vector<Lexeme> out;
    for (auto& lx : lexer(text))
        if (is_modeled(lx.kind)) out.push_back(std::move(lx));
    return out;
}

template <typename IdOf>
EncodedSample encode_with(const InstructionPair& pair, const LexFn& lexer, IdOf&& id_of) {
    std::vector<Lexeme> instr, resp;
    try {
        instr = modeled_lexemes(pair.instruction, lexer);
    } catch (const Error& e) {
        throw Error("sample " + pair.id + " instruction: " + e.what());
    }
    try {
        resp = modeled_lexemes(pair.response, lexer);
    } catch (const Error& e) {
        throw Error("sample " + pair.id + " response: " + e.what());
    }
    if (resp.empty()) throw Error("sample " + pair.id + ": response has no tokens");
    EncodedSample s;
    s.id = pair.id;
    s.tokens.reserve(instr.size() + resp.size() + 3);
    s.tokens.push_back(Vocabulary::kBos);
    s.spans.push_back({});
    for (const auto& lx : instr) {
        s.tokens.push_back(id_of(lx.text));
        s.spans.push_back(lx.span);
    }
    s.tokens.push_back(Vocabulary::kSep);
    s.spans.push_back({});
    s.response_begin = s.tokens.size();
    for (const auto& lx : resp) {
        s.tokens.push_back(id_of(lx.text));
        s.spans.push_back(lx.span);
    }
    s.tokens.push_back(Vocabulary::kEos);
    s.spans.push_back({pair.response.size(), pair.response.size()});
    return s;
}

}  // namespace

EncodedCorpus build_vocab_and_encode(std::span<const InstructionPair> pairs, const LexFn& lexer) {
    EncodedCorpus out;
    out.samples.reserve(pairs.size());
    for (const auto& p : pairs)
        out.samples.push_back(encode_with(p, lexer, [&](const std::string& t) { return out.vocab.add(t); }));
    return out;
}

EncodedSample encode_pair(const InstructionPair& pair, const Vocabulary& vocab, const LexFn& lexer) {
    return encode_with(pair, lexer, [&](const std::string& t) {
        if (auto id = vocab.find(t)) return *id;
        throw Error("sample " + pair.id + ": lexeme '" + t + "' not in vocabulary");
    });
}

std::vector<std::string> decode(std::span<const int> ids, const Vocabulary& vocab) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(vocab.lexeme(id));
    return out;
}

// ---------------------------------------------------------------- splits

json CorpusSplit::manifest() const {
    auto ids = [](const std::vector<InstructionPair>& v) {
        std::vector<std::string> out;
        for (const auto& p : v) out.push_back(p.id);
        return out;
    };
    return {{"schema_version", 1}, {"forget", ids(forget)}, {"retain", ids(retain)}, {"holdout", ids(holdout)}};
}

CorpusSplit split_forget_retain(std::span<const InstructionPair> pairs, double fraction, std::uint64_t seed,
                                double holdout_fraction) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw Error("forget fraction must lie in (0, 1)");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw Error("holdout fraction must lie in [0, 1)");
    if (pairs.size() < 3) throw Error("need at least 3 pairs to split");
    const std::size_t n = pairs.size();
    const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
    const std::size_t pool = n - n_hold;
    const auto n_forget = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool)));
    if (n_forget == 0) throw Error("forget fraction yields an empty forget set");
    if (n_forget >= pool) throw Error("forget fraction yields an empty retain set");

    std::mt19937_64 rng(seed);
    const auto order = permutation(n, rng);
    CorpusSplit split;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& p = pairs[order[k]];
        if (k < n_hold)
            split.holdout.push_back(p);
        else if (k < n_hold + n_forget)
            split.forget.push_back(p);
        else
            split.retain.push_back(p);
    }
    return split;
}

CorpusSplit split_from_manifest(std::span<const InstructionPair> pairs, const json& manifest) {
    std::unordered_map<std::string, const InstructionPair*> by_id;
    for (const auto& p : pairs) by_id.emplace(p.id, &p);
    CorpusSplit split;
    auto fill = [&](const char* key, std::vector<InstructionPair>& dst) {
        for (const auto& id : manifest.at(key).get<std::vector<std::string>>()) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) throw Error(std::string("split manifest ") + key + " id not in corpus: " + id);
            dst.push_back(*it->second);
        }
    };
    fill("forget", split.forget);
    fill("retain", split.retain);
    fill("holdout", split.holdout);
    return split;
}

// ---------------------------------------------------------------- masked samples

namespace {

MaskedSample finish(const EncodedSample& enc, std::vector<std::uint8_t> mask) {
    MaskedSample s;
    s.id = enc.id;
    s.token_ids = enc.tokens;
    s.labels = apply_ignore_labels(s.token_ids, mask);
    s.valid_count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
    s.mask = std::move(mask);
    s.response_begin = enc.response_begin;
    return s;
}

}  // namespace

MaskedSample syntax_masked_sample(const InstructionPair& pair, const EncodedSample& encoded,
                                  const KeywordSet& keywords, bool mask_structural, const LexFn& lexer) {
    const auto lexemes = lexer(pair.response);
    const auto protect = protected_spans(lexemes, keywords, mask_structural);
    const auto bits = project_mask_to_tokens(protect, encoded.response_spans());
    std::vector<std::uint8_t> mask(encoded.tokens.size(), 0);
    std::copy(bits.begin(), bits.end(), mask.begin() + static_cast<std::ptrdiff_t>(encoded.response_begin));
    auto s = finish(encoded, std::move(mask));
    if (s.valid_count == 0) throw Error("sample " + pair.id + ": every token is masked (valid_count = 0)");
    return s;
}

MaskedSample response_sample(const EncodedSample& encoded) {
    std::vector<std::uint8_t> mask(encoded.tokens.size(), 0);
    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(encoded.response_begin), mask.end(), std::uint8_t{1});
    return finish(encoded, std::move(mask));
}

}  // namespace fifsl
