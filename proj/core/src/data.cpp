#include "dcbilstm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dcbilstm/errors.hpp"
#include "dcbilstm/rng.hpp"

namespace dcbilstm {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j])) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

bool is_valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra;
        if (c < 0x80) {
            extra = 0;
        } else if ((c >> 5) == 0x6) {
            extra = 1;
        } else if ((c >> 4) == 0xE) {
            extra = 2;
        } else if ((c >> 3) == 0x1E) {
            extra = 3;
        } else {
            return false;
        }
        if (extra > 0 && i + extra >= s.size()) return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
        }
        i += extra + 1;
    }
    return true;
}

std::string latin1_to_utf8(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x80) {
            out.push_back(ch);
        } else {
            out.push_back(static_cast<char>(0xC0 | (c >> 6)));
            out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
        }
    }
    return out;
}

std::size_t parse_label(std::string_view s, std::size_t line_no) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError("bad label '" + std::string(s) + "'", line_no);
    }
    return v;
}

} // namespace

// --- embeddings -----------------------------------------------------------

bool EmbeddingTable::insert(std::string_view token, Tensor vector) {
    if (vector.rows() != 1 || vector.cols() != dim_) {
        throw FormatError("embedding for '" + std::string(token) + "' has shape " +
                          vector.shape_string() + ", expected [1x" + std::to_string(dim_) + "]");
    }
    return entries_.try_emplace(to_lower(token), std::move(vector)).second;
}

const Tensor* EmbeddingTable::lookup(std::string_view token) const {
    auto it = entries_.find(to_lower(token));
    return it == entries_.end() ? nullptr : &it->second;
}

EmbeddingTable parse_embeddings(std::istream& in, std::size_t dim) {
    EmbeddingTable table(dim);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = split_ws(line);
        if (fields.empty()) continue;
        if (fields.size() != dim + 1) {
            throw FormatError("embedding line " + std::to_string(line_no) + ": expected " +
                              std::to_string(dim) + " values, found " +
                              std::to_string(fields.size() - 1));
        }
        std::vector<double> values(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            std::string_view f = fields[i + 1];
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), values[i]);
            if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(values[i])) {
                throw ParseError("embedding value '" + std::string(f) + "' is not a finite real",
                                 line_no);
            }
        }
        table.insert(fields[0], Tensor(1, dim, std::move(values)));
    }
    return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dim) {
    auto in = open_input(path);
    return parse_embeddings(in, dim);
}

// --- tokenization ----------------------------------------------------------

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view raw) {
    static constexpr std::string_view kPunct = ".,!?;:()[]{}\"`";
    std::string spaced;
    spaced.reserve(raw.size() + 16);
    for (char c : raw) {
        if (kPunct.find(c) != std::string_view::npos) {
            spaced.push_back(' ');
            spaced.push_back(c);
            spaced.push_back(' ');
        } else {
            spaced.push_back(c);
        }
    }
    std::vector<std::string> tokens;
    for (std::string_view t : split_ws(spaced)) tokens.push_back(to_lower(t));
    return tokens;
}

std::vector<std::string> tokenize_and_filter(std::string_view raw, const EmbeddingTable& table) {
    std::vector<std::string> tokens = tokenize(raw);
    std::erase_if(tokens, [&](const std::string& t) { return !table.contains(t); });
    return tokens;
}

// --- datasets --------------------------------------------------------------

DatasetFormat parse_dataset_format(const std::string& s) {
    if (s == "tsv") return DatasetFormat::tsv;
    if (s == "sst" || s == "sst_trees") return DatasetFormat::sst_trees;
    throw ConfigError("unknown dataset format '" + s + "' (expected tsv or sst)");
}

std::vector<Example> parse_tsv(std::istream& in) {
    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view s = strip_cr(line);
        if (split_ws(s).empty()) continue;
        const auto tab = s.find('\t');
        if (tab == std::string_view::npos) throw ParseError("missing TAB after label", line_no);
        Example ex;
        ex.label = parse_label(s.substr(0, tab), line_no);
        ex.tokens = tokenize(s.substr(tab + 1));
        out.push_back(std::move(ex));
    }
    return out;
}

namespace {

struct TreeNode {
    std::size_t label = 0;
    std::vector<std::string> tokens;  // leaves of this subtree, in order
};

/// Recursive-descent reader for one PTB tree line.
class TreeParser {
public:
    TreeParser(std::string_view text, std::size_t line_no) : s_(text), line_no_(line_no) {}

    /// Parses one node and appends it (and, post-order, its inner nodes) to `nodes`.
    /// The returned index refers into `nodes`.
    std::size_t node(std::vector<TreeNode>& nodes) {
        skip();
        expect('(');
        skip();
        const std::size_t label = parse_label(atom(), line_no_);
        const std::size_t self = nodes.size();
        nodes.push_back({label, {}});
        skip();
        if (peek() == '(') {
            while (peek() == '(') {
                const std::size_t child = node(nodes);
                auto& toks = nodes[self].tokens;
                toks.insert(toks.end(), nodes[child].tokens.begin(), nodes[child].tokens.end());
                skip();
            }
        } else {
            std::string_view word = atom();
            if (word.empty()) fail("empty leaf");
            nodes[self].tokens.push_back(to_lower(word));
            skip();
        }
        expect(')');
        return self;
    }

    void finish() {
        skip();
        if (pos_ != s_.size()) fail("trailing characters after tree");
    }

private:
    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
    void skip() {
        while (pos_ < s_.size() && is_space(s_[pos_])) ++pos_;
    }
    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'" + (pos_ >= s_.size() ? " (unbalanced parentheses)" : ""));
        ++pos_;
    }
    std::string_view atom() {
        const std::size_t begin = pos_;
        while (pos_ < s_.size() && !is_space(s_[pos_]) && s_[pos_] != '(' && s_[pos_] != ')') ++pos_;
        return s_.substr(begin, pos_ - begin);
    }
    [[noreturn]] void fail(const std::string& msg) {
        throw ParseError("tree: " + msg + " at column " + std::to_string(pos_ + 1), line_no_);
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    std::size_t line_no_;
};

std::optional<std::size_t> binary_label(std::size_t fine) {
    if (fine <= 1) return 0;
    if (fine == 2) return std::nullopt;
    return 1;
}

} // namespace

std::vector<Example> parse_sst(std::istream& in, const LoadOptions& options) {
    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view s = strip_cr(line);
        if (split_ws(s).empty()) continue;
        TreeParser parser(s, line_no);
        std::vector<TreeNode> nodes;
        parser.node(nodes);
        parser.finish();
        for (const TreeNode& n : nodes) {
            if (n.label > 4) throw ParseError("sentiment label out of range 0..4", line_no);
        }
        const std::size_t count = options.sst_phrases ? nodes.size() : 1;
        for (std::size_t i = 0; i < count; ++i) {
            std::size_t label = nodes[i].label;
            if (options.sst_binary) {
                auto b = binary_label(label);
                if (!b) continue;
                label = *b;
            }
            out.push_back({nodes[i].tokens, label});
        }
    }
    return out;
}

std::vector<Example> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                  const LoadOptions& options) {
    auto in = open_input(path);
    return format == DatasetFormat::tsv ? parse_tsv(in) : parse_sst(in, options);
}

std::vector<Example> load_polarity(const std::filesystem::path& negative,
                                   const std::filesystem::path& positive) {
    std::vector<Example> out;
    auto read = [&](const std::filesystem::path& path, std::size_t label) {
        auto in = open_input(path);
        std::string line;
        while (std::getline(in, line)) {
            std::string_view s = strip_cr(line);
            if (split_ws(s).empty()) continue;
            std::string text = is_valid_utf8(s) ? std::string(s) : latin1_to_utf8(s);
            out.push_back({tokenize(text), label});
        }
    };
    read(negative, 0);
    read(positive, 1);
    return out;
}

std::vector<Example> parse_trec(std::istream& in) {
    static const std::vector<std::string> kCoarse = {"ABBR", "DESC", "ENTY", "HUM", "LOC", "NUM"};
    std::vector<Example> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string raw = is_valid_utf8(line) ? line : latin1_to_utf8(line);
        std::string_view s = strip_cr(raw);
        if (split_ws(s).empty()) continue;
        const auto colon = s.find(':');
        const auto space = s.find(' ');
        if (colon == std::string_view::npos || space == std::string_view::npos || colon > space) {
            throw ParseError("expected 'COARSE:fine question'", line_no);
        }
        const std::string coarse(s.substr(0, colon));
        auto it = std::find(kCoarse.begin(), kCoarse.end(), coarse);
        if (it == kCoarse.end()) throw ParseError("unknown TREC class '" + coarse + "'", line_no);
        out.push_back({tokenize(s.substr(space + 1)),
                       static_cast<std::size_t>(it - kCoarse.begin())});
    }
    return out;
}

void write_tsv(std::ostream& out, std::span<const Example> examples) {
    for (const Example& ex : examples) {
        out << ex.label << '\t';
        for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
            if (i) out << ' ';
            out << ex.tokens[i];
        }
        out << '\n';
    }
}

// --- vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() {
    add(kPad);
    add(kUnk);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 2 || tokens[kPadIndex] != kPad || tokens[kUnkIndex] != kUnk) {
        throw FormatError("vocabulary must start with <pad> and <unk>");
    }
    Vocabulary v;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
        if (v.find(tokens[i])) throw FormatError("duplicate vocabulary token '" + tokens[i] + "'");
        v.add(tokens[i]);
    }
    return v;
}

std::size_t Vocabulary::add(const std::string& token) {
    auto [it, inserted] = index_.try_emplace(token, tokens_.size());
    if (inserted) tokens_.push_back(token);
    return it->second;
}

std::optional<std::size_t> Vocabulary::find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Vocabulary build_vocabulary(std::span<const std::vector<Example>* const> corpora,
                            const EmbeddingTable& table) {
    Vocabulary vocab;
    for (const auto* corpus : corpora) {
        if (!corpus) continue;
        for (const Example& ex : *corpus) {
            for (const std::string& tok : ex.tokens) {
                const std::string key = to_lower(tok);
                if (!vocab.find(key) && table.contains(key)) vocab.add(key);
            }
        }
    }
    return vocab;
}

Tensor embedding_matrix(const Vocabulary& vocab, const EmbeddingTable& table) {
    Tensor out(vocab.size(), table.dim());
    for (std::size_t i = 2; i < vocab.size(); ++i) {
        const Tensor* v = table.lookup(vocab.tokens()[i]);
        if (!v) continue;
        std::copy(v->data().begin(), v->data().end(), out.row_span(i).begin());
    }
    return out;
}

EncodedExample encode(const Example& example, const Vocabulary& vocab) {
    EncodedExample out;
    out.label = example.label;
    for (const std::string& tok : example.tokens) {
        if (auto idx = vocab.find(to_lower(tok)); idx && *idx != kPadIndex && *idx != kUnkIndex) {
            out.indices.push_back(*idx);
        }
    }
    if (out.indices.empty()) out.indices.push_back(kUnkIndex);
    return out;
}

std::vector<EncodedExample> encode_all(std::span<const Example> examples, const Vocabulary& vocab) {
    std::vector<EncodedExample> out;
    out.reserve(examples.size());
    for (const Example& ex : examples) out.push_back(encode(ex, vocab));
    return out;
}

// --- splitting and batching -------------------------------------------------

std::vector<std::size_t> FoldSplit::fold_members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] == fold) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> FoldSplit::complement(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        if (assignments[i] != fold) out.push_back(i);
    }
    return out;
}

FoldSplit make_folds(std::size_t n_examples, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw ConfigError("make_folds: k must be >= 1");
    if (n_examples < k) {
        throw ConfigError("make_folds: " + std::to_string(n_examples) +
                          " examples cannot fill " + std::to_string(k) + " folds");
    }
    std::vector<std::size_t> order(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    FoldSplit split;
    split.k = k;
    split.assignments.assign(n_examples, 0);
    for (std::size_t pos = 0; pos < n_examples; ++pos) split.assignments[order[pos]] = pos % k;
    return split;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
holdout_split(std::span<const std::size_t> indices, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
    const std::size_t n = indices.size();
    const auto n_out = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<bool> held(n, false);
    for (std::size_t i = 0; i < n_out; ++i) held[order[i]] = true;
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; ++i) (held[i] ? out.second : out.first).push_back(indices[i]);
    return out;
}

std::vector<Batch> make_batches(std::span<const EncodedExample> examples, std::size_t size,
                                Rng& rng, bool shuffle) {
    if (size == 0) throw ConfigError("batch size must be >= 1");
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (shuffle) rng.shuffle(order);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += size) {
        const std::size_t end = std::min(order.size(), start + size);
        Batch b;
        std::size_t max_len = 0;
        for (std::size_t i = start; i < end; ++i) {
            const EncodedExample& ex = examples[order[i]];
            if (ex.indices.empty()) throw ConfigError("make_batches: example with no tokens");
            max_len = std::max(max_len, ex.indices.size());
        }
        for (std::size_t i = start; i < end; ++i) {
            const EncodedExample& ex = examples[order[i]];
            std::vector<std::size_t> row(max_len, kPadIndex);
            std::copy(ex.indices.begin(), ex.indices.end(), row.begin());
            b.indices.push_back(std::move(row));
            b.lengths.push_back(ex.indices.size());
            b.labels.push_back(ex.label);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

} // namespace dcbilstm
