#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dcbilstm/batch.hpp"
#include "dcbilstm/tensor.hpp"

namespace dcbilstm {

class Rng;

/// Pretrained word vectors keyed by lowercased token.
class EmbeddingTable {
public:
    explicit EmbeddingTable(std::size_t dim = 300) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// Stores `vector` under lowercase(token). An existing entry wins.
    /// Returns false when the key was already present.
    bool insert(std::string_view token, Tensor vector);
    /// Case-insensitive lookup; nullptr when absent.
    const Tensor* lookup(std::string_view token) const;
    bool contains(std::string_view token) const { return lookup(token) != nullptr; }

private:
    std::size_t dim_;
    std::unordered_map<std::string, Tensor> entries_;
};

/// Parses `token v1 ... v_dim` lines. Blank lines are skipped.
/// Non-numeric values raise ParseError (with line number); a wrong number
/// of values raises FormatError.
EmbeddingTable parse_embeddings(std::istream& in, std::size_t dim);
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::size_t dim);

std::string to_lower(std::string_view s);

/// Lowercases, puts spaces around standard punctuation, splits on whitespace.
std::vector<std::string> tokenize(std::string_view raw);
/// tokenize(), then drops tokens missing from the table. May return an empty
/// list; callers map that case to the UNK token (see encode()).
std::vector<std::string> tokenize_and_filter(std::string_view raw, const EmbeddingTable& table);

struct Example {
    std::vector<std::string> tokens;
    std::size_t label = 0;

    friend bool operator==(const Example&, const Example&) = default;
};

enum class DatasetFormat { tsv, sst_trees };

struct LoadOptions {
    /// SST only: drop neutral roots, map {0,1} -> 0 and {3,4} -> 1.
    bool sst_binary = false;
    /// SST only: also emit every labelled inner phrase after its sentence.
    bool sst_phrases = false;
};

DatasetFormat parse_dataset_format(const std::string& s);

/// `label<TAB>text`, one example per line. Blank lines are skipped.
std::vector<Example> parse_tsv(std::istream& in);
/// PTB-style parenthesized trees, one per line. Sentence label is the root's.
std::vector<Example> parse_sst(std::istream& in, const LoadOptions& options = {});
std::vector<Example> load_dataset(const std::filesystem::path& path, DatasetFormat format,
                                  const LoadOptions& options = {});

/// Sentence-per-line polarity corpora (MR, Subj): `negative` lines get label
/// 0, `positive` lines label 1. Latin-1 input is converted to UTF-8.
std::vector<Example> load_polarity(const std::filesystem::path& negative,
                                   const std::filesystem::path& positive);
/// TREC question files, `COARSE:fine question`. Coarse classes map in the
/// order ABBR, DESC, ENTY, HUM, LOC, NUM.
std::vector<Example> parse_trec(std::istream& in);

void write_tsv(std::ostream& out, std::span<const Example> examples);

/// Token <-> row index of the embedding matrix. Index 0 is "<pad>", 1 is "<unk>".
class Vocabulary {
public:
    static constexpr const char* kPad = "<pad>";
    static constexpr const char* kUnk = "<unk>";

    Vocabulary();
    /// Restores a vocabulary saved by tokens(); validates the reserved entries.
    static Vocabulary from_tokens(std::vector<std::string> tokens);

    std::size_t add(const std::string& token);
    std::optional<std::size_t> find(const std::string& token) const;
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Vocabulary of every token of `corpora` that the table knows, in first-appearance order.
Vocabulary build_vocabulary(std::span<const std::vector<Example>* const> corpora,
                            const EmbeddingTable& table);
/// vocab.size() x dim matrix; PAD and UNK rows are zero.
Tensor embedding_matrix(const Vocabulary& vocab, const EmbeddingTable& table);

struct EncodedExample {
    std::vector<std::size_t> indices;
    std::size_t label = 0;
};

/// Drops tokens outside the vocabulary. An example left with no tokens is
/// encoded as the single UNK index so it keeps its place in the data.
EncodedExample encode(const Example& example, const Vocabulary& vocab);
std::vector<EncodedExample> encode_all(std::span<const Example> examples, const Vocabulary& vocab);

struct FoldSplit {
    std::size_t k = 10;
    std::vector<std::size_t> assignments;  // example index -> fold id

    std::vector<std::size_t> fold_members(std::size_t fold) const;
    std::vector<std::size_t> complement(std::size_t fold) const;
};

/// Seeded shuffle, then round-robin assignment. Throws ConfigError if n < k.
FoldSplit make_folds(std::size_t n_examples, std::size_t k, std::uint64_t seed);

/// Splits `indices` into (kept, held_out) with round(fraction * n) held out,
/// chosen by a seeded shuffle. Order within each part follows `indices`.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
holdout_split(std::span<const std::size_t> indices, double fraction, std::uint64_t seed);

/// Pads each group of `size` examples into a Batch. When `shuffle` is true
/// the example order is permuted with `rng` first.
std::vector<Batch> make_batches(std::span<const EncodedExample> examples, std::size_t size,
                                Rng& rng, bool shuffle = true);

} // namespace dcbilstm
