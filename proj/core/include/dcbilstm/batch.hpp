#pragma once

#include <cstddef>
#include <vector>

namespace dcbilstm {

/// Vocabulary index reserved for padding. Its embedding row is zero and never trained.
inline constexpr std::size_t kPadIndex = 0;
/// Vocabulary index for a sentence whose every token was out of vocabulary.
inline constexpr std::size_t kUnkIndex = 1;

/// Padded minibatch. indices[r] has max_len entries; entries at or past
/// lengths[r] equal kPadIndex.
struct Batch {
    std::vector<std::vector<std::size_t>> indices;
    std::vector<std::size_t> lengths;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return lengths.size(); }
    std::size_t max_len() const noexcept { return indices.empty() ? 0 : indices.front().size(); }
};

} // namespace dcbilstm
