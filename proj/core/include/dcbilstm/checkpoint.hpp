#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dcbilstm/network.hpp"

namespace dcbilstm {

/// A trained model together with the vocabulary its embedding rows are
/// indexed by and the seed of the run that produced it.
///
/// On disk:
///
///     DCBILSTM v1
///     <key> <value>          one manifest line per config field
///     gate_order i,f,o,g
///     concat_order h0,h1,...
///     seed <n>
///     vocab <count>
///     <token>                count lines
///     tensors <count>
///     <name> <rows> <cols>   then rows*cols little-endian IEEE-754 doubles
///     ...
struct Checkpoint {
    Model model;
    std::vector<std::string> vocab;
    std::uint64_t seed = 0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
/// Throws ParseError on any malformed or truncated input.
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace dcbilstm
