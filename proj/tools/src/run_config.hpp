#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dcbilstm/training.hpp"

namespace dcbilstm::cli {

/// One configurable key: the same name is used in config files and, with
/// underscores turned into dashes, as a command-line flag.
struct ConfigField {
    std::string key;
    std::string help;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

const std::vector<ConfigField>& config_fields();

/// Defaults used by `train` and `sweep` before any file or flag is applied.
TrainConfig default_train_config();

/// Applies `key = value` lines (blank lines and `#` comments ignored).
/// Unknown keys and malformed values raise ConfigError naming the line.
void apply_config_text(TrainConfig& cfg, std::istream& in, const std::string& source);
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);
void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Every field with its effective value, in declaration order.
std::vector<std::pair<std::string, std::string>> effective_config(const TrainConfig& cfg);
/// Effective config as one JSON log record.
std::string config_json_line(const TrainConfig& cfg);

} // namespace dcbilstm::cli
