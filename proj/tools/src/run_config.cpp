#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <istream>

#include <json.hpp>

#include "dcbilstm/errors.hpp"

namespace dcbilstm::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double to_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": expected a real number, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string real_str(double v) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

template <typename T>
ConfigField size_field(std::string key, std::string help, T TrainConfig::*outer, std::size_t T::*member) {
    return {key, std::move(help),
            [=](TrainConfig& c, const std::string& v) { (c.*outer).*member = to_size(key, v); },
            [=](const TrainConfig& c) { return std::to_string((c.*outer).*member); }};
}

template <typename T>
ConfigField real_field(std::string key, std::string help, T TrainConfig::*outer, double T::*member) {
    return {key, std::move(help),
            [=](TrainConfig& c, const std::string& v) { (c.*outer).*member = to_real(key, v); },
            [=](const TrainConfig& c) { return real_str((c.*outer).*member); }};
}

ConfigField top_size(std::string key, std::string help, std::size_t TrainConfig::*member) {
    return {key, std::move(help),
            [=](TrainConfig& c, const std::string& v) { c.*member = to_size(key, v); },
            [=](const TrainConfig& c) { return std::to_string(c.*member); }};
}

ConfigField top_real(std::string key, std::string help, double TrainConfig::*member) {
    return {key, std::move(help),
            [=](TrainConfig& c, const std::string& v) { c.*member = to_real(key, v); },
            [=](const TrainConfig& c) { return real_str(c.*member); }};
}

ConfigField top_bool(std::string key, std::string help, bool TrainConfig::*member) {
    return {key, std::move(help),
            [=](TrainConfig& c, const std::string& v) { c.*member = to_bool(key, v); },
            [=](const TrainConfig& c) { return bool_str(c.*member); }};
}

ConfigField path_field(std::string key, std::string help, std::filesystem::path TrainConfig::*member) {
    return {key, std::move(help),
            [=](TrainConfig& c, const std::string& v) { c.*member = v; },
            [=](const TrainConfig& c) { return (c.*member).string(); }};
}

std::vector<ConfigField> make_fields() {
    using M = ModelConfig;
    using A = AdamConfig;
    std::vector<ConfigField> f;
    f.push_back({"arch", "dense or stacked",
                 [](TrainConfig& c, const std::string& v) { c.model.arch = parse_arch(v); },
                 [](const TrainConfig& c) { return to_string(c.model.arch); }});
    f.push_back(size_field("m", "embedding width", &TrainConfig::model, &M::m));
    f.push_back(size_field("dl", "number of densely connected lower layers", &TrainConfig::model, &M::dl));
    f.push_back(size_field("dh", "hidden units per direction in lower layers", &TrainConfig::model, &M::dh));
    f.push_back(size_field("th", "hidden units per direction in the top layer", &TrainConfig::model, &M::th));
    f.push_back(size_field("num_classes", "number of classes (0 = infer from data)", &TrainConfig::model, &M::num_classes));
    f.push_back(real_field("dropout_embed", "dropout rate on word embeddings", &TrainConfig::model, &M::dropout_embed));
    f.push_back(real_field("dropout_pool", "dropout rate on the pooled vector", &TrainConfig::model, &M::dropout_pool));
    f.push_back({"max_norm_s", "max column norm of the softmax weights, or none",
                 [](TrainConfig& c, const std::string& v) {
                     if (v == "none") {
                         c.model.max_norm_s.reset();
                     } else {
                         c.model.max_norm_s = to_real("max_norm_s", v);
                     }
                 },
                 [](const TrainConfig& c) {
                     return c.model.max_norm_s ? real_str(*c.model.max_norm_s) : std::string("none");
                 }});
    f.push_back(real_field("forget_bias", "initial forget-gate bias", &TrainConfig::model, &M::forget_bias));
    f.push_back({"fine_tune_embeddings", "train the embedding matrix",
                 [](TrainConfig& c, const std::string& v) {
                     c.model.fine_tune_embeddings = to_bool("fine_tune_embeddings", v);
                 },
                 [](const TrainConfig& c) { return bool_str(c.model.fine_tune_embeddings); }});
    f.push_back({"softmax_l2", "max_norm, weight_decay or none",
                 [](TrainConfig& c, const std::string& v) { c.softmax_l2 = parse_softmax_l2(v); },
                 [](const TrainConfig& c) { return to_string(c.softmax_l2); }});
    f.push_back(top_real("weight_decay", "L2 coefficient for softmax_l2 = weight_decay", &TrainConfig::weight_decay));
    f.push_back(real_field("lr", "Adam learning rate", &TrainConfig::adam, &A::lr));
    f.push_back(real_field("beta1", "Adam first-moment decay", &TrainConfig::adam, &A::beta1));
    f.push_back(real_field("beta2", "Adam second-moment decay", &TrainConfig::adam, &A::beta2));
    f.push_back(real_field("adam_eps", "Adam epsilon", &TrainConfig::adam, &A::eps));
    f.push_back(top_size("epochs", "maximum number of epochs", &TrainConfig::epochs));
    f.push_back(top_size("patience", "early-stopping patience in epochs", &TrainConfig::patience));
    f.push_back(top_size("batch_size", "minibatch size", &TrainConfig::batch_size));
    f.push_back({"seed", "seed for every random draw",
                 [](TrainConfig& c, const std::string& v) { c.seed = to_size("seed", v); },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }});
    f.push_back(top_size("eval_every", "evaluate every N epochs", &TrainConfig::eval_every));
    f.push_back(path_field("train_path", "training data", &TrainConfig::train_path));
    f.push_back(path_field("dev_path", "development data", &TrainConfig::dev_path));
    f.push_back(path_field("test_path", "test data", &TrainConfig::test_path));
    f.push_back(path_field("embeddings_path", "pretrained word vectors", &TrainConfig::embeddings_path));
    f.push_back({"data_format", "tsv or sst",
                 [](TrainConfig& c, const std::string& v) { c.data_format = parse_dataset_format(v); },
                 [](const TrainConfig& c) {
                     return std::string(c.data_format == DatasetFormat::tsv ? "tsv" : "sst");
                 }});
    f.push_back(top_bool("sst_binary", "SST binary mode (drop neutral sentences)", &TrainConfig::sst_binary));
    f.push_back(top_size("cv_folds", "k-fold cross validation over train_path (0 = off)", &TrainConfig::cv_folds));
    f.push_back(top_real("dev_fraction", "fraction of each CV training fold held out as dev", &TrainConfig::dev_fraction));
    f.push_back(path_field("checkpoint_path", "where to write the best model", &TrainConfig::checkpoint_path));
    f.push_back(path_field("log_path", "where to write the JSON-lines run log", &TrainConfig::log_path));
    f.push_back(top_bool("log_timing", "record wall-clock time per epoch", &TrainConfig::log_timing));
    return f;
}

} // namespace

const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = make_fields();
    return fields;
}

TrainConfig default_train_config() {
    TrainConfig cfg;
    cfg.model.num_classes = 0;
    cfg.checkpoint_path = "model.ckpt";
    cfg.log_path = "train_log.jsonl";
    return cfg;
}

void apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
    for (const ConfigField& f : config_fields()) {
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_text(TrainConfig& cfg, std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            apply_override(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    apply_config_text(cfg, in, path.string());
}

std::vector<std::pair<std::string, std::string>> effective_config(const TrainConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const ConfigField& f : config_fields()) out.emplace_back(f.key, f.get(cfg));
    return out;
}

std::string config_json_line(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["type"] = "config";
    for (const auto& [k, v] : effective_config(cfg)) j[k] = v;
    return j.dump();
}

} // namespace dcbilstm::cli
