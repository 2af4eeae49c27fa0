#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcbilstm/checkpoint.hpp"
#include "dcbilstm/data.hpp"
#include "dcbilstm/errors.hpp"
#include "dcbilstm/gradcheck.hpp"
#include "dcbilstm/network.hpp"
#include "dcbilstm/training.hpp"
#include "run_config.hpp"

namespace dcbilstm::cli {

namespace {

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string flag_name(const std::string& key) {
    std::string s = key;
    for (char& c : s) {
        if (c == '_') c = '-';
    }
    return "--" + s;
}

/// Registers --config plus one flag per config key on `cmd`.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;

    void attach(CLI::App& cmd) {
        cmd.add_option("--config", config_path, "config file of key = value lines");
        for (const ConfigField& f : config_fields()) {
            cmd.add_option(flag_name(f.key), values[f.key], f.help);
        }
    }

    TrainConfig resolve(const CLI::App& cmd) const {
        TrainConfig cfg = default_train_config();
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        for (const ConfigField& f : config_fields()) {
            if (cmd.count(flag_name(f.key)) > 0) apply_override(cfg, f.key, values.at(f.key));
        }
        return cfg;
    }
};

void print_results(const TrainReport& report, std::ostream& out) {
    for (const FoldResult& r : report.folds) {
        if (r.fold) out << "fold " << *r.fold << ' ';
        out << "best_epoch " << r.best_epoch;
        if (r.best_dev_acc) out << " dev_acc " << fixed4(*r.best_dev_acc);
        if (r.test_acc) out << " test_acc " << fixed4(*r.test_acc);
        out << " train_acc " << fixed4(r.final_train_acc) << '\n';
    }
    if (report.folds.size() > 1 && report.mean_test_acc) {
        out << "cv_mean_test_acc " << fixed4(*report.mean_test_acc) << '\n';
    }
}

std::string summary_json_line(const TrainReport& report) {
    nlohmann::ordered_json j;
    j["type"] = "summary";
    j["seed"] = report.seed;
    j["epochs_run"] = report.epochs.size();
    j["mean_test_acc"] = report.mean_test_acc ? nlohmann::ordered_json(*report.mean_test_acc)
                                              : nlohmann::ordered_json();
    return j.dump();
}

/// Trains with `cfg`, writing the run log. Returns the report.
TrainReport run_training(const TrainConfig& cfg) {
    std::ofstream log;
    if (!cfg.log_path.empty()) {
        if (cfg.log_path.has_parent_path()) std::filesystem::create_directories(cfg.log_path.parent_path());
        log.open(cfg.log_path, std::ios::binary | std::ios::trunc);
        if (!log) throw ConfigError("cannot open log file: " + cfg.log_path.string());
        log << config_json_line(cfg) << '\n';
    }
    if (cfg.checkpoint_path.has_parent_path()) {
        std::filesystem::create_directories(cfg.checkpoint_path.parent_path());
    }
    TrainReport report = train(cfg, log.is_open() ? &log : nullptr);
    if (log.is_open()) log << summary_json_line(report) << '\n';
    return report;
}

int cmd_train(const TrainConfig& cfg, std::ostream& out) {
    TrainReport report = run_training(cfg);
    print_results(report, out);
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string format = "tsv";
    bool sst_binary = false;
    std::size_t batch_size = 200;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const Vocabulary vocab = Vocabulary::from_tokens(ckpt.vocab);
    LoadOptions opts;
    opts.sst_binary = a.sst_binary;
    const auto examples = load_dataset(a.data, parse_dataset_format(a.format), opts);
    for (const Example& ex : examples) {
        if (ex.label >= ckpt.model.config.num_classes) {
            throw ConfigError("label " + std::to_string(ex.label) + " outside the model's " +
                              std::to_string(ckpt.model.config.num_classes) + " classes");
        }
    }
    const auto encoded = encode_all(examples, vocab);
    out << "accuracy " << fixed4(evaluate(ckpt.model, encoded, a.batch_size)) << '\n';
    return kExitOk;
}

struct CountArgs {
    std::size_t m = 300;
    std::size_t dl = 0;
    std::size_t dh = 0;
    std::size_t th = 0;
};

int cmd_count_params(const CountArgs& a, std::ostream& out) {
    if (a.th == 0) throw ConfigError("--th must be >= 1");
    const auto n = count_params(a.m, a.dl, a.dh, a.th);
    out << n << " (" << format_millions(n) << ")\n";
    return kExitOk;
}

struct GradcheckArgs {
    std::string arch = "dense";
    std::size_t m = 8;
    std::size_t dl = 2;
    std::size_t dh = 4;
    std::size_t th = 6;
    std::size_t classes = 3;
    std::size_t seq_len = 5;
    std::uint64_t seed = 42;
    std::size_t seeds = 1;
    double tol_rel = 1e-4;
    double tol_abs = 1e-7;
    double eps = 1e-5;
    bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
    GradCheckOptions o = GradCheckOptions::small(parse_arch(a.arch), a.dl);
    o.config.m = a.m;
    o.config.dh = a.dh;
    o.config.th = a.th;
    o.config.num_classes = a.classes;
    o.seq_len = a.seq_len;
    o.tol_rel = a.tol_rel;
    o.tol_abs = a.tol_abs;
    o.eps = a.eps;
    o.fault = a.inject_fault ? Fault::forget_gate_derivative : Fault::none;
    o.config.validate();

    bool all_pass = true;
    for (std::size_t k = 0; k < a.seeds; ++k) {
        o.seed = a.seed + k;
        const GradCheckReport report = check_model(o);
        out << report.to_json_lines();
        all_pass = all_pass && report.passed;
    }
    return all_pass ? kExitOk : kExitVerificationFailed;
}

struct PrepareArgs {
    std::string format;
    std::string input;
    std::string negative;
    std::string positive;
    std::string output;
    bool phrases = false;
};

int cmd_prepare_data(const PrepareArgs& a, std::ostream& out) {
    std::vector<Example> examples;
    auto require_input = [&] {
        if (a.input.empty()) throw ConfigError("--input is required for format " + a.format);
        if (!std::filesystem::exists(a.input)) throw ConfigError("input not found: " + a.input);
    };
    if (a.format == "tsv") {
        require_input();
        examples = load_dataset(a.input, DatasetFormat::tsv);
    } else if (a.format == "sst" || a.format == "sst2") {
        require_input();
        LoadOptions opts;
        opts.sst_binary = a.format == "sst2";
        opts.sst_phrases = a.phrases;
        examples = load_dataset(a.input, DatasetFormat::sst_trees, opts);
    } else if (a.format == "polarity") {
        if (a.negative.empty() || a.positive.empty()) {
            throw ConfigError("format polarity needs --negative and --positive");
        }
        for (const auto& p : {a.negative, a.positive}) {
            if (!std::filesystem::exists(p)) throw ConfigError("input not found: " + p);
        }
        examples = load_polarity(a.negative, a.positive);
    } else if (a.format == "trec") {
        require_input();
        std::ifstream in(a.input, std::ios::binary);
        examples = parse_trec(in);
    } else {
        throw ConfigError("unknown format '" + a.format + "' (expected tsv, sst, sst2, polarity, trec)");
    }
    std::ofstream o(a.output, std::ios::binary | std::ios::trunc);
    if (!o) throw ConfigError("cannot open output: " + a.output);
    write_tsv(o, examples);
    out << "wrote " << examples.size() << " examples to " << a.output << '\n';
    return kExitOk;
}

struct SweepArgs {
    std::string table;
    bool dry_run = false;
    std::string out_dir = "sweep";
};

int cmd_sweep(const SweepArgs& a, TrainConfig base, std::ostream& out) {
    const auto& rows = sweep_table(a.table);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const SweepRow& row = rows[i];
        const auto params = count_params(base.model.m, row.dl, row.dh, row.th);
        nlohmann::ordered_json j;
        j["type"] = "sweep_row";
        j["table"] = a.table;
        j["row"] = i + 1;
        j["dl"] = row.dl;
        j["dh"] = row.dh;
        j["th"] = row.th;
        j["params"] = params;
        j["params_m"] = format_millions(params);
        if (!a.dry_run) {
            TrainConfig cfg = base;
            // A lower layer with zero units contributes nothing, so dh = 0
            // is the plain single Bi-LSTM.
            cfg.model.dl = row.dh == 0 ? 0 : row.dl;
            cfg.model.dh = row.dh;
            cfg.model.th = row.th;
            const std::string stem = a.table + "_row" + std::to_string(i + 1);
            cfg.log_path = std::filesystem::path(a.out_dir) / (stem + ".jsonl");
            cfg.checkpoint_path = std::filesystem::path(a.out_dir) / (stem + ".ckpt");
            const TrainReport report = run_training(cfg);
            if (!report.folds.empty()) j["train_acc"] = report.folds.back().final_train_acc;
            if (report.mean_test_acc) j["test_acc"] = *report.mean_test_acc;
            if (!report.folds.empty() && report.folds.back().best_dev_acc) {
                j["dev_acc"] = *report.folds.back().best_dev_acc;
            }
            j["log"] = cfg.log_path.string();
        }
        out << j.dump() << '\n';
    }
    return kExitOk;
}

} // namespace

const std::vector<SweepRow>& sweep_table(const std::string& name) {
    static const std::vector<SweepRow> t3 = {{0, 10, 300}, {5, 40, 100}, {10, 20, 100}, {15, 13, 100}, {20, 10, 100}};
    static const std::vector<SweepRow> t4 = {{0, 10, 100}, {5, 10, 100}, {10, 10, 100}, {15, 10, 100}, {20, 10, 100}};
    static const std::vector<SweepRow> t5 = {{10, 0, 100}, {10, 5, 100}, {10, 10, 100}, {10, 15, 100}, {10, 20, 100}};
    if (name == "t3") return t3;
    if (name == "t4") return t4;
    if (name == "t5") return t5;
    throw ConfigError("unknown sweep table '" + name + "' (expected t3, t4 or t5)");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Densely connected bidirectional LSTM sentence classifier"};
    app.name(args.empty() ? "dcbilstm" : std::filesystem::path(args.front()).filename().string());
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    auto* train_cmd = app.add_subcommand("train", "train a model from a config file and flags");
    ConfigFlags train_flags;
    train_flags.attach(*train_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "accuracy of a checkpoint on a dataset");
    EvalArgs eval_args;
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--data", eval_args.data, "dataset file")->required();
    eval_cmd->add_option("--format", eval_args.format, "tsv or sst");
    eval_cmd->add_flag("--sst-binary", eval_args.sst_binary, "SST binary mode");
    eval_cmd->add_option("--batch-size", eval_args.batch_size, "evaluation batch size");

    auto* count_cmd = app.add_subcommand("count-params", "number of recurrent-layer parameters");
    CountArgs count_args;
    count_cmd->add_option("--m", count_args.m, "embedding width");
    count_cmd->add_option("--dl", count_args.dl, "lower layers");
    count_cmd->add_option("--dh", count_args.dh, "hidden units per direction, lower layers");
    count_cmd->add_option("--th", count_args.th, "hidden units per direction, top layer")->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the backward pass");
    GradcheckArgs grad_args;
    grad_cmd->add_option("--arch", grad_args.arch, "dense or stacked");
    grad_cmd->add_option("--m", grad_args.m, "embedding width");
    grad_cmd->add_option("--dl", grad_args.dl, "lower layers");
    grad_cmd->add_option("--dh", grad_args.dh, "hidden units, lower layers");
    grad_cmd->add_option("--th", grad_args.th, "hidden units, top layer");
    grad_cmd->add_option("--classes", grad_args.classes, "number of classes");
    grad_cmd->add_option("--seq-len", grad_args.seq_len, "sentence length");
    grad_cmd->add_option("--seed", grad_args.seed, "first seed");
    grad_cmd->add_option("--seeds", grad_args.seeds, "number of consecutive seeds");
    grad_cmd->add_option("--tol-rel", grad_args.tol_rel, "relative tolerance");
    grad_cmd->add_option("--tol-abs", grad_args.tol_abs, "absolute tolerance floor");
    grad_cmd->add_option("--eps", grad_args.eps, "finite-difference step");
    grad_cmd->add_flag("--inject-fault", grad_args.inject_fault,
                       "corrupt the forget-gate derivative (the check must fail)");

    auto* prep_cmd = app.add_subcommand("prepare-data", "convert a raw corpus to label<TAB>text");
    PrepareArgs prep_args;
    prep_cmd->add_option("--format", prep_args.format, "tsv, sst, sst2, polarity or trec")->required();
    prep_cmd->add_option("--input", prep_args.input, "input file");
    prep_cmd->add_option("--negative", prep_args.negative, "polarity: negative sentences");
    prep_cmd->add_option("--positive", prep_args.positive, "polarity: positive sentences");
    prep_cmd->add_option("--out", prep_args.output, "output TSV")->required();
    prep_cmd->add_flag("--phrases", prep_args.phrases, "sst: also emit labelled inner phrases");

    auto* sweep_cmd = app.add_subcommand("sweep", "train every row of a hyperparameter table");
    SweepArgs sweep_args;
    ConfigFlags sweep_flags;
    sweep_flags.attach(*sweep_cmd);
    sweep_cmd->add_option("--table", sweep_args.table, "t3, t4 or t5")->required();
    sweep_cmd->add_flag("--dry-run", sweep_args.dry_run, "print the rows without training");
    sweep_cmd->add_option("--out-dir", sweep_args.out_dir, "directory for per-row logs");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("dcbilstm");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(train_flags.resolve(*train_cmd), out);
        if (*eval_cmd) return cmd_eval(eval_args, out);
        if (*count_cmd) return cmd_count_params(count_args, out);
        if (*grad_cmd) return cmd_gradcheck(grad_args, out);
        if (*prep_cmd) return cmd_prepare_data(prep_args, out);
        if (*sweep_cmd) return cmd_sweep(sweep_args, sweep_flags.resolve(*sweep_cmd), out);
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return kExitVerificationFailed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace dcbilstm::cli
