#include "dcbilstm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "dcbilstm/checkpoint.hpp"
#include "dcbilstm/errors.hpp"
#include "dcbilstm/rng.hpp"

namespace dcbilstm {

// --- loss and regularizers --------------------------------------------------

CrossEntropy cross_entropy(const Tensor& probs, std::size_t label) {
    if (probs.rows() != 1) throw ShapeError("cross_entropy: expected a 1-row distribution");
    if (label >= probs.cols()) {
        throw IndexError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                         std::to_string(probs.cols()) + " classes");
    }
    CrossEntropy ce{-std::log(probs[label]), probs};
    ce.dlogits[label] -= 1.0;
    return ce;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
    return dropout_with_mask(x, rate, rng, training).output;
}

DropoutResult dropout_with_mask(const Tensor& x, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    if (!training || rate == 0.0) return {x, Tensor()};
    const double keep_scale = 1.0 / (1.0 - rate);
    DropoutResult res{x, Tensor(x.rows(), x.cols())};
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double m = rng.uniform01() < rate ? 0.0 : keep_scale;
        res.mask[i] = m;
        res.output[i] *= m;
    }
    return res;
}

void adam_update(AdamState& state, std::span<Tensor* const> params,
                 std::span<const Tensor* const> grads) {
    if (params.size() != grads.size()) throw ShapeError("adam_update: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.emplace_back(p->rows(), p->cols());
            state.v.emplace_back(p->rows(), p->cols());
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_update: state does not match parameters");

    ++state.step;
    const AdamConfig& c = state.config;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(c.beta1, t);
    const double bias2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        const Tensor& g = *grads[k];
        if (g.empty()) continue;
        Tensor& p = *params[k];
        if (!g.same_shape(p) || !state.m[k].same_shape(p)) {
            throw ShapeError("adam_update: gradient " + g.shape_string() + " for parameter " +
                             p.shape_string());
        }
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

void adam_update(AdamState& state, Model& model, const ModelGrads& grads) {
    std::vector<Tensor*> params;
    std::vector<const Tensor*> gs;
    visit_parameters(model, [&](const std::string&, Tensor& t) { params.push_back(&t); });
    visit_parameters(grads, [&](const std::string&, const Tensor& t) { gs.push_back(&t); });
    adam_update(state, params, gs);
}

Tensor max_norm_constrain(const Tensor& W, double s) {
    Tensor out = W;
    max_norm_constrain_inplace(out, s);
    return out;
}

void max_norm_constrain_inplace(Tensor& W, double s) {
    if (!(s > 0.0)) throw ConfigError("max_norm_constrain: s must be positive");
    for (std::size_t c = 0; c < W.cols(); ++c) {
        double sq = 0.0;
        for (std::size_t r = 0; r < W.rows(); ++r) sq += W(r, c) * W(r, c);
        const double norm = std::sqrt(sq);
        if (norm > s) {
            const double scale = s / norm;
            for (std::size_t r = 0; r < W.rows(); ++r) W(r, c) *= scale;
        }
    }
}

std::string to_string(SoftmaxL2 mode) {
    switch (mode) {
    case SoftmaxL2::max_norm: return "max_norm";
    case SoftmaxL2::weight_decay: return "weight_decay";
    case SoftmaxL2::none: return "none";
    }
    return "none";
}

SoftmaxL2 parse_softmax_l2(const std::string& s) {
    if (s == "max_norm") return SoftmaxL2::max_norm;
    if (s == "weight_decay") return SoftmaxL2::weight_decay;
    if (s == "none") return SoftmaxL2::none;
    throw ConfigError("unknown softmax_l2 '" + s + "' (expected max_norm, weight_decay or none)");
}

// --- evaluation -------------------------------------------------------------

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
    std::vector<std::size_t> out(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto row = probs.row_span(r);
        out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double evaluate(const Model& model, std::span<const EncodedExample> examples, std::size_t batch_size) {
    if (examples.empty()) throw ConfigError("evaluate: no examples");
    Rng unused(0);
    std::size_t correct = 0;
    for (const Batch& b : make_batches(examples, batch_size, unused, false)) {
        ForwardTrace tr = model_forward(model, b);
        const auto pred = argmax_rows(tr.probs);
        for (std::size_t r = 0; r < b.size(); ++r) correct += pred[r] == b.labels[r] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

// --- reports ----------------------------------------------------------------

void TrainConfig::validate() const {
    model.validate();
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
    if (!(adam.lr > 0.0)) throw ConfigError("lr must be positive");
    if (cv_folds == 1) throw ConfigError("cv_folds must be 0 (off) or >= 2");
    if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) throw ConfigError("dev_fraction must lie in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

std::string to_json_line(const EpochRecord& r) {
    nlohmann::ordered_json j;
    j["type"] = "epoch";
    if (r.fold) j["fold"] = *r.fold;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    j["train_acc"] = r.train_acc;
    j["dev_acc"] = r.dev_acc ? nlohmann::ordered_json(*r.dev_acc) : nlohmann::ordered_json();
    if (r.test_acc) j["test_acc"] = *r.test_acc;
    j["grad_norm_per_layer"] = r.grad_norm_per_layer;
    if (r.wall_ms) j["wall_ms"] = *r.wall_ms;
    j["seed"] = r.seed;
    return j.dump();
}

std::string to_json_line(const FoldResult& r) {
    nlohmann::ordered_json j;
    j["type"] = "result";
    if (r.fold) j["fold"] = *r.fold;
    j["best_epoch"] = r.best_epoch;
    j["best_dev_acc"] = r.best_dev_acc ? nlohmann::ordered_json(*r.best_dev_acc) : nlohmann::ordered_json();
    j["test_acc"] = r.test_acc ? nlohmann::ordered_json(*r.test_acc) : nlohmann::ordered_json();
    j["final_train_acc"] = r.final_train_acc;
    return j.dump();
}

// --- training loop ----------------------------------------------------------

namespace {

/// Gradient norm per layer group: "dense.<l>", "top", "softmax", "embeddings".
void accumulate_layer_norms(const ModelGrads& g, std::map<std::string, double>& sums) {
    std::map<std::string, double> sq;
    visit_parameters(g, [&](const std::string& name, const Tensor& t) {
        if (t.empty()) return;
        const auto second_dot = name.find('.', name.find('.') + 1);
        std::string group = name.rfind("dense.", 0) == 0 ? name.substr(0, second_dot)
                                                           : name.substr(0, name.find('.'));
        for (double v : t.data()) sq[group] += v * v;
    });
    for (const auto& [k, v] : sq) sums[k] += std::sqrt(v);
}

} // namespace

TrainOutcome train_model(const TrainConfig& cfg, Model model, const TrainData& data,
                         std::optional<std::size_t> fold, std::ostream* log) {
    cfg.validate();
    model.validate();
    if (data.train.empty()) throw ConfigError("train_model: empty training set");

    const std::uint64_t seed = cfg.seed + (fold ? *fold : 0);
    Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
    AdamState adam{cfg.adam, 0, {}, {}};
    const bool has_dev = !data.dev.empty();

    TrainOutcome out{model, {}, {}};
    out.result.fold = fold;
    double best_dev = -1.0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<Batch> batches = make_batches(data.train, cfg.batch_size, rng, true);
        double loss_sum = 0.0;
        std::map<std::string, double> norm_sums;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const Batch& b = batches[bi];
            ForwardTrace tr = model_forward(model, b, {true, &rng});
            BackwardResult br = model_backward(model, tr, b.labels);
            if (!std::isfinite(br.loss)) {
                throw NumericalError("non-finite loss in epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(bi) + " (seed " +
                                     std::to_string(seed) + ")");
            }
            loss_sum += br.loss * static_cast<double>(b.size());
            if (cfg.softmax_l2 == SoftmaxL2::weight_decay && cfg.weight_decay > 0.0) {
                Tensor decay = model.softmax_W;
                decay *= cfg.weight_decay;
                br.grads.softmax_W += decay;
            }
            accumulate_layer_norms(br.grads, norm_sums);
            adam_update(adam, model, br.grads);
            if (cfg.softmax_l2 == SoftmaxL2::max_norm && model.config.max_norm_s) {
                max_norm_constrain_inplace(model.softmax_W, *model.config.max_norm_s);
            }
        }

        EpochRecord rec;
        rec.fold = fold;
        rec.epoch = epoch;
        rec.seed = seed;
        rec.train_loss = loss_sum / static_cast<double>(data.train.size());
        for (auto& [k, v] : norm_sums) rec.grad_norm_per_layer[k] = v / static_cast<double>(batches.size());

        const bool eval_now = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        bool improved = false;
        if (eval_now) {
            rec.train_acc = evaluate(model, data.train, cfg.batch_size);
            if (has_dev) {
                rec.dev_acc = evaluate(model, data.dev, cfg.batch_size);
                improved = *rec.dev_acc > best_dev;
            }
            if (!data.test.empty()) rec.test_acc = evaluate(model, data.test, cfg.batch_size);
        } else if (!out.epochs.empty()) {
            rec.train_acc = out.epochs.back().train_acc;
        }
        if (cfg.log_timing) {
            rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        }

        if (!has_dev || improved) {
            if (has_dev) best_dev = *rec.dev_acc;
            out.best = model;
            out.result.best_epoch = epoch;
            out.result.best_dev_acc = rec.dev_acc;
            out.result.test_acc = rec.test_acc;
            out.result.final_train_acc = rec.train_acc;
            since_best = 0;
        } else if (eval_now) {
            since_best += cfg.eval_every;
        }

        if (log) *log << to_json_line(rec) << '\n' << std::flush;
        out.epochs.push_back(std::move(rec));
        if (has_dev && since_best >= cfg.patience) break;
    }
    return out;
}

namespace {

std::vector<EncodedExample> select(const std::vector<EncodedExample>& all,
                                   std::span<const std::size_t> idx) {
    std::vector<EncodedExample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(all[i]);
    return out;
}

std::filesystem::path fold_path(const std::filesystem::path& base, std::size_t fold) {
    std::filesystem::path p = base;
    p += ".fold" + std::to_string(fold);
    return p;
}

} // namespace

TrainReport train(const TrainConfig& cfg_in, std::ostream* log) {
    TrainConfig cfg = cfg_in;
    if (cfg.train_path.empty()) throw ConfigError("train_path is required");
    if (cfg.embeddings_path.empty()) throw ConfigError("embeddings_path is required");
    if (!std::filesystem::exists(cfg.embeddings_path)) {
        throw ConfigError("embedding file not found: " + cfg.embeddings_path.string());
    }

    LoadOptions opts;
    opts.sst_binary = cfg.sst_binary;
    auto load = [&](const std::filesystem::path& p) {
        if (p.empty()) return std::vector<Example>{};
        if (!std::filesystem::exists(p)) throw ConfigError("dataset not found: " + p.string());
        return load_dataset(p, cfg.data_format, opts);
    };
    const std::vector<Example> train_raw = load(cfg.train_path);
    const std::vector<Example> dev_raw = load(cfg.dev_path);
    const std::vector<Example> test_raw = load(cfg.test_path);
    if (train_raw.empty()) throw ConfigError("training set is empty: " + cfg.train_path.string());

    if (cfg.model.num_classes == 0) {
        std::size_t max_label = 1;
        for (const auto* set : {&train_raw, &dev_raw, &test_raw}) {
            for (const Example& ex : *set) max_label = std::max(max_label, ex.label);
        }
        cfg.model.num_classes = max_label + 1;
    }
    cfg.validate();
    for (const auto* set : {&train_raw, &dev_raw, &test_raw}) {
        for (const Example& ex : *set) {
            if (ex.label >= cfg.model.num_classes) {
                throw ConfigError("label " + std::to_string(ex.label) + " >= num_classes " +
                                  std::to_string(cfg.model.num_classes));
            }
        }
    }

    const EmbeddingTable table = load_embeddings(cfg.embeddings_path, cfg.model.m);
    const std::vector<Example>* corpora[] = {&train_raw, &dev_raw, &test_raw};
    const Vocabulary vocab = build_vocabulary(corpora, table);
    const Tensor emb = embedding_matrix(vocab, table);

    const auto train_all = encode_all(train_raw, vocab);
    const auto dev_all = encode_all(dev_raw, vocab);
    const auto test_all = encode_all(test_raw, vocab);

    auto fresh_model = [&](std::uint64_t seed) {
        Rng init_rng(seed);
        Model m = Model::create(cfg.model, vocab.size(), init_rng);
        m.embeddings = emb;
        return m;
    };

    TrainReport report;
    report.seed = cfg.seed;
    auto run = [&](const TrainData& data, std::optional<std::size_t> fold) {
        TrainOutcome o = train_model(cfg, fresh_model(cfg.seed + (fold ? *fold : 0)), data, fold, log);
        if (log) *log << to_json_line(o.result) << '\n' << std::flush;
        if (!cfg.checkpoint_path.empty()) {
            save_checkpoint(fold ? fold_path(cfg.checkpoint_path, *fold) : cfg.checkpoint_path,
                            Checkpoint{o.best, vocab.tokens(), cfg.seed});
        }
        report.epochs.insert(report.epochs.end(), o.epochs.begin(), o.epochs.end());
        report.folds.push_back(o.result);
    };

    if (cfg.cv_folds >= 2) {
        const FoldSplit split = make_folds(train_all.size(), cfg.cv_folds, cfg.seed);
        double sum = 0.0;
        for (std::size_t f = 0; f < cfg.cv_folds; ++f) {
            const auto test_idx = split.fold_members(f);
            const auto rest = split.complement(f);
            auto [train_idx, dev_idx] = holdout_split(rest, cfg.dev_fraction, cfg.seed + f);
            TrainData data{select(train_all, train_idx), select(train_all, dev_idx),
                           select(train_all, test_idx)};
            run(data, f);
            sum += report.folds.back().test_acc.value_or(0.0);
        }
        report.mean_test_acc = sum / static_cast<double>(cfg.cv_folds);
    } else {
        TrainData data{train_all, dev_all, test_all};
        if (data.dev.empty() && !cfg.dev_path.empty()) {
            throw ConfigError("dev set is empty: " + cfg.dev_path.string());
        }
        run(data, std::nullopt);
        report.mean_test_acc = report.folds.back().test_acc;
    }
    return report;
}

} // namespace dcbilstm
