#include "dcbilstm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "dcbilstm/errors.hpp"
#include "dcbilstm/rng.hpp"

namespace dcbilstm {

std::vector<double> finite_diff(const std::function<double(std::span<const double>)>& loss,
                                std::span<const double> params, double eps) {
    std::vector<double> x(params.begin(), params.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + eps;
        const double plus = loss(x);
        x[i] = orig - eps;
        const double minus = loss(x);
        x[i] = orig;
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            throw NumericalError("finite_diff: non-finite loss at coordinate " + std::to_string(i));
        }
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    return grad;
}

double relative_error(double analytic, double numeric) noexcept {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    return std::abs(analytic - numeric) / denom;
}

GradCheckOptions GradCheckOptions::small(Arch arch, std::size_t dl) {
    GradCheckOptions o;
    o.config.m = 8;
    o.config.dl = dl;
    o.config.dh = 4;
    o.config.th = 6;
    o.config.num_classes = 3;
    o.config.dropout_embed = 0.0;
    o.config.dropout_pool = 0.0;
    o.config.arch = arch;
    o.config.fine_tune_embeddings = true;
    return o;
}

const GroupReport* GradCheckReport::first_failure() const {
    for (const GroupReport& g : groups) {
        if (!g.passed) return &g;
    }
    return nullptr;
}

std::string GradCheckReport::to_json_lines() const {
    std::string out;
    for (const GroupReport& g : groups) {
        nlohmann::ordered_json j;
        j["type"] = "group";
        j["name"] = g.name;
        j["count"] = g.count;
        j["max_rel_err"] = g.max_rel_err;
        j["max_abs_err"] = g.max_abs_err;
        j["worst_index"] = g.worst_index;
        j["failures"] = g.failures;
        j["pass"] = g.passed;
        out += j.dump() + "\n";
    }
    nlohmann::ordered_json s;
    s["type"] = "summary";
    s["pass"] = passed;
    s["tol_rel"] = tol_rel;
    s["tol_abs"] = tol_abs;
    s["eps"] = eps;
    s["seed"] = seed;
    if (const GroupReport* f = first_failure()) {
        s["first_failure"] = f->name;
        s["first_failure_index"] = f->worst_index;
    }
    out += s.dump() + "\n";
    return out;
}

namespace {

double batch_loss(const Model& model, const Batch& batch) {
    ForwardTrace tr = model_forward(model, batch);
    double loss = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r) loss -= std::log(tr.probs(r, batch.labels[r]));
    return loss / static_cast<double>(batch.size());
}

} // namespace

GradCheckReport check_model(const GradCheckOptions& options) {
    if (options.seq_len == 0) throw ConfigError("check_model: seq_len must be >= 1");
    ModelConfig cfg = options.config;
    cfg.dropout_embed = 0.0;
    cfg.dropout_pool = 0.0;

    Rng rng(options.seed);
    const std::size_t vocab_size = 8;
    Model model = Model::create(cfg, vocab_size, rng);
    model.embeddings = uniform(vocab_size, cfg.m, -0.5, 0.5, rng);
    for (std::size_t c = 0; c < cfg.m; ++c) {
        model.embeddings(kPadIndex, c) = 0.0;
        model.embeddings(kUnkIndex, c) = 0.0;
    }
    // Non-zero biases so every bias gradient is exercised.
    visit_parameters(model, [&](const std::string& name, Tensor& t) {
        if (name.ends_with(".b")) t = uniform(t.rows(), t.cols(), -0.2, 0.2, rng);
    });

    const std::size_t lengths[] = {options.seq_len, std::max<std::size_t>(1, options.seq_len - 2)};
    Batch batch;
    for (std::size_t len : lengths) {
        std::vector<std::size_t> row(options.seq_len, kPadIndex);
        for (std::size_t t = 0; t < len; ++t) row[t] = 2 + rng.below(vocab_size - 2);
        batch.indices.push_back(row);
        batch.lengths.push_back(len);
        batch.labels.push_back(rng.below(cfg.num_classes));
    }

    ForwardTrace trace = model_forward(model, batch);
    const BackwardResult analytic = model_backward(model, trace, batch.labels, options.fault);

    std::vector<const Tensor*> grads;
    visit_parameters(analytic.grads, [&](const std::string&, const Tensor& t) { grads.push_back(&t); });

    GradCheckReport report;
    report.tol_rel = options.tol_rel;
    report.tol_abs = options.tol_abs;
    report.eps = options.eps;
    report.seed = options.seed;

    std::size_t k = 0;
    visit_parameters(model, [&](const std::string& name, Tensor& param) {
        const Tensor& g = *grads[k++];
        GroupReport group;
        group.name = name;
        group.count = param.size();
        const std::vector<double> original(param.data().begin(), param.data().end());
        auto loss = [&](std::span<const double> values) {
            std::copy(values.begin(), values.end(), param.data().begin());
            return batch_loss(model, batch);
        };
        const std::vector<double> numeric = finite_diff(loss, original, options.eps);
        std::copy(original.begin(), original.end(), param.data().begin());

        // worst_index points at the largest relative error, preferring failing elements.
        double worst_fail = -1.0;
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double a = g.empty() ? 0.0 : g[i];
            const double abs_err = std::abs(a - numeric[i]);
            const double rel_err = relative_error(a, numeric[i]);
            const bool ok = rel_err <= options.tol_rel || abs_err <= options.tol_abs;
            if (!ok) {
                ++group.failures;
                group.passed = false;
                if (rel_err > worst_fail) {
                    worst_fail = rel_err;
                    group.worst_index = i;
                }
            } else if (group.passed && rel_err > group.max_rel_err) {
                group.worst_index = i;
            }
            group.max_rel_err = std::max(group.max_rel_err, rel_err);
            group.max_abs_err = std::max(group.max_abs_err, abs_err);
        }
        report.passed = report.passed && group.passed;
        report.groups.push_back(std::move(group));
    });
    return report;
}

} // namespace dcbilstm
