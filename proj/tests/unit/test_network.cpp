#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dcbilstm/errors.hpp"
#include "dcbilstm/network.hpp"
#include "dcbilstm/rng.hpp"
#include "test_support.hpp"

namespace dcbilstm {
namespace {

using Vec = std::vector<double>;

// Plain-vector reference of one directional LSTM over a whole sentence.
std::vector<Vec> ref_lstm(const LstmParams& p, const std::vector<Vec>& xs, bool reverse) {
    const std::size_t d = p.hidden, in = p.input_dim, n = xs.size();
    std::vector<Vec> out(n, Vec(d, 0.0));
    Vec h(d, 0.0), c(d, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t t = reverse ? n - 1 - s : s;
        Vec z(4 * d);
        for (std::size_t j = 0; j < 4 * d; ++j) {
            double acc = p.b(0, j);
            for (std::size_t k = 0; k < in; ++k) acc += xs[t][k] * p.W(k, j);
            for (std::size_t k = 0; k < d; ++k) acc += h[k] * p.W(in + k, j);
            z[j] = acc;
        }
        for (std::size_t k = 0; k < d; ++k) {
            const double i = 1.0 / (1.0 + std::exp(-z[k]));
            const double f = 1.0 / (1.0 + std::exp(-z[d + k]));
            const double o = 1.0 / (1.0 + std::exp(-z[2 * d + k]));
            const double g = std::tanh(z[3 * d + k]);
            c[k] = f * c[k] + i * g;
            h[k] = o * std::tanh(c[k]);
        }
        out[t] = h;
    }
    return out;
}

std::vector<Vec> ref_bilayer(const BiLayerParams& layer, const std::vector<Vec>& xs) {
    const auto f = ref_lstm(layer.fwd, xs, false);
    const auto b = ref_lstm(layer.bwd, xs, true);
    std::vector<Vec> out(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t) {
        out[t] = f[t];
        out[t].insert(out[t].end(), b[t].begin(), b[t].end());
    }
    return out;
}

// Class distribution for one sentence without any library forward code.
Vec ref_probs(const Model& model, const std::vector<std::size_t>& tokens) {
    std::vector<Vec> h0;
    for (std::size_t id : tokens) {
        const auto row = model.embeddings.row_span(id);
        h0.emplace_back(row.begin(), row.end());
    }
    std::vector<Vec> input = h0;
    std::vector<Vec> below = h0;
    for (const BiLayerParams& layer : model.dense_layers) {
        const auto h = ref_bilayer(layer, model.config.arch == Arch::dense ? input : below);
        for (std::size_t t = 0; t < tokens.size(); ++t) input[t].insert(input[t].end(), h[t].begin(), h[t].end());
        below = h;
    }
    const auto top = ref_bilayer(model.top_layer, model.config.arch == Arch::dense ? input : below);
    Vec pooled(top[0].size(), 0.0);
    for (const Vec& h : top)
        for (std::size_t k = 0; k < h.size(); ++k) pooled[k] += h[k] / static_cast<double>(top.size());
    const std::size_t C = model.config.num_classes;
    Vec logits(C);
    for (std::size_t j = 0; j < C; ++j) {
        logits[j] = model.softmax_b(0, j);
        for (std::size_t k = 0; k < pooled.size(); ++k) logits[j] += pooled[k] * model.softmax_W(k, j);
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : logits) z += (v = std::exp(v - mx));
    for (double& v : logits) v /= z;
    return logits;
}

ModelConfig small_config(Arch arch, std::size_t dl) {
    ModelConfig cfg;
    cfg.m = 5;
    cfg.dl = dl;
    cfg.dh = 3;
    cfg.th = 4;
    cfg.num_classes = 3;
    cfg.dropout_embed = 0.0;
    cfg.dropout_pool = 0.0;
    cfg.arch = arch;
    return cfg;
}

Model random_model(const ModelConfig& cfg, std::size_t vocab, Rng& rng) {
    Model model = Model::create(cfg, vocab, rng);
    model.embeddings = test::random_tensor(vocab, cfg.m, rng);
    for (std::size_t c = 0; c < cfg.m; ++c) {
        model.embeddings(kPadIndex, c) = 0.0;
        model.embeddings(kUnkIndex, c) = 0.0;
    }
    model.softmax_b = test::random_tensor(1, cfg.num_classes, rng, 0.5);
    return model;
}

Batch make_batch(const std::vector<std::vector<std::size_t>>& sentences) {
    Batch b;
    std::size_t max_len = 0;
    for (const auto& s : sentences) max_len = std::max(max_len, s.size());
    for (const auto& s : sentences) {
        auto row = s;
        row.resize(max_len, kPadIndex);
        b.indices.push_back(row);
        b.lengths.push_back(s.size());
        b.labels.push_back(0);
    }
    return b;
}

std::uint64_t layer_sum_params(std::size_t m, std::size_t dl, std::size_t dh, std::size_t th) {
    auto bilstm = [](std::uint64_t in, std::uint64_t d) { return 2 * (4 * d * (in + d) + 4 * d); };
    std::uint64_t total = 0;
    std::uint64_t width = m;
    for (std::size_t l = 0; l < dl; ++l) {
        total += bilstm(width, dh);
        width += 2 * dh;
    }
    return total + bilstm(width, th);
}

TEST(Network, LayerInputWidths) {
    ModelConfig cfg = small_config(Arch::dense, 3);
    EXPECT_EQ(layer_input_dim(cfg, 1), 5u);
    EXPECT_EQ(layer_input_dim(cfg, 2), 11u);
    EXPECT_EQ(layer_input_dim(cfg, 3), 17u);
    EXPECT_EQ(top_input_dim(cfg), 23u);
    cfg.arch = Arch::stacked;
    EXPECT_EQ(layer_input_dim(cfg, 1), 5u);
    EXPECT_EQ(layer_input_dim(cfg, 3), 6u);
    EXPECT_EQ(top_input_dim(cfg), 6u);
    cfg.dl = 0;
    EXPECT_EQ(top_input_dim(cfg), 5u);
}

TEST(Network, CountParamsMatchesLayerSummation) {
    for (std::size_t m : {1, 8, 300})
        for (std::size_t dl : {0, 1, 5, 20})
            for (std::size_t dh : {1, 10, 40})
                for (std::size_t th : {1, 100})
                    EXPECT_EQ(count_params(m, dl, dh, th), layer_sum_params(m, dl, dh, th));
}

TEST(Network, CountParamsSpotValues) {
    EXPECT_EQ(count_params(300, 15, 13, 100), 1406560u);
    EXPECT_EQ(count_params(300, 20, 10, 100), 1442400u);
    EXPECT_EQ(count_params(300, 0, 10, 300), 1442400u);
    EXPECT_EQ(count_params(300, 10, 5, 100), 541200u);
}

TEST(Network, CountParamsMatchesCreatedModel) {
    Rng rng(1);
    ModelConfig cfg = small_config(Arch::dense, 3);
    const Model model = Model::create(cfg, 10, rng);
    std::uint64_t n = 0;
    visit_parameters(model, [&](const std::string& name, const Tensor& t) {
        if (name != "embeddings" && name.rfind("softmax", 0) != 0) n += t.size();
    });
    EXPECT_EQ(n, count_params(cfg.m, cfg.dl, cfg.dh, cfg.th));
}

TEST(Network, FormatMillionsTruncates) {
    EXPECT_EQ(format_millions(1406560), "1.40M");
    EXPECT_EQ(format_millions(1442400), "1.44M");
    EXPECT_EQ(format_millions(320800), "0.32M");
    EXPECT_EQ(format_millions(0), "0.00M");
    EXPECT_EQ(format_millions(9999999), "9.99M");
}

TEST(Network, ConfigValidation) {
    ModelConfig cfg = small_config(Arch::dense, 1);
    EXPECT_NO_THROW(cfg.validate());
    cfg.dh = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_config(Arch::dense, 1);
    cfg.th = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_config(Arch::dense, 1);
    cfg.num_classes = 1;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_config(Arch::dense, 1);
    cfg.dropout_pool = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = small_config(Arch::dense, 1);
    cfg.max_norm_s = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Network, ParseArch) {
    EXPECT_EQ(parse_arch("dense"), Arch::dense);
    EXPECT_EQ(parse_arch("stacked"), Arch::stacked);
    EXPECT_THROW(parse_arch("resnet"), ConfigError);
}

TEST(Network, CreateKeepsReservedRowsZero) {
    Rng rng(2);
    const Model model = Model::create(small_config(Arch::dense, 2), 9, rng);
    EXPECT_EQ(model.embeddings.rows(), 9u);
    EXPECT_EQ(model.softmax_W.rows(), 8u);
    EXPECT_EQ(model.softmax_W.cols(), 3u);
    EXPECT_NO_THROW(model.validate());
}

TEST(Network, ValidateCatchesMiswiredLayer) {
    Rng rng(3);
    Model model = Model::create(small_config(Arch::dense, 2), 9, rng);
    model.dense_layers[1].fwd = LstmParams::zeros(6, 3);
    model.dense_layers[1].bwd = LstmParams::zeros(6, 3);
    EXPECT_THROW(model.validate(), ConfigError);
}

TEST(Network, ForwardMatchesStraightLineReference) {
    Rng rng(4);
    for (Arch arch : {Arch::dense, Arch::stacked}) {
        for (std::size_t dl : {0, 1, 3}) {
            const Model model = random_model(small_config(arch, dl), 12, rng);
            const std::vector<std::vector<std::size_t>> sentences{{2, 5, 7, 3}, {9}, {4, 11, 6}};
            const ForwardTrace tr = model_forward(model, make_batch(sentences));
            for (std::size_t r = 0; r < sentences.size(); ++r) {
                const Vec expected = ref_probs(model, sentences[r]);
                for (std::size_t j = 0; j < expected.size(); ++j) EXPECT_NEAR(tr.probs(r, j), expected[j], 1e-12);
            }
        }
    }
}

TEST(Network, DenseEqualsStackedWhenNoLowerLayers) {
    Rng rng(5);
    Model dense = random_model(small_config(Arch::dense, 0), 10, rng);
    Model stacked = dense;
    stacked.config.arch = Arch::stacked;
    const Batch batch = make_batch({{2, 3, 4}, {5, 6}});
    EXPECT_EQ(model_forward(dense, batch).probs, model_forward(stacked, batch).probs);
}

TEST(Network, EncoderRejectsWrongArchitecture) {
    Rng rng(6);
    const Model model = random_model(small_config(Arch::dense, 1), 10, rng);
    const Sequence xs(3, test::random_tensor(1, 5, rng));
    EXPECT_NO_THROW(dense_forward(model, xs, 3));
    EXPECT_THROW(stacked_forward(model, xs, 3), ConfigError);
}

TEST(Network, DenseLayerSeesEmbeddingsDirectly) {
    // Changing an embedding must alter the top layer even when every lower
    // layer's output weights are zero, because the top reads h0 directly.
    Rng rng(7);
    Model model = random_model(small_config(Arch::dense, 2), 10, rng);
    for (auto& layer : model.dense_layers) {
        layer.fwd = LstmParams::zeros(layer.fwd.input_dim, layer.fwd.hidden);
        layer.bwd = LstmParams::zeros(layer.bwd.input_dim, layer.bwd.hidden);
    }
    const Batch a = make_batch({{2, 3}});
    const Batch b = make_batch({{4, 3}});
    EXPECT_NE(model_forward(model, a).probs, model_forward(model, b).probs);

    Model stacked = random_model(small_config(Arch::stacked, 2), 10, rng);
    for (auto& layer : stacked.dense_layers) {
        layer.fwd = LstmParams::zeros(layer.fwd.input_dim, layer.fwd.hidden);
        layer.bwd = LstmParams::zeros(layer.bwd.input_dim, layer.bwd.hidden);
    }
    EXPECT_EQ(model_forward(stacked, a).probs, model_forward(stacked, b).probs);
}

TEST(Network, PaddingDoesNotChangeResults) {
    Rng rng(8);
    const Model model = random_model(small_config(Arch::dense, 2), 30, rng);
    std::vector<std::vector<std::size_t>> sentences;
    for (std::size_t len : {1, 7, 3, 12}) {
        std::vector<std::size_t> s;
        for (std::size_t t = 0; t < len; ++t) s.push_back(2 + rng.below(28));
        sentences.push_back(s);
    }
    const ForwardTrace batched = model_forward(model, make_batch(sentences));
    for (std::size_t r = 0; r < sentences.size(); ++r) {
        const ForwardTrace single = model_forward(model, make_batch({sentences[r]}));
        for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(batched.probs(r, j), single.probs(0, j), 1e-12);
    }
}

TEST(Network, AveragePoolUsesTrueLength) {
    const Sequence hL{Tensor{{1, 2}, {4, 4}}, Tensor{{3, 4}, {99, 99}}};
    const std::vector<std::size_t> lengths{2, 1};
    EXPECT_EQ(average_pool(hL, lengths), (Tensor{{2, 3}, {4, 4}}));
    EXPECT_THROW(average_pool(hL, std::vector<std::size_t>{2, 0}), EmptySequenceError);
}

TEST(Network, SoftmaxRowsSumToOneAndStayFinite) {
    const Tensor p = softmax(Tensor{{1000, 1001, 999}, {0, 0, 0}});
    EXPECT_TRUE(p.all_finite());
    for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(p(r, 0) + p(r, 1) + p(r, 2), 1.0, 1e-15);
    EXPECT_NEAR(p(1, 0), 1.0 / 3.0, 1e-15);
    EXPECT_GT(p(0, 1), p(0, 0));
}

TEST(Network, ParameterNamesInOrder) {
    Rng rng(9);
    const Model model = Model::create(small_config(Arch::dense, 1), 5, rng);
    std::vector<std::string> names;
    visit_parameters(model, [&](const std::string& n, const Tensor&) { names.push_back(n); });
    const std::vector<std::string> expected{"embeddings",   "dense.0.fwd.W", "dense.0.fwd.b",
                                            "dense.0.bwd.W", "dense.0.bwd.b", "top.fwd.W",
                                            "top.fwd.b",     "top.bwd.W",     "top.bwd.b",
                                            "softmax.W",     "softmax.b"};
    EXPECT_EQ(names, expected);
}

TEST(Network, EvalModeForwardIsDeterministic) {
    Rng rng(10);
    ModelConfig cfg = small_config(Arch::dense, 1);
    cfg.dropout_embed = 0.5;
    cfg.dropout_pool = 0.5;
    const Model model = random_model(cfg, 10, rng);
    const Batch batch = make_batch({{2, 3, 4}});
    EXPECT_EQ(model_forward(model, batch).probs, model_forward(model, batch).probs);
    Rng r1(1), r2(2);
    const Tensor t1 = model_forward(model, batch, {true, &r1}).probs;
    const Tensor t2 = model_forward(model, batch, {true, &r2}).probs;
    EXPECT_NE(t1, t2);
}

} // namespace
} // namespace dcbilstm
