#include "dcbilstm/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dcbilstm/dropout.hpp"
#include "dcbilstm/errors.hpp"
#include "dcbilstm/loss.hpp"
#include "dcbilstm/rng.hpp"

namespace dcbilstm {

void BiLayerParams::validate() const {
    fwd.validate();
    bwd.validate();
    if (fwd.hidden != bwd.hidden || fwd.input_dim != bwd.input_dim) {
        throw ConfigError("BiLayerParams: forward and backward LSTMs disagree in shape");
    }
}

std::string to_string(Arch arch) { return arch == Arch::dense ? "dense" : "stacked"; }

Arch parse_arch(const std::string& s) {
    if (s == "dense") return Arch::dense;
    if (s == "stacked") return Arch::stacked;
    throw ConfigError("unknown arch '" + s + "' (expected dense or stacked)");
}

void ModelConfig::validate() const {
    if (m == 0) throw ConfigError("m must be >= 1");
    if (dl > 0 && dh == 0) throw ConfigError("dh must be >= 1 when dl > 0");
    if (th == 0) throw ConfigError("th must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (!(dropout_embed >= 0.0 && dropout_embed < 1.0)) {
        throw ConfigError("dropout_embed must lie in [0, 1)");
    }
    if (!(dropout_pool >= 0.0 && dropout_pool < 1.0)) {
        throw ConfigError("dropout_pool must lie in [0, 1)");
    }
    if (max_norm_s && !(*max_norm_s > 0.0)) throw ConfigError("max_norm_s must be positive");
}

std::size_t layer_input_dim(const ModelConfig& cfg, std::size_t layer) {
    if (cfg.arch == Arch::dense) return cfg.m + 2 * cfg.dh * (layer - 1);
    return layer == 1 ? cfg.m : 2 * cfg.dh;
}

std::size_t top_input_dim(const ModelConfig& cfg) {
    if (cfg.arch == Arch::dense) return cfg.m + 2 * cfg.dh * cfg.dl;
    return cfg.dl == 0 ? cfg.m : 2 * cfg.dh;
}

namespace {

BiLayerParams make_layer(std::size_t input_dim, std::size_t hidden, Rng& rng, double forget_bias) {
    BiLayerParams layer;
    layer.fwd = LstmParams::glorot(input_dim, hidden, rng, forget_bias);
    layer.bwd = LstmParams::glorot(input_dim, hidden, rng, forget_bias);
    return layer;
}

BiLayerParams zeros_layer_like(const BiLayerParams& l) {
    return {LstmParams::zeros(l.fwd.input_dim, l.fwd.hidden),
            LstmParams::zeros(l.bwd.input_dim, l.bwd.hidden)};
}

} // namespace

Model Model::create(const ModelConfig& config, std::size_t vocab_size, Rng& rng) {
    config.validate();
    Model model;
    model.config = config;
    model.embeddings = Tensor(std::max<std::size_t>(vocab_size, 2), config.m);
    for (std::size_t l = 1; l <= config.dl; ++l) {
        model.dense_layers.push_back(
            make_layer(layer_input_dim(config, l), config.dh, rng, config.forget_bias));
    }
    model.top_layer = make_layer(top_input_dim(config), config.th, rng, config.forget_bias);
    model.softmax_W = glorot_uniform(2 * config.th, config.num_classes, rng);
    model.softmax_b = Tensor(1, config.num_classes);
    return model;
}

void Model::validate() const {
    config.validate();
    if (embeddings.cols() != config.m) {
        throw ConfigError("embedding width " + std::to_string(embeddings.cols()) +
                          " does not match m = " + std::to_string(config.m));
    }
    if (dense_layers.size() != config.dl) {
        throw ConfigError("model has " + std::to_string(dense_layers.size()) +
                          " lower layers, config says dl = " + std::to_string(config.dl));
    }
    try {
        for (std::size_t l = 1; l <= dense_layers.size(); ++l) {
            const BiLayerParams& layer = dense_layers[l - 1];
            layer.validate();
            if (layer.input_dim() != layer_input_dim(config, l) || layer.hidden() != config.dh) {
                throw ConfigError("layer " + std::to_string(l) + " expects input width " +
                                  std::to_string(layer_input_dim(config, l)) + ", has " +
                                  std::to_string(layer.input_dim()));
            }
        }
        top_layer.validate();
    } catch (const ShapeError& e) {
        throw ConfigError(e.what());
    }
    if (top_layer.input_dim() != top_input_dim(config) || top_layer.hidden() != config.th) {
        throw ConfigError("top layer expects input width " + std::to_string(top_input_dim(config)) +
                          ", has " + std::to_string(top_layer.input_dim()));
    }
    if (softmax_W.rows() != 2 * config.th || softmax_W.cols() != config.num_classes ||
        softmax_b.rows() != 1 || softmax_b.cols() != config.num_classes) {
        throw ConfigError("softmax head shape does not match th/num_classes");
    }
}

ModelGrads ModelGrads::zeros_like(const Model& model) {
    ModelGrads g;
    if (model.config.fine_tune_embeddings) {
        g.embeddings = Tensor(model.embeddings.rows(), model.embeddings.cols());
    }
    for (const auto& l : model.dense_layers) g.dense_layers.push_back(zeros_layer_like(l));
    g.top_layer = zeros_layer_like(model.top_layer);
    g.softmax_W = Tensor(model.softmax_W.rows(), model.softmax_W.cols());
    g.softmax_b = Tensor(model.softmax_b.rows(), model.softmax_b.cols());
    return g;
}

namespace {

struct BiLayerOutput {
    Sequence h;  // [fwd ; bwd] per position
    BiLayerTrace trace;
};

BiLayerOutput run_bilayer(const BiLayerParams& layer, const Sequence& inputs,
                          std::span<const std::size_t> lengths) {
    BiLayerOutput out;
    out.trace.fwd = run_direction_batch(layer.fwd, inputs, lengths, Direction::forward);
    out.trace.bwd = run_direction_batch(layer.bwd, inputs, lengths, Direction::backward);
    out.h.reserve(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        out.h.push_back(concat_cols({out.trace.fwd.outputs[t], out.trace.bwd.outputs[t]}));
    }
    return out;
}

void check_encoder_inputs(const Model& model, const Sequence& embedded,
                          std::span<const std::size_t> lengths) {
    if (lengths.empty()) throw ShapeError("encoder: empty batch");
    for (std::size_t len : lengths) {
        if (len == 0) throw EmptySequenceError("encoder: sequence length is zero");
    }
    for (const Tensor& x : embedded) {
        if (x.cols() != model.config.m || x.rows() != lengths.size()) {
            throw ShapeError("encoder: expected inputs of shape [" +
                             std::to_string(lengths.size()) + "x" +
                             std::to_string(model.config.m) + "], got " + x.shape_string());
        }
    }
}

EncoderOutput run_encoder(const Model& model, const Sequence& embedded,
                          std::span<const std::size_t> lengths) {
    model.validate();
    check_encoder_inputs(model, embedded, lengths);
    const bool dense = model.config.arch == Arch::dense;

    EncoderOutput out;
    out.trace.lengths.assign(lengths.begin(), lengths.end());
    // `reading` is the input of the next layer: the running concatenation
    // [h^0; ...; h^l] for dense, just h^l for stacked.
    Sequence reading = embedded;
    for (const BiLayerParams& layer : model.dense_layers) {
        BiLayerOutput lo = run_bilayer(layer, reading, lengths);
        if (dense) {
            for (std::size_t t = 0; t < reading.size(); ++t) {
                reading[t] = concat_cols({reading[t], lo.h[t]});
            }
        } else {
            reading = std::move(lo.h);
        }
        out.trace.dense.push_back(std::move(lo.trace));
    }
    BiLayerOutput top = run_bilayer(model.top_layer, reading, lengths);
    out.hL = std::move(top.h);
    out.trace.top = std::move(top.trace);
    return out;
}

} // namespace

EncoderOutput dense_forward(const Model& model, const Sequence& embedded,
                            std::span<const std::size_t> lengths) {
    if (model.config.arch != Arch::dense) throw ConfigError("dense_forward: model arch is stacked");
    return run_encoder(model, embedded, lengths);
}

EncoderOutput stacked_forward(const Model& model, const Sequence& embedded,
                              std::span<const std::size_t> lengths) {
    if (model.config.arch != Arch::stacked) throw ConfigError("stacked_forward: model arch is dense");
    return run_encoder(model, embedded, lengths);
}

EncoderOutput encode(const Model& model, const Sequence& embedded,
                     std::span<const std::size_t> lengths) {
    return run_encoder(model, embedded, lengths);
}

EncoderOutput dense_forward(const Model& model, const Sequence& embedded, std::size_t length) {
    const std::size_t lengths[] = {length};
    return dense_forward(model, embedded, lengths);
}

EncoderOutput stacked_forward(const Model& model, const Sequence& embedded, std::size_t length) {
    const std::size_t lengths[] = {length};
    return stacked_forward(model, embedded, lengths);
}

Tensor average_pool(const Sequence& hL, std::span<const std::size_t> lengths) {
    if (hL.empty()) throw EmptySequenceError("average_pool: no positions");
    const std::size_t B = lengths.size();
    const std::size_t width = hL.front().cols();
    Tensor out(B, width);
    for (std::size_t r = 0; r < B; ++r) {
        const std::size_t len = lengths[r];
        if (len == 0) throw EmptySequenceError("average_pool: sequence length is zero");
        if (len > hL.size()) throw ShapeError("average_pool: length exceeds positions");
        auto o = out.row_span(r);
        for (std::size_t t = 0; t < len; ++t) {
            auto h = hL[t].row_span(r);
            for (std::size_t c = 0; c < width; ++c) o[c] += h[c];
        }
        for (double& v : o) v /= static_cast<double>(len);
    }
    return out;
}

Tensor average_pool(const Sequence& hL, std::size_t length) {
    const std::size_t lengths[] = {length};
    return average_pool(hL, lengths);
}

Tensor softmax(const Tensor& logits) {
    Tensor out = logits;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row_span(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
    return out;
}

Tensor classify(const Tensor& h_star, const Tensor& W, const Tensor& b) {
    Tensor logits = matmul(h_star, W);
    add_row_broadcast(logits, b);
    return softmax(logits);
}

std::uint64_t count_params(std::size_t m, std::size_t dl, std::size_t dh, std::size_t th) {
    auto bilstm = [](std::uint64_t input, std::uint64_t hidden) {
        return 2 * (4 * hidden * (input + hidden) + 4 * hidden);
    };
    std::uint64_t total = 0;
    for (std::size_t l = 1; l <= dl; ++l) total += bilstm(m + 2 * dh * (l - 1), dh);
    return total + bilstm(m + 2 * dh * dl, th);
}

std::string format_millions(std::uint64_t count) {
    // Truncate, not round: the published tables print 1,406,560 as 1.40M.
    const std::uint64_t hundredths = count / 10000;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%llu.%02lluM",
                  static_cast<unsigned long long>(hundredths / 100),
                  static_cast<unsigned long long>(hundredths % 100));
    return buf;
}

Sequence embed(const Model& model, const Batch& batch) {
    const std::size_t B = batch.size();
    const std::size_t T = batch.max_len();
    const std::size_t m = model.config.m;
    if (batch.indices.size() != B) throw ShapeError("embed: indices/lengths size mismatch");
    Sequence out(T, Tensor(B, m));
    for (std::size_t r = 0; r < B; ++r) {
        if (batch.indices[r].size() != T) throw ShapeError("embed: ragged index matrix");
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t idx = batch.indices[r][t];
            if (idx >= model.embeddings.rows()) {
                throw IndexError("embed: token index " + std::to_string(idx) +
                                 " outside vocabulary of " +
                                 std::to_string(model.embeddings.rows()));
            }
            auto src = model.embeddings.row_span(idx);
            std::copy(src.begin(), src.end(), out[t].row_span(r).begin());
        }
    }
    return out;
}

ForwardTrace model_forward(const Model& model, const Batch& batch, const ForwardOptions& options) {
    const ModelConfig& cfg = model.config;
    const bool drop_embed = options.training && cfg.dropout_embed > 0.0;
    const bool drop_pool = options.training && cfg.dropout_pool > 0.0;
    if ((drop_embed || drop_pool) && options.rng == nullptr) {
        throw ConfigError("model_forward: training with dropout requires an Rng");
    }

    ForwardTrace tr;
    tr.lengths = batch.lengths;
    tr.indices = batch.indices;
    tr.embedded = embed(model, batch);
    if (drop_embed) {
        for (Tensor& e : tr.embedded) {
            DropoutResult d = dropout_with_mask(e, cfg.dropout_embed, *options.rng, true);
            e = std::move(d.output);
            tr.embed_masks.push_back(std::move(d.mask));
        }
    }
    EncoderOutput enc = encode(model, tr.embedded, batch.lengths);
    tr.encoder = std::move(enc.trace);
    tr.pooled = average_pool(enc.hL, batch.lengths);
    if (drop_pool) {
        DropoutResult d = dropout_with_mask(tr.pooled, cfg.dropout_pool, *options.rng, true);
        tr.h_star = std::move(d.output);
        tr.pool_mask = std::move(d.mask);
    } else {
        tr.h_star = tr.pooled;
    }
    tr.probs = classify(tr.h_star, model.softmax_W, model.softmax_b);
    return tr;
}

namespace {

/// Backprop through one bidirectional layer; returns dL/d(input) per position.
Sequence backward_bilayer(const BiLayerParams& layer, const BiLayerTrace& trace,
                          const Sequence& dh, BiLayerParams& grads, Fault fault) {
    const std::size_t d = layer.hidden();
    Sequence dh_fwd, dh_bwd;
    dh_fwd.reserve(dh.size());
    dh_bwd.reserve(dh.size());
    for (const Tensor& g : dh) {
        dh_fwd.push_back(slice_cols(g, 0, d));
        dh_bwd.push_back(slice_cols(g, d, d));
    }
    DirectionGrads gf = backward_direction(layer.fwd, trace.fwd, dh_fwd, fault);
    DirectionGrads gb = backward_direction(layer.bwd, trace.bwd, dh_bwd, fault);
    grads.fwd.W += gf.dW;
    grads.fwd.b += gf.db;
    grads.bwd.W += gb.dW;
    grads.bwd.b += gb.db;
    Sequence dx = std::move(gf.dx);
    for (std::size_t t = 0; t < dx.size(); ++t) dx[t] += gb.dx[t];
    return dx;
}

} // namespace

BackwardResult model_backward(const Model& model, const ForwardTrace& trace,
                              std::span<const std::size_t> labels, Fault fault) {
    const ModelConfig& cfg = model.config;
    const std::size_t B = trace.lengths.size();
    const std::size_t T = trace.embedded.size();
    if (labels.size() != B) throw ShapeError("model_backward: label count does not match batch");

    BackwardResult res;
    res.grads = ModelGrads::zeros_like(model);
    ModelGrads& g = res.grads;

    // Softmax head, mean cross-entropy over the batch.
    Tensor dlogits(B, cfg.num_classes);
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t r = 0; r < B; ++r) {
        auto row = trace.probs.row_span(r);
        Tensor probs_r(1, cfg.num_classes, std::vector<double>(row.begin(), row.end()));
        CrossEntropy ce = cross_entropy(probs_r, labels[r]);
        res.loss += ce.loss;
        for (std::size_t c = 0; c < cfg.num_classes; ++c) dlogits(r, c) = ce.dlogits[c] * inv_b;
    }
    res.loss *= inv_b;
    accumulate_matmul_tn(trace.h_star, dlogits, g.softmax_W);
    g.softmax_b += sum_rows(dlogits);

    Tensor dpooled = matmul_nt(dlogits, model.softmax_W);
    if (!trace.pool_mask.empty()) dpooled = hadamard(dpooled, trace.pool_mask);

    // Average pool spreads the gradient evenly over real positions.
    Sequence dhL(T, Tensor(B, dpooled.cols()));
    for (std::size_t r = 0; r < B; ++r) {
        const double inv_len = 1.0 / static_cast<double>(trace.lengths[r]);
        auto src = dpooled.row_span(r);
        for (std::size_t t = 0; t < trace.lengths[r]; ++t) {
            auto dst = dhL[t].row_span(r);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] * inv_len;
        }
    }

    Sequence d_reading =
        backward_bilayer(model.top_layer, trace.encoder.top, dhL, g.top_layer, fault);

    const std::size_t dl = model.dense_layers.size();
    Sequence d_embedded;
    if (cfg.arch == Arch::dense) {
        // dH[k] accumulates dL/dh^k from every layer that read h^k.
        std::vector<Sequence> dH(dl + 1);
        std::vector<std::size_t> offsets(dl + 1, 0);
        std::vector<std::size_t> widths(dl + 1, cfg.m);
        for (std::size_t k = 1; k <= dl; ++k) {
            offsets[k] = cfg.m + 2 * cfg.dh * (k - 1);
            widths[k] = 2 * cfg.dh;
        }
        for (std::size_t k = 0; k <= dl; ++k) dH[k].assign(T, Tensor(B, widths[k]));
        auto scatter = [&](const Sequence& dx, std::size_t parts) {
            for (std::size_t t = 0; t < T; ++t) {
                for (std::size_t k = 0; k < parts; ++k) {
                    dH[k][t] += slice_cols(dx[t], offsets[k], widths[k]);
                }
            }
        };
        scatter(d_reading, dl + 1);
        for (std::size_t l = dl; l >= 1; --l) {
            Sequence dx = backward_bilayer(model.dense_layers[l - 1], trace.encoder.dense[l - 1],
                                           dH[l], g.dense_layers[l - 1], fault);
            scatter(dx, l);
        }
        d_embedded = std::move(dH[0]);
    } else {
        for (std::size_t l = dl; l >= 1; --l) {
            d_reading = backward_bilayer(model.dense_layers[l - 1], trace.encoder.dense[l - 1],
                                         d_reading, g.dense_layers[l - 1], fault);
        }
        d_embedded = std::move(d_reading);
    }

    if (cfg.fine_tune_embeddings) {
        for (std::size_t t = 0; t < T; ++t) {
            Tensor de = trace.embed_masks.empty() ? d_embedded[t]
                                                  : hadamard(d_embedded[t], trace.embed_masks[t]);
            for (std::size_t r = 0; r < B; ++r) {
                if (t >= trace.lengths[r]) continue;
                const std::size_t idx = trace.indices[r][t];
                if (idx == kPadIndex || idx == kUnkIndex) continue;
                auto dst = g.embeddings.row_span(idx);
                auto src = de.row_span(r);
                for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
            }
        }
    }
    return res;
}

} // namespace dcbilstm
