#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcbilstm/batch.hpp"
#include "dcbilstm/lstm.hpp"
#include "dcbilstm/tensor.hpp"

namespace dcbilstm {

class Rng;

/// One bidirectional layer. Its output at position t is [fwd h_t ; bwd h_t].
struct BiLayerParams {
    LstmParams fwd;
    LstmParams bwd;

    std::size_t input_dim() const noexcept { return fwd.input_dim; }
    std::size_t hidden() const noexcept { return fwd.hidden; }
    std::size_t output_dim() const noexcept { return 2 * fwd.hidden; }
    void validate() const;

    friend bool operator==(const BiLayerParams&, const BiLayerParams&) = default;
};

enum class Arch { dense, stacked };

std::string to_string(Arch arch);
Arch parse_arch(const std::string& s);

struct ModelConfig {
    std::size_t m = 300;          // embedding width
    std::size_t dl = 15;          // number of layers below the top layer
    std::size_t dh = 13;          // hidden units per direction, lower layers
    std::size_t th = 100;         // hidden units per direction, top layer
    std::size_t num_classes = 2;
    double dropout_embed = 0.5;
    double dropout_pool = 0.5;
    std::optional<double> max_norm_s = 3.0;
    Arch arch = Arch::dense;
    double forget_bias = 0.0;     // added to the f-gate bias at initialization
    bool fine_tune_embeddings = false;

    /// Throws ConfigError on any violated invariant.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Input width of lower layer `layer` (1-based) under the configured arch.
/// Dense: m + 2*dh*(layer-1). Stacked: m for layer 1, 2*dh above.
std::size_t layer_input_dim(const ModelConfig& cfg, std::size_t layer);
/// Input width of the top layer. Dense: m + 2*dh*dl. Stacked: 2*dh (m if dl == 0).
std::size_t top_input_dim(const ModelConfig& cfg);

/// Full parameter set. Embedding row kPadIndex (and kUnkIndex) stay zero.
struct Model {
    ModelConfig config;
    Tensor embeddings;                      // vocab x m
    std::vector<BiLayerParams> dense_layers;
    BiLayerParams top_layer;
    Tensor softmax_W;                       // 2*th x num_classes
    Tensor softmax_b;                       // 1 x num_classes

    /// Random initialization: Glorot-uniform weights, zero biases, zero embeddings.
    static Model create(const ModelConfig& config, std::size_t vocab_size, Rng& rng);

    /// Checks every layer against the input-width chain. Throws ConfigError.
    void validate() const;

    friend bool operator==(const Model&, const Model&) = default;
};

/// Gradients with the same layout as Model's parameters. `embeddings` is
/// empty when embeddings are frozen.
struct ModelGrads {
    Tensor embeddings;
    std::vector<BiLayerParams> dense_layers;
    BiLayerParams top_layer;
    Tensor softmax_W;
    Tensor softmax_b;

    static ModelGrads zeros_like(const Model& model);
};

/// Calls f(name, tensor) for every parameter tensor, in a fixed order.
/// Works on Model and ModelGrads (const or not).
template <typename ParamsLike, typename F>
void visit_parameters(ParamsLike& p, F&& f) {
    f(std::string("embeddings"), p.embeddings);
    auto visit_layer = [&](const std::string& prefix, auto& layer) {
        f(prefix + ".fwd.W", layer.fwd.W);
        f(prefix + ".fwd.b", layer.fwd.b);
        f(prefix + ".bwd.W", layer.bwd.W);
        f(prefix + ".bwd.b", layer.bwd.b);
    };
    for (std::size_t l = 0; l < p.dense_layers.size(); ++l) {
        visit_layer("dense." + std::to_string(l), p.dense_layers[l]);
    }
    visit_layer("top", p.top_layer);
    f(std::string("softmax.W"), p.softmax_W);
    f(std::string("softmax.b"), p.softmax_b);
}

struct BiLayerTrace {
    DirectionTrace fwd;
    DirectionTrace bwd;
};

/// Forward record of the recurrent stack.
struct EncoderTrace {
    std::vector<std::size_t> lengths;
    std::vector<BiLayerTrace> dense;
    BiLayerTrace top;
};

struct EncoderOutput {
    Sequence hL;  // top layer output, B x 2*th per position
    EncoderTrace trace;
};

/// Densely connected stack: lower layer l reads [h^0; h^1; ...; h^{l-1}] at
/// each position and the top layer reads [h^0; ...; h^dl]. h^0 is the input.
EncoderOutput dense_forward(const Model& model, const Sequence& embedded,
                            std::span<const std::size_t> lengths);
/// Conventional stack: each layer reads only the layer directly below.
EncoderOutput stacked_forward(const Model& model, const Sequence& embedded,
                              std::span<const std::size_t> lengths);
/// Dispatches on model.config.arch.
EncoderOutput encode(const Model& model, const Sequence& embedded,
                     std::span<const std::size_t> lengths);

/// Single-sequence conveniences (one row per position).
EncoderOutput dense_forward(const Model& model, const Sequence& embedded, std::size_t length);
EncoderOutput stacked_forward(const Model& model, const Sequence& embedded, std::size_t length);

/// Mean of hL over positions 0..lengths[r]-1, per batch row.
Tensor average_pool(const Sequence& hL, std::span<const std::size_t> lengths);
Tensor average_pool(const Sequence& hL, std::size_t length);

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);
/// softmax(h_star * W + b).
Tensor classify(const Tensor& h_star, const Tensor& W, const Tensor& b);

/// Number of LSTM parameters (weights and biases of the lower layers and the
/// top layer; embeddings and the softmax head are not counted).
std::uint64_t count_params(std::size_t m, std::size_t dl, std::size_t dh, std::size_t th);
/// Parameter count in millions truncated to two decimals, e.g. "1.40M".
std::string format_millions(std::uint64_t count);

struct ForwardOptions {
    bool training = false;
    Rng* rng = nullptr;  // required when training with non-zero dropout
};

struct ForwardTrace {
    std::vector<std::size_t> lengths;
    std::vector<std::vector<std::size_t>> indices;
    Sequence embedded;       // after dropout
    Sequence embed_masks;    // empty when no dropout was applied
    EncoderTrace encoder;
    Tensor pooled;           // before dropout
    Tensor pool_mask;        // empty when no dropout was applied
    Tensor h_star;           // after dropout
    Tensor probs;            // B x num_classes
};

/// Embedding lookup for a padded batch: element t is B x m.
Sequence embed(const Model& model, const Batch& batch);

/// embed -> dropout -> encoder -> average pool -> dropout -> softmax.
ForwardTrace model_forward(const Model& model, const Batch& batch,
                           const ForwardOptions& options = {});

struct BackwardResult {
    double loss = 0.0;  // mean cross-entropy over the batch
    ModelGrads grads;
};

/// Gradients of the mean cross-entropy of `trace.probs` against `labels`.
BackwardResult model_backward(const Model& model, const ForwardTrace& trace,
                              std::span<const std::size_t> labels, Fault fault = Fault::none);

} // namespace dcbilstm
