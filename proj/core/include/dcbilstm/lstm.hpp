#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcbilstm/tensor.hpp"

namespace dcbilstm {

class Rng;

/// Gate blocks along the 4d axis of the affine transform, in storage order.
enum class Gate : std::size_t { input = 0, forget = 1, output = 2, candidate = 3 };

/// Deliberate corruptions of the backward pass, used to prove the gradient
/// checker can see them. Never set outside of verification tooling.
enum class Fault { none, forget_gate_derivative };

/// Affine transform [x; h_prev] -> 4d pre-activations of one LSTM.
///
/// Rows 0..input_dim-1 of W multiply the input, rows input_dim.. multiply the
/// previous hidden state. Columns are the gate blocks [i | f | o | g].
struct LstmParams {
    Tensor W;
    Tensor b;
    std::size_t input_dim = 0;
    std::size_t hidden = 0;

    static LstmParams zeros(std::size_t input_dim, std::size_t hidden);
    /// Glorot-uniform weights, zero bias; `forget_bias` is added to the f block.
    static LstmParams glorot(std::size_t input_dim, std::size_t hidden, Rng& rng,
                             double forget_bias = 0.0);

    /// Throws ShapeError if W/b disagree with input_dim/hidden.
    void validate() const;

    friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

/// Everything the backward pass of one step needs. Tensors have one row per
/// sequence in the batch.
struct StepCache {
    Tensor x;
    Tensor h_prev;
    Tensor c_prev;
    Tensor i, f, o, g;
    Tensor c;
    Tensor tanh_c;
};

struct StepResult {
    Tensor h;
    Tensor c;
    StepCache cache;
};

struct StepGrads {
    Tensor dW;
    Tensor db;
    Tensor dx;
    Tensor dh_prev;
    Tensor dc_prev;
};

/// One LSTM step on a batch of rows: x is B x input_dim, h_prev/c_prev B x hidden.
StepResult lstm_step(const LstmParams& p, const Tensor& x, const Tensor& h_prev,
                     const Tensor& c_prev);

/// Reverse of lstm_step given dL/dh_t and the dL/dc_t flowing in from step t+1.
StepGrads lstm_step_backward(const LstmParams& p, const StepCache& cache, const Tensor& dh,
                             const Tensor& dc_in, Fault fault = Fault::none);

enum class Direction { forward, backward };

/// Position-indexed sequence; element t holds one row per batch entry.
using Sequence = std::vector<Tensor>;

/// Forward-pass record of one directional LSTM over a padded batch.
struct DirectionTrace {
    Direction dir = Direction::forward;
    std::vector<std::size_t> lengths;
    std::vector<StepCache> steps;  // indexed by position; empty cache = skipped
    Sequence outputs;
};

struct DirectionGrads {
    Tensor dW;
    Tensor db;
    Sequence dx;
};

/// Runs one direction over a single sequence. Forward visits positions
/// 0..length-1, Backward visits length-1..0. h_0 = c_0 = 0. The result is
/// index-aligned with `inputs`; positions >= length hold zero vectors.
Sequence run_direction(const LstmParams& p, const Sequence& inputs, std::size_t length,
                       Direction dir);

/// Batched form. Row r of every input tensor belongs to sequence r, which
/// has lengths[r] real positions. Padding rows are excluded from the
/// recurrence and produce zero outputs.
DirectionTrace run_direction_batch(const LstmParams& p, const Sequence& inputs,
                                   std::span<const std::size_t> lengths, Direction dir);

/// BPTT through a recorded direction. `dh[t]` is dL/dh_t for every position.
DirectionGrads backward_direction(const LstmParams& p, const DirectionTrace& trace,
                                  const Sequence& dh, Fault fault = Fault::none);

} // namespace dcbilstm
