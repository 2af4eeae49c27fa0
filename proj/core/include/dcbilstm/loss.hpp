#pragma once

#include <cstddef>

#include "dcbilstm/tensor.hpp"

namespace dcbilstm {

struct CrossEntropy {
    double loss;
    Tensor dlogits;  // probs - onehot(label)
};

/// -ln(probs[label]) and its gradient with respect to the softmax logits.
/// `probs` is a 1 x C distribution. Throws IndexError for an out-of-range label.
CrossEntropy cross_entropy(const Tensor& probs, std::size_t label);

} // namespace dcbilstm
