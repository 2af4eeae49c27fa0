#pragma once

#include "dcbilstm/tensor.hpp"

namespace dcbilstm {

class Rng;

struct DropoutResult {
    Tensor output;
    Tensor mask;  // 0 or 1/(1-rate) per element
};

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by 1/(1-rate). With
/// training == false or rate == 0 the input is returned unchanged and no
/// random numbers are drawn.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);
DropoutResult dropout_with_mask(const Tensor& x, double rate, Rng& rng, bool training);

} // namespace dcbilstm
