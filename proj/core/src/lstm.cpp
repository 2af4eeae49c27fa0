#include "dcbilstm/lstm.hpp"

#include <algorithm>
#include <cmath>

#include "dcbilstm/errors.hpp"
#include "dcbilstm/rng.hpp"

namespace dcbilstm {

namespace {

void require_rows_cols(const char* what, const Tensor& t, std::size_t rows, std::size_t cols) {
    if (t.rows() != rows || t.cols() != cols) {
        throw ShapeError(std::string(what) + ": expected [" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "], got " + t.shape_string());
    }
}

void zero_row(Tensor& t, std::size_t r) {
    auto row = t.row_span(r);
    std::fill(row.begin(), row.end(), 0.0);
}

std::size_t max_length(std::span<const std::size_t> lengths) {
    return lengths.empty() ? 0 : *std::max_element(lengths.begin(), lengths.end());
}

} // namespace

LstmParams LstmParams::zeros(std::size_t input_dim, std::size_t hidden) {
    return {Tensor(input_dim + hidden, 4 * hidden), Tensor(1, 4 * hidden), input_dim, hidden};
}

LstmParams LstmParams::glorot(std::size_t input_dim, std::size_t hidden, Rng& rng,
                              double forget_bias) {
    LstmParams p{glorot_uniform(input_dim + hidden, 4 * hidden, rng), Tensor(1, 4 * hidden),
                 input_dim, hidden};
    const std::size_t f0 = static_cast<std::size_t>(Gate::forget) * hidden;
    for (std::size_t j = 0; j < hidden; ++j) p.b[f0 + j] = forget_bias;
    return p;
}

void LstmParams::validate() const {
    if (hidden == 0) throw ShapeError("LstmParams: hidden size must be positive");
    require_rows_cols("LstmParams.W", W, input_dim + hidden, 4 * hidden);
    require_rows_cols("LstmParams.b", b, 1, 4 * hidden);
}

StepResult lstm_step(const LstmParams& p, const Tensor& x, const Tensor& h_prev,
                     const Tensor& c_prev) {
    const std::size_t B = x.rows();
    const std::size_t in = p.input_dim;
    const std::size_t d = p.hidden;
    require_rows_cols("lstm_step x", x, B, in);
    require_rows_cols("lstm_step h_prev", h_prev, B, d);
    require_rows_cols("lstm_step c_prev", c_prev, B, d);

    // z = x W[0:in] + h_prev W[in:in+d] + b
    Tensor z(B, 4 * d);
    for (std::size_t r = 0; r < B; ++r) {
        double* zr = z.row_span(r).data();
        for (std::size_t k = 0; k < in; ++k) {
            const double v = x(r, k);
            const double* w = p.W.row_span(k).data();
            for (std::size_t j = 0; j < 4 * d; ++j) zr[j] += v * w[j];
        }
        for (std::size_t k = 0; k < d; ++k) {
            const double v = h_prev(r, k);
            const double* w = p.W.row_span(in + k).data();
            for (std::size_t j = 0; j < 4 * d; ++j) zr[j] += v * w[j];
        }
        for (std::size_t j = 0; j < 4 * d; ++j) zr[j] += p.b[j];
    }

    StepResult res;
    StepCache& cache = res.cache;
    cache.x = x;
    cache.h_prev = h_prev;
    cache.c_prev = c_prev;
    cache.i = Tensor(B, d);
    cache.f = Tensor(B, d);
    cache.o = Tensor(B, d);
    cache.g = Tensor(B, d);
    cache.c = Tensor(B, d);
    cache.tanh_c = Tensor(B, d);
    res.h = Tensor(B, d);
    for (std::size_t r = 0; r < B; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            const double i = sigmoid(z(r, j));
            const double f = sigmoid(z(r, d + j));
            const double o = sigmoid(z(r, 2 * d + j));
            const double g = std::tanh(z(r, 3 * d + j));
            const double c = f * c_prev(r, j) + i * g;
            const double tc = std::tanh(c);
            cache.i(r, j) = i;
            cache.f(r, j) = f;
            cache.o(r, j) = o;
            cache.g(r, j) = g;
            cache.c(r, j) = c;
            cache.tanh_c(r, j) = tc;
            res.h(r, j) = o * tc;
        }
    }
    res.c = cache.c;
    return res;
}

StepGrads lstm_step_backward(const LstmParams& p, const StepCache& cache, const Tensor& dh,
                             const Tensor& dc_in, Fault fault) {
    const std::size_t B = cache.x.rows();
    const std::size_t in = p.input_dim;
    const std::size_t d = p.hidden;
    require_rows_cols("lstm_step_backward dh", dh, B, d);
    require_rows_cols("lstm_step_backward dc", dc_in, B, d);
    require_rows_cols("lstm_step_backward cache.x", cache.x, B, in);

    StepGrads g;
    g.dc_prev = Tensor(B, d);
    Tensor dz(B, 4 * d);
    for (std::size_t r = 0; r < B; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            const double i = cache.i(r, j);
            const double f = cache.f(r, j);
            const double o = cache.o(r, j);
            const double gg = cache.g(r, j);
            const double tc = cache.tanh_c(r, j);
            const double dh_rj = dh(r, j);
            const double dc = dc_in(r, j) + dh_rj * o * (1.0 - tc * tc);
            const double df = dc * cache.c_prev(r, j);
            dz(r, j) = dc * gg * i * (1.0 - i);
            dz(r, d + j) = fault == Fault::forget_gate_derivative ? df : df * f * (1.0 - f);
            dz(r, 2 * d + j) = dh_rj * tc * o * (1.0 - o);
            dz(r, 3 * d + j) = dc * i * (1.0 - gg * gg);
            g.dc_prev(r, j) = dc * f;
        }
    }

    g.db = sum_rows(dz);
    g.dW = Tensor(in + d, 4 * d);
    g.dx = Tensor(B, in);
    g.dh_prev = Tensor(B, d);
    for (std::size_t r = 0; r < B; ++r) {
        const double* dzr = dz.row_span(r).data();
        for (std::size_t k = 0; k < in + d; ++k) {
            const double v = k < in ? cache.x(r, k) : cache.h_prev(r, k - in);
            const double* w = p.W.row_span(k).data();
            double* dw = g.dW.row_span(k).data();
            double acc = 0.0;
            for (std::size_t j = 0; j < 4 * d; ++j) {
                dw[j] += v * dzr[j];
                acc += dzr[j] * w[j];
            }
            if (k < in) {
                g.dx(r, k) = acc;
            } else {
                g.dh_prev(r, k - in) = acc;
            }
        }
    }
    return g;
}

Sequence run_direction(const LstmParams& p, const Sequence& inputs, std::size_t length,
                       Direction dir) {
    if (length == 0) throw EmptySequenceError("run_direction: sequence length is zero");
    if (length > inputs.size()) {
        throw ShapeError("run_direction: length " + std::to_string(length) + " exceeds " +
                         std::to_string(inputs.size()) + " inputs");
    }
    for (const Tensor& x : inputs) {
        if (x.rows() != 1) throw ShapeError("run_direction: expected 1-row inputs, got " +
                                            x.shape_string());
    }
    const std::size_t lengths[] = {length};
    return run_direction_batch(p, inputs, lengths, dir).outputs;
}

DirectionTrace run_direction_batch(const LstmParams& p, const Sequence& inputs,
                                   std::span<const std::size_t> lengths, Direction dir) {
    p.validate();
    const std::size_t B = lengths.size();
    const std::size_t T = inputs.size();
    if (B == 0) throw ShapeError("run_direction_batch: empty batch");
    for (std::size_t len : lengths) {
        if (len == 0) throw EmptySequenceError("run_direction_batch: sequence length is zero");
        if (len > T) throw ShapeError("run_direction_batch: length exceeds input positions");
    }
    for (const Tensor& x : inputs) require_rows_cols("run_direction_batch input", x, B, p.input_dim);

    DirectionTrace trace;
    trace.dir = dir;
    trace.lengths.assign(lengths.begin(), lengths.end());
    trace.steps.resize(T);
    trace.outputs.assign(T, Tensor(B, p.hidden));

    const std::size_t longest = max_length(lengths);
    Tensor h(B, p.hidden);
    Tensor c(B, p.hidden);
    for (std::size_t n = 0; n < longest; ++n) {
        const std::size_t t = dir == Direction::forward ? n : longest - 1 - n;
        StepResult step = lstm_step(p, inputs[t], h, c);
        for (std::size_t r = 0; r < B; ++r) {
            if (t >= lengths[r]) {
                zero_row(step.h, r);
                zero_row(step.c, r);
            }
        }
        h = step.h;
        c = step.c;
        trace.outputs[t] = std::move(step.h);
        trace.steps[t] = std::move(step.cache);
    }
    return trace;
}

DirectionGrads backward_direction(const LstmParams& p, const DirectionTrace& trace,
                                  const Sequence& dh, Fault fault) {
    const std::size_t T = trace.outputs.size();
    const std::size_t B = trace.lengths.size();
    if (dh.size() != T) throw ShapeError("backward_direction: gradient sequence length mismatch");

    DirectionGrads grads;
    grads.dW = Tensor(p.W.rows(), p.W.cols());
    grads.db = Tensor(1, p.b.cols());
    grads.dx.assign(T, Tensor(B, p.input_dim));

    const std::size_t longest = max_length(trace.lengths);
    Tensor dh_next(B, p.hidden);
    Tensor dc_next(B, p.hidden);
    // Visit steps in the reverse of the order the forward pass took them.
    for (std::size_t n = longest; n-- > 0;) {
        const std::size_t t = trace.dir == Direction::forward ? n : longest - 1 - n;
        Tensor dh_t = dh[t] + dh_next;
        Tensor dc_t = dc_next;
        for (std::size_t r = 0; r < B; ++r) {
            if (t >= trace.lengths[r]) {
                zero_row(dh_t, r);
                zero_row(dc_t, r);
            }
        }
        StepGrads sg = lstm_step_backward(p, trace.steps[t], dh_t, dc_t, fault);
        grads.dW += sg.dW;
        grads.db += sg.db;
        grads.dx[t] = std::move(sg.dx);
        dh_next = std::move(sg.dh_prev);
        dc_next = std::move(sg.dc_prev);
    }
    return grads;
}

} // namespace dcbilstm
