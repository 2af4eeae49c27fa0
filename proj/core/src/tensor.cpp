#include "dcbilstm/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "dcbilstm/errors.hpp"
#include "dcbilstm/rng.hpp"

namespace dcbilstm {

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) shape_mismatch(op, a, b);
}

} // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Tensor: " + std::to_string(data_.size()) + " values for shape " +
                         shape_string());
    }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("Tensor: ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Tensor Tensor::row(std::initializer_list<double> values) {
    return Tensor(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::string Tensor::shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_shape("operator+=", *this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_shape("operator-=", *this, other);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Row i of the result depends only on row i of `a`, so batching rows never
// changes a row's value.
Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
    Tensor out(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* o = out.row_span(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* brow = b.row_span(k).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += aik * brow[j];
        }
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    Tensor out(a.cols(), b.cols());
    accumulate_matmul_tn(a, b, out);
    return out;
}

void accumulate_matmul_tn(const Tensor& a, const Tensor& b, Tensor& out) {
    if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
        throw ShapeError("matmul_tn: shape mismatch " + a.shape_string() + "^T x " +
                         b.shape_string() + " into " + out.shape_string());
    }
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* brow = b.row_span(r).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = a(r, i);
            if (ari == 0.0) continue;
            double* o = out.row_span(i).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += ari * brow[j];
        }
    }
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: shape mismatch " + a.shape_string() + " x " +
                         b.shape_string() + "^T");
    }
    Tensor out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row_span(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.row_span(j).data();
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
            out(i, j) = s;
        }
    }
    return out;
}

Tensor activation(Activation kind, const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data()) v = kind == Activation::sigmoid ? sigmoid(v) : std::tanh(v);
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape("hadamard", a, b);
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    out += b;
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    out -= b;
    return out;
}

void add_row_broadcast(Tensor& x, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols()) shape_mismatch("add_row_broadcast", x, bias);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row_span(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
}

Tensor sum_rows(const Tensor& x) {
    Tensor out(1, x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row_span(r);
        for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
    }
    return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty part list");
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const Tensor& p : parts) {
        if (p.rows() != rows) shape_mismatch("concat_cols", parts.front(), p);
        cols += p.cols();
    }
    Tensor out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double* o = out.row_span(r).data();
        for (const Tensor& p : parts) {
            auto src = p.row_span(r);
            o = std::copy(src.begin(), src.end(), o);
        }
    }
    return out;
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
    return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
    if (begin + count > x.cols()) {
        throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " + x.shape_string());
    }
    Tensor out(x.rows(), count);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto src = x.row_span(r).subspan(begin, count);
        std::copy(src.begin(), src.end(), out.row_span(r).begin());
    }
    return out;
}

void add_into_cols(Tensor& out, std::size_t begin, const Tensor& src) {
    if (src.rows() != out.rows() || begin + src.cols() > out.cols()) {
        throw ShapeError("add_into_cols: cannot place " + src.shape_string() + " at column " +
                         std::to_string(begin) + " of " + out.shape_string());
    }
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto dst = out.row_span(r).subspan(begin, src.cols());
        auto s = src.row_span(r);
        for (std::size_t c = 0; c < s.size(); ++c) dst[c] += s[c];
    }
}

double frobenius_norm(const Tensor& x) noexcept {
    double s = 0.0;
    for (double v : x.data()) s += v * v;
    return std::sqrt(s);
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    return uniform(rows, cols, -bound, bound, rng);
}

Tensor uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
    Tensor out(rows, cols);
    for (double& v : out.data()) v = rng.uniform(lo, hi);
    return out;
}

} // namespace dcbilstm
