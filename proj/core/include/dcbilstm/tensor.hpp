#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dcbilstm {

class Rng;

/// Dense row-major 2-D array of doubles. A vector is a 1 x n tensor.
///
/// A default-constructed tensor is the 0 x 0 placeholder; every tensor
/// produced by an operation has positive extents.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);
    /// Nested-list literal, e.g. Tensor{{1, 2}, {3, 4}}.
    Tensor(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor row(std::initializer_list<double> values);
    static Tensor identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row_span(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::string shape_string() const;
    bool same_shape(const Tensor& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const noexcept;

    void fill(double value) noexcept;
    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s) noexcept;

    /// Bitwise equality of shape and contents.
    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

enum class Activation { sigmoid, tanh };

double sigmoid(double x) noexcept;

Tensor matmul(const Tensor& a, const Tensor& b);
/// a^T * b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// out += a^T * b
void accumulate_matmul_tn(const Tensor& a, const Tensor& b, Tensor& out);

Tensor activation(Activation kind, const Tensor& x);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);

/// Adds the 1 x n row vector `bias` to every row of `x` in place.
void add_row_broadcast(Tensor& x, const Tensor& bias);
/// Column sums as a 1 x cols tensor.
Tensor sum_rows(const Tensor& x);

/// Horizontal concatenation in the given order.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
/// Columns [begin, begin + count).
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
/// out[:, begin:begin+src.cols] += src
void add_into_cols(Tensor& out, std::size_t begin, const Tensor& src);

double frobenius_norm(const Tensor& x) noexcept;

/// i.i.d. uniform on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);
/// i.i.d. uniform on [lo, hi).
Tensor uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);

} // namespace dcbilstm
