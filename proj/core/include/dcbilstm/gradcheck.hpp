#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dcbilstm/lstm.hpp"
#include "dcbilstm/network.hpp"

namespace dcbilstm {

/// Central differences (L(x + eps e_i) - L(x - eps e_i)) / (2 eps) for every
/// coordinate. Throws NumericalError if the loss is not finite.
std::vector<double> finite_diff(const std::function<double(std::span<const double>)>& loss,
                                std::span<const double> params, double eps = 1e-5);

/// |a - n| / max(|a|, |n|, 1e-12)
double relative_error(double analytic, double numeric) noexcept;

struct GradCheckOptions {
    ModelConfig config;
    std::uint64_t seed = 42;
    double tol_rel = 1e-4;
    double tol_abs = 1e-7;
    double eps = 1e-5;
    std::size_t seq_len = 5;
    Fault fault = Fault::none;

    /// m=8, dl=2, dh=4, th=6, C=3, dropout off, embeddings trainable.
    static GradCheckOptions small(Arch arch = Arch::dense, std::size_t dl = 2);
};

struct GroupReport {
    std::string name;
    std::size_t count = 0;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t worst_index = 0;
    std::size_t failures = 0;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GroupReport> groups;
    bool passed = true;
    double tol_rel = 0.0;
    double tol_abs = 0.0;
    double eps = 0.0;
    std::uint64_t seed = 0;

    /// First failing group, or nullptr.
    const GroupReport* first_failure() const;
    /// One JSON object per group, then a summary line.
    std::string to_json_lines() const;
};

/// Compares model_backward against finite differences of the mean
/// cross-entropy for a random model and a two-sentence batch (lengths
/// seq_len and seq_len - 2). An element passes when its relative error is
/// within tol_rel or its absolute error within tol_abs.
GradCheckReport check_model(const GradCheckOptions& options);

} // namespace dcbilstm
