// Copyright 2026 The UbiMoE-Sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ubimoe {

using Cycles = std::uint64_t;

// Bad argument shapes, out-of-range values, malformed inputs.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A caller broke an operation precondition that the callee can detect
// (e.g. a supplied row max that is not the max of the row).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Configuration file or schema problem. `field` names the offending key.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Hardware search failure. `binding` names the limiting resource when the
// failure is an infeasible budget ("dsp", "bram"), empty otherwise.
class SearchError : public std::runtime_error {
public:
    enum class Kind { Infeasible, Refused };

    SearchError(Kind kind, std::string binding, const std::string& what)
        : std::runtime_error(what), kind_(kind), binding_(std::move(binding)) {}
    Kind kind() const noexcept { return kind_; }
    const std::string& binding() const noexcept { return binding_; }

private:
    Kind kind_;
    std::string binding_;
};

// Analytical-vs-simulated disagreement beyond the permitted tolerance.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename T>
constexpr T ceil_div(T num, T den) {
    return den == 0 ? 0 : (num + den - 1) / den;
}

// Unbiased draw from [0, n). std::uniform_int_distribution is not specified
// bit-for-bit across standard libraries, and search results must be
// reproducible from the seed alone.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return static_cast<std::size_t>(x % bound);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

// Dense row-major matrix.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw DomainError("matrix data size does not match its shape");
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v)))
                throw DomainError("matrix values must be finite");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    const std::vector<T>& data() const noexcept { return data_; }

    bool same_shape(const Matrix& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    static Matrix random(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                         double lo = -1.0, double hi = 1.0) {
        Matrix m(rows, cols);
        for (auto& v : m.data_) v = static_cast<T>(uniform_real(rng, lo, hi));
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

// Activations, Q/K/V, weights. Reference math is 64-bit.
using TokenMatrix = Matrix<double>;

template <typename T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) return std::numeric_limits<double>::infinity();
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data()[i]) -
                                 static_cast<double>(b.data()[i])));
    return m;
}

}  // namespace ubimoe
