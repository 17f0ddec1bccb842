// Dense row-major double tensors plus parameter initialization schemes.

#ifndef XLING_TENSOR_HPP
#define XLING_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xling/rng.hpp"

namespace xling::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0)
        : shape(std::move(s)), data(shape_numel(shape), fill) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != shape_numel(shape))
            throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }

    std::size_t numel() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool is_scalar() const { return numel() == 1; }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
    // 3-d access, shape (a, b, c)
    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape == b.shape && a.data == b.data;
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
}

// ---- value-level matrix helpers (shared by forward ops and backprop) ----

// C += A * B
inline void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = &a.data[i * k];
        double* crow = &c.data[i * m];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = &b.data[p * m];
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A * B^T
inline void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = &a.data[i * k];
        double* crow = &c.data[i * m];
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = &b.data[j * k];
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// C += A^T * B
inline void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = &a.data[p * n];
        const double* brow = &b.data[p * m];
        for (std::size_t i = 0; i < n; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = &c.data[i * m];
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

// ---- initialization ----

struct Init {
    enum class Kind { Uniform, Xavier };
    Kind kind = Kind::Uniform;
    double range = 0.0;

    static Init uniform(double a) { return {Kind::Uniform, a}; }
    static Init xavier() { return {Kind::Xavier, 0.0}; }
};

// Deterministic given seed. Xavier draws U(-s, s) with s = sqrt(6/(fan_in+fan_out)),
// giving sample variance 2/(fan_in+fan_out).
inline Tensor init_params(const Shape& shape, Init init, Rng& rng) {
    Tensor t(shape);
    double a = init.range;
    if (init.kind == Init::Kind::Xavier) {
        const std::size_t fan_in = shape.empty() ? 1 : shape[0];
        const std::size_t fan_out = shape.size() < 2 ? 1 : shape[1];
        a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    }
    if (a != 0.0) {
        for (double& v : t.data) v = rng.uniform(-a, a);
    }
    return t;
}

inline Tensor init_params(const Shape& shape, Init init, std::uint64_t seed) {
    Rng rng(seed);
    return init_params(shape, init, rng);
}

}  // namespace xling::ad

#endif  // XLING_TENSOR_HPP
