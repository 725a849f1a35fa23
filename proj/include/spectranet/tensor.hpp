#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace spectranet {

using Shape = std::vector<std::size_t>;

enum class DType { f32, f64 };

template <typename T>
concept Real = std::is_same_v<T, float> || std::is_same_v<T, double>;

template <Real T>
constexpr DType dtype_of() {
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

inline const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

inline std::size_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

/// Error raised when operand shapes are incompatible. The message carries both shapes.
class ShapeError : public std::invalid_argument {
public:
    ShapeError(const std::string& op, const Shape& a, const Shape& b)
        : std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b)) {}
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Dense row-major N-d real array. The scalar type is the dtype; mixing
/// Tensor<float> and Tensor<double> in one op does not compile.
template <Real T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel(shape_) != data_.size())
            throw ShapeError("Tensor: shape " + shape_str(shape_) + " needs " + std::to_string(numel(shape_)) +
                             " elements, got " + std::to_string(data_.size()));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor ones(Shape s) { return Tensor(std::move(s), T(1)); }
    static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }
    static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

    static constexpr DType dtype() { return dtype_of<T>(); }

    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // 4-d accessor, the common case for [B,C,H,W] fields
    T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    const T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    T item() const {
        if (data_.size() != 1) throw ShapeError("item: tensor is not scalar " + shape_str(shape_));
        return data_[0];
    }

    Tensor reshaped(Shape s) const {
        if (numel(s) != data_.size()) throw ShapeError("reshape", shape_, s);
        return Tensor(std::move(s), data_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <Real U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <Real T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

template <Real T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("dot", a, b);
    T acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

template <Real T>
T sum_squares(std::span<const T> v) {
    T acc = 0;
    for (T x : v) acc += x * x;
    return acc;
}

template <Real T>
T l2_norm(std::span<const T> v) {
    return std::sqrt(sum_squares(v));
}

template <Real T>
T l2_norm(const Tensor<T>& t) {
    return l2_norm(t.data());
}

template <Real T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("max_abs_diff", a, b);
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// [B,H,W,C] -> [B,C,H,W]
template <Real T>
Tensor<T> to_channels_first(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("to_channels_first: expected rank 4, got " + shape_str(x.shape()));
    const auto B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor<T> y({B, C, H, W});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                for (std::size_t c = 0; c < C; ++c) y.at(b, c, i, j) = x.at(b, i, j, c);
    return y;
}

/// [B,C,H,W] -> [B,H,W,C]
template <Real T>
Tensor<T> to_channels_last(const Tensor<T>& x) {
    if (x.rank() != 4) throw ShapeError("to_channels_last: expected rank 4, got " + shape_str(x.shape()));
    const auto B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> y({B, H, W, C});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < H; ++i)
                for (std::size_t j = 0; j < W; ++j) y.at(b, i, j, c) = x.at(b, c, i, j);
    return y;
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace spectranet
