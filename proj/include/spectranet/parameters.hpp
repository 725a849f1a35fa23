#pragma once

#include <optional>
#include <random>
#include <string>
#include <unordered_map>

#include "spectranet/autodiff.hpp"

namespace spectranet {

template <Real T>
struct Parameter {
    std::string name;  // dotted path, e.g. "enc.0.spec.w_pos"
    Tensor<T> value;
    bool is_complex = false;  // interleaved (re, im) storage
};

struct ParameterCount {
    std::size_t real = 0;             // every stored scalar
    std::size_t complex_entries = 0;  // one per complex pair, one per real scalar
    friend bool operator==(const ParameterCount&, const ParameterCount&) = default;
};

/// Named parameters of one model, in registration order. Names are unique.
template <Real T>
class ParameterSet {
public:
    std::size_t add(std::string name, Tensor<T> value, bool is_complex = false) {
        if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
        if (is_complex && (value.rank() == 0 || value.shape().back() != 2))
            throw ShapeError("complex parameter '" + name + "' needs a trailing (re,im) axis, got " +
                             shape_str(value.shape()));
        index_.emplace(name, items_.size());
        items_.push_back({std::move(name), std::move(value), is_complex});
        return items_.size() - 1;
    }

    std::size_t size() const { return items_.size(); }
    Parameter<T>& operator[](std::size_t i) { return items_[i]; }
    const Parameter<T>& operator[](std::size_t i) const { return items_[i]; }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    std::optional<std::size_t> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    ParameterCount count() const {
        ParameterCount c;
        for (const auto& p : items_) {
            c.real += p.value.size();
            c.complex_entries += p.is_complex ? p.value.size() / 2 : p.value.size();
        }
        return c;
    }

private:
    std::vector<Parameter<T>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Graph leaves for the parameters of one forward/backward pass.
template <Real T>
class Binding {
public:
    Binding(const ParameterSet<T>& params, bool requires_grad) {
        leaves_.reserve(params.size());
        for (const auto& p : params) leaves_.emplace_back(p.value, requires_grad);
    }
    explicit Binding(std::vector<Var<T>> leaves) : leaves_(std::move(leaves)) {}
    const Var<T>& operator[](std::size_t i) const { return leaves_[i]; }
    std::size_t size() const { return leaves_.size(); }
    std::vector<Tensor<T>> grads() const {
        std::vector<Tensor<T>> g;
        g.reserve(leaves_.size());
        for (const auto& v : leaves_) g.push_back(v.grad());
        return g;
    }

private:
    std::vector<Var<T>> leaves_;
};

using Rng = std::mt19937_64;

template <Real T>
void fill_uniform(Tensor<T>& t, double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
}

template <Real T>
void fill_normal(Tensor<T>& t, double mean, double stddev, Rng& rng) {
    std::normal_distribution<double> d(mean, stddev);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
}

}  // namespace spectranet
