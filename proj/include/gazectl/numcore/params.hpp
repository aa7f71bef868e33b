#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gazectl/error.hpp"
#include "gazectl/numcore/tensor.hpp"

namespace gazectl::nc {

/// Named trainable tensors with their gradient and Adam moment slots.
template <class T>
class ParamSet {
   public:
    struct Param {
        std::string name;
        Tensor<T> value;
        Tensor<T> grad;
        Tensor<T> m1;
        Tensor<T> m2;
    };

    std::size_t add(std::string name, Shape shape) {
        Param p{std::move(name), Tensor<T>(shape), Tensor<T>(shape), Tensor<T>(shape), Tensor<T>(shape)};
        params_.push_back(std::move(p));
        return params_.size() - 1;
    }

    std::size_t size() const { return params_.size(); }
    Param& operator[](std::size_t i) { return params_.at(i); }
    const Param& operator[](std::size_t i) const { return params_.at(i); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name == name) return i;
        throw Error(ErrorCode::InvalidConfig, "no parameter named '" + name + "'");
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), T(0));
        grads_ready_ = false;
    }

    void mark_grads_ready() { grads_ready_ = true; }
    bool grads_ready() const { return grads_ready_; }
    std::int64_t step() const { return step_; }
    void set_step(std::int64_t s) { step_ = s; }

    template <class U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const auto& p : params_) {
            auto i = out.add(p.name, p.value.shape);
            out[i].value = p.value.template cast<U>();
        }
        return out;
    }

   private:
    std::vector<Param> params_;
    std::int64_t step_ = 0;
    bool grads_ready_ = false;
};

/// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
template <class T>
void glorot_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
}

template <class T>
void uniform_fill(Tensor<T>& t, double limit, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
}

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update; increments the step count and clears gradients.
template <class T>
void adam_step(ParamSet<T>& params, const AdamConfig& cfg = {}) {
    if (!params.grads_ready()) throw Error(ErrorCode::MissingGradient, "adam_step called before backward");
    const std::int64_t t = params.step() + 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
    const T ic1 = static_cast<T>(1.0 / c1), ic2 = static_cast<T>(1.0 / c2);
    for (auto& p : params) {
        const std::size_t n = p.value.size();
        T* w = p.value.data.data();
        const T* g = p.grad.data.data();
        T* m = p.m1.data.data();
        T* v = p.m2.data.data();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = m[i] * ic1;
            const T vhat = v[i] * ic2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
    params.set_step(t);
    params.zero_grad();
}

}  // namespace gazectl::nc
