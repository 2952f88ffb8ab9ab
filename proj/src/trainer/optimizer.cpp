#include "hsp/trainer/optimizer.hpp"

#include <cmath>
#include <map>

#include "hsp/errors.hpp"

namespace hsp::trainer {

Adam::Adam(num::ParamList params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
    if (!(options_.learning_rate >= 0.0)) throw ConfigError("adam: learning rate must be >= 0");
    for (const auto& p : params_) {
        if (!p.tensor.is_leaf() || !p.tensor.requires_grad()) {
            throw UsageError("adam: parameter " + p.name + " is not a trainable leaf");
        }
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
    ++step_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    const double lr = options_.learning_rate;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& t = params_[k].tensor;
        const bool has = t.has_grad();
        auto& m = m_[k];
        auto& v = v_[k];
        num::dispatch(t.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto values = t.mutable_data<T>();
            std::span<const T> grad;
            if (has) grad = t.grad_data<T>();
            for (std::size_t i = 0; i < values.size(); ++i) {
                const double g = has ? static_cast<double>(grad[i]) : 0.0;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
                values[i] = static_cast<T>(static_cast<double>(values[i]) - update);
            }
        });
    }
}

num::ParamList Adam::state() const {
    num::ParamList out;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        const num::Shape& shape = params_[k].tensor.shape();
        out.push_back({"adam.m." + params_[k].name, Tensor::from_values(shape, m_[k], num::DType::f64)});
        out.push_back({"adam.v." + params_[k].name, Tensor::from_values(shape, v_[k], num::DType::f64)});
    }
    return out;
}

void Adam::load_state(const num::ParamList& state, std::size_t steps) {
    std::map<std::string, Tensor> by_name;
    for (const auto& s : state) by_name[s.name] = s.tensor;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        for (auto* target : {&m_[k], &v_[k]}) {
            const std::string name =
                std::string(target == &m_[k] ? "adam.m." : "adam.v.") + params_[k].name;
            const auto it = by_name.find(name);
            if (it == by_name.end()) throw IoError("optimizer state lacks " + name);
            if (it->second.shape() != params_[k].tensor.shape()) {
                throw IoError("optimizer state " + name + " has shape " +
                              num::shape_str(it->second.shape()));
            }
            *target = it->second.to_vector();
        }
    }
    step_ = steps;
}

}  // namespace hsp::trainer
