#pragma once

// Named trainable parameters. Each parameter draws from its own RNG stream
// keyed by (seed, name), so initialization is independent of registration
// order and identical across model variants that share parameter names.

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "chartcast/rng.hpp"
#include "chartcast/tensor.hpp"

namespace chartcast {

enum class ParamGroup { encoder, head };

struct Param {
    std::string name;
    Tensor tensor;
    ParamGroup group = ParamGroup::head;
    bool decay = false;  // participates in decoupled weight decay
};

class ParamRegistry {
public:
    explicit ParamRegistry(std::uint64_t seed) : seed_(seed) {}

    // fan-in based uniform bound sqrt(6 / rows): the convolution-style init.
    Tensor add_kaiming(const std::string& name, std::size_t rows,
                       std::size_t cols, ParamGroup group) {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows));
        return add_uniform(name, rows, cols, limit, group, true);
    }

    // sqrt(6 / (rows + cols)) bound: the linear-map init.
    Tensor add_xavier(const std::string& name, std::size_t rows,
                      std::size_t cols, ParamGroup group) {
        const double limit =
            std::sqrt(6.0 / static_cast<double>(rows + cols));
        return add_uniform(name, rows, cols, limit, group, true);
    }

    Tensor add_normal(const std::string& name, Shape shape, double stddev,
                      ParamGroup group) {
        Rng rng(mix_seed(seed_, name));
        std::vector<real> v(shape_numel(shape));
        for (auto& x : v) x = static_cast<real>(rng.normal(0.0, stddev));
        return emplace(name, Tensor::from_values(std::move(shape), std::move(v), true),
                       group, false);
    }

    Tensor add_constant(const std::string& name, Shape shape, double value,
                        ParamGroup group) {
        return emplace(name,
                       Tensor::full(std::move(shape), static_cast<real>(value), true),
                       group, false);
    }

    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }

    Param& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::out_of_range("no parameter named " + name);
        }
        return params_[it->second];
    }

    bool contains(const std::string& name) const {
        return index_.count(name) != 0;
    }

    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const Param& p : params_) n += p.tensor.numel();
        return n;
    }

    void zero_grads() {
        for (Param& p : params_) p.tensor.zero_grad();
    }

    // Toggle requires_grad for every parameter whose name starts with prefix
    // (used by the vision freeze flag). Returns the number touched.
    std::size_t set_trainable(const std::string& prefix, bool trainable) {
        std::size_t n = 0;
        for (Param& p : params_) {
            if (p.name.rfind(prefix, 0) == 0) {
                p.tensor.set_requires_grad(trainable);
                ++n;
            }
        }
        return n;
    }

    std::uint64_t seed() const { return seed_; }

private:
    Tensor add_uniform(const std::string& name, std::size_t rows,
                       std::size_t cols, double limit, ParamGroup group,
                       bool decay) {
        Rng rng(mix_seed(seed_, name));
        std::vector<real> v(rows * cols);
        for (auto& x : v) x = static_cast<real>(rng.uniform(-limit, limit));
        return emplace(name,
                       Tensor::from_values({rows, cols}, std::move(v), true),
                       group, decay);
    }

    Tensor emplace(const std::string& name, Tensor t, ParamGroup group,
                   bool decay) {
        if (index_.count(name)) {
            throw std::logic_error("duplicate parameter name " + name);
        }
        index_[name] = params_.size();
        params_.push_back(Param{name, t, group, decay});
        return t;
    }

    std::uint64_t seed_;
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace chartcast
