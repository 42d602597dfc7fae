#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "stgraph/autodiff.hpp"
#include "stgraph/tensor.hpp"

namespace stgraph {

/// All learnable tensors, addressed by name. Iteration follows insertion
/// order, which fixes the reduction order of every optimizer loop.
class ParameterBank {
public:
    void add(const std::string& name, ad::Tensor value);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    ad::Tensor& at(const std::string& name);
    const ad::Tensor& at(const std::string& name) const;
    std::size_t size() const { return names_.size(); }
    std::size_t scalar_count() const;
    const std::vector<std::string>& names() const { return names_; }
    ad::Tensor& value(std::size_t i) { return values_[i]; }
    const ad::Tensor& value(std::size_t i) const { return values_[i]; }

private:
    std::vector<std::string> names_;
    std::vector<ad::Tensor> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
ad::Tensor init_fan_in(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng);

/// Binds bank values into an expression graph as leaves, one per parameter,
/// created on first use. The var map is what the optimizer reads gradients
/// through after backward.
class ParamBinding {
public:
    ParamBinding(ad::ExprGraph& g, const ParameterBank& bank) : graph_(g), bank_(bank) {}

    ad::Var operator[](const std::string& name) {
        auto it = vars_.find(name);
        if (it != vars_.end()) return it->second;
        ad::Var v = graph_.leaf(bank_.at(name));
        vars_.emplace(name, v);
        return v;
    }

    const std::unordered_map<std::string, ad::Var>& vars() const { return vars_; }
    ad::ExprGraph& graph() { return graph_; }
    const ParameterBank& bank() const { return bank_; }

private:
    ad::ExprGraph& graph_;
    const ParameterBank& bank_;
    std::unordered_map<std::string, ad::Var> vars_;
};

}  // namespace stgraph
