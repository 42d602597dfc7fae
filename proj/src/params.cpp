#include "stgraph/params.hpp"

#include <cmath>
#include <stdexcept>

namespace stgraph {

void ParameterBank::add(const std::string& name, ad::Tensor value) {
    if (has(name)) throw std::invalid_argument("parameter bank: duplicate name '" + name + "'");
    index_[name] = names_.size();
    names_.push_back(name);
    values_.push_back(std::move(value));
}

ad::Tensor& ParameterBank::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::out_of_range("parameter bank: unknown parameter '" + name + "'");
    return values_[it->second];
}

const ad::Tensor& ParameterBank::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        throw std::out_of_range("parameter bank: unknown parameter '" + name + "'");
    return values_[it->second];
}

std::size_t ParameterBank::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
}

ad::Tensor init_fan_in(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = fan_in > 0 ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : 1.0;
    std::uniform_real_distribution<double> u(-bound, bound);
    ad::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = u(rng);
    return t;
}

}  // namespace stgraph
