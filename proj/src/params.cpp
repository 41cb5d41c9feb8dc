#include "mvanet/params.hpp"

#include <cmath>
#include <random>

namespace mvanet {
namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

ParamRegistry::Entry& ParamRegistry::add(const std::string& name) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, nullptr, nullptr});
    return entries_.back();
}

ad::Var ParamRegistry::uniform(const std::string& name, std::vector<Index> shape, Index fan_in) {
    if (fan_in <= 0) throw ConfigError("fan_in must be positive for " + name);
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed_ ^ fnv1a(name));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < t.numel(); ++i) t[i] = dist(rng);

    Entry& e = add(name);
    e.param = ad::leaf(std::move(t), true, name);
    return e.param;
}

ad::Var ParamRegistry::constant(const std::string& name, std::vector<Index> shape, double v) {
    Entry& e = add(name);
    e.param = ad::leaf(Tensor::full(std::move(shape), v), true, name);
    return e.param;
}

Tensor& ParamRegistry::buffer(const std::string& name, std::vector<Index> shape, double v) {
    Entry& e = add(name);
    buffers_.push_back(Tensor::full(std::move(shape), v));
    e.buf = &buffers_.back();
    return buffers_.back();
}

std::vector<ad::Var> ParamRegistry::trainable() const {
    std::vector<ad::Var> out;
    for (const Entry& e : entries_)
        if (e.param) out.push_back(e.param);
    return out;
}

Index ParamRegistry::parameter_count() const {
    Index n = 0;
    for (const Entry& e : entries_)
        if (e.param) n += e.param->value.numel();
    return n;
}

void ParamRegistry::set_value(const std::string& name, const Tensor& value) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter in checkpoint: " + name);
    Entry& e = entries_[it->second];
    Tensor& dst = e.param ? e.param->value : *e.buf;
    if (!dst.same_shape(value))
        throw ConfigError("shape mismatch restoring " + name + ": model " + dst.shape_str() +
                          " vs stored " + value.shape_str());
    dst = value;
}

const Tensor& ParamRegistry::value_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    const Entry& e = entries_[it->second];
    return e.param ? e.param->value : *e.buf;
}

} // namespace mvanet
