#ifndef MVANET_PARAMS_HPP
#define MVANET_PARAMS_HPP

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvanet/autodiff.hpp"
#include "mvanet/errors.hpp"
#include "mvanet/tensor.hpp"

namespace mvanet {

/*
 * Owns every learnable tensor and every persistent buffer by name, in a fixed
 * creation order (the checkpoint array order). Initial values depend only on
 * (seed, name), so two models built from the same config agree regardless of
 * construction details.
 */
class ParamRegistry {
public:
    explicit ParamRegistry(std::uint64_t seed) : seed_(seed) {}

    // Trainable, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    ad::Var uniform(const std::string& name, std::vector<Index> shape, Index fan_in);
    // Trainable, constant fill (LN/BN affine terms).
    ad::Var constant(const std::string& name, std::vector<Index> shape, double v);

    // Non-trainable persistent state (running statistics).
    Tensor& buffer(const std::string& name, std::vector<Index> shape, double v);

    struct Entry {
        std::string name;
        ad::Var param;     // null for buffers
        Tensor* buf;       // null for params
    };

    const std::deque<Entry>& entries() const { return entries_; }
    std::vector<ad::Var> trainable() const;
    Index parameter_count() const;

    // Checkpoint restore: overwrite a named tensor, with shape validation.
    void set_value(const std::string& name, const Tensor& value);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    const Tensor& value_of(const std::string& name) const;

private:
    Entry& add(const std::string& name);

    std::uint64_t seed_;
    std::deque<Entry> entries_;
    std::deque<Tensor> buffers_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace mvanet

#endif
