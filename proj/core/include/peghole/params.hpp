#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "peghole/rng.hpp"
#include "peghole/tensor.hpp"

namespace peghole::neuro {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Named parameter tensors with paired gradient buffers. Registration order is
// stable, which keeps serialization and optimizer iteration deterministic.
class ParamStore {
public:
    explicit ParamStore(uint64_t rng_seed = 0) : rng_(rng_seed), seed_(rng_seed) {}

    // Registers a new parameter (initialized by init) or binds to an existing
    // one with matching shape.
    Param& param(const std::string& name, std::vector<int> dims,
                 const std::function<void(Tensor&, Rng&)>& init);

    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<std::unique_ptr<Param>>& params() { return params_; }
    const std::vector<std::unique_ptr<Param>>& params() const { return params_; }

    void zero_grads();
    size_t parameter_count() const;
    uint64_t seed() const { return seed_; }

    // Versioned binary container: magic "PHW1", little-endian,
    // per-tensor name/shape/data.
    void save(const std::string& path) const;
    void load(const std::string& path);  // binds or creates params

private:
    // unique_ptr elements keep Param addresses stable across registration
    std::vector<std::unique_ptr<Param>> params_;
    std::unordered_map<std::string, size_t> index_;
    Rng rng_;
    uint64_t seed_;
};

// fan-in scaled uniform in [-sqrt(3/fan_in), sqrt(3/fan_in)]
std::function<void(Tensor&, Rng&)> uniform_fan_in(int fan_in);
std::function<void(Tensor&, Rng&)> zeros_init();

// Standard adaptive-moment optimizer; zeroes gradients after each step.
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& store);
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::unordered_map<std::string, Moments> moments_;
};

}  // namespace peghole::neuro
