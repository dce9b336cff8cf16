#pragma once

#include <functional>
#include <string>
#include <vector>

#include "peghole/params.hpp"

namespace peghole::neuro {

struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel_err = 0.0;
    };
    std::vector<Entry> entries;
    double max_rel_err = 0.0;
    double tolerance = 0.0;

    bool pass() const { return max_rel_err < tolerance; }
};

// Central-difference verification of every parameter gradient.
// loss_fn: pure forward pass returning the loss for the current parameters.
// loss_and_grad_fn: zeroes grads, runs forward+backward, returns the loss.
// Throws if the loss is non-finite.
GradCheckReport grad_check(ParamStore& store,
                           const std::function<double()>& loss_fn,
                           const std::function<double()>& loss_and_grad_fn,
                           double tolerance = 1e-4, double h = 1e-5);

}  // namespace peghole::neuro
