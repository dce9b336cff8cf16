#include "peghole/tensor.hpp"

#include <cmath>

namespace peghole::neuro {

void Tensor::check_finite(const std::string& what) const {
    for (double v : data)
        if (!std::isfinite(v))
            throw std::runtime_error("non-finite value in " + what);
}

std::string shape_str(const std::vector<int>& dims) {
    std::string s = "[";
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

}  // namespace peghole::neuro
