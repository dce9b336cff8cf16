#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace peghole::neuro {

// Dense row-major tensor of doubles. 64-bit floats throughout: the
// finite-difference checks at 1e-4 tolerance are unreliable in 32-bit.
struct Tensor {
    std::vector<int> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) { resize(std::move(d)); }

    void resize(std::vector<int> d) {
        dims = std::move(d);
        data.assign(element_count(dims), 0.0);
    }

    static size_t element_count(const std::vector<int>& d) {
        size_t n = 1;
        for (int v : d) {
            if (v <= 0) throw std::invalid_argument("tensor dim must be positive");
            n *= static_cast<size_t>(v);
        }
        return n;
    }

    size_t size() const { return data.size(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& other) const { return dims == other.dims; }

    void check_finite(const std::string& what) const;
};

std::string shape_str(const std::vector<int>& dims);

}  // namespace peghole::neuro
