#include "peghole/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace peghole::neuro {

Param& ParamStore::param(const std::string& name, std::vector<int> dims,
                         const std::function<void(Tensor&, Rng&)>& init) {
    auto it = index_.find(name);
    if (it != index_.end()) {
        Param& p = *params_[it->second];
        if (p.value.dims != dims)
            throw std::runtime_error("param " + name + " shape mismatch: have " +
                                     shape_str(p.value.dims) + ", want " +
                                     shape_str(dims));
        return p;
    }
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value.resize(dims);
    p->grad.resize(dims);
    init(p->value, rng_);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
}

Param& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("no param named " + name);
    return *params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("no param named " + name);
    return *params_[it->second];
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p->grad.fill(0.0);
}

size_t ParamStore::parameter_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

namespace {

constexpr char kMagic[4] = {'P', 'H', 'W', '1'};

template <typename T>
void write_le(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

void ParamStore::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out.write(kMagic, 4);
    write_le<uint32_t>(out, 1);  // format version
    write_le<uint64_t>(out, seed_);
    write_le<uint32_t>(out, static_cast<uint32_t>(params_.size()));
    for (const auto& p : params_) {
        write_le<uint32_t>(out, static_cast<uint32_t>(p->name.size()));
        out.write(p->name.data(), p->name.size());
        write_le<uint32_t>(out, static_cast<uint32_t>(p->value.dims.size()));
        for (int d : p->value.dims) write_le<uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(p->value.ptr()),
                  p->value.size() * sizeof(double));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void ParamStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": not a weight file");
    const uint32_t version = read_le<uint32_t>(in);
    if (version != 1) throw std::runtime_error(path + ": unsupported version");
    seed_ = read_le<uint64_t>(in);
    const uint32_t count = read_le<uint32_t>(in);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_le<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const uint32_t ndim = read_le<uint32_t>(in);
        std::vector<int> dims(ndim);
        for (uint32_t d = 0; d < ndim; ++d)
            dims[d] = static_cast<int>(read_le<uint64_t>(in));
        Param& p = param(name, dims, zeros_init());
        in.read(reinterpret_cast<char*>(p.value.ptr()),
                p.value.size() * sizeof(double));
    }
    if (!in) throw std::runtime_error("truncated weight file: " + path);
}

std::function<void(Tensor&, Rng&)> uniform_fan_in(int fan_in) {
    const double bound = std::sqrt(3.0 / fan_in);
    return [bound](Tensor& t, Rng& rng) {
        for (double& v : t.data) v = rng.uniform(-bound, bound);
    };
}

std::function<void(Tensor&, Rng&)> zeros_init() {
    return [](Tensor& t, Rng&) { t.fill(0.0); };
}

void Adam::step(ParamStore& store) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& p : store.params()) {
        Moments& mo = moments_[p->name];
        if (mo.m.empty()) {
            mo.m.assign(p->value.size(), 0.0);
            mo.v.assign(p->value.size(), 0.0);
        }
        double* w = p->value.ptr();
        double* g = p->grad.ptr();
        for (size_t i = 0; i < p->value.size(); ++i) {
            mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * g[i];
            mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = mo.m[i] / bc1;
            const double vhat = mo.v[i] / bc2;
            w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
        p->grad.fill(0.0);
    }
}

}  // namespace peghole::neuro
