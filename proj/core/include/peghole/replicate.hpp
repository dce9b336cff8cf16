#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "peghole/params.hpp"
#include "peghole/thread_pool.hpp"

namespace peghole::neuro {

// Data-parallel training helper: N replicas of a model, each with its own
// parameter store and scratch, fed disjoint slices of a batch. Gradients are
// reduced into the master store in replica order, so results are identical
// for any worker count.
template <class Model, class Config>
class Replicated {
public:
    Replicated(ParamStore& master, const Config& cfg, int replicas)
        : master_(master) {
        replicas = std::max(1, replicas);
        for (int i = 0; i < replicas; ++i) {
            stores_.push_back(std::make_unique<ParamStore>(master.seed()));
            models_.push_back(std::make_unique<Model>(*stores_[i], cfg));
        }
        for (auto& s : stores_) {
            if (s->params().size() != master_.params().size())
                throw std::runtime_error("replica parameter set mismatch");
            for (size_t k = 0; k < s->params().size(); ++k)
                if (s->params()[k]->name != master_.params()[k]->name)
                    throw std::runtime_error("replica parameter order mismatch");
        }
    }

    int count() const { return static_cast<int>(models_.size()); }
    Model& model(int i) { return *models_[i]; }

    void sync_values() {
        for (auto& s : stores_) {
            for (size_t k = 0; k < s->params().size(); ++k)
                s->params()[k]->value.data = master_.params()[k]->value.data;
            s->zero_grads();
        }
    }

    // fn(worker, begin, end) must accumulate gradients into the worker's
    // replica only.
    void run_batch(size_t batch,
                   const std::function<void(int, size_t, size_t)>& fn) {
        sync_values();
        const size_t n = models_.size();
        const size_t per = (batch + n - 1) / n;
        parallel_for(n, [&](size_t w) {
            const size_t begin = w * per;
            const size_t end = std::min(batch, begin + per);
            if (begin < end) fn(static_cast<int>(w), begin, end);
        });
        for (auto& s : stores_) {
            for (size_t k = 0; k < s->params().size(); ++k) {
                const auto& src = s->params()[k]->grad.data;
                auto& dst = master_.params()[k]->grad.data;
                for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            }
        }
    }

private:
    ParamStore& master_;
    std::vector<std::unique_ptr<ParamStore>> stores_;
    std::vector<std::unique_ptr<Model>> models_;
};

}  // namespace peghole::neuro
