#include "peghole/thread_pool.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace peghole {

int max_threads() {
    static int cached = [] {
        if (const char* env = std::getenv("PEGHOLE_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return cached;
}

namespace {

thread_local bool in_parallel_region = false;

// Persistent worker pool. Work is index-chunked; values are independent of
// both the worker count and scheduling because every index writes disjoint
// state.
class Pool {
public:
    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(size_t n, const std::function<void(size_t)>& fn) {
        std::unique_lock<std::mutex> lock(mu_);
        fn_ = &fn;
        total_ = n;
        next_ = 0;
        chunk_ = std::max<size_t>(1, n / ((threads_.size() + 1) * 4));
        pending_ = threads_.size();
        ++generation_;
        cv_.notify_all();
        lock.unlock();

        work();

        lock.lock();
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        fn_ = nullptr;
    }

private:
    void worker_loop() {
        in_parallel_region = true;
        uint64_t seen = 0;
        std::unique_lock<std::mutex> lock(mu_);
        for (;;) {
            cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
            if (stop_) return;
            seen = generation_;
            lock.unlock();
            work();
            lock.lock();
            if (--pending_ == 0) done_cv_.notify_one();
        }
    }

    void work() {
        const auto& fn = *fn_;
        for (;;) {
            const size_t begin = next_.fetch_add(chunk_);
            if (begin >= total_) break;
            const size_t end = std::min(total_, begin + chunk_);
            for (size_t i = begin; i < end; ++i) fn(i);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(size_t)>* fn_ = nullptr;
    std::atomic<size_t> next_{0};
    size_t total_ = 0, chunk_ = 1, pending_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    const int threads = max_threads();
    if (n == 0) return;
    if (threads <= 1 || n == 1 || in_parallel_region) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    static Pool pool(max_threads() - 1);
    const bool was_inside = in_parallel_region;
    in_parallel_region = true;
    pool.run(n, fn);
    in_parallel_region = was_inside;
}

}  // namespace peghole
