#include "diffaug/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace diffaug {
namespace {

size_t detect_workers() {
    if (const char* env = std::getenv("DIFFAUG_WORKERS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<size_t>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

// Minimal persistent pool. Jobs are (begin, end) chunks of one parallel_for;
// the caller blocks until all chunks complete.
class Pool {
public:
    explicit Pool(size_t workers) : chunk_fn_(nullptr) {
        for (size_t i = 0; i + 1 < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(size_t n, const std::function<void(size_t, size_t)>& fn) {
        size_t workers = threads_.size() + 1;
        size_t chunks = std::min(n, workers);
        if (chunks <= 1) {
            fn(0, n);
            return;
        }
        {
            std::lock_guard<std::mutex> lk(mu_);
            chunk_fn_ = &fn;
            total_ = n;
            chunks_ = chunks;
            next_chunk_ = 0;
            remaining_ = chunks;
        }
        cv_.notify_all();
        // The calling thread participates.
        while (run_one_chunk()) {
        }
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return remaining_ == 0; });
        chunk_fn_ = nullptr;
    }

private:
    bool run_one_chunk() {
        size_t c;
        const std::function<void(size_t, size_t)>* fn;
        {
            std::lock_guard<std::mutex> lk(mu_);
            if (chunk_fn_ == nullptr || next_chunk_ >= chunks_) return false;
            c = next_chunk_++;
            fn = chunk_fn_;
        }
        size_t per = total_ / chunks_;
        size_t extra = total_ % chunks_;
        size_t begin = c * per + std::min(c, extra);
        size_t end = begin + per + (c < extra ? 1 : 0);
        (*fn)(begin, end);
        {
            std::lock_guard<std::mutex> lk(mu_);
            if (--remaining_ == 0) done_cv_.notify_all();
        }
        return true;
    }

    void worker_loop() {
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [this] {
                    return stop_ || (chunk_fn_ != nullptr && next_chunk_ < chunks_);
                });
                if (stop_) return;
            }
            while (run_one_chunk()) {
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(size_t, size_t)>* chunk_fn_;
    size_t total_ = 0, chunks_ = 0, next_chunk_ = 0, remaining_ = 0;
    bool stop_ = false;
};

}  // namespace

size_t worker_count() {
    static size_t n = detect_workers();
    return n;
}

void parallel_for(size_t n, const std::function<void(size_t, size_t)>& fn) {
    if (n == 0) return;
    static Pool pool(worker_count());
    if (worker_count() == 1) {
        fn(0, n);
        return;
    }
    pool.run(n, fn);
}

}  // namespace diffaug
