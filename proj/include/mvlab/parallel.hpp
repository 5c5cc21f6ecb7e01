#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mvlab {

/// Fixed-size pool running parallel_for over task indices. Callers that need
/// schedule-independent results must make each task's output depend only on
/// its index.
class worker_pool {
public:
    explicit worker_pool(std::size_t workers = 1) : workers_(workers == 0 ? 1 : workers)
    {
        for (std::size_t w = 1; w < workers_; ++w)
            threads_.emplace_back([this] { worker_loop(); });
    }

    worker_pool(const worker_pool&) = delete;
    worker_pool& operator=(const worker_pool&) = delete;

    ~worker_pool()
    {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        wake_.notify_all();
        for (auto& t : threads_)
            t.join();
    }

    std::size_t size() const noexcept { return workers_; }

    void parallel_for(std::size_t tasks, const std::function<void(std::size_t)>& fn)
    {
        if (tasks == 0)
            return;
        if (workers_ == 1 || tasks == 1) {
            for (std::size_t i = 0; i < tasks; ++i)
                fn(i);
            return;
        }
        {
            std::lock_guard lock(mutex_);
            job_ = &fn;
            tasks_ = tasks;
            next_.store(0);
            pending_ = workers_ - 1;
            error_ = nullptr;
            ++generation_;
        }
        wake_.notify_all();
        drain();
        std::unique_lock lock(mutex_);
        done_.wait(lock, [this] { return pending_ == 0; });
        job_ = nullptr;
        if (error_)
            std::rethrow_exception(error_);
    }

private:
    void drain()
    {
        for (;;) {
            const std::size_t i = next_.fetch_add(1);
            if (i >= tasks_)
                return;
            try {
                (*job_)(i);
            } catch (...) {
                std::lock_guard lock(mutex_);
                if (!error_)
                    error_ = std::current_exception();
            }
        }
    }

    void worker_loop()
    {
        std::size_t seen = 0;
        for (;;) {
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
                if (stopping_)
                    return;
                seen = generation_;
            }
            drain();
            {
                std::lock_guard lock(mutex_);
                --pending_;
            }
            done_.notify_one();
        }
    }

    std::size_t workers_;
    std::vector<std::thread> threads_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t tasks_ = 0;
    std::atomic<std::size_t> next_{0};
    std::size_t pending_ = 0;
    std::size_t generation_ = 0;
    bool stopping_ = false;
    std::exception_ptr error_;
};

} // namespace mvlab
