#include "tapsb/executor.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <queue>
#include <thread>

#include <sys/prctl.h>

#include <fmt/format.h>

#include "tapsb/registry.hpp"
#include "tapsb/worker_pool.hpp"

namespace tapsb {

std::string_view to_string(ExecutorKind kind) {
  switch (kind) {
    case ExecutorKind::Serial: return "serial";
    case ExecutorKind::ThreadPool: return "thread-pool";
    case ExecutorKind::WorkerPool: return "worker-pool";
    case ExecutorKind::LatencySim: return "latency-sim";
  }
  return "serial";
}

ExecutorKind executor_kind_from_string(std::string_view name) {
  for (auto k : {ExecutorKind::Serial, ExecutorKind::ThreadPool, ExecutorKind::WorkerPool, ExecutorKind::LatencySim}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::Usage, fmt::format("unknown executor '{}' (expected serial, thread-pool, worker-pool "
                                            "or latency-sim)",
                                            name));
}

void ExecutorSpec::validate() const {
  if (kind == ExecutorKind::LatencySim) {
    if (!inner) throw Error(ErrorKind::Validation, "executor.inner: latency-sim requires an inner executor");
    if (inner->kind == ExecutorKind::LatencySim) {
      throw Error(ErrorKind::Validation, "executor.inner: latency-sim cannot wrap another latency-sim");
    }
    if (sched_latency < 0) throw Error(ErrorKind::Validation, "executor.sched_latency: must be >= 0");
    if (batch_size == 0) throw Error(ErrorKind::Validation, "executor.batch_size: must be positive");
    if (bandwidth < 0) throw Error(ErrorKind::Validation, "executor.bandwidth: must be >= 0");
    inner->validate();
  } else if (workers == 0) {
    throw Error(ErrorKind::Validation, "executor.workers: must be positive");
  }
}

bool operator==(const ExecutorSpec& a, const ExecutorSpec& b) {
  const bool inner_eq = (!a.inner && !b.inner) || (a.inner && b.inner && *a.inner == *b.inner);
  return a.kind == b.kind && a.workers == b.workers && inner_eq && a.sched_latency == b.sched_latency &&
         a.batch_size == b.batch_size && a.bandwidth == b.bandwidth && a.worker_path == b.worker_path;
}

std::unique_ptr<Executor> make_executor(const ExecutorSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ExecutorKind::Serial: return std::make_unique<SerialExecutor>();
    case ExecutorKind::ThreadPool: return std::make_unique<ThreadPoolExecutor>(spec.workers);
    case ExecutorKind::WorkerPool: return std::make_unique<WorkerPoolExecutor>(spec.workers, spec.worker_path);
    case ExecutorKind::LatencySim:
      return std::make_unique<LatencySimExecutor>(make_executor(*spec.inner), spec.sched_latency, spec.batch_size,
                                                  spec.bandwidth);
  }
  throw Error(ErrorKind::Usage, "unknown executor kind");
}

namespace {

void run_into(const std::string& function, const std::vector<Value>& args, const LowLevelPromise& p) {
  std::optional<Value> out;
  try {
    out = invoke_task(function, args);
  } catch (const Error& e) {
    p.set_error(e);
    return;
  }
  p.set_value(std::move(*out));
}

Error shut_down_error() { return Error(ErrorKind::WorkerFailure, "executor shut down before the task ran"); }

}  // namespace

// ---------------------------------------------------------------- serial

LowLevelFuture SerialExecutor::submit(const std::string& function, std::vector<Value> args) {
  if (closed_) throw Error(ErrorKind::Lifecycle, "submit on a shut-down executor");
  LowLevelPromise p;
  run_into(function, args, p);
  return p.future();
}

// ----------------------------------------------------------- thread pool

struct ThreadPoolExecutor::Impl {
  struct Job {
    std::string function;
    std::vector<Value> args;
    LowLevelPromise promise;
  };

  std::mutex mu;
  std::condition_variable cv;
  std::condition_variable idle_cv;
  std::deque<Job> queue;
  std::size_t running = 0;
  bool stopping = false;
  bool closed = false;
  std::vector<std::thread> threads;

  void loop() {
    for (;;) {
      Job job;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return stopping || !queue.empty(); });
        if (queue.empty()) return;
        job = std::move(queue.front());
        queue.pop_front();
        ++running;
      }
      run_into(job.function, job.args, job.promise);
      {
        std::lock_guard lk(mu);
        --running;
      }
      idle_cv.notify_all();
    }
  }
};

ThreadPoolExecutor::ThreadPoolExecutor(std::size_t workers) : workers_(workers), impl_(std::make_unique<Impl>()) {
  if (workers == 0) throw Error(ErrorKind::Argument, "thread-pool needs at least one worker");
  for (std::size_t i = 0; i < workers; ++i) impl_->threads.emplace_back([this] { impl_->loop(); });
}

ThreadPoolExecutor::~ThreadPoolExecutor() { shutdown(true); }

LowLevelFuture ThreadPoolExecutor::submit(const std::string& function, std::vector<Value> args) {
  LowLevelPromise p;
  {
    std::lock_guard lk(impl_->mu);
    if (impl_->closed) throw Error(ErrorKind::Lifecycle, "submit on a shut-down executor");
    impl_->queue.push_back({function, std::move(args), p});
  }
  impl_->cv.notify_one();
  return p.future();
}

void ThreadPoolExecutor::shutdown(bool wait) {
  std::deque<Impl::Job> dropped;
  {
    std::unique_lock lk(impl_->mu);
    if (impl_->closed && impl_->threads.empty()) return;
    impl_->closed = true;
    if (wait) {
      impl_->idle_cv.wait(lk, [&] { return impl_->queue.empty() && impl_->running == 0; });
    } else {
      dropped.swap(impl_->queue);
    }
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  for (auto& j : dropped) j.promise.set_error(shut_down_error());
  for (auto& t : impl_->threads) {
    if (t.joinable()) t.join();
  }
  impl_->threads.clear();
}

// ----------------------------------------------------------- latency sim

struct LatencySimExecutor::Impl {
  using Clock = std::chrono::steady_clock;

  struct Job {
    std::string function;
    std::vector<Value> args;
    LowLevelPromise promise;
    std::size_t arg_bytes = 0;
    Clock::time_point eligible;  // submission time plus one scheduling interval
  };
  struct Timer {
    Clock::time_point due;
    std::uint64_t seq;
    std::function<void()> fire;
    bool operator>(const Timer& o) const { return due != o.due ? due > o.due : seq > o.seq; }
  };

  std::unique_ptr<Executor> inner;
  std::chrono::duration<double> sched_latency;
  std::size_t batch_size;
  double bandwidth;

  std::mutex mu;
  std::condition_variable cv;
  std::deque<Job> ready;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers;
  std::uint64_t seq = 0;
  std::size_t outstanding = 0;  // submitted but not yet completed
  bool closed = false;
  bool stopping = false;
  std::thread thread;
  Clock::time_point next_batch;

  std::chrono::duration<double> transfer_time(std::size_t bytes) const {
    if (bandwidth <= 0) return std::chrono::duration<double>(0);
    return std::chrono::duration<double>(static_cast<double>(bytes) / bandwidth);
  }

  // Caller holds mu.
  void add_timer(Clock::time_point due, std::function<void()> fire) {
    timers.push(Timer{due, seq++, std::move(fire)});
    cv.notify_all();
  }

  void dispatch(Job job) {
    LowLevelFuture f;
    try {
      f = inner->submit(job.function, std::move(job.args));
    } catch (const Error& e) {
      finish([p = job.promise, e] { p.set_error(e); });
      return;
    }
    f.on_complete([this, f, p = job.promise] {
      const std::size_t bytes = f.failed() ? 0 : encoded_size(f.get());
      std::lock_guard lk(mu);
      add_timer(Clock::now() + std::chrono::duration_cast<Clock::duration>(transfer_time(bytes)), [this, f, p] {
        finish([f, p] {
          if (f.failed()) {
            p.set_error(f.error());
          } else {
            p.set_value(f.get());
          }
        });
      });
    });
  }

  void finish(const std::function<void()>& complete) {
    complete();
    {
      std::lock_guard lk(mu);
      --outstanding;
    }
    cv.notify_all();
  }

  void loop() {
    // The default 50 us timer slack would add jitter to every simulated delay.
    ::prctl(PR_SET_TIMERSLACK, 1UL, 0UL, 0UL, 0UL);
    std::unique_lock lk(mu);
    for (;;) {
      if (stopping && ready.empty() && timers.empty()) return;
      const auto now = Clock::now();
      if (!timers.empty() && timers.top().due <= now) {
        auto fire = timers.top().fire;
        timers.pop();
        lk.unlock();
        fire();
        lk.lock();
        continue;
      }
      if (!ready.empty() && next_batch <= now && ready.front().eligible <= now) {
        for (std::size_t i = 0; i < batch_size && !ready.empty() && ready.front().eligible <= now; ++i) {
          auto job = std::make_shared<Job>(std::move(ready.front()));
          ready.pop_front();
          const auto due = now + std::chrono::duration_cast<Clock::duration>(transfer_time(job->arg_bytes));
          add_timer(due, [this, job] { dispatch(std::move(*job)); });
        }
        next_batch = now + std::chrono::duration_cast<Clock::duration>(sched_latency);
        continue;
      }
      auto wake = Clock::time_point::max();
      if (!timers.empty()) wake = timers.top().due;
      if (!ready.empty()) wake = std::min(wake, std::max(next_batch, ready.front().eligible));
      if (wake == Clock::time_point::max()) {
        cv.wait(lk);
      } else {
        cv.wait_until(lk, wake);
      }
    }
  }
};

LatencySimExecutor::LatencySimExecutor(std::unique_ptr<Executor> inner, double sched_latency, std::size_t batch_size,
                                       double bandwidth)
    : impl_(std::make_unique<Impl>()) {
  impl_->inner = std::move(inner);
  impl_->sched_latency = std::chrono::duration<double>(sched_latency);
  impl_->batch_size = batch_size;
  impl_->bandwidth = bandwidth;
  impl_->next_batch = Impl::Clock::now();
  impl_->thread = std::thread([this] { impl_->loop(); });
}

LatencySimExecutor::~LatencySimExecutor() { shutdown(true); }

std::size_t LatencySimExecutor::workers() const { return impl_->inner->workers(); }

LowLevelFuture LatencySimExecutor::submit(const std::string& function, std::vector<Value> args) {
  LowLevelPromise p;
  std::size_t bytes = 0;
  for (const auto& a : args) bytes += encoded_size(a);
  {
    std::lock_guard lk(impl_->mu);
    if (impl_->closed) throw Error(ErrorKind::Lifecycle, "submit on a shut-down executor");
    const auto eligible =
        Impl::Clock::now() + std::chrono::duration_cast<Impl::Clock::duration>(impl_->sched_latency);
    impl_->ready.push_back({function, std::move(args), p, bytes, eligible});
    ++impl_->outstanding;
  }
  impl_->cv.notify_all();
  return p.future();
}

void LatencySimExecutor::shutdown(bool wait) {
  std::deque<Impl::Job> dropped;
  {
    std::unique_lock lk(impl_->mu);
    if (impl_->closed && !impl_->thread.joinable()) return;
    impl_->closed = true;
    if (wait) {
      impl_->cv.wait(lk, [&] { return impl_->outstanding == 0; });
    } else {
      dropped.swap(impl_->ready);
      impl_->outstanding -= dropped.size();
    }
  }
  for (auto& j : dropped) j.promise.set_error(shut_down_error());
  if (!wait) {
    // In-flight tasks are failed by the inner executor's non-waiting shutdown.
    impl_->inner->shutdown(false);
    std::unique_lock lk(impl_->mu);
    impl_->cv.wait(lk, [&] { return impl_->outstanding == 0; });
  }
  {
    std::lock_guard lk(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->inner->shutdown(wait);
}

// ------------------------------------------------------ dependency wrap

struct DependencyExecutor::Parked {
  std::uint64_t id = 0;
  std::string function;
  std::vector<DepArg> args;
  std::function<void()> on_dispatch;
  LowLevelPromise promise;
  std::atomic<std::size_t> waiting{0};
  std::atomic<bool> settled{false};
};

DependencyExecutor::DependencyExecutor(std::unique_ptr<Executor> inner) : inner_(std::move(inner)) {}

DependencyExecutor::~DependencyExecutor() = default;

std::unique_ptr<DependencyExecutor> dependency_wrap(std::unique_ptr<Executor> inner) {
  return std::make_unique<DependencyExecutor>(std::move(inner));
}

LowLevelFuture DependencyExecutor::submit(const std::string& function, std::vector<DepArg> args,
                                          std::function<void()> on_dispatch) {
  auto p = std::make_shared<Parked>();
  p->function = function;
  p->args = std::move(args);
  p->on_dispatch = std::move(on_dispatch);

  std::vector<LowLevelFuture> parents;
  for (const auto& a : p->args) {
    if (auto* f = std::get_if<LowLevelFuture>(&a)) {
      parents.push_back(*f);
    } else if (auto* seq = std::get_if<std::vector<DepItem>>(&a)) {
      for (const auto& item : *seq) {
        if (auto* g = std::get_if<LowLevelFuture>(&item)) parents.push_back(*g);
      }
    }
  }

  {
    std::lock_guard lk(mu_);
    p->id = next_id_++;
    table_.emplace(p->id, p);
  }
  const auto result = p->promise.future();

  // One extra count held by this call so callbacks firing synchronously
  // cannot release the task before every parent has been registered.
  p->waiting = parents.size() + 1;
  auto arrive = [this, p] {
    if (p->waiting.fetch_sub(1) == 1) release(p);
  };
  for (const auto& parent : parents) {
    parent.on_complete([this, p, parent, arrive] {
      if (parent.failed() && !p->settled.exchange(true)) {
        p->promise.set_error(Error(ErrorKind::DependencyFailure,
                                   fmt::format("parent task {} failed ({}): {}", parent.label(),
                                               to_string(parent.error().kind()), parent.error().what())));
        {
          std::lock_guard lk(mu_);
          table_.erase(p->id);
        }
        cv_.notify_all();
      }
      arrive();
    });
  }
  arrive();
  return result;
}

void DependencyExecutor::release(const std::shared_ptr<Parked>& p) {
  if (p->settled.exchange(true)) return;

  std::vector<Value> values;
  values.reserve(p->args.size());
  for (auto& a : p->args) {
    if (auto* v = std::get_if<Value>(&a)) {
      values.push_back(std::move(*v));
    } else if (auto* f = std::get_if<LowLevelFuture>(&a)) {
      values.push_back(f->get());
    } else {
      Value::List items;
      for (auto& item : std::get<std::vector<DepItem>>(a)) {
        if (auto* v = std::get_if<Value>(&item)) {
          items.push_back(std::move(*v));
        } else {
          items.push_back(std::get<LowLevelFuture>(item).get());
        }
      }
      values.push_back(Value::list(std::move(items)));
    }
  }
  p->args.clear();

  if (p->on_dispatch) p->on_dispatch();
  try {
    auto inner = inner_->submit(p->function, std::move(values));
    inner.on_complete([p, inner] {
      if (inner.failed()) {
        p->promise.set_error(inner.error());
      } else {
        p->promise.set_value(inner.get());
      }
    });
  } catch (...) {
    p->promise.set_error(current_exception_as_error());
  }
  {
    std::lock_guard lk(mu_);
    table_.erase(p->id);
  }
  cv_.notify_all();
}

void DependencyExecutor::shutdown(bool wait) {
  if (wait) {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return table_.empty(); });
  } else {
    std::vector<std::shared_ptr<Parked>> parked;
    {
      std::lock_guard lk(mu_);
      for (auto& [_, p] : table_) parked.push_back(p);
      table_.clear();
    }
    for (auto& p : parked) {
      if (!p->settled.exchange(true)) p->promise.set_error(shut_down_error());
    }
  }
  inner_->shutdown(wait);
}

std::size_t DependencyExecutor::pending() const {
  std::lock_guard lk(mu_);
  return table_.size();
}

}  // namespace tapsb
