#include "tapsb/worker_pool.hpp"

#include <atomic>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include "tapsb/ids.hpp"
#include "tapsb/ipc.hpp"

extern char** environ;

#ifndef TAPSB_WORKER_DEFAULT_PATH
#define TAPSB_WORKER_DEFAULT_PATH "tapsb-worker"
#endif

namespace tapsb {

std::string default_worker_path() {
  if (const char* env = std::getenv("TAPSB_WORKER"); env != nullptr && *env != '\0') return env;
  return TAPSB_WORKER_DEFAULT_PATH;
}

namespace {

constexpr int kChildFd = 3;
constexpr int kRegisterTimeoutMs = 10000;

Error worker_failure(std::size_t index, pid_t pid) {
  return Error(ErrorKind::WorkerFailure, fmt::format("worker {} (pid {}) died while running the task", index, pid));
}

Error parse_remote_error(const std::string& text) {
  const auto sep = text.find(": ");
  if (sep == std::string::npos) return Error(ErrorKind::Exception, text);
  return Error(error_kind_from_string(text.substr(0, sep)), text.substr(sep + 2));
}

void reap(pid_t pid) {
  if (pid <= 0) return;
  ::kill(pid, SIGKILL);
  while (::waitpid(pid, nullptr, 0) < 0 && errno == EINTR) {
  }
}

}  // namespace

struct WorkerPoolExecutor::Impl {
  struct Job {
    std::string function;
    std::vector<Value> args;
    LowLevelPromise promise;
  };

  struct Slot {
    std::size_t index = 0;
    std::mutex mu;
    pid_t pid = -1;
    int fd = -1;
    bool busy = false;
    std::thread thread;
  };

  std::string worker_path;
  std::vector<std::unique_ptr<Slot>> slots;

  std::mutex mu;
  std::condition_variable cv;
  std::condition_variable idle_cv;
  std::deque<Job> queue;
  std::size_t running = 0;
  bool closed = false;
  bool stopping = false;
  std::atomic<bool> hard_stop{false};
  std::atomic<std::uint64_t> next_task{1};
  std::atomic<std::size_t> respawns{0};
  bool stopped = false;

  // Caller holds slot.mu (or owns the slot exclusively).
  void spawn(Slot& slot) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
      throw Error(ErrorKind::Startup, fmt::format("worker {}: socketpair failed", slot.index));
    }
    // Keep the child end off fd 3 so dup2 below really clears CLOEXEC.
    const int child = ::fcntl(sv[1], F_DUPFD_CLOEXEC, 10);
    ::close(sv[1]);

    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_adddup2(&fa, child, kChildFd);
    const std::string index = std::to_string(slot.index);
    const std::string fd_arg = std::to_string(kChildFd);
    std::vector<char*> argv{const_cast<char*>(worker_path.c_str()), const_cast<char*>("--fd"),
                            const_cast<char*>(fd_arg.c_str()), const_cast<char*>("--index"),
                            const_cast<char*>(index.c_str()), nullptr};
    pid_t pid = -1;
    const int rc = ::posix_spawn(&pid, worker_path.c_str(), &fa, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    ::close(child);
    if (rc != 0) {
      ::close(sv[0]);
      throw Error(ErrorKind::Startup,
                  fmt::format("worker {}: cannot spawn '{}': {}", slot.index, worker_path, std::strerror(rc)));
    }
    auto hello = ipc::recv_message(sv[0], kRegisterTimeoutMs);
    if (!hello || hello->type != ipc::MessageType::Register) {
      ::close(sv[0]);
      reap(pid);
      throw Error(ErrorKind::Startup, fmt::format("worker {}: no REGISTER from '{}'", slot.index, worker_path));
    }
    slot.pid = pid;
    slot.fd = sv[0];
  }

  // Caller holds slot.mu.
  void retire(Slot& slot) {
    if (slot.fd >= 0) ::close(slot.fd);
    slot.fd = -1;
    reap(slot.pid);
    slot.pid = -1;
  }

  // Caller holds slot.mu. Leaves the slot dead if respawning fails.
  bool respawn(Slot& slot) {
    retire(slot);
    if (hard_stop) return false;
    try {
      spawn(slot);
    } catch (const Error&) {
      return false;
    }
    ++respawns;
    return true;
  }

  // Caller holds slot.mu. Reaps the process if it has exited.
  bool alive(Slot& slot) {
    if (slot.pid <= 0) return false;
    if (::waitpid(slot.pid, nullptr, WNOHANG) == 0) return true;
    slot.pid = -1;
    return false;
  }

  void run_on(Slot& slot, Job& job) {
    const std::uint64_t id = next_task++;
    const ByteBuffer body = ipc::encode_task({id, job.function, std::move(job.args)});

    int fd = -1;
    pid_t pid = -1;
    {
      std::lock_guard lk(slot.mu);
      if (hard_stop) {
        job.promise.set_error(Error(ErrorKind::WorkerFailure, "worker pool stopped before the task ran"));
        return;
      }
      if (!alive(slot) && !respawn(slot)) {
        job.promise.set_error(Error(ErrorKind::WorkerFailure, fmt::format("worker {} unavailable", slot.index)));
        return;
      }
      if (!ipc::send_message(slot.fd, ipc::MessageType::Task, body)) {
        // Died between the liveness check and the send; the task never started.
        if (!respawn(slot) || !ipc::send_message(slot.fd, ipc::MessageType::Task, body)) {
          job.promise.set_error(worker_failure(slot.index, slot.pid));
          return;
        }
      }
      slot.busy = true;
      fd = slot.fd;
      pid = slot.pid;
    }

    auto reply = ipc::recv_message(fd);
    std::optional<ipc::TaskResult> result;
    if (reply && reply->type == ipc::MessageType::Result) {
      try {
        result = ipc::decode_result(reply->body);
      } catch (const Error&) {
      }
    }

    {
      std::lock_guard lk(slot.mu);
      slot.busy = false;
      if (!result && slot.pid == pid) respawn(slot);
    }

    if (!result) {
      job.promise.set_error(worker_failure(slot.index, pid));
    } else if (result->ok) {
      job.promise.set_value(std::move(result->value));
    } else {
      job.promise.set_error(parse_remote_error(result->error_text));
    }
  }

  void loop(Slot& slot) {
    for (;;) {
      Job job;
      {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return stopping || !queue.empty(); });
        if (stopping && (queue.empty() || hard_stop)) return;
        job = std::move(queue.front());
        queue.pop_front();
        ++running;
      }
      run_on(slot, job);
      {
        std::lock_guard lk(mu);
        --running;
      }
      idle_cv.notify_all();
    }
  }
};

WorkerPoolExecutor::WorkerPoolExecutor(std::size_t workers, std::string worker_path)
    : workers_(workers), impl_(std::make_unique<Impl>()) {
  if (workers == 0) throw Error(ErrorKind::Argument, "worker-pool needs at least one worker");
  impl_->worker_path = worker_path.empty() ? default_worker_path() : std::move(worker_path);
  for (std::size_t i = 0; i < workers; ++i) {
    auto slot = std::make_unique<Impl::Slot>();
    slot->index = i;
    try {
      impl_->spawn(*slot);
    } catch (...) {
      for (auto& s : impl_->slots) impl_->retire(*s);
      throw;
    }
    impl_->slots.push_back(std::move(slot));
  }
  for (auto& s : impl_->slots) {
    Impl::Slot* raw = s.get();
    s->thread = std::thread([this, raw] { impl_->loop(*raw); });
  }
}

WorkerPoolExecutor::~WorkerPoolExecutor() { stop(std::chrono::seconds(30)); }

LowLevelFuture WorkerPoolExecutor::submit(const std::string& function, std::vector<Value> args) {
  LowLevelPromise p;
  {
    std::lock_guard lk(impl_->mu);
    if (impl_->closed) throw Error(ErrorKind::Lifecycle, "submit on a shut-down executor");
    impl_->queue.push_back({function, std::move(args), p});
  }
  impl_->cv.notify_one();
  return p.future();
}

void WorkerPoolExecutor::shutdown(bool wait) {
  stop(wait ? std::chrono::milliseconds(std::chrono::hours(24)) : std::chrono::milliseconds(0));
}

void WorkerPoolExecutor::stop(std::chrono::milliseconds drain_timeout) {
  std::deque<Impl::Job> dropped;
  {
    std::unique_lock lk(impl_->mu);
    if (impl_->stopped) return;
    impl_->stopped = true;
    impl_->closed = true;
    impl_->idle_cv.wait_for(lk, drain_timeout, [&] { return impl_->queue.empty() && impl_->running == 0; });
    dropped.swap(impl_->queue);
    impl_->hard_stop = true;
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  for (auto& j : dropped) {
    j.promise.set_error(Error(ErrorKind::WorkerFailure, "worker pool stopped before the task ran"));
  }
  for (auto& s : impl_->slots) {
    std::lock_guard lk(s->mu);
    if (s->busy && s->pid > 0) ::kill(s->pid, SIGKILL);
  }
  for (auto& s : impl_->slots) {
    if (s->thread.joinable()) s->thread.join();
  }
  for (auto& s : impl_->slots) {
    std::lock_guard lk(s->mu);
    if (s->fd >= 0) ::close(s->fd);
    s->fd = -1;
    if (s->pid > 0) {
      // Workers exit on EOF; give them a moment before forcing it.
      for (int i = 0; i < 100 && ::waitpid(s->pid, nullptr, WNOHANG) == 0; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      reap(s->pid);
      s->pid = -1;
    }
  }
}

void WorkerPoolExecutor::kill_worker(std::size_t index) {
  if (index >= impl_->slots.size()) {
    throw Error(ErrorKind::Argument, fmt::format("no worker {} (pool has {})", index, impl_->slots.size()));
  }
  auto& slot = *impl_->slots[index];
  std::lock_guard lk(slot.mu);
  if (slot.pid <= 0) return;
  ::kill(slot.pid, SIGKILL);
  // A busy slot notices EOF on its own and fails the running task.
  if (!slot.busy) impl_->respawn(slot);
}

bool WorkerPoolExecutor::ping(std::size_t index, std::chrono::milliseconds timeout) {
  if (index >= impl_->slots.size()) {
    throw Error(ErrorKind::Argument, fmt::format("no worker {} (pool has {})", index, impl_->slots.size()));
  }
  auto& slot = *impl_->slots[index];
  std::lock_guard lk(slot.mu);
  if (slot.busy || slot.fd < 0) return false;
  const std::uint64_t nonce = static_cast<std::uint64_t>(mono_now_us());
  if (!ipc::send_message(slot.fd, ipc::MessageType::Ping, ipc::encode_u64(nonce))) return false;
  auto reply = ipc::recv_message(slot.fd, static_cast<int>(timeout.count()));
  return reply && reply->type == ipc::MessageType::Pong && ipc::decode_u64(reply->body) == nonce;
}

std::vector<pid_t> WorkerPoolExecutor::pids() const {
  std::vector<pid_t> out;
  for (const auto& s : impl_->slots) {
    std::lock_guard lk(s->mu);
    out.push_back(s->pid);
  }
  return out;
}

std::size_t WorkerPoolExecutor::respawn_count() const { return impl_->respawns; }

}  // namespace tapsb
