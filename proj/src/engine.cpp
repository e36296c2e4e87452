#include "tapsb/engine.hpp"

#include <fmt/format.h>

#include "tapsb/registry.hpp"
#include "tapsb/wrapper.hpp"

namespace tapsb {

std::string_view to_string(TaskState s) {
  switch (s) {
    case TaskState::Pending: return "pending";
    case TaskState::Running: return "running";
    case TaskState::Succeeded: return "succeeded";
    case TaskState::Failed: return "failed";
  }
  return "pending";
}

namespace detail {

struct TaskShared {
  TaskId id;
  std::string function;
  const Engine* owner = nullptr;
  std::shared_ptr<Transformer> transformer;
  LowLevelFuture value_future;  // what dependent tasks wait on

  mutable std::mutex mu;
  std::condition_variable cv;
  TaskState state = TaskState::Pending;
  Value raw;  // possibly an Identifier
  bool transformed = false;
  std::optional<Value> resolved;
  std::optional<Error> error;
  std::vector<std::function<void(const TaskFuture&)>> callbacks;

  bool terminal() const { return state == TaskState::Succeeded || state == TaskState::Failed; }
};

}  // namespace detail

// ------------------------------------------------------------ TaskFuture

const TaskId& TaskFuture::id() const { return s_->id; }
const std::string& TaskFuture::function() const { return s_->function; }

TaskState TaskFuture::state() const {
  std::lock_guard lk(s_->mu);
  return s_->state;
}

bool TaskFuture::done() const {
  std::lock_guard lk(s_->mu);
  return s_->terminal();
}

void TaskFuture::wait() const {
  std::unique_lock lk(s_->mu);
  s_->cv.wait(lk, [&] { return s_->terminal(); });
}

Value TaskFuture::result(std::optional<std::chrono::duration<double>> timeout) const {
  std::unique_lock lk(s_->mu);
  if (timeout) {
    if (!s_->cv.wait_for(lk, *timeout, [&] { return s_->terminal(); })) {
      throw Error(ErrorKind::Timeout, fmt::format("task {} not finished within {} s", s_->id.str(), timeout->count()));
    }
  } else {
    s_->cv.wait(lk, [&] { return s_->terminal(); });
  }
  if (s_->error) throw *s_->error;
  if (!s_->transformed) return s_->raw;
  if (!s_->resolved) {
    if (!s_->transformer) throw Error(ErrorKind::Resolution, "transformed result but engine has no transformer");
    s_->resolved = s_->transformer->resolve(s_->raw.as_ident());
  }
  return *s_->resolved;
}

std::optional<Error> TaskFuture::error() const {
  std::lock_guard lk(s_->mu);
  return s_->error;
}

void TaskFuture::add_done_callback(std::function<void(const TaskFuture&)> cb) const {
  {
    std::lock_guard lk(s_->mu);
    if (!s_->terminal()) {
      s_->callbacks.push_back(std::move(cb));
      return;
    }
  }
  cb(*this);
}

Arg::Arg(const std::vector<TaskFuture>& futures) {
  std::vector<Item> items;
  items.reserve(futures.size());
  for (const auto& f : futures) items.emplace_back(f);
  v_ = std::move(items);
}

// ---------------------------------------------------------------- Engine

Engine::Engine(std::unique_ptr<Executor> executor, std::shared_ptr<Transformer> transformer, FilterSpec filter,
               std::shared_ptr<RecordSink> sink)
    : transformer_(std::move(transformer)), filter_(std::move(filter)), sink_(std::move(sink)) {
  if (!executor) throw Error(ErrorKind::Validation, "engine: executor is required");
  if (!sink_) throw Error(ErrorKind::Validation, "engine: record sink is required");
  if (!transformer_ && filter_.kind != FilterKind::Never) {
    throw Error(ErrorKind::Validation, "engine: filter must be 'never' when no transformer is configured");
  }
  executor_name_ = std::string(to_string(executor->kind()));
  executor_ = dependency_wrap(std::move(executor));
  filter_text_ = filter_.str();
  if (transformer_) {
    register_transformer(transformer_);
    transformer_spec_ = transformer_->spec();
  }
}

Engine::~Engine() {
  try {
    shutdown(true);
  } catch (...) {
  }
}

std::size_t Engine::workers() const { return executor_->inner().workers(); }
ExecutorKind Engine::executor_kind() const { return executor_->inner().kind(); }
Executor& Engine::executor() { return executor_->inner(); }

void Engine::set_interceptor(SubmitInterceptor interceptor) {
  std::lock_guard lk(interceptor_mu_);
  interceptor_ = std::move(interceptor);
}

TaskFuture Engine::submit(const std::string& function, std::vector<Arg> args, std::vector<TaskFuture> after) {
  SubmitRequest req{function, std::move(args), std::move(after), 0};
  SubmitInterceptor hook;
  {
    std::lock_guard lk(interceptor_mu_);
    hook = interceptor_;
  }
  if (hook) {
    req.ordinal = next_ordinal_.load();
    hook(*this, req);
  }
  return submit_request(std::move(req));
}

TaskFuture Engine::submit_direct(SubmitRequest request) { return submit_request(std::move(request)); }

std::vector<TaskFuture> Engine::map(const std::string& function, std::vector<std::vector<Arg>> inputs) {
  std::vector<TaskFuture> out;
  out.reserve(inputs.size());
  for (auto& args : inputs) out.push_back(submit(function, std::move(args)));
  return out;
}

Value Engine::maybe_transform(Value v) {
  if (transformer_ && filter_check(filter_, v)) return Value::ident(transformer_->transform(v));
  return v;
}

TaskFuture Engine::submit_request(SubmitRequest req) {
  {
    std::lock_guard lk(mu_);
    if (closed_) throw Error(ErrorKind::Lifecycle, "submit after engine shutdown");
  }
  if (!TaskRegistry::global().contains(req.function)) {
    throw Error(ErrorKind::Registration, fmt::format("unknown task function '{}'", req.function));
  }

  auto st = std::make_shared<detail::TaskShared>();
  st->id = TaskId::generate();
  st->function = req.function;
  st->owner = this;
  st->transformer = transformer_;
  LowLevelPromise value_promise(st->id.str());
  st->value_future = value_promise.future();

  TaskRecord rec;
  rec.task_id = st->id.str();
  rec.function = req.function;
  rec.executor = executor_name_;
  rec.submitted_at = wall_now_us();

  auto add_parent = [&](const TaskFuture& f) {
    if (!f.valid() || f.s_->owner != this) {
      throw Error(ErrorKind::Argument, "future argument was not produced by this engine");
    }
    const std::string& pid = f.s_->id.str();
    if (std::find(rec.parents.begin(), rec.parents.end(), pid) == rec.parents.end()) rec.parents.push_back(pid);
    return f.s_->value_future;
  };

  std::vector<DepArg> dep_args;
  dep_args.reserve(req.args.size() + req.after.size() + 1);
  dep_args.emplace_back(Value{});  // header slot

  const auto t0 = mono_now_us();
  for (auto& arg : req.args) {
    auto& v = arg.get();
    if (auto* value = std::get_if<Value>(&v)) {
      dep_args.emplace_back(maybe_transform(std::move(*value)));
    } else if (auto* fut = std::get_if<TaskFuture>(&v)) {
      dep_args.emplace_back(add_parent(*fut));
    } else {
      std::vector<DepItem> items;
      for (auto& item : std::get<std::vector<Arg::Item>>(v)) {
        if (auto* iv = std::get_if<Value>(&item)) {
          items.emplace_back(maybe_transform(std::move(*iv)));
        } else {
          items.emplace_back(add_parent(std::get<TaskFuture>(item)));
        }
      }
      dep_args.emplace_back(std::move(items));
    }
  }
  for (const auto& f : req.after) dep_args.emplace_back(add_parent(f));
  rec.transform_args_us = transformer_ ? mono_now_us() - t0 : 0;

  WrapperHeader header{req.function, transformer_spec_, filter_text_, static_cast<std::int64_t>(req.args.size())};
  dep_args[0] = header.encode();

  rec.ordinal = static_cast<std::int64_t>(next_ordinal_++);
  {
    std::lock_guard lk(mu_);
    if (closed_) throw Error(ErrorKind::Lifecycle, "submit after engine shutdown");
    ++inflight_;
  }

  auto on_dispatch = [st] {
    std::lock_guard lk(st->mu);
    if (st->state == TaskState::Pending) st->state = TaskState::Running;
  };

  LowLevelFuture low;
  try {
    low = executor_->submit(kTaskWrapper, std::move(dep_args), on_dispatch);
  } catch (const Error& e) {
    low = failed_future(e);
  }

  low.on_complete([this, st, low, value_promise, rec]() mutable {
    Value payload;
    std::optional<Error> failure;
    if (low.failed()) {
      failure = low.error();
    } else {
      try {
        WrapperEnvelope env = WrapperEnvelope::decode(low.get());
        rec.exec_started_at = env.exec_started_at;
        rec.exec_ended_at = env.exec_ended_at;
        rec.resolve_args_us = env.resolve_args_us;
        rec.transform_result_us = env.transform_result_us;
        rec.arg_bytes = env.arg_bytes;
        rec.result_bytes = env.result_bytes;
        st->transformed = env.transformed;
        payload = std::move(env.result);
      } catch (const Error& e) {
        failure = e;
      }
    }
    rec.completed_at = wall_now_us();
    if (failure) {
      // Never (or not observably) executed: collapse the interval onto
      // the completion time.
      rec.exec_started_at = rec.exec_ended_at = rec.completed_at;
      rec.status = "failed";
      rec.error_kind = std::string(to_string(failure->kind()));
      rec.error_message = failure->what();
    } else {
      rec.status = "succeeded";
    }
    rec.makespan_us = rec.completed_at - rec.submitted_at;
    try {
      sink_->log(rec);
    } catch (const Error&) {
      // closed sink: the run is being torn down
    }

    std::vector<std::function<void(const TaskFuture&)>> callbacks;
    {
      std::lock_guard lk(st->mu);
      if (failure) {
        st->error = failure;
        st->state = TaskState::Failed;
      } else {
        st->raw = payload;
        st->state = TaskState::Succeeded;
      }
      callbacks.swap(st->callbacks);
    }
    st->cv.notify_all();
    const TaskFuture self(st);
    for (auto& cb : callbacks) cb(self);

    if (failure) {
      value_promise.set_error(*failure);
    } else {
      value_promise.set_value(std::move(payload));
    }

    {
      std::lock_guard lk(mu_);
      --inflight_;
    }
    idle_cv_.notify_all();
  });

  return TaskFuture(st);
}

void Engine::shutdown(bool wait) {
  {
    std::lock_guard lk(mu_);
    if (shut_down_) return;
    closed_ = true;
  }
  if (wait) {
    std::unique_lock lk(mu_);
    idle_cv_.wait(lk, [&] { return inflight_ == 0; });
  }
  executor_->shutdown(wait);
  {
    std::unique_lock lk(mu_);
    idle_cv_.wait(lk, [&] { return inflight_ == 0; });
    shut_down_ = true;
  }
  sink_->flush();
}

// ------------------------------------------------------- CompletionQueue

void CompletionQueue::add(const TaskFuture& f) {
  {
    std::lock_guard lk(s_->mu);
    ++s_->outstanding;
  }
  f.add_done_callback([s = s_](const TaskFuture& done) {
    {
      std::lock_guard lk(s->mu);
      s->done.push_back(done);
    }
    s->cv.notify_all();
  });
}

TaskFuture CompletionQueue::next() {
  std::unique_lock lk(s_->mu);
  if (s_->outstanding == 0) throw Error(ErrorKind::Argument, "completion queue is empty");
  s_->cv.wait(lk, [&] { return !s_->done.empty(); });
  TaskFuture f = s_->done.front();
  s_->done.pop_front();
  --s_->outstanding;
  return f;
}

std::size_t CompletionQueue::outstanding() const {
  std::lock_guard lk(s_->mu);
  return s_->outstanding;
}

}  // namespace tapsb
