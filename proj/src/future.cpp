#include "tapsb/future.hpp"

namespace tapsb {

bool LowLevelFuture::ready() const {
  std::lock_guard lk(s_->mu);
  return s_->done;
}

bool LowLevelFuture::failed() const {
  std::lock_guard lk(s_->mu);
  return s_->done && s_->error.has_value();
}

void LowLevelFuture::wait() const {
  std::unique_lock lk(s_->mu);
  s_->cv.wait(lk, [&] { return s_->done; });
}

bool LowLevelFuture::wait_for(std::chrono::microseconds timeout) const {
  std::unique_lock lk(s_->mu);
  return s_->cv.wait_for(lk, timeout, [&] { return s_->done; });
}

const Value& LowLevelFuture::get() const {
  wait();
  if (s_->error) throw *s_->error;
  return *s_->value;
}

const Error& LowLevelFuture::error() const { return *s_->error; }

void LowLevelFuture::on_complete(std::function<void()> cb) const {
  {
    std::lock_guard lk(s_->mu);
    if (!s_->done) {
      s_->callbacks.push_back(std::move(cb));
      return;
    }
  }
  cb();
}

LowLevelPromise::LowLevelPromise(std::string label) : s_(std::make_shared<detail::FutureState>()) {
  s_->label = std::move(label);
}

bool LowLevelPromise::set_value(Value v) const { return complete(std::move(v), std::nullopt); }
bool LowLevelPromise::set_error(Error e) const { return complete(std::nullopt, std::move(e)); }

bool LowLevelPromise::complete(std::optional<Value> v, std::optional<Error> e) const {
  std::vector<std::function<void()>> callbacks;
  {
    std::lock_guard lk(s_->mu);
    if (s_->done) return false;
    s_->done = true;
    s_->value = std::move(v);
    s_->error = std::move(e);
    callbacks.swap(s_->callbacks);
  }
  s_->cv.notify_all();
  for (auto& cb : callbacks) cb();
  return true;
}

LowLevelFuture failed_future(Error e, std::string label) {
  LowLevelPromise p(std::move(label));
  p.set_error(std::move(e));
  return p.future();
}

}  // namespace tapsb
