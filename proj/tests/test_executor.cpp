#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <set>
#include <thread>

#include "support.hpp"
#include "tapsb/errors.hpp"

using namespace tapsb;
using namespace std::chrono_literals;
using testsupport::seconds_since;

namespace {

std::vector<Value> args(std::initializer_list<Value> v) { return v; }

ErrorKind failure_kind(const LowLevelFuture& f) {
  f.wait();
  REQUIRE(f.failed());
  return f.error().kind();
}

}  // namespace

TEST_CASE("serial executor completes before submit returns") {
  SerialExecutor ex;
  auto f = ex.submit("add1", args({Value::integer(41)}));
  REQUIRE(f.ready());
  CHECK(f.get().as_int() == 42);
  ex.shutdown(true);
  CHECK_THROWS_AS(ex.submit("add1", args({Value::integer(1)})), Error);
}

TEST_CASE("executor kinds parse and validate") {
  for (auto k : testsupport::all_kinds()) CHECK(executor_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(executor_kind_from_string("quantum"), Error);
  ExecutorSpec s;
  s.kind = ExecutorKind::ThreadPool;
  s.workers = 0;
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("thread pool runs up to workers tasks concurrently") {
  ThreadPoolExecutor ex(4);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<LowLevelFuture> fs;
  for (int i = 0; i < 4; ++i) fs.push_back(ex.submit("sleep", args({Value::real(0.2)})));
  for (auto& f : fs) f.get();
  const double dt = seconds_since(t0);
  CHECK(dt >= 0.2);
  CHECK(dt < 0.6);
  ex.shutdown(true);
}

TEST_CASE("thread pool accepts submissions from many threads") {
  ThreadPoolExecutor ex(3);
  std::vector<std::thread> ts;
  std::mutex mu;
  std::vector<LowLevelFuture> fs;
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&, t] {
      for (int i = 0; i < 250; ++i) {
        auto f = ex.submit("add1", args({Value::integer(t * 1000 + i)}));
        std::lock_guard lk(mu);
        fs.push_back(f);
      }
    });
  }
  for (auto& t : ts) t.join();
  std::int64_t sum = 0;
  for (auto& f : fs) sum += f.get().as_int();
  std::int64_t expect = 0;
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 250; ++i) expect += t * 1000 + i + 1;
  CHECK(sum == expect);
}

TEST_CASE("worker pool: 8 sleeps of 0.2 s on 4 workers take about 0.4 s") {
  WorkerPoolExecutor ex(4);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<LowLevelFuture> fs;
  for (int i = 0; i < 8; ++i) fs.push_back(ex.submit("sleep", args({Value::real(0.2)})));
  for (auto& f : fs) f.get();
  const double dt = seconds_since(t0);
  // Analytic bound ceil(8/4) * 0.2 s, plus scheduling overhead.
  CHECK(dt >= 0.4);
  CHECK(dt < 0.4 + 0.4);
  ex.shutdown(true);
}

TEST_CASE("worker pool oversubscribes: 8 distinct live worker processes") {
  WorkerPoolExecutor ex(8);
  const auto pids = ex.pids();
  CHECK(pids.size() == 8);
  CHECK(std::set<pid_t>(pids.begin(), pids.end()).size() == 8);
  for (pid_t p : pids) CHECK(::kill(p, 0) == 0);
  for (std::size_t i = 0; i < 8; ++i) CHECK(ex.ping(i));
  ex.shutdown(true);
}

TEST_CASE("worker pool reports spawn failure with the worker index") {
  try {
    WorkerPoolExecutor ex(2, "/nonexistent/tapsb-worker");
    FAIL("expected startup error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Startup);
    CHECK(std::string(e.what()).find("worker 0") != std::string::npos);
  }
}

TEST_CASE("worker pool propagates task errors and values") {
  WorkerPoolExecutor ex(2);
  CHECK(ex.submit("add1", args({Value::integer(1)})).get().as_int() == 2);
  CHECK(failure_kind(ex.submit("fail", args({Value::text("boom")}))) == ErrorKind::Exception);
  CHECK(failure_kind(ex.submit("nope", {})) == ErrorKind::Registration);
  const Value big = Value::bytes(ByteBuffer(3 << 20, 0xab));
  CHECK(ex.submit("identity", args({big})).get() == big);
  ex.shutdown(true);
}

TEST_CASE("worker pool stop with drain timeout kills a long task") {
  WorkerPoolExecutor ex(1);
  auto f = ex.submit("sleep", args({Value::real(60.0)}));
  std::this_thread::sleep_for(100ms);
  const auto t0 = std::chrono::steady_clock::now();
  ex.stop(1000ms);
  const double dt = seconds_since(t0);
  CHECK(dt >= 0.9);
  CHECK(dt < 5.0);
  CHECK(failure_kind(f) == ErrorKind::WorkerFailure);
}

TEST_CASE("kill_worker mid-task fails that task and the pool keeps serving") {
  WorkerPoolExecutor ex(1);
  auto f = ex.submit("sleep", args({Value::real(10.0)}));
  std::this_thread::sleep_for(200ms);
  ex.kill_worker(0);
  CHECK(failure_kind(f) == ErrorKind::WorkerFailure);
  CHECK(ex.submit("add1", args({Value::integer(1)})).get().as_int() == 2);
  CHECK(ex.respawn_count() >= 1);
  CHECK_THROWS_AS(ex.kill_worker(5), Error);
  ex.shutdown(true);
}

TEST_CASE("killing an idle worker leaves throughput unchanged") {
  WorkerPoolExecutor ex(2);
  auto batch = [&] {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<LowLevelFuture> fs;
    for (int i = 0; i < 20; ++i) fs.push_back(ex.submit("sleep", args({Value::real(0.05)})));
    for (auto& f : fs) f.get();
    return 20.0 / seconds_since(t0);
  };
  const double before = batch();
  ex.kill_worker(0);
  std::this_thread::sleep_for(50ms);
  const double after = batch();
  CHECK(after >= 0.8 * before);
  CHECK(after <= 1.2 * before);
  ex.shutdown(true);
}

TEST_CASE("killing every worker while streaming still completes every task") {
  WorkerPoolExecutor ex(2);
  std::vector<LowLevelFuture> fs;
  std::thread killer([&] {
    for (std::size_t i = 0; i < 2; ++i) {
      std::this_thread::sleep_for(150ms);
      ex.kill_worker(i);
    }
  });
  for (int i = 0; i < 40; ++i) {
    fs.push_back(ex.submit("sleep", args({Value::real(0.02)})));
    std::this_thread::sleep_for(10ms);
  }
  killer.join();
  std::size_t failed = 0;
  for (auto& f : fs) {
    REQUIRE(f.wait_for(30s));
    if (f.failed()) {
      CHECK(f.error().kind() == ErrorKind::WorkerFailure);
      ++failed;
    }
  }
  CHECK(failed <= 2);
  ex.shutdown(true);
}

TEST_CASE("latency-sim delays a no-op by at least the scheduling latency") {
  auto ex = LatencySimExecutor(std::make_unique<SerialExecutor>(), 0.01, 32, 1e8);
  const auto t0 = std::chrono::steady_clock::now();
  auto f = ex.submit("identity", args({Value::integer(1)}));
  f.get();
  CHECK(seconds_since(t0) >= 0.01);
  ex.shutdown(true);
}

TEST_CASE("latency-sim releases at most batch_size tasks per interval") {
  auto ex = LatencySimExecutor(std::make_unique<ThreadPoolExecutor>(8), 0.05, 2, 0);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<LowLevelFuture> fs;
  for (int i = 0; i < 6; ++i) fs.push_back(ex.submit("identity", args({Value::integer(i)})));
  for (auto& f : fs) f.get();
  // Three batches, each one interval after the previous.
  CHECK(seconds_since(t0) >= 0.15);
  ex.shutdown(true);
}

TEST_CASE("dependency wrap: ready parent dispatches, failed parent cascades") {
  auto dep = dependency_wrap(std::make_unique<ThreadPoolExecutor>(2));
  auto a = dep->submit("const_5", {});
  a.wait();
  auto b = dep->submit("add1", {DepArg(a)});
  CHECK(b.get().as_int() == 6);

  LowLevelPromise gate("parent-label");
  bool dispatched = false;
  auto c = dep->submit("add1", {DepArg(gate.future())}, [&] { dispatched = true; });
  CHECK(dep->pending() == 1);
  CHECK_FALSE(c.ready());
  gate.set_error(Error(ErrorKind::Exception, "boom"));
  CHECK(failure_kind(c) == ErrorKind::DependencyFailure);
  CHECK(std::string(c.error().what()).find("parent-label") != std::string::npos);
  CHECK_FALSE(dispatched);

  auto s = dep->submit("sum", {DepArg(std::vector<DepItem>{Value::integer(1), a, b})});
  CHECK(s.get().as_int() == 1 + 5 + 6);
  dep->shutdown(true);
}

TEST_CASE("engine over a single worker: three tasks never overlap") {
  testsupport::Harness h(ExecutorKind::WorkerPool, 1);
  for (int i = 0; i < 3; ++i) h.engine->submit("sleep", {Value::real(0.05)});
  auto rs = h.finish();
  REQUIRE(rs.size() == 3);
  std::sort(rs.begin(), rs.end(), [](auto& a, auto& b) { return a.exec_started_at < b.exec_started_at; });
  for (std::size_t i = 1; i < rs.size(); ++i) CHECK(rs[i - 1].exec_ended_at <= rs[i].exec_started_at);
}

TEST_CASE("diamond over worker pool: sink starts after both middles end") {
  testsupport::Harness h(ExecutorKind::WorkerPool, 2);
  auto src = h.engine->submit("const_5", {});
  auto m1 = h.engine->submit("sleep", {Value::real(0.05)}, {src});
  auto m2 = h.engine->submit("sleep", {Value::real(0.1)}, {src});
  auto sink = h.engine->submit("sum", {Value::integer(0)}, {m1, m2});
  sink.wait();
  auto rs = testsupport::by_id(h.finish());
  const auto& s = rs.at(sink.id().str());
  CHECK(s.exec_started_at >= rs.at(m1.id().str()).exec_ended_at);
  CHECK(s.exec_started_at >= rs.at(m2.id().str()).exec_ended_at);
}

TEST_CASE("failed parent gives the child a dependency failure on every executor") {
  for (auto kind : testsupport::all_kinds()) {
    CAPTURE(to_string(kind));
    testsupport::Harness h(kind, 2);
    auto p = h.engine->submit("fail", {Value::text("boom")});
    auto c = h.engine->submit("add1", {p});
    c.wait();
    REQUIRE(c.error().has_value());
    CHECK(c.error()->kind() == ErrorKind::DependencyFailure);
    CHECK(std::string(c.error()->what()).find(p.id().str()) != std::string::npos);
    auto rs = testsupport::by_id(h.finish());
    CHECK(rs.at(p.id().str()).error_kind == "exception");
    CHECK(rs.at(c.id().str()).error_kind == "dependency-failure");
  }
}

TEST_CASE("serial equivalence: identical result multisets across executors") {
  std::vector<std::multiset<std::int64_t>> results;
  for (auto kind : testsupport::all_kinds()) {
    testsupport::Harness h(kind, 3);
    std::vector<TaskFuture> layer;
    for (int i = 0; i < 6; ++i) layer.push_back(h.engine->submit("add1", {Value::integer(i)}));
    std::vector<TaskFuture> next;
    for (int i = 0; i + 1 < 6; ++i) next.push_back(h.engine->submit("sum", {layer[i], layer[i + 1]}));
    auto total = h.engine->submit("sum", {Arg(next)});
    std::multiset<std::int64_t> r;
    for (auto& f : layer) r.insert(f.result().as_int());
    for (auto& f : next) r.insert(f.result().as_int());
    r.insert(total.result().as_int());
    results.push_back(r);
    h.finish();
  }
  for (std::size_t i = 1; i < results.size(); ++i) CHECK(results[i] == results[0]);
}
