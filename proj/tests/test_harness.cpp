#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "tapsb/apps/app.hpp"
#include "tapsb/errors.hpp"
#include "tapsb/harness/bench.hpp"
#include "tapsb/harness/run.hpp"
#include "tapsb/rng.hpp"

using namespace tapsb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

struct Cli {
  int code;
  std::string out;
};

Cli cli(const std::string& args) {
  const std::string cmd = std::string(TAPSB_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  const int status = ::pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

// "ok <dir> makespan=..." lines printed by `run`.
std::vector<fs::path> run_dirs(const std::string& out) {
  std::vector<fs::path> dirs;
  for (const auto& l : lines(out)) {
    std::istringstream in(l);
    std::string status, dir;
    in >> status >> dir;
    if (status == "ok" || status == "FAILED") dirs.emplace_back(dir);
  }
  return dirs;
}

RunConfig synthetic_config(const fs::path& dir, const std::string& structure, int n, double sleep = 0.0) {
  RunConfig c;
  c.app = "synthetic";
  c.app_params = {{"structure", structure}, {"task_count", n}, {"sleep", sleep}};
  c.executor = testsupport::spec(ExecutorKind::Serial);
  c.run_dir = dir;
  c.seed = 4;
  return c;
}

RunConfig random_config(Xoshiro256& rng) {
  RunConfig c;
  const auto& names = AppRegistry::global().names();
  c.app = names[rng.below(names.size())];
  c.app_params = {{"k" + std::to_string(rng.below(100)), rng.below(1000)}, {"s", "v"}, {"f", rng.uniform()}};
  const auto kind = static_cast<ExecutorKind>(rng.below(4));
  c.executor = testsupport::spec(kind, 1 + rng.below(16));
  if (kind == ExecutorKind::LatencySim) {
    c.executor.sched_latency = rng.uniform();
    c.executor.batch_size = 1 + rng.below(64);
    c.executor.bandwidth = rng.uniform() * 1e9;
  }
  if (kind == ExecutorKind::WorkerPool && rng.below(2)) c.executor.worker_path = "/opt/w";
  const char* transformers[] = {"none", "file", "store"};
  c.transformer = transformers[rng.below(3)];
  if (c.transformer == "store") c.store_addr = "127.0.0.1:" + std::to_string(1 + rng.below(65535));
  const FilterSpec filters[] = {FilterSpec::never(), FilterSpec::always(), FilterSpec::min_size(rng.below(1 << 20)),
                                FilterSpec::type_tag({TypeTag::Bytes, TypeTag::F64Array})};
  c.filter = filters[rng.below(4)];
  c.run_dir = "runs/x" + std::to_string(rng.below(10));
  c.seed = rng.next();
  c.repeat = 1 + rng.below(5);
  return c;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Exception;
}

}  // namespace

TEST_CASE("run config round-trips through its file form") {
  testsupport::TempDir dir;
  Xoshiro256 rng(31);
  for (int i = 0; i < 200; ++i) {
    const RunConfig c = random_config(rng);
    CHECK(run_config_from_json(run_config_to_json(c)) == c);
    const auto path = dir.path() / "c.json";
    save_run_config(c, path);
    CHECK(load_run_config(path) == c);
  }
}

TEST_CASE("run config parsing errors") {
  testsupport::TempDir dir;
  CHECK(kind_of([&] { load_run_config(dir.path() / "missing.json"); }) == ErrorKind::Io);
  std::ofstream(dir.path() / "bad.json") << "{ nope";
  CHECK(kind_of([&] { load_run_config(dir.path() / "bad.json"); }) == ErrorKind::Parse);
  CHECK(kind_of([] { run_config_from_json({{"app", "synthetic"}, {"surprise", 1}}); }) == ErrorKind::Validation);
  CHECK(kind_of([] { executor_spec_from_json({{"kind", "quantum"}}); }) == ErrorKind::Usage);
  CHECK(kind_of([] { executor_spec_from_json({{"kind", "thread-pool"}, {"workers", "many"}}); }) ==
        ErrorKind::Validation);
}

TEST_CASE("run config validation") {
  testsupport::TempDir dir;
  auto c = synthetic_config(dir.path(), "bag", 3);
  CHECK(validate_run_config(c).app_params.at("input_bytes") == 0);
  c.app = "nope";
  CHECK(kind_of([&] { validate_run_config(c); }) == ErrorKind::Usage);
  c = synthetic_config(dir.path(), "ring", 3);
  CHECK(kind_of([&] { validate_run_config(c); }) == ErrorKind::Validation);
  c = synthetic_config(dir.path(), "bag", 3);
  c.app_params["task_count"] = "ten";
  CHECK(kind_of([&] { validate_run_config(c); }) == ErrorKind::Validation);
  c = synthetic_config(dir.path(), "bag", 3);
  c.app_params["colour"] = "red";
  CHECK(kind_of([&] { validate_run_config(c); }) == ErrorKind::Validation);
  c = synthetic_config(dir.path(), "bag", 3);
  c.filter = FilterSpec::always();
  CHECK(kind_of([&] { validate_run_config(c); }) == ErrorKind::Validation);
}

TEST_CASE("fresh run directories are never reused") {
  testsupport::TempDir dir;
  std::set<fs::path> seen;
  for (int i = 0; i < 50; ++i) {
    const auto d = fresh_run_directory(dir.path());
    CHECK(fs::is_directory(d));
    CHECK(fs::is_empty(d));
    seen.insert(d);
  }
  CHECK(seen.size() == 50);
}

TEST_CASE("run directory is complete and matches the analytic task count") {
  testsupport::TempDir dir;
  std::vector<RunConfig> configs{synthetic_config(dir.path(), "diamond", 4)};
  RunConfig ch;
  ch.app = "cholesky";
  ch.app_params = {{"n", 64}, {"block", 16}};
  ch.executor = testsupport::spec(ExecutorKind::ThreadPool, 2);
  ch.run_dir = dir.path();
  configs.push_back(ch);
  RunConfig mr;
  mr.app = "mapreduce";
  mr.app_params = {{"docs", 100}, {"map_tasks", 5}};
  mr.executor = testsupport::spec(ExecutorKind::WorkerPool, 2);
  mr.transformer = "file";
  mr.filter = FilterSpec::min_size(1000);
  mr.run_dir = dir.path();
  configs.push_back(mr);
  for (const auto& c : configs) {
    CAPTURE(c.app);
    const RunOutcome out = run_app(c);
    REQUIRE(out.ok);
    for (const char* f : {"config.json", "tasks.jsonl", "summary.json", "app.log"}) CHECK(fs::exists(out.dir / f));
    CHECK(fs::is_directory(out.dir / "data"));
    const auto records = load_records(out.dir / "tasks.jsonl");
    const json summary = json::parse(slurp(out.dir / "summary.json"));
    CHECK(summary.at("status") == "succeeded");
    CHECK(summary.at("records") == records.size());
    CHECK(summary.at("expected_task_count") == records.size());
    CHECK(summary.at("makespan_s").get<double>() > 0);
    CHECK(summary.at("app") == c.app);
    for (const auto& r : records) CHECK(check_record(r).empty());
    CHECK(load_run_config(out.dir / "config.json") == validate_run_config(c));
    CHECK_FALSE(slurp(out.dir / "app.log").empty());
  }
}

TEST_CASE("a failing app is reported in the outcome, not thrown") {
  testsupport::TempDir dir;
  RunConfig c;
  c.app = "mapreduce";
  c.app_params = {{"mode", "files"}, {"dir", (dir.path() / "missing").string()}};
  c.run_dir = dir.path();
  const RunOutcome out = run_app(c);
  CHECK_FALSE(out.ok);
  CHECK(out.error.rfind("io-error", 0) == 0);
  CHECK(json::parse(slurp(out.dir / "summary.json")).at("status") == "failed");
}

TEST_CASE("serial runs with a fixed seed are identical up to ids and timings") {
  testsupport::TempDir dir;
  RunConfig c = synthetic_config(dir.path(), "diamond", 5);
  c.app_params["output_bytes"] = 100;
  auto strip = [](std::vector<TaskRecord> rs) {
    std::sort(rs.begin(), rs.end(), [](auto& a, auto& b) { return a.ordinal < b.ordinal; });
    std::vector<std::tuple<std::string, std::string, std::string, std::int64_t, std::int64_t, std::int64_t>> v;
    for (const auto& r : rs) v.emplace_back(r.function, r.status, r.executor, r.arg_bytes, r.result_bytes, r.ordinal);
    return v;
  };
  const auto a = load_records(run_app(c).dir / "tasks.jsonl");
  const auto b = load_records(run_app(c).dir / "tasks.jsonl");
  CHECK(strip(a) == strip(b));
  CHECK(dag_signature(a) == dag_signature(b));
}

TEST_CASE("report writing") {
  testsupport::TempDir dir;
  report_write(BenchmarkReport{}, dir.path() / "empty.csv");
  CHECK(slurp(dir.path() / "empty.csv") == "label,metric,unit,rep,value\n");

  BenchmarkReport r;
  for (const char* label : {"a", "b"})
    for (int rep = 0; rep < 3; ++rep)
      r.rows.push_back({label, "makespan", "s", rep, static_cast<double>(rep + 1), false, dir.path() / label});
  report_write(r, dir.path() / "r.csv");
  CHECK(lines(slurp(dir.path() / "r.csv")).size() == 1 + 6);
  CHECK(lines(slurp(dir.path() / "r_runs.csv")).size() == 1 + 6);
  CHECK(r.mean("a", "makespan") == doctest::Approx(2.0));
  const auto stats = r.summary();
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].mean == doctest::Approx(2.0));
  CHECK(stats[0].stddev == doctest::Approx(1.0));
  CHECK(stats[0].n == 3);
  const auto summary = lines(slurp(dir.path() / "r_summary.csv"));
  REQUIRE(summary.size() == 3);
  CHECK(summary[1] == "a,makespan,s,3,2,1");

  CHECK(kind_of([&] { report_write(r, "/proc/nope/r.csv"); }) == ErrorKind::Io);
}

TEST_CASE("makespan benchmark: serial vs thread pool on 32 sleeps of 0.1 s") {
  testsupport::TempDir dir;
  auto serial = synthetic_config(dir.path(), "bag", 32, 0.1);
  auto pool = serial;
  pool.executor = testsupport::spec(ExecutorKind::ThreadPool, 8);
  const auto report = bench_makespan({{"serial", serial}, {"pool", pool}}, 1);
  REQUIRE(report.rows.size() == 2);
  const double s = report.mean("serial", "makespan"), p = report.mean("pool", "makespan");
  // Analytic bounds: 32 x 0.1 s and ceil(32/8) x 0.1 s.
  CHECK(s >= 3.2);
  CHECK(s < 3.2 + 0.8);
  CHECK(p >= 0.4);
  CHECK(p < 0.4 + 0.6);
  for (const auto& row : report.rows) CHECK(fs::exists(row.run_dir / "summary.json"));
}

TEST_CASE("makespan benchmark: repetitions and failed rows") {
  testsupport::TempDir dir;
  RunConfig bad;
  bad.app = "mapreduce";
  bad.app_params = {{"mode", "files"}, {"dir", "/nonexistent"}};
  bad.run_dir = dir.path();
  const auto report = bench_makespan({{"ok", synthetic_config(dir.path(), "bag", 2)}, {"bad", bad}}, 3);
  REQUIRE(report.rows.size() == 6);
  int failed = 0;
  for (const auto& row : report.rows) failed += row.failed;
  CHECK(failed == 3);
  report_write(report, dir.path() / "m.csv");
  CHECK(slurp(dir.path() / "m.csv").find("nan") != std::string::npos);
}

TEST_CASE("scaling benchmark: 8 workers x 0.1 s sleeps give about 80 tasks/s") {
  testsupport::TempDir dir;
  ScalingOptions o;
  o.executors = {testsupport::spec(ExecutorKind::ThreadPool)};
  o.workers = {8};
  o.task_count = 200;
  o.sleep = 0.1;
  o.run_dir = dir.path();
  const auto report = bench_scaling(o);
  REQUIRE(report.rows.size() == 1);
  CHECK_FALSE(report.rows[0].failed);
  CHECK(report.rows[0].label == "thread-pool-w8");
  CHECK(report.rows[0].value == doctest::Approx(80.0).epsilon(0.15));
}

TEST_CASE("transfer benchmark produces one row per size and transformer") {
  testsupport::TempDir dir;
  TransferOptions o;
  o.executor = testsupport::spec(ExecutorKind::ThreadPool);
  o.sizes = {0, 1000, 100000};
  o.transformers = {"none", "file", "store"};
  o.workers = 2;
  o.tasks_per_worker = 3;
  o.run_dir = dir.path();
  const auto report = bench_transfer(o);
  CHECK(report.rows.size() == 9);
  for (const auto& r : report.rows) {
    CHECK_FALSE(r.failed);
    CHECK(r.metric == "round_trip");
    CHECK(r.value >= 0);
  }
  // No payload: round trip is just per-task overhead.
  CHECK(report.rows[0].value < 0.05);
  // Each value is the median over the run's records after the 2 warm-up tasks.
  for (const auto& r : report.rows) {
    auto rs = load_records(r.run_dir / "tasks.jsonl");
    REQUIRE(rs.size() == 6);
    std::sort(rs.begin(), rs.end(), [](auto& a, auto& b) { return a.ordinal < b.ordinal; });
    std::vector<std::int64_t> rest;
    for (std::size_t i = 2; i < rs.size(); ++i) rest.push_back(rs[i].makespan_us);
    std::sort(rest.begin(), rest.end());
    CHECK(r.value == doctest::Approx((rest[1] + rest[2]) / 2.0 * 1e-6));
  }
}

TEST_CASE("transfer round trip is a warm-up-free median") {
  auto rec = [](std::int64_t ordinal, std::int64_t us) {
    TaskRecord r;
    r.ordinal = ordinal;
    r.makespan_us = us;
    return r;
  };
  const std::vector<TaskRecord> rs{rec(3, 2), rec(0, 9000), rec(4, 100), rec(1, 1), rec(2, 3)};
  CHECK(transfer_round_trip(rs, 1) == doctest::Approx(2.5e-6));
  CHECK(transfer_round_trip(rs, 0) == doctest::Approx(3e-6));
  CHECK(transfer_round_trip(rs, 2) == doctest::Approx(3e-6));
  CHECK(transfer_round_trip(rs, 5) == doctest::Approx(3e-6));
  CHECK(transfer_round_trip({}, 1) == 0.0);
}

TEST_CASE("cli: run, bad app, bad flag type, config replay") {
  testsupport::TempDir dir;
  const std::string rd = "--run-dir " + dir.path().string();
  const Cli ok = cli("run --app synthetic --structure bag --task-count 10 --executor serial " + rd);
  CHECK(ok.code == 0);
  const auto dirs = run_dirs(ok.out);
  REQUIRE(dirs.size() == 1);
  CHECK(load_records(dirs[0] / "tasks.jsonl").size() == 10);

  const Cli nope = cli("run --app nope " + rd);
  CHECK(nope.code == 2);
  CHECK(nope.out.find("usage-error") != std::string::npos);

  const Cli bad_exec = cli("run --app synthetic --executor warp " + rd);
  CHECK(bad_exec.code == 2);

  const Cli bad_type = cli("run --app synthetic --task-count ten " + rd);
  CHECK(bad_type.code == 3);
  CHECK(bad_type.out.find("validation-error") != std::string::npos);
  CHECK(bad_type.out.find("task-count") != std::string::npos);

  const Cli first = cli("run --app synthetic --structure diamond --task-count 6 --executor thread-pool --workers 3 " + rd);
  REQUIRE(first.code == 0);
  const auto d1 = run_dirs(first.out).at(0);
  const Cli replay = cli("run --config " + (d1 / "config.json").string());
  REQUIRE(replay.code == 0);
  const auto d2 = run_dirs(replay.out).at(0);
  CHECK(d1 != d2);
  const auto r1 = load_records(d1 / "tasks.jsonl"), r2 = load_records(d2 / "tasks.jsonl");
  CHECK(dag_signature(r1) == dag_signature(r2));
  std::set<std::string> ids1, ids2;
  for (const auto& r : r1) ids1.insert(r.task_id);
  for (const auto& r : r2) ids2.insert(r.task_id);
  CHECK(ids1 != ids2);

  const Cli apps = cli("apps");
  CHECK(apps.code == 0);
  for (const char* a : {"cholesky", "mapreduce", "synthetic", "failures"}) CHECK(apps.out.find(a) != std::string::npos);
}

TEST_CASE("cli: failures app routes base flags and writes the injected set") {
  testsupport::TempDir dir;
  const Cli c = cli("run --app failures --base synthetic --structure sequential --task-count 5 "
                    "--failure-type exception --failure-rate 1 --executor serial --run-dir " +
                    dir.path().string());
  CHECK(c.code == 0);
  const auto d = run_dirs(c.out).at(0);
  const json s = json::parse(slurp(d / "summary.json"));
  CHECK(s.at("injected_count") == 5);
  CHECK(s.at("failed_records") == 5);
  CHECK(s.at("error_kinds").at("dependency-failure") == 4);
  CHECK(s.at("error_kinds").at("exception") == 1);

  const Cli other = cli("run --app failures --base cholesky --n 32 --block 16 --executor serial --run-dir " +
                        dir.path().string());
  REQUIRE(other.code == 0);
  const json os = json::parse(slurp(run_dirs(other.out).at(0) / "summary.json"));
  CHECK(os.at("records") == 4);
  CHECK(os.at("base_summary").at("n") == 32);

  const Cli wrong = cli("run --app failures --base cholesky --task-count 3 --run-dir " + dir.path().string());
  CHECK(wrong.code == 3);
  CHECK(wrong.out.find("--task-count: not a parameter") != std::string::npos);
}

TEST_CASE("cli: benchmarks write csv files") {
  testsupport::TempDir dir;
  const std::string rd = " --run-dir " + dir.path().string();
  const Cli s = cli("bench scaling --executors serial,thread-pool --workers 1,2 --task-count 20 --out " +
                    (dir.path() / "s.csv").string() + rd);
  CHECK(s.code == 0);
  CHECK(lines(slurp(dir.path() / "s.csv")).size() == 1 + 4);
  const Cli t = cli("bench transfer --executor thread-pool --workers 2 --sizes 10,1000 --transformers none,file "
                    "--tasks-per-worker 2 --out " +
                    (dir.path() / "t.csv").string() + rd);
  CHECK(t.code == 0);
  CHECK(lines(slurp(dir.path() / "t.csv")).size() == 1 + 4);

  save_run_config(synthetic_config(dir.path(), "bag", 3), dir.path() / "cfg.json");
  const Cli m = cli("bench makespan --config " + (dir.path() / "cfg.json").string() + " --repetitions 2 --out " +
                    (dir.path() / "m.csv").string());
  CHECK(m.code == 0);
  CHECK(lines(slurp(dir.path() / "m.csv")).size() == 1 + 2);
}
