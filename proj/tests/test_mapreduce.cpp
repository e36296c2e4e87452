#include <doctest.h>

#include <fstream>
#include <sstream>
#include <unordered_map>

#include "oracles.hpp"
#include "support.hpp"
#include "tapsb/apps/mapreduce.hpp"
#include "tapsb/errors.hpp"
#include "tapsb/rng.hpp"

using namespace tapsb;
using namespace tapsb::mapreduce;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  std::string output;
  Result result;
  std::vector<TaskRecord> records;
};

Run run(const Config& cfg, ExecutorKind kind = ExecutorKind::ThreadPool) {
  testsupport::TempDir dir;
  testsupport::Harness h(kind, 3);
  Run r;
  r.result = run_mapreduce(*h.engine, cfg, dir.path() / "out.txt");
  r.records = h.finish();
  r.output = slurp(dir.path() / "out.txt");
  return r;
}

}  // namespace

TEST_CASE("corpus generation") {
  CHECK(generate_corpus(1, 3, 1, 42) == std::vector<std::string>{"w000000 w000000 w000000"});
  CHECK(generate_corpus(20, 30, 50, 7) == generate_corpus(20, 30, 50, 7));
  CHECK(generate_corpus(20, 30, 50, 7) != generate_corpus(20, 30, 50, 8));
  // Each token is the vocabulary index drawn in order from the seeded generator.
  Xoshiro256 rng(3);
  const auto docs = generate_corpus(2, 2, 1000, 3);
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%06llu", static_cast<unsigned long long>(rng.below(1000)));
  std::string first = buf;
  std::snprintf(buf, sizeof buf, "w%06llu", static_cast<unsigned long long>(rng.below(1000)));
  CHECK(docs[0] == first + " " + buf);
}

TEST_CASE("tokenizer") {
  CHECK(count_words("a b a") == WordCount{{"a", 2}, {"b", 1}});
  CHECK(count_words("A, a! b?") == WordCount{{"a", 2}, {"b", 1}});
  CHECK(count_words("").empty());
  CHECK(count_words("  --  ").empty());
  CHECK(count_words("x1-Y2\tx1\n") == WordCount{{"x1", 2}, {"y2", 1}});
}

TEST_CASE("reduce") {
  const WordCount a{{"a", 2}, {"b", 1}}, b{{"b", 1}, {"c", 1}};
  CHECK(merge({a, b}) == WordCount{{"a", 2}, {"b", 2}, {"c", 1}});
  CHECK(merge({a}) == a);
  CHECK(merge({b, a}) == merge({a, b}));
  CHECK(decode_counts(encode_counts(a)) == a);
}

TEST_CASE("top-n breaks ties by word") {
  const WordCount c{{"b", 2}, {"a", 2}, {"c", 5}, {"d", 1}};
  CHECK(format_top(top_n(c, 3)) == "c\t5\na\t2\nb\t2\n");
  CHECK(top_n(c, 10).size() == 4);
}

TEST_CASE("shard offsets are contiguous and balanced") {
  CHECK(shard_offsets(10, 3) == std::vector<std::size_t>{0, 4, 7, 10});
  CHECK(shard_offsets(4, 4) == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("small generated run matches the sequential oracle") {
  Config cfg;
  cfg.docs = 4;
  cfg.words_per_doc = 2;
  cfg.vocab = 2;
  cfg.map_tasks = 2;
  cfg.seed = 5;
  const Run r = run(cfg);
  CHECK(r.output == oracle::sequential_top(generate_corpus(4, 2, 2, 5), cfg.top));
  CHECK(r.records.size() == 3);
  CHECK(r.result.total_tokens == 8);
}

TEST_CASE("single map task: output is the map output truncated") {
  Config cfg;
  cfg.docs = 30;
  cfg.words_per_doc = 10;
  cfg.vocab = 40;
  cfg.map_tasks = 1;
  cfg.top = 5;
  const Run r = run(cfg);
  WordCount direct;
  for (const auto& d : generate_corpus(30, 10, 40, 0)) count_words(d, direct);
  CHECK(r.output == format_top(top_n(direct, 5)));
  REQUIRE(r.records.size() == 2);
}

TEST_CASE("top larger than vocabulary emits every word") {
  Config cfg;
  cfg.docs = 50;
  cfg.words_per_doc = 20;
  cfg.vocab = 7;
  cfg.map_tasks = 4;
  cfg.top = 100;
  const Run r = run(cfg);
  CHECK(std::count(r.output.begin(), r.output.end(), '\n') == 7);
}

TEST_CASE("shard invariance and conservation across map_tasks and executors") {
  Config cfg;
  cfg.docs = 240;
  cfg.words_per_doc = 25;
  cfg.vocab = 60;
  cfg.top = 20;
  cfg.seed = 9;
  const std::string expected = oracle::sequential_top(generate_corpus(240, 25, 60, 9), 20);
  for (std::uint64_t m : {1, 2, 3, 8, 24, 240}) {
    cfg.map_tasks = m;
    const Run r = run(cfg, m % 2 ? ExecutorKind::WorkerPool : ExecutorKind::ThreadPool);
    CHECK(r.output == expected);
    CHECK(r.records.size() == m + 1);
    CHECK(r.result.total_tokens == 240 * 25);
  }
}

TEST_CASE("files mode reads a directory tree in path order") {
  testsupport::TempDir dir;
  std::filesystem::create_directories(dir.path() / "sub");
  std::ofstream(dir.path() / "b.txt") << "Hello, world! hello";
  std::ofstream(dir.path() / "a.txt") << "world WORLD x";
  std::ofstream(dir.path() / "sub" / "c.txt") << "x-ray";
  const auto files = list_files(dir.path());
  REQUIRE(files.size() == 3);
  CHECK(files[0].filename() == "a.txt");
  Config cfg;
  cfg.mode = "files";
  cfg.dir = dir.path();
  cfg.map_tasks = 2;
  const Run r = run(cfg);
  CHECK(r.output == "world\t3\nhello\t2\nx\t2\nray\t1\n");
}

TEST_CASE("unreadable input file fails the map task naming the path") {
  testsupport::Harness h(ExecutorKind::Serial);
  auto f = h.engine->submit("mapreduce.map",
                            {Value::text("files"), Value::list({Value::text("/nonexistent/corpus/file.txt")})});
  f.wait();
  REQUIRE(f.error().has_value());
  CHECK(std::string(f.error()->what()).find("/nonexistent/corpus/file.txt") != std::string::npos);
  h.finish();
}

TEST_CASE("invalid configurations are rejected") {
  Config cfg;
  cfg.docs = 3;
  cfg.map_tasks = 4;
  CHECK_THROWS_AS(run(cfg), Error);
  cfg.map_tasks = 0;
  CHECK_THROWS_AS(run(cfg), Error);
  cfg.map_tasks = 1;
  cfg.mode = "stream";
  CHECK_THROWS_AS(run(cfg), Error);
}
