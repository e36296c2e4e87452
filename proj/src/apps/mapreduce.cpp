#include "tapsb/apps/mapreduce.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "tapsb/errors.hpp"
#include "tapsb/registry.hpp"
#include "tapsb/rng.hpp"

namespace tapsb::mapreduce {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> generate_corpus(std::uint64_t docs, std::uint64_t words_per_doc, std::uint64_t vocab,
                                         std::uint64_t seed) {
  if (vocab == 0) throw Error(ErrorKind::Validation, "vocab: must be >= 1");
  Xoshiro256 rng(seed);
  std::vector<std::string> corpus;
  corpus.reserve(docs);
  for (std::uint64_t d = 0; d < docs; ++d) {
    std::string doc;
    doc.reserve(words_per_doc * 8);
    for (std::uint64_t w = 0; w < words_per_doc; ++w) {
      if (w > 0) doc += ' ';
      fmt::format_to(std::back_inserter(doc), "w{:06d}", rng.below(vocab));
    }
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

void count_words(std::string_view text, WordCount& out) {
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      ++out[token];
      token.clear();
    }
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      token += static_cast<char>(std::tolower(u));
    } else {
      flush();
    }
  }
  flush();
}

WordCount count_words(std::string_view text) {
  WordCount c;
  count_words(text, c);
  return c;
}

WordCount merge(const std::vector<WordCount>& parts) {
  WordCount out;
  for (const auto& p : parts)
    for (const auto& [w, n] : p) out[w] += n;
  return out;
}

std::vector<std::pair<std::string, std::int64_t>> top_n(const WordCount& counts, std::size_t n) {
  std::vector<std::pair<std::string, std::int64_t>> v(counts.begin(), counts.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (v.size() > n) v.resize(n);
  return v;
}

std::string format_top(const std::vector<std::pair<std::string, std::int64_t>>& top) {
  std::string out;
  for (const auto& [w, n] : top) fmt::format_to(std::back_inserter(out), "{}\t{}\n", w, n);
  return out;
}

// Two parallel lists keep the frame compact: [words..], [counts..].
Value encode_counts(const WordCount& c) {
  Value::List words, counts;
  words.reserve(c.size());
  counts.reserve(c.size());
  for (const auto& [w, n] : c) {
    words.push_back(Value::text(w));
    counts.push_back(Value::integer(n));
  }
  return Value::list({Value::list(std::move(words)), Value::list(std::move(counts))});
}

WordCount decode_counts(const Value& v) {
  const auto& parts = v.as_list();
  if (parts.size() != 2) throw Error(ErrorKind::Serialization, "word count: expected [words, counts]");
  const auto& words = parts[0].as_list();
  const auto& counts = parts[1].as_list();
  if (words.size() != counts.size()) throw Error(ErrorKind::Serialization, "word count: length mismatch");
  WordCount out;
  for (std::size_t i = 0; i < words.size(); ++i) out.emplace(words[i].as_text(), counts[i].as_int());
  return out;
}

std::vector<std::size_t> shard_offsets(std::size_t items, std::size_t shards) {
  std::vector<std::size_t> off{0};
  const std::size_t base = items / shards, extra = items % shards;
  for (std::size_t s = 0; s < shards; ++s) off.push_back(off.back() + base + (s < extra ? 1 : 0));
  return off;
}

std::vector<fs::path> list_files(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorKind::Io, fmt::format("'{}' is not a directory", root.string()));
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, fmt::format("cannot read '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// map(mode, items): items are document texts ("text") or file paths
// ("files").
Value map_task(std::span<const Value> args) {
  if (args.size() != 2) throw Error(ErrorKind::Argument, "mapreduce.map: expected (mode, items)");
  const bool files = args[0].as_text() == "files";
  WordCount c;
  for (const auto& item : args[1].as_list()) {
    if (files) {
      count_words(read_file(item.as_text()), c);
    } else {
      count_words(item.as_text(), c);
    }
  }
  return encode_counts(c);
}

Value reduce_task(std::span<const Value> args) {
  if (args.size() != 1) throw Error(ErrorKind::Argument, "mapreduce.reduce: expected (parts)");
  std::vector<WordCount> parts;
  for (const auto& p : args[0].as_list()) parts.push_back(decode_counts(p));
  return encode_counts(merge(parts));
}

class MapReduceApp final : public App {
 public:
  explicit MapReduceApp(Config cfg) : cfg_(std::move(cfg)) {}

  json run(Engine& engine, const AppContext& ctx) override {
    const fs::path out = ctx.run_dir / "output.txt";
    ctx.log(fmt::format("mapreduce mode={} map_tasks={} top={}", cfg_.mode, cfg_.map_tasks, cfg_.top));
    Result r = run_mapreduce(engine, cfg_, out);
    ctx.log(fmt::format("mapreduce done: {} tokens, {} unique words", r.total_tokens, r.unique_words));
    return json{{"mode", cfg_.mode},
                {"map_tasks", cfg_.map_tasks},
                {"task_count", r.tasks},
                {"total_tokens", r.total_tokens},
                {"unique_words", r.unique_words},
                {"output", r.output.string()}};
  }

 private:
  Config cfg_;
};

}  // namespace

Result run_mapreduce(Engine& engine, const Config& cfg, const fs::path& output) {
  if (cfg.map_tasks < 1) throw Error(ErrorKind::Validation, "map_tasks: must be >= 1");
  if (cfg.top < 1) throw Error(ErrorKind::Validation, "top: must be >= 1");
  std::vector<std::string> items;
  std::string mode;
  if (cfg.mode == "generated") {
    items = generate_corpus(cfg.docs, cfg.words_per_doc, cfg.vocab, cfg.seed);
    mode = "text";
  } else if (cfg.mode == "files") {
    for (const auto& p : list_files(cfg.dir)) items.push_back(fs::absolute(p).string());
    mode = "files";
  } else {
    throw Error(ErrorKind::Validation, fmt::format("mode: '{}' is not generated or files", cfg.mode));
  }
  if (cfg.map_tasks > items.size()) {
    throw Error(ErrorKind::Validation,
                fmt::format("map_tasks: {} exceeds the number of inputs ({})", cfg.map_tasks, items.size()));
  }

  const auto off = shard_offsets(items.size(), cfg.map_tasks);
  std::vector<TaskFuture> maps;
  for (std::size_t s = 0; s < cfg.map_tasks; ++s) {
    Value::List shard;
    for (std::size_t i = off[s]; i < off[s + 1]; ++i) shard.push_back(Value::text(std::move(items[i])));
    maps.push_back(engine.submit("mapreduce.map", {Value::text(mode), Value::list(std::move(shard))}));
  }
  TaskFuture reduce = engine.submit("mapreduce.reduce", {Arg(maps)});
  const WordCount counts = decode_counts(reduce.result());

  Result r;
  r.output = output;
  r.tasks = maps.size() + 1;
  r.unique_words = counts.size();
  for (const auto& [w, n] : counts) r.total_tokens += n;
  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  out << format_top(top_n(counts, cfg.top));
  if (!out) throw Error(ErrorKind::Io, fmt::format("cannot write '{}'", output.string()));
  return r;
}

void register_tasks(TaskRegistry& r) {
  r.add("mapreduce.map", map_task);
  r.add("mapreduce.reduce", reduce_task);
}

AppInfo app_info() {
  AppInfo info;
  info.name = "mapreduce";
  info.description = "word-frequency MapReduce over a generated or on-disk corpus";
  info.params = {{"mode", "string", "generated", "generated | files"},
                 {"docs", "int", 1000, "generated documents"},
                 {"words_per_doc", "int", 100, "tokens per generated document"},
                 {"vocab", "int", 1000, "generated vocabulary size"},
                 {"dir", "string", "", "corpus root for files mode"},
                 {"map_tasks", "int", 8, "number of map tasks"},
                 {"top", "int", 10, "words in the output file"}};
  info.factory = [](const json& p, std::uint64_t seed) -> std::unique_ptr<App> {
    Config cfg;
    cfg.mode = p.at("mode").get<std::string>();
    cfg.docs = p.at("docs").get<std::uint64_t>();
    cfg.words_per_doc = p.at("words_per_doc").get<std::uint64_t>();
    cfg.vocab = p.at("vocab").get<std::uint64_t>();
    cfg.dir = p.at("dir").get<std::string>();
    cfg.map_tasks = p.at("map_tasks").get<std::uint64_t>();
    cfg.top = p.at("top").get<std::uint64_t>();
    cfg.seed = seed;
    if (cfg.mode != "generated" && cfg.mode != "files") {
      throw Error(ErrorKind::Validation, fmt::format("mode: '{}' is not generated or files", cfg.mode));
    }
    if (cfg.mode == "generated" && (cfg.docs < 1 || cfg.words_per_doc < 1 || cfg.vocab < 1)) {
      throw Error(ErrorKind::Validation, "docs, words_per_doc, vocab: must be >= 1");
    }
    if (cfg.mode == "files" && cfg.dir.empty()) throw Error(ErrorKind::Validation, "dir: required in files mode");
    if (cfg.map_tasks < 1) throw Error(ErrorKind::Validation, "map_tasks: must be >= 1");
    if (cfg.top < 1) throw Error(ErrorKind::Validation, "top: must be >= 1");
    return std::make_unique<MapReduceApp>(cfg);
  };
  info.expected_tasks = [](const json& p) -> std::optional<std::uint64_t> {
    return p.at("map_tasks").get<std::uint64_t>() + 1;
  };
  return info;
}

}  // namespace tapsb::mapreduce
