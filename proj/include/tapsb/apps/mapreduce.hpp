#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tapsb/apps/app.hpp"
#include "tapsb/engine.hpp"
#include "tapsb/value.hpp"

namespace tapsb {
class TaskRegistry;
}

namespace tapsb::mapreduce {

using WordCount = std::map<std::string, std::int64_t>;

/// `docs` documents of `words_per_doc` tokens "w%06d", each drawn uniformly
/// from the vocabulary with Xoshiro256(seed).below(vocab).
std::vector<std::string> generate_corpus(std::uint64_t docs, std::uint64_t words_per_doc, std::uint64_t vocab,
                                         std::uint64_t seed);

/// Lowercases, splits on every non-alphanumeric byte, drops empty tokens.
void count_words(std::string_view text, WordCount& out);
WordCount count_words(std::string_view text);

/// Pointwise sum.
WordCount merge(const std::vector<WordCount>& parts);

/// `n` entries by descending count, ties by ascending word.
std::vector<std::pair<std::string, std::int64_t>> top_n(const WordCount& counts, std::size_t n);

/// "word\tcount\n" lines.
std::string format_top(const std::vector<std::pair<std::string, std::int64_t>>& top);

Value encode_counts(const WordCount& c);
WordCount decode_counts(const Value& v);

/// Contiguous shard boundaries: the first `items % shards` shards get one
/// extra item. Returns shards + 1 offsets.
std::vector<std::size_t> shard_offsets(std::size_t items, std::size_t shards);

/// Regular files under `root`, recursively, in lexicographic path order.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& root);

struct Config {
  std::string mode = "generated";  // generated | files
  std::uint64_t docs = 1000;
  std::uint64_t words_per_doc = 100;
  std::uint64_t vocab = 1000;
  std::filesystem::path dir;
  std::uint64_t map_tasks = 8;
  std::uint64_t top = 10;
  std::uint64_t seed = 0;
};

struct Result {
  std::filesystem::path output;
  std::uint64_t tasks = 0;
  std::int64_t total_tokens = 0;
  std::size_t unique_words = 0;
};

/// Submits map_tasks map tasks plus one reduce over all of them and writes
/// the top-n file to `output`.
Result run_mapreduce(Engine& engine, const Config& cfg, const std::filesystem::path& output);

void register_tasks(TaskRegistry& r);
AppInfo app_info();

}  // namespace tapsb::mapreduce
