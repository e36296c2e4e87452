#include "tapsb/apps/cholesky.hpp"

#include <cstring>
#include <optional>
#include <variant>

#include <fmt/format.h>

#include "tapsb/ids.hpp"
#include "tapsb/registry.hpp"
#include "tapsb/rng.hpp"

namespace tapsb::cholesky {

using nlohmann::json;

TileMatrix TileMatrix::split(const Tile& dense, Eigen::Index b) {
  if (dense.rows() != dense.cols()) throw Error(ErrorKind::Argument, "split: matrix is not square");
  if (b < 1 || b > dense.rows()) throw Error(ErrorKind::Validation, "block: must satisfy 1 <= block <= n");
  TileMatrix m;
  m.n = dense.rows();
  m.b = b;
  const auto t = m.grid();
  m.tiles.resize(static_cast<std::size_t>(t * t));
  for (Eigen::Index i = 0; i < t; ++i) {
    for (Eigen::Index j = 0; j < t; ++j) {
      const auto r0 = i * b, c0 = j * b;
      m.at(i, j) = dense.block(r0, c0, std::min(b, m.n - r0), std::min(b, m.n - c0));
    }
  }
  return m;
}

Tile TileMatrix::assemble() const {
  Tile dense = Tile::Zero(n, n);
  const auto t = grid();
  for (Eigen::Index i = 0; i < t; ++i) {
    for (Eigen::Index j = 0; j < t; ++j) {
      const Tile& tile = at(i, j);
      if (tile.size() == 0) continue;
      dense.block(i * b, j * b, tile.rows(), tile.cols()) = tile;
    }
  }
  return dense;
}

Tile generate_input(Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::Validation, "n: must be >= 1");
  Xoshiro256 rng(seed);
  Tile bm(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) bm(i, j) = rng.uniform();
  Tile a = bm + bm.transpose();
  a.diagonal().array() += static_cast<double>(n);
  return a;
}

std::uint64_t task_count(std::uint64_t t) {
  if (t == 0) return 0;
  return t + t * (t - 1) + t * (t - 1) * (t - 2) / 6;
}

Value encode_tile(const Tile& t) {
  std::vector<double> data(t.data(), t.data() + t.size());
  return Value::list({Value::integer(t.rows()), Value::integer(t.cols()), Value::array(std::move(data))});
}

Tile decode_tile(const Value& v) {
  const auto& parts = v.as_list();
  if (parts.size() != 3) throw Error(ErrorKind::Serialization, "tile: expected [rows, cols, data]");
  const auto rows = parts[0].as_int();
  const auto cols = parts[1].as_int();
  const auto& data = parts[2].as_array();
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
    throw Error(ErrorKind::Serialization, "tile: size does not match shape");
  }
  return Eigen::Map<const Tile>(data.data(), rows, cols);
}

std::string matrix_hash(const Tile& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, m.data() + i, sizeof bits);
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

double reconstruction_error(const Tile& l, const Tile& a) {
  return (l * l.transpose() - a).norm() / a.norm();
}

std::map<TaskLabel, std::vector<TaskLabel>> expected_dag(int t) {
  std::map<TaskLabel, std::vector<TaskLabel>> dag;
  // Last writer of tile (i,j) before step k.
  auto prev = [](int i, int j, int k) -> std::optional<TaskLabel> {
    if (k == 0) return std::nullopt;
    if (i == j) return TaskLabel{"syrk", i, i, k - 1};
    return TaskLabel{"gemm", i, j, k - 1};
  };
  auto push = [](std::vector<TaskLabel>& v, std::optional<TaskLabel> p) {
    if (p) v.push_back(*p);
  };
  for (int k = 0; k < t; ++k) {
    auto& potrf = dag[{"potrf", k, k, k}];
    push(potrf, prev(k, k, k));
    for (int i = k + 1; i < t; ++i) {
      auto& trsm = dag[{"trsm", i, k, k}];
      trsm.push_back({"potrf", k, k, k});
      push(trsm, prev(i, k, k));
    }
    for (int i = k + 1; i < t; ++i) {
      auto& syrk = dag[{"syrk", i, i, k}];
      push(syrk, prev(i, i, k));
      syrk.push_back({"trsm", i, k, k});
      for (int j = k + 1; j < i; ++j) {
        auto& gemm = dag[{"gemm", i, j, k}];
        push(gemm, prev(i, j, k));
        gemm.push_back({"trsm", i, k, k});
        gemm.push_back({"trsm", j, k, k});
      }
    }
  }
  return dag;
}

Result run_cholesky(Engine& engine, const Config& cfg) {
  Result res;
  res.a = generate_input(cfg.n, cfg.seed);
  TileMatrix a = TileMatrix::split(res.a, cfg.b);
  const int t = static_cast<int>(a.grid());

  // Current version of each lower tile: the input value or the future of
  // the last task that wrote it.
  using Slot = std::variant<Value, TaskFuture>;
  std::vector<Slot> cur(static_cast<std::size_t>(t * t));
  auto slot = [&](int i, int j) -> Slot& { return cur[static_cast<std::size_t>(i * t + j)]; };
  for (int i = 0; i < t; ++i)
    for (int j = 0; j <= i; ++j) slot(i, j) = encode_tile(a.at(i, j));

  auto arg = [](const Slot& s) -> Arg {
    if (const auto* v = std::get_if<Value>(&s)) return *v;
    return std::get<TaskFuture>(s);
  };
  std::vector<TaskFuture> all;
  auto submit = [&](const char* fn, TaskLabel label, std::vector<Arg> args) {
    TaskFuture f = engine.submit(fmt::format("cholesky.{}", fn), std::move(args));
    res.labels.emplace(f.id().str(), std::move(label));
    all.push_back(f);
    return f;
  };

  for (int k = 0; k < t; ++k) {
    slot(k, k) = submit("potrf", {"potrf", k, k, k}, {arg(slot(k, k))});
    for (int i = k + 1; i < t; ++i) {
      slot(i, k) = submit("trsm", {"trsm", i, k, k}, {arg(slot(k, k)), arg(slot(i, k))});
    }
    for (int i = k + 1; i < t; ++i) {
      slot(i, i) = submit("syrk", {"syrk", i, i, k}, {arg(slot(i, i)), arg(slot(i, k))});
      for (int j = k + 1; j < i; ++j) {
        slot(i, j) = submit("gemm", {"gemm", i, j, k}, {arg(slot(i, j)), arg(slot(i, k)), arg(slot(j, k))});
      }
    }
  }
  res.tasks = all.size();

  for (auto& f : all) f.wait();
  for (auto& f : all) {
    if (auto e = f.error(); e && e->kind() != ErrorKind::DependencyFailure) throw *e;
  }
  for (auto& f : all) {
    if (auto e = f.error()) throw *e;
  }

  TileMatrix l;
  l.n = a.n;
  l.b = a.b;
  l.tiles.resize(a.tiles.size());
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < t; ++j) {
      if (j > i) {
        l.at(i, j) = Tile::Zero(a.at(i, j).rows(), a.at(i, j).cols());
      } else {
        l.at(i, j) = decode_tile(std::get<TaskFuture>(slot(i, j)).result());
      }
    }
  }
  res.l = l.assemble();
  return res;
}

namespace {

Tile tile_arg(std::span<const Value> args, std::size_t i) {
  if (args.size() <= i) throw Error(ErrorKind::Argument, "cholesky kernel: missing tile argument");
  return decode_tile(args[i]);
}

class CholeskyApp final : public App {
 public:
  explicit CholeskyApp(Config cfg) : cfg_(cfg) {}

  json run(Engine& engine, const AppContext& ctx) override {
    ctx.log(fmt::format("cholesky n={} block={} seed={}", cfg_.n, cfg_.b, cfg_.seed));
    Result r = run_cholesky(engine, cfg_);
    const double err = reconstruction_error(r.l, r.a);
    ctx.log(fmt::format("cholesky done: {} tasks, relative error {:.3e}", r.tasks, err));
    return json{{"n", cfg_.n},
                {"block", cfg_.b},
                {"tiles", (cfg_.n + cfg_.b - 1) / cfg_.b},
                {"task_count", r.tasks},
                {"reconstruction_error", err},
                {"l_hash", matrix_hash(r.l)}};
  }

 private:
  Config cfg_;
};

}  // namespace

void register_tasks(TaskRegistry& r) {
  r.add("cholesky.potrf", [](std::span<const Value> a) { return encode_tile(potrf(tile_arg(a, 0))); });
  r.add("cholesky.trsm", [](std::span<const Value> a) { return encode_tile(trsm(tile_arg(a, 0), tile_arg(a, 1))); });
  r.add("cholesky.syrk", [](std::span<const Value> a) { return encode_tile(syrk(tile_arg(a, 0), tile_arg(a, 1))); });
  r.add("cholesky.gemm", [](std::span<const Value> a) {
    return encode_tile(gemm(tile_arg(a, 0), tile_arg(a, 1), tile_arg(a, 2)));
  });
}

AppInfo app_info() {
  AppInfo info;
  info.name = "cholesky";
  info.description = "tiled Cholesky factorization of a generated SPD matrix";
  info.params = {{"n", "int", 256, "matrix side length"}, {"block", "int", 64, "tile side length"}};
  info.factory = [](const json& p, std::uint64_t seed) -> std::unique_ptr<App> {
    Config cfg{p.at("n").get<Eigen::Index>(), p.at("block").get<Eigen::Index>(), seed};
    if (cfg.n < 1) throw Error(ErrorKind::Validation, "n: must be >= 1");
    if (cfg.b < 1 || cfg.b > cfg.n) throw Error(ErrorKind::Validation, "block: must satisfy 1 <= block <= n");
    return std::make_unique<CholeskyApp>(cfg);
  };
  info.expected_tasks = [](const json& p) -> std::optional<std::uint64_t> {
    const auto n = p.at("n").get<std::uint64_t>();
    const auto b = p.at("block").get<std::uint64_t>();
    if (b == 0) return std::nullopt;
    return task_count((n + b - 1) / b);
  };
  return info;
}

}  // namespace tapsb::cholesky
