#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tapsb/apps/app.hpp"
#include "tapsb/engine.hpp"
#include "tapsb/errors.hpp"
#include "tapsb/value.hpp"

namespace tapsb {
class TaskRegistry;
}

namespace tapsb::cholesky {

template <typename Scalar>
using TileT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Tile = TileT<double>;

/// Cholesky-Banachiewicz: row by row, L(i,j) from the already computed
/// entries to its left. Throws Error(Numerical) on a non-positive pivot.
template <typename Scalar>
TileT<Scalar> potrf(const TileT<Scalar>& a) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::Numerical, "potrf: tile is not square");
  const Eigen::Index n = a.rows();
  TileT<Scalar> l = TileT<Scalar>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      Scalar s = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (!(s > Scalar(0))) throw Error(ErrorKind::Numerical, "potrf: non-positive pivot");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

/// X with X * l^T = a, by forward substitution one column of X at a time.
template <typename Scalar>
TileT<Scalar> trsm(const TileT<Scalar>& l, const TileT<Scalar>& a) {
  if (l.rows() != l.cols() || a.cols() != l.rows()) throw Error(ErrorKind::Numerical, "trsm: shape mismatch");
  const Eigen::Index m = a.rows();
  const Eigen::Index n = l.rows();
  TileT<Scalar> x(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (l(j, j) == Scalar(0)) throw Error(ErrorKind::Numerical, "trsm: zero diagonal");
    for (Eigen::Index r = 0; r < m; ++r) {
      Scalar s = a(r, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= x(r, k) * l(j, k);
      x(r, j) = s / l(j, j);
    }
  }
  return x;
}

/// c - a * b^T with plain loops.
template <typename Scalar>
TileT<Scalar> gemm(const TileT<Scalar>& c, const TileT<Scalar>& a, const TileT<Scalar>& b) {
  if (a.rows() != c.rows() || b.rows() != c.cols() || a.cols() != b.cols()) {
    throw Error(ErrorKind::Numerical, "gemm: shape mismatch");
  }
  TileT<Scalar> out = c;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      Scalar s = Scalar(0);
      for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(i, k) * b(j, k);
      out(i, j) -= s;
    }
  }
  return out;
}

/// a - l * l^T.
template <typename Scalar>
TileT<Scalar> syrk(const TileT<Scalar>& a, const TileT<Scalar>& l) {
  return gemm(a, l, l);
}

/// Square matrix stored as a grid of tiles; edge tiles may be ragged.
struct TileMatrix {
  Eigen::Index n = 0;
  Eigen::Index b = 0;
  std::vector<Tile> tiles;  // T x T, row-major over tile coordinates

  Eigen::Index grid() const { return b == 0 ? 0 : (n + b - 1) / b; }
  Tile& at(Eigen::Index i, Eigen::Index j) { return tiles[static_cast<std::size_t>(i * grid() + j)]; }
  const Tile& at(Eigen::Index i, Eigen::Index j) const { return tiles[static_cast<std::size_t>(i * grid() + j)]; }

  static TileMatrix split(const Tile& dense, Eigen::Index b);
  Tile assemble() const;
};

/// A = (B + B^T) + n*I with B(i,j) ~ U[0,1) drawn row-major from
/// Xoshiro256(seed).
Tile generate_input(Eigen::Index n, std::uint64_t seed);

/// T + T(T-1) + T(T-1)(T-2)/6.
std::uint64_t task_count(std::uint64_t t);

Value encode_tile(const Tile& t);
Tile decode_tile(const Value& v);

/// FNV-1a 64 over the little-endian bytes of every entry, row-major.
std::string matrix_hash(const Tile& m);

/// ||L L^T - A||_F / ||A||_F.
double reconstruction_error(const Tile& l, const Tile& a);

struct Config {
  Eigen::Index n = 256;
  Eigen::Index b = 64;
  std::uint64_t seed = 0;
};

/// Identity of one kernel invocation in the tiled algorithm.
struct TaskLabel {
  std::string kind;  // potrf | trsm | syrk | gemm
  int i = 0, j = 0, k = 0;
  friend auto operator<=>(const TaskLabel&, const TaskLabel&) = default;
};

struct Result {
  Tile a;
  Tile l;
  std::uint64_t tasks = 0;
  std::map<std::string, TaskLabel> labels;  // task id -> kernel invocation
};

/// Submits the right-looking algorithm, waits for it and assembles L.
/// Rethrows the first failed task's error.
Result run_cholesky(Engine& engine, const Config& cfg);

/// Expected parents of every kernel invocation for a T x T grid.
std::map<TaskLabel, std::vector<TaskLabel>> expected_dag(int t);

void register_tasks(TaskRegistry& r);
AppInfo app_info();

}  // namespace tapsb::cholesky
