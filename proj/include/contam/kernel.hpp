// Copyright 2026 The contam Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Pairwise distances, Gram matrices and kernel matrices over sample
// embeddings. Quadratic-size matrices are filled tile by tile; every entry is
// computed by the same fixed-order inner loop whatever the tile size, so the
// result does not depend on `block` or on the worker count.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contam/data_model.hpp"
#include "contam/error.hpp"
#include "contam/parallel.hpp"

namespace contam {

// Square row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t n() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

enum class KernelKind { kRbf, kEuclidean, kCosinePlusOne, kDot };

inline std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::kRbf: return "rbf";
    case KernelKind::kEuclidean: return "euclidean";
    case KernelKind::kCosinePlusOne: return "cosine_plus_one";
    case KernelKind::kDot: return "dot";
  }
  return "rbf";
}

// Accepts the long names and the CLI short forms (euclid, cos1).
inline KernelKind parse_kernel_kind(std::string_view s) {
  if (s == "rbf") return KernelKind::kRbf;
  if (s == "euclidean" || s == "euclid") return KernelKind::kEuclidean;
  if (s == "cosine_plus_one" || s == "cos1") return KernelKind::kCosinePlusOne;
  if (s == "dot") return KernelKind::kDot;
  throw ConfigError("unknown kernel kind '" + std::string(s) + "'");
}

struct BandwidthPolicy {
  enum class Mode { kMedian, kFixed };
  Mode mode = Mode::kMedian;
  double gamma = 0.0;  // fixed mode only

  static BandwidthPolicy median() { return {}; }
  static BandwidthPolicy fixed(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw ConfigError("fixed bandwidth requires gamma > 0, got " +
                        std::to_string(gamma));
    }
    return {Mode::kFixed, gamma};
  }
};

struct KernelMatrix {
  KernelKind kind = KernelKind::kRbf;
  Matrix values;
  std::optional<double> gamma;  // rbf only

  std::size_t n() const noexcept { return values.n(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

// Floor applied to the nonnegative kernel kinds so log(Phi) stays finite.
inline constexpr double kKernelFloor = 1e-12;
inline constexpr std::size_t kDefaultBlock = 64;

inline EmbeddingMatrix l2_normalize_rows(const EmbeddingMatrix& m) {
  std::vector<double> out(m.values());
  const std::size_t d = m.d();
  for (std::size_t i = 0; i < m.n(); ++i) {
    double* row = out.data() + i * d;
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += row[k] * row[k];
    if (sq == 0.0) {
      throw DataError("cannot normalize all-zero embedding row for sample '" +
                      m.ids()[i] + "'");
    }
    const double norm = std::sqrt(sq);
    for (std::size_t k = 0; k < d; ++k) row[k] /= norm;
  }
  return EmbeddingMatrix(m.n(), d, std::move(out), m.ids());
}

namespace detail {

// Fills the upper triangle tile by tile with entry(i, j), mirrors it, and
// sets the diagonal with diag(i). Tile rows are distributed over workers.
template <typename Entry, typename Diag>
Matrix fill_symmetric_tiled(std::size_t n, std::size_t block, unsigned threads,
                            Entry&& entry, Diag&& diag) {
  if (block == 0) throw ConfigError("block size must be positive");
  Matrix out(n);
  const std::size_t tiles = (n + block - 1) / block;
  parallel_for(tiles, threads, [&](std::size_t ti) {
    const std::size_t i0 = ti * block;
    const std::size_t i1 = std::min(n, i0 + block);
    for (std::size_t tj = ti; tj < tiles; ++tj) {
      const std::size_t j0 = tj * block;
      const std::size_t j1 = std::min(n, j0 + block);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = std::max(j0, i + 1); j < j1; ++j) {
          out(i, j) = entry(i, j);
        }
      }
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    out(i, i) = diag(i);
    for (std::size_t j = i + 1; j < n; ++j) out(j, i) = out(i, j);
  }
  return out;
}

}  // namespace detail

// D[i][j] = ||z_i - z_j||^2 with an exact zero diagonal.
inline Matrix pairwise_sq_dists(const EmbeddingMatrix& z,
                                std::size_t block = kDefaultBlock,
                                unsigned threads = 1) {
  const std::size_t d = z.d();
  const double* v = z.values().data();
  return detail::fill_symmetric_tiled(
      z.n(), block, threads,
      [&](std::size_t i, std::size_t j) {
        const double* a = v + i * d;
        const double* b = v + j * d;
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = a[k] - b[k];
          s += diff * diff;
        }
        return s;
      },
      [](std::size_t) { return 0.0; });
}

// G[i][j] = <z_i, z_j>.
inline Matrix gram(const EmbeddingMatrix& z, std::size_t block = kDefaultBlock,
                   unsigned threads = 1) {
  const std::size_t d = z.d();
  const double* v = z.values().data();
  auto dot = [=](std::size_t i, std::size_t j) {
    const double* a = v + i * d;
    const double* b = v + j * d;
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += a[k] * b[k];
    return s;
  };
  return detail::fill_symmetric_tiled(z.n(), block, threads, dot,
                                      [&](std::size_t i) { return dot(i, i); });
}

// gamma = 1 / (lower median of the n(n-1)/2 off-diagonal squared distances).
inline double median_bandwidth_from_sq_dists(const Matrix& sq_dists) {
  const std::size_t n = sq_dists.n();
  if (n < 2) throw DataError("median heuristic needs at least 2 samples");
  std::vector<double> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.push_back(sq_dists(i, j));
  }
  const auto mid = pairs.begin() + static_cast<std::ptrdiff_t>((pairs.size() - 1) / 2);
  std::nth_element(pairs.begin(), mid, pairs.end());
  const double median = *mid;
  if (!(median > 0.0)) {
    const bool any_positive =
        std::any_of(pairs.begin(), pairs.end(), [](double u) { return u > 0.0; });
    throw DataError(any_positive
                        ? "median pairwise squared distance is 0 (too many "
                          "duplicate samples); median bandwidth undefined"
                        : "all pairwise distances are zero (degenerate dataset)");
  }
  return 1.0 / median;
}

inline double median_bandwidth(const EmbeddingMatrix& z,
                               std::size_t block = kDefaultBlock,
                               unsigned threads = 1) {
  if (z.n() < 2) throw DataError("median heuristic needs at least 2 samples");
  return median_bandwidth_from_sq_dists(pairwise_sq_dists(z, block, threads));
}

inline double resolve_gamma(const BandwidthPolicy& policy, const Matrix& sq_dists) {
  if (policy.mode == BandwidthPolicy::Mode::kFixed) {
    if (!(policy.gamma > 0.0)) throw ConfigError("fixed bandwidth requires gamma > 0");
    return policy.gamma;
  }
  return median_bandwidth_from_sq_dists(sq_dists);
}

// rbf: exp(-gamma * u), euclidean: sqrt(u). Both floored at kKernelFloor.
inline KernelMatrix kernel_from_sq_dists(const Matrix& sq_dists, KernelKind kind,
                                         double gamma = 1.0) {
  KernelMatrix k{kind, Matrix(sq_dists.n()), std::nullopt};
  auto& out = k.values.data();
  const auto& in = sq_dists.data();
  switch (kind) {
    case KernelKind::kRbf:
      if (!(gamma > 0.0)) throw ConfigError("rbf kernel requires gamma > 0");
      k.gamma = gamma;
      for (std::size_t t = 0; t < in.size(); ++t) {
        out[t] = std::max(std::exp(-gamma * in[t]), kKernelFloor);
      }
      break;
    case KernelKind::kEuclidean:
      for (std::size_t t = 0; t < in.size(); ++t) {
        out[t] = std::max(std::sqrt(in[t]), kKernelFloor);
      }
      break;
    default:
      throw ConfigError("kernel kind '" + std::string(to_string(kind)) +
                        "' is built from a Gram matrix, not distances");
  }
  return k;
}

// cosine_plus_one: G + 1 floored at kKernelFloor; dot: G unchanged.
inline KernelMatrix kernel_from_gram(const Matrix& g, KernelKind kind) {
  KernelMatrix k{kind, g, std::nullopt};
  if (kind == KernelKind::kCosinePlusOne) {
    for (double& x : k.values.data()) x = std::max(x + 1.0, kKernelFloor);
  } else if (kind != KernelKind::kDot) {
    throw ConfigError("kernel kind '" + std::string(to_string(kind)) +
                      "' is built from distances, not a Gram matrix");
  }
  return k;
}

// `z` must already be row-normalized for rbf, cosine_plus_one and dot.
inline KernelMatrix build_kernel(const EmbeddingMatrix& z, KernelKind kind,
                                 const BandwidthPolicy& policy,
                                 std::size_t block = kDefaultBlock,
                                 unsigned threads = 1) {
  if (z.n() < 2) throw DataError("kernel matrix needs at least 2 samples");
  if (policy.mode == BandwidthPolicy::Mode::kFixed && !(policy.gamma > 0.0)) {
    throw ConfigError("fixed bandwidth requires gamma > 0");
  }
  switch (kind) {
    case KernelKind::kRbf: {
      const Matrix d = pairwise_sq_dists(z, block, threads);
      return kernel_from_sq_dists(d, kind, resolve_gamma(policy, d));
    }
    case KernelKind::kEuclidean:
      return kernel_from_sq_dists(pairwise_sq_dists(z, block, threads), kind);
    case KernelKind::kCosinePlusOne:
    case KernelKind::kDot:
      return kernel_from_gram(gram(z, block, threads), kind);
  }
  throw ConfigError("unknown kernel kind");
}

}  // namespace contam
