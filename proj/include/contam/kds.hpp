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

// Kernel Divergence Score.
//
// With Phi the kernel of the embeddings before fine-tuning and Phi' the kernel
// after it,
//
//   divergence = (1/E) * sum_{i,j} | Phi_ij * log(Phi_ij / Phi'_ij) |
//   E          = sqrt( sum_{i,j} Phi_ij )
//   score      = -divergence
//
// Both sums run over all n^2 entries including the diagonal. For the rbf
// kernel at gamma = 1 each term equals exp(-u_ij) * |u'_ij - u_ij| with u the
// squared distance, which kds_decomposed evaluates directly.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contam/data_model.hpp"
#include "contam/error.hpp"
#include "contam/kernel.hpp"
#include "contam/parallel.hpp"

namespace contam {

struct KdsResult {
  double score = 0.0;
  double divergence = 0.0;
  double normalizer_e = 1.0;
  std::optional<double> gamma_used;
  KernelKind kind = KernelKind::kRbf;
};

struct DivergenceTerms {
  double divergence = 0.0;
  double normalizer_e = 0.0;
};

struct DecompositionMatrices {
  Matrix gate;     // exp(-u), the before kernel at gamma = 1
  Matrix delta;    // |u' - u|
  Matrix product;  // gate * delta, elementwise
};

enum class AblationMode { kNoGate, kNoFinetune };

inline AblationMode parse_ablation_mode(std::string_view s) {
  if (s == "no_gate") return AblationMode::kNoGate;
  if (s == "no_finetune") return AblationMode::kNoFinetune;
  throw ConfigError("unknown ablation mode '" + std::string(s) + "'");
}

inline std::string_view to_string(AblationMode m) {
  return m == AblationMode::kNoGate ? "no_gate" : "no_finetune";
}

namespace detail {

// Sums f(i, j) over all n^2 entries: per-row partials (possibly in parallel),
// then rows in order. The result does not depend on the worker count.
template <typename F>
double ordered_sum(std::size_t n, unsigned threads, F&& f) {
  std::vector<double> rows(n, 0.0);
  parallel_for(n, threads, [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += f(i, j);
    rows[i] = s;
  });
  double total = 0.0;
  for (double r : rows) total += r;
  return total;
}

}  // namespace detail

inline DivergenceTerms kernel_divergence(const KernelMatrix& before,
                                         const KernelMatrix& after,
                                         unsigned threads = 1) {
  const std::size_t n = before.n();
  if (after.n() != n) {
    throw DataError("kernel matrices differ in size (" + std::to_string(n) +
                    " vs " + std::to_string(after.n()) + ")");
  }
  if (before.kind != after.kind) throw DataError("kernel matrices differ in kind");
  if (before.kind == KernelKind::kDot) {
    throw DataError("dot-product kernels can be negative; use the MSE form");
  }
  const auto& p = before.values.data();
  const auto& q = after.values.data();
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (!(p[t] > 0.0) || !(q[t] > 0.0)) {
      throw DataError("kernel entry (" + std::to_string(t / n) + ", " +
                      std::to_string(t % n) + ") is not strictly positive");
    }
  }
  const double mass = detail::ordered_sum(
      n, threads, [&](std::size_t i, std::size_t j) { return p[i * n + j]; });
  const double raw = detail::ordered_sum(n, threads, [&](std::size_t i, std::size_t j) {
    const double a = p[i * n + j];
    const double b = q[i * n + j];
    return std::abs(a * std::log(a / b));
  });
  const double e = std::sqrt(mass);
  return {raw / e, e};
}

inline double kernel_mse(const KernelMatrix& before, const KernelMatrix& after,
                         unsigned threads = 1) {
  const std::size_t n = before.n();
  if (after.n() != n) throw DataError("kernel matrices differ in size");
  const auto& p = before.values.data();
  const auto& q = after.values.data();
  const double sse = detail::ordered_sum(n, threads, [&](std::size_t i, std::size_t j) {
    const double diff = p[i * n + j] - q[i * n + j];
    return diff * diff;
  });
  return sse / static_cast<double>(n * n);
}

// Normalized before/after embeddings of one dataset with lazily computed
// distance and Gram matrices, so several scorers can share them. Not
// thread-safe; use one instance per worker.
class PairGeometry {
 public:
  PairGeometry(const EmbeddingMatrix& before, const EmbeddingMatrix& after,
               std::size_t block = kDefaultBlock, unsigned threads = 1)
      : before_(l2_normalize_rows(before)),
        after_(l2_normalize_rows(align_rows(before, after))),
        block_(block),
        threads_(threads) {
    if (before_.n() < 2) throw DataError("scoring needs at least 2 samples");
    if (block_ == 0) throw ConfigError("block size must be positive");
  }

  std::size_t n() const noexcept { return before_.n(); }
  unsigned threads() const noexcept { return threads_; }
  const EmbeddingMatrix& before() const noexcept { return before_; }
  const EmbeddingMatrix& after() const noexcept { return after_; }

  const Matrix& sq_dists_before() {
    if (!d_before_) d_before_ = pairwise_sq_dists(before_, block_, threads_);
    return *d_before_;
  }
  const Matrix& sq_dists_after() {
    if (!d_after_) d_after_ = pairwise_sq_dists(after_, block_, threads_);
    return *d_after_;
  }
  const Matrix& gram_before() {
    if (!g_before_) g_before_ = gram(before_, block_, threads_);
    return *g_before_;
  }
  const Matrix& gram_after() {
    if (!g_after_) g_after_ = gram(after_, block_, threads_);
    return *g_after_;
  }

  // gamma for the rbf kernels: fixed, or the median heuristic on the BEFORE
  // embeddings (shared by both kernels).
  double gamma(const BandwidthPolicy& policy) {
    return resolve_gamma(policy, sq_dists_before());
  }

  std::pair<KernelMatrix, KernelMatrix> kernels(KernelKind kind,
                                                const BandwidthPolicy& policy) {
    switch (kind) {
      case KernelKind::kRbf: {
        const double g = gamma(policy);
        return {kernel_from_sq_dists(sq_dists_before(), kind, g),
                kernel_from_sq_dists(sq_dists_after(), kind, g)};
      }
      case KernelKind::kEuclidean:
        return {kernel_from_sq_dists(sq_dists_before(), kind),
                kernel_from_sq_dists(sq_dists_after(), kind)};
      case KernelKind::kCosinePlusOne:
      case KernelKind::kDot:
        return {kernel_from_gram(gram_before(), kind),
                kernel_from_gram(gram_after(), kind)};
    }
    throw ConfigError("unknown kernel kind");
  }

 private:
  EmbeddingMatrix before_;
  EmbeddingMatrix after_;
  std::size_t block_;
  unsigned threads_;
  std::optional<Matrix> d_before_, d_after_, g_before_, g_after_;
};

inline KdsResult kds(PairGeometry& geom, const BandwidthPolicy& policy,
                     KernelKind kind = KernelKind::kRbf) {
  auto [before, after] = geom.kernels(kind, policy);
  KdsResult r;
  r.kind = kind;
  r.gamma_used = before.gamma;
  if (kind == KernelKind::kDot) {
    r.divergence = kernel_mse(before, after, geom.threads());
    r.normalizer_e = 1.0;
  } else {
    const auto terms = kernel_divergence(before, after, geom.threads());
    r.divergence = terms.divergence;
    r.normalizer_e = terms.normalizer_e;
  }
  r.score = -r.divergence;
  return r;
}

// Rows of `after` are matched to `before` by sample id.
inline KdsResult kds(const EmbeddingMatrix& before, const EmbeddingMatrix& after,
                     const BandwidthPolicy& policy = BandwidthPolicy::median(),
                     KernelKind kind = KernelKind::kRbf,
                     std::size_t block = kDefaultBlock, unsigned threads = 1) {
  PairGeometry geom(before, after, block, threads);
  return kds(geom, policy, kind);
}

struct DecomposedKds {
  double score = 0.0;
  DecompositionMatrices matrices;
};

// Soft-gate x distance-change form at gamma = 1.
inline DecomposedKds kds_decomposed(PairGeometry& geom) {
  const Matrix& u = geom.sq_dists_before();
  const Matrix& v = geom.sq_dists_after();
  const std::size_t n = geom.n();
  DecomposedKds out;
  out.matrices.gate = kernel_from_sq_dists(u, KernelKind::kRbf, 1.0).values;
  out.matrices.delta = Matrix(n);
  out.matrices.product = Matrix(n);
  for (std::size_t t = 0; t < n * n; ++t) {
    const double delta = std::abs(v.data()[t] - u.data()[t]);
    out.matrices.delta.data()[t] = delta;
    out.matrices.product.data()[t] = out.matrices.gate.data()[t] * delta;
  }
  const auto& gate = out.matrices.gate.data();
  const auto& prod = out.matrices.product.data();
  const double mass = detail::ordered_sum(
      n, geom.threads(), [&](std::size_t i, std::size_t j) { return gate[i * n + j]; });
  const double raw = detail::ordered_sum(
      n, geom.threads(), [&](std::size_t i, std::size_t j) { return prod[i * n + j]; });
  out.score = -raw / std::sqrt(mass);
  return out;
}

inline DecomposedKds kds_decomposed(const EmbeddingMatrix& before,
                                    const EmbeddingMatrix& after,
                                    std::size_t block = kDefaultBlock) {
  PairGeometry geom(before, after, block);
  return kds_decomposed(geom);
}

// no_gate:     -(1/n^2) sum |u' - u|
// no_finetune: +(1/n^2) sum Phi(Z)   (rbf, gamma from `policy`)
inline double kds_ablation(PairGeometry& geom, AblationMode mode,
                           const BandwidthPolicy& policy = BandwidthPolicy::median()) {
  const std::size_t n = geom.n();
  const double pairs = static_cast<double>(n * n);
  if (mode == AblationMode::kNoGate) {
    const auto& u = geom.sq_dists_before().data();
    const auto& v = geom.sq_dists_after().data();
    return -detail::ordered_sum(n, geom.threads(), [&](std::size_t i, std::size_t j) {
      return std::abs(v[i * n + j] - u[i * n + j]);
    }) / pairs;
  }
  const KernelMatrix k =
      kernel_from_sq_dists(geom.sq_dists_before(), KernelKind::kRbf, geom.gamma(policy));
  const auto& p = k.values.data();
  return detail::ordered_sum(
             n, geom.threads(), [&](std::size_t i, std::size_t j) { return p[i * n + j]; }) /
         pairs;
}

inline double kds_ablation(const EmbeddingMatrix& before, const EmbeddingMatrix& after,
                           AblationMode mode,
                           const BandwidthPolicy& policy = BandwidthPolicy::median(),
                           std::size_t block = kDefaultBlock) {
  PairGeometry geom(before, after, block);
  return kds_ablation(geom, mode, policy);
}

// ---------------------------------------------------------------------------
// Reports

// Writes `m` as CSV with a header row of ids and one labelled row per sample.
inline void write_matrix_csv(const Matrix& m, std::span<const std::string> ids,
                             const std::filesystem::path& path) {
  if (ids.size() != m.n()) throw DataError("id count does not match matrix size");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "id";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < m.n(); ++i) {
    out << ids[i];
    for (std::size_t j = 0; j < m.n(); ++j) out << ',' << m(i, j);
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

// gate.csv, delta.csv and product.csv in `dir`.
inline void write_decomposition_csv(const DecompositionMatrices& m,
                                    std::span<const std::string> ids,
                                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_matrix_csv(m.gate, ids, dir / "gate.csv");
  write_matrix_csv(m.delta, ids, dir / "delta.csv");
  write_matrix_csv(m.product, ids, dir / "product.csv");
}

enum class PairType { kSeenSeen = 0, kSeenUnseen = 1, kUnseenUnseen = 2 };

struct PairShiftStats {
  std::size_t pairs = 0;
  double mean_change = 0.0;      // mean of u' - u
  double mean_abs_change = 0.0;  // mean of |u' - u|
  std::vector<std::size_t> histogram;  // counts of u' - u per bin
};

struct PairShiftReport {
  double bin_lo = 0.0;
  double bin_hi = 0.0;
  std::array<PairShiftStats, 3> by_type;  // indexed by PairType

  const PairShiftStats& operator[](PairType t) const {
    return by_type[static_cast<std::size_t>(t)];
  }
};

// Change in squared distance for each off-diagonal pair, grouped by the
// membership labels of the two samples. Pairs involving an unknown label are
// skipped. Values outside [lo, hi] are counted in the edge bins.
inline PairShiftReport pair_shift_report(PairGeometry& geom,
                                         std::span<const Label> labels,
                                         std::size_t bins = 40, double lo = -1.0,
                                         double hi = 1.0) {
  const std::size_t n = geom.n();
  if (labels.size() != n) throw DataError("label count does not match sample count");
  if (bins == 0 || !(hi > lo)) throw ConfigError("invalid histogram range");
  const Matrix& u = geom.sq_dists_before();
  const Matrix& v = geom.sq_dists_after();
  PairShiftReport rep;
  rep.bin_lo = lo;
  rep.bin_hi = hi;
  for (auto& s : rep.by_type) s.histogram.assign(bins, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == Label::kUnknown) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (labels[j] == Label::kUnknown) continue;
      const int unseen = (labels[i] == Label::kUnseen) + (labels[j] == Label::kUnseen);
      auto& s = rep.by_type[static_cast<std::size_t>(unseen)];
      const double change = v(i, j) - u(i, j);
      ++s.pairs;
      s.mean_change += change;
      s.mean_abs_change += std::abs(change);
      const double pos = (change - lo) / (hi - lo) * static_cast<double>(bins);
      const auto bin = static_cast<std::size_t>(
          std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
      ++s.histogram[bin];
    }
  }
  for (auto& s : rep.by_type) {
    if (s.pairs > 0) {
      s.mean_change /= static_cast<double>(s.pairs);
      s.mean_abs_change /= static_cast<double>(s.pairs);
    }
  }
  return rep;
}

}  // namespace contam
