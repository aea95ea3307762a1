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

// Shared fixtures and naive reference implementations for tests. The
// references are written directly from the definitions with plain loops and
// share no code with the library.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "contam/data_model.hpp"

namespace contam::testing {

inline std::vector<std::string> make_ids(std::size_t n, const std::string& prefix = "x") {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

inline EmbeddingMatrix random_embeddings(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n * d);
  for (double& x : v) x = nd(gen);
  return EmbeddingMatrix(n, d, std::move(v), make_ids(n));
}

// `base` nudged by `scale` times Gaussian noise.
inline EmbeddingMatrix perturbed(const EmbeddingMatrix& base, double scale, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v = base.values();
  for (double& x : v) x += scale * nd(gen);
  return EmbeddingMatrix(base.n(), base.d(), std::move(v), base.ids());
}

inline std::vector<std::vector<double>> normalized_rows(const EmbeddingMatrix& m) {
  std::vector<std::vector<double>> rows(m.n(), std::vector<double>(m.d()));
  for (std::size_t i = 0; i < m.n(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.d(); ++k) s += m(i, k) * m(i, k);
    for (std::size_t k = 0; k < m.d(); ++k) rows[i][k] = m(i, k) / std::sqrt(s);
  }
  return rows;
}

inline std::vector<std::vector<double>> naive_sq_dists(const EmbeddingMatrix& m) {
  const auto z = normalized_rows(m);
  std::vector<std::vector<double>> out(m.n(), std::vector<double>(m.n(), 0.0));
  for (std::size_t i = 0; i < m.n(); ++i) {
    for (std::size_t j = 0; j < m.n(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < m.d(); ++k) s += (z[i][k] - z[j][k]) * (z[i][k] - z[j][k]);
      out[i][j] = s;
    }
  }
  return out;
}

// Divergence of rbf kernels at bandwidth gamma, straight from the definition.
inline double naive_rbf_divergence(const EmbeddingMatrix& before, const EmbeddingMatrix& after,
                                   double gamma) {
  const auto u = naive_sq_dists(before);
  const auto v = naive_sq_dists(after);
  long double mass = 0.0L, raw = 0.0L;
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (std::size_t j = 0; j < u.size(); ++j) {
      const long double p = std::exp(-gamma * u[i][j]);
      const long double q = std::exp(-gamma * v[i][j]);
      mass += p;
      raw += std::fabs(p * std::log(p / q));
    }
  }
  return static_cast<double>(raw / std::sqrt(mass));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("contam_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace contam::testing
