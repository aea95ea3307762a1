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

// Domain types and file formats shared by the scoring modules.
//
// KDSE binary embedding file (all integers little-endian):
//
//   offset 0   "KDSE"            4 bytes
//   offset 4   version = 1       u32
//   offset 8   n                 u64
//   offset 16  d                 u64
//   offset 24  n id blocks       u32 byte length + UTF-8 bytes each
//   ...        n*d payload       f32, row-major
//
// Values are promoted to double in memory. JSONL files (manifest, log-probs,
// shards) hold one JSON object per line; unknown fields are ignored.

#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "contam/error.hpp"
#include "json.hpp"

namespace contam {

// ---------------------------------------------------------------------------
// Types

enum class Label { kSeen, kUnseen, kUnknown };

inline std::string_view to_string(Label label) {
  switch (label) {
    case Label::kSeen: return "seen";
    case Label::kUnseen: return "unseen";
    case Label::kUnknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "seen") return Label::kSeen;
  if (s == "unseen") return Label::kUnseen;
  if (s == "unknown") return Label::kUnknown;
  return std::nullopt;
}

// n x d row-major matrix of sample embeddings with one id per row.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;

  EmbeddingMatrix(std::size_t n, std::size_t d, std::vector<double> values,
                  std::vector<std::string> ids)
      : n_(n), d_(d), values_(std::move(values)), ids_(std::move(ids)) {
    if (n_ == 0) throw DataError("embedding matrix needs at least one row");
    if (d_ == 0) throw DataError("embedding dimension must be >= 1");
    if (values_.size() != n_ * d_) {
      throw DataError("embedding payload has " + std::to_string(values_.size()) +
                      " values, expected n*d = " + std::to_string(n_ * d_));
    }
    if (ids_.size() != n_) {
      throw DataError("embedding id count " + std::to_string(ids_.size()) +
                      " does not match n = " + std::to_string(n_));
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
      if (!std::isfinite(values_[k])) {
        throw DataError("non-finite embedding entry at row " +
                        std::to_string(k / d_) + " (id '" + ids_[k / d_] +
                        "'), column " + std::to_string(k % d_));
      }
    }
    index_.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      if (!index_.emplace(ids_[i], i).second) {
        throw DataError("duplicate embedding id '" + ids_[i] + "'");
      }
    }
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t d() const noexcept { return d_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * d_, d_};
  }
  double operator()(std::size_t i, std::size_t j) const {
    return values_[i * d_ + j];
  }

  std::optional<std::size_t> index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Rows for `ids`, in that order.
  EmbeddingMatrix select(std::span<const std::string> ids) const {
    std::vector<double> out;
    out.reserve(ids.size() * d_);
    for (const auto& id : ids) {
      auto i = index_of(id);
      if (!i) throw DataError("sample id '" + id + "' not present in embeddings");
      auto r = row(*i);
      out.insert(out.end(), r.begin(), r.end());
    }
    return EmbeddingMatrix(ids.size(), d_, std::move(out),
                           std::vector<std::string>(ids.begin(), ids.end()));
  }

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.n_ == b.n_ && a.d_ == b.d_ && a.ids_ == b.ids_ &&
           a.values_ == b.values_;
  }

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> values_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Reorders `other` so its rows follow `reference`'s id order. Before/after
// pairs are matched by id; differing id sets are an error.
inline EmbeddingMatrix align_rows(const EmbeddingMatrix& reference,
                                  const EmbeddingMatrix& other) {
  if (reference.n() != other.n()) {
    throw DataError("before/after embeddings have different sample counts (" +
                    std::to_string(reference.n()) + " vs " +
                    std::to_string(other.n()) + ")");
  }
  if (reference.d() != other.d()) {
    throw DataError("before/after embeddings have different dimensions");
  }
  if (reference.ids() == other.ids()) return other;
  for (const auto& id : reference.ids()) {
    if (!other.index_of(id)) {
      throw DataError("sample id '" + id + "' missing from after embeddings");
    }
  }
  return other.select(reference.ids());
}

struct ManifestEntry {
  std::string id;
  Label label = Label::kUnknown;
  std::optional<std::string> text;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

class SampleManifest {
 public:
  SampleManifest() = default;
  explicit SampleManifest(std::vector<ManifestEntry> entries)
      : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!index_.emplace(entries_[i].id, i).second) {
        throw DataError("duplicate manifest id '" + entries_[i].id + "'");
      }
    }
  }

  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  const ManifestEntry* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  std::vector<std::string> ids_with(Label label) const {
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      if (e.label == label) out.push_back(e.id);
    }
    return out;
  }

  friend bool operator==(const SampleManifest& a, const SampleManifest& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<ManifestEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TokenLogProbRecord {
  std::string id;
  std::vector<double> logprobs;
  std::optional<std::vector<double>> mu;
  std::optional<std::vector<double>> sigma;

  friend bool operator==(const TokenLogProbRecord&,
                         const TokenLogProbRecord&) = default;
};

// Throws DataError if `rec` breaks a record invariant.
inline void validate(const TokenLogProbRecord& rec) {
  const std::string where = "log-prob record '" + rec.id + "'";
  if (rec.logprobs.empty()) throw DataError(where + " has no tokens");
  for (double lp : rec.logprobs) {
    if (!std::isfinite(lp)) throw DataError(where + " has a non-finite log-prob");
    if (lp > 0.0) throw DataError(where + " has a positive log-prob");
  }
  if (rec.mu) {
    if (rec.mu->size() != rec.logprobs.size()) {
      throw DataError(where + ": mu length differs from logprobs length");
    }
    for (double m : *rec.mu) {
      if (!std::isfinite(m)) throw DataError(where + " has a non-finite mu");
    }
  }
  if (rec.sigma) {
    if (rec.sigma->size() != rec.logprobs.size()) {
      throw DataError(where + ": sigma length differs from logprobs length");
    }
    for (double s : *rec.sigma) {
      if (!std::isfinite(s)) throw DataError(where + " has a non-finite sigma");
      if (s <= 0.0) throw DataError(where + " has sigma <= 0");
    }
  }
}

class ContaminationRate {
 public:
  constexpr ContaminationRate() = default;
  explicit ContaminationRate(double lambda) : lambda_(lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw ConfigError("contamination rate must lie in [0, 1], got " +
                        std::to_string(lambda));
    }
  }
  constexpr double value() const noexcept { return lambda_; }

 private:
  double lambda_ = 0.0;
};

struct ShardLikelihoodRecord {
  std::int64_t shard_index = 0;
  double canonical_loglik = 0.0;
  std::vector<double> permuted_logliks;
  // Member sample ids, when the producer records them (used to restrict
  // shards to an experiment subset).
  std::optional<std::vector<std::string>> ids;

  friend bool operator==(const ShardLikelihoodRecord&,
                         const ShardLikelihoodRecord&) = default;
};

inline void validate(const ShardLikelihoodRecord& rec) {
  const std::string where = "shard " + std::to_string(rec.shard_index);
  if (rec.shard_index < 0) throw DataError(where + ": negative shard index");
  if (!std::isfinite(rec.canonical_loglik)) {
    throw DataError(where + ": non-finite canonical log-likelihood");
  }
  if (rec.permuted_logliks.empty()) {
    throw DataError(where + ": empty permuted log-likelihood list");
  }
  for (double v : rec.permuted_logliks) {
    if (!std::isfinite(v)) throw DataError(where + ": non-finite permuted value");
  }
}

// ---------------------------------------------------------------------------
// KDSE binary format

inline constexpr std::uint32_t kKdseVersion = 1;
inline constexpr std::size_t kKdseHeaderBytes = 24;

namespace detail {

inline void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::byte((v >> (8 * i)) & 0xffu));
}

inline void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(std::byte((v >> (8 * i)) & 0xffu));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t count, const char* what) const {
    if (remaining() < count) {
      throw FormatError("KDSE file truncated at byte " + std::to_string(pos_) +
                        " while reading " + what + " (need " +
                        std::to_string(count) + " bytes, have " +
                        std::to_string(remaining()) + ")");
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::string str(std::size_t len, const char* what) {
    need(len, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) bytes[i] = std::byte(raw[i]);
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace detail

// Serializes to KDSE. Values are narrowed to f32.
inline std::vector<std::byte> encode_embeddings(const EmbeddingMatrix& m) {
  std::vector<std::byte> out;
  out.reserve(kKdseHeaderBytes + m.n() * (8 + 4 * m.d()));
  for (char c : std::string_view("KDSE")) out.push_back(std::byte(c));
  detail::put_u32(out, kKdseVersion);
  detail::put_u64(out, m.n());
  detail::put_u64(out, m.d());
  for (const auto& id : m.ids()) {
    if (id.size() > UINT32_MAX) throw DataError("sample id too long");
    detail::put_u32(out, static_cast<std::uint32_t>(id.size()));
    for (char c : id) out.push_back(std::byte(c));
  }
  for (std::size_t k = 0; k < m.values().size(); ++k) {
    const double v = m.values()[k];
    const float f = static_cast<float>(v);
    if (!std::isfinite(v) || !std::isfinite(f)) {
      throw DataError("embedding entry at row " + std::to_string(k / m.d()) +
                      " is not representable as a finite f32");
    }
    detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline EmbeddingMatrix decode_embeddings(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  const std::string magic = r.str(4, "magic");
  if (magic != "KDSE") throw FormatError("bad magic at byte 0: expected 'KDSE'");
  const std::uint32_t version = r.u32("version");
  if (version != kKdseVersion) {
    throw FormatError("unsupported KDSE version " + std::to_string(version) +
                      " at byte 4");
  }
  const std::uint64_t n = r.u64("n");
  const std::uint64_t d = r.u64("d");
  if (n == 0 || d == 0) {
    throw FormatError("KDSE header declares an empty matrix (n=" +
                      std::to_string(n) + ", d=" + std::to_string(d) + ")");
  }
  // Every row needs at least 4 id-length bytes plus 4*d payload bytes.
  if (d > r.remaining() / 4 || n > r.remaining() / (4 + 4 * d)) {
    throw FormatError("KDSE header at byte 8 declares n=" + std::to_string(n) +
                      ", d=" + std::to_string(d) + " but only " +
                      std::to_string(r.remaining()) + " bytes follow");
  }
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t len = r.u32("id length");
    ids.push_back(r.str(len, "id"));
  }
  r.need(n * d * 4, "payload");
  const std::size_t payload_start = r.offset();
  std::vector<double> values(n * d);
  for (std::size_t k = 0; k < values.size(); ++k) {
    const float f = std::bit_cast<float>(r.u32("payload"));
    if (!std::isfinite(f)) {
      throw DataError("non-finite embedding entry at byte " +
                      std::to_string(payload_start + 4 * k));
    }
    values[k] = f;
  }
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) +
                      " trailing bytes after payload at byte " +
                      std::to_string(r.offset()));
  }
  return EmbeddingMatrix(n, d, std::move(values), std::move(ids));
}

inline EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return decode_embeddings(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.message());
  }
}

inline void write_embeddings(const EmbeddingMatrix& m,
                             const std::filesystem::path& path) {
  const auto bytes = encode_embeddings(m);
  detail::write_file(
      path, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                             bytes.size()));
}

// ---------------------------------------------------------------------------
// JSONL formats

namespace detail {

// Calls fn(json, line_number) for each non-blank line.
template <typename Fn>
void for_each_jsonl(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(source + ":" + std::to_string(line_no) +
                        ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) {
      throw FormatError(source + ":" + std::to_string(line_no) +
                        ": expected a JSON object");
    }
    try {
      fn(j, line_no);
    } catch (const FormatError& e) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": " + e.message());
    } catch (const DataError& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.message());
    }
  }
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing field '") + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline double as_number(const nlohmann::json& v, const char* key) {
  if (!v.is_number()) throw FormatError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

inline std::vector<double> as_number_list(const nlohmann::json& v, const char* key) {
  if (!v.is_array()) throw FormatError(std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(as_number(x, key));
  return out;
}

inline std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

}  // namespace detail

inline SampleManifest parse_manifest(std::istream& in,
                                     const std::string& source = "manifest") {
  std::vector<ManifestEntry> entries;
  std::unordered_set<std::string> seen;
  detail::for_each_jsonl(in, source, [&](const nlohmann::json& j, std::size_t) {
    ManifestEntry e;
    e.id = detail::require_string(j, "id");
    const std::string label = detail::require_string(j, "label");
    auto parsed = parse_label(label);
    if (!parsed) throw FormatError("unknown label '" + label + "'");
    e.label = *parsed;
    if (auto it = j.find("text"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) throw FormatError("field 'text' must be a string");
      e.text = it->get<std::string>();
    }
    if (!seen.insert(e.id).second) throw DataError("duplicate id '" + e.id + "'");
    entries.push_back(std::move(e));
  });
  return SampleManifest(std::move(entries));
}

inline std::vector<TokenLogProbRecord> parse_logprobs(
    std::istream& in, const std::string& source = "logprobs") {
  std::vector<TokenLogProbRecord> out;
  std::unordered_set<std::string> seen;
  detail::for_each_jsonl(in, source, [&](const nlohmann::json& j, std::size_t) {
    TokenLogProbRecord r;
    r.id = detail::require_string(j, "id");
    r.logprobs = detail::as_number_list(detail::require(j, "logprobs"), "logprobs");
    if (auto it = j.find("mu"); it != j.end() && !it->is_null()) {
      r.mu = detail::as_number_list(*it, "mu");
    }
    if (auto it = j.find("sigma"); it != j.end() && !it->is_null()) {
      r.sigma = detail::as_number_list(*it, "sigma");
    }
    validate(r);
    if (!seen.insert(r.id).second) throw DataError("duplicate id '" + r.id + "'");
    out.push_back(std::move(r));
  });
  return out;
}

inline std::vector<ShardLikelihoodRecord> parse_shards(
    std::istream& in, const std::string& source = "shards") {
  std::vector<ShardLikelihoodRecord> out;
  std::unordered_set<std::int64_t> seen;
  detail::for_each_jsonl(in, source, [&](const nlohmann::json& j, std::size_t) {
    ShardLikelihoodRecord r;
    const auto& shard = detail::require(j, "shard");
    if (!shard.is_number_integer()) throw FormatError("field 'shard' must be an integer");
    r.shard_index = shard.get<std::int64_t>();
    r.canonical_loglik = detail::as_number(detail::require(j, "canonical"), "canonical");
    r.permuted_logliks =
        detail::as_number_list(detail::require(j, "permuted"), "permuted");
    if (auto it = j.find("ids"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) throw FormatError("field 'ids' must be an array");
      std::vector<std::string> ids;
      for (const auto& x : *it) {
        if (!x.is_string()) throw FormatError("field 'ids' must hold strings");
        ids.push_back(x.get<std::string>());
      }
      r.ids = std::move(ids);
    }
    validate(r);
    if (!seen.insert(r.shard_index).second) {
      throw DataError("duplicate shard index " + std::to_string(r.shard_index));
    }
    out.push_back(std::move(r));
  });
  return out;
}

inline SampleManifest read_manifest(const std::filesystem::path& path) {
  auto in = detail::open_text(path);
  return parse_manifest(in, path.string());
}

inline std::vector<TokenLogProbRecord> read_logprobs(
    const std::filesystem::path& path) {
  auto in = detail::open_text(path);
  return parse_logprobs(in, path.string());
}

inline std::vector<ShardLikelihoodRecord> read_shards(
    const std::filesystem::path& path) {
  auto in = detail::open_text(path);
  return parse_shards(in, path.string());
}

inline std::string format_manifest(const SampleManifest& m) {
  std::string out;
  for (const auto& e : m.entries()) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["label"] = std::string(to_string(e.label));
    if (e.text) j["text"] = *e.text;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::string format_logprobs(std::span<const TokenLogProbRecord> recs) {
  std::string out;
  for (const auto& r : recs) {
    validate(r);
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["logprobs"] = r.logprobs;
    if (r.mu) j["mu"] = *r.mu;
    if (r.sigma) j["sigma"] = *r.sigma;
    out += j.dump() + "\n";
  }
  return out;
}

inline std::string format_shards(std::span<const ShardLikelihoodRecord> recs) {
  std::string out;
  for (const auto& r : recs) {
    validate(r);
    nlohmann::ordered_json j;
    j["shard"] = r.shard_index;
    j["canonical"] = r.canonical_loglik;
    j["permuted"] = r.permuted_logliks;
    if (r.ids) j["ids"] = *r.ids;
    out += j.dump() + "\n";
  }
  return out;
}

inline void write_manifest(const SampleManifest& m,
                           const std::filesystem::path& path) {
  detail::write_file(path, format_manifest(m));
}

inline void write_logprobs(std::span<const TokenLogProbRecord> recs,
                           const std::filesystem::path& path) {
  detail::write_file(path, format_logprobs(recs));
}

inline void write_shards(std::span<const ShardLikelihoodRecord> recs,
                         const std::filesystem::path& path) {
  detail::write_file(path, format_shards(recs));
}

}  // namespace contam
