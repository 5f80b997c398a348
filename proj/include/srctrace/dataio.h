// Copyright 2026 The srctrace Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SRCTRACE_DATAIO_H_
#define SRCTRACE_DATAIO_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "srctrace/linalg.h"

namespace srctrace {

// N x D embeddings with row-aligned sample ids. Stored as 32-bit reals on
// disk, held as doubles in memory.
struct EmbeddingSet {
  std::vector<std::string> ids;
  Matrix data;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return data.cols(); }
};

// N x K raw classifier outputs with the class-name vocabulary.
struct LogitSet {
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  Matrix data;

  std::size_t size() const { return ids.size(); }
};

inline constexpr char kEmbeddingMagic[4] = {'S', 'T', 'E', 'B'};
inline constexpr char kLogitMagic[4] = {'S', 'T', 'L', 'G'};
inline constexpr std::uint32_t kFormatVersion = 1;

// Checks the in-memory invariants; throws ValidationError.
void validate(const EmbeddingSet& set);
void validate(const LogitSet& set);

std::vector<std::uint8_t> encode_embeddings(const EmbeddingSet& set);
EmbeddingSet decode_embeddings(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_logits(const LogitSet& set);
LogitSet decode_logits(const std::vector<std::uint8_t>& bytes);

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);
EmbeddingSet read_embeddings(const std::filesystem::path& path);
void write_logits(const std::filesystem::path& path, const LogitSet& set);
LogitSet read_logits(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

enum class Split { kTrain, kDev, kEval };

const char* split_name(Split split);
std::optional<Split> parse_split(std::string_view name);

struct ManifestRecord {
  std::string id;
  std::string label;
  Split split = Split::kTrain;
  bool is_ood = false;
};

class Manifest {
 public:
  Manifest() = default;
  // Validates and indexes the records. Throws ValidationError.
  explicit Manifest(std::vector<ManifestRecord> records);

  const std::vector<ManifestRecord>& records() const { return records_; }
  // Sorted distinct labels of the train split.
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  std::optional<std::size_t> label_index(const std::string& label) const;
  const ManifestRecord* find(const std::string& id) const;
  std::vector<const ManifestRecord*> split(Split split) const;
  bool has_ood(Split split) const;

 private:
  std::vector<ManifestRecord> records_;
  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// JSON-lines with keys id, label, split and optional is_ood.
Manifest parse_manifest(std::string_view text);
Manifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

// Row position of every id. Throws ValidationError on duplicates.
std::unordered_map<std::string, std::size_t> index_ids(const std::vector<std::string>& ids);

// Rows of `set` for the given ids, in that order. Throws DataError when an id
// is missing.
EmbeddingSet select_rows(const EmbeddingSet& set, const std::vector<std::string>& ids);
LogitSet select_rows(const LogitSet& set, const std::vector<std::string>& ids);

}  // namespace srctrace

#endif  // SRCTRACE_DATAIO_H_
