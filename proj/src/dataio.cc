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

#include "srctrace/dataio.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "srctrace/error.h"

namespace srctrace {
namespace {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v));
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    if (s.size() > 0xffff) throw ValidationError("string longer than 65535 bytes: " + s.substr(0, 32));
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == in_.size(); }

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(pos_, std::string("truncated ") + what + ": need " + std::to_string(n) +
                                  " bytes, " + std::to_string(in_.size() - pos_) + " left");
    }
  }
  void magic(const char (&expected)[4]) {
    need(4, "magic");
    if (std::memcmp(in_.data() + pos_, expected, 4) != 0) {
      throw FormatError(pos_, "bad magic, expected \"" + std::string(expected, 4) + "\"");
    }
    pos_ += 4;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    const std::uint16_t len = u16(what);
    need(len, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), len);
    pos_ += len;
    return s;
  }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

void write_matrix_f32(ByteWriter& w, const Matrix& m) {
  for (double v : m.values()) w.f32(static_cast<float>(v));
}

Matrix read_matrix_f32(ByteReader& r, std::uint32_t rows, std::uint32_t cols) {
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  r.need(count * 4, "payload");
  Matrix m(rows, cols);
  auto values = m.values();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const float v = r.f32("payload");
    if (!std::isfinite(v)) {
      throw FormatError(at, "non-finite value in row " + std::to_string(i / cols));
    }
    values[i] = v;
  }
  return m;
}

void write_string_block(ByteWriter& w, const std::vector<std::string>& items) {
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const auto& s : items) w.str(s);
}

std::vector<std::string> read_string_block(ByteReader& r, std::uint32_t expected,
                                           const char* what) {
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32(what);
  if (count != expected) {
    throw FormatError(count_at, std::string(what) + " count " + std::to_string(count) +
                                    " does not match header " + std::to_string(expected));
  }
  std::vector<std::string> items;
  items.reserve(count);
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    std::string s = r.str(what);
    if (!seen.insert(s).second) {
      throw FormatError(at, std::string("duplicate ") + what + " \"" + s + "\"");
    }
    items.push_back(std::move(s));
  }
  return items;
}

void require_unique(const std::vector<std::string>& items, const char* what) {
  std::set<std::string> seen;
  for (const auto& s : items) {
    if (!seen.insert(s).second) throw ValidationError(std::string("duplicate ") + what + " \"" + s + "\"");
  }
}

void require_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw ValidationError(std::string(what) + " exceeds 32-bit range");
}

}  // namespace

void validate(const EmbeddingSet& set) {
  if (set.dim() == 0) throw ValidationError("embedding dimension must be positive");
  if (set.ids.size() != set.data.rows()) {
    throw ValidationError("embedding ids (" + std::to_string(set.ids.size()) +
                          ") do not match rows (" + std::to_string(set.data.rows()) + ")");
  }
  require_unique(set.ids, "id");
  if (!all_finite(set.data)) throw ValidationError("embedding set contains non-finite values");
}

void validate(const LogitSet& set) {
  if (set.labels.size() < 2) {
    throw ValidationError("logit vocabulary needs at least 2 labels, got " +
                          std::to_string(set.labels.size()));
  }
  if (set.data.cols() != set.labels.size()) {
    throw ValidationError("logit columns do not match the label vocabulary");
  }
  if (set.ids.size() != set.data.rows()) throw ValidationError("logit ids do not match rows");
  require_unique(set.ids, "id");
  require_unique(set.labels, "label");
  if (!all_finite(set.data)) throw ValidationError("logit set contains non-finite values");
}

std::vector<std::uint8_t> encode_embeddings(const EmbeddingSet& set) {
  validate(set);
  require_u32(set.size(), "row count");
  require_u32(set.dim(), "dimension");
  ByteWriter w;
  w.bytes(kEmbeddingMagic, 4);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(set.size()));
  w.u32(static_cast<std::uint32_t>(set.dim()));
  write_matrix_f32(w, set.data);
  write_string_block(w, set.ids);
  return w.take();
}

EmbeddingSet decode_embeddings(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.magic(kEmbeddingMagic);
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kFormatVersion) throw FormatError(version_at, "unsupported version");
  const std::uint32_t n = r.u32("header");
  const std::size_t dim_at = r.offset();
  const std::uint32_t d = r.u32("header");
  if (d == 0) throw FormatError(dim_at, "dimension must be positive");
  EmbeddingSet set;
  set.data = read_matrix_f32(r, n, d);
  set.ids = read_string_block(r, n, "id");
  if (!r.at_end()) throw FormatError(r.offset(), "trailing bytes after id block");
  return set;
}

std::vector<std::uint8_t> encode_logits(const LogitSet& set) {
  validate(set);
  require_u32(set.size(), "row count");
  ByteWriter w;
  w.bytes(kLogitMagic, 4);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(set.size()));
  w.u32(static_cast<std::uint32_t>(set.labels.size()));
  write_matrix_f32(w, set.data);
  write_string_block(w, set.labels);
  write_string_block(w, set.ids);
  return w.take();
}

LogitSet decode_logits(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.magic(kLogitMagic);
  const std::size_t version_at = r.offset();
  if (r.u32("version") != kFormatVersion) throw FormatError(version_at, "unsupported version");
  const std::uint32_t n = r.u32("header");
  const std::size_t k_at = r.offset();
  const std::uint32_t k = r.u32("header");
  if (k < 2) throw FormatError(k_at, "label vocabulary needs at least 2 labels");
  LogitSet set;
  set.data = read_matrix_f32(r, n, k);
  set.labels = read_string_block(r, k, "label");
  set.ids = read_string_block(r, n, "id");
  if (!r.at_end()) throw FormatError(r.offset(), "trailing bytes after id block");
  return set;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  write_file_bytes(path, encode_embeddings(set));
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  try {
    return decode_embeddings(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.offset(), path.string() + ": " + e.detail());
  }
}

void write_logits(const std::filesystem::path& path, const LogitSet& set) {
  write_file_bytes(path, encode_logits(set));
}

LogitSet read_logits(const std::filesystem::path& path) {
  try {
    return decode_logits(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.offset(), path.string() + ": " + e.detail());
  }
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kEval:
      return "eval";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "eval") return Split::kEval;
  return std::nullopt;
}

Manifest::Manifest(std::vector<ManifestRecord> records) : records_(std::move(records)) {
  std::set<std::string> train_labels;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& rec = records_[i];
    if (rec.id.empty()) throw ValidationError("manifest record " + std::to_string(i) + " has an empty id");
    if (!by_id_.emplace(rec.id, i).second) {
      throw ValidationError("manifest: duplicate id \"" + rec.id + "\"");
    }
    if (rec.split == Split::kTrain) {
      if (rec.is_ood) throw ValidationError("manifest: train record \"" + rec.id + "\" is flagged OOD");
      train_labels.insert(rec.label);
    }
  }
  vocabulary_.assign(train_labels.begin(), train_labels.end());
  for (const auto& rec : records_) {
    if (rec.split != Split::kTrain && !rec.is_ood && !label_index(rec.label)) {
      throw ValidationError("manifest: in-domain record \"" + rec.id + "\" has label \"" + rec.label +
                            "\" that no train record carries");
    }
  }
}

std::optional<std::size_t> Manifest::label_index(const std::string& label) const {
  const auto it = std::lower_bound(vocabulary_.begin(), vocabulary_.end(), label);
  if (it == vocabulary_.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - vocabulary_.begin());
}

const ManifestRecord* Manifest::find(const std::string& id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

std::vector<const ManifestRecord*> Manifest::split(Split split) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& rec : records_) {
    if (rec.split == split) out.push_back(&rec);
  }
  return out;
}

bool Manifest::has_ood(Split split) const {
  return std::any_of(records_.begin(), records_.end(),
                     [split](const ManifestRecord& r) { return r.split == split && r.is_ood; });
}

Manifest parse_manifest(std::string_view text) {
  std::vector<ManifestRecord> records;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(where + e.what());
    }
    if (!j.is_object()) throw ValidationError(where + "expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key != "id" && key != "label" && key != "split" && key != "is_ood") {
        throw ValidationError(where + "unknown field \"" + key + "\"");
      }
    }
    ManifestRecord rec;
    for (const char* key : {"id", "label", "split"}) {
      if (!j.contains(key) || !j[key].is_string()) {
        throw ValidationError(where + "missing string field \"" + key + "\"");
      }
    }
    rec.id = j["id"].get<std::string>();
    rec.label = j["label"].get<std::string>();
    const auto split = parse_split(j["split"].get<std::string>());
    if (!split) throw ValidationError(where + "unknown split \"" + j["split"].get<std::string>() + "\"");
    rec.split = *split;
    if (j.contains("is_ood")) {
      if (!j["is_ood"].is_boolean()) throw ValidationError(where + "\"is_ood\" must be a boolean");
      rec.is_ood = j["is_ood"].get<bool>();
    }
    records.push_back(std::move(rec));
  }
  return Manifest(std::move(records));
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str());
}

std::string format_manifest(const Manifest& manifest) {
  std::string out;
  for (const auto& rec : manifest.records()) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["label"] = rec.label;
    j["split"] = split_name(rec.split);
    if (rec.split != Split::kTrain) j["is_ood"] = rec.is_ood;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_manifest(manifest);
}

std::unordered_map<std::string, std::size_t> index_ids(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], i).second) throw ValidationError("duplicate id \"" + ids[i] + "\"");
  }
  return index;
}

namespace {

template <typename Set>
Set select_rows_impl(const Set& set, const std::vector<std::string>& ids) {
  const auto index = index_ids(set.ids);
  Set out;
  if constexpr (std::is_same_v<Set, LogitSet>) out.labels = set.labels;
  out.ids = ids;
  out.data = Matrix(ids.size(), set.data.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto it = index.find(ids[i]);
    if (it == index.end()) throw DataError("id \"" + ids[i] + "\" not present in set");
    const auto src = set.data.row(it->second);
    std::copy(src.begin(), src.end(), out.data.row(i).begin());
  }
  return out;
}

}  // namespace

EmbeddingSet select_rows(const EmbeddingSet& set, const std::vector<std::string>& ids) {
  return select_rows_impl(set, ids);
}

LogitSet select_rows(const LogitSet& set, const std::vector<std::string>& ids) {
  return select_rows_impl(set, ids);
}

}  // namespace srctrace
