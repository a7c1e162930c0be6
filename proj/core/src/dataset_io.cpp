#include "inceptive/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "inceptive/error.hpp"

namespace inceptive {

using json = nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

Vocabulary::Vocabulary() {
  push("[PAD]");
  push("[CLS]");
  push("[UNK]");
}

void Vocabulary::push(std::string token) {
  if (index_.contains(token)) throw FormatError("vocabulary: duplicate token '" + token + "'", 0);
  index_.emplace(token, static_cast<std::uint32_t>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const DatasetRecord> records) {
  std::map<std::string, std::size_t> counts;
  for (const DatasetRecord& r : records) {
    for (std::string& t : tokenize(r.text)) ++counts[std::move(t)];
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [token, count] : ordered) {
    if (!v.index_.contains(token)) v.push(token);
  }
  return v;
}

std::uint32_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::uint32_t id) const {
  if (id >= tokens_.size()) throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (const std::string& t : tokens_) out += t + '\n';
  write_file(path, out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string token = text.substr(start, end - start);
    if (token.empty() || tokenize(token).size() != 1 || tokenize(token)[0] != token) {
      throw FormatError("vocabulary " + path.string() + ": malformed token line", start);
    }
    v.push(std::move(token));
    start = end + 1;
  }
  if (v.size() < 3 || v.tokens_[kPad] != "[PAD]" || v.tokens_[kCls] != "[CLS]" || v.tokens_[kUnk] != "[UNK]") {
    throw FormatError("vocabulary " + path.string() + ": must start with [PAD], [CLS], [UNK]", 0);
  }
  return v;
}

// ---------------------------------------------------------------------------

namespace {

std::uint32_t label_value(const json& j, std::size_t offset, const std::string& source) {
  if (!j.is_number_integer() || j.get<long long>() < 0 || j.get<long long>() > 0xFFFFFFFFLL) {
    throw FormatError(source + ": label must be a non-negative integer", offset);
  }
  return j.get<std::uint32_t>();
}

DatasetRecord parse_record(std::string_view line, std::size_t offset, const std::string& source) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(source + ": " + e.what(), offset);
  }
  if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw FormatError(source + ": record needs a string \"text\"", offset);
  }
  const bool single = j.contains("label");
  const bool multi = j.contains("labels");
  if (single == multi) throw FormatError(source + ": record needs exactly one of \"label\" or \"labels\"", offset);
  if (j.size() != 2) throw FormatError(source + ": unexpected key in record", offset);
  DatasetRecord r;
  r.text = j["text"].get<std::string>();
  if (single) {
    r.target = label_value(j["label"], offset, source);
  } else {
    if (!j["labels"].is_array()) throw FormatError(source + ": \"labels\" must be an array", offset);
    std::vector<std::uint32_t> labels;
    for (const json& v : j["labels"]) labels.push_back(label_value(v, offset, source));
    for (std::size_t i = 1; i < labels.size(); ++i) {
      if (labels[i] <= labels[i - 1]) {
        throw LabelError(source + ": labels at byte " + std::to_string(offset) + " must be sorted and duplicate-free");
      }
    }
    r.target = std::move(labels);
  }
  return r;
}

}  // namespace

std::vector<DatasetRecord> parse_jsonl(std::string_view text, std::string_view source) {
  const std::string name(source);
  std::vector<DatasetRecord> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) out.push_back(parse_record(line, start, name));
    start = end + 1;
  }
  return out;
}

std::string serialize_jsonl(std::span<const DatasetRecord> records) {
  std::string out;
  for (const DatasetRecord& r : records) {
    json j;
    j["text"] = r.text;
    if (const auto* k = std::get_if<std::uint32_t>(&r.target)) {
      j["label"] = *k;
    } else {
      j["labels"] = std::get<std::vector<std::uint32_t>>(r.target);
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

std::vector<DatasetRecord> read_jsonl(const std::filesystem::path& path) {
  return parse_jsonl(read_file(path), path.string());
}

void write_jsonl(const std::filesystem::path& path, std::span<const DatasetRecord> records) {
  write_file(path, serialize_jsonl(records));
}

std::vector<std::uint32_t> encode_text(std::string_view text, const Vocabulary& vocab, std::size_t seq_len) {
  if (seq_len == 0) throw ConfigError("seq_len: must be positive");
  std::vector<std::uint32_t> ids;
  ids.reserve(seq_len);
  ids.push_back(Vocabulary::kCls);
  for (const std::string& t : tokenize(text)) {
    if (ids.size() == seq_len) break;
    ids.push_back(vocab.id(t));
  }
  ids.resize(seq_len, Vocabulary::kPad);
  return ids;
}

Dataset to_dataset(std::span<const DatasetRecord> records, const Vocabulary& vocab, Task task, std::size_t n_classes,
                   std::size_t seq_len) {
  Dataset data;
  data.task = task;
  data.n_classes = n_classes;
  data.labels.reserve(records.size());
  data.tokens.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& r = records[i];
    if (r.multi_label() != (task == Task::multi_label)) {
      throw LabelError("record " + std::to_string(i) + ": label form does not match task " + std::string(to_string(task)));
    }
    if (const auto* k = std::get_if<std::uint32_t>(&r.target)) {
      if (*k >= n_classes) throw LabelError("record " + std::to_string(i) + ": label " + std::to_string(*k) + " >= C");
      data.labels.emplace_back(*k);
    } else {
      std::vector<std::uint8_t> bits(n_classes, 0);
      for (std::uint32_t k2 : std::get<std::vector<std::uint32_t>>(r.target)) {
        if (k2 >= n_classes) throw LabelError("record " + std::to_string(i) + ": label " + std::to_string(k2) + " >= C");
        bits[k2] = 1;
      }
      data.labels.emplace_back(std::move(bits));
    }
    data.tokens.push_back(encode_text(r.text, vocab, seq_len));
  }
  data.validate();
  return data;
}

}  // namespace inceptive
