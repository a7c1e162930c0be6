#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "inceptive/head.hpp"
#include "inceptive/model.hpp"

namespace inceptive {

// One JSON-lines record: {"text": ..., "label": k} or {"text": ..., "labels": [k, ...]}.
struct DatasetRecord {
  std::string text;
  std::variant<std::uint32_t, std::vector<std::uint32_t>> target;

  bool multi_label() const noexcept { return target.index() == 1; }
  bool operator==(const DatasetRecord&) const = default;
};

/// Splits on ASCII whitespace; the text is taken as already tokenized.
std::vector<std::string> tokenize(std::string_view text);

// Token -> id with reserved ids for padding, the leading CLS slot and unknown
// tokens. Regular tokens follow in descending frequency (ties lexicographic).
class Vocabulary {
 public:
  static constexpr std::uint32_t kPad = 0;
  static constexpr std::uint32_t kCls = 1;
  static constexpr std::uint32_t kUnk = 2;

  Vocabulary();
  static Vocabulary build(std::span<const DatasetRecord> records);

  std::uint32_t id(std::string_view token) const;  // kUnk when absent
  const std::string& token(std::uint32_t id) const;
  std::size_t size() const noexcept { return tokens_.size(); }

  // One token per line in id order.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Parses JSON-lines text. Labels lists must be sorted and duplicate-free.
/// Throws FormatError (byte offset of the bad line) or LabelError.
std::vector<DatasetRecord> parse_jsonl(std::string_view text, std::string_view source = "jsonl");
std::string serialize_jsonl(std::span<const DatasetRecord> records);

std::vector<DatasetRecord> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const DatasetRecord> records);

/// Reads a whole file; throws IoError naming the path.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Token ids [CLS, w_1, ..., w_{L-1}], truncated or padded to `seq_len`.
std::vector<std::uint32_t> encode_text(std::string_view text, const Vocabulary& vocab, std::size_t seq_len);

/// Builds a token dataset; labels are checked against `n_classes`.
Dataset to_dataset(std::span<const DatasetRecord> records, const Vocabulary& vocab, Task task, std::size_t n_classes,
                   std::size_t seq_len);

}  // namespace inceptive
