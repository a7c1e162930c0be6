#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "inceptive/head.hpp"
#include "inceptive/model.hpp"
#include "inceptive/training.hpp"

namespace inceptive {

// Flat JSON config. Keys mirror the ModelConfig / TrainConfig field names,
// plus encoder_layers, encoder_heads, encoder_ffn, model, data, vocab,
// embeddings, val_fraction, test_fraction, folds and runs. Unknown keys are
// rejected.
struct RunConfig {
  ClassifierConfig classifier;  // encoder.vocab_size is filled in from the vocabulary
  TrainConfig train;
  std::filesystem::path data;        // JSON-lines dataset
  std::filesystem::path vocab;       // optional; built from `data` when empty
  std::filesystem::path embeddings;  // IEMB file, alternative to `data`
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::size_t folds = 10;
  std::size_t runs = 10;

  void validate() const;
};

/// Relative paths resolve against `base_dir`. Throws ConfigError naming the
/// offending key.
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

std::string_view to_string(SelectionMetric metric);

struct ReportContext {
  HeadKind head = HeadKind::inceptive;
  Variant variant = Variant::full;
  Task task = Task::multi_class;
  std::uint64_t seed = 0;
};

/// Run report as JSON. Wall-clock values live only in the trailing "timing"
/// object so that everything else is reproducible byte for byte.
std::string report_json(const RunReport& report, const ReportContext& context);

/// The same document with its "timing" member removed.
std::string without_timing(std::string_view report_json);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};

Summary summarize(const std::vector<double>& values);

/// `position,received` rows.
std::string attention_csv(const AttentionMap& map);

/// Binary PGM (P5) with one row per map, gray level proportional to the value
/// divided by the largest value over all maps.
std::string attention_pgm(const std::vector<AttentionMap>& maps);

}  // namespace inceptive
