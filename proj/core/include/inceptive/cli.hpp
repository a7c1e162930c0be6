#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "inceptive/dataset_io.hpp"
#include "inceptive/metrics.hpp"
#include "inceptive/report.hpp"
#include "inceptive/synthetic.hpp"
#include "inceptive/training.hpp"

namespace inceptive {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<HeadKind> model;
  std::optional<Variant> variant;
  std::filesystem::path out = "out";
};

/// Loads --config (or defaults) and applies the command-line overrides.
RunConfig resolve_config(const GlobalOptions& options);

struct LoadedData {
  Dataset data;
  std::optional<Vocabulary> vocab;  // token datasets only
};

/// Reads `config.data` (tokenized through `config.vocab`, or a vocabulary
/// built from the data) or `config.embeddings`, and fills in the encoder's
/// vocabulary size.
LoadedData load_data(RunConfig& config);

/// The fixed train / validation / test split every run and model type shares.
Split experiment_split(const RunConfig& config, std::size_t n);

struct RunResult {
  std::uint64_t seed = 0;
  RunReport report;
  double metric = 0.0;  // selection metric on the test split (validation when there is none)
};

struct TrainSummary {
  std::vector<RunResult> runs;
  SelectionMetric metric = SelectionMetric::accuracy;
  Summary summary;
};

/// `config.runs` runs with seeds seed, seed + 1, ...; writes
/// run_<i>/report.json, run_<i>/checkpoint.itck and summary.json under `out`.
TrainSummary run_train(RunConfig config, const std::filesystem::path& out);

struct FoldResult {
  std::size_t fold = 0;
  double inceptive = 0.0;
  double baseline = 0.0;
};

struct XvalSummary {
  std::vector<FoldResult> folds;
  SelectionMetric metric = SelectionMetric::accuracy;
  Summary inceptive;
  Summary baseline;
};

/// k-fold protocol: both model types train on the same folds with the same
/// seeds; a tenth of each fold's training part is held out for epoch
/// selection and the metric is taken on the held-out fold. Writes xval.json.
XvalSummary run_xval(RunConfig config, const std::filesystem::path& out);

/// Evaluates a checkpoint on the test split and writes eval.json.
EvalMetrics run_eval(RunConfig config, const std::filesystem::path& checkpoint, const std::filesystem::path& out);

struct AttentionSummary {
  std::size_t examples = 0;
  // Averages over the test split of the position-0 mass and the entropy.
  std::optional<double> head_position0;
  std::optional<double> head_entropy;
  std::optional<double> cls_position0;
  std::optional<double> cls_entropy;
};

/// Per-example `received` CSVs and PGM heatmaps for the inceptive head
/// (head_*) and the last encoder block's CLS row (cls_*), for the first
/// `max_examples` test examples; summary statistics cover the whole split.
AttentionSummary run_attnmap(RunConfig config, const std::filesystem::path& checkpoint,
                             const std::filesystem::path& out, std::size_t max_examples);

/// Writes data.jsonl, cues.jsonl and vocab.txt.
SyntheticData run_synth(const SyntheticSpec& spec, const std::filesystem::path& out);

struct StatsResult {
  WilcoxonResult test;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double gain_percent = 0.0;  // (mean_b - mean_a) / mean_a * 100
};

/// Paired scores from one two-column CSV or two one-column CSVs. A
/// non-numeric first line is treated as a header.
StatsResult run_stats(const std::vector<std::filesystem::path>& inputs);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace inceptive
