#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "inceptive/dataset_io.hpp"
#include "inceptive/rng.hpp"

namespace inceptive {

enum class SyntheticTask { phrase_cue_multiclass, dispersed_multilabel };

std::string_view to_string(SyntheticTask task);
SyntheticTask parse_synthetic_task(std::string_view text);

// Word types are named "c<i>" (cue vocabulary) and "w<i>" (background).
// Every text holds seq_len - 1 words; the CLS slot completes the sequence.
//
// phrase-cue: one contiguous cue n-gram of the example's class at a random
//   position; each background word is, with probability noise_rate, a
//   uniformly drawn cue token (a distractor) instead of a background word.
// dispersed: 1 + Binomial(C - 1, (avg - 1) / (C - 1)) distinct labels, each
//   with its own single cue token at an independent position; each background
//   word is, with probability noise_rate, a repeat of an active label's cue.
struct SyntheticSpec {
  SyntheticTask task = SyntheticTask::phrase_cue_multiclass;
  std::size_t n_examples = 2000;
  std::size_t seq_len = 32;
  std::size_t vocab_size = 200;  // distinct word types, cue and background
  std::size_t n_classes = 4;
  double avg_labels_per_example = 1.0;
  // Cue n-gram length per class; empty cycles 2, 3, 5, 7.
  std::vector<std::size_t> cue_lengths;
  double noise_rate = 0.2;
  std::uint64_t seed = 0;

  std::vector<std::size_t> resolved_cue_lengths() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct CuePlacement {
  std::size_t example = 0;
  std::uint32_t label = 0;
  std::size_t position = 0;  // word index in the text (sequence position - 1)
  std::vector<std::string> tokens;
};

struct SyntheticData {
  std::vector<DatasetRecord> records;
  std::vector<CuePlacement> cues;
  std::vector<std::vector<std::string>> cue_phrases;  // per class
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, Rng& rng);
SyntheticData generate_synthetic(const SyntheticSpec& spec);  // Rng seeded from spec.seed

std::string serialize_cues(const SyntheticData& data);

}  // namespace inceptive
