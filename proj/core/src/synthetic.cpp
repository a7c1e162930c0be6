#include "inceptive/synthetic.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "inceptive/error.hpp"

namespace inceptive {

std::string_view to_string(SyntheticTask task) {
  return task == SyntheticTask::phrase_cue_multiclass ? "phrase-cue-multiclass" : "dispersed-multilabel";
}

SyntheticTask parse_synthetic_task(std::string_view text) {
  if (text == "phrase-cue-multiclass" || text == "phrase_cue_multiclass") return SyntheticTask::phrase_cue_multiclass;
  if (text == "dispersed-multilabel" || text == "dispersed_multilabel") return SyntheticTask::dispersed_multilabel;
  throw ConfigError("task: unknown synthetic task '" + std::string(text) + "'");
}

std::vector<std::size_t> SyntheticSpec::resolved_cue_lengths() const {
  if (!cue_lengths.empty()) return cue_lengths;
  static constexpr std::size_t cycle[] = {2, 3, 5, 7};
  std::vector<std::size_t> out(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) out[k] = cycle[k % 4];
  return out;
}

namespace {

std::size_t cue_vocab_size(const SyntheticSpec& spec) {
  if (spec.task == SyntheticTask::dispersed_multilabel) return spec.n_classes;
  const auto lengths = spec.resolved_cue_lengths();
  return std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_examples == 0) throw ConfigError("n_examples: must be positive");
  if (n_classes < 2) throw ConfigError("n_classes: need at least 2");
  if (seq_len < 2) throw ConfigError("seq_len: need room for CLS and one word");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("noise_rate: must lie in [0, 1]");
  const std::size_t words = seq_len - 1;
  if (task == SyntheticTask::phrase_cue_multiclass) {
    if (!cue_lengths.empty() && cue_lengths.size() != n_classes) {
      throw ConfigError("cue_lengths: need one length per class");
    }
    for (std::size_t n : resolved_cue_lengths()) {
      if (n < 2 || n > 7) throw ConfigError("cue_lengths: " + std::to_string(n) + " outside [2, 7]");
      if (n > words) throw ConfigError("cue_lengths: " + std::to_string(n) + "-gram does not fit in " + std::to_string(words) + " words");
    }
  } else {
    if (!(avg_labels_per_example >= 1.0 && avg_labels_per_example <= static_cast<double>(n_classes))) {
      throw ConfigError("avg_labels_per_example: must lie in [1, C]");
    }
    if (n_classes > words) throw ConfigError("seq_len: too short to place every label's cue");
  }
  if (vocab_size < cue_vocab_size(*this) + 1) {
    throw ConfigError("vocab_size: " + std::to_string(vocab_size) + " cannot host " + std::to_string(cue_vocab_size(*this)) +
                      " disjoint cue tokens plus background");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t words = spec.seq_len - 1;
  const std::size_t n_cue = cue_vocab_size(spec);
  const std::size_t n_background = spec.vocab_size - n_cue;
  std::vector<std::string> cue_vocab(n_cue);
  for (std::size_t i = 0; i < n_cue; ++i) cue_vocab[i] = "c" + std::to_string(i);
  auto background = [&] { return "w" + std::to_string(rng.below(n_background)); };

  SyntheticData out;
  std::size_t next = 0;
  if (spec.task == SyntheticTask::phrase_cue_multiclass) {
    for (std::size_t n : spec.resolved_cue_lengths()) {
      out.cue_phrases.emplace_back(cue_vocab.begin() + static_cast<std::ptrdiff_t>(next),
                                   cue_vocab.begin() + static_cast<std::ptrdiff_t>(next + n));
      next += n;
    }
  } else {
    for (const std::string& t : cue_vocab) out.cue_phrases.push_back({t});
  }

  std::vector<std::uint32_t> label_pool(spec.n_classes);
  std::vector<std::size_t> slots(words);
  for (std::size_t e = 0; e < spec.n_examples; ++e) {
    std::vector<std::string> text(words);
    std::vector<bool> taken(words, false);
    DatasetRecord record;
    if (spec.task == SyntheticTask::phrase_cue_multiclass) {
      const auto label = static_cast<std::uint32_t>(rng.below(spec.n_classes));
      const auto& phrase = out.cue_phrases[label];
      const std::size_t pos = rng.below(words - phrase.size() + 1);
      for (std::size_t i = 0; i < phrase.size(); ++i) {
        text[pos + i] = phrase[i];
        taken[pos + i] = true;
      }
      for (std::size_t i = 0; i < words; ++i) {
        if (taken[i]) continue;
        text[i] = rng.uniform() < spec.noise_rate ? cue_vocab[rng.below(n_cue)] : background();
      }
      out.cues.push_back({e, label, pos, phrase});
      record.target = label;
    } else {
      const double p = (spec.avg_labels_per_example - 1.0) / static_cast<double>(spec.n_classes - 1);
      std::size_t k = 1;
      for (std::size_t i = 0; i + 1 < spec.n_classes; ++i) k += rng.uniform() < p ? 1 : 0;
      std::iota(label_pool.begin(), label_pool.end(), 0u);
      for (std::size_t i = 0; i < k; ++i) std::swap(label_pool[i], label_pool[i + rng.below(spec.n_classes - i)]);
      std::vector<std::uint32_t> labels(label_pool.begin(), label_pool.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(labels.begin(), labels.end());
      std::iota(slots.begin(), slots.end(), std::size_t{0});
      for (std::size_t i = 0; i < k; ++i) std::swap(slots[i], slots[i + rng.below(words - i)]);
      for (std::size_t i = 0; i < k; ++i) {
        text[slots[i]] = cue_vocab[labels[i]];
        taken[slots[i]] = true;
        out.cues.push_back({e, labels[i], slots[i], {cue_vocab[labels[i]]}});
      }
      for (std::size_t i = 0; i < words; ++i) {
        if (taken[i]) continue;
        text[i] = rng.uniform() < spec.noise_rate ? cue_vocab[labels[rng.below(k)]] : background();
      }
      record.target = std::move(labels);
    }
    for (std::size_t i = 0; i < words; ++i) {
      if (i) record.text += ' ';
      record.text += text[i];
    }
    out.records.push_back(std::move(record));
  }
  return out;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  Rng rng(derive_seed(spec.seed, 0x5A7));
  return generate_synthetic(spec, rng);
}

std::string serialize_cues(const SyntheticData& data) {
  std::string out;
  for (const CuePlacement& c : data.cues) {
    nlohmann::ordered_json j;
    j["example"] = c.example;
    j["label"] = c.label;
    j["position"] = c.position;
    j["tokens"] = c.tokens;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace inceptive
