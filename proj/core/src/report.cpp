#include "inceptive/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

#include <json.hpp>

#include "inceptive/dataset_io.hpp"
#include "inceptive/error.hpp"

namespace inceptive {

using ojson = nlohmann::ordered_json;

namespace {

std::size_t as_size(const ojson& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(key + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

double as_double(const ojson& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key + ": expected a number");
  return v.get<double>();
}

std::string as_string(const ojson& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key + ": expected a string");
  return v.get<std::string>();
}

SelectionMetric parse_selection(const std::string& s) {
  if (s == "accuracy") return SelectionMetric::accuracy;
  if (s == "f1") return SelectionMetric::f1;
  throw ConfigError("selection_metric: expected accuracy or f1, got '" + s + "'");
}

}  // namespace

std::string_view to_string(SelectionMetric metric) { return metric == SelectionMetric::accuracy ? "accuracy" : "f1"; }

void RunConfig::validate() const {
  if (classifier.head == HeadKind::inceptive) classifier.model.validate();
  train.validate();
  if (val_fraction <= 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
    throw ConfigError("val_fraction: validation and test fractions must be positive and sum below 1");
  }
  if (folds < 2) throw ConfigError("folds: need at least 2");
  if (runs < 1) throw ConfigError("runs: need at least 1");
}

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  ojson doc;
  try {
    doc = ojson::parse(json_text);
  } catch (const ojson::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig c;
  ModelConfig& m = c.classifier.model;
  TrainConfig& t = c.train;
  EncoderConfig enc;
  auto path = [&](const ojson& v, const std::string& key) {
    std::filesystem::path p = as_string(v, key);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };

  using Setter = std::function<void(const ojson&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"hidden_dim", [&](auto& v, auto& k) { m.hidden_dim = as_size(v, k); }},
      {"channels", [&](auto& v, auto& k) { m.channels = as_size(v, k); }},
      {"n_heads", [&](auto& v, auto& k) { m.n_heads = as_size(v, k); }},
      {"head_dim", [&](auto& v, auto& k) { m.head_dim = as_size(v, k); }},
      {"dense_dim", [&](auto& v, auto& k) { m.dense_dim = as_size(v, k); }},
      {"n_classes", [&](auto& v, auto& k) { m.n_classes = as_size(v, k); }},
      {"task", [&](auto& v, auto& k) { m.task = parse_task(as_string(v, k)); }},
      {"dropout_rate", [&](auto& v, auto& k) { m.dropout_rate = as_double(v, k); }},
      {"variant", [&](auto& v, auto& k) { m.variant = parse_variant(as_string(v, k)); }},
      {"bn_momentum", [&](auto& v, auto& k) { m.bn_momentum = as_double(v, k); }},
      {"bn_eps", [&](auto& v, auto& k) { m.bn_eps = as_double(v, k); }},
      {"encoder_layers", [&](auto& v, auto& k) { enc.n_layers = as_size(v, k); }},
      {"encoder_heads", [&](auto& v, auto& k) { enc.n_heads = as_size(v, k); }},
      {"encoder_ffn", [&](auto& v, auto& k) { enc.ffn_size = as_size(v, k); }},
      {"seq_len", [&](auto& v, auto& k) { t.seq_len = as_size(v, k); }},
      {"batch_size", [&](auto& v, auto& k) { t.batch_size = as_size(v, k); }},
      {"epochs", [&](auto& v, auto& k) { t.epochs = as_size(v, k); }},
      {"lr", [&](auto& v, auto& k) { t.lr = as_double(v, k); }},
      {"lr_min", [&](auto& v, auto& k) { t.lr_min = as_double(v, k); }},
      {"weight_decay", [&](auto& v, auto& k) { t.weight_decay = as_double(v, k); }},
      {"sigmoid_threshold", [&](auto& v, auto& k) { t.sigmoid_threshold = as_double(v, k); }},
      {"max_grad_norm", [&](auto& v, auto& k) { t.max_grad_norm = as_double(v, k); }},
      {"seed", [&](auto& v, auto& k) { t.seed = as_size(v, k); }},
      {"selection_metric", [&](auto& v, auto& k) { t.selection_metric = parse_selection(as_string(v, k)); }},
      {"model", [&](auto& v, auto& k) {
         try {
           c.classifier.head = parse_head_kind(as_string(v, k));
         } catch (const ConfigError& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"data", [&](auto& v, auto& k) { c.data = path(v, k); }},
      {"vocab", [&](auto& v, auto& k) { c.vocab = path(v, k); }},
      {"embeddings", [&](auto& v, auto& k) { c.embeddings = path(v, k); }},
      {"val_fraction", [&](auto& v, auto& k) { c.val_fraction = as_double(v, k); }},
      {"test_fraction", [&](auto& v, auto& k) { c.test_fraction = as_double(v, k); }},
      {"folds", [&](auto& v, auto& k) { c.folds = as_size(v, k); }},
      {"runs", [&](auto& v, auto& k) { c.runs = as_size(v, k); }},
  };
  for (const auto& [key, value] : doc.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(value, key);
  }
  if (!c.data.empty() && !c.embeddings.empty()) throw ConfigError("data: give either data or embeddings, not both");
  if (c.embeddings.empty()) {
    enc.hidden_dim = m.hidden_dim;
    enc.max_len = t.seq_len;
    c.classifier.encoder = enc;
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------

namespace {

ojson optional_number(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson prf_json(const PrecisionRecallF1& p) {
  ojson j;
  j["precision"] = p.precision;
  j["recall"] = p.recall;
  j["f1"] = p.f1;
  return j;
}

ojson metrics_json(const EvalMetrics& m) {
  ojson j;
  j["loss"] = m.loss;
  j["accuracy"] = m.accuracy;
  j["micro"] = prf_json(m.micro);
  j["macro"] = prf_json(m.macro);
  j["auc_roc"] = optional_number(m.auc_roc);
  j["aupr"] = optional_number(m.aupr);
  return j;
}

}  // namespace

std::string report_json(const RunReport& report, const ReportContext& context) {
  ojson doc;
  doc["model"] = std::string(to_string(context.head));
  doc["variant"] = std::string(to_string(context.variant));
  doc["task"] = std::string(to_string(context.task));
  doc["seed"] = context.seed;
  doc["selection_metric"] = std::string(to_string(report.selection));
  ojson epochs = ojson::array();
  ojson timing;
  ojson epoch_seconds = ojson::array();
  ojson validation_seconds = ojson::array();
  for (const EpochRecord& e : report.epochs) {
    ojson r;
    r["epoch"] = e.epoch;
    r["train_loss"] = e.train_loss;
    r["learning_rate"] = e.learning_rate;
    r["max_grad_norm"] = e.max_grad_norm;
    r["validation"] = metrics_json(e.validation);
    epochs.push_back(std::move(r));
    epoch_seconds.push_back(e.wall_seconds);
    validation_seconds.push_back(e.validation.inference_seconds);
  }
  doc["epochs"] = std::move(epochs);
  doc["best_epoch"] = report.best_epoch;
  doc["best_metric"] = report.best_metric;
  doc["test"] = report.test ? metrics_json(*report.test) : ojson(nullptr);
  timing["epoch_seconds"] = std::move(epoch_seconds);
  timing["validation_inference_seconds"] = std::move(validation_seconds);
  timing["test_inference_seconds"] = report.test ? ojson(report.test->inference_seconds) : ojson(nullptr);
  timing["total_seconds"] = report.total_seconds;
  doc["timing"] = std::move(timing);
  return doc.dump(2) + "\n";
}

std::string without_timing(std::string_view report_json) {
  ojson doc;
  try {
    doc = ojson::parse(report_json);
  } catch (const ojson::parse_error& e) {
    throw FormatError(std::string("report: ") + e.what(), e.byte);
  }
  if (doc.is_object()) doc.erase("timing");
  return doc.dump(2) + "\n";
}

Summary summarize(const std::vector<double>& values) {
  if (values.empty()) throw InputError("summarize: no values");
  Summary s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::string attention_csv(const AttentionMap& map) {
  std::string out = "position,received\n";
  char buf[64];
  for (std::size_t i = 0; i < map.received.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, map.received[i]);
    out += buf;
  }
  return out;
}

std::string attention_pgm(const std::vector<AttentionMap>& maps) {
  if (maps.empty()) throw InputError("attention_pgm: no maps");
  const std::size_t width = maps.front().received.size();
  double peak = 0.0;
  for (const AttentionMap& m : maps) {
    if (m.received.size() != width) throw InputError("attention_pgm: maps differ in length");
    for (double v : m.received) peak = std::max(peak, v);
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(maps.size()) + "\n255\n";
  for (const AttentionMap& m : maps) {
    for (double v : m.received) {
      const double level = peak > 0.0 ? std::round(255.0 * v / peak) : 0.0;
      out += static_cast<char>(static_cast<unsigned char>(std::clamp(level, 0.0, 255.0)));
    }
  }
  return out;
}

}  // namespace inceptive
