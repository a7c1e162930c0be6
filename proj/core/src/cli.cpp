#include "inceptive/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "inceptive/error.hpp"
#include "inceptive/serialize.hpp"

namespace inceptive {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

RunConfig resolve_config(const GlobalOptions& options) {
  RunConfig config = options.config ? load_config(*options.config) : RunConfig{};
  if (options.seed) config.train.seed = *options.seed;
  if (options.runs) config.runs = *options.runs;
  if (options.model) config.classifier.head = *options.model;
  if (options.variant) config.classifier.model.variant = *options.variant;
  if (!options.config && !config.classifier.encoder) config.classifier.encoder = EncoderConfig{};
  config.validate();
  return config;
}

LoadedData load_data(RunConfig& config) {
  LoadedData loaded;
  const ModelConfig& m = config.classifier.model;
  if (!config.embeddings.empty()) {
    EmbeddingSet set = load_embeddings(config.embeddings);
    if ((set.label_kind == LabelKind::multi_label) != (m.task == Task::multi_label)) {
      throw LabelError(config.embeddings.string() + ": label kind does not match task " + std::string(to_string(m.task)));
    }
    if (set.n_labels != m.n_classes) {
      throw LabelError(config.embeddings.string() + ": holds " + std::to_string(set.n_labels) + " classes, config says " +
                       std::to_string(m.n_classes));
    }
    loaded.data.task = m.task;
    loaded.data.n_classes = m.n_classes;
    loaded.data.labels = std::move(set.labels);
    loaded.data.hidden = std::move(set.hidden);
    loaded.data.validate();
    config.classifier.encoder.reset();
    return loaded;
  }
  if (config.data.empty()) throw ConfigError("data: no dataset given (set data or embeddings)");
  const std::vector<DatasetRecord> records = read_jsonl(config.data);
  loaded.vocab = config.vocab.empty() ? Vocabulary::build(records) : Vocabulary::load(config.vocab);
  loaded.data = to_dataset(records, *loaded.vocab, m.task, m.n_classes, config.train.seq_len);
  if (!config.classifier.encoder) config.classifier.encoder = EncoderConfig{};
  EncoderConfig& enc = *config.classifier.encoder;
  enc.vocab_size = loaded.vocab->size();
  enc.hidden_dim = m.hidden_dim;
  enc.max_len = config.train.seq_len;
  enc.validate();
  return loaded;
}

Split experiment_split(const RunConfig& config, std::size_t n) {
  return train_val_test_split(n, config.val_fraction, config.test_fraction, config.train.seed);
}

namespace {

double run_metric(const RunReport& report) {
  return report.test ? metric_value(*report.test, report.selection) : report.best_metric;
}

ReportContext context_for(const RunConfig& config, std::uint64_t seed) {
  return {config.classifier.head, config.classifier.model.variant, config.classifier.model.task, seed};
}

void write_json(const fs::path& path, const ojson& doc) { write_file(path, doc.dump(2) + "\n"); }

ojson summary_json(const Summary& s) {
  ojson j;
  j["mean"] = s.mean;
  j["std"] = s.std;
  return j;
}

}  // namespace

TrainSummary run_train(RunConfig config, const fs::path& out) {
  LoadedData loaded = load_data(config);
  config.validate();
  const Dataset& data = loaded.data;
  const Split split = experiment_split(config, data.size());
  if (loaded.vocab && config.vocab.empty()) loaded.vocab->save(out / "vocab.txt");

  TrainSummary summary;
  summary.metric = config.train.selection_for(data.task);
  std::vector<double> metrics;
  ojson runs = ojson::array();
  ojson run_seconds = ojson::array();
  double total_seconds = 0.0;
  for (std::size_t r = 0; r < config.runs; ++r) {
    const std::uint64_t seed = config.train.seed + r;
    TrainConfig tc = config.train;
    tc.seed = seed;
    Classifier model(config.classifier, seed);
    TrainingOutcome outcome = train_model(model, data, split, tc);
    const fs::path dir = out / ("run_" + std::to_string(r));
    write_file(dir / "report.json", report_json(outcome.report, context_for(config, seed)));
    save_checkpoint(dir / "checkpoint.itck", model.params(), model.buffers());
    RunResult result{seed, std::move(outcome.report), 0.0};
    result.metric = run_metric(result.report);
    metrics.push_back(result.metric);
    ojson j;
    j["seed"] = seed;
    j["best_epoch"] = result.report.best_epoch;
    j["metric"] = result.metric;
    runs.push_back(std::move(j));
    run_seconds.push_back(result.report.total_seconds);
    total_seconds += result.report.total_seconds;
    summary.runs.push_back(std::move(result));
  }
  summary.summary = summarize(metrics);

  ojson doc;
  doc["model"] = std::string(to_string(config.classifier.head));
  doc["variant"] = std::string(to_string(config.classifier.model.variant));
  doc["task"] = std::string(to_string(data.task));
  doc["metric"] = std::string(to_string(summary.metric));
  doc["split"] = {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}};
  doc["runs"] = std::move(runs);
  doc["summary"] = summary_json(summary.summary);
  doc["timing"] = {{"run_seconds", std::move(run_seconds)}, {"total_seconds", total_seconds}};
  write_json(out / "summary.json", doc);
  return summary;
}

XvalSummary run_xval(RunConfig config, const fs::path& out) {
  LoadedData loaded = load_data(config);
  config.validate();
  const Dataset& data = loaded.data;
  const std::vector<Fold> folds = kfold_split(data.size(), config.folds, config.train.seed);
  XvalSummary summary;
  summary.metric = config.train.selection_for(data.task);
  std::vector<double> inc;
  std::vector<double> base;
  ojson fold_docs = ojson::array();
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::uint64_t seed = config.train.seed + f;
    // Selection subset: the last tenth of a seeded shuffle of the fold's training part.
    std::vector<std::size_t> train = folds[f].train;
    Rng rng(derive_seed(seed, 0x5E1EC7));
    rng.shuffle(std::span<std::size_t>(train));
    const std::size_t n_select = std::max<std::size_t>(1, train.size() / 10);
    if (n_select >= train.size()) throw InputError("xval: fold " + std::to_string(f) + " too small to hold out a selection subset");
    Split split;
    split.validation.assign(train.end() - static_cast<std::ptrdiff_t>(n_select), train.end());
    train.resize(train.size() - n_select);
    split.train = std::move(train);
    split.test = folds[f].validation;

    FoldResult result{f, 0.0, 0.0};
    for (HeadKind head : {HeadKind::inceptive, HeadKind::baseline}) {
      ClassifierConfig cc = config.classifier;
      cc.head = head;
      TrainConfig tc = config.train;
      tc.seed = seed;
      Classifier model(cc, seed);
      const TrainingOutcome outcome = train_model(model, data, split, tc);
      (head == HeadKind::inceptive ? result.inceptive : result.baseline) = run_metric(outcome.report);
    }
    inc.push_back(result.inceptive);
    base.push_back(result.baseline);
    fold_docs.push_back({{"fold", f},
                         {"train", split.train.size()},
                         {"selection", split.validation.size()},
                         {"held_out", split.test.size()},
                         {"inceptive", result.inceptive},
                         {"baseline", result.baseline}});
    summary.folds.push_back(result);
  }
  summary.inceptive = summarize(inc);
  summary.baseline = summarize(base);
  ojson doc;
  doc["task"] = std::string(to_string(data.task));
  doc["variant"] = std::string(to_string(config.classifier.model.variant));
  doc["metric"] = std::string(to_string(summary.metric));
  doc["folds"] = std::move(fold_docs);
  doc["summary"] = {{"inceptive", summary_json(summary.inceptive)}, {"baseline", summary_json(summary.baseline)}};
  write_json(out / "xval.json", doc);
  return summary;
}

namespace {

Classifier load_classifier(const RunConfig& config, const fs::path& checkpoint) {
  Checkpoint ck = load_checkpoint(checkpoint);
  return Classifier(config.classifier, std::move(ck.params), std::move(ck.buffers));
}

}  // namespace

EvalMetrics run_eval(RunConfig config, const fs::path& checkpoint, const fs::path& out) {
  LoadedData loaded = load_data(config);
  Classifier model = load_classifier(config, checkpoint);
  const Split split = experiment_split(config, loaded.data.size());
  const auto& indices = split.test.empty() ? split.validation : split.test;
  EvalMetrics m = evaluate(model, loaded.data, indices, config.train);
  RunReport r;
  r.test = m;
  r.selection = config.train.selection_for(loaded.data.task);
  ojson doc = ojson::parse(report_json(r, context_for(config, config.train.seed)));
  ojson slim;
  slim["model"] = doc["model"];
  slim["variant"] = doc["variant"];
  slim["task"] = doc["task"];
  slim["examples"] = indices.size();
  slim["metrics"] = doc["test"];
  slim["timing"] = {{"inference_seconds", m.inference_seconds}};
  write_json(out / "eval.json", slim);
  return m;
}

AttentionSummary run_attnmap(RunConfig config, const fs::path& checkpoint, const fs::path& out,
                             std::size_t max_examples) {
  LoadedData loaded = load_data(config);
  Classifier model = load_classifier(config, checkpoint);
  const Split split = experiment_split(config, loaded.data.size());
  const auto& indices = split.test.empty() ? split.validation : split.test;

  std::vector<AttentionMap> head_maps;
  std::vector<AttentionMap> cls_maps;
  Rng unused(0);
  for (std::size_t start = 0; start < indices.size(); start += config.train.batch_size) {
    const std::size_t end = std::min(indices.size(), start + config.train.batch_size);
    std::span<const std::size_t> batch(indices.data() + start, end - start);
    ClassifierOutput o = model.forward(loaded.data, batch, Mode::eval, unused);
    if (o.head_attention) {
      for (AttentionMap& m : attention_received(*o.head_attention)) head_maps.push_back(std::move(m));
    }
    if (o.encoder_attention) {
      for (AttentionMap& m : cls_row_attention(*o.encoder_attention)) cls_maps.push_back(std::move(m));
    }
  }

  AttentionSummary summary;
  summary.examples = indices.size();
  auto emit = [&](const std::vector<AttentionMap>& maps, const std::string& kind, std::optional<double>& pos0,
                  std::optional<double>& entropy) {
    if (maps.empty()) return;
    double p = 0.0;
    double h = 0.0;
    for (const AttentionMap& m : maps) {
      p += m.received.front();
      h += attention_entropy(m);
    }
    pos0 = p / static_cast<double>(maps.size());
    entropy = h / static_cast<double>(maps.size());
    const std::size_t shown = std::min(max_examples, maps.size());
    for (std::size_t i = 0; i < shown; ++i) {
      write_file(out / (kind + "_example" + std::to_string(i) + ".csv"), attention_csv(maps[i]));
    }
    if (shown > 0) {
      write_file(out / (kind + ".pgm"), attention_pgm(std::vector<AttentionMap>(maps.begin(), maps.begin() + static_cast<std::ptrdiff_t>(shown))));
    }
  };
  emit(head_maps, "head", summary.head_position0, summary.head_entropy);
  emit(cls_maps, "cls", summary.cls_position0, summary.cls_entropy);

  auto opt = [](const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); };
  ojson doc;
  doc["model"] = std::string(to_string(config.classifier.head));
  doc["examples"] = summary.examples;
  doc["head"] = {{"position0", opt(summary.head_position0)}, {"entropy", opt(summary.head_entropy)}};
  doc["cls"] = {{"position0", opt(summary.cls_position0)}, {"entropy", opt(summary.cls_entropy)}};
  write_json(out / "attnmap.json", doc);
  return summary;
}

SyntheticData run_synth(const SyntheticSpec& spec, const fs::path& out) {
  SyntheticData data = generate_synthetic(spec);
  write_jsonl(out / "data.jsonl", data.records);
  write_file(out / "cues.jsonl", serialize_cues(data));
  Vocabulary::build(data.records).save(out / "vocab.txt");
  return data;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto a = cell.find_first_not_of(" \t\r");
    const auto b = cell.find_last_not_of(" \t\r");
    cells.push_back(a == std::string::npos ? std::string() : cell.substr(a, b - a + 1));
  }
  return cells;
}

bool parse_number(const std::string& s, double& v) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && ptr == end && !s.empty();
}

std::vector<std::vector<double>> read_columns(const fs::path& path, std::size_t expected) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<double>> cols(expected);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    if (cells.size() != expected) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(expected) +
                       " column(s), found " + std::to_string(cells.size()));
    }
    std::vector<double> row(expected);
    bool numeric = true;
    for (std::size_t i = 0; i < expected; ++i) numeric = numeric && parse_number(cells[i], row[i]);
    if (!numeric) {
      if (line_no == 1) continue;  // header
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": non-numeric score");
    }
    for (std::size_t i = 0; i < expected; ++i) cols[i].push_back(row[i]);
  }
  return cols;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw InputError("stats: no scores");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

StatsResult run_stats(const std::vector<fs::path>& inputs) {
  std::vector<double> a;
  std::vector<double> b;
  if (inputs.size() == 1) {
    auto cols = read_columns(inputs[0], 2);
    a = std::move(cols[0]);
    b = std::move(cols[1]);
  } else if (inputs.size() == 2) {
    a = std::move(read_columns(inputs[0], 1)[0]);
    b = std::move(read_columns(inputs[1], 1)[0]);
  } else {
    throw InputError("stats: expected one two-column CSV or two one-column CSVs");
  }
  if (a.size() != b.size()) {
    throw InputError("stats: score lists differ in length (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  StatsResult r;
  r.mean_a = mean_of(a);
  r.mean_b = mean_of(b);
  r.test = wilcoxon_signed_rank(a, b);
  if (r.mean_a == 0.0) throw UndefinedMetricError("stats: gain undefined for a zero baseline mean");
  r.gain_percent = (r.mean_b - r.mean_a) / r.mean_a * 100.0;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inceptive classification head: training, evaluation and analysis"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t runs = 0;
  std::string model;
  std::string variant;
  std::string out_dir = "out";
  auto* o_config = app.add_option("--config", config_path, "Flat JSON config file");
  auto* o_seed = app.add_option("--seed", seed, "Base seed");
  auto* o_runs = app.add_option("--runs", runs, "Number of seeded runs");
  auto* o_model = app.add_option("--model", model, "inceptive or baseline");
  auto* o_variant = app.add_option("--variant", variant, "full, no_attn or no_dense");
  app.add_option("--out", out_dir, "Output directory");

  auto* train = app.add_subcommand("train", "Seeded training runs with per-run reports and a summary");
  auto* xval = app.add_subcommand("xval", "k-fold cross-validation of the inceptive and baseline heads");

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval->add_option("--checkpoint", checkpoint, "ITCK checkpoint")->required();

  std::size_t max_examples = 8;
  auto* attnmap = app.add_subcommand("attnmap", "Export received-attention maps");
  attnmap->add_option("--checkpoint", checkpoint, "ITCK checkpoint")->required();
  attnmap->add_option("--examples", max_examples, "Examples to export");

  SyntheticSpec spec;
  std::string synth_task = "phrase-cue-multiclass";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--task", synth_task, "phrase-cue-multiclass or dispersed-multilabel");
  synth->add_option("--examples", spec.n_examples, "Number of examples");
  synth->add_option("--seq-len", spec.seq_len, "Sequence length including the CLS slot");
  synth->add_option("--vocab-size", spec.vocab_size, "Distinct word types");
  synth->add_option("--classes", spec.n_classes, "Number of classes / labels");
  synth->add_option("--avg-labels", spec.avg_labels_per_example, "Mean labels per example (multi-label)");
  synth->add_option("--cue-lengths", spec.cue_lengths, "Cue n-gram length per class");
  synth->add_option("--noise", spec.noise_rate, "Noise rate");

  std::vector<std::string> stats_inputs;
  auto* stats = app.add_subcommand("stats", "Exact Wilcoxon signed-rank test on paired per-run scores");
  stats->add_option("inputs", stats_inputs, "Two-column CSV, or two one-column CSVs")->required()->expected(1, 2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    GlobalOptions g;
    if (*o_config) g.config = config_path;
    if (*o_seed) g.seed = seed;
    if (*o_runs) g.runs = runs;
    if (*o_model) g.model = parse_head_kind(model);
    if (*o_variant) g.variant = parse_variant(variant);
    g.out = out_dir;

    if (train->parsed()) {
      const TrainSummary s = run_train(resolve_config(g), g.out);
      out << s.runs.size() << " run(s), " << to_string(s.metric) << " mean " << format_double("%.6f", s.summary.mean)
          << " std " << format_double("%.6f", s.summary.std) << "\n";
    } else if (xval->parsed()) {
      const XvalSummary s = run_xval(resolve_config(g), g.out);
      out << s.folds.size() << " folds, " << to_string(s.metric) << ": inceptive "
          << format_double("%.6f", s.inceptive.mean) << " +/- " << format_double("%.6f", s.inceptive.std)
          << ", baseline " << format_double("%.6f", s.baseline.mean) << " +/- "
          << format_double("%.6f", s.baseline.std) << "\n";
    } else if (eval->parsed()) {
      const EvalMetrics m = run_eval(resolve_config(g), checkpoint, g.out);
      out << "accuracy " << format_double("%.6f", m.accuracy) << " micro_f1 " << format_double("%.6f", m.micro.f1)
          << " macro_f1 " << format_double("%.6f", m.macro.f1) << "\n";
    } else if (attnmap->parsed()) {
      const AttentionSummary s = run_attnmap(resolve_config(g), checkpoint, g.out, max_examples);
      if (s.head_position0) {
        out << "head: position0 " << format_double("%.6f", *s.head_position0) << " entropy "
            << format_double("%.6f", *s.head_entropy) << "\n";
      }
      if (s.cls_position0) {
        out << "cls: position0 " << format_double("%.6f", *s.cls_position0) << " entropy "
            << format_double("%.6f", *s.cls_entropy) << "\n";
      }
    } else if (synth->parsed()) {
      spec.task = parse_synthetic_task(synth_task);
      if (g.seed) spec.seed = *g.seed;
      const SyntheticData d = run_synth(spec, g.out);
      out << d.records.size() << " examples written to " << g.out.string() << "\n";
    } else if (stats->parsed()) {
      std::vector<fs::path> paths(stats_inputs.begin(), stats_inputs.end());
      const StatsResult r = run_stats(paths);
      out << "n " << r.test.n << " W " << format_double("%g", r.test.statistic) << " p "
          << format_double("%.9g", r.test.p_value) << " mean_a " << format_double("%.4f", r.mean_a) << " mean_b "
          << format_double("%.4f", r.mean_b) << " gain " << format_double("%+.2f", r.gain_percent) << "%\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    err << "shape error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace inceptive
