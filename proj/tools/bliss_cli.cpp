// bliss: command-line front end for scoring, evaluation, diagnostics,
// class splits and synthetic benchmarks.
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bliss/bliss.hpp"
#include "bliss/csv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log(const std::string& msg) { std::cerr << "[bliss] " << msg << '\n'; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bliss::LoadedEmbeddings load(const std::string& path, const char* what) {
  auto loaded = bliss::read_embeddings(path);
  for (const auto& w : loaded.warnings) log("warning: " + w);
  log(std::string("loaded ") + what + " '" + path + "': " + std::to_string(loaded.matrix.size()) + " x " +
      std::to_string(loaded.matrix.dim()));
  return loaded;
}

// Options shared by score, sweep and diagnose --mode bias. Values given on
// the command line override the config file.
struct DataOptions {
  std::string config;
  std::string train, test, classes, dict, normal_classes, method, exclude;
  double lambda = 0.5;
  std::size_t k = 10;
  double epsilon = 1e-8;
  std::size_t k_nn = bliss::kDefaultKnn;

  CLI::Option* o_lambda = nullptr;
  CLI::Option* o_k = nullptr;
  CLI::Option* o_epsilon = nullptr;
  CLI::Option* o_k_nn = nullptr;

  void add_to(CLI::App* cmd, const std::string& default_method) {
    method = default_method;
    cmd->add_option("--config", config, "experiment config JSON");
    cmd->add_option("--train", train, "train embedding file (labelled)");
    cmd->add_option("--test", test, "test embedding file");
    cmd->add_option("--classes", classes, "class-label text embedding file (ids = class names)");
    cmd->add_option("--dict", dict, "dictionary embedding file");
    cmd->add_option("--normal-classes", normal_classes, "comma-separated normal classes");
    cmd->add_option("--method", method, "bliss | biased | knn");
    cmd->add_option("--exclude-entries", exclude, "comma-separated dictionary entries to drop");
    o_lambda = cmd->add_option("--lambda", lambda, "external text score weight");
    o_k = cmd->add_option("--k", k, "top-K dictionary matches");
    o_epsilon = cmd->add_option("--epsilon", epsilon, "division guard");
    o_k_nn = cmd->add_option("--k-nn", k_nn, "neighbours for the knn baseline");
  }

  bliss::ExperimentConfig resolve(const CLI::App* cmd) const {
    bliss::ExperimentConfig c;
    if (!config.empty()) c = bliss::load_experiment_config(config);
    if (!train.empty()) c.train = train;
    if (!test.empty()) c.test = test;
    if (!classes.empty()) c.class_text = classes;
    if (!dict.empty()) c.dictionary = dict;
    if (!normal_classes.empty()) c.normal_classes = split_list(normal_classes);
    if (!exclude.empty()) c.exclude_dictionary_entries = split_list(exclude);
    if (cmd->count("--method") > 0 || config.empty()) c.method = bliss::parse_method(method);
    if (o_lambda->count() > 0) c.scoring.lambda = lambda;
    if (o_k->count() > 0) c.scoring.k = k;
    if (o_epsilon->count() > 0) c.scoring.epsilon = epsilon;
    if (o_k_nn->count() > 0) c.k_nn = k_nn;
    c.scoring.validate();
    if (c.train.empty() || c.test.empty() || c.class_text.empty()) {
      throw bliss::Error(bliss::ErrorCode::InvalidConfig, "train, test and class-text files are required");
    }
    if (c.method == bliss::Method::bliss && c.dictionary.empty()) {
      throw bliss::Error(bliss::ErrorCode::InvalidConfig, "method bliss requires a dictionary (--dict)");
    }
    return c;
  }
};

struct Experiment {
  bliss::ExperimentConfig config;
  bliss::NormalMemoryBank bank;
  std::optional<bliss::Dictionary> dict;
  bliss::EmbeddingMatrix test;
  std::optional<std::vector<std::string>> test_labels;

  /// 1 for test rows whose label is not a normal class.
  std::vector<std::uint8_t> anomaly_labels() const {
    if (!test_labels) {
      throw bliss::Error(bliss::ErrorCode::ManifestInvalid, "test manifest has no labels");
    }
    const std::unordered_set<std::string> normal(bank.class_names().begin(), bank.class_names().end());
    std::vector<std::uint8_t> out;
    for (const auto& l : *test_labels) out.push_back(normal.count(l) ? 0 : 1);
    return out;
  }
};

Experiment load_experiment(const bliss::ExperimentConfig& cfg, unsigned threads) {
  const auto train = load(cfg.train, "train");
  const auto classes = load(cfg.class_text, "class text");
  const auto& train_labels = train.labels();

  std::vector<std::string> normal = cfg.normal_classes;
  if (normal.empty()) {
    const std::unordered_set<std::string> present(train_labels.begin(), train_labels.end());
    for (const auto& id : classes.matrix.ids()) {
      if (present.count(id)) normal.push_back(id);
    }
  }
  std::vector<std::size_t> class_rows;
  for (const auto& c : normal) {
    const std::size_t r = classes.matrix.find(c);
    if (r == classes.matrix.size()) {
      throw bliss::Error(bliss::ErrorCode::UnknownClass, "normal class '" + c + "' has no class-text embedding");
    }
    class_rows.push_back(r);
  }
  const std::unordered_set<std::string> normal_set(normal.begin(), normal.end());
  std::vector<std::size_t> train_rows;
  std::vector<std::string> kept_labels;
  for (std::size_t i = 0; i < train_labels.size(); ++i) {
    if (normal_set.count(train_labels[i])) {
      train_rows.push_back(i);
      kept_labels.push_back(train_labels[i]);
    }
  }

  Experiment ex{cfg, bliss::build_bank(train.matrix.select(train_rows), kept_labels,
                                       classes.matrix.select(class_rows), normal),
                std::nullopt, {}, std::nullopt};
  log("bank: " + std::to_string(ex.bank.n_classes()) + " normal classes, " +
      std::to_string(ex.bank.total_train()) + " train samples");

  if (!cfg.dictionary.empty()) {
    auto d = load(cfg.dictionary, "dictionary");
    std::vector<std::string> entries = d.manifest.labels ? *d.manifest.labels : d.matrix.ids();
    bliss::Dictionary dict(std::move(entries), std::move(d.matrix));
    if (!cfg.exclude_dictionary_entries.empty()) {
      dict = bliss::exclude_entries(dict, cfg.exclude_dictionary_entries);
      log("dictionary after exclusion: " + std::to_string(dict.size()) + " entries");
    }
    ex.bank = bliss::attach_dictionary(ex.bank, dict, threads);
    ex.dict = std::move(dict);
  }
  auto test = load(cfg.test, "test");
  ex.test = std::move(test.matrix);
  ex.test_labels = std::move(test.manifest.labels);
  return ex;
}

std::vector<bliss::ScoreRecord> run_scores(const Experiment& ex, bliss::Method method, unsigned threads) {
  const auto records = bliss::score_batch(ex.test, ex.bank, ex.dict ? &*ex.dict : nullptr, ex.config.scoring,
                                          {method, ex.config.k_nn, threads});
  log("scored " + std::to_string(records.size()) + " samples with " + std::string(bliss::to_string(method)));
  return records;
}

std::string scores_csv(const std::vector<bliss::ScoreRecord>& records, bliss::Method method) {
  std::string out = bliss::csv::row({"sample_id", "score", "argmin_class", "ic_min", "et_at_argmin", "topk_dict_ids"});
  for (const auto& r : records) {
    std::string ic_min, et;
    if (method != bliss::Method::knn) {
      ic_min = bliss::csv::format_double(*std::min_element(r.ic_per_class.begin(), r.ic_per_class.end()));
      et = bliss::csv::format_double(r.et_per_class[r.argmin]);
    }
    std::string topk;
    for (std::size_t i = 0; i < r.topk_dict_ids.size(); ++i) {
      if (i) topk += ';';
      topk += r.topk_dict_ids[i];
    }
    out += bliss::csv::row({r.sample_id, bliss::csv::format_double(r.score), r.argmin_class, ic_min, et, topk});
  }
  return out;
}

std::string labels_csv(const std::vector<std::string>& ids, const std::vector<std::uint8_t>& labels) {
  std::string out = bliss::csv::row({"sample_id", "label"});
  for (std::size_t i = 0; i < ids.size(); ++i) out += bliss::csv::row({ids[i], labels[i] ? "1" : "0"});
  return out;
}

json report_json(const bliss::EvalReport& r) {
  return {{"auroc", r.auroc},
          {"fpr95", r.fpr95},
          {"n_normal", r.n_normal},
          {"n_anomaly", r.n_anomaly},
          {"n_samples", r.n_normal + r.n_anomaly}};
}

json summary_json(const bliss::DistributionSummary& s, std::size_t n) {
  return {{"n", n},       {"mean", s.mean}, {"std", s.std}, {"min", s.min},
          {"q1", s.q1},   {"median", s.median}, {"q3", s.q3}, {"max", s.max}};
}

void require_out(const std::string& out) {
  if (out.empty()) throw bliss::Error(bliss::ErrorCode::InvalidConfig, "--out is required");
}

// ---------------------------------------------------------------------------

int cmd_score(const CLI::App* cmd, const DataOptions& data, const std::string& out_flag,
              const std::string& labels_out_flag, unsigned threads) {
  const auto cfg = data.resolve(cmd);
  const std::string out = out_flag.empty() ? cfg.scores_out : out_flag;
  require_out(out);
  const auto ex = load_experiment(cfg, threads);
  const auto records = run_scores(ex, cfg.method, threads);
  bliss::write_text_file(out, scores_csv(records, cfg.method));
  log("wrote " + out);
  const std::string labels_out = labels_out_flag.empty() ? cfg.labels_out : labels_out_flag;
  if (!labels_out.empty()) {
    bliss::write_text_file(labels_out, labels_csv(ex.test.ids(), ex.anomaly_labels()));
    log("wrote " + labels_out);
  }
  return 0;
}

int cmd_eval(const std::string& config, std::string scores_path, std::string labels_path, std::string out) {
  if (!config.empty()) {
    const auto cfg = bliss::load_experiment_config(config);
    if (scores_path.empty()) scores_path = cfg.scores_out;
    if (labels_path.empty()) labels_path = cfg.labels_out;
    if (out.empty()) out = cfg.report_out;
  }
  if (scores_path.empty() || labels_path.empty()) {
    throw bliss::Error(bliss::ErrorCode::InvalidConfig, "eval needs --scores and --labels (or a config with both)");
  }
  require_out(out);
  const auto scores = bliss::csv::parse(bliss::read_text_file(scores_path));
  const auto labels = bliss::csv::parse(bliss::read_text_file(labels_path));
  const std::size_t s_id = scores.column("sample_id"), s_val = scores.column("score");
  const std::size_t l_id = labels.column("sample_id"), l_val = labels.column("label");

  std::unordered_map<std::string, std::uint8_t> by_id;
  for (const auto& row : labels.rows) {
    const std::string& v = row[l_val];
    if (v != "0" && v != "1") {
      throw bliss::Error(bliss::ErrorCode::InvalidConfig, "label for '" + row[l_id] + "' must be 0 or 1");
    }
    by_id[row[l_id]] = v == "1" ? 1 : 0;
  }
  bliss::LabeledScores ls;
  for (const auto& row : scores.rows) {
    const auto it = by_id.find(row[s_id]);
    if (it == by_id.end()) throw bliss::Error(bliss::ErrorCode::UnknownLabel, "no label for '" + row[s_id] + "'");
    ls.scores.push_back(bliss::csv::parse_double(row[s_val]));
    ls.labels.push_back(it->second);
  }
  const auto report = bliss::evaluate(ls);
  bliss::write_json_file(out, report_json(report));
  std::cout << "auroc " << bliss::csv::format_double(report.auroc) << "  fpr95 "
            << bliss::csv::format_double(report.fpr95) << '\n';
  log("wrote " + out);
  return 0;
}

int cmd_sweep(const CLI::App* cmd, const DataOptions& data, const std::string& lambdas_flag,
              const std::string& out_flag, unsigned threads) {
  auto cfg = data.resolve(cmd);
  cfg.method = bliss::Method::bliss;
  if (cfg.dictionary.empty()) {
    throw bliss::Error(bliss::ErrorCode::InvalidConfig, "sweep requires a dictionary");
  }
  const std::string out = out_flag.empty() ? cfg.sweep_out : out_flag;
  require_out(out);
  std::vector<double> lambdas;
  for (const auto& s : split_list(lambdas_flag)) lambdas.push_back(bliss::csv::parse_double(s));
  if (lambdas.empty()) throw bliss::Error(bliss::ErrorCode::InvalidConfig, "empty lambda list");

  const auto ex = load_experiment(cfg, threads);
  const auto labels = ex.anomaly_labels();
  const auto rows = bliss::lambda_sweep(ex.test, labels, ex.bank, *ex.dict, cfg.scoring, lambdas, threads);
  std::string text = bliss::csv::row({"lambda", "auroc", "fpr95", "n_normal", "n_anomaly"});
  for (const auto& r : rows) {
    text += bliss::csv::row({bliss::csv::format_double(r.lambda), bliss::csv::format_double(r.report.auroc),
                             bliss::csv::format_double(r.report.fpr95), std::to_string(r.report.n_normal),
                             std::to_string(r.report.n_anomaly)});
  }
  bliss::write_text_file(out, text);
  log("wrote " + out);
  return 0;
}

bliss::ThresholdRule parse_threshold_rule(const std::string& s) {
  if (s == "prevalence") return bliss::ThresholdRule::prevalence();
  if (s.rfind("fixed:", 0) == 0) return bliss::ThresholdRule::fixed(bliss::csv::parse_double(s.substr(6)));
  throw bliss::Error(bliss::ErrorCode::InvalidConfig, "threshold rule must be prevalence or fixed:<tau>");
}

struct DiagnoseOptions {
  std::string mode;
  std::string images;
  std::string out;
  std::string summary;
  std::size_t quantiles = 10;
  std::string threshold_rule = "prevalence";
};

int cmd_diagnose_clustering(const DataOptions& data, const DiagnoseOptions& opt) {
  std::string classes = data.classes, dict = data.dict, images = opt.images;
  if (!data.config.empty()) {
    const auto cfg = bliss::load_experiment_config(data.config);
    if (classes.empty()) classes = cfg.class_text;
    if (dict.empty()) dict = cfg.dictionary;
    if (images.empty()) images = cfg.train;
  }
  if (images.empty()) images = data.train;
  if (classes.empty() || dict.empty() || images.empty()) {
    throw bliss::Error(bliss::ErrorCode::InvalidConfig, "clustering needs --classes, --dict and --images");
  }
  const auto cls = load(classes, "class text");
  const auto img = load(images, "images");
  auto d = load(dict, "dictionary");
  const bliss::Dictionary dictionary(d.manifest.labels ? *d.manifest.labels : d.matrix.ids(), d.matrix);
  const auto rep = bliss::text_clustering_report(cls.matrix, img.matrix, img.labels(), dictionary);

  std::string text = bliss::csv::row({"distribution", "id", "value"});
  for (std::size_t i = 0; i < rep.image_to_label.size(); ++i) {
    text += bliss::csv::row({"image_to_label", rep.image_ids[i], bliss::csv::format_double(rep.image_to_label[i])});
  }
  for (std::size_t i = 0; i < rep.label_to_dict.size(); ++i) {
    text += bliss::csv::row({"label_to_dict", rep.label_names[i], bliss::csv::format_double(rep.label_to_dict[i])});
  }
  bliss::write_text_file(opt.out, text);
  log("image->label mean " + bliss::csv::format_double(rep.image_to_label_summary.mean) + ", label->dict mean " +
      bliss::csv::format_double(rep.label_to_dict_summary.mean));
  if (!opt.summary.empty()) {
    bliss::write_json_file(opt.summary,
                           {{"image_to_label", summary_json(rep.image_to_label_summary, rep.image_to_label.size())},
                            {"label_to_dict", summary_json(rep.label_to_dict_summary, rep.label_to_dict.size())}});
  }
  log("wrote " + opt.out);
  return 0;
}

int cmd_diagnose_bias(const CLI::App* cmd, const DataOptions& data, const DiagnoseOptions& opt,
                      unsigned threads) {
  auto cfg = data.resolve(cmd);
  if (cmd->count("--method") == 0) cfg.method = bliss::Method::biased;
  if (cfg.dictionary.empty()) {
    throw bliss::Error(bliss::ErrorCode::InvalidConfig, "bias diagnosis requires a dictionary");
  }
  const auto rule = parse_threshold_rule(opt.threshold_rule);
  const auto ex = load_experiment(cfg, threads);
  const auto labels = ex.anomaly_labels();
  const auto records = run_scores(ex, cfg.method, threads);
  const auto ls = bliss::labeled_scores(records, labels);
  const auto sims = bliss::avg_dict_similarities(ex.test, *ex.dict, threads);
  const auto prof = bliss::error_quantile_profile(ls, sims, opt.quantiles, rule);

  std::string text = bliss::csv::row(
      {"quantile", "size", "mean_dict_sim", "fn_count", "fp_count", "fn_proportion", "fp_proportion"});
  for (std::size_t q = 0; q < prof.n_quantiles; ++q) {
    text += bliss::csv::row({std::to_string(q), std::to_string(prof.bucket_size[q]),
                             bliss::csv::format_double(prof.mean_dict_sim[q]), std::to_string(prof.fn_count[q]),
                             std::to_string(prof.fp_count[q]), bliss::csv::format_double(prof.fn_proportion[q]),
                             bliss::csv::format_double(prof.fp_proportion[q])});
  }
  bliss::write_text_file(opt.out, text);
  log("threshold " + bliss::csv::format_double(prof.threshold));
  if (!opt.summary.empty()) {
    bliss::write_json_file(opt.summary, {{"threshold", prof.threshold},
                                         {"threshold_rule", opt.threshold_rule},
                                         {"method", std::string(bliss::to_string(cfg.method))},
                                         {"n_quantiles", prof.n_quantiles}});
  }
  log("wrote " + opt.out);
  return 0;
}

int cmd_splits(const std::string& classes_flag, const std::string& mode, const std::string& dataset,
               const std::string& out) {
  require_out(out);
  const auto classes = split_list(classes_flag);
  bliss::SplitMode m;
  if (mode == "one_class") {
    m = bliss::SplitMode::one_class();
  } else if (mode == "leave_one_out") {
    m = bliss::SplitMode::leave_one_out();
  } else if (mode.rfind("fixed:", 0) == 0) {
    m = bliss::SplitMode::fixed_from_json(bliss::read_json_file(mode.substr(6)));
  } else {
    throw bliss::Error(bliss::ErrorCode::InvalidConfig, "mode must be one_class, leave_one_out or fixed:<file>");
  }
  const auto plan = bliss::enumerate_splits(classes, m, dataset);
  bliss::write_json_file(out, plan.to_json());
  log(std::to_string(plan.trials.size()) + " trials written to " + out);
  return 0;
}

int cmd_synth(const std::string& preset, std::uint64_t seed, const std::string& out_dir) {
  bliss::synth::SynthConfig cfg;
  if (preset == "biased") {
    cfg = bliss::synth::SynthConfig::biased(seed);
  } else if (preset == "unbiased") {
    cfg = bliss::synth::SynthConfig::unbiased(seed);
  } else {
    throw bliss::Error(bliss::ErrorCode::InvalidConfig, "preset must be biased or unbiased");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw bliss::Error(bliss::ErrorCode::IoError, "cannot create '" + out_dir + "': " + ec.message());

  const auto world = bliss::synth::generate(cfg);
  const json source = {{"generator", "bliss synth"},
                       {"preset", preset},
                       {"seed", seed},
                       {"dim", cfg.dim},
                       {"text_concentration", cfg.text_concentration},
                       {"image_alignment", cfg.image_alignment},
                       {"bias_amplitude", cfg.bias_amplitude}};
  const auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

  bliss::write_embeddings(path("train.beb"), world.train,
                          bliss::make_manifest(world.train, world.train_labels, source));
  bliss::write_embeddings(path("test.beb"), world.test, bliss::make_manifest(world.test, world.test_labels, source));
  bliss::write_embeddings(path("classes.beb"), world.class_text_embs,
                          bliss::make_manifest(world.class_text_embs, world.class_text_embs.ids(), source));
  bliss::write_embeddings(path("dictionary.beb"), world.dictionary.embs(),
                          bliss::make_manifest(world.dictionary.embs(), world.dictionary.entries(), source));
  bliss::write_text_file(path("labels.csv"), labels_csv(world.test.ids(), world.test_is_anomaly));
  std::string bias = bliss::csv::row({"sample_id", "bias"});
  for (std::size_t i = 0; i < world.test.size(); ++i) {
    bias += bliss::csv::row({world.test.ids()[i], bliss::csv::format_double(world.test_bias[i])});
  }
  bliss::write_text_file(path("bias.csv"), bias);

  bliss::ExperimentConfig ec_out;
  ec_out.train = path("train.beb");
  ec_out.test = path("test.beb");
  ec_out.class_text = path("classes.beb");
  ec_out.dictionary = path("dictionary.beb");
  ec_out.normal_classes = world.normal_classes;
  ec_out.seed = seed;
  ec_out.scores_out = path("scores.csv");
  ec_out.labels_out = path("labels.csv");
  ec_out.report_out = path("report.json");
  ec_out.sweep_out = path("sweep.csv");
  bliss::write_json_file(path("config.json"), ec_out.to_json());
  log("synthetic world (" + preset + ", seed " + std::to_string(seed) + ") written to " + out_dir);
  return 0;
}

int cmd_inspect(const std::string& file) {
  const auto bytes = [&] {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw bliss::Error(bliss::ErrorCode::IoError, "cannot open '" + file + "'");
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }();
  const auto raw = bliss::decode_embedding_file(bytes);
  std::cout << "file            " << file << '\n'
            << "magic           BEB1\n"
            << "version         " << raw.header.version << '\n'
            << "count           " << raw.header.count << '\n'
            << "dim             " << raw.header.dim << '\n'
            << "normalized_flag " << static_cast<int>(raw.header.normalized_flag) << '\n'
            << "payload_sha256  " << raw.payload_sha256 << '\n';

  bool ok = true;
  const std::string mpath = bliss::manifest_path(file);
  if (fs::exists(mpath)) {
    const auto m = bliss::Manifest::from_json(bliss::read_json_file(mpath));
    const bool match = m.sha256 == raw.payload_sha256;
    ok = ok && match;
    std::cout << "hash            " << (match ? "ok" : "MISMATCH (manifest " + m.sha256 + ")") << '\n'
              << "ids             " << m.ids.size() << (m.ids.size() == raw.header.count ? "" : " (count mismatch)")
              << '\n'
              << "labels          " << (m.labels ? std::to_string(m.labels->size()) : std::string("none")) << '\n';
    ok = ok && m.ids.size() == raw.header.count;
  } else {
    std::cout << "hash            unverified (no manifest)\n";
    ok = false;
  }

  if (raw.header.count > 0 && raw.header.dim > 0) {
    double lo = INFINITY, hi = 0.0, acc = 0.0;
    for (std::size_t r = 0; r < raw.header.count; ++r) {
      double sq = 0.0;
      for (std::size_t c = 0; c < raw.header.dim; ++c) {
        const double v = raw.payload[r * raw.header.dim + c];
        sq += v * v;
      }
      const double n = std::sqrt(sq);
      lo = std::min(lo, n);
      hi = std::max(hi, n);
      acc += n;
    }
    std::cout << "norm_min        " << bliss::csv::format_double(lo) << '\n'
              << "norm_max        " << bliss::csv::format_double(hi) << '\n'
              << "norm_mean       " << bliss::csv::format_double(acc / raw.header.count) << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BLISS anomaly scoring over pre-extracted vision-language embeddings"};
  app.require_subcommand(1);
  const unsigned threads = bliss::threads_from_env();

  auto* score = app.add_subcommand("score", "score test embeddings against a normal memory bank");
  DataOptions score_data;
  score_data.add_to(score, "bliss");
  std::string score_out, score_labels_out;
  score->add_option("--out", score_out, "scores CSV");
  score->add_option("--labels-out", score_labels_out, "write sample_id,label (1 = anomaly) CSV");

  auto* eval = app.add_subcommand("eval", "AUROC / FPR95 of a scores CSV");
  std::string eval_config, eval_scores, eval_labels, eval_out;
  eval->add_option("--config", eval_config, "experiment config; supplies defaults for the paths below");
  eval->add_option("--scores", eval_scores, "scores CSV");
  eval->add_option("--labels", eval_labels, "labels CSV (sample_id,label)");
  eval->add_option("--out", eval_out, "report JSON");

  auto* sweep = app.add_subcommand("sweep", "evaluate BLISS over a grid of lambda values");
  DataOptions sweep_data;
  sweep_data.add_to(sweep, "bliss");
  std::string sweep_lambdas = "0.1,0.25,0.5,0.75,1,2", sweep_out;
  sweep->add_option("--lambdas", sweep_lambdas, "comma-separated lambda values");
  sweep->add_option("--out", sweep_out, "sweep CSV");

  auto* diagnose = app.add_subcommand("diagnose", "text clustering and similarity bias diagnostics");
  DataOptions diag_data;
  diag_data.add_to(diagnose, "biased");
  DiagnoseOptions diag;
  diagnose->add_option("--mode", diag.mode, "clustering | bias")->required()->check(CLI::IsMember({"clustering", "bias"}));
  diagnose->add_option("--images", diag.images, "labelled image embeddings (clustering mode)");
  diagnose->add_option("--out", diag.out, "output CSV")->required();
  diagnose->add_option("--summary", diag.summary, "optional summary JSON");
  diagnose->add_option("--quantiles", diag.quantiles, "number of quantile buckets (bias mode)");
  diagnose->add_option("--threshold-rule", diag.threshold_rule, "prevalence | fixed:<tau>");

  auto* splits = app.add_subcommand("splits", "enumerate normal/anomaly class splits");
  std::string split_classes, split_mode, split_dataset = "custom", split_out;
  splits->add_option("--dataset-classes", split_classes, "comma-separated class names")->required();
  splits->add_option("--mode", split_mode, "one_class | leave_one_out | fixed:<file>")->required();
  splits->add_option("--dataset", split_dataset, "dataset name recorded in the plan");
  splits->add_option("--out", split_out, "plan JSON")->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic embedding world");
  std::string synth_preset = "biased", synth_dir;
  std::uint64_t synth_seed = 0;
  synth->add_option("--preset", synth_preset, "biased | unbiased");
  synth->add_option("--seed", synth_seed, "PRNG seed");
  synth->add_option("--out-dir", synth_dir, "output directory")->required();

  auto* inspect = app.add_subcommand("inspect", "print header, hash status and norm statistics");
  std::string inspect_file;
  inspect->add_option("--file", inspect_file, "embedding file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*score) return cmd_score(score, score_data, score_out, score_labels_out, threads);
    if (*eval) return cmd_eval(eval_config, eval_scores, eval_labels, eval_out);
    if (*sweep) return cmd_sweep(sweep, sweep_data, sweep_lambdas, sweep_out, threads);
    if (*diagnose) {
      return diag.mode == "clustering" ? cmd_diagnose_clustering(diag_data, diag)
                                       : cmd_diagnose_bias(diagnose, diag_data, diag, threads);
    }
    if (*splits) return cmd_splits(split_classes, split_mode, split_dataset, split_out);
    if (*synth) return cmd_synth(synth_preset, synth_seed, synth_dir);
    if (*inspect) return cmd_inspect(inspect_file);
  } catch (const bliss::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return bliss::is_io_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
