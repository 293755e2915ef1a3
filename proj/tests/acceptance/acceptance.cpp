// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// line fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>

#include "bliss/bliss.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace bliss;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int g_failures = 0;

void report(const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS  " : "FAIL  ") << name << "  " << o.detail << std::endl;
  if (!o.pass) ++g_failures;
}

void check(const std::string& name, const std::function<Outcome()>& body) {
  try {
    report(name, body());
  } catch (const std::exception& e) {
    report(name, {false, std::string("exception: ") + e.what()});
  }
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

LabeledScores random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> size(2, 300);
  std::uniform_int_distribution<int> levels(1, 40);
  std::uniform_real_distribution<double> shift(0.0, 0.5);
  const std::size_t n = size(rng);
  std::uniform_int_distribution<int> value(0, levels(rng));  // coarse grid, many ties
  const double sep = shift(rng);
  std::bernoulli_distribution anomaly(0.3);
  LabeledScores ls;
  for (std::size_t i = 0; i < n; ++i) {
    const bool a = anomaly(rng);
    ls.labels.push_back(a ? 1 : 0);
    ls.scores.push_back(value(rng) + (a ? sep * 10.0 : 0.0));
  }
  ls.labels[0] = 0;
  ls.labels[1] = 1;
  return ls;
}

Outcome auroc_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto ls = random_instance(rng);
    worst = std::max(worst, std::abs(auroc(ls) - testing::pairwise_auroc(ls.scores, ls.labels)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 10.0, "max |diff| " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome fpr_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1002);
  int mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    const auto ls = random_instance(rng);
    if (fpr_at_tpr(ls, 0.95) != testing::sweep_fpr_at_tpr(ls.scores, ls.labels, 0.95)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0, std::to_string(mismatches) + " mismatches, " + fmt(secs) + " s"};
}

Outcome standardization() {
  std::mt19937_64 rng(1003);
  std::uniform_int_distribution<std::size_t> classes(1, 6), per(5, 80), dim(4, 64);
  double worst_mean = 0.0, worst_std = 0.0;
  for (int cfg = 0; cfg < 20; ++cfg) {
    const auto p = testing::random_problem(rng(), classes(rng), per(rng), 1, 0, dim(rng));
    const auto bank = build_bank(p.train, p.train_labels, p.class_text, p.classes);
    for (std::size_t c = 0; c < bank.n_classes(); ++c) {
      std::vector<double> ic;
      for (std::size_t r = 0; r < bank.train(c).size(); ++r) {
        ic.push_back(internal_class_score(bank.train(c).row(r), bank, p.classes[c]));
      }
      const auto m = testing::two_pass_moments(ic);
      worst_mean = std::max(worst_mean, std::abs(m.mean));
      worst_std = std::max(worst_std, std::abs(m.std - 1.0));
    }
  }
  return {worst_mean <= 1e-6 && worst_std <= 1e-3,
          "max |mean| " + fmt(worst_mean) + ", max |std - 1| " + fmt(worst_std)};
}

Outcome equivalences() {
  const auto p = testing::random_problem(1004, 4, 40, 120, 400, 24);
  const Dictionary dict(p.dict);
  const auto bank = attach_dictionary(build_bank(p.train, p.train_labels, p.class_text, p.classes), dict);
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < p.test.size(); ++i) labels.push_back(i % 4 == 0 ? 1 : 0);

  ScoringConfig zero;
  zero.lambda = 0.0;
  double d_biased = 0.0;
  for (std::size_t t = 0; t < p.test.size(); ++t) {
    d_biased = std::max(d_biased, std::abs(bliss_score(p.test.row(t), bank, dict, zero).score -
                                           biased_score(p.test.row(t), bank)));
  }

  double d_batch = 0.0;
  const ScoringConfig cfg;
  const auto batch = score_batch(p.test, bank, &dict, cfg, {Method::bliss, kDefaultKnn, 4});
  for (std::size_t t = 0; t < p.test.size(); ++t) {
    d_batch = std::max(d_batch, std::abs(batch[t].score - bliss_score(p.test.row(t), bank, dict, cfg).score));
  }

  double d_sweep = 0.0;
  const std::vector<double> lambdas{0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 2.0};
  for (const auto& row : lambda_sweep(p.test, labels, bank, dict, cfg, lambdas, 2)) {
    ScoringConfig c;
    c.lambda = row.lambda;
    const auto ref = evaluate(labeled_scores(score_batch(p.test, bank, &dict, c), labels));
    d_sweep = std::max({d_sweep, std::abs(row.report.auroc - ref.auroc), std::abs(row.report.fpr95 - ref.fpr95)});
  }

  std::mt19937_64 rng(1005);
  std::uniform_int_distribution<int> coarse(0, 50);
  std::uniform_int_distribution<std::size_t> len(1, 200);
  int topk_bad = 0;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> v(len(rng));
    for (auto& x : v) x = coarse(rng) / 50.0;
    const std::size_t k = std::min<std::size_t>(v.size(), 10);
    if (topk_indices(v, k) != testing::sort_topk(v, k)) ++topk_bad;
  }
  return {d_biased <= 1e-12 && d_batch <= 1e-9 && d_sweep <= 1e-9 && topk_bad == 0,
          "lambda0-vs-biased " + fmt(d_biased) + ", batch " + fmt(d_batch) + ", sweep " + fmt(d_sweep) +
              ", topk mismatches " + std::to_string(topk_bad)};
}

Outcome bias_correction() {
  const auto t0 = Clock::now();
  int wins = 0, close = 0;
  double improvement = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto biased = synth::bias_benchmark(synth::SynthConfig::biased(seed), {}, kDefaultKnn, 0);
    const auto flat = synth::bias_benchmark(synth::SynthConfig::unbiased(seed), {}, kDefaultKnn, 0);
    wins += biased.auroc_bliss > biased.auroc_biased;
    improvement += biased.auroc_bliss - biased.auroc_biased;
    close += std::abs(flat.auroc_bliss - flat.auroc_biased) < 0.03;
    per_seed += " " + fmt(biased.auroc_bliss) + "/" + fmt(biased.auroc_biased);
  }
  improvement /= 5.0;
  const double secs = seconds_since(t0);
  return {wins == 5 && improvement >= 0.05 && close == 5 && secs < 60.0,
          "wins " + std::to_string(wins) + "/5, mean gain " + fmt(improvement) + ", unbiased within 0.03 " +
              std::to_string(close) + "/5, " + fmt(secs) + " s; bliss/biased:" + per_seed};
}

Outcome clustering_shape() {
  const auto w = synth::generate(synth::SynthConfig::biased(0));
  const auto rep = text_clustering_report(w.class_text_embs, w.train, w.train_labels, w.dictionary);
  const double a = rep.image_to_label_summary.mean;
  const double b = rep.label_to_dict_summary.mean;
  return {std::abs(a - 0.25) <= 0.1 && std::abs(b - 0.75) <= 0.1,
          "image-label mean " + fmt(a) + ", label-dictionary mean " + fmt(b)};
}

Outcome error_profile_shape() {
  int ok = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto w = synth::generate(synth::SynthConfig::biased(seed));
    const auto recs = score_batch(w.test, w.bank(), nullptr, {}, {Method::biased, kDefaultKnn, 0});
    const auto sims = avg_dict_similarities(w.test, w.dictionary);
    const auto prof = error_quantile_profile(labeled_scores(recs, w.test_is_anomaly), sims, 10);
    const std::size_t top = prof.n_quantiles - 1;
    const bool fn_up = prof.fn_proportion[top] > prof.fn_proportion[0];
    const bool fp_down = prof.fp_proportion[0] > prof.fp_proportion[top];
    ok += fn_up && fp_down;
    detail += " FN " + fmt(prof.fn_proportion[0]) + "->" + fmt(prof.fn_proportion[top]) + " FP " +
              fmt(prof.fp_proportion[0]) + "->" + fmt(prof.fp_proportion[top]) + ";";
  }
  return {ok == 5, std::to_string(ok) + "/5 seeds;" + detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(BLISS_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome round_trip_and_determinism() {
  const fs::path dir = fs::temp_directory_path() / ("bliss_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto p = [&](const std::string& leaf) { return (dir / leaf).string(); };

  std::mt19937_64 rng(1006);
  int bitwise_bad = 0;
  for (std::size_t dim : {1u, 3u, 64u, 512u}) {
    const auto m = testing::random_matrix(rng, 17, dim);
    write_embeddings(dir / "rt.beb", m, make_manifest(m));
    const auto back = read_embeddings(dir / "rt.beb");
    if (back.matrix.ids() != m.ids() || back.matrix.data().size() != m.data().size() ||
        std::memcmp(back.matrix.data().data(), m.data().data(), m.data().size() * 4) != 0) {
      ++bitwise_bad;
    }
  }

  const fs::path log = dir / "log.txt";
  const std::vector<std::pair<std::string, std::vector<std::string>>> cmds{
      {"synth --preset biased --seed 11 --out-dir " + dir.string(),
       {"train.beb", "train.beb.manifest.json", "test.beb", "test.beb.manifest.json", "classes.beb",
        "classes.beb.manifest.json", "dictionary.beb", "dictionary.beb.manifest.json", "labels.csv", "bias.csv",
        "config.json"}},
      {"score --config " + p("config.json"), {"scores.csv", "labels.csv"}},
      {"eval --scores " + p("scores.csv") + " --labels " + p("labels.csv") + " --out " + p("report.json"),
       {"report.json"}},
      {"eval --config " + p("config.json"), {"report.json"}},
      {"sweep --config " + p("config.json"), {"sweep.csv"}},
      {"diagnose --mode bias --config " + p("config.json") + " --out " + p("bq.csv") + " --summary " + p("bq.json"),
       {"bq.csv", "bq.json"}},
      {"diagnose --mode clustering --config " + p("config.json") + " --images " + p("train.beb") + " --out " +
           p("cl.csv") + " --summary " + p("cl.json"),
       {"cl.csv", "cl.json"}},
      {"splits --dataset-classes a,b,c,d --mode one_class --dataset toy --out " + p("sp.json"), {"sp.json"}},
      {"inspect --file " + p("dictionary.beb"), {"log.txt"}},
  };
  std::vector<std::string> differing;
  for (const auto& [args, files] : cmds) {
    const std::string name = args.substr(0, args.find(' '));
    if (run_cli(args, log) != 0) {
      differing.push_back(name + "(exit)");
      continue;
    }
    std::vector<std::string> first;
    for (const auto& f : files) first.push_back(slurp(dir / f));
    if (run_cli(args, log) != 0) {
      differing.push_back(name + "(exit)");
      continue;
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
      if (first[i].empty() || slurp(dir / files[i]) != first[i]) differing.push_back(name + ":" + files[i]);
    }
  }
  fs::remove_all(dir);
  std::string diff_list;
  for (const auto& d : differing) diff_list += " " + d;
  return {bitwise_bad == 0 && differing.empty(),
          "round-trip failures " + std::to_string(bitwise_bad) + ", CLI subcommands checked " +
              std::to_string(cmds.size()) + ", differing:" + (diff_list.empty() ? " none" : diff_list)};
}

}  // namespace

int main() {
  check("auroc-oracle", auroc_oracle);
  check("fpr95-oracle", fpr_oracle);
  check("standardization", standardization);
  check("equivalences", equivalences);
  check("bias-correction", bias_correction);
  check("clustering-shape", clustering_shape);
  check("error-profile-shape", error_profile_shape);
  check("round-trip-determinism", round_trip_and_determinism);
  std::cout << (g_failures == 0 ? "ALL PASS" : std::to_string(g_failures) + " FAILED") << std::endl;
  return g_failures == 0 ? 0 : 1;
}
