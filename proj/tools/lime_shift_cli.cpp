// lime_shift: train a black box, explain instances with LIME, and audit the
// explanations for data shift, label shift and fidelity.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lime_shift/audit.hpp"
#include "lime_shift/blackbox.hpp"
#include "lime_shift/dataset.hpp"
#include "lime_shift/external_scorer.hpp"
#include "lime_shift/lime.hpp"
#include "lime_shift/report.hpp"

namespace fs = std::filesystem;
using namespace lime_shift;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised for flag validation failures; always exit code 2.
struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(const Error& e) {
  std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
  const std::string& k = e.kind();
  const bool usage = k == "usage" || k == "parse" || k == "config" || k == "contract";
  return usage ? kExitUsage : kExitRuntime;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
}

std::vector<std::size_t> parse_grid(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    if (!detail::parse_number(detail::trim(item), v) || v == 0) {
      throw UsageError("--n: invalid grid value '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--n: empty grid");
  return out;
}

std::vector<int> parse_classes(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    int v = 0;
    if (!detail::parse_number(detail::trim(item), v)) throw UsageError("--classes: invalid id '" + item + "'");
    out.push_back(v);
  }
  if (out.size() < 2) throw UsageError("--classes needs at least two ids");
  return out;
}

KernelSpec parse_kernel(const std::string& s, const char* flag) {
  if (s == "cosine") return KernelSpec::cosine();
  if (s == "rbf" || s == "rbf:median") return KernelSpec::rbf_median_heuristic();
  if (s.rfind("rbf:", 0) == 0) {
    double g = 0.0;
    if (!detail::parse_number(std::string_view(s).substr(4), g) || !(g > 0.0)) {
      throw UsageError(std::string(flag) + ": rbf gamma must be positive");
    }
    return KernelSpec::rbf(g);
  }
  throw UsageError(std::string(flag) + ": expected cosine, rbf, rbf:median or rbf:<gamma>");
}

struct ScorerFlags {
  std::string model;
  std::string external;
  std::string classes = "0,1";
  double timeout_s = 30.0;

  void add(CLI::App* app) {
    app->add_option("--model", model, "Built-in model file written by `train`");
    app->add_option("--external", external, "Command line of an external scorer process");
    app->add_option("--classes", classes, "Class ids reported by the external scorer, in score order")
        ->capture_default_str();
    app->add_option("--timeout", timeout_s, "External scorer response timeout in seconds")
        ->capture_default_str();
  }

  std::unique_ptr<Scorer> make(std::size_t dim) const {
    if (model.empty() == external.empty()) throw UsageError("exactly one of --model or --external is required");
    if (!model.empty()) {
      auto m = load_model(model);
      if (m.dim != dim) {
        throw UsageError("model dim " + std::to_string(m.dim) + " does not match dataset dim " +
                         std::to_string(dim));
      }
      return std::make_unique<BuiltinScorer>(std::move(m));
    }
    return std::make_unique<ExternalScorer>(
        split_command(external), dim, parse_classes(classes),
        std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0)));
  }
};

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string dataset, out, gamma = "median";
  double reg = 1e-3, lr = 1.0;
  std::size_t epochs = 300;
};

int cmd_train(const TrainArgs& a) {
  KernelSpec kernel = KernelSpec::rbf_median_heuristic();
  if (a.gamma != "median") {
    double g = 0.0;
    if (!detail::parse_number(std::string_view(a.gamma), g) || !(g > 0.0) || !std::isfinite(g)) {
      throw UsageError("--gamma must be a positive number or 'median'");
    }
    kernel = KernelSpec::rbf(g);
  }
  if (!(a.reg > 0.0)) throw UsageError("--reg must be positive");
  if (!(a.lr > 0.0)) throw UsageError("--lr must be positive");
  if (a.epochs < 1) throw UsageError("--epochs must be >= 1");
  const Dataset ds = load_svmlight(a.dataset);
  const TrainResult r = train_kernel_logistic(ds, kernel, {a.reg, a.epochs, a.lr});
  save_model(r.model, a.out);
  std::printf("gamma=%s\nloss=%s\naccuracy=%s\n", fmt6(*r.model.kernel.gamma).c_str(),
              fmt6(r.loss_history.back()).c_str(), fmt6(r.accuracy).c_str());
  return 0;
}

// ---- explain -----------------------------------------------------------------

struct ExplainArgs {
  std::string dataset, json_out;
  ScorerFlags scorer;
  long long instance = 0;
  int class_id = 1;
  std::size_t num_samples = 5000, num_features = 6;
  std::uint64_t seed = 0;
  double ridge = 1.0;
};

nlohmann::ordered_json explanation_to_json(const Explanation& e) {
  nlohmann::ordered_json j;
  j["class_id"] = e.class_id;
  auto feats = nlohmann::ordered_json::array();
  for (const auto& f : e.features) {
    nlohmann::ordered_json fj;
    fj["feature_id"] = f.feature_id;
    fj["weight"] = f.weight;
    feats.push_back(std::move(fj));
  }
  j["features"] = std::move(feats);
  j["intercept"] = e.intercept;
  j["selected"] = e.selected;
  j["loss"] = e.loss;
  j["n_samples"] = e.n_samples;
  j["seed"] = e.seed;
  return j;
}

int cmd_explain(const ExplainArgs& a) {
  if (a.num_samples < 1) throw UsageError("--num-samples must be >= 1");
  if (a.num_features < 1) throw UsageError("--num-features must be >= 1");
  const Dataset ds = load_svmlight(a.dataset);
  if (a.instance < 0 || static_cast<std::size_t>(a.instance) >= ds.size()) {
    throw UsageError("--instance " + std::to_string(a.instance) + " out of range [0, " +
                     std::to_string(ds.size()) + ")");
  }
  const auto scorer = a.scorer.make(ds.dim);
  const auto idx = static_cast<std::size_t>(a.instance);
  ExplainConfig cfg;
  cfg.num_samples = a.num_samples;
  cfg.num_features = a.num_features;
  cfg.ridge = a.ridge;
  cfg.seed = a.seed;
  cfg.instance_id = idx;
  const Explanation e = explain(ds.rows[idx], a.class_id, *scorer, cfg);
  const double f_y = scorer->score(ds.rows[idx]).of(a.class_id);
  const double g_y = surrogate_at_instance(e);

  std::printf("instance %zu class %d samples %zu seed %llu\n", idx, a.class_id, e.n_samples,
              static_cast<unsigned long long>(e.seed));
  std::printf("feature weight\n");
  for (const auto& f : e.features) std::printf("%u %s\n", f.feature_id, fmt6(f.weight).c_str());
  std::printf("intercept %s\nloss %s\nf_y %s\ng_y %s\nfidelity %s\n", fmt6(e.intercept).c_str(),
              fmt6(e.loss).c_str(), fmt6(f_y).c_str(), fmt6(g_y).c_str(), fmt6(fidelity(f_y, g_y)).c_str());
  if (!a.json_out.empty()) {
    auto j = explanation_to_json(e);
    j["fidelity"] = fidelity(f_y, g_y);
    write_file(a.json_out, j.dump(2) + "\n");
  }
  return 0;
}

// ---- audit -------------------------------------------------------------------

struct AuditArgs {
  std::string train, test, out, grid = "2,5,10,20,50,100,200,500", reference = "knn";
  std::string data_kernel = "cosine", label_kernel = "rbf:median", label_space = "vector";
  ScorerFlags scorer;
  int class_id = 1;
  double alpha = 0.05, ridge = 1.0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1, num_features = 6;
  bool null_mode = false;
  long long limit = -1;
};

std::string manifest(const Provenance& p, const fs::path& dir, const std::vector<std::string>& files) {
  nlohmann::ordered_json j;
  j["provenance"] = to_json(p);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& name : files) {
    const std::string bytes = read_file((dir / name).string());
    nlohmann::ordered_json f;
    f["file"] = name;
    f["bytes"] = bytes.size();
    f["digest"] = digest_hex(bytes);
    arr.push_back(std::move(f));
  }
  j["files"] = std::move(arr);
  return j.dump(2) + "\n";
}

int cmd_audit(const AuditArgs& a) {
  AuditConfig cfg;
  cfg.seed = a.seed;
  cfg.alpha = a.alpha;
  cfg.n_grid = parse_grid(a.grid);
  cfg.num_features = a.num_features;
  cfg.ridge = a.ridge;
  cfg.class_id = a.class_id;
  cfg.data_kernel = parse_kernel(a.data_kernel, "--data-kernel");
  cfg.label_kernel = parse_kernel(a.label_kernel, "--label-kernel");
  if (a.label_space != "vector" && a.label_space != "scalar") {
    throw UsageError("--label-space must be vector or scalar");
  }
  cfg.label_space = a.label_space == "vector" ? LabelSpace::score_vector : LabelSpace::explained_class;
  if (a.reference != "knn" && a.reference != "class") throw UsageError("--reference must be knn or class");
  cfg.reference = a.reference == "knn" ? ReferenceStrategy::knn : ReferenceStrategy::class_conditional;
  cfg.mode = a.null_mode ? ComparisonMode::null_draw : ComparisonMode::perturbations;
  cfg.jobs = a.jobs;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  const Dataset train = load_svmlight(a.train);
  Dataset test = load_svmlight(a.test);
  if (train.dim != test.dim) throw UsageError("train and test dims differ");
  if (a.limit >= 0 && static_cast<std::size_t>(a.limit) < test.size()) {
    test.rows.resize(static_cast<std::size_t>(a.limit));
    test.labels.resize(static_cast<std::size_t>(a.limit));
  }
  const auto scorer = a.scorer.make(train.dim);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  AuditReport rep;
  try {
    rep = audit_dataset(test, *scorer, train, cfg);
  } catch (const AuditFailure& f) {
    Provenance p;
    p.seed = cfg.seed;
    p.config_digest = digest_hex(config_to_json(cfg).dump());
    p.train_digest = dataset_digest(train);
    p.test_digest = dataset_digest(test);
    p.scorer = scorer->describe();
    write_file(dir / "rows_partial.csv", render_rows_csv(p, f.partial_rows));
    nlohmann::ordered_json err;
    err["provenance"] = to_json(p);
    err["failures"] = f.failures;
    write_file(dir / "errors.json", err.dump(2) + "\n");
    throw;
  }

  const std::vector<std::string> files = {"report.json", "report.csv", "rows.csv",
                                          "plot_fidelity.csv", "plot_mmd_fidelity.csv", "report.md"};
  write_file(dir / "report.json", to_json(rep).dump(2) + "\n");
  write_file(dir / "report.csv", render_report_csv(rep));
  write_file(dir / "rows.csv", render_rows_csv(rep.provenance, rep.rows));
  write_file(dir / "plot_fidelity.csv", render_plot_fidelity_csv(rep));
  write_file(dir / "plot_mmd_fidelity.csv", render_plot_mmd_fidelity_csv(rep));
  write_file(dir / "report.md", render_markdown(rep));
  write_file(dir / "MANIFEST.json", manifest(rep.provenance, dir, files));
  std::cout << render_markdown(rep);
  return 0;
}

// ---- report ------------------------------------------------------------------

int cmd_report(const std::string& in, const std::string& format) {
  const fs::path path = fs::path(in) / "report.json";
  std::ifstream f(path);
  if (!f) throw ConfigError("missing " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("corrupt report.json: parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  const AuditReport rep = report_from_json(j);
  if (format == "md") {
    std::cout << render_markdown(rep);
  } else if (format == "csv") {
    std::cout << render_report_csv(rep);
  } else {
    std::cout << to_json(rep).dump(2) << "\n";
  }
  return 0;
}

constexpr const char* kCsvSchemas = R"(Report directory (audit --out):
  report.json            full report: provenance, config, per-n aggregates, rows
  report.csv             )"
                                    "test,n,instances,reject,reject_fraction,fail,fail_fraction,mmd_mean,mmd_std,"
                                    "scaled_mean,scaled_std,fidelity_mean,fidelity_std,pearson_mmd_fidelity"
                                    R"(
  rows.csv               instance_id,n,fidelity,f_y_at_x,g_y_at_x,loss,data_mmd_b,data_scaled_stat,
                         data_threshold,data_reject,label_mmd_b,label_scaled_stat,label_threshold,label_reject
  plot_fidelity.csv      n,fidelity_mean,fidelity_std
  plot_mmd_fidelity.csv  test,instance_id,n,mmd_b,fidelity
  report.md              markdown tables
  MANIFEST.json          file digests and provenance
Every CSV starts with one '# seed=... config=... train=... test=... version=... scorer=...' line.
Exit codes: 0 success, 1 runtime/audit failure, 2 usage/validation error.)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit LIME explanations for data shift, label shift and fidelity", "lime_shift"};
  app.require_subcommand(1);
  app.footer(kCsvSchemas);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the built-in kernel logistic scorer");
  train->add_option("--dataset", ta.dataset, "svmlight training file")->required();
  train->add_option("--out", ta.out, "Model file to write")->required();
  train->add_option("--gamma", ta.gamma, "RBF gamma, or 'median' for the median heuristic")->capture_default_str();
  train->add_option("--reg", ta.reg, "L2 penalty on dual coefficients")->capture_default_str();
  train->add_option("--epochs", ta.epochs, "Full-batch gradient steps")->capture_default_str();
  train->add_option("--lr", ta.lr, "Learning rate")->capture_default_str();

  ExplainArgs ea;
  auto* expl = app.add_subcommand("explain", "Explain one instance with LIME");
  expl->add_option("--dataset", ea.dataset, "svmlight file holding the instance")->required();
  ea.scorer.add(expl);
  expl->add_option("--instance", ea.instance, "0-based row of the dataset")->required();
  expl->add_option("--class", ea.class_id, "Class id to explain")->capture_default_str();
  expl->add_option("--num-samples", ea.num_samples, "Perturbations n")->capture_default_str();
  expl->add_option("--num-features", ea.num_features, "Explanation features K")->capture_default_str();
  expl->add_option("--ridge", ea.ridge, "Surrogate ridge penalty")->capture_default_str();
  expl->add_option("--seed", ea.seed, "Random seed")->capture_default_str();
  expl->add_option("--json", ea.json_out, "Also write the explanation as JSON");

  AuditArgs aa;
  auto* audit = app.add_subcommand("audit", "Audit explanations over a test set");
  audit->add_option("--train", aa.train, "svmlight training/reference file")->required();
  audit->add_option("--test", aa.test, "svmlight test file")->required();
  aa.scorer.add(audit);
  audit->add_option("--class", aa.class_id, "Class id to explain")->capture_default_str();
  audit->add_option("--n", aa.grid, "Comma-separated ascending grid of sample sizes")->capture_default_str();
  audit->add_option("--alpha", aa.alpha, "Test level")->capture_default_str();
  audit->add_option("--reference", aa.reference, "knn | class")->capture_default_str();
  audit->add_option("--seed", aa.seed, "Random seed")->capture_default_str();
  audit->add_option("--out", aa.out, "Report directory")->required();
  audit->add_option("--jobs", aa.jobs, "Worker threads (results do not depend on it)")->capture_default_str();
  audit->add_option("--num-features", aa.num_features, "Explanation features K")->capture_default_str();
  audit->add_option("--ridge", aa.ridge, "Surrogate ridge penalty")->capture_default_str();
  audit->add_option("--data-kernel", aa.data_kernel, "Data-shift kernel")->capture_default_str();
  audit->add_option("--label-kernel", aa.label_kernel, "Label-shift kernel")->capture_default_str();
  audit->add_option("--label-space", aa.label_space, "vector (full score vector) | scalar (explained class)")
      ->capture_default_str();
  audit->add_flag("--null-mode", aa.null_mode, "Replace perturbations by a disjoint second reference draw");
  audit->add_option("--limit", aa.limit, "Audit only the first N test instances");

  std::string report_in, report_format = "md";
  auto* report = app.add_subcommand("report", "Re-render tables from a report directory");
  report->add_option("--in", report_in, "Directory written by `audit`")->required();
  report->add_option("--format", report_format, "md | csv | json")
      ->check(CLI::IsMember({"md", "csv", "json"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*expl) return cmd_explain(ea);
    if (*audit) return cmd_audit(aa);
    if (*report) return cmd_report(report_in, report_format);
  } catch (const Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  }
  return 0;
}
