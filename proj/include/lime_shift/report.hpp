#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "lime_shift/audit.hpp"

namespace lime_shift {

using ojson = nlohmann::ordered_json;

// ---- JSON -----------------------------------------------------------------

inline ojson to_json(const TwoSampleResult& t) {
  ojson j;
  j["mmd_b"] = t.mmd_b;
  j["scaled_stat"] = t.scaled_stat;
  j["threshold"] = t.threshold;
  j["alpha"] = t.alpha;
  j["m"] = t.m;
  j["reject"] = t.reject;
  return j;
}

inline TwoSampleResult two_sample_from_json(const nlohmann::json& j) {
  TwoSampleResult t;
  t.mmd_b = j.at("mmd_b").get<double>();
  t.scaled_stat = j.at("scaled_stat").get<double>();
  t.threshold = j.at("threshold").get<double>();
  t.alpha = j.at("alpha").get<double>();
  t.m = j.at("m").get<std::size_t>();
  t.reject = j.at("reject").get<bool>();
  return t;
}

inline ojson to_json(const Provenance& p) {
  ojson j;
  j["seed"] = p.seed;
  j["config_digest"] = p.config_digest;
  j["train_digest"] = p.train_digest;
  j["test_digest"] = p.test_digest;
  j["version"] = p.version;
  j["scorer"] = p.scorer;
  return j;
}

inline Provenance provenance_from_json(const nlohmann::json& j) {
  Provenance p;
  p.seed = j.at("seed").get<std::uint64_t>();
  p.config_digest = j.at("config_digest").get<std::string>();
  p.train_digest = j.at("train_digest").get<std::string>();
  p.test_digest = j.at("test_digest").get<std::string>();
  p.version = j.at("version").get<std::string>();
  p.scorer = j.at("scorer").get<std::string>();
  return p;
}

inline ojson to_json(const AuditAggregate& a) {
  ojson j;
  j["n"] = a.n;
  j["instances"] = a.instances;
  j["reject"] = a.reject;
  j["reject_fraction"] = a.reject_fraction;
  j["fail"] = a.fail;
  j["fail_fraction"] = a.fail_fraction;
  j["mmd_mean"] = a.mmd_mean;
  j["mmd_std"] = a.mmd_std;
  j["scaled_mean"] = a.scaled_mean;
  j["scaled_std"] = a.scaled_std;
  j["fidelity_mean"] = a.fidelity_mean;
  j["fidelity_std"] = a.fidelity_std;
  if (a.pearson_mmd_fidelity) {
    j["pearson_mmd_fidelity"] = *a.pearson_mmd_fidelity;
  } else {
    j["pearson_mmd_fidelity"] = nullptr;
  }
  return j;
}

inline AuditAggregate aggregate_from_json(const nlohmann::json& j) {
  AuditAggregate a;
  a.n = j.at("n").get<std::size_t>();
  a.instances = j.at("instances").get<std::size_t>();
  a.reject = j.at("reject").get<std::size_t>();
  a.reject_fraction = j.at("reject_fraction").get<double>();
  a.fail = j.at("fail").get<std::size_t>();
  a.fail_fraction = j.at("fail_fraction").get<double>();
  a.mmd_mean = j.at("mmd_mean").get<double>();
  a.mmd_std = j.at("mmd_std").get<double>();
  a.scaled_mean = j.at("scaled_mean").get<double>();
  a.scaled_std = j.at("scaled_std").get<double>();
  a.fidelity_mean = j.at("fidelity_mean").get<double>();
  a.fidelity_std = j.at("fidelity_std").get<double>();
  if (!j.at("pearson_mmd_fidelity").is_null()) {
    a.pearson_mmd_fidelity = j.at("pearson_mmd_fidelity").get<double>();
  }
  return a;
}

inline ojson to_json(const AuditRow& r) {
  ojson j;
  j["instance_id"] = r.instance_id;
  j["n"] = r.n;
  j["fidelity"] = r.fidelity;
  j["f_y_at_x"] = r.f_y_at_x;
  j["g_y_at_x"] = r.g_y_at_x;
  j["loss"] = r.loss;
  j["data_shift"] = to_json(r.data_shift);
  j["label_shift"] = to_json(r.label_shift);
  return j;
}

inline AuditRow row_from_json(const nlohmann::json& j) {
  AuditRow r;
  r.instance_id = j.at("instance_id").get<std::size_t>();
  r.n = j.at("n").get<std::size_t>();
  r.fidelity = j.at("fidelity").get<double>();
  r.f_y_at_x = j.at("f_y_at_x").get<double>();
  r.g_y_at_x = j.at("g_y_at_x").get<double>();
  r.loss = j.at("loss").get<double>();
  r.data_shift = two_sample_from_json(j.at("data_shift"));
  r.label_shift = two_sample_from_json(j.at("label_shift"));
  return r;
}

inline ojson to_json(const AuditReport& rep) {
  ojson j;
  j["provenance"] = to_json(rep.provenance);
  j["config"] = rep.config;
  auto tests = ojson::array();
  for (const auto& t : rep.tests) {
    ojson tj;
    tj["test"] = t.test;
    auto per = ojson::array();
    for (const auto& a : t.per_n) per.push_back(to_json(a));
    tj["per_n"] = std::move(per);
    tests.push_back(std::move(tj));
  }
  j["tests"] = std::move(tests);
  auto rows = ojson::array();
  for (const auto& r : rep.rows) rows.push_back(to_json(r));
  j["rows"] = std::move(rows);
  return j;
}

inline AuditReport report_from_json(const nlohmann::json& j) {
  try {
    AuditReport rep;
    rep.provenance = provenance_from_json(j.at("provenance"));
    rep.config = j.at("config");
    for (const auto& tj : j.at("tests")) {
      TestSummary t;
      t.test = tj.at("test").get<std::string>();
      for (const auto& a : tj.at("per_n")) t.per_n.push_back(aggregate_from_json(a));
      rep.tests.push_back(std::move(t));
    }
    for (const auto& r : j.at("rows")) rep.rows.push_back(row_from_json(r));
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("report.json does not match the report schema: ") + e.what());
  }
}

// ---- text rendering --------------------------------------------------------

// Six significant digits, the precision of every rendered table.
inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Percentage with at most one decimal; "100", "57.2", "0".
inline std::string fmt_percent(std::size_t count, std::size_t total) {
  if (total == 0) return "0";
  const double pct = 100.0 * static_cast<double>(count) / static_cast<double>(total);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", pct);
  std::string s = buf;
  if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.resize(s.size() - 2);
  return s;
}

inline std::string render_md_row(std::size_t n, std::size_t reject, std::size_t fail, double mean,
                                 double std_dev) {
  const std::size_t total = reject + fail;
  return "| " + std::to_string(n) + " | " + std::to_string(reject) + " (" + fmt_percent(reject, total) +
         "%) | " + std::to_string(fail) + " (" + fmt_percent(fail, total) + "%) | " + fmt6(mean) +
         " ± " + fmt6(std_dev) + " |";
}

inline std::string provenance_line(const Provenance& p) {
  return "seed=" + std::to_string(p.seed) + " config=" + p.config_digest + " train=" + p.train_digest +
         " test=" + p.test_digest + " version=" + p.version + " scorer=" + p.scorer;
}

inline std::string csv_provenance(const Provenance& p) { return "# " + provenance_line(p) + "\n"; }

inline const char* test_title(const std::string& test) {
  return test == "data_shift" ? "Data shift: reference set vs perturbed instances"
                              : "Label shift: black-box scores on reference set vs perturbed instances";
}

inline std::string render_markdown(const AuditReport& rep) {
  std::string out = "# LIME shift audit\n\n";
  out += "Provenance: `" + provenance_line(rep.provenance) + "`\n\n";
  const double alpha = rep.config.contains("alpha") ? rep.config["alpha"].get<double>() : 0.05;
  for (const auto& t : rep.tests) {
    out += "## " + std::string(test_title(t.test)) + " (alpha = " + fmt6(alpha) + ")\n\n";
    out += "| n | Reject | Failed to reject | MMD |\n|---|---|---|---|\n";
    for (const auto& a : t.per_n) {
      out += render_md_row(a.n, a.reject, a.fail, a.mmd_mean, a.mmd_std) + "\n";
    }
    out += "\n";
  }
  out += "## Scaled statistic m * MMD_b^2\n\n| n |";
  for (const auto& t : rep.tests) out += " " + t.test + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < rep.tests.size(); ++i) out += "---|";
  out += "\n";
  if (!rep.tests.empty()) {
    for (std::size_t k = 0; k < rep.tests.front().per_n.size(); ++k) {
      out += "| " + std::to_string(rep.tests.front().per_n[k].n) + " |";
      for (const auto& t : rep.tests) {
        out += " " + fmt6(t.per_n[k].scaled_mean) + " ± " + fmt6(t.per_n[k].scaled_std) + " |";
      }
      out += "\n";
    }
    out += "\n## Fidelity and MMD-fidelity correlation\n\n| n | Fidelity |";
    for (const auto& t : rep.tests) out += " Pearson (" + t.test + ") |";
    out += "\n|---|---|";
    for (std::size_t i = 0; i < rep.tests.size(); ++i) out += "---|";
    out += "\n";
    for (std::size_t k = 0; k < rep.tests.front().per_n.size(); ++k) {
      const auto& a = rep.tests.front().per_n[k];
      out += "| " + std::to_string(a.n) + " | " + fmt6(a.fidelity_mean) + " ± " + fmt6(a.fidelity_std) + " |";
      for (const auto& t : rep.tests) {
        const auto& p = t.per_n[k].pearson_mmd_fidelity;
        out += " " + (p ? fmt6(*p) : std::string("n/a")) + " |";
      }
      out += "\n";
    }
  }
  return out;
}

inline constexpr const char* kReportCsvHeader =
    "test,n,instances,reject,reject_fraction,fail,fail_fraction,mmd_mean,mmd_std,scaled_mean,"
    "scaled_std,fidelity_mean,fidelity_std,pearson_mmd_fidelity";
inline constexpr const char* kRowsCsvHeader =
    "instance_id,n,fidelity,f_y_at_x,g_y_at_x,loss,data_mmd_b,data_scaled_stat,data_threshold,"
    "data_reject,label_mmd_b,label_scaled_stat,label_threshold,label_reject";
inline constexpr const char* kPlotFidelityHeader = "n,fidelity_mean,fidelity_std";
inline constexpr const char* kPlotMmdFidelityHeader = "test,instance_id,n,mmd_b,fidelity";

inline std::string render_report_csv(const AuditReport& rep) {
  std::string out = csv_provenance(rep.provenance);
  out += std::string(kReportCsvHeader) + "\n";
  for (const auto& t : rep.tests) {
    for (const auto& a : t.per_n) {
      out += t.test + "," + std::to_string(a.n) + "," + std::to_string(a.instances) + "," +
             std::to_string(a.reject) + "," + fmt6(a.reject_fraction) + "," + std::to_string(a.fail) + "," +
             fmt6(a.fail_fraction) + "," + fmt6(a.mmd_mean) + "," + fmt6(a.mmd_std) + "," +
             fmt6(a.scaled_mean) + "," + fmt6(a.scaled_std) + "," + fmt6(a.fidelity_mean) + "," +
             fmt6(a.fidelity_std) + "," + (a.pearson_mmd_fidelity ? fmt6(*a.pearson_mmd_fidelity) : "") +
             "\n";
    }
  }
  return out;
}

inline std::string render_row_csv_line(const AuditRow& r) {
  return std::to_string(r.instance_id) + "," + std::to_string(r.n) + "," + fmt6(r.fidelity) + "," +
         fmt6(r.f_y_at_x) + "," + fmt6(r.g_y_at_x) + "," + fmt6(r.loss) + "," + fmt6(r.data_shift.mmd_b) +
         "," + fmt6(r.data_shift.scaled_stat) + "," + fmt6(r.data_shift.threshold) + "," +
         (r.data_shift.reject ? "1" : "0") + "," + fmt6(r.label_shift.mmd_b) + "," +
         fmt6(r.label_shift.scaled_stat) + "," + fmt6(r.label_shift.threshold) + "," +
         (r.label_shift.reject ? "1" : "0");
}

inline std::string render_rows_csv(const Provenance& p, const std::vector<AuditRow>& rows) {
  std::string out = csv_provenance(p);
  out += std::string(kRowsCsvHeader) + "\n";
  for (const auto& r : rows) out += render_row_csv_line(r) + "\n";
  return out;
}

inline std::string render_plot_fidelity_csv(const AuditReport& rep) {
  std::string out = csv_provenance(rep.provenance);
  out += std::string(kPlotFidelityHeader) + "\n";
  if (!rep.tests.empty()) {
    for (const auto& a : rep.tests.front().per_n) {
      out += std::to_string(a.n) + "," + fmt6(a.fidelity_mean) + "," + fmt6(a.fidelity_std) + "\n";
    }
  }
  return out;
}

inline std::string render_plot_mmd_fidelity_csv(const AuditReport& rep) {
  std::string out = csv_provenance(rep.provenance);
  out += std::string(kPlotMmdFidelityHeader) + "\n";
  for (const char* test : {"data_shift", "label_shift"}) {
    const bool data = std::string(test) == "data_shift";
    for (const auto& r : rep.rows) {
      out += std::string(test) + "," + std::to_string(r.instance_id) + "," + std::to_string(r.n) + "," +
             fmt6(data ? r.data_shift.mmd_b : r.label_shift.mmd_b) + "," + fmt6(r.fidelity) + "\n";
    }
  }
  return out;
}

}  // namespace lime_shift
