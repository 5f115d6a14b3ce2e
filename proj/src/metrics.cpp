#include "wavestiff/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "wavestiff/error.hpp"

namespace wavestiff::metrics {

namespace {

void check(std::span<const head::StiffnessRow> preds, std::span<const head::StiffnessRow> targets) {
  if (preds.size() != targets.size()) {
    throw InputError("metrics: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw InputError("metrics: no predictions");
}

}  // namespace

MapeResult mape(std::span<const head::StiffnessRow> preds, std::span<const head::StiffnessRow> targets) {
  check(preds, targets);
  double s[2] = {0, 0};
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (int c = 0; c < 2; ++c) {
      if (targets[i][c] == 0) throw InputError("mape: zero target at row " + std::to_string(i));
      s[c] += std::abs(preds[i][c] - targets[i][c]) / std::abs(targets[i][c]);
    }
  }
  const auto n = static_cast<double>(targets.size());
  MapeResult r;
  r.kp = 100.0 * s[0] / n;
  r.kb = 100.0 * s[1] / n;
  r.overall = 0.5 * (r.kp + r.kb);
  return r;
}

RmseResult rmse(std::span<const head::StiffnessRow> preds, std::span<const head::StiffnessRow> targets) {
  check(preds, targets);
  double s[2] = {0, 0};
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (int c = 0; c < 2; ++c) {
      if (targets[i][c] == 0) throw InputError("rmse: zero target at row " + std::to_string(i));
      const double e = (preds[i][c] - targets[i][c]) * 1e-6;
      s[c] += e * e;
    }
  }
  const auto n = static_cast<double>(targets.size());
  return {std::sqrt(s[0] / n), std::sqrt(s[1] / n)};
}

namespace {

MetricsReport report(const std::string& name, std::size_t records, const std::vector<head::StiffnessRow>& p,
                     const std::vector<head::StiffnessRow>& t) {
  const auto m = mape(p, t);
  const auto r = rmse(p, t);
  return {name, records, r.kp, m.kp, r.kb, m.kb, m.overall};
}

}  // namespace

std::vector<MetricsReport> evaluate_by_scenario(const std::vector<head::StiffnessTargets>& predictions,
                                                const std::vector<datagen::Record>& records) {
  if (predictions.size() != records.size()) {
    throw InputError("evaluate_by_scenario: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(records.size()) + " records");
  }
  if (records.empty()) throw InputError("evaluate_by_scenario: empty test set");
  std::vector<MetricsReport> rows;
  std::vector<head::StiffnessRow> all_p, all_t;
  for (auto scenario : datagen::kScenarios) {
    std::vector<head::StiffnessRow> p, t;
    std::size_t n = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].scenario != scenario) continue;
      if (predictions[i].size() != records[i].targets.size()) {
        throw InputError("evaluate_by_scenario: record " + std::to_string(i) + " has mismatched prediction count");
      }
      p.insert(p.end(), predictions[i].begin(), predictions[i].end());
      t.insert(t.end(), records[i].targets.begin(), records[i].targets.end());
      ++n;
    }
    if (n == 0) continue;
    rows.push_back(report(datagen::to_string(scenario), n, p, t));
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    all_p.insert(all_p.end(), predictions[i].begin(), predictions[i].end());
    all_t.insert(all_t.end(), records[i].targets.begin(), records[i].targets.end());
  }
  rows.push_back(report("all", records.size(), all_p, all_t));
  return rows;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& rows) {
  out << "scenario,kp_rmse,kp_mape,kb_rmse,kb_mape,overall_mape\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.scenario << ',' << r.kp_rmse << ',' << r.kp_mape << ',' << r.kb_rmse << ',' << r.kb_mape << ','
        << r.overall_mape << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

nlohmann::json metrics_json(const std::vector<MetricsReport>& rows) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"scenario", r.scenario},
                         {"records", r.records},
                         {"kp_rmse", r.kp_rmse},
                         {"kp_mape", r.kp_mape},
                         {"kb_rmse", r.kb_rmse},
                         {"kb_mape", r.kb_mape},
                         {"overall_mape", r.overall_mape}});
    if (r.scenario == "all") j["overall_mape"] = r.overall_mape;
  }
  return j;
}

}  // namespace wavestiff::metrics
