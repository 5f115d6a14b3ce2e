#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavestiff/datagen.hpp"
#include "wavestiff/head.hpp"

namespace wavestiff::metrics {

struct MapeResult {
  double kp = 0, kb = 0, overall = 0;  // percent
};

struct RmseResult {
  double kp = 0, kb = 0;  // MN/m
};

// Rows are (k_p, k_b) in N/m. InputError on size mismatch, empty input or zero targets.
MapeResult mape(std::span<const head::StiffnessRow> preds, std::span<const head::StiffnessRow> targets);
RmseResult rmse(std::span<const head::StiffnessRow> preds, std::span<const head::StiffnessRow> targets);

struct MetricsReport {
  std::string scenario;  // scenario tag or "all"
  std::size_t records = 0;
  double kp_rmse = 0, kp_mape = 0, kb_rmse = 0, kb_mape = 0, overall_mape = 0;
};

// One row per scenario present, in canonical order, then the "all" row.
std::vector<MetricsReport> evaluate_by_scenario(const std::vector<head::StiffnessTargets>& predictions,
                                                const std::vector<datagen::Record>& records);

void write_metrics_csv(std::ostream& out, const std::vector<MetricsReport>& rows);
nlohmann::json metrics_json(const std::vector<MetricsReport>& rows);

}  // namespace wavestiff::metrics
