#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "pointpose/icp.hpp"
#include "pointpose/metrics.hpp"
#include "pointpose/net.hpp"
#include "pointpose/synth.hpp"

namespace pointpose {

struct ClassReport {
  std::string name;
  std::size_t count = 0;
  double mean_rotation_error_rad = 0.0;
  double mean_translation_error_m = 0.0;
  double ad_auc = 0.0;           // pairwise distance errors, tau_max 0.1 m
  double ads_auc = 0.0;          // symmetric distance errors
  double ad_accuracy_1cm = 0.0;  // fraction strictly below 0.01 m
  double ads_accuracy_1cm = 0.0;
};

struct ResultsReport {
  std::vector<ClassReport> per_class;
  ClassReport overall;            // pooled over every sample
  double class_mean_ad_auc = 0.0;   // unweighted mean of the per-class AUCs
  double class_mean_ads_auc = 0.0;
  std::vector<OcclusionBin> occlusion_bins;  // symmetric accuracy at 0.01 m
  std::vector<double> ad_errors;   // raw pooled errors in sample order
  std::vector<double> ads_errors;
  std::vector<double> rotation_errors_rad;
  std::vector<double> translation_errors_m;
  bool used_icp = false;
  double eval_seconds = 0.0;
};

/// Runs eval-mode inference (optionally ICP-refined against each segment) on
/// every sample and aggregates the standard pose metrics. Object models are
/// regenerated from the manifest recipes.
ResultsReport evaluate_dataset(const Dataset& ds, PoseNetParams& params,
                               bool use_icp, const IcpConfig& icp_cfg = {});

std::string format_report_text(const ResultsReport& r);
nlohmann::json report_to_json(const ResultsReport& r);

}  // namespace pointpose
