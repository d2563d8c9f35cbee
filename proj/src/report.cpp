#include "pointpose/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pointpose {

namespace {

struct Accum {
  std::vector<double> ad;
  std::vector<double> ads;
  double rot_sum = 0.0;
  double trans_sum = 0.0;
  std::size_t n = 0;
};

ClassReport finish(std::string name, const Accum& a) {
  ClassReport r;
  r.name = std::move(name);
  r.count = a.n;
  if (a.n == 0) return r;
  const auto dn = static_cast<double>(a.n);
  r.mean_rotation_error_rad = a.rot_sum / dn;
  r.mean_translation_error_m = a.trans_sum / dn;
  r.ad_auc = auc(a.ad, 0.1);
  r.ads_auc = auc(a.ads, 0.1);
  r.ad_accuracy_1cm = accuracy_at_threshold(a.ad, 0.01);
  r.ads_accuracy_1cm = accuracy_at_threshold(a.ads, 0.01);
  return r;
}

}  // namespace

ResultsReport evaluate_dataset(const Dataset& ds, PoseNetParams& params,
                               bool use_icp, const IcpConfig& icp_cfg) {
  if (ds.samples.empty()) throw std::invalid_argument("empty dataset");
  const std::size_t n_classes = ds.manifest.classes.size();
  if (n_classes == 0) throw std::invalid_argument("dataset has no classes");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<ObjectModel> models;
  std::map<std::size_t, ObjectModel> model_map;
  models.reserve(n_classes);
  for (std::size_t k = 0; k < n_classes; ++k) {
    models.push_back(build_model(ds.manifest.classes[k], k));
    model_map.emplace(k, models.back());
  }

  std::vector<Accum> per(n_classes);
  Accum all;
  std::vector<double> rot_raw;
  std::vector<double> trans_raw;
  std::vector<EvalRecord> records;
  records.reserve(ds.samples.size());

  for (const Sample& s : ds.samples) {
    const std::size_t k = s.segment.class_id;
    if (k >= n_classes)
      throw std::invalid_argument("sample class id out of range");
    Pose est = predict_pose(s.segment, params);
    if (use_icp) {
      PointCloud observed;
      observed.points.reserve(static_cast<std::size_t>(s.segment.coords.rows()));
      for (Eigen::Index i = 0; i < s.segment.coords.rows(); ++i)
        observed.points.emplace_back(s.segment.coords.row(i).transpose());
      est = icp_refine(models[k], observed, est, icp_cfg).pose;
    }
    const double ad = average_distance(models[k], s.gt, est);
    const double ads = average_distance_symmetric(models[k], s.gt, est);
    const double rot_err =
        geodesic_distance(exp_map(s.gt.rotation), exp_map(est.rotation));
    const double trans_err = (est.translation - s.gt.translation).norm();
    for (Accum* a : {&per[k], &all}) {
      a->ad.push_back(ad);
      a->ads.push_back(ads);
      a->rot_sum += rot_err;
      a->trans_sum += trans_err;
      a->n += 1;
    }
    rot_raw.push_back(rot_err);
    trans_raw.push_back(trans_err);
    records.push_back({k, s.gt, est, s.occlusion});
  }

  ResultsReport r;
  double auc_ad_sum = 0.0;
  double auc_ads_sum = 0.0;
  std::size_t populated = 0;
  for (std::size_t k = 0; k < n_classes; ++k) {
    r.per_class.push_back(finish(ds.manifest.classes[k].name, per[k]));
    if (per[k].n > 0) {
      auc_ad_sum += r.per_class.back().ad_auc;
      auc_ads_sum += r.per_class.back().ads_auc;
      ++populated;
    }
  }
  r.overall = finish("overall", all);
  if (populated > 0) {
    r.class_mean_ad_auc = auc_ad_sum / static_cast<double>(populated);
    r.class_mean_ads_auc = auc_ads_sum / static_cast<double>(populated);
  }
  r.occlusion_bins = occlusion_binned_report(records, model_map, 0.01);
  r.ad_errors = std::move(all.ad);
  r.ads_errors = std::move(all.ads);
  r.rotation_errors_rad = std::move(rot_raw);
  r.translation_errors_m = std::move(trans_raw);
  r.used_icp = use_icp;
  r.eval_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return r;
}

namespace {

void class_row(std::ostringstream& os, const ClassReport& c) {
  char line[160];
  std::snprintf(line, sizeof line,
                "%-14s %6zu %9.2f %10.2f %8.2f %8.2f %7.3f %8.3f\n",
                c.name.c_str(), c.count,
                c.mean_rotation_error_rad * 180.0 / M_PI,
                c.mean_translation_error_m * 1000.0, c.ad_auc, c.ads_auc,
                c.ad_accuracy_1cm, c.ads_accuracy_1cm);
  os << line;
}

}  // namespace

std::string format_report_text(const ResultsReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line,
                "evaluated %zu samples (icp: %s) in %.1f s\n", r.overall.count,
                r.used_icp ? "on" : "off", r.eval_seconds);
  os << line;
  std::snprintf(line, sizeof line, "%-14s %6s %9s %10s %8s %8s %7s %8s\n",
                "class", "n", "rot(deg)", "trans(mm)", "AD-AUC", "ADS-AUC",
                "AD<1cm", "ADS<1cm");
  os << line;
  for (const ClassReport& c : r.per_class) class_row(os, c);
  class_row(os, r.overall);
  std::snprintf(line, sizeof line,
                "class means: AD-AUC %.2f, ADS-AUC %.2f\n", r.class_mean_ad_auc,
                r.class_mean_ads_auc);
  os << line;
  os << "occlusion bins (ADS accuracy at 1 cm):\n";
  for (const OcclusionBin& b : r.occlusion_bins) {
    if (b.ads_accuracy)
      std::snprintf(line, sizeof line, "  [%.1f,%.1f): n=%-5zu acc=%.3f\n",
                    b.lo, b.hi, b.count, *b.ads_accuracy);
    else
      std::snprintf(line, sizeof line, "  [%.1f,%.1f): n=%-5zu acc=-\n", b.lo,
                    b.hi, b.count);
    os << line;
  }
  return os.str();
}

namespace {

nlohmann::json class_report_json(const ClassReport& c) {
  return nlohmann::json{
      {"name", c.name},
      {"count", c.count},
      {"mean_rotation_error_rad", c.mean_rotation_error_rad},
      {"mean_translation_error_m", c.mean_translation_error_m},
      {"ad_auc", c.ad_auc},
      {"ads_auc", c.ads_auc},
      {"ad_accuracy_1cm", c.ad_accuracy_1cm},
      {"ads_accuracy_1cm", c.ads_accuracy_1cm},
  };
}

}  // namespace

nlohmann::json report_to_json(const ResultsReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const ClassReport& c : r.per_class) per.push_back(class_report_json(c));
  nlohmann::json bins = nlohmann::json::array();
  for (const OcclusionBin& b : r.occlusion_bins) {
    nlohmann::json jb{{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}};
    if (b.ads_accuracy)
      jb["ads_accuracy"] = *b.ads_accuracy;
    else
      jb["ads_accuracy"] = nullptr;
    bins.push_back(std::move(jb));
  }
  return nlohmann::json{
      {"per_class", std::move(per)},
      {"overall", class_report_json(r.overall)},
      {"class_mean_ad_auc", r.class_mean_ad_auc},
      {"class_mean_ads_auc", r.class_mean_ads_auc},
      {"occlusion_bins", std::move(bins)},
      {"raw_errors",
       {{"ad", r.ad_errors},
        {"ads", r.ads_errors},
        {"rotation_rad", r.rotation_errors_rad},
        {"translation_m", r.translation_errors_m}}},
      {"used_icp", r.used_icp},
      {"eval_seconds", r.eval_seconds},
  };
}

}  // namespace pointpose
