#include "accident/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace accident {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::optional<int> crossing_frame(const AnticipationResult& result, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) throw std::invalid_argument("crossing_frame: threshold outside [0,1]");
  const int limit = result.label == Label::Positive ? result.toa : static_cast<int>(result.probs.size());
  for (int t = 0; t < limit && t < static_cast<int>(result.probs.size()); ++t)
    if (result.probs[t] >= threshold) return t;
  return std::nullopt;
}

std::optional<double> tta(const AnticipationResult& result, double threshold) {
  if (result.label != Label::Positive) throw std::invalid_argument("tta: defined for positive videos only");
  const auto cross = crossing_frame(result, threshold);
  if (!cross) return std::nullopt;
  return (result.toa - *cross) / static_cast<double>(result.fps);
}

MetricsReport evaluate(const std::vector<AnticipationResult>& results) {
  if (results.empty()) throw std::invalid_argument("evaluate: empty results");
  int n_pos = 0, n_neg = 0;
  for (const auto& r : results) {
    if (r.probs.empty()) throw std::invalid_argument("evaluate: result " + r.id + " has no probabilities");
    (r.label == Label::Positive ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("evaluate: need at least one positive and one negative video");

  std::set<double> levels;
  levels.insert(1.0);
  for (const auto& r : results)
    for (double p : r.probs) levels.insert(p);
  std::vector<double> thresholds(levels.rbegin(), levels.rend());  // descending

  MetricsReport report;
  report.n_pos = n_pos;
  report.n_neg = n_neg;

  double ap = 0.0;
  double prev_recall = 0.0;
  double mtta_sum = 0.0;
  int mtta_terms = 0;

  for (double tau : thresholds) {
    PrPoint pt;
    pt.threshold = tau;
    double tta_sum = 0.0;
    for (const auto& r : results) {
      if (r.label == Label::Positive) {
        const auto cross = crossing_frame(r, tau);
        if (cross) {
          pt.tp += 1;
          tta_sum += (r.toa - *cross) / static_cast<double>(r.fps);
        } else {
          pt.fn += 1;
        }
      } else {
        if (crossing_frame(r, tau)) {
          pt.fp += 1;
        } else {
          pt.tn += 1;
        }
      }
    }
    pt.precision = (pt.tp + pt.fp) == 0 ? 1.0 : static_cast<double>(pt.tp) / (pt.tp + pt.fp);
    pt.recall = static_cast<double>(pt.tp) / n_pos;
    if (pt.tp > 0) {
      pt.mean_tta = tta_sum / pt.tp;
      mtta_sum += pt.mean_tta;
      mtta_terms += 1;
    }
    ap += pt.precision * (pt.recall - prev_recall);
    prev_recall = pt.recall;
    report.pr_curve.push_back(pt);
  }

  report.ap = ap;
  report.mtta_s = mtta_terms > 0 ? mtta_sum / mtta_terms : 0.0;

  // operating point reported alongside best AP: highest precision among
  // points with at least one true positive, ties broken toward recall
  const PrPoint* best = nullptr;
  for (const auto& pt : report.pr_curve) {
    if (pt.tp == 0) continue;
    if (!best || pt.precision > best->precision ||
        (pt.precision == best->precision && pt.recall > best->recall))
      best = &pt;
  }
  report.tta_at_best_ap_s = best ? best->mean_tta : 0.0;
  return report;
}

std::vector<double> smooth(const std::vector<double>& probs, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("smooth: sigma must be positive");
  if (probs.empty()) return {};
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int n = static_cast<int>(probs.size());
  auto reflect = [n](int i) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };
  std::vector<double> out(probs.size());
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * probs[reflect(i + k)];
    out[i] = acc;
  }
  return out;
}

namespace {

std::string sanitize(const std::string& id) {
  std::string out = id;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void export_report(const MetricsReport& report, const std::vector<AnticipationResult>& results,
                   const std::string& out_dir) {
  if (results.empty()) throw std::invalid_argument("export_report: empty results");
  fs::create_directories(fs::path(out_dir) / "curves");

  {
    std::ofstream os(fs::path(out_dir) / "pr_curve.csv");
    if (!os) throw std::runtime_error("export_report: cannot write pr_curve.csv");
    os << "threshold,precision,recall,mean_tta\n";
    for (const auto& pt : report.pr_curve) {
      os << fmt(pt.threshold) << "," << fmt(pt.precision) << "," << fmt(pt.recall) << ","
         << (pt.tp > 0 ? fmt(pt.mean_tta) : "") << "\n";
    }
  }

  for (const auto& r : results) {
    std::ofstream os(fs::path(out_dir) / "curves" / (sanitize(r.id) + ".csv"));
    if (!os) throw std::runtime_error("export_report: cannot write curve for " + r.id);
    os << "frame,p_raw,p_smoothed\n";
    const std::vector<double> smoothed = smooth(r.probs);
    for (std::size_t t = 0; t < r.probs.size(); ++t)
      os << t << "," << fmt(r.probs[t]) << "," << fmt(smoothed[t]) << "\n";
  }

  ordered_json j;
  j["ap"] = report.ap;
  j["mtta_s"] = report.mtta_s;
  j["tta_at_best_ap_s"] = report.tta_at_best_ap_s;
  j["n_pos"] = report.n_pos;
  j["n_neg"] = report.n_neg;
  j["pr_curve_path"] = "pr_curve.csv";
  std::ofstream os(fs::path(out_dir) / "metrics.json");
  if (!os) throw std::runtime_error("export_report: cannot write metrics.json");
  os << j.dump(2) << "\n";
}

}  // namespace accident
