#pragma once

#include <optional>
#include <string>
#include <vector>

#include "accident/data_model.hpp"

namespace accident {

struct AnticipationResult {
  std::string id;
  std::vector<double> probs;  // accident-class probability per frame
  Label label = Label::Negative;
  int toa = -1;
  int fps = 1;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double mean_tta = 0.0;  // valid only when tp > 0
  int tp = 0, fp = 0, fn = 0, tn = 0;
};

struct MetricsReport {
  double ap = 0.0;
  double mtta_s = 0.0;
  double tta_at_best_ap_s = 0.0;
  int n_pos = 0;
  int n_neg = 0;
  std::vector<PrPoint> pr_curve;  // thresholds descending
};

// Earliest frame whose probability reaches the threshold. For positive videos
// only frames before toa count as a valid anticipation crossing.
std::optional<int> crossing_frame(const AnticipationResult& result, double threshold);

// Seconds between the valid crossing and the accident; positives only.
std::optional<double> tta(const AnticipationResult& result, double threshold);

MetricsReport evaluate(const std::vector<AnticipationResult>& results);

// Gaussian smoothing used for exported visualization data only; kernel
// truncated at 4*sigma and renormalized, reflective boundary.
std::vector<double> smooth(const std::vector<double>& probs, double sigma = 2.0);

void export_report(const MetricsReport& report, const std::vector<AnticipationResult>& results,
                   const std::string& out_dir);

}  // namespace accident
