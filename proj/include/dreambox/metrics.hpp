#pragma once

#include "dreambox/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dreambox {

enum class Truth { in_dist, ood };

struct ScoredInstance
{
  double ood_score = 0; ///< in [0, 1], higher = more OOD
  Truth truth = Truth::in_dist;
  std::int64_t image_id = 0;
  std::size_t box_index = 0;
};

/// Probability that a random OOD instance outscores a random in-distribution
/// one, ties credited 0.5. Computed from mid-ranks.
double auroc(std::span<const ScoredInstance> instances);

/// Picks the smallest threshold t with at least 95% of in-distribution
/// scores below t and returns the fraction of OOD scores below t. Since the
/// admissible thresholds form the open ray above the ceil(0.95 n)-th smallest
/// in-distribution score s, this is the fraction of OOD scores <= s.
double fpr_at_95_tpr(std::span<const ScoredInstance> instances);

double iou(const BoundingBox& a, const BoundingBox& b);

enum class ApInterpolation { all_points, eleven_point };

std::string_view to_string(ApInterpolation v);
ApInterpolation parse_interpolation(std::string_view s);

struct Detection
{
  std::int64_t image_id = 0;
  std::size_t box_index = 0; ///< tie-break key within an image
  BoundingBox box;           ///< category_id is the predicted class
  double confidence = 0;
};

struct MapResult
{
  std::map<std::string, double> per_class_ap; ///< fractions
  double map = 0;
};

/// Average precision over a ranked list of true/false-positive flags.
double average_precision(const std::vector<bool>& tp_ranked, std::size_t num_truth, ApInterpolation interp);

/// Per-class AP with greedy matching at `iou_threshold`; ties in confidence
/// are ordered by (image_id, box_index). Classes without ground truth are
/// skipped; OOD annotations are ignored.
MapResult mean_average_precision(std::span<const Detection> detections, const DetectionDataset& truth,
                                 double iou_threshold = 0.5, ApInterpolation interp = ApInterpolation::all_points);

struct MetricsReport
{
  double auroc = 0, fpr95 = 0, map = 0; ///< fractions
  std::map<std::string, double> per_class_ap;
  double crop_accuracy = 0;
  std::size_t n_in = 0, n_ood = 0;
  std::string config_digest;
  std::string label; ///< row label in tables, e.g. the strategy or sigma

  void validate() const;
};

/// Percentages rounded to two decimals next to the raw fractions.
nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

double round_percent(double fraction);

/// Table with columns FPR95 (%), AUROC (%), mAP (ID) (%), one row per report.
std::string markdown_table(std::span<const MetricsReport> rows);

void write_scores_csv(std::span<const ScoredInstance> instances, const std::filesystem::path& path);

} // namespace dreambox
