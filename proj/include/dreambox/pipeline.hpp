#pragma once

#include "dreambox/dataset.hpp"
#include "dreambox/detector.hpp"
#include "dreambox/metrics.hpp"
#include "dreambox/synth.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dreambox {

struct GeneratorConfig
{
  bool mock = true;
  std::string endpoint;
  int timeout_ms = 30000;
  int retries = 2;
  int max_in_flight = 4;
};

struct EmbedderConfig
{
  bool mock = true;
  std::string endpoint;
  int dim = 64;
  int timeout_ms = 30000;
  int retries = 2;
  bool serialized = true;
};

struct PipelineConfig
{
  std::filesystem::path in_dist_annotations;
  std::optional<std::filesystem::path> in_dist_images;
  std::filesystem::path in_dist_test_annotations;
  std::filesystem::path ood_test_annotations;
  std::filesystem::path output_root;

  Strategy strategy = Strategy::generic;
  std::vector<double> sigmas; ///< one variant per value; empty for generic
  std::size_t n_outlier_images = 5000;
  int workers = 4;

  GeneratorConfig generator;
  EmbedderConfig embedder;
  TrainConfig train;
  bool train_baseline = true; ///< also train a detector without the OOD loss

  double iou_threshold = 0.5;
  ApInterpolation interpolation = ApInterpolation::all_points;

  std::uint64_t seed = 0;

  /// Throws ConfigError on the first violated constraint. With
  /// `check_paths`, annotation files must exist.
  void validate(bool check_paths = true) const;

  nlohmann::json to_json() const;
  /// sha256 of the canonical JSON form.
  std::string digest() const;
  /// Short prefix of the digest naming the run directory.
  std::string run_id() const;
};

/// Reads a YAML config; relative paths resolve against the file's
/// directory. Environment overrides (DREAMBOX_GENERATOR_URL,
/// DREAMBOX_EMBEDDER_URL, DREAMBOX_SEED) are applied before validation.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir);
void apply_env_overrides(PipelineConfig& config);

/// One trained configuration within a run: a σ value, the generic
/// strategy, or the no-OOD baseline.
struct Variant
{
  std::string name;
  std::optional<double> sigma;
  bool baseline = false;
};

std::vector<Variant> variants(const PipelineConfig& config);

struct RunLayout
{
  std::filesystem::path root;
  std::filesystem::path variant_dir(const Variant& v) const { return root / v.name; }
  std::filesystem::path synth_dir(const Variant& v) const { return variant_dir(v) / "synth"; }
  std::filesystem::path train_dir(const Variant& v) const { return variant_dir(v) / "train"; }
  std::filesystem::path eval_dir(const Variant& v) const { return variant_dir(v) / "eval"; }
  std::filesystem::path checkpoint(const Variant& v) const { return train_dir(v) / "checkpoint.json"; }
};

RunLayout run_layout(const PipelineConfig& config);

inline constexpr std::string_view kCompleteMarker = "COMPLETE";

/// Stage drivers. Each validates the config first, skips variants whose
/// COMPLETE marker matches the config digest, and writes progress to `log`.
void stage_synthesize(const PipelineConfig& config, std::ostream& log);
void stage_train(const PipelineConfig& config, std::ostream& log);
std::vector<MetricsReport> stage_evaluate(const PipelineConfig& config, std::ostream& log,
                                          std::optional<std::filesystem::path> checkpoint = std::nullopt);
/// Sweep table, σ plot and outlier grid from completed evaluations.
void stage_report(const PipelineConfig& config, std::ostream& log);

struct EvaluationInputs
{
  DetectionDataset in_dist_test;
  DetectionDataset ood_test; ///< already filtered
};

EvaluationInputs load_evaluation_inputs(const PipelineConfig& config);

/// Scores every annotation of both test sets with `model`. The baseline has
/// no trained head, so its score is the logistic of the raw energy.
MetricsReport evaluate_model(const TrainedModel& model, const EvaluationInputs& inputs, double iou_threshold,
                             ApInterpolation interp, bool baseline, std::vector<ScoredInstance>* scores = nullptr);

/// Faster R-CNN / VOC / COCO configuration at the original scale. Emitted
/// for users with GPU infrastructure; nothing here runs it.
std::string full_scale_config_yaml(const PipelineConfig& config);

// Figures

/// Line plot of AUROC and FPR95 against σ.
std::string sigma_plot_svg(const std::vector<double>& sigmas, const std::vector<MetricsReport>& reports);

/// Tiles up to `count` outlier images into one picture.
RgbImage outlier_grid(const std::vector<std::filesystem::path>& images, int columns = 4);

} // namespace dreambox
