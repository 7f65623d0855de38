#include "dreambox/metrics.hpp"

#include "dreambox/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>

namespace dreambox {

namespace {

void check_instances(std::span<const ScoredInstance> instances, std::size_t& n_in, std::size_t& n_ood)
{
  n_in = n_ood = 0;
  for (const auto& s : instances) {
    if (!std::isfinite(s.ood_score) || s.ood_score < 0 || s.ood_score > 1)
      throw EvaluationError("OOD score " + std::to_string(s.ood_score) + " outside [0, 1]", "bad_score");
    (s.truth == Truth::in_dist ? n_in : n_ood)++;
  }
  if (n_in == 0 || n_ood == 0)
    throw EvaluationError("OOD metrics need both in-distribution and OOD instances (got " + std::to_string(n_in) +
                            " and " + std::to_string(n_ood) + ")",
                          "single_class");
}

} // namespace

double auroc(std::span<const ScoredInstance> instances)
{
  std::size_t n_in, n_ood;
  check_instances(instances, n_in, n_ood);
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return instances[a].ood_score < instances[b].ood_score; });

  // Sum of mid-ranks (doubled to stay integral) over the OOD instances.
  std::uint64_t rank_sum2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && instances[order[j]].ood_score == instances[order[i]].ood_score)
      ++j;
    const std::uint64_t mid2 = (i + 1) + j; // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (instances[order[k]].truth == Truth::ood)
        rank_sum2 += mid2;
    i = j;
  }
  const std::uint64_t u2 = rank_sum2 - n_ood * (n_ood + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_in) * static_cast<double>(n_ood));
}

double fpr_at_95_tpr(std::span<const ScoredInstance> instances)
{
  std::size_t n_in, n_ood;
  check_instances(instances, n_in, n_ood);
  std::vector<double> in_scores;
  in_scores.reserve(n_in);
  for (const auto& s : instances)
    if (s.truth == Truth::in_dist)
      in_scores.push_back(s.ood_score);
  std::sort(in_scores.begin(), in_scores.end());
  const std::size_t k = (95 * n_in + 99) / 100; // ceil(0.95 n)
  const double s = in_scores[k - 1];
  std::size_t below = 0;
  for (const auto& x : instances)
    below += x.truth == Truth::ood && x.ood_score <= s;
  return static_cast<double>(below) / static_cast<double>(n_ood);
}

double iou(const BoundingBox& a, const BoundingBox& b)
{
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (iw <= 0 || ih <= 0)
    return 0.0;
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::string_view to_string(ApInterpolation v)
{
  return v == ApInterpolation::all_points ? "all_points" : "eleven_point";
}

ApInterpolation parse_interpolation(std::string_view s)
{
  if (s == "all_points")
    return ApInterpolation::all_points;
  if (s == "eleven_point")
    return ApInterpolation::eleven_point;
  throw ConfigError("unknown AP interpolation '" + std::string(s) + "' (expected all_points or eleven_point)");
}

double average_precision(const std::vector<bool>& tp_ranked, std::size_t num_truth, ApInterpolation interp)
{
  if (num_truth == 0)
    throw EvaluationError("average precision needs at least one ground-truth box", "no_ground_truth");
  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < tp_ranked.size(); ++i) {
    tp += tp_ranked[i];
    recall.push_back(double(tp) / double(num_truth));
    precision.push_back(double(tp) / double(i + 1));
  }
  if (interp == ApInterpolation::eleven_point) {
    double ap = 0;
    for (int t = 0; t <= 10; ++t) {
      double p = 0;
      for (std::size_t i = 0; i < recall.size(); ++i)
        if (recall[i] >= t / 10.0)
          p = std::max(p, precision[i]);
      ap += p / 11.0;
    }
    return ap;
  }
  // Precision envelope, then area under the step function.
  for (std::size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

MapResult mean_average_precision(std::span<const Detection> detections, const DetectionDataset& truth,
                                 double iou_threshold, ApInterpolation interp)
{
  if (!(iou_threshold > 0 && iou_threshold < 1))
    throw EvaluationError("IoU threshold must lie in (0, 1)", "bad_threshold");
  for (const auto& d : detections)
    truth.image(d.image_id); // throws for unknown images

  MapResult out;
  double sum = 0;
  std::size_t classes = 0;
  for (const auto& cat : truth.foreground_categories()) {
    // Ground truth per image for this class, with matched flags.
    std::unordered_map<std::int64_t, std::vector<std::pair<BoundingBox, bool>>> gt;
    std::size_t num_truth = 0;
    for (const auto& a : truth.annotations())
      if (!a.is_ood && a.box.category_id == cat.id) {
        gt[a.image_id].push_back({a.box, false});
        ++num_truth;
      }
    if (num_truth == 0)
      continue;

    std::vector<const Detection*> ranked;
    for (const auto& d : detections)
      if (d.box.category_id == cat.id)
        ranked.push_back(&d);
    std::sort(ranked.begin(), ranked.end(), [](const Detection* a, const Detection* b) {
      if (a->confidence != b->confidence)
        return a->confidence > b->confidence;
      if (a->image_id != b->image_id)
        return a->image_id < b->image_id;
      return a->box_index < b->box_index;
    });

    std::vector<bool> tp;
    for (const Detection* d : ranked) {
      auto it = gt.find(d->image_id);
      double best = -1;
      std::pair<BoundingBox, bool>* match = nullptr;
      if (it != gt.end())
        for (auto& g : it->second) {
          if (g.second)
            continue;
          const double o = iou(d->box, g.first);
          if (o > best) {
            best = o;
            match = &g;
          }
        }
      const bool hit = match && best >= iou_threshold;
      if (hit)
        match->second = true;
      tp.push_back(hit);
    }
    const double ap = average_precision(tp, num_truth, interp);
    out.per_class_ap[cat.name] = ap;
    sum += ap;
    ++classes;
  }
  if (classes == 0)
    throw EvaluationError("no in-distribution ground truth to compute mAP against", "no_ground_truth");
  out.map = sum / double(classes);
  return out;
}

// ---------------------------------------------------------------------------

void MetricsReport::validate() const
{
  for (double v : {auroc, fpr95, map, crop_accuracy})
    if (!(v >= 0 && v <= 1))
      throw EvaluationError("metric value outside [0, 1]", "bad_report");
}

double round_percent(double fraction)
{
  return std::round(fraction * 100.0 * 100.0) / 100.0;
}

nlohmann::json to_json(const MetricsReport& r)
{
  nlohmann::json ap_pct = nlohmann::json::object(), ap_raw = nlohmann::json::object();
  for (const auto& [name, v] : r.per_class_ap) {
    ap_pct[name] = round_percent(v);
    ap_raw[name] = v;
  }
  return {
    {"label", r.label},
    {"fpr95", round_percent(r.fpr95)},
    {"auroc", round_percent(r.auroc)},
    {"map", round_percent(r.map)},
    {"per_class_ap", ap_pct},
    {"crop_accuracy", round_percent(r.crop_accuracy)},
    {"raw",
     {{"fpr95", r.fpr95},
      {"auroc", r.auroc},
      {"map", r.map},
      {"per_class_ap", ap_raw},
      {"crop_accuracy", r.crop_accuracy}}},
    {"counts", {{"n_in", r.n_in}, {"n_ood", r.n_ood}}},
    {"config_digest", r.config_digest},
  };
}

MetricsReport report_from_json(const nlohmann::json& j)
{
  MetricsReport r;
  try {
    const auto& raw = j.at("raw");
    r.label = j.value("label", "");
    r.fpr95 = raw.at("fpr95").get<double>();
    r.auroc = raw.at("auroc").get<double>();
    r.map = raw.at("map").get<double>();
    r.crop_accuracy = raw.value("crop_accuracy", 0.0);
    r.per_class_ap = raw.at("per_class_ap").get<std::map<std::string, double>>();
    r.n_in = j.at("counts").at("n_in").get<std::size_t>();
    r.n_ood = j.at("counts").at("n_ood").get<std::size_t>();
    r.config_digest = j.value("config_digest", "");
  } catch (const nlohmann::json::exception& e) {
    throw EvaluationError(std::string("malformed metrics report: ") + e.what(), "bad_report");
  }
  return r;
}

std::string markdown_table(std::span<const MetricsReport> rows)
{
  std::string out = "| Run | FPR95 (%) | AUROC (%) | mAP (ID) (%) |\n|---|---:|---:|---:|\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "| %s | %.2f | %.2f | %.2f |\n", r.label.c_str(), round_percent(r.fpr95),
                  round_percent(r.auroc), round_percent(r.map));
    out += line;
  }
  return out;
}

void write_scores_csv(std::span<const ScoredInstance> instances, const std::filesystem::path& path)
{
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out)
    throw EvaluationError("cannot write " + path.string(), "io_error");
  out << "image_id,box_index,ood_score,truth\n";
  char line[128];
  for (const auto& s : instances) {
    std::snprintf(line, sizeof line, "%lld,%zu,%.17g,%s\n", static_cast<long long>(s.image_id), s.box_index,
                  s.ood_score, s.truth == Truth::ood ? "ood" : "in_dist");
    out << line;
  }
}

} // namespace dreambox
