#include "dreambox/pipeline.hpp"

#include "dreambox/error.hpp"
#include "dreambox/hashing.hpp"
#include "dreambox/http.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

namespace dreambox {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate(bool check_paths) const
{
  auto require_file = [&](const fs::path& p, const char* key) {
    if (p.empty())
      throw ConfigError(std::string("paths.") + key + " is required");
    if (check_paths && !fs::exists(p))
      throw ConfigError(std::string("paths.") + key + ": " + p.string() + " does not exist");
  };
  require_file(in_dist_annotations, "in_dist_annotations");
  require_file(in_dist_test_annotations, "in_dist_test_annotations");
  require_file(ood_test_annotations, "ood_test_annotations");
  if (in_dist_images)
    require_file(*in_dist_images, "in_dist_images");
  if (output_root.empty())
    throw ConfigError("paths.output_root is required");

  if (strategy == Strategy::distance && sigmas.empty())
    throw ConfigError("the distance strategy needs synthesis.sigma (a value or a list)");
  if (strategy == Strategy::generic && !sigmas.empty())
    throw ConfigError("synthesis.sigma only applies to the distance strategy");
  std::set<double> seen;
  for (double s : sigmas) {
    if (!std::isfinite(s) || s < 0)
      throw ConfigError("sigma values must be finite and non-negative");
    if (!seen.insert(s).second)
      throw ConfigError("sigma sweep lists " + std::to_string(s) + " twice");
  }
  if (n_outlier_images == 0)
    throw ConfigError("synthesis.n_outlier_images must be positive");
  if (workers < 1)
    throw ConfigError("synthesis.workers must be at least 1");

  if (!generator.mock) {
    if (generator.endpoint.empty())
      throw ConfigError("generator.endpoint is required when generator.mock is false");
    parse_endpoint(generator.endpoint);
  }
  if (generator.timeout_ms <= 0 || generator.retries < 0 || generator.max_in_flight < 1)
    throw ConfigError("generator timeout must be positive, retries non-negative, max_in_flight at least 1");
  if (strategy == Strategy::distance && !embedder.mock) {
    if (embedder.endpoint.empty())
      throw ConfigError("embedder.endpoint is required when embedder.mock is false");
    parse_endpoint(embedder.endpoint);
  }
  if (embedder.dim <= 0 || embedder.timeout_ms <= 0 || embedder.retries < 0)
    throw ConfigError("embedder dim and timeout must be positive, retries non-negative");

  train.validate();
  if (!(iou_threshold > 0 && iou_threshold < 1))
    throw ConfigError("metrics.iou_threshold must lie in (0, 1)");
}

json PipelineConfig::to_json() const
{
  return {
    {"paths",
     {{"in_dist_annotations", in_dist_annotations.string()},
      {"in_dist_images", in_dist_images ? json(in_dist_images->string()) : json(nullptr)},
      {"in_dist_test_annotations", in_dist_test_annotations.string()},
      {"ood_test_annotations", ood_test_annotations.string()},
      {"output_root", output_root.string()}}},
    {"synthesis",
     {{"strategy", to_string(strategy)},
      {"sigma", sigmas},
      {"n_outlier_images", n_outlier_images},
      {"workers", workers}}},
    {"generator",
     {{"mock", generator.mock},
      {"endpoint", generator.endpoint},
      {"timeout_ms", generator.timeout_ms},
      {"retries", generator.retries},
      {"max_in_flight", generator.max_in_flight}}},
    {"embedder",
     {{"mock", embedder.mock},
      {"endpoint", embedder.endpoint},
      {"dim", embedder.dim},
      {"timeout_ms", embedder.timeout_ms},
      {"retries", embedder.retries},
      {"serialized", embedder.serialized}}},
    {"train",
     {{"epochs", train.epochs},
      {"batch_size", train.batch_size},
      {"learning_rate", train.learning_rate},
      {"momentum", train.momentum},
      {"grad_clip_norm", train.grad_clip_norm},
      {"lr_decay_epochs", train.lr_decay_epochs},
      {"lr_decay_factor", train.lr_decay_factor},
      {"weight_decay", train.weight_decay},
      {"ood_loss_weight", train.ood_loss_weight},
      {"loss_variant", train.loss_variant == LossVariant::focal ? "focal" : "bce"},
      {"focal_gamma", train.focal_gamma},
      {"baseline", train_baseline}}},
    {"metrics", {{"iou_threshold", iou_threshold}, {"interpolation", to_string(interpolation)}}},
    {"seed", seed},
  };
}

std::string PipelineConfig::digest() const
{
  return sha256_hex(to_json().dump());
}

std::string PipelineConfig::run_id() const
{
  return digest().substr(0, 12);
}

namespace {

void reject_unknown_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> known)
{
  if (!node)
    return;
  if (!node.IsMap())
    throw ConfigError(where + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where)
{
  if (!node || !node[key])
    return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p)
{
  if (p.empty())
    return {};
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

} // namespace

PipelineConfig parse_config(const std::string& yaml_text, const fs::path& base_dir)
{
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsMap())
    throw ConfigError("config must be a YAML mapping");
  reject_unknown_keys(root, "config", {"paths", "synthesis", "generator", "embedder", "train", "metrics", "seed"});

  PipelineConfig c;
  const auto paths = root["paths"];
  if (!paths)
    throw ConfigError("config needs a paths section");
  reject_unknown_keys(paths, "paths",
                      {"in_dist_annotations", "in_dist_images", "in_dist_test_annotations", "ood_test_annotations",
                       "output_root"});
  std::string s;
  s.clear(), read(paths, "in_dist_annotations", s, "paths"), c.in_dist_annotations = resolve(base_dir, s);
  s.clear(), read(paths, "in_dist_test_annotations", s, "paths"), c.in_dist_test_annotations = resolve(base_dir, s);
  s.clear(), read(paths, "ood_test_annotations", s, "paths"), c.ood_test_annotations = resolve(base_dir, s);
  s.clear(), read(paths, "output_root", s, "paths"), c.output_root = resolve(base_dir, s);
  s.clear(), read(paths, "in_dist_images", s, "paths");
  if (!s.empty())
    c.in_dist_images = resolve(base_dir, s);

  if (const auto syn = root["synthesis"]) {
    reject_unknown_keys(syn, "synthesis", {"strategy", "sigma", "n_outlier_images", "workers"});
    std::string strategy = "generic";
    read(syn, "strategy", strategy, "synthesis");
    try {
      c.strategy = parse_strategy(strategy);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (const auto sigma = syn["sigma"]) {
      try {
        if (sigma.IsSequence())
          c.sigmas = sigma.as<std::vector<double>>();
        else
          c.sigmas = {sigma.as<double>()};
      } catch (const YAML::Exception&) {
        throw ConfigError("synthesis.sigma must be a number or a list of numbers");
      }
    }
    read(syn, "n_outlier_images", c.n_outlier_images, "synthesis");
    read(syn, "workers", c.workers, "synthesis");
  }

  if (const auto g = root["generator"]) {
    reject_unknown_keys(g, "generator", {"mock", "endpoint", "timeout_ms", "retries", "max_in_flight"});
    read(g, "mock", c.generator.mock, "generator");
    read(g, "endpoint", c.generator.endpoint, "generator");
    read(g, "timeout_ms", c.generator.timeout_ms, "generator");
    read(g, "retries", c.generator.retries, "generator");
    read(g, "max_in_flight", c.generator.max_in_flight, "generator");
  }
  if (const auto e = root["embedder"]) {
    reject_unknown_keys(e, "embedder", {"mock", "endpoint", "dim", "timeout_ms", "retries", "serialized"});
    read(e, "mock", c.embedder.mock, "embedder");
    read(e, "endpoint", c.embedder.endpoint, "embedder");
    read(e, "dim", c.embedder.dim, "embedder");
    read(e, "timeout_ms", c.embedder.timeout_ms, "embedder");
    read(e, "retries", c.embedder.retries, "embedder");
    read(e, "serialized", c.embedder.serialized, "embedder");
  }
  if (const auto t = root["train"]) {
    reject_unknown_keys(t, "train",
                        {"epochs", "batch_size", "learning_rate", "momentum", "grad_clip_norm", "lr_decay_epochs",
                         "lr_decay_factor", "weight_decay", "ood_loss_weight", "loss_variant", "focal_gamma",
                         "baseline"});
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "momentum", c.train.momentum, "train");
    read(t, "grad_clip_norm", c.train.grad_clip_norm, "train");
    read(t, "lr_decay_epochs", c.train.lr_decay_epochs, "train");
    read(t, "lr_decay_factor", c.train.lr_decay_factor, "train");
    read(t, "weight_decay", c.train.weight_decay, "train");
    read(t, "ood_loss_weight", c.train.ood_loss_weight, "train");
    read(t, "focal_gamma", c.train.focal_gamma, "train");
    read(t, "baseline", c.train_baseline, "train");
    std::string variant = "focal";
    read(t, "loss_variant", variant, "train");
    if (variant == "focal")
      c.train.loss_variant = LossVariant::focal;
    else if (variant == "bce")
      c.train.loss_variant = LossVariant::bce;
    else
      throw ConfigError("train.loss_variant must be focal or bce, got '" + variant + "'");
  }
  if (const auto m = root["metrics"]) {
    reject_unknown_keys(m, "metrics", {"iou_threshold", "interpolation"});
    read(m, "iou_threshold", c.iou_threshold, "metrics");
    std::string interp = "all_points";
    read(m, "interpolation", interp, "metrics");
    c.interpolation = parse_interpolation(interp);
  }
  read(root, "seed", c.seed, "config");
  return c;
}

void apply_env_overrides(PipelineConfig& config)
{
  if (const char* url = std::getenv("DREAMBOX_GENERATOR_URL"); url && *url) {
    config.generator.endpoint = url;
    config.generator.mock = false;
  }
  if (const char* url = std::getenv("DREAMBOX_EMBEDDER_URL"); url && *url) {
    config.embedder.endpoint = url;
    config.embedder.mock = false;
  }
  if (const char* seed = std::getenv("DREAMBOX_SEED"); seed && *seed) {
    char* end = nullptr;
    const auto v = std::strtoull(seed, &end, 10);
    if (*end != '\0')
      throw ConfigError("DREAMBOX_SEED must be an unsigned integer, got '" + std::string(seed) + "'");
    config.seed = v;
  }
}

PipelineConfig load_config(const fs::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto config = parse_config(ss.str(), fs::absolute(path).parent_path());
  apply_env_overrides(config);
  config.validate();
  return config;
}

std::vector<Variant> variants(const PipelineConfig& config)
{
  std::vector<Variant> out;
  if (config.strategy == Strategy::generic) {
    out.push_back({"generic", std::nullopt, false});
  } else {
    for (double s : config.sigmas) {
      char name[64];
      std::snprintf(name, sizeof name, "sigma-%g", s);
      out.push_back({name, s, false});
    }
  }
  if (config.train_baseline)
    out.push_back({"baseline", std::nullopt, true});
  return out;
}

RunLayout run_layout(const PipelineConfig& config)
{
  return {config.output_root / ("run-" + config.run_id())};
}

// ---------------------------------------------------------------------------
// Stages

namespace {

bool is_complete(const fs::path& dir, const std::string& digest)
{
  std::ifstream in(dir / kCompleteMarker);
  std::string content;
  return in && std::getline(in, content) && content == digest;
}

void mark_complete(const fs::path& dir, const std::string& digest)
{
  std::ofstream(dir / kCompleteMarker) << digest << '\n';
}

void write_text(const fs::path& path, const std::string& text)
{
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
}

void write_run_config(const PipelineConfig& config)
{
  const auto root = run_layout(config).root;
  write_text(root / "config.json", config.to_json().dump(2) + "\n");
}

TrainConfig train_config_for(const PipelineConfig& config)
{
  TrainConfig t = config.train;
  t.seed = derive_seed(config.seed, {5});
  return t;
}

DetectionDataset load_in_dist(const PipelineConfig& config)
{
  auto d = load_dataset(config.in_dist_annotations, config.in_dist_images);
  d.require_in_distribution();
  return d;
}

std::unique_ptr<Generator> make_generator(const GeneratorConfig& g)
{
  if (g.mock)
    return std::make_unique<MockGenerator>(g.max_in_flight);
  return std::make_unique<HttpGenerator>(
    HttpAdapterOptions{g.endpoint, std::chrono::milliseconds(g.timeout_ms), g.retries}, g.max_in_flight);
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& e)
{
  if (e.mock)
    return std::make_unique<MockEmbedder>(e.dim);
  return std::make_unique<HttpEmbedder>(
    HttpAdapterOptions{e.endpoint, std::chrono::milliseconds(e.timeout_ms), e.retries}, e.dim, e.serialized);
}

} // namespace

void stage_synthesize(const PipelineConfig& config, std::ostream& log)
{
  config.validate();
  const auto layout = run_layout(config);
  const auto digest = config.digest();
  const auto d_in = load_in_dist(config);
  write_run_config(config);

  for (const auto& v : variants(config)) {
    if (v.baseline)
      continue;
    const auto dir = layout.synth_dir(v);
    if (is_complete(dir, digest)) {
      log << v.name << ": synthesis already complete in " << dir.string() << "\n";
      continue;
    }
    fs::remove_all(dir);
    auto generator = make_generator(config.generator);
    std::unique_ptr<Embedder> embedder;
    if (config.strategy == Strategy::distance)
      embedder = make_embedder(config.embedder);
    SynthesisOptions options{config.n_outlier_images, config.strategy, v.sigma, config.seed, config.workers};
    const auto result = build_ood_dataset(d_in, options, *generator, embedder.get(), dir);
    const auto& s = result.summary;
    char line[256];
    std::snprintf(line, sizeof line,
                  "%s: sampled=%zu skipped_ineligible=%zu failures=%zu eligible_image_fraction=%.4f\n",
                  v.name.c_str(), s.sampled, s.rejected_draws, s.failures, s.eligible_image_fraction);
    log << line;
    mark_complete(dir, digest);
  }
}

void stage_train(const PipelineConfig& config, std::ostream& log)
{
  config.validate();
  const auto layout = run_layout(config);
  const auto digest = config.digest();
  const auto d_in = load_in_dist(config);
  const auto tcfg = train_config_for(config);

  // Check every OOD population up front so a missing one fails before any training.
  for (const auto& v : variants(config))
    if (!v.baseline && !is_complete(layout.synth_dir(v), digest))
      throw TrainingError("variant " + v.name +
                            " has no synthesized OOD set: the OOD loss contrasts in-distribution and OOD "
                            "instances and needs both populations; run synthesize first",
                          "missing_ood");
  write_run_config(config);

  for (const auto& v : variants(config)) {
    const auto dir = layout.train_dir(v);
    if (is_complete(dir, digest)) {
      log << v.name << ": training already complete in " << dir.string() << "\n";
      continue;
    }
    fs::remove_all(dir);
    TrainedModel model;
    if (v.baseline) {
      model = train_toy_detector(d_in, tcfg, false);
    } else {
      const auto d_ood = load_dataset(layout.synth_dir(v) / kOodAnnotationFile);
      model = train_toy_detector(merge_datasets(d_in, d_ood), tcfg, true);
    }
    save_checkpoint(model, layout.checkpoint(v));
    write_training_log(model.log, dir / "training_log.csv");
    const auto& last = model.log.back();
    char line[256];
    std::snprintf(line, sizeof line, "%s: %d epochs, final loss cls=%.6f objness=%.6f ood=%.6f\n", v.name.c_str(),
                  last.epoch, last.cls_loss, last.objness_loss, last.ood_loss);
    log << line;
    mark_complete(dir, digest);
  }
}

EvaluationInputs load_evaluation_inputs(const PipelineConfig& config)
{
  auto test = load_dataset(config.in_dist_test_annotations);
  test.require_in_distribution();
  std::set<std::string> names;
  for (const auto& c : test.foreground_categories())
    names.insert(c.name);
  for (const auto& c : load_in_dist(config).foreground_categories())
    names.insert(c.name);
  auto ood = filter_ood_test(load_dataset(config.ood_test_annotations), names);
  if (ood.annotations().empty())
    throw EvaluationError("OOD test set is empty after removing images with in-distribution categories",
                          "empty_ood_test");
  return {std::move(test), std::move(ood)};
}

MetricsReport evaluate_model(const TrainedModel& model, const EvaluationInputs& inputs, double iou_threshold,
                             ApInterpolation interp, bool baseline, std::vector<ScoredInstance>* scores_out)
{
  const auto& test = inputs.in_dist_test;
  std::set<std::string> model_names(model.class_names.begin(), model.class_names.end()), test_names;
  for (const auto& c : test.foreground_categories())
    test_names.insert(c.name);
  if (model_names != test_names || model_names.size() != model.class_names.size())
    throw EvaluationError("checkpoint has " + std::to_string(model.class_names.size()) +
                            " classes that do not match the " + std::to_string(test_names.size()) +
                            " in-distribution test categories",
                          "category_mismatch");

  auto score = [&](const Vector<double>& logits) -> double {
    return baseline ? logistic(energy_score(logits)) : ood_probability(logits, model.head);
  };

  std::vector<ScoredInstance> scores;
  std::vector<Detection> detections;
  std::size_t correct = 0;
  for (const auto& r : extract_representations(model.detector, test)) {
    scores.push_back({score(r.logits), Truth::in_dist, r.image_id, r.box_index});
    Eigen::Index best;
    const Vector<double> p = softmax(r.logits);
    const double conf = p.maxCoeff(&best);
    const int predicted = *test.category_id(model.class_names[static_cast<std::size_t>(best)]);
    correct += predicted == r.category_id;
    Detection d;
    d.image_id = r.image_id;
    d.box_index = r.box_index;
    d.box = test.annotations()[test.annotations_of(r.image_id)[r.box_index]].box;
    d.box.category_id = predicted;
    d.confidence = conf;
    detections.push_back(d);
  }
  const std::size_t n_in = scores.size();
  for (const auto& r : extract_representations(model.detector, inputs.ood_test))
    scores.push_back({score(r.logits), Truth::ood, r.image_id, r.box_index});

  MetricsReport report;
  report.auroc = auroc(scores);
  report.fpr95 = fpr_at_95_tpr(scores);
  const auto m = mean_average_precision(detections, test, iou_threshold, interp);
  report.map = m.map;
  report.per_class_ap = m.per_class_ap;
  report.crop_accuracy = double(correct) / double(n_in);
  report.n_in = n_in;
  report.n_ood = scores.size() - n_in;
  report.validate();
  if (scores_out)
    *scores_out = std::move(scores);
  return report;
}

std::vector<MetricsReport> stage_evaluate(const PipelineConfig& config, std::ostream& log,
                                          std::optional<fs::path> checkpoint)
{
  config.validate();
  const auto layout = run_layout(config);
  const auto digest = config.digest();
  std::optional<EvaluationInputs> inputs;
  auto get_inputs = [&]() -> const EvaluationInputs& {
    if (!inputs)
      inputs = load_evaluation_inputs(config);
    return *inputs;
  };

  std::vector<MetricsReport> reports;
  if (checkpoint) {
    auto model = load_checkpoint(*checkpoint);
    auto report = evaluate_model(model, get_inputs(), config.iou_threshold, config.interpolation, false);
    report.config_digest = digest;
    report.label = checkpoint->stem().string();
    log << markdown_table(std::span(&report, 1));
    reports.push_back(report);
    return reports;
  }

  for (const auto& v : variants(config)) {
    const auto dir = layout.eval_dir(v);
    if (is_complete(dir, digest)) {
      std::ifstream in(dir / "metrics.json");
      reports.push_back(report_from_json(json::parse(in)));
      log << v.name << ": evaluation already complete in " << dir.string() << "\n";
      continue;
    }
    if (!fs::exists(layout.checkpoint(v)))
      throw EvaluationError("no checkpoint for variant " + v.name + " at " + layout.checkpoint(v).string() +
                              "; run train first",
                            "missing_checkpoint");
    const auto model = load_checkpoint(layout.checkpoint(v));
    std::vector<ScoredInstance> scores;
    auto report = evaluate_model(model, get_inputs(), config.iou_threshold, config.interpolation, v.baseline, &scores);
    report.config_digest = digest;
    report.label = v.name;
    fs::remove_all(dir);
    write_text(dir / "metrics.json", to_json(report).dump(2) + "\n");
    write_scores_csv(scores, dir / "scores.csv");
    write_text(dir / "report.md", markdown_table(std::span(&report, 1)));
    mark_complete(dir, digest);
    reports.push_back(report);
  }
  log << markdown_table(reports);
  return reports;
}

void stage_report(const PipelineConfig& config, std::ostream& log)
{
  config.validate();
  const auto layout = run_layout(config);
  const auto digest = config.digest();
  std::vector<MetricsReport> reports;
  std::vector<double> sigmas;
  std::vector<MetricsReport> sigma_reports;
  for (const auto& v : variants(config)) {
    const auto dir = layout.eval_dir(v);
    if (!is_complete(dir, digest))
      throw EvaluationError("variant " + v.name + " has not been evaluated; run evaluate first", "missing_metrics");
    std::ifstream in(dir / "metrics.json");
    reports.push_back(report_from_json(json::parse(in)));
    if (v.sigma) {
      sigmas.push_back(*v.sigma);
      sigma_reports.push_back(reports.back());
    }
  }

  std::string md = "# Run " + config.run_id() + "\n\nconfig digest: `" + digest + "`\n\n" + markdown_table(reports);
  md += "\nIn-distribution crop accuracy (%):\n\n";
  for (const auto& r : reports) {
    char line[128];
    std::snprintf(line, sizeof line, "- %s: %.2f\n", r.label.c_str(), round_percent(r.crop_accuracy));
    md += line;
  }
  write_text(layout.root / "report.md", md);
  json all = json::array();
  for (const auto& r : reports)
    all.push_back(to_json(r));
  write_text(layout.root / "report.json", all.dump(2) + "\n");
  if (!sigmas.empty())
    write_text(layout.root / "sigma_sweep.svg", sigma_plot_svg(sigmas, sigma_reports));

  for (const auto& v : variants(config)) {
    if (v.baseline)
      continue;
    std::vector<fs::path> images;
    for (const auto& e : fs::directory_iterator(layout.synth_dir(v) / kOodImageDir))
      images.push_back(e.path());
    std::sort(images.begin(), images.end());
    images.resize(std::min<std::size_t>(images.size(), 16));
    if (!images.empty())
      write_png(outlier_grid(images), layout.root / ("outliers_" + v.name + ".png"));
  }
  log << md;
}

// ---------------------------------------------------------------------------

std::string full_scale_config_yaml(const PipelineConfig& config)
{
  std::ostringstream y;
  y << "# Full-scale configuration. Requires a GPU cluster, the PASCAL VOC and\n"
       "# MS-COCO datasets, and a Stable Diffusion v2 inpainting service. This\n"
       "# file is emitted for reference; the desk-scale tool does not run it.\n"
    << "detector:\n"
    << "  architecture: faster_rcnn\n"
    << "  backbone: resnet50_fpn\n"
    << "  pretrained: imagenet\n"
    << "datasets:\n"
    << "  in_distribution: [VOC2007/trainval, VOC2012/trainval]\n"
    << "  in_distribution_test: VOC2007/test\n"
    << "  ood_test: coco2017_val_ood  # 930 images without VOC classes\n"
    << "synthesis:\n"
    << "  generator: stable-diffusion-2-inpainting\n"
    << "  strategy: " << to_string(config.strategy) << "\n"
    << "  sigma: [0.01, 0.1, 1.0, 2.5, 5.0]\n"
    << "  n_outlier_images: 5000\n"
    << "  min_box_area: " << kEligibleAreaThreshold << "\n"
    << "train:\n"
    << "  epochs: " << config.train.epochs << "\n"
    << "  images_per_batch: " << config.train.batch_size << "\n"
    << "  learning_rate: " << config.train.learning_rate << "\n"
    << "  lr_decay_epochs: [";
  for (std::size_t i = 0; i < config.train.lr_decay_epochs.size(); ++i)
    y << (i ? ", " : "") << config.train.lr_decay_epochs[i];
  y << "]\n"
    << "  lr_decay_factor: " << config.train.lr_decay_factor << "\n"
    << "  ood_loss: " << (config.train.loss_variant == LossVariant::focal ? "focal" : "bce") << "\n"
    << "  ood_loss_weight: " << config.train.ood_loss_weight << "\n"
    << "  ood_head_layers: [1, 16, 1]\n"
    << "  ood_instances: objectness_positive_classification_excluded\n"
    << "metrics:\n"
    << "  ood: [fpr95, auroc]\n"
    << "  in_distribution: map@0.5\n"
    << "seed: " << config.seed << "\n";
  return y.str();
}

} // namespace dreambox
