#include "dreambox/detector.hpp"

#include "dreambox/error.hpp"
#include "dreambox/hashing.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

namespace dreambox {

using nlohmann::json;

void TrainConfig::validate() const
{
  if (epochs <= 0 || batch_size <= 0)
    throw ConfigError("epochs and batch_size must be positive");
  if (!(momentum >= 0 && momentum < 1))
    throw ConfigError("momentum must lie in [0, 1)");
  if (!(learning_rate > 0) || !(lr_decay_factor > 0) || weight_decay < 0 || !(ood_loss_weight >= 0))
    throw ConfigError("learning rate, decay factor and loss weight must be positive, weight decay non-negative");
  for (int e : lr_decay_epochs)
    if (e <= 0 || e >= epochs)
      throw ConfigError("learning-rate decay epoch " + std::to_string(e) + " must fall inside 1.." +
                        std::to_string(epochs - 1));
  if (!(grad_clip_norm >= 0))
    throw ConfigError("grad_clip_norm must be >= 0");
  if (focal_gamma < 0)
    throw ConfigError("focal_gamma must be >= 0");
}

double TrainConfig::learning_rate_at(int epoch) const
{
  double lr = learning_rate;
  for (int e : lr_decay_epochs)
    if (epoch > e)
      lr *= lr_decay_factor;
  return lr;
}

BatchGradient batch_gradient(const DetectorParams<double>& params, const OodHead<double>& head,
                             std::span<const Crop> batch, const TrainConfig& config, LossTerms terms)
{
  const auto K = params.num_classes();
  BatchGradient g;
  g.detector = DetectorParams<double>::zeros(static_cast<int>(K));
  g.head.w_in = Vector<double>::Zero(head.hidden());
  g.head.b_in = Vector<double>::Zero(head.hidden());
  g.head.w_out = Vector<double>::Zero(head.hidden());

  std::size_t n_in = 0, n_ood = 0;
  for (const auto& c : batch) {
    n_in += c.kind == CropKind::in_dist;
    n_ood += c.kind == CropKind::ood;
  }

  std::vector<CropActivations<double>> acts;
  acts.reserve(batch.size());
  for (const auto& c : batch)
    acts.push_back(forward(params, c.pixels));

  std::vector<Vector<double>> d_logits(batch.size(), Vector<double>::Zero(K));
  std::vector<double> d_obj(batch.size(), 0.0);
  std::vector<bool> touched(batch.size(), false);

  if (terms.classification && n_in > 0) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i].kind != CropKind::in_dist)
        continue;
      const auto& z = acts[i].logits;
      const double m = z.maxCoeff();
      const double lse = m + std::log((z.array() - m).exp().sum());
      g.loss.classification += lse - z[batch[i].class_index];
      Vector<double> d = softmax(z);
      d[batch[i].class_index] -= 1.0;
      d_logits[i] += d / static_cast<double>(n_in);
      touched[i] = true;
    }
    g.loss.classification /= static_cast<double>(n_in);
  }

  if (terms.objectness && !batch.empty()) {
    const double n = static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double o = acts[i].objectness;
      const bool object = batch[i].kind != CropKind::background;
      g.loss.objectness += object ? softplus(-o) : softplus(o);
      d_obj[i] = (logistic(o) - (object ? 1.0 : 0.0)) / n;
      touched[i] = true;
    }
    g.loss.objectness /= n;
  }

  if (terms.ood && n_in + n_ood > 0) {
    std::vector<std::size_t> idx;
    std::vector<double> energies, phis;
    std::vector<OodLabel> labels;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (batch[i].kind == CropKind::background)
        continue;
      idx.push_back(i);
      energies.push_back(energy_score(acts[i].logits));
      phis.push_back(ood_head_forward(energies.back(), head));
      labels.push_back(batch[i].kind == CropKind::in_dist ? OodLabel::in : OodLabel::ood);
    }
    std::vector<double> d_phi(idx.size());
    if (config.loss_variant == LossVariant::focal) {
      auto r = ood_focal_loss_with_gradient<double>(phis, labels, config.focal_gamma, config.ood_loss_weight);
      g.loss.ood = r.loss;
      d_phi = r.grad;
    } else {
      std::vector<double> phi_in, phi_ood;
      for (std::size_t j = 0; j < idx.size(); ++j)
        (labels[j] == OodLabel::in ? phi_in : phi_ood).push_back(phis[j]);
      auto r = ood_bce_loss_with_gradient<double>(phi_in, phi_ood);
      g.loss.ood = config.ood_loss_weight * r.loss;
      std::size_t a = 0, b = phi_in.size();
      for (std::size_t j = 0; j < idx.size(); ++j)
        d_phi[j] = config.ood_loss_weight * r.grad[labels[j] == OodLabel::in ? a++ : b++];
    }
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto hb = ood_head_backward(energies[j], head, d_phi[j]);
      g.head.w_in += hb.w_in;
      g.head.b_in += hb.b_in;
      g.head.w_out += hb.w_out;
      g.head.b_out += hb.b_out;
      d_logits[idx[j]] += hb.d_energy * energy_gradient(acts[idx[j]].logits);
      touched[idx[j]] = true;
    }
  }

  for (std::size_t i = 0; i < batch.size(); ++i)
    if (touched[i])
      backward(params, acts[i], d_logits[i], d_obj[i], g.detector);
  return g;
}

// ---------------------------------------------------------------------------

Vector<double> crop_pixels(const RgbImage& image, const BoundingBox& box)
{
  using namespace crop_net;
  const RgbImage r = resample_region(image, box.x, box.y, box.x + box.w, box.y + box.h, input, input);
  Vector<double> v(input_size);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < input; ++y)
      for (int x = 0; x < input; ++x)
        v[(c * input + y) * input + x] = r.at(x, y)[c] / 255.0 - 0.5;
  return v;
}

namespace {

void require_images_exist(const DetectionDataset& dataset, const std::string& stage)
{
  std::vector<std::string> missing;
  for (const auto& im : dataset.images())
    if (!std::filesystem::exists(dataset.image_path(im)))
      missing.push_back(dataset.image_path(im).string());
  if (missing.empty())
    return;
  std::string msg = std::to_string(missing.size()) + " image file(s) missing:";
  for (std::size_t i = 0; i < missing.size() && i < 20; ++i)
    msg += " " + missing[i];
  if (missing.size() > 20)
    msg += " ...";
  throw Error(stage, "missing_images", msg);
}

std::optional<BoundingBox> background_box(const DetectionDataset& d, const ImageRecord& im, std::mt19937_64& rng)
{
  const int max_side = std::min({24, im.width, im.height});
  if (max_side < 8)
    return std::nullopt;
  std::uniform_int_distribution<int> side_dist(std::min(12, max_side), max_side);
  for (int attempt = 0; attempt < 50; ++attempt) {
    const int s = side_dist(rng);
    std::uniform_int_distribution<int> xd(0, im.width - s), yd(0, im.height - s);
    const BoundingBox cand{static_cast<double>(xd(rng)), static_cast<double>(yd(rng)), double(s), double(s), 0};
    double covered = 0;
    for (std::size_t i : d.annotations_of(im.id)) {
      const auto& b = d.annotations()[i].box;
      const double iw = std::min(cand.x + cand.w, b.x + b.w) - std::max(cand.x, b.x);
      const double ih = std::min(cand.y + cand.h, b.y + b.h) - std::max(cand.y, b.y);
      if (iw > 0 && ih > 0)
        covered = std::max(covered, iw * ih / box_area(cand));
    }
    if (covered < 0.3)
      return cand;
  }
  return std::nullopt;
}

} // namespace

std::vector<std::vector<Crop>> prepare_crops(const DetectionDataset& dataset,
                                             const std::vector<std::string>& class_names, std::uint64_t seed)
{
  require_images_exist(dataset, "train");
  std::map<int, int> class_of;
  for (const auto& c : dataset.categories()) {
    auto it = std::find(class_names.begin(), class_names.end(), c.name);
    if (it != class_names.end())
      class_of[c.id] = static_cast<int>(it - class_names.begin());
  }

  std::vector<std::vector<Crop>> out;
  out.reserve(dataset.images().size());
  for (std::size_t k = 0; k < dataset.images().size(); ++k) {
    const auto& im = dataset.images()[k];
    const RgbImage pixels = read_image(dataset.image_path(im));
    std::vector<Crop> crops;
    for (std::size_t i : dataset.annotations_of(im.id)) {
      const auto& a = dataset.annotations()[i];
      Crop c;
      c.pixels = crop_pixels(pixels, a.box);
      if (a.is_ood) {
        c.kind = CropKind::ood;
      } else {
        auto it = class_of.find(a.box.category_id);
        if (it == class_of.end())
          throw TrainingError("annotation " + std::to_string(a.id) + " has category '" +
                                dataset.category_name(a.box.category_id) + "' outside the class list",
                              "unknown_class");
        c.class_index = it->second;
      }
      crops.push_back(std::move(c));
    }
    std::mt19937_64 rng(derive_seed(seed, {k}));
    if (auto bg = background_box(dataset, im, rng)) {
      Crop c;
      c.pixels = crop_pixels(pixels, *bg);
      c.kind = CropKind::background;
      crops.push_back(std::move(c));
    }
    out.push_back(std::move(crops));
  }
  return out;
}

TrainedModel train_toy_detector(const DetectionDataset& combined, const TrainConfig& config, bool use_ood)
{
  config.validate();
  if (use_ood && !combined.has_ood_annotations())
    throw TrainingError("the OOD loss needs both in-distribution and OOD instances, but the training set has no "
                        "OOD annotations; run synthesize first",
                        "missing_ood");

  TrainedModel model;
  model.config = config;
  for (const auto& c : combined.foreground_categories())
    model.class_names.push_back(c.name);
  if (model.class_names.empty())
    throw TrainingError("training set has no in-distribution categories", "no_classes");
  const int K = static_cast<int>(model.class_names.size());

  enum : std::uint64_t { kCropStream = 1, kInitStream = 2, kHeadStream = 3, kShuffleStream = 4 };
  const auto crops = prepare_crops(combined, model.class_names, derive_seed(config.seed, {kCropStream}));

  model.detector = DetectorParams<double>::init(K, derive_seed(config.seed, {kInitStream}));
  model.head = OodHead<double>::zeros();
  {
    std::mt19937_64 rng(derive_seed(config.seed, {kHeadStream}));
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& w : model.head.w_in)
      w = n(rng);
    for (auto& b : model.head.b_in)
      b = n(rng);
    for (auto& w : model.head.w_out)
      w = n(rng) / std::sqrt(double(model.head.hidden()));
  }

  const LossTerms terms{true, true, use_ood};
  auto velocity = DetectorParams<double>::zeros(K);
  OodHeadGradient<double> head_velocity;
  head_velocity.w_in = head_velocity.b_in = head_velocity.w_out = Vector<double>::Zero(model.head.hidden());
  std::vector<std::size_t> order(crops.size());
  std::size_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate_at(epoch);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog row;
    row.epoch = epoch;
    row.lr = lr;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      std::vector<Crop> batch;
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t j = start; j < stop; ++j)
        batch.insert(batch.end(), crops[order[j]].begin(), crops[order[j]].end());
      if (batch.empty())
        continue;
      auto g = batch_gradient(model.detector, model.head, batch, config, terms);
      if (!std::isfinite(g.loss.total()))
        throw TrainingError("loss diverged at epoch " + std::to_string(epoch), "diverged");

      if (config.grad_clip_norm > 0) {
        const double norm =
          std::sqrt(g.detector.squared_norm() + g.head.w_in.squaredNorm() + g.head.b_in.squaredNorm() +
                    g.head.w_out.squaredNorm() + g.head.b_out * g.head.b_out);
        if (norm > config.grad_clip_norm) {
          const double f = config.grad_clip_norm / norm;
          g.detector.scale(f);
          g.head.w_in *= f;
          g.head.b_in *= f;
          g.head.w_out *= f;
          g.head.b_out *= f;
        }
      }
      // Heavy-ball SGD with coupled weight decay: v = mu v + g + wd p; p -= lr v.
      velocity.scale(config.momentum);
      velocity.axpy(1.0, g.detector);
      velocity.axpy(config.weight_decay, model.detector);
      model.detector.axpy(-lr, velocity);
      if (use_ood) {
        auto& h = model.head;
        auto step_head = [&](auto& p, auto& v, const auto& grad) {
          v = config.momentum * v + grad + config.weight_decay * p;
          p -= lr * v;
        };
        step_head(h.w_in, head_velocity.w_in, g.head.w_in);
        step_head(h.b_in, head_velocity.b_in, g.head.b_in);
        step_head(h.w_out, head_velocity.w_out, g.head.w_out);
        step_head(h.b_out, head_velocity.b_out, g.head.b_out);
      }
      row.cls_loss += g.loss.classification;
      row.objness_loss += g.loss.objectness;
      row.ood_loss += g.loss.ood;
      ++batches;
      ++step;
    }
    if (batches > 0) {
      row.cls_loss /= double(batches);
      row.objness_loss /= double(batches);
      row.ood_loss /= double(batches);
    }
    row.total = row.cls_loss + row.objness_loss + row.ood_loss;
    row.step = step;
    model.log.push_back(row);
  }
  return model;
}

std::vector<ObjectRepresentation> extract_representations(const DetectorParams<double>& params,
                                                          const DetectionDataset& dataset)
{
  require_images_exist(dataset, "evaluate");
  std::vector<ObjectRepresentation> reps;
  reps.reserve(dataset.annotations().size());
  for (const auto& im : dataset.images()) {
    const auto& idx = dataset.annotations_of(im.id);
    if (idx.empty())
      continue;
    const RgbImage pixels = read_image(dataset.image_path(im));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto& a = dataset.annotations()[idx[b]];
      auto act = forward(params, crop_pixels(pixels, a.box));
      ObjectRepresentation r;
      r.feature = std::move(act.feature);
      r.logits = std::move(act.logits);
      r.image_id = im.id;
      r.box_index = b;
      r.is_ood = a.is_ood;
      r.category_id = a.box.category_id;
      reps.push_back(std::move(r));
    }
  }
  return reps;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path)
{
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out)
    throw TrainingError("cannot write " + path.string(), "io_error");
  out << "epoch,step,lr,cls_loss,objness_loss,ood_loss,total\n";
  char line[256];
  for (const auto& r : log) {
    std::snprintf(line, sizeof line, "%d,%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.epoch, r.step, r.lr, r.cls_loss,
                  r.objness_loss, r.ood_loss, r.total);
    out << line;
  }
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

template <typename M>
json matrix_to_json(const M& m)
{
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix<double> matrix_from_json(const json& j)
{
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw EvaluationError("checkpoint tensor has " + std::to_string(data.size()) + " values for shape " +
                            std::to_string(rows) + "x" + std::to_string(cols),
                          "bad_checkpoint");
  return Eigen::Map<const Matrix<double>>(data.data(), rows, cols);
}

Vector<double> vector_from_json(const json& j)
{
  Matrix<double> m = matrix_from_json(j);
  return Eigen::Map<const Vector<double>>(m.data(), m.size());
}

std::string_view to_string(LossVariant v)
{
  return v == LossVariant::focal ? "focal" : "bce";
}

} // namespace

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path)
{
  const auto& d = model.detector;
  const auto& h = model.head;
  const auto& c = model.config;
  json doc = {
    {"format", "dreambox-checkpoint-v1"},
    {"class_names", model.class_names},
    {"detector",
     {{"conv_w", matrix_to_json(d.conv_w)},
      {"conv_b", matrix_to_json(d.conv_b)},
      {"fc_w", matrix_to_json(d.fc_w)},
      {"fc_b", matrix_to_json(d.fc_b)},
      {"cls_w", matrix_to_json(d.cls_w)},
      {"cls_b", matrix_to_json(d.cls_b)},
      {"obj_w", matrix_to_json(d.obj_w)},
      {"obj_b", d.obj_b}}},
    {"ood_head",
     {{"layers", {1, h.hidden(), 1}},
      {"activation", "tanh"},
      {"w_in", matrix_to_json(h.w_in)},
      {"b_in", matrix_to_json(h.b_in)},
      {"w_out", matrix_to_json(h.w_out)},
      {"b_out", h.b_out}}},
    {"train_config",
     {{"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"momentum", c.momentum},
      {"grad_clip_norm", c.grad_clip_norm},
      {"lr_decay_epochs", c.lr_decay_epochs},
      {"lr_decay_factor", c.lr_decay_factor},
      {"weight_decay", c.weight_decay},
      {"ood_loss_weight", c.ood_loss_weight},
      {"loss_variant", to_string(c.loss_variant)},
      {"focal_gamma", c.focal_gamma}}},
    {"seed", c.seed}};
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out)
    throw TrainingError("cannot write " + path.string(), "io_error");
  out << doc.dump() << '\n';
}

TrainedModel load_checkpoint(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw EvaluationError("cannot open checkpoint " + path.string(), "missing_checkpoint");
  TrainedModel m;
  try {
    const json doc = json::parse(in);
    if (doc.at("format") != "dreambox-checkpoint-v1")
      throw EvaluationError("unsupported checkpoint format", "bad_checkpoint");
    m.class_names = doc.at("class_names").get<std::vector<std::string>>();
    const auto& d = doc.at("detector");
    m.detector.conv_w = matrix_from_json(d.at("conv_w"));
    m.detector.conv_b = vector_from_json(d.at("conv_b"));
    m.detector.fc_w = matrix_from_json(d.at("fc_w"));
    m.detector.fc_b = vector_from_json(d.at("fc_b"));
    m.detector.cls_w = matrix_from_json(d.at("cls_w"));
    m.detector.cls_b = vector_from_json(d.at("cls_b"));
    m.detector.obj_w = vector_from_json(d.at("obj_w"));
    m.detector.obj_b = d.at("obj_b").get<double>();
    const auto& h = doc.at("ood_head");
    m.head.w_in = vector_from_json(h.at("w_in"));
    m.head.b_in = vector_from_json(h.at("b_in"));
    m.head.w_out = vector_from_json(h.at("w_out"));
    m.head.b_out = h.at("b_out").get<double>();
    const auto& c = doc.at("train_config");
    m.config.epochs = c.at("epochs").get<int>();
    m.config.batch_size = c.at("batch_size").get<int>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.momentum = c.value("momentum", 0.0);
    m.config.grad_clip_norm = c.value("grad_clip_norm", 0.0);
    m.config.lr_decay_epochs = c.at("lr_decay_epochs").get<std::vector<int>>();
    m.config.lr_decay_factor = c.at("lr_decay_factor").get<double>();
    m.config.weight_decay = c.at("weight_decay").get<double>();
    m.config.ood_loss_weight = c.at("ood_loss_weight").get<double>();
    m.config.loss_variant = c.at("loss_variant") == "focal" ? LossVariant::focal : LossVariant::bce;
    m.config.focal_gamma = c.at("focal_gamma").get<double>();
    m.config.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw EvaluationError("malformed checkpoint " + path.string() + ": " + e.what(), "bad_checkpoint");
  }
  m.head.validate();
  if (m.detector.cls_w.rows() != static_cast<Eigen::Index>(m.class_names.size()))
    throw EvaluationError("checkpoint class head has " + std::to_string(m.detector.cls_w.rows()) + " rows for " +
                            std::to_string(m.class_names.size()) + " class names",
                          "bad_checkpoint");
  return m;
}

} // namespace dreambox
